//! Kernel-weighted pairwise conditional logit (Honoré–Kyriazidou), used as
//! the comparison baseline.
//!
//! For a pair of occasions s < t with y_s + y_t = 1 and x_{s+1} = x_{t+1},
//! the probability that y_s = 1 given everything else is
//! sigma((x_s - x_t)' beta + gamma (y_{s-1} - y_{t+1}) [+ gamma (y_{s+1} - y_{t-1}) if t > s + 1])
//! and does not involve alpha. When x_{s+1} != x_{t+1} the term is kept with
//! a kernel weight that decays with the distance between the two rows.

use serde::{Deserialize, Serialize};

use crate::data::{FitResult, PanelDataset, PanelUnit, Theta};
use crate::error::{Error, Result};
use nalgebra::DMatrix;

use crate::estimators::{newton_maximize, Evaluation, Objective, SolverConfig};
use crate::numeric::{dot, log_sigmoid, sigmoid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    GaussianProduct,
    UniformWindow,
    /// Indicator 1{x_{s+1} = x_{t+1}}; the zero-bandwidth limit.
    ExactMatch,
}

/// Which occasion pairs enter the pairwise likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairRange {
    /// 0 < s < t < T.
    Interior,
    /// 1 < s < t < T.
    Strict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kernel: KernelKind,
    /// Multiplier applied to the sample standard deviation of x_2 - x_3.
    pub scale: f64,
    /// Per-covariate bandwidth constants c, overriding the data-driven default.
    pub c: Option<Vec<f64>>,
    pub pairs: PairRange,
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self {
            kernel: KernelKind::GaussianProduct,
            scale: 8.0,
            c: None,
            pairs: PairRange::Interior,
        }
    }
}

impl KernelSpec {
    /// Bandwidths sigma_n = c n^{-1/5}, one per covariate.
    pub fn bandwidths(&self, data: &PanelDataset) -> Result<Vec<f64>> {
        let k = data.k();
        let n = data.n() as f64;
        let c = match &self.c {
            Some(c) => {
                if c.len() != k {
                    return Err(Error::InvalidInput(format!(
                        "{} bandwidth constants for {k} covariates",
                        c.len()
                    )));
                }
                c.clone()
            }
            None => {
                if data.t() < 3 {
                    return Err(Error::InvalidInput("default bandwidth needs T >= 3".into()));
                }
                (0..k)
                    .map(|j| {
                        let diffs: Vec<f64> = data
                            .units()
                            .iter()
                            .map(|u| u.x_row(2)[j] - u.x_row(3)[j])
                            .collect();
                        self.scale * sample_sd(&diffs)
                    })
                    .collect()
            }
        };
        let h: Vec<f64> = c.iter().map(|cj| cj * n.powf(-0.2)).collect();
        if self.kernel != KernelKind::ExactMatch && h.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidInput("bandwidth must be positive".into()));
        }
        Ok(h)
    }

    /// K(diff / h).
    pub fn weight(&self, diff: &[f64], h: &[f64]) -> f64 {
        match self.kernel {
            KernelKind::GaussianProduct => diff
                .iter()
                .zip(h)
                .map(|(d, h)| {
                    let v = d / h;
                    (-0.5 * v * v).exp() / (2.0 * std::f64::consts::PI).sqrt()
                })
                .product(),
            KernelKind::UniformWindow => diff
                .iter()
                .zip(h)
                .map(|(d, h)| if (d / h).abs() <= 1.0 { 0.5 } else { 0.0 })
                .product(),
            KernelKind::ExactMatch => f64::from(u8::from(diff.iter().all(|d| *d == 0.0))),
        }
    }
}

fn sample_sd(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    if v.len() < 2 {
        return 0.0;
    }
    let mean = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// log P(y_a, y_b | y_a + y_b = 1) for T = 3 with x_2 = x_3:
/// y_a = 1 has log-odds (x_1 - x_2)' beta + gamma (y0 - y_after).
pub fn hk_pair_logprob(
    y0: u8,
    ya: u8,
    yb: u8,
    y_after: u8,
    x_diff_1_2: &[f64],
    theta: &Theta,
) -> Result<f64> {
    if ya + yb != 1 {
        return Err(Error::InvalidInput(format!(
            "pair ({ya}, {yb}) does not sum to 1"
        )));
    }
    let a = dot(x_diff_1_2, &theta.beta) + theta.gamma * (y0 as f64 - y_after as f64);
    Ok(if ya == 1 { log_sigmoid(a) } else { log_sigmoid(-a) })
}

/// One weighted pairwise term: log sigma(sign * r' theta), scaled by `weight`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairTerm {
    /// Index of the unit the pair belongs to.
    pub unit: usize,
    pub regressor: Vec<f64>,
    /// +1 when the earlier occasion of the pair is the 1.
    pub sign: f64,
    pub weight: f64,
}

/// Occasion pairs (s, t) eligible under `range`.
pub fn eligible_pairs(t_len: usize, range: PairRange) -> Vec<(usize, usize)> {
    let lo = match range {
        PairRange::Interior => 1,
        PairRange::Strict => 2,
    };
    let mut out = Vec::new();
    for s in lo..t_len {
        for t in s + 1..t_len {
            out.push((s, t));
        }
    }
    out
}

fn unit_terms(index: usize, unit: &PanelUnit, pairs: &[(usize, usize)], spec: &KernelSpec, h: &[f64]) -> Vec<PairTerm> {
    let y = |s: usize| -> f64 {
        if s == 0 {
            unit.y0() as f64
        } else {
            unit.y()[s - 1] as f64
        }
    };
    let mut out = Vec::new();
    for &(s, t) in pairs {
        if y(s) + y(t) != 1.0 {
            continue;
        }
        let diff: Vec<f64> = unit
            .x_row(s + 1)
            .iter()
            .zip(unit.x_row(t + 1))
            .map(|(a, b)| a - b)
            .collect();
        let weight = spec.weight(&diff, h);
        let mut r: Vec<f64> = unit
            .x_row(s)
            .iter()
            .zip(unit.x_row(t))
            .map(|(a, b)| a - b)
            .collect();
        let mut g = y(s - 1) - y(t + 1);
        if t > s + 1 {
            g += y(s + 1) - y(t - 1);
        }
        r.push(g);
        out.push(PairTerm {
            unit: index,
            regressor: r,
            sign: if y(s) == 1.0 { 1.0 } else { -1.0 },
            weight,
        });
    }
    out
}

/// Weighted pairwise terms of every unit, plus the nominal pair count n * |pairs|.
pub fn hk_terms(data: &PanelDataset, spec: &KernelSpec) -> Result<(Vec<PairTerm>, usize)> {
    if data.t() < 3 {
        return Err(Error::InvalidInput("weighted estimator requires T >= 3".into()));
    }
    let pairs = eligible_pairs(data.t(), spec.pairs);
    if pairs.is_empty() {
        return Err(Error::NoInformativePairs);
    }
    let h = spec.bandwidths(data)?;
    let terms = data
        .units()
        .iter()
        .enumerate()
        .flat_map(|(i, u)| unit_terms(i, u, &pairs, spec, &h))
        .collect();
    Ok((terms, data.n() * pairs.len()))
}

struct WeightedLikelihood<'a> {
    terms: &'a [PairTerm],
}

impl Objective for WeightedLikelihood<'_> {
    fn evaluate(&self, theta: &[f64]) -> Result<Evaluation> {
        let p = theta.len();
        let mut ev = Evaluation {
            loglik: 0.0,
            score: vec![0.0; p],
            info: vec![0.0; p * p],
            actual_n: 0,
        };
        for term in self.terms {
            if term.weight == 0.0 {
                continue;
            }
            let a = term.sign * dot(&term.regressor, theta);
            ev.loglik += term.weight * log_sigmoid(a);
            // d/dtheta log sigma(sign r'theta) = sign (1 - sigma(a)) r
            let g = term.weight * term.sign * (1.0 - sigmoid(a));
            let pr = sigmoid(a);
            let c = term.weight * pr * (1.0 - pr);
            for i in 0..p {
                ev.score[i] += g * term.regressor[i];
                for j in 0..p {
                    ev.info[i * p + j] += c * term.regressor[i] * term.regressor[j];
                }
            }
        }
        Ok(ev)
    }

    fn value(&self, theta: &[f64]) -> Result<f64> {
        Ok(self
            .terms
            .iter()
            .filter(|t| t.weight != 0.0)
            .map(|t| t.weight * log_sigmoid(t.sign * dot(&t.regressor, theta)))
            .sum())
    }
}

/// Standard errors from J^{-1} M J^{-1}, where M sums outer products of the
/// per-unit weighted scores. The kernel weights make the information
/// equality fail, so J^{-1} alone is not a valid variance.
pub fn sandwich_standard_errors(terms: &[PairTerm], theta: &[f64], info: &[f64]) -> Vec<f64> {
    let p = theta.len();
    let mut meat = DMatrix::<f64>::zeros(p, p);
    let mut i = 0;
    while i < terms.len() {
        let unit = terms[i].unit;
        let mut g = vec![0.0; p];
        while i < terms.len() && terms[i].unit == unit {
            let t = &terms[i];
            let a = t.sign * dot(&t.regressor, theta);
            let c = t.weight * t.sign * (1.0 - sigmoid(a));
            for (gj, rj) in g.iter_mut().zip(&t.regressor) {
                *gj += c * rj;
            }
            i += 1;
        }
        for r in 0..p {
            for c in 0..p {
                meat[(r, c)] += g[r] * g[c];
            }
        }
    }
    let Some(chol) = DMatrix::from_row_slice(p, p, info).cholesky() else {
        return vec![f64::NAN; p];
    };
    let inv = chol.inverse();
    let v = &inv * meat * &inv;
    (0..p).map(|j| v[(j, j)].sqrt()).collect()
}

/// Maximizes the weighted pairwise likelihood over precomputed terms.
pub fn fit_hk_terms(
    terms: &[PairTerm],
    k: usize,
    nominal_n: usize,
    config: &SolverConfig,
) -> Result<FitResult> {
    let total: f64 = terms.iter().map(|t| t.weight).sum();
    if !(total > 0.0) {
        return Err(Error::NoInformativePairs);
    }
    let start = config.start.clone().unwrap_or_else(|| Theta::zeros(k));
    if start.dim() != k + 1 || start.gamma2.is_some() {
        return Err(Error::InvalidInput(format!(
            "start point must have dimension {}",
            k + 1
        )));
    }
    let mut obj = WeightedLikelihood { terms };
    let out = newton_maximize(&mut obj, start.to_vec(), config)?;
    let p = k + 1;
    Ok(FitResult {
        theta_hat: Theta::from_slice(&out.theta, k, 1),
        labels: Theta::labels(k, 1),
        se: sandwich_standard_errors(terms, &out.theta, &out.eval.info),
        info: out.eval.info.chunks(p).map(<[f64]>::to_vec).collect(),
        loglik: out.eval.loglik,
        loglik_trace: out.trace,
        iterations: out.iterations,
        actual_n: terms.len(),
        nominal_n,
        converged: true,
        beta_bar: None,
    })
}

/// Kernel-weighted conditional estimator on a dataset.
pub fn fit_hk(data: &PanelDataset, kernel: &KernelSpec, config: &SolverConfig) -> Result<FitResult> {
    let (terms, nominal) = hk_terms(data, kernel)?;
    fit_hk_terms(&terms, data.k(), nominal, config)
}
