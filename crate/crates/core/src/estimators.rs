//! Newton-Raphson maximization of the approximate conditional log-likelihoods,
//! plus standard errors, confidence intervals and the second-lag Wald test.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::{FitResult, PanelDataset, Theta};
use crate::error::{Error, Result};
use crate::numeric::sup_norm;
use crate::quadexp::{unit_contribution, Approximation, ImprovedWeights};

/// Relative eigenvalue floor below which the information matrix is declared singular.
pub const SINGULARITY_RATIO: f64 = 1e-10;
/// Maximum number of step halvings per Newton iteration.
pub const MAX_HALVINGS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Convergence when the sup-norm of the score falls below this.
    pub tol_grad: f64,
    /// Convergence when the sup-norm of the applied step falls below this.
    pub tol_step: f64,
    pub max_iter: usize,
    /// Starting point; zeros when absent.
    pub start: Option<Theta>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol_grad: 1e-8,
            tol_step: 1e-10,
            max_iter: 100,
            start: None,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol_grad > 0.0 && self.tol_step > 0.0) {
            return Err(Error::InvalidInput("solver tolerances must be positive".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidInput("max_iter must be at least 1".into()));
        }
        if let Some(s) = &self.start {
            if !s.is_finite() {
                return Err(Error::InvalidInput("start point must be finite".into()));
            }
        }
        Ok(())
    }
}

/// How beta_bar is chosen for the improved approximation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImprovedMode {
    Fixed(Vec<f64>),
    /// beta_bar follows the current beta at every iteration.
    Dynamic,
}

/// Approximation used by the two-lag estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TwoLagMode {
    Basic,
    Improved(ImprovedMode),
}

/// Objective value and derivatives at a point.
#[derive(Debug, Clone)]
pub(crate) struct Evaluation {
    pub loglik: f64,
    pub score: Vec<f64>,
    /// Negative Hessian, row-major.
    pub info: Vec<f64>,
    pub actual_n: usize,
}

/// A concave objective maximized by [`newton_maximize`].
pub(crate) trait Objective {
    /// Hook run at the top of every iteration. Objectives with a moving
    /// expansion point update it from `theta` and report its sup-norm change.
    fn refresh(&mut self, _theta: &[f64]) -> Option<f64> {
        None
    }

    fn evaluate(&self, theta: &[f64]) -> Result<Evaluation>;

    /// Objective value only; used by the step-halving line search.
    fn value(&self, theta: &[f64]) -> Result<f64> {
        Ok(self.evaluate(theta)?.loglik)
    }
}

pub(crate) struct NewtonOutcome {
    pub theta: Vec<f64>,
    pub eval: Evaluation,
    pub trace: Vec<f64>,
    pub iterations: usize,
}

/// Fails with the eigenvector of the smallest eigenvalue when J is numerically singular.
fn check_identified(info: &DMatrix<f64>) -> Result<()> {
    let eig = SymmetricEigen::new(info.clone());
    let (mut imin, mut imax) = (0, 0);
    for i in 0..eig.eigenvalues.len() {
        if eig.eigenvalues[i] < eig.eigenvalues[imin] {
            imin = i;
        }
        if eig.eigenvalues[i] > eig.eigenvalues[imax] {
            imax = i;
        }
    }
    let (lo, hi) = (eig.eigenvalues[imin], eig.eigenvalues[imax]);
    if !(hi > 0.0) || lo < SINGULARITY_RATIO * hi {
        let direction: Vec<f64> = eig.eigenvectors.column(imin).iter().copied().collect();
        return Err(Error::NotIdentified {
            direction,
            detail: format!("smallest eigenvalue {lo:e}, largest {hi:e}"),
        });
    }
    Ok(())
}

fn to_matrix(info: &[f64], p: usize) -> DMatrix<f64> {
    DMatrix::from_row_slice(p, p, info)
}

/// Newton-Raphson with step halving. Stops when the score (or the step) is
/// below tolerance and any moving expansion point has settled.
pub(crate) fn newton_maximize(
    obj: &mut dyn Objective,
    start: Vec<f64>,
    config: &SolverConfig,
) -> Result<NewtonOutcome> {
    config.validate()?;
    let p = start.len();
    let mut theta = start;
    let mut trace = Vec::new();
    let mut step_small = false;
    let mut last_score = f64::INFINITY;
    for iter in 0..=config.max_iter {
        let anchor_change = obj.refresh(&theta);
        let eval = obj.evaluate(&theta)?;
        if !eval.loglik.is_finite() {
            return Err(Error::NonConvergence {
                iterations: iter,
                last_score_norm: last_score,
                loglik_trace: trace,
            });
        }
        trace.push(eval.loglik);
        last_score = sup_norm(&eval.score);
        let anchor_ok = anchor_change.is_none_or(|c| c < config.tol_step);
        if anchor_ok && (last_score < config.tol_grad || step_small) {
            let j = to_matrix(&eval.info, p);
            check_identified(&j)?;
            return Ok(NewtonOutcome {
                theta,
                eval,
                trace,
                iterations: iter,
            });
        }
        if iter == config.max_iter {
            break;
        }
        let j = to_matrix(&eval.info, p);
        check_identified(&j)?;
        let chol = j.clone().cholesky().ok_or_else(|| Error::NotIdentified {
            direction: vec![0.0; p],
            detail: "information matrix is not positive definite".into(),
        })?;
        let direction = chol.solve(&DVector::from_column_slice(&eval.score));

        let floor = eval.loglik - 1e-12 * eval.loglik.abs().max(1.0);
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let cand: Vec<f64> = theta
                .iter()
                .zip(direction.iter())
                .map(|(t, d)| t + scale * d)
                .collect();
            let f = obj.value(&cand)?;
            if f.is_finite() && f >= floor {
                accepted = Some(cand);
                break;
            }
            scale *= 0.5;
        }
        let Some(next) = accepted else {
            return Err(Error::NonConvergence {
                iterations: iter,
                last_score_norm: last_score,
                loglik_trace: trace,
            });
        };
        step_small = scale * sup_norm(direction.as_slice()) < config.tol_step;
        theta = next;
    }
    Err(Error::NonConvergence {
        iterations: config.max_iter,
        last_score_norm: last_score,
        loglik_trace: trace,
    })
}

/// Standard errors from the inverse information matrix.
pub(crate) fn standard_errors(info: &[f64], p: usize) -> Vec<f64> {
    let j = to_matrix(info, p);
    match j.cholesky() {
        Some(c) => {
            let inv = c.inverse();
            (0..p).map(|i| inv[(i, i)].sqrt()).collect()
        }
        None => vec![f64::NAN; p],
    }
}

/// Expansion point of the approximating model during a fit.
#[derive(Debug, Clone, PartialEq)]
enum Anchor {
    Origin,
    Fixed(Vec<f64>),
    Dynamic(Vec<f64>),
}

/// Approximate conditional log-likelihood summed over units.
struct ConditionalLikelihood<'a> {
    data: &'a PanelDataset,
    lags: usize,
    anchor: Anchor,
}

impl Objective for ConditionalLikelihood<'_> {
    fn refresh(&mut self, theta: &[f64]) -> Option<f64> {
        let k = self.data.k();
        match &mut self.anchor {
            Anchor::Dynamic(bar) => {
                let change = bar
                    .iter()
                    .zip(&theta[..k])
                    .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                bar.copy_from_slice(&theta[..k]);
                Some(change)
            }
            _ => None,
        }
    }

    fn evaluate(&self, theta: &[f64]) -> Result<Evaluation> {
        let k = self.data.k();
        let p = theta.len();
        let th = Theta::from_slice(theta, k, self.lags);
        let bar = match &self.anchor {
            Anchor::Origin => None,
            Anchor::Fixed(b) | Anchor::Dynamic(b) => Some(b.as_slice()),
        };
        let parts = self
            .data
            .units()
            .par_iter()
            .map(|u| match bar {
                None => unit_contribution(u, &th, Approximation::Basic),
                Some(b) => {
                    let w = ImprovedWeights::from_unit(u, b);
                    unit_contribution(u, &th, Approximation::Improved(&w))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        // fixed-order reduction keeps fits bit-reproducible
        let mut eval = Evaluation {
            loglik: 0.0,
            score: vec![0.0; p],
            info: vec![0.0; p * p],
            actual_n: 0,
        };
        for c in parts.into_iter().flatten() {
            eval.actual_n += 1;
            eval.loglik += c.loglik;
            for (a, b) in eval.score.iter_mut().zip(&c.score) {
                *a += b;
            }
            for (a, b) in eval.info.iter_mut().zip(&c.info) {
                *a += b;
            }
        }
        Ok(eval)
    }
}

fn fit_conditional(
    data: &PanelDataset,
    lags: usize,
    anchor: Anchor,
    start: Theta,
    config: &SolverConfig,
) -> Result<FitResult> {
    if data.informative_count() == 0 {
        return Err(Error::NoInformativeUnits);
    }
    let k = data.k();
    if start.k() != k || start.dim() != k + lags {
        return Err(Error::InvalidInput(format!(
            "start point has dimension {}, expected {}",
            start.dim(),
            k + lags
        )));
    }
    if let Anchor::Fixed(b) = &anchor {
        if b.len() != k || b.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "beta_bar must be a finite vector of length {k}"
            )));
        }
    }
    let mut obj = ConditionalLikelihood { data, lags, anchor };
    let out = newton_maximize(&mut obj, start.to_vec(), config)?;
    let p = k + lags;
    let beta_bar = match &obj.anchor {
        Anchor::Origin => None,
        Anchor::Fixed(b) | Anchor::Dynamic(b) => Some(b.clone()),
    };
    Ok(FitResult {
        theta_hat: Theta::from_slice(&out.theta, k, lags),
        labels: Theta::labels(k, lags),
        se: standard_errors(&out.eval.info, p),
        info: out.eval.info.chunks(p).map(<[f64]>::to_vec).collect(),
        loglik: out.eval.loglik,
        loglik_trace: out.trace,
        iterations: out.iterations,
        actual_n: out.eval.actual_n,
        nominal_n: data.n(),
        converged: true,
        beta_bar,
    })
}

fn start_or_zero(config: &SolverConfig, k: usize, lags: usize) -> Theta {
    config.start.clone().unwrap_or_else(|| {
        if lags == 2 {
            Theta::two_lag(vec![0.0; k], 0.0, 0.0)
        } else {
            Theta::zeros(k)
        }
    })
}

/// Maximizes the conditional likelihood of the approximating model expanded at the origin.
pub fn fit_basic(data: &PanelDataset, config: &SolverConfig) -> Result<FitResult> {
    fit_conditional(data, 1, Anchor::Origin, start_or_zero(config, data.k(), 1), config)
}

fn fit_improved_lags(
    data: &PanelDataset,
    lags: usize,
    mode: &ImprovedMode,
    config: &SolverConfig,
) -> Result<FitResult> {
    let k = data.k();
    match mode {
        ImprovedMode::Fixed(b) => fit_conditional(
            data,
            lags,
            Anchor::Fixed(b.clone()),
            start_or_zero(config, k, lags),
            config,
        ),
        ImprovedMode::Dynamic => {
            // without an explicit start, the basic estimate seeds both theta and beta_bar
            let start = match &config.start {
                Some(s) => s.clone(),
                None => {
                    fit_conditional(data, lags, Anchor::Origin, start_or_zero(config, k, lags), config)?
                        .theta_hat
                }
            };
            fit_conditional(data, lags, Anchor::Dynamic(start.beta.clone()), start, config)
        }
    }
}

/// Maximizes the conditional likelihood of the approximating model expanded at beta_bar.
pub fn fit_improved(
    data: &PanelDataset,
    mode: &ImprovedMode,
    config: &SolverConfig,
) -> Result<FitResult> {
    fit_improved_lags(data, 1, mode, config)
}

/// Conditional ML for the model with two lagged responses.
pub fn fit_two_lag(
    data: &PanelDataset,
    mode: &TwoLagMode,
    config: &SolverConfig,
) -> Result<FitResult> {
    if !data.has_lag2() {
        return Err(Error::InvalidInput(
            "two-lag estimation requires a time -1 observation for every unit".into(),
        ));
    }
    if data.t() < 3 {
        return Err(Error::InvalidInput("two-lag estimation requires T >= 3".into()));
    }
    match mode {
        TwoLagMode::Basic => {
            fit_conditional(data, 2, Anchor::Origin, start_or_zero(config, data.k(), 2), config)
        }
        TwoLagMode::Improved(m) => fit_improved_lags(data, 2, m, config),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub parameter: String,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
}

impl ConfidenceInterval {
    pub fn contains(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }
}

/// Upper alpha/2 standard normal quantile for a two-sided interval at `level`.
pub fn normal_critical_value(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidInput(format!("coverage level {level} not in (0, 1)")));
    }
    let n = Normal::standard();
    Ok(n.inverse_cdf(0.5 + level / 2.0))
}

/// Wald intervals estimate -/+ z_{alpha/2} se for every parameter.
pub fn confidence_interval(result: &FitResult, level: f64) -> Result<Vec<ConfidenceInterval>> {
    if !result.converged {
        return Err(Error::Refused("confidence intervals need a converged fit".into()));
    }
    let z = normal_critical_value(level)?;
    let est = result.estimates();
    if result.se.iter().any(|s| !s.is_finite()) {
        return Err(Error::Refused("information matrix is not positive definite".into()));
    }
    Ok(est
        .iter()
        .zip(&result.se)
        .zip(&result.labels)
        .map(|((&e, &s), l)| ConfidenceInterval {
            parameter: l.clone(),
            estimate: e,
            lower: e - z * s,
            upper: e + z * s,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaldTest {
    pub statistic: f64,
    pub p_value: f64,
}

/// Two-sided standard normal p-value.
pub fn two_sided_p_value(z: f64) -> f64 {
    statrs::function::erf::erfc(z.abs() / std::f64::consts::SQRT_2)
}

/// z = gamma2_hat / se(gamma2_hat) against the standard normal.
pub fn wald_test_gamma2(result: &FitResult) -> Result<WaldTest> {
    let g2 = result
        .theta_hat
        .gamma2
        .ok_or_else(|| Error::Refused("fit has no second-lag parameter".into()))?;
    let se = *result.se.last().expect("non-empty standard errors");
    if !(se > 0.0) {
        return Err(Error::Refused("standard error of gamma2 is not positive".into()));
    }
    let statistic = g2 / se;
    Ok(WaldTest {
        statistic,
        p_value: two_sided_p_value(statistic),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dummy_result(est: f64, se: f64, gamma2: Option<f64>) -> FitResult {
        FitResult {
            theta_hat: Theta {
                beta: vec![est],
                gamma: 0.0,
                gamma2,
            },
            labels: Theta::labels(1, 1 + usize::from(gamma2.is_some())),
            se: vec![se; 2 + usize::from(gamma2.is_some())],
            info: vec![],
            loglik: 0.0,
            loglik_trace: vec![],
            iterations: 1,
            actual_n: 1,
            nominal_n: 1,
            converged: true,
            beta_bar: None,
        }
    }

    #[test]
    fn ci_quantile_arithmetic() {
        let r = dummy_result(1.0, 0.1, None);
        let ci = confidence_interval(&r, 0.95).unwrap();
        assert!((ci[0].lower - (1.0 - 1.959963984540054 * 0.1)).abs() < 1e-12);
        assert!((ci[0].upper - 1.196).abs() < 1e-3);
        assert!((ci[0].lower - 0.804).abs() < 1e-3);
    }

    #[test]
    fn ci_refuses_unconverged() {
        let mut r = dummy_result(1.0, 0.1, None);
        r.converged = false;
        assert!(matches!(confidence_interval(&r, 0.95), Err(Error::Refused(_))));
        let r = dummy_result(1.0, 0.1, None);
        assert!(confidence_interval(&r, 1.0).is_err());
    }

    #[test]
    fn wald_arithmetic() {
        let w = wald_test_gamma2(&dummy_result(0.0, 0.1, Some(0.0))).unwrap();
        assert_eq!(w.statistic, 0.0);
        assert!((w.p_value - 1.0).abs() < 1e-15);
        let w = wald_test_gamma2(&dummy_result(0.0, 0.1, Some(0.196))).unwrap();
        assert!((w.statistic - 1.96).abs() < 1e-12);
        assert!((w.p_value - 0.05).abs() < 1e-3);
        assert!(wald_test_gamma2(&dummy_result(0.0, 0.1, None)).is_err());
    }

    #[test]
    fn singular_information_names_direction() {
        let j = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0]);
        match check_identified(&j) {
            Err(Error::NotIdentified { direction, .. }) => {
                assert!(direction[0].abs() < 1e-12 && (direction[1].abs() - 1.0).abs() < 1e-12)
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
