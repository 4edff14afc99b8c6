//! Exact evaluation of the quadratic exponential approximating model.
//!
//! The conditional distribution of a response path given its total score
//! is an exponential family in the statistic `u(z)`; everything here reduces
//! to enumerating the score class `{z : z_+ = y_+}` and working in the log
//! domain. The true dynamic logit joint and the backward `g` recursion are
//! provided as oracles for approximation-quality checks.
//!
//! Configurations are bitmasks: bit `t - 1` is `z_t`.

use std::sync::{Arc, OnceLock};

use crate::data::{PanelUnit, Theta};
use crate::error::{Error, Result};
use crate::numeric::{dot, log_add_exp, log_sum_exp, sigmoid, softplus};

/// Largest T for which score classes are enumerated exactly.
pub const MAX_T: usize = 25;

/// All binary T-vectors with a given total score.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScoreClass {
    t: usize,
    y_plus: usize,
    masks: Vec<u32>,
}

impl ScoreClass {
    pub fn t(&self) -> usize {
        self.t
    }

    pub fn y_plus(&self) -> usize {
        self.y_plus
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    pub fn masks(&self) -> &[u32] {
        &self.masks
    }

    /// Configurations as 0/1 vectors (z_1, ..., z_T).
    pub fn configs(&self) -> Vec<Vec<u8>> {
        self.masks.iter().map(|&m| mask_to_vec(m, self.t)).collect()
    }
}

pub fn mask_to_vec(mask: u32, t: usize) -> Vec<u8> {
    (0..t).map(|i| ((mask >> i) & 1) as u8).collect()
}

pub fn vec_to_mask(z: &[u8]) -> u32 {
    z.iter()
        .enumerate()
        .fold(0, |m, (i, &v)| m | ((v as u32 & 1) << i))
}

/// Enumerates the score class by walking one-position sets in lexicographic order.
pub fn enumerate_score_class(t: usize, y_plus: usize) -> Result<ScoreClass> {
    if t > MAX_T {
        return Err(Error::Capacity { t, cap: MAX_T });
    }
    if y_plus > t {
        return Err(Error::InvalidInput(format!(
            "total score {y_plus} exceeds T = {t}"
        )));
    }
    let mut masks = Vec::with_capacity(binomial(t, y_plus));
    let mut pos: Vec<usize> = (0..y_plus).collect();
    loop {
        masks.push(pos.iter().fold(0u32, |m, &p| m | (1 << p)));
        // advance to the next combination
        let mut i = y_plus;
        loop {
            if i == 0 {
                return Ok(ScoreClass { t, y_plus, masks });
            }
            i -= 1;
            if pos[i] < t - y_plus + i {
                break;
            }
        }
        pos[i] += 1;
        for j in i + 1..y_plus {
            pos[j] = pos[j - 1] + 1;
        }
    }
}

type ClassCache = Vec<OnceLock<Arc<ScoreClass>>>;

fn class_cache() -> &'static ClassCache {
    static CACHE: OnceLock<ClassCache> = OnceLock::new();
    CACHE.get_or_init(|| (0..(MAX_T + 1) * (MAX_T + 1)).map(|_| OnceLock::new()).collect())
}

/// Shared, lazily built score class for `(t, y_plus)`.
pub fn score_class(t: usize, y_plus: usize) -> Result<Arc<ScoreClass>> {
    if t > MAX_T {
        return Err(Error::Capacity { t, cap: MAX_T });
    }
    if y_plus > t {
        return Err(Error::InvalidInput(format!(
            "total score {y_plus} exceeds T = {t}"
        )));
    }
    let slot = &class_cache()[t * (MAX_T + 1) + y_plus];
    if let Some(c) = slot.get() {
        return Ok(c.clone());
    }
    let built = Arc::new(enumerate_score_class(t, y_plus)?);
    Ok(slot.get_or_init(|| built).clone())
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// Logistic weights q_t = sigma(x_t' beta_bar) of the improved approximation.
#[derive(Debug, Clone, PartialEq)]
pub struct ImprovedWeights {
    pub q: Vec<f64>,
    pub beta_bar: Vec<f64>,
}

impl ImprovedWeights {
    /// Weights from the unit's raw covariate rows x_1..x_T.
    pub fn from_unit(unit: &PanelUnit, beta_bar: &[f64]) -> Self {
        let q = (1..=unit.t())
            .map(|t| sigmoid(dot(unit.x_row(t), beta_bar)))
            .collect();
        Self {
            q,
            beta_bar: beta_bar.to_vec(),
        }
    }
}

/// Which Taylor expansion the approximating model uses.
#[derive(Debug, Clone, Copy)]
pub enum Approximation<'a> {
    /// Expansion at the origin: correction 0.5 per lagged response.
    Basic,
    /// Expansion at beta = beta_bar: correction q_t per lagged response.
    Improved(&'a ImprovedWeights),
}

impl Approximation<'_> {
    #[inline]
    fn q(&self, t: usize) -> f64 {
        match self {
            Approximation::Basic => 0.5,
            Approximation::Improved(w) => w.q[t - 1],
        }
    }
}

/// Individual effect plus structural parameters, for joint-model oracles.
#[derive(Debug, Clone, PartialEq)]
pub struct JointParams {
    pub alpha: f64,
    pub theta: Theta,
}

fn lags_of(unit: &PanelUnit, theta: &Theta) -> Result<usize> {
    if theta.k() != unit.k() {
        return Err(Error::InvalidInput(format!(
            "theta has {} covariate effects, unit has {} covariates",
            theta.k(),
            unit.k()
        )));
    }
    match theta.gamma2 {
        None => Ok(1),
        Some(_) if unit.y_minus1().is_some() => Ok(2),
        Some(_) => Err(Error::InvalidInput(format!(
            "unit {}: two-lag model requires the time -1 response",
            unit.id()
        ))),
    }
}

/// z_s for s in -1..=T, with z_0 = y0 and z_{-1} = y_{-1}.
#[inline]
fn z_at(unit: &PanelUnit, mask: u32, s: isize) -> f64 {
    match s {
        -1 => unit.y_minus1().unwrap_or(0) as f64,
        0 => unit.y0() as f64,
        s => ((mask >> (s - 1)) & 1) as f64,
    }
}

/// Dependence statistic for lag h: sum_t z_{t-h} (z_t - q_t).
#[inline]
fn lag_statistic(unit: &PanelUnit, mask: u32, h: usize, approx: &Approximation) -> f64 {
    let mut acc = 0.0;
    for t in 1..=unit.t() {
        let prev = z_at(unit, mask, t as isize - h as isize);
        if prev != 0.0 {
            acc += z_at(unit, mask, t as isize) - approx.q(t);
        }
    }
    acc
}

/// Sufficient statistic u(D, y0, z) of the conditional model; length k + lags.
pub fn conditional_statistic(
    unit: &PanelUnit,
    mask: u32,
    lags: usize,
    approx: &Approximation,
    out: &mut [f64],
) {
    let k = unit.k();
    let d = &unit.suff_stats().d;
    out.iter_mut().for_each(|v| *v = 0.0);
    for t in 2..=unit.t() {
        if (mask >> (t - 1)) & 1 == 1 {
            let row = &d[(t - 2) * k..(t - 1) * k];
            for j in 0..k {
                out[j] += row[j];
            }
        }
    }
    for h in 1..=lags {
        out[k + h - 1] = lag_statistic(unit, mask, h, approx);
    }
}

/// Conditional distribution of the unit's score class, in class order.
struct ClassEval {
    masks: Arc<ScoreClass>,
    /// Flattened u(z), one row of length `p` per configuration.
    stats: Vec<f64>,
    log_probs: Vec<f64>,
    p: usize,
}

fn eval_class(unit: &PanelUnit, theta: &Theta, approx: &Approximation) -> Result<ClassEval> {
    let lags = lags_of(unit, theta)?;
    let t = unit.t();
    let y_plus = unit.y_plus();
    if y_plus == 0 || y_plus == t {
        return Err(Error::DegenerateClass { y_plus, t });
    }
    let class = score_class(t, y_plus)?;
    let p = unit.k() + lags;
    let th = theta.to_vec();
    let mut stats = vec![0.0; class.len() * p];
    let mut eta = Vec::with_capacity(class.len());
    for (c, &mask) in class.masks().iter().enumerate() {
        let row = &mut stats[c * p..(c + 1) * p];
        conditional_statistic(unit, mask, lags, approx, row);
        eta.push(dot(row, &th));
    }
    let lse = log_sum_exp(&eta);
    let log_probs = eta.into_iter().map(|e| e - lse).collect();
    Ok(ClassEval {
        masks: class,
        stats,
        log_probs,
        p,
    })
}

/// Conditional log-probability of configuration `mask` given the unit's total score.
pub fn cond_logprob_of(
    unit: &PanelUnit,
    mask: u32,
    theta: &Theta,
    approx: Approximation,
) -> Result<f64> {
    let ev = eval_class(unit, theta, &approx)?;
    ev.masks
        .masks()
        .iter()
        .position(|&m| m == mask)
        .map(|i| ev.log_probs[i])
        .ok_or_else(|| {
            Error::InvalidInput(format!(
                "configuration {mask:#b} is not in the score class of unit {}",
                unit.id()
            ))
        })
}

/// Full conditional distribution over the unit's score class as (mask, probability).
pub fn cond_distribution(
    unit: &PanelUnit,
    theta: &Theta,
    approx: Approximation,
) -> Result<Vec<(u32, f64)>> {
    let ev = eval_class(unit, theta, &approx)?;
    Ok(ev
        .masks
        .masks()
        .iter()
        .zip(&ev.log_probs)
        .map(|(&m, &lp)| (m, lp.exp()))
        .collect())
}

/// log p*(y | D, y0, y_+) under the expansion at the origin.
pub fn cond_logprob_basic(unit: &PanelUnit, theta: &Theta) -> Result<f64> {
    cond_logprob_of(unit, unit.y_mask(), theta, Approximation::Basic)
}

/// log p-dagger(y | D, y0, y_+) under the expansion at beta_bar.
pub fn cond_logprob_improved(
    unit: &PanelUnit,
    theta: &Theta,
    weights: &ImprovedWeights,
) -> Result<f64> {
    cond_logprob_of(unit, unit.y_mask(), theta, Approximation::Improved(weights))
}

/// Per-unit log-likelihood, score and information.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitContribution {
    pub loglik: f64,
    /// v = u(y) - m.
    pub score: Vec<f64>,
    /// S = Var(u | y_+), row-major p x p.
    pub info: Vec<f64>,
}

/// Log-likelihood, score and information of one unit; `None` for a degenerate class.
pub fn unit_contribution(
    unit: &PanelUnit,
    theta: &Theta,
    approx: Approximation,
) -> Result<Option<UnitContribution>> {
    let ev = match eval_class(unit, theta, &approx) {
        Ok(ev) => ev,
        Err(Error::DegenerateClass { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    let p = ev.p;
    let mut m = vec![0.0; p];
    let probs: Vec<f64> = ev.log_probs.iter().map(|lp| lp.exp()).collect();
    for (c, &pr) in probs.iter().enumerate() {
        for j in 0..p {
            m[j] += pr * ev.stats[c * p + j];
        }
    }
    let mut info = vec![0.0; p * p];
    let mut dev = vec![0.0; p];
    for (c, &pr) in probs.iter().enumerate() {
        for j in 0..p {
            dev[j] = ev.stats[c * p + j] - m[j];
        }
        for a in 0..p {
            let wa = pr * dev[a];
            for b in a..p {
                info[a * p + b] += wa * dev[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            info[a * p + b] = info[b * p + a];
        }
    }
    let own = unit.y_mask();
    let idx = ev
        .masks
        .masks()
        .iter()
        .position(|&mk| mk == own)
        .expect("observed path belongs to its own score class");
    let score = (0..p).map(|j| ev.stats[idx * p + j] - m[j]).collect();
    Ok(Some(UnitContribution {
        loglik: ev.log_probs[idx],
        score,
        info,
    }))
}

/// Score vector v and information matrix S of one unit; zeros for a degenerate class.
pub fn unit_score_and_info(
    unit: &PanelUnit,
    theta: &Theta,
    approx: Approximation,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let p = theta.dim();
    Ok(match unit_contribution(unit, theta, approx)? {
        Some(c) => (c.score, c.info.chunks(p).map(<[f64]>::to_vec).collect()),
        None => (vec![0.0; p], vec![vec![0.0; p]; p]),
    })
}

/// Unnormalized log-weight of `mask` under the joint approximating model.
fn joint_approx_exponent(
    unit: &PanelUnit,
    mask: u32,
    params: &JointParams,
    lags: usize,
    approx: &Approximation,
) -> f64 {
    let beta = &params.theta.beta;
    let mut s = 0.0;
    for t in 1..=unit.t() {
        if (mask >> (t - 1)) & 1 == 1 {
            s += params.alpha + dot(unit.x_row(t), beta);
        }
    }
    s += params.theta.gamma * lag_statistic(unit, mask, 1, approx);
    if lags == 2 {
        s += params.theta.gamma2.unwrap_or(0.0) * lag_statistic(unit, mask, 2, approx);
    }
    s
}

/// log p*(z | alpha, X, y0) over all 2^T paths for an arbitrary configuration.
pub fn joint_approx_logprob_of(
    unit: &PanelUnit,
    mask: u32,
    params: &JointParams,
    approx: Approximation,
) -> Result<f64> {
    let lags = lags_of(unit, &params.theta)?;
    let t = unit.t();
    if t > MAX_T {
        return Err(Error::Capacity { t, cap: MAX_T });
    }
    let exps: Vec<f64> = (0..(1u32 << t))
        .map(|m| joint_approx_exponent(unit, m, params, lags, &approx))
        .collect();
    Ok(exps[mask as usize] - log_sum_exp(&exps))
}

/// log p*(y | alpha, X, y0) of the unit's own path under the basic approximation.
pub fn joint_quadexp_logprob(unit: &PanelUnit, params: &JointParams) -> Result<f64> {
    joint_approx_logprob_of(unit, unit.y_mask(), params, Approximation::Basic)
}

/// log p(z | alpha, X, y0) under the true dynamic logit, for any configuration.
pub fn joint_dynamic_logit_logprob_of(
    unit: &PanelUnit,
    mask: u32,
    params: &JointParams,
) -> Result<f64> {
    let lags = lags_of(unit, &params.theta)?;
    let th = &params.theta;
    let mut lp = 0.0;
    for t in 1..=unit.t() {
        let ti = t as isize;
        let mut eta = params.alpha + dot(unit.x_row(t), &th.beta) + z_at(unit, mask, ti - 1) * th.gamma;
        if lags == 2 {
            eta += z_at(unit, mask, ti - 2) * th.gamma2.unwrap_or(0.0);
        }
        lp += z_at(unit, mask, ti) * eta - softplus(eta);
    }
    Ok(lp)
}

/// log p(y | alpha, X, y0) of the unit's own path under the true dynamic logit.
pub fn joint_dynamic_logit_logprob(unit: &PanelUnit, params: &JointParams) -> Result<f64> {
    joint_dynamic_logit_logprob_of(unit, unit.y_mask(), params)
}

/// Conditional logits of y_t given y_0..y_{t-1} under the basic joint approximating
/// model, evaluated along the unit's observed path, via the backward g recursion.
///
/// Element `t - 1` is the logit for occasion t.
pub fn g_recursion_oracle(unit: &PanelUnit, params: &JointParams) -> Result<Vec<f64>> {
    if params.theta.gamma2.is_some() {
        return Err(Error::InvalidInput(
            "the g recursion is defined for the one-lag model".into(),
        ));
    }
    lags_of(unit, &params.theta)?;
    let t_len = unit.t();
    let gamma = params.theta.gamma;
    // log delta_t(1): main effect of y_t
    let main = |t: usize| {
        let base = params.alpha + dot(unit.x_row(t), &params.theta.beta);
        if t < t_len {
            base - 0.5 * gamma
        } else {
            base
        }
    };
    // log_g[t][a] = log g_t(a) for t = 2..=T (index t), a = y_{t-1}
    let mut log_g = vec![[0.0f64; 2]; t_len + 2];
    for a in 0..2 {
        log_g[t_len][a] = softplus(main(t_len) + a as f64 * gamma);
    }
    for t in (2..t_len).rev() {
        for a in 0..2 {
            log_g[t][a] = log_add_exp(
                log_g[t + 1][0],
                main(t) + a as f64 * gamma + log_g[t + 1][1],
            );
        }
    }
    let y = unit.y();
    Ok((1..=t_len)
        .map(|t| {
            let prev = if t == 1 { unit.y0() } else { y[t - 2] } as f64;
            let base = main(t) + prev * gamma;
            if t < t_len {
                base + log_g[t + 1][1] - log_g[t + 1][0]
            } else {
                base
            }
        })
        .collect())
}
