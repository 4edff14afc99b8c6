//! Brute-force oracles shared by the integration tests. Everything here is
//! computed by enumerating all 2^T response paths, independently of the
//! library's score-class machinery.
#![allow(dead_code)]

use dynlogit::{PanelUnit, Theta};
use rand::Rng;

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn bits(mask: u32, t: usize) -> Vec<u8> {
    (0..t).map(|i| ((mask >> i) & 1) as u8).collect()
}

/// Exponent of the joint approximating model written term by term:
/// z_+ alpha + sum_t z_t x_t'beta - gamma sum_t q_t z_{t-1} + gamma sum_t z_{t-1} z_t,
/// with q_t = 0.5 for the basic model.
pub fn joint_exponent(
    y0: u8,
    z: &[u8],
    x: &[Vec<f64>],
    alpha: f64,
    theta: &Theta,
    q: Option<&[f64]>,
) -> f64 {
    let mut s = 0.0;
    let mut prev = y0 as f64;
    for (t, &zt) in z.iter().enumerate() {
        let zt = zt as f64;
        let xb: f64 = x[t].iter().zip(&theta.beta).map(|(a, b)| a * b).sum();
        let qt = q.map_or(0.5, |q| q[t]);
        s += zt * (alpha + xb) - theta.gamma * qt * prev + theta.gamma * prev * zt;
        prev = zt;
    }
    s
}

/// Unit's covariate rows x_1..x_T.
pub fn rows(unit: &PanelUnit) -> Vec<Vec<f64>> {
    (1..=unit.t()).map(|t| unit.x_row(t).to_vec()).collect()
}

/// Joint probabilities of all 2^T paths, indexed by mask.
pub fn joint_probs(unit: &PanelUnit, alpha: f64, theta: &Theta, q: Option<&[f64]>) -> Vec<f64> {
    let t = unit.t();
    let x = rows(unit);
    let e: Vec<f64> = (0..1u32 << t)
        .map(|m| joint_exponent(unit.y0(), &bits(m, t), &x, alpha, theta, q))
        .collect();
    let mx = e.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = e.iter().map(|v| (v - mx).exp()).collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|v| v / z).collect()
}

/// Conditional distribution given the unit's total score, by normalizing
/// the joint within the score class. Returns (mask, probability).
pub fn conditional_probs(
    unit: &PanelUnit,
    alpha: f64,
    theta: &Theta,
    q: Option<&[f64]>,
) -> Vec<(u32, f64)> {
    let t = unit.t();
    let yp = unit.y_plus() as u32;
    let joint = joint_probs(unit, alpha, theta, q);
    let class: Vec<u32> = (0..1u32 << t).filter(|m| m.count_ones() == yp).collect();
    let tot: f64 = class.iter().map(|&m| joint[m as usize]).sum();
    class.into_iter().map(|m| (m, joint[m as usize] / tot)).collect()
}

/// Log conditional likelihood of the unit's own path.
pub fn conditional_loglik(unit: &PanelUnit, theta: &Theta, q: Option<&[f64]>) -> f64 {
    let own = unit.y_mask();
    conditional_probs(unit, 0.0, theta, q)
        .into_iter()
        .find(|(m, _)| *m == own)
        .unwrap()
        .1
        .ln()
}

pub fn q_weights(unit: &PanelUnit, beta_bar: &[f64]) -> Vec<f64> {
    (1..=unit.t())
        .map(|t| sigmoid(unit.x_row(t).iter().zip(beta_bar).map(|(a, b)| a * b).sum()))
        .collect()
}

pub fn random_unit<R: Rng>(rng: &mut R, t: usize, k: usize, informative: bool) -> PanelUnit {
    loop {
        let y0 = rng.random_range(0..2u8);
        let y: Vec<u8> = (0..t).map(|_| rng.random_range(0..2u8)).collect();
        let yp: usize = y.iter().map(|&v| v as usize).sum();
        if informative && (yp == 0 || yp == t) {
            continue;
        }
        let x0: Vec<f64> = (0..k).map(|_| rng.random_range(-2.0..2.0)).collect();
        let x: Vec<Vec<f64>> = (0..t)
            .map(|_| (0..k).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        return PanelUnit::new("r", y0, x0, y, x).unwrap();
    }
}

pub fn random_theta<R: Rng>(rng: &mut R, k: usize) -> Theta {
    Theta::new(
        (0..k).map(|_| rng.random_range(-1.5..1.5)).collect(),
        rng.random_range(-2.0..2.5),
    )
}
