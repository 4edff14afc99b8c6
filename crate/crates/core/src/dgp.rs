//! Panels simulated from the true dynamic logit model.
//!
//! Every unit draws from its own ChaCha stream keyed by (master seed,
//! replication, unit index), so a dataset is a pure function of
//! `(spec, rep)` no matter how generation is scheduled.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{PanelDataset, PanelUnit, Theta};
use crate::error::{Error, Result};
use crate::numeric::sigmoid;

/// Variance of the standard logistic distribution; all designs scale covariates to it.
pub const LOGISTIC_VARIANCE: f64 = PI * PI / 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignFamily {
    Benchmark,
    Chi2Regressor,
    AdditionalRegressors,
    Trending,
}

impl DesignFamily {
    pub fn as_str(&self) -> &'static str {
        match self {
            DesignFamily::Benchmark => "benchmark",
            DesignFamily::Chi2Regressor => "chi2_regressor",
            DesignFamily::AdditionalRegressors => "additional_regressors",
            DesignFamily::Trending => "trending",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "benchmark" => Some(Self::Benchmark),
            "chi2_regressor" => Some(Self::Chi2Regressor),
            "additional_regressors" => Some(Self::AdditionalRegressors),
            "trending" => Some(Self::Trending),
            _ => None,
        }
    }
}

fn default_beta() -> f64 {
    1.0
}

fn default_phi() -> f64 {
    1.0
}

fn default_replications() -> usize {
    200
}

/// A Monte-Carlo design, serializable as a JSON config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub family: DesignFamily,
    pub n: usize,
    #[serde(rename = "T")]
    pub t: usize,
    pub gamma: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_replications")]
    pub replications: usize,
    /// True second-lag effect; requires `lag2_presample`.
    #[serde(default)]
    pub gamma2: f64,
    /// Also generate the time -1 observation needed by the two-lag estimator.
    #[serde(default)]
    pub lag2_presample: bool,
    /// Scale of the trending covariate.
    #[serde(default = "default_phi")]
    pub trend_phi: f64,
    /// Level of the trending covariate.
    #[serde(default)]
    pub trend_psi: f64,
}

impl DesignSpec {
    pub fn benchmark(n: usize, t: usize, gamma: f64, seed: u64, replications: usize) -> Self {
        Self {
            family: DesignFamily::Benchmark,
            n,
            t,
            gamma,
            beta: 1.0,
            seed,
            replications,
            gamma2: 0.0,
            lag2_presample: false,
            trend_phi: 1.0,
            trend_psi: 0.0,
        }
    }

    pub fn with_family(mut self, family: DesignFamily) -> Self {
        self.family = family;
        self
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(s)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidInput("design needs n >= 1".into()));
        }
        if self.t < 2 {
            return Err(Error::InvalidInput("design needs T >= 2".into()));
        }
        let finite = [self.gamma, self.beta, self.gamma2, self.trend_phi, self.trend_psi];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("design parameters must be finite".into()));
        }
        if self.gamma2 != 0.0 && !self.lag2_presample {
            return Err(Error::InvalidInput(
                "a nonzero gamma2 requires lag2_presample".into(),
            ));
        }
        Ok(())
    }

    /// Number of covariates in generated panels.
    pub fn k(&self) -> usize {
        match self.family {
            DesignFamily::AdditionalRegressors => 4,
            _ => 1,
        }
    }

    /// True one-lag structural parameters (nuisance covariates have zero effect).
    pub fn true_theta(&self) -> Theta {
        let mut beta = vec![0.0; self.k()];
        beta[0] = self.beta;
        Theta::new(beta, self.gamma)
    }

    /// Stable text key identifying the design in output tables.
    pub fn key(&self) -> String {
        format!(
            "{}/T={}/n={}/gamma={}",
            self.family.as_str(),
            self.t,
            self.n,
            self.gamma
        )
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent stream for one (replication, unit) pair.
pub fn unit_rng(master: u64, rep: u64, unit: u64) -> ChaCha8Rng {
    let mut state = master;
    let a = splitmix64(&mut state);
    let mut state = a ^ rep.wrapping_mul(0xD1B5_4A32_D192_ED03);
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(unit);
    rng
}

/// Draws y_1..y_T sequentially from the dynamic logit
/// P(y_t = 1) = sigma(alpha + x_t' beta + y_{t-1} gamma [+ y_{t-2} gamma2]).
///
/// `y_minus1` is only consulted when `theta.gamma2` is set.
pub fn simulate_path<R: Rng + ?Sized>(
    alpha: f64,
    x_rows: &[Vec<f64>],
    y0: u8,
    y_minus1: Option<u8>,
    theta: &Theta,
    rng: &mut R,
) -> Vec<u8> {
    let g2 = theta.gamma2.unwrap_or(0.0);
    let (mut prev2, mut prev) = (y_minus1.unwrap_or(0), y0);
    x_rows
        .iter()
        .map(|row| {
            let xb: f64 = row.iter().zip(&theta.beta).map(|(a, b)| a * b).sum();
            let eta = alpha + xb + prev as f64 * theta.gamma + prev2 as f64 * g2;
            let y = u8::from(rng.random::<f64>() < sigmoid(eta));
            prev2 = prev;
            prev = y;
            y
        })
        .collect()
}

/// Simulates one unit given its effect, covariates (x_0 first, then x_1..x_T) and y0.
pub fn simulate_unit<R: Rng + ?Sized>(
    id: impl Into<String>,
    alpha: f64,
    x0: Vec<f64>,
    x_rows: Vec<Vec<f64>>,
    y0: u8,
    theta: &Theta,
    rng: &mut R,
) -> Result<PanelUnit> {
    let y = simulate_path(alpha, &x_rows, y0, None, theta, rng);
    PanelUnit::new(id, y0, x0, y, x_rows)
}

/// Covariate generator for one unit: rows for times `first..=T`.
fn draw_covariates<R: Rng + ?Sized>(spec: &DesignSpec, first: i64, rng: &mut R) -> Vec<Vec<f64>> {
    let sd = LOGISTIC_VARIANCE.sqrt();
    let normal = Normal::new(0.0, sd).expect("valid normal");
    let times = first..=spec.t as i64;
    match spec.family {
        DesignFamily::Benchmark => times.map(|_| vec![normal.sample(rng)]).collect(),
        DesignFamily::Chi2Regressor => {
            let chi2 = ChiSquared::new(1.0).expect("valid chi-square");
            let scale = (LOGISTIC_VARIANCE / 2.0).sqrt();
            times.map(|_| vec![(chi2.sample(rng) - 1.0) * scale]).collect()
        }
        DesignFamily::AdditionalRegressors => times
            .map(|_| (0..4).map(|_| normal.sample(rng)).collect())
            .collect(),
        DesignFamily::Trending => {
            // stationary start so every occasion has variance pi^2/3
            let innov = Normal::new(0.0, (LOGISTIC_VARIANCE * 0.75).sqrt()).expect("valid normal");
            let mut zeta = normal.sample(rng);
            let mut rows = Vec::new();
            for (i, t) in times.enumerate() {
                if i > 0 {
                    zeta = 0.5 * zeta + innov.sample(rng);
                }
                rows.push(vec![spec.trend_phi * (spec.trend_psi + 0.1 * t as f64 + zeta)]);
            }
            rows
        }
    }
}

fn generate_unit(spec: &DesignSpec, rep: u64, i: usize) -> Result<PanelUnit> {
    let mut rng = unit_rng(spec.seed, rep, i as u64);
    let first = if spec.lag2_presample { -1 } else { 0 };
    let mut rows = draw_covariates(spec, first, &mut rng);
    let presample = if spec.lag2_presample {
        Some(rows.remove(0))
    } else {
        None
    };
    let x0 = rows.remove(0);
    let t = spec.t as f64;
    let alpha = (x0[0] + rows.iter().map(|r| r[0]).sum::<f64>()) / (t + 1.0);
    let theta = Theta {
        beta: spec.true_theta().beta,
        gamma: spec.gamma,
        gamma2: Some(spec.gamma2),
    };
    let static_draw = |rng: &mut ChaCha8Rng, x: &[f64], lag: f64| {
        let eta = alpha + x[0] * spec.beta + lag;
        u8::from(rng.random::<f64>() < sigmoid(eta))
    };
    let y_minus1 = presample.as_ref().map(|x| static_draw(&mut rng, x, 0.0));
    let y0 = static_draw(&mut rng, &x0, y_minus1.map_or(0.0, |v| v as f64 * spec.gamma));
    let y = simulate_path(alpha, &rows, y0, y_minus1, &theta, &mut rng);
    let unit = PanelUnit::new(format!("{}", i + 1), y0, x0, y, rows)?;
    match (y_minus1, presample) {
        (Some(ym), Some(xm)) => unit.with_lag2(ym, xm),
        _ => Ok(unit),
    }
}

/// Generates replication `rep` of any design family.
pub fn generate(spec: &DesignSpec, rep: usize) -> Result<PanelDataset> {
    spec.validate()?;
    let units = (0..spec.n)
        .into_par_iter()
        .map(|i| generate_unit(spec, rep as u64, i))
        .collect::<Result<Vec<_>>>()?;
    PanelDataset::from_units(units)
}

fn require(spec: &DesignSpec, family: DesignFamily) -> Result<()> {
    if spec.family != family {
        return Err(Error::InvalidInput(format!(
            "design family is {}, expected {}",
            spec.family.as_str(),
            family.as_str()
        )));
    }
    Ok(())
}

/// x ~ N(0, pi^2/3), alpha_i = mean of x_i0..x_iT, y0 from the static logit.
pub fn gen_benchmark(spec: &DesignSpec, rep: usize) -> Result<PanelDataset> {
    require(spec, DesignFamily::Benchmark)?;
    generate(spec, rep)
}

/// Benchmark with a standardized chi-square(1) regressor.
pub fn gen_chi2(spec: &DesignSpec, rep: usize) -> Result<PanelDataset> {
    require(spec, DesignFamily::Chi2Regressor)?;
    generate(spec, rep)
}

/// Benchmark plus three irrelevant N(0, pi^2/3) covariates.
pub fn gen_additional(spec: &DesignSpec, rep: usize) -> Result<PanelDataset> {
    require(spec, DesignFamily::AdditionalRegressors)?;
    generate(spec, rep)
}

/// x_t = phi (psi + 0.1 t + zeta_t) with zeta a stationary Gaussian AR(1), coefficient 0.5.
pub fn gen_trending(spec: &DesignSpec, rep: usize) -> Result<PanelDataset> {
    require(spec, DesignFamily::Trending)?;
    generate(spec, rep)
}
