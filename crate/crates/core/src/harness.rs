//! Monte-Carlo replication: simulate, fit, and aggregate bias, RMSE, median
//! bias, MAE and interval coverage per estimator and parameter.

use std::fmt::Write as _;
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{FitResult, PanelDataset, Theta};
use crate::dgp::{generate, DesignSpec};
use crate::error::{Error, Result};
use crate::estimators::{
    fit_basic, fit_improved, fit_two_lag, normal_critical_value, ImprovedMode, SolverConfig,
    TwoLagMode,
};
use crate::hk::{fit_hk, KernelSpec};

/// Share of failed replications above which a run is flagged.
pub const FAILURE_FLAG_RATE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Basic,
    /// Improved approximation with beta_bar following beta, seeded by the basic fit.
    Improved,
    Hk,
    TwoLag,
}

impl EstimatorKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EstimatorKind::Basic => "basic",
            EstimatorKind::Improved => "improved",
            EstimatorKind::Hk => "hk",
            EstimatorKind::TwoLag => "two_lag",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "basic" => Some(Self::Basic),
            "improved" => Some(Self::Improved),
            "hk" => Some(Self::Hk),
            "two_lag" | "two-lag" => Some(Self::TwoLag),
            _ => None,
        }
    }

    /// Comma-separated list, e.g. "basic,improved,hk".
    pub fn parse_list(s: &str) -> Result<Vec<Self>> {
        let mut out = Vec::new();
        for part in s.split(',').filter(|p| !p.trim().is_empty()) {
            let e = Self::parse(part)
                .ok_or_else(|| Error::InvalidInput(format!("unknown estimator '{}'", part.trim())))?;
            if !out.contains(&e) {
                out.push(e);
            }
        }
        if out.is_empty() {
            return Err(Error::InvalidInput("no estimators requested".into()));
        }
        Ok(out)
    }
}

/// Estimator settings shared by every replication.
#[derive(Debug, Clone, Default)]
pub struct HarnessOptions {
    pub solver: SolverConfig,
    pub kernel: KernelSpec,
    pub two_lag: Option<TwoLagMode>,
}

impl HarnessOptions {
    fn two_lag_mode(&self) -> TwoLagMode {
        self.two_lag
            .clone()
            .unwrap_or(TwoLagMode::Improved(ImprovedMode::Dynamic))
    }
}

/// Fits one estimator with the harness settings.
pub fn fit_estimator(
    data: &PanelDataset,
    estimator: EstimatorKind,
    options: &HarnessOptions,
) -> Result<FitResult> {
    match estimator {
        EstimatorKind::Basic => fit_basic(data, &options.solver),
        EstimatorKind::Improved => fit_improved(data, &ImprovedMode::Dynamic, &options.solver),
        EstimatorKind::Hk => fit_hk(data, &options.kernel, &options.solver),
        EstimatorKind::TwoLag => fit_two_lag(data, &options.two_lag_mode(), &options.solver),
    }
}

/// One estimate of one parameter in one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub rep: usize,
    pub estimator: EstimatorKind,
    pub parameter: String,
    pub truth: f64,
    pub estimate: f64,
    pub se: f64,
    pub covered95: bool,
    pub covered80: bool,
    pub actual_ratio: f64,
    pub converged: bool,
}

/// Aggregate performance of one estimator for one parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub family: String,
    pub n: usize,
    #[serde(rename = "T")]
    pub t: usize,
    pub gamma: f64,
    pub estimator: EstimatorKind,
    pub parameter: String,
    pub mean_bias: f64,
    pub rmse: f64,
    pub median_bias: f64,
    pub mae: f64,
    pub coverage95: f64,
    pub coverage80: f64,
    pub actual_ratio: f64,
    pub replications: usize,
    pub failures: usize,
    pub flagged: bool,
}

/// (family, n, T, gamma bits).
type DesignKey = (String, usize, usize, u64);

impl MetricRow {
    fn design_key(&self) -> DesignKey {
        (self.family.clone(), self.n, self.t, self.gamma.to_bits())
    }
}

#[derive(Debug, Clone)]
pub struct DesignRun {
    pub spec: DesignSpec,
    pub records: Vec<ReplicationRecord>,
    pub rows: Vec<MetricRow>,
}

impl DesignRun {
    pub fn row(&self, estimator: EstimatorKind, parameter: &str) -> Option<&MetricRow> {
        self.rows
            .iter()
            .find(|r| r.estimator == estimator && r.parameter == parameter)
    }
}

fn truth_for(spec: &DesignSpec, estimator: EstimatorKind) -> Theta {
    let mut th = spec.true_theta();
    if estimator == EstimatorKind::TwoLag {
        th.gamma2 = Some(spec.gamma2);
    }
    th
}

fn lags(estimator: EstimatorKind) -> usize {
    if estimator == EstimatorKind::TwoLag {
        2
    } else {
        1
    }
}

fn replicate_once(
    spec: &DesignSpec,
    rep: usize,
    estimators: &[EstimatorKind],
    options: &HarnessOptions,
    z95: f64,
    z80: f64,
) -> Result<Vec<ReplicationRecord>> {
    let data = generate(spec, rep)?;
    let mut out = Vec::new();
    for &est in estimators {
        let truth = truth_for(spec, est).to_vec();
        let labels = Theta::labels(spec.k(), lags(est));
        match fit_estimator(&data, est, options) {
            Ok(fit) => {
                let ratio = fit.actual_ratio();
                for (j, label) in labels.into_iter().enumerate() {
                    let (e, se, th) = (fit.estimates()[j], fit.se[j], truth[j]);
                    out.push(ReplicationRecord {
                        rep,
                        estimator: est,
                        parameter: label,
                        truth: th,
                        estimate: e,
                        se,
                        covered95: (e - th).abs() <= z95 * se,
                        covered80: (e - th).abs() <= z80 * se,
                        actual_ratio: ratio,
                        converged: true,
                    });
                }
            }
            Err(Error::NonConvergence { .. } | Error::NotIdentified { .. })
            | Err(Error::NoInformativeUnits | Error::NoInformativePairs) => {
                for (j, label) in labels.into_iter().enumerate() {
                    out.push(ReplicationRecord {
                        rep,
                        estimator: est,
                        parameter: label,
                        truth: truth[j],
                        estimate: f64::NAN,
                        se: f64::NAN,
                        covered95: false,
                        covered80: false,
                        actual_ratio: f64::NAN,
                        converged: false,
                    });
                }
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Runs every replication of `spec` and aggregates. `threads` bounds the
/// worker pool; results do not depend on it.
pub fn run_design(
    spec: &DesignSpec,
    estimators: &[EstimatorKind],
    options: &HarnessOptions,
    threads: Option<usize>,
) -> Result<DesignRun> {
    spec.validate()?;
    if spec.replications == 0 {
        return Err(Error::InvalidInput("replications must be at least 1".into()));
    }
    if estimators.is_empty() {
        return Err(Error::InvalidInput("no estimators requested".into()));
    }
    let z95 = normal_critical_value(0.95)?;
    let z80 = normal_critical_value(0.80)?;
    let work = || {
        (0..spec.replications)
            .into_par_iter()
            .map(|rep| replicate_once(spec, rep, estimators, options, z95, z80))
            .collect::<Result<Vec<_>>>()
    };
    let per_rep = match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?
            .install(work)?,
        None => work()?,
    };
    let records: Vec<ReplicationRecord> = per_rep.into_iter().flatten().collect();
    let rows = aggregate(spec, &records)?;
    Ok(DesignRun {
        spec: spec.clone(),
        records,
        rows,
    })
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Metrics from per-replication records, grouped by estimator and parameter
/// in order of first appearance.
pub fn aggregate(spec: &DesignSpec, records: &[ReplicationRecord]) -> Result<Vec<MetricRow>> {
    let mut keys: Vec<(EstimatorKind, String)> = Vec::new();
    for r in records {
        if !keys.iter().any(|(e, p)| *e == r.estimator && *p == r.parameter) {
            keys.push((r.estimator, r.parameter.clone()));
        }
    }
    let mut rows = Vec::new();
    for (est, param) in keys {
        let mut group: Vec<&ReplicationRecord> = records
            .iter()
            .filter(|r| r.estimator == est && r.parameter == param)
            .collect();
        group.sort_by_key(|r| r.rep);
        let ok: Vec<&ReplicationRecord> = group.iter().copied().filter(|r| r.converged).collect();
        let failures = group.len() - ok.len();
        let m = ok.len() as f64;
        let errs: Vec<f64> = ok.iter().map(|r| r.estimate - r.truth).collect();
        let mean_bias = errs.iter().sum::<f64>() / m;
        let rmse = (errs.iter().map(|e| e * e).sum::<f64>() / m).sqrt();
        let (median_bias, mae) = if ok.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            let mut e = errs.clone();
            let mut a: Vec<f64> = errs.iter().map(|v| v.abs()).collect();
            (median(&mut e), median(&mut a))
        };
        let rate = |f: fn(&ReplicationRecord) -> bool| {
            ok.iter().filter(|r| f(r)).count() as f64 / m
        };
        rows.push(MetricRow {
            family: spec.family.as_str().to_string(),
            n: spec.n,
            t: spec.t,
            gamma: spec.gamma,
            estimator: est,
            parameter: param,
            mean_bias,
            rmse,
            median_bias,
            mae,
            coverage95: rate(|r| r.covered95),
            coverage80: rate(|r| r.covered80),
            actual_ratio: ok.iter().map(|r| r.actual_ratio).sum::<f64>() / m,
            replications: ok.len(),
            failures,
            flagged: failures as f64 > FAILURE_FLAG_RATE * group.len() as f64,
        });
    }
    Ok(rows)
}

/// Percentage reductions from the left estimator to the right one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reduction {
    pub family: String,
    pub n: usize,
    #[serde(rename = "T")]
    pub t: usize,
    pub gamma: f64,
    pub parameter: String,
    pub left: EstimatorKind,
    pub right: EstimatorKind,
    /// 1 - |median_bias_right| / |median_bias_left|.
    pub median_bias_reduction: f64,
    /// 1 - mae_right / mae_left.
    pub mae_reduction: f64,
}

fn reduction(left: f64, right: f64) -> f64 {
    if left == right {
        0.0
    } else {
        1.0 - right / left
    }
}

/// Matches rows on (design, parameter). Each side must hold exactly one
/// estimator per key, and both sides the same set of keys.
pub fn compare_estimators(left: &[MetricRow], right: &[MetricRow]) -> Result<Vec<Reduction>> {
    let index = |rows: &[MetricRow], side: &str| -> Result<Vec<(DesignKey, String)>> {
        let mut keys = Vec::new();
        for r in rows {
            let k = (r.design_key(), r.parameter.clone());
            if keys.contains(&k) {
                return Err(Error::Refused(format!(
                    "{side} rows hold more than one estimator for {} {}",
                    r.family, r.parameter
                )));
            }
            keys.push(k);
        }
        Ok(keys)
    };
    let lk = index(left, "left")?;
    let rk = index(right, "right")?;
    if lk.is_empty() || lk.len() != rk.len() || lk.iter().any(|k| !rk.contains(k)) {
        return Err(Error::Refused(
            "left and right rows do not cover the same designs and parameters".into(),
        ));
    }
    let mut out = Vec::new();
    for l in left {
        let r = right
            .iter()
            .find(|r| r.design_key() == l.design_key() && r.parameter == l.parameter)
            .expect("key sets are equal");
        out.push(Reduction {
            family: l.family.clone(),
            n: l.n,
            t: l.t,
            gamma: l.gamma,
            parameter: l.parameter.clone(),
            left: l.estimator,
            right: r.estimator,
            median_bias_reduction: reduction(l.median_bias.abs(), r.median_bias.abs()),
            mae_reduction: reduction(l.mae, r.mae),
        });
    }
    Ok(out)
}

/// Rows of one estimator.
pub fn select_estimator(rows: &[MetricRow], estimator: EstimatorKind) -> Vec<MetricRow> {
    rows.iter().filter(|r| r.estimator == estimator).cloned().collect()
}

fn write_csv_rows<T: Serialize>(rows: &[T], writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn read_csv_rows<T: for<'de> Deserialize<'de>>(reader: impl Read) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_reader(reader);
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub fn write_metric_rows(rows: &[MetricRow], writer: impl Write) -> Result<()> {
    write_csv_rows(rows, writer)
}

pub fn read_metric_rows(reader: impl Read) -> Result<Vec<MetricRow>> {
    read_csv_rows(reader)
}

pub fn write_records(records: &[ReplicationRecord], writer: impl Write) -> Result<()> {
    write_csv_rows(records, writer)
}

pub fn read_records(reader: impl Read) -> Result<Vec<ReplicationRecord>> {
    read_csv_rows(reader)
}

pub fn write_reductions(rows: &[Reduction], writer: impl Write) -> Result<()> {
    write_csv_rows(rows, writer)
}

/// Fixed-width table in the layout of the simulation tables.
pub fn metric_table(rows: &[MetricRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<24} {:<9} {:<7} {:>9} {:>9} {:>9} {:>9} {:>7} {:>7} {:>7} {:>6}",
        "design", "estimator", "param", "mean bias", "rmse", "med bias", "mae", "cov95", "cov80",
        "ratio", "fail"
    );
    for r in rows {
        let design = format!("{} T={} n={} g={}", r.family, r.t, r.n, r.gamma);
        let _ = writeln!(
            s,
            "{:<24} {:<9} {:<7} {:>9.3} {:>9.3} {:>9.3} {:>9.3} {:>7.3} {:>7.3} {:>6.0}% {:>5}{}",
            design,
            r.estimator.as_str(),
            r.parameter,
            r.mean_bias,
            r.rmse,
            r.median_bias,
            r.mae,
            r.coverage95,
            r.coverage80,
            100.0 * r.actual_ratio,
            r.failures,
            if r.flagged { " !" } else { "" }
        );
    }
    s
}

pub fn reduction_table(rows: &[Reduction]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<24} {:<7} {:<19} {:>10} {:>8}",
        "design", "param", "left -> right", "med bias", "mae"
    );
    for r in rows {
        let design = format!("{} T={} n={} g={}", r.family, r.t, r.n, r.gamma);
        let _ = writeln!(
            s,
            "{:<24} {:<7} {:<19} {:>9.0}% {:>7.0}%",
            design,
            r.parameter,
            format!("{} -> {}", r.left.as_str(), r.right.as_str()),
            100.0 * r.median_bias_reduction,
            100.0 * r.mae_reduction
        );
    }
    s
}
