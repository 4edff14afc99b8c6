//! Panel data types, sufficient statistics, and the long-format CSV codec.
//!
//! Files carry one row per (id, occasion). Occasion 0 holds the initial
//! observation and occasion -1 (optional) the second pre-sample response
//! used by the two-lag model. Estimation consumes occasions 1..T only.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A pre-sample occasion (time 0 or time -1): response plus its covariate row.
#[derive(Debug, Clone, PartialEq)]
pub struct Presample {
    pub y: u8,
    pub x: Vec<f64>,
}

/// One subject: initial condition(s), T responses and a T x k covariate matrix.
#[derive(Debug, Clone)]
pub struct PanelUnit {
    id: String,
    k: usize,
    initial: Presample,
    lag2: Option<Presample>,
    y: Vec<u8>,
    /// Row-major, row `t - 1` holds x_t.
    x: Vec<f64>,
    stats: OnceLock<SuffStats>,
}

impl PartialEq for PanelUnit {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id
            && self.k == other.k
            && self.initial == other.initial
            && self.lag2 == other.lag2
            && self.y == other.y
            && self.x == other.x
    }
}

impl PanelUnit {
    /// Builds a unit from its initial observation, responses and covariate rows.
    ///
    /// `x0` is the time-0 covariate row; it is kept for export but never
    /// enters estimation.
    pub fn new(
        id: impl Into<String>,
        y0: u8,
        x0: Vec<f64>,
        y: Vec<u8>,
        x_rows: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let id = id.into();
        let t = y.len();
        if t < 2 {
            return Err(Error::InvalidInput(format!(
                "unit {id}: need at least 2 occasions, got {t}"
            )));
        }
        if x_rows.len() != t {
            return Err(Error::InvalidInput(format!(
                "unit {id}: {} covariate rows for {t} responses",
                x_rows.len()
            )));
        }
        let k = x0.len();
        check_binary(&id, 0, y0)?;
        for (i, &v) in y.iter().enumerate() {
            check_binary(&id, i as i64 + 1, v)?;
        }
        let mut x = Vec::with_capacity(t * k);
        for (i, row) in x_rows.iter().enumerate() {
            if row.len() != k {
                return Err(Error::InvalidInput(format!(
                    "unit {id}, time {}: {} covariates, expected {k}",
                    i + 1,
                    row.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "unit {id}, time {}: non-finite covariate",
                    i + 1
                )));
            }
            x.extend_from_slice(row);
        }
        Ok(Self {
            id,
            k,
            initial: Presample { y: y0, x: x0 },
            lag2: None,
            y,
            x,
            stats: OnceLock::new(),
        })
    }

    /// Attaches the time -1 observation required by the two-lag model.
    pub fn with_lag2(mut self, y_minus1: u8, x_minus1: Vec<f64>) -> Result<Self> {
        check_binary(&self.id, -1, y_minus1)?;
        if x_minus1.len() != self.k {
            return Err(Error::InvalidInput(format!(
                "unit {}, time -1: {} covariates, expected {}",
                self.id,
                x_minus1.len(),
                self.k
            )));
        }
        self.lag2 = Some(Presample {
            y: y_minus1,
            x: x_minus1,
        });
        Ok(self)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    /// Number of occasions T.
    pub fn t(&self) -> usize {
        self.y.len()
    }

    /// Number of covariates k.
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn y0(&self) -> u8 {
        self.initial.y
    }

    pub fn x0(&self) -> &[f64] {
        &self.initial.x
    }

    pub fn y_minus1(&self) -> Option<u8> {
        self.lag2.as_ref().map(|p| p.y)
    }

    pub fn x_minus1(&self) -> Option<&[f64]> {
        self.lag2.as_ref().map(|p| p.x.as_slice())
    }

    /// Responses y_1..y_T.
    pub fn y(&self) -> &[u8] {
        &self.y
    }

    /// Covariate row x_t for t in 1..=T.
    pub fn x_row(&self, t: usize) -> &[f64] {
        debug_assert!(t >= 1 && t <= self.t());
        &self.x[(t - 1) * self.k..t * self.k]
    }

    /// Response bitmask: bit t-1 set iff y_t = 1.
    pub fn y_mask(&self) -> u32 {
        self.y
            .iter()
            .enumerate()
            .fold(0u32, |m, (i, &v)| m | ((v as u32) << i))
    }

    pub fn y_plus(&self) -> usize {
        self.suff_stats().y_plus
    }

    /// True when 0 < y_plus < T, i.e. the unit contributes to the conditional likelihood.
    pub fn is_informative(&self) -> bool {
        let yp = self.y_plus();
        yp > 0 && yp < self.t()
    }

    /// Cached sufficient statistics, computed on first access.
    pub fn suff_stats(&self) -> &SuffStats {
        self.stats.get_or_init(|| SuffStats::compute(self))
    }

    /// Copy of the unit with every covariate column scaled by `scale[j]` and shifted by `shift[j]`.
    pub fn map_covariates(&self, scale: &[f64], shift: &[f64]) -> Self {
        let f = |row: &[f64]| -> Vec<f64> {
            row.iter()
                .enumerate()
                .map(|(j, v)| v * scale[j] + shift[j])
                .collect()
        };
        let x = self.x.chunks(self.k.max(1)).flat_map(f).collect::<Vec<_>>();
        Self {
            id: self.id.clone(),
            k: self.k,
            initial: Presample {
                y: self.initial.y,
                x: f(&self.initial.x),
            },
            lag2: self.lag2.as_ref().map(|p| Presample {
                y: p.y,
                x: f(&p.x),
            }),
            y: self.y.clone(),
            x: if self.k == 0 { Vec::new() } else { x },
            stats: OnceLock::new(),
        }
    }
}

fn check_binary(id: &str, time: i64, v: u8) -> Result<()> {
    if v > 1 {
        return Err(Error::Ingestion(format!(
            "id {id}, time {time}: response {v} is not binary"
        )));
    }
    Ok(())
}

/// Per-unit sufficient statistics of the one-lag approximating model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuffStats {
    /// Total score sum_t y_t.
    pub y_plus: usize,
    /// sum_t y_{t-1} = y0 + y_plus - y_T.
    pub y_star: usize,
    /// sum_t y_{t-1} y_t.
    pub y_cross: usize,
    /// Rows d_t = x_t - x_1 for t = 2..T, row-major (T-1) x k.
    pub d: Vec<f64>,
    /// (sum_{t>1} y_t d_t', -0.5 y_star + y_cross)'.
    pub u: Vec<f64>,
}

impl SuffStats {
    pub fn compute(unit: &PanelUnit) -> Self {
        let t_len = unit.t();
        let k = unit.k();
        let y = unit.y();
        let y_plus = y.iter().map(|&v| v as usize).sum::<usize>();
        let y_star = unit.y0() as usize + y_plus - y[t_len - 1] as usize;
        let mut prev = unit.y0();
        let mut y_cross = 0;
        for &v in y {
            y_cross += (prev * v) as usize;
            prev = v;
        }
        let x1 = unit.x_row(1);
        let mut d = Vec::with_capacity((t_len - 1) * k);
        for t in 2..=t_len {
            d.extend(unit.x_row(t).iter().zip(x1).map(|(a, b)| a - b));
        }
        let mut u = vec![0.0; k + 1];
        for t in 2..=t_len {
            if y[t - 1] == 1 {
                for j in 0..k {
                    u[j] += d[(t - 2) * k + j];
                }
            }
        }
        u[k] = -0.5 * y_star as f64 + y_cross as f64;
        Self {
            y_plus,
            y_star,
            y_cross,
            d,
            u,
        }
    }
}

/// Structural parameters (beta, gamma) with an optional second-lag effect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theta {
    pub beta: Vec<f64>,
    pub gamma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma2: Option<f64>,
}

impl Theta {
    pub fn new(beta: Vec<f64>, gamma: f64) -> Self {
        Self {
            beta,
            gamma,
            gamma2: None,
        }
    }

    pub fn two_lag(beta: Vec<f64>, gamma: f64, gamma2: f64) -> Self {
        Self {
            beta,
            gamma,
            gamma2: Some(gamma2),
        }
    }

    pub fn zeros(k: usize) -> Self {
        Self::new(vec![0.0; k], 0.0)
    }

    pub fn k(&self) -> usize {
        self.beta.len()
    }

    /// Number of free parameters.
    pub fn dim(&self) -> usize {
        self.beta.len() + 1 + usize::from(self.gamma2.is_some())
    }

    /// Flattens to (beta', gamma[, gamma2])'.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.beta.clone();
        v.push(self.gamma);
        if let Some(g2) = self.gamma2 {
            v.push(g2);
        }
        v
    }

    /// Inverse of [`Theta::to_vec`]; `lags` is 1 or 2.
    pub fn from_slice(v: &[f64], k: usize, lags: usize) -> Self {
        debug_assert_eq!(v.len(), k + lags);
        Self {
            beta: v[..k].to_vec(),
            gamma: v[k],
            gamma2: (lags == 2).then(|| v[k + 1]),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_vec().iter().all(|v| v.is_finite())
    }

    /// Parameter labels in `to_vec` order: beta1..betak, gamma[, gamma2].
    pub fn labels(k: usize, lags: usize) -> Vec<String> {
        let mut out: Vec<String> = (1..=k).map(|j| format!("beta{j}")).collect();
        out.push("gamma".into());
        if lags == 2 {
            out.push("gamma2".into());
        }
        out
    }
}

/// A balanced panel: units sharing T and k.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset {
    units: Vec<PanelUnit>,
    labels: Vec<String>,
}

impl PanelDataset {
    pub fn new(units: Vec<PanelUnit>, labels: Vec<String>) -> Result<Self> {
        let first = units
            .first()
            .ok_or_else(|| Error::InvalidInput("dataset has no units".into()))?;
        let (t, k) = (first.t(), first.k());
        if labels.len() != k {
            return Err(Error::InvalidInput(format!(
                "{} labels for {k} covariates",
                labels.len()
            )));
        }
        for u in &units {
            if u.t() != t {
                return Err(Error::Ingestion(format!(
                    "id {}: {} occasions, expected {t} (unbalanced panels are not supported)",
                    u.id(),
                    u.t()
                )));
            }
            if u.k() != k {
                return Err(Error::Ingestion(format!(
                    "id {}: {} covariates, expected {k}",
                    u.id(),
                    u.k()
                )));
            }
        }
        Ok(Self { units, labels })
    }

    /// Dataset with default covariate labels x1..xk.
    pub fn from_units(units: Vec<PanelUnit>) -> Result<Self> {
        let k = units.first().map(|u| u.k()).unwrap_or(0);
        Self::new(units, (1..=k).map(|j| format!("x{j}")).collect())
    }

    pub fn units(&self) -> &[PanelUnit] {
        &self.units
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn n(&self) -> usize {
        self.units.len()
    }

    pub fn t(&self) -> usize {
        self.units[0].t()
    }

    pub fn k(&self) -> usize {
        self.units[0].k()
    }

    pub fn has_lag2(&self) -> bool {
        self.units.iter().all(|u| u.y_minus1().is_some())
    }

    pub fn informative_count(&self) -> usize {
        self.units.iter().filter(|u| u.is_informative()).count()
    }

    pub fn informative_fraction(&self) -> f64 {
        self.informative_count() as f64 / self.n() as f64
    }

    /// Applies [`PanelUnit::map_covariates`] to every unit.
    pub fn map_covariates(&self, scale: &[f64], shift: &[f64]) -> Self {
        Self {
            units: self
                .units
                .iter()
                .map(|u| u.map_covariates(scale, shift))
                .collect(),
            labels: self.labels.clone(),
        }
    }

    /// Keeps only the first `k` covariate columns.
    pub fn select_covariates(&self, k: usize) -> Result<Self> {
        if k > self.k() {
            return Err(Error::InvalidInput(format!(
                "cannot select {k} of {} covariates",
                self.k()
            )));
        }
        let units = self
            .units
            .iter()
            .map(|u| {
                let rows = (1..=u.t()).map(|t| u.x_row(t)[..k].to_vec()).collect();
                let base = PanelUnit::new(u.id(), u.y0(), u.x0()[..k].to_vec(), u.y().to_vec(), rows)?;
                match u.lag2.as_ref() {
                    Some(p) => base.with_lag2(p.y, p.x[..k].to_vec()),
                    None => Ok(base),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(units, self.labels[..k].to_vec())
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)
            .map_err(|e| Error::Ingestion(format!("{}: {e}", path.display())))?;
        Self::from_csv_reader(file)
    }

    /// Parses the long format `id,time,y,x1,...,xk`.
    pub fn from_csv_reader(reader: impl Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header = rdr.headers()?.clone();
        if header.len() < 3
            || &header[0] != "id"
            || &header[1] != "time"
            || &header[2] != "y"
        {
            return Err(Error::Ingestion(
                "header must start with id,time,y followed by covariate names".into(),
            ));
        }
        let labels: Vec<String> = header.iter().skip(3).map(str::to_string).collect();
        let k = labels.len();

        struct Row {
            time: i64,
            y: u8,
            x: Vec<f64>,
        }
        let mut order: Vec<String> = Vec::new();
        let mut rows: HashMap<String, Vec<Row>> = HashMap::new();
        for rec in rdr.records() {
            let rec = rec?;
            let id = rec.get(0).unwrap_or("").to_string();
            let time_str = rec.get(1).unwrap_or("");
            let time: i64 = time_str.parse().map_err(|_| {
                Error::Ingestion(format!("id {id}: invalid time '{time_str}'"))
            })?;
            if rec.len() != k + 3 {
                return Err(Error::Ingestion(format!(
                    "id {id}, time {time}: {} covariates, expected {k}",
                    rec.len().saturating_sub(3)
                )));
            }
            let y_str = &rec[2];
            let y = match y_str {
                "0" => 0u8,
                "1" => 1u8,
                other => {
                    return Err(Error::Ingestion(format!(
                        "id {id}, time {time}: response '{other}' is not binary"
                    )))
                }
            };
            let x = rec
                .iter()
                .skip(3)
                .enumerate()
                .map(|(j, s)| {
                    s.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| {
                            Error::Ingestion(format!(
                                "id {id}, time {time}: invalid value '{s}' for {}",
                                labels[j]
                            ))
                        })
                })
                .collect::<Result<Vec<f64>>>()?;
            if !rows.contains_key(&id) {
                order.push(id.clone());
            }
            rows.entry(id).or_default().push(Row { time, y, x });
        }

        let mut units = Vec::with_capacity(order.len());
        for id in order {
            let mut r = rows.remove(&id).unwrap_or_default();
            r.sort_by_key(|row| row.time);
            for w in r.windows(2) {
                if w[0].time == w[1].time {
                    return Err(Error::Ingestion(format!(
                        "id {id}: duplicate occasion {}",
                        w[0].time
                    )));
                }
            }
            let start = r[0].time;
            if start != 0 && start != -1 {
                return Err(Error::Ingestion(format!(
                    "id {id}: missing occasion 0 (first occasion is {start})"
                )));
            }
            for (i, row) in r.iter().enumerate() {
                let expected = start + i as i64;
                if row.time != expected {
                    return Err(Error::Ingestion(format!(
                        "id {id}: missing occasion {expected}"
                    )));
                }
            }
            let mut it = r.into_iter();
            let lag2 = if start == -1 { it.next() } else { None };
            let init = it
                .next()
                .ok_or_else(|| Error::Ingestion(format!("id {id}: missing occasion 0")))?;
            let rest: Vec<Row> = it.collect();
            if rest.len() < 2 {
                return Err(Error::Ingestion(format!(
                    "id {id}: need occasions 1..T with T >= 2, got T = {}",
                    rest.len()
                )));
            }
            let y = rest.iter().map(|r| r.y).collect();
            let x = rest.into_iter().map(|r| r.x).collect();
            let mut unit = PanelUnit::new(id.clone(), init.y, init.x, y, x)
                .map_err(|e| Error::Ingestion(e.to_string()))?;
            if let Some(l) = lag2 {
                unit = unit.with_lag2(l.y, l.x)?;
            }
            units.push(unit);
        }
        if units.is_empty() {
            return Err(Error::Ingestion("file contains no observations".into()));
        }
        Self::new(units, labels)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.to_csv_writer(std::io::BufWriter::new(file))
    }

    /// Writes the long format read by [`PanelDataset::from_csv_reader`].
    pub fn to_csv_writer(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["id".to_string(), "time".into(), "y".into()];
        header.extend(self.labels.iter().cloned());
        w.write_record(&header)?;
        let mut record: Vec<String> = Vec::with_capacity(header.len());
        let mut emit = |w: &mut csv::Writer<_>, id: &str, time: i64, y: u8, x: &[f64]| {
            record.clear();
            record.push(id.to_string());
            record.push(time.to_string());
            record.push(y.to_string());
            record.extend(x.iter().map(|v| v.to_string()));
            w.write_record(&record)
        };
        for u in &self.units {
            if let Some(p) = &u.lag2 {
                emit(&mut w, u.id(), -1, p.y, &p.x)?;
            }
            emit(&mut w, u.id(), 0, u.y0(), u.x0())?;
            for t in 1..=u.t() {
                emit(&mut w, u.id(), t as i64, u.y[t - 1], u.x_row(t))?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.to_csv_writer(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }
}

/// Outcome of a conditional ML fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub theta_hat: Theta,
    pub labels: Vec<String>,
    /// sqrt of the diagonal of info^{-1}.
    pub se: Vec<f64>,
    /// Observed information J(theta_hat) = n * I_hat.
    pub info: Vec<Vec<f64>>,
    pub loglik: f64,
    pub loglik_trace: Vec<f64>,
    pub iterations: usize,
    /// Contributing units (pairs, for the weighted estimator).
    pub actual_n: usize,
    /// Nominal count `actual_n` is measured against.
    pub nominal_n: usize,
    pub converged: bool,
    /// Final beta_bar of the improved estimator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_bar: Option<Vec<f64>>,
}

impl FitResult {
    pub fn actual_ratio(&self) -> f64 {
        self.actual_n as f64 / self.nominal_n as f64
    }

    pub fn estimates(&self) -> Vec<f64> {
        self.theta_hat.to_vec()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(y0: u8, y: &[u8], x: &[f64]) -> PanelUnit {
        PanelUnit::new(
            "u",
            y0,
            vec![0.0],
            y.to_vec(),
            x.iter().map(|&v| vec![v]).collect(),
        )
        .unwrap()
    }

    #[test]
    fn suff_stats_direct_counts() {
        let s = unit(0, &[0, 1, 1], &[0.0, 0.0, 0.0]).suff_stats().clone();
        assert_eq!((s.y_plus, s.y_star, s.y_cross), (2, 1, 1));

        let s = unit(1, &[1, 1, 1], &[0.0, 0.0, 0.0]).suff_stats().clone();
        assert_eq!((s.y_plus, s.y_star, s.y_cross), (3, 3, 3));
    }

    #[test]
    fn suff_stats_u_by_literal_summation() {
        // y0=0, y=(1,0,1), x=(0,1,2): d_2 = 1, d_3 = 2.
        let s = unit(0, &[1, 0, 1], &[0.0, 1.0, 2.0]).suff_stats().clone();
        let lit_beta = 0.0 * 1.0 + 1.0 * 2.0;
        let lit_gamma = -0.5 * (0.0 + 2.0 - 1.0) + 0.0;
        assert_eq!(s.u, vec![lit_beta, lit_gamma]);
        assert_eq!(s.d, vec![1.0, 2.0]);
    }

    #[test]
    fn shift_leaves_u_unchanged() {
        let u = unit(1, &[1, 0, 1, 1], &[0.3, -1.2, 2.5, 0.7]);
        let shifted = u.map_covariates(&[1.0], &[4.25]);
        let (a, b) = (u.suff_stats(), shifted.suff_stats());
        for (p, q) in a.u.iter().zip(&b.u) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_short_panels_and_non_binary() {
        assert!(PanelUnit::new("a", 0, vec![], vec![1], vec![vec![]]).is_err());
        assert!(PanelUnit::new("a", 2, vec![], vec![1, 0], vec![vec![], vec![]]).is_err());
    }

    #[test]
    fn ingest_shape() {
        let csv = "id,time,y,x1\n\
                   1,0,0,0.1\n1,1,1,0.2\n1,2,0,0.3\n1,3,1,0.4\n\
                   2,0,1,1.1\n2,1,1,1.2\n2,2,0,1.3\n2,3,0,1.4\n";
        let ds = PanelDataset::from_csv_reader(csv.as_bytes()).unwrap();
        assert_eq!((ds.n(), ds.t(), ds.k()), (2, 3, 1));
        assert_eq!(ds.units()[1].x_row(2), &[1.3]);
        assert_eq!(ds.units()[0].x0(), &[0.1]);
    }

    #[test]
    fn ingest_sorts_rows_by_time() {
        let csv = "id,time,y,x1\n1,2,0,0.3\n1,0,0,0.1\n1,1,1,0.2\n";
        let ds = PanelDataset::from_csv_reader(csv.as_bytes()).unwrap();
        assert_eq!(ds.units()[0].y(), &[1, 0]);
    }

    #[test]
    fn ingest_rejects_non_binary_with_location() {
        let csv = "id,time,y,x1\n7,0,0,0\n7,1,2,0\n7,2,0,0\n";
        let err = PanelDataset::from_csv_reader(csv.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("id 7") && err.contains("time 1"), "{err}");
    }

    #[test]
    fn ingest_rejects_gaps() {
        let csv = "id,time,y,x1\n1,0,0,0\n1,1,1,0\n1,3,0,0\n";
        let err = PanelDataset::from_csv_reader(csv.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("missing occasion 2"), "{err}");
    }

    #[test]
    fn ingest_rejects_ragged_k_and_unbalanced() {
        let csv = "id,time,y,x1\n1,0,0,0\n1,1,1,0,5\n1,2,0,0\n";
        let err = PanelDataset::from_csv_reader(csv.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("id 1, time 1"), "{err}");

        let csv = "id,time,y,x1\n1,0,0,0\n1,1,1,0\n1,2,0,0\n2,0,0,0\n2,1,1,0\n2,2,0,0\n2,3,1,0\n";
        assert!(PanelDataset::from_csv_reader(csv.as_bytes()).is_err());
    }

    #[test]
    fn ingest_lag2_row() {
        let csv = "id,time,y,x1\n1,-1,1,9\n1,0,0,0\n1,1,1,0\n1,2,0,0\n1,3,1,0\n";
        let ds = PanelDataset::from_csv_reader(csv.as_bytes()).unwrap();
        assert!(ds.has_lag2());
        assert_eq!(ds.units()[0].y_minus1(), Some(1));
        assert_eq!(ds.to_csv_string().unwrap(), csv);
    }

    #[test]
    fn theta_flattening() {
        let th = Theta::two_lag(vec![1.0, 2.0], 0.5, -0.25);
        let v = th.to_vec();
        assert_eq!(v, vec![1.0, 2.0, 0.5, -0.25]);
        assert_eq!(Theta::from_slice(&v, 2, 2), th);
        assert_eq!(Theta::labels(2, 2), vec!["beta1", "beta2", "gamma", "gamma2"]);
    }
}
