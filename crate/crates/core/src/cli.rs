//! Command-line front end: `fit`, `simulate`, `replicate`, `compare`.
//!
//! Exit codes: 0 success, 1 bad input, 2 identification failure,
//! 3 non-convergence.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::data::{FitResult, PanelDataset};
use crate::dgp::{generate, DesignSpec};
use crate::error::{Error, Result};
use crate::estimators::{confidence_interval, fit_basic, fit_improved, ImprovedMode, SolverConfig};
use crate::harness::{
    compare_estimators, fit_estimator, metric_table, read_metric_rows, reduction_table,
    run_design, select_estimator, write_metric_rows, write_records, write_reductions,
    EstimatorKind, HarnessOptions,
};
use crate::hk::{KernelKind, KernelSpec, PairRange};

#[derive(Debug, Parser)]
#[command(name = "dynlogit", version, about = "Fixed-effects dynamic logit estimation and Monte-Carlo replication")]
pub struct Cli {
    /// Overrides the seed of the design file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores). Never changes results.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Destination of the main output (default: stdout).
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
    Table,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate a model on a panel CSV.
    Fit(FitArgs),
    /// Write one simulated panel.
    Simulate(SimulateArgs),
    /// Monte-Carlo replication of a design.
    Replicate(ReplicateArgs),
    /// Percentage reductions in median bias and MAE between two sets of rows.
    Compare(CompareArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EstimatorArg {
    Basic,
    Improved,
    Hk,
    TwoLag,
}

impl From<EstimatorArg> for EstimatorKind {
    fn from(e: EstimatorArg) -> Self {
        match e {
            EstimatorArg::Basic => EstimatorKind::Basic,
            EstimatorArg::Improved => EstimatorKind::Improved,
            EstimatorArg::Hk => EstimatorKind::Hk,
            EstimatorArg::TwoLag => EstimatorKind::TwoLag,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KernelArg {
    Gaussian,
    Uniform,
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PairsArg {
    Interior,
    Strict,
}

#[derive(Debug, Args)]
pub struct KernelArgs {
    /// Kernel of the weighted pairwise estimator.
    #[arg(long, value_enum, default_value_t = KernelArg::Gaussian)]
    pub kernel: KernelArg,
    /// Bandwidth constant as a multiple of sd(x_2 - x_3).
    #[arg(long, default_value_t = 8.0)]
    pub bandwidth_scale: f64,
    /// Occasion pairs: interior (0<s<t<T) or strict (1<s<t<T).
    #[arg(long, value_enum, default_value_t = PairsArg::Interior)]
    pub pairs: PairsArg,
}

impl KernelArgs {
    fn spec(&self) -> Result<KernelSpec> {
        if !(self.bandwidth_scale > 0.0) {
            return Err(Error::InvalidInput("--bandwidth-scale must be positive".into()));
        }
        Ok(KernelSpec {
            kernel: match self.kernel {
                KernelArg::Gaussian => KernelKind::GaussianProduct,
                KernelArg::Uniform => KernelKind::UniformWindow,
                KernelArg::Exact => KernelKind::ExactMatch,
            },
            scale: self.bandwidth_scale,
            c: None,
            pairs: match self.pairs {
                PairsArg::Interior => PairRange::Interior,
                PairsArg::Strict => PairRange::Strict,
            },
        })
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum)]
    pub estimator: EstimatorArg,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    /// Hold beta_bar fixed (improved estimator only), e.g. `0.5,-1`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub fixed_beta_bar: Option<Vec<f64>>,
    #[command(flatten)]
    pub kernel: KernelArgs,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub design: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub rep: usize,
    /// Panel CSV destination (default: --output, else stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReplicateArgs {
    #[arg(long)]
    pub design: PathBuf,
    /// Comma-separated: basic, improved, hk, two-lag.
    #[arg(long, default_value = "basic,improved")]
    pub estimators: String,
    /// Overrides the replication count of the design file.
    #[arg(long)]
    pub reps: Option<usize>,
    /// Also write the per-replication estimate log as CSV.
    #[arg(long)]
    pub per_rep: Option<PathBuf>,
    #[command(flatten)]
    pub kernel: KernelArgs,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Aggregate CSV of the reference estimator.
    #[arg(long)]
    pub left: PathBuf,
    #[arg(long)]
    pub right: PathBuf,
    /// Keep only this estimator's rows from --left.
    #[arg(long, value_enum)]
    pub left_estimator: Option<EstimatorArg>,
    #[arg(long, value_enum)]
    pub right_estimator: Option<EstimatorArg>,
}

/// Parameter line of a fit report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParameterReport {
    pub parameter: String,
    pub estimate: f64,
    pub se: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitReport {
    pub level: f64,
    pub parameters: Vec<ParameterReport>,
    pub loglik: f64,
    pub actual_n: usize,
    pub nominal_n: usize,
    pub iterations: usize,
    pub converged: bool,
}

impl FitReport {
    pub fn new(fit: &FitResult, level: f64) -> Result<Self> {
        let ci = confidence_interval(fit, level)?;
        Ok(Self {
            level,
            parameters: ci
                .iter()
                .zip(&fit.se)
                .map(|(c, se)| ParameterReport {
                    parameter: c.parameter.clone(),
                    estimate: c.estimate,
                    se: *se,
                    lower: c.lower,
                    upper: c.upper,
                })
                .collect(),
            loglik: fit.loglik,
            actual_n: fit.actual_n,
            nominal_n: fit.nominal_n,
            iterations: fit.iterations,
            converged: fit.converged,
        })
    }

    fn table(&self) -> String {
        let mut s = format!(
            "{:<8} {:>10} {:>10} {:>10} {:>10}\n",
            "param",
            "estimate",
            "se",
            format!("lo{:.0}", 100.0 * self.level),
            format!("hi{:.0}", 100.0 * self.level)
        );
        for p in &self.parameters {
            s += &format!(
                "{:<8} {:>10.4} {:>10.4} {:>10.4} {:>10.4}\n",
                p.parameter, p.estimate, p.se, p.lower, p.upper
            );
        }
        s += &format!(
            "loglik {:.6}  units {}/{}  iterations {}\n",
            self.loglik, self.actual_n, self.nominal_n, self.iterations
        );
        s
    }
}

/// Process exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::NotIdentified { .. } => 2,
        Error::NonConvergence { .. } => 3,
        _ => 1,
    }
}

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn emit<T: Serialize>(
    cli: &Cli,
    rows: &[T],
    csv: impl FnOnce(&[T], &mut dyn Write) -> Result<()>,
    table: impl FnOnce(&[T]) -> String,
) -> Result<()> {
    let mut out = sink(cli.output.as_deref())?;
    match cli.format {
        Format::Csv => csv(rows, &mut out)?,
        Format::Json => writeln!(out, "{}", serde_json::to_string_pretty(rows)?)?,
        Format::Table => write!(out, "{}", table(rows))?,
    }
    out.flush()?;
    Ok(())
}

fn load_design(cli: &Cli, path: &Path) -> Result<DesignSpec> {
    let mut spec = DesignSpec::read_json(path)?;
    if let Some(seed) = cli.seed {
        spec.seed = seed;
    }
    spec.validate()?;
    Ok(spec)
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match threads {
        Some(0) => Err(Error::InvalidInput("--threads must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?
            .install(f),
        None => f(),
    }
}

fn cmd_fit(cli: &Cli, args: &FitArgs) -> Result<()> {
    if !(args.level > 0.0 && args.level < 1.0) {
        return Err(Error::InvalidInput("--level must lie in (0, 1)".into()));
    }
    let kernel = args.kernel.spec()?;
    let data = PanelDataset::read_csv(&args.data)?;
    let fit = with_threads(cli.threads, || {
        let solver = SolverConfig::default();
        match (args.estimator, &args.fixed_beta_bar) {
            (EstimatorArg::Improved, Some(b)) => {
                fit_improved(&data, &ImprovedMode::Fixed(b.clone()), &solver)
            }
            (_, Some(_)) => Err(Error::InvalidInput(
                "--fixed-beta-bar applies to the improved estimator only".into(),
            )),
            (EstimatorArg::Basic, None) => fit_basic(&data, &solver),
            (e, None) => {
                let options = HarnessOptions {
                    solver,
                    kernel,
                    two_lag: None,
                };
                fit_estimator(&data, e.into(), &options)
            }
        }
    })?;
    let report = FitReport::new(&fit, args.level)?;
    let mut out = sink(cli.output.as_deref())?;
    match cli.format {
        Format::Json => writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?,
        Format::Csv => {
            let mut w = csv::Writer::from_writer(&mut out);
            for p in &report.parameters {
                w.serialize(p)?;
            }
            w.flush()?;
        }
        Format::Table => write!(out, "{}", report.table())?,
    }
    out.flush()?;
    Ok(())
}

fn cmd_simulate(cli: &Cli, args: &SimulateArgs) -> Result<()> {
    let spec = load_design(cli, &args.design)?;
    let data = with_threads(cli.threads, || generate(&spec, args.rep))?;
    let dest = args.out.as_deref().or(cli.output.as_deref());
    let mut out = sink(dest)?;
    data.to_csv_writer(&mut out)?;
    out.flush()?;
    let msg = format!("informative fraction: {:.4}", data.informative_fraction());
    if dest.is_some() {
        println!("{msg}");
    } else {
        eprintln!("{msg}");
    }
    Ok(())
}

fn cmd_replicate(cli: &Cli, args: &ReplicateArgs) -> Result<()> {
    let mut spec = load_design(cli, &args.design)?;
    if let Some(r) = args.reps {
        if r == 0 {
            return Err(Error::InvalidInput("--reps must be at least 1".into()));
        }
        spec.replications = r;
    }
    if cli.threads == Some(0) {
        return Err(Error::InvalidInput("--threads must be at least 1".into()));
    }
    let estimators = EstimatorKind::parse_list(&args.estimators)?;
    let options = HarnessOptions {
        kernel: args.kernel.spec()?,
        ..HarnessOptions::default()
    };
    let run = run_design(&spec, &estimators, &options, cli.threads)?;
    if let Some(p) = &args.per_rep {
        let mut w = sink(Some(p))?;
        write_records(&run.records, &mut w)?;
        w.flush()?;
    }
    for r in run.rows.iter().filter(|r| r.flagged) {
        eprintln!(
            "warning: {} failed in {} of {} replications",
            r.estimator.as_str(),
            r.failures,
            r.failures + r.replications
        );
    }
    emit(cli, &run.rows, |r, w| write_metric_rows(r, w), metric_table)
}

fn cmd_compare(cli: &Cli, args: &CompareArgs) -> Result<()> {
    let read = |p: &Path, e: Option<EstimatorArg>| -> Result<_> {
        let rows = read_metric_rows(BufReader::new(File::open(p)?))?;
        Ok(match e {
            Some(e) => select_estimator(&rows, e.into()),
            None => rows,
        })
    };
    let left = read(&args.left, args.left_estimator)?;
    let right = read(&args.right, args.right_estimator)?;
    let red = compare_estimators(&left, &right)?;
    emit(cli, &red, |r, w| write_reductions(r, w), reduction_table)
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let res = match &cli.command {
        Command::Fit(a) => cmd_fit(&cli, a),
        Command::Simulate(a) => cmd_simulate(&cli, a),
        Command::Replicate(a) => cmd_replicate(&cli, a),
        Command::Compare(a) => cmd_compare(&cli, a),
    };
    match res {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
