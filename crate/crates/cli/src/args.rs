use std::path::PathBuf;

use cellrobust::breakdown::LocationEstimator;
use cellrobust::ca::KChoice;
use cellrobust::detect::DEFAULT_CUTOFF;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "cellrobust", version, about = "Cellwise-robust multivariate statistics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Flag outlying cells of a numeric CSV.
    Detect(DetectArgs),
    /// Estimate location and scatter.
    Estimate(EstimateArgs),
    /// Plug-in linear regression of one column on the others.
    Regress(RegressArgs),
    /// Fit an autoregressive model to a single series.
    Arfit(ArfitArgs),
    /// Breakdown attacks and empirical breakdown curves.
    #[command(subcommand)]
    Breakdown(BreakdownCommand),
    /// Classical or cellwise-robust correspondence analysis.
    Ca(CaArgs),
    /// Generate synthetic data sets.
    #[command(subcommand)]
    Simulate(SimulateCommand),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DetectMethod {
    Univariate,
    Ddc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScaleArg {
    Mad,
    Qn,
}

/// Options shared by every command that runs a cell detector.
#[derive(Debug, Clone, Args)]
pub struct DetectorArgs {
    /// Detector used by the two-step estimator.
    #[arg(long, value_enum, default_value_t = DetectMethod::Ddc)]
    pub detector: DetectMethod,
    /// Cutoff on absolute standardized residuals.
    #[arg(long, default_value_t = DEFAULT_CUTOFF)]
    pub cutoff: f64,
    /// Robust scale of the pairwise estimator.
    #[arg(long, value_enum, default_value_t = ScaleArg::Mad)]
    pub scale: ScaleArg,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[arg(long, value_enum, default_value_t = DetectMethod::Ddc)]
    pub method: DetectMethod,
    #[arg(long, default_value_t = DEFAULT_CUTOFF)]
    pub cutoff: f64,
    #[arg(long = "in")]
    pub input: PathBuf,
    /// JSON result; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Cellmap SVG of the standardized residuals.
    #[arg(long)]
    pub cellmap: Option<PathBuf>,
    /// 0/1 CSV of truly contaminated cells; adds recall and false-positive rate.
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EstimateMethod {
    Classical,
    Coordmedian,
    Coordmcd,
    Spatialmedian,
    Twostep,
    Pairwise,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[arg(long, value_enum)]
    pub method: EstimateMethod,
    #[command(flatten)]
    pub detector: DetectorArgs,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CovArg {
    Classical,
    Twostep,
    Pairwise,
}

#[derive(Debug, Args)]
pub struct RegressArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// `last`, a 1-based column number, or a column name.
    #[arg(long, default_value = "last")]
    pub response: String,
    #[arg(long, value_enum, default_value_t = CovArg::Classical)]
    pub cov: CovArg,
    #[command(flatten)]
    pub detector: DetectorArgs,
    #[arg(long)]
    pub no_intercept: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ArfitArgs {
    /// One numeric column, optionally with a header.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    pub order: u32,
    #[arg(long, value_enum, default_value_t = CovArg::Classical)]
    pub cov: CovArg,
    #[command(flatten)]
    pub detector: DetectorArgs,
    #[arg(long)]
    pub no_intercept: bool,
    /// 0/1 CSV marking outlying series values; adds contaminated-row counts.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_estimator(s: &str) -> Result<LocationEstimator, String> {
    LocationEstimator::parse(s).map_err(|e| e.to_string())
}

#[derive(Debug, Subcommand)]
pub enum BreakdownCommand {
    /// Mean norm of location estimates against per-column contamination.
    Curve(CurveArgs),
    /// Apply a breakdown construction to a data set.
    Attack(AttackArgs),
}

#[derive(Debug, Args)]
pub struct CurveArgs {
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value_t = 4)]
    pub d: usize,
    #[arg(long, default_value_t = 500.0)]
    pub value: f64,
    #[arg(long, default_value_t = 200)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Comma-separated subset of mean, spatial_median, coord_median, coord_mcd.
    #[arg(long, value_delimiter = ',', value_parser = parse_estimator)]
    pub estimators: Option<Vec<LocationEstimator>>,
    /// Norm above which an estimate counts as broken down.
    #[arg(long, default_value_t = 100.0)]
    pub threshold: f64,
    /// Curve table as CSV; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub plot: Option<PathBuf>,
    /// JSON summary with the breakdown fraction of each estimator.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AttackKind {
    Location,
    Implosion,
    Regression,
}

#[derive(Debug, Args)]
pub struct AttackArgs {
    #[arg(long, value_enum)]
    pub kind: AttackKind,
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Hyperplane offset of the location attack.
    #[arg(long, default_value_t = 1e6)]
    pub c: f64,
    /// Common slope of the regression attack.
    #[arg(long, default_value_t = 1e6)]
    pub beta0: f64,
    /// Attacked data as CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// JSON report: parameters, replacement counts and the estimate on the attacked data.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CaMethod {
    Classical,
    Robust,
}

fn parse_k(s: &str) -> Result<KChoice, String> {
    s.parse::<KChoice>().map_err(|e| e.to_string())
}

#[derive(Debug, Args)]
pub struct CaArgs {
    /// Contingency table of counts, optionally with row and column names.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = CaMethod::Classical)]
    pub method: CaMethod,
    /// Number of components, or `auto`.
    #[arg(long, default_value = "auto", value_parser = parse_k)]
    pub k: KChoice,
    #[arg(long, default_value_t = DEFAULT_CUTOFF)]
    pub cutoff: f64,
    #[arg(long, default_value_t = 20)]
    pub max_iter: usize,
    #[arg(long)]
    pub biplot: Option<PathBuf>,
    /// Cellmap of the robust fit; requires `--method robust`.
    #[arg(long)]
    pub cellmap: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum SimulateCommand {
    /// Independent standard normal data.
    Gaussian(GaussianArgs),
    /// Correlated normal data with a fraction of cells set to a fixed value.
    Toeplitz(ToeplitzArgs),
    /// AR series with periodic outliers.
    Ar(ArSimArgs),
}

#[derive(Debug, Args)]
pub struct GaussianArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub d: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ToeplitzArgs {
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 10)]
    pub d: usize,
    #[arg(long, default_value_t = 0.1)]
    pub eps: f64,
    #[arg(long, default_value_t = 5.0)]
    pub value: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// 0/1 CSV marking the contaminated cells.
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ArSimArgs {
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    /// Comma-separated AR coefficients.
    #[arg(long, value_delimiter = ',', default_value = "0.5,0.2,0.2")]
    pub beta: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    /// Every `period`-th value (from the first) is replaced; 0 disables.
    #[arg(long, default_value_t = 7)]
    pub period: usize,
    #[arg(long, default_value_t = 10.0)]
    pub value: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub truth: Option<PathBuf>,
}
