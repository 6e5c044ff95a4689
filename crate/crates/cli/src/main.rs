//! `fiberk`: simulate fiber patterns, fit their density, estimate the
//! K-function and run envelope tests.
//!
//! Exit codes: 0 ok, 2 config or grid error, 3 data error.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fiberk::io::{self, SimulationSpec};
use fiberk::{
    discretize_all, envelope, estimate_k, fit_model, simulate_dependent, simulate_null,
    DensityModel, EnvelopeConfig, Error, EtaChoice, FiberPattern, FitOptions, HistogramBins,
    KEstimate, KGrid, NonpositivePolicy, SamplePoint, SamplingConfig, TrendChoice, Window,
};
use serde_json::json;

const THREADS_VAR: &str = "FIBERK_THREADS";

#[derive(Parser)]
#[command(
    name = "fiberk",
    version,
    about = "Geometry-aware K-function for fiber patterns"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a pattern from a JSON config (null or dependent model).
    Simulate(SimulateArgs),
    /// Discretize a pattern and fit the first-moment density.
    Fit(FitArgs),
    /// Estimate the K-function on a grid.
    Kfun(KfunArgs),
    /// Envelope test against resampled null patterns.
    Envelope(EnvelopeArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: u64,
}

#[derive(Args, Clone, Copy)]
#[group(required = true, multiple = false)]
struct SamplingArgs {
    /// Poisson sampling intensity along fibers (points per unit length).
    #[arg(long)]
    phi: Option<f64>,
    /// Equispaced sampling step along fibers.
    #[arg(long)]
    spacing: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum EtaArg {
    Uniform,
    Hist,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Exclude,
    Fail,
}

impl From<PolicyArg> for NonpositivePolicy {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::Exclude => NonpositivePolicy::Exclude,
            PolicyArg::Fail => NonpositivePolicy::Fail,
        }
    }
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    pattern: PathBuf,
    #[command(flatten)]
    sampling: SamplingArgs,
    /// Required with --phi.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value = "uniform")]
    eta: EtaArg,
    /// Fit over this box instead of the pattern window, e.g. `10,10`.
    #[arg(long, value_delimiter = ',')]
    window: Option<Vec<f64>>,
    #[arg(long)]
    out: PathBuf,
    /// Also write the sample points used for the fit.
    #[arg(long)]
    samples_out: Option<PathBuf>,
}

#[derive(Args)]
struct GridArgs {
    #[arg(long)]
    r1_max: Option<f64>,
    #[arg(long, default_value_t = 20)]
    r1_steps: usize,
    /// Comma-separated angles; `pi` and `pi/N` are accepted.
    #[arg(long, value_delimiter = ',', value_parser = parse_angle)]
    r2_list: Option<Vec<f64>>,
}

#[derive(Args)]
struct KfunArgs {
    #[arg(long, conflicts_with = "samples", required_unless_present = "samples")]
    pattern: Option<PathBuf>,
    /// Sample CSV; the window is taken from the density's pattern via --window.
    #[arg(long)]
    samples: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', requires = "samples")]
    window: Option<Vec<f64>>,
    #[arg(long)]
    phi: Option<f64>,
    #[arg(long)]
    spacing: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    density: PathBuf,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long, value_enum, default_value = "exclude")]
    policy: PolicyArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EnvelopeArgs {
    #[arg(long)]
    pattern: PathBuf,
    #[arg(long, default_value_t = 39)]
    nsim: usize,
    #[arg(long)]
    seed: u64,
    /// Poisson sampling intensity used on the data and every resample.
    #[arg(long, default_value_t = 10.0)]
    phi: f64,
    #[arg(long, value_enum, default_value = "uniform")]
    eta: EtaArg,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long, value_enum, default_value = "exclude")]
    policy: PolicyArg,
    #[arg(long)]
    out: PathBuf,
}

fn parse_angle(s: &str) -> Result<f64, String> {
    let s = s.trim();
    let pi = std::f64::consts::PI;
    if s == "pi" {
        return Ok(pi);
    }
    if let Some(den) = s.strip_prefix("pi/") {
        return den
            .parse::<f64>()
            .map(|d| pi / d)
            .map_err(|e| format!("bad angle {s:?}: {e}"));
    }
    s.parse::<f64>()
        .map_err(|e| format!("bad angle {s:?}: {e}"))
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_)
        | Error::EmptyData(_)
        | Error::DegenerateCloud(_)
        | Error::NonpositiveDensity { .. }
        | Error::IllConditioned { .. }
        | Error::InfiniteCorrection => 3,
        Error::InvalidInput(_)
        | Error::DimensionMismatch { .. }
        | Error::InvalidGrid(_)
        | Error::DivisionDomain(_)
        | Error::InvalidSpec(_)
        | Error::Schema { .. }
        | Error::Json(_) => 2,
    }
}

fn sidecar(out: &Path, suffix: &str) -> PathBuf {
    let mut name = out.file_stem().unwrap_or_default().to_os_string();
    name.push(suffix);
    out.with_file_name(name)
}

fn sampling_config(
    phi: Option<f64>,
    spacing: Option<f64>,
    seed: Option<u64>,
) -> Result<SamplingConfig<f64>, Error> {
    match (phi, spacing) {
        (Some(phi), None) => {
            let seed =
                seed.ok_or_else(|| Error::InvalidInput("--seed is required with --phi".into()))?;
            Ok(SamplingConfig::poisson(phi, seed))
        }
        (None, Some(d)) => Ok(SamplingConfig::equispaced(d)),
        _ => Err(Error::InvalidInput(
            "give exactly one of --phi and --spacing".into(),
        )),
    }
}

fn fit_options(eta: EtaArg) -> FitOptions {
    FitOptions {
        trend: TrendChoice::Linear,
        eta: match eta {
            EtaArg::Uniform => EtaChoice::Uniform,
            EtaArg::Hist => EtaChoice::Histogram {
                bins: HistogramBins::default(),
                symmetric_height: false,
            },
        },
    }
}

fn build_grid(
    args: &GridArgs,
    pattern_window: &Window<f64>,
    max_angle: f64,
) -> Result<KGrid<f64>, Error> {
    let r1_max = args.r1_max.unwrap_or(pattern_window.min_extent() / 10.0);
    let r2 = args
        .r2_list
        .clone()
        .unwrap_or_else(|| vec![max_angle / 5.0, max_angle / 2.0, max_angle]);
    KGrid::uniform(r1_max, args.r1_steps, r2)
}

fn window_from(extents: &[f64], dim: fiberk::Dim) -> Result<Window<f64>, Error> {
    if extents.len() != dim.n() {
        return Err(Error::schema(
            "window",
            format!("expected {} extents, got {}", dim.n(), extents.len()),
        ));
    }
    Window::new(extents)
}

fn write_samples(path: &Path, dim: fiberk::Dim, samples: &[SamplePoint<f64>]) -> Result<(), Error> {
    io::write_samples_csv(BufWriter::new(File::create(path)?), dim, samples)
}

fn run_simulate(a: &SimulateArgs) -> Result<(), Error> {
    let spec = io::read_sim_config(&a.config, a.seed)?;
    let sim = match &spec {
        SimulationSpec::Null(s) => simulate_null(s)?,
        SimulationSpec::Dependent(s) => simulate_dependent(s)?,
    };
    io::write_pattern(&a.out, &sim.pattern)?;
    io::write_density(&sidecar(&a.out, ".truth.json"), &sim.true_model, None)?;
    eprintln!(
        "wrote {} fibers to {}",
        sim.pattern.fibers.len(),
        a.out.display()
    );
    Ok(())
}

/// Observed versus fitted mass on the 2^d half-window blocks. Under a
/// correct trend the relative residuals are small.
fn block_residuals(
    samples: &[SamplePoint<f64>],
    model: &DensityModel<f64>,
    w: &Window<f64>,
) -> Vec<f64> {
    let n = w.dim().n();
    let a = w.extents();
    (0..1usize << n)
        .map(|mask| {
            let lo: Vec<f64> = (0..n)
                .map(|k| if mask >> k & 1 == 1 { a[k] / 2.0 } else { 0.0 })
                .collect();
            let hi: Vec<f64> = (0..n).map(|k| lo[k] + a[k] / 2.0).collect();
            let expected = model.trend.integral_over_box(&lo, &hi);
            let observed: f64 = samples
                .iter()
                .filter(|s| {
                    let x = s.location.as_slice();
                    (0..n).all(|k| x[k] >= lo[k] && x[k] < hi[k] || (hi[k] == a[k] && x[k] == a[k]))
                })
                .map(|s| s.weight)
                .sum();
            (observed - expected) / expected
        })
        .collect()
}

fn run_fit(a: &FitArgs) -> Result<(), Error> {
    let pattern = io::read_pattern(&a.pattern)?;
    if pattern.fibers.is_empty() {
        return Err(Error::EmptyData("pattern has no fibers".into()));
    }
    let window = match &a.window {
        Some(ext) => window_from(ext, pattern.dim)?,
        None => pattern.window,
    };
    let cfg = sampling_config(a.sampling.phi, a.sampling.spacing, a.seed)?;
    let samples = discretize_all(&pattern.fibers, &cfg, &pattern.convention)?;
    let model = fit_model(&samples, &window, &pattern.convention, &fit_options(a.eta))?;
    let inside: Vec<SamplePoint<f64>> = samples
        .iter()
        .copied()
        .filter(|s| window.contains(&s.location))
        .collect();
    let beta = model.trend.beta();
    let slope_range: f64 = beta[1..]
        .iter()
        .zip(window.extents())
        .map(|(b, e)| (b * e).abs())
        .sum();
    let residuals = block_residuals(&inside, &model, &window);
    let diagnostics = json!({
        "sample_count": samples.len(),
        "samples_in_window": inside.len(),
        "total_weight": inside.iter().map(|s| s.weight).sum::<f64>(),
        "window": window.extents(),
        "trend_magnitude": slope_range / beta[0].abs(),
        "block_residuals": residuals,
        "max_abs_block_residual": residuals.iter().fold(0.0f64, |m, r| m.max(r.abs())),
    });
    io::write_density(&a.out, &model, Some(diagnostics))?;
    if let Some(p) = &a.samples_out {
        write_samples(p, pattern.dim, &samples)?;
    }
    Ok(())
}

fn diagnostics_json(est: &KEstimate<f64>) -> serde_json::Value {
    let d = &est.diagnostics;
    json!({
        "pairs_used": d.pairs_used,
        "samples_in_window": d.samples_in_window,
        "nonpositive_samples": d.nonpositive_samples,
        "window": d.window.extents(),
        "sampling": d.sampling.map(|s| match s.mode {
            fiberk::SamplingMode::PoissonOnFiber { intensity } => json!({"poisson": intensity, "seed": s.seed}),
            fiberk::SamplingMode::Equispaced { spacing } => json!({"equispaced": spacing}),
        }),
    })
}

fn run_kfun(a: &KfunArgs) -> Result<(), Error> {
    let model = io::read_density(&a.density)?;
    let dim = model.conv.dim();
    let (samples, window, sampling) = match (&a.pattern, &a.samples) {
        (Some(p), _) => {
            let pattern = io::read_pattern(p)?;
            let cfg = sampling_config(a.phi, a.spacing, a.seed)?;
            let samples = discretize_all(&pattern.fibers, &cfg, &pattern.convention)?;
            (samples, pattern.window, Some(cfg))
        }
        (None, Some(s)) => {
            let (sdim, samples) = io::read_samples_csv(File::open(s)?)?;
            if sdim != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim.n(),
                    found: sdim.n(),
                });
            }
            let ext = a
                .window
                .as_ref()
                .ok_or_else(|| Error::InvalidInput("--window is required with --samples".into()))?;
            (samples, window_from(ext, dim)?, None)
        }
        (None, None) => unreachable!("clap requires one input"),
    };
    let grid = build_grid(&a.grid, &window, model.conv.max_angle())?;
    let mut est = estimate_k(&samples, &model, &window, &grid, a.policy.into())?;
    if let Some(cfg) = sampling {
        est = est.with_sampling(cfg);
    }
    io::write_k_csv(BufWriter::new(File::create(&a.out)?), &est)?;
    let diag = serde_json::to_string_pretty(&diagnostics_json(&est))?;
    std::fs::write(sidecar(&a.out, ".diagnostics.json"), diag + "\n")?;
    Ok(())
}

fn run_envelope(a: &EnvelopeArgs) -> Result<(), Error> {
    let pattern: FiberPattern = io::read_pattern(&a.pattern)?;
    if pattern.fibers.is_empty() {
        return Err(Error::EmptyData("pattern has no fibers".into()));
    }
    let grid = build_grid(&a.grid, &pattern.window, pattern.convention.max_angle())?;
    let cfg = EnvelopeConfig {
        sampling: SamplingConfig::poisson(a.phi, a.seed),
        fit: fit_options(a.eta),
        policy: a.policy.into(),
    };
    let env = envelope(&pattern, &cfg, &grid, a.nsim, a.seed)?;
    io::write_envelope_csv(BufWriter::new(File::create(&a.out)?), &env)
}

fn configure_threads() -> Result<(), Error> {
    if let Ok(v) = std::env::var(THREADS_VAR) {
        let n: usize = v.parse().map_err(|_| {
            Error::InvalidInput(format!("{THREADS_VAR} must be a positive integer"))
        })?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidInput(e.to_string()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| match &cli.command {
        Command::Simulate(a) => run_simulate(a),
        Command::Fit(a) => run_fit(a),
        Command::Kfun(a) => run_kfun(a),
        Command::Envelope(a) => run_envelope(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
