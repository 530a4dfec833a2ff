//! The `flowridge` command line.
//!
//! Exit status: 0 on success, 1 on usage or input errors, 2 when a bound
//! certificate fails.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use serde_json::json;

use crate::asymptotics::{limiting_bayes_risk, limiting_l2_norm_sq, MpLaw, SIMPSON_TOL};
use crate::bounds::{
    constant_certificates, matrix_inequality_check, optimal_ratio_check, pathwise_ratio_check,
    pathwise_ratio_scan, recompute_constants, BoundCertificate, BoundName, Witness,
};
use crate::error::{input, Error, Result};
use crate::estimators::{shrinkage_map, Estimator, Tuning};
use crate::experiments::{
    calibrate_by_l2, draw_beta0, generate_design, population_cov, run_experiment, small_instance,
    CalibratedPair, Distribution, ExperimentConfig, CALIBRATION_REL_TOL,
};
use crate::risk::{
    read_curves_csv, risk_curve, risk_curve_fixed, write_curves_csv, Calibration, PriorModel,
    RiskCurve, RiskFlavor, RiskKind, Signal, SEARCH_REL_TOL,
};
use crate::spectral::{decompose, DesignMatrix, SpectralData};

const EXIT_OK: i32 = 0;
const EXIT_INPUT: i32 = 1;
const EXIT_BOUND: i32 = 2;

#[derive(Parser, Debug)]
#[command(
    name = "flowridge",
    version,
    args_override_self = true,
    about = "Risk curves and relative-risk certificates for gradient flow and ridge regression"
)]
struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Flat `key = value` file whose entries act as flags; explicit flags win.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Exact Bayes or fixed-signal risk curves for a design.
    Riskcurve(RiskcurveArgs),
    /// Certify the relative risk bounds on a design, a curve CSV, or random instances.
    Bounds(BoundsArgs),
    /// Large-sample risk and norm curves for isotropic features.
    Asymptotic(AsymptoticArgs),
    /// Run a synthetic comparison and write curves plus a ratio summary.
    Simulate(SimulateArgs),
    /// Pair each flow time with the ridge penalty of equal expected norm.
    Calibrate(CalibrateArgs),
    /// Shrinkage of flow at time t and ridge at 1/t over an (s, t) grid.
    Heatmap(HeatmapArgs),
    /// Recompute the constants behind the bounds.
    Constants(ConstantsArgs),
}

#[derive(Args, Debug, Clone)]
struct DesignArgs {
    /// Design matrix CSV (rows are observations). Without it a design is generated.
    #[arg(long, value_name = "PATH")]
    design: Option<PathBuf>,
    /// The design CSV has a header row.
    #[arg(long)]
    header: bool,
    /// Entry distribution of a generated design.
    #[arg(long, default_value = "gaussian")]
    dist: String,
    /// Rows of a generated design.
    #[arg(long, default_value_t = 100)]
    n: usize,
    /// Columns of a generated design.
    #[arg(long, default_value_t = 50)]
    p: usize,
    /// Equicorrelation of a generated design.
    #[arg(long, default_value_t = 0.0)]
    rho: f64,
    /// Seed for generated designs and random signals.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug, Clone)]
struct ModelArgs {
    /// Noise variance.
    #[arg(long, default_value_t = 1.0)]
    sigma2: f64,
    /// Expected squared norm of the signal under the prior.
    #[arg(long, default_value_t = 1.0)]
    r2: f64,
    /// Risk flavor.
    #[arg(long, default_value = "estimation")]
    flavor: String,
    /// Population covariance CSV for out-of-sample risk (defaults to the generating equicorrelation).
    #[arg(long, value_name = "PATH")]
    cov: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct GridArgs {
    /// Smallest tuning value of the log grid.
    #[arg(long, default_value_t = 1.0 / 1024.0)]
    grid_lo: f64,
    /// Largest tuning value of the log grid.
    #[arg(long, default_value_t = 1024.0)]
    grid_hi: f64,
    /// Number of grid points.
    #[arg(long, default_value_t = 200)]
    grid_n: usize,
}

impl GridArgs {
    fn grid(&self) -> Result<Vec<f64>> {
        if !(self.grid_lo > 0.0)
            || !(self.grid_hi >= self.grid_lo)
            || !self.grid_hi.is_finite()
            || self.grid_n == 0
        {
            return input("grid needs 0 < grid-lo ≤ grid-hi < ∞ and grid-n ≥ 1");
        }
        Ok(crate::log_grid(self.grid_lo, self.grid_hi, self.grid_n))
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Which {
    Flow,
    Ridge,
    Both,
}

impl Which {
    fn estimators(self) -> Vec<Estimator> {
        match self {
            Which::Flow => vec![Estimator::Flow],
            Which::Ridge => vec![Estimator::Ridge],
            Which::Both => vec![Estimator::Flow, Estimator::Ridge],
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum CurveCalibration {
    /// Each estimator on its own grid.
    None,
    /// Ridge at 1/t for every flow time t on the grid.
    Inverse,
}

#[derive(Args, Debug)]
struct RiskcurveArgs {
    #[command(flatten)]
    design: DesignArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long, value_enum, default_value_t = Which::Both)]
    estimator: Which,
    #[arg(long, value_enum, default_value_t = CurveCalibration::Inverse)]
    calibration: CurveCalibration,
    /// Fixed coefficient vector CSV; without it risks are Bayes risks under the prior.
    #[arg(long, value_name = "PATH")]
    beta0: Option<PathBuf>,
    /// Output CSV (default: stdout).
    #[arg(long, short, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Check {
    Pathwise,
    Optimal,
    Matrix,
    All,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum SignalKind {
    Prior,
    Fixed,
}

#[derive(Args, Debug)]
struct BoundsArgs {
    #[command(flatten)]
    design: DesignArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long, value_enum, default_value_t = Check::All)]
    check: Check,
    /// Bayes risk or a fixed β₀ (read from --beta0, else drawn from the prior with --seed).
    #[arg(long, value_enum, default_value_t = SignalKind::Prior)]
    signal: SignalKind,
    #[arg(long, value_name = "PATH")]
    beta0: Option<PathBuf>,
    /// Certify pathwise ratios from a CSV written by `riskcurve --calibration inverse`.
    #[arg(long, value_name = "PATH")]
    curves: Option<PathBuf>,
    /// Run every certificate on this many random small instances instead.
    #[arg(long)]
    instances: Option<usize>,
    /// Report pathwise ratios for fixed-signal out-of-sample risk without certifying them.
    #[arg(long)]
    exploratory: bool,
    /// Output JSON lines (default: stdout).
    #[arg(long, short, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AsymptoticArgs {
    /// Aspect ratio p/n.
    #[arg(long, default_value_t = 2.0)]
    gamma: f64,
    /// Noise variance.
    #[arg(long, default_value_t = 1.0)]
    sigma2: f64,
    /// Limiting signal-to-noise ratio r²/(σ²γ); defaults to 1/γ (r² = σ²).
    #[arg(long)]
    alpha0: Option<f64>,
    /// Risk flavor (out-of-sample equals estimation for isotropic features).
    #[arg(long, default_value = "estimation")]
    flavor: String,
    #[arg(long, value_enum, default_value_t = Which::Both)]
    estimator: Which,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long, short, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long, default_value = "gaussian")]
    dist: String,
    #[arg(long, default_value_t = 500)]
    n: usize,
    #[arg(long, default_value_t = 1000)]
    p: usize,
    #[arg(long, default_value_t = 0.0)]
    rho: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma2: f64,
    #[arg(long, default_value_t = 1.0)]
    r2: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "estimation")]
    flavor: String,
    #[command(flatten)]
    grid: GridArgs,
    /// Directory for the curve CSVs and summary JSON; without it only the summary is printed.
    #[arg(long, value_name = "DIR")]
    out_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CalibrateArgs {
    #[command(flatten)]
    design: DesignArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long, short, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct HeatmapArgs {
    #[arg(long, default_value_t = 1e-3)]
    s_lo: f64,
    #[arg(long, default_value_t = 10.0)]
    s_hi: f64,
    #[arg(long, default_value_t = 100)]
    s_n: usize,
    /// Flow times t; ridge is evaluated at λ = 1/t.
    #[arg(long, default_value_t = 1e-2)]
    t_lo: f64,
    #[arg(long, default_value_t = 100.0)]
    t_hi: f64,
    #[arg(long, default_value_t = 100)]
    t_n: usize,
    #[arg(long, short, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ConstantsArgs {
    /// Print JSON certificates instead of a table.
    #[arg(long)]
    json: bool,
}

/// Parses `argv` (program name first), runs the command and returns the
/// exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let args = match expand_config(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_INPUT;
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    if let Some(t) = cli.threads {
        set_threads(t);
    }
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INPUT
        }
    }
}

#[cfg(feature = "parallel")]
fn set_threads(n: usize) {
    // A second call in the same process keeps the first pool.
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(n.max(1))
        .build_global();
}

#[cfg(not(feature = "parallel"))]
fn set_threads(_: usize) {}

/// Splices `key = value` lines from `--config` in right after the
/// subcommand, so flags given on the command line override them.
fn expand_config(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let pos = args.iter().position(|a| a == "--config");
    let path = match pos {
        Some(i) => args
            .get(i + 1)
            .ok_or_else(|| Error::Input("--config needs a path".into()))?
            .clone(),
        None => match args
            .iter()
            .find_map(|a| a.to_str().and_then(|s| s.strip_prefix("--config=")))
        {
            Some(p) => OsString::from(p),
            None => return Ok(args),
        },
    };
    let text = std::fs::read_to_string(&path).map_err(|e| {
        Error::Input(format!(
            "cannot read config {}: {e}",
            Path::new(&path).display()
        ))
    })?;
    let extra = parse_config(&text)?;
    let sub = args
        .iter()
        .skip(1)
        .position(|a| {
            a.to_str().is_some_and(|s| {
                [
                    "riskcurve",
                    "bounds",
                    "asymptotic",
                    "simulate",
                    "calibrate",
                    "heatmap",
                    "constants",
                ]
                .contains(&s)
            })
        })
        .map(|i| i + 1)
        .ok_or_else(|| Error::Input("--config given without a subcommand".into()))?;
    let mut out = args[..=sub].to_vec();
    out.extend(extra.into_iter().map(OsString::from));
    out.extend(args[sub + 1..].iter().cloned());
    Ok(out)
}

fn parse_config(text: &str) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Input(format!("config line {}: expected `key = value`", i + 1))
        })?;
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        if key.is_empty() {
            return input(format!("config line {}: empty key", i + 1));
        }
        match value {
            "true" => out.push(format!("--{key}")),
            "false" => {}
            v => {
                out.push(format!("--{key}"));
                out.push(v.to_string());
            }
        }
    }
    Ok(out)
}

fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::Riskcurve(a) => riskcurve(a),
        Command::Bounds(a) => bounds(a),
        Command::Asymptotic(a) => asymptotic(a),
        Command::Simulate(a) => simulate(a),
        Command::Calibrate(a) => calibrate(a),
        Command::Heatmap(a) => heatmap(a),
        Command::Constants(a) => constants(a),
    }
}

fn open_out(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

/// Writes `<out>.meta.json` next to a file output, or the same JSON to
/// stderr when results go to stdout.
fn write_meta(out: &Option<PathBuf>, meta: serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(&meta)?;
    match out {
        Some(p) => {
            let mut name = p.as_os_str().to_owned();
            name.push(".meta.json");
            std::fs::write(PathBuf::from(name), text + "\n")?;
        }
        None => eprintln!("{text}"),
    }
    Ok(())
}

fn metadata(command: &str, seed: Option<u64>, extra: serde_json::Value) -> serde_json::Value {
    json!({
        "version": crate::VERSION,
        "command": command,
        "seed": seed,
        "tolerances": {
            "flow_optimum_rel_tol": SEARCH_REL_TOL,
            "l2_calibration_rel_tol": CALIBRATION_REL_TOL,
            "mp_quadrature_nodes": 2048,
            "laplace_simpson_abs_tol": SIMPSON_TOL,
            "certificate_slack": crate::bounds::SLACK,
        },
        "parameters": extra,
    })
}

fn read_matrix(path: &Path, header: bool) -> Result<DMatrix<f64>> {
    let file = File::open(path)
        .map_err(|e| Error::Input(format!("cannot open {}: {e}", path.display())))?;
    Ok(DesignMatrix::read_csv(file, header)?.into_matrix())
}

fn read_vector(path: &Path) -> Result<DVector<f64>> {
    let m = read_matrix(path, false)?;
    let v: Vec<f64> = m.transpose().iter().copied().collect();
    Ok(DVector::from_vec(v))
}

struct Loaded {
    x: DesignMatrix,
    sd: SpectralData,
    generated: bool,
}

fn load_design(d: &DesignArgs) -> Result<Loaded> {
    let x = match &d.design {
        Some(path) => {
            let file = File::open(path)
                .map_err(|e| Error::Input(format!("cannot open {}: {e}", path.display())))?;
            DesignMatrix::read_csv(file, d.header)?
        }
        None => {
            let mut cfg = ExperimentConfig::new(d.dist.parse()?, d.n, d.p, d.rho, d.seed);
            cfg.grid = vec![1.0];
            generate_design(&cfg)?
        }
    };
    let sd = decompose(&x);
    Ok(Loaded {
        generated: d.design.is_none(),
        x,
        sd,
    })
}

fn load_flavor(m: &ModelArgs, d: &DesignArgs, loaded: &Loaded) -> Result<RiskFlavor> {
    let kind: RiskKind = m.flavor.parse()?;
    if kind != RiskKind::OutOfSample {
        return RiskFlavor::from_kind(kind, None);
    }
    let cov = match (&m.cov, loaded.generated) {
        (Some(path), _) => read_matrix(path, false)?,
        (None, true) => population_cov(loaded.x.p(), d.rho),
        (None, false) => return input("out-of-sample risk on a design file needs --cov"),
    };
    RiskFlavor::out_of_sample(cov)
}

fn riskcurve(a: RiskcurveArgs) -> Result<i32> {
    let loaded = load_design(&a.design)?;
    let sd = &loaded.sd;
    let flavor = load_flavor(&a.model, &a.design, &loaded)?;
    let prior = PriorModel::for_data(sd, a.model.sigma2, a.model.r2)?;
    let grid = a.grid.grid()?;
    let beta0 = a.beta0.as_deref().map(read_vector).transpose()?;
    let mut curves = Vec::new();
    for est in a.estimator.estimators() {
        let kappas: Vec<f64> =
            if est == Estimator::Ridge && a.calibration == CurveCalibration::Inverse {
                grid.iter().map(|t| 1.0 / t).collect()
            } else {
                grid.clone()
            };
        let tunings: Vec<Tuning> = kappas.iter().map(|&k| est.tuning(k)).collect();
        let mut curve = match &beta0 {
            Some(b) => risk_curve_fixed(sd, b, &prior, est, &tunings, &flavor)?,
            None => risk_curve(sd, &prior, est, &tunings, &flavor)?,
        };
        if a.calibration == CurveCalibration::Inverse {
            curve.calibration = Calibration::Inverse;
        }
        curves.push(curve);
    }
    let mut w = open_out(&a.out)?;
    write_curves_csv(&mut w, &curves, false)?;
    w.flush()?;
    write_meta(
        &a.out,
        metadata(
            "riskcurve",
            loaded.generated.then_some(a.design.seed),
            json!({"n": sd.n(), "p": sd.p(), "rank": sd.rank(), "sigma2": prior.sigma2, "r2": prior.r2, "alpha": prior.alpha,
                   "flavor": flavor.kind.name(), "signal": if beta0.is_some() { "fixed" } else { "prior" }}),
        ),
    )?;
    Ok(EXIT_OK)
}

/// Pathwise certificate from flow and ridge curves written with `λ = 1/t`.
pub fn certificate_from_curves(curves: &[RiskCurve]) -> Result<BoundCertificate> {
    let flow = curves
        .iter()
        .find(|c| {
            c.estimator == Estimator::Flow && c.calibration == Calibration::Inverse && !c.limit
        })
        .ok_or_else(|| Error::Input("no flow curve with inverse calibration in the CSV".into()))?;
    let ridge = curves
        .iter()
        .find(|c| {
            c.estimator == Estimator::Ridge
                && c.calibration == Calibration::Inverse
                && !c.limit
                && c.flavor == flow.flavor
        })
        .ok_or_else(|| {
            Error::Input("no matching ridge curve with inverse calibration in the CSV".into())
        })?;
    if flow.points.len() != ridge.points.len() {
        return input("flow and ridge curves have different lengths");
    }
    let mut best = (f64::NEG_INFINITY, f64::NAN);
    for (f, r) in flow.points.iter().zip(&ridge.points) {
        let t = f.tuning.value();
        if !(t > 0.0) {
            return input(format!("flow times must be positive, got {t}"));
        }
        if r.tuning.value() != 1.0 / t {
            return input(format!(
                "ridge penalty {} is not 1/t for t = {t}",
                r.tuning.value()
            ));
        }
        if !(r.total > 0.0) {
            return Err(Error::Degenerate(format!(
                "ridge risk is {} at λ = 1/{t}",
                r.total
            )));
        }
        let ratio = f.total / r.total;
        if ratio > best.0 {
            best = (ratio, t);
        }
    }
    let constant = BoundName::Pathwise.constant();
    Ok(BoundCertificate {
        bound_name: BoundName::Pathwise,
        constant,
        max_observed_ratio: best.0,
        witness: Witness::FlowTime(best.1),
        holds: best.0 <= constant + crate::bounds::SLACK,
    })
}

#[derive(Serialize)]
struct ExploratoryReport {
    mode: &'static str,
    max_ratio: f64,
    witness_time: f64,
    exceeds_pathwise_constant: bool,
}

fn bounds(a: BoundsArgs) -> Result<i32> {
    let mut w = open_out(&a.out)?;
    let mut all_hold = true;
    let mut emit = |w: &mut Box<dyn Write>, cert: &BoundCertificate| -> Result<()> {
        all_hold &= cert.holds;
        writeln!(w, "{}", cert.to_json())?;
        Ok(())
    };

    if let Some(path) = &a.curves {
        let file = File::open(path)
            .map_err(|e| Error::Input(format!("cannot open {}: {e}", path.display())))?;
        let cert = certificate_from_curves(&read_curves_csv(file)?)?;
        emit(&mut w, &cert)?;
    } else if let Some(count) = a.instances {
        let grid = a.grid.grid()?;
        let mut failures = 0usize;
        for k in 0..count {
            let cfg = small_instance(k, a.design.seed);
            let x = generate_design(&cfg)?;
            let sd = decompose(&x);
            let prior = PriorModel::for_data(&sd, a.model.sigma2, a.model.r2)?;
            let beta0 = Signal::Fixed(draw_beta0(cfg.p, prior.r2, cfg.seed));
            let out = RiskFlavor::out_of_sample(population_cov(cfg.p, cfg.rho))?;
            let mut certs = vec![
                pathwise_ratio_check(&sd, &beta0, &prior, &RiskFlavor::estimation(), &grid)?,
                pathwise_ratio_check(&sd, &beta0, &prior, &RiskFlavor::in_sample(), &grid)?,
                pathwise_ratio_check(&sd, &Signal::Prior, &prior, &out, &grid)?,
            ];
            for flavor in [
                RiskFlavor::estimation(),
                RiskFlavor::in_sample(),
                out.clone(),
            ] {
                certs.push(optimal_ratio_check(&sd, &prior, &flavor)?);
            }
            for c in &certs {
                if !c.holds {
                    failures += 1;
                }
                emit(&mut w, c)?;
            }
        }
        eprintln!("{count} instances, {failures} failed certificates");
    } else {
        let loaded = load_design(&a.design)?;
        let sd = &loaded.sd;
        let flavor = load_flavor(&a.model, &a.design, &loaded)?;
        let prior = PriorModel::for_data(sd, a.model.sigma2, a.model.r2)?;
        let grid = a.grid.grid()?;
        let signal = match (a.signal, &a.beta0) {
            (SignalKind::Prior, _) => Signal::Prior,
            (SignalKind::Fixed, Some(p)) => Signal::Fixed(read_vector(p)?),
            (SignalKind::Fixed, None) => Signal::Fixed(draw_beta0(sd.p(), prior.r2, a.design.seed)),
        };
        if a.exploratory {
            let scan = pathwise_ratio_scan(sd, &signal, &prior, &flavor, &grid)?;
            let (max_ratio, witness_time) = scan.max();
            let report = ExploratoryReport {
                mode: "exploratory",
                max_ratio,
                witness_time,
                exceeds_pathwise_constant: max_ratio > crate::bounds::PATHWISE,
            };
            writeln!(w, "{}", serde_json::to_string(&report)?)?;
        } else {
            if matches!(a.check, Check::Pathwise | Check::All) {
                emit(
                    &mut w,
                    &pathwise_ratio_check(sd, &signal, &prior, &flavor, &grid)?,
                )?;
            }
            if matches!(a.check, Check::Optimal | Check::All) {
                emit(&mut w, &optimal_ratio_check(sd, &prior, &flavor)?)?;
            }
            if matches!(a.check, Check::Matrix | Check::All) {
                let mut worst = 0.0f64;
                let mut witness = grid[0];
                for &t in &grid {
                    let m = matrix_inequality_check(sd, t)?;
                    if m.max_violation() > worst {
                        worst = m.max_violation();
                        witness = t;
                    }
                }
                let holds = worst <= crate::bounds::MATRIX_TOL;
                all_hold &= holds;
                writeln!(
                    w,
                    "{}",
                    json!({"check": "matrix", "max_violation": worst, "witness_time": witness, "holds": holds})
                )?;
            }
        }
    }
    w.flush()?;
    write_meta(
        &a.out,
        metadata(
            "bounds",
            Some(a.design.seed),
            json!({"exploratory": a.exploratory}),
        ),
    )?;
    Ok(if all_hold { EXIT_OK } else { EXIT_BOUND })
}

fn asymptotic(a: AsymptoticArgs) -> Result<i32> {
    let law = MpLaw::new(a.gamma)?;
    let alpha0 = a.alpha0.unwrap_or(1.0 / a.gamma);
    let kind: RiskKind = a.flavor.parse()?;
    let grid = a.grid.grid()?;
    let mut curves = Vec::new();
    for est in a.estimator.estimators() {
        let mut points = Vec::with_capacity(grid.len());
        let mut norms = Vec::with_capacity(grid.len());
        for &k in &grid {
            let tuning = est.tuning(k);
            points.push(limiting_bayes_risk(
                &law, alpha0, a.sigma2, kind, est, tuning,
            )?);
            norms.push(limiting_l2_norm_sq(&law, alpha0, a.sigma2, est, tuning)?);
        }
        curves.push(RiskCurve {
            estimator: est,
            flavor: kind,
            calibration: Calibration::None,
            points,
            l2_norm_sq: norms,
            limit: true,
        });
    }
    let mut w = open_out(&a.out)?;
    write_curves_csv(&mut w, &curves, true)?;
    w.flush()?;
    write_meta(
        &a.out,
        metadata(
            "asymptotic",
            None,
            json!({"gamma": a.gamma, "alpha0": alpha0, "sigma2": a.sigma2}),
        ),
    )?;
    Ok(EXIT_OK)
}

fn simulate(a: SimulateArgs) -> Result<i32> {
    let mut cfg = ExperimentConfig::new(a.dist.parse::<Distribution>()?, a.n, a.p, a.rho, a.seed);
    cfg.sigma2 = a.sigma2;
    cfg.r2 = a.r2;
    cfg.grid = a.grid.grid()?;
    cfg.flavor = a.flavor.parse()?;
    let res = run_experiment(&cfg)?;
    let summary = serde_json::to_string_pretty(&res.summary)?;
    if let Some(dir) = &a.out_dir {
        std::fs::create_dir_all(dir)?;
        for cal in [Calibration::None, Calibration::Inverse, Calibration::L2] {
            let path = dir.join(format!("curves_{}.csv", cal.name()));
            let mut w = BufWriter::new(File::create(&path)?);
            write_curves_csv(&mut w, &res.curves(cal), true)?;
            w.flush()?;
        }
        let path = dir.join("calibrated.csv");
        write_pairs(BufWriter::new(File::create(&path)?), &res.calibrated)?;
        std::fs::write(dir.join("summary.json"), summary.clone() + "\n")?;
        let meta = metadata("simulate", Some(a.seed), serde_json::to_value(&cfg)?);
        std::fs::write(
            dir.join("metadata.json"),
            serde_json::to_string_pretty(&meta)? + "\n",
        )?;
    }
    println!("{summary}");
    Ok(EXIT_OK)
}

fn write_pairs<W: Write>(w: W, pairs: &[CalibratedPair]) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record([
        "time",
        "lambda",
        "norm",
        "risk_flow",
        "risk_ridge",
        "ratio",
        "matched",
    ])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for c in pairs {
        w.write_record([
            c.time.to_string(),
            opt(c.lambda),
            c.norm.to_string(),
            c.risk_flow.to_string(),
            opt(c.risk_ridge),
            opt(c.ratio),
            c.matched().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn calibrate(a: CalibrateArgs) -> Result<i32> {
    let loaded = load_design(&a.design)?;
    let sd = &loaded.sd;
    let flavor = load_flavor(&a.model, &a.design, &loaded)?;
    let prior = PriorModel::for_data(sd, a.model.sigma2, a.model.r2)?;
    let tunings: Vec<Tuning> = a.grid.grid()?.into_iter().map(Tuning::Time).collect();
    let flow = risk_curve(sd, &prior, Estimator::Flow, &tunings, &flavor)?;
    let pairs = calibrate_by_l2(&flow, sd, &prior, &flavor)?;
    write_pairs(open_out(&a.out)?, &pairs)?;
    let unmatched = pairs.iter().filter(|p| !p.matched()).count();
    write_meta(
        &a.out,
        metadata(
            "calibrate",
            loaded.generated.then_some(a.design.seed),
            json!({"unmatched": unmatched}),
        ),
    )?;
    Ok(EXIT_OK)
}

fn heatmap(a: HeatmapArgs) -> Result<i32> {
    if !(a.s_lo > 0.0
        && a.s_hi >= a.s_lo
        && a.t_lo > 0.0
        && a.t_hi >= a.t_lo
        && a.s_n > 0
        && a.t_n > 0)
    {
        return input("heatmap ranges need 0 < lo ≤ hi and positive counts");
    }
    let mut w = csv::Writer::from_writer(open_out(&a.out)?);
    w.write_record(["s", "kappa", "g_ridge", "g_flow"])?;
    for s in crate::log_grid(a.s_lo, a.s_hi, a.s_n) {
        for t in crate::log_grid(a.t_lo, a.t_hi, a.t_n) {
            let ridge = shrinkage_map(Estimator::Ridge, s, 1.0 / t);
            let flow = shrinkage_map(Estimator::Flow, s, t);
            w.write_record([
                s.to_string(),
                t.to_string(),
                ridge.to_string(),
                flow.to_string(),
            ])?;
        }
    }
    w.flush()?;
    write_meta(
        &a.out,
        metadata("heatmap", None, json!({"ridge_penalty": "1/kappa"})),
    )?;
    Ok(EXIT_OK)
}

fn constants(a: ConstantsArgs) -> Result<i32> {
    let certs = constant_certificates();
    if a.json {
        for c in &certs {
            println!("{}", c.to_json());
        }
    } else {
        let k = recompute_constants();
        println!("{:<8} {:>12} {:>10}", "name", "recomputed", "published");
        println!("{:<8} {:>12.6} {:>10}", "c1", k.c1, "1.2985");
        println!("{:<8} {:>12.6} {:>10}", "C", k.c, "0.4634");
        println!("{:<8} {:>12.6} {:>10}", "c1^2", k.c1_squared, "1.6862");
        println!(
            "{:<8} {:>12.6} {:>10}",
            "1+C^2", k.one_plus_c_squared, "1.2147"
        );
    }
    Ok(if certs.iter().all(|c| c.holds) {
        EXIT_OK
    } else {
        EXIT_BOUND
    })
}
