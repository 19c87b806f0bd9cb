//! Command-line front end: run the estimators on user files (`deconv`),
//! generate and solve seeded instances (`simulate`), drive Monte Carlo
//! sweeps and phase-transition grids (`sweep`, `grid`), and check the
//! numeric core against independent oracles (`selftest`).
//!
//! Every command that produces files writes a `manifest.json` into its
//! output directory *before* the results — enough to reproduce the run
//! exactly — and all files go through atomic temp-and-rename writes, so
//! an error path never leaves a partial result behind. Exit codes: 0 on
//! success, 1 for input or configuration problems, 2 for numerical
//! failures.

use std::env;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::algorithms::{estimate_all, GammaMode, Method, SigmaHatMode, SolverConfig};
use crate::crosscorr::{build_a, build_gamma, expected_a, gram_yy};
use crate::eig::spectral_norm;
use crate::error::{Error, Result};
use crate::io::{
    read_basis_json, read_observations_csv, write_atomic, write_basis_json,
    write_json_atomic, write_observations_csv, write_signal_csv,
};
use crate::mat::CMatrix;
use crate::model::{
    random_instance, sample_cn, synthesize_channels, synthesize_observations,
    BilinearBasis, InstanceConfig, ObservationSet,
};
use crate::signal::{circ_conv, norm_sq};
use crate::sim::{
    expected_operator_norm, grid_csv, run_grid, run_sweep, run_trial, score_estimate,
    sweep_csv, Axis, GridSpec, SweepSpec, TrialRecord, DEFAULT_PERCENTILE, DEFAULT_TRIALS,
};

// ── Entry point ─────────────────────────────────────────────────────────

/// Parse and dispatch; returns the process exit code. Help and version
/// requests exit 0, parse failures 1, and command errors map through
/// [`Error::exit_code`].
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Deconv(args) => cmd_deconv(&args),
        Command::Simulate(args) => cmd_simulate(&args),
        Command::Sweep(args) => cmd_sweep(&args),
        Command::Grid(args) => cmd_grid(&args),
        Command::Selftest(args) => cmd_selftest(&args),
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "blindmc",
    version,
    about = "Multichannel blind deconvolution under a bilinear channel model"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Estimate channels from an observation CSV and a basis JSON.
    Deconv(DeconvArgs),
    /// Draw one seeded instance, solve it, and report traces.
    Simulate(SimulateArgs),
    /// Monte Carlo sweep of one instance parameter.
    Sweep(SweepArgs),
    /// Monte Carlo grid over the relative dimensions (D/K, L/K).
    Grid(GridArgs),
    /// Check the numeric core against independent oracles.
    Selftest(SelftestArgs),
}

// ── Shared flag groups ──────────────────────────────────────────────────

#[derive(Args, Debug)]
struct InstanceArgs {
    /// Channel count M.
    #[arg(long = "M", default_value_t = 8)]
    m: usize,
    /// Taps per channel K.
    #[arg(long = "K", default_value_t = 64)]
    k: usize,
    /// Subspace dimension D.
    #[arg(long = "D", default_value_t = 8)]
    d: usize,
    /// Observation length L.
    #[arg(long = "L", default_value_t = 1280)]
    l: usize,
    /// Target SNR in dB; omit for noiseless observations.
    #[arg(long = "snr-db")]
    snr_db: Option<f64>,
    /// Gain spread: gains are drawn as 1 + alpha·u with u uniform in [-1, 1).
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    /// Master seed. The BLINDMC_SEED environment variable overrides this flag.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl InstanceArgs {
    fn to_config(&self) -> Result<InstanceConfig> {
        let cfg = InstanceConfig {
            m: self.m,
            k: self.k,
            d: self.d,
            l: self.l,
            snr_db: self.snr_db,
            alpha: self.alpha,
            seed: resolve_seed(self.seed)?,
        };
        cfg.validate()?;
        for w in cfg.warnings() {
            eprintln!("warning: {w}");
        }
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
struct SolverArgs {
    /// Noise-variance handling: 'exact' (simulation only), 'zero', or a number (σ̂²).
    #[arg(long = "sigma-hat", default_value = "exact")]
    sigma_hat: SigmaHatMode,
    /// Deflation scale for the rank-1 power method.
    #[arg(long = "gamma-mode", default_value = "sample_norm")]
    gamma_mode: GammaMode,
    /// Iteration cap for the alternating methods.
    #[arg(long = "max-iters", default_value_t = 50)]
    max_iters: usize,
    /// Convergence threshold on the step between successive iterates.
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
}

impl SolverArgs {
    fn to_config(&self) -> Result<SolverConfig> {
        let cfg = SolverConfig {
            max_iters: self.max_iters,
            tol: self.tol,
            sigma_hat_sq: self.sigma_hat,
            gamma_mode: self.gamma_mode,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// The master seed: a set BLINDMC_SEED beats the flag.
fn resolve_seed(flag: u64) -> Result<u64> {
    match env::var("BLINDMC_SEED") {
        Ok(s) => s.trim().parse().map_err(|_| {
            Error::Config(format!("BLINDMC_SEED must be an unsigned 64-bit integer, got '{s}'"))
        }),
        Err(env::VarError::NotPresent) => Ok(flag),
        Err(e) => Err(Error::Config(format!("BLINDMC_SEED: {e}"))),
    }
}

fn default_parallelism() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

// ── Run manifests ───────────────────────────────────────────────────────

/// Reproducibility sidecar written into every output directory before
/// the results themselves: the exact resolved configuration, the master
/// seed, the tool version, and what files the run intends to produce.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    /// Master seed after any BLINDMC_SEED override; absent for commands
    /// without randomness.
    pub master_seed: Option<u64>,
    /// Fully resolved run configuration.
    pub config: serde_json::Value,
    /// Unix seconds when the command started and when this file was
    /// written.
    pub started_unix_s: u64,
    pub written_unix_s: u64,
    /// Result files the run will write, relative to this directory.
    pub outputs: Vec<String>,
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

fn write_manifest(
    out_dir: &Path,
    command: &str,
    master_seed: Option<u64>,
    config: serde_json::Value,
    outputs: &[&str],
    started_unix_s: u64,
) -> Result<()> {
    fs::create_dir_all(out_dir).map_err(|source| Error::Io {
        path: out_dir.display().to_string(),
        source,
    })?;
    let manifest = RunManifest {
        command: command.to_string(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        master_seed,
        config,
        started_unix_s,
        written_unix_s: unix_now(),
        outputs: outputs.iter().map(|s| s.to_string()).collect(),
    };
    write_json_atomic(&out_dir.join("manifest.json"), &manifest)
}

/// Re-raise a borrowed per-method error, preserving its exit semantics.
fn reraise(e: &Error) -> Error {
    if e.exit_code() == 2 {
        Error::Numerical(e.to_string())
    } else {
        Error::Config(e.to_string())
    }
}

// ── deconv ──────────────────────────────────────────────────────────────

#[derive(Args, Debug)]
struct DeconvArgs {
    /// Observation CSV: a `L,M` header row, then L rows of 2M columns
    /// re_1,im_1,…,re_M,im_M.
    observations: PathBuf,
    /// Basis JSON: {"M", "K", "D", "blocks": M arrays of K·D [re, im]
    /// pairs, row-major}.
    basis: PathBuf,
    /// Estimator to run.
    #[arg(long, default_value = "rtpm")]
    method: Method,
    /// Noise-variance handling: 'zero' or a number (σ̂²). 'exact' needs a
    /// known noise level and only works on simulated data.
    #[arg(long = "sigma-hat", default_value = "zero")]
    sigma_hat: SigmaHatMode,
    /// Deflation scale for the rank-1 power method.
    #[arg(long = "gamma-mode", default_value = "sample_norm")]
    gamma_mode: GammaMode,
    /// Iteration cap for the alternating methods.
    #[arg(long = "max-iters", default_value_t = 50)]
    max_iters: usize,
    /// Convergence threshold on the step between successive iterates.
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    /// Output directory for the estimates and the report.
    #[arg(long, short = 'o', default_value = "deconv_out")]
    out: PathBuf,
}

#[derive(Debug, Serialize, Deserialize)]
struct TimingReport {
    read_s: f64,
    gram_s: f64,
    restrict_s: f64,
    init_s: f64,
    solve_s: f64,
    total_s: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct DeconvReport {
    method: Method,
    sigma_hat: SigmaHatMode,
    gamma_mode: GammaMode,
    channels: usize,
    taps: usize,
    subspace_dim: usize,
    observation_len: usize,
    iterations: usize,
    /// Sin-angle step between successive iterates, one per iteration.
    step_changes: Vec<f64>,
    converged: bool,
    degenerate: bool,
    /// Cross-convolution misfit ĥ*·(Y*Y)·ĥ at the unit-norm estimate.
    residual_quadratic_form: f64,
    timing: TimingReport,
}

fn cmd_deconv(args: &DeconvArgs) -> Result<()> {
    let started = unix_now();
    let t_total = Instant::now();

    let t_read = Instant::now();
    let obs = read_observations_csv(&args.observations)?;
    let basis = read_basis_json(&args.basis)?;
    let read_s = t_read.elapsed().as_secs_f64();
    for w in basis.warnings() {
        eprintln!("warning: {w}");
    }
    if basis.channels() != obs.channels() {
        return Err(Error::Config(format!(
            "basis has {} channels but the observations have {}",
            basis.channels(),
            obs.channels()
        )));
    }
    if basis.taps() > obs.len() {
        return Err(Error::Config(format!(
            "basis has K={} taps but the observations only span L={}",
            basis.taps(),
            obs.len()
        )));
    }
    let solver = SolverConfig {
        max_iters: args.max_iters,
        tol: args.tol,
        sigma_hat_sq: args.sigma_hat,
        gamma_mode: args.gamma_mode,
    };
    solver.validate()?;

    let mut outputs = vec!["h_hat.csv", "report.json"];
    if args.method != Method::Cc {
        outputs.push("b_hat.csv");
    }
    if args.method.needs_init() {
        outputs.push("a_hat.csv");
    }
    write_manifest(
        &args.out,
        "deconv",
        None,
        json!({
            "observations": args.observations.display().to_string(),
            "basis": args.basis.display().to_string(),
            "method": args.method,
            "solver": solver,
            "M": obs.channels(),
            "K": basis.taps(),
            "D": basis.dim(),
            "L": obs.len(),
        }),
        &outputs,
        started,
    )?;

    let all = estimate_all(&obs, &basis, &solver, &[args.method], None)?;
    let res = match all.get(args.method) {
        Some(Ok(res)) => res,
        Some(Err(e)) => return Err(reraise(e)),
        None => return Err(Error::Numerical("estimator produced no result".into())),
    };
    let residual = gram_yy(&obs, basis.taps())?.quadratic_form(&res.h_hat)?;

    write_signal_csv(&args.out.join("h_hat.csv"), &res.h_hat)?;
    if let Some(a) = &res.a_hat {
        write_signal_csv(&args.out.join("a_hat.csv"), a)?;
    }
    if let Some(b) = &res.b_hat {
        write_signal_csv(&args.out.join("b_hat.csv"), b)?;
    }
    let report = DeconvReport {
        method: args.method,
        sigma_hat: args.sigma_hat,
        gamma_mode: args.gamma_mode,
        channels: obs.channels(),
        taps: basis.taps(),
        subspace_dim: basis.dim(),
        observation_len: obs.len(),
        iterations: res.iterations.len(),
        step_changes: res.iterations.clone(),
        converged: res.converged,
        degenerate: res.degenerate,
        residual_quadratic_form: residual,
        timing: TimingReport {
            read_s,
            gram_s: all.gram_s,
            restrict_s: all.restrict_s,
            init_s: all.init_s,
            solve_s: res.elapsed,
            total_s: t_total.elapsed().as_secs_f64(),
        },
    };
    write_json_atomic(&args.out.join("report.json"), &report)?;
    println!(
        "deconv: {} on M={}, K={}, L={} — residual {:.3e}, {} iterations, results in {}",
        args.method,
        obs.channels(),
        basis.taps(),
        obs.len(),
        residual,
        res.iterations.len(),
        args.out.display()
    );
    Ok(())
}

// ── simulate ────────────────────────────────────────────────────────────

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    /// Estimator to run.
    #[arg(long, default_value = "rtpm")]
    method: Method,
    #[command(flatten)]
    solver: SolverArgs,
    /// Also write the generated instance (observations.csv, basis.json,
    /// source.csv, truth_channels.csv) for feeding back into `deconv`.
    #[arg(long)]
    dump: bool,
    /// Output directory.
    #[arg(long, short = 'o', default_value = "simulate_out")]
    out: PathBuf,
}

#[derive(Debug, Serialize, Deserialize)]
struct SimulateReport {
    config: InstanceConfig,
    /// Noise level the observations were synthesized with.
    sigma_w: Option<f64>,
    method: Method,
    sigma_hat: SigmaHatMode,
    gamma_mode: GammaMode,
    /// Final sin-angle error against the true stacked channel.
    sin_angle: f64,
    /// Channel-space error at the initialization and after each
    /// iteration; empty for the one-shot methods.
    error_trace: Vec<f64>,
    iterations: usize,
    step_changes: Vec<f64>,
    converged: bool,
    degenerate: bool,
    timing: TimingReport,
}

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let started = unix_now();
    let t_total = Instant::now();
    let cfg = args.instance.to_config()?;
    let solver = args.solver.to_config()?;

    let mut outputs = vec!["h_hat.csv", "report.json"];
    if args.method != Method::Cc {
        outputs.push("b_hat.csv");
    }
    if args.method.needs_init() {
        outputs.push("a_hat.csv");
    }
    if args.dump {
        outputs.extend(["observations.csv", "basis.json", "source.csv", "truth_channels.csv"]);
    }
    write_manifest(
        &args.out,
        "simulate",
        Some(cfg.seed),
        json!({
            "instance": cfg,
            "method": args.method,
            "solver": solver,
            "dump": args.dump,
        }),
        &outputs,
        started,
    )?;

    let inst = random_instance(&cfg)?;
    let truth = inst.model.stacked();
    let truth_ref = crate::algorithms::TruthRef {
        expected_a_norm: expected_operator_norm(&inst),
    };
    let all = estimate_all(&inst.obs, &inst.basis, &solver, &[args.method], Some(&truth_ref))?;
    let res = match all.get(args.method) {
        Some(Ok(res)) => res,
        Some(Err(e)) => return Err(reraise(e)),
        None => return Err(Error::Numerical("estimator produced no result".into())),
    };
    let (err, trace) = score_estimate(&inst.basis, &truth, res)?;

    write_signal_csv(&args.out.join("h_hat.csv"), &res.h_hat)?;
    if let Some(a) = &res.a_hat {
        write_signal_csv(&args.out.join("a_hat.csv"), a)?;
    }
    if let Some(b) = &res.b_hat {
        write_signal_csv(&args.out.join("b_hat.csv"), b)?;
    }
    if args.dump {
        write_observations_csv(&args.out.join("observations.csv"), &inst.obs)?;
        write_basis_json(&args.out.join("basis.json"), &inst.basis)?;
        write_signal_csv(&args.out.join("source.csv"), &inst.source)?;
        write_signal_csv(&args.out.join("truth_channels.csv"), &truth)?;
    }
    let report = SimulateReport {
        config: cfg,
        sigma_w: inst.obs.sigma_w,
        method: args.method,
        sigma_hat: args.solver.sigma_hat,
        gamma_mode: args.solver.gamma_mode,
        sin_angle: err,
        error_trace: trace,
        iterations: res.iterations.len(),
        step_changes: res.iterations.clone(),
        converged: res.converged,
        degenerate: res.degenerate,
        timing: TimingReport {
            read_s: 0.0,
            gram_s: all.gram_s,
            restrict_s: all.restrict_s,
            init_s: all.init_s,
            solve_s: res.elapsed,
            total_s: t_total.elapsed().as_secs_f64(),
        },
    };
    write_json_atomic(&args.out.join("report.json"), &report)?;
    println!(
        "simulate: {} on seed {} — sin-angle error {:.3e} in {} iterations, results in {}",
        args.method,
        cfg.seed,
        err,
        res.iterations.len(),
        args.out.display()
    );
    Ok(())
}

// ── sweep ───────────────────────────────────────────────────────────────

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    base: InstanceArgs,
    /// Parameter to vary: L, D, M, snr_db, or alpha.
    #[arg(long)]
    axis: Axis,
    /// Comma-separated axis values.
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<f64>,
    /// Trials per axis value.
    #[arg(long, default_value_t = DEFAULT_TRIALS)]
    trials: usize,
    /// Comma-separated estimators to run.
    #[arg(long, value_delimiter = ',', default_values_t = Method::ALL)]
    methods: Vec<Method>,
    /// Aggregation percentile.
    #[arg(long, default_value_t = DEFAULT_PERCENTILE)]
    percentile: f64,
    #[command(flatten)]
    solver: SolverArgs,
    /// Worker threads for trial execution.
    #[arg(long, default_value_t = default_parallelism())]
    parallelism: usize,
    /// Output directory.
    #[arg(long, short = 'o', default_value = "sweep_out")]
    out: PathBuf,
}

fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let started = unix_now();
    let spec = SweepSpec {
        base: args.base.to_config()?,
        axis: args.axis,
        values: args.values.clone(),
        n_trials: args.trials,
        methods: args.methods.clone(),
        percentile_p: args.percentile,
        solver: args.solver.to_config()?,
    };
    spec.validate()?;
    write_manifest(
        &args.out,
        "sweep",
        Some(spec.base.seed),
        json!({ "spec": spec, "parallelism": args.parallelism }),
        &["sweep.csv"],
        started,
    )?;

    let result = run_sweep(&spec, args.parallelism)?;
    write_atomic(&args.out.join("sweep.csv"), sweep_csv(&result).as_bytes())?;

    let flagged: usize = result.cells.iter().map(|c| c.n_failed).sum();
    for c in &result.cells {
        println!(
            "{}={}  {:>6}  p{} error {:.3e}  ({} failed)",
            spec.axis, c.axis_value, c.method.to_string(), spec.percentile_p,
            c.percentile_error, c.n_failed
        );
    }
    println!(
        "sweep: {} axis points × {} trials, {} flagged outcome(s); results in {}",
        spec.values.len(),
        spec.n_trials,
        flagged,
        args.out.display()
    );
    Ok(())
}

// ── grid ────────────────────────────────────────────────────────────────

#[derive(Args, Debug)]
struct GridArgs {
    /// Taps per channel K.
    #[arg(long = "K", default_value_t = 64)]
    k: usize,
    /// Channel count M.
    #[arg(long = "M", default_value_t = 8)]
    m: usize,
    /// Target SNR in dB; omit for noiseless observations.
    #[arg(long = "snr-db")]
    snr_db: Option<f64>,
    /// Gain spread.
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    /// Comma-separated D/K fractions in (0, 1].
    #[arg(long = "d-over-k", value_delimiter = ',', required = true)]
    d_over_k: Vec<f64>,
    /// Comma-separated L/K fractions.
    #[arg(long = "l-over-k", value_delimiter = ',', required = true)]
    l_over_k: Vec<f64>,
    /// Trials per grid cell.
    #[arg(long, default_value_t = DEFAULT_TRIALS)]
    trials: usize,
    /// Comma-separated estimators to run.
    #[arg(long, value_delimiter = ',', default_values_t = Method::ALL)]
    methods: Vec<Method>,
    /// Master seed (BLINDMC_SEED overrides).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    solver: SolverArgs,
    /// Worker threads for trial execution.
    #[arg(long, default_value_t = default_parallelism())]
    parallelism: usize,
    /// Output directory.
    #[arg(long, short = 'o', default_value = "grid_out")]
    out: PathBuf,
}

fn cmd_grid(args: &GridArgs) -> Result<()> {
    let started = unix_now();
    let spec = GridSpec {
        k: args.k,
        m: args.m,
        snr_db: args.snr_db,
        alpha: args.alpha,
        d_over_k: args.d_over_k.clone(),
        l_over_k: args.l_over_k.clone(),
        n_trials: args.trials,
        methods: args.methods.clone(),
        master_seed: resolve_seed(args.seed)?,
        solver: args.solver.to_config()?,
    };
    spec.validate()?;
    for di in 0..spec.d_over_k.len() {
        for lj in 0..spec.l_over_k.len() {
            let (cfg, adjusted) = spec.cell_config(di, lj)?;
            if adjusted {
                println!(
                    "warning: grid cell (D/K={}, L/K={}) rounds to D={}, L={}",
                    spec.d_over_k[di], spec.l_over_k[lj], cfg.d, cfg.l
                );
            }
        }
    }
    write_manifest(
        &args.out,
        "grid",
        Some(spec.master_seed),
        json!({ "spec": spec, "parallelism": args.parallelism }),
        &["grid.csv"],
        started,
    )?;

    let result = run_grid(&spec, args.parallelism)?;
    write_atomic(&args.out.join("grid.csv"), grid_csv(&result).as_bytes())?;

    let flagged: usize = result.cells.iter().map(|c| c.n_failed).sum();
    println!(
        "grid: {}×{} cells × {} trials, {} flagged outcome(s); results in {}",
        spec.d_over_k.len(),
        spec.l_over_k.len(),
        spec.n_trials,
        flagged,
        args.out.display()
    );
    Ok(())
}

// ── selftest ────────────────────────────────────────────────────────────

#[derive(Args, Debug)]
struct SelftestArgs {
    /// Seed for the oracle draws (BLINDMC_SEED overrides).
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

struct Check {
    name: &'static str,
    deviation: f64,
    tolerance: f64,
}

impl Check {
    fn passed(&self) -> bool {
        self.deviation.is_finite() && self.deviation <= self.tolerance
    }
}

fn cmd_selftest(args: &SelftestArgs) -> Result<()> {
    let seed = resolve_seed(args.seed)?;
    println!("selftest (seed {seed})");
    let checks = [
        check_gamma_against_naive_sums(seed)?,
        check_gram_against_dense_operator(seed)?,
        check_restricted_matrix_mean(seed)?,
        check_exact_recovery(seed)?,
    ];
    let mut failures = 0;
    for c in &checks {
        let verdict = if c.passed() { "ok  " } else { "FAIL" };
        if !c.passed() {
            failures += 1;
        }
        println!(
            "  {verdict}  {:<44} deviation {:.3e}  (tol {:.1e})",
            c.name, c.deviation, c.tolerance
        );
    }
    if failures > 0 {
        return Err(Error::Numerical(format!("selftest: {failures} check(s) failed")));
    }
    println!("all checks passed");
    Ok(())
}

/// The FFT-accumulated initialization correlation matrix against the
/// literal double sum Γ[d, j] = Σ_m Σ_k conj(Φ_m[k, d])·y_m[(k+j) mod L].
fn check_gamma_against_naive_sums(seed: u64) -> Result<Check> {
    let mut worst: f64 = 0.0;
    for s in 0..4 {
        let cfg = InstanceConfig {
            m: 4,
            k: 8,
            d: 3,
            l: 32,
            snr_db: Some(15.0),
            alpha: 0.5,
            seed: seed ^ s,
        };
        let inst = random_instance(&cfg)?;
        let fast = build_gamma(&inst.obs, &inst.basis)?;
        let naive = CMatrix::from_fn(cfg.d, cfg.l, |d, j| {
            let mut acc = Complex64::new(0.0, 0.0);
            for m in 0..cfg.m {
                for t in 0..cfg.k {
                    acc += inst.basis.block(m)[(t, d)].conj()
                        * inst.obs.outputs[m][(t + j) % cfg.l];
                }
            }
            acc
        });
        worst = worst.max(fast.sub(&naive).frob_norm() / naive.frob_norm());
    }
    Ok(Check {
        name: "correlation matrix vs naive double sum",
        deviation: worst,
        tolerance: 1e-10,
    })
}

/// The blockwise FFT Gram against G = Y*Y built from the dense
/// cross-convolution operator (one row block of ±C(y)·Sᵀ per pair).
fn check_gram_against_dense_operator(seed: u64) -> Result<Check> {
    let mut worst: f64 = 0.0;
    for s in 0..4 {
        let cfg = InstanceConfig {
            m: 3,
            k: 4,
            d: 2,
            l: 16,
            snr_db: Some(15.0),
            alpha: 0.5,
            seed: seed ^ s,
        };
        let inst = random_instance(&cfg)?;
        let fast = gram_yy(&inst.obs, cfg.k)?.to_dense();
        let op = dense_cross_operator(&inst.obs, cfg.k)?;
        let dense = op.adjoint().matmul(&op);
        worst = worst.max(fast.sub(&dense).frob_norm() / dense.frob_norm());
    }
    Ok(Check {
        name: "fft gram vs dense pair operator",
        deviation: worst,
        tolerance: 1e-10,
    })
}

/// Dense cross-convolution operator: for each channel pair (i, j) with
/// i < j, one L-row block holding +C(y_j)·Sᵀ in column block i and
/// −C(y_i)·Sᵀ in column block j.
fn dense_cross_operator(obs: &ObservationSet, k: usize) -> Result<CMatrix> {
    let (m, l) = (obs.channels(), obs.len());
    let pairs: Vec<(usize, usize)> =
        (0..m).flat_map(|i| ((i + 1)..m).map(move |j| (i, j))).collect();
    let mut op = CMatrix::zeros(pairs.len() * l, m * k);
    for (p, &(i, j)) in pairs.iter().enumerate() {
        for t in 0..k {
            let mut e = vec![Complex64::new(0.0, 0.0); l];
            e[t] = Complex64::new(1.0, 0.0);
            let plus = circ_conv(&obs.outputs[j], &e)?;
            let minus = circ_conv(&obs.outputs[i], &e)?;
            for r in 0..l {
                op[(p * l + r, i * k + t)] = plus[r];
                op[(p * l + r, j * k + t)] = -minus[r];
            }
        }
    }
    Ok(op)
}

/// The closed-form population restricted matrix against a Monte Carlo
/// mean over fresh basis draws at fixed gains, coefficients, and source.
fn check_restricted_matrix_mean(seed: u64) -> Result<Check> {
    let (m, k, d, l, draws) = (4usize, 16usize, 4usize, 48usize, 200usize);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gains: Vec<Complex64> = (0..m)
        .map(|_| Complex64::new(1.0 + 0.5 * rng.gen_range(-1.0..1.0), 0.0))
        .collect();
    let coeffs: Vec<Complex64> = (0..d).map(|_| sample_cn(&mut rng)).collect();
    let source: Vec<Complex64> = (0..l).map(|_| sample_cn(&mut rng)).collect();
    let expected = expected_a(&gains, &coeffs, norm_sq(&source), k)?;

    let mut mean = CMatrix::zeros(m * d, m * d);
    for _ in 0..draws {
        let blocks: Vec<CMatrix> =
            (0..m).map(|_| CMatrix::from_fn(k, d, |_, _| sample_cn(&mut rng))).collect();
        let basis = BilinearBasis::new(blocks)?;
        let model = synthesize_channels(&basis, &gains, &coeffs)?;
        let obs = synthesize_observations(&model, &source, 0.0, &mut rng)?;
        let a = build_a(&gram_yy(&obs, k)?, &basis, 0.0)?;
        mean = mean.add(&a);
    }
    mean = mean.scale(1.0 / draws as f64);
    let deviation = spectral_norm(&mean.sub(&expected))? / spectral_norm(&expected)?;
    Ok(Check {
        name: "population restricted matrix vs sample mean",
        deviation,
        tolerance: 0.15,
    })
}

/// Every estimator must nail a noiseless desk-scale instance.
fn check_exact_recovery(seed: u64) -> Result<Check> {
    let cfg = InstanceConfig {
        m: 8,
        k: 64,
        d: 8,
        l: 256,
        snr_db: None,
        alpha: 0.5,
        seed,
    };
    let solver = SolverConfig {
        sigma_hat_sq: SigmaHatMode::Zero,
        ..SolverConfig::default()
    };
    let rec: TrialRecord = run_trial(&cfg, &solver, &Method::ALL)?;
    let worst = rec
        .outcomes
        .iter()
        .map(|(_, o)| o.sin_angle)
        .fold(0.0f64, f64::max);
    Ok(Check {
        name: "noiseless exact recovery (all methods)",
        deviation: worst,
        tolerance: 1e-6,
    })
}

// ── Tests ───────────────────────────────────────────────────────────────
