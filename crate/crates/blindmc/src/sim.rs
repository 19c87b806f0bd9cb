//! Seeded Monte Carlo driver: single trials, one-parameter sweeps, and
//! phase-transition grids over the relative dimensions (D/K, L/K).
//!
//! Everything here is a pure function of its spec. Per-trial seeds come
//! from a fixed SplitMix64 chain over (master seed, axis-point index,
//! trial index), trials are independent work items on a bounded pool,
//! and percentiles are taken only after every trial has landed in its
//! slot — so results are byte-identical across worker counts and
//! execution orders. A failed trial never aborts a sweep: it is scored
//! at the worst-case error 1.0 and counted in the reported failure
//! tally.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algorithms::{estimate_all, EstimateResult, Method, SolverConfig, TruthRef};
use crate::error::{Error, Result};
use crate::metrics::{percentile, sin_angle};
use crate::model::{random_instance, BilinearBasis, Instance, InstanceConfig};

/// Trials per axis point when the caller does not say otherwise.
pub const DEFAULT_TRIALS: usize = 100;

/// Default aggregation percentile for sweeps.
pub const DEFAULT_PERCENTILE: f64 = 95.0;

/// Percentile the grid maps aggregate at.
pub const GRID_PERCENTILE: f64 = 95.0;

/// Errors are floored here before taking log₁₀, so an exact recovery
/// maps to −15 instead of −∞.
pub const LOG10_FLOOR: f64 = 1e-15;

// ── Sweep axes ──────────────────────────────────────────────────────────

/// Instance parameter varied along a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    /// Observation length.
    L,
    /// Subspace dimension.
    D,
    /// Channel count.
    M,
    /// Signal-to-noise ratio in dB.
    #[serde(rename = "snr_db")]
    SnrDb,
    /// Gain spread.
    #[serde(rename = "alpha")]
    Alpha,
}

impl Axis {
    pub const ALL: [Axis; 5] = [Axis::L, Axis::D, Axis::M, Axis::SnrDb, Axis::Alpha];

    /// The base config with this parameter set to `value`. Dimension
    /// axes take positive integers only; every result must pass the
    /// usual config validation.
    pub fn apply(self, base: &InstanceConfig, value: f64) -> Result<InstanceConfig> {
        let mut cfg = *base;
        match self {
            Axis::L | Axis::D | Axis::M => {
                if !value.is_finite() || value < 1.0 || value.fract() != 0.0 {
                    return Err(Error::Domain(format!(
                        "axis {self} takes positive integer values, got {value}"
                    )));
                }
                let v = value as usize;
                match self {
                    Axis::L => cfg.l = v,
                    Axis::D => cfg.d = v,
                    Axis::M => cfg.m = v,
                    _ => unreachable!(),
                }
            }
            Axis::SnrDb => {
                if !value.is_finite() {
                    return Err(Error::Domain(format!(
                        "axis snr_db takes finite values, got {value}"
                    )));
                }
                cfg.snr_db = Some(value);
            }
            Axis::Alpha => cfg.alpha = value,
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::L => "L",
            Axis::D => "D",
            Axis::M => "M",
            Axis::SnrDb => "snr_db",
            Axis::Alpha => "alpha",
        })
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "l" => Ok(Axis::L),
            "d" => Ok(Axis::D),
            "m" => Ok(Axis::M),
            "snr_db" => Ok(Axis::SnrDb),
            "alpha" => Ok(Axis::Alpha),
            _ => Err(Error::Config(format!(
                "unknown axis '{s}' (expected L, D, M, snr_db, or alpha)"
            ))),
        }
    }
}

// ── Seed derivation ─────────────────────────────────────────────────────

/// One SplitMix64 scramble: add the 64-bit golden-ratio increment
/// 0x9E3779B97F4A7C15, then Stafford's mix13 finalizer.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-trial seed: a three-stage SplitMix64 chain folding in the master
/// seed, then the axis-point index, then the trial index. The constants
/// are part of the format — recorded sweeps stay reproducible across
/// releases.
pub fn derive_seed(master: u64, axis_index: u64, trial_index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ axis_index) ^ trial_index)
}

// ── Trial records ───────────────────────────────────────────────────────

/// What one estimator did on one trial.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodOutcome {
    /// Final sin-angle error against the true stacked channel; the
    /// worst-case 1.0 when the estimator failed outright.
    pub sin_angle: f64,
    /// Channel-space error after each iteration, starting at the
    /// initialization point. Empty for the one-shot methods.
    pub error_trace: Vec<f64>,
    /// Seconds inside the estimator, shared precomputation excluded.
    pub wall_s: f64,
    pub converged: bool,
    /// An extremal eigenvalue was numerically repeated along the way.
    pub degenerate: bool,
    /// Failure message when the estimator errored instead of returning.
    pub failed: Option<String>,
}

/// Full record of one Monte Carlo trial. Every requested method has an
/// entry, failed or not, in request order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialRecord {
    /// Seed the instance was drawn from.
    pub seed: u64,
    /// Exact instance config, seed included.
    pub config: InstanceConfig,
    pub outcomes: Vec<(Method, MethodOutcome)>,
}

impl TrialRecord {
    pub fn outcome(&self, method: Method) -> Option<&MethodOutcome> {
        self.outcomes.iter().find(|(m, _)| *m == method).map(|(_, o)| o)
    }
}

fn failed_outcome(msg: &str) -> MethodOutcome {
    MethodOutcome {
        sin_angle: 1.0,
        error_trace: Vec::new(),
        wall_s: 0.0,
        converged: false,
        degenerate: false,
        failed: Some(msg.to_string()),
    }
}

fn failed_record(cfg: &InstanceConfig, methods: &[Method], msg: &str) -> TrialRecord {
    TrialRecord {
        seed: cfg.seed,
        config: *cfg,
        outcomes: methods.iter().map(|&m| (m, failed_outcome(msg))).collect(),
    }
}

/// ‖E[A]‖ for this instance's ground truth: K²·‖x‖²·‖a‖²·‖b‖². Handed to
/// the solvers so the expected-norm deflation mode works in simulation.
pub fn expected_operator_norm(inst: &Instance) -> f64 {
    let k = inst.basis.taps() as f64;
    let nx: f64 = inst.source.iter().map(|z| z.norm_sqr()).sum();
    let na: f64 = inst.model.gains.iter().map(|z| z.norm_sqr()).sum();
    let nb: f64 = inst.model.coeffs.iter().map(|z| z.norm_sqr()).sum();
    k * k * nx * na * nb
}

/// Score one estimate against the true stacked channel: the final
/// sin-angle error plus the channel-space error at every recorded
/// iterate (empty for the one-shot methods).
pub fn score_estimate(
    basis: &BilinearBasis,
    truth: &[Complex64],
    res: &EstimateResult,
) -> Result<(f64, Vec<f64>)> {
    let mut trace = Vec::with_capacity(res.iterates.len());
    for u in &res.iterates {
        trace.push(sin_angle(&basis.apply(u), truth)?);
    }
    Ok((sin_angle(&res.h_hat, truth)?, trace))
}

// ── Single trials ───────────────────────────────────────────────────────

/// Run one seeded trial: draw the instance, run the requested
/// estimators, and score each against the true stacked channel. The
/// record is a pure function of `cfg` (its seed included). Per-method
/// failures are recorded in the outcomes, not thrown; only invalid
/// inputs fail the call itself.
pub fn run_trial(
    cfg: &InstanceConfig,
    solver: &SolverConfig,
    methods: &[Method],
) -> Result<TrialRecord> {
    cfg.validate()?;
    solver.validate()?;
    if methods.is_empty() {
        return Err(Error::Config("no estimation methods requested".into()));
    }
    // Past input validation, any error is a per-trial accident and is
    // charged to every method rather than aborting the caller's sweep.
    Ok(trial_body(cfg, solver, methods)
        .unwrap_or_else(|e| failed_record(cfg, methods, &e.to_string())))
}

fn trial_body(
    cfg: &InstanceConfig,
    solver: &SolverConfig,
    methods: &[Method],
) -> Result<TrialRecord> {
    let inst = random_instance(cfg)?;
    let truth = inst.model.stacked();
    let truth_ref = TruthRef { expected_a_norm: expected_operator_norm(&inst) };
    let all = estimate_all(&inst.obs, &inst.basis, solver, methods, Some(&truth_ref))?;

    let mut outcomes = Vec::with_capacity(methods.len());
    for &method in methods {
        let outcome = match all.get(method) {
            Some(Ok(res)) => {
                let (err, error_trace) = score_estimate(&inst.basis, &truth, res)?;
                MethodOutcome {
                    sin_angle: err,
                    error_trace,
                    wall_s: res.elapsed,
                    converged: res.converged,
                    degenerate: res.degenerate,
                    failed: None,
                }
            }
            Some(Err(e)) => failed_outcome(&e.to_string()),
            None => failed_outcome("estimator produced no result"),
        };
        outcomes.push((method, outcome));
    }
    Ok(TrialRecord { seed: cfg.seed, config: *cfg, outcomes })
}

// ── Sweeps ──────────────────────────────────────────────────────────────

/// One-parameter Monte Carlo sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepSpec {
    /// Template config; its `seed` is the sweep's master seed, and the
    /// axis field is overridden per point.
    pub base: InstanceConfig,
    pub axis: Axis,
    /// Axis values, reported in this order.
    pub values: Vec<f64>,
    /// Trials per axis value.
    pub n_trials: usize,
    /// Estimators to run, reported in this order.
    pub methods: Vec<Method>,
    /// Aggregation percentile p ∈ (0, 100].
    pub percentile_p: f64,
    pub solver: SolverConfig,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::Config("sweep needs at least one axis value".into()));
        }
        for &v in &self.values {
            self.axis.apply(&self.base, v)?;
        }
        if self.n_trials == 0 {
            return Err(Error::Config("n_trials must be at least 1".into()));
        }
        check_methods(&self.methods)?;
        if !(self.percentile_p > 0.0 && self.percentile_p <= 100.0) {
            return Err(Error::Domain(format!(
                "percentile must lie in (0, 100], got {}",
                self.percentile_p
            )));
        }
        self.solver.validate()
    }
}

fn check_methods(methods: &[Method]) -> Result<()> {
    if methods.is_empty() {
        return Err(Error::Config("no estimation methods requested".into()));
    }
    for (i, m) in methods.iter().enumerate() {
        if methods[..i].contains(m) {
            return Err(Error::Config(format!("method '{m}' requested twice")));
        }
    }
    Ok(())
}

/// Aggregated errors at one (axis value, method) cell.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SweepCell {
    pub axis_value: f64,
    pub method: Method,
    /// p-th percentile of the per-trial errors, failures imputed at 1.0.
    pub percentile_error: f64,
    /// How many of the trials failed outright.
    pub n_failed: usize,
}

/// A sweep's aggregate table plus the raw records behind it
/// (`trials[i][t]` is trial `t` at `values[i]`), kept so callers can
/// re-aggregate or inspect convergence traces.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepResult {
    pub spec: SweepSpec,
    /// Cells in (axis value, method) request order.
    pub cells: Vec<SweepCell>,
    pub trials: Vec<Vec<TrialRecord>>,
}

fn worker_pool(parallelism: usize) -> Result<rayon::ThreadPool> {
    if parallelism == 0 {
        return Err(Error::Config("parallelism must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))
}

/// Percentile per method over one axis point's trials, failures imputed
/// at 1.0 and counted.
fn aggregate_point(
    axis_value: f64,
    trials: &[TrialRecord],
    methods: &[Method],
    p: f64,
) -> Result<Vec<SweepCell>> {
    let mut cells = Vec::with_capacity(methods.len());
    for &method in methods {
        let mut errors = Vec::with_capacity(trials.len());
        let mut n_failed = 0;
        for rec in trials {
            match rec.outcome(method) {
                Some(o) => {
                    if o.failed.is_some() {
                        n_failed += 1;
                    }
                    errors.push(o.sin_angle);
                }
                // A record missing the method entirely counts as a
                // failure too; the invariant says this never happens.
                None => {
                    n_failed += 1;
                    errors.push(1.0);
                }
            }
        }
        cells.push(SweepCell {
            axis_value,
            method,
            percentile_error: percentile(&errors, p)?,
            n_failed,
        });
    }
    Ok(cells)
}

/// Run the sweep on a bounded pool of `parallelism` workers. Seeds are
/// derived per (axis index, trial index), results land in an
/// index-addressed buffer, and aggregation happens only after the last
/// trial — the output is a pure function of `spec`.
pub fn run_sweep(spec: &SweepSpec, parallelism: usize) -> Result<SweepResult> {
    spec.validate()?;
    let pool = worker_pool(parallelism)?;

    let n = spec.n_trials;
    let mut jobs = Vec::with_capacity(spec.values.len() * n);
    for (ai, &v) in spec.values.iter().enumerate() {
        let point = spec.axis.apply(&spec.base, v)?;
        for t in 0..n {
            let mut cfg = point;
            cfg.seed = derive_seed(spec.base.seed, ai as u64, t as u64);
            jobs.push(cfg);
        }
    }

    let records: Vec<TrialRecord> = pool.install(|| {
        jobs.par_iter()
            .map(|cfg| run_trial(cfg, &spec.solver, &spec.methods))
            .collect::<Result<_>>()
    })?;

    let trials: Vec<Vec<TrialRecord>> =
        records.chunks(n).map(|c| c.to_vec()).collect();
    let mut cells = Vec::with_capacity(spec.values.len() * spec.methods.len());
    for (ai, &v) in spec.values.iter().enumerate() {
        cells.extend(aggregate_point(v, &trials[ai], &spec.methods, spec.percentile_p)?);
    }
    Ok(SweepResult { spec: spec.clone(), cells, trials })
}

/// Sweep table as CSV: `axis_value,method,percentile_error,n_failed`,
/// rows in (axis value, method) request order. Shortest-round-trip
/// float formatting keeps equal specs byte-identical.
pub fn sweep_csv(result: &SweepResult) -> String {
    let mut out = String::from("axis_value,method,percentile_error,n_failed\n");
    for c in &result.cells {
        out.push_str(&format!(
            "{},{},{},{}\n",
            c.axis_value, c.method, c.percentile_error, c.n_failed
        ));
    }
    out
}

// ── Phase-transition grids ──────────────────────────────────────────────

/// Monte Carlo grid over the relative dimensions (D/K, L/K) at fixed
/// K, M, SNR, and gain spread. Cell dimensions are D = ⌊d·K⌋ clamped up
/// to 1 and L = ⌊l·K⌋ clamped up to K.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSpec {
    pub k: usize,
    pub m: usize,
    /// `None` means noiseless.
    pub snr_db: Option<f64>,
    pub alpha: f64,
    /// Subspace fractions D/K, each in (0, 1].
    pub d_over_k: Vec<f64>,
    /// Length fractions L/K, each positive.
    pub l_over_k: Vec<f64>,
    /// Trials per grid cell.
    pub n_trials: usize,
    pub methods: Vec<Method>,
    pub master_seed: u64,
    pub solver: SolverConfig,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.d_over_k.is_empty() || self.l_over_k.is_empty() {
            return Err(Error::Config("grid needs at least one value per axis".into()));
        }
        if self.n_trials == 0 {
            return Err(Error::Config("n_trials must be at least 1".into()));
        }
        check_methods(&self.methods)?;
        self.solver.validate()?;
        for di in 0..self.d_over_k.len() {
            for lj in 0..self.l_over_k.len() {
                self.cell_config(di, lj)?;
            }
        }
        Ok(())
    }

    /// Instance config at grid cell (di, lj), plus whether rounding or
    /// clamping adjusted the requested fractions.
    pub fn cell_config(&self, di: usize, lj: usize) -> Result<(InstanceConfig, bool)> {
        let dk = self.d_over_k[di];
        let lk = self.l_over_k[lj];
        if !dk.is_finite() || !(dk > 0.0 && dk <= 1.0) {
            return Err(Error::Domain(format!(
                "d_over_k must lie in (0, 1], got {dk}"
            )));
        }
        if !lk.is_finite() || lk <= 0.0 {
            return Err(Error::Domain(format!("l_over_k must be positive, got {lk}")));
        }
        let d_exact = dk * self.k as f64;
        let l_exact = lk * self.k as f64;
        let d = (d_exact.floor() as usize).max(1);
        let l = (l_exact.floor() as usize).max(self.k);
        let adjusted = d as f64 != d_exact || l as f64 != l_exact;
        let cfg = InstanceConfig {
            m: self.m,
            k: self.k,
            d,
            l,
            snr_db: self.snr_db,
            alpha: self.alpha,
            seed: self.master_seed,
        };
        cfg.validate()?;
        Ok((cfg, adjusted))
    }

    /// Axis-point index used for seed derivation: row-major over
    /// (d_over_k, l_over_k).
    pub fn axis_index(&self, di: usize, lj: usize) -> u64 {
        (di * self.l_over_k.len() + lj) as u64
    }
}

/// One aggregated grid cell for one method.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GridCell {
    pub d_over_k: f64,
    pub l_over_k: f64,
    pub method: Method,
    /// 95th-percentile error at this cell, failures imputed at 1.0.
    pub percentile_error: f64,
    /// log₁₀ of the percentile error, floored at `LOG10_FLOOR`.
    pub log10_error: f64,
    pub n_failed: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridResult {
    pub spec: GridSpec,
    /// Cells in row-major (d_over_k, l_over_k, method) order.
    pub cells: Vec<GridCell>,
}

/// Evaluate the grid; same determinism contract as `run_sweep`, with
/// the cell's linearized index standing in for the axis index in seed
/// derivation.
pub fn run_grid(spec: &GridSpec, parallelism: usize) -> Result<GridResult> {
    spec.validate()?;
    let pool = worker_pool(parallelism)?;

    let n = spec.n_trials;
    let mut jobs = Vec::with_capacity(spec.d_over_k.len() * spec.l_over_k.len() * n);
    for di in 0..spec.d_over_k.len() {
        for lj in 0..spec.l_over_k.len() {
            let (point, _) = spec.cell_config(di, lj)?;
            let axis = spec.axis_index(di, lj);
            for t in 0..n {
                let mut cfg = point;
                cfg.seed = derive_seed(spec.master_seed, axis, t as u64);
                jobs.push(cfg);
            }
        }
    }

    let records: Vec<TrialRecord> = pool.install(|| {
        jobs.par_iter()
            .map(|cfg| run_trial(cfg, &spec.solver, &spec.methods))
            .collect::<Result<_>>()
    })?;

    let mut cells = Vec::with_capacity(jobs.len() / n * spec.methods.len());
    let mut chunks = records.chunks(n);
    for &dk in &spec.d_over_k {
        for &lk in &spec.l_over_k {
            let trials = chunks.next().expect("one chunk per grid cell");
            for c in aggregate_point(0.0, trials, &spec.methods, GRID_PERCENTILE)? {
                cells.push(GridCell {
                    d_over_k: dk,
                    l_over_k: lk,
                    method: c.method,
                    percentile_error: c.percentile_error,
                    log10_error: c.percentile_error.max(LOG10_FLOOR).log10(),
                    n_failed: c.n_failed,
                });
            }
        }
    }
    Ok(GridResult { spec: spec.clone(), cells })
}

/// Grid table as long-form CSV: `d_over_k,l_over_k,method,log10_error`,
/// rows in row-major (d_over_k, l_over_k, method) order.
pub fn grid_csv(result: &GridResult) -> String {
    let mut out = String::from("d_over_k,l_over_k,method,log10_error\n");
    for c in &result.cells {
        out.push_str(&format!(
            "{},{},{},{}\n",
            c.d_over_k, c.l_over_k, c.method, c.log10_error
        ));
    }
    out
}

// ── Tests ───────────────────────────────────────────────────────────────
