//! The estimators: classical cross-convolution (CC), its
//! subspace-constrained variant (SCCC), spectral initialization, the
//! alternating-eigenvector solver (AltEig), and the rank-1 truncated
//! power method (RTPM).
//!
//! All four channel estimators minimize the same quadratic form — the
//! cross-convolution Gram, optionally restricted to the basis — but over
//! successively more structured feasible sets: CC over all stacked
//! channels, SCCC over the basis range, AltEig and RTPM over the rank-1
//! cone {a⊗b}. The iterative two are seeded by a spectral initializer
//! that reads the shared coefficient direction off a correlation matrix.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use num_complex::Complex64;
use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::crosscorr::{build_a, build_gamma, gram_yy, GramYY};
use crate::eig::{max_eig_vector, min_eig_vector, phase_normalize, rank1_approx, spectral_norm, EigenPair};
use crate::error::{Error, Result};
use crate::mat::{kron_vec, mat_from_stacked, CMatrix};
use crate::metrics::sin_angle;
use crate::model::{BilinearBasis, ObservationSet};
use crate::signal::{norm, normalize};

// ── Method selection ────────────────────────────────────────────────────

/// The four channel estimators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Cc,
    Sccc,
    AltEig,
    Rtpm,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Cc, Method::Sccc, Method::AltEig, Method::Rtpm];

    /// Whether this method consumes the spectral initializer's b0.
    pub fn needs_init(self) -> bool {
        matches!(self, Method::AltEig | Method::Rtpm)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Cc => "cc",
            Method::Sccc => "sccc",
            Method::AltEig => "alteig",
            Method::Rtpm => "rtpm",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cc" => Ok(Method::Cc),
            "sccc" => Ok(Method::Sccc),
            "alteig" | "alt-eig" => Ok(Method::AltEig),
            "rtpm" => Ok(Method::Rtpm),
            other => Err(Error::Config(format!(
                "unknown method '{other}' (expected cc, sccc, alteig, or rtpm)"
            ))),
        }
    }
}

// ── Solver configuration ────────────────────────────────────────────────

/// Where the noise-variance estimate σ̂_w² comes from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SigmaHatMode {
    /// Use the generating σ_w² recorded on the observation set
    /// (simulation only; errors on data of unknown provenance).
    Exact,
    /// No compensation (σ̂_w² = 0).
    Zero,
    /// An explicit noise variance.
    Value(f64),
}

impl SigmaHatMode {
    fn check(v: f64) -> Result<f64> {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::Config(format!(
                "noise variance must be finite and nonnegative, got {v}"
            )));
        }
        Ok(v)
    }
}

impl fmt::Display for SigmaHatMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SigmaHatMode::Exact => f.write_str("exact"),
            SigmaHatMode::Zero => f.write_str("zero"),
            SigmaHatMode::Value(v) => write!(f, "{v}"),
        }
    }
}

impl FromStr for SigmaHatMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "exact" => Ok(SigmaHatMode::Exact),
            "zero" => Ok(SigmaHatMode::Zero),
            other => match other.parse::<f64>() {
                Ok(v) => Ok(SigmaHatMode::Value(Self::check(v)?)),
                Err(_) => Err(Error::Config(format!(
                    "noise-variance mode must be 'exact', 'zero', or a number, got '{s}'"
                ))),
            },
        }
    }
}

impl Serialize for SigmaHatMode {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            SigmaHatMode::Exact => s.serialize_str("exact"),
            SigmaHatMode::Zero => s.serialize_str("zero"),
            SigmaHatMode::Value(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for SigmaHatMode {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct ModeVisitor;

        impl<'de> Visitor<'de> for ModeVisitor {
            type Value = SigmaHatMode;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("\"exact\", \"zero\", or a nonnegative noise variance")
            }

            fn visit_str<E: de::Error>(self, s: &str) -> std::result::Result<Self::Value, E> {
                s.parse().map_err(|e| E::custom(format!("{e}")))
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Self::Value, E> {
                SigmaHatMode::check(v)
                    .map(SigmaHatMode::Value)
                    .map_err(|e| E::custom(format!("{e}")))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Self::Value, E> {
                self.visit_f64(v as f64)
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Self::Value, E> {
                self.visit_f64(v as f64)
            }
        }

        d.deserialize_any(ModeVisitor)
    }
}

/// How RTPM picks its deflation scale γ (the iteration runs on γI − A).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaMode {
    /// γ = ‖A‖ measured on the data at hand (always available).
    SampleNorm,
    /// γ = the population-level ‖E[A]‖; needs ground truth, so this is a
    /// simulation-only mode.
    ExpectedNorm,
}

impl fmt::Display for GammaMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GammaMode::SampleNorm => "sample_norm",
            GammaMode::ExpectedNorm => "expected_norm",
        })
    }
}

impl FromStr for GammaMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "sample_norm" => Ok(GammaMode::SampleNorm),
            "expected_norm" => Ok(GammaMode::ExpectedNorm),
            other => Err(Error::Config(format!(
                "unknown deflation mode '{other}' (expected sample_norm or expected_norm)"
            ))),
        }
    }
}

/// Shared solver settings for the iterative estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub max_iters: usize,
    /// Stop once the sin-angle change between successive iterates falls
    /// below this.
    pub tol: f64,
    pub sigma_hat_sq: SigmaHatMode,
    pub gamma_mode: GammaMode,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iters: 50,
            tol: 1e-10,
            sigma_hat_sq: SigmaHatMode::Exact,
            gamma_mode: GammaMode::SampleNorm,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be at least 1".into()));
        }
        if self.tol <= 0.0 || self.tol.is_nan() {
            return Err(Error::Config(format!(
                "tolerance must be positive, got {}",
                self.tol
            )));
        }
        if let SigmaHatMode::Value(v) = self.sigma_hat_sq {
            SigmaHatMode::check(v)?;
        }
        Ok(())
    }

    /// Turn the configured noise mode into a concrete σ̂_w² for this
    /// observation set.
    pub fn resolve_sigma_sq(&self, obs: &ObservationSet) -> Result<f64> {
        match self.sigma_hat_sq {
            SigmaHatMode::Exact => obs
                .sigma_w
                .map(|s| s * s)
                .ok_or_else(|| {
                    Error::Config(
                        "exact noise compensation needs data with a known noise level; \
                         use mode 'zero' or pass an explicit variance"
                            .into(),
                    )
                }),
            SigmaHatMode::Zero => Ok(0.0),
            SigmaHatMode::Value(v) => SigmaHatMode::check(v),
        }
    }
}

// ── Results ─────────────────────────────────────────────────────────────

/// Output of one estimator run.
#[derive(Debug, Clone)]
pub struct EstimateResult {
    pub method: Method,
    /// Stacked channel estimate, unit norm, phase-normalized.
    pub h_hat: Vec<Complex64>,
    /// Gain estimate; absent for the structure-free methods (CC, SCCC).
    pub a_hat: Option<Vec<Complex64>>,
    /// Shared-coefficient estimate; absent for CC only (SCCC reports the
    /// dominant coefficient direction across its per-channel blocks).
    pub b_hat: Option<Vec<Complex64>>,
    /// Sin-angle change between successive iterates, one entry per
    /// iteration. Empty for the one-shot methods.
    pub iterations: Vec<f64>,
    /// Stacked coefficient iterate after each iteration, preceded by the
    /// initialization point. Empty for the one-shot methods.
    pub iterates: Vec<Vec<Complex64>>,
    pub converged: bool,
    /// An extremal eigenvalue was numerically repeated somewhere along
    /// the way; the estimate is then one arbitrary member of a family.
    pub degenerate: bool,
    /// Seconds spent in this estimator (excluding shared precomputation).
    pub elapsed: f64,
}

/// Everything `estimate_all` produced: per-method outcomes (failures
/// don't abort the other methods) plus the shared-stage timings.
#[derive(Debug)]
pub struct AllEstimates {
    pub results: Vec<(Method, Result<EstimateResult>)>,
    pub gram_s: f64,
    pub restrict_s: f64,
    pub init_s: f64,
}

impl AllEstimates {
    pub fn get(&self, method: Method) -> Option<&Result<EstimateResult>> {
        self.results.iter().find(|(m, _)| *m == method).map(|(_, r)| r)
    }
}

/// Ground-truth quantities an estimator may borrow in simulation mode.
#[derive(Debug, Clone, Copy)]
pub struct TruthRef {
    /// ‖E[A]‖ = K²·‖x‖²·‖a‖²·‖b‖², the population deflation scale.
    pub expected_a_norm: f64,
}

// ── Shared pieces ───────────────────────────────────────────────────────

/// Map stacked coefficients to the unit-norm, phase-normalized stacked
/// channel estimate.
fn channels_from_coeffs(basis: &BilinearBasis, u: &[Complex64]) -> Vec<Complex64> {
    let mut h = basis.apply(u);
    normalize(&mut h);
    phase_normalize(&mut h);
    h
}

/// Gain update: minimize the form over a at fixed b. The M×M restriction
/// has entries b*·A(i,j)·b.
fn a_half_step(a_mat: &CMatrix, b: &[Complex64]) -> Result<EigenPair> {
    let d = b.len();
    let m = a_mat.rows() / d;
    let mut t = CMatrix::from_fn(m, m, |i, j| {
        let mut acc = Complex64::new(0.0, 0.0);
        for r in 0..d {
            let br = b[r].conj();
            for c in 0..d {
                acc += br * a_mat[(i * d + r, j * d + c)] * b[c];
            }
        }
        acc
    });
    t.hermitize();
    min_eig_vector(&t)
}

/// Coefficient update: minimize the form over b at fixed a. The D×D
/// restriction is Σ_{i,j} conj(a_i)·a_j·A(i,j).
fn b_half_step(a_mat: &CMatrix, a: &[Complex64]) -> Result<EigenPair> {
    let m = a.len();
    let d = a_mat.rows() / m;
    let mut t = CMatrix::from_fn(d, d, |r, c| {
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..m {
            let ai = a[i].conj();
            for j in 0..m {
                acc += ai * a[j] * a_mat[(i * d + r, j * d + c)];
            }
        }
        acc
    });
    t.hermitize();
    min_eig_vector(&t)
}

fn check_b0(basis: &BilinearBasis, b0: &[Complex64]) -> Result<Vec<Complex64>> {
    if b0.len() != basis.dim() {
        return Err(Error::Dimension(format!(
            "initial coefficients have length {}, basis dimension is {}",
            b0.len(),
            basis.dim()
        )));
    }
    let n = norm(b0);
    if (n - 1.0).abs() > 1e-8 {
        return Err(Error::Domain(format!(
            "initial coefficients must be unit norm, got ‖b0‖ = {n}"
        )));
    }
    let mut b = b0.to_vec();
    phase_normalize(&mut b);
    Ok(b)
}

fn check_restriction(a_mat: &CMatrix, basis: &BilinearBasis) -> Result<()> {
    let n = basis.channels() * basis.dim();
    if a_mat.rows() != n || a_mat.cols() != n {
        return Err(Error::Dimension(format!(
            "restricted matrix is {}x{}, expected {n}x{n}",
            a_mat.rows(),
            a_mat.cols()
        )));
    }
    Ok(())
}

// ── Estimators ──────────────────────────────────────────────────────────

/// Classical cross-convolution estimate: the minimum eigenvector of the
/// full Gram, with no structure imposed beyond the tap count.
pub fn cc_estimate(gram: &GramYY) -> Result<EstimateResult> {
    let t0 = Instant::now();
    let pair = min_eig_vector(&gram.to_dense())?;
    Ok(EstimateResult {
        method: Method::Cc,
        h_hat: pair.vector,
        a_hat: None,
        b_hat: None,
        iterations: Vec::new(),
        iterates: Vec::new(),
        converged: true,
        degenerate: pair.degenerate,
        elapsed: t0.elapsed().as_secs_f64(),
    })
}

/// Subspace-constrained estimate: minimum eigenvector of the restricted,
/// noise-compensated Gram Φ*(G − σ̂²(M−1)L·I)Φ, mapped back through Φ.
pub fn sccc_estimate(
    gram: &GramYY,
    basis: &BilinearBasis,
    sigma_hat_sq: f64,
) -> Result<EstimateResult> {
    let t0 = Instant::now();
    let a_mat = build_a(gram, basis, sigma_hat_sq)?;
    let pair = min_eig_vector(&a_mat)?;
    let h_hat = channels_from_coeffs(basis, &pair.vector);
    // The per-channel coefficient blocks approximate a_m·b; their
    // dominant right factor is the natural shared-direction readout.
    let v_mat = mat_from_stacked(&pair.vector, basis.channels(), basis.dim());
    let factors = rank1_approx(&v_mat);
    Ok(EstimateResult {
        method: Method::Sccc,
        h_hat,
        a_hat: None,
        b_hat: Some(factors.right),
        iterations: Vec::new(),
        iterates: Vec::new(),
        converged: true,
        degenerate: pair.degenerate,
        elapsed: t0.elapsed().as_secs_f64(),
    })
}

/// Spectral initialization: b0 is the top eigenvector of
/// Γ·Γ* − σ̂_w²·L·Σ_m Φ_m*Φ_m. Returns the unit vector and a degeneracy
/// flag for a numerically repeated top eigenvalue.
pub fn spectral_init(
    obs: &ObservationSet,
    basis: &BilinearBasis,
    sigma_hat_sq: f64,
) -> Result<(Vec<Complex64>, bool)> {
    let gamma = build_gamma(obs, basis)?;
    spectral_init_from_gamma(&gamma, basis, sigma_hat_sq, obs.len())
}

/// Same as `spectral_init` for a correlation matrix built elsewhere
/// (e.g. a population-level Γ in diagnostics).
pub fn spectral_init_from_gamma(
    gamma: &CMatrix,
    basis: &BilinearBasis,
    sigma_hat_sq: f64,
    l: usize,
) -> Result<(Vec<Complex64>, bool)> {
    if gamma.rows() != basis.dim() {
        return Err(Error::Dimension(format!(
            "correlation matrix has {} rows, basis dimension is {}",
            gamma.rows(),
            basis.dim()
        )));
    }
    let mut b_mat = gamma.matmul(&gamma.adjoint());
    if sigma_hat_sq > 0.0 {
        b_mat = b_mat.sub(&basis.coeff_gram().scale(sigma_hat_sq * l as f64));
    }
    b_mat.hermitize();
    let pair = max_eig_vector(&b_mat)?;
    Ok((pair.vector, pair.degenerate))
}

/// Alternating eigenvectors: from b0, repeat (gain update, coefficient
/// update) — each an exact extremal eigenproblem on an M×M or D×D
/// restriction — until the joint iterate a⊗b moves less than `tol` in
/// sin-angle, or `max_iters` is reached. Each half-step globally
/// minimizes the quadratic form over its own block, so the form is
/// non-increasing along the iteration.
pub fn alt_eig(
    a_mat: &CMatrix,
    basis: &BilinearBasis,
    b0: &[Complex64],
    cfg: &SolverConfig,
) -> Result<EstimateResult> {
    cfg.validate()?;
    check_restriction(a_mat, basis)?;
    let mut b_hat = check_b0(basis, b0)?;
    let t0 = Instant::now();

    let mut a_hat: Vec<Complex64> = Vec::new();
    let mut iterates: Vec<Vec<Complex64>> = Vec::new();
    let mut iterations: Vec<f64> = Vec::new();
    let mut degenerate = false;
    let mut converged = false;
    let mut u_prev: Option<Vec<Complex64>> = None;

    for iter in 0..cfg.max_iters {
        let pair_a = a_half_step(a_mat, &b_hat)?;
        degenerate |= pair_a.degenerate;
        a_hat = pair_a.vector;
        if iter == 0 {
            // The initialization point a0⊗b0, before any coefficient
            // update — the same v0 the power method starts from.
            iterates.push(kron_vec(&a_hat, &b_hat));
        }
        let pair_b = b_half_step(a_mat, &a_hat)?;
        degenerate |= pair_b.degenerate;
        b_hat = pair_b.vector;

        let u = kron_vec(&a_hat, &b_hat);
        let step = sin_angle(&u, u_prev.as_deref().unwrap_or(&iterates[0]))?;
        iterates.push(u.clone());
        iterations.push(step);
        u_prev = Some(u);
        if step < cfg.tol {
            converged = true;
            break;
        }
    }

    let u_final = u_prev.expect("at least one iteration ran");
    Ok(EstimateResult {
        method: Method::AltEig,
        h_hat: channels_from_coeffs(basis, &u_final),
        a_hat: Some(a_hat),
        b_hat: Some(b_hat),
        iterations,
        iterates,
        converged,
        degenerate,
        elapsed: t0.elapsed().as_secs_f64(),
    })
}

/// Rank-1 truncated power method: power iteration on B = γI − A,
/// projecting every iterate back onto the rank-1 cone. The starting
/// point is a0⊗b0 with a0 one gain update from b0; each step multiplies
/// by B (as γv − Av, never forming B) and replaces the result with its
/// best rank-1 approximation in the M×D coefficient layout.
pub fn rtpm(
    a_mat: &CMatrix,
    basis: &BilinearBasis,
    b0: &[Complex64],
    gamma: f64,
    cfg: &SolverConfig,
) -> Result<EstimateResult> {
    cfg.validate()?;
    check_restriction(a_mat, basis)?;
    let b_start = check_b0(basis, b0)?;
    if !gamma.is_finite() || gamma <= 0.0 {
        return Err(Error::Domain(format!(
            "deflation scale must be positive and finite, got {gamma}"
        )));
    }
    let t0 = Instant::now();
    let (m, d) = (basis.channels(), basis.dim());

    let pair_a = a_half_step(a_mat, &b_start)?;
    let degenerate = pair_a.degenerate;
    let mut a_hat = pair_a.vector;
    let mut b_hat = b_start;
    let mut v = kron_vec(&a_hat, &b_hat);

    let mut iterates = vec![v.clone()];
    let mut iterations = Vec::new();
    let mut converged = false;

    for _ in 0..cfg.max_iters {
        let av = a_mat.matvec(&v);
        let w: Vec<Complex64> = v.iter().zip(av.iter()).map(|(vi, ai)| gamma * vi - ai).collect();
        if norm(&w) <= f64::MIN_POSITIVE.sqrt() {
            // B annihilates the iterate — it already is an eigenvector.
            converged = true;
            break;
        }
        let factors = rank1_approx(&mat_from_stacked(&w, m, d));
        a_hat = factors.left;
        b_hat = factors.right;
        let v_new = kron_vec(&a_hat, &b_hat);
        let step = sin_angle(&v_new, &v)?;
        iterates.push(v_new.clone());
        iterations.push(step);
        v = v_new;
        if step < cfg.tol {
            converged = true;
            break;
        }
    }

    Ok(EstimateResult {
        method: Method::Rtpm,
        h_hat: channels_from_coeffs(basis, &v),
        a_hat: Some(a_hat),
        b_hat: Some(b_hat),
        iterations,
        iterates,
        converged,
        degenerate,
        elapsed: t0.elapsed().as_secs_f64(),
    })
}

// ── Orchestration ───────────────────────────────────────────────────────

/// Run the requested estimators on one observation set, sharing the Gram,
/// the restricted matrix, and the spectral initialization across methods.
/// Per-method failures are recorded without aborting the remaining
/// methods; only invalid shared inputs fail the whole call.
pub fn estimate_all(
    obs: &ObservationSet,
    basis: &BilinearBasis,
    cfg: &SolverConfig,
    methods: &[Method],
    truth: Option<&TruthRef>,
) -> Result<AllEstimates> {
    cfg.validate()?;
    obs.validate()?;
    if methods.is_empty() {
        return Err(Error::Config("no estimation methods requested".into()));
    }
    for (i, m) in methods.iter().enumerate() {
        if methods[..i].contains(m) {
            return Err(Error::Config(format!("method '{m}' requested twice")));
        }
    }
    if basis.channels() != obs.channels() {
        return Err(Error::Dimension(format!(
            "basis has {} channels, observations {}",
            basis.channels(),
            obs.channels()
        )));
    }
    if basis.taps() > obs.len() {
        return Err(Error::Dimension(format!(
            "tap count {} exceeds observation length {}",
            basis.taps(),
            obs.len()
        )));
    }
    let sigma_sq = cfg.resolve_sigma_sq(obs)?;

    let t = Instant::now();
    let gram = gram_yy(obs, basis.taps())?;
    let gram_s = t.elapsed().as_secs_f64();

    let needs_a = methods.iter().any(|m| m.needs_init());
    let t = Instant::now();
    let a_mat = if needs_a {
        Some(build_a(&gram, basis, sigma_sq)?)
    } else {
        None
    };
    let restrict_s = t.elapsed().as_secs_f64();

    let t = Instant::now();
    // Stored as message-or-value so both consumers can reuse one run.
    let init: Option<std::result::Result<(Vec<Complex64>, bool), String>> = if needs_a {
        Some(spectral_init(obs, basis, sigma_sq).map_err(|e| e.to_string()))
    } else {
        None
    };
    let init_s = t.elapsed().as_secs_f64();

    let take_init = |init: &Option<std::result::Result<(Vec<Complex64>, bool), String>>| {
        match init.as_ref().expect("initialization ran for iterative methods") {
            Ok(v) => Ok(v.clone()),
            Err(msg) => Err(Error::Numerical(format!(
                "spectral initialization failed: {msg}"
            ))),
        }
    };

    let mut results = Vec::with_capacity(methods.len());
    for &method in methods {
        let res = match method {
            Method::Cc => cc_estimate(&gram),
            Method::Sccc => sccc_estimate(&gram, basis, sigma_sq),
            Method::AltEig => take_init(&init).and_then(|(b0, init_degen)| {
                let a = a_mat.as_ref().expect("restriction built for iterative methods");
                alt_eig(a, basis, &b0, cfg).map(|mut r| {
                    r.degenerate |= init_degen;
                    r
                })
            }),
            Method::Rtpm => take_init(&init).and_then(|(b0, init_degen)| {
                let a = a_mat.as_ref().expect("restriction built for iterative methods");
                let gamma = match cfg.gamma_mode {
                    GammaMode::SampleNorm => spectral_norm(a)?,
                    GammaMode::ExpectedNorm => {
                        truth
                            .ok_or_else(|| {
                                Error::Config(
                                    "expected_norm deflation needs ground truth; \
                                     use sample_norm on measured data"
                                        .into(),
                                )
                            })?
                            .expected_a_norm
                    }
                };
                rtpm(a, basis, &b0, gamma, cfg).map(|mut r| {
                    r.degenerate |= init_degen;
                    r
                })
            }),
        };
        results.push((method, res));
    }

    Ok(AllEstimates {
        results,
        gram_s,
        restrict_s,
        init_s,
    })
}

// ── Tests ───────────────────────────────────────────────────────────────

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crosscorr::GRAM_BUILD_COUNT;
    use crate::model::{
        random_instance, sample_cn, synthesize_channels, synthesize_observations, Instance,
        InstanceConfig,
    };
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::atomic::Ordering;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn noiseless(seed: u64) -> Instance {
        random_instance(&InstanceConfig {
            m: 4,
            k: 16,
            d: 4,
            l: 64,
            snr_db: None,
            alpha: 0.5,
            seed,
        })
        .unwrap()
    }

    fn unit(v: &[Complex64]) -> Vec<Complex64> {
        let mut u = v.to_vec();
        normalize(&mut u);
        u
    }

    fn truth_error(inst: &Instance, h_hat: &[Complex64]) -> f64 {
        sin_angle(h_hat, &inst.model.stacked()).unwrap()
    }

    /// Iteration budget for the small test instances: their restricted
    /// Gram has a thinner spectral gap than production-sized ones, so the
    /// power method's linear rate is slower (~0.85/iteration).
    fn small_instance_cfg() -> SolverConfig {
        SolverConfig {
            max_iters: 200,
            ..SolverConfig::default()
        }
    }

    #[test]
    fn all_methods_recover_noiseless_instances() {
        for seed in [0, 1] {
            let inst = noiseless(seed);
            let cfg = small_instance_cfg();
            let before = GRAM_BUILD_COUNT.load(Ordering::Relaxed);
            let all = estimate_all(&inst.obs, &inst.basis, &cfg, &Method::ALL, None).unwrap();
            assert_eq!(
                GRAM_BUILD_COUNT.load(Ordering::Relaxed),
                before + 1,
                "the Gram must be assembled exactly once per estimate_all call"
            );
            for (method, res) in &all.results {
                let r = res.as_ref().unwrap_or_else(|e| panic!("{method}: {e}"));
                let err = truth_error(&inst, &r.h_hat);
                assert!(err <= 1e-6, "seed {seed}, {method}: sin-angle {err:.2e}");
                assert!((norm(&r.h_hat) - 1.0).abs() <= 1e-12, "{method}: not unit norm");
            }
        }
    }

    #[test]
    fn factored_results_satisfy_their_own_structure() {
        let inst = noiseless(2);
        let cfg = SolverConfig::default();
        let all = estimate_all(&inst.obs, &inst.basis, &cfg, &Method::ALL, None).unwrap();
        for (method, res) in &all.results {
            let r = res.as_ref().unwrap();
            match method {
                Method::Cc => assert!(r.a_hat.is_none() && r.b_hat.is_none()),
                Method::Sccc => {
                    assert!(r.a_hat.is_none());
                    let b = r.b_hat.as_ref().unwrap();
                    assert!((norm(b) - 1.0).abs() <= 1e-10);
                }
                Method::AltEig | Method::Rtpm => {
                    let (a, b) = (r.a_hat.as_ref().unwrap(), r.b_hat.as_ref().unwrap());
                    assert!((norm(a) - 1.0).abs() <= 1e-10);
                    assert!((norm(b) - 1.0).abs() <= 1e-10);
                    // h_hat must be exactly the channel lift of a⊗b.
                    let lifted = channels_from_coeffs(&inst.basis, &kron_vec(a, b));
                    let dev = sin_angle(&lifted, &r.h_hat).unwrap();
                    assert!(dev <= 1e-10, "{method}: lift deviates {dev:.2e}");
                }
            }
        }
    }

    #[test]
    fn cc_flags_degenerate_when_all_outputs_coincide() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let y: Vec<Complex64> = (0..12).map(|_| sample_cn(&mut rng)).collect();
        let obs = ObservationSet {
            outputs: vec![y.clone(), y.clone(), y],
            sigma_w: Some(0.0),
        };
        let gram = crate::crosscorr::gram_yy(&obs, 3).unwrap();
        let r = cc_estimate(&gram).unwrap();
        assert!(r.degenerate, "identical outputs leave a multi-dimensional null space");
    }

    #[test]
    fn estimates_are_invariant_to_output_scaling() {
        let inst = noiseless(4);
        let cfg = small_instance_cfg();
        let all1 = estimate_all(&inst.obs, &inst.basis, &cfg, &Method::ALL, None).unwrap();

        let scale = c(0.7, -1.3);
        let scaled = ObservationSet {
            outputs: inst
                .obs
                .outputs
                .iter()
                .map(|y| y.iter().map(|z| z * scale).collect())
                .collect(),
            sigma_w: Some(0.0),
        };
        let all2 = estimate_all(&scaled, &inst.basis, &cfg, &Method::ALL, None).unwrap();

        for (method, res) in &all1.results {
            let h1 = &res.as_ref().unwrap().h_hat;
            let h2 = &all2.get(*method).unwrap().as_ref().unwrap().h_hat;
            let dev = sin_angle(h1, h2).unwrap();
            assert!(dev <= 1e-8, "{method}: direction moved {dev:.2e} under scaling");
        }
    }

    #[test]
    fn sccc_matches_cc_for_unitary_square_blocks() {
        // With orthonormal K×K blocks the restriction is a unitary change
        // of coordinates, so both programs share one minimizer direction.
        let k = 4;
        let eye = CMatrix::from_fn(k, k, |r, cc| {
            if r == cc { c(1.0, 0.0) } else { c(0.0, 0.0) }
        });
        // Second/third blocks: a cyclic permutation and a diagonal phase.
        let perm = CMatrix::from_fn(k, k, |r, cc| {
            if (r + 1) % k == cc { c(1.0, 0.0) } else { c(0.0, 0.0) }
        });
        let phase = CMatrix::from_fn(k, k, |r, cc| {
            if r == cc {
                Complex64::from_polar(1.0, 0.7 * r as f64)
            } else {
                c(0.0, 0.0)
            }
        });
        let basis = BilinearBasis::new(vec![eye, perm, phase]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let gains = vec![c(1.1, 0.0), c(0.9, 0.0), c(1.0, 0.0)];
        let coeffs: Vec<Complex64> = (0..k).map(|_| sample_cn(&mut rng)).collect();
        let model = synthesize_channels(&basis, &gains, &coeffs).unwrap();
        let source: Vec<Complex64> = (0..32).map(|_| sample_cn(&mut rng)).collect();
        let obs = synthesize_observations(&model, &source, 0.0, &mut rng).unwrap();

        let gram = crate::crosscorr::gram_yy(&obs, k).unwrap();
        let h_cc = cc_estimate(&gram).unwrap().h_hat;
        let h_sccc = sccc_estimate(&gram, &basis, 0.0).unwrap().h_hat;
        // Two independent eigensolves of unitarily similar matrices agree
        // to (residual tolerance)/(eigenvalue gap), not to machine eps.
        let dev = sin_angle(&h_cc, &h_sccc).unwrap();
        assert!(dev <= 1e-7, "unitary-subspace SCCC deviates from CC by {dev:.2e}");
    }

    #[test]
    fn init_recovers_coefficients_from_population_correlation() {
        // Feed the initializer the exact population matrix K·‖a‖₁·b·xᵀ:
        // the top eigenvector of its square must be b itself.
        let inst = noiseless(5);
        let (k, d, l) = (16, 4, 64);
        let gain_sum: f64 = inst.model.gains.iter().map(|g| g.re).sum();
        let pop = CMatrix::from_fn(d, l, |dd, j| {
            k as f64 * gain_sum * inst.model.coeffs[dd] * inst.source[j]
        });
        let (b0, degen) = spectral_init_from_gamma(&pop, &inst.basis, 0.0, l).unwrap();
        assert!(!degen);
        let dev = sin_angle(&b0, &inst.model.coeffs).unwrap();
        assert!(dev <= 1e-10, "population init off by {dev:.2e}");
    }

    #[test]
    fn init_lands_in_the_basin_on_noiseless_data() {
        for seed in 0..5 {
            let inst = random_instance(&InstanceConfig {
                m: 4,
                k: 16,
                d: 3,
                l: 256,
                snr_db: None,
                alpha: 0.5,
                seed,
            })
            .unwrap();
            let (b0, _) = spectral_init(&inst.obs, &inst.basis, 0.0).unwrap();
            let dev = sin_angle(&b0, &inst.model.coeffs).unwrap();
            assert!(dev <= 0.8, "seed {seed}: initialization sin-angle {dev:.3}");
        }
    }

    #[test]
    fn init_is_invariant_to_global_phase_rotation() {
        let inst = noiseless(6);
        let (b1, _) = spectral_init(&inst.obs, &inst.basis, 0.0).unwrap();
        let rot = Complex64::from_polar(1.0, 1.234);
        let rotated = ObservationSet {
            outputs: inst
                .obs
                .outputs
                .iter()
                .map(|y| y.iter().map(|z| z * rot).collect())
                .collect(),
            sigma_w: inst.obs.sigma_w,
        };
        let (b2, _) = spectral_init(&rotated, &inst.basis, 0.0).unwrap();
        assert!(sin_angle(&b1, &b2).unwrap() <= 1e-10);
    }

    #[test]
    fn alt_eig_fixes_the_truth_in_one_iteration() {
        let inst = noiseless(7);
        let gram = crate::crosscorr::gram_yy(&inst.obs, inst.basis.taps()).unwrap();
        let a_mat = build_a(&gram, &inst.basis, 0.0).unwrap();
        let b0 = unit(&inst.model.coeffs);
        let r = alt_eig(&a_mat, &inst.basis, &b0, &SolverConfig::default()).unwrap();
        assert!(r.converged);
        assert_eq!(r.iterations.len(), 1, "truth should be a one-iteration fixed point");
        assert!(truth_error(&inst, &r.h_hat) <= 1e-8);
    }

    #[test]
    fn rtpm_fixes_the_truth() {
        let inst = noiseless(8);
        let gram = crate::crosscorr::gram_yy(&inst.obs, inst.basis.taps()).unwrap();
        let a_mat = build_a(&gram, &inst.basis, 0.0).unwrap();
        let gamma = spectral_norm(&a_mat).unwrap();
        let b0 = unit(&inst.model.coeffs);
        let r = rtpm(&a_mat, &inst.basis, &b0, gamma, &SolverConfig::default()).unwrap();
        assert!(r.converged);
        let u_true = unit(&kron_vec(&inst.model.gains, &inst.model.coeffs));
        for (t, v) in r.iterates.iter().enumerate() {
            let dev = sin_angle(v, &u_true).unwrap();
            assert!(dev <= 1e-8, "iterate {t} drifted to {dev:.2e}");
        }
    }

    #[test]
    fn alt_eig_quadratic_form_never_increases() {
        for seed in 0..5 {
            let inst = random_instance(&InstanceConfig {
                m: 4,
                k: 16,
                d: 4,
                l: 96,
                snr_db: Some(10.0),
                alpha: 0.5,
                seed,
            })
            .unwrap();
            let sigma_sq = inst.obs.sigma_w.unwrap().powi(2);
            let gram = crate::crosscorr::gram_yy(&inst.obs, inst.basis.taps()).unwrap();
            let a_mat = build_a(&gram, &inst.basis, sigma_sq).unwrap();
            let (b0, _) = spectral_init(&inst.obs, &inst.basis, sigma_sq).unwrap();
            let r = alt_eig(&a_mat, &inst.basis, &b0, &SolverConfig::default()).unwrap();

            let slack = 1e-10 * spectral_norm(&a_mat).unwrap();
            let mut last = f64::INFINITY;
            for (t, u) in r.iterates.iter().enumerate() {
                let au = a_mat.matvec(u);
                let quad: f64 = u
                    .iter()
                    .zip(au.iter())
                    .map(|(ui, ai)| (ui.conj() * ai).re)
                    .sum();
                assert!(
                    quad <= last + slack,
                    "seed {seed}, iterate {t}: form rose {last:.6e} → {quad:.6e}"
                );
                last = quad;
            }
        }
    }

    #[test]
    fn iterative_methods_reject_bad_starts() {
        let inst = noiseless(9);
        let gram = crate::crosscorr::gram_yy(&inst.obs, inst.basis.taps()).unwrap();
        let a_mat = build_a(&gram, &inst.basis, 0.0).unwrap();
        let cfg = SolverConfig::default();
        let long = vec![c(1.0, 0.0); 5];
        assert!(alt_eig(&a_mat, &inst.basis, &long, &cfg).is_err(), "wrong length");
        let non_unit = vec![c(2.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)];
        assert!(alt_eig(&a_mat, &inst.basis, &non_unit, &cfg).is_err(), "non-unit");
        let b0 = unit(&inst.model.coeffs);
        assert!(rtpm(&a_mat, &inst.basis, &b0, -1.0, &cfg).is_err(), "negative γ");
        assert!(rtpm(&a_mat, &inst.basis, &b0, f64::NAN, &cfg).is_err(), "NaN γ");
    }

    #[test]
    fn estimate_all_rejects_bad_requests() {
        let inst = noiseless(10);
        let cfg = SolverConfig::default();
        assert!(estimate_all(&inst.obs, &inst.basis, &cfg, &[], None).is_err());
        assert!(
            estimate_all(&inst.obs, &inst.basis, &cfg, &[Method::Cc, Method::Cc], None).is_err()
        );
        let empty = ObservationSet {
            outputs: Vec::new(),
            sigma_w: None,
        };
        assert!(estimate_all(&empty, &inst.basis, &cfg, &[Method::Cc], None).is_err());
        let unknown_noise = ObservationSet {
            outputs: inst.obs.outputs.clone(),
            sigma_w: None,
        };
        // Exact compensation is impossible when the level is unknown.
        assert!(estimate_all(&unknown_noise, &inst.basis, &cfg, &[Method::Cc], None).is_err());
    }

    #[test]
    fn expected_norm_deflation_requires_truth() {
        let inst = noiseless(11);
        let cfg = SolverConfig {
            gamma_mode: GammaMode::ExpectedNorm,
            ..small_instance_cfg()
        };
        let all = estimate_all(&inst.obs, &inst.basis, &cfg, &[Method::Rtpm], None).unwrap();
        assert!(all.get(Method::Rtpm).unwrap().is_err(), "must fail without truth");

        let a_sq: f64 = inst.model.gains.iter().map(|g| g.norm_sqr()).sum();
        let b_sq: f64 = inst.model.coeffs.iter().map(|z| z.norm_sqr()).sum();
        let x_sq: f64 = inst.source.iter().map(|z| z.norm_sqr()).sum();
        let truth = TruthRef {
            expected_a_norm: (inst.basis.taps() * inst.basis.taps()) as f64 * x_sq * a_sq * b_sq,
        };
        let all = estimate_all(&inst.obs, &inst.basis, &cfg, &[Method::Rtpm], Some(&truth)).unwrap();
        let r = all.get(Method::Rtpm).unwrap().as_ref().unwrap();
        assert!(truth_error(&inst, &r.h_hat) <= 1e-6);
    }

    #[test]
    fn method_and_mode_strings_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.to_string().parse::<Method>().unwrap(), m);
            let json = serde_json::to_string(&m).unwrap();
            assert_eq!(serde_json::from_str::<Method>(&json).unwrap(), m);
        }
        assert_eq!("alt-eig".parse::<Method>().unwrap(), Method::AltEig);
        assert!("power".parse::<Method>().is_err());

        for g in [GammaMode::SampleNorm, GammaMode::ExpectedNorm] {
            assert_eq!(g.to_string().parse::<GammaMode>().unwrap(), g);
        }
        assert_eq!("sample-norm".parse::<GammaMode>().unwrap(), GammaMode::SampleNorm);

        for s in [SigmaHatMode::Exact, SigmaHatMode::Zero, SigmaHatMode::Value(0.25)] {
            assert_eq!(s.to_string().parse::<SigmaHatMode>().unwrap(), s);
            let json = serde_json::to_string(&s).unwrap();
            assert_eq!(serde_json::from_str::<SigmaHatMode>(&json).unwrap(), s);
        }
        assert!("-0.5".parse::<SigmaHatMode>().is_err());
        assert!(serde_json::from_str::<SigmaHatMode>("-0.5").is_err());
    }

    #[test]
    fn solver_config_serde_round_trips_and_validates() {
        let cfg = SolverConfig {
            max_iters: 20,
            tol: 1e-8,
            sigma_hat_sq: SigmaHatMode::Value(0.01),
            gamma_mode: GammaMode::ExpectedNorm,
        };
        let json = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<SolverConfig>(&json).unwrap(), cfg);

        assert!(SolverConfig { max_iters: 0, ..cfg }.validate().is_err());
        assert!(SolverConfig { tol: 0.0, ..cfg }.validate().is_err());
        assert!(cfg.validate().is_ok());
    }
}
