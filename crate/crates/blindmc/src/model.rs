//! The gain-and-subspace channel model: ground-truth synthesis,
//! observation generation, SNR calibration, and seeded random instances.
//!
//! A model instance consists of M channels. Channel m's K-tap impulse
//! response is h_m = a_m·Φ_m·b where Φ_m is a known K×D basis block, a_m
//! an unknown positive gain, and b a D-vector of coefficients shared by
//! every channel. Stacked across channels (channel-major), h = Φ·(a⊗b)
//! with Φ block-diagonal.
//!
//! Random instances follow one reproducible recipe: all basis entries,
//! coefficients, and the source are iid standard complex Gaussian
//! (real and imaginary parts each N(0, 1/2) so E|z|² = 1); gains are
//! 1 + α·ξ/‖ξ‖_∞ with ξ_m iid uniform on [−1, 1), guaranteeing positive
//! gains for α < 1; noise is complex Gaussian with per-entry variance
//! σ_w² calibrated from a target SNR. The draw order is fixed — basis
//! blocks (channel-major, row-major within a block), then coefficients,
//! then gains, then source, then per-channel noise — so an instance is a
//! pure function of its seed.

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mat::{kron_vec, CMatrix};
use crate::signal::{circ_conv, embed, norm_sq};

// ── Basis ───────────────────────────────────────────────────────────────

/// The M known basis blocks Φ_m, each K×D, forming block-diagonal Φ.
#[derive(Debug, Clone)]
pub struct BilinearBasis {
    blocks: Vec<CMatrix>,
}

impl BilinearBasis {
    /// Validate shapes: at least two channels (cross-correlation needs
    /// pairs), every block K×D with K, D ≥ 1, all entries finite.
    pub fn new(blocks: Vec<CMatrix>) -> Result<Self> {
        if blocks.len() < 2 {
            return Err(Error::Dimension(format!(
                "basis needs at least 2 channel blocks, got {}",
                blocks.len()
            )));
        }
        let (k, d) = (blocks[0].rows(), blocks[0].cols());
        if k == 0 || d == 0 {
            return Err(Error::Dimension("basis blocks must be nonempty".into()));
        }
        for (m, b) in blocks.iter().enumerate() {
            if b.rows() != k || b.cols() != d {
                return Err(Error::Dimension(format!(
                    "basis block {m} is {}x{}, expected {k}x{d}",
                    b.rows(),
                    b.cols()
                )));
            }
            if !b.all_finite() {
                return Err(Error::Domain(format!(
                    "basis block {m} contains non-finite entries"
                )));
            }
        }
        Ok(BilinearBasis { blocks })
    }

    pub fn channels(&self) -> usize {
        self.blocks.len()
    }

    pub fn taps(&self) -> usize {
        self.blocks[0].rows()
    }

    pub fn dim(&self) -> usize {
        self.blocks[0].cols()
    }

    pub fn block(&self, m: usize) -> &CMatrix {
        &self.blocks[m]
    }

    /// Non-fatal modeling concerns (e.g. a subspace dimension exceeding
    /// the tap count, which makes recovery ill-posed in general).
    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.dim() > self.taps() {
            w.push(format!(
                "subspace dimension D={} exceeds tap count K={}; recovery is not identifiable in general",
                self.dim(),
                self.taps()
            ));
        }
        w
    }

    /// Apply block-diagonal Φ to a stacked coefficient vector (length M·D),
    /// producing stacked taps (length M·K).
    pub fn apply(&self, u: &[Complex64]) -> Vec<Complex64> {
        let d = self.dim();
        assert_eq!(u.len(), self.channels() * d, "stacked coefficient length mismatch");
        let mut out = Vec::with_capacity(self.channels() * self.taps());
        for (m, block) in self.blocks.iter().enumerate() {
            out.extend(block.matvec(&u[m * d..(m + 1) * d]));
        }
        out
    }

    /// Apply Φ* to stacked taps (length M·K), producing stacked
    /// coefficients (length M·D).
    pub fn apply_adjoint(&self, h: &[Complex64]) -> Vec<Complex64> {
        let k = self.taps();
        assert_eq!(h.len(), self.channels() * k, "stacked tap length mismatch");
        let mut out = Vec::with_capacity(self.channels() * self.dim());
        for (m, block) in self.blocks.iter().enumerate() {
            out.extend(block.adjoint().matvec(&h[m * k..(m + 1) * k]));
        }
        out
    }

    /// Σ_m Φ_m*·Φ_m, the D×D Gram of the stacked basis columns.
    pub fn coeff_gram(&self) -> CMatrix {
        let d = self.dim();
        let mut g = CMatrix::zeros(d, d);
        for block in &self.blocks {
            g = g.add(&block.adjoint().matmul(block));
        }
        g.hermitize();
        g
    }

    /// Materialize block-diagonal Φ as a dense MK×MD matrix (small-scale
    /// diagnostics; estimators never build this).
    pub fn to_dense(&self) -> CMatrix {
        let (m, k, d) = (self.channels(), self.taps(), self.dim());
        let mut phi = CMatrix::zeros(m * k, m * d);
        for (i, block) in self.blocks.iter().enumerate() {
            phi.set_block(i * k, i * d, block);
        }
        phi
    }
}

// ── Ground truth ────────────────────────────────────────────────────────

/// Ground-truth channels: gains, shared coefficients, and the derived
/// per-channel K-tap responses.
#[derive(Debug, Clone)]
pub struct ChannelModel {
    pub gains: Vec<Complex64>,
    pub coeffs: Vec<Complex64>,
    pub responses: Vec<Vec<Complex64>>,
}

impl ChannelModel {
    /// Responses stacked channel-major into one M·K vector.
    pub fn stacked(&self) -> Vec<Complex64> {
        self.responses.iter().flatten().copied().collect()
    }
}

/// Build the per-channel responses h_m = a_m·Φ_m·b.
pub fn synthesize_channels(
    basis: &BilinearBasis,
    gains: &[Complex64],
    coeffs: &[Complex64],
) -> Result<ChannelModel> {
    if gains.len() != basis.channels() {
        return Err(Error::Dimension(format!(
            "gain count {} does not match channel count {}",
            gains.len(),
            basis.channels()
        )));
    }
    if coeffs.len() != basis.dim() {
        return Err(Error::Dimension(format!(
            "coefficient count {} does not match subspace dimension {}",
            coeffs.len(),
            basis.dim()
        )));
    }
    let responses: Vec<Vec<Complex64>> = (0..basis.channels())
        .map(|m| {
            let mut h = basis.block(m).matvec(coeffs);
            for z in &mut h {
                *z *= gains[m];
            }
            h
        })
        .collect();
    Ok(ChannelModel {
        gains: gains.to_vec(),
        coeffs: coeffs.to_vec(),
        responses,
    })
}

// ── Observations ────────────────────────────────────────────────────────

/// The M channel outputs, each of length L, plus the noise level used to
/// generate them (None for data of unknown provenance, e.g. loaded files).
#[derive(Debug, Clone)]
pub struct ObservationSet {
    pub outputs: Vec<Vec<Complex64>>,
    pub sigma_w: Option<f64>,
}

impl ObservationSet {
    pub fn channels(&self) -> usize {
        self.outputs.len()
    }

    pub fn len(&self) -> usize {
        self.outputs.first().map_or(0, |y| y.len())
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }

    /// Validate: at least two channels of one common, nonzero length.
    pub fn validate(&self) -> Result<()> {
        if self.outputs.len() < 2 {
            return Err(Error::Dimension(format!(
                "need at least 2 channel outputs, got {}",
                self.outputs.len()
            )));
        }
        let l = self.outputs[0].len();
        if l == 0 {
            return Err(Error::Dimension("empty channel outputs".into()));
        }
        for (m, y) in self.outputs.iter().enumerate() {
            if y.len() != l {
                return Err(Error::Dimension(format!(
                    "output {m} has length {}, expected {l}",
                    y.len()
                )));
            }
            if y.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::Domain(format!(
                    "output {m} contains non-finite samples"
                )));
            }
        }
        Ok(())
    }
}

/// Convolve each response with the source (circularly, at the source's
/// length) and add iid complex Gaussian noise of per-entry variance σ_w².
pub fn synthesize_observations(
    model: &ChannelModel,
    source: &[Complex64],
    sigma_w: f64,
    rng: &mut ChaCha8Rng,
) -> Result<ObservationSet> {
    let l = source.len();
    let k = model.responses.first().map_or(0, |h| h.len());
    if l < k {
        return Err(Error::Dimension(format!(
            "observation length {l} is shorter than the {k}-tap responses"
        )));
    }
    if sigma_w < 0.0 {
        return Err(Error::Domain(format!("negative noise level {sigma_w}")));
    }
    let mut outputs = Vec::with_capacity(model.responses.len());
    for h in &model.responses {
        let mut y = circ_conv(&embed(h, l)?, source)?;
        if sigma_w > 0.0 {
            for z in &mut y {
                *z += sigma_w * sample_cn(rng);
            }
        }
        outputs.push(y);
    }
    Ok(ObservationSet {
        outputs,
        sigma_w: Some(sigma_w),
    })
}

// ── SNR calibration ─────────────────────────────────────────────────────

/// Noise level for a target SNR: σ_w = sqrt(K·‖x‖²·‖u‖² / (M·L·η)) where
/// u = a⊗b (so ‖u‖² = ‖a‖²·‖b‖²) and η is the SNR as a linear power
/// ratio. η = ∞ yields exactly 0.
pub fn snr_to_sigma(
    x_norm_sq: f64,
    u_norm_sq: f64,
    k: usize,
    m: usize,
    l: usize,
    eta: f64,
) -> Result<f64> {
    if eta.is_nan() || eta <= 0.0 {
        return Err(Error::Domain(format!(
            "SNR ratio must be positive, got {eta}"
        )));
    }
    if x_norm_sq <= 0.0 || u_norm_sq <= 0.0 || k == 0 || m == 0 || l == 0 {
        return Err(Error::Domain(
            "snr_to_sigma requires positive signal energies and dimensions".into(),
        ));
    }
    Ok((k as f64 * x_norm_sq * u_norm_sq / (m as f64 * l as f64 * eta)).sqrt())
}

/// Linear power ratio for an SNR given in dB.
pub fn db_to_ratio(snr_db: f64) -> f64 {
    10f64.powf(snr_db / 10.0)
}

// ── Random instances ────────────────────────────────────────────────────

/// Dimensions, noise level, gain spread, and master seed of one synthetic
/// problem instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstanceConfig {
    /// Channel count M (≥ 2).
    pub m: usize,
    /// Taps per channel K.
    pub k: usize,
    /// Subspace dimension D (≤ K).
    pub d: usize,
    /// Observation length L (≥ K).
    pub l: usize,
    /// Target SNR in dB; `None` means noiseless.
    pub snr_db: Option<f64>,
    /// Gain spread α ∈ [0, 1): gains are 1 + α·ξ/‖ξ‖_∞.
    pub alpha: f64,
    /// Master seed; the instance is a pure function of this value.
    pub seed: u64,
}

impl InstanceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return Err(Error::Config(format!("M must be ≥ 2, got {}", self.m)));
        }
        if self.d == 0 || self.d > self.k {
            return Err(Error::Config(format!(
                "need 1 ≤ D ≤ K, got D={} K={}",
                self.d, self.k
            )));
        }
        if self.l < self.k {
            return Err(Error::Config(format!(
                "need L ≥ K, got L={} K={}",
                self.l, self.k
            )));
        }
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(Error::Config(format!(
                "gain spread alpha must lie in [0, 1), got {}",
                self.alpha
            )));
        }
        if let Some(db) = self.snr_db {
            if db.is_nan() {
                return Err(Error::Config("snr_db is NaN".into()));
            }
        }
        Ok(())
    }

    /// Non-fatal concerns worth surfacing to a user.
    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.l < 3 * self.k {
            w.push(format!(
                "L={} is below 3K={}; recovery degrades when observations barely exceed the channel length",
                self.l,
                3 * self.k
            ));
        }
        w
    }
}

/// A complete synthetic problem: basis, ground truth, source, and noisy
/// observations.
#[derive(Debug, Clone)]
pub struct Instance {
    pub basis: BilinearBasis,
    pub model: ChannelModel,
    pub source: Vec<Complex64>,
    pub obs: ObservationSet,
}

/// One draw of a standard complex Gaussian: real and imaginary parts each
/// N(0, 1/2), so E|z|² = 1.
pub fn sample_cn(rng: &mut ChaCha8Rng) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Generate a full instance from its configuration. Deterministic: equal
/// configs produce bit-identical instances.
pub fn random_instance(cfg: &InstanceConfig) -> Result<Instance> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    // 1. Basis blocks, channel-major, row-major entries within a block.
    let blocks: Vec<CMatrix> = (0..cfg.m)
        .map(|_| CMatrix::from_fn(cfg.k, cfg.d, |_, _| sample_cn(&mut rng)))
        .collect();
    let basis = BilinearBasis::new(blocks)?;

    // 2. Shared coefficients.
    let coeffs: Vec<Complex64> = (0..cfg.d).map(|_| sample_cn(&mut rng)).collect();

    // 3. Gains: perturb the all-one vector, scaled so ‖a − 1‖_∞ = α.
    let xi: Vec<f64> = (0..cfg.m).map(|_| 2.0 * rng.gen::<f64>() - 1.0).collect();
    let xi_inf = xi.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let gains: Vec<Complex64> = if cfg.alpha == 0.0 || xi_inf == 0.0 {
        vec![Complex64::new(1.0, 0.0); cfg.m]
    } else {
        xi.iter()
            .map(|v| Complex64::new(1.0 + cfg.alpha * v / xi_inf, 0.0))
            .collect()
    };

    // 4. Source.
    let source: Vec<Complex64> = (0..cfg.l).map(|_| sample_cn(&mut rng)).collect();

    let model = synthesize_channels(&basis, &gains, &coeffs)?;

    // 5. Noise level from the SNR target, then the observations.
    let sigma_w = match cfg.snr_db {
        None => 0.0,
        Some(db) => {
            let u_norm_sq = norm_sq(&kron_vec(&gains, &coeffs));
            snr_to_sigma(
                norm_sq(&source),
                u_norm_sq,
                cfg.k,
                cfg.m,
                cfg.l,
                db_to_ratio(db),
            )?
        }
    };
    let obs = synthesize_observations(&model, &source, sigma_w, &mut rng)?;

    Ok(Instance {
        basis,
        model,
        source,
        obs,
    })
}

// ── Tests ───────────────────────────────────────────────────────────────

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::flatness;
    use crate::signal::norm;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// Truncated-identity basis block: the first D canonical directions.
    fn identity_block(k: usize, d: usize) -> CMatrix {
        CMatrix::from_fn(k, d, |r, cc| {
            if r == cc {
                c(1.0, 0.0)
            } else {
                c(0.0, 0.0)
            }
        })
    }

    fn small_cfg() -> InstanceConfig {
        InstanceConfig {
            m: 3,
            k: 5,
            d: 2,
            l: 16,
            snr_db: Some(20.0),
            alpha: 0.5,
            seed: 42,
        }
    }

    #[test]
    fn identity_basis_embeds_coefficients() {
        let basis =
            BilinearBasis::new(vec![identity_block(5, 2), identity_block(5, 2)]).unwrap();
        let b = vec![c(1.0, 2.0), c(-3.0, 0.5)];
        let a = vec![c(1.0, 0.0), c(1.0, 0.0)];
        let model = synthesize_channels(&basis, &a, &b).unwrap();
        for h in &model.responses {
            assert_eq!(h[0], b[0]);
            assert_eq!(h[1], b[1]);
            assert_eq!(h[2], c(0.0, 0.0));
            assert_eq!(h[4], c(0.0, 0.0));
        }
    }

    #[test]
    fn zero_gains_give_zero_responses() {
        let basis =
            BilinearBasis::new(vec![identity_block(4, 2), identity_block(4, 2)]).unwrap();
        let model = synthesize_channels(
            &basis,
            &[c(0.0, 0.0), c(0.0, 0.0)],
            &[c(1.0, 0.0), c(2.0, 0.0)],
        )
        .unwrap();
        assert!(model.stacked().iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn responses_match_dense_block_diagonal_product() {
        let inst = random_instance(&small_cfg()).unwrap();
        let u = kron_vec(&inst.model.gains, &inst.model.coeffs);
        let dense = inst.basis.to_dense().matvec(&u);
        let stacked = inst.model.stacked();
        let err: f64 = dense
            .iter()
            .zip(stacked.iter())
            .map(|(a, b)| (a - b).norm())
            .sum();
        assert!(err <= 1e-12 * (1.0 + norm(&stacked)), "error {err}");
    }

    #[test]
    fn gain_coefficient_scaling_is_unobservable() {
        let inst = random_instance(&small_cfg()).unwrap();
        let cscale = c(0.0, 2.5); // arbitrary nonzero complex scalar
        let a2: Vec<Complex64> = inst.model.gains.iter().map(|g| g * cscale).collect();
        let b2: Vec<Complex64> = inst.model.coeffs.iter().map(|g| g / cscale).collect();
        let model2 = synthesize_channels(&inst.basis, &a2, &b2).unwrap();
        let (h1, h2) = (inst.model.stacked(), model2.stacked());
        let err: f64 = h1.iter().zip(h2.iter()).map(|(x, y)| (x - y).norm()).sum();
        assert!(err <= 1e-12 * (1.0 + norm(&h1)), "rescaled truth differs: {err}");
    }

    #[test]
    fn synthesis_rejects_mismatched_dims() {
        let basis =
            BilinearBasis::new(vec![identity_block(4, 2), identity_block(4, 2)]).unwrap();
        assert!(synthesize_channels(&basis, &[c(1.0, 0.0)], &[c(1.0, 0.0); 2]).is_err());
        assert!(synthesize_channels(&basis, &[c(1.0, 0.0); 2], &[c(1.0, 0.0); 3]).is_err());
    }

    #[test]
    fn basis_validation_catches_bad_shapes() {
        assert!(BilinearBasis::new(vec![identity_block(4, 2)]).is_err(), "one block");
        assert!(
            BilinearBasis::new(vec![identity_block(4, 2), identity_block(3, 2)]).is_err(),
            "ragged blocks"
        );
        let over = BilinearBasis::new(vec![identity_block(2, 3), identity_block(2, 3)]).unwrap();
        assert!(!over.warnings().is_empty(), "D > K should warn");
    }

    #[test]
    fn delta_channel_reproduces_scaled_source() {
        // Single-tap responses equal to a_m: y_m = a_m · x exactly.
        let basis =
            BilinearBasis::new(vec![identity_block(1, 1), identity_block(1, 1)]).unwrap();
        let a = vec![c(2.0, 0.0), c(0.0, 1.0)];
        let b = vec![c(1.0, 0.0)];
        let model = synthesize_channels(&basis, &a, &b).unwrap();
        let x: Vec<Complex64> = (0..8).map(|i| c(i as f64, -(i as f64))).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let obs = synthesize_observations(&model, &x, 0.0, &mut rng).unwrap();
        for (m, y) in obs.outputs.iter().enumerate() {
            for (yi, xi) in y.iter().zip(x.iter()) {
                assert!((yi - a[m] * xi).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn noiseless_outputs_satisfy_pairwise_commutativity() {
        // y_i ⊛ h_j = y_j ⊛ h_i when y = h ⊛ x exactly (noiseless).
        let inst = random_instance(&InstanceConfig {
            snr_db: None,
            ..small_cfg()
        })
        .unwrap();
        let l = inst.obs.len();
        for i in 0..inst.obs.channels() {
            for j in (i + 1)..inst.obs.channels() {
                let hi = embed(&inst.model.responses[i], l).unwrap();
                let hj = embed(&inst.model.responses[j], l).unwrap();
                let lhs = circ_conv(&inst.obs.outputs[i], &hj).unwrap();
                let rhs = circ_conv(&inst.obs.outputs[j], &hi).unwrap();
                let err: f64 = lhs.iter().zip(rhs.iter()).map(|(a, b)| (a - b).norm()).sum();
                assert!(
                    err <= 1e-10 * (1.0 + norm(&lhs)),
                    "channels ({i},{j}): commutator {err}"
                );
            }
        }
    }

    #[test]
    fn noise_variance_matches_target_at_scale() {
        // M·L > 10⁵ samples: the empirical per-entry variance must land
        // within 5% of σ_w².
        let basis =
            BilinearBasis::new(vec![identity_block(2, 1), identity_block(2, 1), identity_block(2, 1), identity_block(2, 1)])
                .unwrap();
        let model = synthesize_channels(
            &basis,
            &[c(1.0, 0.0); 4],
            &[c(1.0, 0.0)],
        )
        .unwrap();
        let l = 1 << 15;
        let x = vec![c(0.0, 0.0); l]; // silent source isolates the noise
        let sigma = 1.0;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let obs = synthesize_observations(&model, &x, sigma, &mut rng).unwrap();
        let total: f64 = obs.outputs.iter().map(|y| norm_sq(y)).sum();
        let per_entry = total / (4.0 * l as f64);
        assert!(
            (per_entry - 1.0).abs() < 0.05,
            "empirical noise variance {per_entry} not within 5% of 1"
        );
    }

    #[test]
    fn snr_to_sigma_unit_case_and_monotonicity() {
        assert!((snr_to_sigma(1.0, 1.0, 1, 1, 1, 1.0).unwrap() - 1.0).abs() < 1e-15);
        let mut last = f64::INFINITY;
        for eta in [0.1, 1.0, 10.0, 1e4] {
            let s = snr_to_sigma(2.0, 3.0, 4, 5, 6, eta).unwrap();
            assert!(s < last, "σ must decrease as SNR grows");
            last = s;
        }
        assert_eq!(snr_to_sigma(1.0, 1.0, 1, 1, 1, f64::INFINITY).unwrap(), 0.0);
        assert!(snr_to_sigma(1.0, 1.0, 1, 1, 1, 0.0).is_err());
        assert!(snr_to_sigma(1.0, 1.0, 1, 1, 1, -3.0).is_err());
    }

    #[test]
    fn snr_round_trips_through_noise_power() {
        // Clean signal power over mean noise power across 200 noise draws
        // should approximate the requested ratio within 10%.
        let cfg = InstanceConfig {
            m: 8,
            k: 64,
            d: 8,
            l: 512,
            snr_db: Some(10.0),
            alpha: 0.5,
            seed: 11,
        };
        let inst = random_instance(&cfg).unwrap();
        let sigma = inst.obs.sigma_w.unwrap();
        assert!(sigma > 0.0);
        // Clean part: convolve responses with the source, no noise.
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let clean = synthesize_observations(&inst.model, &inst.source, 0.0, &mut rng).unwrap();
        let signal_power: f64 = clean.outputs.iter().map(|y| norm_sq(y)).sum();
        let mut noise_power_acc = 0.0;
        for draw in 0..200 {
            let mut nrng = ChaCha8Rng::seed_from_u64(1000 + draw);
            let noise_power: f64 = (0..cfg.m)
                .map(|_| {
                    (0..cfg.l)
                        .map(|_| (sigma * sample_cn(&mut nrng)).norm_sqr())
                        .sum::<f64>()
                })
                .sum();
            noise_power_acc += noise_power;
        }
        let eta_hat = signal_power / (noise_power_acc / 200.0);
        let eta_target = db_to_ratio(10.0);
        assert!(
            (eta_hat / eta_target - 1.0).abs() < 0.10,
            "η̂ = {eta_hat}, target {eta_target}"
        );
    }

    #[test]
    fn zero_alpha_gives_exactly_unit_gains() {
        let inst = random_instance(&InstanceConfig {
            alpha: 0.0,
            ..small_cfg()
        })
        .unwrap();
        for g in &inst.model.gains {
            assert_eq!(*g, c(1.0, 0.0));
        }
    }

    #[test]
    fn same_seed_reproduces_bit_identical_instances() {
        let cfg = small_cfg();
        let a = random_instance(&cfg).unwrap();
        let b = random_instance(&cfg).unwrap();
        assert_eq!(a.model.gains, b.model.gains);
        assert_eq!(a.model.coeffs, b.model.coeffs);
        assert_eq!(a.source, b.source);
        assert_eq!(a.obs.outputs, b.obs.outputs);
        for m in 0..cfg.m {
            assert_eq!(a.basis.block(m).data(), b.basis.block(m).data());
        }
    }

    #[test]
    fn different_seeds_differ() {
        let a = random_instance(&small_cfg()).unwrap();
        let b = random_instance(&InstanceConfig {
            seed: 43,
            ..small_cfg()
        })
        .unwrap();
        assert_ne!(a.source, b.source);
    }

    #[test]
    fn gains_stay_positive_and_flatness_is_bounded() {
        for seed in 0..20 {
            let inst = random_instance(&InstanceConfig {
                alpha: 0.5,
                seed,
                ..small_cfg()
            })
            .unwrap();
            let a = &inst.model.gains;
            for g in a {
                assert!(g.re > 0.0 && g.im == 0.0, "gain {g} not positive real");
            }
            let (mu, nu) = flatness(a).unwrap();
            let m = a.len() as f64;
            let an = norm(a);
            // |a_m| ∈ [1−α, 1+α] ⇒ ν ≥ √M·0.5/‖a‖ and μ ≤ √M·1.5/‖a‖.
            assert!(nu >= m.sqrt() * 0.5 / an - 1e-12, "ν too small: {nu}");
            assert!(mu <= m.sqrt() * 1.5 / an + 1e-12, "μ too large: {mu}");
        }
    }

    #[test]
    fn cn_samples_have_unit_second_moment() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 100_000;
        let mean_sq: f64 = (0..n).map(|_| sample_cn(&mut rng).norm_sqr()).sum::<f64>() / n as f64;
        assert!(
            (mean_sq - 1.0).abs() < 0.02,
            "E|z|² = {mean_sq}, expected 1 within 2%"
        );
    }

    #[test]
    fn config_validation_rejects_bad_dims() {
        let base = small_cfg();
        assert!(InstanceConfig { m: 1, ..base }.validate().is_err());
        assert!(InstanceConfig { d: 0, ..base }.validate().is_err());
        assert!(InstanceConfig { d: 9, k: 5, ..base }.validate().is_err());
        assert!(InstanceConfig { l: 3, k: 5, ..base }.validate().is_err());
        assert!(InstanceConfig { alpha: 1.0, ..base }.validate().is_err());
        assert!(InstanceConfig { alpha: -0.1, ..base }.validate().is_err());
        assert!(base.validate().is_ok());
    }

    #[test]
    fn short_observation_window_warns() {
        let cfg = InstanceConfig { l: 8, k: 5, ..small_cfg() };
        assert!(!cfg.warnings().is_empty());
        let cfg_long = InstanceConfig { l: 15, k: 5, ..small_cfg() };
        assert!(cfg_long.warnings().is_empty());
    }

    #[test]
    fn observation_validation_catches_ragged_and_tiny_sets() {
        let good = ObservationSet {
            outputs: vec![vec![c(1.0, 0.0); 4], vec![c(2.0, 0.0); 4]],
            sigma_w: None,
        };
        assert!(good.validate().is_ok());
        let one = ObservationSet {
            outputs: vec![vec![c(1.0, 0.0); 4]],
            sigma_w: None,
        };
        assert!(one.validate().is_err());
        let ragged = ObservationSet {
            outputs: vec![vec![c(1.0, 0.0); 4], vec![c(1.0, 0.0); 5]],
            sigma_w: None,
        };
        assert!(ragged.validate().is_err());
    }
}
