//! The cross-convolution Gram, its basis restriction, and the
//! initialization correlation matrix — all built through FFTs without
//! ever materializing the cross-convolution operator itself.
//!
//! For each channel pair (i, j) the noiseless outputs satisfy the
//! commutativity relation y_j ⊛ h_i − y_i ⊛ h_j = 0. Stacking one such
//! equation per pair yields a linear operator on the stacked channel
//! vector whose Gram G = Y*Y is an MK×MK Hermitian PSD matrix with
//! circulant-corner blocks:
//!
//!   G(m,m)  =  Σ_{j≠m} S·C(y_j)*·C(y_j)·Sᵀ
//!   G(m,m′) = −S·C(y_{m′})*·C(y_m)·Sᵀ          (m ≠ m′)
//!
//! where C(y) is the L×L circulant of y and S restricts to the first K
//! coordinates. A product C(u)*·C(v) is itself circulant with frequency
//! symbol conj(û)⊙v̂, so each block is the top-left K×K corner of an
//! inverse FFT — O(M²·(L log L + K²)) total, independent of the pair
//! count.

use std::sync::atomic::{AtomicUsize, Ordering};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::mat::CMatrix;
use crate::model::{BilinearBasis, ObservationSet};
use crate::signal::{embed, fft, ifft, inner};

/// How many times a Gram has been assembled in this process. Exists so
/// tests can assert that one Gram is shared across estimators instead of
/// being rebuilt per method.
#[doc(hidden)]
pub static GRAM_BUILD_COUNT: AtomicUsize = AtomicUsize::new(0);

// ── Gram of the cross-convolution operator ──────────────────────────────

/// G = Y*Y stored as an M×M grid of K×K blocks, plus the observation
/// length L that produced it (the noise-compensation shift scales with L).
#[derive(Debug, Clone)]
pub struct GramYY {
    channels: usize,
    taps: usize,
    len: usize,
    blocks: Vec<CMatrix>,
}

impl GramYY {
    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn taps(&self) -> usize {
        self.taps
    }

    /// Observation length L of the outputs this Gram was built from.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn block(&self, m: usize, mp: usize) -> &CMatrix {
        &self.blocks[m * self.channels + mp]
    }

    /// Assemble the full MK×MK matrix (desk-scale diagnostics and the
    /// classical estimator; at most a few hundred rows in practice).
    pub fn to_dense(&self) -> CMatrix {
        let (m, k) = (self.channels, self.taps);
        let mut g = CMatrix::zeros(m * k, m * k);
        for i in 0..m {
            for j in 0..m {
                g.set_block(i * k, j * k, self.block(i, j));
            }
        }
        g
    }

    /// v*·G·v for a stacked MK vector, evaluated blockwise. Real by
    /// Hermitian symmetry; this is the cross-convolution misfit an
    /// estimate leaves behind.
    pub fn quadratic_form(&self, v: &[Complex64]) -> Result<f64> {
        let (m, k) = (self.channels, self.taps);
        if v.len() != m * k {
            return Err(Error::Dimension(format!(
                "expected a stacked vector of length {}, got {}",
                m * k,
                v.len()
            )));
        }
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..m {
            for j in 0..m {
                let gv = self.block(i, j).matvec(&v[j * k..(j + 1) * k]);
                acc += inner(&v[i * k..(i + 1) * k], &gv);
            }
        }
        Ok(acc.re)
    }
}

/// Top-left K×K corner of the circulant whose first column is g:
/// entry (p, q) = g[(p − q) mod L].
fn circulant_corner(g: &[Complex64], k: usize) -> CMatrix {
    let l = g.len();
    CMatrix::from_fn(k, k, |p, q| g[(p + l - q) % l])
}

/// Build G = Y*Y from the channel outputs, restricted to K taps.
pub fn gram_yy(obs: &ObservationSet, k: usize) -> Result<GramYY> {
    obs.validate()?;
    let (m, l) = (obs.channels(), obs.len());
    if k == 0 || k > l {
        return Err(Error::Dimension(format!(
            "tap count {k} must lie in 1..=L ({l})"
        )));
    }

    let spectra: Vec<Vec<Complex64>> = obs.outputs.iter().map(|y| fft(y)).collect();
    // Σ_j |ŷ_j|² at each frequency; each diagonal symbol subtracts its
    // own channel from this total.
    let total_sq: Vec<f64> = (0..l)
        .map(|f| spectra.iter().map(|s| s[f].norm_sqr()).sum())
        .collect();

    let mut blocks = vec![CMatrix::zeros(0, 0); m * m];
    for i in 0..m {
        let symbol: Vec<Complex64> = (0..l)
            .map(|f| Complex64::new(total_sq[f] - spectra[i][f].norm_sqr(), 0.0))
            .collect();
        let mut diag = circulant_corner(&ifft(&symbol), k);
        diag.hermitize();
        blocks[i * m + i] = diag;
        for j in (i + 1)..m {
            let symbol: Vec<Complex64> = (0..l)
                .map(|f| spectra[j][f].conj() * spectra[i][f])
                .collect();
            let upper = circulant_corner(&ifft(&symbol), k).scale(-1.0);
            blocks[j * m + i] = upper.adjoint();
            blocks[i * m + j] = upper;
        }
    }

    GRAM_BUILD_COUNT.fetch_add(1, Ordering::Relaxed);
    Ok(GramYY {
        channels: m,
        taps: k,
        len: l,
        blocks,
    })
}

// ── Basis restriction ───────────────────────────────────────────────────

/// Restrict the (noise-compensated) Gram to the basis:
/// A = Φ*·(G − σ̂²(M−1)L·I)·Φ, an MD×MD Hermitian matrix whose minimal
/// eigenvector approaches a⊗b. Blockwise,
/// A(m,m′) = Φ_m*·(G(m,m′) − δ_{mm′}·σ̂²(M−1)L·I_K)·Φ_{m′}.
///
/// The shift removes the noise floor E[W*W] = σ_w²(M−1)L·I that an
/// uncompensated Gram adds to every diagonal block; it rescales the whole
/// spectrum of G uniformly, so it matters only once G is projected onto
/// the non-uniform basis.
pub fn build_a(gram: &GramYY, basis: &BilinearBasis, sigma_hat_sq: f64) -> Result<CMatrix> {
    if basis.channels() != gram.channels() || basis.taps() != gram.taps() {
        return Err(Error::Dimension(format!(
            "basis is {}x{}-tap, Gram is {}x{}-tap",
            basis.channels(),
            basis.taps(),
            gram.channels(),
            gram.taps()
        )));
    }
    if sigma_hat_sq < 0.0 || !sigma_hat_sq.is_finite() {
        return Err(Error::Domain(format!(
            "noise power estimate must be finite and nonnegative, got {sigma_hat_sq}"
        )));
    }
    let (m, k, d) = (gram.channels(), gram.taps(), basis.dim());
    let shift = sigma_hat_sq * (m as f64 - 1.0) * gram.len() as f64;

    let mut a = CMatrix::zeros(m * d, m * d);
    for i in 0..m {
        for j in 0..m {
            let mut core = gram.block(i, j).clone();
            if i == j && shift > 0.0 {
                core = core.sub(&CMatrix::scaled_identity(k, shift));
            }
            let restricted = basis.block(i).adjoint().matmul(&core).matmul(basis.block(j));
            a.set_block(i * d, j * d, &restricted);
        }
    }
    a.hermitize();
    Ok(a)
}

// ── Initialization correlation matrix ───────────────────────────────────

/// The D×L matrix Γ with entries
///
///   Γ[d, j] = Σ_m Σ_k conj(Φ_m[k, d]) · y_m[(k + j) mod L],
///
/// i.e. row d correlates each output against the d-th basis column of its
/// channel and sums over channels. Its expectation under the random model
/// is K·(Σ_m a_m)·b·xᵀ — a rank-one matrix whose column space is spanned
/// by the true coefficients — which is why the dominant eigenvector of a
/// (noise-compensated) Γ·Γ* initializes b.
///
/// Computed in the frequency domain: Γ[d, ·] = Σ_m C(φ̃_{m,d})*·y_m with
/// φ̃ the zero-padded basis column, costing M·(D+1) FFTs.
pub fn build_gamma(obs: &ObservationSet, basis: &BilinearBasis) -> Result<CMatrix> {
    obs.validate()?;
    if basis.channels() != obs.channels() {
        return Err(Error::Dimension(format!(
            "basis has {} channels, observations {}",
            basis.channels(),
            obs.channels()
        )));
    }
    let (k, d, l) = (basis.taps(), basis.dim(), obs.len());
    if k > l {
        return Err(Error::Dimension(format!(
            "tap count {k} exceeds observation length {l}"
        )));
    }

    let spectra: Vec<Vec<Complex64>> = obs.outputs.iter().map(|y| fft(y)).collect();
    let mut gamma = CMatrix::zeros(d, l);
    for dd in 0..d {
        // Accumulate Σ_m conj(φ̂)⊙ŷ_m in frequency, one inverse FFT per row.
        let mut acc = vec![Complex64::new(0.0, 0.0); l];
        for (mm, spectrum) in spectra.iter().enumerate() {
            let col: Vec<Complex64> = (0..k).map(|kk| basis.block(mm)[(kk, dd)]).collect();
            let col_hat = fft(&embed(&col, l)?);
            for f in 0..l {
                acc[f] += col_hat[f].conj() * spectrum[f];
            }
        }
        for (j, z) in ifft(&acc).into_iter().enumerate() {
            gamma[(dd, j)] = z;
        }
    }
    Ok(gamma)
}

// ── Population-level restricted Gram ────────────────────────────────────

/// The expectation of `build_a` over the random basis, at ground truth
/// (a, b), source energy ‖x‖², and tap count K:
///
///   E[A] = K²·‖x‖²·‖b‖²·[ (‖a‖²·I_M − diag(|a_m|²)) ⊗ P_b⊥
///                        + (‖a‖²·I_M − a·a*)        ⊗ P_b ]
///
/// with P_b the orthogonal projector onto span(b). Both Kronecker factors
/// annihilate a⊗b, and the spectral norm is K²·‖x‖²·‖a‖²·‖b‖² — the
/// deflation scale the truncated power method uses in simulation mode.
pub fn expected_a(
    gains: &[Complex64],
    coeffs: &[Complex64],
    x_norm_sq: f64,
    k: usize,
) -> Result<CMatrix> {
    let (m, d) = (gains.len(), coeffs.len());
    if m < 2 || d == 0 {
        return Err(Error::Dimension(
            "population Gram needs at least 2 gains and 1 coefficient".into(),
        ));
    }
    let b_norm_sq: f64 = coeffs.iter().map(|z| z.norm_sqr()).sum();
    if b_norm_sq <= 0.0 {
        return Err(Error::Domain(
            "population Gram is undefined for zero coefficients".into(),
        ));
    }
    if x_norm_sq < 0.0 {
        return Err(Error::Domain(format!(
            "source energy must be nonnegative, got {x_norm_sq}"
        )));
    }
    let a_norm_sq: f64 = gains.iter().map(|z| z.norm_sqr()).sum();
    let scale = (k * k) as f64 * x_norm_sq * b_norm_sq;

    let p_b = CMatrix::from_fn(d, d, |r, c| coeffs[r] * coeffs[c].conj() / b_norm_sq);
    let p_perp = CMatrix::scaled_identity(d, 1.0).sub(&p_b);

    let mut out = CMatrix::zeros(m * d, m * d);
    for i in 0..m {
        for j in 0..m {
            // Entry (i,j) of each M×M Kronecker factor.
            let diag_part = if i == j {
                a_norm_sq - gains[i].norm_sqr()
            } else {
                0.0
            };
            let outer_part = if i == j {
                Complex64::new(a_norm_sq - gains[i].norm_sqr(), 0.0)
            } else {
                -gains[i] * gains[j].conj()
            };
            let block = CMatrix::from_fn(d, d, |r, c| {
                scale * (diag_part * p_perp[(r, c)] + outer_part * p_b[(r, c)])
            });
            out.set_block(i * d, j * d, &block);
        }
    }
    out.hermitize();
    Ok(out)
}

// ── Tests ───────────────────────────────────────────────────────────────
