//! FFT-backed signal kernels: circular convolution, the adjoint of
//! convolution (circular correlation), the index-reversal permutation, and
//! the zero-padding / truncation maps between tap space and signal space.
//!
//! Everything downstream — Gram assembly, the initialization matrix, the
//! estimators — is built from these four kernels, so their conventions are
//! pinned here once:
//!
//! * DFT convention: the forward transform is unnormalized and the inverse
//!   carries the 1/L factor. The convolution theorem then holds without any
//!   extra scaling, and Parseval reads ‖fft(v)‖² = L·‖v‖².
//! * Inner products are conjugate-linear in the first argument:
//!   ⟨u, v⟩ = Σ conj(u[i])·v[i].
//! * All kernels treat signals as circular of period L; data ingested from
//!   files is interpreted the same way.
//!
//! FFT plans are cached per thread, so concurrent callers never contend on
//! shared planner state.

use std::cell::RefCell;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};

use crate::error::{Error, Result};

thread_local! {
    /// Per-thread FFT planner; `rustfft` caches plans by length internally,
    /// so repeated transforms of the same length reuse twiddle tables.
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(len: usize, direction: FftDirection) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft(len, direction))
}

// ── Transforms ──────────────────────────────────────────────────────────

/// Unnormalized forward DFT of `v`. Any length ≥ 1 is supported (mixed
/// radix with a Bluestein fallback for awkward prime factors).
pub fn fft(v: &[Complex64]) -> Vec<Complex64> {
    let mut buf = v.to_vec();
    plan(v.len(), FftDirection::Forward).process(&mut buf);
    buf
}

/// Inverse DFT of `v`, carrying the 1/L normalization so `ifft(fft(v)) = v`.
pub fn ifft(v: &[Complex64]) -> Vec<Complex64> {
    let mut buf = v.to_vec();
    plan(v.len(), FftDirection::Inverse).process(&mut buf);
    let scale = 1.0 / v.len() as f64;
    for z in &mut buf {
        *z *= scale;
    }
    buf
}

// ── Circular convolution and its adjoint ────────────────────────────────

/// Circular convolution: w[n] = Σ_k u[k]·v[(n−k) mod L].
///
/// Computed as ifft(fft(u)⊙fft(v)); under the convention above no extra
/// scale factor appears.
pub fn circ_conv(u: &[Complex64], v: &[Complex64]) -> Result<Vec<Complex64>> {
    check_equal_len("circ_conv", u, v)?;
    let (mut uh, vh) = (fft(u), fft(v));
    for (a, b) in uh.iter_mut().zip(vh.iter()) {
        *a *= b;
    }
    Ok(ifft(&uh))
}

/// Adjoint of convolution-by-`y` applied to `z`: returns C_y* z where C_y
/// is the circulant matrix with first column `y`.
///
/// Equivalently a circular cross-correlation,
/// out[j] = Σ_k conj(y[k])·z[(j+k) mod L], computed as
/// ifft(conj(fft(y))⊙fft(z)).
pub fn circ_corr_adjoint(y: &[Complex64], z: &[Complex64]) -> Result<Vec<Complex64>> {
    check_equal_len("circ_corr_adjoint", y, z)?;
    let (yh, mut zh) = (fft(y), fft(z));
    for (a, b) in zh.iter_mut().zip(yh.iter()) {
        *a *= b.conj();
    }
    Ok(ifft(&zh))
}

// ── Index reversal ──────────────────────────────────────────────────────

/// Index-reversal permutation: out[0] = v[0], out[k] = v[L−k] for k ≥ 1.
///
/// This is the permutation that turns a circulant matrix into its
/// transpose; it is an involution.
pub fn flip(v: &[Complex64]) -> Vec<Complex64> {
    let l = v.len();
    let mut out = Vec::with_capacity(l);
    out.push(v[0]);
    for k in 1..l {
        out.push(v[l - k]);
    }
    out
}

// ── Tap-space embedding ─────────────────────────────────────────────────

/// Zero-pad a K-tap vector to length L (K ≤ L required).
pub fn embed(v: &[Complex64], l: usize) -> Result<Vec<Complex64>> {
    if v.len() > l {
        return Err(Error::Dimension(format!(
            "embed: tap count {} exceeds signal length {}",
            v.len(),
            l
        )));
    }
    let mut out = v.to_vec();
    out.resize(l, Complex64::new(0.0, 0.0));
    Ok(out)
}

/// Keep the first K entries of a length-L signal (K ≤ L required).
pub fn restrict(v: &[Complex64], k: usize) -> Result<Vec<Complex64>> {
    if k > v.len() {
        return Err(Error::Dimension(format!(
            "restrict: requested {} taps from a length-{} signal",
            k,
            v.len()
        )));
    }
    Ok(v[..k].to_vec())
}

// ── Small vector helpers ────────────────────────────────────────────────

/// Squared Euclidean norm Σ |v[i]|².
pub fn norm_sq(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// Euclidean norm.
pub fn norm(v: &[Complex64]) -> f64 {
    norm_sq(v).sqrt()
}

/// Inner product ⟨u, v⟩ = Σ conj(u[i])·v[i] (conjugate-linear in `u`).
pub fn inner(u: &[Complex64], v: &[Complex64]) -> Complex64 {
    debug_assert_eq!(u.len(), v.len());
    u.iter()
        .zip(v.iter())
        .map(|(a, b)| a.conj() * b)
        .sum()
}

/// Scale `v` to unit norm in place; returns the original norm.
/// Leaves an exact zero vector untouched and returns 0.
pub fn normalize(v: &mut [Complex64]) -> f64 {
    let n = norm(v);
    if n > 0.0 {
        let inv = 1.0 / n;
        for z in v.iter_mut() {
            *z *= inv;
        }
    }
    n
}

fn check_equal_len(op: &str, u: &[Complex64], v: &[Complex64]) -> Result<()> {
    if u.len() != v.len() {
        return Err(Error::Dimension(format!(
            "{op}: signal lengths differ ({} vs {})",
            u.len(),
            v.len()
        )));
    }
    if u.is_empty() {
        return Err(Error::Dimension(format!("{op}: empty signals")));
    }
    Ok(())
}

// ── Tests ───────────────────────────────────────────────────────────────

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_signal(rng: &mut StdRng, l: usize) -> Vec<Complex64> {
        (0..l)
            .map(|_| c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
            .collect()
    }

    /// Naive O(L²) circular convolution, the independent reference for the
    /// FFT path.
    fn circ_conv_naive(u: &[Complex64], v: &[Complex64]) -> Vec<Complex64> {
        let l = u.len();
        (0..l)
            .map(|n| {
                (0..l)
                    .map(|k| u[k] * v[(n + l - k) % l])
                    .sum()
            })
            .collect()
    }

    /// Dense circulant matrix with first column `y`: C[r][c] = y[(r−c) mod L].
    fn circulant(y: &[Complex64]) -> Vec<Vec<Complex64>> {
        let l = y.len();
        (0..l)
            .map(|r| (0..l).map(|col| y[(r + l - col) % l]).collect())
            .collect()
    }

    #[test]
    fn conv_with_delta_at_zero_is_identity() {
        let mut u = vec![c(0.0, 0.0); 5];
        u[0] = c(1.0, 0.0);
        let v = vec![c(1.0, 2.0), c(3.0, -1.0), c(0.5, 0.0), c(-2.0, 4.0), c(0.0, 1.0)];
        let w = circ_conv(&u, &v).unwrap();
        for (a, b) in w.iter().zip(v.iter()) {
            assert!((a - b).norm() < 1e-12, "expected identity, got {a} vs {b}");
        }
    }

    #[test]
    fn conv_with_delta_at_one_cyclically_shifts() {
        let mut u = vec![c(0.0, 0.0); 4];
        u[1] = c(1.0, 0.0);
        let v = vec![c(1.0, 0.0), c(2.0, 0.0), c(3.0, 0.0), c(4.0, 0.0)];
        let w = circ_conv(&u, &v).unwrap();
        let expect = [4.0, 1.0, 2.0, 3.0];
        for (a, e) in w.iter().zip(expect.iter()) {
            assert!((a.re - e).abs() < 1e-12 && a.im.abs() < 1e-12, "got {w:?}");
        }
    }

    #[test]
    fn conv_matches_naive_double_loop() {
        let mut rng = StdRng::seed_from_u64(7);
        let l = 64;
        let u = random_signal(&mut rng, l);
        let v = random_signal(&mut rng, l);
        let fast = circ_conv(&u, &v).unwrap();
        let slow = circ_conv_naive(&u, &v);
        let err: f64 = fast
            .iter()
            .zip(slow.iter())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        let scale = norm(&slow);
        assert!(err <= 1e-12 * scale, "relative error {}", err / scale);
    }

    #[test]
    fn conv_commutes() {
        let mut rng = StdRng::seed_from_u64(8);
        for l in [3, 16, 31] {
            let u = random_signal(&mut rng, l);
            let v = random_signal(&mut rng, l);
            let uv = circ_conv(&u, &v).unwrap();
            let vu = circ_conv(&v, &u).unwrap();
            let err: f64 = uv.iter().zip(vu.iter()).map(|(a, b)| (a - b).norm()).sum();
            assert!(err < 1e-12 * (1.0 + norm(&uv)), "L={l}: asymmetry {err}");
        }
    }

    #[test]
    fn conv_rejects_mismatched_lengths() {
        let u = vec![c(1.0, 0.0); 4];
        let v = vec![c(1.0, 0.0); 5];
        assert!(matches!(
            circ_conv(&u, &v),
            Err(crate::error::Error::Dimension(_))
        ));
    }

    #[test]
    fn corr_adjoint_with_delta_kernel_is_identity() {
        let mut y = vec![c(0.0, 0.0); 6];
        y[0] = c(1.0, 0.0);
        let mut rng = StdRng::seed_from_u64(9);
        let z = random_signal(&mut rng, 6);
        let out = circ_corr_adjoint(&y, &z).unwrap();
        for (a, b) in out.iter().zip(z.iter()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn corr_adjoint_matches_dense_circulant_adjoint() {
        let mut rng = StdRng::seed_from_u64(10);
        let l = 32;
        let y = random_signal(&mut rng, l);
        let z = random_signal(&mut rng, l);
        let fast = circ_corr_adjoint(&y, &z).unwrap();
        let cy = circulant(&y);
        // (C_y* z)[j] = Σ_r conj(C_y[r][j]) z[r]
        let slow: Vec<Complex64> = (0..l)
            .map(|j| (0..l).map(|r| cy[r][j].conj() * z[r]).sum())
            .collect();
        let err: f64 = fast.iter().zip(slow.iter()).map(|(a, b)| (a - b).norm()).sum();
        assert!(err <= 1e-12 * (1.0 + norm(&slow)), "error {err}");
    }

    #[test]
    fn corr_adjoint_of_zero_is_zero() {
        let mut rng = StdRng::seed_from_u64(11);
        let y = random_signal(&mut rng, 8);
        let z = vec![c(0.0, 0.0); 8];
        let out = circ_corr_adjoint(&y, &z).unwrap();
        assert!(norm(&out) == 0.0);
    }

    #[test]
    fn adjoint_identity_links_conv_and_corr() {
        // ⟨circ_conv(y, s), z⟩ = ⟨s, circ_corr_adjoint(y, z)⟩
        let mut rng = StdRng::seed_from_u64(12);
        for l in [5, 16, 27] {
            let y = random_signal(&mut rng, l);
            let s = random_signal(&mut rng, l);
            let z = random_signal(&mut rng, l);
            let lhs = inner(&circ_conv(&y, &s).unwrap(), &z);
            let rhs = inner(&s, &circ_corr_adjoint(&y, &z).unwrap());
            assert!(
                (lhs - rhs).norm() < 1e-10 * (1.0 + lhs.norm()),
                "L={l}: {lhs} vs {rhs}"
            );
        }
    }

    #[test]
    fn flip_reverses_all_but_first() {
        let v = vec![c(1.0, 0.0), c(2.0, 0.0), c(3.0, 0.0), c(4.0, 0.0)];
        let f = flip(&v);
        let expect = [1.0, 4.0, 3.0, 2.0];
        for (a, e) in f.iter().zip(expect.iter()) {
            assert_eq!(a.re, *e);
        }
    }

    #[test]
    fn flip_is_an_involution() {
        let mut rng = StdRng::seed_from_u64(13);
        for l in [1, 2, 9, 32] {
            let v = random_signal(&mut rng, l);
            let ff = flip(&flip(&v));
            assert_eq!(v, ff, "L={l}");
        }
    }

    #[test]
    fn flip_of_singleton_is_itself() {
        let v = vec![c(5.0, -2.0)];
        assert_eq!(flip(&v), v);
    }

    #[test]
    fn flip_transposes_circulant_action() {
        // C_h^T z = J C_h J z: convolving with the flipped kernel equals the
        // transposed circulant acting on the flipped argument, flipped back.
        let mut rng = StdRng::seed_from_u64(14);
        let l = 32;
        let h = random_signal(&mut rng, l);
        let z = random_signal(&mut rng, l);
        let ch = circulant(&h);
        let transposed: Vec<Complex64> = (0..l)
            .map(|r| (0..l).map(|col| ch[col][r] * z[col]).sum())
            .collect();
        let via_flip = flip(&circ_conv(&h, &flip(&z)).unwrap());
        let err: f64 = transposed
            .iter()
            .zip(via_flip.iter())
            .map(|(a, b)| (a - b).norm())
            .sum();
        assert!(err <= 1e-12 * (1.0 + norm(&transposed)), "error {err}");
    }

    #[test]
    fn embed_zero_pads_and_restrict_inverts() {
        let v = vec![c(1.0, 1.0), c(2.0, -1.0)];
        let e = embed(&v, 4).unwrap();
        assert_eq!(e.len(), 4);
        assert_eq!(e[0], v[0]);
        assert_eq!(e[1], v[1]);
        assert_eq!(e[2], c(0.0, 0.0));
        assert_eq!(e[3], c(0.0, 0.0));
        assert_eq!(restrict(&e, 2).unwrap(), v);
    }

    #[test]
    fn restrict_keeps_leading_entries() {
        let v = vec![c(5.0, 0.0), c(6.0, 0.0), c(7.0, 0.0), c(8.0, 0.0)];
        let r = restrict(&v, 2).unwrap();
        assert_eq!(r, vec![c(5.0, 0.0), c(6.0, 0.0)]);
    }

    #[test]
    fn embed_rejects_k_above_l() {
        let v = vec![c(1.0, 0.0); 5];
        assert!(embed(&v, 3).is_err());
        assert!(restrict(&v, 9).is_err());
    }

    #[test]
    fn parseval_holds_for_unnormalized_forward() {
        let mut rng = StdRng::seed_from_u64(15);
        for l in [4, 17, 64] {
            let v = random_signal(&mut rng, l);
            let vh = fft(&v);
            let lhs = norm_sq(&vh);
            let rhs = l as f64 * norm_sq(&v);
            assert!(
                (lhs - rhs).abs() < 1e-10 * rhs.max(1.0),
                "L={l}: {lhs} vs {rhs}"
            );
        }
    }

    #[test]
    fn fft_round_trips_through_ifft() {
        let mut rng = StdRng::seed_from_u64(16);
        for l in [1, 2, 12, 37, 128] {
            let v = random_signal(&mut rng, l);
            let back = ifft(&fft(&v));
            let err: f64 = v.iter().zip(back.iter()).map(|(a, b)| (a - b).norm()).sum();
            assert!(err < 1e-11 * (1.0 + norm(&v)), "L={l}: error {err}");
        }
    }

    #[test]
    fn normalize_produces_unit_vectors_and_reports_scale() {
        let mut v = vec![c(3.0, 0.0), c(0.0, 4.0)];
        let n = normalize(&mut v);
        assert!((n - 5.0).abs() < 1e-15);
        assert!((norm(&v) - 1.0).abs() < 1e-15);
        let mut z = vec![c(0.0, 0.0); 3];
        assert_eq!(normalize(&mut z), 0.0);
    }
}
