//! Error and diagnostic metrics: principal angles between complex lines,
//! gain-flatness parameters, and nearest-rank percentiles.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::signal::{inner, norm_sq};

/// Sine of the principal angle between the complex lines spanned by `u`
/// and `v`: sqrt(1 − |⟨u,v⟩|²/(‖u‖²‖v‖²)), clamped into [0, 1].
///
/// Invariant to nonzero complex scaling of either argument, which makes it
/// the right recovery metric for estimates defined only up to a global
/// scale and phase.
///
/// Computed as the norm of v's component orthogonal to u (after unit
/// normalization), which equals sqrt(1 − cos²) exactly but avoids the
/// cancellation that caps the subtraction form at ~1e−8 for near-parallel
/// inputs; converged solver errors sit well below that floor.
pub fn sin_angle(u: &[Complex64], v: &[Complex64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Dimension(format!(
            "sin_angle: lengths differ ({} vs {})",
            u.len(),
            v.len()
        )));
    }
    let (nu, nv) = (norm_sq(u), norm_sq(v));
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::Domain(
            "sin_angle: zero vector has no direction".into(),
        ));
    }
    let (su, sv) = (nu.sqrt(), nv.sqrt());
    let c = inner(u, v) / (su * sv);
    // Residual of each unit vector off the other's line; averaging the
    // two (mathematically equal) squares keeps the result bit-identical
    // under argument swap.
    let (mut uv_sq, mut vu_sq) = (0.0, 0.0);
    for (ui, vi) in u.iter().zip(v.iter()) {
        let (un, vn) = (ui / su, vi / sv);
        uv_sq += (vn - c * un).norm_sqr();
        vu_sq += (un - c.conj() * vn).norm_sqr();
    }
    Ok((0.5 * (uv_sq + vu_sq)).sqrt().min(1.0))
}

/// Flatness of a gain vector: (μ, ν) = (max, min) over m of √M·|a_m|/‖a‖.
///
/// μ = ν = 1 exactly when all gains share one magnitude; ν near zero means
/// some channel is effectively silent. Magnitudes are used so complex
/// gains are admissible.
pub fn flatness(a: &[Complex64]) -> Result<(f64, f64)> {
    let n = norm_sq(a).sqrt();
    if a.is_empty() || n == 0.0 {
        return Err(Error::Domain("flatness: zero gain vector".into()));
    }
    let scale = (a.len() as f64).sqrt() / n;
    let mut mu = f64::MIN;
    let mut nu = f64::MAX;
    for g in a {
        let t = scale * g.norm();
        mu = mu.max(t);
        nu = nu.min(t);
    }
    Ok((mu, nu))
}

/// Nearest-rank percentile: sort ascending and return the element at index
/// ⌈p/100·n⌉ − 1 (clamped to the valid range). p must lie in [0, 100].
///
/// No interpolation — the returned value is always a member of the input,
/// and the definition is exactly reproducible across implementations.
pub fn percentile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Domain("percentile of an empty list".into()));
    }
    if !(0.0..=100.0).contains(&p) {
        return Err(Error::Domain(format!(
            "percentile {p} outside [0, 100]"
        )));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let rank = (p / 100.0 * n as f64).ceil() as isize - 1;
    let idx = rank.clamp(0, n as isize - 1) as usize;
    Ok(sorted[idx])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn sin_angle_of_collinear_vectors_is_zero() {
        let v = vec![c(1.0, 2.0), c(-0.5, 0.3)];
        assert!(sin_angle(&v, &v).unwrap() <= 1e-15);
        let scaled: Vec<Complex64> = v.iter().map(|z| z * c(0.0, -2.5)).collect();
        assert!(sin_angle(&v, &scaled).unwrap() < 1e-12);
    }

    #[test]
    fn sin_angle_resolves_angles_below_the_cancellation_floor() {
        // The 1 − cos² subtraction form bottoms out near √eps ≈ 1e−8;
        // the projection form must track these exactly.
        let u = vec![c(1.0, 0.0), c(0.0, 0.0)];
        for eps in [1e-7, 1e-9, 1e-11, 1e-13] {
            let v = vec![c(1.0, 0.0), c(eps, 0.5 * eps)];
            let expected = (eps * eps * 1.25).sqrt();
            let got = sin_angle(&u, &v).unwrap();
            assert!(
                (got / expected - 1.0).abs() < 1e-9,
                "eps {eps}: got {got}, expected {expected}"
            );
        }
    }

    #[test]
    fn sin_angle_of_orthogonal_vectors_is_one() {
        let u = vec![c(1.0, 0.0), c(0.0, 0.0)];
        let v = vec![c(0.0, 0.0), c(1.0, 0.0)];
        assert_eq!(sin_angle(&u, &v).unwrap(), 1.0);
    }

    #[test]
    fn sin_angle_of_45_degrees() {
        let u = vec![c(1.0, 0.0), c(0.0, 0.0)];
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let v = vec![c(s, 0.0), c(s, 0.0)];
        let got = sin_angle(&u, &v).unwrap();
        assert!((got - s).abs() < 1e-12, "expected 1/√2, got {got}");
    }

    #[test]
    fn sin_angle_is_symmetric_and_pythagorean() {
        let mut rng = StdRng::seed_from_u64(31);
        for _ in 0..100 {
            let u: Vec<Complex64> = (0..6).map(|_| c(rng.gen(), rng.gen())).collect();
            let v: Vec<Complex64> = (0..6).map(|_| c(rng.gen(), rng.gen())).collect();
            let s_uv = sin_angle(&u, &v).unwrap();
            let s_vu = sin_angle(&v, &u).unwrap();
            assert_eq!(s_uv, s_vu, "symmetry must be exact");
            let cos_sq = inner(&u, &v).norm_sqr() / (norm_sq(&u) * norm_sq(&v));
            assert!((s_uv * s_uv + cos_sq - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn sin_angle_rejects_zero_and_mismatched_inputs() {
        let u = vec![c(1.0, 0.0)];
        let z = vec![c(0.0, 0.0)];
        assert!(matches!(sin_angle(&u, &z), Err(Error::Domain(_))));
        let w = vec![c(1.0, 0.0), c(1.0, 0.0)];
        assert!(matches!(sin_angle(&u, &w), Err(Error::Dimension(_))));
    }

    #[test]
    fn flatness_of_uniform_gains_is_unity() {
        let a = vec![c(1.0, 0.0); 5];
        let (mu, nu) = flatness(&a).unwrap();
        assert!((mu - 1.0).abs() < 1e-12);
        assert!((nu - 1.0).abs() < 1e-12);
    }

    #[test]
    fn flatness_of_single_spike() {
        let a = vec![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)];
        let (mu, nu) = flatness(&a).unwrap();
        assert!((mu - 2.0).abs() < 1e-12, "√4·1/1 = 2, got {mu}");
        assert_eq!(nu, 0.0);
    }

    #[test]
    fn flatness_brackets_one() {
        let mut rng = StdRng::seed_from_u64(32);
        for _ in 0..100 {
            let a: Vec<Complex64> = (0..7)
                .map(|_| c(rng.gen::<f64>() + 0.1, rng.gen::<f64>() - 0.5))
                .collect();
            let (mu, nu) = flatness(&a).unwrap();
            assert!(nu <= 1.0 + 1e-12 && mu >= 1.0 - 1e-12, "ν={nu} μ={mu}");
        }
    }

    #[test]
    fn percentile_nearest_rank_on_1_to_100() {
        let values: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        assert_eq!(percentile(&values, 95.0).unwrap(), 95.0);
        assert_eq!(percentile(&values, 100.0).unwrap(), 100.0);
        assert_eq!(percentile(&values, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn percentile_of_singleton_and_small_lists() {
        assert_eq!(percentile(&[42.0], 3.0).unwrap(), 42.0);
        assert_eq!(percentile(&[42.0], 97.0).unwrap(), 42.0);
        // ⌈50/100·3⌉ − 1 = 1 → second smallest.
        assert_eq!(percentile(&[3.0, 1.0, 2.0], 50.0).unwrap(), 2.0);
    }

    #[test]
    fn percentile_is_monotone_in_p() {
        let mut rng = StdRng::seed_from_u64(33);
        let values: Vec<f64> = (0..37).map(|_| rng.gen()).collect();
        let mut last = f64::MIN;
        for p in [0.0, 10.0, 25.0, 50.0, 75.0, 90.0, 95.0, 99.0, 100.0] {
            let q = percentile(&values, p).unwrap();
            assert!(q >= last, "p={p}: {q} < {last}");
            last = q;
        }
    }

    #[test]
    fn percentile_rejects_empty_and_out_of_range() {
        assert!(matches!(percentile(&[], 50.0), Err(Error::Domain(_))));
        assert!(matches!(percentile(&[1.0], -1.0), Err(Error::Domain(_))));
        assert!(matches!(percentile(&[1.0], 101.0), Err(Error::Domain(_))));
    }
}
