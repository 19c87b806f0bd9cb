//! Dense complex Hermitian eigensolvers and rank-1 truncation.
//!
//! The pipeline is the classical one for Hermitian matrices:
//!
//! 1. Householder reflections reduce H to tridiagonal form, and a diagonal
//!    phase scaling makes the sub-diagonal real — so the core iteration
//!    runs on a real symmetric tridiagonal matrix.
//! 2. Implicit-shift QL produces the full spectrum (values only, O(n²)).
//! 3. The one extremal eigenvector a caller asks for is recovered by
//!    inverse iteration on the tridiagonal matrix and transformed back
//!    through the stored reflectors — much cheaper than accumulating all
//!    n eigenvectors when only one is needed.
//!
//! Contracts, identical for every returned pair:
//! * residual ‖H·v − λ·v‖ ≤ 1e−10·‖H‖ (verified before returning);
//! * the vector is unit norm and phase-normalized: its largest-magnitude
//!   entry is real positive, ties broken by lowest index, so repeated
//!   calls on identical input are bit-stable;
//! * `degenerate` is set when the eigen-gap at the extremal value is below
//!   1e−12·‖H‖ — the vector is then one valid member of the eigenspace.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::mat::CMatrix;
use crate::signal::{norm, normalize};

/// Relative Hermitian-symmetry defect above which input is rejected.
const HERMITIAN_TOL: f64 = 1e-8;
/// Residual contract for returned eigenpairs, relative to ‖H‖.
const RESIDUAL_TOL: f64 = 1e-10;
/// Eigen-gap (relative to ‖H‖) below which an extremal pair is flagged
/// degenerate.
const DEGENERATE_GAP: f64 = 1e-12;
/// QL sweep budget per eigenvalue.
const MAX_QL_ITERS: usize = 50;

// ── Public types ────────────────────────────────────────────────────────

/// One eigenvalue with its unit eigenvector.
#[derive(Debug, Clone)]
pub struct EigenPair {
    pub value: f64,
    pub vector: Vec<Complex64>,
    /// True when the extremal eigenvalue is (numerically) repeated; the
    /// vector is then an arbitrary member of the eigenspace.
    pub degenerate: bool,
}

/// Best rank-1 factorization V ≈ sigma·left·rightᵀ (note: plain transpose,
/// no conjugation, matching the stacked-coefficient outer-product layout).
#[derive(Debug, Clone)]
pub struct Rank1Factors {
    pub sigma: f64,
    pub left: Vec<Complex64>,
    pub right: Vec<Complex64>,
}

// ── Public entry points ─────────────────────────────────────────────────

/// Eigenpair with the smallest eigenvalue of Hermitian `h`.
pub fn min_eig_vector(h: &CMatrix) -> Result<EigenPair> {
    let decomp = HermitianDecomp::new(h)?;
    decomp.extremal_pair(Extreme::Min)
}

/// Eigenpair with the largest eigenvalue of Hermitian `h`.
pub fn max_eig_vector(h: &CMatrix) -> Result<EigenPair> {
    let decomp = HermitianDecomp::new(h)?;
    decomp.extremal_pair(Extreme::Max)
}

/// Spectral norm (largest eigenvalue magnitude) of Hermitian `h`.
pub fn spectral_norm(h: &CMatrix) -> Result<f64> {
    let decomp = HermitianDecomp::new(h)?;
    Ok(decomp.spectral_scale())
}

/// Rotate `v` by a global phase so its largest-magnitude entry is real
/// positive; ties (within 1e−12 in magnitude) break to the lowest index.
/// A zero vector is left untouched.
pub fn phase_normalize(v: &mut [Complex64]) {
    let mx = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if mx == 0.0 {
        return;
    }
    let idx = v
        .iter()
        .position(|z| z.norm() >= mx - 1e-12)
        .expect("a maximal entry exists");
    let pivot = v[idx];
    let rot = pivot.conj() / pivot.norm();
    for z in v.iter_mut() {
        *z *= rot;
    }
    // Force the pivot exactly real in case of rounding in the rotation.
    v[idx] = Complex64::new(v[idx].re.max(0.0), 0.0);
}

// ── Householder reduction + QL spectrum ─────────────────────────────────

enum Extreme {
    Min,
    Max,
}

/// Tridiagonal reduction of a Hermitian matrix, retaining everything
/// needed to reconstruct eigenvectors on demand.
struct HermitianDecomp {
    n: usize,
    /// Symmetrized copy of the input (for residual verification).
    h: CMatrix,
    /// Real tridiagonal diagonal after reduction.
    diag: Vec<f64>,
    /// Real nonnegative sub-diagonal (length n, last entry unused).
    sub: Vec<f64>,
    /// Householder unit vectors; entry k acts on rows k+1..n.
    reflectors: Vec<Option<Vec<Complex64>>>,
    /// Diagonal phase scaling that made the sub-diagonal real.
    phases: Vec<Complex64>,
    /// Eigenvalues in ascending order.
    values: Vec<f64>,
}

impl HermitianDecomp {
    fn new(input: &CMatrix) -> Result<Self> {
        if input.rows() != input.cols() || input.rows() == 0 {
            return Err(Error::Dimension(format!(
                "eigensolver requires a nonempty square matrix, got {}x{}",
                input.rows(),
                input.cols()
            )));
        }
        if !input.all_finite() {
            return Err(Error::Domain(
                "eigensolver input contains non-finite entries".into(),
            ));
        }
        let defect = input.hermitian_defect();
        if defect > HERMITIAN_TOL {
            return Err(Error::Domain(format!(
                "eigensolver input is not Hermitian (relative defect {defect:.3e})"
            )));
        }
        let mut h = input.clone();
        h.hermitize();

        let n = h.rows();
        let mut work = h.clone();
        let mut reflectors: Vec<Option<Vec<Complex64>>> = Vec::with_capacity(n.saturating_sub(2));

        // Householder reduction: for each column k, reflect rows k+1..n so
        // only the entry directly under the diagonal survives.
        for k in 0..n.saturating_sub(2) {
            let tail = n - k - 1;
            let x: Vec<Complex64> = (0..tail).map(|i| work[(k + 1 + i, k)]).collect();
            let xnorm = norm(&x);
            if xnorm == 0.0 {
                reflectors.push(None);
                continue;
            }
            // Choose the reflected value −phase(x₀)·‖x‖ so v = x − target
            // has the largest possible leading entry (numerical stability).
            let phase0 = if x[0].norm() > 0.0 {
                x[0] / x[0].norm()
            } else {
                Complex64::new(1.0, 0.0)
            };
            let target = -phase0 * xnorm;
            let mut v = x.clone();
            v[0] -= target;
            let vn = normalize(&mut v);
            if vn == 0.0 {
                reflectors.push(None);
                continue;
            }

            // Two-sided update of the trailing block:
            //   A ← (I − 2vv*) A (I − 2vv*) = A − v·w* − w·v*
            // with p = 2·A·v and w = p − (v*·p)·v.
            let mut p = vec![Complex64::new(0.0, 0.0); tail];
            for r in 0..tail {
                let mut acc = Complex64::new(0.0, 0.0);
                for c in 0..tail {
                    acc += work[(k + 1 + r, k + 1 + c)] * v[c];
                }
                p[r] = 2.0 * acc;
            }
            let mu: Complex64 = v.iter().zip(p.iter()).map(|(a, b)| a.conj() * b).sum();
            let w: Vec<Complex64> = p.iter().zip(v.iter()).map(|(pi, vi)| pi - mu * vi).collect();
            for r in 0..tail {
                for c in 0..tail {
                    let delta = v[r] * w[c].conj() + w[r] * v[c].conj();
                    work[(k + 1 + r, k + 1 + c)] -= delta;
                }
            }
            // The reflected column: exactly `target` under the diagonal.
            work[(k + 1, k)] = target;
            for r in (k + 2)..n {
                work[(r, k)] = Complex64::new(0.0, 0.0);
            }
            reflectors.push(Some(v));
        }

        // Extract the (complex) tridiagonal, then phase-scale the
        // sub-diagonal real nonnegative: T' = D*·T·D with D diagonal unitary.
        let diag: Vec<f64> = (0..n).map(|i| work[(i, i)].re).collect();
        let sub_c: Vec<Complex64> = (0..n.saturating_sub(1))
            .map(|i| work[(i + 1, i)])
            .collect();
        let mut phases = vec![Complex64::new(1.0, 0.0); n];
        let mut sub = vec![0.0f64; n];
        for i in 0..n.saturating_sub(1) {
            let t = sub_c[i];
            let mag = t.norm();
            sub[i] = mag;
            phases[i + 1] = if mag > 0.0 {
                phases[i] * (t / mag)
            } else {
                phases[i]
            };
        }

        // QL with implicit shifts on the real tridiagonal → full spectrum.
        let mut values = diag.clone();
        let mut e = sub.clone();
        tridiag_eigenvalues(&mut values, &mut e)?;
        values.sort_by(f64::total_cmp);

        // Keep the ORIGINAL tridiagonal for inverse iteration.
        Ok(HermitianDecomp {
            n,
            h,
            diag,
            sub,
            reflectors,
            phases,
            values,
        })
    }

    fn spectral_scale(&self) -> f64 {
        let lo = self.values.first().copied().unwrap_or(0.0);
        let hi = self.values.last().copied().unwrap_or(0.0);
        lo.abs().max(hi.abs())
    }

    fn extremal_pair(&self, which: Extreme) -> Result<EigenPair> {
        let n = self.n;
        let (value, gap) = match which {
            Extreme::Min => {
                let v = self.values[0];
                let gap = if n > 1 { self.values[1] - v } else { f64::INFINITY };
                (v, gap)
            }
            Extreme::Max => {
                let v = self.values[n - 1];
                let gap = if n > 1 { v - self.values[n - 2] } else { f64::INFINITY };
                (v, gap)
            }
        };
        let scale = self.spectral_scale();
        let degenerate = n > 1 && gap < DEGENERATE_GAP * scale;

        // Inverse iteration with a deterministic start; retry once with a
        // different start if the residual contract is not met.
        for salt in [0x5EED_0001u64, 0x5EED_0002u64] {
            let z = self.tridiag_inverse_iteration(value, salt);
            let mut v = self.back_transform(&z);
            normalize(&mut v);
            phase_normalize(&mut v);
            let hv = self.h.matvec(&v);
            let residual: f64 = hv
                .iter()
                .zip(v.iter())
                .map(|(a, b)| (a - value * b).norm_sqr())
                .sum::<f64>()
                .sqrt();
            if residual <= RESIDUAL_TOL * scale.max(f64::MIN_POSITIVE) {
                return Ok(EigenPair {
                    value,
                    vector: v,
                    degenerate,
                });
            }
        }
        Err(Error::Numerical(format!(
            "eigenvector residual exceeded {RESIDUAL_TOL:e}·‖H‖ at eigenvalue {value}"
        )))
    }

    /// A few rounds of inverse iteration on the real tridiagonal (diag,
    /// sub) at shift `lambda`. Returns a real unit vector.
    fn tridiag_inverse_iteration(&self, lambda: f64, salt: u64) -> Vec<f64> {
        let n = self.n;
        if n == 1 {
            return vec![1.0];
        }
        let tnorm = self
            .diag
            .iter()
            .map(|d| d.abs())
            .chain(self.sub.iter().map(|e| e.abs()))
            .fold(0.0, f64::max)
            .max(lambda.abs())
            .max(f64::MIN_POSITIVE);

        // Deterministic jittered start: mildly varied entries so the start
        // is never orthogonal to the target eigenvector by symmetry.
        let mut x: Vec<f64> = (0..n)
            .map(|i| 0.75 + 0.5 * splitmix_unit(salt.wrapping_add(i as u64)))
            .collect();
        normalize_real(&mut x);

        let mut best = x.clone();
        let mut best_res = f64::INFINITY;
        for _ in 0..5 {
            solve_shifted_tridiag(&self.diag, &self.sub, lambda, tnorm, &mut x);
            normalize_real(&mut x);
            let res = self.tridiag_residual(&x, lambda);
            if res < best_res {
                best_res = res;
                best.copy_from_slice(&x);
            }
            if res <= 1e-13 * tnorm {
                break;
            }
        }
        best
    }

    fn tridiag_residual(&self, x: &[f64], lambda: f64) -> f64 {
        let n = self.n;
        let mut acc = 0.0;
        for i in 0..n {
            let mut t = (self.diag[i] - lambda) * x[i];
            if i > 0 {
                t += self.sub[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                t += self.sub[i] * x[i + 1];
            }
            acc += t * t;
        }
        acc.sqrt()
    }

    /// Map a tridiagonal-space vector back to the original basis: apply the
    /// phase scaling, then the Householder reflectors in reverse order.
    fn back_transform(&self, z: &[f64]) -> Vec<Complex64> {
        let n = self.n;
        let mut v: Vec<Complex64> = (0..n).map(|i| self.phases[i] * z[i]).collect();
        for k in (0..self.reflectors.len()).rev() {
            if let Some(refl) = &self.reflectors[k] {
                let tail = n - k - 1;
                let dot: Complex64 = (0..tail).map(|i| refl[i].conj() * v[k + 1 + i]).sum();
                for i in 0..tail {
                    v[k + 1 + i] -= 2.0 * dot * refl[i];
                }
            }
        }
        v
    }
}

/// Implicit-shift QL sweeps on a real symmetric tridiagonal matrix;
/// `d` holds the diagonal (overwritten with eigenvalues, unsorted),
/// `e` the sub-diagonal in entries 0..n−1.
fn tridiag_eigenvalues(d: &mut [f64], e: &mut [f64]) -> Result<()> {
    let n = d.len();
    if n == 0 {
        return Ok(());
    }
    e[n - 1] = 0.0;
    for l in 0..n {
        let mut iter = 0;
        loop {
            // Find the first negligible sub-diagonal at or after l; the
            // block [l..m] is what the sweep acts on.
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > MAX_QL_ITERS {
                return Err(Error::Numerical(
                    "tridiagonal QL failed to converge within the sweep budget".into(),
                ));
            }
            // Wilkinson-style shift from the 2×2 corner at l.
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(if g >= 0.0 { 1.0 } else { -1.0 }));
            let (mut s, mut c) = (1.0f64, 1.0f64);
            let mut p = 0.0f64;
            let mut underflow = false;
            for i in (l..m).rev() {
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    // Rotation annihilated early: split the block and retry.
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                let t = (d[i] - g) * s + 2.0 * c * b;
                p = s * t;
                d[i + 1] = g + p;
                g = c * t - b;
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}

/// Solve (T − λI)·x = rhs in place for tridiagonal T, Gaussian elimination
/// with partial pivoting; vanishing pivots are floored at eps·‖T‖ so the
/// solve always succeeds (inverse iteration wants exactly this behavior
/// near an eigenvalue).
fn solve_shifted_tridiag(diag: &[f64], sub: &[f64], lambda: f64, tnorm: f64, rhs: &mut [f64]) {
    let n = diag.len();
    let tiny = f64::EPSILON * tnorm;
    // Band storage: main (b), first super (c), fill-in second super (f).
    let mut a: Vec<f64> = (0..n).map(|i| if i > 0 { sub[i - 1] } else { 0.0 }).collect();
    let mut b: Vec<f64> = diag.iter().map(|d| d - lambda).collect();
    let mut c: Vec<f64> = (0..n).map(|i| if i + 1 < n { sub[i] } else { 0.0 }).collect();
    let mut f = vec![0.0f64; n];

    for i in 0..n - 1 {
        if a[i + 1].abs() > b[i].abs() {
            // Swap row i with row i+1.
            rhs.swap(i, i + 1);
            std::mem::swap(&mut b[i], &mut a[i + 1]);
            // After the swap the structure is: row i gains the entries of
            // the old row i+1.
            let (old_ci, old_fi) = (c[i], f[i]);
            c[i] = b[i + 1];
            f[i] = c[i + 1];
            b[i + 1] = old_ci;
            c[i + 1] = old_fi;
        }
        let mut pivot = b[i];
        if pivot.abs() < tiny {
            pivot = if pivot >= 0.0 { tiny } else { -tiny };
            b[i] = pivot;
        }
        let factor = a[i + 1] / pivot;
        a[i + 1] = 0.0;
        b[i + 1] -= factor * c[i];
        c[i + 1] -= factor * f[i];
        rhs[i + 1] -= factor * rhs[i];
    }
    if b[n - 1].abs() < tiny {
        b[n - 1] = if b[n - 1] >= 0.0 { tiny } else { -tiny };
    }
    // Back substitution over the (at most) three stored upper bands.
    rhs[n - 1] /= b[n - 1];
    if n >= 2 {
        let i = n - 2;
        rhs[i] = (rhs[i] - c[i] * rhs[i + 1]) / b[i];
    }
    for i in (0..n.saturating_sub(2)).rev() {
        rhs[i] = (rhs[i] - c[i] * rhs[i + 1] - f[i] * rhs[i + 2]) / b[i];
    }
}

fn normalize_real(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        for x in v.iter_mut() {
            *x /= n;
        }
    }
}

/// SplitMix64 finalizer mapped to [−1, 1); deterministic jitter source for
/// inverse-iteration starts (no RNG state involved).
fn splitmix_unit(i: u64) -> f64 {
    let mut z = i.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 52) as f64 * 2.0 - 1.0
}

// ── Rank-1 truncation ───────────────────────────────────────────────────

/// Best rank-1 approximation of an M×D matrix via power iteration on the
/// smaller of V·V* (M×M) or V*·V (D×D).
///
/// Start vector is deterministic — the column of V (resp. of V*) with the
/// largest norm — so repeated calls are bit-stable. Tolerance 1e−12 on the
/// iterate's angle change, capped at 500 iterations.
pub fn rank1_approx(v: &CMatrix) -> Rank1Factors {
    let (m, d) = (v.rows(), v.cols());
    let zero = Complex64::new(0.0, 0.0);

    if v.frob_norm() == 0.0 {
        let mut left = vec![zero; m];
        let mut right = vec![zero; d];
        left[0] = Complex64::new(1.0, 0.0);
        right[0] = Complex64::new(1.0, 0.0);
        return Rank1Factors {
            sigma: 0.0,
            left,
            right,
        };
    }

    let iterate_small = |gram_side_m: bool| -> Vec<Complex64> {
        // Pick the starting vector: the largest-norm column of V (M-side)
        // or of V* (D-side, i.e. the conjugated largest-norm row of V).
        let mut best_idx = 0;
        let mut best_norm = -1.0;
        let count = if gram_side_m { d } else { m };
        for j in 0..count {
            let nj = if gram_side_m {
                norm(&v.col(j))
            } else {
                norm(v.row(j))
            };
            if nj > best_norm {
                best_norm = nj;
                best_idx = j;
            }
        }
        let mut x: Vec<Complex64> = if gram_side_m {
            v.col(best_idx)
        } else {
            v.row(best_idx).iter().map(|z| z.conj()).collect()
        };
        normalize(&mut x);

        for _ in 0..500 {
            // One application of the Gram operator without forming it:
            // M-side: y = V·(V*·x); D-side: y = V*·(V·x).
            let y = if gram_side_m {
                let t = v.adjoint().matvec(&x);
                v.matvec(&t)
            } else {
                let t = v.matvec(&x);
                v.adjoint().matvec(&t)
            };
            let mut ynorm = y.clone();
            let scale = normalize(&mut ynorm);
            if scale == 0.0 {
                break;
            }
            let overlap: Complex64 = x.iter().zip(ynorm.iter()).map(|(a, b)| a.conj() * b).sum();
            let change = (1.0 - overlap.norm().min(1.0).powi(2)).max(0.0).sqrt();
            x = ynorm;
            if change <= 1e-12 {
                break;
            }
        }
        x
    };

    let (mut left, mut right, sigma);
    if m <= d {
        let u = iterate_small(true);
        let t = v.adjoint().matvec(&u); // σ·(right singular vector)
        sigma = norm(&t);
        left = u;
        right = if sigma > 0.0 {
            t.iter().map(|z| (z / sigma).conj()).collect()
        } else {
            let mut r = vec![zero; d];
            r[0] = Complex64::new(1.0, 0.0);
            r
        };
    } else {
        let x = iterate_small(false);
        let s = v.matvec(&x); // σ·(left singular vector)
        sigma = norm(&s);
        left = if sigma > 0.0 {
            s.iter().map(|z| z / sigma).collect()
        } else {
            let mut l = vec![zero; m];
            l[0] = Complex64::new(1.0, 0.0);
            l
        };
        right = x.iter().map(|z| z.conj()).collect();
    }
    phase_normalize(&mut left);
    phase_normalize(&mut right);
    Rank1Factors { sigma, left, right }
}

// ── Tests ───────────────────────────────────────────────────────────────
