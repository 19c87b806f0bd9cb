//! Minimal dense complex-matrix container plus the coefficient-vector
//! layout conventions used by the estimators.
//!
//! This is deliberately not a general linear-algebra layer: it provides
//! exactly the operations the Gram/restriction assembly and the
//! eigensolvers need, on row-major `Vec<Complex64>` storage.
//!
//! Layout conventions pinned here:
//!
//! * A stacked gain⊗coefficient vector of length M·D is channel-major —
//!   entry (m·D + i) belongs to channel m, coefficient i — so
//!   `kron_vec(a, b)` stacks a[0]·b, a[1]·b, …
//! * `mat_from_stacked` reshapes such a vector into an M×D matrix whose
//!   row m is the m-th D-block; hence `mat_from_stacked(kron_vec(a, b))`
//!   equals the outer product a·bᵀ (no conjugation).

use num_complex::Complex64;

// ── Matrix type ─────────────────────────────────────────────────────────

/// Dense complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl CMatrix {
    /// All-zero matrix of the given shape.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMatrix {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    /// Build a matrix entrywise from a closure over (row, col).
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut m = CMatrix::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                m[(r, c)] = f(r, c);
            }
        }
        m
    }

    /// Identity scaled by `s`.
    pub fn scaled_identity(n: usize, s: f64) -> Self {
        let mut m = CMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex64::new(s, 0.0);
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Row-major backing slice.
    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    /// Row `r` as a contiguous slice.
    pub fn row(&self, r: usize) -> &[Complex64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Copy of column `c`.
    pub fn col(&self, c: usize) -> Vec<Complex64> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> CMatrix {
        CMatrix::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    /// Matrix product self·other; shapes must agree.
    pub fn matmul(&self, other: &CMatrix) -> CMatrix {
        assert_eq!(
            self.cols, other.rows,
            "matmul: inner dimensions differ ({}x{} times {}x{})",
            self.rows, self.cols, other.rows, other.cols
        );
        let mut out = CMatrix::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(r, k)];
                if a == Complex64::new(0.0, 0.0) {
                    continue;
                }
                let orow = other.row(k);
                let dst = &mut out.data[r * other.cols..(r + 1) * other.cols];
                for (d, o) in dst.iter_mut().zip(orow.iter()) {
                    *d += a * o;
                }
            }
        }
        out
    }

    /// Matrix–vector product self·v.
    pub fn matvec(&self, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(
            self.cols,
            v.len(),
            "matvec: matrix is {}x{}, vector has length {}",
            self.rows,
            self.cols,
            v.len()
        );
        (0..self.rows)
            .map(|r| {
                self.row(r)
                    .iter()
                    .zip(v.iter())
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }

    /// Entrywise sum self + other.
    pub fn add(&self, other: &CMatrix) -> CMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut out = self.clone();
        for (d, o) in out.data.iter_mut().zip(other.data.iter()) {
            *d += o;
        }
        out
    }

    /// Entrywise difference self − other.
    pub fn sub(&self, other: &CMatrix) -> CMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut out = self.clone();
        for (d, o) in out.data.iter_mut().zip(other.data.iter()) {
            *d -= o;
        }
        out
    }

    /// Entrywise scale by a real factor.
    pub fn scale(&self, s: f64) -> CMatrix {
        let mut out = self.clone();
        for d in out.data.iter_mut() {
            *d *= s;
        }
        out
    }

    /// Frobenius norm.
    pub fn frob_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest entry magnitude.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Relative departure from Hermitian symmetry:
    /// ‖A − A*‖_F / max(‖A‖_F, tiny). Zero matrices count as Hermitian.
    pub fn hermitian_defect(&self) -> f64 {
        assert_eq!(self.rows, self.cols, "hermitian_defect: matrix not square");
        let mut defect = 0.0f64;
        for r in 0..self.rows {
            for c in r..self.cols {
                let d = self[(r, c)] - self[(c, r)].conj();
                defect += d.norm_sqr();
                if c > r {
                    defect += d.norm_sqr();
                }
            }
        }
        let scale = self.frob_norm();
        if scale == 0.0 {
            0.0
        } else {
            defect.sqrt() / scale
        }
    }

    /// Replace the matrix by (A + A*)/2, making it exactly Hermitian up to
    /// floating-point representation (diagonal imaginary parts are zeroed).
    pub fn hermitize(&mut self) {
        assert_eq!(self.rows, self.cols, "hermitize: matrix not square");
        for r in 0..self.rows {
            for c in (r + 1)..self.cols {
                let avg = 0.5 * (self[(r, c)] + self[(c, r)].conj());
                self[(r, c)] = avg;
                self[(c, r)] = avg.conj();
            }
            let d = self[(r, r)];
            self[(r, r)] = Complex64::new(d.re, 0.0);
        }
    }

    /// Write `block` with its top-left corner at (r0, c0).
    pub fn set_block(&mut self, r0: usize, c0: usize, block: &CMatrix) {
        assert!(r0 + block.rows <= self.rows && c0 + block.cols <= self.cols);
        for r in 0..block.rows {
            for c in 0..block.cols {
                self[(r0 + r, c0 + c)] = block[(r, c)];
            }
        }
    }

    /// Copy of the sub-block of the given shape at (r0, c0).
    pub fn block(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> CMatrix {
        assert!(r0 + rows <= self.rows && c0 + cols <= self.cols);
        CMatrix::from_fn(rows, cols, |r, c| self[(r0 + r, c0 + c)])
    }

    /// True when every entry is finite.
    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

impl std::ops::Index<(usize, usize)> for CMatrix {
    type Output = Complex64;
    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &Complex64 {
        &self.data[r * self.cols + c]
    }
}

impl std::ops::IndexMut<(usize, usize)> for CMatrix {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Complex64 {
        &mut self.data[r * self.cols + c]
    }
}

// ── Stacked-coefficient layout ──────────────────────────────────────────

/// Channel-major Kronecker stack: out[m·D + i] = a[m]·b[i].
pub fn kron_vec(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for am in a {
        for bi in b {
            out.push(am * bi);
        }
    }
    out
}

/// Reshape a length-M·D stacked vector into an M×D matrix whose row m is
/// the m-th D-block, so a⊗b maps to the outer product a·bᵀ.
pub fn mat_from_stacked(v: &[Complex64], m: usize, d: usize) -> CMatrix {
    assert_eq!(v.len(), m * d, "mat_from_stacked: length {} != {}x{}", v.len(), m, d);
    CMatrix::from_fn(m, d, |r, c| v[r * d + c])
}

/// Inverse of `mat_from_stacked`: concatenate the rows.
pub fn stacked_from_mat(v: &CMatrix) -> Vec<Complex64> {
    v.data().to_vec()
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

    fn random_matrix(rng: &mut StdRng, rows: usize, cols: usize) -> CMatrix {
        CMatrix::from_fn(rows, cols, |_, _| {
            c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
        })
    }

    #[test]
    fn matmul_matches_hand_example() {
        // [1 i; 0 2] * [1; 1+i] = [1 + i(1+i); 2(1+i)] = [i; 2+2i] ... worked
        // through by hand below.
        let a = CMatrix::from_fn(2, 2, |r, cc| match (r, cc) {
            (0, 0) => c(1.0, 0.0),
            (0, 1) => c(0.0, 1.0),
            (1, 0) => c(0.0, 0.0),
            _ => c(2.0, 0.0),
        });
        let b = CMatrix::from_fn(2, 1, |r, _| if r == 0 { c(1.0, 0.0) } else { c(1.0, 1.0) });
        let p = a.matmul(&b);
        // row 0: 1·1 + i·(1+i) = 1 + i − 1 = i
        assert!((p[(0, 0)] - c(0.0, 1.0)).norm() < 1e-15);
        // row 1: 2·(1+i)
        assert!((p[(1, 0)] - c(2.0, 2.0)).norm() < 1e-15);
    }

    #[test]
    fn adjoint_conjugates_and_transposes() {
        let a = CMatrix::from_fn(2, 3, |r, cc| c(r as f64, cc as f64));
        let ad = a.adjoint();
        assert_eq!(ad.rows(), 3);
        assert_eq!(ad.cols(), 2);
        assert_eq!(ad[(2, 1)], c(1.0, -2.0));
    }

    #[test]
    fn matvec_agrees_with_matmul_on_column() {
        let mut rng = StdRng::seed_from_u64(3);
        let a = random_matrix(&mut rng, 4, 5);
        let v: Vec<Complex64> = (0..5).map(|_| c(rng.gen(), rng.gen())).collect();
        let via_vec = a.matvec(&v);
        let col = CMatrix::from_fn(5, 1, |r, _| v[r]);
        let via_mul = a.matmul(&col);
        for r in 0..4 {
            assert!((via_vec[r] - via_mul[(r, 0)]).norm() < 1e-13);
        }
    }

    #[test]
    fn hermitize_zeroes_the_defect() {
        let mut rng = StdRng::seed_from_u64(4);
        let mut a = random_matrix(&mut rng, 6, 6);
        assert!(a.hermitian_defect() > 1e-3, "random matrix should be far from Hermitian");
        a.hermitize();
        assert!(a.hermitian_defect() < 1e-15);
        // Diagonal must be exactly real afterwards.
        for i in 0..6 {
            assert_eq!(a[(i, i)].im, 0.0);
        }
    }

    #[test]
    fn block_round_trips_through_set_block() {
        let mut rng = StdRng::seed_from_u64(5);
        let b = random_matrix(&mut rng, 2, 3);
        let mut big = CMatrix::zeros(5, 7);
        big.set_block(2, 3, &b);
        assert_eq!(big.block(2, 3, 2, 3), b);
        assert_eq!(big[(0, 0)], c(0.0, 0.0));
    }

    #[test]
    fn frobenius_norm_of_known_matrix() {
        let a = CMatrix::from_fn(2, 2, |r, cc| if r == cc { c(3.0, 4.0) } else { c(0.0, 0.0) });
        // Two entries of magnitude 5 → √50.
        assert!((a.frob_norm() - 50f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn kron_vec_is_channel_major() {
        let a = [c(1.0, 0.0), c(2.0, 0.0)];
        let b = [c(1.0, 0.0), c(0.0, 1.0), c(3.0, 0.0)];
        let k = kron_vec(&a, &b);
        assert_eq!(k.len(), 6);
        assert_eq!(k[0], c(1.0, 0.0));
        assert_eq!(k[1], c(0.0, 1.0));
        assert_eq!(k[3], c(2.0, 0.0));
        assert_eq!(k[4], c(0.0, 2.0));
    }

    #[test]
    fn stacked_kron_reshapes_to_outer_product() {
        let mut rng = StdRng::seed_from_u64(6);
        let m = 3;
        let d = 4;
        let a: Vec<Complex64> = (0..m).map(|_| c(rng.gen(), rng.gen())).collect();
        let b: Vec<Complex64> = (0..d).map(|_| c(rng.gen(), rng.gen())).collect();
        let v = mat_from_stacked(&kron_vec(&a, &b), m, d);
        for r in 0..m {
            for cc in 0..d {
                assert!(
                    (v[(r, cc)] - a[r] * b[cc]).norm() < 1e-14,
                    "entry ({r},{cc}) is not a[r]*b[c]"
                );
            }
        }
        // And back again.
        assert_eq!(stacked_from_mat(&v), kron_vec(&a, &b));
    }

    #[test]
    #[should_panic(expected = "matmul: inner dimensions differ")]
    fn matmul_panics_on_shape_mismatch() {
        let a = CMatrix::zeros(2, 3);
        let b = CMatrix::zeros(2, 3);
        let _ = a.matmul(&b);
    }

    #[test]
    fn scaled_identity_and_arithmetic() {
        let i2 = CMatrix::scaled_identity(2, 2.0);
        let z = i2.sub(&i2.scale(0.5)).add(&CMatrix::zeros(2, 2));
        assert!((z[(0, 0)] - c(1.0, 0.0)).norm() < 1e-15);
        assert!((z[(1, 1)] - c(1.0, 0.0)).norm() < 1e-15);
        assert_eq!(z[(0, 1)], c(0.0, 0.0));
    }
}
