//! Small dense matrix kernels: cyclic Jacobi eigensolver, adjoint action of
//! rotations on symmetric matrices, diagonal projection and the Iwasawa
//! projection `H(g)` for `g = n exp(H) k` with `n` unit upper triangular.
//!
//! Everything here is sized for `n <= 8` and stored row-major in a `Vec<f64>`.

use crate::error::{invalid, Error, Result};

/// Largest dimension supported by the symmetric kernels.
pub const MAX_DIM: usize = 8;

const JACOBI_TOL: f64 = 1e-13;
const JACOBI_MAX_SWEEPS: usize = 100;

/// Dense square matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Matrix { n, data: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_diag(d: &[f64]) -> Self {
        let n = d.len();
        let mut m = Self::zeros(n);
        for (i, &v) in d.iter().enumerate() {
            m.data[i * n + i] = v;
        }
        m
    }

    /// Builds from row-major entries; `entries.len()` must be a perfect square.
    pub fn from_row_major(entries: Vec<f64>) -> Result<Self> {
        let n = (entries.len() as f64).sqrt().round() as usize;
        if n * n != entries.len() || n == 0 {
            return invalid(format!("{} entries do not form a square matrix", entries.len()));
        }
        Ok(Matrix { n, data: entries })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for r in rows {
            if r.len() != n {
                return Err(Error::DimensionMismatch { expected: n, found: r.len() });
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix { n, data })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn transpose(&self) -> Matrix {
        let n = self.n;
        let mut t = Matrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                t.data[j * n + i] = self.data[i * n + j];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch { expected: self.n, found: other.n });
        }
        let n = self.n;
        let mut out = Matrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * other.data[k * n + j];
                }
            }
        }
        Ok(out)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `‖self − other‖_F`.
    pub fn distance(&self, other: &Matrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// Determinant by LU with partial pivoting.
    pub fn det(&self) -> f64 {
        let mut a = self.data.clone();
        lu_det_in_place(&mut a, self.n)
    }

    /// `‖selfᵀ self − I‖_F`.
    pub fn orthogonality_defect(&self) -> f64 {
        let n = self.n;
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for k in 0..n {
                    s += self.data[k * n + i] * self.data[k * n + j];
                }
                let e = if i == j { s - 1.0 } else { s };
                acc += e * e;
            }
        }
        acc.sqrt()
    }
}

pub(crate) fn lu_det_in_place(a: &mut [f64], n: usize) -> f64 {
    let mut det = 1.0;
    for col in 0..n {
        let mut piv = col;
        let mut best = a[col * n + col].abs();
        for r in col + 1..n {
            let v = a[r * n + col].abs();
            if v > best {
                best = v;
                piv = r;
            }
        }
        if best == 0.0 {
            return 0.0;
        }
        if piv != col {
            for j in 0..n {
                a.swap(col * n + j, piv * n + j);
            }
            det = -det;
        }
        let p = a[col * n + col];
        det *= p;
        for r in col + 1..n {
            let f = a[r * n + col] / p;
            if f != 0.0 {
                for j in col..n {
                    a[r * n + j] -= f * a[col * n + j];
                }
            }
        }
    }
    det
}

/// Real symmetric matrix. Construction symmetrizes, so `m[i][j] == m[j][i]`
/// holds bit-for-bit.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(Matrix);

impl SymMatrix {
    /// Symmetrizes `m` as `(m + mᵀ)/2`.
    pub fn new(m: Matrix) -> Result<Self> {
        let n = m.dim();
        if n == 0 || n > MAX_DIM {
            return invalid(format!("symmetric matrices must have 1 <= n <= {MAX_DIM}, got {n}"));
        }
        if m.as_slice().iter().any(|v| !v.is_finite()) {
            return invalid("matrix has non-finite entries");
        }
        let mut s = m;
        for i in 0..n {
            for j in i + 1..n {
                let v = 0.5 * (s.get(i, j) + s.get(j, i));
                s.set(i, j, v);
                s.set(j, i, v);
            }
        }
        Ok(SymMatrix(s))
    }

    pub fn from_diag(d: &[f64]) -> Result<Self> {
        Self::new(Matrix::from_diag(d))
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0.get(i, j)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.frobenius_norm()
    }

    /// Upper-left `(n−1)×(n−1)` principal submatrix.
    pub fn leading_minor(&self) -> Result<SymMatrix> {
        let n = self.dim();
        if n < 2 {
            return invalid("leading minor needs n >= 2");
        }
        let mut m = Matrix::zeros(n - 1);
        for i in 0..n - 1 {
            for j in 0..n - 1 {
                m.set(i, j, self.get(i, j));
            }
        }
        SymMatrix::new(m)
    }
}

/// Special orthogonal matrix together with the sampler coordinates that
/// produced it (when it came from the Haar sampler).
#[derive(Debug, Clone, PartialEq)]
pub struct Rotation {
    matrix: Matrix,
    seed_info: Option<(u64, u64)>,
}

impl Rotation {
    /// Validates `‖kᵀk − I‖_F < 1e-12` and `|det k − 1| < 1e-12`.
    pub fn new(matrix: Matrix) -> Result<Self> {
        let defect = matrix.orthogonality_defect();
        if !(defect < 1e-12) {
            return invalid(format!("not orthogonal: ‖kᵀk − I‖ = {defect:e}"));
        }
        let det = matrix.det();
        if !((det - 1.0).abs() < 1e-12) {
            return invalid(format!("determinant {det} is not +1"));
        }
        Ok(Rotation { matrix, seed_info: None })
    }

    pub(crate) fn new_unchecked(matrix: Matrix, seed_info: Option<(u64, u64)>) -> Self {
        Rotation { matrix, seed_info }
    }

    pub fn identity(n: usize) -> Self {
        Rotation { matrix: Matrix::identity(n), seed_info: None }
    }

    /// Planar rotation by `theta` in coordinates `(i, j)`:
    /// `e_i ↦ cos θ e_i − sin θ e_j`, `e_j ↦ sin θ e_i + cos θ e_j`.
    pub fn givens(n: usize, i: usize, j: usize, theta: f64) -> Result<Self> {
        if i >= n || j >= n || i == j {
            return invalid(format!("bad givens plane ({i}, {j}) for n = {n}"));
        }
        let (s, c) = theta.sin_cos();
        let mut m = Matrix::identity(n);
        m.set(i, i, c);
        m.set(j, j, c);
        m.set(i, j, s);
        m.set(j, i, -s);
        Ok(Rotation { matrix: m, seed_info: None })
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn seed_info(&self) -> Option<(u64, u64)> {
        self.seed_info
    }

    pub fn compose(&self, other: &Rotation) -> Result<Rotation> {
        Ok(Rotation { matrix: self.matrix.matmul(&other.matrix)?, seed_info: None })
    }

    pub fn transpose(&self) -> Rotation {
        Rotation { matrix: self.matrix.transpose(), seed_info: None }
    }
}

/// Eigen-decomposition of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymEigen {
    /// Ascending eigenvalues.
    pub values: Vec<f64>,
    /// Columns are the matching unit eigenvectors.
    pub vectors: Matrix,
    pub sweeps: usize,
}

impl SymEigen {
    /// `Q diag(values) Qᵀ`.
    pub fn reconstruct(&self) -> Matrix {
        let n = self.values.len();
        let mut out = Matrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for k in 0..n {
                    s += self.vectors.get(i, k) * self.values[k] * self.vectors.get(j, k);
                }
                out.set(i, j, s);
            }
        }
        out
    }
}

/// Cyclic Jacobi eigensolver. Sweeps until the off-diagonal Frobenius norm
/// drops below `1e-13·‖m‖_F`, at most 100 sweeps.
pub fn sym_eigen(m: &SymMatrix) -> Result<SymEigen> {
    let n = m.dim();
    let mut a = m.matrix().as_slice().to_vec();
    let mut v = Matrix::identity(n).into_vec();
    let scale = m.frobenius_norm();
    let threshold = JACOBI_TOL * scale;

    let off_norm = |a: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += a[i * n + j] * a[i * n + j];
                }
            }
        }
        s.sqrt()
    };

    let mut sweeps = 0;
    loop {
        let off = off_norm(&a);
        if off <= threshold {
            break;
        }
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(Error::NotConverged { sweeps, off });
        }
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta.is_finite() {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                } else {
                    0.0
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // A ← Jᵀ A J with J the (p, q) rotation [[c, s], [−s, c]].
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i * n + i].total_cmp(&a[j * n + j]));
    let values = order.iter().map(|&i| a[i * n + i]).collect();
    let mut vectors = Matrix::zeros(n);
    for (col, &src) in order.iter().enumerate() {
        for r in 0..n {
            vectors.set(r, col, v[r * n + src]);
        }
    }
    Ok(SymEigen { values, vectors, sweeps })
}

/// Adjoint action `k.m = k m kᵀ`, re-symmetrized.
pub fn conjugate(k: &Rotation, m: &SymMatrix) -> Result<SymMatrix> {
    if k.dim() != m.dim() {
        return Err(Error::DimensionMismatch { expected: m.dim(), found: k.dim() });
    }
    let km = k.matrix().matmul(m.matrix())?;
    let out = km.matmul(&k.matrix().transpose())?;
    SymMatrix::new(out)
}

/// Diagonal part `π(m)`.
pub fn diag_part(m: &SymMatrix) -> Vec<f64> {
    (0..m.dim()).map(|i| m.get(i, i)).collect()
}

/// `‖π(m)‖`.
pub fn diag_norm(m: &SymMatrix) -> f64 {
    (0..m.dim()).map(|i| m.get(i, i) * m.get(i, i)).sum::<f64>().sqrt()
}

/// Factors an SPD matrix as `M = U Uᵀ` with `U` upper triangular and positive
/// diagonal, returning `U` row-major. This is an ordinary Cholesky factor of
/// the index-reversed matrix, reversed back.
pub fn cholesky_upper(m: &Matrix) -> Result<Matrix> {
    let n = m.dim();
    let mut u = Matrix::zeros(n);
    upper_cholesky_into(m.as_slice(), n, u.data.as_mut_slice())?;
    Ok(u)
}

/// Hot-path variant of [`cholesky_upper`] writing into `u` (len `n*n`).
pub(crate) fn upper_cholesky_into(m: &[f64], n: usize, u: &mut [f64]) -> Result<()> {
    u.iter_mut().for_each(|x| *x = 0.0);
    // Work from the bottom-right corner: column j of U for j = n−1 down to 0.
    for j in (0..n).rev() {
        let mut d = m[j * n + j];
        for k in j + 1..n {
            d -= u[j * n + k] * u[j * n + k];
        }
        if !(d > 0.0) {
            return Err(Error::Singular(format!("cholesky pivot {d:e} at {j}")));
        }
        let ujj = d.sqrt();
        u[j * n + j] = ujj;
        for i in 0..j {
            let mut s = m[i * n + j];
            for k in j + 1..n {
                s -= u[i * n + k] * u[j * n + k];
            }
            u[i * n + j] = s / ujj;
        }
    }
    Ok(())
}

/// Iwasawa projection: the `h` with `g ∈ N exp(diag h) K`, `N` unit upper
/// triangular, `K = SO(n)`. Computed from `g gᵀ = (n a)(n a)ᵀ`.
pub fn iwasawa_h(g: &Matrix) -> Result<Vec<f64>> {
    let n = g.dim();
    let det = g.det();
    if !det.is_finite() || (det - 1.0).abs() >= 1e-9 {
        return Err(Error::Singular(format!("iwasawa projection needs det g = 1, got {det}")));
    }
    let gram = g.matmul(&g.transpose())?;
    iwasawa_h_from_gram(gram.as_slice(), n)
}

/// `H` from the Gram matrix `g gᵀ`; the result is projected to trace zero.
pub(crate) fn iwasawa_h_from_gram(gram: &[f64], n: usize) -> Result<Vec<f64>> {
    let mut u = vec![0.0; n * n];
    upper_cholesky_into(gram, n, &mut u)?;
    let mut h: Vec<f64> = (0..n).map(|i| u[i * n + i].ln()).collect();
    let mean = h.iter().sum::<f64>() / n as f64;
    h.iter_mut().for_each(|x| *x -= mean);
    Ok(h)
}

/// Exponential of a skew-symmetric matrix by scaling and squaring a Taylor
/// series. The result is orthogonal to rounding.
pub fn expm_skew(x: &Matrix) -> Matrix {
    let n = x.dim();
    let norm = x.frobenius_norm();
    let mut squarings = 0u32;
    let mut scale = 1.0;
    while norm * scale > 0.25 {
        scale *= 0.5;
        squarings += 1;
    }
    let mut xs = x.clone();
    xs.data.iter_mut().for_each(|v| *v *= scale);
    let mut term = Matrix::identity(n);
    let mut sum = Matrix::identity(n);
    for k in 1..=16 {
        term = term.matmul(&xs).expect("same dimension");
        term.data.iter_mut().for_each(|v| *v /= k as f64);
        for (s, t) in sum.data.iter_mut().zip(&term.data) {
            *s += t;
        }
    }
    for _ in 0..squarings {
        sum = sum.matmul(&sum).expect("same dimension");
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn sym(rows: &[&[f64]]) -> SymMatrix {
        let rows: Vec<Vec<f64>> = rows.iter().map(|r| r.to_vec()).collect();
        SymMatrix::new(Matrix::from_rows(&rows).unwrap()).unwrap()
    }

    #[test]
    fn identity_eigenvalues() {
        let e = sym_eigen(&SymMatrix::new(Matrix::identity(3)).unwrap()).unwrap();
        assert_eq!(e.values, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn diagonal_eigenvalues_sorted() {
        let e = sym_eigen(&SymMatrix::from_diag(&[1.0, -1.0, 0.0]).unwrap()).unwrap();
        assert_eq!(e.values, vec![-1.0, 0.0, 1.0]);
    }

    #[test]
    fn bordered_matrix_eigenvalues() {
        // Arrowhead with diagonal (−1/2, 1/2, 0) and border √(3/8); the
        // characteristic polynomial vanishes at −1, 0, 1.
        let z = 0.375f64.sqrt();
        let m = sym(&[&[-0.5, 0.0, z], &[0.0, 0.5, z], &[z, z, 0.0]]);
        let e = sym_eigen(&m).unwrap();
        for (got, want) in e.values.iter().zip([-1.0, 0.0, 1.0]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-9);
        }
        assert!(e.vectors.orthogonality_defect() < 1e-12);
        let r = e.reconstruct().distance(m.matrix());
        assert!(r < 1e-10 * (1.0 + m.frobenius_norm()));
    }

    #[test]
    fn symmetrization_is_exact() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let s = SymMatrix::new(m).unwrap();
        assert_eq!(s.get(0, 1), s.get(1, 0));
        assert_eq!(s.get(0, 1), 2.5);
    }

    #[test]
    fn rejects_oversized() {
        assert!(SymMatrix::new(Matrix::identity(9)).is_err());
    }

    #[test]
    fn conjugate_identity_and_zero() {
        let m = sym(&[&[1.0, 2.0, 0.0], &[2.0, -3.0, 1.0], &[0.0, 1.0, 2.0]]);
        let id = Rotation::identity(3);
        assert_eq!(conjugate(&id, &m).unwrap(), m);
        let k = Rotation::givens(3, 0, 2, 0.3).unwrap();
        let z = SymMatrix::new(Matrix::zeros(3)).unwrap();
        assert_eq!(conjugate(&k, &z).unwrap().frobenius_norm(), 0.0);
    }

    #[test]
    fn quarter_turn_swaps_first_two() {
        let lam = SymMatrix::from_diag(&[-2.0, 5.0, 1.0]).unwrap();
        let k = Rotation::givens(3, 0, 1, std::f64::consts::FRAC_PI_2).unwrap();
        let out = conjugate(&k, &lam).unwrap();
        let d = diag_part(&out);
        assert_abs_diff_eq!(d[0], 5.0, epsilon = 1e-12);
        assert_abs_diff_eq!(d[1], -2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(d[2], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(diag_norm(&out), diag_norm(&lam), epsilon = 1e-12);
    }

    #[test]
    fn conjugate_dimension_mismatch() {
        let m = SymMatrix::from_diag(&[1.0, 2.0]).unwrap();
        assert!(matches!(
            conjugate(&Rotation::identity(3), &m),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn diag_norm_cases() {
        assert_abs_diff_eq!(
            diag_norm(&SymMatrix::from_diag(&[-1.0, 0.0, 1.0]).unwrap()),
            2f64.sqrt(),
            epsilon = 1e-15
        );
        let m = sym(&[&[0.0, 1.0], &[1.0, 0.0]]);
        assert_eq!(diag_norm(&m), 0.0);
    }

    #[test]
    fn iwasawa_trivial_cases() {
        let h = iwasawa_h(&Matrix::identity(3)).unwrap();
        assert!(h.iter().all(|x| x.abs() < 1e-15));

        let h0 = [0.7, -0.2, -0.5];
        let g = Matrix::from_diag(&h0.map(f64::exp));
        let h = iwasawa_h(&g).unwrap();
        for (a, b) in h.iter().zip(h0) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }

        let k = Rotation::givens(3, 0, 2, 1.1).unwrap();
        let h = iwasawa_h(k.matrix()).unwrap();
        assert!(h.iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn iwasawa_recovers_a_component() {
        // g = n exp(diag h) k with n unit upper triangular.
        let n0 = Matrix::from_rows(&[
            vec![1.0, 0.3, -2.0],
            vec![0.0, 1.0, 0.7],
            vec![0.0, 0.0, 1.0],
        ])
        .unwrap();
        let h0 = [0.4, 0.1, -0.5];
        let a = Matrix::from_diag(&h0.map(f64::exp));
        let k = Rotation::givens(3, 0, 1, 0.4)
            .unwrap()
            .compose(&Rotation::givens(3, 1, 2, -1.3).unwrap())
            .unwrap();
        let g = n0.matmul(&a).unwrap().matmul(k.matrix()).unwrap();
        let h = iwasawa_h(&g).unwrap();
        for (x, y) in h.iter().zip(h0) {
            assert_abs_diff_eq!(*x, y, epsilon = 1e-12);
        }
        assert!(h.iter().sum::<f64>().abs() < 1e-10);
    }

    #[test]
    fn iwasawa_rejects_bad_det() {
        let g = Matrix::from_diag(&[2.0, 1.0]);
        assert!(iwasawa_h(&g).is_err());
        assert!(iwasawa_h(&Matrix::zeros(2)).is_err());
    }

    #[test]
    fn expm_skew_is_rotation() {
        let x = Matrix::from_rows(&[
            vec![0.0, 0.3, -1.2],
            vec![-0.3, 0.0, 2.0],
            vec![1.2, -2.0, 0.0],
        ])
        .unwrap();
        let e = expm_skew(&x);
        assert!(e.orthogonality_defect() < 1e-12);
        assert_abs_diff_eq!(e.det(), 1.0, epsilon = 1e-12);
        // Planar case against the closed form.
        let t = 0.8;
        let x2 = Matrix::from_rows(&[vec![0.0, t], vec![-t, 0.0]]).unwrap();
        let e2 = expm_skew(&x2);
        assert_abs_diff_eq!(e2.get(0, 0), t.cos(), epsilon = 1e-14);
        assert_abs_diff_eq!(e2.get(0, 1), t.sin(), epsilon = 1e-14);
    }
}
