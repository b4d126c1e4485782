//! Dense complex/real matrices and the small-matrix numerics the pipeline
//! needs: Hermitian/symmetric eigendecomposition (cyclic Jacobi) and a
//! Cholesky solver. Matrices are row-major; the sizes involved are tiny
//! (covariances up to 32 x 32, Gram matrices up to a few hundred), so plain
//! loops beat anything fancier.

use num_complex::Complex64;

use crate::error::{invalid, Error, Result};

/// Dense row-major complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

/// Dense row-major real matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct RealMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![Complex64::ZERO; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex64::ONE;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<Complex64>]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        assert!(rows.iter().all(|row| row.len() == c), "ragged rows");
        Self { rows: r, cols: c, data: rows.concat() }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [Complex64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<Complex64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    /// Conjugate transpose.
    pub fn hermitian(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn conj(&self) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|z| z.conj()).collect() }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|z| z * s).collect() }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "dimension mismatch in mul");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == Complex64::ZERO {
                    continue;
                }
                let src = other.row(k);
                let dst = out.row_mut(i);
                for j in 0..src.len() {
                    dst[j] += a * src[j];
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(self.cols, v.len());
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// self += scale * v v^H (Hermitian rank-1 update).
    pub fn add_outer(&mut self, v: &[Complex64], scale: f64) {
        assert_eq!(self.rows, v.len());
        assert_eq!(self.cols, v.len());
        for i in 0..v.len() {
            let vi = v[i] * scale;
            let dst = self.row_mut(i);
            for (j, &vj) in v.iter().enumerate() {
                dst[j] += vi * vj.conj();
            }
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest absolute deviation from Hermitian symmetry.
    pub fn hermitian_defect(&self) -> f64 {
        assert_eq!(self.rows, self.cols);
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in i..self.cols {
                let d = (self[(i, j)] - self[(j, i)].conj()).norm();
                worst = worst.max(d);
            }
        }
        worst
    }

    /// Embeds a real matrix as a complex one with zero imaginary parts.
    pub fn from_real(r: &RealMatrix) -> Self {
        Self {
            rows: r.rows,
            cols: r.cols,
            data: r.data.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
        }
    }
}

impl std::ops::Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.cols + j]
    }
}

impl RealMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        assert!(rows.iter().all(|row| row.len() == c), "ragged rows");
        Self { rows: r, cols: c, data: rows.concat() }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|x| x * s).collect() }
    }

    pub fn add_assign(&mut self, other: &Self) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len());
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// self += scale * v v^T (symmetric rank-1 update).
    pub fn add_outer(&mut self, v: &[f64], scale: f64) {
        assert_eq!(self.rows, v.len());
        assert_eq!(self.cols, v.len());
        for i in 0..v.len() {
            let vi = v[i] * scale;
            let dst = self.row_mut(i);
            for (j, &vj) in v.iter().enumerate() {
                dst[j] += vi * vj;
            }
        }
    }

    pub fn symmetry_defect(&self) -> f64 {
        assert_eq!(self.rows, self.cols);
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in i..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }
}

impl std::ops::Index<(usize, usize)> for RealMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for RealMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Eigendecomposition of a Hermitian matrix: `values` descending, column `i`
/// of `vectors` is the unit eigenvector of `values[i]`.
#[derive(Debug, Clone)]
pub struct HermitianEig {
    pub values: Vec<f64>,
    pub vectors: ComplexMatrix,
}

/// Eigendecomposition of a real symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymmetricEig {
    pub values: Vec<f64>,
    pub vectors: RealMatrix,
}

const JACOBI_MAX_SWEEPS: usize = 60;

fn off_diagonal_norm_c(a: &ComplexMatrix) -> f64 {
    let n = a.rows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[(i, j)].norm_sqr();
            }
        }
    }
    s.sqrt()
}

/// Cyclic Jacobi eigendecomposition for Hermitian matrices. Input symmetry is
/// the caller's responsibility; only the upper triangle drives the rotations
/// through the Hermitian mirror below.
pub fn eigh(a: &ComplexMatrix) -> Result<HermitianEig> {
    if a.rows() != a.cols() {
        return Err(invalid(format!("eigh: matrix is {}x{}, not square", a.rows(), a.cols())));
    }
    let n = a.rows();
    let mut m = a.clone();
    for i in 0..n {
        m[(i, i)] = Complex64::new(m[(i, i)].re, 0.0);
    }
    let mut v = ComplexMatrix::identity(n);
    let scale = m.frobenius_norm().max(f64::MIN_POSITIVE);
    let tol = 1e-30 * scale;

    for _ in 0..JACOBI_MAX_SWEEPS {
        if off_diagonal_norm_c(&m) <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let b = m[(p, q)];
                let babs = b.norm();
                if babs <= tol {
                    m[(p, q)] = Complex64::ZERO;
                    m[(q, p)] = Complex64::ZERO;
                    continue;
                }
                let phase = b / babs; // e^{i phi}
                let app = m[(p, p)].re;
                let aqq = m[(q, q)].re;
                let tau = (app - aqq) / (2.0 * babs);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                let new_pp = c * c * app + 2.0 * c * s * babs + s * s * aqq;
                let new_qq = s * s * app - 2.0 * c * s * babs + c * c * aqq;
                m[(p, p)] = Complex64::new(new_pp, 0.0);
                m[(q, q)] = Complex64::new(new_qq, 0.0);
                m[(p, q)] = Complex64::ZERO;
                m[(q, p)] = Complex64::ZERO;

                let sp = phase.conj() * s; // s e^{-i phi}
                let sq = phase * s; // s e^{+i phi}
                for k in 0..n {
                    if k == p || k == q {
                        continue;
                    }
                    let akp = m[(k, p)];
                    let akq = m[(k, q)];
                    let np = c * akp + sp * akq;
                    let nq = -sq * akp + c * akq;
                    m[(k, p)] = np;
                    m[(k, q)] = nq;
                    m[(p, k)] = np.conj();
                    m[(q, k)] = nq.conj();
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp + sp * vkq;
                    v[(k, q)] = -sq * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<f64> = (0..n).map(|i| m[(i, i)].re).collect();
    order.sort_by(|&i, &j| diag[j].partial_cmp(&diag[i]).unwrap());
    let values: Vec<f64> = order.iter().map(|&i| diag[i]).collect();
    let vectors = ComplexMatrix::from_fn(n, n, |i, j| v[(i, order[j])]);
    Ok(HermitianEig { values, vectors })
}

fn off_diagonal_norm_r(a: &RealMatrix) -> f64 {
    let n = a.rows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[(i, j)] * a[(i, j)];
            }
        }
    }
    s.sqrt()
}

/// Cyclic Jacobi eigendecomposition for real symmetric matrices.
pub fn eigh_sym(a: &RealMatrix) -> Result<SymmetricEig> {
    if a.rows() != a.cols() {
        return Err(invalid(format!("eigh_sym: matrix is {}x{}, not square", a.rows(), a.cols())));
    }
    let n = a.rows();
    let mut m = a.clone();
    let mut v = RealMatrix::identity(n);
    let scale = {
        let f: f64 = m.data.iter().map(|x| x * x).sum::<f64>().sqrt();
        f.max(f64::MIN_POSITIVE)
    };
    let tol = 1e-30 * scale;

    for _ in 0..JACOBI_MAX_SWEEPS {
        if off_diagonal_norm_r(&m) <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let b = m[(p, q)];
                let babs = b.abs();
                if babs <= tol {
                    m[(p, q)] = 0.0;
                    m[(q, p)] = 0.0;
                    continue;
                }
                let sigma = b.signum();
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                let tau = (app - aqq) / (2.0 * babs);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                m[(p, p)] = c * c * app + 2.0 * c * s * babs + s * s * aqq;
                m[(q, q)] = s * s * app - 2.0 * c * s * babs + c * c * aqq;
                m[(p, q)] = 0.0;
                m[(q, p)] = 0.0;

                let ss = sigma * s;
                for k in 0..n {
                    if k == p || k == q {
                        continue;
                    }
                    let akp = m[(k, p)];
                    let akq = m[(k, q)];
                    let np = c * akp + ss * akq;
                    let nq = -ss * akp + c * akq;
                    m[(k, p)] = np;
                    m[(k, q)] = nq;
                    m[(p, k)] = np;
                    m[(q, k)] = nq;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp + ss * vkq;
                    v[(k, q)] = -ss * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<f64> = (0..n).map(|i| m[(i, i)]).collect();
    order.sort_by(|&i, &j| diag[j].partial_cmp(&diag[i]).unwrap());
    let values: Vec<f64> = order.iter().map(|&i| diag[i]).collect();
    let vectors = RealMatrix::from_fn(n, n, |i, j| v[(i, order[j])]);
    Ok(SymmetricEig { values, vectors })
}

/// Solves `(A) x = b` for symmetric positive definite `A` via Cholesky.
/// Fails with `Degenerate` when a pivot is not strictly positive.
pub fn cholesky_solve(a: &RealMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.rows();
    if a.cols() != n || b.len() != n {
        return Err(invalid("cholesky_solve: dimension mismatch"));
    }
    // Lower-triangular factor, row-major.
    let mut l = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[(i, j)];
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if sum <= 0.0 {
                    return Err(Error::Degenerate(format!(
                        "cholesky pivot {sum:.3e} at index {i} is not positive"
                    )));
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    // Forward then back substitution.
    let mut y = vec![0.0f64; n];
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[i * n + k] * y[k];
        }
        y[i] = sum / l[i * n + i];
    }
    let mut x = vec![0.0f64; n];
    for i in (0..n).rev() {
        let mut sum = y[i];
        for k in (i + 1)..n {
            sum -= l[k * n + i] * x[k];
        }
        x[i] = sum / l[i * n + i];
    }
    Ok(x)
}
