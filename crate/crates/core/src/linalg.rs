//! Small dense helpers for per-frequency m×m matrices and banded
//! factorizations for the cube stiffness systems.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;

pub(crate) const ZERO: Complex64 = Complex64::new(0.0, 0.0);

pub fn identity(m: usize) -> CMat {
    CMat::identity(m, m)
}

/// `(M + M^†) / 2`.
pub fn hermitize(m: &CMat) -> CMat {
    (m + m.adjoint()).scale(0.5)
}

/// Largest entry-wise deviation of `m` from Hermitian.
pub fn hermitian_deviation(m: &CMat) -> f64 {
    let n = m.nrows();
    let mut dev: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            dev = dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    dev
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
pub fn hermitian_eigen(m: &CMat) -> (Vec<f64>, CMat) {
    let n = m.nrows();
    if n == 1 {
        return (vec![m[(0, 0)].re], identity(1));
    }
    let eig = SymmetricEigen::new(hermitize(m));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMat::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// `V diag(f(λ)) V^†`.
pub fn hermitian_apply(values: &[f64], vectors: &CMat, f: impl Fn(f64) -> f64) -> CMat {
    let n = values.len();
    let mut scaled = vectors.clone();
    for (c, &v) in values.iter().enumerate() {
        let s = f(v);
        for r in 0..n {
            scaled[(r, c)] *= s;
        }
    }
    &scaled * vectors.adjoint()
}

/// Operator 2-norm of a complex matrix.
pub fn spectral_norm(m: &CMat) -> f64 {
    match m.nrows() {
        0 => 0.0,
        1 if m.ncols() == 1 => m[(0, 0)].norm(),
        _ => {
            let gram = m.adjoint() * m;
            let (values, _) = hermitian_eigen(&gram);
            values.last().copied().unwrap_or(0.0).max(0.0).sqrt()
        }
    }
}

/// Operator 2-norm of a real matrix.
pub fn real_spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 1 && m.ncols() == 1 {
        return m[(0, 0)].abs();
    }
    let gram = m.transpose() * m;
    let eig = SymmetricEigen::new(gram);
    eig.eigenvalues.iter().copied().fold(0.0, f64::max).sqrt()
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Lower-triangular band Cholesky factor of a real symmetric positive
/// definite matrix with half-bandwidth `bandwidth`.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    bandwidth: usize,
    // row i holds L[i][i-bandwidth..=i]
    band: Vec<f64>,
}

impl BandedCholesky {
    /// `entry(i, j)` is queried only for `j <= i` inside the band.
    pub fn factor(n: usize, bandwidth: usize, entry: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let w = bandwidth + 1;
        let mut band = vec![0.0; n * w];
        for i in 0..n {
            let lo = i.saturating_sub(bandwidth);
            for j in lo..=i {
                let mut sum = entry(i, j);
                let klo = lo.max(j.saturating_sub(bandwidth));
                for k in klo..j {
                    sum -= band[i * w + bandwidth + k - i] * band[j * w + bandwidth + k - j];
                }
                if i == j {
                    if !(sum > 0.0) {
                        return Err(Error::FactorizationFailure(format!(
                            "non-positive pivot {sum:e} at row {i}"
                        )));
                    }
                    band[i * w + bandwidth] = sum.sqrt();
                } else {
                    band[i * w + bandwidth + j - i] = sum / band[j * w + bandwidth];
                }
            }
        }
        Ok(Self { n, bandwidth, band })
    }

    pub fn solve_in_place(&self, rhs: &mut [f64]) {
        let (n, b, w) = (self.n, self.bandwidth, self.bandwidth + 1);
        for i in 0..n {
            let mut s = rhs[i];
            for k in i.saturating_sub(b)..i {
                s -= self.band[i * w + b + k - i] * rhs[k];
            }
            rhs[i] = s / self.band[i * w + b];
        }
        for i in (0..n).rev() {
            let mut s = rhs[i];
            for k in (i + 1)..(i + b + 1).min(n) {
                s -= self.band[k * w + b + i - k] * rhs[k];
            }
            rhs[i] = s / self.band[i * w + b];
        }
    }
}

/// Band LU without pivoting. Used for complex symmetric systems whose
/// Hermitian part is positive definite, where every leading block is
/// nonsingular.
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    bandwidth: usize,
    // row i holds columns i-bandwidth..=i+bandwidth
    band: Vec<Complex64>,
}

impl BandedLu {
    pub fn factor(
        n: usize,
        bandwidth: usize,
        entry: impl Fn(usize, usize) -> Complex64,
    ) -> Result<Self> {
        let w = 2 * bandwidth + 1;
        let at = |i: usize, j: usize| i * w + bandwidth + j - i;
        let mut band = vec![ZERO; n * w];
        for i in 0..n {
            for j in i.saturating_sub(bandwidth)..(i + bandwidth + 1).min(n) {
                band[at(i, j)] = entry(i, j);
            }
        }
        for k in 0..n {
            let pivot = band[at(k, k)];
            if pivot.norm() == 0.0 || !pivot.norm().is_finite() {
                return Err(Error::FactorizationFailure(format!("zero pivot at row {k}")));
            }
            let hi = (k + bandwidth + 1).min(n);
            for i in (k + 1)..hi {
                let l = band[at(i, k)] / pivot;
                band[at(i, k)] = l;
                for j in (k + 1)..hi {
                    let u = band[at(k, j)];
                    band[at(i, j)] -= l * u;
                }
            }
        }
        Ok(Self { n, bandwidth, band })
    }

    pub fn solve_in_place(&self, rhs: &mut [Complex64]) {
        let (n, b) = (self.n, self.bandwidth);
        let w = 2 * b + 1;
        let at = |i: usize, j: usize| i * w + b + j - i;
        for i in 0..n {
            let mut s = rhs[i];
            for k in i.saturating_sub(b)..i {
                s -= self.band[at(i, k)] * rhs[k];
            }
            rhs[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = rhs[i];
            for k in (i + 1)..(i + b + 1).min(n) {
                s -= self.band[at(i, k)] * rhs[k];
            }
            rhs[i] = s / self.band[at(i, i)];
        }
    }
}

#[cfg(test)]
pub(crate) fn cvec(values: &[Complex64]) -> nalgebra::DVector<Complex64> {
    nalgebra::DVector::from_column_slice(values)
}
