//! The coefficient map `A`, its symbol `Â(p)`, the Green's symbol and
//! Hermitian square roots.
//!
//! `A` acts on `m×d` matrices and is stored as an `(m·d)×(m·d)` row-major
//! array; the pair (component `r`, direction `j`) maps to row `r·d + j`
//! (zero-based), i.e. `(r−1)·d + j` in one-based notation.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lattice::{FrequencyIndex, TorusGeometry};
use crate::linalg::{hermitian_deviation, hermitian_eigen, hermitian_apply, CMat, ZERO};
use crate::spectral::MultiplierTable;

const SYMMETRY_TOL: f64 = 1e-12;
const SINGULAR_CONDITION: f64 = 1e14;

/// A symmetric positive definite map on `m×d` matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct EllipticMap {
    dim: usize,
    components: usize,
    entries: Vec<f64>,
    c0: f64,
    opnorm: f64,
}

impl EllipticMap {
    /// Validates a raw row-major `(m·d)²` array. Asymmetry within
    /// `1e−12·‖A‖` is symmetrized away; anything larger is rejected.
    pub fn new(dim: usize, components: usize, raw: &[f64]) -> Result<Self> {
        let n = check_square(dim, components, raw)?;
        let sym = symmetrize_checked(n, raw)?;
        let (c0, opnorm) = extreme_eigenvalues(n, &sym);
        if !(c0 > 0.0) {
            return Err(Error::NotPositiveDefinite { min_eigenvalue: c0 });
        }
        Ok(Self { dim, components, entries: sym, c0, opnorm })
    }

    pub fn identity(dim: usize, components: usize) -> Self {
        let n = dim * components;
        let entries = DMatrix::<f64>::identity(n, n).transpose().as_slice().to_vec();
        Self { dim, components, entries, c0: 1.0, opnorm: 1.0 }
    }

    /// `a·I`.
    pub fn scalar(dim: usize, components: usize, a: f64) -> Result<Self> {
        let n = dim * components;
        let mut raw = vec![0.0; n * n];
        for i in 0..n {
            raw[i * n + i] = a;
        }
        Self::new(dim, components, &raw)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> usize {
        self.components
    }

    /// Row-major `(m·d)×(m·d)` entries.
    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// `A_{r,j;s,k}` with zero-based indices.
    pub fn entry(&self, r: usize, j: usize, s: usize, k: usize) -> f64 {
        let n = self.dim * self.components;
        self.entries[(r * self.dim + j) * n + s * self.dim + k]
    }

    /// Smallest eigenvalue.
    pub fn c0(&self) -> f64 {
        self.c0
    }

    /// Largest eigenvalue, the operator norm.
    pub fn opnorm(&self) -> f64 {
        self.opnorm
    }

    pub fn complex_entries(&self) -> Vec<Complex64> {
        self.entries.iter().map(|&v| Complex64::new(v, 0.0)).collect()
    }

    pub(crate) fn check_geometry(&self, g: &TorusGeometry) -> Result<()> {
        if g.dim() != self.dim || g.components() != self.components {
            return Err(Error::ShapeMismatch(format!(
                "map has (d, m) = ({}, {}), geometry has ({}, {})",
                self.dim,
                self.components,
                g.dim(),
                g.components()
            )));
        }
        Ok(())
    }
}

fn check_square(dim: usize, components: usize, raw: &[f64]) -> Result<usize> {
    let n = dim * components;
    if raw.len() != n * n {
        return Err(Error::ShapeMismatch(format!(
            "A must have (m·d)² = {} entries, got {}",
            n * n,
            raw.len()
        )));
    }
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("A has non-finite entries".into()));
    }
    Ok(n)
}

fn symmetrize_checked(n: usize, raw: &[f64]) -> Result<Vec<f64>> {
    let sym: Vec<f64> =
        (0..n * n).map(|idx| 0.5 * (raw[idx] + raw[(idx % n) * n + idx / n])).collect();
    let scale = extreme_eigenvalues(n, &sym).1.abs().max(
        sym.iter().fold(0.0f64, |a, v| a.max(v.abs())),
    );
    for row in 0..n {
        for col in (row + 1)..n {
            let deviation = (raw[row * n + col] - raw[col * n + row]).abs();
            if deviation > SYMMETRY_TOL * scale {
                return Err(Error::NotSymmetric { row, col, deviation });
            }
        }
    }
    Ok(sym)
}

fn extreme_eigenvalues(n: usize, sym: &[f64]) -> (f64, f64) {
    let eig = SymmetricEigen::new(DMatrix::from_row_slice(n, n, sym));
    let lo = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// `q_j(p) = e^{i p_j} − 1`.
pub fn q_vector(p: &FrequencyIndex) -> Vec<Complex64> {
    p.p.iter().map(|&t| Complex64::new(t.cos() - 1.0, t.sin())).collect()
}

/// Symbol of `∇* A ∇` for a (possibly complex) coefficient array.
pub(crate) fn symbol_from_entries(
    dim: usize,
    components: usize,
    entries: &[Complex64],
    q: &[Complex64],
) -> CMat {
    let n = dim * components;
    CMat::from_fn(components, components, |r, s| {
        let mut acc = ZERO;
        for j in 0..dim {
            let qj = q[j].conj();
            for k in 0..dim {
                acc += qj * entries[(r * dim + j) * n + s * dim + k] * q[k];
            }
        }
        acc
    })
}

/// `Â(p)`, Hermitian positive definite for `p ≠ 0` and zero at `p = 0`.
pub fn symbol(a: &EllipticMap, p: &FrequencyIndex) -> CMat {
    if p.is_zero() {
        return CMat::zeros(a.components, a.components);
    }
    symbol_from_entries(a.dim, a.components, &a.complex_entries(), &q_vector(p))
}

/// Table of `Â(p)` over the dual torus.
pub fn symbol_table(a: &EllipticMap, g: &TorusGeometry) -> Result<MultiplierTable> {
    a.check_geometry(g)?;
    let entries = a.complex_entries();
    let zero = g.zero_frequency_slot();
    let mats: Vec<CMat> = (0..g.site_count())
        .into_par_iter()
        .map(|slot| {
            if slot == zero {
                CMat::zeros(a.components, a.components)
            } else {
                symbol_from_entries(a.dim, a.components, &entries, &q_vector(&g.frequency(slot)))
            }
        })
        .collect();
    Ok(MultiplierTable::from_matrices(g, &mats, true))
}

/// `Ĉ(p) = Â(p)^{−1}` for `p ≠ 0`, zero at `p = 0`.
pub fn green_symbol(a: &EllipticMap, g: &TorusGeometry) -> Result<MultiplierTable> {
    a.check_geometry(g)?;
    let entries = a.complex_entries();
    let zero = g.zero_frequency_slot();
    let mats: Result<Vec<CMat>> = (0..g.site_count())
        .into_par_iter()
        .map(|slot| {
            if slot == zero {
                return Ok(CMat::zeros(a.components, a.components));
            }
            let s = symbol_from_entries(a.dim, a.components, &entries, &q_vector(&g.frequency(slot)));
            hermitian_inverse(&s)
        })
        .collect();
    Ok(MultiplierTable::from_matrices(g, &mats?, true))
}

/// Inverse of a Hermitian positive definite matrix through its eigenbasis.
pub(crate) fn hermitian_inverse(m: &CMat) -> Result<CMat> {
    let (values, vectors) = hermitian_eigen(m);
    let lo = values[0];
    let hi = *values.last().unwrap();
    if !(lo > 0.0) || hi / lo > SINGULAR_CONDITION {
        return Err(Error::SingularSymbol { condition: if lo > 0.0 { hi / lo } else { f64::INFINITY } });
    }
    Ok(hermitian_apply(&values, &vectors, |v| 1.0 / v))
}

/// Hermitian positive semidefinite square root. Eigenvalues down to
/// `−1e−10·‖M‖` are clamped to zero.
pub fn hermitian_sqrt(m: &CMat) -> Result<CMat> {
    let scale = m.iter().fold(0.0f64, |a, z| a.max(z.norm()));
    let deviation = hermitian_deviation(m);
    if deviation > 1e-12 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::NotHermitian { deviation });
    }
    let (values, vectors) = hermitian_eigen(m);
    let norm = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if values[0] < -1e-10 * norm {
        return Err(Error::NotPsd { min_eigenvalue: values[0] });
    }
    Ok(hermitian_apply(&values, &vectors, |v| v.max(0.0).sqrt()))
}

/// The affine family `A(z) = A0 + z·A1` with `‖A1‖ ≤ c0(A0)/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexEllipticPath {
    base: EllipticMap,
    direction: Vec<f64>,
    direction_norm: f64,
}

impl ComplexEllipticPath {
    pub fn new(base: EllipticMap, a1: &[f64]) -> Result<Self> {
        let n = check_square(base.dim, base.components, a1)?;
        let sym = symmetrize_checked(n, a1)?;
        let (lo, hi) = extreme_eigenvalues(n, &sym);
        let direction_norm = lo.abs().max(hi.abs());
        if direction_norm > 0.5 * base.c0 * (1.0 + 1e-12) {
            return Err(Error::InadmissiblePath(format!(
                "‖A1‖ = {direction_norm:e} exceeds c0/2 = {:e}",
                0.5 * base.c0
            )));
        }
        Ok(Self { base, direction: sym, direction_norm })
    }

    /// Path along a direction `Ȧ` with `‖Ȧ‖ ≤ 1`, rescaled to `A1 = (c0/2)·Ȧ`.
    pub fn from_direction(base: EllipticMap, direction: &[f64]) -> Result<Self> {
        let n = check_square(base.dim, base.components, direction)?;
        let sym = symmetrize_checked(n, direction)?;
        let (lo, hi) = extreme_eigenvalues(n, &sym);
        let norm = lo.abs().max(hi.abs());
        if norm > 1.0 + 1e-12 {
            return Err(Error::InadmissiblePath(format!("direction has norm {norm:e} > 1")));
        }
        let scale = 0.5 * base.c0;
        let a1: Vec<f64> = sym.iter().map(|v| v * scale).collect();
        Self::new(base, &a1)
    }

    pub fn base(&self) -> &EllipticMap {
        &self.base
    }

    /// Row-major entries of `A1`.
    pub fn direction(&self) -> &[f64] {
        &self.direction
    }

    pub fn direction_norm(&self) -> f64 {
        self.direction_norm
    }

    /// Entries of `A0 + z·A1`.
    pub fn coefficients(&self, z: Complex64) -> Result<Vec<Complex64>> {
        check_disc(z)?;
        Ok(self.coefficients_unchecked(z))
    }

    pub(crate) fn coefficients_unchecked(&self, z: Complex64) -> Vec<Complex64> {
        self.base.entries.iter().zip(&self.direction).map(|(&a, &b)| a + z * b).collect()
    }

    /// The real map `A0 + t·A1` for real `t`.
    pub fn real_point(&self, t: f64) -> Result<EllipticMap> {
        let raw: Vec<f64> =
            self.base.entries.iter().zip(&self.direction).map(|(&a, &b)| a + t * b).collect();
        EllipticMap::new(self.base.dim, self.base.components, &raw)
    }
}

pub(crate) fn check_disc(z: Complex64) -> Result<()> {
    let modulus = z.norm();
    if !(modulus < 1.0) {
        return Err(Error::OutsideDisc { modulus });
    }
    Ok(())
}

/// Symbol of `∇*(A0 + z A1)∇` at `p`.
pub fn complex_symbol(path: &ComplexEllipticPath, z: Complex64, p: &FrequencyIndex) -> Result<CMat> {
    let entries = path.coefficients(z)?;
    let m = path.base.components;
    if p.is_zero() {
        return Ok(CMat::zeros(m, m));
    }
    Ok(symbol_from_entries(path.base.dim, m, &entries, &q_vector(p)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::dual_frequencies;
    use crate::linalg::{identity, max_abs, spectral_norm};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    pub(crate) fn random_spd(rng: &mut ChaCha8Rng, n: usize, shift: f64) -> Vec<f64> {
        let b: Vec<f64> = (0..n * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                a[i * n + j] = (0..n).map(|k| b[k * n + i] * b[k * n + j]).sum::<f64>();
            }
            a[i * n + i] += shift;
        }
        a
    }

    #[test]
    fn identity_map_constants() {
        let a = EllipticMap::identity(2, 2);
        assert_eq!(a.c0(), 1.0);
        assert_eq!(a.opnorm(), 1.0);
        let b = EllipticMap::scalar(2, 1, 1.0).unwrap();
        assert_eq!(a.entries().len(), 16);
        assert_eq!(b, EllipticMap::identity(2, 1));
    }

    #[test]
    fn shifted_gram_has_c0_at_least_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let raw = random_spd(&mut rng, 4, 0.1);
            let a = EllipticMap::new(2, 2, &raw).unwrap();
            assert!(a.c0() >= 0.1 - 1e-12);
            assert!(a.opnorm() >= a.c0());
        }
    }

    #[test]
    fn rejects_asymmetric_and_indefinite() {
        let mut raw = vec![1.0, 0.0, 0.0, 1.0];
        raw[1] = 1e-3;
        raw[2] = -1e-3;
        match EllipticMap::new(2, 1, &raw) {
            Err(Error::NotSymmetric { row: 0, col: 1, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            EllipticMap::new(2, 1, &[1.0, 2.0, 2.0, 1.0]),
            Err(Error::NotPositiveDefinite { .. })
        ));
        assert!(matches!(EllipticMap::new(2, 1, &[1.0]), Err(Error::ShapeMismatch(_))));
        // rank-one positivity alone is not enough
        let rank_one_only = [1.0, 0.0, 0.0, 0.0];
        assert!(EllipticMap::new(2, 1, &rank_one_only).is_err());
    }

    #[test]
    fn symbol_hand_value_and_zero() {
        let a = EllipticMap::identity(2, 1);
        let p = FrequencyIndex { n: vec![1, 0], p: vec![2.0 * PI / 3.0, 0.0] };
        let s = symbol(&a, &p);
        assert!((s[(0, 0)] - Complex64::new(3.0, 0.0)).norm() < 1e-14);
        let zero = FrequencyIndex { n: vec![0, 0], p: vec![0.0, 0.0] };
        assert_eq!(max_abs(&symbol(&a, &zero)), 0.0);
    }

    #[test]
    fn symbol_bounds_on_full_sweep() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = EllipticMap::new(2, 2, &random_spd(&mut rng, 4, 0.2)).unwrap();
        let g = TorusGeometry::new(2, 2, 5, 1).unwrap();
        for p in dual_frequencies(&g).iter().filter(|p| !p.is_zero()) {
            let s = symbol(&a, p);
            let p2 = p.norm().powi(2);
            assert!(hermitian_deviation(&s) < 1e-14);
            let (vals, _) = hermitian_eigen(&s);
            assert!(vals[0] >= 4.0 / (PI * PI) * a.c0() * p2 * (1.0 - 1e-12));
            assert!(spectral_norm(&s) <= a.opnorm() * p2 * (1.0 + 1e-12));
            assert!(1.0 / vals[0] <= PI * PI / (4.0 * a.c0() * p2) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn green_symbol_inverts_symbol() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = EllipticMap::new(2, 2, &random_spd(&mut rng, 4, 0.1)).unwrap();
        let g = TorusGeometry::new(2, 2, 3, 1).unwrap();
        let c = green_symbol(&a, &g).unwrap();
        for slot in 0..g.site_count() {
            let p = g.frequency(slot);
            let ch = c.get(slot);
            if p.is_zero() {
                assert_eq!(max_abs(&ch), 0.0);
                continue;
            }
            assert!(hermitian_deviation(&ch) < 1e-12 * max_abs(&ch));
            let prod = &ch * symbol(&a, &p);
            assert!(max_abs(&(prod - identity(2))) < 1e-12);
        }
    }

    #[test]
    fn hermitian_sqrt_cases() {
        let i2 = identity(2);
        assert!(max_abs(&(hermitian_sqrt(&i2).unwrap() - &i2)) < 1e-15);
        let d = CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![
            Complex64::new(4.0, 0.0),
            Complex64::new(9.0, 0.0),
        ]));
        let r = hermitian_sqrt(&d).unwrap();
        assert!((r[(0, 0)].re - 2.0).abs() < 1e-14 && (r[(1, 1)].re - 3.0).abs() < 1e-14);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let b = CMat::from_fn(3, 3, |_, _| {
                Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
            });
            let m = &b * b.adjoint();
            let root = hermitian_sqrt(&m).unwrap();
            assert!(max_abs(&(&root * &root - &m)) <= 1e-11 * max_abs(&m));
        }
        let bad = CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![
            Complex64::new(1.0, 0.0),
            Complex64::new(-0.5, 0.0),
        ]));
        assert!(matches!(hermitian_sqrt(&bad), Err(Error::NotPsd { .. })));
    }

    #[test]
    fn complex_symbol_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let g = TorusGeometry::new(2, 2, 5, 1).unwrap();
        for _ in 0..5 {
            let a0 = EllipticMap::new(2, 2, &random_spd(&mut rng, 4, 0.3)).unwrap();
            let dir = random_spd(&mut rng, 4, 0.0);
            let norm = extreme_eigenvalues(4, &dir).1;
            let dir: Vec<f64> = dir.iter().map(|v| v / norm).collect();
            let path = ComplexEllipticPath::from_direction(a0.clone(), &dir).unwrap();
            let z = Complex64::from_polar(rng.random_range(0.0..0.99), rng.random_range(0.0..std::f64::consts::TAU));
            for p in dual_frequencies(&g).iter().filter(|p| !p.is_zero()) {
                let s0 = complex_symbol(&path, Complex64::new(0.0, 0.0), p).unwrap();
                assert!(max_abs(&(&s0 - symbol(&a0, p))) < 1e-15);
                let s1 = complex_symbol(&path, Complex64::new(1.0 - 1e-9, 0.0), p).unwrap();
                let sz = complex_symbol(&path, z, p).unwrap();
                let lin = &s0 + (&s1 - &s0).scale(1.0 / (1.0 - 1e-9)) * z;
                assert!(max_abs(&(&sz - lin)) < 1e-12);
                let inv = sz.clone().try_inverse().unwrap();
                let bound = PI * PI / (2.0 * a0.c0() * p.norm().powi(2));
                assert!(spectral_norm(&inv) <= bound * (1.0 + 1e-10));
            }
        }
        let a0 = EllipticMap::identity(2, 1);
        let path = ComplexEllipticPath::new(a0.clone(), &[0.5, 0.0, 0.0, 0.0]).unwrap();
        let p = FrequencyIndex { n: vec![1, 0], p: vec![1.0, 0.0] };
        assert!(matches!(
            complex_symbol(&path, Complex64::new(1.0, 0.0), &p),
            Err(Error::OutsideDisc { .. })
        ));
        assert!(ComplexEllipticPath::new(a0, &[0.6, 0.0, 0.0, 0.0]).is_err());
    }
}
