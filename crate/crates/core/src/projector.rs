//! Local Dirichlet projections on cubes and the Fourier multipliers of the
//! averaged operator `𝒯 = l^{−d} Σ_x Π_x` and of `ℛ = id − 𝒯`.
//!
//! The local space of a cube is taken to be all fields supported in
//! `Q = {1,…,l−1}^d`, without a zero-mean constraint.

use nalgebra::{Cholesky, DMatrix, Dyn, LU};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::elliptic::{
    hermitian_inverse, hermitian_sqrt, q_vector, symbol_from_entries, ComplexEllipticPath,
    EllipticMap,
};
use crate::error::{Error, Result};
use crate::fields::{apply_elliptic, Field, ScalarMode};
use crate::lattice::{box_points, Cube, FrequencyIndex, TorusGeometry};
use crate::linalg::{hermitize, BandedCholesky, BandedLu, CMat, ZERO};
use crate::spectral::{Direction, Dft, MultiplierTable};

/// Unknown count up to which the stiffness matrix is factored densely.
pub const DENSE_LIMIT: usize = 2048;

/// Site limit for the dense real-space oracles.
pub const ORACLE_SITE_LIMIT: usize = 4096;

#[derive(Debug, Clone)]
enum Solver {
    DenseReal(Cholesky<f64, Dyn>),
    DenseComplex(LU<Complex64, Dyn, Dyn>),
    BandedReal(BandedCholesky),
    BandedComplex(BandedLu),
}

/// The factored stiffness matrix of the Dirichlet form on a cube.
///
/// Unknowns are ordered lexicographically over `Q` (first coordinate
/// slowest) with the component index fastest.
#[derive(Debug, Clone)]
pub struct StiffnessFactor {
    cube: Cube,
    components: usize,
    coeffs: Vec<Complex64>,
    complex: bool,
    // m×m blocks for offsets in {−1,0,1}^d, base-3 encoded
    stencil: Vec<Vec<Complex64>>,
    sites: Vec<Vec<i64>>,
    bandwidth: usize,
    solver: Solver,
}

/// Real-mode assembly for an SPD map.
pub fn assemble_stiffness(a: &EllipticMap, cube: &Cube) -> Result<StiffnessFactor> {
    if a.dim() != cube.dim() {
        return Err(Error::ShapeMismatch("cube and map dimensions differ".into()));
    }
    StiffnessFactor::build(cube, a.components(), a.complex_entries(), false)
}

/// Complex-mode assembly for `A0 + z·A1`.
pub fn assemble_stiffness_complex(
    path: &ComplexEllipticPath,
    z: Complex64,
    cube: &Cube,
) -> Result<StiffnessFactor> {
    if path.base().dim() != cube.dim() {
        return Err(Error::ShapeMismatch("cube and map dimensions differ".into()));
    }
    StiffnessFactor::build(cube, path.base().components(), path.coefficients(z)?, true)
}

fn offset_code(o: &[i64]) -> usize {
    o.iter().fold(0usize, |acc, &v| acc * 3 + (v + 1) as usize)
}

fn build_stencil(dim: usize, m: usize, coeffs: &[Complex64]) -> Vec<Vec<Complex64>> {
    let n = dim * m;
    let mut stencil = vec![vec![ZERO; m * m]; 3usize.pow(dim as u32)];
    let unit = |j: usize, sign: i64| {
        let mut o = vec![0i64; dim];
        o[j] = sign;
        o
    };
    for r in 0..m {
        for s in 0..m {
            for j in 0..dim {
                for k in 0..dim {
                    let a = coeffs[(r * dim + j) * n + s * dim + k];
                    let mut ekj = unit(k, 1);
                    ekj[j] -= 1;
                    stencil[offset_code(&ekj)][r * m + s] += a;
                    stencil[offset_code(&unit(k, 1))][r * m + s] -= a;
                    stencil[offset_code(&unit(j, -1))][r * m + s] -= a;
                    stencil[offset_code(&vec![0; dim])][r * m + s] += a;
                }
            }
        }
    }
    stencil
}

impl StiffnessFactor {
    fn build(cube: &Cube, m: usize, coeffs: Vec<Complex64>, complex: bool) -> Result<Self> {
        let dim = cube.dim();
        let stencil = build_stencil(dim, m, &coeffs);
        let sites = cube.interior();
        let side = cube.side_parameter() - 1;
        let weight: usize = (0..dim).map(|i| side.pow((dim - 1 - i) as u32)).sum();
        let unknowns = sites.len() * m;
        let bandwidth = (weight * m + m - 1).min(unknowns.saturating_sub(1));
        let mut this = Self {
            cube: *cube,
            components: m,
            coeffs,
            complex,
            stencil,
            sites,
            bandwidth,
            solver: Solver::BandedReal(BandedCholesky::factor(0, 0, |_, _| 0.0)?),
        };
        this.solver = this.factor()?;
        Ok(this)
    }

    fn factor(&self) -> Result<Solver> {
        let n = self.unknowns();
        if n <= DENSE_LIMIT {
            if self.complex {
                let dense = DMatrix::from_fn(n, n, |i, j| self.entry(i, j));
                let lu = LU::new(dense);
                if !lu.is_invertible() {
                    return Err(Error::FactorizationFailure("singular complex stiffness".into()));
                }
                Ok(Solver::DenseComplex(lu))
            } else {
                let dense = DMatrix::from_fn(n, n, |i, j| self.entry(i, j).re);
                Cholesky::new(dense)
                    .map(Solver::DenseReal)
                    .ok_or_else(|| Error::FactorizationFailure("stiffness is not positive definite".into()))
            }
        } else if self.complex {
            Ok(Solver::BandedComplex(BandedLu::factor(n, self.bandwidth, |i, j| self.entry(i, j))?))
        } else {
            Ok(Solver::BandedReal(BandedCholesky::factor(n, self.bandwidth, |i, j| {
                self.entry(i, j).re
            })?))
        }
    }

    pub fn cube(&self) -> &Cube {
        &self.cube
    }

    pub fn unknowns(&self) -> usize {
        self.sites.len() * self.components
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    pub fn is_complex(&self) -> bool {
        self.complex
    }

    /// Whether the dense factorization is in use.
    pub fn is_dense(&self) -> bool {
        matches!(self.solver, Solver::DenseReal(_) | Solver::DenseComplex(_))
    }

    /// Interior sites in unknown order.
    pub fn sites(&self) -> &[Vec<i64>] {
        &self.sites
    }

    /// `K[(z,r),(z′,s)] = ⟨A∇(δ_{z′}e_s), ∇(δ_z e_r)⟩`.
    pub fn entry(&self, row: usize, col: usize) -> Complex64 {
        let m = self.components;
        let (z, r) = (&self.sites[row / m], row % m);
        let (zp, s) = (&self.sites[col / m], col % m);
        let mut code = 0usize;
        for (a, b) in z.iter().zip(zp) {
            let o = b - a;
            if o.abs() > 1 {
                return ZERO;
            }
            code = code * 3 + (o + 1) as usize;
        }
        self.stencil[code][r * m + s]
    }

    pub fn dense_matrix(&self) -> DMatrix<Complex64> {
        let n = self.unknowns();
        DMatrix::from_fn(n, n, |i, j| self.entry(i, j))
    }

    pub fn solve(&self, rhs: &mut [Complex64]) {
        match &self.solver {
            Solver::DenseComplex(lu) => {
                let mut b = nalgebra::DVector::from_column_slice(rhs);
                lu.solve_mut(&mut b);
                rhs.copy_from_slice(b.as_slice());
            }
            Solver::BandedComplex(f) => f.solve_in_place(rhs),
            Solver::DenseReal(_) | Solver::BandedReal(_) => {
                let mut re: Vec<f64> = rhs.iter().map(|v| v.re).collect();
                let mut im: Vec<f64> = rhs.iter().map(|v| v.im).collect();
                self.solve_real(&mut re);
                if im.iter().any(|&v| v != 0.0) {
                    self.solve_real(&mut im);
                }
                for (v, (a, b)) in rhs.iter_mut().zip(re.into_iter().zip(im)) {
                    *v = Complex64::new(a, b);
                }
            }
        }
    }

    fn solve_real(&self, rhs: &mut [f64]) {
        match &self.solver {
            Solver::DenseReal(c) => {
                let mut b = nalgebra::DVector::from_column_slice(rhs);
                c.solve_mut(&mut b);
                rhs.copy_from_slice(b.as_slice());
            }
            Solver::BandedReal(f) => f.solve_in_place(rhs),
            _ => unreachable!("real solve on complex factor"),
        }
    }

    /// `Â(p)` for the coefficients this factor was assembled from.
    pub fn symbol(&self, p: &FrequencyIndex) -> CMat {
        if p.is_zero() {
            return CMat::zeros(self.components, self.components);
        }
        symbol_from_entries(self.cube.dim(), self.components, &self.coeffs, &q_vector(p))
    }

    /// Table of `Ĝ_Q(p)_{st} = Σ_{z,z′∈Q} e^{−i⟨p, z−z′⟩} (K^{−1})_{(z,s),(z′,t)}`.
    ///
    /// `K^{−1}` is folded by the offset `z − z′` onto the torus, which turns
    /// the evaluation at every `p` into a single transform.
    pub fn local_green_table(&self, g: &TorusGeometry) -> Result<MultiplierTable> {
        if g.dim() != self.cube.dim() || g.components() != self.components {
            return Err(Error::ShapeMismatch("stiffness factor and torus disagree".into()));
        }
        if self.cube.side_parameter() - 1 >= g.side() {
            return Err(Error::CubeTooLarge { l: self.cube.side_parameter(), side: g.side() });
        }
        let m = self.components;
        let n = self.unknowns();
        let columns: Vec<Vec<Complex64>> = (0..n)
            .into_par_iter()
            .map(|col| {
                let mut e = vec![ZERO; n];
                e[col] = Complex64::new(1.0, 0.0);
                self.solve(&mut e);
                e
            })
            .collect();
        let mut folded = vec![ZERO; g.site_count() * m * m];
        for (col, v) in columns.iter().enumerate() {
            let (zp, t) = (&self.sites[col / m], col % m);
            for (row, &val) in v.iter().enumerate() {
                let (z, s) = (&self.sites[row / m], row % m);
                let delta: Vec<i64> = z.iter().zip(zp).map(|(a, b)| a - b).collect();
                folded[g.index_of(&delta) * m * m + s * m + t] += val;
            }
        }
        Dft::new(g).transform(&mut folded, m * m, Direction::Forward);
        let mats: Vec<CMat> = (0..g.site_count())
            .map(|slot| CMat::from_row_slice(m, m, &folded[slot * m * m..(slot + 1) * m * m]))
            .collect();
        Ok(MultiplierTable::from_matrices(g, &mats, !self.complex))
    }
}

/// `T̂(p)` by solving `K v = f_p·Â(p)e_r` on the cube for each `r`.
pub fn projector_symbol(k: &StiffnessFactor, p: &FrequencyIndex) -> Result<CMat> {
    if p.is_zero() {
        return Err(Error::ZeroFrequency);
    }
    let m = k.components;
    let a_hat = k.symbol(p);
    let phases: Vec<Complex64> = k
        .sites
        .iter()
        .map(|z| Complex64::from_polar(1.0, z.iter().zip(&p.p).map(|(&c, &t)| c as f64 * t).sum()))
        .collect();
    let scale = (k.cube.side_parameter() as f64).powi(k.cube.dim() as i32).recip();
    let mut out = CMat::zeros(m, m);
    for r in 0..m {
        let mut rhs = vec![ZERO; k.unknowns()];
        for (zi, w) in phases.iter().enumerate() {
            for s in 0..m {
                rhs[zi * m + s] = w * a_hat[(s, r)];
            }
        }
        k.solve(&mut rhs);
        for (zi, w) in phases.iter().enumerate() {
            for s in 0..m {
                out[(s, r)] += w.conj() * rhs[zi * m + s] * scale;
            }
        }
    }
    Ok(out)
}

/// Multipliers of `𝒯` at one cube size; `tilde` holds the Hermitian
/// `T̃ = Â^{1/2} T̂ Â^{−1/2}` when the factor is real.
#[derive(Debug, Clone)]
pub struct ProjectorSymbols {
    pub l: usize,
    pub t_hat: MultiplierTable,
    pub t_tilde: Option<MultiplierTable>,
}

impl ProjectorSymbols {
    /// `R̂(p) = I − T̂(p)` at `slot`.
    pub fn r_hat(&self, slot: usize) -> CMat {
        let t = self.t_hat.get(slot);
        CMat::identity(t.nrows(), t.ncols()) - t
    }

    pub fn r_tilde(&self, slot: usize) -> Option<CMat> {
        self.t_tilde.as_ref().map(|t| {
            let t = t.get(slot);
            CMat::identity(t.nrows(), t.ncols()) - t
        })
    }
}

/// Tables `T̂` (and `T̃` in real mode) over the dual torus.
pub fn projector_symbols(k: &StiffnessFactor, g: &TorusGeometry) -> Result<ProjectorSymbols> {
    let local = k.local_green_table(g)?;
    let l = k.cube.side_parameter();
    let scale = (l as f64).powi(g.dim() as i32).recip();
    let zero = g.zero_frequency_slot();
    let pairs: Result<Vec<(CMat, Option<CMat>)>> = (0..g.site_count())
        .into_par_iter()
        .map(|slot| {
            let m = g.components();
            if slot == zero {
                return Ok((CMat::zeros(m, m), (!k.complex).then(|| CMat::zeros(m, m))));
            }
            let a_hat = k.symbol(&g.frequency(slot));
            let gq = local.get(slot);
            let t_hat = (&gq * &a_hat).scale(scale);
            let t_tilde = if k.complex {
                None
            } else {
                let root = hermitian_sqrt(&a_hat)?;
                Some(hermitize(&(&root * hermitize(&gq) * &root).scale(scale)))
            };
            Ok((t_hat, t_tilde))
        })
        .collect();
    let pairs = pairs?;
    let t_hat: Vec<CMat> = pairs.iter().map(|p| p.0.clone()).collect();
    let t_tilde = if k.complex {
        None
    } else {
        let mats: Vec<CMat> = pairs.iter().map(|p| p.1.clone().unwrap()).collect();
        Some(MultiplierTable::from_matrices(g, &mats, true))
    };
    Ok(ProjectorSymbols { l, t_hat: MultiplierTable::from_matrices(g, &t_hat, !k.complex), t_tilde })
}

/// `Π_0 φ` by a dense solve of the variational problem on a small torus.
pub fn oracle_projection(a: &EllipticMap, cube: &Cube, phi: &Field) -> Result<Field> {
    let g = *phi.geometry();
    if g.site_count() > ORACLE_SITE_LIMIT {
        return Err(Error::TooLargeForOracle { size: g.site_count(), limit: ORACLE_SITE_LIMIT });
    }
    if cube.side_parameter() - 1 >= g.side() {
        return Err(Error::CubeTooLarge { l: cube.side_parameter(), side: g.side() });
    }
    let m = g.components();
    let sites: Vec<usize> = cube.interior().iter().map(|z| g.index_of(z)).collect();
    let n = sites.len() * m;
    let mut k = DMatrix::<Complex64>::zeros(n, n);
    for (cj, &zp) in sites.iter().enumerate() {
        for s in 0..m {
            let col = apply_elliptic(a, &Field::delta(&g, zp, s))?;
            for (ri, &z) in sites.iter().enumerate() {
                for r in 0..m {
                    k[(ri * m + r, cj * m + s)] = col.value(z, r);
                }
            }
        }
    }
    let a_phi = apply_elliptic(a, phi)?;
    let rhs = nalgebra::DVector::from_fn(n, |i, _| a_phi.value(sites[i / m], i % m));
    let v = LU::new(k)
        .solve(&rhs)
        .ok_or_else(|| Error::FactorizationFailure("singular oracle stiffness".into()))?;
    let mut values = vec![ZERO; g.site_count() * m];
    for (i, &z) in sites.iter().enumerate() {
        for r in 0..m {
            values[z * m + r] = v[i * m + r];
        }
    }
    let out = Field::from_complex(&g, values)?;
    Ok(if phi.mode() == ScalarMode::Real { out.into_real() } else { out })
}

/// `T̂′(p) = Â(p) T̂(p) Â(p)^{−1}` for `p ≠ 0`.
pub fn dual_symbol(t_hat: &MultiplierTable, a_hat: &MultiplierTable) -> Result<MultiplierTable> {
    let g = *t_hat.geometry();
    if a_hat.geometry() != &g {
        return Err(Error::ShapeMismatch("tables live on different tori".into()));
    }
    let zero = g.zero_frequency_slot();
    let mats: Result<Vec<CMat>> = (0..g.site_count())
        .into_par_iter()
        .map(|slot| {
            let m = g.components();
            if slot == zero {
                return Ok(CMat::zeros(m, m));
            }
            let a = a_hat.get(slot);
            let inv = if a_hat.is_real_kernel() {
                hermitian_inverse(&a)?
            } else {
                a.clone().try_inverse().ok_or(Error::SingularSymbol { condition: f64::INFINITY })?
            };
            Ok(&a * t_hat.get(slot) * inv)
        })
        .collect();
    Ok(MultiplierTable::from_matrices(&g, &mats?, t_hat.is_real_kernel() && a_hat.is_real_kernel()))
}

/// Offsets in `{−1,0,1}^d`, used by tests and diagnostics.
pub fn unit_offsets(dim: usize) -> Vec<Vec<i64>> {
    box_points(dim, -1, 1)
}
