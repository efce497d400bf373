//! Cube schedules, renormalized multiplier products and the finite range
//! decomposition `𝒞 = Σ_{k=1}^{N+1} 𝒞_k`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::elliptic::{q_vector, symbol_from_entries, ComplexEllipticPath, EllipticMap};
use crate::error::{Error, Result};
use crate::lattice::{cube, rho_inf_origin, TorusGeometry};
use crate::linalg::{hermitian_apply, hermitian_eigen, hermitize, identity, real_spectral_norm, CMat};
use crate::projector::{assemble_stiffness, assemble_stiffness_complex};
use crate::spectral::{multiplier_to_kernel, Kernel, MultiplierTable};
use crate::verification;

const SINGULAR_CONDITION: f64 = 1e14;

/// Side parameters per level `j = 1..N`; `None` marks a skipped level
/// (`ℛ_j = id`, `𝒞_j = 0`).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CubeSchedule {
    levels: Vec<Option<usize>>,
    ranges: Vec<i64>,
    warnings: Vec<String>,
}

impl CubeSchedule {
    /// Side parameters, index `j − 1`.
    pub fn levels(&self) -> &[Option<usize>] {
        &self.levels
    }

    /// `l_k` for `k = 1..N`.
    pub fn level(&self, k: usize) -> Option<usize> {
        self.levels[k - 1]
    }

    /// `r_k = −1 + 2 Σ_{j ≤ k, not skipped} (l_j − 1)`, index `k − 1`.
    pub fn ranges(&self) -> &[i64] {
        &self.ranges
    }

    pub fn range(&self, k: usize) -> i64 {
        self.ranges[k - 1]
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn is_skipped(&self, k: usize) -> bool {
        self.levels[k - 1].is_none()
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }
}

/// `⌊L^j / 8⌋ + 1`.
pub fn standard_side(base: usize, j: usize) -> usize {
    base.pow(j as u32) / 8 + 1
}

/// The default schedule for `g`, or a validated override of length `N`.
pub fn build_schedule(g: &TorusGeometry, overrides: Option<&[Option<usize>]>) -> Result<CubeSchedule> {
    let n = g.depth();
    let base = g.base();
    let levels: Vec<Option<usize>> = match overrides {
        Some(list) => {
            if list.len() != n {
                return Err(Error::InvalidSchedule(format!(
                    "schedule has {} levels but N = {n}",
                    list.len()
                )));
            }
            list.to_vec()
        }
        None => (1..=n)
            .map(|j| match (base, j) {
                (3 | 5, 1 | 2) => None,
                (7..=15, 1) => Some(3),
                _ => Some(standard_side(base, j)),
            })
            .collect(),
    };
    for (j, l) in levels.iter().enumerate() {
        if let Some(l) = *l {
            if l < 3 {
                return Err(Error::InvalidSchedule(format!(
                    "level {}: side parameter {l} is below 3; mark the level as skipped instead",
                    j + 1
                )));
            }
            if l - 1 >= g.side() {
                return Err(Error::InvalidSchedule(format!(
                    "level {}: side parameter {l} needs l − 1 < S = {}",
                    j + 1,
                    g.side()
                )));
            }
        }
    }
    let mut ranges = Vec::with_capacity(n);
    let mut acc = 0i64;
    for l in &levels {
        if let Some(l) = l {
            acc += *l as i64 - 1;
        }
        ranges.push(2 * acc - 1);
    }
    let mut warnings = Vec::new();
    for k in 1..n {
        if levels[k - 1].is_some() && 2 * ranges[k - 1] >= g.side() as i64 {
            warnings.push(format!(
                "level {k}: range r_{k} = {} reaches half the torus side {}; its far region is not informative",
                ranges[k - 1],
                g.side()
            ));
        }
    }
    if overrides.is_none() && base >= 17 {
        for k in 1..=n {
            if 2 * ranges[k - 1] > base.pow(k as u32) as i64 {
                warnings.push(format!("level {k}: r_{k} = {} exceeds L^{k}/2", ranges[k - 1]));
            }
        }
    }
    Ok(CubeSchedule { levels, ranges, warnings })
}

/// Kernel, multiplier and reconstruction residue of one scale.
#[derive(Debug, Clone)]
pub struct Scale {
    pub multiplier: MultiplierTable,
    pub kernel: Kernel,
    pub imag_residue: f64,
}

/// Output of [`decompose`]. `scales[k − 1]` holds `𝒞_k` for `k = 1..N+1`.
#[derive(Debug, Clone)]
pub struct DecompositionResult {
    pub geometry: TorusGeometry,
    pub map: EllipticMap,
    pub schedule: CubeSchedule,
    pub green: Scale,
    pub scales: Vec<Scale>,
    /// `M̃_k` for `k = 0..N`.
    pub products: Vec<MultiplierTable>,
    /// `T̃_j` for `j = 1..N`, `None` for skipped levels.
    pub projectors: Vec<Option<MultiplierTable>>,
    pub diagnostics: Diagnostics,
}

impl DecompositionResult {
    pub fn kernel(&self, k: usize) -> &Kernel {
        &self.scales[k - 1].kernel
    }

    pub fn multiplier(&self, k: usize) -> &MultiplierTable {
        &self.scales[k - 1].multiplier
    }
}

/// Checks computed right after the decomposition.
#[derive(Debug, Clone, Serialize)]
pub struct Diagnostics {
    pub sum_residual: f64,
    pub range: Vec<verification::RangeCheck>,
    pub psd: Vec<verification::PsdCheck>,
    pub imag_residue: f64,
    pub symmetry_residual: f64,
}

struct Frequency {
    green: CMat,
    scales: Vec<CMat>,
    products: Vec<CMat>,
    tilde: Vec<Option<CMat>>,
}

fn real_frequency(
    a_hat: &CMat,
    locals: &[Option<(f64, MultiplierTable)>],
    slot: usize,
) -> Result<Frequency> {
    let m = a_hat.nrows();
    let (values, vectors) = hermitian_eigen(a_hat);
    let (lo, hi) = (values[0], *values.last().unwrap());
    if !(lo > 0.0) || hi / lo > SINGULAR_CONDITION {
        return Err(Error::SingularSymbol { condition: if lo > 0.0 { hi / lo } else { f64::INFINITY } });
    }
    let root = hermitian_apply(&values, &vectors, f64::sqrt);
    let inv_root = hermitian_apply(&values, &vectors, |v| 1.0 / v.sqrt());
    // Same product form as the last scale, so an all-skip schedule telescopes exactly.
    let green = hermitize(&(&inv_root * inv_root.adjoint()));
    let mut product = identity(m);
    let mut scales = Vec::with_capacity(locals.len() + 1);
    let mut products = vec![product.clone()];
    let mut tilde = Vec::with_capacity(locals.len());
    for local in locals {
        match local {
            None => {
                scales.push(CMat::zeros(m, m));
                tilde.push(None);
            }
            Some((scale, table)) => {
                let gq = hermitize(&table.get(slot));
                let t = hermitize(&(&root * gq * &root).scale(*scale));
                let (mu, v) = hermitian_eigen(&t);
                let r = hermitian_apply(&mu, &v, |x| 1.0 - x);
                let x = hermitian_apply(&mu, &v, |x| x * (2.0 - x));
                let y = &inv_root * &product;
                scales.push(hermitize(&(&y * x * y.adjoint())));
                product = &product * r;
                tilde.push(Some(t));
            }
        }
        products.push(product.clone());
    }
    let y = &inv_root * &product;
    scales.push(hermitize(&(&y * y.adjoint())));
    Ok(Frequency { green, scales, products, tilde })
}

/// Local Green's tables `Ĝ_Q` with their `l^{−d}` factors, per level.
fn local_tables(a: &EllipticMap, g: &TorusGeometry, sched: &CubeSchedule) -> Result<Vec<Option<(f64, MultiplierTable)>>> {
    sched
        .levels()
        .iter()
        .map(|l| match l {
            None => Ok(None),
            Some(l) => {
                let factor = assemble_stiffness(a, &cube(*l, g)?)?;
                let scale = (*l as f64).powi(g.dim() as i32).recip();
                Ok(Some((scale, factor.local_green_table(g)?)))
            }
        })
        .collect()
}

/// Computes `Ĉ_k(p) = Â^{−1/2}[M̃_{k−1}M̃_{k−1}^† − M̃_k M̃_k^†]Â^{−1/2}` for
/// every `p ≠ 0` and the kernels of all scales.
pub fn decompose(a: &EllipticMap, g: &TorusGeometry, sched: &CubeSchedule) -> Result<DecompositionResult> {
    a.check_geometry(g)?;
    if sched.depth() != g.depth() {
        return Err(Error::InvalidSchedule(format!(
            "schedule has {} levels but N = {}",
            sched.depth(),
            g.depth()
        )));
    }
    let locals = local_tables(a, g, sched)?;
    let entries = a.complex_entries();
    let (d, m) = (g.dim(), g.components());
    let zero = g.zero_frequency_slot();
    let n = sched.depth();
    let per_slot: Result<Vec<Option<Frequency>>> = (0..g.site_count())
        .into_par_iter()
        .map(|slot| {
            if slot == zero {
                return Ok(None);
            }
            let a_hat = symbol_from_entries(d, m, &entries, &q_vector(&g.frequency(slot)));
            real_frequency(&a_hat, &locals, slot).map(Some)
        })
        .collect();
    let per_slot = per_slot?;
    let gather = |f: &dyn Fn(&Frequency) -> CMat| -> MultiplierTable {
        let mats: Vec<CMat> = per_slot
            .iter()
            .map(|o| o.as_ref().map_or_else(|| CMat::zeros(m, m), f))
            .collect();
        MultiplierTable::from_matrices(g, &mats, true)
    };
    let green_table = gather(&|f| f.green.clone());
    let green = scale_from(green_table)?;
    let scales: Result<Vec<Scale>> =
        (0..=n).map(|k| scale_from(gather(&|f| f.scales[k].clone()))).collect();
    let products = (0..=n).map(|k| gather(&|f| f.products[k].clone())).collect();
    let projectors = (0..n)
        .map(|j| locals[j].as_ref().map(|_| gather(&|f| f.tilde[j].clone().unwrap())))
        .collect();
    let mut result = DecompositionResult {
        geometry: *g,
        map: a.clone(),
        schedule: sched.clone(),
        green,
        scales: scales?,
        products,
        projectors,
        diagnostics: Diagnostics {
            sum_residual: 0.0,
            range: Vec::new(),
            psd: Vec::new(),
            imag_residue: 0.0,
            symmetry_residual: 0.0,
        },
    };
    result.diagnostics = Diagnostics {
        sum_residual: verification::check_sum(&result),
        range: verification::check_finite_range(&result),
        psd: verification::check_psd(&result),
        imag_residue: result.scales.iter().map(|s| s.imag_residue).fold(result.green.imag_residue, f64::max),
        symmetry_residual: verification::check_symmetry(&result),
    };
    Ok(result)
}

fn scale_from(multiplier: MultiplierTable) -> Result<Scale> {
    let rec = multiplier_to_kernel(&multiplier)?;
    Ok(Scale { multiplier, kernel: rec.kernel, imag_residue: rec.imag_residue })
}

/// `M̃_k` tables for `k = 0..N` from the `T̃_j` tables.
pub fn renormalized_products(
    tilde: &[Option<MultiplierTable>],
    g: &TorusGeometry,
) -> Result<Vec<MultiplierTable>> {
    let mut out = vec![MultiplierTable::identity(g)];
    for t in tilde {
        let prev = out.last().unwrap().clone();
        let next = match t {
            None => prev,
            Some(t) => {
                let r = MultiplierTable::identity(g).sub(t)?;
                prev.multiply(&r)?
            }
        };
        out.push(next);
    }
    Ok(out)
}

/// The matrix a kernel takes beyond a range, with the deviation from it.
#[derive(Debug, Clone, PartialEq)]
pub struct FarField {
    pub constant: DMatrix<f64>,
    /// `max ‖K(x) − C‖` over the far region.
    pub residual: f64,
    pub far_sites: usize,
}

/// Mean of `K` over `{x : ρ_∞(x, 0) > range}` and the largest deviation
/// from it there.
pub fn far_field_constant(k: &Kernel, range: i64) -> Result<FarField> {
    let g = k.geometry();
    let m = g.components();
    let far: Vec<usize> =
        (0..g.site_count()).filter(|&x| rho_inf_origin(g, x) as i64 > range).collect();
    if far.is_empty() {
        return Err(Error::EmptyFarRegion { range });
    }
    let mut sum = DMatrix::<f64>::zeros(m, m);
    for &x in &far {
        sum += k.at(x);
    }
    let constant = sum / far.len() as f64;
    let residual = far
        .iter()
        .map(|&x| {
            let diff = k.at(x) - &constant;
            if m == 1 {
                diff[(0, 0)].abs()
            } else {
                real_spectral_norm(&diff)
            }
        })
        .fold(0.0, f64::max);
    Ok(FarField { constant, residual, far_sites: far.len() })
}

/// Multipliers of the complex-branch decomposition at `z`.
#[derive(Debug, Clone)]
pub struct ComplexDecomposition {
    /// `Ĉ_{A(z)}`.
    pub green: MultiplierTable,
    /// `Ĉ_{A(z),k}` for `k = 1..N+1`.
    pub multipliers: Vec<MultiplierTable>,
}

/// `Ĉ_{A,k} = P̂_{k−1}Q̂_{k−1}Â^{−1} − P̂_k Q̂_k Â^{−1}` with
/// `P̂_k = R̂_1⋯R̂_k` and `Q̂_k = R̂_k⋯R̂_1`, for `A = A0 + z·A1`.
pub fn complex_decompose(
    path: &ComplexEllipticPath,
    z: Complex64,
    g: &TorusGeometry,
    sched: &CubeSchedule,
) -> Result<ComplexDecomposition> {
    let coeffs = path.coefficients(z)?;
    path.base().check_geometry(g)?;
    let (d, m) = (g.dim(), g.components());
    let locals: Vec<Option<(f64, MultiplierTable)>> = sched
        .levels()
        .iter()
        .map(|l| match l {
            None => Ok(None),
            Some(l) => {
                let factor = assemble_stiffness_complex(path, z, &cube(*l, g)?)?;
                let scale = (*l as f64).powi(d as i32).recip();
                Ok(Some((scale, factor.local_green_table(g)?)))
            }
        })
        .collect::<Result<_>>()?;
    let zero = g.zero_frequency_slot();
    let n = sched.depth();
    let per_slot: Result<Vec<Option<(CMat, Vec<CMat>)>>> = (0..g.site_count())
        .into_par_iter()
        .map(|slot| {
            if slot == zero {
                return Ok(None);
            }
            let a_hat = symbol_from_entries(d, m, &coeffs, &q_vector(&g.frequency(slot)));
            let green = a_hat
                .clone()
                .try_inverse()
                .ok_or(Error::SingularSymbol { condition: f64::INFINITY })?;
            let mut left = identity(m);
            let mut right = identity(m);
            let mut prev = green.clone();
            let mut out = Vec::with_capacity(n + 1);
            for local in &locals {
                if let Some((scale, table)) = local {
                    let r = identity(m) - (table.get(slot) * &a_hat).scale(*scale);
                    left = &left * &r;
                    right = &r * &right;
                }
                let cur = &left * &right * &green;
                out.push(&prev - &cur);
                prev = cur;
            }
            out.push(prev);
            Ok(Some((green, out)))
        })
        .collect();
    let per_slot = per_slot?;
    let real = z.im == 0.0;
    let gather = |f: &dyn Fn(&(CMat, Vec<CMat>)) -> CMat| -> MultiplierTable {
        let mats: Vec<CMat> = per_slot
            .iter()
            .map(|o| o.as_ref().map_or_else(|| CMat::zeros(m, m), f))
            .collect();
        MultiplierTable::from_matrices(g, &mats, real)
    };
    Ok(ComplexDecomposition {
        green: gather(&|f| f.0.clone()),
        multipliers: (0..=n).map(|k| gather(&|f| f.1[k].clone())).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elliptic::green_symbol;
    use crate::linalg::{max_abs, spectral_norm};
    use crate::verification::brute_force_green;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_map(rng: &mut ChaCha8Rng, d: usize, m: usize, shift: f64) -> EllipticMap {
        let n = d * m;
        let b: Vec<f64> = (0..n * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut raw = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                raw[i * n + j] = (0..n).map(|k| b[k * n + i] * b[k * n + j]).sum();
            }
            raw[i * n + i] += shift;
        }
        EllipticMap::new(d, m, &raw).unwrap()
    }

    #[test]
    fn schedule_examples() {
        let g = TorusGeometry::new(2, 1, 17, 1).unwrap();
        let s = build_schedule(&g, None).unwrap();
        assert_eq!(s.levels(), &[Some(3)]);
        assert_eq!(s.ranges(), &[3]);
        let g = TorusGeometry::new(2, 1, 5, 3).unwrap();
        let s = build_schedule(&g, None).unwrap();
        assert_eq!(s.levels(), &[None, None, Some(16)]);
        assert_eq!(s.ranges(), &[-1, -1, 29]);
        let g = TorusGeometry::new(2, 1, 5, 2).unwrap();
        let s = build_schedule(&g, Some(&[Some(3), Some(5)])).unwrap();
        assert_eq!(s.ranges(), &[3, 11]);
        let g = TorusGeometry::new(2, 1, 9, 2).unwrap();
        assert_eq!(build_schedule(&g, None).unwrap().levels(), &[Some(3), Some(11)]);
    }

    #[test]
    fn schedule_errors_and_warnings() {
        let g = TorusGeometry::new(2, 1, 5, 2).unwrap();
        assert!(matches!(build_schedule(&g, Some(&[Some(2), None])), Err(Error::InvalidSchedule(_))));
        assert!(matches!(build_schedule(&g, Some(&[Some(26), None])), Err(Error::InvalidSchedule(_))));
        assert!(matches!(build_schedule(&g, Some(&[Some(3)])), Err(Error::InvalidSchedule(_))));
        let s = build_schedule(&g, Some(&[Some(9), Some(3)])).unwrap();
        assert_eq!(s.warnings().len(), 1);
        let s = build_schedule(&g, Some(&[Some(25), None])).unwrap();
        assert_eq!(s.ranges(), &[47, 47]);
    }

    #[test]
    fn products_start_at_identity_and_contract() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_map(&mut rng, 2, 2, 0.1);
        let g = TorusGeometry::new(2, 2, 5, 2).unwrap();
        let s = build_schedule(&g, Some(&[Some(3), Some(5)])).unwrap();
        let r = decompose(&a, &g, &s).unwrap();
        assert_eq!(r.products[0], MultiplierTable::identity(&g));
        for k in 0..=2 {
            for slot in 0..g.site_count() {
                assert!(spectral_norm(&r.products[k].get(slot)) <= 1.0 + 1e-12);
            }
        }
        let again = renormalized_products(&r.projectors, &g).unwrap();
        for (x, y) in again.iter().zip(&r.products) {
            assert!(x.sub(y).unwrap().max_abs() < 1e-13);
        }
        let skipped = renormalized_products(&[None, None], &g).unwrap();
        assert_eq!(skipped[2], MultiplierTable::identity(&g));
    }

    #[test]
    fn telescoping_and_all_skipped() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_map(&mut rng, 2, 2, 0.1);
        let g = TorusGeometry::new(2, 2, 5, 2).unwrap();
        let s = build_schedule(&g, Some(&[Some(3), Some(5)])).unwrap();
        let r = decompose(&a, &g, &s).unwrap();
        assert!(r.diagnostics.sum_residual <= 1e-12);
        let c = green_symbol(&a, &g).unwrap();
        assert!(c.sub(&r.green.multiplier).unwrap().max_abs() <= 1e-12 * c.max_abs());

        let g = TorusGeometry::new(2, 1, 3, 2).unwrap();
        let a = EllipticMap::identity(2, 1);
        let s = build_schedule(&g, None).unwrap();
        let r = decompose(&a, &g, &s).unwrap();
        assert_eq!(r.diagnostics.sum_residual, 0.0);
        assert_eq!(r.kernel(1).max_abs(), 0.0);
        assert_eq!(r.kernel(2).max_abs(), 0.0);
        assert_eq!(r.kernel(3), &r.green.kernel);
    }

    #[test]
    fn small_torus_matches_dense_green() {
        let g = TorusGeometry::new(2, 1, 3, 1).unwrap();
        let a = EllipticMap::identity(2, 1);
        let s = build_schedule(&g, Some(&[Some(3)])).unwrap();
        let r = decompose(&a, &g, &s).unwrap();
        let sum = Kernel::from_values(
            &g,
            r.kernel(1).values().iter().zip(r.kernel(2).values()).map(|(x, y)| x + y).collect(),
        )
        .unwrap();
        let dense = brute_force_green(&a, &g).unwrap();
        assert!(sum.sub(&dense).unwrap().max_abs() < 1e-10);
    }

    #[test]
    fn far_field_cases() {
        let g = TorusGeometry::new(2, 2, 3, 1).unwrap();
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, -1.0]);
        let f = far_field_constant(&Kernel::constant(&g, &c), 0).unwrap();
        assert_eq!(f.residual, 0.0);
        assert!((f.constant - c).abs().max() < 1e-15);
        assert!(matches!(
            far_field_constant(&Kernel::zeros(&g), 1),
            Err(Error::EmptyFarRegion { range: 1 })
        ));
    }

    #[test]
    fn complex_branch_agrees_at_zero_and_telescopes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = TorusGeometry::new(2, 2, 5, 1).unwrap();
        let a0 = random_map(&mut rng, 2, 2, 0.2);
        let dir: Vec<f64> = (0..16).map(|i| if i % 5 == 0 { 0.7 } else { 0.0 }).collect();
        let path = ComplexEllipticPath::from_direction(a0.clone(), &dir).unwrap();
        let s = build_schedule(&g, Some(&[Some(3)])).unwrap();
        let real = decompose(&a0, &g, &s).unwrap();
        let cx = complex_decompose(&path, Complex64::new(0.0, 0.0), &g, &s).unwrap();
        for slot in 0..g.site_count() {
            let scale = spectral_norm(&real.green.multiplier.get(slot));
            for k in 0..2 {
                let diff = cx.multipliers[k].get(slot) - real.scales[k].multiplier.get(slot);
                assert!(max_abs(&diff) <= 1e-11 * scale.max(f64::MIN_POSITIVE));
            }
        }
        let z = Complex64::new(0.3, 0.2);
        let cz = complex_decompose(&path, z, &g, &s).unwrap();
        for slot in 0..g.site_count() {
            let sum = cz.multipliers.iter().fold(CMat::zeros(2, 2), |acc, t| acc + t.get(slot));
            let target = cz.green.get(slot);
            assert!(max_abs(&(sum - &target)) <= 1e-11 * max_abs(&target).max(f64::MIN_POSITIVE));
        }
        assert!(matches!(
            complex_decompose(&path, Complex64::new(1.0, 0.0), &g, &s),
            Err(Error::OutsideDisc { .. })
        ));
    }

    #[test]
    fn complex_branch_is_holomorphic() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g = TorusGeometry::new(2, 1, 5, 1).unwrap();
        let a0 = random_map(&mut rng, 2, 1, 0.3);
        let path = ComplexEllipticPath::from_direction(a0, &[0.6, 0.2, 0.2, -0.5]).unwrap();
        let s = build_schedule(&g, Some(&[Some(3)])).unwrap();
        let z = Complex64::new(0.1, -0.2);
        let h = 1e-5;
        let eval = |w: Complex64| complex_decompose(&path, w, &g, &s).unwrap();
        let (xp, xm) = (eval(z + h), eval(z - h));
        let (yp, ym) = (eval(z + Complex64::new(0.0, h)), eval(z - Complex64::new(0.0, h)));
        for k in 0..2 {
            for slot in 0..g.site_count() {
                let dx = (xp.multipliers[k].get(slot) - xm.multipliers[k].get(slot)).scale(0.5 / h);
                let dy = (yp.multipliers[k].get(slot) - ym.multipliers[k].get(slot)).scale(0.5 / h);
                // ∂f/∂y = i ∂f/∂x
                let residual = max_abs(&(dy - dx * Complex64::new(0.0, 1.0)));
                assert!(residual <= 1e-6, "Cauchy–Riemann residual {residual:e}");
            }
        }
    }
}
