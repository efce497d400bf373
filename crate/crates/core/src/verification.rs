//! Checks of a decomposition: telescoping, finite range, positivity,
//! symmetry, decay tables, multiplier envelopes and a dense Green's
//! function oracle.

use nalgebra::{Cholesky, DMatrix};
use serde::Serialize;

use crate::decomposition::{far_field_constant, DecompositionResult};
use crate::elliptic::EllipticMap;
use crate::error::{Error, Result};
use crate::fields::{apply_elliptic, Field};
use crate::lattice::{box_points, TorusGeometry};
use crate::linalg::{hermitian_eigen, spectral_norm, CMat};
use crate::projector::ORACLE_SITE_LIMIT;
use crate::spectral::{kernel_derivative, Kernel};

/// Green's kernel from a dense solve of `(𝒜 + P)u = (δ_0 − S^{−d})e_s`,
/// where `P` projects onto per-component constants.
pub fn brute_force_green(a: &EllipticMap, g: &TorusGeometry) -> Result<Kernel> {
    a.check_geometry(g)?;
    let m = g.components();
    let sites = g.site_count();
    let n = sites * m;
    if n > ORACLE_SITE_LIMIT {
        return Err(Error::TooLargeForOracle { size: n, limit: ORACLE_SITE_LIMIT });
    }
    let inv_count = 1.0 / sites as f64;
    let mut op = DMatrix::<f64>::zeros(n, n);
    for y in 0..sites {
        for s in 0..m {
            let col = apply_elliptic(a, &Field::delta(g, y, s))?;
            for x in 0..sites {
                for r in 0..m {
                    op[(x * m + r, y * m + s)] = col.value(x, r).re + if r == s { inv_count } else { 0.0 };
                }
            }
        }
    }
    let op = DMatrix::from_fn(n, n, |i, j| 0.5 * (op[(i, j)] + op[(j, i)]));
    let chol = Cholesky::new(op)
        .ok_or_else(|| Error::FactorizationFailure("dense operator is not positive definite".into()))?;
    let mut values = vec![0.0; sites * m * m];
    for s in 0..m {
        let rhs = DMatrix::from_fn(n, 1, |i, _| {
            let (x, r) = (i / m, i % m);
            if r != s {
                0.0
            } else if x == 0 {
                1.0 - inv_count
            } else {
                -inv_count
            }
        });
        let u = chol.solve(&rhs);
        for x in 0..sites {
            for r in 0..m {
                values[x * m * m + r * m + s] = u[x * m + r];
            }
        }
    }
    Kernel::from_values(g, values)
}

/// `max_{p≠0} ‖Ĉ(p) − Σ_k Ĉ_k(p)‖ / ‖Ĉ(p)‖`.
pub fn check_sum(result: &DecompositionResult) -> f64 {
    let g = &result.geometry;
    let m = g.components();
    (0..g.site_count())
        .filter(|&slot| slot != g.zero_frequency_slot())
        .map(|slot| {
            let target = result.green.multiplier.get(slot);
            let sum = result.scales.iter().fold(CMat::zeros(m, m), |acc, s| acc + s.multiplier.get(slot));
            let scale = spectral_norm(&target);
            if scale == 0.0 {
                spectral_norm(&sum)
            } else {
                spectral_norm(&(sum - target)) / scale
            }
        })
        .fold(0.0, f64::max)
}

/// Far-field constancy of `C_k` beyond `r_k`.
#[derive(Debug, Clone, Serialize)]
pub struct RangeCheck {
    pub k: usize,
    pub range: i64,
    /// False for skipped levels and when the far region is empty.
    pub applicable: bool,
    pub residual: f64,
    /// `residual / sup_x ‖C_k(x)‖`.
    pub relative: f64,
    pub sup_norm: f64,
    /// Row-major far-field constant.
    pub constant: Vec<f64>,
    pub far_sites: usize,
}

/// Range checks for `k = 1..N` at the scheduled ranges.
pub fn check_finite_range(result: &DecompositionResult) -> Vec<RangeCheck> {
    (1..=result.schedule.depth())
        .map(|k| {
            let range = result.schedule.range(k);
            range_check_at(result.kernel(k), k, range, !result.schedule.is_skipped(k))
        })
        .collect()
}

/// Range check of one kernel at an arbitrary range.
pub fn range_check_at(kernel: &Kernel, k: usize, range: i64, active: bool) -> RangeCheck {
    let m = kernel.components();
    let sup_norm = kernel.sup_norm();
    let empty = RangeCheck {
        k,
        range,
        applicable: false,
        residual: 0.0,
        relative: 0.0,
        sup_norm,
        constant: vec![0.0; m * m],
        far_sites: 0,
    };
    if !active {
        return empty;
    }
    match far_field_constant(kernel, range) {
        Ok(f) => RangeCheck {
            applicable: true,
            residual: f.residual,
            relative: if sup_norm > 0.0 { f.residual / sup_norm } else { 0.0 },
            constant: f.constant.transpose().as_slice().to_vec(),
            far_sites: f.far_sites,
            ..empty
        },
        Err(_) => empty,
    }
}

/// Smallest eigenvalue of `Ĉ_k(p)` over `p ≠ 0`.
#[derive(Debug, Clone, Serialize)]
pub struct PsdCheck {
    pub k: usize,
    pub min_eigenvalue: f64,
    /// Minimum of `λ_min(Ĉ_k(p)) / ‖Ĉ_k(p)‖` over `p` with `Ĉ_k(p) ≠ 0`.
    pub min_relative: f64,
}

/// Positivity of every `Ĉ_k(p)` for `k = 1..N+1`.
pub fn check_psd(result: &DecompositionResult) -> Vec<PsdCheck> {
    let g = &result.geometry;
    result
        .scales
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let mut min_eigenvalue = f64::INFINITY;
            let mut min_relative: f64 = 0.0;
            for slot in 0..g.site_count() {
                if slot == g.zero_frequency_slot() {
                    continue;
                }
                let (vals, _) = hermitian_eigen(&s.multiplier.get(slot));
                let lo = vals[0];
                let hi = vals.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                min_eigenvalue = min_eigenvalue.min(lo);
                if hi > 0.0 {
                    min_relative = min_relative.min(lo / hi);
                }
            }
            PsdCheck { k: i + 1, min_eigenvalue, min_relative }
        })
        .collect()
}

/// `max_k max_x |C_k(−x) − C_k(x)ᵀ|`.
pub fn check_symmetry(result: &DecompositionResult) -> f64 {
    result
        .scales
        .iter()
        .map(|s| s.kernel.reflect_transpose().sub(&s.kernel).map(|d| d.max_abs()).unwrap_or(f64::INFINITY))
        .fold(0.0, f64::max)
}

/// `η(n, d) = max(¼(d + n − 1)², d + n + 6) + 2`.
pub fn eta(order: usize, dim: usize) -> f64 {
    let s = (dim + order) as f64;
    (0.25 * (s - 1.0).powi(2)).max(s + 6.0) + 2.0
}

/// All multi-indices with `|α| ≤ max_order`, by order then lexicographic.
pub fn multi_indices(dim: usize, max_order: usize) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = box_points(dim, 0, max_order as i64)
        .into_iter()
        .map(|p| p.into_iter().map(|v| v as usize).collect::<Vec<_>>())
        .filter(|a: &Vec<usize>| a.iter().sum::<usize>() <= max_order)
        .collect();
    out.sort_by_key(|a| (a.iter().sum::<usize>(), std::cmp::Reverse(a.clone())));
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayRow {
    pub k: usize,
    pub alpha: Vec<usize>,
    pub sup_norm: f64,
    /// `L^{−(k−1)(d−2+|α|)} L^{η(|α|,d)}` with unit constant.
    pub envelope: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayFit {
    pub alpha: Vec<usize>,
    pub scales: Vec<usize>,
    /// Least-squares slope of `ln sup_x ‖∇^α C_k(x)‖` against `k`.
    pub slope: f64,
    /// `−(d − 2 + |α|) ln L`.
    pub predicted_slope: f64,
    pub non_increasing: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayReport {
    pub rows: Vec<DecayRow>,
    pub fits: Vec<DecayFit>,
}

/// Sup-norms of `∇^α C_k` for `k = 1..N+1` and slopes over the
/// non-skipped scales `k ≤ N`.
pub fn decay_table(result: &DecompositionResult, alphas: &[Vec<usize>]) -> Result<DecayReport> {
    let g = &result.geometry;
    let (d, base) = (g.dim(), g.base() as f64);
    let active: Vec<usize> =
        (1..=result.schedule.depth()).filter(|&k| !result.schedule.is_skipped(k)).collect();
    if active.len() < 2 {
        return Err(Error::InsufficientScales { available: active.len() });
    }
    let mut rows = Vec::new();
    let mut fits = Vec::new();
    for alpha in alphas {
        let order: usize = alpha.iter().sum();
        let exponent = (d + order) as f64 - 2.0;
        let mut sups = Vec::new();
        for k in 1..=result.scales.len() {
            let sup_norm = kernel_derivative(result.kernel(k), alpha)?.sup_norm();
            rows.push(DecayRow {
                k,
                alpha: alpha.clone(),
                sup_norm,
                envelope: base.powf(-((k - 1) as f64) * exponent + eta(order, d)),
            });
            sups.push(sup_norm);
        }
        let points: Vec<(f64, f64)> = active
            .iter()
            .filter(|&&k| sups[k - 1] > 0.0)
            .map(|&k| (k as f64, sups[k - 1].ln()))
            .collect();
        let slope = least_squares_slope(&points);
        let non_increasing = active.windows(2).all(|w| sups[w[1] - 1] <= sups[w[0] - 1]);
        fits.push(DecayFit {
            alpha: alpha.clone(),
            scales: active.clone(),
            slope,
            predicted_slope: -exponent * base.ln(),
            non_increasing,
        });
    }
    Ok(DecayReport { rows, fits })
}

fn least_squares_slope(points: &[(f64, f64)]) -> f64 {
    if points.len() < 2 {
        return f64::NAN;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Annulus index: `0` for `|p| ≥ π`, else `j` with `πL^{−j} ≤ |p| < πL^{−j+1}`.
pub fn annulus_index(norm: f64, base: usize, depth: usize) -> usize {
    let pi = std::f64::consts::PI;
    if norm >= pi {
        return 0;
    }
    let mut upper = pi;
    for j in 1..=depth {
        let lower = upper / base as f64;
        if norm >= lower {
            return j;
        }
        upper = lower;
    }
    depth
}

/// `M_{k,c,L}` on the annulus `A_j`.
pub fn envelope_m(k: usize, c: f64, base: usize, j: usize) -> f64 {
    if j >= k {
        1.0
    } else {
        decay_branch(k - j, c, base)
    }
}

/// `M̃_{k,c,L}` on the annulus `A_j`.
pub fn envelope_m_tilde(k: usize, c: f64, base: usize, j: usize) -> f64 {
    let l = base as f64;
    if j >= k {
        c * l.powi(8) * l.powf(4.0 * (k as f64 - j as f64))
    } else {
        decay_branch(k - j, c, base)
    }
}

fn decay_branch(gap: usize, c: f64, base: usize) -> f64 {
    let g = gap as f64;
    c.powf(g) / (base as f64).powf(g * (g + 1.0) / 2.0)
}

#[derive(Debug, Clone, Serialize)]
pub struct EnvelopeRow {
    pub k: usize,
    pub annulus: usize,
    pub frequencies: usize,
    pub max_m: f64,
    /// `max ‖T̃_{k+1} M̃_k‖`, absent for `k = N` and skipped `k + 1`.
    pub max_tm: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EnvelopeReport {
    pub rows: Vec<EnvelopeRow>,
    /// Smallest `c ≥ 1` with `‖M̃_k‖ ≤ M_{k,c,L}` on every annulus `j < k`.
    pub c_m: f64,
    /// Smallest `c ≥ 1` with `‖T̃_{k+1}M̃_k‖ ≤ M̃_{k,c,L}` everywhere.
    pub c_m_tilde: f64,
    pub c: f64,
    /// Largest `‖M̃_k(p)‖` on annuli `j ≥ k`, where the envelope is 1.
    pub max_m_low_branch: f64,
}

/// Per-annulus maxima of the renormalized products and the minimal
/// constant for which the step-function envelopes hold.
pub fn envelope_report(result: &DecompositionResult) -> EnvelopeReport {
    let g = &result.geometry;
    let (base, depth) = (g.base(), g.depth());
    let annuli: Vec<Option<usize>> = (0..g.site_count())
        .map(|slot| {
            (slot != g.zero_frequency_slot()).then(|| annulus_index(g.frequency(slot).norm(), base, depth))
        })
        .collect();
    let mut rows = Vec::new();
    let (mut c_m, mut c_mt, mut low) = (1.0f64, 1.0f64, 0.0f64);
    for k in 0..=depth {
        let next = if k < depth { result.projectors[k].as_ref() } else { None };
        let mut max_m = vec![0.0f64; depth + 1];
        let mut max_tm = vec![0.0f64; depth + 1];
        let mut counts = vec![0usize; depth + 1];
        for (slot, a) in annuli.iter().enumerate() {
            let Some(j) = *a else { continue };
            let mk = result.products[k].get(slot);
            let nm = spectral_norm(&mk);
            counts[j] += 1;
            max_m[j] = max_m[j].max(nm);
            if j >= k {
                low = low.max(nm);
            } else {
                c_m = c_m.max(required_c(nm, k - j, base));
            }
            if let Some(t) = next {
                let ntm = spectral_norm(&(t.get(slot) * &mk));
                max_tm[j] = max_tm[j].max(ntm);
                let need = if j >= k {
                    ntm / envelope_m_tilde(k, 1.0, base, j)
                } else {
                    required_c(ntm, k - j, base)
                };
                c_mt = c_mt.max(need);
            }
        }
        for j in 0..=depth {
            if counts[j] > 0 {
                rows.push(EnvelopeRow {
                    k,
                    annulus: j,
                    frequencies: counts[j],
                    max_m: max_m[j],
                    max_tm: next.map(|_| max_tm[j]),
                });
            }
        }
    }
    EnvelopeReport { rows, c_m, c_m_tilde: c_mt, c: c_m.max(c_mt), max_m_low_branch: low }
}

fn required_c(value: f64, gap: usize, base: usize) -> f64 {
    let g = gap as f64;
    (value * (base as f64).powf(g * (g + 1.0) / 2.0)).powf(1.0 / g)
}

#[derive(Debug, Clone, Serialize)]
pub struct MultiplierBound {
    pub level: usize,
    pub l: usize,
    pub max_t_norm: f64,
    pub max_r_norm: f64,
    /// `max ‖T̃(p)‖ / (|p|l)^4` over `|p|l ≤ 1`; `None` when no frequency
    /// falls in that regime.
    pub c_low: Option<f64>,
    /// `max ‖R̃(p)‖·l / (1 + 1/|p|)` over `|p|l ≥ 1`.
    pub c_high: Option<f64>,
}

/// Contraction norms and fitted constants of `T̃_j`, `R̃_j` per level.
pub fn multiplier_bounds(result: &DecompositionResult) -> Vec<MultiplierBound> {
    let g = &result.geometry;
    let m = g.components();
    result
        .projectors
        .iter()
        .enumerate()
        .filter_map(|(j, t)| t.as_ref().map(|t| (j, t)))
        .map(|(j, t)| {
            let l = result.schedule.levels()[j].unwrap();
            let mut b = MultiplierBound {
                level: j + 1,
                l,
                max_t_norm: 0.0,
                max_r_norm: 0.0,
                c_low: None,
                c_high: None,
            };
            for slot in 0..g.site_count() {
                if slot == g.zero_frequency_slot() {
                    continue;
                }
                let tm = t.get(slot);
                let tn = spectral_norm(&tm);
                let rn = spectral_norm(&(CMat::identity(m, m) - tm));
                b.max_t_norm = b.max_t_norm.max(tn);
                b.max_r_norm = b.max_r_norm.max(rn);
                let p = g.frequency(slot).norm();
                let pl = p * l as f64;
                if pl <= 1.0 {
                    b.c_low = Some(b.c_low.unwrap_or(0.0).max(tn / pl.powi(4)));
                }
                if pl >= 1.0 {
                    b.c_high = Some(b.c_high.unwrap_or(0.0).max(rn * l as f64 / (1.0 + 1.0 / p)));
                }
            }
            b
        })
        .collect()
}
