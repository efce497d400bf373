//! Derivatives of `A ↦ C_{A,k}` along an affine complex path, computed by
//! the trapezoid rule on Cauchy circles, plus a finite-difference oracle.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::decomposition::{complex_decompose, decompose, CubeSchedule};
use crate::elliptic::ComplexEllipticPath;
use crate::error::{Error, Result};
use crate::lattice::TorusGeometry;
use crate::spectral::{kernel_derivative, multiplier_to_kernel, Kernel, MultiplierTable};

pub const DEFAULT_RADIUS: f64 = 0.5;
pub const DEFAULT_NODES: usize = 32;
const CONVERGENCE_TOLERANCE: f64 = 1e-9;
const REALNESS_TOLERANCE: f64 = 1e-8;

fn factorial(j: usize) -> f64 {
    (1..=j).map(|v| v as f64).product()
}

fn check_contour(order: usize, radius: f64, nodes: usize) -> Result<()> {
    if !(radius > 0.0 && radius <= 0.5) {
        return Err(Error::InvalidArgument(format!("contour radius {radius} outside (0, 0.5]")));
    }
    if nodes < 8 * order + 8 {
        return Err(Error::InvalidArgument(format!(
            "{nodes} contour nodes are too few for order {order} (need {})",
            8 * order + 8
        )));
    }
    Ok(())
}

/// `z_t = r·e^{iπt/M}` for `t = 0..2M`; even `t` form the `M`-point rule.
fn contour_points(radius: f64, nodes: usize) -> Vec<Complex64> {
    (0..2 * nodes)
        .map(|t| Complex64::from_polar(radius, std::f64::consts::PI * t as f64 / nodes as f64))
        .collect()
}

/// Applies the `M`- and `2M`-point rules to per-node vectors and returns
/// the `M`-point result, the relative change on doubling and the floored
/// magnitude used as denominator.
fn gated_rule(
    samples: &[Vec<Complex64>],
    order: usize,
    radius: f64,
    nodes: usize,
) -> Result<(Vec<Complex64>, f64, f64)> {
    let len = samples[0].len();
    let prefactor = factorial(order) * radius.powi(-(order as i32));
    let rule = |count: usize, stride: usize| -> Vec<Complex64> {
        let mut acc = vec![Complex64::new(0.0, 0.0); len];
        for t in 0..count {
            let theta = 2.0 * std::f64::consts::PI * t as f64 / count as f64;
            let w = Complex64::from_polar(prefactor / count as f64, -(order as f64) * theta);
            for (a, v) in acc.iter_mut().zip(&samples[t * stride]) {
                *a += w * v;
            }
        }
        acc
    };
    let coarse = rule(nodes, 2);
    let fine = rule(2 * nodes, 1);
    let change = coarse.iter().zip(&fine).fold(0.0f64, |a, (x, y)| a.max((x - y).norm()));
    let magnitude = coarse.iter().fold(0.0f64, |a, v| a.max(v.norm()));
    let sample_max = samples.iter().flatten().fold(0.0f64, |a, v| a.max(v.norm()));
    let scale = magnitude.max(1e-6 * prefactor * sample_max);
    let relative = if scale > 0.0 { change / scale } else { 0.0 };
    if relative > CONVERGENCE_TOLERANCE {
        return Err(Error::NotConverged { change: relative, tolerance: CONVERGENCE_TOLERANCE });
    }
    Ok((coarse, relative, scale))
}

/// `f^{(j)}(0)` of a scalar holomorphic function by the gated trapezoid rule.
pub fn cauchy_derivative<F>(f: F, order: usize, radius: f64, nodes: usize) -> Result<Complex64>
where
    F: Fn(Complex64) -> Result<Complex64>,
{
    check_contour(order, radius, nodes)?;
    let samples: Vec<Vec<Complex64>> =
        contour_points(radius, nodes).into_iter().map(|z| f(z).map(|v| vec![v])).collect::<Result<_>>()?;
    Ok(gated_rule(&samples, order, radius, nodes)?.0[0])
}

/// `D_z^j C_{A(z),k}` at `z = 0` for every `k`, i.e. `D_A^j C_{A0,k}(A1, …, A1)`.
#[derive(Debug, Clone)]
pub struct DerivativeResult {
    pub order: usize,
    pub radius: f64,
    pub nodes: usize,
    /// Row-major entries of `A1`.
    pub direction: Vec<f64>,
    pub c0: f64,
    /// Kernels for `k = 1..N+1`.
    pub kernels: Vec<Kernel>,
    pub multipliers: Vec<MultiplierTable>,
    /// Derivative of the full Green's function.
    pub green: Kernel,
    /// Largest relative change between the `M`- and `2M`-point rules.
    pub convergence: f64,
    /// Largest imaginary part of a reconstructed kernel, relative to the
    /// larger of the kernel and its floored multiplier magnitude.
    pub imag_residue: f64,
    /// `max |D^j C − Σ_k D^j C_k|` over frequencies, relative to `max |D^j C|`.
    pub telescoping_residual: f64,
}

impl DerivativeResult {
    pub fn kernel(&self, k: usize) -> &Kernel {
        &self.kernels[k - 1]
    }
}

/// Contour-integral derivatives of order `j` for all scales.
pub fn contour_derivative(
    path: &ComplexEllipticPath,
    g: &TorusGeometry,
    sched: &CubeSchedule,
    order: usize,
    radius: f64,
    nodes: usize,
) -> Result<DerivativeResult> {
    check_contour(order, radius, nodes)?;
    let evaluations: Vec<_> = contour_points(radius, nodes)
        .into_par_iter()
        .map(|z| complex_decompose(path, z, g, sched))
        .collect::<Result<_>>()?;
    let count = sched.depth() + 2;
    let mut convergence = 0.0f64;
    let mut imag_residue = 0.0f64;
    let mut tables = Vec::with_capacity(count);
    let mut kernels = Vec::with_capacity(count);
    for idx in 0..count {
        let samples: Vec<Vec<Complex64>> = evaluations
            .iter()
            .map(|e| if idx == 0 { e.green.values().to_vec() } else { e.multipliers[idx - 1].values().to_vec() })
            .collect();
        let (values, change, scale) = gated_rule(&samples, order, radius, nodes)?;
        convergence = convergence.max(change);
        let table = MultiplierTable::from_raw(g, values, false);
        let rec = multiplier_to_kernel(&table)?;
        let size = rec.kernel.max_abs().max(scale);
        let relative = if size > 0.0 { rec.imag_residue / size } else { rec.imag_residue };
        if relative > REALNESS_TOLERANCE {
            return Err(Error::ImaginaryResidue { residue: rec.imag_residue, tolerance: REALNESS_TOLERANCE * size });
        }
        imag_residue = imag_residue.max(relative);
        tables.push(table);
        kernels.push(rec.kernel);
    }
    let green_table = tables.remove(0);
    let green = kernels.remove(0);
    let mut sum = vec![Complex64::new(0.0, 0.0); green_table.values().len()];
    for t in &tables {
        for (s, v) in sum.iter_mut().zip(t.values()) {
            *s += v;
        }
    }
    let diff = sum.iter().zip(green_table.values()).fold(0.0f64, |a, (x, y)| a.max((x - y).norm()));
    let size = green_table.values().iter().fold(0.0f64, |a, v| a.max(v.norm()));
    Ok(DerivativeResult {
        order,
        radius,
        nodes,
        direction: path.direction().to_vec(),
        c0: path.base().c0(),
        kernels,
        multipliers: tables,
        green,
        convergence,
        imag_residue,
        telescoping_residual: if size > 0.0 { diff / size } else { diff },
    })
}

/// `(C_{A0+hA1,k} − C_{A0−hA1,k}) / 2h` for `k = 1..N+1`.
pub fn fd_derivative(
    path: &ComplexEllipticPath,
    g: &TorusGeometry,
    sched: &CubeSchedule,
    step: f64,
) -> Result<Vec<Kernel>> {
    if !(1e-7..=1e-3).contains(&step) {
        return Err(Error::InvalidArgument(format!("finite-difference step {step} outside [1e-7, 1e-3]")));
    }
    let plus = decompose(&path.real_point(step)?, g, sched)?;
    let minus = decompose(&path.real_point(-step)?, g, sched)?;
    plus.scales
        .iter()
        .zip(&minus.scales)
        .map(|(p, m)| {
            let values = p.kernel.values().iter().zip(m.kernel.values()).map(|(a, b)| (a - b) / (2.0 * step)).collect();
            Kernel::from_values(g, values)
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundRow {
    pub k: usize,
    pub order: usize,
    pub alpha: Vec<usize>,
    /// `sup_x ‖∇^α D_z^j C_k(x)‖`.
    pub norm: f64,
    /// `norm / j!`, equal to `‖∇^α D_A^j C_k(Ȧ, …)‖ / (j!(2/c0)^j)`.
    pub scaled: f64,
    /// `scaled` divided by its `j = 0` value.
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundTable {
    pub rows: Vec<BoundRow>,
    pub factor: f64,
    pub max_ratio: f64,
    pub passed: bool,
}

/// Ratio table for derivatives of orders `0..=J`, `J ≥ 2`, passed in order.
pub fn derivative_bound_check(results: &[DerivativeResult], alphas: &[Vec<usize>], factor: f64) -> Result<BoundTable> {
    if results.len() < 3 || results.iter().enumerate().any(|(j, r)| r.order != j) {
        return Err(Error::InvalidArgument("bound check needs derivatives of orders 0, 1, …, J with J ≥ 2".into()));
    }
    let mut rows = Vec::new();
    let mut max_ratio = 0.0f64;
    for k in 1..=results[0].kernels.len() {
        for alpha in alphas {
            let mut base = 0.0;
            for r in results {
                let norm = kernel_derivative(r.kernel(k), alpha)?.sup_norm();
                let scaled = norm / factorial(r.order);
                if r.order == 0 {
                    base = scaled;
                }
                let ratio = if base > 0.0 {
                    scaled / base
                } else if scaled == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                };
                max_ratio = max_ratio.max(ratio);
                rows.push(BoundRow { k, order: r.order, alpha: alpha.clone(), norm, scaled, ratio });
            }
        }
    }
    Ok(BoundTable { rows, factor, max_ratio, passed: max_ratio <= factor })
}
