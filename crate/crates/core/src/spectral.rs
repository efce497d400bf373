//! Discrete Fourier transform on the torus, matrix-valued kernels and
//! their Fourier multipliers.
//!
//! Convention: `ψ̂(p) = Σ_x e^{−i⟨p,x⟩} ψ(x)` and
//! `ψ(x) = S^{−d} Σ_p e^{i⟨p,x⟩} ψ̂(p)`. A kernel acts by
//! `(𝒦φ)(x) = Σ_y 𝒦(x − y) φ(y)`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fields::{Field, ScalarMode};
use crate::lattice::TorusGeometry;
use crate::linalg::{real_spectral_norm, CMat, ZERO};

/// Default bound on `|α|` for kernel derivatives.
pub const MAX_DERIVATIVE_ORDER: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

/// Separable transform with an explicit `S×S` twiddle matrix per axis.
#[derive(Debug, Clone)]
pub struct Dft {
    geometry: TorusGeometry,
    // row c (frequency label n = c − h), column x
    forward: Vec<Complex64>,
    // row x, column c: conj(forward[c][x]) / S
    inverse: Vec<Complex64>,
}

/// Below this many values a transform runs on the calling thread.
const PARALLEL_THRESHOLD: usize = 1 << 14;

impl Dft {
    pub fn new(g: &TorusGeometry) -> Self {
        let s = g.side();
        let h = g.half_side() as i64;
        // w[k] = e^{−2πik/S}, with w[S−k] = conj(w[k]) exactly
        let mut w = vec![ZERO; s];
        for k in 0..=s / 2 {
            let t = 2.0 * PI * k as f64 / s as f64;
            w[k] = Complex64::new(t.cos(), -t.sin());
            if k > 0 {
                w[s - k] = w[k].conj();
            }
        }
        let mut forward = vec![ZERO; s * s];
        let mut inverse = vec![ZERO; s * s];
        for c in 0..s {
            let n = c as i64 - h;
            for x in 0..s {
                let v = w[(n * x as i64).rem_euclid(s as i64) as usize];
                forward[c * s + x] = v;
                inverse[x * s + c] = v.conj() / s as f64;
            }
        }
        Self { geometry: *g, forward, inverse }
    }

    pub fn geometry(&self) -> &TorusGeometry {
        &self.geometry
    }

    /// Transforms `batch` interleaved channels in place. Forward maps site
    /// order to frequency-slot order; inverse maps back and includes the
    /// `S^{−d}` normalization.
    pub fn transform(&self, data: &mut [Complex64], batch: usize, direction: Direction) {
        let g = &self.geometry;
        let s = g.side();
        assert_eq!(data.len(), g.site_count() * batch);
        let matrix = match direction {
            Direction::Forward => &self.forward,
            Direction::Inverse => &self.inverse,
        };
        for axis in 0..g.dim() {
            let inner = g.stride(axis) * batch;
            // Each block is an S×inner matrix; multiply it by the S×S matrix.
            let apply = |block: &mut [Complex64], scratch: &mut Vec<Complex64>| {
                scratch.clear();
                scratch.extend_from_slice(block);
                if inner == 1 {
                    for (out, b) in block.iter_mut().enumerate() {
                        *b = matrix[out * s..(out + 1) * s].iter().zip(scratch.iter()).map(|(w, v)| w * v).sum();
                    }
                    return;
                }
                for out in 0..s {
                    let target = &mut block[out * inner..(out + 1) * inner];
                    target.fill(ZERO);
                    for (c, w) in matrix[out * s..(out + 1) * s].iter().enumerate() {
                        for (t, v) in target.iter_mut().zip(&scratch[c * inner..(c + 1) * inner]) {
                            *t += w * v;
                        }
                    }
                }
            };
            if data.len() < PARALLEL_THRESHOLD {
                let mut scratch = Vec::with_capacity(s * inner);
                data.chunks_mut(s * inner).for_each(|block| apply(block, &mut scratch));
            } else {
                data.par_chunks_mut(s * inner)
                    .for_each_init(|| Vec::with_capacity(s * inner), |scratch, block| apply(block, scratch));
            }
        }
    }
}

/// A field in frequency-slot order.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    geometry: TorusGeometry,
    values: Vec<Complex64>,
}

impl SpectralField {
    pub fn geometry(&self) -> &TorusGeometry {
        &self.geometry
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn value(&self, slot: usize, component: usize) -> Complex64 {
        self.values[slot * self.geometry.components() + component]
    }
}

pub fn dft_field(phi: &Field) -> SpectralField {
    let g = *phi.geometry();
    let mut values = phi.values().to_vec();
    Dft::new(&g).transform(&mut values, g.components(), Direction::Forward);
    SpectralField { geometry: g, values }
}

pub fn idft_field(hat: &SpectralField) -> Field {
    let g = hat.geometry;
    let mut values = hat.values.clone();
    Dft::new(&g).transform(&mut values, g.components(), Direction::Inverse);
    Field::from_complex(&g, values).expect("length preserved")
}

/// A real `m×m`-matrix-valued map on the torus, stored site-major with
/// entry `(r, s)` at offset `r·m + s`.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    geometry: TorusGeometry,
    values: Vec<f64>,
}

impl Kernel {
    pub fn zeros(g: &TorusGeometry) -> Self {
        let m = g.components();
        Self { geometry: *g, values: vec![0.0; g.site_count() * m * m] }
    }

    pub fn from_values(g: &TorusGeometry, values: Vec<f64>) -> Result<Self> {
        let m = g.components();
        if values.len() != g.site_count() * m * m {
            return Err(Error::ShapeMismatch(format!(
                "kernel needs {} values, got {}",
                g.site_count() * m * m,
                values.len()
            )));
        }
        Ok(Self { geometry: *g, values })
    }

    /// The same matrix at every site.
    pub fn constant(g: &TorusGeometry, matrix: &DMatrix<f64>) -> Self {
        let m = g.components();
        let block: Vec<f64> = (0..m * m).map(|i| matrix[(i / m, i % m)]).collect();
        let values = (0..g.site_count()).flat_map(|_| block.iter().copied()).collect();
        Self { geometry: *g, values }
    }

    pub fn geometry(&self) -> &TorusGeometry {
        &self.geometry
    }

    pub fn components(&self) -> usize {
        self.geometry.components()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn entry(&self, site: usize, r: usize, s: usize) -> f64 {
        let m = self.components();
        self.values[site * m * m + r * m + s]
    }

    pub fn at(&self, site: usize) -> DMatrix<f64> {
        let m = self.components();
        DMatrix::from_row_slice(m, m, &self.values[site * m * m..(site + 1) * m * m])
    }

    /// Entrywise mean over the torus.
    pub fn mean(&self) -> DMatrix<f64> {
        let m = self.components();
        let mut sums = vec![0.0; m * m];
        for (i, v) in self.values.iter().enumerate() {
            sums[i % (m * m)] += v;
        }
        let count = self.geometry.site_count() as f64;
        DMatrix::from_row_slice(m, m, &sums).map(|v| v / count)
    }

    /// Subtracts the entrywise mean.
    pub fn canonicalize(&self) -> Self {
        let m = self.components();
        let mean = self.mean();
        let values =
            self.values.iter().enumerate().map(|(i, v)| v - mean[((i / m) % m, i % m)]).collect();
        Self { geometry: self.geometry, values }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// `sup_x ‖K(x)‖` with the operator 2-norm.
    pub fn sup_norm(&self) -> f64 {
        let m = self.components();
        if m == 1 {
            return self.max_abs();
        }
        (0..self.geometry.site_count()).map(|x| real_spectral_norm(&self.at(x))).fold(0.0, f64::max)
    }

    /// Real-space action `(𝒦φ)(x) = Σ_y 𝒦(x − y) φ(y)`.
    pub fn apply(&self, phi: &Field) -> Result<Field> {
        let g = &self.geometry;
        if phi.geometry() != g {
            return Err(Error::ShapeMismatch("kernel and field live on different tori".into()));
        }
        let m = g.components();
        let n = g.site_count();
        let coords: Vec<Vec<usize>> = (0..n).map(|x| g.coords(x)).collect();
        let mut out = vec![ZERO; n * m];
        for x in 0..n {
            for y in 0..n {
                let diff: Vec<i64> =
                    coords[x].iter().zip(&coords[y]).map(|(&a, &b)| a as i64 - b as i64).collect();
                let z = g.index_of(&diff);
                for r in 0..m {
                    for s in 0..m {
                        out[x * m + r] += self.values[z * m * m + r * m + s] * phi.value(y, s);
                    }
                }
            }
        }
        Field::from_complex(g, out)
    }

    /// `x ↦ K(−x)ᵀ`.
    pub fn reflect_transpose(&self) -> Self {
        let g = &self.geometry;
        let m = g.components();
        let mut values = vec![0.0; self.values.len()];
        for x in 0..g.site_count() {
            let nx = g.negate(x);
            for r in 0..m {
                for s in 0..m {
                    values[x * m * m + r * m + s] = self.values[nx * m * m + s * m + r];
                }
            }
        }
        Self { geometry: *g, values }
    }

    pub fn sub(&self, other: &Kernel) -> Result<Kernel> {
        if self.geometry != other.geometry {
            return Err(Error::ShapeMismatch("kernels live on different tori".into()));
        }
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(Self { geometry: self.geometry, values })
    }
}

/// Per-frequency complex `m×m` matrices in frequency-slot order. The
/// `p = 0` slot is always the zero matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiplierTable {
    geometry: TorusGeometry,
    values: Vec<Complex64>,
    real_kernel: bool,
}

impl MultiplierTable {
    pub fn zeros(g: &TorusGeometry, real_kernel: bool) -> Self {
        let m = g.components();
        Self { geometry: *g, values: vec![ZERO; g.site_count() * m * m], real_kernel }
    }

    /// Identity at every `p ≠ 0`.
    pub fn identity(g: &TorusGeometry) -> Self {
        let m = g.components();
        let mut t = Self::zeros(g, true);
        for slot in 0..g.site_count() {
            if slot != g.zero_frequency_slot() {
                for r in 0..m {
                    t.values[slot * m * m + r * m + r] = Complex64::new(1.0, 0.0);
                }
            }
        }
        t
    }

    /// Table from raw values; the `p = 0` slot is zeroed.
    pub(crate) fn from_raw(g: &TorusGeometry, mut values: Vec<Complex64>, real_kernel: bool) -> Self {
        let m = g.components();
        assert_eq!(values.len(), g.site_count() * m * m);
        let zero = g.zero_frequency_slot();
        values[zero * m * m..(zero + 1) * m * m].fill(ZERO);
        Self { geometry: *g, values, real_kernel }
    }

    pub fn from_matrices(g: &TorusGeometry, mats: &[CMat], real_kernel: bool) -> Self {
        assert_eq!(mats.len(), g.site_count());
        let mut t = Self::zeros(g, real_kernel);
        for (slot, mat) in mats.iter().enumerate() {
            t.set(slot, mat);
        }
        t
    }

    pub fn geometry(&self) -> &TorusGeometry {
        &self.geometry
    }

    pub fn components(&self) -> usize {
        self.geometry.components()
    }

    /// Whether this table is the multiplier of a real kernel.
    pub fn is_real_kernel(&self) -> bool {
        self.real_kernel
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn get(&self, slot: usize) -> CMat {
        let m = self.components();
        CMat::from_row_slice(m, m, &self.values[slot * m * m..(slot + 1) * m * m])
    }

    /// Stores `mat` at `slot`; writes to the `p = 0` slot are ignored.
    pub fn set(&mut self, slot: usize, mat: &CMat) {
        if slot == self.geometry.zero_frequency_slot() {
            return;
        }
        let m = self.components();
        for r in 0..m {
            for s in 0..m {
                self.values[slot * m * m + r * m + s] = mat[(r, s)];
            }
        }
    }

    /// Entrywise `max |K̂(−p) − conj K̂(p)|`.
    pub fn conjugate_symmetry_deviation(&self) -> f64 {
        let m2 = self.components().pow(2);
        (0..self.geometry.site_count())
            .map(|slot| {
                let neg = self.geometry.negated_frequency_slot(slot);
                (0..m2)
                    .map(|i| (self.values[neg * m2 + i] - self.values[slot * m2 + i].conj()).norm())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }

    /// Per-slot product `self(p)·other(p)`.
    pub fn multiply(&self, other: &MultiplierTable) -> Result<Self> {
        self.zip_with(other, self.real_kernel && other.real_kernel, |a, b| a * b)
    }

    pub fn add(&self, other: &MultiplierTable) -> Result<Self> {
        self.zip_with(other, self.real_kernel && other.real_kernel, |a, b| a + b)
    }

    pub fn sub(&self, other: &MultiplierTable) -> Result<Self> {
        self.zip_with(other, self.real_kernel && other.real_kernel, |a, b| a - b)
    }

    fn zip_with(
        &self,
        other: &MultiplierTable,
        real_kernel: bool,
        f: impl Fn(&CMat, &CMat) -> CMat + Sync,
    ) -> Result<Self> {
        if self.geometry != other.geometry {
            return Err(Error::ShapeMismatch("multiplier tables live on different tori".into()));
        }
        let mats: Vec<CMat> = (0..self.geometry.site_count())
            .into_par_iter()
            .map(|slot| f(&self.get(slot), &other.get(slot)))
            .collect();
        Ok(Self::from_matrices(&self.geometry, &mats, real_kernel))
    }

    /// Largest entry modulus over all slots.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.norm()))
    }
}

/// `K̂(p) = Σ_x e^{−i⟨p,x⟩} K(x)` with the `p = 0` slot pinned to zero.
pub fn kernel_to_multiplier(k: &Kernel) -> MultiplierTable {
    let g = k.geometry;
    let m = g.components();
    let mut data: Vec<Complex64> = k.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    Dft::new(&g).transform(&mut data, m * m, Direction::Forward);
    let zero = g.zero_frequency_slot();
    for v in &mut data[zero * m * m..(zero + 1) * m * m] {
        *v = ZERO;
    }
    MultiplierTable { geometry: g, values: data, real_kernel: true }
}

/// A kernel reconstructed from its multiplier, with the discarded
/// imaginary part.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub kernel: Kernel,
    pub imag_residue: f64,
}

/// Inverse transform to the canonical zero-mean kernel. For tables
/// flagged as real kernels an imaginary residue above
/// `1e−10·max|entry|` is an error.
pub fn multiplier_to_kernel(t: &MultiplierTable) -> Result<Reconstruction> {
    let g = t.geometry;
    let m = g.components();
    let mut data = t.values.clone();
    let zero = g.zero_frequency_slot();
    for v in &mut data[zero * m * m..(zero + 1) * m * m] {
        *v = ZERO;
    }
    Dft::new(&g).transform(&mut data, m * m, Direction::Inverse);
    let imag_residue = data.iter().fold(0.0f64, |a, v| a.max(v.im.abs()));
    let scale = data.iter().fold(0.0f64, |a, v| a.max(v.re.abs()));
    let tolerance = 1e-10 * scale;
    if t.real_kernel && imag_residue > tolerance {
        return Err(Error::ImaginaryResidue { residue: imag_residue, tolerance });
    }
    let kernel = Kernel { geometry: g, values: data.iter().map(|v| v.re).collect() };
    Ok(Reconstruction { kernel, imag_residue })
}

/// `𝒦φ` computed as `K̂(p)φ̂(p)` in frequency space.
pub fn apply_multiplier(t: &MultiplierTable, phi: &Field) -> Result<Field> {
    let g = t.geometry;
    if phi.geometry() != &g {
        return Err(Error::ShapeMismatch("multiplier and field live on different tori".into()));
    }
    let m = g.components();
    let hat = dft_field(phi);
    let mut out = vec![ZERO; hat.values.len()];
    for slot in 0..g.site_count() {
        for r in 0..m {
            let mut acc = ZERO;
            for s in 0..m {
                acc += t.values[slot * m * m + r * m + s] * hat.values[slot * m + s];
            }
            out[slot * m + r] = acc;
        }
    }
    let result = idft_field(&SpectralField { geometry: g, values: out });
    let real = phi.mode() == ScalarMode::Real && t.real_kernel;
    let mut result = if real { result.into_real() } else { result };
    result.mark_zero_mean();
    Ok(result)
}

fn check_order(alpha: &[usize], dim: usize, max_order: usize) -> Result<()> {
    if alpha.len() != dim {
        return Err(Error::ShapeMismatch(format!(
            "multi-index has {} entries, torus has dimension {dim}",
            alpha.len()
        )));
    }
    let order: usize = alpha.iter().sum();
    if order > max_order {
        return Err(Error::OrderTooHigh { order, max: max_order });
    }
    Ok(())
}

/// `∇^α K` by iterated forward differences, `|α| ≤ 4`.
pub fn kernel_derivative(k: &Kernel, alpha: &[usize]) -> Result<Kernel> {
    kernel_derivative_with_limit(k, alpha, MAX_DERIVATIVE_ORDER)
}

pub fn kernel_derivative_with_limit(k: &Kernel, alpha: &[usize], max_order: usize) -> Result<Kernel> {
    let g = k.geometry;
    check_order(alpha, g.dim(), max_order)?;
    let mm = g.components().pow(2);
    let mut cur = k.values.clone();
    for (axis, &times) in alpha.iter().enumerate() {
        for _ in 0..times {
            let mut next = vec![0.0; cur.len()];
            for x in 0..g.site_count() {
                let y = g.shift(x, axis, 1);
                for i in 0..mm {
                    next[x * mm + i] = cur[y * mm + i] - cur[x * mm + i];
                }
            }
            cur = next;
        }
    }
    Ok(Kernel { geometry: g, values: cur })
}

/// `∇^α K` through the multiplier `q^α(p) K̂(p)`.
pub fn kernel_derivative_spectral(k: &Kernel, alpha: &[usize]) -> Result<Kernel> {
    let g = k.geometry;
    check_order(alpha, g.dim(), MAX_DERIVATIVE_ORDER)?;
    let mut t = kernel_to_multiplier(k);
    scale_by_q_power(&mut t, alpha);
    Ok(multiplier_to_kernel(&t)?.kernel)
}

/// Multiplies every slot by `q^α(p) = Π_j (e^{ip_j} − 1)^{α_j}`.
pub(crate) fn scale_by_q_power(t: &mut MultiplierTable, alpha: &[usize]) {
    let g = t.geometry;
    let mm = g.components().pow(2);
    for slot in 0..g.site_count() {
        let q = crate::elliptic::q_vector(&g.frequency(slot));
        let mut factor = Complex64::new(1.0, 0.0);
        for (qj, &a) in q.iter().zip(alpha) {
            for _ in 0..a {
                factor *= qj;
            }
        }
        for v in &mut t.values[slot * mm..(slot + 1) * mm] {
            *v *= factor;
        }
    }
}
