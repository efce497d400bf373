//! Vector-valued fields on the torus, discrete gradients and the Dirichlet
//! form.

use num_complex::Complex64;

use crate::elliptic::{ComplexEllipticPath, EllipticMap};
use crate::error::{Error, Result};
use crate::lattice::TorusGeometry;
use crate::linalg::ZERO;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalarMode {
    Real,
    Complex,
}

/// An `m`-component field. Values are stored site-major, component fastest.
/// In real mode all imaginary parts are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    geometry: TorusGeometry,
    mode: ScalarMode,
    values: Vec<Complex64>,
    zero_mean: bool,
}

impl Field {
    pub fn zeros(g: &TorusGeometry, mode: ScalarMode) -> Self {
        Self {
            geometry: *g,
            mode,
            values: vec![ZERO; g.site_count() * g.components()],
            zero_mean: false,
        }
    }

    pub fn from_real(g: &TorusGeometry, values: Vec<f64>) -> Result<Self> {
        check_len(g, values.len())?;
        Ok(Self {
            geometry: *g,
            mode: ScalarMode::Real,
            values: values.into_iter().map(|v| Complex64::new(v, 0.0)).collect(),
            zero_mean: false,
        })
    }

    pub fn from_complex(g: &TorusGeometry, values: Vec<Complex64>) -> Result<Self> {
        check_len(g, values.len())?;
        Ok(Self { geometry: *g, mode: ScalarMode::Complex, values, zero_mean: false })
    }

    /// The same vector at every site.
    pub fn constant(g: &TorusGeometry, value: &[f64]) -> Result<Self> {
        if value.len() != g.components() {
            return Err(Error::ShapeMismatch(format!(
                "constant has {} components, expected {}",
                value.len(),
                g.components()
            )));
        }
        let values = (0..g.site_count()).flat_map(|_| value.iter().copied()).collect();
        Self::from_real(g, values)
    }

    /// `δ_site e_component`.
    pub fn delta(g: &TorusGeometry, site: usize, component: usize) -> Self {
        let mut f = Self::zeros(g, ScalarMode::Real);
        f.values[site * g.components() + component] = Complex64::new(1.0, 0.0);
        f
    }

    /// `a f_p` with `f_p(x) = e^{i⟨p,x⟩}`.
    pub fn plane_wave(g: &TorusGeometry, frequency_slot: usize, a: &[Complex64]) -> Result<Self> {
        if a.len() != g.components() {
            return Err(Error::ShapeMismatch("amplitude length must equal m".into()));
        }
        let p = g.frequency(frequency_slot);
        let m = g.components();
        let mut values = Vec::with_capacity(g.site_count() * m);
        for site in 0..g.site_count() {
            let phase: f64 = g.coords(site).iter().zip(&p.p).map(|(&x, &pj)| x as f64 * pj).sum();
            let w = Complex64::from_polar(1.0, phase);
            values.extend(a.iter().map(|&v| v * w));
        }
        Self::from_complex(g, values)
    }

    pub fn geometry(&self) -> &TorusGeometry {
        &self.geometry
    }

    pub fn mode(&self) -> ScalarMode {
        self.mode
    }

    pub fn components(&self) -> usize {
        self.geometry.components()
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn value(&self, site: usize, component: usize) -> Complex64 {
        self.values[site * self.components() + component]
    }

    /// Real parts of all values.
    pub fn real_values(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.re).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.norm()))
    }

    pub fn max_imag(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.im.abs()))
    }

    /// Drops imaginary parts and switches to real mode.
    pub fn into_real(mut self) -> Self {
        for v in &mut self.values {
            v.im = 0.0;
        }
        self.mode = ScalarMode::Real;
        self
    }

    /// Whether the zero-mean marker is set. The marker is not re-checked
    /// here; see [`Field::validate_zero_mean`].
    pub fn has_zero_mean_marker(&self) -> bool {
        self.zero_mean
    }

    pub(crate) fn mark_zero_mean(&mut self) {
        self.zero_mean = true;
    }

    /// Recomputes the per-component sums against `1e−12·S^d·max|value|`.
    pub fn validate_zero_mean(&self) -> bool {
        let m = self.components();
        let bound = 1e-12 * self.geometry.site_count() as f64 * self.max_abs();
        component_sums(&self.values, m).iter().all(|s| s.norm() <= bound)
    }

    /// `⟨φ, ψ⟩ = Σ_x φ(x)·conj(ψ(x))`.
    pub fn inner(&self, other: &Field) -> Result<Complex64> {
        same_shape(self, other)?;
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| a * b.conj()).sum())
    }

    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum()
    }

    pub(crate) fn map_values(&self, f: impl Fn(usize, Complex64) -> Complex64) -> Self {
        let values = self.values.iter().enumerate().map(|(i, &v)| f(i, v)).collect();
        Self { geometry: self.geometry, mode: self.mode, values, zero_mean: false }
    }

    pub fn linear_combination(&self, a: Complex64, other: &Field, b: Complex64) -> Result<Self> {
        same_shape(self, other)?;
        let mode = if self.mode == ScalarMode::Real
            && other.mode == ScalarMode::Real
            && a.im == 0.0
            && b.im == 0.0
        {
            ScalarMode::Real
        } else {
            ScalarMode::Complex
        };
        let values = self.values.iter().zip(&other.values).map(|(x, y)| a * x + b * y).collect();
        Ok(Self { geometry: self.geometry, mode, values, zero_mean: false })
    }
}

fn check_len(g: &TorusGeometry, len: usize) -> Result<()> {
    let expected = g.site_count() * g.components();
    if len != expected {
        return Err(Error::ShapeMismatch(format!("field needs {expected} values, got {len}")));
    }
    Ok(())
}

fn same_shape(a: &Field, b: &Field) -> Result<()> {
    if a.geometry != b.geometry {
        return Err(Error::ShapeMismatch("fields live on different tori".into()));
    }
    Ok(())
}

fn component_sums(values: &[Complex64], m: usize) -> Vec<Complex64> {
    let mut sums = vec![ZERO; m];
    for (i, v) in values.iter().enumerate() {
        sums[i % m] += v;
    }
    sums
}

/// Per-site `m×d` matrices, stored site-major with entry `(r, j)` at
/// offset `r·d + j`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    geometry: TorusGeometry,
    mode: ScalarMode,
    values: Vec<Complex64>,
}

impl GradientField {
    pub fn zeros(g: &TorusGeometry, mode: ScalarMode) -> Self {
        Self { geometry: *g, mode, values: vec![ZERO; g.site_count() * g.components() * g.dim()] }
    }

    pub fn geometry(&self) -> &TorusGeometry {
        &self.geometry
    }

    pub fn mode(&self) -> ScalarMode {
        self.mode
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn value(&self, site: usize, r: usize, j: usize) -> Complex64 {
        let (m, d) = (self.geometry.components(), self.geometry.dim());
        self.values[site * m * d + r * d + j]
    }

    pub fn set(&mut self, site: usize, r: usize, j: usize, v: Complex64) {
        let (m, d) = (self.geometry.components(), self.geometry.dim());
        self.values[site * m * d + r * d + j] = v;
    }

    /// `⟨F, G⟩ = Σ_x Σ_{r,j} F_{rj}(x)·conj(G_{rj}(x))`.
    pub fn inner(&self, other: &GradientField) -> Complex64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a * b.conj()).sum()
    }
}

/// `(∇_j φ^r)(x) = φ^r(x + e_j) − φ^r(x)`.
pub fn forward_gradient(phi: &Field) -> GradientField {
    let g = phi.geometry;
    let (m, d) = (g.components(), g.dim());
    let mut out = GradientField::zeros(&g, phi.mode);
    for site in 0..g.site_count() {
        for j in 0..d {
            let next = g.shift(site, j, 1);
            for r in 0..m {
                out.values[site * m * d + r * d + j] =
                    phi.values[next * m + r] - phi.values[site * m + r];
            }
        }
    }
    out
}

/// `(∇* F)^r(x) = Σ_j F_{rj}(x − e_j) − F_{rj}(x)`, the adjoint of
/// [`forward_gradient`].
pub fn backward_divergence(f: &GradientField) -> Field {
    let g = f.geometry;
    let (m, d) = (g.components(), g.dim());
    let mut out = Field::zeros(&g, f.mode);
    for site in 0..g.site_count() {
        for j in 0..d {
            let prev = g.shift(site, j, -1);
            for r in 0..m {
                out.values[site * m + r] +=
                    f.values[prev * m * d + r * d + j] - f.values[site * m * d + r * d + j];
            }
        }
    }
    out
}

/// `F ↦ A F` applied site by site with coefficient entries `coeffs`.
pub(crate) fn apply_coefficients(coeffs: &[Complex64], grad: &GradientField, mode: ScalarMode) -> GradientField {
    let g = grad.geometry;
    let n = g.components() * g.dim();
    let mut out = GradientField::zeros(&g, mode);
    for site in 0..g.site_count() {
        let src = &grad.values[site * n..(site + 1) * n];
        let dst = &mut out.values[site * n..(site + 1) * n];
        for (row, slot) in dst.iter_mut().enumerate() {
            *slot = coeffs[row * n..(row + 1) * n].iter().zip(src).map(|(a, b)| a * b).sum();
        }
    }
    out
}

fn check_map(a_dim: usize, a_comp: usize, phi: &Field) -> Result<()> {
    if a_dim != phi.geometry.dim() || a_comp != phi.components() {
        return Err(Error::ShapeMismatch(format!(
            "map acts on {a_comp}×{a_dim} matrices but the field has shape {}×{}",
            phi.components(),
            phi.geometry.dim()
        )));
    }
    Ok(())
}

/// `∇*(A∇φ)`.
pub fn apply_elliptic(a: &EllipticMap, phi: &Field) -> Result<Field> {
    check_map(a.dim(), a.components(), phi)?;
    Ok(apply_entries(&a.complex_entries(), phi, phi.mode))
}

/// `∇*((A0 + z A1)∇φ)`.
pub fn apply_elliptic_complex(path: &ComplexEllipticPath, z: Complex64, phi: &Field) -> Result<Field> {
    check_map(path.base().dim(), path.base().components(), phi)?;
    Ok(apply_entries(&path.coefficients(z)?, phi, ScalarMode::Complex))
}

pub(crate) fn apply_entries(coeffs: &[Complex64], phi: &Field, mode: ScalarMode) -> Field {
    let flux = apply_coefficients(coeffs, &forward_gradient(phi), mode);
    let mut out = backward_divergence(&flux);
    out.mark_zero_mean();
    out
}

/// `(φ, ψ)_+ = Σ_x ⟨A∇φ(x), ∇ψ(x)⟩`, conjugate-linear in `ψ`.
pub fn dirichlet_form(a: &EllipticMap, phi: &Field, psi: &Field) -> Result<Complex64> {
    check_map(a.dim(), a.components(), phi)?;
    same_shape(phi, psi)?;
    Ok(form_entries(&a.complex_entries(), phi, psi))
}

/// `(φ, ψ)_A = ⟨(A0 + z A1)∇φ, ∇ψ⟩`.
pub fn sesquilinear_form(
    path: &ComplexEllipticPath,
    z: Complex64,
    phi: &Field,
    psi: &Field,
) -> Result<Complex64> {
    check_map(path.base().dim(), path.base().components(), phi)?;
    same_shape(phi, psi)?;
    Ok(form_entries(&path.coefficients(z)?, phi, psi))
}

fn form_entries(coeffs: &[Complex64], phi: &Field, psi: &Field) -> Complex64 {
    let flux = apply_coefficients(coeffs, &forward_gradient(phi), ScalarMode::Complex);
    flux.inner(&forward_gradient(psi))
}

/// Subtracts the per-component mean and sets the zero-mean marker.
pub fn project_zero_mean(phi: &Field) -> Field {
    let m = phi.components();
    let count = phi.geometry.site_count() as f64;
    let means: Vec<Complex64> = component_sums(&phi.values, m).into_iter().map(|s| s / count).collect();
    let mut out = phi.map_values(|i, v| v - means[i % m]);
    out.mode = phi.mode;
    out.mark_zero_mean();
    out
}
