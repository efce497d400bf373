//! Torus geometry, site and frequency indexing, periodic distances and the
//! cube sets used by the local projections.
//!
//! Sites are stored canonically in `{0,…,S−1}^d` with the first coordinate
//! varying slowest. Frequencies are stored in lexicographic order of the
//! integer label `n ∈ {−(S−1)/2,…,(S−1)/2}^d`, using the same row-major
//! layout on the shifted label `n + (S−1)/2`.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Default cap on the number of lattice sites.
pub const DEFAULT_SITE_CAP: usize = 1 << 24;

/// Shape of the periodic lattice `(Z / L^N Z)^d` carrying `m`-component fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TorusGeometry {
    dim: usize,
    components: usize,
    base: usize,
    depth: usize,
    side: usize,
    site_count: usize,
}

impl TorusGeometry {
    pub fn new(dim: usize, components: usize, base: usize, depth: usize) -> Result<Self> {
        Self::with_site_cap(dim, components, base, depth, DEFAULT_SITE_CAP)
    }

    pub fn with_site_cap(
        dim: usize,
        components: usize,
        base: usize,
        depth: usize,
        site_cap: usize,
    ) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidGeometry(format!("d must be at least 2, got {dim}")));
        }
        if components < 1 {
            return Err(Error::InvalidGeometry("m must be at least 1".into()));
        }
        if depth < 1 {
            return Err(Error::InvalidGeometry("N must be at least 1".into()));
        }
        if base < 3 || base.is_multiple_of(2) {
            return Err(Error::InvalidGeometry(format!(
                "L must be odd and at least 3, got {base}"
            )));
        }
        let too_big = || {
            Error::InvalidGeometry(format!(
                "(L^N)^d exceeds the site cap {site_cap} for L={base}, N={depth}, d={dim}"
            ))
        };
        let side = u32::try_from(depth)
            .ok()
            .and_then(|n| base.checked_pow(n))
            .ok_or_else(too_big)?;
        let site_count = u32::try_from(dim)
            .ok()
            .and_then(|d| side.checked_pow(d))
            .filter(|&c| c <= site_cap)
            .ok_or_else(too_big)?;
        Ok(Self { dim, components, base, depth, side, site_count })
    }

    /// Lattice dimension `d`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of field components `m`.
    pub fn components(&self) -> usize {
        self.components
    }

    /// Scale base `L`.
    pub fn base(&self) -> usize {
        self.base
    }

    /// Depth `N`.
    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Side length `S = L^N`.
    pub fn side(&self) -> usize {
        self.side
    }

    pub fn site_count(&self) -> usize {
        self.site_count
    }

    /// `(S − 1) / 2`.
    pub fn half_side(&self) -> usize {
        (self.side - 1) / 2
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.side.pow((self.dim - 1 - axis) as u32)
    }

    pub fn coords(&self, index: usize) -> Vec<usize> {
        let mut rest = index;
        let mut out = vec![0; self.dim];
        for axis in (0..self.dim).rev() {
            out[axis] = rest % self.side;
            rest /= self.side;
        }
        out
    }

    /// Flat index of arbitrary integer coordinates, reduced modulo `S`.
    pub fn index_of(&self, coords: &[i64]) -> usize {
        debug_assert_eq!(coords.len(), self.dim);
        let s = self.side as i64;
        coords.iter().fold(0usize, |acc, &c| acc * self.side + c.rem_euclid(s) as usize)
    }

    /// Index of the site `index + step·e_axis`.
    pub fn shift(&self, index: usize, axis: usize, step: i64) -> usize {
        let stride = self.stride(axis);
        let c = (index / stride) % self.side;
        let shifted = (c as i64 + step).rem_euclid(self.side as i64) as usize;
        index - c * stride + shifted * stride
    }

    /// Index of the site `-x`.
    pub fn negate(&self, index: usize) -> usize {
        let c = self.coords(index);
        let neg: Vec<i64> = c.iter().map(|&v| -(v as i64)).collect();
        self.index_of(&neg)
    }

    pub fn site(&self, index: usize) -> SiteIndex {
        SiteIndex { coords: self.coords(index), side: self.side }
    }

    /// Flat slot of the p = 0 frequency.
    pub fn zero_frequency_slot(&self) -> usize {
        (self.site_count - 1) / 2
    }

    /// Slot of `−p` given the slot of `p`.
    pub fn negated_frequency_slot(&self, slot: usize) -> usize {
        self.site_count - 1 - slot
    }

    /// Slot of the frequency with integer label `n` (reduced modulo `S`).
    pub fn frequency_slot_of(&self, n: &[i64]) -> usize {
        let h = self.half_side() as i64;
        let s = self.side as i64;
        n.iter().fold(0usize, |acc, &v| acc * self.side + (v + h).rem_euclid(s) as usize)
    }

    pub fn frequency(&self, slot: usize) -> FrequencyIndex {
        let h = self.half_side() as i64;
        let n: Vec<i64> = self.coords(slot).into_iter().map(|c| c as i64 - h).collect();
        FrequencyIndex::new(n, self.side)
    }
}

/// A lattice site in canonical coordinates.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SiteIndex {
    coords: Vec<usize>,
    side: usize,
}

impl SiteIndex {
    pub fn new(g: &TorusGeometry, coords: &[i64]) -> Result<Self> {
        if coords.len() != g.dim() {
            return Err(Error::ShapeMismatch(format!(
                "site has {} coordinates, torus has dimension {}",
                coords.len(),
                g.dim()
            )));
        }
        Ok(g.site(g.index_of(coords)))
    }

    pub fn canonical(&self) -> &[usize] {
        &self.coords
    }

    /// Coordinates in `{−(S−1)/2,…,(S−1)/2}`.
    pub fn centered(&self) -> Vec<i64> {
        self.coords.iter().map(|&c| centered_coord(c, self.side)).collect()
    }
}

/// Representative of `c mod side` in `{−(side−1)/2,…,(side−1)/2}`.
pub fn centered_coord(c: usize, side: usize) -> i64 {
    let h = (side - 1) / 2;
    if c <= h {
        c as i64
    } else {
        c as i64 - side as i64
    }
}

/// A point of the dual torus, `p_j = 2π n_j / S`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyIndex {
    pub n: Vec<i64>,
    pub p: Vec<f64>,
}

impl FrequencyIndex {
    pub fn new(n: Vec<i64>, side: usize) -> Self {
        let p = n.iter().map(|&v| 2.0 * PI * v as f64 / side as f64).collect();
        Self { n, p }
    }

    pub fn is_zero(&self) -> bool {
        self.n.iter().all(|&v| v == 0)
    }

    /// Euclidean norm `|p|`.
    pub fn norm(&self) -> f64 {
        self.p.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn slot(&self, g: &TorusGeometry) -> usize {
        let h = g.half_side() as i64;
        self.n.iter().fold(0usize, |acc, &v| acc * g.side() + (v + h) as usize)
    }
}

/// Periodic sup-norm distance `ρ_∞(x, y)`.
pub fn rho_inf(x: &SiteIndex, y: &SiteIndex, g: &TorusGeometry) -> usize {
    rho_inf_coords(x.canonical(), y.canonical(), g.side())
}

pub(crate) fn rho_inf_coords(x: &[usize], y: &[usize], side: usize) -> usize {
    x.iter()
        .zip(y)
        .map(|(&a, &b)| {
            let d = a.abs_diff(b);
            d.min(side - d)
        })
        .max()
        .unwrap_or(0)
}

/// `ρ_∞(x, 0)` for a flat site index.
pub fn rho_inf_origin(g: &TorusGeometry, index: usize) -> usize {
    g.coords(index).into_iter().map(|c| c.min(g.side() - c)).max().unwrap_or(0)
}

/// `dist_∞(M1, M2) = min ρ_∞(x, y)` over `x ∈ M1`, `y ∈ M2`.
pub fn dist_inf(first: &[SiteIndex], second: &[SiteIndex], g: &TorusGeometry) -> Option<usize> {
    first
        .iter()
        .flat_map(|x| second.iter().map(move |y| rho_inf(x, y, g)))
        .min()
}

/// The dual torus in lexicographic order of `n`.
pub fn dual_frequencies(g: &TorusGeometry) -> Vec<FrequencyIndex> {
    (0..g.site_count()).map(|slot| g.frequency(slot)).collect()
}

/// The cube `Q = {1,…,l−1}^d` with `Q_− = {0,…,l−1}^d` and closure `{0,…,l}^d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cube {
    l: usize,
    dim: usize,
}

impl Cube {
    pub fn side_parameter(&self) -> usize {
        self.l
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn interior(&self) -> Vec<Vec<i64>> {
        box_points(self.dim, 1, self.l as i64 - 1)
    }

    pub fn lower(&self) -> Vec<Vec<i64>> {
        box_points(self.dim, 0, self.l as i64 - 1)
    }

    pub fn closure(&self) -> Vec<Vec<i64>> {
        box_points(self.dim, 0, self.l as i64)
    }

    pub fn interior_len(&self) -> usize {
        (self.l - 1).pow(self.dim as u32)
    }

    pub fn lower_len(&self) -> usize {
        self.l.pow(self.dim as u32)
    }
}

/// Builds the cube with side parameter `l` on the torus `g`.
pub fn cube(l: usize, g: &TorusGeometry) -> Result<Cube> {
    if l < 2 {
        return Err(Error::InvalidArgument(format!("cube side parameter must be ≥ 2, got {l}")));
    }
    if l - 1 >= g.side() {
        return Err(Error::CubeTooLarge { l, side: g.side() });
    }
    Ok(Cube { l, dim: g.dim() })
}

/// All integer points of `{lo,…,hi}^dim`, first coordinate slowest.
pub fn box_points(dim: usize, lo: i64, hi: i64) -> Vec<Vec<i64>> {
    if hi < lo {
        return Vec::new();
    }
    let width = (hi - lo + 1) as usize;
    let total = width.pow(dim as u32);
    (0..total)
        .map(|mut idx| {
            let mut p = vec![0i64; dim];
            for axis in (0..dim).rev() {
                p[axis] = lo + (idx % width) as i64;
                idx /= width;
            }
            p
        })
        .collect()
}
