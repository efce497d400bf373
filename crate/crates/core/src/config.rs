//! JSON run configuration.
//!
//! ```json
//! {
//!   "d": 2, "m": 1, "L": 5, "N": 2,
//!   "A": [1.0, 0.0, 0.0, 1.0],
//!   "schedule": [3, 5],
//!   "tolerances": { "sum": 1e-12, "range": 1e-8, "psd": 1e-10, "imag": 1e-10, "symmetry": 1e-10 },
//!   "seed": 7,
//!   "samples": 50000,
//!   "derivative": { "direction": [1.0, 0.0, 0.0, 0.0], "order": 3, "radius": 0.5, "nodes": 32 },
//!   "output": "out"
//! }
//! ```
//!
//! `A` is the row-major `(m·d)×(m·d)` matrix with row index `r·d + j`; a
//! single entry `[a]` stands for `a` times the identity. Schedule entries
//! are cube sides `l_j` or `null` for a skipped level.

use std::path::PathBuf;

use serde::Deserialize;

use crate::decomposition::{build_schedule, CubeSchedule};
use crate::elliptic::{ComplexEllipticPath, EllipticMap};
use crate::error::{Error, Result};
use crate::lattice::TorusGeometry;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    d: usize,
    m: usize,
    #[serde(rename = "L")]
    base: usize,
    #[serde(rename = "N")]
    depth: usize,
    #[serde(rename = "A")]
    a: Vec<f64>,
    #[serde(default)]
    schedule: Option<Vec<Option<usize>>>,
    #[serde(default)]
    tolerances: Tolerances,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_samples")]
    samples: usize,
    #[serde(default)]
    derivative: Option<DerivativeSpec>,
    #[serde(default)]
    output: Option<PathBuf>,
}

fn default_samples() -> usize {
    10_000
}

/// Pass thresholds of the checks run by the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize, serde::Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Relative telescoping residual.
    pub sum: f64,
    /// Far-field residual relative to `sup_x ‖C_k(x)‖`.
    pub range: f64,
    /// Allowed `−λ_min(Ĉ_k(p)) / ‖Ĉ_k(p)‖`.
    pub psd: f64,
    /// Imaginary residue of reconstructed kernels.
    pub imag: f64,
    /// `max |C_k(−x) − C_k(x)ᵀ|`.
    pub symmetry: f64,
    /// Standard errors allowed in Monte Carlo comparisons.
    pub z_score: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { sum: 1e-12, range: 1e-8, psd: 1e-10, imag: 1e-10, symmetry: 1e-10, z_score: 5.0 }
    }
}

/// Direction and contour parameters for derivative runs.
#[derive(Debug, Clone, PartialEq, Deserialize, serde::Serialize)]
#[serde(deny_unknown_fields)]
pub struct DerivativeSpec {
    /// `Ȧ` with `‖Ȧ‖ ≤ 1`, same layout as `A`.
    pub direction: Vec<f64>,
    #[serde(default = "default_order")]
    pub order: usize,
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default = "default_nodes")]
    pub nodes: usize,
    /// Step of the central finite difference compared against `j = 1`.
    #[serde(default = "default_step")]
    pub step: f64,
    /// Allowed growth of normalized derivative norms relative to `j = 0`.
    #[serde(default = "default_bound_factor")]
    pub bound_factor: f64,
}

fn default_order() -> usize {
    3
}
fn default_radius() -> f64 {
    crate::analyticity::DEFAULT_RADIUS
}
fn default_nodes() -> usize {
    crate::analyticity::DEFAULT_NODES
}
fn default_step() -> f64 {
    1e-5
}
fn default_bound_factor() -> f64 {
    10.0
}

/// A validated run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub geometry: TorusGeometry,
    pub map: EllipticMap,
    pub schedule: CubeSchedule,
    pub overrides: Option<Vec<Option<usize>>>,
    pub tolerances: Tolerances,
    pub seed: u64,
    pub samples: usize,
    pub derivative: Option<DerivativeSpec>,
    pub output: Option<PathBuf>,
}

impl RunConfig {
    /// The complex path `A0 + z·(c0/2)·Ȧ` of the derivative spec.
    pub fn path(&self) -> Result<Option<ComplexEllipticPath>> {
        let Some(spec) = &self.derivative else { return Ok(None) };
        let direction = expand_matrix(&spec.direction, self.geometry.dim() * self.geometry.components())
            .ok_or_else(|| invalid("derivative.direction", "wrong number of entries"))?;
        ComplexEllipticPath::from_direction(self.map.clone(), &direction)
            .map(Some)
            .map_err(|e| invalid("derivative.direction", &e.to_string()))
    }
}

fn invalid(field: &str, message: &str) -> Error {
    Error::Validation { field: field.into(), message: message.into() }
}

fn expand_matrix(values: &[f64], n: usize) -> Option<Vec<f64>> {
    if values.len() == n * n {
        Some(values.to_vec())
    } else if values.len() == 1 {
        Some((0..n * n).map(|i| if i % (n + 1) == 0 { values[0] } else { 0.0 }).collect())
    } else {
        None
    }
}

/// Parses and validates a JSON configuration.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let raw: RawConfig = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    if raw.d < 2 {
        return Err(invalid("d", "d must be at least 2"));
    }
    if raw.m < 1 {
        return Err(invalid("m", "m must be at least 1"));
    }
    if raw.base.is_multiple_of(2) {
        return Err(invalid("L", "L must be odd"));
    }
    if raw.base < 3 {
        return Err(invalid("L", "L must be at least 3"));
    }
    if raw.depth < 1 {
        return Err(invalid("N", "N must be at least 1"));
    }
    let geometry = TorusGeometry::new(raw.d, raw.m, raw.base, raw.depth)
        .map_err(|e| invalid("N", &e.to_string()))?;
    let n = raw.d * raw.m;
    let entries = expand_matrix(&raw.a, n).ok_or_else(|| {
        invalid("A", &format!("expected {} entries or a single scalar, got {}", n * n, raw.a.len()))
    })?;
    if let Some(i) = entries.iter().position(|v| !v.is_finite()) {
        return Err(invalid(&format!("A[{i}]"), "entry is not finite"));
    }
    let map = EllipticMap::new(raw.d, raw.m, &entries).map_err(|e| match e {
        Error::NotSymmetric { row, col, deviation } => invalid(
            &format!("A[{}]", row * n + col),
            &format!("differs from its transpose entry A[{}] by {deviation:e}", col * n + row),
        ),
        other => invalid("A", &other.to_string()),
    })?;
    if let Some(levels) = &raw.schedule {
        if let Some((j, _)) = levels.iter().enumerate().find(|(_, l)| matches!(l, Some(v) if *v < 3)) {
            return Err(invalid(&format!("schedule[{j}]"), "cube sides must be at least 3"));
        }
    }
    let schedule =
        build_schedule(&geometry, raw.schedule.as_deref()).map_err(|e| invalid("schedule", &e.to_string()))?;
    let t = raw.tolerances;
    for (name, v) in [
        ("sum", t.sum),
        ("range", t.range),
        ("psd", t.psd),
        ("imag", t.imag),
        ("symmetry", t.symmetry),
        ("z_score", t.z_score),
    ] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(invalid(&format!("tolerances.{name}"), "must be a finite non-negative number"));
        }
    }
    if raw.samples < 2 {
        return Err(invalid("samples", "need at least two samples"));
    }
    let config = RunConfig {
        geometry,
        map,
        schedule,
        overrides: raw.schedule,
        tolerances: t,
        seed: raw.seed,
        samples: raw.samples,
        derivative: raw.derivative,
        output: raw.output,
    };
    if let Some(spec) = &config.derivative {
        if spec.order > 6 {
            return Err(invalid("derivative.order", "orders above 6 are not supported"));
        }
        if !(spec.radius > 0.0 && spec.radius <= 0.5) {
            return Err(invalid("derivative.radius", "radius must lie in (0, 0.5]"));
        }
        if spec.nodes < 8 * spec.order + 8 {
            return Err(invalid("derivative.nodes", &format!("need at least {}", 8 * spec.order + 8)));
        }
        if !(1e-7..=1e-3).contains(&spec.step) {
            return Err(invalid("derivative.step", "step must lie in [1e-7, 1e-3]"));
        }
        config.path()?;
    }
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field_of(e: Error) -> String {
        match e {
            Error::Validation { field, .. } => field,
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn minimal_config() {
        let c = parse_config(r#"{"d":2,"m":1,"L":3,"N":1,"A":[1]}"#).unwrap();
        assert_eq!(c.geometry.side(), 3);
        assert_eq!(c.map, EllipticMap::identity(2, 1));
        assert_eq!(c.tolerances, Tolerances::default());
        assert!(c.schedule.is_skipped(1));
    }

    #[test]
    fn validation_errors() {
        let e = parse_config(r#"{"d":2,"m":1,"L":4,"N":1,"A":[1]}"#).unwrap_err();
        assert!(e.to_string().contains("L must be odd"));
        let e = parse_config(r#"{"d":2,"m":1,"L":3,"N":1,"A":[1,0.5,0,1]}"#).unwrap_err();
        assert_eq!(field_of(e), "A[1]");
        let e = parse_config(r#"{"d":2,"m":1,"L":3,"N":1,"A":[1,0,0,-1]}"#).unwrap_err();
        assert_eq!(field_of(e), "A");
        let e = parse_config(r#"{"d":2,"m":1,"L":5,"N":2,"A":[1],"schedule":[2,5]}"#).unwrap_err();
        assert_eq!(field_of(e), "schedule[0]");
        let e = parse_config(r#"{"d":2,"m":1,"L":5,"N":1,"A":[1],"derivative":{"direction":[2]}}"#).unwrap_err();
        assert_eq!(field_of(e), "derivative.direction");
    }

    #[test]
    fn parse_errors_and_unknown_keys() {
        match parse_config("{\"d\":2,\n\"m\":").unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse_config(r#"{"d":2,"m":1,"L":3,"N":1,"A":[1],"colour":1}"#),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn full_config() {
        let c = parse_config(
            r#"{"d":2,"m":1,"L":5,"N":2,"A":[1.2,0.1,0.1,0.9],"schedule":[3,null],
                "tolerances":{"sum":1e-11},"seed":4,"samples":100,
                "derivative":{"direction":[1,0,0,0],"order":2},"output":"o"}"#,
        )
        .unwrap();
        assert_eq!(c.schedule.levels(), &[Some(3), None]);
        assert_eq!(c.tolerances.sum, 1e-11);
        assert_eq!(c.tolerances.range, 1e-8);
        assert_eq!(c.derivative.as_ref().unwrap().nodes, 32);
        assert!((c.path().unwrap().unwrap().direction_norm() - 0.5 * c.map.c0()).abs() < 1e-12);
    }
}
