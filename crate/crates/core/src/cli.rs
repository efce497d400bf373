//! Pipelines behind the `frd` binary: each run writes its artifacts to the
//! output directory and returns the list of checks it evaluated.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::analyticity::{contour_derivative, derivative_bound_check, fd_derivative, DerivativeResult};
use crate::config::{parse_config, RunConfig};
use crate::decomposition::{decompose, DecompositionResult};
use crate::error::{Error, Result};
use crate::io::{format_number, write_covariance_csv, write_json, write_kernel_csv, write_samples_csv, write_table_csv};
use crate::projector::ORACLE_SITE_LIMIT;
use crate::sampling::{
    compare_to_kernel, estimate, gradient_range_check, sample_component, Observable, SamplerState,
};
use crate::spectral::Kernel;
use crate::verification::{
    brute_force_green, decay_table, envelope_m, envelope_m_tilde, envelope_report, multi_indices,
    multiplier_bounds,
};

/// Exit status summary printed by `frd --help`.
pub const EXIT_CODES: &str = "\
Exit codes:
  0  every enabled check passed
  1  at least one check failed (listed on standard error)
  2  invalid configuration or arguments
  3  input/output error
  4  numerical failure (singular symbol, non-convergence, loss of positivity)
  5  problem outside the supported range (oracle size, too few scales)";

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;

/// Maps an error to its documented exit code.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Parse { .. }
        | Error::Validation { .. }
        | Error::InvalidArgument(_)
        | Error::InvalidGeometry(_)
        | Error::InvalidSchedule(_)
        | Error::CubeTooLarge { .. }
        | Error::NotSymmetric { .. }
        | Error::NotPositiveDefinite { .. }
        | Error::InadmissiblePath(_)
        | Error::OutsideDisc { .. }
        | Error::OrderTooHigh { .. }
        | Error::ShapeMismatch(_) => 2,
        Error::Io(_) => 3,
        Error::SingularSymbol { .. }
        | Error::NotPsd { .. }
        | Error::NotHermitian { .. }
        | Error::ImaginaryResidue { .. }
        | Error::FactorizationFailure(_)
        | Error::NotConverged { .. }
        | Error::ZeroFrequency => 4,
        Error::TooLargeForOracle { .. } | Error::InsufficientScales { .. } | Error::EmptyFarRegion { .. } => 5,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Decompose,
    Verify,
    Sample,
    Deriv,
}

/// Command-line overrides of the configuration.
#[derive(Debug, Clone)]
pub struct Options {
    pub command: Command,
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub samples: Option<usize>,
    /// Number of samples per level written to CSV by `sample`.
    pub write_samples: usize,
}

/// One pass/fail test with its measured value.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl Check {
    fn at_most(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self { name: name.into(), value, threshold, passed: value <= threshold }
    }

    fn at_least(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self { name: name.into(), value, threshold, passed: value >= threshold }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub checks: Vec<Check>,
    pub warnings: Vec<String>,
}

impl Outcome {
    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn exit_code(&self) -> i32 {
        if self.failures().next().is_some() {
            EXIT_CHECK_FAILED
        } else {
            EXIT_OK
        }
    }
}

/// Reads the configuration, applies overrides and runs the command.
pub fn run(opts: &Options) -> Result<Outcome> {
    let text = std::fs::read_to_string(&opts.config)?;
    let mut config = parse_config(&text)?;
    if let Some(seed) = opts.seed {
        config.seed = seed;
    }
    if let Some(n) = opts.samples {
        if n < 2 {
            return Err(Error::InvalidArgument("need at least two samples".into()));
        }
        config.samples = n;
    }
    let out = opts.out.clone().or_else(|| config.output.clone()).unwrap_or_else(|| PathBuf::from("."));
    if !out.is_dir() {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("output directory {} does not exist", out.display()),
        )));
    }
    match opts.command {
        Command::Decompose => run_decompose(&config, &out),
        Command::Verify => run_verify(&config, &out),
        Command::Sample => run_sample(&config, &out, opts.write_samples),
        Command::Deriv => run_deriv(&config, &out),
    }
}

#[derive(Serialize)]
struct Summary<'a, T: Serialize> {
    command: &'a str,
    d: usize,
    m: usize,
    #[serde(rename = "L")]
    base: usize,
    #[serde(rename = "N")]
    depth: usize,
    schedule: &'a [Option<usize>],
    ranges: &'a [i64],
    warnings: &'a [String],
    checks: &'a [Check],
    report: T,
}

fn write_summary<T: Serialize>(path: &Path, command: &str, config: &RunConfig, outcome: &Outcome, report: T) -> Result<()> {
    let g = &config.geometry;
    write_json(
        path,
        &Summary {
            command,
            d: g.dim(),
            m: g.components(),
            base: g.base(),
            depth: g.depth(),
            schedule: config.schedule.levels(),
            ranges: config.schedule.ranges(),
            warnings: &outcome.warnings,
            checks: &outcome.checks,
            report,
        },
    )
}

fn decomposition_checks(result: &DecompositionResult, config: &RunConfig) -> Vec<Check> {
    let tol = &config.tolerances;
    let diag = &result.diagnostics;
    let mut checks = vec![Check::at_most("sum_residual", diag.sum_residual, tol.sum)];
    for r in diag.range.iter().filter(|r| r.applicable) {
        checks.push(Check::at_most(format!("range_residual_k{}", r.k), r.relative, tol.range));
    }
    for p in &diag.psd {
        checks.push(Check::at_least(format!("min_psd_eig_k{}", p.k), p.min_relative, -tol.psd));
    }
    checks.push(Check::at_most("imag_residue", diag.imag_residue, tol.imag));
    checks.push(Check::at_most("symmetry_residual", diag.symmetry_residual, tol.symmetry));
    checks
}

fn write_kernels(out: &Path, prefix: &str, kernels: &[&Kernel]) -> Result<()> {
    for (i, k) in kernels.iter().enumerate() {
        write_kernel_csv(&out.join(format!("{prefix}{}.csv", i + 1)), k)?;
    }
    Ok(())
}

pub fn run_decompose(config: &RunConfig, out: &Path) -> Result<Outcome> {
    let result = decompose(&config.map, &config.geometry, &config.schedule)?;
    let outcome = Outcome {
        checks: decomposition_checks(&result, config),
        warnings: config.schedule.warnings().to_vec(),
    };
    write_kernels(out, "kernel_k", &result.scales.iter().map(|s| &s.kernel).collect::<Vec<_>>())?;
    write_kernel_csv(&out.join("green.csv"), &result.green.kernel)?;
    write_summary(&out.join("diagnostics.json"), "decompose", config, &outcome, &result.diagnostics)?;
    Ok(outcome)
}

#[derive(Serialize)]
struct VerifyReport<'a> {
    diagnostics: &'a crate::decomposition::Diagnostics,
    /// Max-abs difference to the dense oracle, absent above the size limit.
    oracle_difference: Option<f64>,
    decay: Option<crate::verification::DecayReport>,
    envelope: crate::verification::EnvelopeReport,
    multipliers: Vec<crate::verification::MultiplierBound>,
}

const ORACLE_TOLERANCE: f64 = 1e-10;
const CONTRACTION_SLACK: f64 = 1e-12;

pub fn run_verify(config: &RunConfig, out: &Path) -> Result<Outcome> {
    let g = &config.geometry;
    let result = decompose(&config.map, g, &config.schedule)?;
    let mut outcome = Outcome {
        checks: decomposition_checks(&result, config),
        warnings: config.schedule.warnings().to_vec(),
    };
    let oracle_difference = if g.site_count() * g.components() <= ORACLE_SITE_LIMIT {
        let dense = brute_force_green(&config.map, g)?;
        let diff = dense.sub(&result.green.kernel)?.max_abs();
        outcome.checks.push(Check::at_most("oracle_difference", diff, ORACLE_TOLERANCE));
        Some(diff)
    } else {
        outcome.warnings.push("dense oracle skipped: torus too large".into());
        None
    };
    let multipliers = multiplier_bounds(&result);
    for b in &multipliers {
        outcome.checks.push(Check::at_most(format!("t_norm_level{}", b.level), b.max_t_norm, 1.0 + CONTRACTION_SLACK));
        outcome.checks.push(Check::at_most(format!("r_norm_level{}", b.level), b.max_r_norm, 1.0 + CONTRACTION_SLACK));
    }
    let envelope = envelope_report(&result);
    outcome.checks.push(Check::at_most("envelope_constant", envelope.c, f64::MAX));
    let decay = match decay_table(&result, &multi_indices(g.dim(), 2)) {
        Ok(d) => Some(d),
        Err(Error::InsufficientScales { available }) => {
            outcome.warnings.push(format!("decay fit skipped: {available} non-skipped scale(s)"));
            None
        }
        Err(e) => return Err(e),
    };

    write_kernels(out, "kernel_k", &result.scales.iter().map(|s| &s.kernel).collect::<Vec<_>>())?;
    write_kernel_csv(&out.join("green.csv"), &result.green.kernel)?;
    if let Some(d) = &decay {
        let mut header: Vec<String> = vec!["k".into()];
        header.extend((1..=g.dim()).map(|i| format!("alpha_{i}")));
        header.extend(["sup_norm".into(), "envelope".into()]);
        let rows: Vec<Vec<String>> = d
            .rows
            .iter()
            .map(|r| {
                let mut row = vec![r.k.to_string()];
                row.extend(r.alpha.iter().map(|a| a.to_string()));
                row.extend([format_number(r.sup_norm), format_number(r.envelope)]);
                row
            })
            .collect();
        write_table_csv(&out.join("decay.csv"), &header.iter().map(String::as_str).collect::<Vec<_>>(), &rows)?;
    }
    let rows: Vec<Vec<String>> = envelope
        .rows
        .iter()
        .map(|r| {
            vec![
                r.k.to_string(),
                r.annulus.to_string(),
                r.frequencies.to_string(),
                format_number(r.max_m),
                r.max_tm.map(format_number).unwrap_or_default(),
                format_number(envelope_m(r.k, envelope.c, g.base(), r.annulus)),
                format_number(envelope_m_tilde(r.k, envelope.c, g.base(), r.annulus)),
            ]
        })
        .collect();
    write_table_csv(
        &out.join("envelope.csv"),
        &["k", "annulus", "frequencies", "max_m", "max_tm", "envelope_m", "envelope_m_tilde"],
        &rows,
    )?;
    let report = VerifyReport { diagnostics: &result.diagnostics, oracle_difference, decay, envelope, multipliers };
    write_summary(&out.join("verification.json"), "verify", config, &outcome, &report)?;
    Ok(outcome)
}

#[derive(Serialize)]
struct SampleEntry {
    observable: String,
    max_z_score: f64,
    max_abs_error: f64,
}

#[derive(Serialize)]
struct SampleReport {
    seed: u64,
    samples: usize,
    comparisons: Vec<SampleEntry>,
    gradient_ranges: Vec<crate::sampling::GradientRangeReport>,
}

pub fn run_sample(config: &RunConfig, out: &Path, write_samples: usize) -> Result<Outcome> {
    let result = decompose(&config.map, &config.geometry, &config.schedule)?;
    let state = SamplerState::new(&result, config.seed)?;
    let n = config.samples;
    let z = config.tolerances.z_score;
    let mut outcome = Outcome { checks: Vec::new(), warnings: config.schedule.warnings().to_vec() };
    let mut report = SampleReport { seed: config.seed, samples: n, comparisons: Vec::new(), gradient_ranges: Vec::new() };
    for k in 1..=state.levels() {
        if state.root(k).is_none() {
            continue;
        }
        let est = estimate(&state, Observable::Component(k), n);
        let agreement = compare_to_kernel(&est, result.kernel(k))?;
        outcome.checks.push(Check::at_most(format!("covariance_k{k}"), agreement.max_z_score, z));
        report.comparisons.push(SampleEntry {
            observable: format!("xi_{k}"),
            max_z_score: agreement.max_z_score,
            max_abs_error: agreement.max_abs_error,
        });
        write_covariance_csv(&out.join(format!("covariance_k{k}.csv")), &est)?;
        if k <= config.schedule.depth() {
            let grad = estimate(&state, Observable::Gradient(k), n);
            let check = gradient_range_check(&grad, config.schedule.range(k) + 2);
            if check.far_sites > 0 {
                outcome.checks.push(Check::at_most(format!("gradient_range_k{k}"), check.max_z_score, z));
                report.gradient_ranges.push(check);
            }
        }
        if write_samples > 0 {
            let fields: Vec<_> = (0..write_samples as u64).map(|i| (i, sample_component(&state, k, i))).collect();
            write_samples_csv(&out.join(format!("samples_k{k}.csv")), &fields)?;
        }
    }
    let total = estimate(&state, Observable::Total, n);
    let agreement = compare_to_kernel(&total, &result.green.kernel)?;
    outcome.checks.push(Check::at_most("covariance_total", agreement.max_z_score, z));
    report.comparisons.push(SampleEntry {
        observable: "xi".into(),
        max_z_score: agreement.max_z_score,
        max_abs_error: agreement.max_abs_error,
    });
    write_covariance_csv(&out.join("covariance_total.csv"), &total)?;
    write_summary(&out.join("sampling.json"), "sample", config, &outcome, &report)?;
    Ok(outcome)
}

#[derive(Serialize)]
struct DerivEntry {
    order: usize,
    radius: f64,
    nodes: usize,
    convergence: f64,
    imag_residue: f64,
    telescoping_residual: f64,
}

#[derive(Serialize)]
struct DerivReport {
    direction: Vec<f64>,
    c0: f64,
    derivatives: Vec<DerivEntry>,
    bounds: Option<crate::analyticity::BoundTable>,
}

const FD_TOLERANCE: f64 = 1e-5;
const RADIUS_TOLERANCE: f64 = 1e-8;
const TELESCOPING_TOLERANCE: f64 = 1e-10;

fn relative_difference(a: &Kernel, b: &Kernel) -> Result<f64> {
    let scale = b.max_abs();
    let diff = a.sub(b)?.max_abs();
    Ok(if scale > 0.0 { diff / scale } else { diff })
}

pub fn run_deriv(config: &RunConfig, out: &Path) -> Result<Outcome> {
    let spec = config
        .derivative
        .as_ref()
        .ok_or_else(|| Error::Validation { field: "derivative".into(), message: "deriv needs a derivative spec".into() })?;
    let path = config.path()?.expect("derivative spec present");
    let (g, sched) = (&config.geometry, &config.schedule);
    let mut outcome = Outcome { checks: Vec::new(), warnings: sched.warnings().to_vec() };
    let results: Vec<DerivativeResult> = (0..=spec.order)
        .map(|j| contour_derivative(&path, g, sched, j, spec.radius, spec.nodes))
        .collect::<Result<_>>()?;
    for r in &results {
        outcome.checks.push(Check::at_most(format!("telescoping_j{}", r.order), r.telescoping_residual, TELESCOPING_TOLERANCE));
        if r.order >= 1 {
            let half = contour_derivative(&path, g, sched, r.order, 0.5 * spec.radius, spec.nodes)?;
            let worst = r
                .kernels
                .iter()
                .zip(&half.kernels)
                .map(|(a, b)| relative_difference(b, a))
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .fold(0.0, f64::max);
            outcome.checks.push(Check::at_most(format!("radius_invariance_j{}", r.order), worst, RADIUS_TOLERANCE));
        }
        write_kernels(out, &format!("deriv_j{}_k", r.order), &r.kernels.iter().collect::<Vec<_>>())?;
    }
    if spec.order >= 1 {
        let fd = fd_derivative(&path, g, sched, spec.step)?;
        let worst = fd
            .iter()
            .zip(&results[1].kernels)
            .map(|(a, b)| relative_difference(a, b))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        outcome.checks.push(Check::at_most("finite_difference_j1", worst, FD_TOLERANCE));
    }
    let bounds = if spec.order >= 2 {
        let table = derivative_bound_check(&results, &[vec![0; g.dim()]], spec.bound_factor)?;
        outcome.checks.push(Check::at_most("derivative_bounds", table.max_ratio, spec.bound_factor));
        let rows: Vec<Vec<String>> = table
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.k.to_string(),
                    r.order.to_string(),
                    format_number(r.norm),
                    format_number(r.scaled),
                    format_number(r.ratio),
                ]
            })
            .collect();
        write_table_csv(&out.join("bounds.csv"), &["k", "j", "norm", "scaled", "ratio"], &rows)?;
        Some(table)
    } else {
        outcome.warnings.push("bound check needs order at least 2".into());
        None
    };
    let report = DerivReport {
        direction: path.direction().to_vec(),
        c0: path.base().c0(),
        derivatives: results
            .iter()
            .map(|r| DerivEntry {
                order: r.order,
                radius: r.radius,
                nodes: r.nodes,
                convergence: r.convergence,
                imag_residue: r.imag_residue,
                telescoping_residual: r.telescoping_residual,
            })
            .collect(),
        bounds,
    };
    write_summary(&out.join("deriv.json"), "deriv", config, &outcome, &report)?;
    Ok(outcome)
}
