//! Acceptance criteria. Each criterion prints one PASS/FAIL line; the
//! process exits non-zero if any criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use frd::analyticity::{contour_derivative, derivative_bound_check, fd_derivative};
use frd::decomposition::{build_schedule, complex_decompose, decompose, CubeSchedule, DecompositionResult};
use frd::elliptic::{green_symbol, ComplexEllipticPath, EllipticMap};
use frd::lattice::TorusGeometry;
use frd::linalg::spectral_norm;
use frd::sampling::{compare_to_kernel, estimate, gradient_range_check, Observable, SamplerState};
use frd::spectral::{multiplier_to_kernel, Kernel};
use frd::verification::{
    brute_force_green, check_finite_range, check_psd, decay_table, multiplier_bounds, range_check_at,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `BᵀB + 0.1·I` with entries of `B` uniform in `[−1, 1)`.
fn random_spd(seed: u64, d: usize, m: usize) -> EllipticMap {
    let n = d * m;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b: Vec<f64> = (0..n * n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut raw = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            raw[i * n + j] = (0..n).map(|k| b[k * n + i] * b[k * n + j]).sum();
        }
        raw[i * n + i] += 0.1;
    }
    EllipticMap::new(d, m, &raw).unwrap()
}

/// Symmetric direction with operator norm 1.
fn random_direction(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut raw = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v = rng.random_range(-1.0..1.0);
            raw[i * n + j] = v;
            raw[j * n + i] = v;
        }
    }
    let norm = nalgebra::DMatrix::<f64>::from_row_slice(n, n, &raw)
        .symmetric_eigenvalues()
        .iter()
        .fold(0.0f64, |a: f64, v: &f64| a.max(v.abs()));
    raw.iter().map(|v| v / norm).collect()
}

fn run(a: &EllipticMap, dims: (usize, usize, usize, usize), levels: Option<&[Option<usize>]>) -> DecompositionResult {
    let g = TorusGeometry::new(dims.0, dims.1, dims.2, dims.3).unwrap();
    let s = build_schedule(&g, levels).unwrap();
    decompose(a, &g, &s).unwrap()
}

struct Report {
    failures: Vec<usize>,
}

impl Report {
    fn record(&mut self, id: usize, title: &str, passed: bool, elapsed: Duration, detail: String) {
        let status = if passed { "PASS" } else { "FAIL" };
        println!("criterion {id:>2} {status} {title} ({:.2} s): {detail}", elapsed.as_secs_f64());
        if !passed {
            self.failures.push(id);
        }
    }
}

fn oracle_equivalence(report: &mut Report) {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for (m, seed) in [(1, 11), (2, 12)] {
        let g = TorusGeometry::new(2, m, 3, 1).unwrap();
        for a in [EllipticMap::identity(2, m), random_spd(seed, 2, m)] {
            let spectral = multiplier_to_kernel(&green_symbol(&a, &g).unwrap()).unwrap().kernel;
            let dense = brute_force_green(&a, &g).unwrap();
            worst = worst.max(spectral.sub(&dense).unwrap().max_abs());
        }
    }
    let g = TorusGeometry::new(2, 1, 3, 1).unwrap();
    let c0 = multiplier_to_kernel(&green_symbol(&EllipticMap::identity(2, 1), &g).unwrap()).unwrap().kernel.entry(0, 0, 0);
    let hand = (c0 - 2.0 / 9.0).abs();
    let elapsed = start.elapsed();
    report.record(
        1,
        "oracle equivalence",
        worst <= 1e-10 && hand <= 1e-10 && elapsed < Duration::from_secs(1),
        elapsed,
        format!("max |spectral - dense| = {worst:.3e} (tol 1e-10), C(0) = {c0:.17} vs 2/9"),
    );
}

struct Runs {
    main: DecompositionResult,
    wide: DecompositionResult,
    small: Vec<DecompositionResult>,
}

fn telescoping(report: &mut Report) -> DecompositionResult {
    let start = Instant::now();
    let a = random_spd(21, 2, 2);
    let r = run(&a, (2, 2, 5, 2), Some(&[Some(3), Some(5)]));
    let residual = r.diagnostics.sum_residual;
    let elapsed = start.elapsed();
    report.record(
        2,
        "telescoping",
        a.c0() >= 0.1 && residual <= 1e-12 && elapsed < Duration::from_secs(10),
        elapsed,
        format!("max_p relative residual = {residual:.3e} (tol 1e-12), c0 = {:.3}", a.c0()),
    );
    r
}

fn finite_range(report: &mut Report, main: &DecompositionResult) -> DecompositionResult {
    let start = Instant::now();
    let checks = check_finite_range(main);
    let ranges: Vec<i64> = checks.iter().map(|c| c.range).collect();
    let worst_main = checks.iter().map(|c| c.relative).fold(0.0, f64::max);
    let main_ok = ranges == [3, 11] && checks.iter().all(|c| c.applicable && c.relative <= 1e-8);

    // On S = 17 the region beyond L/2 is empty, so the residual is taken
    // beyond r_1 = 3, a superset, together with r_1 ≤ L/2.
    let wide = run(&random_spd(31, 2, 1), (2, 1, 17, 1), None);
    let level = wide.schedule.level(1);
    let r1 = wide.schedule.range(1);
    let check = range_check_at(wide.kernel(1), 1, r1, true);
    let wide_ok = level == Some(3) && 2 * r1 <= 17 && check.applicable && check.relative <= 1e-8;
    let elapsed = start.elapsed();
    report.record(
        3,
        "finite range",
        main_ok && wide_ok && elapsed < Duration::from_secs(60),
        elapsed,
        format!(
            "(2,2,5,2) ranges {ranges:?} worst relative residual {worst_main:.3e}; (2,1,17,1) l_1 = {level:?}, r_1 = {r1}, residual beyond r_1 {:.3e} over {} sites (tol 1e-8)",
            check.relative, check.far_sites
        ),
    );
    wide
}

fn positivity(report: &mut Report, runs: &Runs) {
    let start = Instant::now();
    let worst = runs
        .all()
        .flat_map(check_psd)
        .map(|p| p.min_relative)
        .fold(0.0, f64::min);
    report.record(
        4,
        "positivity",
        worst >= -1e-10,
        start.elapsed(),
        format!("min over runs, k, p of lambda_min / norm = {worst:.3e} (tol -1e-10)"),
    );
}

impl Runs {
    fn all(&self) -> impl Iterator<Item = &DecompositionResult> {
        [&self.main, &self.wide].into_iter().chain(self.small.iter())
    }
}

fn multipliers(report: &mut Report, runs: &Runs) {
    let start = Instant::now();
    let mut t_max = 0.0f64;
    let mut r_max = 0.0f64;
    let mut fitted = Vec::new();
    let mut finite = true;
    for r in [&runs.main, &runs.wide] {
        for b in multiplier_bounds(r) {
            t_max = t_max.max(b.max_t_norm);
            r_max = r_max.max(b.max_r_norm);
            finite &= b.c_low.is_none_or(f64::is_finite) && b.c_high.is_some_and(f64::is_finite);
            fitted.push(format!(
                "l={} c_low={} c_high={}",
                b.l,
                b.c_low.map_or("n/a".into(), |c| format!("{c:.3}")),
                b.c_high.map_or("n/a".into(), |c| format!("{c:.3}"))
            ));
        }
    }
    report.record(
        5,
        "multiplier contraction",
        t_max <= 1.0 + 1e-12 && r_max <= 1.0 + 1e-12 && finite,
        start.elapsed(),
        format!("max |T| = {t_max:.6}, max |R| = {r_max:.6}; {}", fitted.join("; ")),
    );
}

fn decay(report: &mut Report) {
    let start = Instant::now();
    let r = run(&random_spd(61, 2, 1), (2, 1, 3, 4), Some(&[Some(3), Some(5), Some(9), Some(17)]));
    let alphas: Vec<Vec<usize>> = vec![vec![1, 0], vec![0, 1], vec![2, 0], vec![1, 1], vec![0, 2]];
    let table = decay_table(&r, &alphas).unwrap();
    let mut ok = true;
    let mut detail = Vec::new();
    for fit in &table.fits {
        let order: usize = fit.alpha.iter().sum();
        let needed = 0.5 * order as f64 * std::f64::consts::LN_2;
        ok &= fit.non_increasing && fit.slope < 0.0 && -fit.slope >= needed;
        detail.push(format!("alpha {:?}: slope {:.3} (need <= -{needed:.3}), monotone {}", fit.alpha, fit.slope, fit.non_increasing));
    }
    let elapsed = start.elapsed();
    report.record(6, "decay scaling", ok && elapsed < Duration::from_secs(120), elapsed, detail.join("; "));
}

fn symmetry(report: &mut Report, runs: &Runs) {
    let start = Instant::now();
    let sym = runs.all().map(|r| r.diagnostics.symmetry_residual).fold(0.0, f64::max);
    let imag = runs.all().map(|r| r.diagnostics.imag_residue).fold(0.0, f64::max);
    report.record(
        7,
        "symmetry and realness",
        sym <= 1e-10 && imag <= 1e-10,
        start.elapsed(),
        format!("max |C_k(-x) - C_k(x)^T| = {sym:.3e}, imaginary residue = {imag:.3e} (tol 1e-10)"),
    );
}

fn analytic_setup() -> (ComplexEllipticPath, TorusGeometry, CubeSchedule) {
    let g = TorusGeometry::new(2, 1, 5, 2).unwrap();
    let path = ComplexEllipticPath::from_direction(random_spd(81, 2, 1), &random_direction(82, 2)).unwrap();
    let s = build_schedule(&g, Some(&[Some(3), Some(5)])).unwrap();
    (path, g, s)
}

fn relative(a: &Kernel, b: &Kernel) -> f64 {
    let scale = b.max_abs();
    let diff = a.sub(b).unwrap().max_abs();
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

fn analyticity(report: &mut Report) {
    let start = Instant::now();
    let (path, g, s) = analytic_setup();
    let results: Vec<_> = (0..=3).map(|j| contour_derivative(&path, &g, &s, j, 0.5, 32).unwrap()).collect();
    let fd = fd_derivative(&path, &g, &s, 1e-5).unwrap();
    let fd_err = fd.iter().zip(&results[1].kernels).map(|(a, b)| relative(a, b)).fold(0.0, f64::max);
    let mut radius_err = 0.0f64;
    for j in 1..=3 {
        let small = contour_derivative(&path, &g, &s, j, 0.25, 32).unwrap();
        for (a, b) in small.kernels.iter().zip(&results[j].kernels) {
            radius_err = radius_err.max(relative(a, b));
        }
    }
    let telescoping = results.iter().map(|r| r.telescoping_residual).fold(0.0, f64::max);
    let bounds = derivative_bound_check(&results, &[vec![0, 0]], 10.0).unwrap();
    let elapsed = start.elapsed();
    report.record(
        8,
        "analyticity",
        fd_err <= 1e-5
            && radius_err <= 1e-8
            && telescoping <= 1e-10
            && bounds.passed
            && elapsed < Duration::from_secs(300),
        elapsed,
        format!(
            "contour vs FD {fd_err:.3e} (tol 1e-5), r in {{0.25, 0.5}} {radius_err:.3e} (tol 1e-8), telescoping {telescoping:.3e} (tol 1e-10), max bound ratio {:.3} (tol 10)",
            bounds.max_ratio
        ),
    );
}

fn write_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, r#"{"d":2,"m":1,"L":3,"N":2,"A":[1.3,0.2,0.2,0.9],"schedule":[3,5],"seed":17,"samples":3000}"#)
        .unwrap();
    path
}

fn identical_across_threads() -> bool {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let outputs: Vec<_> = ["1", "8"]
        .iter()
        .map(|t| {
            let out = dir.path().join(format!("t{t}"));
            std::fs::create_dir(&out).unwrap();
            let status = Command::new(env!("CARGO_BIN_EXE_frd"))
                .args(["sample", "--config"])
                .arg(&config)
                .arg("--out")
                .arg(&out)
                .args(["--threads", t])
                .status()
                .unwrap();
            assert!(status.code().is_some());
            let mut files: Vec<_> = std::fs::read_dir(&out)
                .unwrap()
                .map(|e| {
                    let p = e.unwrap().path();
                    (p.file_name().unwrap().to_owned(), std::fs::read(&p).unwrap())
                })
                .collect();
            files.sort();
            files
        })
        .collect();
    !outputs[0].is_empty() && outputs[0] == outputs[1]
}

fn sampling(report: &mut Report) {
    let start = Instant::now();
    let n = 50_000;
    let r = run(&random_spd(91, 2, 1), (2, 1, 3, 2), Some(&[Some(3), Some(5)]));
    let state = SamplerState::new(&r, 2024).unwrap();
    let mut worst = 0.0f64;
    for k in 1..=3 {
        let est = estimate(&state, Observable::Component(k), n);
        worst = worst.max(compare_to_kernel(&est, r.kernel(k)).unwrap().max_z_score);
    }
    let total = estimate(&state, Observable::Total, n);
    let total_z = compare_to_kernel(&total, &r.green.kernel).unwrap().max_z_score;

    // Beyond r_k + 2 the (2,1,3,2) torus has no sites, so the gradient
    // check also runs on (2,1,5,2) at k = 1.
    let mut grad_z = 0.0f64;
    let mut far = Vec::new();
    let wide = run(&random_spd(92, 2, 1), (2, 1, 5, 2), Some(&[Some(3), Some(5)]));
    for (res, k) in [(&r, 1), (&r, 2), (&wide, 1)] {
        let st = SamplerState::new(res, 2025).unwrap();
        let est = estimate(&st, Observable::Gradient(k), n);
        let check = gradient_range_check(&est, res.schedule.range(k) + 2);
        far.push(check.far_sites);
        grad_z = grad_z.max(check.max_z_score);
    }
    let identical = identical_across_threads();
    let elapsed = start.elapsed();
    report.record(
        9,
        "sampling",
        worst <= 5.0
            && total_z <= 5.0
            && grad_z <= 5.0
            && far[2] > 0
            && identical
            && elapsed < Duration::from_secs(180),
        elapsed,
        format!(
            "max z per-scale {worst:.2}, total {total_z:.2}, gradient beyond r_k+2 {grad_z:.2} (far sites {far:?}), byte-identical across threads {identical}"
        ),
    );
}

fn complex_branch(report: &mut Report) {
    let start = Instant::now();
    let (path, g, s) = analytic_setup();
    let real = decompose(path.base(), &g, &s).unwrap();
    let complex = complex_decompose(&path, num_complex::Complex64::new(0.0, 0.0), &g, &s).unwrap();
    let mut worst = 0.0f64;
    for slot in 0..g.site_count() {
        if slot == g.zero_frequency_slot() {
            continue;
        }
        let scale = spectral_norm(&real.green.multiplier.get(slot));
        for k in 1..=3 {
            let diff = spectral_norm(&(complex.multipliers[k - 1].get(slot) - real.multiplier(k).get(slot)));
            worst = worst.max(diff / scale);
        }
    }
    report.record(
        10,
        "complex branch",
        worst <= 1e-11,
        start.elapsed(),
        format!("max_p,k |C_k complex - C_k real| / |C(p)| = {worst:.3e} (tol 1e-11)"),
    );
}

fn main() {
    let mut report = Report { failures: Vec::new() };
    oracle_equivalence(&mut report);
    let main_run = telescoping(&mut report);
    let wide = finite_range(&mut report, &main_run);
    let small = vec![
        run(&EllipticMap::identity(2, 1), (2, 1, 3, 1), None),
        run(&random_spd(12, 2, 2), (2, 2, 3, 1), Some(&[Some(3)])),
    ];
    let runs = Runs { main: main_run, wide, small };
    positivity(&mut report, &runs);
    multipliers(&mut report, &runs);
    decay(&mut report);
    symmetry(&mut report, &runs);
    analyticity(&mut report);
    sampling(&mut report);
    complex_branch(&mut report);
    if !report.failures.is_empty() {
        eprintln!("failed criteria: {:?}", report.failures);
        std::process::exit(1);
    }
}
