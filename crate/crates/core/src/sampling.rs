//! Gaussian fields with covariance `C_k`, drawn in Fourier space from a
//! counter-keyed random stream, and Monte Carlo covariance estimators.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::decomposition::DecompositionResult;
use crate::elliptic::hermitian_sqrt;
use crate::error::{Error, Result};
use crate::fields::{forward_gradient, Field};
use crate::lattice::{rho_inf_origin, TorusGeometry};
use crate::linalg::CMat;
use crate::projector::ORACLE_SITE_LIMIT;
use crate::spectral::{Direction, Dft, Kernel, MultiplierTable};

/// Samples per accumulation batch. Batches are fixed by sample index, so
/// reductions do not depend on the thread count.
pub const BATCH_SIZE: usize = 1000;

/// Counter-keyed standard normal stream. The stream id packs the level and
/// the sample index; the word position encodes the frequency.
struct NormalStream {
    rng: ChaCha8Rng,
}

impl NormalStream {
    fn new(seed: u64, level: usize, sample: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(((level as u64) << 48) | (sample & ((1 << 48) - 1)));
        Self { rng }
    }

    /// Positions the stream at the block reserved for `key`, `width` normals long.
    fn seek(&mut self, key: usize, width: usize) {
        self.rng.set_word_pos((key * width * 4) as u128);
    }

    fn uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Two independent standard normals via Box–Muller.
    fn pair(&mut self) -> (f64, f64) {
        let (u, v) = (self.uniform(), self.uniform());
        let radius = (-2.0 * u.ln()).sqrt();
        let angle = 2.0 * std::f64::consts::PI * v;
        (radius * angle.cos(), radius * angle.sin())
    }
}

/// Square roots `Ĉ_k(p)^{1/2}` for all levels plus the seed.
#[derive(Debug, Clone)]
pub struct SamplerState {
    geometry: TorusGeometry,
    /// `None` for identically zero covariances.
    roots: Vec<Option<MultiplierTable>>,
    seed: u64,
    dft: Dft,
}

impl SamplerState {
    pub fn new(result: &DecompositionResult, seed: u64) -> Result<Self> {
        let g = result.geometry;
        let m = g.components();
        let zero = g.zero_frequency_slot();
        let roots = result
            .scales
            .iter()
            .map(|scale| {
                if scale.multiplier.max_abs() == 0.0 {
                    return Ok(None);
                }
                let mats: Vec<CMat> = (0..g.site_count())
                    .into_par_iter()
                    .map(|slot| {
                        if slot == zero {
                            Ok(CMat::zeros(m, m))
                        } else {
                            hermitian_sqrt(&scale.multiplier.get(slot))
                        }
                    })
                    .collect::<Result<_>>()?;
                Ok(Some(MultiplierTable::from_matrices(&g, &mats, true)))
            })
            .collect::<Result<_>>()?;
        Ok(Self { geometry: g, roots, seed, dft: Dft::new(&g) })
    }

    pub fn geometry(&self) -> &TorusGeometry {
        &self.geometry
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of scales `N + 1`.
    pub fn levels(&self) -> usize {
        self.roots.len()
    }

    /// `Ĉ_k^{1/2}`, or `None` for a zero covariance.
    pub fn root(&self, k: usize) -> Option<&MultiplierTable> {
        self.roots[k - 1].as_ref()
    }
}

/// Draws `ξ_k` for the given sample index.
pub fn sample_component(state: &SamplerState, k: usize, sample: u64) -> Field {
    let g = &state.geometry;
    let m = g.components();
    let sites = g.site_count();
    let Some(root) = state.root(k) else {
        let mut f = Field::zeros(g, crate::fields::ScalarMode::Real);
        f.mark_zero_mean();
        return f;
    };
    let amplitude = (sites as f64).sqrt();
    let zero = g.zero_frequency_slot();
    let mut stream = NormalStream::new(state.seed, k, sample);
    let mut hat = vec![Complex64::new(0.0, 0.0); sites * m];
    let mut zeta = vec![Complex64::new(0.0, 0.0); m];
    // Slot t owns the stream words [4mt, 4m(t+1)); consecutive slots need no seek.
    let mut position = 0;
    for slot in 0..sites {
        let partner = g.negated_frequency_slot(slot);
        if slot == zero || partner < slot {
            continue;
        }
        if slot != position {
            stream.seek(slot, m);
        }
        position = slot + 1;
        if partner == slot {
            for z in zeta.iter_mut() {
                *z = Complex64::new(stream.pair().0, 0.0);
            }
        } else {
            let s = std::f64::consts::FRAC_1_SQRT_2;
            for z in zeta.iter_mut() {
                let (a, b) = stream.pair();
                *z = Complex64::new(s * a, s * b);
            }
        }
        let block = &root.values()[slot * m * m..(slot + 1) * m * m];
        for r in 0..m {
            let v: Complex64 = (0..m).map(|s| block[r * m + s] * zeta[s]).sum::<Complex64>() * amplitude;
            hat[slot * m + r] = v;
            hat[partner * m + r] = v.conj();
        }
    }
    state.dft.transform(&mut hat, m, Direction::Inverse);
    let mut field = Field::from_real(g, hat.into_iter().map(|v| v.re).collect()).expect("length preserved");
    field.mark_zero_mean();
    field
}

/// `ξ = Σ_k ξ_k` with each component drawn from its own stream.
pub fn sample_total(state: &SamplerState, sample: u64) -> Field {
    let g = &state.geometry;
    let mut acc = vec![0.0; g.site_count() * g.components()];
    for k in 1..=state.levels() {
        for (a, v) in acc.iter_mut().zip(sample_component(state, k, sample).values()) {
            *a += v.re;
        }
    }
    let mut f = Field::from_real(g, acc).expect("length preserved");
    f.mark_zero_mean();
    f
}

/// Translation-averaged covariance estimate with per-entry standard errors.
#[derive(Debug, Clone, Serialize)]
pub struct CovarianceEstimate {
    #[serde(skip)]
    pub geometry: TorusGeometry,
    /// Channels per site (`m` for fields, `m·d` for gradients).
    pub width: usize,
    pub samples: usize,
    /// `site·width² + a·width + b`.
    pub mean: Vec<f64>,
    pub std_error: Vec<f64>,
    /// Set when fewer than two samples make the errors undefined.
    pub degenerate: bool,
}

impl CovarianceEstimate {
    pub fn mean_at(&self, site: usize, a: usize, b: usize) -> f64 {
        self.mean[site * self.width * self.width + a * self.width + b]
    }

    pub fn std_error_at(&self, site: usize, a: usize, b: usize) -> f64 {
        self.std_error[site * self.width * self.width + a * self.width + b]
    }

    /// The estimate as a kernel (only for `width = m`).
    pub fn to_kernel(&self) -> Result<Kernel> {
        if self.width != self.geometry.components() {
            return Err(Error::ShapeMismatch("estimate width differs from m".into()));
        }
        Kernel::from_values(&self.geometry, self.mean.clone())
    }
}

/// Streaming estimator of `(S^d)^{−1} Σ_x ξ(x+z)ξ(x)ᵀ`, averaged over
/// samples. Per-sample estimates are combined with Welford updates.
#[derive(Debug, Clone)]
pub struct CovarianceAccumulator {
    geometry: TorusGeometry,
    width: usize,
    count: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl CovarianceAccumulator {
    pub fn new(g: &TorusGeometry, width: usize) -> Self {
        let len = g.site_count() * width * width;
        Self { geometry: *g, width, count: 0, mean: vec![0.0; len], m2: vec![0.0; len] }
    }

    /// Adds one sample with `site·width + a` layout.
    pub fn push(&mut self, dft: &Dft, values: &[f64]) {
        let w = self.width;
        let sites = self.geometry.site_count();
        assert_eq!(values.len(), sites * w);
        let mut hat: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        dft.transform(&mut hat, w, Direction::Forward);
        let mut cross = vec![Complex64::new(0.0, 0.0); sites * w * w];
        for slot in 0..sites {
            for a in 0..w {
                for b in 0..w {
                    cross[slot * w * w + a * w + b] = hat[slot * w + a] * hat[slot * w + b].conj();
                }
            }
        }
        dft.transform(&mut cross, w * w, Direction::Inverse);
        let inv = 1.0 / sites as f64;
        self.count += 1;
        let n = self.count as f64;
        for ((mean, m2), c) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(&cross) {
            let x = c.re * inv;
            let delta = x - *mean;
            *mean += delta / n;
            *m2 += delta * (x - *mean);
        }
    }

    pub fn merge(&mut self, other: &CovarianceAccumulator) {
        if other.count == 0 {
            return;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        for i in 0..self.mean.len() {
            let delta = other.mean[i] - self.mean[i];
            self.mean[i] += delta * nb / n;
            self.m2[i] += other.m2[i] + delta * delta * na * nb / n;
        }
        self.count += other.count;
    }

    pub fn finish(self) -> CovarianceEstimate {
        let n = self.count;
        let degenerate = n < 2;
        let std_error = self
            .m2
            .iter()
            .map(|&m2| if degenerate { f64::INFINITY } else { (m2 / (n - 1) as f64 / n as f64).sqrt() })
            .collect();
        CovarianceEstimate {
            geometry: self.geometry,
            width: self.width,
            samples: n,
            mean: self.mean,
            std_error,
            degenerate,
        }
    }
}

/// Covariance estimate of a list of real fields.
pub fn empirical_covariance(samples: &[Field]) -> Result<CovarianceEstimate> {
    let first = samples.first().ok_or_else(|| Error::InvalidArgument("no samples".into()))?;
    let g = *first.geometry();
    let dft = Dft::new(&g);
    let mut acc = CovarianceAccumulator::new(&g, g.components());
    for s in samples {
        if s.geometry() != &g {
            return Err(Error::ShapeMismatch("samples live on different tori".into()));
        }
        acc.push(&dft, &s.real_values());
    }
    Ok(acc.finish())
}

/// Covariance estimate of the forward gradients of a list of real fields,
/// with channels `r·d + j`.
pub fn empirical_gradient_covariance(samples: &[Field]) -> Result<CovarianceEstimate> {
    let first = samples.first().ok_or_else(|| Error::InvalidArgument("no samples".into()))?;
    let g = *first.geometry();
    let dft = Dft::new(&g);
    let mut acc = CovarianceAccumulator::new(&g, g.components() * g.dim());
    for s in samples {
        acc.push(&dft, &gradient_values(s));
    }
    Ok(acc.finish())
}

fn gradient_values(f: &Field) -> Vec<f64> {
    forward_gradient(f).values().iter().map(|v| v.re).collect()
}

/// What to accumulate per sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Observable {
    /// `ξ_k` for one level.
    Component(usize),
    /// `∇ξ_k` for one level.
    Gradient(usize),
    /// `ξ = Σ_k ξ_k`.
    Total,
}

/// Monte Carlo estimate from `n` samples, generated and reduced in fixed
/// batches of [`BATCH_SIZE`] in parallel.
pub fn estimate(state: &SamplerState, observable: Observable, n: usize) -> CovarianceEstimate {
    let g = state.geometry;
    let width = match observable {
        Observable::Gradient(_) => g.components() * g.dim(),
        _ => g.components(),
    };
    let batches: Vec<CovarianceAccumulator> = (0..n.div_ceil(BATCH_SIZE))
        .into_par_iter()
        .map(|b| {
            let mut acc = CovarianceAccumulator::new(&g, width);
            for i in b * BATCH_SIZE..((b + 1) * BATCH_SIZE).min(n) {
                let i = i as u64;
                let values = match observable {
                    Observable::Component(k) => sample_component(state, k, i).real_values(),
                    Observable::Gradient(k) => gradient_values(&sample_component(state, k, i)),
                    Observable::Total => sample_total(state, i).real_values(),
                };
                acc.push(&state.dft, &values);
            }
            acc
        })
        .collect();
    let mut total = CovarianceAccumulator::new(&g, width);
    for b in &batches {
        total.merge(b);
    }
    total.finish()
}

/// Largest `|estimate − C| / SE` over all sites and entries.
#[derive(Debug, Clone, Serialize)]
pub struct Agreement {
    pub max_z_score: f64,
    pub max_abs_error: f64,
    pub entries: usize,
}

pub fn compare_to_kernel(est: &CovarianceEstimate, kernel: &Kernel) -> Result<Agreement> {
    if est.width != kernel.components() || est.geometry != *kernel.geometry() {
        return Err(Error::ShapeMismatch("estimate and kernel differ in shape".into()));
    }
    let mut out = Agreement { max_z_score: 0.0, max_abs_error: 0.0, entries: est.mean.len() };
    for ((m, se), c) in est.mean.iter().zip(&est.std_error).zip(kernel.values()) {
        let err = (m - c).abs();
        out.max_abs_error = out.max_abs_error.max(err);
        out.max_z_score = out.max_z_score.max(z_score(err, *se));
    }
    Ok(out)
}

fn z_score(err: f64, se: f64) -> f64 {
    if err == 0.0 {
        0.0
    } else if se > 0.0 {
        err / se
    } else {
        f64::INFINITY
    }
}

/// Gradient–gradient correlations at separations `ρ_∞(z) > range`.
#[derive(Debug, Clone, Serialize)]
pub struct GradientRangeReport {
    pub range: i64,
    pub far_sites: usize,
    pub max_abs: f64,
    pub max_z_score: f64,
}

/// Checks a gradient covariance estimate beyond `range` against zero.
pub fn gradient_range_check(est: &CovarianceEstimate, range: i64) -> GradientRangeReport {
    let g = &est.geometry;
    let w2 = est.width * est.width;
    let mut out = GradientRangeReport { range, far_sites: 0, max_abs: 0.0, max_z_score: 0.0 };
    for site in 0..g.site_count() {
        if (rho_inf_origin(g, site) as i64) <= range {
            continue;
        }
        out.far_sites += 1;
        for i in site * w2..(site + 1) * w2 {
            let v = est.mean[i].abs();
            out.max_abs = out.max_abs.max(v);
            out.max_z_score = out.max_z_score.max(z_score(v, est.std_error[i]));
        }
    }
    out
}

/// Reference sampler from a dense factorization `Σ = V diag(λ) Vᵀ` of the
/// full covariance matrix `Σ_{(x,r),(y,s)} = C(x − y)_{rs}`.
#[derive(Debug, Clone)]
pub struct DenseSampler {
    geometry: TorusGeometry,
    factor: DMatrix<f64>,
    seed: u64,
}

impl DenseSampler {
    pub fn new(kernel: &Kernel, seed: u64) -> Result<Self> {
        let g = *kernel.geometry();
        let m = g.components();
        let sites = g.site_count();
        let n = sites * m;
        if n > ORACLE_SITE_LIMIT {
            return Err(Error::TooLargeForOracle { size: n, limit: ORACLE_SITE_LIMIT });
        }
        let mut cov = DMatrix::<f64>::zeros(n, n);
        for x in 0..sites {
            let cx = g.coords(x);
            for y in 0..sites {
                let cy = g.coords(y);
                let diff: Vec<i64> = cx.iter().zip(&cy).map(|(a, b)| *a as i64 - *b as i64).collect();
                let z = g.index_of(&diff);
                for r in 0..m {
                    for s in 0..m {
                        cov[(x * m + r, y * m + s)] = kernel.entry(z, r, s);
                    }
                }
            }
        }
        let cov = DMatrix::from_fn(n, n, |i, j| 0.5 * (cov[(i, j)] + cov[(j, i)]));
        let eig = SymmetricEigen::new(cov);
        let scale = eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        if min < -1e-10 * scale {
            return Err(Error::NotPsd { min_eigenvalue: min });
        }
        let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
        let factor = &eig.eigenvectors * DMatrix::from_diagonal(&roots);
        Ok(Self { geometry: g, factor, seed })
    }

    pub fn sample(&self, sample: u64) -> Field {
        let n = self.factor.nrows();
        let mut stream = NormalStream::new(self.seed, 0, sample);
        let mut noise = Vec::with_capacity(n);
        while noise.len() < n {
            let (a, b) = stream.pair();
            noise.push(a);
            noise.push(b);
        }
        noise.truncate(n);
        let v = &self.factor * nalgebra::DVector::from_vec(noise);
        Field::from_real(&self.geometry, v.as_slice().to_vec()).expect("length preserved")
    }

    /// Monte Carlo covariance estimate from `n` dense samples.
    pub fn estimate(&self, n: usize) -> CovarianceEstimate {
        let g = self.geometry;
        let batches: Vec<CovarianceAccumulator> = (0..n.div_ceil(BATCH_SIZE))
            .into_par_iter()
            .map(|b| {
                let dft = Dft::new(&g);
                let mut acc = CovarianceAccumulator::new(&g, g.components());
                for i in b * BATCH_SIZE..((b + 1) * BATCH_SIZE).min(n) {
                    acc.push(&dft, &self.sample(i as u64).real_values());
                }
                acc
            })
            .collect();
        let mut total = CovarianceAccumulator::new(&g, g.components());
        for b in &batches {
            total.merge(b);
        }
        total.finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomposition::{build_schedule, decompose};
    use crate::elliptic::EllipticMap;
    use crate::linalg::max_abs;

    fn small() -> DecompositionResult {
        let g = TorusGeometry::new(2, 1, 3, 2).unwrap();
        let a = EllipticMap::new(2, 1, &[1.2, 0.3, 0.3, 0.8]).unwrap();
        let s = build_schedule(&g, Some(&[Some(3), Some(5)])).unwrap();
        decompose(&a, &g, &s).unwrap()
    }

    #[test]
    fn roots_square_back() {
        let r = small();
        let state = SamplerState::new(&r, 1).unwrap();
        for k in 1..=3 {
            let root = state.root(k).unwrap();
            for slot in 0..r.geometry.site_count() {
                let sq = root.get(slot) * root.get(slot);
                assert!(max_abs(&(sq - r.multiplier(k).get(slot))) <= 1e-10);
            }
        }
    }

    #[test]
    fn samples_are_real_zero_mean_and_reproducible() {
        let r = small();
        let state = SamplerState::new(&r, 7).unwrap();
        let a = sample_component(&state, 2, 11);
        let b = sample_component(&state, 2, 11);
        assert_eq!(a, b);
        assert_ne!(a, sample_component(&state, 2, 12));
        assert_ne!(a, sample_component(&state, 1, 11));
        assert!(a.validate_zero_mean());
        let sum: f64 = a.real_values().iter().sum();
        assert!(sum.abs() < 1e-12);
    }

    #[test]
    fn skipped_levels_give_zero_fields() {
        let g = TorusGeometry::new(2, 1, 3, 2).unwrap();
        let s = build_schedule(&g, None).unwrap();
        let r = decompose(&EllipticMap::identity(2, 1), &g, &s).unwrap();
        let state = SamplerState::new(&r, 0).unwrap();
        assert!(state.root(1).is_none());
        assert_eq!(sample_component(&state, 1, 5).max_abs(), 0.0);
    }

    #[test]
    fn white_noise_covariance_is_a_delta() {
        let g = TorusGeometry::new(2, 1, 3, 1).unwrap();
        let samples: Vec<Field> = (0..4000)
            .map(|i| {
                let mut s = NormalStream::new(3, 0, i);
                Field::from_real(&g, (0..9).map(|_| s.pair().0).collect()).unwrap()
            })
            .collect();
        let est = empirical_covariance(&samples).unwrap();
        let delta = Kernel::from_values(&g, (0..9).map(|x| if x == 0 { 1.0 } else { 0.0 }).collect()).unwrap();
        assert!(compare_to_kernel(&est, &delta).unwrap().max_z_score < 5.0);
        let one = empirical_covariance(&samples[..1]).unwrap();
        assert!(one.degenerate && one.std_error[0].is_infinite());
    }

    #[test]
    fn accumulator_matches_direct_sum_and_merge() {
        let g = TorusGeometry::new(2, 2, 3, 1).unwrap();
        let dft = Dft::new(&g);
        let fields: Vec<Vec<f64>> = (0..5)
            .map(|i| {
                let mut s = NormalStream::new(9, 1, i);
                (0..18).map(|_| s.pair().0).collect()
            })
            .collect();
        let mut whole = CovarianceAccumulator::new(&g, 2);
        let mut left = CovarianceAccumulator::new(&g, 2);
        let mut right = CovarianceAccumulator::new(&g, 2);
        for (i, f) in fields.iter().enumerate() {
            whole.push(&dft, f);
            if i < 2 { left.push(&dft, f) } else { right.push(&dft, f) }
        }
        left.merge(&right);
        let (w, l) = (whole.finish(), left.finish());
        for (a, b) in w.mean.iter().zip(&l.mean) {
            assert!((a - b).abs() < 1e-14);
        }
        for (a, b) in w.std_error.iter().zip(&l.std_error) {
            assert!((a - b).abs() < 1e-12);
        }
        let z = g.index_of(&[1, 2]);
        let direct: f64 = fields
            .iter()
            .map(|f| {
                (0..9)
                    .map(|x| {
                        let c = g.coords(x);
                        let y = g.index_of(&[c[0] as i64 + 1, c[1] as i64 + 2]);
                        f[y * 2] * f[x * 2 + 1]
                    })
                    .sum::<f64>()
                    / 9.0
            })
            .sum::<f64>()
            / 5.0;
        assert!((w.mean_at(z, 0, 1) - direct).abs() < 1e-13);
    }

    #[test]
    fn estimates_are_thread_count_independent() {
        let r = small();
        let state = SamplerState::new(&r, 5).unwrap();
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| estimate(&state, Observable::Component(1), 2500));
        let b = four.install(|| estimate(&state, Observable::Component(1), 2500));
        assert_eq!(a.mean, b.mean);
        assert_eq!(a.std_error, b.std_error);
    }

    #[test]
    fn shuffled_pairs_decorrelate() {
        let r = small();
        let state = SamplerState::new(&r, 2).unwrap();
        let g = r.geometry;
        let dft = Dft::new(&g);
        let mut acc = CovarianceAccumulator::new(&g, 2);
        for i in 0..4000u64 {
            let a = sample_component(&state, 2, i).real_values();
            let b = sample_component(&state, 2, i + 100_000).real_values();
            let mixed: Vec<f64> = a.iter().zip(&b).flat_map(|(x, y)| [*x, *y]).collect();
            acc.push(&dft, &mixed);
        }
        let est = acc.finish();
        for site in 0..g.site_count() {
            let z = est.mean_at(site, 0, 1) / est.std_error_at(site, 0, 1);
            assert!(z.abs() < 5.0);
        }
    }
}
