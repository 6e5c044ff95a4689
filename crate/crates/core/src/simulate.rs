//! Generators for fiber patterns: Poisson germs with a linear trend carrying
//! independent random segments (the null model), segments driven by
//! Gaussian random fields (dependent fibers), and resampling of an observed
//! pattern under the null model for envelope tests.
//!
//! Germs are simulated on the window dilated by a margin so that fibers
//! whose midpoints fall outside the window but reach into it are present.
//! Only fibers that intersect the window are kept in the returned pattern.
//! Simulation works in `f64`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal, UnitCircle, UnitSphere};
use rayon::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::gamma::ln_gamma;

use crate::density::{fit_model, DensityModel, FitOptions, LinearTrend};
use crate::error::{Error, Result};
use crate::fiber::{discretize_all, Fiber, FiberGeometry, SamplingConfig};
use crate::geometry::{Dim, Direction, OrientationConvention, Point, Window};
use crate::kstat::{estimate_k, relative_k, KGrid, NonpositivePolicy};
use crate::rng::{derive_seed, stream_rng, Stream};

/// Default correlation scale of the dependent-fiber fields. Short enough
/// that nearby fibers align while the overall amount of fiber around a
/// fiber stays close to the null value; larger scales also correlate the
/// lengths of neighbouring fibers and inflate `K` at every angle.
pub const DEFAULT_CORR_SCALE: f64 = 0.25;

/// Largest germ count for which the dense field covariance is factorized.
pub const MAX_DEPENDENT_GERMS: usize = 10_000;

/// An observed fiber pattern.
#[derive(Clone, Debug, PartialEq)]
pub struct FiberPattern {
    pub dim: Dim,
    pub convention: OrientationConvention<f64>,
    pub window: Window<f64>,
    pub fibers: Vec<Fiber<f64>>,
}

impl FiberPattern {
    pub fn new(
        convention: OrientationConvention<f64>,
        window: Window<f64>,
        fibers: Vec<Fiber<f64>>,
    ) -> Result<Self> {
        let dim = window.dim();
        if convention.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim.n(),
                found: convention.dim().n(),
            });
        }
        if let Some(f) = fibers.iter().find(|f| f.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim.n(),
                found: f.dim().n(),
            });
        }
        let mut ids: Vec<u64> = fibers.iter().map(|f| f.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("fiber ids must be unique"));
        }
        Ok(FiberPattern {
            dim,
            convention,
            window,
            fibers,
        })
    }

    pub fn total_length(&self) -> f64 {
        self.fibers.iter().map(Fiber::length).sum()
    }

    pub fn mean_length(&self) -> Option<f64> {
        (!self.fibers.is_empty()).then(|| self.total_length() / self.fibers.len() as f64)
    }
}

fn dilated(w: &Window<f64>, margin: f64) -> (Vec<f64>, Vec<f64>) {
    let lo = vec![-margin; w.dim().n()];
    let hi = w.extents().iter().map(|a| a + margin).collect();
    (lo, hi)
}

/// Poisson process with intensity `trend` on the window dilated by
/// `margin`, simulated by thinning a homogeneous process at the maximum of
/// the trend over the dilated box.
pub fn sample_poisson_linear(
    w: &Window<f64>,
    trend: &LinearTrend<f64>,
    margin: f64,
    seed: u64,
) -> Result<Vec<Point<f64>>> {
    if trend.dim() != w.dim() {
        return Err(Error::DimensionMismatch {
            expected: w.dim().n(),
            found: trend.dim().n(),
        });
    }
    if !(margin >= 0.0) || !margin.is_finite() {
        return Err(Error::InvalidSpec("margin must be finite and >= 0".into()));
    }
    let (lo, hi) = dilated(w, margin);
    let (min, max) = trend.range_over_box(&lo, &hi);
    if min < 0.0 {
        return Err(Error::InvalidSpec(format!(
            "trend is negative ({min}) inside the dilated window"
        )));
    }
    if max <= 0.0 {
        return Ok(Vec::new());
    }
    let vol: f64 = lo.iter().zip(&hi).map(|(l, h)| h - l).product();
    let mut rng = stream_rng(seed, Stream::Germs);
    let n = Poisson::new(max * vol)
        .map_err(|e| Error::InvalidSpec(e.to_string()))?
        .sample(&mut rng) as usize;
    let mut out = Vec::new();
    let mut coords = vec![0.0; lo.len()];
    for _ in 0..n {
        for (c, (l, h)) in coords.iter_mut().zip(lo.iter().zip(&hi)) {
            *c = l + (h - l) * rng.random::<f64>();
        }
        let p = Point::new(&coords)?;
        if rng.random::<f64>() * max < trend.eval(&p) {
            out.push(p);
        }
    }
    Ok(out)
}

/// Uniform direction on the circle or sphere.
fn uniform_direction<R: Rng>(dim: Dim, rng: &mut R) -> Direction<f64> {
    let v: Point<f64> = match dim {
        Dim::Two => {
            let [x, y]: [f64; 2] = UnitCircle.sample(rng);
            Point::xy(x, y)
        }
        Dim::Three => {
            let [x, y, z]: [f64; 3] = UnitSphere.sample(rng);
            Point::xyz(x, y, z)
        }
    };
    Direction::normalize(v).expect("unit sample")
}

/// Whether a segment meets the closed box, by slab clipping.
fn segment_hits_box(a: &Point<f64>, b: &Point<f64>, w: &Window<f64>) -> bool {
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for ((pa, pb), ext) in a.as_slice().iter().zip(b.as_slice()).zip(w.extents()) {
        let d = pb - pa;
        if d == 0.0 {
            if *pa < 0.0 || pa > ext {
                return false;
            }
            continue;
        }
        let (mut lo, mut hi) = ((0.0 - pa) / d, (ext - pa) / d);
        if lo > hi {
            std::mem::swap(&mut lo, &mut hi);
        }
        t0 = t0.max(lo);
        t1 = t1.min(hi);
        if t0 > t1 {
            return false;
        }
    }
    true
}

/// Whether any part of a fiber lies in the window. Exact for segments and
/// polylines; cubic curves are tested on a 128-edge polygon.
pub fn fiber_hits_window(f: &Fiber<f64>, w: &Window<f64>) -> bool {
    match &f.geometry {
        FiberGeometry::Segment {
            midpoint,
            direction,
            length,
        } => {
            let h = *direction.vector() * (length / 2.0);
            segment_hits_box(&(*midpoint - h), &(*midpoint + h), w)
        }
        FiberGeometry::Polyline { vertices } => vertices
            .windows(2)
            .any(|e| segment_hits_box(&e[0], &e[1], w)),
        FiberGeometry::Cubic(c) => (0..128).any(|i| {
            let a = c.eval(i as f64 / 64.0 - 1.0);
            let b = c.eval((i + 1) as f64 / 64.0 - 1.0);
            segment_hits_box(&a, &b, w)
        }),
    }
}

/// Independent uniform segments on Poisson germs.
#[derive(Clone, Debug, PartialEq)]
pub struct NullModelSpec {
    pub window: Window<f64>,
    /// Germ intensity `ρ_Y`.
    pub trend: LinearTrend<f64>,
    /// Segment lengths are Uniform(0, max_length).
    pub max_length: f64,
    pub convention: OrientationConvention<f64>,
    pub seed: u64,
}

impl NullModelSpec {
    /// The planar setting of the simulation study: a 20 x 20 window, germ
    /// intensity falling linearly from 3.5 to 0.5 along x, lengths
    /// Uniform(0, 2), unoriented tangents.
    pub fn planar_study(seed: u64) -> Self {
        NullModelSpec {
            window: Window::new(&[20.0, 20.0]).expect("valid"),
            trend: LinearTrend::new(vec![3.5, -0.15, 0.0]).expect("valid"),
            max_length: 2.0,
            convention: OrientationConvention::unoriented_default(Dim::Two),
            seed,
        }
    }
}

/// A simulated pattern with the density model it was generated from.
#[derive(Clone, Debug)]
pub struct Simulation {
    pub pattern: FiberPattern,
    pub true_model: DensityModel<f64>,
}

pub fn simulate_null(spec: &NullModelSpec) -> Result<Simulation> {
    if !(spec.max_length > 0.0) || !spec.max_length.is_finite() {
        return Err(Error::InvalidSpec("max_length must be positive".into()));
    }
    let dim = spec.window.dim();
    if spec.convention.dim() != dim {
        return Err(Error::InvalidSpec(
            "convention dimension differs from window".into(),
        ));
    }
    let germs = sample_poisson_linear(&spec.window, &spec.trend, spec.max_length / 2.0, spec.seed)?;
    let mut lengths = stream_rng(spec.seed, Stream::Lengths);
    let mut dirs = stream_rng(spec.seed, Stream::Directions);
    let mut fibers = Vec::new();
    for (i, g) in germs.iter().enumerate() {
        let mut len = 0.0;
        while len <= 0.0 {
            len = spec.max_length * lengths.random::<f64>();
        }
        let dir = uniform_direction(dim, &mut dirs);
        let f = Fiber::segment(i as u64, *g, dir, len)?;
        if fiber_hits_window(&f, &spec.window) {
            fibers.push(f);
        }
    }
    let mean_len = spec.max_length / 2.0;
    let true_model = DensityModel::uniform(spec.trend.scaled(mean_len), spec.convention)?;
    Ok(Simulation {
        pattern: FiberPattern::new(spec.convention, spec.window, fibers)?,
        true_model,
    })
}

/// Segments from `u − X(u)` to `u + X(u)` where the coordinates of `X` are
/// independent Gaussian random fields with exponential correlation.
#[derive(Clone, Debug, PartialEq)]
pub struct DependentModelSpec {
    pub window: Window<f64>,
    pub trend: LinearTrend<f64>,
    /// Correlation scale `s` of `exp(−‖h‖ / s)`.
    pub corr_scale: f64,
    /// Standard deviation of each field coordinate.
    pub sigma: f64,
    pub convention: OrientationConvention<f64>,
    pub seed: u64,
}

impl DependentModelSpec {
    /// Planar dependent-fiber setting: same window and germ intensity as
    /// [`NullModelSpec::planar_study`], mean fiber length one.
    pub fn planar_study(corr_scale: f64, seed: u64) -> Self {
        DependentModelSpec {
            window: Window::new(&[20.0, 20.0]).expect("valid"),
            trend: LinearTrend::new(vec![3.5, -0.15, 0.0]).expect("valid"),
            corr_scale,
            sigma: sigma_for_mean_length(Dim::Two, 1.0),
            convention: OrientationConvention::unoriented_default(Dim::Two),
            seed,
        }
    }

    /// Mean fiber length `2 E‖X(u)‖`.
    pub fn mean_fiber_length(&self) -> f64 {
        2.0 * self.sigma * chi_mean(self.window.dim())
    }
}

/// `E‖Z‖` for a standard normal vector in `d` dimensions.
fn chi_mean(dim: Dim) -> f64 {
    let d = dim.n() as f64;
    std::f64::consts::SQRT_2 * (ln_gamma((d + 1.0) / 2.0) - ln_gamma(d / 2.0)).exp()
}

/// Field standard deviation giving fibers of mean length `mean_len`.
pub fn sigma_for_mean_length(dim: Dim, mean_len: f64) -> f64 {
    mean_len / (2.0 * chi_mean(dim))
}

fn factorize_with_jitter(mut cov: DMatrix<f64>, scale: f64) -> Result<DMatrix<f64>> {
    let n = cov.nrows();
    let mut added = 0.0;
    for jitter in [1e-10, 1e-8, 1e-6] {
        let bump = jitter * scale - added;
        for i in 0..n {
            cov[(i, i)] += bump;
        }
        added = jitter * scale;
        if let Some(ch) = cov.clone().cholesky() {
            return Ok(ch.unpack());
        }
    }
    Err(Error::IllConditioned { jitter: 1e-6 })
}

pub fn simulate_dependent(spec: &DependentModelSpec) -> Result<Simulation> {
    if !(spec.corr_scale > 0.0) || !(spec.sigma > 0.0) {
        return Err(Error::InvalidSpec(
            "corr_scale and sigma must be positive".into(),
        ));
    }
    let dim = spec.window.dim();
    if spec.convention.dim() != dim {
        return Err(Error::InvalidSpec(
            "convention dimension differs from window".into(),
        ));
    }
    // 0.999 quantile of the half-length ‖X(u)‖
    let chi2 = ChiSquared::new(dim.n() as f64).map_err(|e| Error::InvalidSpec(e.to_string()))?;
    let margin = spec.sigma * chi2.inverse_cdf(0.999).sqrt();
    let germs = sample_poisson_linear(&spec.window, &spec.trend, margin, spec.seed)?;
    let n = germs.len();
    if n > MAX_DEPENDENT_GERMS {
        return Err(Error::InvalidSpec(format!(
            "{n} germs exceed the dense-factorization limit {MAX_DEPENDENT_GERMS}"
        )));
    }
    let mut fibers = Vec::new();
    if n > 0 {
        let var = spec.sigma * spec.sigma;
        let cov = DMatrix::from_fn(n, n, |i, j| {
            var * (-(germs[i] - germs[j]).norm() / spec.corr_scale).exp()
        });
        let chol = factorize_with_jitter(cov, var)?;
        let mut rng = stream_rng(spec.seed, Stream::Field);
        let fields: Vec<DVector<f64>> = (0..dim.n())
            .map(|_| {
                let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
                &chol * z
            })
            .collect();
        for (i, g) in germs.iter().enumerate() {
            let coords: Vec<f64> = fields.iter().map(|f| f[i]).collect();
            let x = Point::new(&coords)?;
            let half = x.norm();
            if !(half > 0.0) {
                continue;
            }
            let f = Fiber::segment(i as u64, *g, Direction::normalize(x)?, 2.0 * half)?;
            if fiber_hits_window(&f, &spec.window) {
                fibers.push(f);
            }
        }
    }
    let true_model =
        DensityModel::uniform(spec.trend.scaled(spec.mean_fiber_length()), spec.convention)?;
    Ok(Simulation {
        pattern: FiberPattern::new(spec.convention, spec.window, fibers)?,
        true_model,
    })
}

/// Null-model resample of an observed pattern: Poisson germs with intensity
/// `trend(u) / mean_len`, each carrying a fiber drawn with replacement from
/// the pattern and recentred (at its arclength midpoint) on the germ.
pub fn resample_null(
    pattern: &FiberPattern,
    fitted: &LinearTrend<f64>,
    mean_len: f64,
    seed: u64,
) -> Result<FiberPattern> {
    if pattern.fibers.is_empty() {
        return Err(Error::EmptyData("cannot resample an empty pattern".into()));
    }
    if !(mean_len > 0.0) {
        return Err(Error::InvalidSpec(
            "mean fiber length must be positive".into(),
        ));
    }
    let centred: Vec<Fiber<f64>> = pattern
        .fibers
        .iter()
        .map(|f| f.translated(&(-f.center())))
        .collect();
    let origin = Point::zero(pattern.dim);
    let margin = centred.iter().map(|f| f.reach(&origin)).fold(0.0, f64::max);
    let germ_trend = fitted.scaled(1.0 / mean_len);
    let germs = sample_poisson_linear(&pattern.window, &germ_trend, margin, seed)?;
    let mut rng = stream_rng(seed, Stream::Resample);
    let mut fibers = Vec::new();
    for (i, g) in germs.iter().enumerate() {
        let k = rng.random_range(0..centred.len());
        let mut f = centred[k].translated(g);
        f.id = i as u64;
        if fiber_hits_window(&f, &pattern.window) {
            fibers.push(f);
        }
    }
    FiberPattern::new(pattern.convention, pattern.window, fibers)
}

/// Data curve and pointwise extremes of simulated relative K-functions.
/// Matrices are indexed `[r1][r2]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Envelope {
    pub grid: KGrid<f64>,
    pub lo: Vec<Vec<f64>>,
    pub hi: Vec<Vec<f64>>,
    pub data: Vec<Vec<f64>>,
    pub n_sim: usize,
}

/// How each pattern in an envelope test is turned into a relative
/// K-function.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnvelopeConfig {
    pub sampling: SamplingConfig<f64>,
    pub fit: FitOptions,
    pub policy: NonpositivePolicy,
}

fn relative_k_of(
    pattern: &FiberPattern,
    cfg: &EnvelopeConfig,
    sampling_seed: u64,
    grid: &KGrid<f64>,
) -> Result<(Vec<Vec<f64>>, DensityModel<f64>)> {
    let sampling = SamplingConfig {
        seed: sampling_seed,
        ..cfg.sampling
    };
    let samples = discretize_all(&pattern.fibers, &sampling, &pattern.convention)?;
    let model = fit_model(&samples, &pattern.window, &pattern.convention, &cfg.fit)?;
    let est = estimate_k(&samples, &model, &pattern.window, grid, cfg.policy)?;
    Ok((relative_k(&est)?, model))
}

/// Pointwise envelope of `n_sim` null resamples. Each resample gets its
/// own seed derived from `seed` and its index; the density is refitted on
/// every resample with the same procedure as on the data.
pub fn envelope(
    pattern: &FiberPattern,
    cfg: &EnvelopeConfig,
    grid: &KGrid<f64>,
    n_sim: usize,
    seed: u64,
) -> Result<Envelope> {
    if n_sim == 0 {
        return Err(Error::invalid("n_sim must be at least 1"));
    }
    grid.validate(&pattern.window, &pattern.convention)?;
    let (data, model) = relative_k_of(pattern, cfg, derive_seed(seed, 0), grid)?;
    let mean_len = pattern
        .mean_length()
        .ok_or_else(|| Error::EmptyData("pattern has no fibers".into()))?;
    let sims: Vec<Vec<Vec<f64>>> = (0..n_sim)
        .into_par_iter()
        .map(|i| {
            let s = derive_seed(seed, i as u64 + 1);
            let resampled = resample_null(pattern, &model.trend, mean_len, s)?;
            relative_k_of(&resampled, cfg, derive_seed(s, 0), grid).map(|(k, _)| k)
        })
        .collect::<Result<_>>()?;
    let mut lo = sims[0].clone();
    let mut hi = sims[0].clone();
    for sim in &sims[1..] {
        for (i, row) in sim.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                lo[i][j] = lo[i][j].min(*v);
                hi[i][j] = hi[i][j].max(*v);
            }
        }
    }
    Ok(Envelope {
        grid: grid.clone(),
        lo,
        hi,
        data,
        n_sim,
    })
}
