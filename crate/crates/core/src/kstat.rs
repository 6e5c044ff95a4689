//! Density-reweighted K-function estimator for fiber sample points.
//!
//! For a grid of spatial radii `r1` and angular radii `r2` the estimator is
//!
//! ```text
//! K̂(r1, r2) = 1/|W| Σ_{p ≠ q, fiber(p) ≠ fiber(q)} w_p w_q e(x_p, x_q) / (ρ(x_p, s_p) ρ(x_q, s_q))
//! ```
//!
//! over ordered pairs inside the window with `‖x_p − x_q‖ ≤ r1` and tangent
//! distance at most `r2`, where `e` is the translation edge correction.
//! Pairs are found with a uniform cell grid, binned once on the `(r1, r2)`
//! grid and accumulated into all grid values with a 2D prefix sum.

use rayon::prelude::*;

use crate::density::DensityModel;
use crate::error::{Error, Result};
use crate::fiber::{SamplePoint, SamplingConfig};
use crate::geometry::{clamped_acos, k0, Dim, OrientationConvention, Point, Window};
use crate::scalar::Scalar;

/// Densities at or below this value trigger the [`NonpositivePolicy`].
pub const DENSITY_FLOOR: f64 = 1e-12;

/// Cells handled by one parallel task; fixed so that results do not depend
/// on the thread count.
const CELLS_PER_TASK: usize = 32;

/// Evaluation grid of spatial and angular radii.
#[derive(Clone, Debug, PartialEq)]
pub struct KGrid<T> {
    r1: Vec<T>,
    r2: Vec<T>,
}

fn check_increasing<T: Scalar>(v: &[T], name: &str) -> Result<()> {
    if v.is_empty() {
        return Err(Error::InvalidGrid(format!("{name} values are empty")));
    }
    if v.iter().any(|x| !x.is_finite() || *x < T::zero()) {
        return Err(Error::InvalidGrid(format!(
            "{name} values must be finite and >= 0"
        )));
    }
    if v.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidGrid(format!(
            "{name} values must be increasing"
        )));
    }
    Ok(())
}

impl<T: Scalar> KGrid<T> {
    pub fn new(r1: Vec<T>, r2: Vec<T>) -> Result<Self> {
        check_increasing(&r1, "r1")?;
        check_increasing(&r2, "r2")?;
        Ok(KGrid { r1, r2 })
    }

    /// `steps` equally spaced spatial radii in `(0, r1_max]`.
    pub fn uniform(r1_max: T, steps: usize, r2: Vec<T>) -> Result<Self> {
        if steps == 0 {
            return Err(Error::InvalidGrid("need at least one r1 step".into()));
        }
        let r1 = (1..=steps)
            .map(|i| r1_max * T::of(i as f64) / T::of(steps as f64))
            .collect();
        Self::new(r1, r2)
    }

    pub fn r1(&self) -> &[T] {
        &self.r1
    }

    pub fn r2(&self) -> &[T] {
        &self.r2
    }

    pub fn r1_max(&self) -> T {
        *self.r1.last().expect("nonempty")
    }

    pub fn r2_max(&self) -> T {
        *self.r2.last().expect("nonempty")
    }

    /// The largest spatial radius must stay below the smallest window side
    /// and the angular radii inside the convention's range.
    pub fn validate(&self, w: &Window<T>, conv: &OrientationConvention<T>) -> Result<()> {
        if !(self.r1_max() < w.min_extent()) {
            return Err(Error::InvalidGrid(format!(
                "max r1 {} must be smaller than the smallest window extent {}",
                self.r1_max(),
                w.min_extent()
            )));
        }
        if self.r2_max() > conv.max_angle() {
            return Err(Error::InvalidGrid(format!(
                "max r2 {} exceeds {} for this orientation convention",
                self.r2_max(),
                conv.max_angle()
            )));
        }
        Ok(())
    }
}

/// What to do with sample points whose fitted density is at or below
/// [`DENSITY_FLOOR`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum NonpositivePolicy {
    /// Drop the sample (and hence all its pairs) and count it.
    #[default]
    Exclude,
    Fail,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KDiagnostics<T> {
    /// Ordered pairs that contributed to the largest grid value.
    pub pairs_used: u64,
    pub samples_in_window: usize,
    pub nonpositive_samples: usize,
    pub window: Window<T>,
    pub sampling: Option<SamplingConfig<T>>,
}

/// Estimated K-function over a grid. Matrices are indexed `[r1][r2]`.
#[derive(Clone, Debug, PartialEq)]
pub struct KEstimate<T> {
    pub grid: KGrid<T>,
    pub k_hat: Vec<Vec<T>>,
    pub k0: Vec<Vec<T>>,
    /// `None` when the grid contains a zero radius.
    pub k_rel: Option<Vec<Vec<T>>>,
    pub diagnostics: KDiagnostics<T>,
}

impl<T: Scalar> KEstimate<T> {
    pub fn with_sampling(mut self, cfg: SamplingConfig<T>) -> Self {
        self.diagnostics.sampling = Some(cfg);
        self
    }
}

/// Elementwise `K̂ / K₀`.
pub fn relative_k<T: Scalar>(est: &KEstimate<T>) -> Result<Vec<Vec<T>>> {
    if est.k0.iter().flatten().any(|v| !(*v > T::zero())) {
        return Err(Error::DivisionDomain(
            "K0 vanishes on the grid (r1 = 0 or r2 = 0)".into(),
        ));
    }
    Ok(est
        .k_hat
        .iter()
        .zip(&est.k0)
        .map(|(h, z)| h.iter().zip(z).map(|(a, b)| *a / *b).collect())
        .collect())
}

/// Uniform cell grid over the bounding box of a point set, stored in
/// compressed rows: the members of cell `c` are
/// `order[start[c]..start[c + 1]]`.
#[derive(Clone, Debug)]
pub struct CellIndex<T> {
    dim: Dim,
    lo: [T; 3],
    inv_size: [T; 3],
    counts: [usize; 3],
    start: Vec<usize>,
    order: Vec<usize>,
}

impl<T: Scalar> CellIndex<T> {
    pub fn num_cells(&self) -> usize {
        self.start.len() - 1
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts[..self.dim.n()]
    }

    pub fn members(&self, cell: usize) -> &[usize] {
        &self.order[self.start[cell]..self.start[cell + 1]]
    }

    fn coord_of(&self, p: &Point<T>) -> [usize; 3] {
        let mut c = [0usize; 3];
        let raw = p.raw();
        for k in 0..self.dim.n() {
            let v = ((raw[k] - self.lo[k]) * self.inv_size[k])
                .floor()
                .to_usize()
                .unwrap_or(0);
            c[k] = v.min(self.counts[k] - 1);
        }
        c
    }

    fn linear(&self, c: [usize; 3]) -> usize {
        c[0] + self.counts[0] * (c[1] + self.counts[1] * c[2])
    }

    fn unlinear(&self, mut i: usize) -> [usize; 3] {
        let x = i % self.counts[0];
        i /= self.counts[0];
        let y = i % self.counts[1];
        [x, y, i / self.counts[1]]
    }

    /// Cells in the 3^d block around `cell` whose linear index is at least
    /// `cell`, in increasing order. Visiting each cell together with these
    /// neighbours enumerates every unordered pair of nearby cells once.
    pub fn forward_neighbors(&self, cell: usize) -> Vec<usize> {
        let c = self.unlinear(cell);
        let mut out = Vec::with_capacity(14);
        let range = |k: usize| -> std::ops::RangeInclusive<usize> {
            if k >= self.dim.n() {
                return 0..=0;
            }
            c[k].saturating_sub(1)..=(c[k] + 1).min(self.counts[k] - 1)
        };
        for z in range(2) {
            for y in range(1) {
                for x in range(0) {
                    let l = self.linear([x, y, z]);
                    if l >= cell {
                        out.push(l);
                    }
                }
            }
        }
        out
    }
}

/// Buckets points into cells of side at least `cell_size`, so every pair
/// closer than `cell_size` lies in the same or adjacent cells. The number of
/// cells is capped relative to the number of points.
pub fn build_spatial_index<T: Scalar>(points: &[Point<T>], cell_size: T) -> Result<CellIndex<T>> {
    if points.is_empty() {
        return Err(Error::EmptyData("cannot index an empty point set".into()));
    }
    if !(cell_size > T::zero()) {
        return Err(Error::invalid("cell size must be positive"));
    }
    let dim = points[0].dim();
    let n = dim.n();
    let mut lo = [T::zero(); 3];
    let mut hi = [T::zero(); 3];
    for k in 0..n {
        lo[k] = points
            .iter()
            .map(|p| p.raw()[k])
            .fold(T::infinity(), T::min);
        hi[k] = points
            .iter()
            .map(|p| p.raw()[k])
            .fold(T::neg_infinity(), T::max);
    }
    let mut counts = [1usize; 3];
    for k in 0..n {
        let cells = ((hi[k] - lo[k]) / cell_size)
            .floor()
            .to_usize()
            .unwrap_or(1);
        counts[k] = cells.clamp(1, 1 << 12);
    }
    let cap = (4 * points.len()).max(64);
    while counts.iter().product::<usize>() > cap {
        let k = (0..n).max_by_key(|k| counts[*k]).expect("dim >= 2");
        counts[k] = counts[k].div_ceil(2);
    }
    let mut inv_size = [T::zero(); 3];
    for k in 0..n {
        let size = (hi[k] - lo[k]) / T::of(counts[k] as f64);
        inv_size[k] = if size > T::zero() {
            size.recip()
        } else {
            T::zero()
        };
    }
    let mut index = CellIndex {
        dim,
        lo,
        inv_size,
        counts,
        start: Vec::new(),
        order: Vec::new(),
    };
    let total = counts.iter().product::<usize>();
    let cell_of: Vec<usize> = points
        .iter()
        .map(|p| index.linear(index.coord_of(p)))
        .collect();
    let mut start = vec![0usize; total + 1];
    for c in &cell_of {
        start[c + 1] += 1;
    }
    for i in 0..total {
        start[i + 1] += start[i];
    }
    let mut fill = start.clone();
    let mut order = vec![0usize; points.len()];
    for (i, c) in cell_of.iter().enumerate() {
        order[fill[*c]] = i;
        fill[*c] += 1;
    }
    index.start = start;
    index.order = order;
    Ok(index)
}

/// Per-sample data used in the pair loop.
struct Prepared<T> {
    pos: Vec<[T; 3]>,
    tan: Vec<[T; 3]>,
    fiber: Vec<u64>,
    /// weight / ρ
    scale: Vec<T>,
    points: Vec<Point<T>>,
}

fn prepare<T: Scalar>(
    samples: &[SamplePoint<T>],
    model: &DensityModel<T>,
    w: &Window<T>,
    policy: NonpositivePolicy,
) -> Result<(Prepared<T>, usize, usize)> {
    let floor = T::of(DENSITY_FLOOR);
    let mut prep = Prepared {
        pos: Vec::new(),
        tan: Vec::new(),
        fiber: Vec::new(),
        scale: Vec::new(),
        points: Vec::new(),
    };
    let mut inside = 0;
    let mut nonpositive = 0;
    for s in samples {
        if s.location.dim() != w.dim() || s.tangent.dim() != w.dim() {
            return Err(Error::DimensionMismatch {
                expected: w.dim().n(),
                found: s.location.dim().n(),
            });
        }
        if !w.contains(&s.location) {
            continue;
        }
        inside += 1;
        let rho = model.rho(&s.location, &s.tangent);
        if !(rho > floor) {
            match policy {
                NonpositivePolicy::Exclude => {
                    nonpositive += 1;
                    continue;
                }
                NonpositivePolicy::Fail => {
                    return Err(Error::NonpositiveDensity {
                        fiber_id: s.fiber_id,
                        value: rho.as_f64(),
                    })
                }
            }
        }
        prep.pos.push(s.location.raw());
        prep.tan.push(s.tangent.vector().raw());
        prep.fiber.push(s.fiber_id);
        prep.scale.push(s.weight / rho);
        prep.points.push(s.location);
    }
    Ok((prep, inside, nonpositive))
}

/// Estimates `K̂` on the whole grid. The result does not depend on the order
/// of the samples beyond floating-point summation order, nor on the thread
/// count.
pub fn estimate_k<T: Scalar>(
    samples: &[SamplePoint<T>],
    model: &DensityModel<T>,
    w: &Window<T>,
    grid: &KGrid<T>,
    policy: NonpositivePolicy,
) -> Result<KEstimate<T>> {
    let conv = model.conv;
    if conv.dim() != w.dim() {
        return Err(Error::DimensionMismatch {
            expected: w.dim().n(),
            found: conv.dim().n(),
        });
    }
    grid.validate(w, &conv)?;
    let (prep, inside, nonpositive) = prepare(samples, model, w, policy)?;

    let n1 = grid.r1.len();
    let n2 = grid.r2.len();
    let (hist, pairs) = if prep.points.len() < 2 {
        (vec![T::zero(); n1 * n2], 0u64)
    } else {
        pair_histogram(&prep, w, grid, &conv)?
    };

    // prefix sums over both axes turn bin masses into cumulative values
    let vol = w.volume();
    let mut k_hat = vec![vec![T::zero(); n2]; n1];
    for i in 0..n1 {
        let mut row = T::zero();
        for j in 0..n2 {
            row += hist[i * n2 + j];
            let above = if i > 0 { k_hat[i - 1][j] } else { T::zero() };
            k_hat[i][j] = above + row;
        }
    }
    for row in k_hat.iter_mut() {
        for v in row.iter_mut() {
            *v /= vol;
        }
    }
    let dim = w.dim();
    let k0m = grid
        .r1
        .iter()
        .map(|r1| {
            grid.r2
                .iter()
                .map(|r2| k0(*r1, *r2, dim, &conv))
                .collect::<Result<Vec<T>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let mut est = KEstimate {
        grid: grid.clone(),
        k_hat,
        k0: k0m,
        k_rel: None,
        diagnostics: KDiagnostics {
            pairs_used: pairs,
            samples_in_window: inside,
            nonpositive_samples: nonpositive,
            window: *w,
            sampling: None,
        },
    };
    est.k_rel = relative_k(&est).ok();
    Ok(est)
}

fn pair_histogram<T: Scalar>(
    prep: &Prepared<T>,
    w: &Window<T>,
    grid: &KGrid<T>,
    conv: &OrientationConvention<T>,
) -> Result<(Vec<T>, u64)> {
    let r1_max = grid.r1_max();
    let r1_max_sq = r1_max * r1_max;
    let r2_max = grid.r2_max();
    let cell = if r1_max > T::zero() { r1_max } else { T::one() };
    let index = build_spatial_index(&prep.points, cell)?;
    let n1 = grid.r1.len();
    let n2 = grid.r2.len();
    let ext = {
        let mut e = [T::one(); 3];
        e[..w.dim().n()].copy_from_slice(w.extents());
        e
    };
    let oriented = conv.oriented;
    let two = T::of(2.0);

    let pair = |i: usize, j: usize, hist: &mut [T]| -> bool {
        if prep.fiber[i] == prep.fiber[j] {
            return false;
        }
        let (a, b) = (&prep.pos[i], &prep.pos[j]);
        let h = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
        let d2 = h[0] * h[0] + h[1] * h[1] + h[2] * h[2];
        if d2 > r1_max_sq {
            return false;
        }
        let (s, t) = (&prep.tan[i], &prep.tan[j]);
        let c = s[0] * t[0] + s[1] * t[1] + s[2] * t[2];
        let ang = clamped_acos(if oriented { c } else { c.abs() });
        if ang > r2_max {
            return false;
        }
        let dist = d2.sqrt();
        if dist > r1_max {
            return false;
        }
        let e = (ext[0] / (ext[0] - h[0].abs()))
            * (ext[1] / (ext[1] - h[1].abs()))
            * (ext[2] / (ext[2] - h[2].abs()));
        let bi = grid.r1.partition_point(|r| *r < dist);
        let bj = grid.r2.partition_point(|r| *r < ang);
        hist[bi * n2 + bj] += two * prep.scale[i] * prep.scale[j] * e;
        true
    };

    let tasks = index.num_cells().div_ceil(CELLS_PER_TASK);
    let partial: Vec<(Vec<T>, u64)> = (0..tasks)
        .into_par_iter()
        .map(|task| {
            let mut hist = vec![T::zero(); n1 * n2];
            let mut pairs = 0u64;
            let first = task * CELLS_PER_TASK;
            let last = (first + CELLS_PER_TASK).min(index.num_cells());
            for cell in first..last {
                let own = index.members(cell);
                if own.is_empty() {
                    continue;
                }
                for other in index.forward_neighbors(cell) {
                    if other == cell {
                        for (k, &i) in own.iter().enumerate() {
                            for &j in &own[k + 1..] {
                                pairs += 2 * pair(i, j, &mut hist) as u64;
                            }
                        }
                    } else {
                        for &i in own {
                            for &j in index.members(other) {
                                pairs += 2 * pair(i, j, &mut hist) as u64;
                            }
                        }
                    }
                }
            }
            (hist, pairs)
        })
        .collect();

    let mut hist = vec![T::zero(); n1 * n2];
    let mut pairs = 0u64;
    for (h, p) in partial {
        for (acc, v) in hist.iter_mut().zip(h) {
            *acc += v;
        }
        pairs += p;
    }
    Ok((hist, pairs))
}
