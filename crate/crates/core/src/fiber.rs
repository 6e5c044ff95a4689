//! Fiber representations, arclength parametrization and discretization into
//! weighted sample points, plus cubic curve fitting for labeled point clouds.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector, Matrix3, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{canonicalize, Dim, Direction, OrientationConvention, Point};
use crate::quadrature::gauss_legendre;
use crate::rng::{derive_seed, stream_rng, Stream};
use crate::scalar::Scalar;

const PANELS: usize = 16;
const PANEL_NODES: usize = 8;

fn panel_rule() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(PANEL_NODES))
}

/// Per-coordinate cubic `p_k(t) = c0 + c1 t + c2 t^2 + c3 t^3` on `t ∈ [-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct CubicCurve<T> {
    coeffs: [[T; 4]; 3],
    dim: Dim,
}

impl<T: Scalar> CubicCurve<T> {
    pub fn new(coeffs: &[[T; 4]]) -> Result<Self> {
        let dim = Dim::try_from(coeffs.len())?;
        let mut c = [[T::zero(); 4]; 3];
        c[..coeffs.len()].copy_from_slice(coeffs);
        Ok(CubicCurve { coeffs: c, dim })
    }

    pub fn dim(&self) -> Dim {
        self.dim
    }

    pub fn coefficients(&self) -> &[[T; 4]] {
        &self.coeffs[..self.dim.n()]
    }

    pub fn eval(&self, t: T) -> Point<T> {
        let mut out = [T::zero(); 3];
        for (o, c) in out.iter_mut().zip(&self.coeffs).take(self.dim.n()) {
            *o = c[0] + t * (c[1] + t * (c[2] + t * c[3]));
        }
        Point::new(&out[..self.dim.n()]).expect("dim is valid")
    }

    pub fn derivative(&self, t: T) -> Point<T> {
        let (two, three) = (T::of(2.0), T::of(3.0));
        let mut out = [T::zero(); 3];
        for (o, c) in out.iter_mut().zip(&self.coeffs).take(self.dim.n()) {
            *o = c[1] + t * (two * c[2] + t * three * c[3]);
        }
        Point::new(&out[..self.dim.n()]).expect("dim is valid")
    }

    fn speed(&self, t: T) -> T {
        self.derivative(t).norm()
    }

    /// `∫_a^b |p'(t)| dt` by one Gauss–Legendre panel.
    fn panel_length(&self, a: T, b: T) -> T {
        let (x, w) = panel_rule();
        let half = (b - a) / T::of(2.0);
        let mid = (a + b) / T::of(2.0);
        x.iter()
            .zip(w)
            .map(|(x, w)| T::of(*w) * self.speed(mid + half * T::of(*x)))
            .sum::<T>()
            * half
    }

    /// Cumulative arclength at the panel boundaries.
    fn arclength_table(&self) -> Vec<T> {
        let h = T::of(2.0 / PANELS as f64);
        let mut acc = Vec::with_capacity(PANELS + 1);
        let mut s = T::zero();
        acc.push(s);
        for k in 0..PANELS {
            let a = -T::one() + h * T::of(k as f64);
            s += self.panel_length(a, a + h);
            acc.push(s);
        }
        acc
    }

    /// Parameter at arclength `s` measured from `t = -1`.
    fn parameter_at(&self, table: &[T], s: T) -> T {
        let h = T::of(2.0 / PANELS as f64);
        let k = table[1..].partition_point(|v| *v < s).min(PANELS - 1);
        let (mut lo, mut hi) = (
            -T::one() + h * T::of(k as f64),
            -T::one() + h * T::of(k as f64 + 1.0),
        );
        let base = lo;
        let target = s - table[k];
        let span = table[k + 1] - table[k];
        let mut t = if span > T::zero() {
            base + h * (target / span).max(T::zero()).min(T::one())
        } else {
            base
        };
        for _ in 0..50 {
            let g = self.panel_length(base, t) - target;
            if g > T::zero() {
                hi = t;
            } else {
                lo = t;
            }
            let d = self.speed(t);
            let mut next = if d > T::zero() {
                t - g / d
            } else {
                (lo + hi) / T::of(2.0)
            };
            if !(next > lo && next < hi) {
                next = (lo + hi) / T::of(2.0);
            }
            if (next - t).abs() <= T::epsilon() * T::of(4.0) {
                return next;
            }
            t = next;
        }
        t
    }

    fn translated(&self, offset: &Point<T>) -> Self {
        let mut c = self.coeffs;
        for (ck, o) in c.iter_mut().zip(offset.as_slice()) {
            ck[0] += *o;
        }
        CubicCurve {
            coeffs: c,
            dim: self.dim,
        }
    }
}

/// Geometric carrier of a fiber.
#[derive(Clone, Debug, PartialEq)]
pub enum FiberGeometry<T> {
    Segment {
        midpoint: Point<T>,
        direction: Direction<T>,
        length: T,
    },
    Polyline {
        vertices: Vec<Point<T>>,
    },
    Cubic(CubicCurve<T>),
}

/// A labeled fiber.
#[derive(Clone, Debug, PartialEq)]
pub struct Fiber<T> {
    pub id: u64,
    pub geometry: FiberGeometry<T>,
}

impl<T: Scalar> Fiber<T> {
    pub fn segment(
        id: u64,
        midpoint: Point<T>,
        direction: Direction<T>,
        length: T,
    ) -> Result<Self> {
        if midpoint.dim() != direction.dim() {
            return Err(Error::DimensionMismatch {
                expected: midpoint.dim().n(),
                found: direction.dim().n(),
            });
        }
        if !(length > T::zero()) || !length.is_finite() {
            return Err(Error::invalid(format!(
                "segment length must be positive, got {length}"
            )));
        }
        Ok(Fiber {
            id,
            geometry: FiberGeometry::Segment {
                midpoint,
                direction,
                length,
            },
        })
    }

    pub fn polyline(id: u64, vertices: Vec<Point<T>>) -> Result<Self> {
        if vertices.len() < 2 {
            return Err(Error::invalid("polyline needs at least two vertices"));
        }
        let dim = vertices[0].dim();
        for w in vertices.windows(2) {
            if w[1].dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim.n(),
                    found: w[1].dim().n(),
                });
            }
            if w[0] == w[1] {
                return Err(Error::invalid(
                    "consecutive polyline vertices must be distinct",
                ));
            }
        }
        Ok(Fiber {
            id,
            geometry: FiberGeometry::Polyline { vertices },
        })
    }

    pub fn cubic(id: u64, curve: CubicCurve<T>) -> Self {
        Fiber {
            id,
            geometry: FiberGeometry::Cubic(curve),
        }
    }

    pub fn dim(&self) -> Dim {
        match &self.geometry {
            FiberGeometry::Segment { midpoint, .. } => midpoint.dim(),
            FiberGeometry::Polyline { vertices } => vertices[0].dim(),
            FiberGeometry::Cubic(c) => c.dim(),
        }
    }

    /// Arclength of the fiber.
    pub fn length(&self) -> T {
        match &self.geometry {
            FiberGeometry::Segment { length, .. } => *length,
            FiberGeometry::Polyline { vertices } => {
                vertices.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
            }
            FiberGeometry::Cubic(c) => *c.arclength_table().last().expect("table is nonempty"),
        }
    }

    /// Copy of the fiber moved by `offset`.
    pub fn translated(&self, offset: &Point<T>) -> Self {
        let geometry = match &self.geometry {
            FiberGeometry::Segment {
                midpoint,
                direction,
                length,
            } => FiberGeometry::Segment {
                midpoint: *midpoint + *offset,
                direction: *direction,
                length: *length,
            },
            FiberGeometry::Polyline { vertices } => FiberGeometry::Polyline {
                vertices: vertices.iter().map(|v| *v + *offset).collect(),
            },
            FiberGeometry::Cubic(c) => FiberGeometry::Cubic(c.translated(offset)),
        };
        Fiber {
            id: self.id,
            geometry,
        }
    }

    /// Arclength parametrization; caches the arclength table of cubic curves.
    pub fn arclength_map(&self) -> ArclengthMap<'_, T> {
        let table = match &self.geometry {
            FiberGeometry::Segment { .. } => Vec::new(),
            FiberGeometry::Polyline { vertices } => {
                let mut acc = Vec::with_capacity(vertices.len());
                let mut s = T::zero();
                acc.push(s);
                for w in vertices.windows(2) {
                    s += (w[1] - w[0]).norm();
                    acc.push(s);
                }
                acc
            }
            FiberGeometry::Cubic(c) => c.arclength_table(),
        };
        ArclengthMap { fiber: self, table }
    }

    /// Point at half the arclength.
    pub fn center(&self) -> Point<T> {
        let map = self.arclength_map();
        map.at(map.length() / T::of(2.0))
            .map(|(p, _)| p)
            .unwrap_or_else(|_| match &self.geometry {
                FiberGeometry::Segment { midpoint, .. } => *midpoint,
                FiberGeometry::Polyline { vertices } => vertices[0],
                FiberGeometry::Cubic(c) => c.eval(T::zero()),
            })
    }

    /// Largest distance from `from` to any point of the fiber. Cubic curves are
    /// probed at 129 parameters, which is ample for the smooth fibers handled
    /// here.
    pub fn reach(&self, from: &Point<T>) -> T {
        match &self.geometry {
            FiberGeometry::Segment {
                midpoint,
                direction,
                length,
            } => {
                let h = *direction.vector() * (*length / T::of(2.0));
                ((*midpoint + h) - *from)
                    .norm()
                    .max(((*midpoint - h) - *from).norm())
            }
            FiberGeometry::Polyline { vertices } => vertices
                .iter()
                .map(|v| (*v - *from).norm())
                .fold(T::zero(), T::max),
            FiberGeometry::Cubic(c) => (0..=128)
                .map(|i| (c.eval(T::of(i as f64 / 64.0 - 1.0)) - *from).norm())
                .fold(T::zero(), T::max),
        }
    }
}

/// Arclength parametrization of one fiber.
pub struct ArclengthMap<'a, T> {
    fiber: &'a Fiber<T>,
    table: Vec<T>,
}

impl<T: Scalar> ArclengthMap<'_, T> {
    pub fn length(&self) -> T {
        match &self.fiber.geometry {
            FiberGeometry::Segment { length, .. } => *length,
            _ => *self.table.last().expect("table is nonempty"),
        }
    }

    /// Location and unit tangent (not canonicalized) at arclength `s`.
    pub fn at(&self, s: T) -> Result<(Point<T>, Direction<T>)> {
        match &self.fiber.geometry {
            FiberGeometry::Segment {
                midpoint,
                direction,
                length,
            } => {
                let offset = s - *length / T::of(2.0);
                Ok((*midpoint + *direction.vector() * offset, *direction))
            }
            FiberGeometry::Polyline { vertices } => {
                // vertex belongs to the following edge; the end point to the last edge
                let edges = vertices.len() - 1;
                let k = self.table[1..].partition_point(|v| *v <= s).min(edges - 1);
                let edge = vertices[k + 1] - vertices[k];
                let len = self.table[k + 1] - self.table[k];
                let tangent = Direction::normalize(edge)?;
                Ok((vertices[k] + edge * ((s - self.table[k]) / len), tangent))
            }
            FiberGeometry::Cubic(c) => {
                let t = c.parameter_at(&self.table, s);
                let d = c.derivative(t);
                let scale = c
                    .coefficients()
                    .iter()
                    .flat_map(|k| k[1..].iter())
                    .fold(T::zero(), |m, v| m.max(v.abs()));
                if !(d.norm() > scale * T::of(1e-12)) {
                    return Err(Error::invalid(format!(
                        "vanishing curve derivative at parameter {t} on fiber {}",
                        self.fiber.id
                    )));
                }
                Ok((c.eval(t), Direction::normalize(d)?))
            }
        }
    }
}

/// A discretized fiber location carrying a Monte Carlo weight.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SamplePoint<T> {
    pub location: Point<T>,
    pub tangent: Direction<T>,
    pub fiber_id: u64,
    pub weight: T,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SamplingMode<T> {
    /// Homogeneous Poisson process in arclength with the given intensity
    /// (points per unit length).
    PoissonOnFiber { intensity: T },
    /// Points at the midpoints of consecutive intervals of length `spacing`.
    Equispaced { spacing: T },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SamplingConfig<T> {
    pub mode: SamplingMode<T>,
    /// Only used in Poisson mode.
    pub seed: u64,
}

impl<T: Scalar> SamplingConfig<T> {
    pub fn poisson(intensity: T, seed: u64) -> Self {
        SamplingConfig {
            mode: SamplingMode::PoissonOnFiber { intensity },
            seed,
        }
    }

    pub fn equispaced(spacing: T) -> Self {
        SamplingConfig {
            mode: SamplingMode::Equispaced { spacing },
            seed: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        let v = match self.mode {
            SamplingMode::PoissonOnFiber { intensity } => intensity,
            SamplingMode::Equispaced { spacing } => spacing,
        };
        if !(v > T::zero()) || !v.is_finite() {
            return Err(Error::invalid(
                "sampling intensity/spacing must be positive",
            ));
        }
        Ok(())
    }
}

/// Discretizes one fiber. Poisson draws use a generator keyed on
/// `(cfg.seed, fiber.id)`, so the result does not depend on which other
/// fibers are discretized alongside.
pub fn discretize<T: Scalar>(
    fiber: &Fiber<T>,
    cfg: &SamplingConfig<T>,
    conv: &OrientationConvention<T>,
) -> Result<Vec<SamplePoint<T>>> {
    cfg.validate()?;
    if fiber.dim() != conv.dim() {
        return Err(Error::DimensionMismatch {
            expected: conv.dim().n(),
            found: fiber.dim().n(),
        });
    }
    let map = fiber.arclength_map();
    let len = map.length();
    if !(len > T::zero()) {
        return Err(Error::invalid(format!(
            "fiber {} has zero length",
            fiber.id
        )));
    }
    let (positions, weight): (Vec<T>, T) = match cfg.mode {
        SamplingMode::PoissonOnFiber { intensity } => {
            let mut rng = stream_rng(derive_seed(cfg.seed, fiber.id), Stream::Discretize);
            let mean = (intensity * len).as_f64();
            let n = if mean > 0.0 {
                Poisson::new(mean)
                    .map_err(|e| Error::invalid(e.to_string()))?
                    .sample(&mut rng) as usize
            } else {
                0
            };
            let mut pos: Vec<T> = (0..n).map(|_| T::of(rng.random::<f64>()) * len).collect();
            pos.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
            (pos, intensity.recip())
        }
        SamplingMode::Equispaced { spacing } => {
            let n = (len / spacing).floor().to_usize().unwrap_or(0);
            let pos = (0..n)
                .map(|k| (T::of(k as f64) + T::of(0.5)) * spacing)
                .collect();
            (pos, spacing)
        }
    };
    positions
        .into_iter()
        .map(|s| {
            let (location, tangent) = map.at(s)?;
            Ok(SamplePoint {
                location,
                tangent: canonicalize(&tangent, conv)?,
                fiber_id: fiber.id,
                weight,
            })
        })
        .collect()
}

/// Discretizes every fiber in parallel; output is in fiber order.
pub fn discretize_all<T: Scalar>(
    fibers: &[Fiber<T>],
    cfg: &SamplingConfig<T>,
    conv: &OrientationConvention<T>,
) -> Result<Vec<SamplePoint<T>>> {
    let parts: Vec<Vec<SamplePoint<T>>> = fibers
        .par_iter()
        .map(|f| discretize(f, cfg, conv))
        .collect::<Result<_>>()?;
    Ok(parts.into_iter().flatten().collect())
}

/// Result of [`fit_cubic_curve`].
#[derive(Clone, Debug)]
pub struct CurveFit<T> {
    pub curve: CubicCurve<T>,
    /// Root mean square Euclidean residual over the input points.
    pub rms: T,
    /// Parameter assigned to each input point.
    pub parameters: Vec<T>,
}

/// Least-squares cubic through a point cloud.
///
/// Points are parametrized by their projection on the first principal axis,
/// rescaled to `[-1, 1]`; the axis is signed so that the last input point
/// does not project below the first. Each coordinate is then fitted
/// independently.
pub fn fit_cubic_curve<T: Scalar>(points: &[Point<T>]) -> Result<CurveFit<T>> {
    if points.len() < 8 {
        return Err(Error::invalid(format!(
            "curve fitting needs at least 8 points, got {}",
            points.len()
        )));
    }
    let dim = points[0].dim();
    if points.iter().any(|p| p.dim() != dim) {
        return Err(Error::invalid("mixed dimensions in point cloud"));
    }
    let n = dim.n();
    let pts: Vec<[f64; 3]> = points.iter().map(|p| p.raw().map(|v| v.as_f64())).collect();
    let count = pts.len() as f64;
    let mut centroid = [0.0; 3];
    for p in &pts {
        for k in 0..3 {
            centroid[k] += p[k] / count;
        }
    }
    let mut cov = Matrix3::<f64>::zeros();
    for p in &pts {
        for i in 0..3 {
            for j in 0..3 {
                cov[(i, j)] += (p[i] - centroid[i]) * (p[j] - centroid[j]);
            }
        }
    }
    let eig = SymmetricEigen::new(cov);
    let top = eig
        .eigenvalues
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .expect("3 eigenvalues");
    let mut axis = [0.0; 3];
    for k in 0..3 {
        axis[k] = eig.eigenvectors[(k, top)];
    }
    let project = |p: &[f64; 3]| -> f64 { (0..3).map(|k| (p[k] - centroid[k]) * axis[k]).sum() };
    let mut proj: Vec<f64> = pts.iter().map(project).collect();
    if proj[proj.len() - 1] < proj[0] {
        proj.iter_mut().for_each(|v| *v = -*v);
    }
    let (lo, hi) = proj
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(*v), hi.max(*v))
        });
    let scale = pts
        .iter()
        .flat_map(|p| p.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    if !(hi - lo > 1e-12 * (1.0 + scale)) {
        return Err(Error::DegenerateCloud(
            "all points project to one parameter".into(),
        ));
    }
    let params: Vec<f64> = proj
        .iter()
        .map(|v| 2.0 * (v - lo) / (hi - lo) - 1.0)
        .collect();
    let design = DMatrix::from_fn(pts.len(), 4, |i, j| params[i].powi(j as i32));
    let svd = design.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let rank = svd
        .singular_values
        .iter()
        .filter(|s| **s > 1e-10 * smax)
        .count();
    if rank < 4 {
        return Err(Error::DegenerateCloud(format!(
            "cubic design has rank {rank} < 4 (too few distinct parameters)"
        )));
    }
    let mut coeffs = vec![[T::zero(); 4]; n];
    let mut sq = 0.0;
    for k in 0..n {
        let rhs = DVector::from_iterator(pts.len(), pts.iter().map(|p| p[k]));
        let sol = svd
            .solve(&rhs, 1e-14 * smax)
            .map_err(|e| Error::DegenerateCloud(e.to_string()))?;
        let resid = &design * &sol - &rhs;
        sq += resid.norm_squared();
        for j in 0..4 {
            coeffs[k][j] = T::of(sol[j]);
        }
    }
    Ok(CurveFit {
        curve: CubicCurve::new(&coeffs)?,
        rms: T::of((sq / count).sqrt()),
        parameters: params.into_iter().map(T::of).collect(),
    })
}
