//! Parametric first-moment density `ρ(z, s) = η(s) (β₀ + βᵀz)`.
//!
//! The spatial trend is linear and fitted from the estimating equation
//! `R β = L̂`, where `R` is the moment matrix of the window and `L̂` the
//! weighted first moments of the sample points. The directional factor `η`
//! is either uniform or a product of histograms; densities are with respect
//! to the surface measure normalized to total mass one.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fiber::SamplePoint;
use crate::geometry::{Dim, Direction, OrientationConvention, Point, Window};
use crate::scalar::Scalar;

/// Linear spatial trend `β₀ + βᵀz`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearTrend<T> {
    beta: Vec<T>,
}

impl<T: Scalar> LinearTrend<T> {
    /// `beta` holds the intercept followed by one slope per coordinate.
    pub fn new(beta: Vec<T>) -> Result<Self> {
        Dim::try_from(beta.len().saturating_sub(1))?;
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::invalid("trend coefficients must be finite"));
        }
        Ok(LinearTrend { beta })
    }

    pub fn constant(dim: Dim, value: T) -> Self {
        let mut beta = vec![T::zero(); dim.n() + 1];
        beta[0] = value;
        LinearTrend { beta }
    }

    pub fn dim(&self) -> Dim {
        Dim::try_from(self.beta.len() - 1).expect("validated on construction")
    }

    pub fn beta(&self) -> &[T] {
        &self.beta
    }

    #[inline]
    pub fn eval(&self, z: &Point<T>) -> T {
        self.beta[1..]
            .iter()
            .zip(z.as_slice())
            .fold(self.beta[0], |acc, (b, x)| acc + *b * *x)
    }

    pub fn scaled(&self, c: T) -> Self {
        LinearTrend {
            beta: self.beta.iter().map(|b| *b * c).collect(),
        }
    }

    /// Minimum and maximum over the box `[lo_i, hi_i]`, attained at corners.
    pub fn range_over_box(&self, lo: &[T], hi: &[T]) -> (T, T) {
        let mut min = self.beta[0];
        let mut max = self.beta[0];
        for ((b, l), h) in self.beta[1..].iter().zip(lo).zip(hi) {
            let (a, c) = (*b * *l, *b * *h);
            min += a.min(c);
            max += a.max(c);
        }
        (min, max)
    }

    /// Integral of the trend over the box `[lo_i, hi_i]`.
    pub fn integral_over_box(&self, lo: &[T], hi: &[T]) -> T {
        let vol = lo.iter().zip(hi).fold(T::one(), |v, (l, h)| v * (*h - *l));
        let mid: Vec<T> = lo
            .iter()
            .zip(hi)
            .map(|(l, h)| (*l + *h) / T::of(2.0))
            .collect();
        vol * self.eval(&Point::new(&mid).expect("dim checked"))
    }
}

/// Directional density `η` with respect to the normalized surface measure.
#[derive(Clone, Debug, PartialEq)]
pub enum DirectionalDensity<T> {
    Uniform,
    /// Histogram of the planar angle measured from the pole.
    Histogram2D {
        edges: Vec<T>,
        masses: Vec<T>,
    },
    /// Product of histograms of the cylindrical height and azimuth, see
    /// [`cylindrical_coordinates`].
    HistogramCyl3D {
        height_edges: Vec<T>,
        height_masses: Vec<T>,
        angle_edges: Vec<T>,
        angle_masses: Vec<T>,
    },
}

/// Range of the angular coordinate: `[-π/2, π/2]` for lines, `[-π, π]` for
/// oriented tangents.
pub fn angle_range<T: Scalar>(conv: &OrientationConvention<T>) -> (T, T) {
    if conv.oriented {
        (-T::PI(), T::PI())
    } else {
        (-T::FRAC_PI_2(), T::FRAC_PI_2())
    }
}

/// Signed angle of a planar tangent from the pole.
pub fn planar_angle<T: Scalar>(s: &Direction<T>, conv: &OrientationConvention<T>) -> T {
    let p = conv.pole.as_slice();
    let t = s.as_slice();
    let cross = p[0] * t[1] - p[1] * t[0];
    let dot = p[0] * t[0] + p[1] * t[1];
    atan_ratio(cross, dot, conv.oriented)
}

/// `arctan(num/den)` with `arctan(0/0) = 0` and `arctan(±∞) = ±π/2`; the
/// oriented case uses the full-circle `atan2`.
fn atan_ratio<T: Scalar>(num: T, den: T, oriented: bool) -> T {
    if oriented {
        if num == T::zero() && den == T::zero() {
            return T::zero();
        }
        return num.atan2(den);
    }
    if den == T::zero() {
        if num == T::zero() {
            T::zero()
        } else {
            T::FRAC_PI_2().copysign(num)
        }
    } else {
        (num / den).atan()
    }
}

/// Orthonormal frame `(height axis, pole, third axis)` for cylindrical
/// coordinates. The height axis is the coordinate axis least aligned with
/// the pole, orthogonalized against it; for pole `(0,1,0)` it is the x-axis
/// and the third axis is z.
fn cylindrical_frame<T: Scalar>(pole: &Direction<T>) -> [[T; 3]; 3] {
    let p = pole.vector().raw();
    let k = (0..3)
        .min_by(|a, b| p[*a].abs().partial_cmp(&p[*b].abs()).expect("finite"))
        .expect("three axes");
    let mut e = [T::zero(); 3];
    e[k] = T::one();
    let proj = p[k];
    for i in 0..3 {
        e[i] -= proj * p[i];
    }
    let n = (e[0] * e[0] + e[1] * e[1] + e[2] * e[2]).sqrt();
    for v in e.iter_mut() {
        *v /= n;
    }
    let q = [
        e[1] * p[2] - e[2] * p[1],
        e[2] * p[0] - e[0] * p[2],
        e[0] * p[1] - e[1] * p[0],
    ];
    [e, p, q]
}

/// Cylindrical coordinates `(h, φ)` of a spatial tangent: `h` is the
/// component along the height axis and `φ = arctan(τ_q / τ_p)` the azimuth
/// around it, measured from the pole. The map has unit Jacobian.
pub fn cylindrical_coordinates<T: Scalar>(
    s: &Direction<T>,
    conv: &OrientationConvention<T>,
) -> (T, T) {
    let [e, p, q] = cylindrical_frame(&conv.pole);
    let t = s.vector().raw();
    let dot = |a: &[T; 3]| a[0] * t[0] + a[1] * t[1] + a[2] * t[2];
    let h = dot(&e).max(-T::one()).min(T::one());
    (h, atan_ratio(dot(&q), dot(&p), conv.oriented))
}

fn bin_of<T: Scalar>(edges: &[T], v: T) -> usize {
    let bins = edges.len() - 1;
    edges[1..].partition_point(|e| *e <= v).min(bins - 1)
}

fn uniform_edges<T: Scalar>(lo: T, hi: T, bins: usize) -> Vec<T> {
    let step = (hi - lo) / T::of(bins as f64);
    (0..=bins)
        .map(|i| {
            if i == bins {
                hi
            } else {
                lo + step * T::of(i as f64)
            }
        })
        .collect()
}

fn check_histogram<T: Scalar>(edges: &[T], masses: &[T], name: &str) -> Result<()> {
    if masses.is_empty() || edges.len() != masses.len() + 1 {
        return Err(Error::invalid(format!(
            "{name}: need len(edges) = len(masses) + 1 >= 2"
        )));
    }
    if edges.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid(format!("{name}: edges must be increasing")));
    }
    if masses.iter().any(|m| !(*m >= T::zero())) {
        return Err(Error::invalid(format!(
            "{name}: masses must be nonnegative"
        )));
    }
    let total: T = masses.iter().copied().sum();
    if (total - T::one()).abs() > T::of(1e-9) {
        return Err(Error::invalid(format!(
            "{name}: masses sum to {total}, expected 1"
        )));
    }
    Ok(())
}

impl<T: Scalar> DirectionalDensity<T> {
    /// Checks structural invariants against the convention.
    pub fn validate(&self, conv: &OrientationConvention<T>) -> Result<()> {
        match self {
            DirectionalDensity::Uniform => Ok(()),
            DirectionalDensity::Histogram2D { edges, masses } => {
                if conv.dim() != Dim::Two {
                    return Err(Error::invalid("angle histogram requires dimension 2"));
                }
                check_histogram(edges, masses, "angle histogram")
            }
            DirectionalDensity::HistogramCyl3D {
                height_edges,
                height_masses,
                angle_edges,
                angle_masses,
            } => {
                if conv.dim() != Dim::Three {
                    return Err(Error::invalid("cylindrical histogram requires dimension 3"));
                }
                check_histogram(height_edges, height_masses, "height histogram")?;
                check_histogram(angle_edges, angle_masses, "azimuth histogram")
            }
        }
    }

    /// `η(s)` for a canonicalized tangent.
    pub fn eval(&self, s: &Direction<T>, conv: &OrientationConvention<T>) -> T {
        let (lo, hi) = angle_range(conv);
        let range = hi - lo;
        match self {
            DirectionalDensity::Uniform => T::one(),
            DirectionalDensity::Histogram2D { edges, masses } => {
                let i = bin_of(edges, planar_angle(s, conv));
                masses[i] * range / (edges[i + 1] - edges[i])
            }
            DirectionalDensity::HistogramCyl3D {
                height_edges,
                height_masses,
                angle_edges,
                angle_masses,
            } => {
                let (h, phi) = cylindrical_coordinates(s, conv);
                let i = bin_of(height_edges, h);
                let j = bin_of(angle_edges, phi);
                let fh = height_masses[i] * T::of(2.0) / (height_edges[i + 1] - height_edges[i]);
                let fa = angle_masses[j] * range / (angle_edges[j + 1] - angle_edges[j]);
                fh * fa
            }
        }
    }
}

/// Bin counts for [`fit_eta_histogram`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HistogramBins {
    pub height: usize,
    pub angle: usize,
}

impl Default for HistogramBins {
    fn default() -> Self {
        HistogramBins {
            height: 10,
            angle: 10,
        }
    }
}

/// Histogram estimate of `η` with bins uniform in the angle (plane) or in
/// the cylindrical height and azimuth (space). With `symmetric_height` the
/// height histogram is averaged with its mirror image.
pub fn fit_eta_histogram<T: Scalar>(
    tangents: &[Direction<T>],
    conv: &OrientationConvention<T>,
    bins: HistogramBins,
    symmetric_height: bool,
) -> Result<DirectionalDensity<T>> {
    if tangents.is_empty() {
        return Err(Error::EmptyData("no tangents to fit a histogram".into()));
    }
    if bins.angle == 0 || (conv.dim() == Dim::Three && bins.height == 0) {
        return Err(Error::invalid("histograms need at least one bin"));
    }
    if tangents.iter().any(|t| t.dim() != conv.dim()) {
        return Err(Error::DimensionMismatch {
            expected: conv.dim().n(),
            found: tangents
                .iter()
                .find(|t| t.dim() != conv.dim())
                .expect("exists")
                .dim()
                .n(),
        });
    }
    let n = T::of(tangents.len() as f64);
    let (lo, hi) = angle_range(conv);
    let angle_edges = uniform_edges(lo, hi, bins.angle);
    match conv.dim() {
        Dim::Two => {
            let mut masses = vec![T::zero(); bins.angle];
            for t in tangents {
                masses[bin_of(&angle_edges, planar_angle(t, conv))] += T::one();
            }
            masses.iter_mut().for_each(|m| *m /= n);
            Ok(DirectionalDensity::Histogram2D {
                edges: angle_edges,
                masses,
            })
        }
        Dim::Three => {
            let height_edges = uniform_edges(-T::one(), T::one(), bins.height);
            let mut hm = vec![T::zero(); bins.height];
            let mut am = vec![T::zero(); bins.angle];
            for t in tangents {
                let (h, phi) = cylindrical_coordinates(t, conv);
                hm[bin_of(&height_edges, h)] += T::one();
                am[bin_of(&angle_edges, phi)] += T::one();
            }
            hm.iter_mut().for_each(|m| *m /= n);
            am.iter_mut().for_each(|m| *m /= n);
            if symmetric_height {
                let mirrored: Vec<T> = hm.iter().rev().copied().collect();
                hm.iter_mut()
                    .zip(mirrored)
                    .for_each(|(m, r)| *m = (*m + r) / T::of(2.0));
            }
            Ok(DirectionalDensity::HistogramCyl3D {
                height_edges,
                height_masses: hm,
                angle_edges,
                angle_masses: am,
            })
        }
    }
}

/// `ρ(z, s) = η(s)(β₀ + βᵀz)` together with the tangent convention.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityModel<T> {
    pub trend: LinearTrend<T>,
    pub eta: DirectionalDensity<T>,
    pub conv: OrientationConvention<T>,
}

impl<T: Scalar> DensityModel<T> {
    pub fn new(
        trend: LinearTrend<T>,
        eta: DirectionalDensity<T>,
        conv: OrientationConvention<T>,
    ) -> Result<Self> {
        if trend.dim() != conv.dim() {
            return Err(Error::DimensionMismatch {
                expected: conv.dim().n(),
                found: trend.dim().n(),
            });
        }
        eta.validate(&conv)?;
        Ok(DensityModel { trend, eta, conv })
    }

    pub fn uniform(trend: LinearTrend<T>, conv: OrientationConvention<T>) -> Result<Self> {
        Self::new(trend, DirectionalDensity::Uniform, conv)
    }

    /// Density value; may be zero or negative where the trend is.
    #[inline]
    pub fn rho(&self, z: &Point<T>, s: &Direction<T>) -> T {
        self.eta.eval(s, &self.conv) * self.trend.eval(z)
    }

    /// Same model with the trend multiplied by `c`.
    pub fn scaled(&self, c: T) -> Self {
        DensityModel {
            trend: self.trend.scaled(c),
            eta: self.eta.clone(),
            conv: self.conv,
        }
    }
}

/// Free-function form of [`DensityModel::rho`].
pub fn rho_eval<T: Scalar>(model: &DensityModel<T>, z: &Point<T>, s: &Direction<T>) -> T {
    model.rho(z, s)
}

/// `R = ∫_W (1, zᵀ)ᵀ (1, zᵀ) dz` in closed form for a box window.
pub fn moment_matrix<T: Scalar>(w: &Window<T>) -> DMatrix<T> {
    let a = w.extents();
    let vol = w.volume();
    let n = a.len() + 1;
    DMatrix::from_fn(n, n, |i, j| match (i, j) {
        (0, 0) => vol,
        (0, k) | (k, 0) => vol * a[k - 1] / T::of(2.0),
        (k, l) if k == l => vol * a[k - 1] * a[k - 1] / T::of(3.0),
        // ordered so that the matrix is exactly symmetric
        (k, l) => vol * a[k.min(l) - 1] * a[k.max(l) - 1] / T::of(4.0),
    })
}

/// Solves `R β = L̂` with `L̂ = Σ weight · (1, xᵀ)ᵀ` over the samples inside
/// the window.
pub fn estimate_beta<T: Scalar>(
    samples: &[SamplePoint<T>],
    w: &Window<T>,
) -> Result<LinearTrend<T>> {
    let n = w.dim().n() + 1;
    let mut l = vec![0.0f64; n];
    let mut inside = 0usize;
    for s in samples.iter().filter(|s| w.contains(&s.location)) {
        let wt = s.weight.as_f64();
        l[0] += wt;
        for (k, x) in s.location.as_slice().iter().enumerate() {
            l[k + 1] += wt * x.as_f64();
        }
        inside += 1;
    }
    if inside == 0 {
        return Err(Error::EmptyData(
            "no sample points inside the window".into(),
        ));
    }
    let r = moment_matrix(w).map(|v| v.as_f64());
    let chol = r
        .cholesky()
        .ok_or_else(|| Error::invalid("moment matrix is not positive definite"))?;
    let beta = chol.solve(&DVector::from_vec(l));
    LinearTrend::new(beta.iter().map(|v| T::of(*v)).collect())
}

/// Constant trend `Σ weight / |W|` over the samples inside the window.
pub fn estimate_constant<T: Scalar>(
    samples: &[SamplePoint<T>],
    w: &Window<T>,
) -> Result<LinearTrend<T>> {
    let inside: Vec<T> = samples
        .iter()
        .filter(|s| w.contains(&s.location))
        .map(|s| s.weight)
        .collect();
    if inside.is_empty() {
        return Err(Error::EmptyData(
            "no sample points inside the window".into(),
        ));
    }
    let total: T = inside.into_iter().sum();
    Ok(LinearTrend::constant(w.dim(), total / w.volume()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrendChoice {
    Linear,
    Constant,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EtaChoice {
    Uniform,
    Histogram {
        bins: HistogramBins,
        symmetric_height: bool,
    },
}

/// How [`fit_model`] estimates the two factors.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FitOptions {
    pub trend: TrendChoice,
    pub eta: EtaChoice,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            trend: TrendChoice::Linear,
            eta: EtaChoice::Uniform,
        }
    }
}

/// Fits trend and directional density from sample points. Only samples
/// inside the window contribute.
pub fn fit_model<T: Scalar>(
    samples: &[SamplePoint<T>],
    w: &Window<T>,
    conv: &OrientationConvention<T>,
    opts: &FitOptions,
) -> Result<DensityModel<T>> {
    let trend = match opts.trend {
        TrendChoice::Linear => estimate_beta(samples, w)?,
        TrendChoice::Constant => estimate_constant(samples, w)?,
    };
    let eta = match opts.eta {
        EtaChoice::Uniform => DirectionalDensity::Uniform,
        EtaChoice::Histogram {
            bins,
            symmetric_height,
        } => {
            let tangents: Vec<Direction<T>> = samples
                .iter()
                .filter(|s| w.contains(&s.location))
                .map(|s| s.tangent)
                .collect();
            fit_eta_histogram(&tangents, conv, bins, symmetric_height)?
        }
    };
    DensityModel::new(trend, eta, *conv)
}
