//! Windows, tangent directions and the direction metrics, together with the
//! closed-form constants of the null model.
//!
//! Points are stored in a fixed three-slot array with an explicit [`Dim`];
//! the unused slot of a planar point is always zero.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Ambient dimension. Only the plane and space are supported.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub enum Dim {
    Two,
    Three,
}

impl Dim {
    #[inline]
    pub fn n(self) -> usize {
        match self {
            Dim::Two => 2,
            Dim::Three => 3,
        }
    }
}

impl TryFrom<usize> for Dim {
    type Error = Error;

    fn try_from(n: usize) -> Result<Self> {
        match n {
            2 => Ok(Dim::Two),
            3 => Ok(Dim::Three),
            _ => Err(Error::invalid(format!("dimension must be 2 or 3, got {n}"))),
        }
    }
}

impl From<Dim> for usize {
    fn from(d: Dim) -> usize {
        d.n()
    }
}

/// A point or displacement in the plane or in space.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point<T> {
    coords: [T; 3],
    dim: Dim,
}

impl<T: Scalar> Point<T> {
    pub fn new(coords: &[T]) -> Result<Self> {
        let dim = Dim::try_from(coords.len())?;
        let mut c = [T::zero(); 3];
        c[..coords.len()].copy_from_slice(coords);
        Ok(Point { coords: c, dim })
    }

    pub fn xy(x: T, y: T) -> Self {
        Point {
            coords: [x, y, T::zero()],
            dim: Dim::Two,
        }
    }

    pub fn xyz(x: T, y: T, z: T) -> Self {
        Point {
            coords: [x, y, z],
            dim: Dim::Three,
        }
    }

    pub fn zero(dim: Dim) -> Self {
        Point {
            coords: [T::zero(); 3],
            dim,
        }
    }

    /// The `i`-th standard basis vector.
    pub fn axis(dim: Dim, i: usize) -> Self {
        let mut p = Self::zero(dim);
        p.coords[i] = T::one();
        p
    }

    #[inline]
    pub fn dim(&self) -> Dim {
        self.dim
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.coords[..self.dim.n()]
    }

    /// All three slots; the third is zero in the plane.
    #[inline]
    pub fn raw(&self) -> [T; 3] {
        self.coords
    }

    #[inline]
    pub fn dot(&self, other: &Self) -> T {
        self.coords[0] * other.coords[0]
            + self.coords[1] * other.coords[1]
            + self.coords[2] * other.coords[2]
    }

    #[inline]
    pub fn norm_squared(&self) -> T {
        self.dot(self)
    }

    #[inline]
    pub fn norm(&self) -> T {
        self.norm_squared().sqrt()
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        let mut c = self.coords;
        for v in c.iter_mut().take(self.dim.n()) {
            *v = f(*v);
        }
        Point {
            coords: c,
            dim: self.dim,
        }
    }

    pub fn cast<U: Scalar>(&self) -> Point<U> {
        Point {
            coords: self.coords.map(|v| U::of(v.as_f64())),
            dim: self.dim,
        }
    }
}

impl<T: Scalar> std::ops::Index<usize> for Point<T> {
    type Output = T;

    fn index(&self, i: usize) -> &T {
        &self.as_slice()[i]
    }
}

impl<T: Scalar> Add for Point<T> {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        debug_assert_eq!(self.dim, o.dim);
        let mut c = self.coords;
        for i in 0..3 {
            c[i] += o.coords[i];
        }
        Point {
            coords: c,
            dim: self.dim,
        }
    }
}

impl<T: Scalar> Sub for Point<T> {
    type Output = Self;

    fn sub(self, o: Self) -> Self {
        debug_assert_eq!(self.dim, o.dim);
        let mut c = self.coords;
        for i in 0..3 {
            c[i] -= o.coords[i];
        }
        Point {
            coords: c,
            dim: self.dim,
        }
    }
}

impl<T: Scalar> Mul<T> for Point<T> {
    type Output = Self;

    fn mul(self, s: T) -> Self {
        Point {
            coords: self.coords.map(|v| v * s),
            dim: self.dim,
        }
    }
}

impl<T: Scalar> Neg for Point<T> {
    type Output = Self;

    fn neg(self) -> Self {
        Point {
            coords: self.coords.map(|v| -v),
            dim: self.dim,
        }
    }
}

/// Unit vector on the circle or sphere.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Direction<T>(Point<T>);

impl<T: Scalar> Direction<T> {
    /// Builds a direction from raw coordinates. Vectors whose norm is within
    /// `1e-6` of one are renormalized, anything further off is rejected.
    pub fn new(coords: &[T]) -> Result<Self> {
        Self::from_vector(Point::new(coords)?)
    }

    pub fn from_vector(v: Point<T>) -> Result<Self> {
        let norm = v.norm();
        if !norm.is_finite() || (norm - T::one()).abs() > T::of(1e-6) {
            return Err(Error::invalid(format!(
                "direction must have unit norm, got norm {norm}"
            )));
        }
        if (norm - T::one()).abs() <= T::unit_tolerance() {
            Ok(Direction(v))
        } else {
            Ok(Direction(v * norm.recip()))
        }
    }

    /// Normalizes an arbitrary nonzero vector.
    pub fn normalize(v: Point<T>) -> Result<Self> {
        let norm = v.norm();
        if !(norm > T::zero()) || !norm.is_finite() {
            return Err(Error::invalid(
                "cannot normalize a zero or non-finite vector",
            ));
        }
        Ok(Direction(v * norm.recip()))
    }

    /// Unit vector at angle `theta` from the x-axis.
    pub fn from_angle(theta: T) -> Self {
        Direction(Point::xy(theta.cos(), theta.sin()))
    }

    pub fn axis(dim: Dim, i: usize) -> Self {
        Direction(Point::axis(dim, i))
    }

    #[inline]
    pub fn dim(&self) -> Dim {
        self.0.dim()
    }

    #[inline]
    pub fn vector(&self) -> &Point<T> {
        &self.0
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        self.0.as_slice()
    }

    #[inline]
    pub fn dot(&self, other: &Self) -> T {
        self.0.dot(&other.0)
    }

    pub fn cast<U: Scalar>(&self) -> Direction<U> {
        Direction(self.0.cast())
    }
}

impl<T: Scalar> Neg for Direction<T> {
    type Output = Self;

    fn neg(self) -> Self {
        Direction(-self.0)
    }
}

fn check_same_dim(a: Dim, b: Dim) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch {
            expected: a.n(),
            found: b.n(),
        });
    }
    Ok(())
}

/// How tangents are identified: as points of the full sphere, or as lines
/// represented on the hemisphere around `pole`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrientationConvention<T> {
    pub oriented: bool,
    pub pole: Direction<T>,
}

impl<T: Scalar> OrientationConvention<T> {
    pub fn oriented(pole: Direction<T>) -> Self {
        OrientationConvention {
            oriented: true,
            pole,
        }
    }

    pub fn unoriented(pole: Direction<T>) -> Self {
        OrientationConvention {
            oriented: false,
            pole,
        }
    }

    /// Unoriented convention with the pole on the second coordinate axis.
    pub fn unoriented_default(dim: Dim) -> Self {
        Self::unoriented(Direction::axis(dim, 1))
    }

    pub fn oriented_default(dim: Dim) -> Self {
        Self::oriented(Direction::axis(dim, 1))
    }

    #[inline]
    pub fn dim(&self) -> Dim {
        self.pole.dim()
    }

    /// Largest meaningful angular distance under this convention.
    pub fn max_angle(&self) -> T {
        if self.oriented {
            T::PI()
        } else {
            T::FRAC_PI_2()
        }
    }

    /// Metric on tangents: [`angle_distance`] if oriented, otherwise
    /// [`line_distance`].
    #[inline]
    pub fn distance(&self, a: &Direction<T>, b: &Direction<T>) -> Result<T> {
        if self.oriented {
            angle_distance(a, b)
        } else {
            line_distance(a, b)
        }
    }

    pub fn cast<U: Scalar>(&self) -> OrientationConvention<U> {
        OrientationConvention {
            oriented: self.oriented,
            pole: self.pole.cast(),
        }
    }
}

/// Angle between two unit vectors, in `[0, π]`.
pub fn angle_distance<T: Scalar>(t1: &Direction<T>, t2: &Direction<T>) -> Result<T> {
    check_same_dim(t1.dim(), t2.dim())?;
    Ok(clamped_acos(t1.dot(t2)))
}

/// Angle between the lines spanned by two unit vectors, in `[0, π/2]`.
pub fn line_distance<T: Scalar>(t1: &Direction<T>, t2: &Direction<T>) -> Result<T> {
    check_same_dim(t1.dim(), t2.dim())?;
    // min(acos(c), acos(-c)) = acos(|c|); computed this way it is exactly
    // invariant under sign flips of either argument.
    Ok(clamped_acos(t1.dot(t2).abs()))
}

#[inline]
pub(crate) fn clamped_acos<T: Scalar>(c: T) -> T {
    c.max(-T::one()).min(T::one()).acos()
}

/// Representative of `t` under the convention. Unoriented tangents are
/// flipped onto the hemisphere `dot(., pole) >= 0`; on the boundary the
/// representative whose first nonzero coordinate is positive wins.
pub fn canonicalize<T: Scalar>(
    t: &Direction<T>,
    conv: &OrientationConvention<T>,
) -> Result<Direction<T>> {
    check_same_dim(t.dim(), conv.dim())?;
    if conv.oriented {
        return Ok(*t);
    }
    let d = t.dot(&conv.pole);
    if d > T::zero() {
        return Ok(*t);
    }
    if d < T::zero() {
        return Ok(-*t);
    }
    let first = t
        .as_slice()
        .iter()
        .copied()
        .find(|v| *v != T::zero())
        .unwrap_or_else(T::one);
    Ok(if first > T::zero() { *t } else { -*t })
}

/// Normalized surface measure of the set of tangents within angular distance
/// `r2` of a fixed tangent.
pub fn cap_fraction<T: Scalar>(r2: T, dim: Dim, conv: &OrientationConvention<T>) -> Result<T> {
    let max = conv.max_angle();
    if !(r2 >= T::zero() && r2 <= max) {
        return Err(Error::invalid(format!(
            "angular radius {r2} outside [0, {max}]"
        )));
    }
    let oriented = match dim {
        Dim::Two => r2 / T::PI(),
        Dim::Three => (T::one() - r2.cos()) / T::of(2.0),
    };
    Ok(if conv.oriented {
        oriented
    } else {
        (oriented * T::of(2.0)).min(T::one())
    })
}

/// Volume (area in the plane) of a ball of radius `r`.
pub fn ball_volume<T: Scalar>(dim: Dim, r: T) -> T {
    match dim {
        Dim::Two => T::PI() * r * r,
        Dim::Three => T::of(4.0 / 3.0) * T::PI() * r * r * r,
    }
}

/// Value of the K-function under the null model.
pub fn k0<T: Scalar>(r1: T, r2: T, dim: Dim, conv: &OrientationConvention<T>) -> Result<T> {
    if !(r1 >= T::zero()) {
        return Err(Error::invalid(format!(
            "spatial radius must be >= 0, got {r1}"
        )));
    }
    Ok(ball_volume(dim, r1) * cap_fraction(r2, dim, conv)?)
}

/// Axis-aligned observation window `[0, a_1] x ... x [0, a_d]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Window<T> {
    extents: Point<T>,
}

impl<T: Scalar> Window<T> {
    pub fn new(extents: &[T]) -> Result<Self> {
        let p = Point::new(extents)?;
        if p.as_slice()
            .iter()
            .any(|a| !(*a > T::zero()) || !a.is_finite())
        {
            return Err(Error::invalid("window extents must be finite and positive"));
        }
        Ok(Window { extents: p })
    }

    #[inline]
    pub fn dim(&self) -> Dim {
        self.extents.dim()
    }

    #[inline]
    pub fn extents(&self) -> &[T] {
        self.extents.as_slice()
    }

    pub fn volume(&self) -> T {
        self.extents().iter().fold(T::one(), |acc, a| acc * *a)
    }

    pub fn min_extent(&self) -> T {
        self.extents()
            .iter()
            .copied()
            .fold(T::infinity(), |m, a| m.min(a))
    }

    /// Closed-box membership.
    #[inline]
    pub fn contains(&self, p: &Point<T>) -> bool {
        p.as_slice()
            .iter()
            .zip(self.extents())
            .all(|(x, a)| *x >= T::zero() && *x <= *a)
    }

    pub fn cast<U: Scalar>(&self) -> Window<U> {
        Window {
            extents: self.extents.cast(),
        }
    }
}

/// Translation edge correction `|W| / |W ∩ (W + h)|` for displacement `h`.
pub fn edge_correction<T: Scalar>(w: &Window<T>, h: &Point<T>) -> Result<T> {
    check_same_dim(w.dim(), h.dim())?;
    let mut factor = T::one();
    for (a, hi) in w.extents().iter().zip(h.as_slice()) {
        let overlap = *a - hi.abs();
        if !(overlap > T::zero()) {
            return Err(Error::InfiniteCorrection);
        }
        factor *= *a / overlap;
    }
    Ok(factor)
}
