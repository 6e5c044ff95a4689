//! Inhomogeneous K-function for fiber patterns.
//!
//! Fibers (segments, polylines, cubic curves) are discretized into points
//! carrying a tangent direction. A density `rho(z, s) = eta(s) (beta0 + beta^T z)`
//! is fitted to those points, and the K-function counts reweighted pairs that
//! are close both in space and in direction. Values are compared with the
//! null constant `K0(r1, r2)` through the relative K-function.
//!
//! The geometric and statistical core is generic over [`Scalar`] (`f32` or
//! `f64`). Simulation and file formats work in `f64`. Aliases for both
//! precisions are provided at the crate root.

pub mod density;
pub mod error;
pub mod fiber;
pub mod geometry;
pub mod io;
pub mod kstat;
pub mod quadrature;
pub mod rng;
pub mod scalar;
pub mod simulate;

pub use density::{
    estimate_beta, estimate_constant, fit_eta_histogram, fit_model, moment_matrix, rho_eval,
    DensityModel, DirectionalDensity, EtaChoice, FitOptions, HistogramBins, LinearTrend,
    TrendChoice,
};
pub use error::{Error, Result};
pub use fiber::{
    discretize, discretize_all, fit_cubic_curve, CubicCurve, CurveFit, Fiber, FiberGeometry,
    SamplePoint, SamplingConfig, SamplingMode,
};
pub use geometry::{
    angle_distance, ball_volume, canonicalize, cap_fraction, edge_correction, k0, line_distance,
    Dim, Direction, OrientationConvention, Point, Window,
};
pub use kstat::{estimate_k, relative_k, KDiagnostics, KEstimate, KGrid, NonpositivePolicy};
pub use scalar::Scalar;
pub use simulate::{
    envelope, resample_null, simulate_dependent, simulate_null, DependentModelSpec, Envelope,
    EnvelopeConfig, FiberPattern, NullModelSpec, Simulation, DEFAULT_CORR_SCALE,
};

pub type Point64 = Point<f64>;
pub type Direction64 = Direction<f64>;
pub type Window64 = Window<f64>;
pub type Convention64 = OrientationConvention<f64>;
pub type Fiber64 = Fiber<f64>;
pub type SamplePoint64 = SamplePoint<f64>;
pub type DensityModel64 = DensityModel<f64>;
pub type KGrid64 = KGrid<f64>;
pub type KEstimate64 = KEstimate<f64>;

pub type Point32 = Point<f32>;
pub type Direction32 = Direction<f32>;
pub type Window32 = Window<f32>;
pub type Convention32 = OrientationConvention<f32>;
pub type Fiber32 = Fiber<f32>;
pub type SamplePoint32 = SamplePoint<f32>;
pub type DensityModel32 = DensityModel<f32>;
pub type KGrid32 = KGrid<f32>;
pub type KEstimate32 = KEstimate<f32>;
