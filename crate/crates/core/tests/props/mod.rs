//! Property suites, one module per library module. Each property runs
//! `CASES` cases with a deterministic proptest RNG.

use std::fmt::Debug;

use fiberk::{Dim, Direction, OrientationConvention, Point, Window};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};

mod density;
mod fiber;
mod io;
mod kstat;
mod simulate;

pub const CASES: u32 = 1000;

pub type Outcome = (&'static str, u32, Result<(), String>);

pub fn check<S>(
    name: &'static str,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Outcome
where
    S: Strategy,
    S::Value: Debug,
{
    let cfg = Config {
        cases: CASES,
        failure_persistence: None,
        ..Config::default()
    };
    let mut runner =
        TestRunner::new_with_rng(cfg, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    (
        name,
        CASES,
        runner.run(&strategy, test).map_err(|e| e.to_string()),
    )
}

pub fn run_all() -> Vec<Outcome> {
    let mut all = Vec::new();
    all.extend(geometry::suite());
    all.extend(fiber::suite());
    all.extend(density::suite());
    all.extend(kstat::suite());
    all.extend(simulate::suite());
    all.extend(io::suite());
    all
}

pub fn dim_of(d: usize) -> Dim {
    if d == 2 {
        Dim::Two
    } else {
        Dim::Three
    }
}

pub fn any_dim() -> impl Strategy<Value = usize> {
    prop_oneof![Just(2usize), Just(3usize)]
}

/// A unit vector in `d` dimensions as raw coordinates.
pub fn unit(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0..1.0f64, d)
        .prop_filter("not too short", |v| {
            v.iter().map(|x| x * x).sum::<f64>() > 0.01
        })
        .prop_map(|v| {
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| x / n).collect()
        })
}

pub fn direction(d: usize) -> impl Strategy<Value = Direction<f64>> {
    unit(d).prop_map(|v| Direction::new(&v).unwrap())
}

pub fn point_in(extents: Vec<f64>) -> impl Strategy<Value = Point<f64>> {
    extents
        .into_iter()
        .map(|a| 0.0..=a)
        .collect::<Vec<_>>()
        .prop_map(|v| Point::new(&v).unwrap())
}

pub fn window(d: usize) -> impl Strategy<Value = Window<f64>> {
    prop::collection::vec(1.0..10.0f64, d).prop_map(|v| Window::new(&v).unwrap())
}

pub fn convention(d: usize) -> impl Strategy<Value = OrientationConvention<f64>> {
    any::<bool>().prop_map(move |oriented| {
        let pole = Direction::axis(dim_of(d), 1);
        if oriented {
            OrientationConvention::oriented(pole)
        } else {
            OrientationConvention::unoriented(pole)
        }
    })
}

pub fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300)
}
