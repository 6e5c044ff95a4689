use fiberk::{
    resample_null, simulate::fiber_hits_window, simulate_dependent, simulate_null,
    DependentModelSpec, LinearTrend, NullModelSpec, OrientationConvention, Window,
};
use proptest::prelude::*;

use super::{any_dim, check, dim_of, Outcome};

fn null_spec() -> impl Strategy<Value = NullModelSpec> {
    (
        any_dim(),
        1.0..4.0f64,
        0.1..3.0f64,
        0.2..2.0f64,
        any::<bool>(),
        any::<u64>(),
    )
        .prop_map(|(d, a, b0, lmax, oriented, seed)| {
            let dim = dim_of(d);
            let mut beta = vec![b0];
            beta.extend(std::iter::repeat(-0.1 * b0 / (a + lmax)).take(d));
            NullModelSpec {
                window: Window::new(&vec![a; d]).unwrap(),
                trend: LinearTrend::new(beta).unwrap(),
                max_length: lmax,
                convention: if oriented {
                    OrientationConvention::oriented_default(dim)
                } else {
                    OrientationConvention::unoriented_default(dim)
                },
                seed,
            }
        })
}

pub fn suite() -> Vec<Outcome> {
    vec![
        check(
            "simulate/null model bit-reproducible and restricted to W",
            null_spec(),
            |spec| {
                let a = simulate_null(&spec).unwrap();
                let b = simulate_null(&spec).unwrap();
                prop_assert_eq!(&a.pattern, &b.pattern);
                prop_assert!(a
                    .pattern
                    .fibers
                    .iter()
                    .all(|f| fiber_hits_window(f, &spec.window)));
                prop_assert!(a
                    .pattern
                    .fibers
                    .iter()
                    .all(|f| f.length() <= spec.max_length));
                Ok(())
            },
        ),
        check(
            "simulate/resampling bit-reproducible",
            (null_spec(), any::<u64>()),
            |(spec, seed)| {
                let sim = simulate_null(&spec).unwrap();
                let p = &sim.pattern;
                let Some(mean_len) = p.mean_length() else {
                    return Ok(());
                };
                let a = resample_null(p, &sim.true_model.trend, mean_len, seed).unwrap();
                let b = resample_null(p, &sim.true_model.trend, mean_len, seed).unwrap();
                prop_assert_eq!(&a, &b);
                prop_assert!(a.fibers.iter().all(|f| fiber_hits_window(f, &p.window)));
                // Every resampled fiber is a translate of an observed one.
                for f in &a.fibers {
                    prop_assert!(p
                        .fibers
                        .iter()
                        .any(|g| (g.length() - f.length()).abs() < 1e-9));
                }
                Ok(())
            },
        ),
        check(
            "simulate/dependent model bit-reproducible",
            (1.0..3.0f64, 0.1..2.0f64, 0.2..3.0f64, any::<u64>()),
            |(a, b0, sc, seed)| {
                let mut spec = DependentModelSpec::planar_study(sc, seed);
                spec.window = Window::new(&[a, a]).unwrap();
                spec.trend = LinearTrend::new(vec![b0, 0.0, 0.0]).unwrap();
                let x = simulate_dependent(&spec).unwrap();
                let y = simulate_dependent(&spec).unwrap();
                prop_assert_eq!(&x.pattern, &y.pattern);
                prop_assert!(x
                    .pattern
                    .fibers
                    .iter()
                    .all(|f| fiber_hits_window(f, &spec.window)));
                Ok(())
            },
        ),
    ]
}
