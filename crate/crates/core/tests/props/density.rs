use fiberk::{
    estimate_beta, fit_eta_histogram, fit_model, moment_matrix, DensityModel, DirectionalDensity,
    FitOptions, HistogramBins, LinearTrend, Point, SamplePoint,
};
use proptest::prelude::*;

use super::{any_dim, check, close, convention, direction, point_in, window, Outcome};

fn samples_in(
    d: usize,
    extents: Vec<f64>,
    max: usize,
) -> impl Strategy<Value = Vec<SamplePoint<f64>>> {
    prop::collection::vec(
        (point_in(extents), direction(d), 0.01..2.0f64, 0u64..50),
        1..max,
    )
    .prop_map(|v| {
        v.into_iter()
            .map(|(location, tangent, weight, fiber_id)| SamplePoint {
                location,
                tangent,
                fiber_id,
                weight,
            })
            .collect()
    })
}

fn window_and_samples() -> impl Strategy<Value = (fiberk::Window<f64>, Vec<SamplePoint<f64>>)> {
    any_dim()
        .prop_flat_map(window)
        .prop_flat_map(|w| (Just(w), samples_in(w.dim().n(), w.extents().to_vec(), 40)))
}

pub fn suite() -> Vec<Outcome> {
    vec![
        check(
            "density/beta hat linear in the weights",
            (
                window_and_samples(),
                0.1..10.0f64,
                prop::collection::vec(0.01..2.0f64, 40),
            ),
            |((w, s), c, extra)| {
                let b = estimate_beta(&s, &w).unwrap();
                let scaled: Vec<SamplePoint<f64>> = s
                    .iter()
                    .map(|p| SamplePoint {
                        weight: p.weight * c,
                        ..*p
                    })
                    .collect();
                let bs = estimate_beta(&scaled, &w).unwrap();
                let other: Vec<SamplePoint<f64>> = s
                    .iter()
                    .zip(&extra)
                    .map(|(p, e)| SamplePoint { weight: *e, ..*p })
                    .collect();
                let bo = estimate_beta(&other, &w).unwrap();
                let both: Vec<SamplePoint<f64>> = s.iter().chain(&other).copied().collect();
                let bb = estimate_beta(&both, &w).unwrap();
                let scale = b
                    .beta()
                    .iter()
                    .chain(bo.beta())
                    .fold(1e-3f64, |m, v| m.max(v.abs()));
                for k in 0..b.beta().len() {
                    prop_assert!((bs.beta()[k] - c * b.beta()[k]).abs() <= 1e-9 * c * scale);
                    prop_assert!((bb.beta()[k] - b.beta()[k] - bo.beta()[k]).abs() <= 1e-9 * scale);
                }
                Ok(())
            },
        ),
        check(
            "density/estimating equation exact for integrated weights",
            any_dim().prop_flat_map(|d| {
                (
                    window(d),
                    -1.0..1.0f64,
                    prop::collection::vec(-0.1..0.1f64, d),
                )
            }),
            |(w, b0, slopes)| {
                // Two-point Gauss-Legendre per axis integrates trend * (1, z) exactly,
                // so the weighted nodes reproduce L = R beta.
                let d = w.dim().n();
                let mut beta = vec![b0 + 2.0];
                beta.extend(&slopes);
                let trend = LinearTrend::new(beta.clone()).unwrap();
                let g = 1.0 / 3f64.sqrt();
                let mut samples = Vec::new();
                for mask in 0..1usize << d {
                    let z: Vec<f64> = (0..d)
                        .map(|k| {
                            let a = w.extents()[k];
                            let s = if mask >> k & 1 == 1 { g } else { -g };
                            a / 2.0 * (1.0 + s)
                        })
                        .collect();
                    let p = Point::new(&z).unwrap();
                    samples.push(SamplePoint {
                        location: p,
                        tangent: fiberk::Direction::axis(w.dim(), 0),
                        fiber_id: mask as u64,
                        weight: trend.eval(&p) * w.volume() / (1 << d) as f64,
                    });
                }
                let est = estimate_beta(&samples, &w).unwrap();
                for (e, t) in est.beta().iter().zip(&beta) {
                    prop_assert!((e - t).abs() < 1e-9, "{:?} vs {:?}", est.beta(), beta);
                }
                Ok(())
            },
        ),
        check(
            "density/moment matrix symmetric positive definite",
            any_dim().prop_flat_map(window),
            |w| {
                let r = moment_matrix(&w);
                prop_assert!((r.clone() - r.transpose()).amax() == 0.0);
                prop_assert!(r.cholesky().is_some());
                Ok(())
            },
        ),
        check(
            "density/histogram masses sum to one",
            any_dim().prop_flat_map(|d| {
                (
                    convention(d),
                    prop::collection::vec(direction(d), 1..60),
                    1usize..15,
                    1usize..15,
                    any::<bool>(),
                )
            }),
            |(conv, dirs, hb, ab, sym)| {
                let tangents: Vec<_> = dirs
                    .iter()
                    .map(|t| fiberk::canonicalize(t, &conv).unwrap())
                    .collect();
                let bins = HistogramBins {
                    height: hb,
                    angle: ab,
                };
                let eta = fit_eta_histogram(&tangents, &conv, bins, sym).unwrap();
                eta.validate(&conv).unwrap();
                let sums: Vec<f64> = match &eta {
                    DirectionalDensity::Histogram2D { masses, .. } => vec![masses.iter().sum()],
                    DirectionalDensity::HistogramCyl3D {
                        height_masses,
                        angle_masses,
                        ..
                    } => {
                        vec![height_masses.iter().sum(), angle_masses.iter().sum()]
                    }
                    DirectionalDensity::Uniform => vec![1.0],
                };
                for s in sums {
                    prop_assert!((s - 1.0).abs() < 1e-9);
                }
                // Every observed tangent falls in a bin of positive density.
                for t in &tangents {
                    prop_assert!(eta.eval(t, &conv) > 0.0);
                }
                Ok(())
            },
        ),
        check(
            "density/rho scales with the model and ignores outside samples",
            (window_and_samples(), 0.1..10.0f64),
            |((w, s), c)| {
                let conv = fiberk::OrientationConvention::unoriented_default(w.dim());
                let m = fit_model(&s, &w, &conv, &FitOptions::default()).unwrap();
                let scaled = m.scaled(c);
                for p in &s {
                    prop_assert!(close(
                        scaled.rho(&p.location, &p.tangent),
                        c * m.rho(&p.location, &p.tangent),
                        1e-12
                    ));
                }
                let mut far = s.clone();
                let out: Vec<f64> = w.extents().iter().map(|a| a + 1.0).collect();
                far.push(SamplePoint {
                    location: Point::new(&out).unwrap(),
                    ..s[0]
                });
                let m2: DensityModel<f64> =
                    fit_model(&far, &w, &conv, &FitOptions::default()).unwrap();
                prop_assert_eq!(m2, m);
                Ok(())
            },
        ),
    ]
}
