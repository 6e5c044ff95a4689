use fiberk::{
    discretize, fit_cubic_curve, CubicCurve, Fiber, OrientationConvention, Point, SamplingConfig,
};
use proptest::prelude::*;

use super::{any_dim, check, convention, dim_of, direction, Outcome};

fn segment(d: usize) -> impl Strategy<Value = Fiber<f64>> {
    (
        prop::collection::vec(-5.0..5.0f64, d),
        direction(d),
        0.05..4.0f64,
        0u64..1000,
    )
        .prop_map(|(m, dir, len, id)| {
            Fiber::segment(id, Point::new(&m).unwrap(), dir, len).unwrap()
        })
}

fn polyline(d: usize) -> impl Strategy<Value = Fiber<f64>> {
    prop::collection::vec(prop::collection::vec(-3.0..3.0f64, d), 2..8)
        .prop_filter("distinct consecutive vertices", |vs| {
            vs.windows(2).all(|w| {
                w[0].iter()
                    .zip(&w[1])
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    > 1e-4
            })
        })
        .prop_map(|vs| {
            Fiber::polyline(7, vs.iter().map(|v| Point::new(v).unwrap()).collect()).unwrap()
        })
}

fn cubic(d: usize) -> impl Strategy<Value = Fiber<f64>> {
    (
        prop::collection::vec(prop::array::uniform4(-1.0..1.0f64), d),
        direction(d),
    )
        .prop_map(move |(mut rows, dir)| {
            // A dominant linear term keeps the derivative away from zero.
            for (row, c) in rows.iter_mut().zip(dir.as_slice()) {
                row[1] = 4.0 * c;
                row[2] *= 0.3;
                row[3] *= 0.2;
            }
            Fiber::cubic(3, CubicCurve::new(&rows).unwrap())
        })
}

fn any_fiber(d: usize) -> impl Strategy<Value = Fiber<f64>> {
    prop_oneof![segment(d), polyline(d), cubic(d)]
}

pub fn suite() -> Vec<Outcome> {
    vec![
        check(
            "fiber/equispaced weights sum to length within one step",
            any_dim().prop_flat_map(|d| (any_fiber(d), convention(d), 0.01..0.5f64)),
            |(f, conv, delta)| {
                let pts = discretize(&f, &SamplingConfig::equispaced(delta), &conv).unwrap();
                let total: f64 = pts.iter().map(|p| p.weight).sum();
                let len = f.length();
                prop_assert!(total <= len + 1e-9 && total > len - delta - 1e-9);
                for p in &pts {
                    prop_assert!((p.tangent.vector().norm() - 1.0).abs() < 1e-9);
                    prop_assert_eq!(p.fiber_id, f.id);
                    if !conv.oriented {
                        prop_assert!(p.tangent.dot(&conv.pole) >= 0.0);
                    }
                }
                Ok(())
            },
        ),
        check(
            "fiber/poisson sampling deterministic per seed and weighted 1/phi",
            any_dim().prop_flat_map(|d| (any_fiber(d), 0.5..20.0f64, any::<u64>())),
            |(f, phi, seed)| {
                let conv = OrientationConvention::unoriented_default(f.dim());
                let cfg = SamplingConfig::poisson(phi, seed);
                let a = discretize(&f, &cfg, &conv).unwrap();
                let b = discretize(&f, &cfg, &conv).unwrap();
                prop_assert_eq!(&a, &b);
                prop_assert!(a.iter().all(|p| p.weight == 1.0 / phi));
                Ok(())
            },
        ),
        check(
            "fiber/arclength map is 1-Lipschitz with the right endpoints",
            any_dim().prop_flat_map(|d| (polyline(d), 0.0..1.0f64, 0.0..1.0f64)),
            |(f, u, v)| {
                let map = f.arclength_map();
                let len = map.length();
                let (p, _) = map.at(u * len).unwrap();
                let (q, _) = map.at(v * len).unwrap();
                prop_assert!((p - q).norm() <= (u - v).abs() * len + 1e-9);
                if let fiberk::FiberGeometry::Polyline { vertices } = &f.geometry {
                    prop_assert!((map.at(0.0).unwrap().0 - vertices[0]).norm() < 1e-12);
                    prop_assert!(
                        (map.at(len).unwrap().0 - *vertices.last().unwrap()).norm() < 1e-9
                    );
                }
                Ok(())
            },
        ),
        check(
            "fiber/translation moves center and keeps length",
            any_dim().prop_flat_map(|d| (any_fiber(d), prop::collection::vec(-10.0..10.0f64, d))),
            |(f, off)| {
                let o = Point::new(&off).unwrap();
                let g = f.translated(&o);
                prop_assert!((g.length() - f.length()).abs() <= 1e-9 * f.length().max(1.0));
                prop_assert!((g.center() - (f.center() + o)).norm() < 1e-6);
                Ok(())
            },
        ),
        check(
            "fiber/cubic fit equivariant under translation and scaling",
            (
                any_dim(),
                prop::collection::vec(prop::array::uniform4(-1.0..1.0f64), 3),
                prop::collection::vec(-0.01..0.01f64, 60),
                prop::collection::vec(-20.0..20.0f64, 3),
                0.2..5.0f64,
                8usize..20,
            ),
            |(d, mut rows, noise, off, scale, n)| {
                rows.truncate(d);
                rows[0][1] = 3.0;
                let curve = CubicCurve::new(&rows).unwrap();
                let pts: Vec<Point<f64>> = (0..n)
                    .map(|i| {
                        let t = -1.0 + 2.0 * i as f64 / (n - 1) as f64;
                        let p = curve.eval(t);
                        let jitter: Vec<f64> = (0..d).map(|k| noise[(i * 3 + k) % 60]).collect();
                        p + Point::new(&jitter).unwrap()
                    })
                    .collect();
                let o = Point::new(&off[..d]).unwrap();
                let base = fit_cubic_curve(&pts).unwrap();
                let moved: Vec<Point<f64>> = pts.iter().map(|p| *p * scale + o).collect();
                let fit = fit_cubic_curve(&moved).unwrap();
                for k in 0..=8 {
                    let t = -1.0 + 0.25 * k as f64;
                    let want = base.curve.eval(t) * scale + o;
                    prop_assert!(
                        (fit.curve.eval(t) - want).norm() < 1e-7 * (1.0 + scale + o.norm())
                    );
                }
                prop_assert!((fit.rms - scale * base.rms).abs() < 1e-7 * (1.0 + scale));
                let _ = dim_of(d);
                Ok(())
            },
        ),
    ]
}
