use fiberk::io::{
    density_from_json, density_to_json, pattern_from_json, pattern_to_json, read_numeric_csv,
    read_samples_csv, write_envelope_csv, write_k_csv, write_samples_csv,
};
use fiberk::{
    CubicCurve, DensityModel, DirectionalDensity, Envelope, Fiber, FiberPattern, KDiagnostics,
    KEstimate, KGrid, LinearTrend, Point, SamplePoint,
};
use proptest::prelude::*;

use super::{any_dim, check, convention, direction, window, Outcome};

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![
        -1e6..1e6f64,
        any::<f64>().prop_filter("finite", |v| v.is_finite()),
        Just(0.0),
        Just(-0.0),
    ]
}

fn pattern() -> impl Strategy<Value = FiberPattern> {
    any_dim()
        .prop_flat_map(|d| {
            let fiber = prop_oneof![
                (
                    prop::collection::vec(finite(), d),
                    direction(d),
                    1e-6..1e3f64
                )
                    .prop_map(|(m, dir, len)| {
                        fiberk::FiberGeometry::Segment {
                            midpoint: Point::new(&m).unwrap(),
                            direction: dir,
                            length: len,
                        }
                    }),
                prop::collection::vec(prop::collection::vec(-1e3..1e3f64, d), 2..5).prop_map(
                    |vs| {
                        fiberk::FiberGeometry::Polyline {
                            vertices: vs.iter().map(|v| Point::new(v).unwrap()).collect(),
                        }
                    }
                ),
                prop::collection::vec(prop::array::uniform4(-10.0..10.0f64), d)
                    .prop_map(|rows| fiberk::FiberGeometry::Cubic(CubicCurve::new(&rows).unwrap())),
            ];
            (window(d), convention(d), prop::collection::vec(fiber, 0..6))
        })
        .prop_map(|(w, conv, geoms)| {
            let fibers = geoms
                .into_iter()
                .enumerate()
                .map(|(i, geometry)| Fiber {
                    id: (i as u64) * 7919 + 3,
                    geometry,
                })
                .collect();
            FiberPattern::new(conv, w, fibers).unwrap()
        })
}

fn masses(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..1.0f64, n).prop_map(|v| {
        let s: f64 = v.iter().sum::<f64>() + 1e-9;
        let mut m: Vec<f64> = v.iter().map(|x| (x + 1e-9 / v.len() as f64) / s).collect();
        // absorb rounding into the last bin so the masses sum to one
        let rest: f64 = m[..m.len() - 1].iter().sum();
        *m.last_mut().unwrap() = (1.0 - rest).max(0.0);
        m
    })
}

fn density() -> impl Strategy<Value = DensityModel<f64>> {
    any_dim().prop_flat_map(|d| {
        let eta = if d == 2 {
            (2usize..12)
                .prop_flat_map(masses)
                .prop_map(|m| (m, Vec::new()))
                .boxed()
        } else {
            (2usize..12, 2usize..12)
                .prop_flat_map(|(a, b)| (masses(a), masses(b)))
                .boxed()
        };
        (
            convention(d),
            prop::collection::vec(finite(), d + 1),
            eta,
            any::<bool>(),
        )
            .prop_map(move |(conv, beta, (m1, m2), uniform)| {
                let (lo, hi) = fiberk::density::angle_range(&conv);
                let edges = |n: usize, lo: f64, hi: f64| -> Vec<f64> {
                    (0..=n)
                        .map(|i| {
                            if i == n {
                                hi
                            } else {
                                lo + (hi - lo) * i as f64 / n as f64
                            }
                        })
                        .collect()
                };
                let eta = if uniform {
                    DirectionalDensity::Uniform
                } else if d == 2 {
                    DirectionalDensity::Histogram2D {
                        edges: edges(m1.len(), lo, hi),
                        masses: m1,
                    }
                } else {
                    DirectionalDensity::HistogramCyl3D {
                        height_edges: edges(m1.len(), -1.0, 1.0),
                        height_masses: m1,
                        angle_edges: edges(m2.len(), lo, hi),
                        angle_masses: m2,
                    }
                };
                DensityModel::new(LinearTrend::new(beta).unwrap(), eta, conv).unwrap()
            })
    })
}

fn matrix(r: usize, c: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(finite(), c), r)
}

fn grid() -> impl Strategy<Value = KGrid<f64>> {
    (
        prop::collection::vec(0.0..10.0f64, 1..5),
        prop::collection::vec(0.0..3.0f64, 1..4),
    )
        .prop_map(|(mut a, mut b)| {
            a.sort_by(f64::total_cmp);
            a.dedup();
            b.sort_by(f64::total_cmp);
            b.dedup();
            KGrid::new(a, b).unwrap()
        })
}

pub fn suite() -> Vec<Outcome> {
    vec![
        check("io/pattern JSON round-trip", pattern(), |p| {
            let back = pattern_from_json(&pattern_to_json(&p).unwrap()).unwrap();
            prop_assert_eq!(back, p);
            Ok(())
        }),
        check("io/density JSON round-trip", density(), |m| {
            let back = density_from_json(&density_to_json(&m, None).unwrap()).unwrap();
            prop_assert_eq!(back, m);
            Ok(())
        }),
        check(
            "io/sample CSV round-trip",
            any_dim().prop_flat_map(|d| {
                prop::collection::vec(
                    (
                        prop::collection::vec(finite(), d),
                        direction(d),
                        any::<u64>(),
                        1e-300..1e300f64,
                    ),
                    0..20,
                )
                .prop_map(move |v| {
                    let s: Vec<SamplePoint<f64>> = v
                        .into_iter()
                        .map(|(x, tangent, fiber_id, weight)| SamplePoint {
                            location: Point::new(&x).unwrap(),
                            tangent,
                            fiber_id,
                            weight,
                        })
                        .collect();
                    (d, s)
                })
            }),
            |(d, s)| {
                let dim = super::dim_of(d);
                let mut buf = Vec::new();
                write_samples_csv(&mut buf, dim, &s).unwrap();
                let (back_dim, back) = read_samples_csv(buf.as_slice()).unwrap();
                prop_assert_eq!(back_dim, dim);
                prop_assert_eq!(back, s);
                Ok(())
            },
        ),
        check(
            "io/K and envelope CSV round-trip",
            grid().prop_flat_map(|g| {
                let (r, c) = (g.r1().len(), g.r2().len());
                (
                    Just(g),
                    matrix(r, c),
                    matrix(r, c),
                    matrix(r, c),
                    any::<bool>(),
                )
            }),
            |(g, a, b, c, with_rel)| {
                let est = KEstimate {
                    grid: g.clone(),
                    k_hat: a.clone(),
                    k0: b.clone(),
                    k_rel: with_rel.then(|| c.clone()),
                    diagnostics: KDiagnostics {
                        pairs_used: 0,
                        samples_in_window: 0,
                        nonpositive_samples: 0,
                        window: fiberk::Window::new(&[1.0, 1.0]).unwrap(),
                        sampling: None,
                    },
                };
                let mut buf = Vec::new();
                write_k_csv(&mut buf, &est).unwrap();
                let (header, rows) = read_numeric_csv(buf.as_slice()).unwrap();
                prop_assert_eq!(header, vec!["r1", "r2", "k_hat", "k0", "k_rel"]);
                let mut it = rows.iter();
                for (i, r1) in g.r1().iter().enumerate() {
                    for (j, r2) in g.r2().iter().enumerate() {
                        let row = it.next().unwrap();
                        prop_assert_eq!(row[0].to_bits(), r1.to_bits());
                        prop_assert_eq!(row[1].to_bits(), r2.to_bits());
                        prop_assert_eq!(row[2].to_bits(), a[i][j].to_bits());
                        prop_assert_eq!(row[3].to_bits(), b[i][j].to_bits());
                        if with_rel {
                            prop_assert_eq!(row[4].to_bits(), c[i][j].to_bits());
                        } else {
                            prop_assert!(row[4].is_nan());
                        }
                    }
                }
                let env = Envelope {
                    grid: g.clone(),
                    lo: a.clone(),
                    hi: b.clone(),
                    data: c.clone(),
                    n_sim: 39,
                };
                let mut buf = Vec::new();
                write_envelope_csv(&mut buf, &env).unwrap();
                let (header, rows) = read_numeric_csv(buf.as_slice()).unwrap();
                prop_assert_eq!(header, vec!["r1", "r2", "lo", "hi", "data"]);
                let flat: Vec<[f64; 3]> = (0..a.len())
                    .flat_map(|i| (0..a[i].len()).map(move |j| (i, j)))
                    .map(|(i, j)| [a[i][j], b[i][j], c[i][j]])
                    .collect();
                for (row, want) in rows.iter().zip(&flat) {
                    for k in 0..3 {
                        prop_assert_eq!(row[2 + k].to_bits(), want[k].to_bits());
                    }
                }
                Ok(())
            },
        ),
    ]
}
