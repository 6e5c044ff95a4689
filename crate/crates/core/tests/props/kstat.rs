use fiberk::{
    estimate_k, DensityModel, KEstimate, KGrid, LinearTrend, NonpositivePolicy,
    OrientationConvention, SamplePoint, Window,
};
use proptest::prelude::*;

use super::{any_dim, check, close, convention, direction, point_in, window, Outcome};

#[derive(Clone, Debug)]
struct Instance {
    w: Window<f64>,
    conv: OrientationConvention<f64>,
    samples: Vec<SamplePoint<f64>>,
    model: DensityModel<f64>,
    grid: KGrid<f64>,
}

fn instance() -> impl Strategy<Value = Instance> {
    any_dim()
        .prop_flat_map(|d| {
            (
                window(d).prop_map(|w| {
                    // keep extents comparable so r1 grids are nontrivial
                    Window::new(&w.extents().iter().map(|a| a + 2.0).collect::<Vec<_>>()).unwrap()
                }),
                convention(d),
            )
        })
        .prop_flat_map(|(w, conv)| {
            let d = w.dim().n();
            let pts = prop::collection::vec(
                (
                    point_in(w.extents().to_vec()),
                    direction(d),
                    0.05..1.0f64,
                    0u64..8,
                ),
                2..60,
            );
            let slopes = prop::collection::vec(-0.5..0.5f64, d);
            (
                Just(w),
                Just(conv),
                pts,
                0.5..3.0f64,
                slopes,
                0.05..0.95f64,
                prop::collection::vec(0.0..1.0f64, 1..4),
            )
        })
        .prop_map(|(w, conv, pts, b0, slopes, r1f, r2f)| {
            let samples = pts
                .into_iter()
                .map(|(location, t, weight, fiber_id)| SamplePoint {
                    location,
                    tangent: fiberk::canonicalize(&t, &conv).unwrap(),
                    fiber_id,
                    weight,
                })
                .collect();
            // Slopes small enough that the trend stays positive on the window.
            let mut beta = vec![b0];
            for (s, a) in slopes.iter().zip(w.extents()) {
                beta.push(s * b0 / (a * w.dim().n() as f64));
            }
            let model = DensityModel::uniform(LinearTrend::new(beta).unwrap(), conv).unwrap();
            let r1max = r1f * w.min_extent();
            let r1: Vec<f64> = (1..=4).map(|k| r1max * k as f64 / 4.0).collect();
            let mut r2: Vec<f64> = r2f.iter().map(|f| f * conv.max_angle()).collect();
            r2.sort_by(f64::total_cmp);
            r2.dedup();
            let grid = KGrid::new(r1, r2).unwrap();
            Instance {
                w,
                conv,
                samples,
                model,
                grid,
            }
        })
}

fn run(i: &Instance, samples: &[SamplePoint<f64>], model: &DensityModel<f64>) -> KEstimate<f64> {
    estimate_k(samples, model, &i.w, &i.grid, NonpositivePolicy::Fail).unwrap()
}

/// `2 Σ_{p<q}` of the pair term, written out directly.
fn unordered_total(i: &Instance) -> f64 {
    let s = &i.samples;
    let r1 = *i.grid.r1().last().unwrap();
    let r2 = *i.grid.r2().last().unwrap();
    let mut total = 0.0;
    for p in 0..s.len() {
        for q in p + 1..s.len() {
            let (a, b) = (&s[p], &s[q]);
            if a.fiber_id == b.fiber_id {
                continue;
            }
            let h = b.location - a.location;
            if h.norm() > r1 || i.conv.distance(&a.tangent, &b.tangent).unwrap() > r2 {
                continue;
            }
            let e = fiberk::edge_correction(&i.w, &h).unwrap();
            total += a.weight * b.weight * e
                / (i.model.rho(&a.location, &a.tangent) * i.model.rho(&b.location, &b.tangent));
        }
    }
    total / i.w.volume()
}

pub fn suite() -> Vec<Outcome> {
    vec![
        check("kstat/monotone in r1 and r2", instance(), |i| {
            let k = run(&i, &i.samples, &i.model).k_hat;
            for a in 0..k.len() {
                for b in 0..k[a].len() {
                    prop_assert!(k[a][b] >= 0.0);
                    if a > 0 {
                        prop_assert!(k[a][b] >= k[a - 1][b]);
                    }
                    if b > 0 {
                        prop_assert!(k[a][b] >= k[a][b - 1]);
                    }
                }
            }
            Ok(())
        }),
        check(
            "kstat/invariant under sample order and fiber relabeling",
            (instance(), any::<u64>()),
            |(i, key)| {
                let base = run(&i, &i.samples, &i.model).k_hat;
                let mut shuffled: Vec<SamplePoint<f64>> = i
                    .samples
                    .iter()
                    .map(|s| SamplePoint {
                        fiber_id: s.fiber_id.wrapping_mul(2654435761).wrapping_add(key),
                        ..*s
                    })
                    .collect();
                shuffled.reverse();
                let n = shuffled.len();
                shuffled.rotate_left((key % n as u64) as usize);
                let k = run(&i, &shuffled, &i.model).k_hat;
                for (a, b) in base.iter().flatten().zip(k.iter().flatten()) {
                    prop_assert!(close(*a, *b, 1e-12));
                }
                Ok(())
            },
        ),
        check(
            "kstat/scaling the density by c scales K by 1/c^2",
            (instance(), 0.05..20.0f64),
            |(i, c)| {
                let base = run(&i, &i.samples, &i.model).k_hat;
                let k = run(&i, &i.samples, &i.model.scaled(c)).k_hat;
                for (a, b) in base.iter().flatten().zip(k.iter().flatten()) {
                    prop_assert!(close(*b, a / (c * c), 1e-12));
                }
                Ok(())
            },
        ),
        check(
            "kstat/ordered sum is twice the unordered sum",
            instance(),
            |i| {
                let k = run(&i, &i.samples, &i.model).k_hat;
                let top = *k.last().unwrap().last().unwrap();
                prop_assert!(close(top, 2.0 * unordered_total(&i), 1e-12));
                Ok(())
            },
        ),
        check("kstat/same-fiber pairs never count", instance(), |i| {
            let one: Vec<SamplePoint<f64>> = i
                .samples
                .iter()
                .map(|s| SamplePoint { fiber_id: 0, ..*s })
                .collect();
            let k = run(&i, &one, &i.model);
            prop_assert!(k.k_hat.iter().flatten().all(|v| *v == 0.0));
            prop_assert_eq!(k.diagnostics.pairs_used, 0);
            Ok(())
        }),
        check(
            "kstat/deterministic across thread counts",
            instance(),
            |i| {
                let pool = |n| {
                    rayon::ThreadPoolBuilder::new()
                        .num_threads(n)
                        .build()
                        .unwrap()
                };
                let a = pool(1).install(|| run(&i, &i.samples, &i.model));
                let b = pool(3).install(|| run(&i, &i.samples, &i.model));
                prop_assert_eq!(a, b);
                Ok(())
            },
        ),
    ]
}
