//! Layer machinery verification.
//!
//! The band-probability series is checked against a crossing-corrected
//! fine-grid Monte-Carlo oracle before anything downstream relies on it; the
//! conditional point and layer-refinement laws are checked against grid
//! filter oracles.

use super::*;
use crate::harness::stats::{ks_one_sample, ks_two_sample};
use crate::stream::replication_stream;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use statrs::distribution::{ContinuousCDF, Normal as StatNormal};

fn flat_range(_l: f64, _u: f64) -> (f64, f64) {
    (0.0, 0.0)
}

/// Exact bridge values on a uniform grid (excluding the endpoints).
fn grid_bridge<R: Rng>(x: f64, y: f64, dt: f64, steps: usize, rng: &mut R) -> Vec<f64> {
    let mut vals = Vec::with_capacity(steps - 1);
    let mut prev = x;
    let t1 = dt * steps as f64;
    for i in 1..steps {
        let t = dt * i as f64;
        let (mean, var) = bridge_moments(t - dt, prev, t1, y, t);
        let v = Normal::new(mean, var.sqrt()).unwrap().sample(rng);
        vals.push(v);
        prev = v;
    }
    vals
}

/// Probability that the bridge crossed `barrier` between two grid values.
fn step_cross(x1: f64, x2: f64, barrier: f64, dt: f64, above: bool) -> f64 {
    let (d1, d2) = if above {
        (barrier - x1, barrier - x2)
    } else {
        (x1 - barrier, x2 - barrier)
    };
    if d1 <= 0.0 || d2 <= 0.0 {
        return 1.0;
    }
    (-2.0 * d1 * d2 / dt).exp()
}

/// Crossing-corrected Monte-Carlo estimate of the band containment
/// probability: each path carries the product of per-step non-crossing
/// probabilities as a weight.
fn mc_band_probability<R: Rng>(
    x: f64,
    y: f64,
    t: f64,
    band: Band,
    dt: f64,
    n: usize,
    rng: &mut R,
) -> (f64, f64) {
    let steps = (t / dt).round() as usize;
    let dt = t / steps as f64;
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for _ in 0..n {
        let vals = grid_bridge(x, y, dt, steps, rng);
        let mut w = 1.0;
        let mut prev = x;
        for (i, &v) in vals.iter().chain(std::iter::once(&y)).enumerate() {
            let _ = i;
            if !band.contains(v) {
                w = 0.0;
                break;
            }
            w *= (1.0 - step_cross(prev, v, band.hi, dt, true))
                * (1.0 - step_cross(prev, v, band.lo, dt, false));
            prev = v;
        }
        sum += w;
        sumsq += w * w;
    }
    let mean = sum / n as f64;
    let var = (sumsq / n as f64 - mean * mean).max(0.0);
    (mean, (var / n as f64).sqrt())
}

#[test]
fn series_matches_monte_carlo_oracle() {
    // The gate for everything downstream: the analytic enclosure must agree
    // with brute-force path simulation on bands of practical width.
    let configs = [
        (0.0, 0.0, 1.0, Band::new(-1.0, 1.0)),
        (0.2, -0.3, 0.7, Band::new(-0.8, 0.9)),
        (0.0, 0.0, 1.0, Band::new(-0.6, 0.75)),
        (-0.4, 0.4, 2.0, Band::new(-1.5, 1.1)),
    ];
    let mut rng = replication_stream(31, 0);
    for (i, &(x, y, t, band)) in configs.iter().enumerate() {
        let exact = band_probability(0.0, t, x, y, band.lo, band.hi, 1e-12)
            .unwrap()
            .point_estimate(1e-12)
            .unwrap();
        let (mc, se) = mc_band_probability(x, y, t, band, 1e-3, 200_000, &mut rng);
        let tol = 3.0 * se + 3e-4;
        assert!(
            (exact - mc).abs() < tol,
            "config {i}: series {exact} vs MC {mc} (tol {tol})"
        );
    }
}

#[test]
fn wide_band_probability_is_essentially_one() {
    let e = band_probability(0.0, 1.0, 0.0, 0.0, -10.0, 10.0, 1e-13).unwrap();
    assert!(e.lo() > 1.0 - 1e-12, "lo = {}", e.lo());
}

#[test]
fn endpoint_outside_band_collapses_to_zero() {
    let e = band_probability(0.0, 1.0, 1.5, 0.0, -1.0, 1.0, 1.0).unwrap();
    assert_eq!((e.lo(), e.hi()), (0.0, 0.0));
    let on_edge = band_probability(0.0, 1.0, 1.0, 0.0, -1.0, 1.0, 1.0).unwrap();
    assert_eq!((on_edge.lo(), on_edge.hi()), (0.0, 0.0));
}

#[test]
fn layer_frequencies_match_band_probability_differences() {
    let (x, y, t, a) = (0.0, 0.0, 1.0, 0.5);
    let n = 100_000;
    let mut rng = replication_stream(31, 1);
    let mut counts = vec![0u64; 12];
    for _ in 0..n {
        let layer = sample_layer(0.0, t, x, y, a, &flat_range, &mut rng).unwrap();
        let k = (layer.index as usize).min(counts.len() - 1);
        counts[k - 1] += 1;
        // Exclusion bookkeeping: level 1 has no inner band, others do.
        assert_eq!(layer.inner.is_some(), layer.index >= 2);
    }
    assert_eq!(counts.iter().sum::<u64>(), n); // partition of path space
    let mut prev_p = 0.0;
    for k in 1..=6usize {
        let band = Band::hull(x, y).expand(k as f64 * a);
        let p = band_probability(0.0, t, x, y, band.lo, band.hi, 1e-12)
            .unwrap()
            .point_estimate(1e-12)
            .unwrap();
        let cell = p - prev_p;
        prev_p = p;
        let freq = counts[k - 1] as f64 / n as f64;
        let se = (cell * (1.0 - cell) / n as f64).sqrt();
        assert!(
            (freq - cell).abs() < 3.0 * se + 1e-4,
            "layer {k}: freq {freq} vs probability {cell}"
        );
    }
}

#[test]
fn dominant_first_band_takes_almost_all_mass() {
    let mut rng = replication_stream(31, 2);
    let mut first = 0u64;
    let n = 10_000;
    for _ in 0..n {
        let layer = sample_layer(0.0, 1.0, 0.0, 0.0, 100.0, &flat_range, &mut rng).unwrap();
        if layer.index == 1 {
            first += 1;
        }
    }
    assert!(first as f64 / n as f64 > 0.999);
}

fn record_with_band(band: Band, x: f64, y: f64, t: f64) -> IntervalRecord {
    IntervalRecord::new(
        0.0,
        t,
        0.0,
        t,
        x,
        y,
        Layer::new(band, None, 1, &flat_range),
    )
    .unwrap()
}

#[test]
fn inactive_band_reproduces_unconstrained_marginal() {
    let rec = record_with_band(Band::new(-100.0, 100.0), 0.0, 0.0, 1.0);
    let mut rng = replication_stream(31, 3);
    let sample: Vec<f64> = (0..10_000)
        .map(|_| sample_point_given_layer(&rec, 0.5, &mut rng).unwrap())
        .collect();
    let half = StatNormal::new(0.0, 0.5).unwrap();
    let (_, p) = ks_one_sample(&sample, |v| half.cdf(v)).unwrap();
    assert!(p > 0.01, "p = {p}");
}

#[test]
fn conditional_point_matches_grid_filter_oracle() {
    // Bridge 0 -> 0 over [0,1] confined to [-1,1]; compare the exact
    // conditional draw at q = 1/2 against fine-grid bridges filtered to the
    // band (with per-step crossing kills). 2-of-3 seeds at p > 0.01.
    let band = Band::new(-1.0, 1.0);
    let rec = record_with_band(band, 0.0, 0.0, 1.0);
    let mut rejections = 0;
    for seed in 0..3u64 {
        let mut rng = replication_stream(32 + seed, 0);
        let exact: Vec<f64> = (0..10_000)
            .map(|_| sample_point_given_layer(&rec, 0.5, &mut rng).unwrap())
            .collect();
        assert!(exact.iter().all(|v| band.contains(*v)));
        let dt = 1e-3;
        let steps = 1000usize;
        let mut filtered = Vec::with_capacity(10_000);
        while filtered.len() < 10_000 {
            let vals = grid_bridge(0.0, 0.0, dt, steps, &mut rng);
            let mut ok = true;
            let mut prev = 0.0;
            for &v in vals.iter().chain(std::iter::once(&0.0)) {
                if !band.contains(v) {
                    ok = false;
                    break;
                }
                let keep = (1.0 - step_cross(prev, v, band.hi, dt, true))
                    * (1.0 - step_cross(prev, v, band.lo, dt, false));
                if rng.random::<f64>() > keep {
                    ok = false;
                    break;
                }
                prev = v;
            }
            if ok {
                filtered.push(vals[steps / 2 - 1]);
            }
        }
        let (_, p) = ks_two_sample(&exact, &filtered).unwrap();
        if p <= 0.01 {
            rejections += 1;
        }
    }
    assert!(rejections < 2, "{rejections}/3 seeds rejected");
}

#[test]
fn refined_children_nest_inside_parent() {
    let quad_range = |l: f64, u: f64| {
        // Monotone under band inclusion: range of v^2 over [l, u].
        let lo = if l <= 0.0 && u >= 0.0 { 0.0 } else { (l * l).min(u * u) };
        (lo, (l * l).max(u * u))
    };
    let mut rng = replication_stream(31, 4);
    for trial in 0..200 {
        let rec = IntervalRecord::new(
            0.0,
            1.0,
            0.0,
            1.0,
            0.1,
            -0.2,
            sample_layer(0.0, 1.0, 0.1, -0.2, 0.4, &quad_range, &mut rng).unwrap(),
        )
        .unwrap();
        let xi = 0.3 + 0.4 * rng.random::<f64>();
        let v = sample_point_given_layer(&rec, xi, &mut rng).unwrap();
        let (l, r) = refine_layers(&rec, xi, v, &quad_range, &mut rng).unwrap();
        for child in [&l, &r] {
            assert!(rec.layer.band.contains_band(&child.band), "trial {trial}");
            assert!(child.phi_lo >= rec.layer.phi_lo - 1e-12);
            assert!(child.phi_hi <= rec.layer.phi_hi + 1e-12);
            if let Some(inner) = &child.inner {
                assert!(child.band.contains_band(inner));
            }
        }
    }
}

/// Exact draw of the within-step maximum of a Brownian bridge step.
fn step_max<R: Rng>(x1: f64, x2: f64, dt: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    0.5 * (x1 + x2 + ((x1 - x2).powi(2) - 2.0 * dt * u.ln()).sqrt())
}

fn step_min<R: Rng>(x1: f64, x2: f64, dt: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    0.5 * (x1 + x2 - ((x1 - x2).powi(2) - 2.0 * dt * u.ln()).sqrt())
}

#[test]
fn refined_child_law_matches_grid_conditional_oracle() {
    // Parent: containment in [-1,1] for the bridge (0,0) -> (1,0), split at
    // the fixed point (0.6, 0.3). The left child layer's level frequencies
    // must match brute-force: grid bridges through the point, conditioned to
    // the parent band, scored by the smallest nested child band containing
    // their (exactly sampled) running extrema.
    let band = Band::new(-1.0, 1.0);
    let rec = record_with_band(band, 0.0, 0.0, 1.0);
    let (xi, v) = (0.6, 0.3);
    let mut rng = replication_stream(31, 5);

    let n_alg = 100_000;
    let mut alg_counts = [0u64; 3]; // levels 1, 2, 3+ for the left child
    for _ in 0..n_alg {
        let (l, _) = refine_layers(&rec, xi, v, &flat_range, &mut rng).unwrap();
        alg_counts[(l.index as usize - 1).min(2)] += 1;
    }

    let a = 0.5 * xi.sqrt();
    let hull = Band::hull(0.0, v);
    let n_oracle = 60_000;
    let mut oracle_counts = [0u64; 3];
    let mut kept = 0u64;
    let dt = 1e-3;
    let steps = (xi / dt).round() as usize;
    let dt = xi / steps as f64;
    'path: while kept < n_oracle {
        // Left sub-bridge (0,0) -> (xi, v) on the grid.
        let mut prev = 0.0;
        let mut hi = f64::NEG_INFINITY;
        let mut lo = f64::INFINITY;
        for i in 1..=steps {
            let val = if i == steps {
                v
            } else {
                let t = dt * i as f64;
                let (mean, var) = bridge_moments(t - dt, prev, xi, v, t);
                Normal::new(mean, var.sqrt()).unwrap().sample(&mut rng)
            };
            hi = hi.max(step_max(prev, val, dt, &mut rng));
            lo = lo.min(step_min(prev, val, dt, &mut rng));
            if hi > band.hi || lo < band.lo {
                continue 'path; // leaves the parent band: conditioned away
            }
            prev = val;
        }
        kept += 1;
        let mut level = 3usize;
        for k in 1..=2u32 {
            let cand = hull.expand(f64::from(k) * a).intersect(band);
            if lo >= cand.lo && hi <= cand.hi {
                level = k as usize;
                break;
            }
        }
        oracle_counts[level - 1] += 1;
    }

    for lvl in 0..3 {
        let fa = alg_counts[lvl] as f64 / n_alg as f64;
        let fo = oracle_counts[lvl] as f64 / n_oracle as f64;
        let se = (fa * (1.0 - fa) / n_alg as f64 + fo * (1.0 - fo) / n_oracle as f64).sqrt();
        assert!(
            (fa - fo).abs() < 3.0 * se + 2e-3,
            "level {}: algorithm {fa} vs oracle {fo}",
            lvl + 1
        );
    }
}

#[test]
fn interval_record_rejects_bad_times() {
    let layer = Layer::new(Band::new(-1.0, 1.0), None, 1, &flat_range);
    assert!(IntervalRecord::new(0.0, 1.0, 0.8, 0.4, 0.0, 0.0, layer.clone()).is_err());
    assert!(IntervalRecord::new(0.5, 1.0, 0.2, 0.8, 0.0, 0.0, layer).is_err());
}

#[test]
fn refine_layers_rejects_value_outside_band() {
    let rec = record_with_band(Band::new(-1.0, 1.0), 0.0, 0.0, 1.0);
    let mut rng = replication_stream(31, 6);
    assert!(refine_layers(&rec, 0.5, 3.0, &flat_range, &mut rng).is_err());
}

mod properties {
    use super::super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        /// Containment probability is a probability and grows with the band.
        #[test]
        fn band_probability_monotone_under_inclusion(
            x in -0.9f64..0.9,
            y in -0.9f64..0.9,
            dt in 0.05f64..3.0,
            margin in 0.05f64..2.0,
            widen in 0.01f64..1.5,
        ) {
            let lo = x.min(y) - margin;
            let hi = x.max(y) + margin;
            let narrow = band_probability(0.0, dt, x, y, lo, hi, 1e-11)
                .unwrap()
                .point_estimate(1e-11)
                .unwrap();
            let wide = band_probability(0.0, dt, x, y, lo - widen, hi + widen, 1e-11)
                .unwrap()
                .point_estimate(1e-11)
                .unwrap();
            prop_assert!((0.0..=1.0).contains(&narrow));
            prop_assert!(narrow <= wide + 1e-9, "narrow {narrow} > wide {wide}");
        }

        /// Every refinement step keeps the bracket nested and ordered.
        #[test]
        fn enclosure_refinement_is_monotone(
            x in -0.45f64..0.45,
            y in -0.45f64..0.45,
            dt in 0.05f64..2.0,
            steps in 1usize..40,
        ) {
            let mut e = band_probability(0.0, dt, x, y, -0.5, 0.5, 1.0).unwrap();
            let (mut lo, mut hi) = (e.lo(), e.hi());
            for _ in 0..steps {
                e.refine().unwrap();
                prop_assert!(e.lo() >= lo && e.hi() <= hi && e.lo() <= e.hi());
                lo = e.lo();
                hi = e.hi();
            }
        }
    }
}
