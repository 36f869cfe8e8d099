//! Statistical tests used by the verification harness.

use crate::error::{Error, Result};
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Survival function of the Kolmogorov distribution,
/// `Q(lambda) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 lambda^2)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let k = f64::from(k);
        let term = (-2.0 * k * k * lambda * lambda).exp();
        sum += sign * term;
        sign = -sign;
        if term < 1e-18 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

fn sorted_copy(samples: &[f64]) -> Result<Vec<f64>> {
    if samples.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidInput("sample contains NaN".into()));
    }
    let mut s = samples.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(s)
}

/// One-sample Kolmogorov–Smirnov test against an analytic CDF.
///
/// Returns `(statistic, p_value)` with the asymptotic p-value using the
/// Stephens small-sample correction. Degenerate samples (all values equal)
/// give statistic 1 against any continuous reference.
pub fn ks_one_sample(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<(f64, f64)> {
    if samples.len() < 100 {
        return Err(Error::InvalidInput(format!(
            "KS test needs at least 100 samples, got {}",
            samples.len()
        )));
    }
    let s = sorted_copy(samples)?;
    let n = s.len() as f64;
    if s.first() == s.last() {
        return Ok((1.0, 0.0));
    }
    let mut d: f64 = 0.0;
    for (i, &x) in s.iter().enumerate() {
        let f = cdf(x);
        d = d.max((f - i as f64 / n).abs());
        d = d.max(((i + 1) as f64 / n - f).abs());
    }
    let lambda = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
    Ok((d, kolmogorov_sf(lambda)))
}

/// Two-sample Kolmogorov–Smirnov test with the asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.len() < 100 || b.len() < 100 {
        return Err(Error::InvalidInput(
            "KS test needs at least 100 samples on each side".into(),
        ));
    }
    let xs = sorted_copy(a)?;
    let ys = sorted_copy(b)?;
    if xs.first() == xs.last() && ys.first() == ys.last() && xs[0] == ys[0] {
        return Ok((0.0, 1.0));
    }
    let (n, m) = (xs.len() as f64, ys.len() as f64);
    let mut i = 0usize;
    let mut j = 0usize;
    let mut d: f64 = 0.0;
    while i < xs.len() && j < ys.len() {
        let vx = xs[i];
        let vy = ys[j];
        let v = vx.min(vy);
        while i < xs.len() && xs[i] <= v {
            i += 1;
        }
        while j < ys.len() && ys[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    let n_eff = (n * m / (n + m)).sqrt();
    Ok((d, kolmogorov_sf(n_eff * d)))
}

/// Kolmogorov–Smirnov distance between two weightings of the *same* sample
/// points. Used by convergence diagnostics where proposal paths are shared
/// across grid resolutions and only their importance weights differ, so the
/// sampling noise cancels and the distance isolates the weight tilt.
pub fn ks_distance_weighted_pair(values: &[f64], w_a: &[f64], w_b: &[f64]) -> Result<f64> {
    if values.len() != w_a.len() || values.len() != w_b.len() || values.is_empty() {
        return Err(Error::InvalidInput("weighted pair length mismatch".into()));
    }
    let (ta, tb): (f64, f64) = (w_a.iter().sum(), w_b.iter().sum());
    if !(ta > 0.0 && tb > 0.0) {
        return Err(Error::InvalidInput("weights sum to zero".into()));
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidInput("sample contains NaN".into()));
    }
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let mut fa = 0.0;
    let mut fb = 0.0;
    let mut d: f64 = 0.0;
    for &i in &order {
        fa += w_a[i] / ta;
        fb += w_b[i] / tb;
        d = d.max((fa - fb).abs());
    }
    Ok(d)
}

/// Chi-square goodness-of-fit of observed counts against known cell
/// probabilities. Returns `(statistic, p_value)`.
pub fn chi_square_gof(observed: &[u64], probs: &[f64]) -> Result<(f64, f64)> {
    if observed.len() != probs.len() || observed.len() < 2 {
        return Err(Error::InvalidInput("chi-square needs matching bins (>= 2)".into()));
    }
    let n: u64 = observed.iter().sum();
    if n == 0 {
        return Err(Error::InvalidInput("chi-square on empty sample".into()));
    }
    let mut stat = 0.0;
    for (&o, &p) in observed.iter().zip(probs) {
        if !(p > 0.0) {
            return Err(Error::InvalidInput(format!("cell probability {p} not positive")));
        }
        let e = n as f64 * p;
        stat += (o as f64 - e).powi(2) / e;
    }
    let df = (observed.len() - 1) as f64;
    let chi = ChiSquared::new(df).map_err(|e| Error::NumericFailure(e.to_string()))?;
    Ok((stat, 1.0 - chi.cdf(stat)))
}

/// Two-sample chi-square homogeneity test on binned counts.
pub fn chi_square_two_sample(a: &[u64], b: &[u64]) -> Result<(f64, f64)> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::InvalidInput("chi-square needs matching bins (>= 2)".into()));
    }
    let na: u64 = a.iter().sum();
    let nb: u64 = b.iter().sum();
    if na == 0 || nb == 0 {
        return Err(Error::InvalidInput("chi-square on empty sample".into()));
    }
    let ka = (nb as f64 / na as f64).sqrt();
    let kb = (na as f64 / nb as f64).sqrt();
    let mut stat = 0.0;
    let mut df = -1i64;
    for (&oa, &ob) in a.iter().zip(b) {
        let tot = oa + ob;
        if tot == 0 {
            continue;
        }
        df += 1;
        stat += (ka * oa as f64 - kb * ob as f64).powi(2) / tot as f64;
    }
    if df < 1 {
        return Err(Error::InvalidInput("chi-square has no informative bins".into()));
    }
    let chi = ChiSquared::new(df as f64).map_err(|e| Error::NumericFailure(e.to_string()))?;
    Ok((stat, 1.0 - chi.cdf(stat)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::replication_stream;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn uniform_sample_calibration() {
        // p > 0.01 should hold in at least 98 of 100 seeded repeats.
        let mut ok = 0;
        for seed in 0..100u64 {
            let mut rng = replication_stream(1000 + seed, 0);
            let sample: Vec<f64> = (0..10_000).map(|_| rng.random::<f64>()).collect();
            let (_, p) = ks_one_sample(&sample, |x| x.clamp(0.0, 1.0)).unwrap();
            if p > 0.01 {
                ok += 1;
            }
        }
        assert!(ok >= 98, "only {ok}/100 uniform KS runs passed");
    }

    #[test]
    fn ks_detects_location_shift() {
        let mut rng = replication_stream(2000, 0);
        let n0 = Normal::new(0.0, 1.0).unwrap();
        let n1 = Normal::new(0.5, 1.0).unwrap();
        let a: Vec<f64> = (0..10_000).map(|_| n0.sample(&mut rng)).collect();
        let b: Vec<f64> = (0..10_000).map(|_| n1.sample(&mut rng)).collect();
        let (_, p) = ks_two_sample(&a, &b).unwrap();
        assert!(p < 1e-6, "p = {p}");
    }

    #[test]
    fn ks_statistic_near_zero_against_own_ecdf() {
        let mut rng = replication_stream(2000, 1);
        let mut sample: Vec<f64> = (0..10_000).map(|_| rng.random::<f64>()).collect();
        sample.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let ecdf = sample.clone();
        let (d, _) = ks_one_sample(&sample, |x| {
            let k = ecdf.partition_point(|&v| v <= x);
            k as f64 / ecdf.len() as f64
        })
        .unwrap();
        assert!(d <= 1.0 / 100.0, "d = {d}");
    }

    #[test]
    fn degenerate_sample_statistic_is_one() {
        let sample = vec![0.5; 200];
        let (d, p) = ks_one_sample(&sample, |x| x.clamp(0.0, 1.0)).unwrap();
        assert_eq!(d, 1.0);
        assert_eq!(p, 0.0);
    }

    #[test]
    fn chi_square_accepts_true_cells() {
        let mut rng = replication_stream(2000, 2);
        let probs = [0.5, 0.3, 0.2];
        let mut counts = [0u64; 3];
        for _ in 0..50_000 {
            let u: f64 = rng.random();
            let idx = if u < 0.5 {
                0
            } else if u < 0.8 {
                1
            } else {
                2
            };
            counts[idx] += 1;
        }
        let (_, p) = chi_square_gof(&counts, &probs).unwrap();
        assert!(p > 0.001, "p = {p}");
    }
}
