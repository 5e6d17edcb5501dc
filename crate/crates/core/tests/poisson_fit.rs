//! Goodness of fit of the Poisson sampler against the exact pmf.

use fogsim_core::workload::sample_poisson;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Exact pmf by the recurrence p(k) = p(k-1) * lambda / k, up to `kmax`.
fn pmf(lambda: f64, kmax: usize) -> Vec<f64> {
    let mut p = vec![(-lambda).exp()];
    for k in 1..=kmax {
        let prev = p[k - 1];
        p.push(prev * lambda / k as f64);
    }
    p
}

/// Pearson statistic and degrees of freedom, pooling both tails until every
/// bin expects at least 5 draws.
fn chi_square(counts: &[u64], lambda: f64, n: u64) -> (f64, usize) {
    let kmax = counts.len() - 1;
    let p = pmf(lambda, kmax);
    let expected: Vec<f64> = p.iter().map(|q| q * n as f64).collect();
    let mode = lambda.floor() as usize;
    let head = |k: usize| p[..=k].iter().sum::<f64>() * n as f64;
    let tail = |k: usize| (1.0 - p[..k].iter().sum::<f64>()) * n as f64;

    // Left pool [0, lo]: everything below the last small bin left of the mode.
    let mut lo = (0..mode).rev().find(|&k| expected[k] < 5.0).unwrap_or(0);
    while head(lo) < 5.0 {
        lo += 1;
    }
    // Right pool [hi, inf): from the first small bin right of the mode.
    let mut hi = (mode + 1..=kmax).find(|&k| expected[k] < 5.0).unwrap_or(kmax);
    while tail(hi) < 5.0 && hi > lo + 1 {
        hi -= 1;
    }
    // bins: [0, lo], lo+1 ..= hi-1 singly, [hi, inf)
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let below_p: f64 = p[..=lo].iter().sum();
    bins.push((counts[..=lo].iter().sum::<u64>() as f64, below_p * n as f64));
    for k in lo + 1..hi {
        bins.push((counts[k] as f64, expected[k]));
    }
    let above_p = 1.0 - p[..hi].iter().sum::<f64>();
    bins.push((counts[hi..].iter().sum::<u64>() as f64, above_p * n as f64));

    let stat = bins.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    (stat, bins.len() - 1)
}

fn p_value(lambda: f64, seed: u64) -> f64 {
    const N: u64 = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kmax = (lambda + 12.0 * lambda.sqrt() + 20.0) as usize;
    let mut counts = vec![0u64; kmax + 1];
    for _ in 0..N {
        let k = sample_poisson(&mut rng, lambda).unwrap() as usize;
        counts[k.min(kmax)] += 1;
    }
    let (stat, df) = chi_square(&counts, lambda, N);
    1.0 - ChiSquared::new(df as f64).unwrap().cdf(stat)
}

#[test]
fn pmf_recurrence_sums_to_one() {
    for lambda in [0.5, 4.0, 30.0, 100.0] {
        let total: f64 = pmf(lambda, 400).iter().sum();
        assert!((total - 1.0).abs() < 1e-12, "{lambda}: {total}");
    }
}

#[test]
fn fits_exact_pmf_in_both_sampler_regimes() {
    for (lambda, seed) in [(0.5, 11), (4.0, 12), (30.0, 13), (31.0, 14), (100.0, 15)] {
        let p = p_value(lambda, seed);
        assert!(p > 0.001, "lambda {lambda}: p = {p}");
    }
}

#[test]
fn biased_sampler_is_rejected() {
    // The same statistic must notice a shifted mean.
    const N: u64 = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut counts = vec![0u64; 60];
    for _ in 0..N {
        let k = sample_poisson(&mut rng, 4.4).unwrap() as usize;
        counts[k.min(59)] += 1;
    }
    let (stat, df) = chi_square(&counts, 4.0, N);
    let p = 1.0 - ChiSquared::new(df as f64).unwrap().cdf(stat);
    assert!(p < 0.001, "p = {p}");
}
