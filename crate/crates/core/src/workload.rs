//! Per-container request arrivals as seeded Poisson processes.

use rand::Rng;
use statrs::function::factorial::ln_factorial;
use thiserror::Error;

use crate::model::{ContainerId, FogTopology};
use crate::rng::{stream, Domain};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorkloadError {
    #[error("invalid Poisson rate {0}: must be finite and non-negative")]
    InvalidLambda(f64),
}

/// Rates up to this use sequential inversion; above it, transformed rejection.
const INVERSION_LIMIT: f64 = 30.0;

/// Draws one Poisson(`lambda`) variate.
///
/// Small rates use inversion by sequential search over the pmf. Larger rates
/// use Hörmann's transformed rejection with squeeze (PTRS), which is exact:
/// every accepted value passes the ratio test against the true pmf.
pub fn sample_poisson<R: Rng + ?Sized>(rng: &mut R, lambda: f64) -> Result<u64, WorkloadError> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(WorkloadError::InvalidLambda(lambda));
    }
    if lambda == 0.0 {
        return Ok(0);
    }
    Ok(if lambda <= INVERSION_LIMIT {
        poisson_inversion(rng, lambda)
    } else {
        poisson_ptrs(rng, lambda)
    })
}

fn poisson_inversion<R: Rng + ?Sized>(rng: &mut R, lambda: f64) -> u64 {
    let u: f64 = rng.random();
    let mut k = 0u64;
    let mut p = (-lambda).exp();
    let mut cdf = p;
    // Past ~lambda + 40 sd the remaining mass is below f64 resolution.
    let cap = (lambda + 40.0 * lambda.sqrt() + 40.0) as u64;
    while u > cdf && k < cap {
        k += 1;
        p *= lambda / k as f64;
        cdf += p;
    }
    k
}

fn poisson_ptrs<R: Rng + ?Sized>(rng: &mut R, lambda: f64) -> u64 {
    let slam = lambda.sqrt();
    let loglam = lambda.ln();
    let b = 0.931 + 2.53 * slam;
    let a = -0.059 + 0.02483 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let vr = 0.9277 - 3.6224 / (b - 2.0);
    loop {
        let u = rng.random::<f64>() - 0.5;
        let v: f64 = rng.random();
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + lambda + 0.43).floor();
        if us >= 0.07 && v <= vr {
            return k as u64;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        let lhs = v.ln() + inv_alpha.ln() - (a / (us * us) + b).ln();
        let rhs = -lambda + k * loglam - ln_factorial(k as u64);
        if lhs <= rhs {
            return k as u64;
        }
    }
}

/// Arrivals for one slot, indexed `[fog][device][container]` in topology order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RequestBatch {
    pub slot: u64,
    pub counts: Vec<Vec<Vec<u64>>>,
}

impl RequestBatch {
    pub fn fog_total(&self, fog: usize) -> u64 {
        self.counts[fog].iter().flatten().sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().flatten().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.total() == 0
    }

    pub fn get(&self, fog: usize, device: usize, container: usize) -> u64 {
        self.counts[fog][device][container]
    }

    /// Count for `id`, or `None` if the container is not in this batch.
    pub fn count(&self, id: ContainerId) -> Option<u64> {
        self.counts
            .get(id.fog.checked_sub(1)? as usize)?
            .get(id.device.checked_sub(1)? as usize)?
            .get(id.container.checked_sub(1)? as usize)
            .copied()
    }
}

fn container_key(fog: usize, device: usize, container: usize) -> u64 {
    ((fog as u64) << 42) | ((device as u64) << 21) | container as u64
}

/// Draws one Poisson count per container for `slot`.
///
/// Each `(slot, container)` pair reads its own stream derived from `seed`, so
/// the batch is a pure function of `(topology rates, seed, slot)` and adding a
/// container leaves every other container's draws untouched.
pub fn generate_slot(topology: &FogTopology, slot: u64, seed: u64) -> RequestBatch {
    let counts = topology
        .fog_nodes
        .iter()
        .enumerate()
        .map(|(f, fog)| {
            fog.devices
                .iter()
                .enumerate()
                .map(|(d, device)| {
                    device
                        .containers
                        .iter()
                        .enumerate()
                        .map(|(c, container)| {
                            let mut rng = stream(seed, Domain::Arrivals, slot, container_key(f, d, c));
                            sample_poisson(&mut rng, container.lambda)
                                .expect("container rates are validated at build time")
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    RequestBatch { slot, counts }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_topology, Span, TopologyConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_rate_is_always_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!((0..1000).all(|_| sample_poisson(&mut rng, 0.0) == Ok(0)));
    }

    #[test]
    fn rejects_bad_rates() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(sample_poisson(&mut rng, -0.1).is_err());
        assert!(sample_poisson(&mut rng, f64::NAN).is_err());
        assert!(sample_poisson(&mut rng, f64::INFINITY).is_err());
    }

    #[test]
    fn same_seed_same_sequence() {
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..100)
                .map(|i| sample_poisson(&mut rng, [0.5, 4.0, 45.0][i % 3]).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(77), draw(77));
    }

    #[test]
    fn moments_at_rate_four() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let xs: Vec<f64> = (0..10_000)
            .map(|_| sample_poisson(&mut rng, 4.0).unwrap() as f64)
            .collect();
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((3.8..=4.2).contains(&mean), "mean {mean}");
        assert!((3.4..=4.6).contains(&var), "variance {var}");
    }

    #[test]
    fn large_rate_mean_within_five_sigma() {
        for lambda in [31.0, 60.0, 100.0] {
            let mut rng = ChaCha8Rng::seed_from_u64(lambda as u64);
            let n = 10_000.0;
            let mean = (0..10_000)
                .map(|_| sample_poisson(&mut rng, lambda).unwrap() as f64)
                .sum::<f64>()
                / n;
            let tol = 5.0 * (lambda / n).sqrt();
            assert!((mean - lambda).abs() <= tol, "lambda {lambda}: mean {mean}");
        }
    }

    fn rate_config(lo: f64, hi: f64) -> TopologyConfig {
        TopologyConfig {
            arrival_rate: Span::new(lo, hi),
            ..TopologyConfig::small()
        }
    }

    #[test]
    fn zero_rates_give_empty_batch() {
        let t = build_topology(&rate_config(0.0, 0.0), 5).unwrap();
        let b = generate_slot(&t, 3, 11);
        assert!(b.is_empty());
        assert_eq!(b.counts.len(), 1);
        assert_eq!(b.counts[0].iter().map(Vec::len).sum::<usize>(), 6);
    }

    #[test]
    fn batches_are_deterministic_and_cover_topology() {
        let t = build_topology(&rate_config(1.0, 9.0), 5).unwrap();
        assert_eq!(generate_slot(&t, 7, 1), generate_slot(&t, 7, 1));
        assert_ne!(generate_slot(&t, 7, 1), generate_slot(&t, 8, 1));
        let b = generate_slot(&t, 7, 1);
        for c in t.containers() {
            assert!(b.count(c.id).is_some());
        }
        assert_eq!(b.fog_total(0), b.total());
    }

    #[test]
    fn five_hundred_slots_at_rate_twenty() {
        let mut t = build_topology(&rate_config(20.0, 20.0), 5).unwrap();
        t.fog_nodes[0].devices.truncate(1);
        t.fog_nodes[0].devices[0].containers.truncate(1);
        let total: u64 = (0..500).map(|s| generate_slot(&t, s, 99).total()).sum();
        // mean 10 000, sd = sqrt(10 000) = 100
        assert!((9_500..=10_500).contains(&total), "{total}");
    }

    #[test]
    fn adding_a_container_leaves_others_alone() {
        let t = build_topology(&rate_config(1.0, 9.0), 5).unwrap();
        let mut bigger = t.clone();
        let extra = bigger.fog_nodes[0].devices[0].containers[0].clone();
        bigger.fog_nodes[0].devices[0].containers.push(extra);
        let a = generate_slot(&t, 4, 3);
        let b = generate_slot(&bigger, 4, 3);
        assert_eq!(a.counts[0][1], b.counts[0][1]);
        assert_eq!(a.counts[0][0][..], b.counts[0][0][..3]);
    }
}
