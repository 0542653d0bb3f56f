//! Client request generation.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::net::Nanos;
use crate::types::{hash_object_id, ObjectId};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KeyDistribution {
    Uniform,
    Zipf { theta: f64 },
}

/// A fixed-rate generator that does not wait for replies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpenLoop {
    pub rate_per_sec: f64,
    pub write_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkloadConfig {
    pub num_keys: u32,
    pub distribution: KeyDistribution,
    /// Write fraction for the closed-loop clients.
    pub write_ratio: f64,
    /// Closed-loop clients, one outstanding request each.
    pub clients: u32,
    pub open_loop: Option<OpenLoop>,
    /// Retry timeout; `None` means ten base round trips.
    pub timeout_ns: Option<Nanos>,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        WorkloadConfig {
            num_keys: 10_000,
            distribution: KeyDistribution::Uniform,
            write_ratio: 0.05,
            clients: 64,
            open_loop: None,
            timeout_ns: None,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum WorkloadError {
    #[error("num_keys must be positive")]
    NoKeys,
    #[error("write ratio must be in [0, 1], got {0}")]
    WriteRatio(f64),
    #[error("zipf theta must be non-negative and finite, got {0}")]
    Theta(f64),
    #[error("open-loop rate must be positive and finite, got {0}")]
    Rate(f64),
}

impl WorkloadConfig {
    pub fn validate(&self) -> Result<(), WorkloadError> {
        if self.num_keys == 0 {
            return Err(WorkloadError::NoKeys);
        }
        let ratio_ok = |r: f64| (0.0..=1.0).contains(&r);
        if !ratio_ok(self.write_ratio) {
            return Err(WorkloadError::WriteRatio(self.write_ratio));
        }
        if let KeyDistribution::Zipf { theta } = self.distribution {
            if !(theta >= 0.0 && theta.is_finite()) {
                return Err(WorkloadError::Theta(theta));
            }
        }
        if let Some(o) = self.open_loop {
            if !(o.rate_per_sec > 0.0 && o.rate_per_sec.is_finite()) {
                return Err(WorkloadError::Rate(o.rate_per_sec));
            }
            if !ratio_ok(o.write_ratio) {
                return Err(WorkloadError::WriteRatio(o.write_ratio));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum OpKind {
    Read,
    Write,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Op {
    pub kind: OpKind,
    /// Key rank: 0 is the most popular key under zipf.
    pub key: u32,
}

/// Draws key ranks from a precomputed cumulative distribution.
#[derive(Debug, Clone)]
pub enum KeySampler {
    Uniform(u32),
    Cdf(Vec<f64>),
}

impl KeySampler {
    pub fn new(num_keys: u32, dist: KeyDistribution) -> Self {
        match dist {
            KeyDistribution::Uniform => KeySampler::Uniform(num_keys),
            KeyDistribution::Zipf { theta } => {
                let mut acc = 0.0;
                let mut cdf: Vec<f64> = (1..=num_keys)
                    .map(|k| {
                        acc += (k as f64).powf(-theta);
                        acc
                    })
                    .collect();
                for c in &mut cdf {
                    *c /= acc;
                }
                KeySampler::Cdf(cdf)
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        match self {
            KeySampler::Uniform(n) => rng.gen_range(0..*n),
            KeySampler::Cdf(cdf) => {
                let u: f64 = rng.gen();
                (cdf.partition_point(|c| *c <= u) as u32).min(cdf.len() as u32 - 1)
            }
        }
    }
}

/// Key population plus mix; cheap to clone and share among clients.
#[derive(Debug, Clone)]
pub struct Workload {
    sampler: Arc<KeySampler>,
    objects: Arc<Vec<ObjectId>>,
}

impl Workload {
    pub fn new(cfg: &WorkloadConfig) -> Self {
        let objects = (0..cfg.num_keys)
            .map(|k| hash_object_id(format!("key{k}").as_bytes()).expect("non-empty key"))
            .collect();
        Workload {
            sampler: Arc::new(KeySampler::new(cfg.num_keys, cfg.distribution)),
            objects: Arc::new(objects),
        }
    }

    pub fn next_op<R: Rng + ?Sized>(&self, write_ratio: f64, rng: &mut R) -> Op {
        let kind = if write_ratio > 0.0 && rng.gen_bool(write_ratio) {
            OpKind::Write
        } else {
            OpKind::Read
        };
        Op {
            kind,
            key: self.sampler.sample(rng),
        }
    }

    pub fn object(&self, key: u32) -> ObjectId {
        self.objects[key as usize]
    }
}

/// Independent stream seed for `stream` derived from a master seed.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    // splitmix64 finalizer over the combined input.
    let mut z = master ^ stream.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn no_writes_means_all_reads() {
        let w = Workload::new(&WorkloadConfig {
            num_keys: 10,
            ..Default::default()
        });
        let mut r = rng(1);
        assert!((0..10_000).all(|_| w.next_op(0.0, &mut r).kind == OpKind::Read));
    }

    #[test]
    fn write_fraction_converges() {
        let w = Workload::new(&WorkloadConfig {
            num_keys: 10,
            ..Default::default()
        });
        let mut r = rng(2);
        let n = 200_000;
        let writes = (0..n)
            .filter(|_| w.next_op(0.05, &mut r).kind == OpKind::Write)
            .count();
        // Binomial standard deviation is ~97; allow five.
        assert!((writes as f64 - 0.05 * n as f64).abs() < 5.0 * (n as f64 * 0.05 * 0.95).sqrt());
    }

    #[test]
    fn zipf_zero_is_uniform() {
        let k = 100u32;
        let s = KeySampler::new(k, KeyDistribution::Zipf { theta: 0.0 });
        let mut r = rng(3);
        let n = 100_000;
        let mut counts = vec![0u32; k as usize];
        for _ in 0..n {
            counts[s.sample(&mut r) as usize] += 1;
        }
        let expected = n as f64 / k as f64;
        let chi2: f64 = counts
            .iter()
            .map(|c| (*c as f64 - expected).powi(2) / expected)
            .sum();
        // Critical value of chi-square with 99 degrees of freedom at p = 0.001.
        assert!(chi2 < 148.2, "chi2 = {chi2}");
    }

    #[test]
    fn zipf_top_key_matches_harmonic_sum() {
        let keys = 1_000_000u32;
        let s = KeySampler::new(keys, KeyDistribution::Zipf { theta: 0.9 });
        let h: f64 = (1..=keys).map(|k| 1.0 / (k as f64).powf(0.9)).sum();
        let mut r = rng(4);
        let n = 1_000_000;
        let top = (0..n).filter(|_| s.sample(&mut r) == 0).count() as f64;
        let expected = n as f64 / h;
        assert!(
            (top - expected).abs() / expected < 0.05,
            "top {top} vs {expected}"
        );
    }

    #[test]
    fn validation() {
        assert!(WorkloadConfig::default().validate().is_ok());
        let bad = WorkloadConfig {
            write_ratio: 1.2,
            ..Default::default()
        };
        assert_eq!(bad.validate(), Err(WorkloadError::WriteRatio(1.2)));
        let bad = WorkloadConfig {
            distribution: KeyDistribution::Zipf { theta: -1.0 },
            ..Default::default()
        };
        assert_eq!(bad.validate(), Err(WorkloadError::Theta(-1.0)));
        let bad = WorkloadConfig {
            num_keys: 0,
            ..Default::default()
        };
        assert_eq!(bad.validate(), Err(WorkloadError::NoKeys));
    }

    #[test]
    fn seeds_are_deterministic_and_distinct() {
        assert_eq!(derive_seed(7, 3), derive_seed(7, 3));
        assert_ne!(derive_seed(7, 3), derive_seed(7, 4));
        assert_ne!(derive_seed(7, 3), derive_seed(8, 3));
        let w = Workload::new(&WorkloadConfig::default());
        let a: Vec<Op> = (0..50)
            .map({
                let mut r = rng(9);
                move |_| w.next_op(0.3, &mut r)
            })
            .collect();
        let w = Workload::new(&WorkloadConfig::default());
        let b: Vec<Op> = (0..50)
            .map({
                let mut r = rng(9);
                move |_| w.next_op(0.3, &mut r)
            })
            .collect();
        assert_eq!(a, b);
    }
}
