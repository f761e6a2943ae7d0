//! Deterministic, splittable noise streams.
//!
//! A [`NoiseStream`] is a (seed, path) pair. The seed keys a ChaCha8
//! generator and the path selects one of its 2^64 independent streams, so
//! every replicate, increment and role in a simulation can own a sub-stream
//! whose variates do not depend on scheduling order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoiseStream {
    seed: u64,
    path: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl NoiseStream {
    pub fn new(seed: u64) -> Self {
        Self { seed, path: 0 }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Derive the `index`-th child stream. Children of distinct parents or
    /// with distinct indices land on unrelated ChaCha stream ids.
    pub fn child(&self, index: u64) -> Self {
        let path = splitmix64(self.path ^ splitmix64(index.wrapping_add(0x632b_e59b_d9b4_e019)));
        Self {
            seed: self.seed,
            path,
        }
    }

    /// Named child; `label` keeps roles (e.g. "lhs"/"rhs") on separate streams.
    pub fn fork(&self, label: &str) -> Self {
        let h = label.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
            (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
        });
        self.child(h)
    }

    pub fn rng(&self) -> Sampler {
        let mut key = [0u8; 32];
        for (i, chunk) in key.chunks_mut(8).enumerate() {
            chunk.copy_from_slice(&splitmix64(self.seed.wrapping_add(i as u64)).to_le_bytes());
        }
        let mut inner = ChaCha8Rng::from_seed(key);
        inner.set_stream(self.path);
        Sampler { inner }
    }
}

/// Variate source for one sub-stream.
pub struct Sampler {
    inner: ChaCha8Rng,
}

impl Sampler {
    #[inline]
    pub fn gaussian(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Uniform on [0, 1).
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.inner.gen::<f64>()
    }

    /// Exponential with the given mean.
    #[inline]
    pub fn exponential(&mut self, mean: f64) -> f64 {
        // 1 - U lies in (0, 1], so the log is finite.
        -mean * (1.0 - self.uniform()).ln()
    }

    pub fn poisson(&mut self, mean: f64) -> u64 {
        if mean <= 0.0 {
            return 0;
        }
        if mean < 30.0 {
            // Knuth multiplication; exact for small means.
            let limit = (-mean).exp();
            let mut k = 0u64;
            let mut p = self.uniform();
            while p > limit {
                k += 1;
                p *= self.uniform();
            }
            k
        } else {
            let d = rand_distr::Poisson::new(mean).expect("positive finite mean");
            self.inner.sample::<f64, _>(d) as u64
        }
    }

    pub fn inner_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.inner
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_path_reproduces() {
        let s = NoiseStream::new(7).child(3).fork("lhs");
        let a: Vec<f64> = {
            let mut r = s.rng();
            (0..16).map(|_| r.gaussian()).collect()
        };
        let b: Vec<f64> = {
            let mut r = s.rng();
            (0..16).map(|_| r.gaussian()).collect()
        };
        assert_eq!(a, b);
    }

    #[test]
    fn children_differ() {
        let root = NoiseStream::new(1);
        let mut a = root.child(0).rng();
        let mut b = root.child(1).rng();
        let mut c = NoiseStream::new(2).child(0).rng();
        let x = a.gaussian();
        assert_ne!(x, b.gaussian());
        assert_ne!(x, c.gaussian());
    }

    #[test]
    fn sibling_streams_uncorrelated() {
        let root = NoiseStream::new(11);
        let n = 20_000;
        let mut a = root.child(5).rng();
        let mut b = root.child(6).rng();
        let corr: f64 = (0..n).map(|_| a.gaussian() * b.gaussian()).sum::<f64>() / n as f64;
        // sd of the sample correlation is 1/sqrt(n) ~ 0.007
        assert!(corr.abs() < 0.03, "corr = {corr}");
    }

    #[test]
    fn poisson_mean_and_variance() {
        let mut r = NoiseStream::new(3).rng();
        for &mean in &[0.7, 12.0, 55.0] {
            let n = 40_000;
            let xs: Vec<f64> = (0..n).map(|_| r.poisson(mean) as f64).collect();
            let m = xs.iter().sum::<f64>() / n as f64;
            let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
            assert!(
                (m - mean).abs() < 4.0 * (mean / n as f64).sqrt(),
                "mean {m} vs {mean}"
            );
            assert!((v / mean - 1.0).abs() < 0.05, "dispersion {}", v / mean);
        }
    }
}
