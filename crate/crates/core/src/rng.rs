//! Deterministic random streams.
//!
//! All stochastic code in this crate draws from [`RngStream`], a thin wrapper
//! around counter-based ChaCha8. The same seed produces the same draw sequence
//! on every platform, and independent substreams can be split off for
//! parallel work (seeds, iterates, grid cells) without sharing state.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Independent stream `index` of the same base seed. Streams with
    /// different indices never overlap, so parallel runs can each take one.
    pub fn substream(&self, index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index.wrapping_add(1));
        Self {
            seed: self.seed,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform draw in [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }

    /// Uniform draw in [lo, hi).
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Standard normal via Box-Muller. Two uniforms per draw keeps the
    /// stream layout independent of any library's ziggurat tables.
    pub fn normal(&mut self) -> f64 {
        let u1 = loop {
            let u = self.uniform();
            if u > 0.0 {
                break u;
            }
        };
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Categorical draw from an (unnormalized is fine) nonnegative weight row.
    pub fn categorical(&mut self, weights: &[f64]) -> usize {
        let total: f64 = weights.iter().sum();
        let mut t = self.uniform() * total;
        for (i, w) in weights.iter().enumerate() {
            t -= w;
            if t < 0.0 {
                return i;
            }
        }
        weights.len() - 1
    }

    /// Uniform choice among `items`.
    pub fn choose<'a, T>(&mut self, items: &'a [T]) -> &'a T {
        let i = (self.uniform() * items.len() as f64) as usize;
        &items[i.min(items.len() - 1)]
    }

    /// Dirichlet(1, ..., 1) draw: uniform over the simplex.
    pub fn simplex(&mut self, n: usize) -> Vec<f64> {
        let mut v: Vec<f64> = (0..n)
            .map(|_| {
                let u = loop {
                    let u = self.uniform();
                    if u > 0.0 {
                        break u;
                    }
                };
                -u.ln()
            })
            .collect();
        let total: f64 = v.iter().sum();
        for x in &mut v {
            *x /= total;
        }
        v
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_seed_identical_sequence() {
        let mut a = RngStream::new(7);
        let mut b = RngStream::new(7);
        for _ in 0..100 {
            assert_eq!(a.uniform().to_bits(), b.uniform().to_bits());
        }
    }

    #[test]
    fn substreams_differ() {
        let base = RngStream::new(3);
        let mut s0 = base.substream(0);
        let mut s1 = base.substream(1);
        let a: Vec<u64> = (0..8).map(|_| s0.next_u64()).collect();
        let b: Vec<u64> = (0..8).map(|_| s1.next_u64()).collect();
        assert_ne!(a, b);
    }

    #[test]
    fn normal_moments() {
        let mut rng = RngStream::new(11);
        let n = 200_000;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let z = rng.normal();
            sum += z;
            sumsq += z * z;
        }
        let mean = sum / n as f64;
        let var = sumsq / n as f64 - mean * mean;
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var - 1.0).abs() < 0.02, "var {var}");
    }

    #[test]
    fn simplex_sums_to_one() {
        let mut rng = RngStream::new(5);
        for _ in 0..50 {
            let p = rng.simplex(5);
            let s: f64 = p.iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
            assert!(p.iter().all(|&x| x > 0.0));
        }
    }
}
