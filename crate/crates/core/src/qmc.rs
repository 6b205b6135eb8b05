//! Scrambled Halton sequences.
//!
//! Each coordinate uses a distinct prime base; every digit position of every
//! coordinate gets its own random permutation of the digits (Matoušek-style
//! random digit scrambling). Enough digits are kept to resolve 2⁻⁵³.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

/// Keeps inverse-CDF inputs away from 0 and 1.
const UNIT_EPS: f64 = 1e-15;

fn first_primes(n: usize) -> Vec<u32> {
    let mut primes = Vec::with_capacity(n);
    let mut c = 2u32;
    while primes.len() < n {
        if primes.iter().take_while(|&&p| p * p <= c).all(|&p| c % p != 0) {
            primes.push(c);
        }
        c += 1;
    }
    primes
}

#[derive(Debug, Clone)]
pub struct ScrambledHalton {
    bases: Vec<u32>,
    // perms[dim][digit][d]
    perms: Vec<Vec<Vec<u32>>>,
}

impl ScrambledHalton {
    pub fn new(dim: usize, seed: u64) -> Self {
        let bases = first_primes(dim);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let perms = bases
            .iter()
            .map(|&b| {
                let digits = (53.0 / (b as f64).log2()).ceil() as usize;
                (0..digits)
                    .map(|_| {
                        let mut p: Vec<u32> = (0..b).collect();
                        p.shuffle(&mut rng);
                        p
                    })
                    .collect()
            })
            .collect();
        Self { bases, perms }
    }

    pub fn dim(&self) -> usize {
        self.bases.len()
    }

    /// Coordinate `axis` of point number `index`, in `[0, 1)`.
    pub fn coordinate(&self, index: u64, axis: usize) -> f64 {
        let b = self.bases[axis] as u64;
        let inv_b = 1.0 / b as f64;
        let mut n = index;
        let mut scale = inv_b;
        let mut u = 0.0;
        for perm in &self.perms[axis] {
            let digit = (n % b) as usize;
            n /= b;
            u += perm[digit] as f64 * scale;
            scale *= inv_b;
        }
        u.min(1.0 - f64::EPSILON)
    }

    pub fn point(&self, index: u64) -> Vec<f64> {
        (0..self.dim()).map(|a| self.coordinate(index, a)).collect()
    }

    /// The first `n` points, row-major `n × dim`.
    pub fn points(&self, n: usize) -> Vec<f64> {
        (0..n as u64).flat_map(|i| self.point(i)).collect()
    }
}

/// `n × dim` quasi-random standard-normal draws, row-major.
pub fn standard_normal_samples(n: usize, dim: usize, seed: u64) -> Vec<f64> {
    let normal = Normal::standard();
    ScrambledHalton::new(dim, seed)
        .points(n)
        .into_iter()
        .map(|u| normal.inverse_cdf(u.clamp(UNIT_EPS, 1.0 - UNIT_EPS)))
        .collect()
}
