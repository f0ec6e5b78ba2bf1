//! Counter-based, splittable randomness.
//!
//! A [`SeedPath`] names a random stream by a root seed and a path of
//! `(tag, index)` pairs. The path is hashed into a ChaCha key, so any stream
//! can be produced directly (sample 1000 of a dataset does not depend on
//! samples 0..999) and the result does not depend on scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub type StreamRng = ChaCha12Rng;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SeedPath {
    root: u64,
    path: Vec<(&'static str, u64)>,
}

impl SeedPath {
    pub fn new(root: u64) -> Self {
        Self { root, path: Vec::new() }
    }

    pub fn root(&self) -> u64 {
        self.root
    }

    pub fn path(&self) -> &[(&'static str, u64)] {
        &self.path
    }

    /// A child stream, independent of the parent and of its siblings.
    pub fn child(&self, tag: &'static str, index: u64) -> Self {
        let mut path = self.path.clone();
        path.push((tag, index));
        Self { root: self.root, path }
    }

    pub fn key(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(b"flowforge.seed.v1");
        h.update(self.root.to_le_bytes());
        for (tag, index) in &self.path {
            h.update((tag.len() as u64).to_le_bytes());
            h.update(tag.as_bytes());
            h.update(index.to_le_bytes());
        }
        h.finalize().into()
    }

    pub fn rng(&self) -> StreamRng {
        StreamRng::from_seed(self.key())
    }
}

/// Uniform draw in `[lo, hi]`.
pub fn sample_uniform<R: Rng + ?Sized>(lo: f64, hi: f64, rng: &mut R) -> Result<f64> {
    if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidRange { lo, hi });
    }
    if lo == hi {
        return Ok(lo);
    }
    let t: f64 = rng.random();
    Ok((lo + (hi - lo) * t).clamp(lo, hi))
}

/// A draw of the symmetric unit variable on `[-1, 1]`.
pub fn sample_symmetric<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.random::<f64>() * 2.0 - 1.0
}

/// Uniform integer in `[lo, hi]` (inclusive).
pub fn sample_int<R: Rng + ?Sized>(lo: u32, hi: u32, rng: &mut R) -> Result<u32> {
    if lo > hi {
        return Err(Error::InvalidRange { lo: lo as f64, hi: hi as f64 });
    }
    Ok(rng.random_range(lo..=hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_range() {
        let mut rng = SeedPath::new(1).rng();
        assert_eq!(sample_uniform(5.0, 5.0, &mut rng).unwrap(), 5.0);
    }

    #[test]
    fn inverted_range_errors() {
        let mut rng = SeedPath::new(1).rng();
        assert!(matches!(sample_uniform(2.0, 1.0, &mut rng), Err(Error::InvalidRange { .. })));
        assert!(sample_int(4, 3, &mut rng).is_err());
    }

    #[test]
    fn same_path_same_value() {
        let p = SeedPath::new(42).child("mask", 3).child("poly", 0);
        let a = sample_uniform(-1.0, 1.0, &mut p.rng()).unwrap();
        let b = sample_uniform(-1.0, 1.0, &mut p.clone().rng()).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn siblings_differ() {
        let p = SeedPath::new(42);
        assert_ne!(p.child("a", 0).key(), p.child("a", 1).key());
        assert_ne!(p.child("a", 0).key(), p.child("b", 0).key());
        assert_ne!(p.child("a", 0).child("b", 0).key(), p.child("b", 0).child("a", 0).key());
    }

    #[test]
    fn symmetric_mean_is_centered() {
        let mut rng = SeedPath::new(7).child("mc", 0).rng();
        let n = 1_000_000;
        let mean: f64 = (0..n).map(|_| sample_uniform(-1.0, 1.0, &mut rng).unwrap()).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn values_stay_in_range() {
        let mut rng = SeedPath::new(3).rng();
        for _ in 0..10_000 {
            let v = sample_uniform(0.2, 0.8, &mut rng).unwrap();
            assert!((0.2..=0.8).contains(&v));
            let s = sample_symmetric(&mut rng);
            assert!((-1.0..=1.0).contains(&s));
        }
    }
}
