//! Seeded measurement noise.
//!
//! Samples come from ChaCha20 (`rand_chacha` 0.9, one ChaCha stream per
//! channel) turned into standard normals with the basic Box–Muller transform.
//! Both pieces are fixed here so a `(kind, sigma, seed)` triple reproduces the
//! same stream bit-for-bit across releases of this crate.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    #[default]
    None,
    Gaussian,
}

/// Description of a measurement-noise source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct NoiseChannel {
    pub kind: NoiseKind,
    #[serde(default)]
    pub sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

impl NoiseChannel {
    pub fn none() -> Self {
        NoiseChannel::default()
    }

    pub fn gaussian(sigma: f64, seed: u64) -> Self {
        NoiseChannel {
            kind: NoiseKind::Gaussian,
            sigma,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::config(format!(
                "noise sigma must be finite and non-negative, got {}",
                self.sigma
            )));
        }
        Ok(())
    }

    pub fn is_silent(&self) -> bool {
        self.kind == NoiseKind::None || self.sigma == 0.0
    }

    /// Independent stream for measurement channel `channel`.
    pub fn stream(&self, channel: u64) -> NoiseStream {
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        rng.set_stream(channel);
        NoiseStream {
            rng,
            sigma: self.sigma,
            silent: self.is_silent(),
            spare: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NoiseStream {
    rng: ChaCha20Rng,
    sigma: f64,
    silent: bool,
    spare: Option<f64>,
}

impl NoiseStream {
    /// Next sample `σ·N(0, 1)`, or exactly 0 for a silent channel.
    pub fn sample(&mut self) -> f64 {
        if self.silent {
            return 0.0;
        }
        self.sigma * self.standard_normal()
    }

    /// Uniform draw on `(0, 1]`, independent of `sigma`.
    pub fn uniform(&mut self) -> f64 {
        self.uniform_open()
    }

    fn uniform_open(&mut self) -> f64 {
        // 53 random mantissa bits mapped to (0, 1].
        let bits = self.rng.next_u64() >> 11;
        (bits as f64 + 1.0) * (1.0 / (1u64 << 53) as f64)
    }

    fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = self.uniform_open();
        let u2 = self.uniform_open();
        let r = (-2.0 * u1.ln()).sqrt();
        let angle = std::f64::consts::TAU * u2;
        self.spare = Some(r * angle.sin());
        r * angle.cos()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let ch = NoiseChannel::gaussian(1.0, 42);
        let a: Vec<f64> = {
            let mut s = ch.stream(3);
            (0..100).map(|_| s.sample()).collect()
        };
        let b: Vec<f64> = {
            let mut s = ch.stream(3);
            (0..100).map(|_| s.sample()).collect()
        };
        assert_eq!(a, b);
        let mut other = ch.stream(4);
        assert_ne!(a[0], other.sample());
    }

    #[test]
    fn moments_are_standard() {
        let mut s = NoiseChannel::gaussian(2.0, 7).stream(0);
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|_| s.sample()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var - 4.0).abs() < 0.05, "var {var}");
    }

    #[test]
    fn silent_channel_is_exact_zero() {
        let mut s = NoiseChannel::none().stream(0);
        assert!((0..10).all(|_| s.sample() == 0.0));
        assert!(NoiseChannel::gaussian(-1.0, 0).validate().is_err());
    }
}
