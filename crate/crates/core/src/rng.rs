//! Reproducible random streams.
//!
//! Each stream is a ChaCha8 generator keyed by a master seed and selected by
//! a 64-bit stream index, so trial `k` of an experiment always draws the
//! same numbers regardless of which thread runs it.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand_chacha::ChaCha8Rng;
use rand_core::{Rng, SeedableRng};

/// Stream indices reserve the low byte for retry attempts.
const ATTEMPT_BITS: u32 = 8;

#[derive(Debug, Clone)]
pub struct RngStream {
    master_seed: u64,
    stream_index: u64,
    inner: ChaCha8Rng,
    spare: Option<f64>,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_index: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(master_seed);
        inner.set_stream(stream_index);
        Self {
            master_seed,
            stream_index,
            inner,
            spare: None,
        }
    }

    /// Stream for trial `trial`, retry `attempt` (0 for the first try).
    pub fn for_trial(master_seed: u64, trial: u64, attempt: u8) -> Self {
        Self::new(master_seed, (trial << ATTEMPT_BITS) | attempt as u64)
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_index(&self) -> u64 {
        self.stream_index
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on `(0, 1]`, never zero so logarithms are safe.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on `[lo, hi)`.
    #[inline]
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * (1.0 - self.uniform())
    }

    /// Standard normal by the Box-Muller transform; draws come in pairs and
    /// the second one is cached.
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let r = (-2.0 * self.uniform().ln()).sqrt();
        let theta = 2.0 * PI * self.uniform();
        let (s, c) = theta.sin_cos();
        self.spare = Some(r * s);
        r * c
    }

    /// Complex normal with `E g = 0`, `E |g|^2 = 1`, variance split equally
    /// between real and imaginary parts.
    #[inline]
    pub fn complex_normal(&mut self) -> Complex64 {
        let x = self.normal();
        let y = self.normal();
        Complex64::new(x, y) * std::f64::consts::FRAC_1_SQRT_2
    }

    pub fn exponential(&mut self) -> f64 {
        -self.uniform().ln()
    }

    /// Gamma(shape, 1) by Marsaglia and Tsang; shapes below one use the
    /// `U^{1/a}` boost.
    pub fn gamma(&mut self, shape: f64) -> f64 {
        assert!(shape > 0.0, "gamma shape must be positive");
        if shape < 1.0 {
            let u = self.uniform();
            return self.gamma(shape + 1.0) * u.powf(1.0 / shape);
        }
        let d = shape - 1.0 / 3.0;
        let c = 1.0 / (9.0 * d).sqrt();
        loop {
            let x = self.normal();
            let v = 1.0 + c * x;
            if v <= 0.0 {
                continue;
            }
            let v = v * v * v;
            let u = self.uniform();
            if u < 1.0 - 0.0331 * x.powi(4) || u.ln() < 0.5 * x * x + d * (1.0 - v + v.ln()) {
                return d * v;
            }
        }
    }
}
