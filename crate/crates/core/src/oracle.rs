//! Seeded Gaussian gradient oracle.
//!
//! Stochastic runs see `gbar = g + sqrt(variance) z` with z standard normal.
//! Draws are keyed by (seed, iteration): each iteration uses its own counter
//! stream of the generator, so samples are reproducible regardless of call
//! order and two runs with the same seed see the same noise.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Stream id for the shared smoothness-constant estimation draws; far above
/// any iteration index.
pub const LIPSCHITZ_STREAM: u64 = u64::MAX;

/// Generator for a (seed, stream) pair. Iteration k of a run uses stream k.
pub fn substream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy)]
pub struct OracleConfig {
    /// Per-coordinate noise variance; 0 makes the oracle exact.
    pub noise_variance: f64,
    pub seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig { noise_variance: 0.0, seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct GradientSample {
    pub gbar: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct GradientOracle {
    cfg: OracleConfig,
}

impl GradientOracle {
    pub fn new(cfg: OracleConfig) -> Self {
        assert!(cfg.noise_variance >= 0.0, "variance must be nonnegative");
        GradientOracle { cfg }
    }

    pub fn noise_variance(&self) -> f64 {
        self.cfg.noise_variance
    }

    pub fn seed(&self) -> u64 {
        self.cfg.seed
    }

    /// Second moment bound on the noise, `n * variance`.
    pub fn variance_bound(&self, n: usize) -> f64 {
        n as f64 * self.cfg.noise_variance
    }

    /// Noisy gradient for the given iteration. Exact (bitwise) copy of g when
    /// the variance is zero.
    pub fn sample(&self, iteration: u64, g: &DVector<f64>) -> GradientSample {
        if self.cfg.noise_variance == 0.0 {
            return GradientSample { gbar: g.clone() };
        }
        let mut rng = substream_rng(self.cfg.seed, iteration);
        let sd = self.cfg.noise_variance.sqrt();
        let gbar = g.map(|gi| gi + sd * rng.sample::<f64, _>(StandardNormal));
        GradientSample { gbar }
    }
}
