use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Samples below this are rejected and redrawn.
pub const MIN_LATENCY_MS: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatencyDistribution {
    #[default]
    GaussianTruncated,
}

/// One-way network latency in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyModel {
    pub mean_ms: f64,
    pub std_dev_ms: f64,
    #[serde(default)]
    pub distribution: LatencyDistribution,
}

impl LatencyModel {
    pub fn gaussian(mean_ms: f64, std_dev_ms: f64) -> Self {
        LatencyModel { mean_ms, std_dev_ms, distribution: LatencyDistribution::GaussianTruncated }
    }

    /// Gaussian fit of the measured 5G link.
    pub fn measured_5g() -> Self {
        Self::gaussian(52.7, 7.9)
    }

    /// Instantaneous delivery, used for tie checks.
    pub fn zero() -> Self {
        Self::gaussian(0.0, 0.0)
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.mean_ms.is_finite() && self.mean_ms >= 0.0) {
            return Err(format!("latency mean must be >= 0 ms, got {}", self.mean_ms));
        }
        if !(self.std_dev_ms.is_finite() && self.std_dev_ms >= 0.0) {
            return Err(format!("latency std must be >= 0 ms, got {}", self.std_dev_ms));
        }
        if self.std_dev_ms > 0.0 && self.mean_ms + 6.0 * self.std_dev_ms < MIN_LATENCY_MS {
            return Err("latency distribution lies almost entirely below the truncation point".into());
        }
        Ok(())
    }
}

/// Draws one latency in milliseconds.
///
/// A zero-spread model returns its mean exactly, including a zero mean.
pub fn sample_latency<R: Rng + ?Sized>(model: &LatencyModel, rng: &mut R) -> f64 {
    if model.std_dev_ms == 0.0 {
        return model.mean_ms;
    }
    let normal = Normal::new(model.mean_ms, model.std_dev_ms).expect("validated latency model");
    loop {
        let x = normal.sample(rng);
        if x >= MIN_LATENCY_MS {
            return x;
        }
    }
}
