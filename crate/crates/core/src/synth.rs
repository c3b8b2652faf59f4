//! Synthetic quasi-periodic series shaped like an electrocardiogram: each
//! beat is a sum of Gaussian bumps (P, Q, R, S, T waves) with jittered beat
//! length and amplitude plus white noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// (position within the beat, width, amplitude)
const WAVES: [(f64, f64, f64); 5] = [
    (0.20, 0.030, 0.15),
    (0.37, 0.010, -0.12),
    (0.40, 0.012, 1.00),
    (0.43, 0.010, -0.25),
    (0.65, 0.045, 0.30),
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EcgConfig {
    pub len: usize,
    /// Mean samples per beat.
    pub period: f64,
    /// Relative standard deviation of the beat length.
    pub period_jitter: f64,
    pub amplitude_jitter: f64,
    pub noise: f64,
    pub seed: u64,
}

impl Default for EcgConfig {
    fn default() -> Self {
        Self {
            len: 2400,
            period: 60.0,
            period_jitter: 0.05,
            amplitude_jitter: 0.05,
            noise: 0.01,
            seed: 0,
        }
    }
}

pub fn synthetic_ecg(cfg: &EcgConfig) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = Normal::new(0.0, cfg.noise.max(0.0)).expect("finite noise level");
    let mut out = Vec::with_capacity(cfg.len);
    let mut beat_start = 0.0;
    let mut beat_len = cfg.period;
    let mut gain = 1.0;
    for t in 0..cfg.len {
        let mut phase = (t as f64 - beat_start) / beat_len;
        while phase >= 1.0 {
            beat_start += beat_len;
            beat_len = cfg.period * (1.0 + cfg.period_jitter * rng.random_range(-1.0..1.0));
            gain = 1.0 + cfg.amplitude_jitter * rng.random_range(-1.0..1.0);
            phase = (t as f64 - beat_start) / beat_len;
        }
        let clean: f64 = WAVES
            .iter()
            .map(|&(c, w, a)| a * (-0.5 * ((phase - c) / w).powi(2)).exp())
            .sum();
        out.push(gain * clean + noise.sample(&mut rng));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_sized() {
        let cfg = EcgConfig {
            len: 500,
            ..EcgConfig::default()
        };
        let a = synthetic_ecg(&cfg);
        assert_eq!(a.len(), 500);
        assert_eq!(a, synthetic_ecg(&cfg));
        assert!(a.iter().all(|v| v.is_finite()));
        let peaks = a.iter().filter(|&&v| v > 0.7).count();
        assert!(peaks >= 5, "R peaks visible: {peaks}");
    }
}
