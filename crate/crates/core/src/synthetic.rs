//! Seeded synthetic inputs with known answers, used by the estimator and
//! decomposition checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::spectral::{SpectralDensity, SpectralMeta};

/// Unit-variance Gaussian white noise.
pub fn white_noise(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Inverse-CDF draws from `p(x) ∝ x^(−λ)` on `[x_min, ∞)`:
/// `x = x_min · u^(−1/(λ−1))`.
pub fn powerlaw_samples(n: usize, lambda: f64, x_min: f64, seed: u64) -> Vec<f64> {
    assert!(lambda > 1.0 && x_min > 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let e = -1.0 / (lambda - 1.0);
    (0..n)
        .map(|_| {
            let u: f64 = 1.0 - rng.random::<f64>();
            x_min * u.powf(e)
        })
        .collect()
}

/// Piecewise power-law spectrum, continuous at `f_break`, with slope
/// `beta_low` below the break and `beta_high` above it, sampled on a
/// logarithmic grid and multiplied by log-normal noise of width `noise`.
pub fn two_slope_spectrum(
    f_range: (f64, f64),
    per_decade: usize,
    f_break: f64,
    beta_low: f64,
    beta_high: f64,
    noise: f64,
    seed: u64,
) -> SpectralDensity {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (l0, l1) = (f_range.0.log10(), f_range.1.log10());
    let n = ((l1 - l0) * per_decade as f64).round() as usize;
    let freqs: Vec<f64> = (0..=n)
        .map(|k| 10f64.powf(l0 + k as f64 / per_decade as f64))
        .collect();
    let power = freqs
        .iter()
        .map(|&f| {
            let base = if f < f_break {
                (f / f_break).powf(-beta_low)
            } else {
                (f / f_break).powf(-beta_high)
            };
            let z: f64 = rng.sample(StandardNormal);
            base * (noise * z).exp()
        })
        .collect();
    SpectralDensity {
        freqs,
        power,
        meta: SpectralMeta {
            segment_len: 0,
            segments: 0,
            window: "synthetic".into(),
            overlap: 0.0,
        },
    }
}

/// Random positive-definite 2×2 matrices `B Bᵀ + 10⁻³ I` with entries of
/// `B` uniform in `[−1.5, 1.5]`.
pub fn random_psd(n: usize, seed: u64) -> Vec<[[f64; 2]; 2]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let b: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.5..1.5));
            let a = b[0] * b[0] + b[1] * b[1] + 1e-3;
            let d = b[2] * b[2] + b[3] * b[3] + 1e-3;
            let c = b[0] * b[2] + b[1] * b[3];
            [[a, c], [c, d]]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_per_seed() {
        assert_eq!(white_noise(10, 3), white_noise(10, 3));
        assert_ne!(white_noise(10, 3), white_noise(10, 4));
        assert_eq!(
            powerlaw_samples(5, 3.0, 1.0, 1),
            powerlaw_samples(5, 3.0, 1.0, 1)
        );
    }

    #[test]
    fn powerlaw_samples_respect_minimum_and_median() {
        let x = powerlaw_samples(100_000, 3.0, 2.0, 7);
        assert!(x.iter().all(|&v| v >= 2.0));
        let mut s = x.clone();
        s.sort_by(f64::total_cmp);
        // CCDF (x/2)^-2 = 1/2 at x = 2√2
        assert!((s[50_000] / (2.0 * 2f64.sqrt()) - 1.0).abs() < 0.02);
    }

    #[test]
    fn psd_instances_are_positive_definite() {
        for m in random_psd(500, 2) {
            assert_eq!(m[0][1], m[1][0]);
            assert!(m[0][0] > 0.0 && m[0][0] * m[1][1] - m[0][1] * m[0][1] > 0.0);
        }
    }

    #[test]
    fn noiseless_spectrum_is_continuous() {
        let s = two_slope_spectrum((1e-3, 1e1), 50, 0.1, 0.4, 1.4, 0.0, 0);
        assert_eq!(s.freqs.len(), 201);
        let i = s.freqs.iter().position(|&f| f >= 0.1).unwrap();
        assert!((s.power[i] - 1.0).abs() < 1e-9);
    }
}
