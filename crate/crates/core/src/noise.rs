//! Photon-counting noise: ideal overlaps are scaled to a photon budget and
//! replaced by Poisson signal counts plus Poisson dark counts.

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng;
use crate::sensing::{MeasurementKind, MeasurementVector};

/// Fraction of the signal budget used as dark/accidental rate when none is given.
pub const DEFAULT_DARK_FRACTION: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    /// Mean detected signal photons per pattern.
    pub photons_per_measurement: f64,
    /// Mean dark counts per measurement.
    pub dark_rate: f64,
    pub seed: u64,
}

impl NoiseModel {
    pub fn new(photons_per_measurement: f64, dark_rate: f64, seed: u64) -> Result<Self> {
        if !(photons_per_measurement.is_finite() && photons_per_measurement > 0.0) {
            return Err(Error::Argument(format!(
                "photons per measurement must be positive, got {photons_per_measurement}"
            )));
        }
        if !(dark_rate.is_finite() && dark_rate >= 0.0) {
            return Err(Error::Argument(format!(
                "dark rate must be nonnegative, got {dark_rate}"
            )));
        }
        Ok(NoiseModel {
            photons_per_measurement,
            dark_rate,
            seed,
        })
    }

    /// Dark rate set to [`DEFAULT_DARK_FRACTION`] of the photon budget.
    pub fn with_default_dark(photons_per_measurement: f64, seed: u64) -> Result<Self> {
        Self::new(
            photons_per_measurement,
            DEFAULT_DARK_FRACTION * photons_per_measurement,
            seed,
        )
    }
}

fn require_ideal(v: &MeasurementVector) -> Result<()> {
    if v.kind != MeasurementKind::Ideal {
        return Err(Error::Argument("expected an ideal measurement vector".into()));
    }
    Ok(())
}

/// Gain `g` with `mean(g * ideal) == photons_per_measurement`.
pub fn calibrate_gain(ideal: &MeasurementVector, photons_per_measurement: f64) -> Result<f64> {
    require_ideal(ideal)?;
    let mean = ideal.mean();
    if !(mean > 0.0) {
        return Err(Error::DegenerateScene(
            "ideal measurements are all zero; no photons reach the bucket detector".into(),
        ));
    }
    Ok(photons_per_measurement / mean)
}

/// Noisy counts with the gain calibrated on `ideal` itself.
pub fn apply_noise(ideal: &MeasurementVector, model: &NoiseModel) -> Result<MeasurementVector> {
    let gain = calibrate_gain(ideal, model.photons_per_measurement)?;
    apply_noise_with_gain(ideal, model, gain)
}

/// Noisy counts `Poisson(gain * ideal_k) + Poisson(dark_rate)`.
///
/// Entry `k` draws from its own stream keyed by the model seed and the
/// vector's frame index, so two frames measured under one model receive
/// independent noise and the result does not depend on evaluation order.
pub fn apply_noise_with_gain(
    ideal: &MeasurementVector,
    model: &NoiseModel,
    gain: f64,
) -> Result<MeasurementVector> {
    require_ideal(ideal)?;
    if !(gain.is_finite() && gain >= 0.0) {
        return Err(Error::Argument(format!("gain must be finite and nonnegative, got {gain}")));
    }
    let frame_seed = rng::derive_seed(model.seed, &[ideal.frame_index as u64]);
    let values = ideal
        .values
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            let mut rng = rng::stream(frame_seed, rng::Domain::Noise, k as u64);
            let signal = sample_poisson(&mut rng, gain * v);
            let dark = sample_poisson(&mut rng, model.dark_rate);
            (signal + dark) as f64
        })
        .collect();
    Ok(MeasurementVector {
        values,
        frame_index: ideal.frame_index,
        kind: MeasurementKind::Counts,
        patterns: ideal.patterns,
        gain: Some(gain),
    })
}

/// Poisson variate: sequential inversion below mean 30, Hörmann's PTRS
/// transformed rejection above.
pub fn sample_poisson<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    if !(mean > 0.0) {
        return 0;
    }
    if mean < 30.0 {
        let u: f64 = rng.random();
        let mut k = 0u64;
        let mut p = (-mean).exp();
        let mut cdf = p;
        while u > cdf && p > 0.0 {
            k += 1;
            p *= mean / k as f64;
            cdf += p;
        }
        return k;
    }

    let smu = mean.sqrt();
    let b = 0.931 + 2.53 * smu;
    let a = -0.059 + 0.02483 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let v_r = 0.9277 - 3.6224 / (b - 2.0);
    let log_mean = mean.ln();
    loop {
        let u = rng.random::<f64>() - 0.5;
        let v: f64 = rng.random();
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + mean + 0.43).floor();
        if us >= 0.07 && v <= v_r {
            return k as u64;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        let lhs = v.ln() + inv_alpha.ln() - (a / (us * us) + b).ln();
        if lhs <= -mean + k * log_mean - ln_factorial(k as u64) {
            return k as u64;
        }
    }
}

/// `ln(k!)`, exact summation for small `k`, Stirling series otherwise.
pub fn ln_factorial(k: u64) -> f64 {
    if k < 16 {
        return (2..=k).map(|i| (i as f64).ln()).sum();
    }
    let x = k as f64;
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    x * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI * x).ln()
        + inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 / 1260.0))
}
