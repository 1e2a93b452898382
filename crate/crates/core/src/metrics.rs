//! Reconstruction fidelity, photon efficiency, and the photon-budget sweep.

use crate::error::{Error, Result};
use crate::noise::{self, NoiseModel};
use crate::rng;
use crate::scene::{self, Scene};
use crate::sensing;
use crate::solver::SolverConfig;
use crate::tracking;

/// Mean squared error after a nonnegative least-squares scalar fit of the
/// estimate onto the truth:
/// `(1/n) sum (t_i - alpha e_i)^2`, `alpha = max(0, <e, t> / <e, e>)`.
///
/// The fit makes the value independent of the reconstruction's units;
/// `alpha = 0` for an all-zero estimate.
pub fn mse(truth: &[f64], estimate: &[f64]) -> Result<f64> {
    if truth.len() != estimate.len() {
        return Err(Error::dims(truth.len(), estimate.len()));
    }
    if truth.is_empty() {
        return Err(Error::Argument("mse of empty images".into()));
    }
    let ee: f64 = estimate.iter().map(|e| e * e).sum();
    let et: f64 = estimate.iter().zip(truth).map(|(e, t)| e * t).sum();
    let alpha = if ee > 0.0 { (et / ee).max(0.0) } else { 0.0 };
    let sse: f64 = truth
        .iter()
        .zip(estimate)
        .map(|(t, e)| (t - alpha * e) * (t - alpha * e))
        .sum();
    Ok(sse / truth.len() as f64)
}

/// Bits impressed per detected photon, counting one bit per binary pixel.
pub fn bits_per_photon(n_pixels: usize, measurements: usize, photons_per_measurement: f64) -> Result<f64> {
    let photons = measurements as f64 * photons_per_measurement;
    if n_pixels == 0 || !(photons > 0.0) || !photons.is_finite() {
        return Err(Error::Argument(format!(
            "bits per photon needs positive inputs, got n={n_pixels}, m={measurements}, photons={photons_per_measurement}"
        )));
    }
    Ok(n_pixels as f64 / photons)
}

/// One point of the photon-budget curve.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub measurements: usize,
    /// `None` for noiseless measurements.
    pub photons_per_measurement: Option<f64>,
    pub seeds: usize,
    pub mse_mean: f64,
    pub mse_std: f64,
}

/// Sweep settings.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    /// `(previous, current)` frame indices of the tracked change.
    pub frame_pair: (usize, usize),
    pub measurements: Vec<usize>,
    pub photons: Vec<f64>,
    pub seeds: usize,
    pub master_seed: u64,
    /// Dark counts as a fraction of the photon budget.
    pub dark_fraction: f64,
    pub solver: SolverConfig,
    /// When set, noisy points solve with `mu = mu_per_photon * photons`, which
    /// keeps the fidelity weight proportional to the inverse noise variance.
    pub mu_per_photon: Option<f64>,
}

impl SweepConfig {
    /// Solver settings used at a given photon budget.
    pub fn solver_for(&self, photons: Option<f64>) -> SolverConfig {
        match (photons, self.mu_per_photon) {
            (Some(p), Some(k)) => SolverConfig { mu: k * p, ..self.solver },
            _ => self.solver,
        }
    }
}

/// MSE of one tracked change for one replicate.
///
/// Patterns depend on `(master_seed, m, replicate)` so all photon budgets of a
/// replicate see the same patterns; noise depends additionally on the budget.
/// Both frames are noised independently, with one gain calibrated on the
/// background.
pub fn replicate_mse(
    scene: &Scene,
    frame_pair: (usize, usize),
    m: usize,
    photons: Option<f64>,
    dark_fraction: f64,
    master_seed: u64,
    replicate: usize,
    solver: &SolverConfig,
) -> Result<f64> {
    let (prev, cur) = frame_pair;
    let pattern_seed = rng::derive_seed(master_seed, &[m as u64, replicate as u64]);
    let (_, a) = sensing::seeded_matrix(
        m,
        scene.background().width(),
        scene.background().height(),
        pattern_seed,
    )?;
    let f_prev = scene::render_scene(scene, prev)?;
    let f_cur = scene::render_scene(scene, cur)?;
    let mut j_prev = sensing::measure_with_matrix(&a, &f_prev)?;
    let mut j_cur = sensing::measure_with_matrix(&a, &f_cur)?;
    if let Some(p) = photons {
        let noise_seed = rng::derive_seed(master_seed, &[m as u64, p.to_bits(), replicate as u64]);
        let model = NoiseModel::new(p, dark_fraction * p, noise_seed)?;
        let background = sensing::measure_with_matrix(&a, scene.background())?;
        let gain = noise::calibrate_gain(&background, p)?;
        j_prev = noise::apply_noise_with_gain(&j_prev, &model, gain)?;
        j_cur = noise::apply_noise_with_gain(&j_cur, &model, gain)?;
    }
    let dj = tracking::delta_measure(&j_cur, &j_prev)?;
    let rec = tracking::track_step(&a, &dj, solver)?;
    let truth = scene::frame_diff(&f_cur, &f_prev)?;
    mse(&truth.values, &rec.image)
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let std = if xs.len() > 1 {
        (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, std)
}

/// Aggregated MSE over replicates at one `(m, photons)` point.
pub fn sweep_point(scene: &Scene, config: &SweepConfig, m: usize, photons: Option<f64>) -> Result<SweepPoint> {
    if config.seeds == 0 {
        return Err(Error::Argument("sweep needs at least one seed".into()));
    }
    let solver = config.solver_for(photons);
    let values = (0..config.seeds)
        .map(|rep| {
            replicate_mse(
                scene,
                config.frame_pair,
                m,
                photons,
                config.dark_fraction,
                config.master_seed,
                rep,
                &solver,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let (mse_mean, mse_std) = mean_std(&values);
    Ok(SweepPoint {
        measurements: m,
        photons_per_measurement: photons,
        seeds: config.seeds,
        mse_mean,
        mse_std,
    })
}

/// MSE against photons per measurement for every configured measurement count.
pub fn photon_sweep(scene: &Scene, config: &SweepConfig) -> Result<Vec<SweepPoint>> {
    if config.measurements.is_empty() || config.photons.is_empty() {
        return Err(Error::Argument("sweep grids must be nonempty".into()));
    }
    if let Some(&p) = config.photons.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
        return Err(Error::Argument(format!("photon budget {p} must be positive")));
    }
    let mut out = Vec::with_capacity(config.measurements.len() * config.photons.len());
    for &m in &config.measurements {
        for &p in &config.photons {
            out.push(sweep_point(scene, config, m, Some(p))?);
        }
    }
    Ok(out)
}

/// Smallest photon budget whose mean MSE is at most `threshold`.
pub fn threshold_photons(points: &[SweepPoint], m: usize, threshold: f64) -> Option<f64> {
    points
        .iter()
        .filter(|p| p.measurements == m && p.mse_mean <= threshold)
        .filter_map(|p| p.photons_per_measurement)
        .fold(None, |acc: Option<f64>, p| Some(acc.map_or(p, |a| a.min(p))))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_examples() {
        let truth: Vec<f64> = (0..16).map(|i| ((i % 3) as f64) - 1.0).collect();
        assert_eq!(mse(&truth, &truth).unwrap(), 0.0);
        let doubled: Vec<f64> = truth.iter().map(|t| 2.0 * t).collect();
        assert!(mse(&truth, &doubled).unwrap() < 1e-30);
        let mut sparse = vec![0.0; 4096];
        for v in sparse.iter_mut().take(9) {
            *v = 1.0;
        }
        let zero = vec![0.0; 4096];
        assert!((mse(&sparse, &zero).unwrap() - 9.0 / 4096.0).abs() < 1e-15);
        assert!(mse(&sparse, &zero[..10]).is_err());
    }

    #[test]
    fn negated_estimate_is_not_a_fit() {
        let truth = vec![1.0, 0.0, -1.0, 0.0];
        let neg: Vec<f64> = truth.iter().map(|t| -t).collect();
        assert!((mse(&truth, &neg).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn bits_per_photon_examples() {
        assert!((bits_per_photon(4096, 100, 500.0).unwrap() - 0.08192).abs() < 1e-15);
        assert_eq!(bits_per_photon(77, 1, 77.0).unwrap(), 1.0);
        assert!((bits_per_photon(4096, 400, 200.0).unwrap() - 0.0512).abs() < 1e-15);
        assert!(bits_per_photon(4096, 0, 200.0).is_err());
        assert!(bits_per_photon(4096, 10, 0.0).is_err());
    }

    #[test]
    fn threshold_lookup() {
        let pt = |m, p: f64, mse_mean| SweepPoint {
            measurements: m,
            photons_per_measurement: Some(p),
            seeds: 1,
            mse_mean,
            mse_std: 0.0,
        };
        let pts = vec![pt(100, 50.0, 0.09), pt(100, 500.0, 0.03), pt(100, 1000.0, 0.02), pt(400, 50.0, 0.01)];
        assert_eq!(threshold_photons(&pts, 100, 0.04), Some(500.0));
        assert_eq!(threshold_photons(&pts, 400, 0.04), Some(50.0));
        assert_eq!(threshold_photons(&pts, 200, 0.04), None);
    }
}
