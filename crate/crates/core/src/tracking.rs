//! Ghost background subtraction: measurement vectors of two frames taken
//! with the same patterns are subtracted, the (sparse) scene change is
//! reconstructed from the difference, and the object's old and new
//! positions are read off the signed change map.

use crate::error::{Error, Result};
use crate::noise::{self, NoiseModel};
use crate::scene::{self, DeltaImage, Scene};
use crate::sensing::{self, MeasurementVector, PatternSetId, SensingMatrix};
use crate::solver::{self, Observations, Reconstruction, SolverConfig};

/// `J^j - J^{j-1}` for one pattern set.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaVector {
    pub values: Vec<f64>,
    /// `(previous frame, current frame)`
    pub frame_pair: (usize, usize),
    pub patterns: PatternSetId,
    /// Shared overlap-to-photon gain when both vectors are counts.
    pub gain: Option<f64>,
}

impl DeltaVector {
    /// Values divided by the shared gain, i.e. in units of pixel overlap.
    pub fn in_overlap_units(&self) -> DeltaVector {
        match self.gain {
            Some(g) if g > 0.0 => DeltaVector {
                values: self.values.iter().map(|v| v / g).collect(),
                gain: None,
                ..self.clone()
            },
            _ => self.clone(),
        }
    }
}

impl Observations for DeltaVector {
    fn values(&self) -> &[f64] {
        &self.values
    }

    fn patterns(&self) -> PatternSetId {
        self.patterns
    }
}

/// Subtracts two measurement vectors of the same pattern set and gain.
pub fn delta_measure(j: &MeasurementVector, prev: &MeasurementVector) -> Result<DeltaVector> {
    if j.patterns != prev.patterns {
        return Err(Error::Provenance(format!(
            "frame {} and frame {} were measured with different pattern sets",
            j.frame_index, prev.frame_index
        )));
    }
    if j.kind != prev.kind || j.gain != prev.gain {
        return Err(Error::Provenance(format!(
            "frames {} and {} do not share a gain context ({:?} vs {:?})",
            j.frame_index, prev.frame_index, j.gain, prev.gain
        )));
    }
    if j.values.len() != prev.values.len() {
        return Err(Error::dims(prev.values.len(), j.values.len()));
    }
    Ok(DeltaVector {
        values: j.values.iter().zip(&prev.values).map(|(a, b)| a - b).collect(),
        frame_pair: (prev.frame_index, j.frame_index),
        patterns: j.patterns,
        gain: j.gain,
    })
}

/// Reconstructs the signed change map from a delta vector. Counts are
/// converted back to overlap units with the shared gain first, and the
/// result is un-rotated into scene coordinates.
pub fn track_step(a: &SensingMatrix, delta: &DeltaVector, config: &SolverConfig) -> Result<Reconstruction> {
    if delta.patterns != a.id() {
        return Err(Error::Provenance(
            "delta vector was not measured with this sensing matrix".into(),
        ));
    }
    let config = SolverConfig {
        nonnegative: false,
        ..*config
    };
    let mut rec = solver::tv_min(a, &delta.in_overlap_units(), &config)?;
    rec.image = sensing::rotate180_values(&rec.image);
    Ok(rec)
}

/// Object position estimate from one change map.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackResult {
    /// Centroid of the positive blob (where the object arrived), `(row, col)`.
    pub new_centroid: Option<(f64, f64)>,
    /// Centroid of the negative blob (where the object left).
    pub old_centroid: Option<(f64, f64)>,
    /// `new_centroid - old_centroid` when both blobs are present.
    pub displacement: Option<(f64, f64)>,
    /// Fraction of the total absolute change captured by the two blobs.
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Localization {
    /// Change map is identically zero.
    NoMotion,
    Motion(TrackResult),
}

impl Localization {
    pub fn result(&self) -> Option<&TrackResult> {
        match self {
            Localization::NoMotion => None,
            Localization::Motion(r) => Some(r),
        }
    }
}

/// Weighted centroids of the pixels above `threshold_fraction` of the peak
/// absolute value, separately for the positive and the negative side.
pub fn localize(delta: &Reconstruction, threshold_fraction: f64) -> Result<Localization> {
    localize_values(&delta.image, delta.width, threshold_fraction)
}

pub fn localize_values(values: &[f64], width: usize, threshold_fraction: f64) -> Result<Localization> {
    if !(threshold_fraction > 0.0 && threshold_fraction < 1.0) {
        return Err(Error::Argument(format!(
            "threshold fraction must lie in (0, 1), got {threshold_fraction}"
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Argument("change map contains non-finite values".into()));
    }
    let peak = values.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if peak == 0.0 {
        return Ok(Localization::NoMotion);
    }
    let cut = threshold_fraction * peak;
    let total: f64 = values.iter().map(|v| v.abs()).sum();

    let centroid = |keep: &dyn Fn(f64) -> bool| -> (Option<(f64, f64)>, f64) {
        let (mut sr, mut sc, mut mass) = (0.0, 0.0, 0.0);
        for (i, &v) in values.iter().enumerate() {
            if keep(v) {
                let wgt = v.abs();
                sr += wgt * (i / width) as f64;
                sc += wgt * (i % width) as f64;
                mass += wgt;
            }
        }
        ((mass > 0.0).then(|| (sr / mass, sc / mass)), mass)
    };
    let (new_centroid, new_mass) = centroid(&|v| v > cut);
    let (old_centroid, old_mass) = centroid(&|v| v < -cut);
    let displacement = match (new_centroid, old_centroid) {
        (Some(n), Some(o)) => Some((n.0 - o.0, n.1 - o.1)),
        _ => None,
    };
    Ok(Localization::Motion(TrackResult {
        new_centroid,
        old_centroid,
        displacement,
        confidence: ((new_mass + old_mass) / total).clamp(0.0, 1.0),
    }))
}

/// Which earlier frame each frame is subtracted from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Subtraction {
    /// `J^j - J^{j-1}`
    #[default]
    Consecutive,
    /// `J^j - J^0`
    Background,
}

/// Settings for a tracking run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackConfig {
    pub solver: SolverConfig,
    /// Kept low so an isolated noise spike cannot set the cut above a blob.
    pub threshold_fraction: f64,
    pub subtraction: Subtraction,
    /// With noisy measurements, solve with `mu = mu_per_photon * photons`.
    pub mu_per_photon: Option<f64>,
}

impl Default for TrackConfig {
    fn default() -> Self {
        TrackConfig {
            solver: SolverConfig::default(),
            threshold_fraction: 0.2,
            subtraction: Subtraction::Consecutive,
            mu_per_photon: None,
        }
    }
}

/// One processed frame of a tracking run.
#[derive(Debug, Clone)]
pub struct TrackStep {
    pub frame: usize,
    pub reference_frame: usize,
    pub delta: Reconstruction,
    pub truth: DeltaImage,
    pub localization: Localization,
}

/// Measures every frame of `scene` with one pattern set, subtracts, and
/// reconstructs and localizes each change. With a noise model the gain is
/// calibrated once on the background and shared by all frames.
pub fn track_sequence(
    scene: &Scene,
    a: &SensingMatrix,
    noise: Option<&NoiseModel>,
    config: &TrackConfig,
) -> Result<Vec<TrackStep>> {
    if scene.last_frame() < 2 {
        return Err(Error::Argument(format!(
            "tracking needs at least two object frames, scene has {}",
            scene.last_frame()
        )));
    }
    let frames = (0..=scene.last_frame())
        .map(|j| scene::render_scene(scene, j))
        .collect::<Result<Vec<_>>>()?;
    let ideal = frames
        .iter()
        .map(|f| sensing::measure_with_matrix(a, f))
        .collect::<Result<Vec<_>>>()?;
    let measured = match noise {
        None => ideal,
        Some(model) => {
            let gain = noise::calibrate_gain(&ideal[0], model.photons_per_measurement)?;
            ideal
                .iter()
                .map(|v| noise::apply_noise_with_gain(v, model, gain))
                .collect::<Result<Vec<_>>>()?
        }
    };

    let solver = match (noise, config.mu_per_photon) {
        (Some(model), Some(k)) => SolverConfig { mu: k * model.photons_per_measurement, ..config.solver },
        _ => config.solver,
    };
    (1..frames.len())
        .map(|j| {
            let reference_frame = match config.subtraction {
                Subtraction::Consecutive => j - 1,
                Subtraction::Background => 0,
            };
            let dj = delta_measure(&measured[j], &measured[reference_frame])?;
            let delta = track_step(a, &dj, &solver)?;
            let localization = localize(&delta, config.threshold_fraction)?;
            Ok(TrackStep {
                frame: j,
                reference_frame,
                truth: scene::frame_diff(&frames[j], &frames[reference_frame])?,
                delta,
                localization,
            })
        })
        .collect()
}

/// Largest distance between the localized centroids of a `reference_frame ->
/// frame` change and the scripted sprite centroids of those frames; `None`
/// when a blob that exists in the scene was not found. The background frame
/// contributes no centroid.
pub fn centroid_error(scene: &Scene, frame: usize, reference_frame: usize, localization: &Localization) -> Option<f64> {
    let found = localization.result();
    let mut worst: f64 = 0.0;
    for (j, got) in [
        (frame, found.and_then(|r| r.new_centroid)),
        (reference_frame, found.and_then(|r| r.old_centroid)),
    ] {
        if let Some(want) = scene.sprite_centroid(j) {
            let got = got?;
            worst = worst.max((got.0 - want.0).hypot(got.1 - want.1));
        }
    }
    Some(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::Frame;
    use crate::sensing::MeasurementKind;

    fn vector(values: Vec<f64>, fingerprint: u64, frame_index: usize) -> MeasurementVector {
        MeasurementVector {
            patterns: PatternSetId { m: values.len(), n: 4, fingerprint },
            values,
            frame_index,
            kind: MeasurementKind::Ideal,
            gain: None,
        }
    }

    #[test]
    fn identical_vectors_give_zero_delta() {
        let a = vector(vec![3.0, 1.0, 4.0], 9, 2);
        let mut b = a.clone();
        b.frame_index = 1;
        let d = delta_measure(&a, &b).unwrap();
        assert!(d.values.iter().all(|&v| v == 0.0));
        assert_eq!(d.frame_pair, (1, 2));
    }

    #[test]
    fn provenance_is_checked() {
        let a = vector(vec![1.0, 2.0], 1, 1);
        let b = vector(vec![1.0, 2.0], 2, 0);
        assert!(matches!(delta_measure(&a, &b), Err(Error::Provenance(_))));
        let mut c = vector(vec![1.0, 2.0], 1, 0);
        c.gain = Some(0.5);
        c.kind = MeasurementKind::Counts;
        assert!(matches!(delta_measure(&a, &c), Err(Error::Provenance(_))));
    }

    #[test]
    fn zero_delta_tracks_nothing() {
        let (_, a) = sensing::seeded_matrix(20, 8, 8, 1).unwrap();
        let d = DeltaVector {
            values: vec![0.0; 20],
            frame_pair: (0, 1),
            patterns: a.id(),
            gain: None,
        };
        let rec = track_step(&a, &d, &SolverConfig::default()).unwrap();
        assert!(rec.converged && rec.image.iter().all(|&v| v == 0.0));
        assert_eq!(localize(&rec, 0.5).unwrap(), Localization::NoMotion);
    }

    #[test]
    fn ideal_blobs_localize_exactly() {
        // +1 3x3 blob centred (10, 20), -1 3x3 blob centred (40, 12)
        let mut v = vec![0.0; 64 * 64];
        for dr in 0..3 {
            for dc in 0..3 {
                v[(9 + dr) * 64 + 19 + dc] = 1.0;
                v[(39 + dr) * 64 + 11 + dc] = -1.0;
            }
        }
        let r = localize_values(&v, 64, 0.5).unwrap();
        let r = r.result().unwrap();
        let (nr, nc) = r.new_centroid.unwrap();
        let (or, oc) = r.old_centroid.unwrap();
        assert!((nr - 10.0).abs() < 0.5 && (nc - 20.0).abs() < 0.5);
        assert!((or - 40.0).abs() < 0.5 && (oc - 12.0).abs() < 0.5);
        assert_eq!(r.displacement, Some((nr - or, nc - oc)));
        assert!((r.confidence - 1.0).abs() < 1e-12);
        assert!(localize_values(&v, 64, 1.5).is_err());
    }

    #[test]
    fn static_scene_reports_no_motion() {
        let bg = Frame::new(8, 8, (0..64).map(|i| (i % 5 == 0) as u8).collect()).unwrap();
        let sprite = Frame::new(2, 2, vec![1; 4]).unwrap();
        let scene = Scene::new(bg, sprite, vec![(2, 2); 3]).unwrap();
        let (_, a) = sensing::seeded_matrix(30, 8, 8, 4).unwrap();
        let steps = track_sequence(&scene, &a, None, &TrackConfig::default()).unwrap();
        assert_eq!(steps.len(), 3);
        // first step is the appearance of the object, the rest are static
        assert!(steps[0].localization.result().is_some());
        for s in &steps[1..] {
            assert_eq!(s.localization, Localization::NoMotion);
        }
    }

    #[test]
    fn too_short_scene_rejected() {
        let scene = Scene::new(Frame::zeros(4, 4), Frame::zeros(1, 1), vec![(0, 0)]).unwrap();
        let (_, a) = sensing::seeded_matrix(4, 4, 4, 1).unwrap();
        assert!(track_sequence(&scene, &a, None, &TrackConfig::default()).is_err());
    }
}
