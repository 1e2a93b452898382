//! Random binary patterns, the sensing matrix, and the ideal coincidence
//! measurement: the overlap between a pattern and the inverted object frame.

use rand::RngCore;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::rng;
use crate::scene::Frame;

/// One binary mask shown on the ghost-arm micromirror array.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pattern {
    pub width: usize,
    pub height: usize,
    pub mask: Vec<u8>,
    /// Realization index within its pattern set.
    pub seq: usize,
}

impl Pattern {
    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }

    pub fn count_ones(&self) -> usize {
        self.mask.iter().map(|&b| b as usize).sum()
    }
}

/// Identifies the pattern set a measurement vector was taken with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PatternSetId {
    pub m: usize,
    pub n: usize,
    pub fingerprint: u64,
}

impl PatternSetId {
    fn of_masks<'a>(masks: impl Iterator<Item = &'a [u8]>, m: usize, n: usize) -> Self {
        // FNV-1a over the packed mask bits
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for mask in masks {
            for chunk in mask.chunks(8) {
                let byte = chunk
                    .iter()
                    .enumerate()
                    .fold(0u8, |acc, (i, &b)| acc | ((b & 1) << i));
                h ^= byte as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        PatternSetId { m, n, fingerprint: h }
    }
}

/// Row-stacked flattened patterns, dense, `m x n`.
#[derive(Debug, Clone, PartialEq)]
pub struct SensingMatrix {
    m: usize,
    n: usize,
    width: usize,
    height: usize,
    data: Vec<f64>,
    /// PRNG seed the rows were generated from, if any.
    pub seed: Option<u64>,
    id: PatternSetId,
}

impl SensingMatrix {
    /// Builds a matrix from explicit binary rows of `width x height` masks.
    pub fn from_rows(rows: &[Vec<u8>], width: usize, height: usize) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Argument("sensing matrix needs at least one row".into()));
        }
        let n = width * height;
        if n == 0 {
            return Err(Error::Argument("sensing rows must be nonempty".into()));
        }
        let mut data = Vec::with_capacity(rows.len() * n);
        for (k, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::dims(format!("row of length {n}"), format!("row {k} of length {}", row.len())));
            }
            if row.iter().any(|&b| b > 1) {
                return Err(Error::Argument(format!("row {k} is not binary")));
            }
            data.extend(row.iter().map(|&b| b as f64));
        }
        let m = rows.len();
        Ok(SensingMatrix {
            m,
            n,
            width,
            height,
            data,
            seed: None,
            id: PatternSetId::of_masks(rows.iter().map(|r| r.as_slice()), m, n),
        })
    }

    /// One one-hot row per pixel, i.e. a raster scan in row-major order.
    pub fn raster(width: usize, height: usize) -> Result<Self> {
        let n = width * height;
        let rows: Vec<Vec<u8>> = (0..n)
            .map(|k| (0..n).map(|i| (i == k) as u8).collect())
            .collect();
        Self::from_rows(&rows, width, height)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn id(&self) -> PatternSetId {
        self.id
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.data[k * self.n..(k + 1) * self.n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.n)
    }

    /// Mean entry value, i.e. the fraction of set pixels over all patterns.
    pub fn fill_fraction(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// `out = A x`
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        debug_assert_eq!(out.len(), self.m);
        for (o, row) in out.iter_mut().zip(self.rows()) {
            *o = dot(row, x);
        }
    }

    /// `out = A^T r`
    pub fn apply_transpose(&self, r: &[f64], out: &mut [f64]) {
        debug_assert_eq!(r.len(), self.m);
        debug_assert_eq!(out.len(), self.n);
        out.iter_mut().for_each(|o| *o = 0.0);
        for (&rk, row) in r.iter().zip(self.rows()) {
            if rk != 0.0 {
                for (o, &a) in out.iter_mut().zip(row) {
                    *o += rk * a;
                }
            }
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four accumulators so the loop vectorizes; fixed order keeps it deterministic
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let j = 4 * i;
        acc[0] += a[j] * b[j];
        acc[1] += a[j + 1] * b[j + 1];
        acc[2] += a[j + 2] * b[j + 2];
        acc[3] += a[j + 3] * b[j + 3];
    }
    let mut tail = 0.0;
    for j in 4 * chunks..a.len() {
        tail += a[j] * b[j];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Whether a measurement vector holds ideal overlaps or sampled counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeasurementKind {
    Ideal,
    Counts,
}

impl MeasurementKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MeasurementKind::Ideal => "ideal",
            MeasurementKind::Counts => "counts",
        }
    }
}

/// Coincidence values, one per pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementVector {
    pub values: Vec<f64>,
    pub frame_index: usize,
    pub kind: MeasurementKind,
    pub patterns: PatternSetId,
    /// Overlap-to-photon gain applied when converting to counts; `None` for ideal vectors.
    pub gain: Option<f64>,
}

impl MeasurementVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        if self.values.is_empty() {
            0.0
        } else {
            self.values.iter().sum::<f64>() / self.values.len() as f64
        }
    }
}

/// Draws `m` i.i.d. Bernoulli(1/2) masks. Pattern `k` comes from its own
/// ChaCha8 stream `k` under `seed`, so a smaller set is a prefix of a larger one.
pub fn gen_patterns(m: usize, width: usize, height: usize, seed: u64) -> Result<Vec<Pattern>> {
    if m == 0 {
        return Err(Error::Argument("pattern count must be at least 1".into()));
    }
    let n = width * height;
    if n == 0 {
        return Err(Error::Argument("patterns need at least one pixel".into()));
    }
    Ok((0..m)
        .map(|k| {
            let mut rng: ChaCha8Rng = rng::stream(seed, rng::Domain::Patterns, k as u64);
            let mut mask = Vec::with_capacity(n);
            let mut word = 0u64;
            for i in 0..n {
                if i % 64 == 0 {
                    word = rng.next_u64();
                }
                mask.push(((word >> (i % 64)) & 1) as u8);
            }
            Pattern {
                width,
                height,
                mask,
                seq: k,
            }
        })
        .collect())
}

/// Maps pixel `(r, c)` to `(height-1-r, width-1-c)`: the coordinate inversion
/// the object picks up through the momentum anti-correlation.
pub fn rotate180(frame: &Frame) -> Frame {
    let mut pixels = frame.pixels().to_vec();
    pixels.reverse();
    Frame::new(frame.width(), frame.height(), pixels)
        .expect("reversal preserves size and binarity")
        .with_index(frame.index)
}

/// Same inversion for real-valued images.
pub fn rotate180_values(values: &[f64]) -> Vec<f64> {
    values.iter().rev().copied().collect()
}

fn check_dims(pattern: &Pattern, frame: &Frame) -> Result<()> {
    if pattern.width != frame.width() || pattern.height != frame.height() {
        return Err(Error::dims(
            format!("{}x{}", pattern.width, pattern.height),
            format!("{}x{}", frame.width(), frame.height()),
        ));
    }
    Ok(())
}

/// Ideal coincidence value: overlap of the mask with the inverted frame.
pub fn measure(pattern: &Pattern, frame: &Frame) -> Result<f64> {
    check_dims(pattern, frame)?;
    // rotate180 reverses the flat row-major array
    let overlap: usize = pattern
        .mask
        .iter()
        .zip(frame.pixels().iter().rev())
        .map(|(&a, &o)| (a & o) as usize)
        .sum();
    Ok(overlap as f64)
}

pub fn measure_all(patterns: &[Pattern], frame: &Frame) -> Result<MeasurementVector> {
    let first = patterns
        .first()
        .ok_or_else(|| Error::Argument("no patterns to measure with".into()))?;
    let values = patterns
        .iter()
        .map(|p| measure(p, frame))
        .collect::<Result<Vec<_>>>()?;
    Ok(MeasurementVector {
        values,
        frame_index: frame.index,
        kind: MeasurementKind::Ideal,
        patterns: PatternSetId::of_masks(
            patterns.iter().map(|p| p.mask.as_slice()),
            patterns.len(),
            first.len(),
        ),
        gain: None,
    })
}

/// Forward model through the matrix: `A * flatten(rotate180(frame))`.
pub fn measure_with_matrix(a: &SensingMatrix, frame: &Frame) -> Result<MeasurementVector> {
    if frame.width() != a.width() || frame.height() != a.height() {
        return Err(Error::dims(
            format!("{}x{}", a.width(), a.height()),
            format!("{}x{}", frame.width(), frame.height()),
        ));
    }
    let x = rotate180_values(&frame.to_f64());
    let mut values = vec![0.0; a.m()];
    a.apply(&x, &mut values);
    Ok(MeasurementVector {
        values,
        frame_index: frame.index,
        kind: MeasurementKind::Ideal,
        patterns: a.id(),
        gain: None,
    })
}

pub fn build_sensing_matrix(patterns: &[Pattern]) -> Result<SensingMatrix> {
    let first = patterns
        .first()
        .ok_or_else(|| Error::Argument("cannot build a sensing matrix from zero patterns".into()))?;
    if let Some(p) = patterns
        .iter()
        .find(|p| p.width != first.width || p.height != first.height)
    {
        return Err(Error::dims(
            format!("{}x{}", first.width, first.height),
            format!("{}x{} (pattern {})", p.width, p.height, p.seq),
        ));
    }
    let rows: Vec<Vec<u8>> = patterns.iter().map(|p| p.mask.clone()).collect();
    SensingMatrix::from_rows(&rows, first.width, first.height)
}

/// Patterns plus their matrix for a seeded run.
pub fn seeded_matrix(m: usize, width: usize, height: usize, seed: u64) -> Result<(Vec<Pattern>, SensingMatrix)> {
    let patterns = gen_patterns(m, width, height, seed)?;
    let mut matrix = build_sensing_matrix(&patterns)?;
    matrix.seed = Some(seed);
    Ok((patterns, matrix))
}
