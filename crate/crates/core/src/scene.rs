//! Binary scenes: a static background, a sprite that moves across it, and
//! the frames and frame differences derived from them.
//!
//! All rasters are row-major with the origin at the top-left pixel.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::pgm;

/// Binary reflectivity image displayed on the object-arm micromirror array.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
    /// Frame number within a scene; 0 is the background.
    pub index: usize,
}

impl Frame {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::dims(
                format!("{} pixels ({width}x{height})", width * height),
                format!("{} pixels", pixels.len()),
            ));
        }
        if let Some(p) = pixels.iter().position(|&v| v > 1) {
            return Err(Error::NonBinary(format!(
                "pixel {p} has value {}",
                pixels[p]
            )));
        }
        Ok(Frame {
            width,
            height,
            pixels,
            index: 0,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Frame {
            width,
            height,
            pixels: vec![0; width * height],
            index: 0,
        }
    }

    pub fn with_index(mut self, index: usize) -> Self {
        self.index = index;
        self
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.pixels[row * self.width + col]
    }

    /// Number of pixels equal to 1.
    pub fn count_ones(&self) -> usize {
        self.pixels.iter().map(|&p| p as usize).sum()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.pixels.iter().map(|&p| p as f64).collect()
    }

    pub fn to_gray(&self) -> pgm::GrayImage {
        pgm::GrayImage {
            width: self.width,
            height: self.height,
            max_value: 255,
            samples: self.pixels.iter().map(|&p| p as u16 * 255).collect(),
        }
    }

    fn check_same_dims(&self, other: &Frame) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::dims(
                format!("{}x{}", self.width, self.height),
                format!("{}x{}", other.width, other.height),
            ));
        }
        Ok(())
    }
}

/// Signed per-pixel change map, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaImage {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl DeltaImage {
    pub fn nnz(&self) -> usize {
        self.values.iter().filter(|&&v| v != 0.0).count()
    }
}

/// Static background plus a sprite placed at one offset per object frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    background: Frame,
    sprite: Frame,
    positions: Vec<(usize, usize)>,
}

impl Scene {
    pub fn new(background: Frame, sprite: Frame, positions: Vec<(usize, usize)>) -> Result<Self> {
        if sprite.width > background.width || sprite.height > background.height {
            return Err(Error::dims(
                format!("sprite within {}x{}", background.width, background.height),
                format!("{}x{}", sprite.width, sprite.height),
            ));
        }
        for (k, &(row, col)) in positions.iter().enumerate() {
            if row + sprite.height > background.height || col + sprite.width > background.width {
                return Err(Error::Argument(format!(
                    "position {} ({row}, {col}) places the sprite outside the background",
                    k + 1
                )));
            }
        }
        Ok(Scene {
            background: background.with_index(0),
            sprite,
            positions,
        })
    }

    pub fn background(&self) -> &Frame {
        &self.background
    }

    pub fn sprite(&self) -> &Frame {
        &self.sprite
    }

    pub fn positions(&self) -> &[(usize, usize)] {
        &self.positions
    }

    /// Index of the last frame (equal to the number of object positions).
    pub fn last_frame(&self) -> usize {
        self.positions.len()
    }

    /// Center of the sprite's set pixels at frame `j` in scene coordinates,
    /// or `None` for the background frame or an empty sprite.
    pub fn sprite_centroid(&self, j: usize) -> Option<(f64, f64)> {
        if j == 0 || j > self.positions.len() {
            return None;
        }
        let (r0, c0) = self.positions[j - 1];
        let (mut sr, mut sc, mut count) = (0.0, 0.0, 0.0);
        for r in 0..self.sprite.height {
            for c in 0..self.sprite.width {
                if self.sprite.get(r, c) == 1 {
                    sr += (r0 + r) as f64;
                    sc += (c0 + c) as f64;
                    count += 1.0;
                }
            }
        }
        (count > 0.0).then(|| (sr / count, sc / count))
    }
}

/// Loads a binary PGM; samples equal to the max value become 1, zeros stay 0.
pub fn load_frame(path: impl AsRef<Path>) -> Result<Frame> {
    frame_from_gray(&pgm::read(path)?)
}

pub fn frame_from_gray(img: &pgm::GrayImage) -> Result<Frame> {
    let mut pixels = Vec::with_capacity(img.samples.len());
    for (i, &s) in img.samples.iter().enumerate() {
        match s {
            0 => pixels.push(0),
            s if s == img.max_value => pixels.push(1),
            s => {
                return Err(Error::NonBinary(format!(
                    "sample {i} = {s} is neither 0 nor {}",
                    img.max_value
                )))
            }
        }
    }
    Frame::new(img.width, img.height, pixels)
}

/// Frame `j` of the scene. Sprite pixels are OR-ed over the background.
pub fn render_scene(scene: &Scene, j: usize) -> Result<Frame> {
    if j > scene.positions.len() {
        return Err(Error::Index {
            index: j,
            max: scene.positions.len(),
        });
    }
    let mut frame = scene.background.clone().with_index(j);
    if j == 0 {
        return Ok(frame);
    }
    let (r0, c0) = scene.positions[j - 1];
    let sprite = &scene.sprite;
    for r in 0..sprite.height {
        for c in 0..sprite.width {
            if sprite.get(r, c) == 1 {
                frame.pixels[(r0 + r) * frame.width + c0 + c] = 1;
            }
        }
    }
    Ok(frame)
}

/// `f_j - f_prev`, elementwise.
pub fn frame_diff(f_j: &Frame, f_prev: &Frame) -> Result<DeltaImage> {
    f_j.check_same_dims(f_prev)?;
    Ok(DeltaImage {
        width: f_j.width,
        height: f_j.height,
        values: f_j
            .pixels
            .iter()
            .zip(&f_prev.pixels)
            .map(|(&a, &b)| a as f64 - b as f64)
            .collect(),
    })
}

/// Parsed scene script: background path, sprite path, then one `row col`
/// offset per line. `#` starts a comment. Relative paths resolve against
/// the script's directory.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneScript {
    pub background: PathBuf,
    pub sprite: PathBuf,
    pub positions: Vec<(usize, usize)>,
}

pub fn parse_scene_script(text: &str, base_dir: &Path) -> Result<SceneScript> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(no, l)| (no + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());

    let mut path_line = |what: &str| -> Result<PathBuf> {
        let (_, l) = lines
            .next()
            .ok_or_else(|| Error::Parse(format!("scene script is missing the {what} path")))?;
        Ok(base_dir.join(l))
    };
    let background = path_line("background")?;
    let sprite = path_line("sprite")?;

    let mut positions = Vec::new();
    for (no, line) in lines {
        let nums: Vec<&str> = line.split_whitespace().collect();
        let parsed = match nums.as_slice() {
            [r, c] => r.parse().ok().zip(c.parse().ok()),
            _ => None,
        };
        let pos = parsed.ok_or_else(|| {
            Error::Parse(format!("scene script line {no}: expected `row col`, got {line:?}"))
        })?;
        positions.push(pos);
    }
    Ok(SceneScript {
        background,
        sprite,
        positions,
    })
}

/// Reads a scene script and the two bitmaps it references.
pub fn load_scene(script_path: impl AsRef<Path>) -> Result<Scene> {
    let script_path = script_path.as_ref();
    let text = fs::read_to_string(script_path).map_err(|e| Error::io(script_path, e))?;
    let base = script_path.parent().unwrap_or(Path::new("."));
    let script = parse_scene_script(&text, base)?;
    Scene::new(
        load_frame(&script.background)?,
        load_frame(&script.sprite)?,
        script.positions,
    )
}
