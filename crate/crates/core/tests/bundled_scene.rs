//! Checks against the bundled scene and the committed golden vectors.
//!
//! The golden files were written by `write_golden_fixtures` (ignored; run it
//! with `--ignored` only when the pattern generator changes on purpose). It
//! computes every overlap with a plain double loop over pattern and frame
//! pixels, independently of the matrix path under test.

use std::fs;
use std::path::PathBuf;

use ghost_core::scene::{frame_diff, load_frame, load_scene, render_scene, Frame, Scene};
use ghost_core::sensing::{gen_patterns, measure_with_matrix, seeded_matrix, Pattern};
use ghost_core::tracking::delta_measure;

const GOLDEN_SEED: u64 = 1234;
const GOLDEN_M: usize = 400;

fn assets() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../assets/scene")
}

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn scene() -> Scene {
    load_scene(assets().join("scene.txt")).unwrap()
}

fn brute_force_vector(patterns: &[Pattern], frame: &Frame) -> Vec<i64> {
    let (w, h) = (frame.width(), frame.height());
    patterns
        .iter()
        .map(|p| {
            let mut acc = 0i64;
            for r in 0..h {
                for c in 0..w {
                    if p.mask[r * w + c] == 1 && frame.get(h - 1 - r, w - 1 - c) == 1 {
                        acc += 1;
                    }
                }
            }
            acc
        })
        .collect()
}

fn read_golden(name: &str) -> (String, Vec<f64>) {
    let text = fs::read_to_string(fixtures().join(name)).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().to_string();
    let values = lines.map(|l| l.trim().parse::<f64>().unwrap()).collect();
    (header, values)
}

#[test]
#[ignore]
fn write_golden_fixtures() {
    let scene = scene();
    let patterns = gen_patterns(GOLDEN_M, 64, 64, GOLDEN_SEED).unwrap();
    let vectors: Vec<Vec<i64>> = (0..=2).map(|j| brute_force_vector(&patterns, &render_scene(&scene, j).unwrap())).collect();
    let write = |name: &str, frame: &str, values: &[i64]| {
        let mut out = format!("# seed={GOLDEN_SEED}, m={GOLDEN_M}, frame={frame}\n");
        for v in values {
            out.push_str(&format!("{v}\n"));
        }
        fs::create_dir_all(fixtures()).unwrap();
        fs::write(fixtures().join(name), out).unwrap();
    };
    write("background_m400.csv", "0", &vectors[0]);
    write("frame1_m400.csv", "1", &vectors[1]);
    write("frame2_m400.csv", "2", &vectors[2]);
    let delta: Vec<i64> = vectors[2].iter().zip(&vectors[1]).map(|(a, b)| a - b).collect();
    write("delta_1_2_m400.csv", "2-1", &delta);
}

#[test]
fn background_asset_is_64_by_64() {
    let bg = load_frame(assets().join("background.pgm")).unwrap();
    assert_eq!((bg.width(), bg.height(), bg.len()), (64, 64, 4096));
    let s = scene();
    assert_eq!(s.positions().len(), 5);
    assert!(s.sprite().width() < 64 && s.sprite().height() < 64);
}

#[test]
fn golden_measurement_vectors() {
    let s = scene();
    let (_, a) = seeded_matrix(GOLDEN_M, 64, 64, GOLDEN_SEED).unwrap();
    let mut measured = Vec::new();
    for (j, name) in ["background_m400.csv", "frame1_m400.csv", "frame2_m400.csv"].iter().enumerate() {
        let (header, golden) = read_golden(name);
        assert_eq!(header, format!("# seed={GOLDEN_SEED}, m={GOLDEN_M}, frame={j}"));
        let v = measure_with_matrix(&a, &render_scene(&s, j).unwrap()).unwrap();
        assert_eq!(v.values, golden, "{name}");
        measured.push(v);
    }
    let (_, golden_delta) = read_golden("delta_1_2_m400.csv");
    let dj = delta_measure(&measured[2], &measured[1]).unwrap();
    assert_eq!(dj.values, golden_delta);
}

#[test]
fn consecutive_frames_differ_by_two_balanced_blobs() {
    let s = scene();
    let sprite_ones = s.sprite().count_ones();
    for j in 1..=s.last_frame() {
        let cur = render_scene(&s, j).unwrap();
        let prev = render_scene(&s, j - 1).unwrap();
        let d = frame_diff(&cur, &prev).unwrap();
        // brute-force subtraction
        for r in 0..64 {
            for c in 0..64 {
                assert_eq!(d.values[r * 64 + c], cur.get(r, c) as f64 - prev.get(r, c) as f64);
            }
        }
        let plus = d.values.iter().filter(|&&v| v == 1.0).count();
        let minus = d.values.iter().filter(|&&v| v == -1.0).count();
        assert_eq!(plus, sprite_ones, "frame {j}");
        assert_eq!(minus, if j == 1 { 0 } else { sprite_ones }, "frame {j}");
        // the change is sparser than either frame
        assert!(d.nnz() < cur.count_ones(), "frame {j}");
        if j > 1 {
            assert!(d.nnz() < prev.count_ones(), "frame {j}");
        }
    }
}
