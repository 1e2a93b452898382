//! Acceptance suite: one pass/fail line per criterion. Runs without the
//! libtest harness so the lines always reach the output; exits nonzero if
//! any criterion fails.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use ghost_core::metrics::{self, SweepConfig};
use ghost_core::noise::{apply_noise, sample_poisson, NoiseModel, DEFAULT_DARK_FRACTION};
use ghost_core::rng::{self, Domain};
use ghost_core::scene::{frame_diff, load_scene, Frame};
use ghost_core::sensing::{
    gen_patterns, measure, measure_all, measure_with_matrix, rotate180, seeded_matrix, MeasurementKind,
    MeasurementVector, SensingMatrix,
};
use ghost_core::solver::{reference_solve, tv_min, SolverConfig, TvNorm};
use ghost_core::tracking::delta_measure;
use ghost_tracker::artifacts::RUN_LOG;
use ghost_tracker::{run, Mode, Outcome, Overrides};
use rand::Rng;

type Verdict = Result<String, String>;

fn workspace() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn config(name: &str) -> PathBuf {
    workspace().join("configs").join(name)
}

fn run_into(mode: Mode, cfg: &str, out: &Path) -> Result<Outcome, String> {
    let overrides = Overrides { out: Some(out.to_path_buf()), ..Default::default() };
    run(mode, &config(cfg), &overrides).map_err(|e| e.to_string())
}

fn failed_checks(o: &Outcome) -> String {
    o.checks.iter().filter(|c| !c.passed).map(|c| format!("{}: {}", c.name, c.detail)).collect::<Vec<_>>().join("; ")
}

fn compression_budget() -> Verdict {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let started = Instant::now();
    let at400 = run_into(Mode::Track, "track_400.toml", &dir.path().join("400"))?;
    let per_step = started.elapsed().as_secs_f64() / 5.0;
    let at100 = run_into(Mode::Track, "track_100.toml", &dir.path().join("100"))?;
    if !at400.passed() {
        return Err(format!("m=400: {}", failed_checks(&at400)));
    }
    if !at100.passed() {
        return Err(format!("m=100: {}", failed_checks(&at100)));
    }
    if per_step >= 120.0 {
        return Err(format!("{per_step:.1} s per step at m=400"));
    }
    let detail = |o: &Outcome| o.checks.iter().map(|c| c.detail.clone()).collect::<Vec<_>>().join(", ");
    Ok(format!("m=400 mse {}; m=100 centroid {}; {per_step:.1} s per step", detail(&at400), detail(&at100)))
}

fn noiseless_sweep_config() -> SweepConfig {
    SweepConfig {
        frame_pair: (1, 2),
        measurements: vec![],
        photons: vec![],
        seeds: 10,
        master_seed: 7,
        dark_fraction: DEFAULT_DARK_FRACTION,
        solver: SolverConfig::default(),
        mu_per_photon: None,
    }
}

fn monotonicity() -> Verdict {
    let scene = load_scene(workspace().join("assets/scene/scene.txt")).map_err(|e| e.to_string())?;
    let sc = noiseless_sweep_config();
    let mut means = Vec::new();
    for m in [100, 200, 400] {
        means.push(metrics::sweep_point(&scene, &sc, m, None).map_err(|e| e.to_string())?.mse_mean);
    }
    let line = format!("mean mse m=100 {:.5} > m=200 {:.5} > m=400 {:.5}", means[0], means[1], means[2]);
    if means[0] > means[1] && means[1] > means[2] {
        Ok(line)
    } else {
        Err(line)
    }
}

fn photon_thresholds() -> Verdict {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let started = Instant::now();
    let o = run_into(Mode::Sweep, "sweep.toml", dir.path())?;
    let minutes = started.elapsed().as_secs_f64() / 60.0;
    if o.checks.len() != 2 {
        return Err("sweep config must declare bands for m=100 and m=400".into());
    }
    let detail = o.checks.iter().map(|c| format!("{}: {}", c.name, c.detail)).collect::<Vec<_>>().join("; ");
    if o.passed() && minutes < 30.0 {
        Ok(format!("{detail}; {minutes:.1} min"))
    } else {
        Err(format!("{detail}; {minutes:.1} min"))
    }
}

fn bits_per_photon() -> Verdict {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    run_into(Mode::Track, "track_100_p500.toml", dir.path())?;
    let eval = run_into(Mode::Eval, "track_100_p500.toml", dir.path())?;
    let line = eval
        .report
        .lines()
        .find(|l| l.starts_with("bits per photon"))
        .ok_or("eval report has no bits-per-photon line")?
        .to_string();
    if line.starts_with("bits per photon: 0.08192 ") {
        Ok(line)
    } else {
        Err(line)
    }
}

fn observe(a: &SensingMatrix, x: &[f64]) -> MeasurementVector {
    let mut values = vec![0.0; a.m()];
    a.apply(x, &mut values);
    MeasurementVector { values, frame_index: 0, kind: MeasurementKind::Ideal, patterns: a.id(), gain: None }
}

fn rectangles(w: usize, seed: u64) -> Vec<f64> {
    let mut r = rng::stream(seed, Domain::Patterns, 4_242);
    let mut x = vec![0.0; w * w];
    for k in 0..3 {
        let (h0, w0) = (r.random_range(1..=w / 2), r.random_range(1..=w / 2));
        let (r0, c0) = (r.random_range(0..=w - h0), r.random_range(0..=w - w0));
        for rr in r0..r0 + h0 {
            for cc in c0..c0 + w0 {
                x[rr * w + cc] = if k == 1 { -1.0 } else { 1.0 };
            }
        }
    }
    x
}

fn solver_oracle() -> Verdict {
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for (w, seeds) in [(8usize, 0u64..10), (16, 50..60)] {
        for seed in seeds {
            let n = w * w;
            let (_, a) = seeded_matrix(n / 2, w, w, seed).map_err(|e| e.to_string())?;
            let y = observe(&a, &rectangles(w, seed));
            let config = SolverConfig {
                tv_norm: if seed % 2 == 0 { TvNorm::Isotropic } else { TvNorm::Anisotropic },
                ..Default::default()
            };
            let fast = tv_min(&a, &y, &config).map_err(|e| e.to_string())?;
            let slow = reference_solve(&a, &y, &config).map_err(|e| e.to_string())?;
            worst = worst.max((fast.objective - slow.objective).abs() / slow.objective);
            cases += 1;
        }
    }
    if worst >= 0.02 {
        return Err(format!("objective gap {worst:.2e} over {cases} instances"));
    }

    let mut r = rng::stream(11, Domain::Noise, 0);
    let frame = Frame::new(8, 8, (0..64).map(|_| r.random_range(0..2u8)).collect()).map_err(|e| e.to_string())?;
    let a = SensingMatrix::raster(8, 8).map_err(|e| e.to_string())?;
    let y = measure_with_matrix(&a, &frame).map_err(|e| e.to_string())?;
    let rec = tv_min(&a, &y, &SolverConfig { mu: 1024.0, ..Default::default() }).map_err(|e| e.to_string())?;
    let truth: Vec<f64> = frame.to_f64().into_iter().rev().collect();
    let raster_err = rec.image.iter().zip(&truth).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
    if raster_err >= 0.05 {
        return Err(format!("raster per-pixel error {raster_err}"));
    }

    let (_, a) = seeded_matrix(30, 8, 8, 3).map_err(|e| e.to_string())?;
    let zero = tv_min(&a, &observe(&a, &[0.0; 64]), &SolverConfig::default()).map_err(|e| e.to_string())?;
    if zero.image.iter().any(|&v| v != 0.0) {
        return Err("y = 0 did not give the zero image".into());
    }
    Ok(format!("{cases} instances, worst objective gap {worst:.2e}; raster error {raster_err:.2e}; y=0 gives 0"))
}

fn random_frame(r: &mut impl Rng, w: usize, h: usize) -> Frame {
    Frame::new(w, h, (0..w * h).map(|_| r.random_range(0..2u8)).collect()).expect("binary frame")
}

fn forward_model() -> Verdict {
    let mut r = rng::stream(99, Domain::Noise, 0);
    for trial in 0..200u64 {
        // brute-force overlap on 4x4
        let f = random_frame(&mut r, 4, 4);
        let pats = gen_patterns(3, 4, 4, trial).map_err(|e| e.to_string())?;
        for p in &pats {
            let mut acc = 0.0;
            for row in 0..4 {
                for col in 0..4 {
                    acc += (p.mask[row * 4 + col] * f.get(3 - row, 3 - col)) as f64;
                }
            }
            if measure(p, &f).map_err(|e| e.to_string())? != acc {
                return Err(format!("trial {trial}: overlap differs from the double loop"));
            }
        }
        // linearity over disjoint supports
        let split: Vec<u8> = (0..36).map(|_| r.random_range(0..3u8)).collect();
        let part = |k: u8| Frame::new(6, 6, split.iter().map(|&s| (s == k) as u8).collect()).expect("frame");
        let union = Frame::new(6, 6, split.iter().map(|&s| (s != 0) as u8).collect()).expect("frame");
        let pats = gen_patterns(8, 6, 6, trial).map_err(|e| e.to_string())?;
        let (y1, y2, yu) = (
            measure_all(&pats, &part(1)).map_err(|e| e.to_string())?,
            measure_all(&pats, &part(2)).map_err(|e| e.to_string())?,
            measure_all(&pats, &union).map_err(|e| e.to_string())?,
        );
        if (0..8).any(|k| yu.values[k] != y1.values[k] + y2.values[k]) {
            return Err(format!("trial {trial}: not additive over disjoint supports"));
        }
        // rotate180 involution and covariance
        let g = random_frame(&mut r, 5, 3);
        if rotate180(&rotate180(&g)).pixels() != g.pixels() {
            return Err(format!("trial {trial}: rotate180 is not an involution"));
        }
        let pats = gen_patterns(4, 5, 3, trial).map_err(|e| e.to_string())?;
        for p in &pats {
            let rotated_mask = ghost_core::sensing::Pattern { mask: p.mask.iter().rev().cloned().collect(), ..p.clone() };
            if measure(&rotated_mask, &rotate180(&g)).map_err(|e| e.to_string())? != measure(p, &g).map_err(|e| e.to_string())? {
                return Err(format!("trial {trial}: rotating mask and frame changed the overlap"));
            }
        }
        // delta_measure equals the forward model of frame_diff
        let (cur, prev) = (random_frame(&mut r, 6, 6), random_frame(&mut r, 6, 6));
        let (_, a) = seeded_matrix(10, 6, 6, trial).map_err(|e| e.to_string())?;
        let dj = delta_measure(
            &measure_with_matrix(&a, &cur.clone().with_index(2)).map_err(|e| e.to_string())?,
            &measure_with_matrix(&a, &prev.clone().with_index(1)).map_err(|e| e.to_string())?,
        )
        .map_err(|e| e.to_string())?;
        let diff = frame_diff(&cur, &prev).map_err(|e| e.to_string())?;
        let rotated: Vec<f64> = diff.values.iter().rev().cloned().collect();
        let mut direct = vec![0.0; 10];
        a.apply(&rotated, &mut direct);
        if dj.values != direct {
            return Err(format!("trial {trial}: delta_measure differs from the forward model of frame_diff"));
        }
    }
    Ok("200 randomized trials: 4x4 brute-force overlap, disjoint additivity, rotate180 involution and covariance, delta_measure vs frame_diff".into())
}

fn read_outputs(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| e.to_string())? {
        let entry = entry.map_err(|e| e.to_string())?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name != RUN_LOG {
            files.push((name, fs::read(entry.path()).map_err(|e| e.to_string())?));
        }
    }
    files.sort();
    Ok(files)
}

fn noise_statistics() -> Verdict {
    const SAMPLES: usize = 10_000;
    let mut worst_z: f64 = 0.0;
    let mut dispersions = Vec::new();
    for (i, &lambda) in [0.5, 6.0, 45.0, 500.0].iter().enumerate() {
        let mut r = rng::stream(31, Domain::Noise, i as u64);
        let xs: Vec<f64> = (0..SAMPLES).map(|_| sample_poisson(&mut r, lambda) as f64).collect();
        let mean = xs.iter().sum::<f64>() / SAMPLES as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (SAMPLES as f64 - 1.0);
        worst_z = worst_z.max((mean - lambda).abs() / (lambda / SAMPLES as f64).sqrt());
        dispersions.push(var / mean);
    }
    if worst_z >= 5.0 || dispersions.iter().any(|d| !(0.8..=1.2).contains(d)) {
        return Err(format!("worst mean offset {worst_z:.2} SE, dispersions {dispersions:.3?}"));
    }

    let (_, a) = seeded_matrix(50, 16, 16, 2).map_err(|e| e.to_string())?;
    let mut r = rng::stream(5, Domain::Noise, 1);
    let y = measure_with_matrix(&a, &random_frame(&mut r, 16, 16)).map_err(|e| e.to_string())?;
    let model = NoiseModel::new(500.0, 10.0, 12).map_err(|e| e.to_string())?;
    let (c1, c2) = (apply_noise(&y, &model).map_err(|e| e.to_string())?, apply_noise(&y, &model).map_err(|e| e.to_string())?);
    if c1.values.iter().zip(&c2.values).any(|(p, q)| p.to_bits() != q.to_bits()) {
        return Err("noisy vectors differ under one seed".into());
    }

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (d1, d2) = (dir.path().join("a"), dir.path().join("b"));
    run_into(Mode::Track, "track_100_p500.toml", &d1)?;
    run_into(Mode::Track, "track_100_p500.toml", &d2)?;
    let (o1, o2) = (read_outputs(&d1)?, read_outputs(&d2)?);
    if o1 != o2 {
        return Err("two noisy tracking runs with one seed produced different artifacts".into());
    }
    Ok(format!(
        "worst mean offset {worst_z:.2} SE, dispersions {dispersions:.3?}; {} artifacts bit-identical across runs",
        o1.len()
    ))
}

fn background() -> Verdict {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let o = run_into(Mode::Background, "background.toml", dir.path())?;
    let line = o.report.lines().find(|l| l.starts_with("mse:")).unwrap_or("mse: missing").to_string();
    let mse: f64 = line.trim_start_matches("mse:").trim().parse().map_err(|_| line.clone())?;
    if mse < 0.04 && o.passed() {
        Ok(format!("m=2000 background {line}"))
    } else {
        Err(format!("m=2000 background {line}"))
    }
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Verdict); 8] = [
        ("compression budget", compression_budget),
        ("monotonicity in m", monotonicity),
        ("photon-threshold bands", photon_thresholds),
        ("bits per photon", bits_per_photon),
        ("solver oracle suite", solver_oracle),
        ("forward-model properties", forward_model),
        ("noise statistics and determinism", noise_statistics),
        ("background reconstruction", background),
    ];
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let verdict = check();
        let secs = started.elapsed().as_secs_f64();
        match verdict {
            Ok(detail) => println!("criterion {} ({name}): PASS [{secs:.0} s] {detail}", i + 1),
            Err(detail) => {
                failures += 1;
                println!("criterion {} ({name}): FAIL [{secs:.0} s] {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
