//! The four run modes. Each writes its artifacts plus `run.toml` (the
//! effective config), `run.log` and a manifest into the output directory,
//! and returns a report together with the outcome of the configured
//! acceptance checks.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use ghost_core::metrics::{self, SweepConfig, SweepPoint};
use ghost_core::noise::{self, NoiseModel, DEFAULT_DARK_FRACTION};
use ghost_core::rng;
use ghost_core::scene::{self, load_scene, Scene};
use ghost_core::sensing::{self, MeasurementVector};
use ghost_core::solver::{self, SolverConfig};
use ghost_core::tracking::{self, Localization, TrackConfig};
use sha2::{Digest, Sha256};

use crate::artifacts::{self, Header, Table, RUN_LOG};
use crate::config::{self, LoadedConfig, Mode, Overrides, RunConfig};
use crate::CliError;

/// MSE threshold used for photon thresholds when none is configured.
pub const DEFAULT_MSE_THRESHOLD: f64 = 0.04;
/// Stream label separating noise draws from pattern draws of one master seed.
const NOISE_LABEL: u64 = 0x6e6f_6973_65;

const RUN_CONFIG: &str = "run.toml";

/// One acceptance threshold and whether it held.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub report: String,
    pub checks: Vec<Check>,
}

impl Outcome {
    /// True iff every configured check passed.
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn check(name: &str, passed: bool, detail: String) -> Check {
    Check { name: name.into(), passed, detail }
}

fn render_checks(report: &mut String, checks: &[Check]) {
    if checks.is_empty() {
        report.push_str("no acceptance thresholds configured\n");
    }
    for c in checks {
        let _ = writeln!(report, "{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
}

/// Loads the config, pins the mode and dispatches.
pub fn run(mode: Mode, config_path: &Path, overrides: &Overrides) -> Result<Outcome, CliError> {
    let mut cfg = config::load(config_path, overrides)?;
    match (mode, cfg.run.mode) {
        (Mode::Eval, _) | (_, None) => {}
        (m, Some(declared)) if m == declared => {}
        (m, Some(declared)) => {
            return Err(CliError::Config(format!(
                "{} declares mode = \"{declared}\" but was run as `{m}`",
                config_path.display()
            )))
        }
    }
    if mode != Mode::Eval {
        cfg.set_mode(mode)?;
    }
    match mode {
        Mode::Background => cmd_background(&cfg),
        Mode::Track => cmd_track(&cfg),
        Mode::Sweep => cmd_sweep(&cfg),
        Mode::Eval => cmd_eval(&cfg),
    }
}

fn prepare_out_dir(cfg: &LoadedConfig) -> Result<(), CliError> {
    fs::create_dir_all(&cfg.out_dir).map_err(|e| CliError::io(&cfg.out_dir, e))
}

/// Writes `run.toml`, the report, the manifest and the wall-clock log.
fn finish(cfg: &LoadedConfig, mut files: Vec<String>, report: &str, started: Instant) -> Result<(), CliError> {
    let dir = &cfg.out_dir;
    artifacts::write_text(&dir.join(RUN_CONFIG), &cfg.canonical()?)?;
    artifacts::write_text(&dir.join("report.txt"), report)?;
    files.push(RUN_CONFIG.into());
    files.push("report.txt".into());
    artifacts::write_manifest(dir, &files)?;
    let now = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    artifacts::write_text(
        &dir.join(RUN_LOG),
        &format!("finished_unix={now}\nelapsed_s={:.3}\n", started.elapsed().as_secs_f64()),
    )
}

fn noise_model(cfg: &LoadedConfig) -> Result<Option<NoiseModel>, CliError> {
    cfg.run
        .noise
        .as_ref()
        .map(|n| {
            NoiseModel::new(n.photons, n.dark_fraction * n.photons, rng::derive_seed(cfg.run.seed, &[NOISE_LABEL]))
                .map_err(CliError::from)
        })
        .transpose()
}

fn photons_label(cfg: &LoadedConfig) -> String {
    cfg.run.noise.as_ref().map_or("none".into(), |n| n.photons.to_string())
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

/// Measures frame 0 with `m` patterns and reconstructs it with the
/// nonnegativity constraint.
pub fn cmd_background(cfg: &LoadedConfig) -> Result<Outcome, CliError> {
    let started = Instant::now();
    let m = cfg.measurements()?;
    let scene = load_scene(&cfg.scene_script)?;
    let bg = scene.background();
    let (w, h) = (bg.width(), bg.height());
    let (_, a) = sensing::seeded_matrix(m, w, h, cfg.run.seed)?;
    let ideal = sensing::measure_with_matrix(&a, bg)?;
    let y = match noise_model(cfg)? {
        None => ideal,
        Some(model) => {
            let counts = noise::apply_noise(&ideal, &model)?;
            let gain = counts.gain.unwrap_or(1.0);
            // expected dark counts are a known calibration and are removed
            MeasurementVector {
                values: counts.values.iter().map(|c| (c - model.dark_rate) / gain).collect(),
                ..counts
            }
        }
    };
    let solver = SolverConfig { nonnegative: true, ..cfg.run.solver.to_config()? };
    let rec = solver::tv_min(&a, &y, &solver)?;
    let image = sensing::rotate180_values(&rec.image);
    let mse = metrics::mse(&bg.to_f64(), &image)?;

    prepare_out_dir(cfg)?;
    let header = Header::for_run(cfg, "background")
        .with("m", m)
        .with("photons", photons_label(cfg))
        .with("mse", mse);
    artifacts::write_image_csv(&cfg.out_dir.join("background.csv"), &header, &image, w)?;
    artifacts::write_image_pgm(&cfg.out_dir.join("background.pgm"), &header, &image, w, h)?;

    let mut report = String::new();
    let _ = writeln!(report, "background reconstruction, m = {m} ({:.2}% of {} pixels)", 100.0 * m as f64 / (w * h) as f64, w * h);
    let _ = writeln!(report, "photons per measurement: {}", photons_label(cfg));
    let _ = writeln!(report, "mse: {mse}");
    let _ = writeln!(report, "relative residual: {:.3e}", rec.residual);
    let _ = writeln!(report, "outer iterations: {} (converged: {})", rec.outer_iterations, rec.converged);
    let checks: Vec<Check> = cfg
        .run
        .acceptance
        .max_mse
        .map(|max| check("background mse", mse <= max, format!("{mse:.5} <= {max}")))
        .into_iter()
        .collect();
    render_checks(&mut report, &checks);
    finish(cfg, vec!["background.csv".into(), "background.pgm".into()], &report, started)?;
    Ok(Outcome { report, checks })
}

fn track_config(cfg: &LoadedConfig) -> Result<TrackConfig, CliError> {
    let t = &cfg.run.track;
    Ok(TrackConfig {
        solver: cfg.run.solver.to_config()?,
        threshold_fraction: t.threshold_fraction.unwrap_or(TrackConfig::default().threshold_fraction),
        subtraction: t.subtraction()?,
        mu_per_photon: t.mu_per_photon,
    })
}

/// Per-step quantities shared by `track` and `eval`.
struct StepSummary {
    frame: usize,
    reference: usize,
    localization: Localization,
    mse: f64,
    error: Option<f64>,
}

fn track_checks(cfg: &RunConfig, steps: &[StepSummary]) -> Vec<Check> {
    let mut checks = Vec::new();
    if let Some(max) = cfg.acceptance.max_mse {
        let worst = steps.iter().map(|s| s.mse).fold(0.0, f64::max);
        checks.push(check("per-step mse", worst <= max, format!("worst {worst:.5} <= {max}")));
    }
    if let Some(max) = cfg.acceptance.max_centroid_error {
        let worst = steps.iter().map(|s| s.error.unwrap_or(f64::INFINITY)).fold(0.0, f64::max);
        checks.push(check("per-step centroid error", worst <= max, format!("worst {worst:.3} px <= {max} px")));
    }
    checks
}

fn track_report(steps: &[StepSummary], m: usize, n: usize, photons: Option<f64>) -> String {
    let mut report = String::new();
    let _ = writeln!(report, "tracking, m = {m} ({:.2}% of {n} pixels)", 100.0 * m as f64 / n as f64);
    let _ = writeln!(report, "frame  ref  new(row,col)       old(row,col)       conf    mse      err_px");
    let fmt = |c: Option<(f64, f64)>| c.map_or("-".to_string(), |(r, c)| format!("({r:.2},{c:.2})"));
    for s in steps {
        let r = s.localization.result();
        let _ = writeln!(
            report,
            "{:<6} {:<4} {:<18} {:<18} {:<7} {:<8.5} {}",
            s.frame,
            s.reference,
            fmt(r.and_then(|r| r.new_centroid)),
            fmt(r.and_then(|r| r.old_centroid)),
            r.map_or("-".into(), |r| format!("{:.3}", r.confidence)),
            s.mse,
            s.error.map_or("missing".into(), |e| format!("{e:.3}")),
        );
    }
    let mean = steps.iter().map(|s| s.mse).sum::<f64>() / steps.len().max(1) as f64;
    let _ = writeln!(report, "mean mse: {mean}");
    match photons {
        Some(p) => match metrics::bits_per_photon(n, m, p) {
            Ok(b) => {
                let _ = writeln!(report, "bits per photon: {b} ({n} px / ({m} x {p} photons))");
            }
            Err(e) => {
                let _ = writeln!(report, "bits per photon: {e}");
            }
        },
        None => report.push_str("bits per photon: n/a (noiseless)\n"),
    }
    report
}

/// Tracks the object through every frame of the scene.
pub fn cmd_track(cfg: &LoadedConfig) -> Result<Outcome, CliError> {
    let started = Instant::now();
    let m = cfg.measurements()?;
    let scene = load_scene(&cfg.scene_script)?;
    let (w, h) = (scene.background().width(), scene.background().height());
    let (_, a) = sensing::seeded_matrix(m, w, h, cfg.run.seed)?;
    let model = noise_model(cfg)?;
    let tc = track_config(cfg)?;
    let steps = tracking::track_sequence(&scene, &a, model.as_ref(), &tc)?;

    prepare_out_dir(cfg)?;
    let base = Header::for_run(cfg, "track").with("m", m).with("photons", photons_label(cfg));
    let mut files = Vec::new();
    let mut summaries = Vec::new();
    let mut rows = Vec::new();
    for st in &steps {
        let mse = metrics::mse(&st.truth.values, &st.delta.image)?;
        let error = tracking::centroid_error(&scene, st.frame, st.reference_frame, &st.localization);
        let header = base.clone().with("frame", st.frame).with("reference", st.reference_frame);
        let name = format!("delta_{}", st.frame);
        artifacts::write_image_csv(&cfg.out_dir.join(format!("{name}.csv")), &header, &st.delta.image, w)?;
        artifacts::write_image_pgm(&cfg.out_dir.join(format!("{name}.pgm")), &header, &st.delta.image, w, h)?;
        files.push(format!("{name}.csv"));
        files.push(format!("{name}.pgm"));
        let r = st.localization.result();
        let new = r.and_then(|r| r.new_centroid);
        let old = r.and_then(|r| r.old_centroid);
        rows.push(vec![
            st.frame.to_string(),
            st.reference_frame.to_string(),
            opt(new.map(|c| c.0)),
            opt(new.map(|c| c.1)),
            opt(old.map(|c| c.0)),
            opt(old.map(|c| c.1)),
            opt(r.map(|r| r.confidence)),
            mse.to_string(),
            opt(error),
            st.delta.outer_iterations.to_string(),
        ]);
        summaries.push(StepSummary {
            frame: st.frame,
            reference: st.reference_frame,
            localization: st.localization.clone(),
            mse,
            error,
        });
    }
    artifacts::write_table(
        &cfg.out_dir.join("trajectory.csv"),
        &base.clone().with("n", w * h).with("threshold_fraction", tc.threshold_fraction),
        &TRAJECTORY_COLUMNS,
        &rows,
    )?;
    files.push("trajectory.csv".into());

    let photons = cfg.run.noise.as_ref().map(|n| n.photons);
    let mut report = track_report(&summaries, m, w * h, photons);
    let checks = track_checks(&cfg.run, &summaries);
    render_checks(&mut report, &checks);
    finish(cfg, files, &report, started)?;
    Ok(Outcome { report, checks })
}

const TRAJECTORY_COLUMNS: [&str; 10] = [
    "frame",
    "reference",
    "new_row",
    "new_col",
    "old_row",
    "old_col",
    "confidence",
    "mse",
    "centroid_error",
    "outer_iterations",
];

fn sweep_config(cfg: &LoadedConfig) -> Result<SweepConfig, CliError> {
    let sweep = cfg
        .run
        .sweep
        .as_ref()
        .ok_or_else(|| CliError::Config("sweep mode needs a [sweep] table".into()))?;
    Ok(SweepConfig {
        frame_pair: sweep.frame_pair,
        measurements: sweep.measurements.clone(),
        photons: sweep.photons.clone(),
        seeds: sweep.seeds,
        master_seed: cfg.run.seed,
        dark_fraction: cfg.run.noise.as_ref().map_or(DEFAULT_DARK_FRACTION, |n| n.dark_fraction),
        solver: cfg.run.solver.to_config()?,
        mu_per_photon: sweep.mu_per_photon,
    })
}

fn sweep_summary(cfg: &RunConfig, points: &[SweepPoint], n: usize) -> (String, Vec<Check>) {
    let threshold = cfg.acceptance.max_mse.unwrap_or(DEFAULT_MSE_THRESHOLD);
    let mut report = String::new();
    let _ = writeln!(report, "photon sweep, {} seeds per point", points.first().map_or(0, |p| p.seeds));
    let _ = writeln!(report, "m      photons    mse_mean   mse_std");
    for p in points {
        let _ = writeln!(
            report,
            "{:<6} {:<10} {:<10.5} {:.5}",
            p.measurements,
            p.photons_per_measurement.map_or("none".into(), |v| v.to_string()),
            p.mse_mean,
            p.mse_std
        );
    }
    let mut ms: Vec<usize> = points.iter().map(|p| p.measurements).collect();
    ms.dedup();
    for &m in &ms {
        match metrics::threshold_photons(points, m, threshold) {
            Some(t) => {
                let bpp = metrics::bits_per_photon(n, m, t).map_or(f64::NAN, |b| b);
                let _ = writeln!(report, "m = {m}: mse <= {threshold} from {t} photons/measurement ({bpp:.5} bits/photon)");
            }
            None => {
                let _ = writeln!(report, "m = {m}: mse never <= {threshold} on this grid");
            }
        }
    }
    let checks = cfg
        .acceptance
        .photon_bands
        .iter()
        .flatten()
        .map(|&(m, lo, hi)| {
            let t = metrics::threshold_photons(points, m, threshold);
            let ok = t.is_some_and(|t| (lo..=hi).contains(&t));
            check(
                &format!("photon threshold m={m}"),
                ok,
                format!("{} in [{lo}, {hi}]", t.map_or("none".into(), |t| t.to_string())),
            )
        })
        .collect();
    (report, checks)
}

/// MSE against photons per measurement over the configured grid.
pub fn cmd_sweep(cfg: &LoadedConfig) -> Result<Outcome, CliError> {
    let started = Instant::now();
    let scene = load_scene(&cfg.scene_script)?;
    let sc = sweep_config(cfg)?;
    let points = metrics::photon_sweep(&scene, &sc)?;

    prepare_out_dir(cfg)?;
    let header = Header::for_run(cfg, "sweep")
        .with("frame_pair", format!("{}-{}", sc.frame_pair.0, sc.frame_pair.1))
        .with("dark_fraction", sc.dark_fraction)
        .with("n", scene.background().len());
    let rows: Vec<Vec<String>> = points
        .iter()
        .map(|p| {
            vec![
                p.measurements.to_string(),
                opt(p.photons_per_measurement),
                p.seeds.to_string(),
                p.mse_mean.to_string(),
                p.mse_std.to_string(),
            ]
        })
        .collect();
    artifacts::write_table(&cfg.out_dir.join("sweep.csv"), &header, &SWEEP_COLUMNS, &rows)?;
    let (mut report, checks) = sweep_summary(&cfg.run, &points, scene.background().len());
    render_checks(&mut report, &checks);
    finish(cfg, vec!["sweep.csv".into()], &report, started)?;
    Ok(Outcome { report, checks })
}

const SWEEP_COLUMNS: [&str; 5] = ["m", "photons", "seeds", "mse_mean", "mse_std"];

/// Verifies a finished run against its manifest and re-derives its metrics
/// from the stored artifacts.
pub fn cmd_eval(cfg: &LoadedConfig) -> Result<Outcome, CliError> {
    let dir = &cfg.out_dir;
    let names = artifacts::verify_manifest(dir)?;
    let run_text = fs::read_to_string(dir.join(RUN_CONFIG))
        .map_err(|e| CliError::Integrity(format!("cannot read {RUN_CONFIG}: {e}")))?;
    let run = config::parse(&run_text).map_err(|e| CliError::Integrity(format!("{RUN_CONFIG}: {e}")))?;
    let hash = hex::encode(Sha256::digest(run_text.as_bytes()));
    let has = |n: &str| names.iter().any(|x| x == n);
    let scene = load_scene(&cfg.scene_script)?;

    let mut report = format!("eval of {}\nartifacts verified: {}\n", dir.display(), names.len());
    let checks = match run.mode {
        Some(Mode::Track) if has("trajectory.csv") => eval_track(dir, &run, &hash, &scene, &mut report)?,
        Some(Mode::Background) if has("background.csv") => eval_background(dir, &run, &hash, &scene, &mut report)?,
        Some(Mode::Sweep) if has("sweep.csv") => {
            let table = artifacts::read_table(&dir.join("sweep.csv"))?;
            check_hash(&table.meta, &hash, "sweep.csv")?;
            let points = sweep_points(&table)?;
            let (text, checks) = sweep_summary(&run, &points, scene.background().len());
            report.push_str(&text);
            checks
        }
        other => {
            return Err(CliError::Integrity(format!(
                "{} does not hold the artifacts of a background, track or sweep run (mode {other:?})",
                dir.display()
            )))
        }
    };
    render_checks(&mut report, &checks);
    Ok(Outcome { report, checks })
}

fn check_hash(meta: &std::collections::BTreeMap<String, String>, hash: &str, name: &str) -> Result<(), CliError> {
    match meta.get("config_sha256") {
        Some(h) if h == hash => Ok(()),
        _ => Err(CliError::Integrity(format!("{name} was not produced by the recorded {RUN_CONFIG}"))),
    }
}

fn recorded_matches(name: &str, recorded: f64, recomputed: f64) -> Result<(), CliError> {
    if recorded.to_bits() != recomputed.to_bits() {
        return Err(CliError::Integrity(format!(
            "{name}: recorded {recorded} but the stored image gives {recomputed}"
        )));
    }
    Ok(())
}

fn eval_track(dir: &Path, run: &RunConfig, hash: &str, scene: &Scene, report: &mut String) -> Result<Vec<Check>, CliError> {
    let table: Table = artifacts::read_table(&dir.join("trajectory.csv"))?;
    check_hash(&table.meta, hash, "trajectory.csv")?;
    let m: usize = table.meta("m")?.parse().map_err(|_| CliError::Integrity("bad m in trajectory.csv".into()))?;
    let photons = match table.meta("photons")? {
        "none" => None,
        p => Some(p.parse::<f64>().map_err(|_| CliError::Integrity("bad photons in trajectory.csv".into()))?),
    };
    let threshold: f64 = table
        .meta("threshold_fraction")?
        .parse()
        .map_err(|_| CliError::Integrity("bad threshold_fraction in trajectory.csv".into()))?;

    let mut steps = Vec::new();
    for row in 0..table.rows.len() {
        let int = |name: &str| -> Result<usize, CliError> {
            table.get_f64(row, name)?.map(|v| v as usize).ok_or_else(|| CliError::Integrity(format!("missing {name}")))
        };
        let (frame, reference) = (int("frame")?, int("reference")?);
        let name = format!("delta_{frame}.csv");
        let (meta, values, w, _) = artifacts::read_image_csv(&dir.join(&name))?;
        check_hash(&meta, hash, &name)?;
        let truth = scene::frame_diff(&scene::render_scene(scene, frame)?, &scene::render_scene(scene, reference)?)?;
        let mse = metrics::mse(&truth.values, &values)?;
        let recorded = table.get_f64(row, "mse")?.ok_or_else(|| CliError::Integrity(format!("frame {frame}: missing mse")))?;
        recorded_matches(&format!("frame {frame} mse"), recorded, mse)?;
        let localization = tracking::localize_values(&values, w, threshold)?;
        let error = tracking::centroid_error(scene, frame, reference, &localization);
        match (table.get_f64(row, "centroid_error")?, error) {
            (Some(r), Some(e)) => recorded_matches(&format!("frame {frame} centroid error"), r, e)?,
            (None, None) => {}
            _ => return Err(CliError::Integrity(format!("frame {frame}: centroid error does not re-derive"))),
        }
        steps.push(StepSummary { frame, reference, localization, mse, error });
    }
    report.push_str("recorded mse and centroid errors re-derived exactly\n");
    report.push_str(&track_report(&steps, m, scene.background().len(), photons));
    Ok(track_checks(run, &steps))
}

fn eval_background(dir: &Path, run: &RunConfig, hash: &str, scene: &Scene, report: &mut String) -> Result<Vec<Check>, CliError> {
    let (meta, values, _, _) = artifacts::read_image_csv(&dir.join("background.csv"))?;
    check_hash(&meta, hash, "background.csv")?;
    let mse = metrics::mse(&scene.background().to_f64(), &values)?;
    let recorded: f64 = meta
        .get("mse")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| CliError::Integrity("background.csv has no mse header".into()))?;
    recorded_matches("background mse", recorded, mse)?;
    let _ = writeln!(report, "background mse: {mse} (re-derived)");
    Ok(run
        .acceptance
        .max_mse
        .map(|max| check("background mse", mse <= max, format!("{mse:.5} <= {max}")))
        .into_iter()
        .collect())
}

fn sweep_points(table: &Table) -> Result<Vec<SweepPoint>, CliError> {
    (0..table.rows.len())
        .map(|row| {
            let need = |name: &str| {
                table.get_f64(row, name)?.ok_or_else(|| CliError::Integrity(format!("sweep.csv row {row}: missing {name}")))
            };
            Ok(SweepPoint {
                measurements: need("m")? as usize,
                photons_per_measurement: table.get_f64(row, "photons")?,
                seeds: need("seeds")? as usize,
                mse_mean: need("mse_mean")?,
                mse_std: need("mse_std")?,
            })
        })
        .collect()
}
