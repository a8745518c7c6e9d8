//! Command-line orchestration: each pipeline stage is a subcommand, driven
//! by one experiment configuration and writing artifacts under one output
//! directory.
//!
//! Stages communicate exclusively through the filesystem so any stage can be
//! rerun or inspected in isolation:
//!
//! ```text
//! out/
//!   config.json            resolved configuration + hash
//!   raw/                   simulator logs (run_NN.csv) + manifest.json
//!   datasets/              preprocessed training data (run_NN.csv)
//!   fits/                  static model fits (cv.json, scv.json) + loss CSVs
//!   pinn/                  trained network (model.json) + loss curves
//!   sweep/                 hyperparameter search (trials.csv, best.json)
//!   eval/                  gain searches, traces, summary.json
//!   report.md              comparison table
//! ```
//!
//! Every artifact embeds the config hash and the seed: CSVs as `#` header
//! comments, JSON files as top-level fields. Reruns with an identical
//! config and seed reproduce every artifact byte for byte.
//!
//! `run-all` chains simulate, preprocess, fit, train, eval and report.
//! `sweep` stays standalone: it selects hyperparameters (which then belong
//! in the config) rather than producing an artifact later stages consume.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::{self, ExperimentConfig};
use crate::control::{run_closed_loop, Compensator, ControllerGains, Reference};
use crate::csvio;
use crate::error::{Error, Result};
use crate::eval::{
    disturbance_recovery, emit_report, energy_proxy, kp_grid, min_kp_search, tracking_rmse,
    ExperimentReport,
};
use crate::excitation::Waveform;
use crate::fitting::{fit_samples, FitResult, ModelKind};
use crate::friction::{CvParams, FrictionModel, ScvParams};
use crate::pinn::{random_search, train, write_trial_csv, OnlineEstimator, PinnModel};
use crate::sigproc::{pool_sliding_samples, run_pipeline, Dataset, SingleJointDynamics};
use crate::sim::{run_trajectory, RawLog};

/// Exit code for a config that fails to load or validate.
pub const EXIT_INVALID_CONFIG: i32 = 2;
/// Exit code for a stage that fails after config resolution.
pub const EXIT_STAGE_FAILURE: i32 = 1;

const DEFAULT_SEED: u64 = 0;

// ---------------------------------------------------------------------------
// Argument parsing
// ---------------------------------------------------------------------------

/// Friction identification pipeline for harmonic-drive joints.
#[derive(Debug, Parser)]
#[command(name = "frictionid", version, about)]
pub struct Cli {
    /// Experiment configuration file (JSON); defaults to a built-in fixture.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Output directory for all artifacts.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,

    /// Overrides the seed of every stage.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,

    /// Built-in fixture to run; mutually exclusive with --config.
    #[arg(long, global = true, conflicts_with = "config")]
    pub fixture: Option<Fixture>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Fixture {
    Ankle,
    Knee,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FitKind {
    Cv,
    Scv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the excitation batch through the simulator.
    Simulate,
    /// Filter and differentiate raw logs into training datasets.
    Preprocess,
    /// Fit the static friction models on the pooled sliding samples.
    Fit {
        /// Restrict to one model; default fits both.
        #[arg(long, value_name = "MODEL")]
        kind: Option<FitKind>,
    },
    /// Train the network on the preprocessed datasets.
    Train,
    /// Random-search the network hyperparameters.
    Sweep,
    /// Gain searches, tracking and disturbance experiments for all models.
    Eval,
    /// Render the comparison report from the evaluation summary.
    Report,
    /// Chain simulate, preprocess, fit, train, eval and report.
    RunAll,
}

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

/// Resolves the config, dispatches the subcommand and returns the process
/// exit code. Diagnostics go to stderr.
pub fn run(cli: &Cli) -> i32 {
    let cfg = match resolve_config(cli) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("invalid config: {e}");
            return EXIT_INVALID_CONFIG;
        }
    };
    match dispatch(&cli.command, &cfg, &cli.out) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_STAGE_FAILURE
        }
    }
}

/// Applies the flag > config > default precedence and validates the result.
pub fn resolve_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match (&cli.config, cli.fixture) {
        (Some(path), _) => ExperimentConfig::read_json(path)?,
        (None, Some(Fixture::Knee)) => config::knee(DEFAULT_SEED),
        (None, _) => config::ankle(DEFAULT_SEED),
    };
    if let Some(seed) = cli.seed {
        cfg.reseed(seed);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn dispatch(command: &Command, cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    write_json(&out.join("config.json"), &Stamped::new(cfg, cfg))?;
    match command {
        Command::Simulate => cmd_simulate(cfg, out),
        Command::Preprocess => cmd_preprocess(cfg, out),
        Command::Fit { kind } => cmd_fit(cfg, out, *kind),
        Command::Train => cmd_train(cfg, out),
        Command::Sweep => cmd_sweep(cfg, out),
        Command::Eval => cmd_eval(cfg, out),
        Command::Report => cmd_report(cfg, out),
        Command::RunAll => {
            cmd_simulate(cfg, out)?;
            cmd_preprocess(cfg, out)?;
            cmd_fit(cfg, out, None)?;
            cmd_train(cfg, out)?;
            cmd_eval(cfg, out)?;
            cmd_report(cfg, out)
        }
    }
}

// ---------------------------------------------------------------------------
// Artifact envelopes
// ---------------------------------------------------------------------------

/// JSON artifact wrapper carrying the provenance fields every output must
/// embed.
#[derive(Debug, Serialize, Deserialize)]
struct Stamped<T> {
    config_hash: String,
    seed: u64,
    payload: T,
}

impl<T> Stamped<T> {
    fn new(cfg: &ExperimentConfig, payload: T) -> Stamped<T> {
        Stamped {
            config_hash: cfg.hash(),
            seed: cfg.seed,
            payload,
        }
    }
}

/// One simulated run as listed in `raw/manifest.json`.
#[derive(Debug, Serialize, Deserialize)]
struct RunEntry {
    index: usize,
    file: String,
    waveform: Waveform,
    /// Load start position (rad).
    initial_position: f64,
    samples: usize,
    /// True when the run ended early on a position stop.
    limit_hit: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    runs: Vec<RunEntry>,
}

/// Everything `eval` measured; `report` renders it.
#[derive(Debug, Serialize, Deserialize)]
struct EvalSummary {
    /// Comparison gain: the network's minimum proportional gain.
    k_p_eq: f64,
    reports: Vec<ExperimentReport>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text)?;
    Ok(())
}

fn read_stamped<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    let stamped: Stamped<T> = serde_json::from_str(&text)?;
    Ok(stamped.payload)
}

fn run_file(k: usize) -> String {
    format!("run_{k:02}.csv")
}

/// Decorrelates the measurement noise of the runs in a batch while keeping
/// every run individually reproducible.
fn per_run_seed(base: u64, k: usize) -> u64 {
    base ^ (k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

/// Simulates the excitation batch and writes one raw log per run plus a
/// manifest.
pub fn cmd_simulate(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let dir = out.join("raw");
    std::fs::create_dir_all(&dir)?;
    let specs = cfg.excitation.expand()?;
    let comments = cfg.artifact_comments();

    use rayon::prelude::*;
    let logs: Vec<RawLog> = specs
        .par_iter()
        .enumerate()
        .map(|(k, spec)| {
            let mut noise = cfg.noise.clone();
            noise.seed = per_run_seed(cfg.noise.seed, k);
            let currents = spec.sample(cfg.rates.log);
            run_trajectory(
                &cfg.joint,
                &cfg.ground_truth,
                &currents,
                spec.initial_position,
                cfg.rates,
                &noise,
            )
        })
        .collect::<Result<Vec<_>>>()?;

    let mut runs = Vec::with_capacity(logs.len());
    for (k, (spec, raw)) in specs.iter().zip(&logs).enumerate() {
        let file = run_file(k);
        raw.write_csv(&dir.join(&file), &comments)?;
        runs.push(RunEntry {
            index: k,
            file,
            waveform: spec.waveform,
            initial_position: spec.initial_position,
            samples: raw.len(),
            limit_hit: raw.limit_hit,
        });
    }
    write_json(
        &dir.join("manifest.json"),
        &Stamped::new(cfg, Manifest { runs }),
    )
}

/// Runs the offline estimation pipeline over every raw log.
pub fn cmd_preprocess(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let dir = out.join("datasets");
    std::fs::create_dir_all(&dir)?;
    let manifest: Manifest = read_stamped(&out.join("raw").join("manifest.json"))?;
    let dynamics = SingleJointDynamics::from_params(&cfg.joint);
    let comments = cfg.artifact_comments();
    for entry in &manifest.runs {
        let raw = RawLog::read_csv(&out.join("raw").join(&entry.file), cfg.rates.log)?;
        let ds = run_pipeline(&raw, &cfg.joint, &dynamics, &cfg.pipeline)?;
        ds.write_csv(&dir.join(&entry.file), &comments)?;
    }
    Ok(())
}

fn load_datasets(out: &Path) -> Result<Vec<Dataset>> {
    let manifest: Manifest = read_stamped(&out.join("raw").join("manifest.json"))?;
    manifest
        .runs
        .iter()
        .map(|entry| Dataset::read_csv(&out.join("datasets").join(&entry.file)))
        .collect()
}

/// Combined identity of the training data, recorded in the fit artifacts.
fn batch_hash(datasets: &[Dataset]) -> String {
    use sha2::{Digest, Sha256};
    let mut hasher = Sha256::new();
    for ds in datasets {
        hasher.update(ds.content_hash());
    }
    format!("{:x}", hasher.finalize())
}

/// Fits the requested static models on the pooled sliding-phase samples.
pub fn cmd_fit(cfg: &ExperimentConfig, out: &Path, kind: Option<FitKind>) -> Result<()> {
    let dir = out.join("fits");
    std::fs::create_dir_all(&dir)?;
    let datasets = load_datasets(out)?;
    let (v, tau) = pool_sliding_samples(&datasets, cfg.fit.min_velocity);
    let hash = batch_hash(&datasets);
    let comments = cfg.artifact_comments();

    let kinds: &[(ModelKind, &str)] = match kind {
        Some(FitKind::Cv) => &[(ModelKind::Cv, "cv")],
        Some(FitKind::Scv) => &[(ModelKind::Scv, "scv")],
        None => &[(ModelKind::Cv, "cv"), (ModelKind::Scv, "scv")],
    };
    for &(model_kind, name) in kinds {
        let fit = fit_samples(model_kind, &v, &tau, &cfg.fit.adam, None, hash.clone())?;
        fit.write_loss_csv(&dir.join(format!("{name}_loss.csv")), &comments)?;
        write_json(&dir.join(format!("{name}.json")), &Stamped::new(cfg, &fit))?;
    }
    Ok(())
}

/// The physics prior for training and sweeps: the fitted model when the fit
/// stage has run, the configured parameters otherwise.
fn physics_prior(cfg: &ExperimentConfig, out: &Path) -> Result<ScvParams> {
    let path = out.join("fits").join("scv.json");
    if !path.exists() {
        return Ok(cfg.pinn.physics_params);
    }
    let fit: FitResult = read_stamped(&path)?;
    match fit.params {
        FrictionModel::Scv(p) => Ok(p),
        FrictionModel::Cv(_) => Err(Error::invalid("fits/scv.json holds a CV model")),
    }
}

/// Trains the network with the configured hyperparameters and the fitted
/// physics prior.
pub fn cmd_train(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let dir = out.join("pinn");
    std::fs::create_dir_all(&dir)?;
    let datasets = load_datasets(out)?;
    let mut pcfg = cfg.pinn.clone();
    pcfg.physics_params = physics_prior(cfg, out)?;

    let outcome = train(&datasets, &cfg.joint, &pcfg)?;
    let mut comments = cfg.artifact_comments();
    comments.push(format!("best_epoch={}", outcome.best_epoch));
    for (name, curve) in [
        ("train_curve.csv", &outcome.train_curve),
        ("val_curve.csv", &outcome.val_curve),
    ] {
        let epoch: Vec<f64> = (0..curve.len()).map(|e| e as f64).collect();
        let total: Vec<f64> = curve.iter().map(|p| p.total).collect();
        let data: Vec<f64> = curve.iter().map(|p| p.data).collect();
        let physics: Vec<f64> = curve.iter().map(|p| p.physics).collect();
        csvio::write_columns(
            &dir.join(name),
            &comments,
            "epoch,total,data,physics",
            &[&epoch, &total, &data, &physics],
        )?;
    }
    write_json(&dir.join("model.json"), &Stamped::new(cfg, &outcome.model))
}

/// Random-searches the hyperparameter space and records every trial.
pub fn cmd_sweep(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let dir = out.join("sweep");
    std::fs::create_dir_all(&dir)?;
    let datasets = load_datasets(out)?;
    let physics = physics_prior(cfg, out)?;
    let (best, trials) = random_search(
        &datasets,
        &cfg.joint,
        &cfg.sweep.space,
        &physics,
        cfg.sweep.n_trials,
        cfg.pinn.seed,
    )?;
    write_trial_csv(&trials, &dir.join("trials.csv"), &cfg.artifact_comments())?;
    write_json(&dir.join("best.json"), &Stamped::new(cfg, &best))
}

fn compensator_set(
    cv: CvParams,
    scv: ScvParams,
    model: &PinnModel,
) -> Vec<(&'static str, Compensator)> {
    vec![
        ("none", Compensator::None),
        ("cv", Compensator::Cv(cv)),
        ("scv", Compensator::Scv(scv)),
        ("pinn", Compensator::Pinn(Box::new(OnlineEstimator::new(model)))),
    ]
}

fn read_fit(out: &Path, name: &str) -> Result<FitResult> {
    read_stamped(&out.join("fits").join(format!("{name}.json")))
}

/// Runs the gain search, the equal-gain tracking comparison and the
/// disturbance-recovery experiment for every compensator.
pub fn cmd_eval(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let dir = out.join("eval");
    std::fs::create_dir_all(&dir)?;
    let comments = cfg.artifact_comments();

    let cv = match read_fit(out, "cv")?.params {
        FrictionModel::Cv(p) => p,
        FrictionModel::Scv(_) => return Err(Error::invalid("fits/cv.json holds an SCV model")),
    };
    let scv = match read_fit(out, "scv")?.params {
        FrictionModel::Scv(p) => p,
        FrictionModel::Cv(_) => return Err(Error::invalid("fits/scv.json holds a CV model")),
    };
    let model: PinnModel = read_stamped(&out.join("pinn").join("model.json"))?;
    let compensators = compensator_set(cv, scv, &model);

    let ev = &cfg.eval;
    let closed_loop = |reference: &Reference,
                       k_p: f64,
                       comp: &Compensator,
                       duration: f64,
                       pulse: Option<crate::control::TorquePulse>| {
        let mut comp = comp.clone();
        let gains = ControllerGains { k_p, k_d: ev.k_d };
        run_closed_loop(
            reference,
            &gains,
            &mut comp,
            &cfg.joint,
            &cfg.ground_truth,
            duration,
            pulse,
            &cfg.noise,
            &ev.loop_settings,
        )
    };

    // Minimum-gain search per compensator.
    let grid = kp_grid(ev.kp_lo, ev.kp_hi, ev.kp_per_decade)?;
    let mut min_kps = Vec::new();
    for (name, comp) in &compensators {
        let outcome = min_kp_search(&grid, ev.rmse_threshold, |k_p| {
            let trace = closed_loop(&ev.reference, k_p, comp, ev.duration, None)?;
            tracking_rmse(&trace, ev.rmse_start)
        })?;
        let kps: Vec<f64> = outcome.curve.iter().map(|&(k, _)| k).collect();
        let rmses: Vec<f64> = outcome.curve.iter().map(|&(_, e)| e).collect();
        csvio::write_columns(
            &dir.join(format!("kp_curve_{name}.csv")),
            &comments,
            "kp,rmse",
            &[&kps, &rmses],
        )?;
        min_kps.push(outcome.min_kp);
    }

    // Equal-gain comparison at the network's minimum gain.
    let k_p_eq = min_kps
        .last()
        .copied()
        .flatten()
        .ok_or_else(|| Error::invalid("network compensator never met the tracking threshold"))?;
    let pulse = ev.disturbance.pulse()?;
    let moment = ev.disturbance.joint_moment()?;
    let hold = Reference::Hold { position: 0.0 };

    let mut reports = Vec::new();
    for ((name, comp), min_kp) in compensators.iter().zip(&min_kps) {
        let tracking = closed_loop(&ev.reference, k_p_eq, comp, ev.duration, None)?;
        let trace_path = format!("eval/trace_tracking_{name}.csv");
        tracking.write_csv(&out.join(&trace_path), &comments)?;

        let recovery = closed_loop(&hold, k_p_eq, comp, ev.hold_duration, Some(pulse))?;
        recovery.write_csv(&out.join(format!("eval/trace_recovery_{name}.csv")), &comments)?;

        reports.push(ExperimentReport {
            model: name.to_string(),
            tracking_rmse: tracking_rmse(&tracking, ev.rmse_start)?,
            disturbance_moment: moment,
            min_kp: *min_kp,
            k_d: ev.k_d,
            recovery_rmse: disturbance_recovery(&recovery, &pulse, ev.recovery_window)?,
            energy_proxy: energy_proxy(&tracking),
            trace_path,
        });
    }
    write_json(
        &dir.join("summary.json"),
        &Stamped::new(cfg, EvalSummary { k_p_eq, reports }),
    )
}

/// Renders the Markdown comparison table from the evaluation summary.
pub fn cmd_report(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let summary: EvalSummary = read_stamped(&out.join("eval").join("summary.json"))?;
    emit_report(
        &summary.reports,
        &out.join("report.md"),
        &cfg.artifact_comments(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> std::result::Result<Cli, clap::Error> {
        Cli::try_parse_from(args)
    }

    #[test]
    fn help_lists_every_subcommand_and_flag() {
        let err = parse(&["frictionid", "--help"]).unwrap_err();
        let text = err.to_string();
        for name in [
            "simulate",
            "preprocess",
            "fit",
            "train",
            "sweep",
            "eval",
            "report",
            "run-all",
        ] {
            assert!(text.contains(name), "missing subcommand {name}");
        }
        for flag in ["--config", "--out", "--seed", "--fixture"] {
            assert!(text.contains(flag), "missing flag {flag}");
        }
    }

    #[test]
    fn unknown_flags_are_rejected() {
        assert!(parse(&["frictionid", "simulate", "--frobnicate"]).is_err());
    }

    #[test]
    fn config_and_fixture_conflict() {
        let err = parse(&[
            "frictionid",
            "simulate",
            "--config",
            "x.json",
            "--fixture",
            "knee",
        ])
        .unwrap_err();
        assert_eq!(err.kind(), clap::error::ErrorKind::ArgumentConflict);
    }

    #[test]
    fn seed_flag_overrides_the_fixture_seed() {
        let cli = parse(&["frictionid", "--seed", "42", "--fixture", "knee", "simulate"]).unwrap();
        let cfg = resolve_config(&cli).unwrap();
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.noise.seed, 42);
        assert_eq!(cfg.fixture, "knee");
    }

    #[test]
    fn missing_config_file_is_an_invalid_config() {
        let cli = parse(&["frictionid", "--config", "/nonexistent/x.json", "simulate"]).unwrap();
        assert!(resolve_config(&cli).is_err());
    }

    #[test]
    fn invalid_config_reports_the_dotted_field_path() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = config::ankle(1);
        cfg.joint.reduction_ratio = -1.0;
        let path = dir.path().join("bad.json");
        cfg.write_json(&path).unwrap();
        let cli = parse(&["frictionid", "--config", path.to_str().unwrap(), "simulate"]).unwrap();
        let err = resolve_config(&cli).unwrap_err();
        match err {
            Error::Config { path, .. } => assert!(path.contains("joint."), "path {path}"),
            other => panic!("expected a config error, got {other}"),
        }
    }

    #[test]
    fn per_run_seeds_differ_and_stay_reproducible() {
        let a: Vec<u64> = (0..8).map(|k| per_run_seed(7, k)).collect();
        let b: Vec<u64> = (0..8).map(|k| per_run_seed(7, k)).collect();
        assert_eq!(a, b);
        for i in 0..a.len() {
            for j in 0..i {
                assert_ne!(a[i], a[j]);
            }
        }
    }

    #[test]
    fn stamped_json_round_trips_and_carries_provenance() {
        let cfg = config::ankle(9);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.json");
        write_json(&path, &Stamped::new(&cfg, vec![1.0, 2.0])).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains(&cfg.hash()));
        assert!(text.contains("\"seed\": 9"));
        let back: Vec<f64> = read_stamped(&path).unwrap();
        assert_eq!(back, vec![1.0, 2.0]);
    }
}
