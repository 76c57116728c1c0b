//! The benchmark pipeline: data, training, evaluation and report assembly.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use trb_core::metrics::{delta_distribution, evaluate, EvalResult};
use trb_core::rng::derive_seed;
use trb_core::synth::SCENE_FORMAT_VERSION;
use trb_core::train::{train_with_observer, CHECKPOINT_VERSION};
use trb_core::{
    augment_dataset, generate_dataset, load_checkpoint, read_scenes, save_checkpoint, AgentType, ConstantVelocity, Degradation,
    HorizonSet, Perturbation, Predictor, RecurrentModel, Scene, TrainConfig,
};

use crate::config::{BenchConfig, DataSource, ModelKind, ModelSpec, TargetFilter};
use crate::error::CliError;
use crate::report::{emit_report, BenchmarkReport, DistributionRow, Format, Provenance, ResultRow, ORIGINAL};

/// Where a run writes and whether it may reuse earlier checkpoints.
#[derive(Debug, Clone)]
pub struct RunContext {
    pub out_dir: PathBuf,
    pub resume: bool,
    /// Progress lines on stderr.
    pub verbose: bool,
    /// Train models whose checkpoint is missing; otherwise that is an error.
    pub train_missing: bool,
}

impl RunContext {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        Self {
            out_dir: out_dir.into(),
            resume: false,
            verbose: false,
            train_missing: true,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Timings {
    pub data: f64,
    /// `(model, training, seconds)`
    pub training: Vec<(String, String, f64)>,
    pub evaluation: f64,
    pub total: f64,
}

pub struct BenchOutcome {
    pub report: BenchmarkReport,
    pub timings: Timings,
}

fn mkdir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| CliError::io("output", e))
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>) -> Result<(), CliError> {
    let file = fs::File::create(path).map_err(|e| CliError::io("output", e))?;
    let mut w = BufWriter::new(file);
    f(&mut w).and_then(|_| w.flush()).map_err(|e| CliError::io("output", e))
}

/// Keeps only vehicle targets; scenes left without targets are dropped.
pub fn filter_targets(scenes: Vec<Scene>, filter: TargetFilter) -> Vec<Scene> {
    match filter {
        TargetFilter::All => scenes,
        TargetFilter::Vehicles => scenes
            .into_iter()
            .filter_map(|mut s| {
                let keep: Vec<_> = s
                    .targets
                    .iter()
                    .copied()
                    .filter(|id| s.track(*id).is_some_and(|t| t.agent_type == AgentType::Vehicle))
                    .collect();
                s.targets = keep;
                (!s.targets.is_empty()).then_some(s)
            })
            .collect(),
    }
}

/// Train and test scenes for a configuration.
pub fn load_data(cfg: &BenchConfig) -> Result<(Vec<Scene>, Vec<Scene>), CliError> {
    let (train, test) = match &cfg.data {
        DataSource::Generate { train, test } => {
            let mut train = train.clone();
            let mut test = test.clone();
            train.seed = derive_seed(cfg.seed, &[b"data", b"train"]);
            test.seed = derive_seed(cfg.seed, &[b"data", b"test"]);
            (
                generate_dataset(&train).map_err(|e| CliError::from_core("generate", e))?,
                generate_dataset(&test).map_err(|e| CliError::from_core("generate", e))?,
            )
        }
        DataSource::Files { train, test } => (
            read_scenes(train).map_err(|e| CliError::from_core("load train scenes", e))?,
            read_scenes(test).map_err(|e| CliError::from_core("load test scenes", e))?,
        ),
    };
    Ok((filter_targets(train, cfg.target_filter), filter_targets(test, cfg.target_filter)))
}

/// Training seeds depend on the run seed, the model and the training set only.
pub fn train_config_for(cfg: &BenchConfig, spec: &ModelSpec, training: &str) -> TrainConfig {
    TrainConfig {
        seed: derive_seed(cfg.seed, &[b"train", spec.name.as_bytes(), training.as_bytes()]),
        fine_tune: cfg.fine_tune && training != ORIGINAL,
        ..spec.train.clone()
    }
}

fn stem(model: &str, training: &str) -> String {
    format!("{model}__{training}")
}

/// Trains one model on one dataset, or reuses its checkpoint when resuming.
pub fn train_model(
    cfg: &BenchConfig,
    spec: &ModelSpec,
    training: &str,
    dataset: &[Scene],
    start: Option<&RecurrentModel>,
    ctx: &RunContext,
) -> Result<RecurrentModel, CliError> {
    let ckpt_dir = ctx.out_dir.join("checkpoints");
    let log_dir = ctx.out_dir.join("logs");
    mkdir(&ckpt_dir)?;
    mkdir(&log_dir)?;
    let ckpt = ckpt_dir.join(format!("{}.ckpt", stem(&spec.name, training)));
    if ctx.resume && ckpt.exists() {
        if ctx.verbose {
            eprintln!("reusing {}", ckpt.display());
        }
        return load_checkpoint(&ckpt).map_err(|e| CliError::from_core("resume", e));
    }
    if !ctx.train_missing {
        return Err(CliError::Config(format!("no checkpoint at {}; run `trb train` first", ckpt.display())));
    }

    let tc = train_config_for(cfg, spec, training);
    let init = match start {
        Some(m) if tc.fine_tune => m.clone(),
        _ => {
            let mut mc = spec.model.clone();
            mc.init_seed = derive_seed(cfg.seed, &[b"init", spec.name.as_bytes(), training.as_bytes()]);
            RecurrentModel::new(mc).map_err(|e| CliError::from_core("model", e))?
        }
    };

    let log_path = log_dir.join(format!("{}.jsonl", stem(&spec.name, training)));
    let file = fs::File::create(&log_path).map_err(|e| CliError::io("training log", e))?;
    let mut log = BufWriter::new(file);
    let mut log_err = None;
    let stage = format!("train {} on {}", spec.name, training);
    let (model, history) = train_with_observer(init, dataset, &tc, &mut |rec| {
        if ctx.verbose {
            eprintln!(
                "{}: epoch {} train {:.4} val {:.4} ({:.1}s)",
                stage, rec.epoch, rec.train_loss, rec.val_loss, rec.wall_time
            );
        }
        let line = serde_json::to_string(rec).expect("record serializes");
        if let Err(e) = writeln!(log, "{line}").and_then(|_| log.flush()) {
            log_err.get_or_insert(e);
        }
    })
    .map_err(|e| CliError::from_core(&stage, e))?;
    if let Some(e) = log_err {
        return Err(CliError::io("training log", e));
    }
    if ctx.verbose {
        eprintln!("{stage}: kept epoch {}", history.best_epoch);
    }
    save_checkpoint(&model, &ckpt).map_err(|e| CliError::from_core("checkpoint", e))?;
    Ok(model)
}

struct Evaluator<'a> {
    cfg: &'a BenchConfig,
    test: &'a [Scene],
    horizons: HorizonSet,
    out_dir: &'a Path,
    rows: Vec<ResultRow>,
    distributions: Vec<DistributionRow>,
}

impl Evaluator<'_> {
    fn trajectory_file(&self, model: &str, training: &str, condition: &str) -> Result<(PathBuf, String), CliError> {
        mkdir(&self.out_dir.join("trajectories"))?;
        let rel = format!("trajectories/{}__{condition}.csv", stem(model, training));
        Ok((self.out_dir.join(&rel), rel))
    }

    fn record(&mut self, model: &str, training: &str, condition: &str, result: &EvalResult, base: Option<&EvalResult>) -> Result<(), CliError> {
        let (path, rel) = self.trajectory_file(model, training, condition)?;
        write_file(&path, |w| result.write_csv(w))?;
        let d = base.map(|b| Degradation::between(b.aggregate, result.aggregate));
        self.rows.push(ResultRow {
            model: model.into(),
            training: training.into(),
            condition: condition.into(),
            min_ade: result.aggregate,
            count: result.count,
            failures: result.failures.len(),
            delta: d.map(|d| d.delta),
            relative: d.and_then(|d| d.relative),
            per_trajectory: rel,
        });
        if let Some(b) = base {
            if result.count == 0 {
                return Ok(());
            }
            let dist = delta_distribution(b, result, &self.cfg.histogram).map_err(|e| CliError::from_core("distribution", e))?;
            mkdir(&self.out_dir.join("deltas"))?;
            let rel = format!("deltas/{}__{condition}.csv", stem(model, training));
            write_file(&self.out_dir.join(&rel), |w| dist.write_csv(w))?;
            self.distributions.push(DistributionRow {
                model: model.into(),
                training: training.into(),
                condition: condition.into(),
                count: dist.deltas.len(),
                median: dist.median,
                p25: dist.p25,
                p75: dist.p75,
                histogram: dist.histogram,
                deltas: rel,
            });
        }
        Ok(())
    }

    /// Clean evaluation plus the listed perturbations, all against the clean result.
    fn run(&mut self, model: &dyn Predictor, name: &str, training: &str, conditions: &[Perturbation]) -> Result<(), CliError> {
        let base = evaluate(model, self.test, None, &self.horizons);
        self.record(name, training, ORIGINAL, &base, None)?;
        for p in conditions {
            let r = evaluate(model, self.test, Some(p), &self.horizons);
            self.record(name, training, &p.label(), &r, Some(&base))?;
        }
        Ok(())
    }
}

/// Runs the whole benchmark and writes every artifact under `ctx.out_dir`.
pub fn run_benchmark(cfg: &BenchConfig, ctx: &RunContext) -> Result<BenchOutcome, CliError> {
    cfg.validate()?;
    let started = Instant::now();
    mkdir(&ctx.out_dir)?;
    let mut timings = Timings::default();

    let t = Instant::now();
    let (train, test) = load_data(cfg)?;
    timings.data = t.elapsed().as_secs_f64();
    if ctx.verbose {
        eprintln!("{} train scenes, {} test scenes", train.len(), test.len());
    }

    let mut ev = Evaluator {
        cfg,
        test: &test,
        horizons: HorizonSet::uniform(cfg.horizon_steps),
        out_dir: &ctx.out_dir,
        rows: Vec::new(),
        distributions: Vec::new(),
    };
    let mut eval_time = 0.0;

    for spec in &cfg.models {
        match spec.kind {
            ModelKind::Cv => {
                let t = Instant::now();
                ev.run(&ConstantVelocity, &spec.name, ORIGINAL, &cfg.perturbations)?;
                eval_time += t.elapsed().as_secs_f64();
            }
            ModelKind::Recurrent => {
                let t = Instant::now();
                let model = train_model(cfg, spec, ORIGINAL, &train, None, ctx)?;
                timings.training.push((spec.name.clone(), ORIGINAL.into(), t.elapsed().as_secs_f64()));
                let t = Instant::now();
                ev.run(&model, &spec.name, ORIGINAL, &cfg.perturbations)?;
                eval_time += t.elapsed().as_secs_f64();

                if !cfg.retrain {
                    continue;
                }
                for p in &cfg.perturbations {
                    let label = p.label();
                    let augmented = augment_dataset(&train, p).map_err(|e| CliError::from_core("augment", e))?;
                    let t = Instant::now();
                    let retrained = train_model(cfg, spec, &label, &augmented, Some(&model), ctx)?;
                    timings.training.push((spec.name.clone(), label.clone(), t.elapsed().as_secs_f64()));
                    let t = Instant::now();
                    ev.run(&retrained, &spec.name, &label, std::slice::from_ref(p))?;
                    eval_time += t.elapsed().as_secs_f64();
                }
            }
        }
    }
    timings.evaluation = eval_time;

    let report = BenchmarkReport {
        provenance: Provenance {
            seed: cfg.seed,
            config_hash: cfg.fingerprint(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            scene_format_version: SCENE_FORMAT_VERSION,
            checkpoint_version: CHECKPOINT_VERSION,
            train_scenes: train.len(),
            test_scenes: test.len(),
            test_targets: test.iter().map(|s| s.targets.len()).sum(),
        },
        models: cfg.models.iter().map(|m| m.name.clone()).collect(),
        perturbations: cfg.perturbations.iter().map(|p| p.label()).collect(),
        rows: ev.rows,
        distributions: ev.distributions,
    };

    write_file(&ctx.out_dir.join("report.json"), |w| w.write_all(report.to_json().as_bytes()))?;
    write_file(&ctx.out_dir.join("config.toml"), |w| w.write_all(cfg.to_toml().as_bytes()))?;
    for f in [Format::Md, Format::Csv, Format::Summary] {
        emit_report(&report, &ctx.out_dir, f)?;
    }
    timings.total = started.elapsed().as_secs_f64();
    write_file(&ctx.out_dir.join("timings.json"), |w| {
        serde_json::to_writer_pretty(&mut *w, &timings)?;
        writeln!(w)
    })?;
    Ok(BenchOutcome { report, timings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ModelSpec;
    use trb_core::synth::GenConfig;

    fn tiny() -> BenchConfig {
        BenchConfig {
            data: DataSource::Generate {
                train: GenConfig { scenes: 6, id_prefix: "train-".into(), ..GenConfig::default() },
                test: GenConfig { scenes: 3, id_prefix: "test-".into(), ..GenConfig::default() },
            },
            models: vec![ModelSpec::cv()],
            retrain: false,
            ..BenchConfig::default()
        }
    }

    #[test]
    fn cv_only_run_writes_consistent_report() {
        let dir = tempfile::tempdir().unwrap();
        let out = run_benchmark(&tiny(), &RunContext::new(dir.path())).unwrap();
        assert_eq!(out.report.rows.len(), 4);
        out.report.check_consistency().unwrap();
        for f in ["report.json", "report.md", "results.csv", "timings.json", "summary.txt"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let loaded = BenchmarkReport::load(&dir.path().join("report.json")).unwrap();
        assert_eq!(loaded, out.report);
    }

    #[test]
    fn vehicle_filter_drops_other_targets() {
        let scenes = generate_dataset(&GenConfig { scenes: 20, ..GenConfig::default() }).unwrap();
        let kept = filter_targets(scenes, TargetFilter::Vehicles);
        for s in &kept {
            assert!(!s.targets.is_empty());
            for id in &s.targets {
                assert_eq!(s.track(*id).unwrap().agent_type, AgentType::Vehicle);
            }
        }
    }

    #[test]
    fn training_seed_depends_on_training_set() {
        let cfg = BenchConfig::default();
        let spec = &cfg.models[1];
        assert_ne!(train_config_for(&cfg, spec, ORIGINAL).seed, train_config_for(&cfg, spec, "remove_road").seed);
        assert_eq!(train_config_for(&cfg, spec, ORIGINAL).seed, train_config_for(&cfg, spec, ORIGINAL).seed);
    }
}
