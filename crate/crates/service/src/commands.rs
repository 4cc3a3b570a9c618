use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use touchstone_core::config::Config;
use touchstone_core::neuro::{evaluate, train, train_direct, EvalMetrics, HardnessModel, TrainSets};
use touchstone_core::par::Exec;
use touchstone_core::pipeline::{
    evaluate_servoing, ranking_validation, run_scenario, LatencyReport, Pipeline, RankingOutcome, RankingProtocol,
    RunRecord, ScenarioSpec, ServoingReport, SuccessReport,
};
use touchstone_core::seeding::{mix, stream};
use touchstone_core::tactile::dataset::{
    finetune_set, heldout_set, load_dataset, monitor_set, pretrain_set, save_dataset, ClipSample, PRETRAIN_CLIPS,
};

pub const PRETRAIN_VAL_CLIPS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Profile {
    Pretrain,
    PretrainVal,
    Finetune,
    Monitor,
    Heldout,
}

impl Profile {
    pub const ALL: [Profile; 5] =
        [Profile::Pretrain, Profile::PretrainVal, Profile::Finetune, Profile::Monitor, Profile::Heldout];

    pub fn dir_name(self) -> &'static str {
        match self {
            Profile::Pretrain => "pretrain",
            Profile::PretrainVal => "pretrain-val",
            Profile::Finetune => "finetune",
            Profile::Monitor => "monitor",
            Profile::Heldout => "heldout",
        }
    }

    fn tag(self) -> u64 {
        match self {
            Profile::Pretrain => 1,
            Profile::PretrainVal => 2,
            Profile::Finetune => 3,
            Profile::Monitor => 4,
            Profile::Heldout => 5,
        }
    }
}

/// Settings shared by every subcommand.
#[derive(Debug, Clone)]
pub struct Settings {
    pub config: Config,
    pub seed: u64,
    pub out: PathBuf,
    pub exec: Exec,
}

impl Settings {
    pub fn new(config: Config, seed: u64, out: &Path) -> Settings {
        Settings { config, seed, out: out.to_path_buf(), exec: Exec::Parallel }
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf> {
        fs::create_dir_all(&self.out)?;
        let path = self.out.join(name);
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    /// Generates one corpus; `n` only applies to the pretraining profiles.
    pub fn corpus(&self, profile: Profile, n: Option<usize>) -> Result<Vec<ClipSample>> {
        let gel = &self.config.gel;
        let seed = mix(self.seed, &[stream::DATASET, profile.tag()]);
        Ok(match profile {
            Profile::Pretrain => pretrain_set(n.unwrap_or(PRETRAIN_CLIPS), gel, seed, self.exec)?,
            Profile::PretrainVal => pretrain_set(n.unwrap_or(PRETRAIN_VAL_CLIPS), gel, seed, self.exec)?,
            Profile::Finetune => finetune_set(gel, seed, self.exec)?,
            Profile::Monitor => monitor_set(gel, seed, self.exec)?,
            Profile::Heldout => heldout_set(gel, seed, self.exec)?,
        })
    }

    /// The corpus from `data/<profile>` when present, otherwise generated.
    fn corpus_from(&self, data: Option<&Path>, profile: Profile) -> Result<Vec<ClipSample>> {
        if let Some(dir) = data.map(|d| d.join(profile.dir_name())).filter(|d| d.exists()) {
            return load_dataset(&dir).with_context(|| format!("loading {}", dir.display()));
        }
        self.corpus(profile, None)
    }

    /// The model at `checkpoint`, or a fresh initialisation from the seed.
    pub fn load_model(&self, checkpoint: Option<&Path>) -> Result<(HardnessModel, String)> {
        match checkpoint {
            Some(p) => {
                let model = HardnessModel::load(p).with_context(|| format!("loading checkpoint {}", p.display()))?;
                let id = p.file_name().map_or_else(|| p.display().to_string(), |f| f.to_string_lossy().into_owned());
                Ok((model, id))
            }
            None => {
                tracing::warn!("no checkpoint given, using an untrained model");
                Ok((HardnessModel::new(self.config.model.clone(), self.seed)?, format!("untrained-{}", self.seed)))
            }
        }
    }

    pub fn pipeline<'a>(&'a self, model: &'a HardnessModel) -> Pipeline<'a> {
        Pipeline {
            intr: self.config.camera.clone(),
            sensor: self.config.depth_sensor.clone(),
            profile: self.config.detectors.active_profile().clone(),
            localize: self.config.localize.clone(),
            gel: &self.config.gel,
            model,
            lang: &self.config.lang,
            client: None,
        }
    }
}

pub fn gen_data(ctx: &Settings, profile: Profile, n: Option<usize>) -> Result<(PathBuf, usize)> {
    let samples = ctx.corpus(profile, n)?;
    let dir = ctx.out.join(profile.dir_name());
    save_dataset(&samples, &dir)?;
    Ok((dir, samples.len()))
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainSummary {
    pub seed: u64,
    pub clips: Vec<(String, usize)>,
    pub heldout: EvalMetrics,
    /// Same fine-tuning schedule from a fresh initialisation, no pretraining.
    pub direct: Option<EvalMetrics>,
    pub seconds: f64,
}

/// Two-phase training. Writes `checkpoint.json`, `history.csv` and
/// `train-metrics.json` under the output directory.
pub fn train_model(ctx: &Settings, data: Option<&Path>, direct: bool) -> Result<(HardnessModel, TrainSummary)> {
    let t0 = Instant::now();
    let sets: Vec<Vec<ClipSample>> =
        Profile::ALL.iter().map(|&p| ctx.corpus_from(data, p)).collect::<Result<_>>()?;
    let [pre, pre_val, ft, mon, held] = &sets[..] else { unreachable!() };
    let mut model = HardnessModel::new(ctx.config.model.clone(), ctx.seed)?;
    let history = train(
        &mut model,
        TrainSets { pretrain: pre, pretrain_val: pre_val, finetune: ft, finetune_val: mon },
        &ctx.config.train,
        ctx.exec,
    )?;
    let (_, heldout) = evaluate(&model, held, ctx.exec)?;
    let direct = if direct {
        let mut baseline = HardnessModel::new(ctx.config.model.clone(), ctx.seed)?;
        train_direct(&mut baseline, ft, mon, &ctx.config.train, ctx.exec)?;
        Some(evaluate(&baseline, held, ctx.exec)?.1)
    } else {
        None
    };
    fs::create_dir_all(&ctx.out)?;
    model.save(&ctx.out.join("checkpoint.json"))?;
    history.write_csv(&ctx.out.join("history.csv"))?;
    let summary = TrainSummary {
        seed: ctx.seed,
        clips: Profile::ALL.iter().zip(&sets).map(|(p, s)| (p.dir_name().to_string(), s.len())).collect(),
        heldout,
        direct,
        seconds: t0.elapsed().as_secs_f64(),
    };
    ctx.write_json("train-metrics.json", &summary)?;
    Ok((model, summary))
}

pub fn eval_tactile(ctx: &Settings, checkpoint: Option<&Path>) -> Result<RankingOutcome> {
    let (model, _) = ctx.load_model(checkpoint)?;
    let outcome = ranking_validation(&model, &ctx.config.gel, &RankingProtocol::default(), ctx.seed, ctx.exec)?;
    ctx.write_json("ranking.json", &outcome)?;
    Ok(outcome)
}

pub fn eval_servoing(ctx: &Settings, scenes: usize) -> Result<ServoingReport> {
    let d = &ctx.config.detectors;
    let profiles = [d.yolo_like.clone(), d.gsam_like.clone()];
    let report =
        evaluate_servoing(scenes, &profiles, &ctx.config.camera, &ctx.config.depth_sensor, ctx.seed, ctx.exec)?;
    ctx.write_json("servoing.json", &report)?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct ScenarioEntry {
    pub spec: ScenarioSpec,
    pub report: SuccessReport,
    pub records: Vec<RunRecord>,
}

/// Deterministic part of a scenario evaluation: identical for identical
/// seed, config and checkpoint.
#[derive(Debug, Clone, Serialize)]
pub struct ScenarioFile {
    pub seed: u64,
    pub checkpoint: String,
    pub detector: String,
    pub runs_per_scenario: usize,
    pub scenarios: Vec<ScenarioEntry>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LatencyFile {
    pub seed: u64,
    pub scenarios: Vec<LatencyReport>,
}

/// Writes `scenarios.json` (records without wall-clock times) and
/// `latency.json` (stage timings, which vary between runs).
pub fn run_scenarios(
    ctx: &Settings,
    checkpoint: Option<&Path>,
    scenario: Option<u8>,
    runs: usize,
) -> Result<(ScenarioFile, LatencyFile)> {
    if runs == 0 {
        bail!("--runs must be at least 1");
    }
    let (model, checkpoint_id) = ctx.load_model(checkpoint)?;
    let specs = match scenario {
        Some(id) => vec![ScenarioSpec::get(id)?],
        None => ScenarioSpec::table(),
    };
    let pipeline = ctx.pipeline(&model);
    let mut entries = Vec::new();
    let mut latency = Vec::new();
    for spec in specs {
        let outcome = run_scenario(&pipeline, &spec, runs, ctx.seed, ctx.exec)?;
        latency.push(outcome.latency);
        entries.push(ScenarioEntry {
            spec,
            report: outcome.report,
            records: outcome.records.iter().map(RunRecord::without_timing).collect(),
        });
    }
    let file = ScenarioFile {
        seed: ctx.seed,
        checkpoint: checkpoint_id,
        detector: ctx.config.detectors.active.name().to_string(),
        runs_per_scenario: runs,
        scenarios: entries,
    };
    let lat = LatencyFile { seed: ctx.seed, scenarios: latency };
    ctx.write_json("scenarios.json", &file)?;
    ctx.write_json("latency.json", &lat)?;
    Ok((file, lat))
}
