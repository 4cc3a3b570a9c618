//! End-to-end query execution: parse, detect, localise, press, estimate and
//! explain, with per-stage timing and an event trail.

mod ranking;
mod scenario;
mod servoing;

use std::time::Instant;

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::lang::{
    compose_explanation, judge, object_communicated, parse_query_with, Backend, ExplanationClient, ExplanationInput,
    Intent, JudgeScore, LangConfig, MeasuredObject,
};
use crate::neuro::{prepare_input, AugmentParams, HardnessModel};
use crate::scene::{reference_point, render_with_sensor, CameraIntrinsics, DepthSensor, FruitClass, Scene, SceneObject};
use crate::seeding::{self, stream};
use crate::tactile::dataset::{sample_clip, TactileObject};
use crate::tactile::{ContactCriteria, GelConfig, PressPose, MAX_OFFSET_MM, MAX_YAW_DEG};
use crate::vision::{centroid_error, detect, localize, DetectorProfile, LocalizeOptions, MEDIAN_FRAMES};

pub use scenario::{
    run_scenario, LatencyReport, RunSummary, ScenarioOutcome, ScenarioSpec, SuccessReport, ExclusionRate,
};
pub use ranking::{ranking_validation, RankingOutcome, RankingProtocol, StageSet};
pub use servoing::{evaluate_servoing, AblationRow, Comparison, MeanCi, ProfileSamples, ProfileServoing, ServoingReport, ABLATIONS};

/// Localisation error above which a press is not trusted, mm.
pub const LOCALIZATION_TOLERANCE_MM: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Parse,
    Detect,
    Centroid,
    TactileCollection,
    Inference,
    Explanation,
}

impl Stage {
    pub const ALL: [Stage; 6] =
        [Stage::Parse, Stage::Detect, Stage::Centroid, Stage::TactileCollection, Stage::Inference, Stage::Explanation];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Parse => "parse",
            Stage::Detect => "detect",
            Stage::Centroid => "centroid",
            Stage::TactileCollection => "tactile-collection",
            Stage::Inference => "inference",
            Stage::Explanation => "explanation",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: Stage,
    pub duration_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventStatus {
    Started,
    Finished,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEvent {
    pub seq: u64,
    pub stage: Stage,
    pub status: EventStatus,
    /// Milliseconds since the run started.
    pub at_ms: f64,
    /// First 16 hex digits of the SHA-256 of the payload's JSON text.
    pub digest: String,
    pub payload: serde_json::Value,
}

pub fn digest(payload: &serde_json::Value) -> String {
    let h = Sha256::digest(payload.to_string().as_bytes());
    h.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// What happened to one ground-truth target during a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectOutcome {
    pub object_id: u32,
    pub class: FruitClass,
    pub true_hardness: f64,
    pub grounded: bool,
    pub localized: bool,
    pub measured: bool,
    pub communicated: bool,
    #[serde(default)]
    pub confidence: Option<f64>,
    #[serde(default)]
    pub centroid_error_mm: Option<f64>,
    #[serde(default)]
    pub predicted_hardness: Option<f64>,
    #[serde(default)]
    pub contact_index: Option<usize>,
}

impl ObjectOutcome {
    pub fn succeeded(&self) -> bool {
        self.grounded && self.localized && self.measured && self.communicated
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageError {
    pub stage: Stage,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub scenario: Option<u8>,
    pub query: String,
    pub seed: u64,
    pub intent: Option<Intent>,
    pub outcomes: Vec<ObjectOutcome>,
    /// Measurements as they were handed to the explanation stage.
    pub measured: Vec<MeasuredObject>,
    pub not_found: Vec<FruitClass>,
    pub explanation: String,
    /// An external explanation backend failed and the template was used.
    pub degraded: bool,
    pub judge: Option<JudgeScore>,
    pub success: bool,
    pub errors: Vec<StageError>,
    pub timings: Vec<StageTiming>,
    /// Wall-clock time of the whole run.
    pub total_ms: f64,
}

impl RunRecord {
    pub fn objects_succeeded(&self) -> usize {
        self.outcomes.iter().filter(|o| o.succeeded()).count()
    }

    pub fn stage_ms(&self, stage: Stage) -> f64 {
        self.timings.iter().filter(|t| t.stage == stage).map(|t| t.duration_ms).sum()
    }

    /// The record with wall-clock measurements removed, for reports that
    /// must not change between identical runs.
    pub fn without_timing(&self) -> RunRecord {
        RunRecord { timings: Vec::new(), total_ms: 0.0, ..self.clone() }
    }
}

/// Everything a run needs besides the scene and the query.
#[derive(Clone)]
pub struct Pipeline<'a> {
    pub intr: CameraIntrinsics,
    pub sensor: DepthSensor,
    pub profile: DetectorProfile,
    pub localize: LocalizeOptions,
    pub gel: &'a GelConfig,
    pub model: &'a HardnessModel,
    pub lang: &'a LangConfig,
    pub client: Option<&'a dyn ExplanationClient>,
}

struct Clock<'s> {
    start: Instant,
    seq: u64,
    sink: &'s mut dyn FnMut(RunEvent),
    timings: Vec<StageTiming>,
    current: Option<(Stage, Instant)>,
}

impl Clock<'_> {
    fn ms(&self) -> f64 {
        self.start.elapsed().as_secs_f64() * 1e3
    }

    fn emit(&mut self, stage: Stage, status: EventStatus, payload: serde_json::Value) {
        let ev = RunEvent { seq: self.seq, stage, status, at_ms: self.ms(), digest: digest(&payload), payload };
        self.seq += 1;
        (self.sink)(ev);
    }

    fn begin(&mut self, stage: Stage) {
        self.current = Some((stage, Instant::now()));
        self.emit(stage, EventStatus::Started, serde_json::Value::Null);
    }

    fn end(&mut self, status: EventStatus, payload: serde_json::Value) {
        if let Some((stage, t0)) = self.current.take() {
            self.timings.push(StageTiming { stage, duration_ms: t0.elapsed().as_secs_f64() * 1e3 });
            self.emit(stage, status, payload);
        }
    }
}

/// Scene objects a parsed query refers to.
pub fn query_targets<'s>(scene: &'s Scene, intent: &Intent) -> Vec<&'s SceneObject> {
    scene.objects.iter().filter(|o| intent.all_fruits() || intent.targets.contains(&o.class)).collect()
}

impl<'a> Pipeline<'a> {
    pub fn run_query(&self, scene: &Scene, text: &str, seed: u64) -> RunRecord {
        self.run_query_with_events(scene, text, seed, &mut |_| {})
    }

    /// Runs every stage in order, reporting progress to `sink`. Stage
    /// failures are recorded, never returned.
    pub fn run_query_with_events(&self, scene: &Scene, text: &str, seed: u64, sink: &mut dyn FnMut(RunEvent)) -> RunRecord {
        let mut clock = Clock { start: Instant::now(), seq: 0, sink, timings: Vec::new(), current: None };
        let mut rec = RunRecord {
            scenario: None,
            query: text.to_string(),
            seed,
            intent: None,
            outcomes: Vec::new(),
            measured: Vec::new(),
            not_found: Vec::new(),
            explanation: String::new(),
            degraded: false,
            judge: None,
            success: false,
            errors: Vec::new(),
            timings: Vec::new(),
            total_ms: 0.0,
        };

        clock.begin(Stage::Parse);
        let intent = match parse_query_with(text, &self.lang.lexicon) {
            Ok(i) => {
                clock.end(EventStatus::Finished, serde_json::to_value(&i).unwrap_or_default());
                i
            }
            Err(e) => {
                rec.errors.push(StageError { stage: Stage::Parse, message: e.to_string() });
                clock.end(EventStatus::Failed, serde_json::json!({ "error": e.to_string() }));
                clock.begin(Stage::Explanation);
                rec.explanation = "Sorry, I could not find a fruit or a property in that request.".into();
                clock.end(EventStatus::Finished, serde_json::json!({ "text": rec.explanation }));
                rec.timings = clock.timings;
                rec.total_ms = clock.start.elapsed().as_secs_f64() * 1e3;
                return rec;
            }
        };
        let targets = query_targets(scene, &intent);
        rec.outcomes = targets
            .iter()
            .map(|o| ObjectOutcome {
                object_id: o.id,
                class: o.class,
                true_hardness: o.hardness,
                grounded: false,
                localized: false,
                measured: false,
                communicated: false,
                confidence: None,
                centroid_error_mm: None,
                predicted_hardness: None,
                contact_index: None,
            })
            .collect();

        // capture and detect
        clock.begin(Stage::Detect);
        let frames: crate::error::Result<Vec<_>> = (0..MEDIAN_FRAMES as u64)
            .map(|i| render_with_sensor(scene, &self.intr, &self.sensor, seeding::mix(seed, &[stream::PIPELINE, i])))
            .collect();
        let prompt: Vec<FruitClass> = if intent.explicit {
            intent.targets.clone()
        } else {
            self.lang.vocabulary.iter().filter_map(|w| FruitClass::from_name(w)).collect()
        };
        let detections = frames.and_then(|f| {
            let d = detect(&f[0], scene, &self.intr, &prompt, &self.profile, seeding::mix(seed, &[stream::PIPELINE, stream::DETECT]))?;
            Ok((f, d))
        });
        let (frames, detections) = match detections {
            Ok(v) => {
                let payload: Vec<_> = v
                    .1
                    .iter()
                    .map(|d| serde_json::json!({ "label": d.label, "confidence": d.confidence, "area_px": d.mask.count() }))
                    .collect();
                clock.end(EventStatus::Finished, serde_json::Value::Array(payload));
                v
            }
            Err(e) => {
                rec.errors.push(StageError { stage: Stage::Detect, message: e.to_string() });
                clock.end(EventStatus::Failed, serde_json::json!({ "error": e.to_string() }));
                (Vec::new(), Vec::new())
            }
        };
        for d in &detections {
            if let Some(o) = rec.outcomes.iter_mut().find(|o| o.object_id == d.source_id) {
                o.grounded = true;
                o.confidence = Some(d.confidence);
            }
        }

        clock.begin(Stage::Centroid);
        let mut grounded = Vec::new();
        for d in &detections {
            match localize(d, &frames, scene, &self.intr, self.localize) {
                Ok(g) => {
                    if let Some(o) = rec.outcomes.iter_mut().find(|o| o.object_id == d.source_id) {
                        if let Ok(r) = reference_point(scene, d.source_id, &self.intr) {
                            let err = centroid_error(&g, r);
                            o.centroid_error_mm = Some(err);
                            o.localized = err <= LOCALIZATION_TOLERANCE_MM;
                        }
                    }
                    grounded.push(g);
                }
                Err(e) => rec.errors.push(StageError { stage: Stage::Centroid, message: format!("{}: {e}", d.label) }),
            }
        }
        let payload: Vec<_> = grounded
            .iter()
            .map(|g| serde_json::json!({ "label": g.label, "centroid_mm": g.centroid, "fallback": g.refinement_fallback }))
            .collect();
        clock.end(EventStatus::Finished, serde_json::Value::Array(payload));

        clock.begin(Stage::TactileCollection);
        let mut clips = Vec::new();
        for g in &grounded {
            let Ok(obj) = scene.object(g.source_id) else { continue };
            let press_seed = seeding::mix(seed, &[stream::PIPELINE, stream::PRESS, g.source_id as u64]);
            let mut rng = seeding::rng(press_seed, &[stream::PRESS]);
            let pose = PressPose {
                dx: (g.centroid[0] - obj.center[0]).clamp(-MAX_OFFSET_MM, MAX_OFFSET_MM),
                dy: (g.centroid[1] - obj.center[1]).clamp(-MAX_OFFSET_MM, MAX_OFFSET_MM),
                yaw_deg: rng.gen_range(0.0..=MAX_YAW_DEG),
            };
            let target = TactileObject::fruit(format!("{}-{}", obj.class, obj.id), obj.class, obj.hardness);
            match sample_clip(&target, Some(pose), self.gel, &ContactCriteria::COLLECTION, press_seed) {
                Ok((clip, _, _)) => clips.push((g, clip)),
                Err(e) => rec.errors.push(StageError { stage: Stage::TactileCollection, message: e.to_string() }),
            }
        }
        let payload: Vec<_> =
            clips.iter().map(|(g, c)| serde_json::json!({ "label": g.label, "contact_index": c.contact_index })).collect();
        clock.end(EventStatus::Finished, serde_json::Value::Array(payload));
        for (g, c) in &clips {
            if let Some(o) = rec.outcomes.iter_mut().find(|o| o.object_id == g.source_id) {
                o.contact_index = Some(c.contact_index);
            }
        }

        clock.begin(Stage::Inference);
        let mut measured_ids = Vec::new();
        for (g, clip) in &clips {
            let pred = prepare_input(clip, &self.model.config, &AugmentParams::IDENTITY).and_then(|x| self.model.predict_one(&x));
            match pred {
                Ok(h) => {
                    rec.measured.push(MeasuredObject {
                        label: g.label.name().to_string(),
                        class: g.label,
                        position: [g.centroid[0], g.centroid[1]],
                        hardness: h,
                    });
                    measured_ids.push(g.source_id);
                    if let Some(o) = rec.outcomes.iter_mut().find(|o| o.object_id == g.source_id) {
                        o.measured = true;
                        o.predicted_hardness = Some(h);
                    }
                }
                Err(e) => rec.errors.push(StageError { stage: Stage::Inference, message: e.to_string() }),
            }
        }
        let payload = serde_json::to_value(&rec.measured).unwrap_or_default();
        clock.end(EventStatus::Finished, payload);

        clock.begin(Stage::Explanation);
        rec.not_found = intent.targets.iter().copied().filter(|c| !rec.measured.iter().any(|m| m.class == *c)).collect();
        let input = ExplanationInput {
            intent: intent.clone(),
            objects: rec.measured.clone(),
            not_found: rec.not_found.clone(),
            workspace: scene.workspace,
        };
        let backend = match self.client {
            Some(client) => Backend::External { client, prompt_rules: &self.lang.prompt_rules },
            None => Backend::Template,
        };
        let explanation = compose_explanation(&input, &self.lang.ripeness, backend);
        let score = judge(&explanation.text, &input, &self.lang.ripeness);
        for (m, id) in rec.measured.iter().zip(&measured_ids) {
            if object_communicated(&explanation.text, m, &scene.workspace, &self.lang.ripeness) {
                if let Some(out) = rec.outcomes.iter_mut().find(|x| x.object_id == *id) {
                    out.communicated = true;
                }
            }
        }
        rec.explanation = explanation.text;
        rec.degraded = explanation.degraded;
        rec.judge = Some(score);
        clock.end(
            EventStatus::Finished,
            serde_json::json!({ "text": rec.explanation, "degraded": rec.degraded, "judge": score }),
        );

        rec.success = !rec.outcomes.is_empty() && rec.outcomes.iter().all(ObjectOutcome::succeeded) && score.passes();
        rec.intent = Some(intent);
        rec.timings = clock.timings;
        rec.total_ms = clock.start.elapsed().as_secs_f64() * 1e3;
        rec
    }
}
