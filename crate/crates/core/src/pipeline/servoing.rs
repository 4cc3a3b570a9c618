use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::Exec;
use crate::scene::{
    generate_scene, ground_truth_mask, reference_point, render_with_sensor, CameraIntrinsics, DepthSensor, ObjectCount,
};
use crate::seeding::{self, stream};
use crate::stats::{mean_ci95, one_sample_t, welch_t, Alternative, TestResult};
use crate::vision::{best_per_label, centroid_error, detect, iou, localize, DetectorProfile, LocalizeOptions, MEDIAN_FRAMES};

use super::LOCALIZATION_TOLERANCE_MM;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanCi {
    pub n: usize,
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
}

impl MeanCi {
    /// `None` for fewer than two values.
    pub fn of(x: &[f64]) -> Option<MeanCi> {
        mean_ci95(x).ok().map(|(mean, lo, hi)| MeanCi { n: x.len(), mean, lo, hi })
    }
}

/// Mean centroid error with one of the two filtering steps switched off.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub refine: bool,
    pub temporal_median: bool,
    pub error_mm: Option<MeanCi>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileServoing {
    pub profile: DetectorProfile,
    pub scenes: usize,
    pub identified: usize,
    pub success_rate: f64,
    pub confidence: Option<MeanCi>,
    pub iou: Option<MeanCi>,
    pub error_mm: Option<MeanCi>,
    /// Fraction of identified objects localised within tolerance.
    pub within_tolerance: f64,
    pub error_vs_tolerance_greater: Option<TestResult>,
    pub error_vs_tolerance_less: Option<TestResult>,
    pub error_vs_tolerance_two_sided: Option<TestResult>,
    pub ablation: Vec<AblationRow>,
    #[serde(skip)]
    pub samples: ProfileSamples,
}

/// Raw per-scene values behind a [`ProfileServoing`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProfileSamples {
    pub confidence: Vec<f64>,
    pub iou: Vec<f64>,
    pub error_mm: Vec<f64>,
    /// Errors for the [`ABLATIONS`] variants, one vector per variant.
    pub ablation_errors: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub metric: String,
    pub a: String,
    pub b: String,
    pub test: Option<TestResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServoingReport {
    pub seed: u64,
    pub sensor_sigma_mm: f64,
    pub profiles: Vec<ProfileServoing>,
    /// Welch tests between consecutive profiles.
    pub comparisons: Vec<Comparison>,
}

pub const ABLATIONS: [(bool, bool); 4] = [(true, true), (false, true), (true, false), (false, false)];

struct SceneResult {
    confidence: f64,
    iou: f64,
    errors: [f64; 4],
}

fn one_scene(
    index: usize,
    profile: &DetectorProfile,
    intr: &CameraIntrinsics,
    sensor: &DepthSensor,
    seed: u64,
) -> Result<Option<SceneResult>> {
    let scene = generate_scene(seeding::mix(seed, &[stream::SCENE, index as u64]), ObjectCount::Exact(1))?;
    let target = &scene.objects[0];
    let frames = (0..MEDIAN_FRAMES as u64)
        .map(|i| render_with_sensor(&scene, intr, sensor, seeding::mix(seed, &[stream::RENDER, index as u64, i])))
        .collect::<Result<Vec<_>>>()?;
    let dets = detect(&frames[0], &scene, intr, &[target.class], profile, seeding::mix(seed, &[stream::DETECT, index as u64]))?;
    let Some(det) = best_per_label(dets).into_iter().find(|d| d.source_id == target.id) else {
        return Ok(None);
    };
    let truth = ground_truth_mask(&scene, target.id, intr)?;
    let reference = reference_point(&scene, target.id, intr)?;
    let mut errors = [0.0; 4];
    for (k, &(refine, temporal_median)) in ABLATIONS.iter().enumerate() {
        let g = localize(&det, &frames, &scene, intr, LocalizeOptions { refine, temporal_median })?;
        errors[k] = centroid_error(&g, reference);
    }
    Ok(Some(SceneResult { confidence: det.confidence, iou: iou(&det.mask, &truth)?, errors }))
}

fn t_or_none(x: &[f64], alt: Alternative) -> Option<TestResult> {
    one_sample_t(x, LOCALIZATION_TOLERANCE_MM, alt).ok()
}

/// Runs each profile over the same `n_scenes` single-fruit scenes (same
/// geometry, same depth noise) and summarises detection and localisation.
pub fn evaluate_servoing(
    n_scenes: usize,
    profiles: &[DetectorProfile],
    intr: &CameraIntrinsics,
    sensor: &DepthSensor,
    seed: u64,
    exec: Exec,
) -> Result<ServoingReport> {
    if n_scenes == 0 || profiles.is_empty() {
        return Err(Error::invalid("servoing evaluation needs at least one scene and one profile"));
    }
    let mut out = Vec::with_capacity(profiles.len());
    for profile in profiles {
        let results = exec
            .map_range(n_scenes, |i| one_scene(i, profile, intr, sensor, seed))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        let found: Vec<SceneResult> = results.into_iter().flatten().collect();
        let samples = ProfileSamples {
            confidence: found.iter().map(|r| r.confidence).collect(),
            iou: found.iter().map(|r| r.iou).collect(),
            error_mm: found.iter().map(|r| r.errors[0]).collect(),
            ablation_errors: (0..ABLATIONS.len()).map(|k| found.iter().map(|r| r.errors[k]).collect()).collect(),
        };
        let within = samples.error_mm.iter().filter(|&&e| e <= LOCALIZATION_TOLERANCE_MM).count();
        out.push(ProfileServoing {
            profile: profile.clone(),
            scenes: n_scenes,
            identified: found.len(),
            success_rate: found.len() as f64 / n_scenes as f64,
            confidence: MeanCi::of(&samples.confidence),
            iou: MeanCi::of(&samples.iou),
            error_mm: MeanCi::of(&samples.error_mm),
            within_tolerance: if found.is_empty() { 0.0 } else { within as f64 / found.len() as f64 },
            error_vs_tolerance_greater: t_or_none(&samples.error_mm, Alternative::Greater),
            error_vs_tolerance_less: t_or_none(&samples.error_mm, Alternative::Less),
            error_vs_tolerance_two_sided: t_or_none(&samples.error_mm, Alternative::TwoSided),
            ablation: ABLATIONS
                .iter()
                .zip(&samples.ablation_errors)
                .map(|(&(refine, temporal_median), e)| AblationRow { refine, temporal_median, error_mm: MeanCi::of(e) })
                .collect(),
            samples,
        });
    }
    let mut comparisons = Vec::new();
    for pair in out.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        let metrics: [(&str, &Vec<f64>, &Vec<f64>); 3] = [
            ("confidence", &a.samples.confidence, &b.samples.confidence),
            ("iou", &a.samples.iou, &b.samples.iou),
            ("error-mm", &a.samples.error_mm, &b.samples.error_mm),
        ];
        for (metric, x, y) in metrics {
            comparisons.push(Comparison {
                metric: metric.into(),
                a: a.profile.name.name().into(),
                b: b.profile.name.name().into(),
                test: welch_t(x, y, Alternative::TwoSided).ok(),
            });
        }
    }
    Ok(ServoingReport { seed, sensor_sigma_mm: sensor.sigma, profiles: out, comparisons })
}
