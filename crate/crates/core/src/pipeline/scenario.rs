use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Pipeline, RunRecord, Stage};
use crate::error::{Error, Result};
use crate::lang::Property;
use crate::par::Exec;
use crate::scene::{generate_scene_with, FruitClass, ObjectRequest, Scene};
use crate::seeding::{self, stream};

/// One row of the scenario complexity table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub id: u8,
    pub prompt: String,
    pub n_objects: usize,
    /// Inclusive range of distinct classes in the scene.
    pub n_distinct: (usize, usize),
    pub explicit: bool,
    pub complexity: String,
}

const PROPERTIES: [Property; 3] = [Property::Hardness, Property::Softness, Property::Ripeness];

impl ScenarioSpec {
    pub fn table() -> Vec<ScenarioSpec> {
        let row = |id, prompt: &str, n, d, explicit, c: &str| ScenarioSpec {
            id,
            prompt: prompt.into(),
            n_objects: n,
            n_distinct: d,
            explicit,
            complexity: c.into(),
        };
        vec![
            row(1, "Identify the [property] of [object].", 1, (1, 1), true, "Low"),
            row(2, "Identify the most [property] [object] in the scene.", 2, (1, 1), true, "Medium"),
            row(3, "Summarize the [property] of the [object], [object] and [object].", 3, (3, 3), true, "Med-High"),
            row(4, "Summarize the [property] of all fruits in the scene.", 5, (3, 5), false, "High"),
        ]
    }

    pub fn get(id: u8) -> Result<ScenarioSpec> {
        ScenarioSpec::table()
            .into_iter()
            .find(|s| s.id == id)
            .ok_or_else(|| Error::invalid(format!("unknown scenario {id}; expected 1-4")))
    }

    /// Classes placed in the scene for run `run`. Classes rotate through the
    /// lexicon so that every fruit appears equally often over ten runs.
    pub fn roster(&self, run: usize) -> Vec<FruitClass> {
        let all = FruitClass::ALL;
        let distinct = if self.n_distinct.0 == self.n_distinct.1 {
            self.n_distinct.0
        } else {
            self.n_distinct.0 + run % (self.n_distinct.1 - self.n_distinct.0 + 1)
        };
        let first = run * self.n_objects;
        (0..self.n_objects).map(|k| all[(first + k % distinct) % all.len()]).collect()
    }

    pub fn property(&self, run: usize) -> Property {
        PROPERTIES[(run + self.id as usize) % PROPERTIES.len()]
    }

    /// Fills the prompt template for one run.
    pub fn prompt_for(&self, run: usize) -> String {
        let roster = self.roster(run);
        let prop = self.property(run);
        let mut text = self.prompt.clone();
        let prop_word = if self.id == 2 {
            match prop {
                Property::Hardness => "hard",
                Property::Softness => "soft",
                Property::Ripeness => "ripe",
            }
        } else {
            prop.name()
        };
        text = text.replace("[property]", prop_word);
        let mut names: Vec<String> = Vec::new();
        for c in &roster {
            if !names.iter().any(|n| n == c.name()) {
                names.push(c.name().to_string());
            }
        }
        for (k, n) in names.iter().enumerate() {
            let filled = if self.id == 1 && k == 0 { format!("the {n}") } else { n.clone() };
            text = text.replacen("[object]", &filled, 1);
        }
        text
    }

    pub fn scene_for(&self, run: usize, seed: u64) -> Result<Scene> {
        let requests: Vec<ObjectRequest> =
            self.roster(run).into_iter().map(|c| ObjectRequest { class: Some(c), hardness: None }).collect();
        generate_scene_with(seeding::mix(seed, &[stream::SCENARIO, self.id as u64, run as u64]), &requests)
    }
}

/// Outcome counts of one run, all a success report needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run: usize,
    pub classes: Vec<FruitClass>,
    pub objects_total: usize,
    pub objects_succeeded: usize,
    /// Every target succeeded and the explanation passed the judge.
    pub success: bool,
}

impl RunSummary {
    pub fn from_record(run: usize, rec: &RunRecord) -> Self {
        RunSummary {
            run,
            classes: rec.outcomes.iter().map(|o| o.class).collect(),
            objects_total: rec.outcomes.len(),
            objects_succeeded: rec.objects_succeeded(),
            success: rec.success,
        }
    }

    fn object_rate(&self) -> f64 {
        if self.objects_total == 0 {
            0.0
        } else {
            self.objects_succeeded as f64 / self.objects_total as f64
        }
    }

    fn scenario_success(&self) -> bool {
        self.success && self.objects_total > 0 && self.objects_succeeded == self.objects_total
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExclusionRate {
    pub class: FruitClass,
    pub runs: usize,
    pub ol_sr: f64,
    pub sl_sr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuccessReport {
    pub scenario: u8,
    pub runs: Vec<RunSummary>,
    pub ol_sr: f64,
    pub sl_sr: f64,
    /// Rates recomputed over the runs in which a given class was absent.
    pub excluding: Vec<ExclusionRate>,
}

fn rates(runs: &[&RunSummary]) -> (f64, f64) {
    if runs.is_empty() {
        return (0.0, 0.0);
    }
    let n = runs.len() as f64;
    let ol = runs.iter().map(|r| r.object_rate()).sum::<f64>() / n;
    let sl = runs.iter().filter(|r| r.scenario_success()).count() as f64 / n;
    (ol, sl)
}

impl SuccessReport {
    /// OL-SR is the mean per-run fraction of targets that succeeded; SL-SR
    /// the fraction of runs in which all of them did and the explanation
    /// passed.
    pub fn from_runs(scenario: u8, runs: Vec<RunSummary>) -> Self {
        let all: Vec<&RunSummary> = runs.iter().collect();
        let (ol_sr, sl_sr) = rates(&all);
        let mut classes: Vec<FruitClass> = runs.iter().flat_map(|r| r.classes.iter().copied()).collect();
        classes.sort();
        classes.dedup();
        let excluding = classes
            .into_iter()
            .map(|c| {
                let kept: Vec<&RunSummary> = runs.iter().filter(|r| !r.classes.contains(&c)).collect();
                let (ol, sl) = rates(&kept);
                ExclusionRate { class: c, runs: kept.len(), ol_sr: ol, sl_sr: sl }
            })
            .collect();
        SuccessReport { scenario, runs, ol_sr, sl_sr, excluding }
    }
}

/// Mean stage durations over the successful runs of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub scenario: u8,
    pub succeeded_runs: usize,
    pub mean_ms: BTreeMap<String, f64>,
    pub mean_total_ms: f64,
}

impl LatencyReport {
    pub fn from_records(scenario: u8, records: &[RunRecord]) -> Self {
        let ok: Vec<&RunRecord> = records.iter().filter(|r| r.success).collect();
        let n = ok.len().max(1) as f64;
        let mean_ms = Stage::ALL
            .iter()
            .map(|s| (s.name().to_string(), ok.iter().map(|r| r.stage_ms(*s)).sum::<f64>() / n))
            .collect();
        LatencyReport {
            scenario,
            succeeded_runs: ok.len(),
            mean_ms,
            mean_total_ms: ok.iter().map(|r| r.total_ms).sum::<f64>() / n,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub report: SuccessReport,
    pub latency: LatencyReport,
    pub records: Vec<RunRecord>,
}

/// Executes `runs` instances of a scenario. Runs are independent and may be
/// spread over threads; results come back in run order.
pub fn run_scenario(pipeline: &Pipeline, spec: &ScenarioSpec, runs: usize, seed: u64, exec: Exec) -> Result<ScenarioOutcome> {
    let records: Vec<RunRecord> = exec
        .map_range(runs, |r| -> Result<RunRecord> {
            let scene = spec.scene_for(r, seed)?;
            let run_seed = seeding::mix(seed, &[stream::SCENARIO, spec.id as u64, r as u64, 1]);
            let mut rec = pipeline.run_query(&scene, &spec.prompt_for(r), run_seed);
            rec.scenario = Some(spec.id);
            Ok(rec)
        })
        .into_iter()
        .collect::<Result<_>>()?;
    let summaries = records.iter().enumerate().map(|(i, r)| RunSummary::from_record(i, r)).collect();
    Ok(ScenarioOutcome {
        report: SuccessReport::from_runs(spec.id, summaries),
        latency: LatencyReport::from_records(spec.id, &records),
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::{parse_query, QueryMode};

    #[test]
    fn prompts_parse_to_the_intended_mode() {
        for spec in ScenarioSpec::table() {
            for run in 0..10 {
                let text = spec.prompt_for(run);
                let intent = parse_query(&text).unwrap();
                assert_eq!(intent.explicit, spec.explicit, "{text}");
                let want = match spec.id {
                    1 => QueryMode::Identify,
                    2 => QueryMode::Superlative,
                    _ => QueryMode::Summarize,
                };
                assert_eq!(intent.mode, want, "{text}");
                assert_eq!(intent.property, spec.property(run));
            }
        }
    }

    #[test]
    fn rosters_match_the_table() {
        for spec in ScenarioSpec::table() {
            let mut counts = BTreeMap::new();
            for run in 0..10 {
                let r = spec.roster(run);
                assert_eq!(r.len(), spec.n_objects);
                let mut d = r.clone();
                d.sort();
                d.dedup();
                assert!((spec.n_distinct.0..=spec.n_distinct.1).contains(&d.len()));
                for c in d {
                    *counts.entry(c).or_insert(0) += 1;
                }
            }
            if spec.id <= 3 {
                let v: Vec<i32> = counts.values().copied().collect();
                assert!(v.iter().all(|&c| c == v[0]), "scenario {}: {counts:?}", spec.id);
            }
        }
    }

    #[test]
    fn worked_success_examples() {
        let run = |ok: usize, n: usize, success: bool| RunSummary {
            run: 0,
            classes: vec![FruitClass::Apple; n],
            objects_total: n,
            objects_succeeded: ok,
            success,
        };
        let r = SuccessReport::from_runs(4, vec![run(4, 5, false)]);
        assert!((r.ol_sr - 0.8).abs() < 1e-12 && r.sl_sr == 0.0);
        let r = SuccessReport::from_runs(1, (0..10).map(|i| run((i > 0) as usize, 1, i > 0)).collect());
        assert!((r.ol_sr - 0.9).abs() < 1e-12 && (r.sl_sr - 0.9).abs() < 1e-12);
        // a success flag cannot outvote a failed object
        let r = SuccessReport::from_runs(3, vec![run(2, 3, true)]);
        assert_eq!(r.sl_sr, 0.0);
    }
}
