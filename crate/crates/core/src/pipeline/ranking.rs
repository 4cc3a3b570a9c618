use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neuro::{predict, HardnessModel};
use crate::par::Exec;
use crate::scene::FruitClass;
use crate::stats::{rank_report, RankGroup, RankReport};
use crate::tactile::dataset::{object_set, TactileObject};
use crate::tactile::GelConfig;

/// One fruit pressed at each of its ripeness stages, hardest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSet {
    pub fruit: FruitClass,
    /// (stage name, true hardness HA), hardest first.
    pub stages: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingProtocol {
    pub samples_per_fruit: usize,
    pub alpha: f64,
    pub sets: Vec<StageSet>,
}

fn set(fruit: FruitClass, stages: &[(&str, f64)]) -> StageSet {
    StageSet { fruit, stages: stages.iter().map(|(n, h)| (n.to_string(), *h)).collect() }
}

impl Default for RankingProtocol {
    /// Pairs for mango, lime and tomato and trios for banana and avocado.
    /// Stage values follow the published stage medians where adjacent stages
    /// are at least 4 HA apart and are spread to 6 HA otherwise. The lime
    /// pair keeps its published 0.3 HA gap.
    fn default() -> Self {
        RankingProtocol {
            samples_per_fruit: 20,
            alpha: 0.01,
            sets: vec![
                set(FruitClass::Mango, &[("Hard (1)", 79.47), ("Soft (0)", 67.75)]),
                set(FruitClass::Lime, &[("Hard (1)", 64.13), ("Soft (0)", 63.84)]),
                set(FruitClass::Tomato, &[("Hard (1)", 71.02), ("Soft (0)", 64.14)]),
                set(FruitClass::Banana, &[("Hard (2)", 72.63), ("Medium (1)", 66.87), ("Soft (0)", 60.87)]),
                set(FruitClass::Avocado, &[("Hard (2)", 74.0), ("Medium (1)", 68.0), ("Soft (0)", 62.0)]),
            ],
        }
    }
}

impl RankingProtocol {
    /// Sets the lime pair's gap, keeping its soft stage in place.
    pub fn with_lime_gap(mut self, gap: f64) -> Self {
        for s in self.sets.iter_mut().filter(|s| s.fruit == FruitClass::Lime) {
            let soft = s.stages[1].1;
            s.stages[0].1 = soft + gap;
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples_per_fruit < 2 {
            return Err(Error::invalid("ranking needs at least two presses per fruit"));
        }
        for s in &self.sets {
            if s.stages.len() < 2 || s.stages.windows(2).any(|w| !(w[0].1 > w[1].1)) {
                return Err(Error::invalid(format!("{} stages must be listed strictly hardest first", s.fruit)));
            }
        }
        Ok(())
    }

    /// Condition labels and (harder, softer) index pairs: adjacent stages,
    /// then hardest against softest for trios.
    fn layout(&self) -> (Vec<(FruitClass, String, f64)>, Vec<(usize, usize)>) {
        let mut conds = Vec::new();
        let mut pairs = Vec::new();
        for s in &self.sets {
            let base = conds.len();
            for (name, h) in &s.stages {
                conds.push((s.fruit, format!("{} / {name}", s.fruit), *h));
            }
            for k in 0..s.stages.len() - 1 {
                pairs.push((base + k, base + k + 1));
            }
            if s.stages.len() > 2 {
                pairs.push((base, base + s.stages.len() - 1));
            }
        }
        (conds, pairs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingOutcome {
    pub protocol: RankingProtocol,
    pub report: RankReport,
}

impl RankingOutcome {
    /// Comparisons involving `fruit`, by condition prefix.
    pub fn comparisons_for(&self, fruit: FruitClass) -> impl Iterator<Item = &crate::stats::PairwiseComparison> {
        let prefix = format!("{fruit} /");
        self.report.comparisons.iter().filter(move |c| c.harder.starts_with(&prefix))
    }
}

/// Presses every stage fruit `samples_per_fruit` times, predicts each press
/// and tests whether each harder stage ranks above the softer one.
pub fn ranking_validation(
    model: &HardnessModel,
    gel: &GelConfig,
    protocol: &RankingProtocol,
    seed: u64,
    exec: Exec,
) -> Result<RankingOutcome> {
    protocol.validate()?;
    let (conds, pairs) = protocol.layout();
    let objects: Vec<TactileObject> = conds
        .iter()
        .enumerate()
        .map(|(i, (class, _, h))| TactileObject::fruit(format!("{class}-stage-{i}"), *class, *h))
        .collect();
    let samples = object_set("ranking", 7, &objects, protocol.samples_per_fruit, gel, seed, exec)?;
    let preds = predict(model, &samples, exec)?;
    let groups: Vec<RankGroup> = conds
        .iter()
        .enumerate()
        .map(|(i, (_, label, _))| RankGroup {
            condition: label.clone(),
            values: preds[i * protocol.samples_per_fruit..(i + 1) * protocol.samples_per_fruit].to_vec(),
        })
        .collect();
    Ok(RankingOutcome { protocol: protocol.clone(), report: rank_report(&groups, &pairs, protocol.alpha)? })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_layout() {
        let p = RankingProtocol::default();
        p.validate().unwrap();
        let (conds, pairs) = p.layout();
        assert_eq!(conds.len(), 12);
        assert_eq!(pairs.len(), 9);
        for &(h, s) in &pairs {
            let gap = conds[h].2 - conds[s].2;
            if conds[h].0 == FruitClass::Lime {
                assert!(gap < 1.0);
            } else {
                assert!(gap >= 4.0, "{} vs {}", conds[h].1, conds[s].1);
            }
        }
        let q = p.with_lime_gap(5.0);
        assert!((q.sets[1].stages[0].1 - 68.84).abs() < 1e-9);
    }
}
