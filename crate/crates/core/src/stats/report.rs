use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::descriptive::{median, percentile};
use super::holm::holm_correct;
use super::wilcoxon::wilcoxon_rank_sum;
use super::{Alternative, Method};

/// A labelled group of predictions, e.g. "banana / Hard (1)".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankGroup {
    pub condition: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub condition: String,
    pub n: usize,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
}

/// One-sided comparison asking whether `harder` ranks above `softer`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseComparison {
    pub harder: String,
    pub softer: String,
    pub u: f64,
    pub p: f64,
    pub p_adjusted: f64,
    pub method: Method,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    pub groups: Vec<GroupSummary>,
    pub comparisons: Vec<PairwiseComparison>,
    pub alpha: f64,
    pub u_convention: String,
}

impl RankReport {
    pub fn all_significant(&self) -> bool {
        self.comparisons.iter().all(|c| c.significant)
    }
}

pub fn summarize(group: &RankGroup) -> Result<GroupSummary> {
    if group.values.is_empty() {
        return Err(Error::invalid(format!("group '{}' is empty", group.condition)));
    }
    let mut v = group.values.clone();
    Ok(GroupSummary {
        condition: group.condition.clone(),
        n: v.len(),
        q25: percentile(&v, 25.0)?,
        q75: percentile(&v, 75.0)?,
        median: median(&mut v),
    })
}

/// Summarizes every group and runs a one-sided rank-sum test for each
/// `(harder, softer)` index pair, Holm-adjusting across the whole family.
pub fn rank_report(groups: &[RankGroup], pairs: &[(usize, usize)], alpha: f64) -> Result<RankReport> {
    let summaries = groups.iter().map(summarize).collect::<Result<Vec<_>>>()?;
    let mut raw = Vec::with_capacity(pairs.len());
    for &(h, s) in pairs {
        let (hg, sg) = match (groups.get(h), groups.get(s)) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(Error::invalid(format!("comparison ({h}, {s}) out of range"))),
        };
        raw.push(wilcoxon_rank_sum(&hg.values, &sg.values, Alternative::Greater)?);
    }
    let adjusted = holm_correct(&raw.iter().map(|r| r.p_value).collect::<Vec<_>>());
    let comparisons = pairs
        .iter()
        .zip(raw)
        .zip(adjusted)
        .map(|((&(h, s), r), adj)| PairwiseComparison {
            harder: groups[h].condition.clone(),
            softer: groups[s].condition.clone(),
            u: r.statistic,
            p: r.p_value,
            p_adjusted: adj,
            method: r.method,
            significant: adj < alpha,
        })
        .collect();
    Ok(RankReport {
        groups: summaries,
        comparisons,
        alpha,
        u_convention: "Mann-Whitney U of the harder (first-listed) group".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_layout() {
        let soft = RankGroup { condition: "soft".into(), values: (0..20).map(|i| 60.0 + i as f64 * 0.5).collect() };
        let hard = RankGroup { condition: "hard".into(), values: (0..20).map(|i| 72.0 + i as f64 * 0.5).collect() };
        let rep = rank_report(&[soft, hard], &[(1, 0)], 0.01).unwrap();
        assert_eq!(rep.comparisons.len(), 1);
        let c = &rep.comparisons[0];
        assert_eq!(c.u, 400.0);
        assert!(c.significant && c.p_adjusted >= c.p);
        assert_eq!(rep.groups[0].median, 64.75);
        let json = serde_json::to_value(&rep).unwrap();
        for key in ["condition", "median", "q25", "q75"] {
            assert!(json["groups"][0].get(key).is_some());
        }
        for key in ["u", "p", "p_adjusted"] {
            assert!(json["comparisons"][0].get(key).is_some());
        }
    }

    #[test]
    fn bad_index() {
        let g = RankGroup { condition: "a".into(), values: vec![1.0] };
        assert!(rank_report(&[g], &[(0, 3)], 0.01).is_err());
    }
}
