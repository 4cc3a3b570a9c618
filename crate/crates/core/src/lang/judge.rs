use serde::{Deserialize, Serialize};

use super::explain::{describe_location, interpret_ripeness, ExplanationInput, MeasuredObject, Ripeness, RipenessRules};
use crate::error::{Error, Result};
use crate::scene::{FruitClass, Workspace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeScore {
    pub accuracy: u8,
    pub completeness: u8,
    pub clarity: u8,
}

impl JudgeScore {
    pub fn validate(&self) -> Result<()> {
        for v in [self.accuracy, self.completeness, self.clarity] {
            if !(1..=5).contains(&v) {
                return Err(Error::invalid(format!("judge scores must lie in 1..=5, got {v}")));
            }
        }
        Ok(())
    }

    /// The bar a run's explanation must clear to count as communicated.
    pub fn passes(&self) -> bool {
        self.accuracy >= 4 && self.completeness == 5
    }
}

/// Maps a coverage fraction onto 1–5, rounding down.
fn grade(f: f64) -> u8 {
    1 + (4.0 * f + 1e-9).floor().clamp(0.0, 4.0) as u8
}

pub fn sentences(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut cur = String::new();
    for (i, &c) in chars.iter().enumerate() {
        cur.push(c);
        let end = matches!(c, '.' | '!' | '?') && chars.get(i + 1).map_or(true, |n| n.is_whitespace());
        if end {
            let s = cur.trim().to_string();
            if !s.is_empty() {
                out.push(s);
            }
            cur.clear();
        }
    }
    let rest = cur.trim();
    if !rest.is_empty() {
        out.push(rest.to_string());
    }
    out
}

fn words(s: &str) -> Vec<String> {
    s.to_lowercase()
        .split(|c: char| !(c.is_ascii_alphanumeric() || c == '-' || c == '.'))
        .map(|w| w.trim_matches('.').to_string())
        .filter(|w| !w.is_empty())
        .collect()
}

fn numbers(s: &str) -> Vec<f64> {
    words(s).iter().filter_map(|w| w.parse::<f64>().ok()).collect()
}

fn mentions(s: &str, word: &str) -> bool {
    words(s).iter().any(|w| w == word)
}

fn mentions_class(s: &str, c: FruitClass) -> bool {
    mentions(s, c.name()) || mentions(s, c.plural())
}

fn reports_missing(s: &str, c: FruitClass) -> bool {
    let lower = s.to_lowercase();
    mentions_class(s, c) && (lower.contains("not found") || lower.contains("was found") || lower.contains("not detected") || lower.contains("could not find"))
        && (lower.contains("no ") || lower.contains("not "))
}

fn ripeness_stated(s: &str) -> Option<Ripeness> {
    if mentions(s, "unripe") {
        Some(Ripeness::Unripe)
    } else if mentions(s, "ripe") {
        Some(Ripeness::Ripe)
    } else {
        None
    }
}

/// Whether some sentence names the object with its location phrase, its
/// hardness within 1 HA and, where the rules apply, its ripeness.
pub fn object_communicated(text: &str, object: &MeasuredObject, ws: &Workspace, rules: &RipenessRules) -> bool {
    let phrase = describe_location(object.position, ws).phrase;
    let expected = interpret_ripeness(object.class, object.hardness, rules);
    sentences(text).iter().any(|s| {
        mentions(s, &object.label.to_lowercase())
            && mentions(s, &phrase)
            && numbers(s).iter().any(|v| (v - object.hardness).abs() <= 1.0)
            && (expected == Ripeness::NotApplicable || ripeness_stated(s) == Some(expected))
    })
}

/// Rule-based scoring of an explanation against the measurements it should
/// convey.
pub fn judge(text: &str, truth: &ExplanationInput, rules: &RipenessRules) -> JudgeScore {
    let sents = sentences(text);
    let ws = &truth.workspace;

    let (mut points, mut total) = (0usize, 0usize);
    let (mut ripe_ok, mut ripe_total) = (0usize, 0usize);
    for o in &truth.objects {
        let phrase = describe_location(o.position, ws).phrase;
        // two same-label objects can share a location phrase; prefer the
        // sentence carrying this object's value
        let named: Vec<&String> = sents.iter().filter(|s| mentions(s, &o.label.to_lowercase()) && mentions(s, &phrase)).collect();
        let close = |s: &&String| numbers(s).iter().any(|v| (v - o.hardness).abs() <= 1.0);
        let hit = named.iter().find(|s| close(*s)).or(named.first()).copied();
        let expected = interpret_ripeness(o.class, o.hardness, rules);
        total += 3;
        if expected != Ripeness::NotApplicable {
            total += 1;
            ripe_total += 1;
        }
        if let Some(s) = hit {
            points += 1;
            if numbers(s).iter().any(|v| (v - o.hardness).abs() <= 1.0) {
                points += 1;
            }
            // a third point for not contradicting itself on ripeness
            let stated = ripeness_stated(s);
            if expected == Ripeness::NotApplicable || stated.is_some() {
                points += 1;
            }
            if expected != Ripeness::NotApplicable && stated == Some(expected) {
                points += 1;
                ripe_ok += 1;
            }
        }
    }
    let accuracy = if total == 0 { 5 } else { grade(points as f64 / total as f64) };

    let mut targets: Vec<FruitClass> = truth.intent.targets.clone();
    if targets.is_empty() {
        for c in truth.objects.iter().map(|o| o.class).chain(truth.not_found.iter().copied()) {
            if !targets.contains(&c) {
                targets.push(c);
            }
        }
    }
    let covered = targets
        .iter()
        .filter(|&&c| {
            if truth.not_found.contains(&c) {
                sents.iter().any(|s| reports_missing(s, c))
            } else {
                sents.iter().any(|s| mentions_class(s, c))
            }
        })
        .count();
    let target_grade = if targets.is_empty() { 5 } else { grade(covered as f64 / targets.len() as f64) };
    let ripe_grade = if ripe_total == 0 { 5 } else { grade(ripe_ok as f64 / ripe_total as f64) };
    let completeness = target_grade.min(ripe_grade);

    let mut clarity: i32 = 5;
    let mut seen = std::collections::HashSet::new();
    if sents.iter().any(|s| !seen.insert(s.to_lowercase())) {
        clarity -= 2;
    }
    if sents.is_empty() || sents.len() > truth.objects.len() + truth.not_found.len() + 2 {
        clarity -= 1;
    }
    if sents.iter().any(|s| s.split_whitespace().count() > 40) {
        clarity -= 1;
    }
    if !text.trim_end().ends_with(['.', '!', '?']) {
        clarity -= 1;
    }

    JudgeScore { accuracy, completeness, clarity: clarity.clamp(1, 5) as u8 }
}

/// Remote scorer following the three-metric instruction.
pub trait JudgeClient: Send + Sync {
    fn score(&self, text: &str, truth: &ExplanationInput) -> Result<JudgeScore>;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::explain::template_explanation;
    use crate::lang::parse::{Intent, Property, QueryMode};

    fn three() -> ExplanationInput {
        ExplanationInput {
            intent: Intent {
                targets: vec![FruitClass::Apple, FruitClass::Banana, FruitClass::Lime],
                property: Property::Ripeness,
                mode: QueryMode::Summarize,
                explicit: true,
            },
            objects: vec![
                MeasuredObject { label: "apple".into(), class: FruitClass::Apple, position: [-250.0, -150.0], hardness: 80.2 },
                MeasuredObject { label: "banana".into(), class: FruitClass::Banana, position: [0.0, 0.0], hardness: 63.0 },
                MeasuredObject { label: "lime".into(), class: FruitClass::Lime, position: [250.0, 150.0], hardness: 70.4 },
            ],
            not_found: vec![],
            workspace: Workspace::default(),
        }
    }

    #[test]
    fn template_scores_perfectly_on_its_own_input() {
        let t = three();
        let rules = RipenessRules::default();
        let s = judge(&template_explanation(&t, &rules), &t, &rules);
        assert_eq!(s, JudgeScore { accuracy: 5, completeness: 5, clarity: 5 });
        assert!(s.passes());
        for o in &t.objects {
            assert!(object_communicated(&template_explanation(&t, &rules), o, &t.workspace, &rules));
        }
        let mut moved = t.objects[0].clone();
        moved.position = [250.0, -150.0];
        assert!(!object_communicated(&template_explanation(&t, &rules), &moved, &t.workspace, &rules));
    }

    #[test]
    fn omitting_a_target_costs_completeness() {
        let t = three();
        let rules = RipenessRules::default();
        let text = "The apple at the front-left has a hardness of 80.2 HA. \
                    The banana in the center has a hardness of 63.0 HA and is ripe.";
        let s = judge(text, &t, &rules);
        assert!(s.completeness <= 3, "{s:?}");
        assert!(!s.passes());
    }

    #[test]
    fn wrong_values_cost_accuracy() {
        let t = three();
        let rules = RipenessRules::default();
        let text = template_explanation(&t, &rules).replace("80.2", "74.0").replace("70.4", "60.0");
        let s = judge(&text, &t, &rules);
        assert!(s.accuracy < 5);
    }

    #[test]
    fn duplicates_cost_clarity() {
        let t = three();
        let rules = RipenessRules::default();
        let one = template_explanation(&t, &rules);
        let s = judge(&format!("{one} {one}"), &t, &rules);
        assert!(s.clarity <= 3);
    }

    #[test]
    fn sentence_split_keeps_decimals() {
        assert_eq!(sentences("It is 63.5 HA. Next one! Last"), vec!["It is 63.5 HA.", "Next one!", "Last"]);
    }
}
