use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::parse::{Intent, Property, QueryMode};
use crate::error::{Error, Result};
use crate::scene::{FruitClass, Workspace};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Location {
    pub phrase: String,
    /// The position lay outside the workspace and was clamped onto it.
    pub clamped: bool,
}

fn band(v: f64, lo: f64, hi: f64) -> usize {
    let span = hi - lo;
    let off = v - lo;
    if 3.0 * off <= span {
        0
    } else if 3.0 * off <= 2.0 * span {
        1
    } else {
        2
    }
}

/// Thirds rule on each axis: small x is left, small y is front. A point on a
/// band boundary belongs to the lower band.
pub fn describe_location(position: [f64; 2], ws: &Workspace) -> Location {
    let x = position[0].clamp(ws.x_min, ws.x_max);
    let y = position[1].clamp(ws.y_min, ws.y_max);
    let clamped = x != position[0] || y != position[1];
    let depth = ["front", "center", "back"][band(y, ws.y_min, ws.y_max)];
    let side = ["left", "center", "right"][band(x, ws.x_min, ws.x_max)];
    let phrase = if depth == "center" && side == "center" { "center".to_string() } else { format!("{depth}-{side}") };
    Location { phrase, clamped }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ripeness {
    Ripe,
    Unripe,
    NotApplicable,
}

/// Hardness at or below which a fruit counts as ripe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RipenessRules {
    pub ripe_below: BTreeMap<FruitClass, f64>,
}

impl Default for RipenessRules {
    fn default() -> Self {
        RipenessRules {
            ripe_below: [(FruitClass::Banana, 65.0), (FruitClass::Lime, 64.0), (FruitClass::Lemon, 64.0)].into_iter().collect(),
        }
    }
}

impl RipenessRules {
    pub fn validate(&self) -> Result<()> {
        for (c, t) in &self.ripe_below {
            if !(0.0..=100.0).contains(t) {
                return Err(Error::Config(format!("ripeness threshold for {c} must lie in [0, 100], got {t}")));
            }
        }
        Ok(())
    }
}

pub fn interpret_ripeness(class: FruitClass, hardness: f64, rules: &RipenessRules) -> Ripeness {
    match rules.ripe_below.get(&class) {
        Some(&t) if hardness <= t => Ripeness::Ripe,
        Some(_) => Ripeness::Unripe,
        None => Ripeness::NotApplicable,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasuredObject {
    pub label: String,
    pub class: FruitClass,
    /// Workspace (x, y), mm.
    pub position: [f64; 2],
    /// Estimated hardness, HA.
    pub hardness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationInput {
    pub intent: Intent,
    pub objects: Vec<MeasuredObject>,
    pub not_found: Vec<FruitClass>,
    pub workspace: Workspace,
}

impl ExplanationInput {
    /// Every named target must be measured or reported missing, and not both.
    pub fn validate(&self) -> Result<()> {
        for t in &self.intent.targets {
            let found = self.objects.iter().any(|o| o.class == *t);
            let missing = self.not_found.contains(t);
            if found == missing {
                return Err(Error::invalid(format!(
                    "target {t} must be either measured or listed as not found"
                )));
            }
        }
        Ok(())
    }
}

fn object_phrase(o: &MeasuredObject, ws: &Workspace) -> String {
    let loc = describe_location(o.position, ws);
    if loc.phrase == "center" {
        format!("the {} in the center", o.label)
    } else {
        format!("the {} at the {}", o.label, loc.phrase)
    }
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// Orders objects hardest first, ties by label then location phrase.
fn ranked<'a>(objects: &'a [MeasuredObject], ws: &Workspace) -> Vec<&'a MeasuredObject> {
    let mut v: Vec<&MeasuredObject> = objects.iter().collect();
    v.sort_by(|a, b| {
        b.hardness
            .total_cmp(&a.hardness)
            .then_with(|| a.label.cmp(&b.label))
            .then_with(|| describe_location(a.position, ws).phrase.cmp(&describe_location(b.position, ws).phrase))
    });
    v
}

/// The object a superlative query asks for: the hardest for hardness,
/// otherwise the softest. Ties go to the alphabetically first label.
pub fn superlative_choice<'a>(objects: &'a [MeasuredObject], property: Property, ws: &Workspace) -> Option<&'a MeasuredObject> {
    let r = ranked(objects, ws);
    match property {
        Property::Hardness => r.first().copied(),
        Property::Softness | Property::Ripeness => {
            let min = r.last()?.hardness;
            r.into_iter().filter(|o| o.hardness == min).min_by(|a, b| a.label.cmp(&b.label))
        }
    }
}

/// Deterministic rendering: one sentence per measured object, a ranking
/// sentence for superlative and summary queries, then one sentence per
/// missing target.
pub fn template_explanation(input: &ExplanationInput, rules: &RipenessRules) -> String {
    let ws = &input.workspace;
    let mut out = String::new();
    for o in &input.objects {
        let _ = write!(out, "{} has a hardness of {:.1} HA", capitalize(&object_phrase(o, ws)), o.hardness);
        match interpret_ripeness(o.class, o.hardness, rules) {
            Ripeness::Ripe => out.push_str(" and is ripe"),
            Ripeness::Unripe => out.push_str(" and is unripe"),
            Ripeness::NotApplicable => {}
        }
        out.push_str(". ");
    }
    if !input.objects.is_empty() {
        match input.intent.mode {
            QueryMode::Superlative => {
                if let Some(o) = superlative_choice(&input.objects, input.intent.property, ws) {
                    let word = match input.intent.property {
                        Property::Hardness => "hardest",
                        Property::Softness => "softest",
                        Property::Ripeness => "ripest",
                    };
                    let _ = write!(out, "The {word} {} is {}. ", o.class.name(), object_phrase(o, ws));
                }
            }
            QueryMode::Summarize if input.objects.len() > 1 => {
                let mut r = ranked(&input.objects, ws);
                let head = if input.intent.property == Property::Hardness {
                    "From hardest to softest"
                } else {
                    r.reverse();
                    "From softest to hardest"
                };
                let list: Vec<String> = r.iter().map(|o| object_phrase(o, ws)).collect();
                let _ = write!(out, "{head}: {}. ", list.join(", "));
            }
            _ => {}
        }
    }
    for c in &input.not_found {
        let _ = write!(out, "No {} was found in the scene. ", c.name());
    }
    if out.is_empty() {
        out.push_str("No fruit was found in the scene.");
    }
    out.trim_end().to_string()
}

pub const ROLE: &str = "You turn object data into scene descriptions, explain and interpret tactile levels.";
pub const TEMPERATURE: f64 = 0.1;

/// Wire body for an external language-model endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientRequest {
    pub role_string: String,
    pub rules: Vec<String>,
    pub objects: Vec<ClientObject>,
    pub not_found: Vec<FruitClass>,
    pub intent: Intent,
    pub temperature: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientObject {
    pub label: String,
    pub location: String,
    pub position_mm: [f64; 2],
    pub hardness: f64,
    pub ripeness: Ripeness,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientReply {
    pub text: String,
}

/// Adapter for a remote text generator. Implementations must bound their own
/// latency.
pub trait ExplanationClient: Send + Sync {
    fn complete(&self, request: &ClientRequest) -> Result<ClientReply>;
}

pub fn default_prompt_rules(rules: &RipenessRules) -> Vec<String> {
    let thresholds: Vec<String> = rules.ripe_below.iter().map(|(c, t)| format!("{c} is ripe at or below {t} HA")).collect();
    vec![
        "Describe locations with the provided left/center/right and front/center/back phrases.".into(),
        format!("Interpret ripeness with these thresholds: {}.", thresholds.join("; ")),
        "Be concise, fluent and friendly to an operator.".into(),
        "State when a requested fruit was not found.".into(),
    ]
}

pub fn client_request(input: &ExplanationInput, rules: &RipenessRules, prompt_rules: &[String]) -> ClientRequest {
    ClientRequest {
        role_string: ROLE.into(),
        rules: prompt_rules.to_vec(),
        objects: input
            .objects
            .iter()
            .map(|o| ClientObject {
                label: o.label.clone(),
                location: describe_location(o.position, &input.workspace).phrase,
                position_mm: o.position,
                hardness: o.hardness,
                ripeness: interpret_ripeness(o.class, o.hardness, rules),
            })
            .collect(),
        not_found: input.not_found.clone(),
        intent: input.intent.clone(),
        temperature: TEMPERATURE,
    }
}

pub enum Backend<'a> {
    Template,
    External { client: &'a dyn ExplanationClient, prompt_rules: &'a [String] },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Explanation {
    pub text: String,
    /// The external backend failed and the template text was used instead.
    pub degraded: bool,
}

pub fn compose_explanation(input: &ExplanationInput, rules: &RipenessRules, backend: Backend) -> Explanation {
    match backend {
        Backend::Template => Explanation { text: template_explanation(input, rules), degraded: false },
        Backend::External { client, prompt_rules } => match client.complete(&client_request(input, rules, prompt_rules)) {
            Ok(reply) => Explanation { text: reply.text, degraded: false },
            Err(_) => Explanation { text: template_explanation(input, rules), degraded: true },
        },
    }
}
