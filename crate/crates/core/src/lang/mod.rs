//! Query parsing, location and ripeness wording, explanation composition and
//! a rule-based judge.

mod explain;
mod judge;
mod parse;

use serde::{Deserialize, Serialize};

pub use explain::{
    client_request, compose_explanation, default_prompt_rules, describe_location, interpret_ripeness,
    superlative_choice, template_explanation, Backend, ClientObject, ClientReply, ClientRequest, Explanation,
    ExplanationClient, ExplanationInput, Location, MeasuredObject, Ripeness, RipenessRules, ROLE, TEMPERATURE,
};
pub use judge::{judge, object_communicated, sentences, JudgeClient, JudgeScore};
pub use parse::{parse_query, parse_query_with, Intent, Lexicon, Property, QueryMode, Unparseable};

/// Labels sent to an open-vocabulary detector when a query names no fruit.
pub const DEFAULT_VOCABULARY: [&str; 20] = [
    "apple", "avocado", "banana", "kiwi", "lemon", "lime", "mango", "orange", "pear", "tomato", "grape",
    "peach", "plum", "strawberry", "cucumber", "carrot", "potato", "onion", "bell pepper", "broccoli",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LangConfig {
    pub lexicon: Lexicon,
    pub ripeness: RipenessRules,
    /// Extra rules forwarded to an external client.
    pub prompt_rules: Vec<String>,
    pub vocabulary: Vec<String>,
}

impl Default for LangConfig {
    fn default() -> Self {
        let ripeness = RipenessRules::default();
        LangConfig {
            lexicon: Lexicon::default(),
            prompt_rules: default_prompt_rules(&ripeness),
            ripeness,
            vocabulary: DEFAULT_VOCABULARY.iter().map(|s| s.to_string()).collect(),
        }
    }
}
