use serde::{Deserialize, Serialize};

use crate::scene::FruitClass;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Property {
    Hardness,
    Softness,
    Ripeness,
}

impl Property {
    pub fn name(self) -> &'static str {
        match self {
            Property::Hardness => "hardness",
            Property::Softness => "softness",
            Property::Ripeness => "ripeness",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QueryMode {
    Identify,
    Superlative,
    Summarize,
}

/// Structured form of a user query. An empty target list means every fruit
/// in the scene.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Intent {
    pub targets: Vec<FruitClass>,
    pub property: Property,
    pub mode: QueryMode,
    /// Whether any fruit was named in the text.
    pub explicit: bool,
}

impl Intent {
    pub fn all_fruits(&self) -> bool {
        self.targets.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[error("could not find a fruit or property in {raw:?}")]
pub struct Unparseable {
    pub raw: String,
}

/// Closed vocabulary for the keyword parser.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Lexicon {
    pub hardness: Vec<String>,
    pub softness: Vec<String>,
    pub ripeness: Vec<String>,
    pub superlative: Vec<String>,
    pub summarize: Vec<String>,
    /// Phrases (space-separated tokens) that select every fruit.
    pub universal: Vec<String>,
}

fn words(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

impl Default for Lexicon {
    fn default() -> Self {
        Lexicon {
            hardness: words(&["hard", "hardness", "harder", "hardest", "firm", "firmness", "firmer", "firmest", "stiff", "stiffness"]),
            softness: words(&["soft", "softness", "softer", "softest"]),
            ripeness: words(&["ripe", "ripeness", "riper", "ripest", "ripen", "ripened", "unripe"]),
            superlative: words(&["most", "least", "hardest", "softest", "ripest", "firmest"]),
            summarize: words(&["summarize", "summarise", "summary", "list", "rank", "compare", "overview"]),
            universal: words(&["all fruits", "all fruit", "all the fruits", "every fruit", "everything", "each fruit", "all objects"]),
        }
    }
}

fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_ascii_alphabetic())
        .filter(|w| !w.is_empty())
        .map(str::to_string)
        .collect()
}

fn fruit_of(word: &str) -> Option<FruitClass> {
    FruitClass::ALL.into_iter().find(|c| word == c.name() || word == c.plural())
}

fn contains_phrase(tokens: &[String], phrase: &str) -> bool {
    let p: Vec<&str> = phrase.split_whitespace().collect();
    !p.is_empty() && tokens.windows(p.len()).any(|w| w.iter().zip(&p).all(|(a, b)| a == b))
}

pub fn parse_query(text: &str) -> Result<Intent, Unparseable> {
    parse_query_with(text, &Lexicon::default())
}

/// Keyword parse over `lexicon`. A superlative that does not single out
/// exactly one fruit class is answered as a ranked summary.
pub fn parse_query_with(text: &str, lexicon: &Lexicon) -> Result<Intent, Unparseable> {
    let tokens = tokenize(text);
    let has = |list: &[String], w: &str| list.iter().any(|x| x == w);

    let mut targets: Vec<FruitClass> = Vec::new();
    for t in &tokens {
        if let Some(c) = fruit_of(t) {
            if !targets.contains(&c) {
                targets.push(c);
            }
        }
    }
    let property = tokens.iter().find_map(|t| {
        if has(&lexicon.hardness, t) {
            Some(Property::Hardness)
        } else if has(&lexicon.softness, t) {
            Some(Property::Softness)
        } else if has(&lexicon.ripeness, t) {
            Some(Property::Ripeness)
        } else {
            None
        }
    });
    if property.is_none() && targets.is_empty() {
        return Err(Unparseable { raw: text.to_string() });
    }

    let explicit = !targets.is_empty();
    let universal = lexicon.universal.iter().any(|p| contains_phrase(&tokens, p));
    let superlative = tokens.iter().any(|t| has(&lexicon.superlative, t));
    let summarize = tokens.iter().any(|t| has(&lexicon.summarize, t));

    let mode = if superlative {
        if targets.len() == 1 {
            QueryMode::Superlative
        } else {
            QueryMode::Summarize
        }
    } else if summarize || universal || !explicit {
        QueryMode::Summarize
    } else {
        QueryMode::Identify
    };
    Ok(Intent { targets, property: property.unwrap_or(Property::Hardness), mode, explicit })
}
