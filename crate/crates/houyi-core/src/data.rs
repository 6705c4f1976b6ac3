//! Bundled data tables: fact table and skill strings, language-switch
//! lexicon, and the mock generative backend's exemplar tables.
//!
//! The files ship in the repository's `data/` directory and are embedded at
//! compile time so the core crate works without filesystem access.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use serde::Deserialize;

const FACTS_TOML: &str = include_str!("../../../data/facts.toml");
const LEXICON_TOML: &str = include_str!("../../../data/lexicon.toml");
const EXEMPLARS_TOML: &str = include_str!("../../../data/exemplars.toml");

#[derive(Debug, Clone, Deserialize)]
pub struct Fact {
    pub patterns: Vec<String>,
    pub answer: String,
}

#[derive(Debug, Clone, Deserialize)]
pub struct Skills {
    pub hello_world: String,
    pub quicksort: String,
    pub content_manipulation: String,
    pub spam_email: String,
    pub age_gathering: String,
    pub leak_refusal: String,
    pub breach_ack: String,
}

#[derive(Debug, Clone, Deserialize)]
pub struct FactTable {
    pub facts: Vec<Fact>,
    pub skills: Skills,
}

impl FactTable {
    /// Looks up the first fact whose patterns all occur in `text`
    /// (case-insensitive).
    pub fn lookup(&self, text: &str) -> Option<&str> {
        let lower = text.to_lowercase();
        self.facts
            .iter()
            .find(|fact| fact.patterns.iter().all(|p| lower.contains(&p.to_lowercase())))
            .map(|fact| fact.answer.as_str())
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct Lexicon {
    pub default_directive: String,
    pub markers: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct Separators {
    pub semantic_reasoning_summary: BTreeMap<String, String>,
    pub semantic_specific_ignoring: BTreeMap<String, String>,
    pub semantic_additional_task: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct InRole {
    pub qa_chat_deflection: String,
    pub rephrase_analysis: String,
    pub rephrase_verdict: String,
    pub code_gen: String,
    pub copy_write: String,
    pub email_write: String,
    pub product_desc: String,
    pub custom: String,
}

#[derive(Debug, Clone, Deserialize)]
pub struct Exemplars {
    pub framework: BTreeMap<String, String>,
    pub separator: Separators,
    pub keywords: BTreeMap<String, Vec<String>>,
    pub purpose: BTreeMap<String, String>,
    pub input_nature: BTreeMap<String, String>,
    pub io_format: BTreeMap<String, String>,
    pub probe_examples: BTreeMap<String, Vec<String>>,
    pub in_role: InRole,
}

pub fn fact_table() -> &'static FactTable {
    static TABLE: OnceLock<FactTable> = OnceLock::new();
    TABLE.get_or_init(|| toml::from_str(FACTS_TOML).expect("bundled facts.toml is valid"))
}

pub fn lexicon() -> &'static Lexicon {
    static LEX: OnceLock<Lexicon> = OnceLock::new();
    LEX.get_or_init(|| toml::from_str(LEXICON_TOML).expect("bundled lexicon.toml is valid"))
}

pub fn exemplars() -> &'static Exemplars {
    static EX: OnceLock<Exemplars> = OnceLock::new();
    EX.get_or_init(|| toml::from_str(EXEMPLARS_TOML).expect("bundled exemplars.toml is valid"))
}
