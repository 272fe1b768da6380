//! Deterministic stand-in for a language model.
//!
//! Texts carry facts as `fact:KEY=VALUE` tokens and queries name the keys
//! they need as `ask:KEY1+KEY2`. Thought generation is fact-set union,
//! answering returns the asked values when every asked key is known, and the
//! critic prefers `"1"` exactly when the prompt covers every asked key.

use std::collections::{BTreeMap, BTreeSet};

use super::{Generator, GeneratorError, ParentInput, TemplateSet};

pub const UNKNOWN_ANSWER: &str = "unknown";

pub type FactSet = BTreeSet<(String, String)>;

fn is_ident(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == '.')
}

/// Splits on anything that cannot occur inside a `fact:` or `ask:` token,
/// so quotes and prompt markup glued to a token do not hide it.
fn tokens(text: &str) -> impl Iterator<Item = &str> {
    text.split(|c: char| !(c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.' | ':' | '=' | '+')))
        .map(|t| t.trim_end_matches('.'))
        .filter(|t| !t.is_empty())
}

pub fn parse_facts(text: &str) -> FactSet {
    tokens(text)
        .filter_map(|tok| {
            let body = tok.strip_prefix("fact:")?;
            let (k, v) = body.split_once('=')?;
            (is_ident(k) && is_ident(v)).then(|| (k.to_string(), v.to_string()))
        })
        .collect()
}

/// Keys requested by the first `ask:` token, in order.
pub fn parse_ask(text: &str) -> Vec<String> {
    tokens(text)
        .find_map(|tok| tok.strip_prefix("ask:"))
        .map(|spec| spec.split('+').filter(|k| is_ident(k)).map(str::to_string).collect())
        .unwrap_or_default()
}

fn render_facts(facts: &FactSet) -> String {
    facts
        .iter()
        .map(|(k, v)| format!("fact:{k}={v}"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Values for each asked key (smallest value when a key repeats), or `None`
/// when any key is missing.
fn resolve(ask: &[String], facts: &FactSet) -> Option<Vec<String>> {
    if ask.is_empty() {
        return None;
    }
    ask.iter()
        .map(|key| facts.iter().find(|(k, _)| k == key).map(|(_, v)| v.clone()))
        .collect()
}

fn coverage(ask: &[String], facts: &FactSet) -> f64 {
    if ask.is_empty() {
        return 0.0;
    }
    let known = ask.iter().filter(|key| facts.iter().any(|(k, _)| k == *key)).count();
    known as f64 / ask.len() as f64
}

#[derive(Debug, Clone)]
pub struct SimulatedGenerator {
    templates: TemplateSet,
    logprobs: bool,
}

impl Default for SimulatedGenerator {
    fn default() -> Self {
        Self {
            templates: TemplateSet::boolq(),
            logprobs: true,
        }
    }
}

impl SimulatedGenerator {
    pub fn new(templates: TemplateSet) -> Self {
        Self {
            templates,
            logprobs: true,
        }
    }

    /// Simulates a backend without token log-probabilities.
    pub fn without_logprobs(mut self) -> Self {
        self.logprobs = false;
        self
    }

    /// Probability mass on `"1"`: 0.95 when every asked key is covered,
    /// otherwise at most 0.45.
    pub fn affirmative_probability(prompt: &str) -> f64 {
        let ask = parse_ask(prompt);
        let cov = coverage(&ask, &parse_facts(prompt));
        if cov >= 1.0 {
            0.95
        } else {
            0.05 + 0.4 * cov
        }
    }
}

impl Generator for SimulatedGenerator {
    fn generate_thought(&self, parents: [ParentInput<'_>; 2], _query: &str) -> Result<String, GeneratorError> {
        let facts: FactSet = parents.iter().flat_map(|p| parse_facts(p.text)).collect();
        if facts.is_empty() {
            Ok("Thought: no relevant evidence yet.".to_string())
        } else {
            Ok(format!("Thought: combined evidence {}", render_facts(&facts)))
        }
    }

    fn answer(&self, query: &str, context: Option<&str>) -> Result<String, GeneratorError> {
        if query.trim().is_empty() {
            return Err(GeneratorError::InvalidInput("query must not be empty".into()));
        }
        let mut facts = parse_facts(query);
        if let Some(ctx) = context {
            facts.extend(parse_facts(ctx));
        }
        Ok(resolve(&parse_ask(query), &facts)
            .map(|values| values.join(" "))
            .unwrap_or_else(|| UNKNOWN_ANSWER.to_string()))
    }

    fn formulate_retrieval_query(&self, best_thoughts: &str, query: &str) -> Result<String, GeneratorError> {
        if query.trim().is_empty() {
            return Err(GeneratorError::InvalidInput("query must not be empty".into()));
        }
        let keywords: Vec<String> = parse_facts(best_thoughts)
            .into_iter()
            .flat_map(|(k, v)| [k, v])
            .collect();
        if keywords.is_empty() {
            Ok(query.to_string())
        } else {
            Ok(format!("{query} {}", keywords.join(" ")))
        }
    }

    fn score_tokens(&self, prompt: &str, tokens: &[&str]) -> Result<BTreeMap<String, f64>, GeneratorError> {
        if tokens.is_empty() {
            return Err(GeneratorError::InvalidInput("no tokens requested".into()));
        }
        if !self.logprobs {
            return Err(GeneratorError::Capability("token log-probabilities".into()));
        }
        let p1 = Self::affirmative_probability(prompt);
        Ok(tokens
            .iter()
            .map(|&t| {
                let p = match t {
                    "1" => p1,
                    "0" => 1.0 - p1,
                    _ => 1e-9,
                };
                (t.to_string(), p.ln())
            })
            .collect())
    }

    fn complete(&self, prompt: &str) -> Result<String, GeneratorError> {
        Ok(if Self::affirmative_probability(prompt) > 0.5 { "1" } else { "0" }.to_string())
    }

    fn templates(&self) -> &TemplateSet {
        &self.templates
    }
}
