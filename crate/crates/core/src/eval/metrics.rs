//! Answer normalization, task-specific answer parsing and the QA metrics:
//! exact match, token F1 and ROUGE-L.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    /// Yes/no questions answered with a single digit.
    Boolean,
    /// Dosage questions whose answers have the form "X mg".
    ExtractiveMg,
    /// Planted-fact questions from the simulated environment.
    SimulatedFact,
}

/// Reward used when scoring a thought against gold answers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardMetric {
    #[default]
    Binary,
    TokenF1,
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// SQuAD normalization: lowercase, strip ASCII punctuation, drop the
/// articles a/an/the as whole words, collapse whitespace.
pub fn normalize_answer(text: &str) -> String {
    let no_punct: String = text.to_lowercase().chars().filter(|c| !c.is_ascii_punctuation()).collect();
    let mut no_articles = String::with_capacity(no_punct.len());
    let mut word = String::new();
    let flush = |word: &mut String, out: &mut String| {
        if matches!(word.as_str(), "a" | "an" | "the") {
            out.push(' ');
        } else {
            out.push_str(word);
        }
        word.clear();
    };
    for c in no_punct.chars() {
        if is_word_char(c) {
            word.push(c);
        } else {
            flush(&mut word, &mut no_articles);
            no_articles.push(c);
        }
    }
    flush(&mut word, &mut no_articles);
    no_articles.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn exact_match<S: AsRef<str>>(prediction: &str, gold_answers: &[S]) -> bool {
    let p = normalize_answer(prediction);
    gold_answers.iter().any(|g| normalize_answer(g.as_ref()) == p)
}

/// Bag-of-tokens F1 over normalized tokens.
pub fn token_f1(prediction: &str, gold: &str) -> f64 {
    let pred = normalize_answer(prediction);
    let gold = normalize_answer(gold);
    let pred: Vec<&str> = pred.split_whitespace().collect();
    let gold: Vec<&str> = gold.split_whitespace().collect();
    if pred.is_empty() || gold.is_empty() {
        return if pred == gold { 1.0 } else { 0.0 };
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &gold {
        *counts.entry(t).or_default() += 1;
    }
    let mut same = 0usize;
    for t in &pred {
        if let Some(c) = counts.get_mut(t) {
            if *c > 0 {
                *c -= 1;
                same += 1;
            }
        }
    }
    if same == 0 {
        return 0.0;
    }
    let precision = same as f64 / pred.len() as f64;
    let recall = same as f64 / gold.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

pub fn max_token_f1<S: AsRef<str>>(prediction: &str, gold_answers: &[S]) -> f64 {
    gold_answers
        .iter()
        .map(|g| token_f1(prediction, g.as_ref()))
        .fold(0.0, f64::max)
}

fn rouge_tokens(text: &str) -> Vec<String> {
    text.to_lowercase()
        .chars()
        .map(|c| if c.is_ascii_punctuation() { ' ' } else { c })
        .collect::<String>()
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

/// Length of the longest common subsequence, two-row dynamic program.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L F-measure (beta = 1) over lowercased, punctuation-stripped tokens.
pub fn rouge_l(prediction: &str, gold: &str) -> f64 {
    rouge_l_tokens(&rouge_tokens(prediction), &rouge_tokens(gold))
}

pub fn rouge_l_tokens<T: PartialEq>(pred: &[T], gold: &[T]) -> f64 {
    if pred.is_empty() || gold.is_empty() {
        return 0.0;
    }
    let lcs = lcs_len(pred, gold) as f64;
    let p = lcs / pred.len() as f64;
    let r = lcs / gold.len() as f64;
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// First `1` or `0` in the completion.
pub fn parse_boolean(completion: &str) -> Option<bool> {
    completion.chars().find_map(|c| match c {
        '1' => Some(true),
        '0' => Some(false),
        _ => None,
    })
}

pub fn gold_boolean(gold: &str) -> Option<bool> {
    match normalize_answer(gold).as_str() {
        "1" | "yes" | "true" | "affirmative" => Some(true),
        "0" | "no" | "false" | "negative" => Some(false),
        _ => None,
    }
}

/// First integer or decimal numeral in the completion, as "X mg".
pub fn parse_mg(completion: &str) -> Option<String> {
    let bytes = completion.as_bytes();
    let start = bytes.iter().position(u8::is_ascii_digit)?;
    let mut end = start;
    while end < bytes.len() && bytes[end].is_ascii_digit() {
        end += 1;
    }
    if end + 1 < bytes.len() && bytes[end] == b'.' && bytes[end + 1].is_ascii_digit() {
        end += 1;
        while end < bytes.len() && bytes[end].is_ascii_digit() {
            end += 1;
        }
    }
    Some(format!("{} mg", &completion[start..end]))
}

/// Extracts the task-shaped answer from a raw completion.
pub fn parse_answer(task: TaskKind, completion: &str) -> Option<String> {
    match task {
        TaskKind::Boolean => parse_boolean(completion).map(|b| if b { "yes" } else { "no" }.to_string()),
        TaskKind::ExtractiveMg => parse_mg(completion),
        TaskKind::SimulatedFact => Some(completion.trim().to_string()),
    }
}

/// Task metric of a raw completion against gold answers, in [0, 1].
pub fn task_score<S: AsRef<str>>(task: TaskKind, metric: RewardMetric, completion: &str, gold_answers: &[S]) -> f64 {
    match task {
        TaskKind::Boolean => {
            let predicted = parse_boolean(completion);
            let gold = gold_answers.first().and_then(|g| gold_boolean(g.as_ref()));
            match (predicted, gold) {
                (Some(p), Some(g)) if p == g => 1.0,
                _ => 0.0,
            }
        }
        TaskKind::ExtractiveMg | TaskKind::SimulatedFact => {
            let Some(answer) = parse_answer(task, completion) else {
                return 0.0;
            };
            match metric {
                RewardMetric::Binary => f64::from(u8::from(exact_match(&answer, gold_answers))),
                RewardMetric::TokenF1 => max_token_f1(&answer, gold_answers),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization_examples() {
        assert_eq!(normalize_answer("The Aspirin."), "aspirin");
        assert_eq!(normalize_answer("10 mg"), "10 mg");
        assert_eq!(normalize_answer(""), "");
        assert_eq!(normalize_answer("  An  apple, a DAY "), "apple day");
        // articles only match whole words
        assert_eq!(normalize_answer("theatre another"), "theatre another");
    }

    #[test]
    fn exact_match_examples() {
        assert!(exact_match("1 mg", &["1 mg"]));
        assert!(!exact_match("10 mg", &["20 mg"]));
        assert!(exact_match("The 30 mg", &["30 mg"]));
        assert!(exact_match("x", &["y", "X."]));
        assert!(!exact_match::<&str>("x", &[]));
    }

    #[test]
    fn token_f1_examples() {
        assert_eq!(token_f1("same words here", "same words here"), 1.0);
        assert_eq!(token_f1("alpha", "beta"), 0.0);
        assert_eq!(token_f1("x y", "y z"), 0.5);
        assert_eq!(token_f1("", ""), 1.0);
        assert_eq!(token_f1("", "x"), 0.0);
    }

    #[test]
    fn rouge_examples() {
        assert_eq!(rouge_l("a b c", "a b c"), 1.0);
        assert_eq!(rouge_l("a b", "c d"), 0.0);
        assert!((rouge_l("a b c", "a c") - 0.8).abs() < 1e-15);
        assert_eq!(rouge_l("", "a"), 0.0);
    }

    #[test]
    fn boolean_parsing() {
        assert_eq!(parse_boolean("1"), Some(true));
        assert_eq!(parse_boolean("The answer is 0."), Some(false));
        assert_eq!(parse_boolean("yes"), None);
        assert_eq!(task_score(TaskKind::Boolean, RewardMetric::Binary, "1", &["yes"]), 1.0);
        assert_eq!(task_score(TaskKind::Boolean, RewardMetric::Binary, "1", &["false"]), 0.0);
        assert_eq!(task_score(TaskKind::Boolean, RewardMetric::Binary, "maybe", &["yes"]), 0.0);
    }

    #[test]
    fn mg_parsing() {
        assert_eq!(parse_mg("The dose is 30 mg daily").as_deref(), Some("30 mg"));
        assert_eq!(parse_mg("2.5").as_deref(), Some("2.5 mg"));
        assert_eq!(parse_mg("5. next").as_deref(), Some("5 mg"));
        assert_eq!(parse_mg("none"), None);
        assert_eq!(task_score(TaskKind::ExtractiveMg, RewardMetric::Binary, "10", &["10 mg"]), 1.0);
        assert_eq!(task_score(TaskKind::ExtractiveMg, RewardMetric::Binary, "10", &["20 mg"]), 0.0);
    }
}
