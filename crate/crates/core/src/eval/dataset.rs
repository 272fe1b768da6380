//! Newline-delimited QA records.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::{gold_boolean, normalize_answer, TaskKind};
use super::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    #[default]
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QAExample {
    pub query_id: String,
    pub query: String,
    pub gold_answers: Vec<String>,
    pub task: TaskKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter_key: Option<String>,
    #[serde(default)]
    pub split: Split,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadOptions {
    /// Drop examples whose first gold answer is not of the form "X mg".
    pub mg_only: bool,
    /// Reassign splits positionally: the first `n` kept examples become
    /// training, the next `m` test, the rest are dropped.
    pub split_counts: Option<(usize, usize)>,
    /// Keep only this split (applied last).
    pub keep: Option<Split>,
}

/// `"X mg"` with `X` an integer or decimal, after normalization.
pub fn is_mg_answer(answer: &str) -> bool {
    let norm = normalize_answer(answer);
    let Some(number) = norm.strip_suffix(" mg") else {
        return false;
    };
    let mut parts = number.splitn(2, '.');
    let int = parts.next().unwrap_or("");
    let frac = parts.next();
    !int.is_empty()
        && int.bytes().all(|b| b.is_ascii_digit())
        && frac.is_none_or(|f| !f.is_empty() && f.bytes().all(|b| b.is_ascii_digit()))
}

fn validate(ex: &QAExample) -> Result<(), String> {
    if ex.query.trim().is_empty() {
        return Err("query is empty".into());
    }
    if ex.gold_answers.is_empty() {
        return Err("gold_answers is empty".into());
    }
    if ex.task == TaskKind::Boolean && ex.gold_answers.iter().any(|g| gold_boolean(g).is_none()) {
        return Err("boolean gold answers must be affirmative or negative".into());
    }
    Ok(())
}

pub fn load_examples(path: &Path, options: &LoadOptions) -> Result<Vec<QAExample>, EvalError> {
    let text = fs::read_to_string(path).map_err(|e| EvalError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |message: String| EvalError::Malformed {
            path: path.display().to_string(),
            line: i + 1,
            message,
        };
        let ex: QAExample = serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
        validate(&ex).map_err(malformed)?;
        if options.mg_only && !is_mg_answer(&ex.gold_answers[0]) {
            continue;
        }
        out.push(ex);
    }
    if let Some((train, test)) = options.split_counts {
        out.truncate(train + test);
        for (i, ex) in out.iter_mut().enumerate() {
            ex.split = if i < train { Split::Train } else { Split::Test };
        }
    }
    if let Some(keep) = options.keep {
        out.retain(|ex| ex.split == keep);
    }
    Ok(out)
}

pub fn write_examples(path: &Path, examples: &[QAExample]) -> Result<(), EvalError> {
    let mut buf = Vec::new();
    for ex in examples {
        serde_json::to_writer(&mut buf, ex).map_err(|e| EvalError::io(path, e))?;
        buf.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(|e| EvalError::io(path, e))?;
    f.write_all(&buf).map_err(|e| EvalError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ex(id: &str, gold: &str, task: TaskKind) -> QAExample {
        QAExample {
            query_id: id.into(),
            query: format!("question {id}"),
            gold_answers: vec![gold.into()],
            task,
            filter_key: None,
            split: Split::Test,
        }
    }

    #[test]
    fn mg_form() {
        assert!(is_mg_answer("10 mg"));
        assert!(is_mg_answer("0.5 mg"));
        assert!(is_mg_answer("The 30 mg."));
        assert!(!is_mg_answer("10 ml"));
        assert!(!is_mg_answer("ten mg"));
        assert!(!is_mg_answer("mg"));
    }

    #[test]
    fn load_filters_and_splits() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        let data = vec![
            ex("a", "10 mg", TaskKind::ExtractiveMg),
            ex("b", "twice daily", TaskKind::ExtractiveMg),
            ex("c", "20 mg", TaskKind::ExtractiveMg),
            ex("d", "5 mg", TaskKind::ExtractiveMg),
        ];
        write_examples(&path, &data).unwrap();
        let opts = LoadOptions {
            mg_only: true,
            split_counts: Some((1, 1)),
            keep: None,
        };
        let got = load_examples(&path, &opts).unwrap();
        let ids: Vec<_> = got.iter().map(|e| (e.query_id.as_str(), e.split)).collect();
        assert_eq!(ids, vec![("a", Split::Train), ("c", Split::Test)]);
        let all = load_examples(&path, &LoadOptions::default()).unwrap();
        assert_eq!(all, data);
    }

    #[test]
    fn malformed_lines_report_position() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        let mut bad = ex("a", "maybe", TaskKind::Boolean);
        bad.gold_answers = vec!["maybe".into()];
        write_examples(&path, &[ex("ok", "yes", TaskKind::Boolean), bad]).unwrap();
        match load_examples(&path, &LoadOptions::default()) {
            Err(EvalError::Malformed { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }
}
