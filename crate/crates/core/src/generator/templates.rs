//! Prompt templates, loaded from plain-text files with one section per
//! template:
//!
//! ```text
//! === ThoughtGen ===
//! ...body with {thoughts} {documents} {query}...
//! === AnswerWithContext ===
//! ...
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const BOOLQ_TEMPLATES: &str = include_str!("../../templates/boolq.txt");
pub const EMRQA_TEMPLATES: &str = include_str!("../../templates/emrqa.txt");

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TemplateError {
    #[error("unknown template section `{0}`")]
    UnknownSection(String),
    #[error("template `{0}` is missing")]
    Missing(TemplateName),
    #[error("template `{0}` defined twice")]
    Duplicate(TemplateName),
    #[error("text before the first section header (line {0})")]
    Orphan(usize),
    #[error("template `{template}` uses unknown placeholder `{{{placeholder}}}`")]
    UnknownPlaceholder { template: TemplateName, placeholder: String },
    #[error("template `{template}` needs slot `{slot}` but no value was given")]
    UnfilledSlot { template: TemplateName, slot: Slot },
    #[error("cannot read template file {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TemplateName {
    ThoughtGen,
    AnswerWithContext,
    AnswerClosedBook,
    RetrievalQuery,
    SelfCritic,
}

impl TemplateName {
    pub const ALL: [TemplateName; 5] = [
        TemplateName::ThoughtGen,
        TemplateName::AnswerWithContext,
        TemplateName::AnswerClosedBook,
        TemplateName::RetrievalQuery,
        TemplateName::SelfCritic,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::ThoughtGen => "ThoughtGen",
            Self::AnswerWithContext => "AnswerWithContext",
            Self::AnswerClosedBook => "AnswerClosedBook",
            Self::RetrievalQuery => "RetrievalQuery",
            Self::SelfCritic => "SelfCritic",
        }
    }
}

impl fmt::Display for TemplateName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TemplateName {
    type Err = TemplateError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| TemplateError::UnknownSection(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Slot {
    Thoughts,
    Documents,
    Query,
    Context,
    Thought,
}

impl Slot {
    pub const ALL: [Slot; 5] = [Slot::Thoughts, Slot::Documents, Slot::Query, Slot::Context, Slot::Thought];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Thoughts => "thoughts",
            Self::Documents => "documents",
            Self::Query => "query",
            Self::Context => "context",
            Self::Thought => "thought",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|slot| slot.as_str() == s)
    }
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Piece {
    Literal(String),
    Slot(Slot),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplate {
    pub name: TemplateName,
    pub body: String,
    pieces: Vec<Piece>,
}

impl PromptTemplate {
    pub fn new(name: TemplateName, body: impl Into<String>) -> Result<Self, TemplateError> {
        let body = body.into();
        let pieces = parse_pieces(name, &body)?;
        Ok(Self { name, body, pieces })
    }

    pub fn slots(&self) -> impl Iterator<Item = Slot> + '_ {
        self.pieces.iter().filter_map(|p| match p {
            Piece::Slot(s) => Some(*s),
            Piece::Literal(_) => None,
        })
    }

    /// Substitutes slot values in one pass; values are never re-scanned.
    pub fn render(&self, values: &SlotValues<'_>) -> Result<String, TemplateError> {
        let mut out = String::with_capacity(self.body.len() + 256);
        for piece in &self.pieces {
            match piece {
                Piece::Literal(s) => out.push_str(s),
                Piece::Slot(slot) => out.push_str(values.get(*slot).ok_or(TemplateError::UnfilledSlot {
                    template: self.name,
                    slot: *slot,
                })?),
            }
        }
        Ok(out)
    }
}

/// `{ident}` with a lowercase identifier is a placeholder; any other brace
/// text is literal.
fn parse_pieces(name: TemplateName, body: &str) -> Result<Vec<Piece>, TemplateError> {
    let mut pieces = Vec::new();
    let mut literal = String::new();
    let mut rest = body;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        let ident_len = after
            .find(|c: char| !(c.is_ascii_lowercase() || c == '_'))
            .unwrap_or(after.len());
        if ident_len > 0 && after[ident_len..].starts_with('}') {
            let ident = &after[..ident_len];
            let slot = Slot::parse(ident).ok_or_else(|| TemplateError::UnknownPlaceholder {
                template: name,
                placeholder: ident.to_string(),
            })?;
            literal.push_str(&rest[..open]);
            if !literal.is_empty() {
                pieces.push(Piece::Literal(std::mem::take(&mut literal)));
            }
            pieces.push(Piece::Slot(slot));
            rest = &after[ident_len + 1..];
        } else {
            literal.push_str(&rest[..=open]);
            rest = after;
        }
    }
    literal.push_str(rest);
    if !literal.is_empty() {
        pieces.push(Piece::Literal(literal));
    }
    Ok(pieces)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SlotValues<'a> {
    pub thoughts: Option<&'a str>,
    pub documents: Option<&'a str>,
    pub query: Option<&'a str>,
    pub context: Option<&'a str>,
    pub thought: Option<&'a str>,
}

impl<'a> SlotValues<'a> {
    pub fn get(&self, slot: Slot) -> Option<&'a str> {
        match slot {
            Slot::Thoughts => self.thoughts,
            Slot::Documents => self.documents,
            Slot::Query => self.query,
            Slot::Context => self.context,
            Slot::Thought => self.thought,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemplateSet {
    templates: BTreeMap<TemplateName, PromptTemplate>,
}

impl TemplateSet {
    pub fn parse(text: &str) -> Result<Self, TemplateError> {
        let mut sections: Vec<(TemplateName, Vec<&str>)> = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if let Some(header) = section_header(line) {
                let name: TemplateName = header.parse()?;
                if sections.iter().any(|(n, _)| *n == name) {
                    return Err(TemplateError::Duplicate(name));
                }
                sections.push((name, Vec::new()));
            } else if let Some((_, lines)) = sections.last_mut() {
                lines.push(line);
            } else if !line.trim().is_empty() {
                return Err(TemplateError::Orphan(i + 1));
            }
        }
        let mut templates = BTreeMap::new();
        for (name, lines) in sections {
            let body = lines.join("\n");
            let body = body.trim_matches('\n');
            templates.insert(name, PromptTemplate::new(name, body)?);
        }
        for name in TemplateName::ALL {
            if !templates.contains_key(&name) {
                return Err(TemplateError::Missing(name));
            }
        }
        Ok(Self { templates })
    }

    pub fn load(path: &Path) -> Result<Self, TemplateError> {
        let text = fs::read_to_string(path).map_err(|e| TemplateError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&text)
    }

    pub fn boolq() -> Self {
        Self::parse(BOOLQ_TEMPLATES).expect("bundled templates parse")
    }

    pub fn emrqa() -> Self {
        Self::parse(EMRQA_TEMPLATES).expect("bundled templates parse")
    }

    pub fn get(&self, name: TemplateName) -> &PromptTemplate {
        &self.templates[&name]
    }

    pub fn render(&self, name: TemplateName, values: &SlotValues<'_>) -> Result<String, TemplateError> {
        self.get(name).render(values)
    }

    /// Serializes back to the section file format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (name, t) in &self.templates {
            out.push_str(&format!("=== {name} ===\n{}\n", t.body));
        }
        out
    }
}

fn section_header(line: &str) -> Option<&str> {
    let inner = line.trim_end().strip_prefix("=== ")?.strip_suffix(" ===")?;
    Some(inner.trim())
}

#[cfg(test)]
mod tests {
    use super::*;

    const ALL_FILLED: SlotValues<'static> = SlotValues {
        thoughts: Some("T"),
        documents: Some("D"),
        query: Some("Q"),
        context: Some("C"),
        thought: Some("H"),
    };

    #[test]
    fn bundled_sets_parse_and_render_clean() {
        for set in [TemplateSet::boolq(), TemplateSet::emrqa()] {
            for name in TemplateName::ALL {
                let out = set.render(name, &ALL_FILLED).unwrap();
                for slot in Slot::ALL {
                    assert!(!out.contains(&format!("{{{slot}}}")), "{name}: residual {slot}");
                }
            }
        }
    }

    #[test]
    fn bundled_template_slots() {
        let set = TemplateSet::boolq();
        let slots: Vec<_> = set.get(TemplateName::ThoughtGen).slots().collect();
        assert_eq!(slots, [Slot::Thoughts, Slot::Documents, Slot::Query]);
        let slots: Vec<_> = set.get(TemplateName::SelfCritic).slots().collect();
        assert_eq!(slots, [Slot::Query, Slot::Thought]);
        assert!(set.get(TemplateName::RetrievalQuery).body.ends_with("QUERY : "));
    }

    #[test]
    fn unknown_placeholder_rejected() {
        let err = PromptTemplate::new(TemplateName::ThoughtGen, "x {bogus} y").unwrap_err();
        assert!(matches!(err, TemplateError::UnknownPlaceholder { .. }));
        // non-identifier braces are literal
        let t = PromptTemplate::new(TemplateName::ThoughtGen, "json {\"a\": 1} {query}").unwrap();
        assert_eq!(t.render(&ALL_FILLED).unwrap(), "json {\"a\": 1} Q");
    }

    #[test]
    fn values_are_not_rescanned() {
        let t = PromptTemplate::new(TemplateName::SelfCritic, "{query}|{thought}").unwrap();
        let v = SlotValues {
            query: Some("{thought}"),
            thought: Some("x"),
            ..Default::default()
        };
        assert_eq!(t.render(&v).unwrap(), "{thought}|x");
    }

    #[test]
    fn unfilled_slot_is_an_error() {
        let t = PromptTemplate::new(TemplateName::SelfCritic, "{query}").unwrap();
        assert!(matches!(
            t.render(&SlotValues::default()),
            Err(TemplateError::UnfilledSlot { slot: Slot::Query, .. })
        ));
    }

    #[test]
    fn missing_and_duplicate_sections() {
        assert!(matches!(
            TemplateSet::parse("=== ThoughtGen ===\nx\n"),
            Err(TemplateError::Missing(_))
        ));
        let dup = format!("{BOOLQ_TEMPLATES}=== SelfCritic ===\nx\n");
        assert!(matches!(TemplateSet::parse(&dup), Err(TemplateError::Duplicate(TemplateName::SelfCritic))));
        assert!(matches!(TemplateSet::parse("stray\n=== X ==="), Err(TemplateError::Orphan(1))));
    }

    #[test]
    fn text_round_trip() {
        let set = TemplateSet::emrqa();
        assert_eq!(TemplateSet::parse(&set.to_text()).unwrap(), set);
    }
}
