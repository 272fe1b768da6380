//! Completion-endpoint client. One route: the request carries the rendered
//! prompt, a token budget and the tokens whose log-probabilities are wanted.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{route_parents, Generator, GeneratorError, ParentInput, SlotValues, TemplateName, TemplateSet};
use crate::transport::{EndpointConfig, JsonClient};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    pub max_tokens: u32,
    pub logprob_tokens: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResponse {
    pub text: String,
    #[serde(default)]
    pub token_logprobs: BTreeMap<String, f64>,
}

#[derive(Debug)]
pub struct RemoteGenerator {
    client: JsonClient,
    templates: TemplateSet,
    max_tokens: u32,
    temperature: Option<f64>,
}

impl RemoteGenerator {
    pub fn new(
        endpoint: EndpointConfig,
        templates: TemplateSet,
        max_tokens: u32,
        temperature: Option<f64>,
    ) -> Result<Self, GeneratorError> {
        Ok(Self {
            client: JsonClient::new(endpoint)?,
            templates,
            max_tokens,
            temperature,
        })
    }

    fn request(&self, prompt: String, max_tokens: u32, tokens: &[&str]) -> Result<CompletionResponse, GeneratorError> {
        let req = CompletionRequest {
            prompt,
            max_tokens,
            logprob_tokens: tokens.iter().map(|t| t.to_string()).collect(),
            temperature: self.temperature,
        };
        Ok(self.client.post(&req)?)
    }

    fn text(&self, prompt: String) -> Result<String, GeneratorError> {
        let resp = self.request(prompt, self.max_tokens, &[])?;
        let text = resp.text.trim();
        if text.is_empty() {
            return Err(GeneratorError::EmptyCompletion);
        }
        Ok(text.to_string())
    }
}

impl Generator for RemoteGenerator {
    fn generate_thought(&self, parents: [ParentInput<'_>; 2], query: &str) -> Result<String, GeneratorError> {
        let (thoughts, documents) = route_parents(&parents);
        let prompt = self.templates.render(
            TemplateName::ThoughtGen,
            &SlotValues {
                thoughts: Some(&thoughts),
                documents: Some(&documents),
                query: Some(query),
                ..Default::default()
            },
        )?;
        self.text(prompt)
    }

    fn answer(&self, query: &str, context: Option<&str>) -> Result<String, GeneratorError> {
        if query.trim().is_empty() {
            return Err(GeneratorError::InvalidInput("query must not be empty".into()));
        }
        let prompt = match context {
            Some(ctx) => self.templates.render(
                TemplateName::AnswerWithContext,
                &SlotValues {
                    context: Some(ctx),
                    query: Some(query),
                    ..Default::default()
                },
            )?,
            None => self.templates.render(
                TemplateName::AnswerClosedBook,
                &SlotValues {
                    query: Some(query),
                    ..Default::default()
                },
            )?,
        };
        // answers may legitimately be short; an empty one still parses as a miss
        Ok(self.request(prompt, self.max_tokens, &[])?.text)
    }

    fn formulate_retrieval_query(&self, best_thoughts: &str, query: &str) -> Result<String, GeneratorError> {
        if query.trim().is_empty() {
            return Err(GeneratorError::InvalidInput("query must not be empty".into()));
        }
        let prompt = self.templates.render(
            TemplateName::RetrievalQuery,
            &SlotValues {
                thoughts: Some(best_thoughts),
                query: Some(query),
                ..Default::default()
            },
        )?;
        self.text(prompt)
    }

    fn score_tokens(&self, prompt: &str, tokens: &[&str]) -> Result<BTreeMap<String, f64>, GeneratorError> {
        if tokens.is_empty() {
            return Err(GeneratorError::InvalidInput("no tokens requested".into()));
        }
        let resp = self.request(prompt.to_string(), 1, tokens)?;
        let mut out = BTreeMap::new();
        for &t in tokens {
            match resp.token_logprobs.get(t) {
                Some(lp) if lp.is_finite() || *lp == f64::NEG_INFINITY => {
                    out.insert(t.to_string(), *lp);
                }
                _ => {
                    return Err(GeneratorError::Capability(format!(
                        "endpoint returned no log-probability for token {t:?}"
                    )))
                }
            }
        }
        Ok(out)
    }

    fn complete(&self, prompt: &str) -> Result<String, GeneratorError> {
        self.text(prompt.to_string())
    }

    fn templates(&self) -> &TemplateSet {
        &self.templates
    }
}
