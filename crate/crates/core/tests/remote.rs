//! Remote generator and embedder against a scripted local HTTP endpoint.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;

use serde_json::{json, Value};
use thought_planner::generator::{Generator, GeneratorError, ParentInput, RemoteGenerator, TemplateSet};
use thought_planner::mdp::ThoughtKind;
use thought_planner::retrieval::{Embedder, RemoteEmbedder, RetrievalError};
use thought_planner::scoring::{self_critic_score, ScoringError};
use thought_planner::transport::{EndpointConfig, TransportError};

struct Recorded {
    body: Value,
    authorization: Option<String>,
}

type Handler = dyn Fn(usize, &Value) -> (u16, String) + Send + Sync;

/// Serves `handler(request_index, body)` until the test process exits.
fn serve(handler: Box<Handler>) -> (String, Arc<Mutex<Vec<Recorded>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/complete", listener.local_addr().unwrap());
    let log: Arc<Mutex<Vec<Recorded>>> = Arc::default();
    let seen = log.clone();
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut length = 0usize;
            let mut authorization = None;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                    break;
                }
                let lower = line.to_ascii_lowercase();
                if let Some(v) = lower.strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap();
                }
                if lower.starts_with("authorization:") {
                    authorization = Some(line["authorization:".len()..].trim().to_string());
                }
            }
            let mut body = vec![0u8; length];
            reader.read_exact(&mut body).unwrap();
            let body: Value = serde_json::from_slice(&body).unwrap_or(Value::Null);
            let index = {
                let mut log = seen.lock().unwrap();
                log.push(Recorded {
                    body: body.clone(),
                    authorization,
                });
                log.len() - 1
            };
            let (status, payload) = handler(index, &body);
            let response = format!(
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
                payload.len()
            );
            let _ = stream.write_all(response.as_bytes());
        }
    });
    (url, log)
}

fn endpoint(url: &str, retries: u32) -> EndpointConfig {
    EndpointConfig {
        url: url.to_string(),
        timeout_ms: 5_000,
        retries,
        max_in_flight: 2,
        api_key: Some("secret".into()),
    }
}

#[test]
fn thought_generation_renders_the_template_and_returns_text() {
    let (url, log) = serve(Box::new(|_, _| (200, json!({"text": "  combined thought \n"}).to_string())));
    let gen = RemoteGenerator::new(endpoint(&url, 0), TemplateSet::boolq(), 64, Some(0.0)).unwrap();
    let out = gen
        .generate_thought(
            [
                ParentInput {
                    text: "first idea",
                    kind: ThoughtKind::Generated,
                },
                ParentInput {
                    text: "a retrieved passage",
                    kind: ThoughtKind::Document,
                },
            ],
            "is the sky blue",
        )
        .unwrap();
    assert_eq!(out, "combined thought");
    let log = log.lock().unwrap();
    let body = &log[0].body;
    let prompt = body["prompt"].as_str().unwrap();
    assert!(prompt.contains("first idea") && prompt.contains("a retrieved passage") && prompt.contains("is the sky blue"));
    assert_eq!(body["max_tokens"], 64);
    assert_eq!(body["temperature"], 0.0);
    assert_eq!(log[0].authorization.as_deref(), Some("Bearer secret"));
}

#[test]
fn self_critic_reads_token_log_probabilities() {
    let (url, log) = serve(Box::new(|_, _| {
        (
            200,
            json!({"text": "1", "token_logprobs": {"1": 0.6f64.ln(), "0": 0.2f64.ln()}}).to_string(),
        )
    }));
    let gen = RemoteGenerator::new(endpoint(&url, 0), TemplateSet::boolq(), 64, None).unwrap();
    let score = self_critic_score("some thought", "is the sky blue", &gen).unwrap();
    assert!((score - 0.75).abs() < 1e-12);
    let body = &log.lock().unwrap()[0].body;
    let mut tokens: Vec<&str> = body["logprob_tokens"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap())
        .collect();
    tokens.sort();
    assert_eq!(tokens, ["0", "1"]);
}

#[test]
fn missing_log_probabilities_fall_back_to_the_first_character() {
    let (url, _) = serve(Box::new(|_, _| (200, json!({"text": "0 because"}).to_string())));
    let gen = RemoteGenerator::new(endpoint(&url, 0), TemplateSet::boolq(), 64, None).unwrap();
    assert!(matches!(gen.score_tokens("p", &["1", "0"]), Err(GeneratorError::Capability(_))));
    assert_eq!(self_critic_score("t", "q", &gen).unwrap(), 0.0);
}

#[test]
fn transient_failures_are_retried_then_succeed() {
    let (url, log) = serve(Box::new(|i, _| {
        if i < 2 {
            (503, "{}".into())
        } else {
            (200, json!({"text": "ok"}).to_string())
        }
    }));
    let gen = RemoteGenerator::new(endpoint(&url, 2), TemplateSet::boolq(), 8, None).unwrap();
    assert_eq!(gen.complete("hello").unwrap(), "ok");
    assert_eq!(log.lock().unwrap().len(), 3);
}

#[test]
fn client_errors_are_not_retried() {
    let (url, log) = serve(Box::new(|_, _| (400, "{}".into())));
    let gen = RemoteGenerator::new(endpoint(&url, 3), TemplateSet::boolq(), 8, None).unwrap();
    match gen.complete("hello") {
        Err(GeneratorError::Transport(TransportError::Status { status: 400, .. })) => {}
        other => panic!("{other:?}"),
    }
    assert_eq!(log.lock().unwrap().len(), 1);
}

#[test]
fn empty_completions_and_bad_payloads_are_errors() {
    let (url, _) = serve(Box::new(|i, _| {
        if i == 0 {
            (200, json!({"text": "   "}).to_string())
        } else {
            (200, "not json".into())
        }
    }));
    let gen = RemoteGenerator::new(endpoint(&url, 0), TemplateSet::boolq(), 8, None).unwrap();
    assert!(matches!(gen.complete("x"), Err(GeneratorError::EmptyCompletion)));
    let err = gen.complete("x").unwrap_err();
    assert!(matches!(err, GeneratorError::Transport(TransportError::Decode { .. })));
    assert!(err.is_transport());
    assert!(ScoringError::from(err).is_transport());
}

#[test]
fn unreachable_endpoint_is_a_transport_error() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let gen = RemoteGenerator::new(
        endpoint(&format!("http://127.0.0.1:{port}/complete"), 0),
        TemplateSet::boolq(),
        8,
        None,
    )
    .unwrap();
    let err = gen.answer("is it", None).unwrap_err();
    assert!(err.is_transport(), "{err}");
}

#[test]
fn remote_embeddings_are_normalized_and_dimension_checked() {
    let (url, log) = serve(Box::new(|_, body| {
        let input = body["input"].as_str().unwrap_or("");
        let v = if input == "short" { json!([1.0, 2.0]) } else { json!([3.0, 0.0, 4.0]) };
        (200, json!({ "embedding": v }).to_string())
    }));
    let emb = RemoteEmbedder::new(endpoint(&url, 0), "remote-test", 3).unwrap();
    assert_eq!(emb.id(), "remote-test");
    let v = emb.embed("hello").unwrap();
    assert!((v[0] - 0.6).abs() < 1e-12 && v[1] == 0.0 && (v[2] - 0.8).abs() < 1e-12);
    assert!(matches!(
        emb.embed("short"),
        Err(RetrievalError::DimensionMismatch { expected: 3, found: 2 })
    ));
    assert_eq!(log.lock().unwrap()[0].body, json!({"input": "hello"}));
}
