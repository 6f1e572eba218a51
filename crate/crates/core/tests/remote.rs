//! HTTP clients against a local stub server.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use sectionseg::corpus::{LabelSet, Note};
use sectionseg::encoders::{remote_embed, EmbeddingProviderConfig, EncoderError};
use sectionseg::hallucination::{correct_header, CorrectionMethod};
use sectionseg::llm::{
    segment_with_llm, ChatClient, ChatMessage, CompletionClientConfig, Family, HttpChatClient, LlmError,
};
use serde_json::{json, Value};
use stub_server::{Response, StubServer};

fn chat_reply(content: &str) -> Response {
    Response::json(
        200,
        json!({"choices": [{"index": 0, "message": {"role": "assistant", "content": content}}]}).to_string(),
    )
}

fn client(server: &StubServer) -> HttpChatClient {
    let mut config = CompletionClientConfig::new(server.base_url(), "stub-model");
    config.backoff_ms = 1;
    config.max_retries = 3;
    HttpChatClient::new(config).unwrap()
}

fn hello() -> Vec<ChatMessage> {
    vec![ChatMessage::user("hello")]
}

/// Serves `first` to the first `n` requests, then a normal reply.
fn flaky(n: usize, first: Response) -> StubServer {
    let calls = Arc::new(AtomicUsize::new(0));
    StubServer::start(move |_| {
        if calls.fetch_add(1, Ordering::SeqCst) < n {
            first.clone()
        } else {
            chat_reply("ok")
        }
    })
    .unwrap()
}

#[test]
fn rate_limit_then_success_counts_one_retry() {
    let server = flaky(1, Response::json(429, r#"{"error":"slow down"}"#));
    let completion = client(&server).complete(&hello(), 16).unwrap();
    assert_eq!(completion.content, "ok");
    assert_eq!(completion.retries, 1);
    assert_eq!(server.request_count(), 2);
}

#[test]
fn server_errors_and_empty_content_are_retried() {
    let server = flaky(2, Response::json(503, "{}"));
    assert_eq!(client(&server).complete(&hello(), 16).unwrap().retries, 2);

    let server = flaky(1, chat_reply("   "));
    assert_eq!(client(&server).complete(&hello(), 16).unwrap().retries, 1);
}

#[test]
fn client_errors_are_not_retried() {
    let server = StubServer::start(|_| Response::json(400, r#"{"error":"bad request"}"#)).unwrap();
    let err = client(&server).complete(&hello(), 16).unwrap_err();
    assert!(matches!(err, LlmError::HttpStatus { code: 400, .. }), "{err:?}");
    assert_eq!(server.request_count(), 1);
}

#[test]
fn retries_stop_at_the_limit() {
    let server = StubServer::start(|_| Response::json(500, "{}")).unwrap();
    let err = client(&server).complete(&hello(), 16).unwrap_err();
    assert!(matches!(err, LlmError::HttpStatus { code: 500, .. }));
    assert_eq!(server.request_count(), 4);
}

#[test]
fn request_carries_model_and_budget() {
    let server = StubServer::start(|_| chat_reply("ok")).unwrap();
    client(&server).complete(&hello(), 99).unwrap();
    let req = &server.requests()[0];
    assert_eq!(req.path, "/v1/chat/completions");
    let body: Value = serde_json::from_slice(&req.body).unwrap();
    assert_eq!(body["model"], "stub-model");
    assert_eq!(body["max_tokens"], 99);
    assert_eq!(body["messages"][0]["content"], "hello");
}

fn note(id: &str, lines: &[&str]) -> Note {
    Note {
        note_id: id.to_string(),
        category: None,
        lines: lines.iter().map(|s| s.to_string()).collect(),
    }
}

#[test]
fn one_failing_note_does_not_sink_the_batch() {
    let server = StubServer::start(|req| {
        let body = req.body_str();
        if body.contains("POISON") {
            Response::json(500, "{}")
        } else {
            chat_reply("Section Headers:\nLine 0: chief-complaint\nLine 1: labs")
        }
    })
    .unwrap();
    let notes = vec![
        note("a", &["CC: pain", "Hgb 12"]),
        note("b", &["POISON", "x"]),
        note("c", &["CC: fever", "WBC 9"]),
    ];
    let records = segment_with_llm(&client(&server), &notes, &LabelSet::onc(), Family::Qwen);
    assert_eq!(records.iter().map(|r| r.note_id.as_str()).collect::<Vec<_>>(), ["a", "b", "c"]);
    assert!(records[1].prediction.is_none());
    assert!(records[1].error.as_deref().unwrap().contains("500"));
    for r in [&records[0], &records[2]] {
        assert_eq!(r.prediction.as_ref().unwrap().labels, ["chief-complaint", "labs"]);
        assert_eq!(r.run_log_entry().raw_completion.as_deref().map(|c| c.starts_with("Section")), Some(true));
    }
}

#[test]
fn unparsable_completion_is_reprompted_once() {
    let calls = Arc::new(AtomicUsize::new(0));
    let server = StubServer::start(move |_| {
        if calls.fetch_add(1, Ordering::SeqCst) == 0 {
            chat_reply("I cannot help with that.")
        } else {
            chat_reply("Line 0: <none>")
        }
    })
    .unwrap();
    let records = segment_with_llm(&client(&server), &[note("a", &["CC: pain"])], &LabelSet::onc(), Family::Llama);
    assert!(records[0].reprompted);
    assert_eq!(server.request_count(), 2);
    assert_eq!(records[0].prediction.as_ref().unwrap().labels, ["<none>"]);

    let server = StubServer::start(|_| chat_reply("no idea")).unwrap();
    let records = segment_with_llm(&client(&server), &[note("a", &["CC: pain"])], &LabelSet::onc(), Family::Llama);
    assert!(records[0].prediction.is_none());
    assert_eq!(server.request_count(), 2);
}

#[test]
fn mapping_reply_is_validated() {
    let labels = LabelSet::onc();
    let server = StubServer::start(|_| chat_reply("social-history")).unwrap();
    assert_eq!(
        correct_header("social-hx", &labels, Some(&client(&server))),
        ("social-history".to_string(), CorrectionMethod::Llm)
    );
    let server = StubServer::start(|_| chat_reply("Sorry, none of these fit.")).unwrap();
    let (label, method) = correct_header("social-hx", &labels, Some(&client(&server)));
    assert_eq!(method, CorrectionMethod::Fallback);
    assert!(labels.contains(&label));
}

fn embedding_server(dim: usize) -> StubServer {
    StubServer::start(move |req| {
        let body: Value = serde_json::from_slice(&req.body).unwrap();
        let inputs = body["input"].as_array().unwrap();
        // answer in reverse order to exercise index handling
        let data: Vec<Value> = inputs
            .iter()
            .enumerate()
            .rev()
            .map(|(i, text)| {
                let len = text.as_str().unwrap().len() as f64;
                json!({"index": i, "embedding": vec![len; dim]})
            })
            .collect();
        Response::json(200, json!({"data": data}).to_string())
    })
    .unwrap()
}

#[test]
fn embeddings_come_back_in_input_order() {
    let server = embedding_server(3);
    let mut config = EmbeddingProviderConfig::new(server.base_url(), "embed-model", 3);
    config.batch_size = 2;
    let lines: Vec<String> = ["a", "bb", "ccc", "dddd", "eeeee"].iter().map(|s| s.to_string()).collect();
    let vectors = remote_embed(&config, &lines).unwrap();
    assert_eq!(vectors.iter().map(|v| v[0]).collect::<Vec<_>>(), [1.0, 2.0, 3.0, 4.0, 5.0]);
    assert_eq!(server.request_count(), 3);
    assert!(server.requests().iter().all(|r| r.path == "/v1/embeddings"));
}

#[test]
fn wrong_embedding_width_is_rejected() {
    let server = embedding_server(2);
    let config = EmbeddingProviderConfig::new(server.base_url(), "embed-model", 3);
    let err = remote_embed(&config, &["x".to_string()]).unwrap_err();
    assert!(matches!(err, EncoderError::DimensionMismatch { expected: 3, found: 2 }));
}

#[test]
fn embedding_batch_is_retried_once() {
    let calls = Arc::new(AtomicUsize::new(0));
    let server = StubServer::start(move |_| {
        if calls.fetch_add(1, Ordering::SeqCst) == 0 {
            Response::json(502, "{}")
        } else {
            Response::json(200, json!({"data": [{"index": 0, "embedding": [0.5]}]}).to_string())
        }
    })
    .unwrap();
    let config = EmbeddingProviderConfig::new(server.base_url(), "embed-model", 1);
    assert_eq!(remote_embed(&config, &["x".to_string()]).unwrap(), vec![vec![0.5]]);
    assert_eq!(server.request_count(), 2);
}
