//! Shared helpers for integration tests: synthetic corpora with learnable
//! n-gram structure, and a scripted HTTP stub for the remote scorer.

#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener};
use std::thread::JoinHandle;

use rand::Rng;

use fitb_core::corpus::Document;
use fitb_core::rng::derive_rng;

pub const SYNTH_VOCAB: usize = 60;

fn successors(state: usize) -> [usize; 3] {
    [
        (3 * state + 1) % SYNTH_VOCAB,
        (5 * state + 2) % SYNTH_VOCAB,
        (7 * state + 3) % SYNTH_VOCAB,
    ]
}

/// Deterministic Markov-chain document: each word has three possible
/// successors, sentences run 6..=12 words and end with a '.'-suffixed
/// token. Good training signal for a trigram model.
pub fn markov_document(id: &str, n_words: usize, seed: u64) -> Document {
    let mut rng = derive_rng(seed, &[id, "synth"]);
    let mut state = rng.gen_range(0..SYNTH_VOCAB);
    let mut words = Vec::with_capacity(n_words);
    let mut sentence_bounds = Vec::new();
    let mut start = 0;
    let mut remaining = rng.gen_range(6..=12usize);
    for j in 0..n_words {
        remaining -= 1;
        let terminal = remaining == 0 || j == n_words - 1;
        if terminal {
            words.push(format!("tok{state:03}."));
            sentence_bounds.push((start, j + 1));
            start = j + 1;
            remaining = rng.gen_range(6..=12);
        } else {
            words.push(format!("tok{state:03}"));
        }
        let next = successors(state);
        state = next[rng.gen_range(0..3)];
    }
    Document {
        id: id.to_owned(),
        words,
        sentence_bounds,
    }
}

pub fn markov_corpus(
    tag: &str,
    n_docs: usize,
    min_words: usize,
    max_words: usize,
    seed: u64,
) -> Vec<Document> {
    (0..n_docs)
        .map(|i| {
            let id = format!("{tag}-{i:06}");
            let n = {
                let mut rng = derive_rng(seed, &[&id, "synth-len"]);
                rng.gen_range(min_words..=max_words)
            };
            markov_document(&id, n, seed)
        })
        .collect()
}

/// The same corpus rendered as `{"id", "text"}` JSONL lines.
pub fn markov_jsonl(
    tag: &str,
    n_docs: usize,
    min_words: usize,
    max_words: usize,
    seed: u64,
) -> Vec<String> {
    markov_corpus(tag, n_docs, min_words, max_words, seed)
        .into_iter()
        .map(|doc| serde_json::json!({"id": doc.id, "text": doc.words.join(" ")}).to_string())
        .collect()
}

/// Five-sentence stories with 6..=12 words per sentence.
pub fn story_corpus(n_stories: usize, seed: u64) -> Vec<Document> {
    (0..n_stories)
        .map(|i| {
            let id = format!("story-{i:05}");
            let mut rng = derive_rng(seed, &[&id, "story"]);
            let mut words = Vec::new();
            let mut sentence_bounds = Vec::new();
            for _ in 0..5 {
                let start = words.len();
                let len = rng.gen_range(6..=12usize);
                let mut state = rng.gen_range(0..SYNTH_VOCAB);
                for k in 0..len {
                    if k == len - 1 {
                        words.push(format!("tok{state:03}."));
                    } else {
                        words.push(format!("tok{state:03}"));
                    }
                    let next = successors(state);
                    state = next[rng.gen_range(0..3)];
                }
                sentence_bounds.push((start, words.len()));
            }
            Document {
                id,
                words,
                sentence_bounds,
            }
        })
        .collect()
}

/// Scripted responses for the stub scoring server, one per request.
pub enum StubScript {
    /// Parse the request and answer nll = `per_token` * token count for
    /// each text, token count being whitespace words + 1.
    PerTokenNll(f64),
    /// A fixed status and body.
    Static(u16, &'static str),
}

fn handle_request(stream: &mut std::net::TcpStream, script: &StubScript) {
    let mut reader = BufReader::new(stream.try_clone().expect("clone stream"));
    let mut content_length = 0usize;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).unwrap_or(0) == 0 {
            return;
        }
        let trimmed = line.trim();
        if trimmed.is_empty() {
            break;
        }
        if let Some(value) = trimmed
            .to_ascii_lowercase()
            .strip_prefix("content-length:")
            .map(str::trim)
            .and_then(|v| v.parse::<usize>().ok())
        {
            content_length = value;
        }
    }
    let mut body = vec![0u8; content_length];
    reader.read_exact(&mut body).expect("request body");

    let (status, reason, response_body) = match script {
        StubScript::Static(status, body) => {
            let reason = if *status < 300 { "OK" } else { "ERROR" };
            (*status, reason, (*body).to_owned())
        }
        StubScript::PerTokenNll(per_token) => {
            let request: serde_json::Value = serde_json::from_slice(&body).expect("json body");
            let texts = request["texts"].as_array().expect("texts array");
            let counts: Vec<usize> = texts
                .iter()
                .map(|t| t.as_str().expect("text").split_whitespace().count() + 1)
                .collect();
            let nll: Vec<f64> = counts.iter().map(|&c| per_token * c as f64).collect();
            (
                200,
                "OK",
                serde_json::json!({"nll": nll, "token_counts": counts}).to_string(),
            )
        }
    };
    let response = format!(
        "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{response_body}",
        response_body.len()
    );
    stream
        .write_all(response.as_bytes())
        .expect("write response");
    stream.flush().ok();
}

/// Serve the scripts in order, one connection per request, then exit.
pub fn spawn_stub_scorer(scripts: Vec<StubScript>) -> (SocketAddr, JoinHandle<()>) {
    let listener = TcpListener::bind("127.0.0.1:0").expect("bind stub server");
    let addr = listener.local_addr().expect("local addr");
    let handle = std::thread::spawn(move || {
        for script in scripts {
            let (mut stream, _) = listener.accept().expect("accept");
            handle_request(&mut stream, &script);
        }
    });
    (addr, handle)
}
