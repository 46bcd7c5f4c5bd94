//! HTTP client for an external scoring service, so a real neural scorer can
//! replace the n-gram stand-in.
//!
//! Protocol: `POST {"texts": [...]}` to the endpoint; the service answers
//! `{"nll": [...], "token_counts": [...]}` with both arrays aligned to the
//! input order. `nll[i]` is the total negative log-likelihood of text `i`
//! in nats. Since the service reports per-text totals, the returned
//! [`ScoreResult`]s carry a uniform per-token split.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{Scorer, ScorerError};
use crate::ngram::ScoreResult;

#[derive(Serialize)]
struct ScoreRequest<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct ScoreResponse {
    nll: Vec<f64>,
    token_counts: Vec<usize>,
}

/// Batching, retrying client for a remote scoring endpoint.
pub struct RemoteScorer {
    endpoint: String,
    batch_size: usize,
    max_retries: u32,
    backoff: Duration,
    agent: ureq::Agent,
}

impl RemoteScorer {
    pub fn new(endpoint: impl Into<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(60)))
            .build()
            .new_agent();
        RemoteScorer {
            endpoint: endpoint.into(),
            batch_size: 64,
            max_retries: 3,
            backoff: Duration::from_millis(50),
            agent,
        }
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Self {
        self.batch_size = batch_size.max(1);
        self
    }

    pub fn with_max_retries(mut self, max_retries: u32) -> Self {
        self.max_retries = max_retries;
        self
    }

    /// Exponential backoff base; tests shrink it.
    pub fn with_backoff(mut self, backoff: Duration) -> Self {
        self.backoff = backoff;
        self
    }

    fn send_batch(&self, texts: &[String]) -> Result<Vec<ScoreResult>, ScorerError> {
        let mut attempt = 0;
        loop {
            let outcome = self
                .agent
                .post(&self.endpoint)
                .send_json(ScoreRequest { texts });
            let retryable: String = match outcome {
                Ok(mut response) => {
                    let status = response.status().as_u16();
                    if (200..300).contains(&status) {
                        let body: ScoreResponse = response.body_mut().read_json().map_err(|e| {
                            ScorerError::Protocol(format!("bad response body: {e}"))
                        })?;
                        return validate(texts.len(), body);
                    }
                    let message = response
                        .body_mut()
                        .read_to_string()
                        .unwrap_or_default()
                        .chars()
                        .take(200)
                        .collect::<String>();
                    if (500..600).contains(&status) {
                        format!("status {status}: {message}")
                    } else {
                        return Err(ScorerError::Remote { status, message });
                    }
                }
                Err(err) => format!("{err}"),
            };
            if attempt >= self.max_retries {
                return Err(ScorerError::Transport(format!(
                    "giving up after {attempt} retries: {retryable}"
                )));
            }
            std::thread::sleep(self.backoff * 2u32.pow(attempt));
            attempt += 1;
        }
    }
}

fn validate(expected: usize, body: ScoreResponse) -> Result<Vec<ScoreResult>, ScorerError> {
    if body.nll.len() != expected || body.token_counts.len() != expected {
        return Err(ScorerError::Protocol(format!(
            "expected {expected} scores, got nll={} token_counts={}",
            body.nll.len(),
            body.token_counts.len()
        )));
    }
    body.nll
        .into_iter()
        .zip(body.token_counts)
        .map(|(nll, count)| {
            if count == 0 {
                return Err(ScorerError::Protocol("zero token count".into()));
            }
            if !nll.is_finite() {
                return Err(ScorerError::Protocol(format!("non-finite nll {nll}")));
            }
            Ok(ScoreResult::from_total(nll, count))
        })
        .collect()
}

impl Scorer for RemoteScorer {
    fn score_batch(&self, texts: &[String]) -> Result<Vec<ScoreResult>, ScorerError> {
        let mut results = Vec::with_capacity(texts.len());
        for batch in texts.chunks(self.batch_size) {
            results.extend(self.send_batch(batch)?);
        }
        Ok(results)
    }
}
