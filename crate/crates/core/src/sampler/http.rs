//! Candidate generation from an external model server.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::SampleError;

pub const DEFAULT_PROMPT: &str = "Write a gcad program (plane, rect, circle, poly, extrude, \
translate, union, cut, intersect; one statement per line) that builds the part shown in the image.";
pub const DEFAULT_WINDOW: usize = 8;
pub const MAX_ATTEMPTS: u32 = 3;

#[derive(Debug, Serialize)]
pub struct GenerateRequest<'a> {
    pub image_ref: &'a str,
    pub prompt: &'a str,
    pub temperature: f64,
    pub top_p: f64,
    pub n: usize,
    pub seed: u64,
}

#[derive(Debug, Deserialize)]
struct GenerateResponse {
    candidates: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct HttpSampler {
    /// Base URL; requests go to `{endpoint}/generate`.
    pub endpoint: String,
    pub prompt: String,
    pub timeout: Duration,
    pub backoff: Duration,
    /// Maximum requests in flight.
    pub window: usize,
}

impl HttpSampler {
    pub fn new(endpoint: &str) -> Self {
        HttpSampler {
            endpoint: endpoint.trim_end_matches('/').to_string(),
            prompt: DEFAULT_PROMPT.to_string(),
            timeout: Duration::from_secs(60),
            backoff: Duration::from_millis(200),
            window: DEFAULT_WINDOW,
        }
    }

    /// One POST with retries on transport failures and 5xx responses.
    /// Returns exactly `n` texts; missing ones are empty strings.
    pub fn generate(&self, req: &GenerateRequest<'_>) -> Result<Vec<String>, SampleError> {
        let url = format!("{}/generate", self.endpoint);
        let agent = ureq::AgentBuilder::new().timeout(self.timeout).build();
        let mut last = String::new();
        for attempt in 0..MAX_ATTEMPTS {
            if attempt > 0 {
                std::thread::sleep(self.backoff * 2u32.pow(attempt - 1));
            }
            match agent.post(&url).send_json(req) {
                Ok(resp) => {
                    let body: GenerateResponse = resp
                        .into_json()
                        .map_err(|e| SampleError::MalformedResponse(e.to_string()))?;
                    let mut texts = body.candidates;
                    if texts.len() > req.n {
                        log::warn!("{url}: {} candidates for n={}, truncating", texts.len(), req.n);
                        texts.truncate(req.n);
                    }
                    if texts.len() < req.n {
                        log::warn!("{url}: {} of {} candidates returned", texts.len(), req.n);
                        texts.resize(req.n, String::new());
                    }
                    return Ok(texts);
                }
                Err(ureq::Error::Status(code, _)) if code >= 500 => {
                    last = format!("HTTP {code}");
                }
                Err(ureq::Error::Status(code, _)) => {
                    return Err(SampleError::Transport {
                        attempts: attempt + 1,
                        message: format!("HTTP {code}"),
                    });
                }
                Err(ureq::Error::Transport(t)) => last = t.to_string(),
            }
            log::warn!("{url}: attempt {} failed: {last}", attempt + 1);
        }
        Err(SampleError::Transport {
            attempts: MAX_ATTEMPTS,
            message: last,
        })
    }

    /// Runs all requests with at most `window` in flight; results keep input order.
    pub fn generate_all(&self, reqs: &[GenerateRequest<'_>]) -> Vec<Result<Vec<String>, SampleError>> {
        let next = AtomicUsize::new(0);
        let slots: Vec<Mutex<Option<_>>> =
            reqs.iter().map(|_| Mutex::new(None)).collect();
        std::thread::scope(|scope| {
            for _ in 0..self.window.max(1).min(reqs.len()) {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= reqs.len() {
                        break;
                    }
                    let r = self.generate(&reqs[i]);
                    *slots[i].lock().expect("slot lock") = Some(r);
                });
            }
        });
        slots
            .into_iter()
            .map(|m| m.into_inner().expect("slot lock").expect("every request ran"))
            .collect()
    }
}
