use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use giftforge::sampler::http::{GenerateRequest, HttpSampler};
use giftforge::sampler::SampleError;
use tiny_http::{Response, Server};

/// Serves `reply(n)` -> (status, body) for each request; returns the base URL
/// and a request counter.
fn serve(reply: fn(usize) -> (u16, String)) -> (String, Arc<AtomicUsize>) {
    let server = Server::http("127.0.0.1:0").unwrap();
    let url = format!("http://{}", server.server_addr().to_ip().unwrap());
    let hits = Arc::new(AtomicUsize::new(0));
    let counter = Arc::clone(&hits);
    std::thread::spawn(move || {
        for mut req in server.incoming_requests() {
            let mut body = String::new();
            req.as_reader().read_to_string(&mut body).unwrap();
            let v: serde_json::Value = serde_json::from_str(&body).unwrap();
            counter.fetch_add(1, Ordering::SeqCst);
            let (status, text) = reply(v["n"].as_u64().unwrap() as usize);
            let _ = req.respond(Response::from_string(text).with_status_code(status));
        }
    });
    (url, hits)
}

fn texts(k: usize) -> String {
    let c: Vec<String> = (0..k).map(|i| format!("rect {} 1\nextrude 1", i + 1)).collect();
    serde_json::json!({ "candidates": c }).to_string()
}

fn sampler(url: &str) -> HttpSampler {
    HttpSampler {
        backoff: Duration::from_millis(5),
        timeout: Duration::from_secs(5),
        ..HttpSampler::new(url)
    }
}

fn req(n: usize) -> GenerateRequest<'static> {
    GenerateRequest {
        image_ref: "img/a.png",
        prompt: "p",
        temperature: 0.4,
        top_p: 0.9,
        n,
        seed: 7,
    }
}

#[test]
fn full_response_keeps_order() {
    let (url, hits) = serve(|n| (200, texts(n)));
    let out = sampler(&url).generate(&req(5)).unwrap();
    assert_eq!(out.len(), 5);
    assert_eq!(out[2], "rect 3 1\nextrude 1");
    assert_eq!(hits.load(Ordering::SeqCst), 1);
}

#[test]
fn short_response_padded_with_failures() {
    let (url, _) = serve(|n| (200, texts(n - 2)));
    let out = sampler(&url).generate(&req(6)).unwrap();
    assert_eq!(out.len(), 6);
    assert_eq!(&out[4..], ["", ""]);
    assert!(out[..4].iter().all(|t| !t.is_empty()));
}

#[test]
fn long_response_truncated() {
    let (url, _) = serve(|n| (200, texts(n + 3)));
    assert_eq!(sampler(&url).generate(&req(4)).unwrap().len(), 4);
}

#[test]
fn server_errors_retry_then_fail() {
    let (url, hits) = serve(|_| (503, "busy".into()));
    let err = sampler(&url).generate(&req(2)).unwrap_err();
    assert!(matches!(err, SampleError::Transport { attempts: 3, .. }), "{err}");
    assert_eq!(hits.load(Ordering::SeqCst), 3);
}

#[test]
fn client_errors_do_not_retry() {
    let (url, hits) = serve(|_| (400, "bad".into()));
    let err = sampler(&url).generate(&req(2)).unwrap_err();
    assert!(matches!(err, SampleError::Transport { attempts: 1, .. }), "{err}");
    assert_eq!(hits.load(Ordering::SeqCst), 1);
}

#[test]
fn windowed_batch_preserves_request_order() {
    let (url, _) = serve(|n| (200, texts(n)));
    let reqs: Vec<_> = (1..=12).map(req).collect();
    let s = HttpSampler {
        window: 3,
        ..sampler(&url)
    };
    let out = s.generate_all(&reqs);
    for (i, r) in out.iter().enumerate() {
        assert_eq!(r.as_ref().unwrap().len(), i + 1);
    }
}
