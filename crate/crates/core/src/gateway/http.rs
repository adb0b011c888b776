use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde_json::{json, Value};

use super::{
    CompletionBackend, CompletionRequest, CompletionResponse, GatewayConfig, GatewayError,
};

/// Counting gate for concurrent requests.
struct InFlight {
    count: Mutex<usize>,
    freed: Condvar,
    limit: usize,
}

impl InFlight {
    fn acquire(&self) -> InFlightGuard<'_> {
        let mut n = self.count.lock().unwrap_or_else(|p| p.into_inner());
        while *n >= self.limit {
            n = self.freed.wait(n).unwrap_or_else(|p| p.into_inner());
        }
        *n += 1;
        InFlightGuard(self)
    }
}

struct InFlightGuard<'a>(&'a InFlight);

impl Drop for InFlightGuard<'_> {
    fn drop(&mut self) {
        let mut n = self.0.count.lock().unwrap_or_else(|p| p.into_inner());
        *n -= 1;
        self.0.freed.notify_one();
    }
}

/// OpenAI-compatible chat-completions client.
pub struct HttpBackend {
    config: GatewayConfig,
    credential: String,
    client: reqwest::blocking::Client,
    gate: InFlight,
}

enum Attempt {
    Done(CompletionResponse),
    Retry(String),
    Fail(GatewayError),
}

impl HttpBackend {
    pub fn new(config: GatewayConfig) -> Result<Self, GatewayError> {
        let credential = std::env::var(&config.credential_env).map_err(|_| {
            GatewayError::Config(format!(
                "environment variable {} is not set",
                config.credential_env
            ))
        })?;
        Self::with_credential(config, credential)
    }

    pub fn with_credential(
        config: GatewayConfig,
        credential: String,
    ) -> Result<Self, GatewayError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.request_timeout_secs.max(1)))
            .build()
            .map_err(|e| GatewayError::Config(e.to_string()))?;
        let gate = InFlight {
            count: Mutex::new(0),
            freed: Condvar::new(),
            limit: config.in_flight.max(1),
        };
        Ok(Self {
            config,
            credential,
            client,
            gate,
        })
    }

    fn url(&self) -> String {
        format!(
            "{}/chat/completions",
            self.config.endpoint.trim_end_matches('/')
        )
    }

    fn body(&self, req: &CompletionRequest) -> Value {
        let mut body = json!({
            "model": req.model,
            "messages": [{ "role": "user", "content": req.prompt }],
        });
        if let Some(t) = req.decoding.temperature {
            body["temperature"] = json!(t);
        }
        if let Some(m) = req.decoding.max_tokens {
            body["max_tokens"] = json!(m);
        }
        if let Some(s) = req.decoding.seed {
            body["seed"] = json!(s);
        }
        body
    }

    fn attempt(&self, req: &CompletionRequest) -> Attempt {
        let started = Instant::now();
        let sent = self
            .client
            .post(self.url())
            .bearer_auth(&self.credential)
            .json(&self.body(req))
            .send();
        let resp = match sent {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(e.to_string()),
        };
        let status = resp.status();
        if status.as_u16() == 401 || status.as_u16() == 403 {
            let text = resp.text().unwrap_or_default();
            return Attempt::Fail(GatewayError::Auth(format!("{status}: {}", snippet(&text))));
        }
        if status.as_u16() == 429 {
            let retry_after_secs = resp
                .headers()
                .get(reqwest::header::RETRY_AFTER)
                .and_then(|v| v.to_str().ok())
                .and_then(|v| v.trim().parse::<u64>().ok());
            return Attempt::Fail(GatewayError::RateLimited { retry_after_secs });
        }
        if status.is_server_error() {
            return Attempt::Retry(format!("server returned {status}"));
        }
        let text = match resp.text() {
            Ok(t) => t,
            Err(e) => return Attempt::Retry(e.to_string()),
        };
        if !status.is_success() {
            return Attempt::Fail(GatewayError::Transport {
                attempts: 1,
                message: format!("{status}: {}", snippet(&text)),
            });
        }
        let doc: Value = match serde_json::from_str(&text) {
            Ok(v) => v,
            Err(e) => return Attempt::Retry(format!("undecodable response body: {e}")),
        };
        let content = doc["choices"][0]["message"]["content"]
            .as_str()
            .unwrap_or_default()
            .to_string();
        if content.trim().is_empty() {
            return Attempt::Fail(GatewayError::EmptyResponse);
        }
        Attempt::Done(CompletionResponse {
            text: content,
            latency_ms: started.elapsed().as_millis() as u64,
            prompt_tokens: doc["usage"]["prompt_tokens"].as_u64(),
            completion_tokens: doc["usage"]["completion_tokens"].as_u64(),
            backend: format!("live:{}", self.config.model),
        })
    }
}

fn snippet(s: &str) -> &str {
    let end = s.char_indices().nth(200).map(|(i, _)| i).unwrap_or(s.len());
    &s[..end]
}

impl CompletionBackend for HttpBackend {
    fn id(&self) -> String {
        format!("live:{}@{}", self.config.model, self.config.endpoint)
    }

    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, GatewayError> {
        let _slot = self.gate.acquire();
        let policy = &self.config.retry;
        let mut last = String::new();
        for attempt in 0..=policy.max_retries {
            if attempt > 0 {
                std::thread::sleep(policy.delay(attempt - 1));
            }
            match self.attempt(req) {
                Attempt::Done(r) => return Ok(r),
                Attempt::Fail(e) => return Err(e),
                Attempt::Retry(msg) => {
                    log::warn!("{}: attempt {} failed: {msg}", req.stage, attempt + 1);
                    last = msg;
                }
            }
        }
        Err(GatewayError::Transport {
            attempts: policy.max_retries + 1,
            message: last,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{DecodingSettings, RetryPolicy};
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    /// Serves the canned raw HTTP responses in order, one per connection.
    fn serve(responses: Vec<String>) -> (String, Arc<AtomicUsize>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let hits = Arc::new(AtomicUsize::new(0));
        let counter = hits.clone();
        std::thread::spawn(move || {
            for raw in responses {
                let Ok((stream, _)) = listener.accept() else {
                    return;
                };
                counter.fetch_add(1, Ordering::SeqCst);
                let mut reader = BufReader::new(stream);
                let mut len = 0usize;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                    let lower = line.to_ascii_lowercase();
                    if let Some(v) = lower.strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                }
                let mut body = vec![0; len];
                reader.read_exact(&mut body).unwrap();
                let mut stream = reader.into_inner();
                stream.write_all(raw.as_bytes()).unwrap();
            }
        });
        (format!("http://{addr}/v1"), hits)
    }

    fn reply(status: &str, extra: &str, body: &str) -> String {
        format!(
            "HTTP/1.1 {status}\r\ncontent-type: application/json\r\n{extra}content-length: {}\r\nconnection: close\r\n\r\n{body}",
            body.len()
        )
    }

    fn backend(endpoint: String) -> HttpBackend {
        let config = GatewayConfig {
            endpoint,
            retry: RetryPolicy {
                max_retries: 2,
                base_delay_ms: 1,
            },
            request_timeout_secs: 5,
            ..Default::default()
        };
        HttpBackend::with_credential(config, "test-key".into()).unwrap()
    }

    fn request() -> CompletionRequest {
        CompletionRequest {
            stage: "parameter".into(),
            prompt: "hi".into(),
            model: "m".into(),
            decoding: DecodingSettings::default(),
            digest: "d".into(),
            ordinal: 0,
        }
    }

    const OK: &str = r#"{"choices":[{"message":{"content":"hello"}}],"usage":{"prompt_tokens":3,"completion_tokens":1}}"#;

    #[test]
    fn parses_a_successful_completion() {
        let (url, _) = serve(vec![reply("200 OK", "", OK)]);
        let r = backend(url).complete(&request()).unwrap();
        assert_eq!(r.text, "hello");
        assert_eq!((r.prompt_tokens, r.completion_tokens), (Some(3), Some(1)));
    }

    #[test]
    fn server_errors_are_retried() {
        let (url, hits) = serve(vec![
            reply("503 Service Unavailable", "", "{}"),
            reply("500 Internal Server Error", "", "{}"),
            reply("200 OK", "", OK),
        ]);
        let r = backend(url).complete(&request()).unwrap();
        assert_eq!(r.text, "hello");
        assert_eq!(hits.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn retries_give_up_with_transport_error() {
        let (url, hits) = serve(vec![reply("502 Bad Gateway", "", "{}"); 3]);
        let err = backend(url).complete(&request()).unwrap_err();
        assert!(matches!(err, GatewayError::Transport { attempts: 3, .. }));
        assert_eq!(hits.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn auth_failure_is_not_retried() {
        let (url, hits) = serve(vec![
            reply("401 Unauthorized", "", r#"{"error":"bad key"}"#),
            reply("200 OK", "", OK),
        ]);
        let err = backend(url).complete(&request()).unwrap_err();
        assert!(matches!(err, GatewayError::Auth(_)));
        assert_eq!(hits.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn rate_limit_carries_retry_after() {
        let (url, _) = serve(vec![reply(
            "429 Too Many Requests",
            "retry-after: 17\r\n",
            "{}",
        )]);
        let err = backend(url).complete(&request()).unwrap_err();
        assert_eq!(
            err,
            GatewayError::RateLimited {
                retry_after_secs: Some(17)
            }
        );
    }

    #[test]
    fn missing_credential_is_a_config_error() {
        let config = GatewayConfig {
            credential_env: "NL2RL_TEST_SURELY_UNSET_VAR".into(),
            ..Default::default()
        };
        assert!(matches!(
            HttpBackend::new(config),
            Err(GatewayError::Config(_))
        ));
    }
}
