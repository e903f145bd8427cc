//! HTTP client for completions-style APIs.
//!
//! Speaks the de facto completion interface: POST a JSON body of
//! `{model, prompt, max_tokens, temperature, stop, seed}` and read
//! `choices[0].text` from the response. Transient failures (transport
//! errors and retryable statuses) are retried with exponential backoff;
//! every error carries the prompt hash so an interrupted run can resume.

use std::time::{Duration, Instant};

use serde::Serialize;

use crate::backend::{
    effective_text, prompt_hash, Backend, BackendError, Completion, GenerationParams,
};
use crate::promptkit::RenderedPrompt;

/// Environment variables the CLI reads to reach a live endpoint.
pub const ENV_URL: &str = "MCQA_BACKEND_URL";
pub const ENV_TOKEN: &str = "MCQA_BACKEND_TOKEN";
pub const ENV_MODEL: &str = "MCQA_BACKEND_MODEL";

#[derive(Debug, Clone)]
pub struct HttpBackendConfig {
    /// Full completions endpoint URL.
    pub url: String,
    /// Model name sent in the request body.
    pub model: String,
    /// Bearer token; sent as `Authorization: Bearer …` when present.
    pub token: Option<String>,
    /// Retries after the first attempt.
    pub max_retries: u32,
    /// First backoff sleep; doubles per retry.
    pub initial_backoff_ms: u64,
    /// Per-request timeout.
    pub timeout_ms: u64,
}

impl HttpBackendConfig {
    pub fn new(url: &str, model: &str, token: Option<String>) -> Self {
        HttpBackendConfig {
            url: url.to_string(),
            model: model.to_string(),
            token,
            max_retries: 3,
            initial_backoff_ms: 250,
            timeout_ms: 120_000,
        }
    }

    /// Read endpoint, token, and model from `MCQA_BACKEND_*` variables.
    pub fn from_env() -> Result<Self, BackendError> {
        let url = std::env::var(ENV_URL).map_err(|_| BackendError::Config {
            message: format!("{ENV_URL} is not set"),
        })?;
        let model = std::env::var(ENV_MODEL).unwrap_or_else(|_| "default".to_string());
        let token = std::env::var(ENV_TOKEN).ok();
        Ok(HttpBackendConfig::new(&url, &model, token))
    }
}

#[derive(Serialize)]
struct CompletionRequest<'a> {
    model: &'a str,
    prompt: &'a str,
    max_tokens: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    temperature: Option<f64>,
    stop: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

/// Pull `choices[0].text` out of a completions response body.
pub fn parse_completion_text(body: &[u8]) -> Result<String, String> {
    let value: serde_json::Value =
        serde_json::from_slice(body).map_err(|e| format!("not JSON: {e}"))?;
    let text = value
        .get("choices")
        .and_then(|c| c.get(0))
        .and_then(|first| first.get("text"))
        .ok_or("missing choices[0].text")?;
    text.as_str()
        .map(String::from)
        .ok_or_else(|| "choices[0].text is not a string".to_string())
}

pub struct HttpBackend {
    config: HttpBackendConfig,
    id: String,
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    pub fn new(config: HttpBackendConfig) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| BackendError::Config {
                message: format!("cannot build HTTP client: {e}"),
            })?;
        Ok(HttpBackend {
            id: format!("http:{}", config.model),
            config,
            client,
        })
    }

    pub fn from_env() -> Result<Self, BackendError> {
        HttpBackend::new(HttpBackendConfig::from_env()?)
    }

    fn retryable_status(status: u16) -> bool {
        status == 429 || (500..600).contains(&status)
    }
}

impl Backend for HttpBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(
        &self,
        prompt: &RenderedPrompt,
        params: &GenerationParams,
    ) -> Result<Completion, BackendError> {
        params.validate()?;
        let hash = prompt_hash(&prompt.text);
        let body = CompletionRequest {
            model: &self.config.model,
            prompt: &prompt.text,
            max_tokens: params.max_new_tokens,
            temperature: params.temperature,
            stop: &params.stop,
            seed: params.seed,
        };
        let start = Instant::now();
        let attempts = self.config.max_retries + 1;
        let mut last_error: Option<BackendError> = None;
        for attempt in 0..attempts {
            if attempt > 0 {
                let backoff = self.config.initial_backoff_ms << (attempt - 1);
                if let Some(error) = &last_error {
                    log::warn!("retrying in {backoff} ms after: {error}");
                }
                std::thread::sleep(Duration::from_millis(backoff));
            }
            let mut request = self.client.post(&self.config.url).json(&body);
            if let Some(token) = &self.config.token {
                request = request.bearer_auth(token);
            }
            let response = match request.send() {
                Ok(response) => response,
                Err(e) => {
                    last_error = Some(BackendError::Transport {
                        prompt_hash: hash.clone(),
                        attempts: attempt + 1,
                        message: e.to_string(),
                    });
                    continue;
                }
            };
            let status = response.status().as_u16();
            if !(200..300).contains(&status) {
                last_error = Some(BackendError::HttpStatus {
                    prompt_hash: hash.clone(),
                    status,
                    attempts: attempt + 1,
                });
                if Self::retryable_status(status) {
                    continue;
                }
                break;
            }
            let bytes = match response.bytes() {
                Ok(bytes) => bytes,
                Err(e) => {
                    last_error = Some(BackendError::Transport {
                        prompt_hash: hash.clone(),
                        attempts: attempt + 1,
                        message: format!("reading body: {e}"),
                    });
                    continue;
                }
            };
            // A malformed body is not retryable: the server answered, the
            // shape is just wrong.
            let raw = parse_completion_text(&bytes).map_err(|message| {
                BackendError::SchemaMismatch {
                    prompt_hash: hash.clone(),
                    message,
                }
            })?;
            return Ok(Completion {
                text: effective_text(&raw, &params.stop),
                raw_text: raw,
                prompt_hash: hash,
                backend_id: self.id.clone(),
                latency_ms: start.elapsed().as_millis() as u64,
                from_cache: false,
            });
        }
        Err(last_error.expect("loop ran at least once"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::promptkit::PromptKind;
    use std::io::{Read, Write};
    use std::net::TcpListener;

    #[test]
    fn parses_standard_completion_body() {
        let body = br#"{"id":"x","choices":[{"text":" (B)","index":0}],"usage":{}}"#;
        assert_eq!(parse_completion_text(body).unwrap(), " (B)");
    }

    #[test]
    fn rejects_malformed_bodies() {
        assert!(parse_completion_text(b"not json").is_err());
        assert!(parse_completion_text(b"{}").is_err());
        assert!(parse_completion_text(br#"{"choices":[]}"#).is_err());
        assert!(parse_completion_text(br#"{"choices":[{"text":42}]}"#).is_err());
        assert!(parse_completion_text(br#"{"choices":[{"message":"chat"}]}"#).is_err());
    }

    #[test]
    fn from_env_requires_url() {
        // The variable is cleared for this process only; tests that set it
        // would race, so none do.
        std::env::remove_var(ENV_URL);
        assert!(matches!(
            HttpBackendConfig::from_env(),
            Err(BackendError::Config { .. })
        ));
    }

    fn rendered(text: &str) -> RenderedPrompt {
        RenderedPrompt {
            kind: PromptKind::Full,
            text: text.to_string(),
            stop_sequence: "\nQuestion:".to_string(),
            item_id: "i".to_string(),
            exemplar_ids: vec![],
            aux: None,
        }
    }

    /// Minimal scripted HTTP/1.1 server: serves the given (status, body)
    /// responses in order, one connection each, and returns the raw request
    /// text it saw for each.
    fn serve_script(
        responses: Vec<(u16, String)>,
    ) -> (String, std::thread::JoinHandle<Vec<String>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let handle = std::thread::spawn(move || {
            let mut requests = Vec::new();
            for (status, body) in responses {
                let (mut stream, _) = listener.accept().unwrap();
                let mut buf = Vec::new();
                let mut chunk = [0u8; 4096];
                let header_end = loop {
                    let n = stream.read(&mut chunk).unwrap();
                    buf.extend_from_slice(&chunk[..n]);
                    if let Some(pos) = buf.windows(4).position(|w| w == b"\r\n\r\n") {
                        break pos + 4;
                    }
                    if n == 0 {
                        break buf.len();
                    }
                };
                let header_text = String::from_utf8_lossy(&buf[..header_end]).to_string();
                let content_length: usize = header_text
                    .lines()
                    .find_map(|l| {
                        let (name, value) = l.split_once(':')?;
                        name.eq_ignore_ascii_case("content-length")
                            .then(|| value.trim().parse().ok())?
                    })
                    .unwrap_or(0);
                while buf.len() < header_end + content_length {
                    let n = stream.read(&mut chunk).unwrap();
                    if n == 0 {
                        break;
                    }
                    buf.extend_from_slice(&chunk[..n]);
                }
                requests.push(String::from_utf8_lossy(&buf).to_string());
                let response = format!(
                    "HTTP/1.1 {status} Scripted\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                    body.len(),
                );
                stream.write_all(response.as_bytes()).unwrap();
            }
            requests
        });
        (format!("http://{addr}/v1/completions"), handle)
    }

    fn fast_config(url: &str) -> HttpBackendConfig {
        let mut config = HttpBackendConfig::new(url, "test-model", Some("sekrit".into()));
        config.max_retries = 2;
        config.initial_backoff_ms = 1;
        config.timeout_ms = 5_000;
        config
    }

    #[test]
    fn sends_completion_request_and_trims_stop() {
        let (url, server) = serve_script(vec![(
            200,
            r#"{"choices":[{"text":" (C)\nQuestion: next"}]}"#.to_string(),
        )]);
        let backend = HttpBackend::new(fast_config(&url)).unwrap();
        let prompt = rendered("Question: Q?\nAnswer:");
        let params = GenerationParams {
            seed: Some(11),
            temperature: Some(0.0),
            ..GenerationParams::with_stop("\nQuestion:")
        };
        let completion = backend.complete(&prompt, &params).unwrap();
        assert_eq!(completion.text, " (C)");
        assert_eq!(completion.raw_text, " (C)\nQuestion: next");
        assert_eq!(completion.backend_id, "http:test-model");

        let requests = server.join().unwrap();
        assert_eq!(requests.len(), 1);
        let request = &requests[0];
        assert!(request.starts_with("POST /v1/completions"));
        assert!(request.contains("authorization: Bearer sekrit")
            || request.contains("Authorization: Bearer sekrit"));
        let body_start = request.find("\r\n\r\n").unwrap() + 4;
        let body: serde_json::Value = serde_json::from_str(&request[body_start..]).unwrap();
        assert_eq!(body["model"], "test-model");
        assert_eq!(body["prompt"], "Question: Q?\nAnswer:");
        assert_eq!(body["max_tokens"], 200);
        assert_eq!(body["temperature"], 0.0);
        assert_eq!(body["stop"], "\nQuestion:");
        assert_eq!(body["seed"], 11);
    }

    #[test]
    fn retries_server_errors_with_backoff() {
        let (url, server) = serve_script(vec![
            (500, r#"{"error":"overloaded"}"#.to_string()),
            (503, r#"{"error":"still overloaded"}"#.to_string()),
            (200, r#"{"choices":[{"text":" (A)"}]}"#.to_string()),
        ]);
        let backend = HttpBackend::new(fast_config(&url)).unwrap();
        let completion = backend
            .complete(&rendered("p"), &GenerationParams::with_stop("\nQuestion:"))
            .unwrap();
        assert_eq!(completion.text, " (A)");
        assert_eq!(server.join().unwrap().len(), 3);
    }

    #[test]
    fn exhausted_retries_surface_status_and_attempts() {
        let (url, server) = serve_script(vec![
            (500, "{}".to_string()),
            (500, "{}".to_string()),
            (500, "{}".to_string()),
        ]);
        let backend = HttpBackend::new(fast_config(&url)).unwrap();
        let err = backend
            .complete(&rendered("p"), &GenerationParams::default())
            .unwrap_err();
        match err {
            BackendError::HttpStatus {
                status,
                attempts,
                prompt_hash: hash,
            } => {
                assert_eq!(status, 500);
                assert_eq!(attempts, 3);
                assert_eq!(hash, prompt_hash("p"));
            }
            other => panic!("unexpected error {other:?}"),
        }
        server.join().unwrap();
    }

    #[test]
    fn client_errors_fail_fast() {
        let (url, server) = serve_script(vec![(401, r#"{"error":"bad token"}"#.to_string())]);
        let backend = HttpBackend::new(fast_config(&url)).unwrap();
        let err = backend
            .complete(&rendered("p"), &GenerationParams::default())
            .unwrap_err();
        assert!(matches!(
            err,
            BackendError::HttpStatus {
                status: 401,
                attempts: 1,
                ..
            }
        ));
        assert_eq!(server.join().unwrap().len(), 1);
    }

    #[test]
    fn schema_mismatch_is_not_retried() {
        let (url, server) = serve_script(vec![(200, r#"{"surprise":true}"#.to_string())]);
        let backend = HttpBackend::new(fast_config(&url)).unwrap();
        let err = backend
            .complete(&rendered("p"), &GenerationParams::default())
            .unwrap_err();
        assert!(matches!(err, BackendError::SchemaMismatch { .. }));
        assert_eq!(server.join().unwrap().len(), 1);
    }
}
