//! Uniform access to chat-completion backends.
//!
//! Two backend kinds exist: a deterministic local mock (a pure function
//! of seed, request fingerprint, and sample index) and remote HTTP
//! endpoints speaking the common chat-completion JSON shape. The gateway
//! owns a registry of backends and provides single completions plus
//! bounded-concurrency n-sampling with per-sample failure accounting.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::{Duration, Instant};

use futures::stream::StreamExt;
use qfces_core::mock::{fingerprint, MockModel};
use qfces_core::request::{CompletionRequest, CompletionResult};
use qfces_core::text::word_count;
use serde_json::{json, Value};

use crate::config::{BackendConfig, BackendKind, RunConfig};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GatewayError {
    #[error("unknown backend {backend_id}")]
    UnknownBackend { backend_id: String },
    #[error("backend {backend_id}: user message is empty")]
    EmptyUserMessage { backend_id: String },
    #[error("backend {backend_id}: authentication failed: {message}")]
    Auth { backend_id: String, message: String },
    #[error("backend {backend_id}: HTTP {status} after {attempts} attempt(s): {message}")]
    Http {
        backend_id: String,
        status: u16,
        attempts: u32,
        message: String,
    },
    #[error("backend {backend_id}: network error after {attempts} attempt(s): {message}")]
    Network {
        backend_id: String,
        attempts: u32,
        message: String,
    },
    #[error("backend {backend_id}: timed out after {attempts} attempt(s) ({timeout_ms} ms each)")]
    Timeout {
        backend_id: String,
        attempts: u32,
        timeout_ms: u64,
    },
    #[error("backend {backend_id}: malformed response: {message}")]
    InvalidResponse { backend_id: String, message: String },
    #[error("{failed} of {requested} samples failed (limit {max_failure_fraction})")]
    TooManyFailures {
        failed: usize,
        requested: usize,
        max_failure_fraction: f64,
    },
}

impl GatewayError {
    /// True for errors caused by the backend or the network rather than by
    /// the caller's inputs.
    pub fn is_backend_fault(&self) -> bool {
        !matches!(
            self,
            GatewayError::UnknownBackend { .. } | GatewayError::EmptyUserMessage { .. }
        )
    }
}

/// Outcome of one sample within [`Gateway::sample_n`].
pub type SampleOutcome = Result<CompletionResult, GatewayError>;

/// The deterministic local backend.
///
/// Response text comes from the canned response table when the request
/// fingerprint matches, otherwise from the seeded [`MockModel`]. With any
/// non-zero latency coefficient the simulated latency
/// `base + a * input_tokens + b * output_tokens` is both slept and
/// reported, so wall-clock timing observes it; with all coefficients zero
/// the measured (near-zero) wall clock is reported instead.
pub struct MockBackend {
    model: MockModel,
    base_latency_ms: f64,
    per_input_token_ms: f64,
    per_output_token_ms: f64,
}

impl MockBackend {
    pub fn new(config: &BackendConfig, default_seed: u64) -> Self {
        let mut model = MockModel::new(config.seed.unwrap_or(default_seed));
        for (fp, responses) in &config.responses {
            model = model.with_canned(fp, responses.clone());
        }
        MockBackend {
            model,
            base_latency_ms: config.base_latency_ms,
            per_input_token_ms: config.per_input_token_ms,
            per_output_token_ms: config.per_output_token_ms,
        }
    }

    fn simulates_latency(&self) -> bool {
        self.base_latency_ms > 0.0
            || self.per_input_token_ms > 0.0
            || self.per_output_token_ms > 0.0
    }

    async fn complete_sample(
        &self,
        request: &CompletionRequest,
        sample_index: u32,
    ) -> Result<CompletionResult, GatewayError> {
        let started = Instant::now();
        let text = self.model.respond(
            &request.system_message,
            &request.user_message,
            sample_index,
            request.params.temperature,
        );
        let input_tokens =
            word_count(&request.system_message) + word_count(&request.user_message);
        let output_tokens = word_count(&text);

        let latency_ms = if self.simulates_latency() {
            let simulated = self.base_latency_ms
                + self.per_input_token_ms * input_tokens as f64
                + self.per_output_token_ms * output_tokens as f64;
            tokio::time::sleep(Duration::from_micros((simulated * 1000.0) as u64)).await;
            simulated
        } else {
            started.elapsed().as_secs_f64() * 1000.0
        };

        Ok(CompletionResult {
            text,
            latency_ms,
            input_token_estimate: input_tokens,
            output_token_estimate: output_tokens,
        })
    }
}

/// A remote chat-completion endpoint.
pub struct HttpBackend {
    backend_id: String,
    client: reqwest::Client,
    endpoint: String,
    model: String,
    auth_env: Option<String>,
    timeout_ms: u64,
    supports_top_k: bool,
    supports_num_beams: bool,
    retry_backoff_ms: Vec<u64>,
    max_attempts: u32,
    warned_dropped_params: AtomicBool,
}

impl HttpBackend {
    pub fn new(backend_id: &str, config: &BackendConfig) -> Result<Self, GatewayError> {
        let endpoint = config
            .endpoint
            .clone()
            .ok_or_else(|| GatewayError::InvalidResponse {
                backend_id: backend_id.to_string(),
                message: "http backend without endpoint".to_string(),
            })?;
        let client = reqwest::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|err| GatewayError::Network {
                backend_id: backend_id.to_string(),
                attempts: 0,
                message: err.to_string(),
            })?;
        Ok(HttpBackend {
            backend_id: backend_id.to_string(),
            client,
            endpoint,
            model: config.model.clone(),
            auth_env: config.auth_env.clone(),
            timeout_ms: config.timeout_ms,
            supports_top_k: config.supports_top_k,
            supports_num_beams: config.supports_num_beams,
            retry_backoff_ms: config.retry_backoff_ms.clone(),
            max_attempts: config.max_attempts.max(1),
            warned_dropped_params: AtomicBool::new(false),
        })
    }

    /// Builds the wire body: `model`, `messages` (system + user roles),
    /// `temperature`, `top_p`, `max_tokens`, `n`. `top_k` and `num_beams`
    /// go on the wire only when the backend is declared to accept them;
    /// otherwise they are dropped with a logged warning.
    fn request_body(&self, request: &CompletionRequest, n: u32) -> Value {
        let params = &request.params;
        let mut body = json!({
            "model": self.model,
            "messages": [
                {"role": "system", "content": request.system_message},
                {"role": "user", "content": request.user_message},
            ],
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
            "n": n,
        });
        if let Some(top_p) = params.top_p {
            body["top_p"] = json!(top_p);
        }
        let mut dropped = Vec::new();
        match (params.top_k, self.supports_top_k) {
            (Some(top_k), true) => {
                body["top_k"] = json!(top_k);
            }
            (Some(_), false) => dropped.push("top_k"),
            (None, _) => {}
        }
        match (params.num_beams, self.supports_num_beams) {
            (Some(num_beams), true) => {
                body["num_beams"] = json!(num_beams);
            }
            (Some(_), false) => dropped.push("num_beams"),
            (None, _) => {}
        }
        if !dropped.is_empty() && !self.warned_dropped_params.swap(true, Ordering::Relaxed) {
            log::warn!(
                "backend {}: dropping unsupported parameter(s) {} from requests",
                self.backend_id,
                dropped.join(", ")
            );
        }
        body
    }

    fn bearer_token(&self) -> Result<Option<String>, GatewayError> {
        match &self.auth_env {
            None => Ok(None),
            Some(var) => match std::env::var(var) {
                Ok(token) => Ok(Some(token)),
                Err(_) => Err(GatewayError::Auth {
                    backend_id: self.backend_id.clone(),
                    message: format!("environment variable {var} is not set"),
                }),
            },
        }
    }

    fn extract_text(&self, payload: &Value) -> Result<String, GatewayError> {
        payload["choices"]
            .get(0)
            .and_then(|choice| choice["message"]["content"].as_str())
            .map(str::to_string)
            .ok_or_else(|| GatewayError::InvalidResponse {
                backend_id: self.backend_id.clone(),
                message: "no choices[0].message.content in response".to_string(),
            })
    }

    /// Sends the request, retrying only on timeouts, 5xx, and 429, with
    /// the configured backoff schedule between attempts. A 401 fails
    /// immediately without consuming retries.
    async fn complete_sample(
        &self,
        request: &CompletionRequest,
        _sample_index: u32,
    ) -> Result<CompletionResult, GatewayError> {
        let body = self.request_body(request, request.params.n_samples);
        let token = self.bearer_token()?;
        let input_tokens =
            word_count(&request.system_message) + word_count(&request.user_message);

        let mut last_error = None;
        let started = Instant::now();
        for attempt in 1..=self.max_attempts {
            if attempt > 1 {
                let backoff_ms = self
                    .retry_backoff_ms
                    .get(attempt as usize - 2)
                    .copied()
                    .or_else(|| self.retry_backoff_ms.last().copied())
                    .unwrap_or(0);
                tokio::time::sleep(Duration::from_millis(backoff_ms)).await;
            }

            let mut builder = self.client.post(&self.endpoint).json(&body);
            if let Some(token) = &token {
                builder = builder.bearer_auth(token);
            }

            match builder.send().await {
                Ok(response) => {
                    let status = response.status();
                    if status.as_u16() == 401 {
                        return Err(GatewayError::Auth {
                            backend_id: self.backend_id.clone(),
                            message: "HTTP 401 unauthorized".to_string(),
                        });
                    }
                    if status.is_success() {
                        let payload: Value =
                            response
                                .json()
                                .await
                                .map_err(|err| GatewayError::InvalidResponse {
                                    backend_id: self.backend_id.clone(),
                                    message: err.to_string(),
                                })?;
                        let text = self.extract_text(&payload)?;
                        let latency_ms = started.elapsed().as_secs_f64() * 1000.0;
                        let output_tokens = word_count(&text);
                        return Ok(CompletionResult {
                            text,
                            latency_ms,
                            input_token_estimate: input_tokens,
                            output_token_estimate: output_tokens,
                        });
                    }
                    let retryable = status.is_server_error() || status.as_u16() == 429;
                    let error = GatewayError::Http {
                        backend_id: self.backend_id.clone(),
                        status: status.as_u16(),
                        attempts: attempt,
                        message: status
                            .canonical_reason()
                            .unwrap_or("unexpected status")
                            .to_string(),
                    };
                    if !retryable {
                        return Err(error);
                    }
                    last_error = Some(error);
                }
                Err(err) if err.is_timeout() => {
                    last_error = Some(GatewayError::Timeout {
                        backend_id: self.backend_id.clone(),
                        attempts: attempt,
                        timeout_ms: self.timeout_ms,
                    });
                }
                Err(err) => {
                    last_error = Some(GatewayError::Network {
                        backend_id: self.backend_id.clone(),
                        attempts: attempt,
                        message: err.to_string(),
                    });
                }
            }
        }
        Err(last_error.expect("at least one attempt was made"))
    }
}

enum BackendHandle {
    Mock(MockBackend),
    Http(HttpBackend),
}

impl BackendHandle {
    async fn complete_sample(
        &self,
        request: &CompletionRequest,
        sample_index: u32,
    ) -> Result<CompletionResult, GatewayError> {
        match self {
            BackendHandle::Mock(mock) => mock.complete_sample(request, sample_index).await,
            BackendHandle::Http(http) => http.complete_sample(request, sample_index).await,
        }
    }
}

struct RegisteredBackend {
    handle: BackendHandle,
    model: String,
    max_concurrency: usize,
    max_failure_fraction: f64,
}

/// Registry of configured backends; shareable across tasks.
pub struct Gateway {
    backends: BTreeMap<String, RegisteredBackend>,
}

impl Gateway {
    /// Builds every backend declared in the config.
    pub fn from_config(config: &RunConfig) -> Result<Self, GatewayError> {
        let mut backends = BTreeMap::new();
        for (backend_id, backend_config) in &config.backends {
            let handle = match backend_config.kind {
                BackendKind::Mock => {
                    BackendHandle::Mock(MockBackend::new(backend_config, config.run.seed))
                }
                BackendKind::Http => {
                    BackendHandle::Http(HttpBackend::new(backend_id, backend_config)?)
                }
            };
            backends.insert(
                backend_id.clone(),
                RegisteredBackend {
                    handle,
                    model: backend_config.model.clone(),
                    max_concurrency: backend_config.max_concurrency.max(1),
                    max_failure_fraction: backend_config.max_failure_fraction,
                },
            );
        }
        Ok(Gateway { backends })
    }

    fn backend(&self, backend_id: &str) -> Result<&RegisteredBackend, GatewayError> {
        self.backends
            .get(backend_id)
            .ok_or_else(|| GatewayError::UnknownBackend {
                backend_id: backend_id.to_string(),
            })
    }

    /// Model name configured for a backend, as recorded in outputs.
    pub fn model_name(&self, backend_id: &str) -> Result<&str, GatewayError> {
        Ok(self.backend(backend_id)?.model.as_str())
    }

    fn validate(&self, request: &CompletionRequest) -> Result<(), GatewayError> {
        if request.user_message.trim().is_empty() {
            return Err(GatewayError::EmptyUserMessage {
                backend_id: request.backend_id.clone(),
            });
        }
        Ok(())
    }

    /// One completion (sample index 0).
    pub async fn complete(
        &self,
        request: &CompletionRequest,
    ) -> Result<CompletionResult, GatewayError> {
        self.validate(request)?;
        let backend = self.backend(&request.backend_id)?;
        backend.handle.complete_sample(request, 0).await
    }

    /// Draws `n` samples of the same request, one request per sample
    /// index, with in-flight requests bounded by the backend's
    /// concurrency limit.
    ///
    /// Always returns exactly `n` outcomes in sample-index order; failed
    /// samples are recorded in place, not dropped. If the failed fraction
    /// exceeds the backend's limit the whole call errors.
    pub async fn sample_n(
        &self,
        request: &CompletionRequest,
        n: u32,
    ) -> Result<Vec<SampleOutcome>, GatewayError> {
        self.validate(request)?;
        let backend = self.backend(&request.backend_id)?;

        // Each sample goes out as its own single-completion request.
        let mut per_sample = request.clone();
        per_sample.params.n_samples = 1;
        let per_sample = &per_sample;

        let outcomes: Vec<SampleOutcome> = futures::stream::iter(
            (0..n).map(|index| async move {
                backend.handle.complete_sample(per_sample, index).await
            }),
        )
        .buffered(backend.max_concurrency)
        .collect()
        .await;

        let failed = outcomes.iter().filter(|o| o.is_err()).count();
        if n > 0 && failed as f64 / n as f64 > backend.max_failure_fraction {
            return Err(GatewayError::TooManyFailures {
                failed,
                requested: n as usize,
                max_failure_fraction: backend.max_failure_fraction,
            });
        }
        Ok(outcomes)
    }
}

/// Fingerprint of a request as used by canned response tables.
pub fn request_fingerprint(request: &CompletionRequest) -> String {
    fingerprint(&request.system_message, &request.user_message)
}

#[cfg(test)]
mod tests {
    use super::*;
    use qfces_core::request::SamplingParams;

    fn mock_config(seed: u64) -> BackendConfig {
        let toml_src = format!("kind = \"mock\"\nmodel = \"test-mock\"\nseed = {seed}\n");
        toml::from_str(&toml_src).unwrap()
    }

    fn request(backend_id: &str, user: &str) -> CompletionRequest {
        CompletionRequest {
            system_message: "You are a concise assistant.".to_string(),
            user_message: user.to_string(),
            params: SamplingParams::evaluation(),
            backend_id: backend_id.to_string(),
        }
    }

    fn gateway_with_mock(config: BackendConfig) -> Gateway {
        let mut backends = BTreeMap::new();
        backends.insert(
            "m".to_string(),
            RegisteredBackend {
                handle: BackendHandle::Mock(MockBackend::new(&config, 7)),
                model: config.model.clone(),
                max_concurrency: config.max_concurrency.max(1),
                max_failure_fraction: config.max_failure_fraction,
            },
        );
        Gateway { backends }
    }

    #[tokio::test]
    async fn canned_response_with_latency_formula() {
        let mut config = mock_config(1);
        config.base_latency_ms = 2.0;
        config.per_input_token_ms = 1.0;
        config.per_output_token_ms = 0.5;
        let req = request("m", "three words here");
        config.responses.insert(
            request_fingerprint(&req),
            vec!["canned reply text".to_string()],
        );
        let gateway = gateway_with_mock(config);

        let result = gateway.complete(&req).await.unwrap();
        assert_eq!(result.text, "canned reply text");
        // 5 system words + 3 user words in, 3 words out.
        assert_eq!(result.input_token_estimate, 8);
        assert_eq!(result.output_token_estimate, 3);
        assert_eq!(result.latency_ms, 2.0 + 8.0 + 1.5);
    }

    #[tokio::test]
    async fn zero_coefficients_report_wall_clock() {
        let gateway = gateway_with_mock(mock_config(1));
        let result = gateway.complete(&request("m", "hello there")).await.unwrap();
        assert!(result.latency_ms >= 0.0);
        assert!(result.latency_ms < 1_000.0);
    }

    #[tokio::test]
    async fn deterministic_mock_n5_identical() {
        let gateway = gateway_with_mock(mock_config(9));
        let mut req = request("m", "rate this summary please");
        req.params.temperature = 0.0;
        let outcomes = gateway.sample_n(&req, 5).await.unwrap();
        assert_eq!(outcomes.len(), 5);
        let texts: Vec<&str> = outcomes
            .iter()
            .map(|o| o.as_ref().unwrap().text.as_str())
            .collect();
        assert!(texts.windows(2).all(|w| w[0] == w[1]));
    }

    #[tokio::test]
    async fn seeded_sampling_reproducible() {
        async fn run(seed: u64) -> Vec<String> {
            let req = request("m", "sample me repeatedly");
            let gateway = gateway_with_mock(mock_config(seed));
            gateway
                .sample_n(&req, 100)
                .await
                .unwrap()
                .into_iter()
                .map(|o| o.unwrap().text)
                .collect()
        }
        let a = run(5).await;
        let b = run(5).await;
        let c = run(6).await;
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.len(), 100);
    }

    #[tokio::test]
    async fn bounded_concurrency_overlaps_requests() {
        let mut config = mock_config(3);
        config.base_latency_ms = 10.0;
        config.max_concurrency = 10;
        let gateway = gateway_with_mock(config);
        let req = request("m", "how good is this product summary");

        let started = Instant::now();
        let outcomes = gateway.sample_n(&req, 100).await.unwrap();
        let wall_ms = started.elapsed().as_secs_f64() * 1000.0;

        assert_eq!(outcomes.len(), 100);
        // Sequential would be >= 1000 ms; ten-wide batches need >= ~100 ms.
        assert!(wall_ms < 600.0, "wall {wall_ms} ms suggests no overlap");
        assert!(wall_ms >= 90.0, "wall {wall_ms} ms suggests unbounded concurrency");
    }

    #[tokio::test]
    async fn unknown_backend_and_empty_message() {
        let gateway = gateway_with_mock(mock_config(1));
        let missing = request("nope", "hi");
        assert!(matches!(
            gateway.complete(&missing).await,
            Err(GatewayError::UnknownBackend { .. })
        ));
        let empty = request("m", "   ");
        assert!(matches!(
            gateway.complete(&empty).await,
            Err(GatewayError::EmptyUserMessage { .. })
        ));
        assert!(!GatewayError::UnknownBackend {
            backend_id: "x".into()
        }
        .is_backend_fault());
    }
}
