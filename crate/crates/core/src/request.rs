//! Chat-completion request and result types shared by every backend.

use alloc::string::String;

use serde::{Deserialize, Serialize};

/// Decoding parameters passed through to a backend.
///
/// `top_k` and `num_beams` are only forwarded to backends whose API accepts
/// them; OpenAI-style endpoints silently drop them with a logged warning on
/// the gateway side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_k: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_beams: Option<u32>,
    pub max_tokens: u32,
    pub n_samples: u32,
}

impl SamplingParams {
    /// Summary-generation preset: `top_k=25, top_p=0.95, num_beams=3,
    /// temperature=0.2`, single sample.
    pub fn generation() -> Self {
        Self {
            temperature: 0.2,
            top_k: Some(25),
            top_p: Some(0.95),
            num_beams: Some(3),
            max_tokens: 1024,
            n_samples: 1,
        }
    }

    /// Judge-evaluation preset: `n=100, temperature=0.2`.
    pub fn evaluation() -> Self {
        Self {
            temperature: 0.2,
            top_k: None,
            top_p: None,
            num_beams: None,
            max_tokens: 512,
            n_samples: 100,
        }
    }

    pub fn validate(&self) -> Result<(), ParamsError> {
        if self.temperature < 0.0 {
            return Err(ParamsError::NegativeTemperature(self.temperature));
        }
        if self.n_samples == 0 {
            return Err(ParamsError::ZeroSamples);
        }
        if let Some(p) = self.top_p {
            if !(p > 0.0 && p <= 1.0) {
                return Err(ParamsError::TopPOutOfRange(p));
            }
        }
        Ok(())
    }
}

impl Default for SamplingParams {
    fn default() -> Self {
        Self::generation()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParamsError {
    #[error("temperature must be >= 0 (got {0})")]
    NegativeTemperature(f64),
    #[error("n_samples must be >= 1")]
    ZeroSamples,
    #[error("top_p must be in (0, 1] (got {0})")]
    TopPOutOfRange(f64),
}

/// A fully rendered request bound to a backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub system_message: String,
    pub user_message: String,
    pub params: SamplingParams,
    pub backend_id: String,
}

impl CompletionRequest {
    pub fn validate(&self) -> Result<(), ParamsError> {
        self.params.validate()
    }
}

/// One completion with its latency and whitespace-word token estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResult {
    pub text: String,
    pub latency_ms: f64,
    pub input_token_estimate: usize,
    pub output_token_estimate: usize,
}
