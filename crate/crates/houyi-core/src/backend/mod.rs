//! Uniform text-generation interface with a deterministic rule-based mock and
//! an HTTP chat-completions client.

pub mod http;
pub mod mock;

use serde::{Deserialize, Serialize};

use crate::victim::{AppFunction, InputRole, PipelineStep};
use mock::SusceptibilityProfile;

use crate::defense::DefenseName;

/// Sampling parameters. The mock ignores temperature/top_p but records them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    pub seed: u64,
}

impl Default for GenerationParams {
    fn default() -> Self {
        GenerationParams {
            temperature: 1.0,
            top_p: 1.0,
            max_tokens: 1024,
            seed: 0,
        }
    }
}

impl GenerationParams {
    pub fn with_seed(seed: u64) -> Self {
        GenerationParams { seed, ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.temperature < 0.0 {
            return Err("temperature must be >= 0".into());
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err("top_p must be in (0, 1]".into());
        }
        if self.max_tokens == 0 {
            return Err("max_tokens must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum FinishReason {
    Stop,
    Length,
    Error(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub finish_reason: FinishReason,
    pub tokens_used: u32,
}

impl Completion {
    pub fn stop(text: impl Into<String>) -> Self {
        let text = text.into();
        let tokens_used = crate::words::count_words(&text) as u32;
        Completion { text, finish_reason: FinishReason::Stop, tokens_used }
    }

    pub fn error(&self) -> Option<&str> {
        match &self.finish_reason {
            FinishReason::Error(msg) => Some(msg),
            _ => None,
        }
    }

    pub fn failure(detail: impl Into<String>) -> Self {
        Completion {
            text: String::new(),
            finish_reason: FinishReason::Error(detail.into()),
            tokens_used: 0,
        }
    }
}

/// One victim pipeline step as seen by the backend. The simulator is
/// white-box internally: the mock receives the template so it can isolate the
/// user segment, while attackers only ever observe the resulting response.
#[derive(Debug, Clone)]
pub struct VictimCall<'a> {
    /// Fully assembled prompt for this step.
    pub combined_prompt: String,
    /// Text flowing through the pipeline before this step's instruction
    /// prefix and template are applied.
    pub current_text: &'a str,
    /// Defense-transformed template still containing the placeholder.
    pub template: &'a str,
    /// The provider's original pre-prompt (echoed on a prompt-leak breach).
    pub pre_prompt: &'a str,
    pub step: PipelineStep,
    pub prior_step: Option<PipelineStep>,
    pub app_function: &'a AppFunction,
    pub input_role: InputRole,
    pub profile: &'a SusceptibilityProfile,
    pub active_defenses: &'a [DefenseName],
}

/// Backend result for one victim step. `hijacked` marks that the simulated
/// model executed injected instructions; later pipeline steps pass the text
/// through unchanged. HTTP backends never report a hijack.
#[derive(Debug, Clone)]
pub struct StepResult {
    pub completion: Completion,
    pub hijacked: bool,
}

pub trait Backend: Send + Sync {
    /// Plain text generation; all failures surface as `FinishReason::Error`.
    fn generate(&self, prompt: &str, params: &GenerationParams) -> Completion;

    /// Generation for one victim pipeline step.
    fn victim_step(&self, call: &VictimCall<'_>, params: &GenerationParams) -> StepResult {
        StepResult {
            completion: self.generate(&call.combined_prompt, params),
            hijacked: false,
        }
    }
}

/// Dispatching entry point over any backend implementation.
pub fn generate(backend: &dyn Backend, prompt: &str, params: &GenerationParams) -> Completion {
    if let Err(msg) = params.validate() {
        return Completion::failure(msg);
    }
    backend.generate(prompt, params)
}
