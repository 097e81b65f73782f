//! One full assistance round: classify the request, assemble the prompt,
//! invoke the model, parse (with one corrective retry) and validate.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::info;

use crate::domain::{
    classify_request, new_id, CapturedContext, DomainError, ModeHint, ReasoningTrace,
    SupportContent, SupportRequest, UserProfile,
};
use crate::gateway::{GatewayError, LlmGateway};
use crate::parser::{
    parse_reasoning, recover_once, validate_support_content, ParseError, RecoveryError,
    ValidationError,
};
use crate::prompt::{PromptEngine, PromptError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupportResponse {
    pub request_id: String,
    pub content: SupportContent,
    pub trace: ReasoningTrace,
    pub warnings: Vec<String>,
    pub latency_ms: u64,
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Validation(#[from] ValidationError),
}

impl From<RecoveryError> for PipelineError {
    fn from(e: RecoveryError) -> Self {
        match e {
            RecoveryError::Parse(p) => PipelineError::Parse(p),
            RecoveryError::Gateway(g) => PipelineError::Gateway(g),
        }
    }
}

impl PipelineError {
    /// Stable machine-readable error name.
    pub fn kind(&self) -> &'static str {
        match self {
            PipelineError::Domain(e) => match e {
                DomainError::EmptyName => "empty_name",
                DomainError::EmptyUtterance => "empty_utterance",
                DomainError::PayloadTooLarge { .. } => "payload_too_large",
                DomainError::InvalidImage(_) => "invalid_image",
                DomainError::UnknownCvdType(_) => "unknown_cvd_type",
            },
            PipelineError::Prompt(PromptError::UnknownCvdType(_)) => "unknown_cvd_type",
            PipelineError::Prompt(_) => "prompt_template_error",
            PipelineError::Gateway(e) => e.kind(),
            PipelineError::Parse(e) => e.kind(),
            PipelineError::Validation(e) => e.kind(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Pipeline {
    engine: PromptEngine,
    gateway: LlmGateway,
}

impl Pipeline {
    pub fn new(engine: PromptEngine, gateway: LlmGateway) -> Self {
        Pipeline { engine, gateway }
    }

    pub fn engine(&self) -> &PromptEngine {
        &self.engine
    }

    pub fn gateway(&self) -> &LlmGateway {
        &self.gateway
    }

    pub async fn run(
        &self,
        profile: &UserProfile,
        mode_hint: ModeHint,
        utterance: Option<&str>,
        context: &CapturedContext,
    ) -> Result<SupportResponse, PipelineError> {
        let request = classify_request(mode_hint, utterance)?;
        self.run_request(profile, &request, context, new_id()).await
    }

    /// Runs an already classified request under the caller's `request_id`.
    pub async fn run_request(
        &self,
        profile: &UserProfile,
        request: &SupportRequest,
        context: &CapturedContext,
        request_id: String,
    ) -> Result<SupportResponse, PipelineError> {
        let started = Instant::now();
        let bundle = self.engine.assemble_prompt(profile, request, context)?;
        let raw = self.gateway.invoke(&bundle).await?;

        let mut warnings = Vec::new();
        let trace = match parse_reasoning(&raw.text) {
            Ok(trace) => trace,
            Err(first) => {
                let (trace, _) = recover_once(&raw.text, &bundle, &self.engine, &self.gateway).await?;
                warnings.push(format!("first reply unreadable ({first}); recovered with one retry"));
                trace
            }
        };
        let validated = validate_support_content(&trace)?;
        warnings.extend(validated.warnings);

        let latency_ms = started.elapsed().as_millis() as u64;
        info!(%request_id, mode = ?request.mode(), latency_ms, "support request served");
        Ok(SupportResponse {
            request_id,
            content: validated.content,
            trace,
            warnings,
            latency_ms,
        })
    }
}
