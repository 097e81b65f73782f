//! Context-aware assistance for people with color vision deficiency.
//!
//! A captured frame and a help request (spoken or typed, or a bare button
//! press) are turned into a profile-conditioned prompt for a multimodal chat
//! model. The model reasons in four steps and answers with short guidance
//! whose key terms are emphasized for display in an overlay.

pub mod domain;
pub mod gateway;
pub mod harness;
pub mod parser;
pub mod pipeline;
pub mod prompt;

pub use domain::{
    classify_request, make_user_profile, word_count, CapturedContext, CvdType, DomainError,
    ImageSource, ModeHint, ReasoningTrace, RequestMode, SupportContent, SupportRequest,
    UserProfile,
};
pub use gateway::{BackendConfig, BackendKind, GatewayError, LlmGateway, MockFault, RawModelOutput};
pub use parser::{NO_EMPHASIS_WARNING, 
    parse_reasoning, recover_once, render_emphasis, strip_markers, validate_support_content,
    ParseError, ValidationError,
};
pub use pipeline::{Pipeline, PipelineError, SupportResponse};
pub use prompt::{PromptBundle, PromptEngine, PromptError, TemplateSet};
