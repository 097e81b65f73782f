//! Support code for the `cl-bench` runner.

use async_trait::async_trait;
use chromalens_core::harness::{CaseError, CaseExecutor, ScenarioCase};
use chromalens_core::{CvdType, RequestMode, SupportResponse, UserProfile};
use reqwest::multipart::{Form, Part};
use serde_json::json;

/// Runs cases against a live session service over HTTP.
pub struct ServiceExecutor {
    client: reqwest::Client,
    base_url: String,
    profile_id: String,
}

impl ServiceExecutor {
    /// Creates a fresh profile on the service and binds to it.
    pub async fn connect(base_url: &str, cvd_type: CvdType) -> anyhow::Result<Self> {
        let base_url = base_url.trim_end_matches('/').to_string();
        let client = reqwest::Client::new();
        let response = client
            .post(format!("{base_url}/v1/profiles"))
            .json(&json!({ "display_name": "cl-bench", "cvd_type": cvd_type }))
            .send()
            .await?;
        if !response.status().is_success() {
            anyhow::bail!("creating profile: HTTP {}: {}", response.status(), response.text().await?);
        }
        let profile: UserProfile = response.json().await?;
        Ok(ServiceExecutor {
            client,
            base_url,
            profile_id: profile.profile_id,
        })
    }

    pub fn profile_id(&self) -> &str {
        &self.profile_id
    }
}

fn case_error(kind: &str, message: impl ToString) -> CaseError {
    CaseError {
        kind: kind.to_string(),
        message: message.to_string(),
    }
}

#[async_trait]
impl CaseExecutor for ServiceExecutor {
    async fn execute(&self, case: &ScenarioCase) -> Result<SupportResponse, CaseError> {
        let bytes = tokio::fs::read(&case.image_path)
            .await
            .map_err(|e| case_error("missing_image", e))?;
        let meta = json!({
            "profile_id": self.profile_id,
            "mode_hint": match case.mode {
                RequestMode::Explicit => "voice_or_text",
                RequestMode::Implicit => "button",
            },
            "utterance": case.utterance,
        });
        let file_name = case
            .image_path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "frame.png".into());
        let form = Form::new()
            .part("meta", Part::text(meta.to_string()).mime_str("application/json").unwrap())
            .part("image", Part::bytes(bytes).file_name(file_name));
        let response = self
            .client
            .post(format!("{}/v1/support", self.base_url))
            .multipart(form)
            .send()
            .await
            .map_err(|e| case_error("transport_error", e))?;
        let status = response.status();
        let body = response.text().await.map_err(|e| case_error("transport_error", e))?;
        if status.is_success() {
            serde_json::from_str(&body).map_err(|e| case_error("bad_response", e))
        } else {
            let parsed: serde_json::Value = serde_json::from_str(&body).unwrap_or_default();
            Err(case_error(
                parsed["kind"].as_str().unwrap_or("http_error"),
                parsed["message"].as_str().map(str::to_string).unwrap_or(body),
            ))
        }
    }
}
