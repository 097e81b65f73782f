//! OpenAI-compatible chat-completions backend.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use reqwest::StatusCode;
use serde::Deserialize;
use serde_json::{json, Value};
use tracing::{debug, warn};

use super::{backoff_delay, BackendConfig, GatewayError};
use crate::prompt::PromptBundle;

/// `endpoint_url` is used as-is when it already names the chat-completions
/// path; otherwise it is treated as an API base such as
/// `https://api.openai.com/v1`.
pub(crate) fn completions_url(endpoint: &str) -> String {
    let trimmed = endpoint.trim_end_matches('/');
    if trimmed.ends_with("/chat/completions") {
        trimmed.to_string()
    } else {
        format!("{trimmed}/chat/completions")
    }
}

pub(crate) fn request_body(model: &str, bundle: &PromptBundle) -> Value {
    let mut user_parts = vec![json!({ "type": "text", "text": bundle.user_text })];
    for image in &bundle.image_attachments {
        user_parts.push(json!({
            "type": "image_url",
            "image_url": {
                "url": format!("data:{};base64,{}", image.format.mime(), STANDARD.encode(&image.image_bytes)),
            }
        }));
    }
    json!({
        "model": model,
        "messages": [
            { "role": "system", "content": bundle.system_text },
            { "role": "user", "content": user_parts },
        ],
    })
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    #[serde(default)]
    content: Option<Value>,
}

fn first_choice_text(body: &str) -> Result<String, GatewayError> {
    let parsed: ChatResponse =
        serde_json::from_str(body).map_err(|e| GatewayError::MalformedResponse(e.to_string()))?;
    let choice = parsed
        .choices
        .into_iter()
        .next()
        .ok_or_else(|| GatewayError::MalformedResponse("no choices in response".into()))?;
    match choice.message.content {
        Some(Value::String(text)) => Ok(text),
        // Some providers return content as a list of typed parts.
        Some(Value::Array(parts)) => Ok(parts
            .iter()
            .filter_map(|p| p.get("text").and_then(Value::as_str))
            .collect::<Vec<_>>()
            .join("")),
        Some(Value::Null) | None => Err(GatewayError::EmptyReply),
        Some(other) => Err(GatewayError::MalformedResponse(format!(
            "unexpected content type: {other}"
        ))),
    }
}

enum Attempt {
    Done(String),
    Retry(GatewayError),
    Fail(GatewayError),
}

async fn attempt(
    client: &reqwest::Client,
    url: &str,
    config: &BackendConfig,
    body: &Value,
    attempts: u32,
) -> Attempt {
    let key = config.api_key.as_ref().map(|k| k.expose()).unwrap_or_default();
    let response = client.post(url).bearer_auth(key).json(body).send().await;
    let response = match response {
        Ok(r) => r,
        Err(e) if e.is_timeout() => return Attempt::Retry(GatewayError::Timeout { attempts }),
        Err(e) => {
            return Attempt::Retry(GatewayError::Transport {
                attempts,
                message: e.without_url().to_string(),
            })
        }
    };
    let status = response.status();
    let text = match response.text().await {
        Ok(t) => t,
        Err(e) if e.is_timeout() => return Attempt::Retry(GatewayError::Timeout { attempts }),
        Err(e) => {
            return Attempt::Retry(GatewayError::Transport {
                attempts,
                message: e.without_url().to_string(),
            })
        }
    };
    match status {
        s if s.is_success() => match first_choice_text(&text) {
            Ok(t) => Attempt::Done(t),
            Err(e) => Attempt::Fail(e),
        },
        StatusCode::UNAUTHORIZED | StatusCode::FORBIDDEN => {
            Attempt::Fail(GatewayError::AuthFailure { status: status.as_u16() })
        }
        StatusCode::TOO_MANY_REQUESTS => Attempt::Retry(GatewayError::RateLimited { attempts }),
        s if s.is_server_error() => Attempt::Retry(GatewayError::UpstreamError {
            status: s.as_u16(),
            message: truncate(&text, 200),
        }),
        s => Attempt::Fail(GatewayError::UpstreamError {
            status: s.as_u16(),
            message: truncate(&text, 200),
        }),
    }
}

fn truncate(text: &str, max: usize) -> String {
    match text.char_indices().nth(max) {
        Some((at, _)) => format!("{}…", &text[..at]),
        None => text.to_string(),
    }
}

/// Returns the reply text and the number of attempts made.
pub(super) async fn invoke(
    client: &reqwest::Client,
    config: &BackendConfig,
    bundle: &PromptBundle,
) -> Result<(String, u32), GatewayError> {
    let url = completions_url(config.endpoint_url.as_deref().unwrap_or_default());
    let body = request_body(&config.model_name, bundle);
    let mut attempts = 0;
    loop {
        attempts += 1;
        debug!(%url, model = %config.model_name, attempt = attempts, "chat completion request");
        match attempt(client, &url, config, &body, attempts).await {
            Attempt::Done(text) => return Ok((text, attempts)),
            Attempt::Fail(e) => return Err(e),
            Attempt::Retry(e) if attempts > config.max_retries => return Err(e),
            Attempt::Retry(e) => {
                let delay = backoff_delay(config.backoff_base_ms, attempts);
                warn!(error = %e, ?delay, "transient upstream failure, retrying");
                tokio::time::sleep(delay).await;
            }
        }
    }
}
