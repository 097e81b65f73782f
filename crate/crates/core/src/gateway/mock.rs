//! Fixture-driven backend.
//!
//! Replies are read from `<fixture_dir>/<key>.json` where the key is the
//! image's file stem. The corrective re-invocation first looks for
//! `<key>.retry.json`, which lets a fixture script a two-stage exchange.

use std::path::Path;

use super::{BackendConfig, GatewayError, MockFault};
use crate::prompt::PromptBundle;

/// What the mock says when a fault is injected: prose with no JSON object.
pub const MALFORMED_REPLY: &str =
    "Sure! Looking at the picture, I think the colors here are probably fine, but I am not certain.";

fn valid_key(key: &str) -> bool {
    !key.is_empty()
        && key != "."
        && key != ".."
        && !key.contains(['/', '\\'])
        && !key.chars().any(char::is_control)
}

/// Contents of `<fixture_dir>/<key>.json`, byte for byte.
pub fn load_fixture(fixture_dir: &Path, key: &str) -> Result<String, GatewayError> {
    if !valid_key(key) {
        return Err(GatewayError::FixtureMissing(key.to_string()));
    }
    std::fs::read_to_string(fixture_dir.join(format!("{key}.json")))
        .map_err(|_| GatewayError::FixtureMissing(key.to_string()))
}

pub(super) async fn invoke(
    config: &BackendConfig,
    bundle: &PromptBundle,
) -> Result<String, GatewayError> {
    match config.fault {
        MockFault::MalformedAlways => return Ok(MALFORMED_REPLY.to_string()),
        MockFault::MalformedFirst if !bundle.corrective => return Ok(MALFORMED_REPLY.to_string()),
        _ => {}
    }
    let dir = config
        .fixture_dir
        .as_deref()
        .ok_or_else(|| GatewayError::InvalidConfig("mock backend needs a fixture directory".into()))?;
    let key = bundle
        .image()
        .and_then(|img| img.label.as_deref())
        .ok_or_else(|| GatewayError::FixtureMissing("<unlabeled image>".into()))?;
    if bundle.corrective {
        if let Ok(text) = load_fixture(dir, &format!("{key}.retry")) {
            return Ok(text);
        }
    }
    load_fixture(dir, key)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn load_fixture_reads_exact_bytes() {
        let tmp = tempfile::tempdir().unwrap();
        let body = "{\"a\": 1}\n  trailing  ";
        std::fs::write(tmp.path().join("traffic_light_a.json"), body).unwrap();
        assert_eq!(load_fixture(tmp.path(), "traffic_light_a").unwrap(), body);
        assert_eq!(
            load_fixture(tmp.path(), "traffic_light_a").unwrap(),
            load_fixture(tmp.path(), "traffic_light_a").unwrap()
        );
    }

    #[test]
    fn load_fixture_missing_and_invalid_keys() {
        let tmp = tempfile::tempdir().unwrap();
        for key in ["nonexistent", "", "..", "../etc/passwd", "a\\b"] {
            assert!(
                matches!(load_fixture(tmp.path(), key), Err(GatewayError::FixtureMissing(_))),
                "{key}"
            );
        }
    }
}
