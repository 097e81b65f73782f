//! Shared value types and their validation.
//!
//! Everything here is immutable after construction and free of I/O. The JSON
//! encoding of every type uses snake_case field names; [`CvdType`] encodes as
//! a lowercase string.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Largest support text, in words, that is shown to the user.
pub const MAX_SUPPORT_WORDS: usize = 10;

/// Default upper bound on an encoded image.
pub const DEFAULT_MAX_IMAGE_BYTES: usize = 8 * 1024 * 1024;

/// Smallest accepted image edge, in pixels.
pub const MIN_IMAGE_EDGE: u32 = 64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DomainError {
    #[error("display name must not be empty")]
    EmptyName,
    #[error("explicit request requires a non-empty utterance")]
    EmptyUtterance,
    #[error("image is {size} bytes, limit is {limit}")]
    PayloadTooLarge { size: usize, limit: usize },
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("unknown color vision deficiency type `{0}`")]
    UnknownCvdType(String),
}

/// Color vision deficiency classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CvdType {
    Protanomaly,
    Protanopia,
    Deuteranomaly,
    Deuteranopia,
    Tritanomaly,
    Tritanopia,
    Achromatopsia,
}

impl CvdType {
    pub const ALL: [CvdType; 7] = [
        CvdType::Protanomaly,
        CvdType::Protanopia,
        CvdType::Deuteranomaly,
        CvdType::Deuteranopia,
        CvdType::Tritanomaly,
        CvdType::Tritanopia,
        CvdType::Achromatopsia,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CvdType::Protanomaly => "protanomaly",
            CvdType::Protanopia => "protanopia",
            CvdType::Deuteranomaly => "deuteranomaly",
            CvdType::Deuteranopia => "deuteranopia",
            CvdType::Tritanomaly => "tritanomaly",
            CvdType::Tritanopia => "tritanopia",
            CvdType::Achromatopsia => "achromatopsia",
        }
    }
}

impl fmt::Display for CvdType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CvdType {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let wanted = s.trim().to_ascii_lowercase();
        CvdType::ALL
            .into_iter()
            .find(|t| t.as_str() == wanted)
            .ok_or_else(|| DomainError::UnknownCvdType(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserProfile {
    pub profile_id: String,
    pub display_name: String,
    pub cvd_type: CvdType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<String>,
}

/// Creates a profile with a fresh UUID-shaped id.
pub fn make_user_profile(
    display_name: &str,
    cvd_type: CvdType,
    notes: Option<&str>,
) -> Result<UserProfile, DomainError> {
    if display_name.trim().is_empty() {
        return Err(DomainError::EmptyName);
    }
    Ok(UserProfile {
        profile_id: new_id(),
        display_name: display_name.to_string(),
        cvd_type,
        notes: notes.map(str::to_string),
    })
}

/// Opaque identifier used for profiles and requests.
pub fn new_id() -> String {
    uuid::Uuid::new_v4().to_string()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestMode {
    Explicit,
    Implicit,
}

/// How the client collected the request: speech or typed text, or the
/// single help button.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeHint {
    VoiceOrText,
    Button,
}

impl FromStr for ModeHint {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "voice_or_text" | "text" | "voice" => Ok(ModeHint::VoiceOrText),
            "button" => Ok(ModeHint::Button),
            other => Err(format!("unknown mode hint `{other}`")),
        }
    }
}

/// An explicit request carries the user's words; an implicit one leaves the
/// need to be inferred from the image and profile.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawSupportRequest", into = "RawSupportRequest")]
pub enum SupportRequest {
    Explicit { text: String },
    Implicit,
}

impl SupportRequest {
    pub fn mode(&self) -> RequestMode {
        match self {
            SupportRequest::Explicit { .. } => RequestMode::Explicit,
            SupportRequest::Implicit => RequestMode::Implicit,
        }
    }

    pub fn text(&self) -> Option<&str> {
        match self {
            SupportRequest::Explicit { text } => Some(text),
            SupportRequest::Implicit => None,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct RawSupportRequest {
    mode: RequestMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    text: Option<String>,
}

impl TryFrom<RawSupportRequest> for SupportRequest {
    type Error = String;

    fn try_from(raw: RawSupportRequest) -> Result<Self, Self::Error> {
        match (raw.mode, raw.text) {
            (RequestMode::Explicit, Some(text)) if !text.trim().is_empty() => {
                Ok(SupportRequest::Explicit { text })
            }
            (RequestMode::Explicit, _) => Err("explicit request requires non-empty text".into()),
            (RequestMode::Implicit, None) => Ok(SupportRequest::Implicit),
            (RequestMode::Implicit, Some(_)) => Err("implicit request must not carry text".into()),
        }
    }
}

impl From<SupportRequest> for RawSupportRequest {
    fn from(req: SupportRequest) -> Self {
        match req {
            SupportRequest::Explicit { text } => RawSupportRequest {
                mode: RequestMode::Explicit,
                text: Some(text),
            },
            SupportRequest::Implicit => RawSupportRequest {
                mode: RequestMode::Implicit,
                text: None,
            },
        }
    }
}

/// Turns the client's input channel into a request. A button press ignores
/// any utterance that came along with it.
pub fn classify_request(
    mode_hint: ModeHint,
    utterance: Option<&str>,
) -> Result<SupportRequest, DomainError> {
    match mode_hint {
        ModeHint::Button => Ok(SupportRequest::Implicit),
        ModeHint::VoiceOrText => match utterance.map(str::trim) {
            Some(text) if !text.is_empty() => Ok(SupportRequest::Explicit {
                text: text.to_string(),
            }),
            _ => Err(DomainError::EmptyUtterance),
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageSource {
    Camera,
    Upload,
    Fixture,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImageFormat {
    Png,
    Jpeg,
}

impl ImageFormat {
    pub fn mime(self) -> &'static str {
        match self {
            ImageFormat::Png => "image/png",
            ImageFormat::Jpeg => "image/jpeg",
        }
    }
}

/// One captured frame plus metadata.
///
/// `label` is the file stem the frame came from (fixture file or uploaded
/// file name); the mock backend keys its replies on it.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CapturedContext {
    #[serde(with = "base64_bytes")]
    pub image_bytes: Vec<u8>,
    pub captured_at: DateTime<Utc>,
    pub source: ImageSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub format: ImageFormat,
    pub width: u32,
    pub height: u32,
}

impl fmt::Debug for CapturedContext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CapturedContext")
            .field("bytes", &self.image_bytes.len())
            .field("captured_at", &self.captured_at)
            .field("source", &self.source)
            .field("label", &self.label)
            .field("format", &self.format)
            .field("width", &self.width)
            .field("height", &self.height)
            .finish()
    }
}

impl CapturedContext {
    /// Validates size, format and dimensions, then wraps the bytes.
    pub fn new(
        image_bytes: Vec<u8>,
        source: ImageSource,
        label: Option<String>,
        captured_at: DateTime<Utc>,
        max_image_bytes: usize,
    ) -> Result<Self, DomainError> {
        if image_bytes.len() > max_image_bytes {
            return Err(DomainError::PayloadTooLarge {
                size: image_bytes.len(),
                limit: max_image_bytes,
            });
        }
        let format = match image::guess_format(&image_bytes) {
            Ok(image::ImageFormat::Png) => ImageFormat::Png,
            Ok(image::ImageFormat::Jpeg) => ImageFormat::Jpeg,
            Ok(other) => {
                return Err(DomainError::InvalidImage(format!(
                    "unsupported format {other:?}, expected PNG or JPEG"
                )))
            }
            Err(_) => return Err(DomainError::InvalidImage("unrecognized image data".into())),
        };
        let reader = image::ImageReader::with_format(
            std::io::Cursor::new(&image_bytes),
            match format {
                ImageFormat::Png => image::ImageFormat::Png,
                ImageFormat::Jpeg => image::ImageFormat::Jpeg,
            },
        );
        let (width, height) = reader
            .into_dimensions()
            .map_err(|e| DomainError::InvalidImage(e.to_string()))?;
        if width < MIN_IMAGE_EDGE || height < MIN_IMAGE_EDGE {
            return Err(DomainError::InvalidImage(format!(
                "image is {width}x{height}, minimum is {MIN_IMAGE_EDGE}x{MIN_IMAGE_EDGE}"
            )));
        }
        Ok(CapturedContext {
            image_bytes,
            captured_at,
            source,
            label,
            format,
            width,
            height,
        })
    }

    /// Hex SHA-256 of the encoded image.
    pub fn digest(&self) -> String {
        image_digest(&self.image_bytes)
    }
}

pub fn image_digest(bytes: &[u8]) -> String {
    format!("sha256:{}", hex::encode(Sha256::digest(bytes)))
}

/// The model's four reasoning steps, as parsed from its reply.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReasoningTrace {
    pub situation: String,
    pub intent: String,
    pub support_text: String,
    pub emphasis_terms: Vec<String>,
}

/// Validated guidance ready for display. `rendered` wraps each emphasis
/// occurrence in `**` markers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupportContent {
    pub support_text: String,
    pub emphasis_terms: Vec<String>,
    pub rendered: String,
}

/// Number of maximal whitespace-delimited tokens.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Finds `term` in `text` at byte offset `at`, requiring that neither side
/// of the match continues an alphanumeric run.
pub(crate) fn term_matches_at(text: &str, at: usize, term: &str) -> bool {
    if term.is_empty() || !text[at..].starts_with(term) {
        return false;
    }
    let before_ok = text[..at]
        .chars()
        .next_back()
        .is_none_or(|c| !c.is_alphanumeric());
    let after_ok = text[at + term.len()..]
        .chars()
        .next()
        .is_none_or(|c| !c.is_alphanumeric());
    let first = term.chars().next().unwrap();
    let last = term.chars().next_back().unwrap();
    (before_ok || !first.is_alphanumeric()) && (after_ok || !last.is_alphanumeric())
}

/// Whether `term` occurs in `text` as a case-sensitive match on word
/// boundaries.
pub fn contains_term(text: &str, term: &str) -> bool {
    text.match_indices(term)
        .any(|(at, _)| term_matches_at(text, at, term))
}

mod base64_bytes {
    use base64::engine::general_purpose::STANDARD;
    use base64::Engine;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&STANDARD.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let text = String::deserialize(d)?;
        STANDARD.decode(text).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn png(width: u32, height: u32) -> Vec<u8> {
        let img = image::RgbImage::from_pixel(width, height, image::Rgb([10, 200, 30]));
        let mut out = std::io::Cursor::new(Vec::new());
        img.write_to(&mut out, image::ImageFormat::Png).unwrap();
        out.into_inner()
    }

    #[test]
    fn make_profile_constructs() {
        let p = make_user_profile("Alice", CvdType::Protanomaly, None).unwrap();
        assert_eq!(p.cvd_type, CvdType::Protanomaly);
        assert_eq!(p.display_name, "Alice");
        assert!(p.notes.is_none());
        assert!(uuid::Uuid::parse_str(&p.profile_id).is_ok());
    }

    #[test]
    fn make_profile_rejects_empty_name() {
        assert_eq!(
            make_user_profile("", CvdType::Deuteranopia, None),
            Err(DomainError::EmptyName)
        );
        assert_eq!(
            make_user_profile("  \t", CvdType::Deuteranopia, None),
            Err(DomainError::EmptyName)
        );
    }

    #[test]
    fn make_profile_keeps_notes_verbatim() {
        let p = make_user_profile(
            "Bob",
            CvdType::Tritanopia,
            Some("avoid blue/green confusion notes"),
        )
        .unwrap();
        assert_eq!(p.notes.as_deref(), Some("avoid blue/green confusion notes"));
    }

    #[test]
    fn profile_ids_are_unique() {
        let a = make_user_profile("A", CvdType::Protanopia, None).unwrap();
        let b = make_user_profile("A", CvdType::Protanopia, None).unwrap();
        assert_ne!(a.profile_id, b.profile_id);
    }

    #[test]
    fn classify_examples() {
        assert_eq!(
            classify_request(
                ModeHint::VoiceOrText,
                Some("Please tell me the color of the traffic light")
            ),
            Ok(SupportRequest::Explicit {
                text: "Please tell me the color of the traffic light".into()
            })
        );
        assert_eq!(
            classify_request(ModeHint::Button, None),
            Ok(SupportRequest::Implicit)
        );
        assert_eq!(
            classify_request(ModeHint::Button, Some("ignored")),
            Ok(SupportRequest::Implicit)
        );
        assert_eq!(
            classify_request(ModeHint::VoiceOrText, Some("   ")),
            Err(DomainError::EmptyUtterance)
        );
        assert_eq!(
            classify_request(ModeHint::VoiceOrText, None),
            Err(DomainError::EmptyUtterance)
        );
    }

    #[test]
    fn word_count_examples() {
        assert_eq!(word_count("The traffic light is green"), 5);
        assert_eq!(word_count(""), 0);
        assert_eq!(word_count("  a   b  "), 2);
        assert_eq!(word_count("green, go."), 2);
    }

    #[test]
    fn cvd_type_json_is_lowercase() {
        assert_eq!(
            serde_json::to_string(&CvdType::Deuteranomaly).unwrap(),
            "\"deuteranomaly\""
        );
        assert_eq!("Tritanopia".parse::<CvdType>(), Ok(CvdType::Tritanopia));
        assert!("purple".parse::<CvdType>().is_err());
    }

    #[test]
    fn support_request_json_shape() {
        let explicit = SupportRequest::Explicit { text: "hi".into() };
        assert_eq!(
            serde_json::to_value(&explicit).unwrap(),
            serde_json::json!({"mode": "explicit", "text": "hi"})
        );
        assert_eq!(
            serde_json::to_value(SupportRequest::Implicit).unwrap(),
            serde_json::json!({"mode": "implicit"})
        );
        assert!(serde_json::from_value::<SupportRequest>(
            serde_json::json!({"mode": "implicit", "text": "x"})
        )
        .is_err());
        assert!(serde_json::from_value::<SupportRequest>(
            serde_json::json!({"mode": "explicit", "text": " "})
        )
        .is_err());
    }

    #[test]
    fn captured_context_checks_limits() {
        let ok = CapturedContext::new(png(64, 80), ImageSource::Upload, None, Utc::now(), 1 << 20)
            .unwrap();
        assert_eq!((ok.width, ok.height), (64, 80));
        assert_eq!(ok.format, ImageFormat::Png);

        let small = CapturedContext::new(png(63, 80), ImageSource::Upload, None, Utc::now(), 1 << 20);
        assert!(matches!(small, Err(DomainError::InvalidImage(_))));

        let bytes = png(64, 64);
        let too_big = CapturedContext::new(bytes.clone(), ImageSource::Upload, None, Utc::now(), 10);
        assert_eq!(
            too_big,
            Err(DomainError::PayloadTooLarge {
                size: bytes.len(),
                limit: 10
            })
        );

        let junk = CapturedContext::new(b"not an image".to_vec(), ImageSource::Camera, None, Utc::now(), 1 << 20);
        assert!(matches!(junk, Err(DomainError::InvalidImage(_))));
    }

    #[test]
    fn jpeg_is_accepted() {
        let img = image::RgbImage::from_pixel(70, 70, image::Rgb([200, 10, 10]));
        let mut out = std::io::Cursor::new(Vec::new());
        img.write_to(&mut out, image::ImageFormat::Jpeg).unwrap();
        let ctx = CapturedContext::new(out.into_inner(), ImageSource::Camera, None, Utc::now(), 1 << 20)
            .unwrap();
        assert_eq!(ctx.format, ImageFormat::Jpeg);
    }

    #[test]
    fn term_boundaries() {
        assert!(contains_term("The light is green.", "green"));
        assert!(contains_term("The meat is fully cooked", "fully cooked"));
        assert!(!contains_term("The light is greenish", "green"));
        assert!(!contains_term("The light is Green", "green"));
        assert!(!contains_term("evergreen", "green"));
        assert!(contains_term("stop (red)", "(red)"));
        assert!(!contains_term("anything", ""));
    }

    fn cvd() -> impl Strategy<Value = CvdType> {
        proptest::sample::select(CvdType::ALL.to_vec())
    }

    proptest! {
        #[test]
        fn profile_json_round_trip(
            name in "[A-Za-z ]{1,20}",
            t in cvd(),
            notes in proptest::option::of(".{0,40}"),
        ) {
            prop_assume!(!name.trim().is_empty());
            let p = make_user_profile(&name, t, notes.as_deref()).unwrap();
            let back: UserProfile = serde_json::from_str(&serde_json::to_string(&p).unwrap()).unwrap();
            prop_assert_eq!(back, p);
        }

        #[test]
        fn classify_never_violates_invariants(button in any::<bool>(), utter in proptest::option::of("\\PC{0,30}")) {
            let hint = if button { ModeHint::Button } else { ModeHint::VoiceOrText };
            match classify_request(hint, utter.as_deref()) {
                Ok(SupportRequest::Explicit { text }) => {
                    prop_assert!(!button);
                    prop_assert!(!text.trim().is_empty());
                }
                Ok(SupportRequest::Implicit) => prop_assert!(button),
                Err(DomainError::EmptyUtterance) => {
                    prop_assert!(!button);
                    prop_assert!(utter.is_none_or(|u| u.trim().is_empty()));
                }
                Err(e) => prop_assert!(false, "unexpected error {e}"),
            }
        }

        #[test]
        fn word_count_ignores_outer_whitespace(s in "[ a-z\\t\\n]{0,40}") {
            prop_assert_eq!(word_count(&s), word_count(s.trim()));
        }

        #[test]
        fn word_count_is_additive(a in "[a-z]{1,5}( [a-z]{1,5}){0,5}", b in "[a-z.,]{1,5}( [a-z]{1,5}){0,5}") {
            let joined = format!("{a} {b}");
            prop_assert_eq!(word_count(&joined), word_count(&a) + word_count(&b));
        }
    }
}
