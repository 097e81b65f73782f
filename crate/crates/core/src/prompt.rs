//! Prompt assembly.
//!
//! The system message carries the user's color vision profile; the user
//! message carries the request, four numbered reasoning steps and the reply
//! schema. All wording lives in template fragments under `templates/<version>/`
//! so it can be revised without touching code. Templates use `{name}`
//! placeholders; an unknown or missing placeholder fails at load time.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::domain::{CapturedContext, CvdType, SupportRequest, UserProfile};

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("no descriptor registered for `{0}`")]
    UnknownCvdType(CvdType),
    #[error("template `{fragment}`: {reason}")]
    Template { fragment: String, reason: String },
    #[error("reading template `{path}`: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Fragment files, their required placeholders, and whether a fragment may
/// contain numbered step lines.
const FRAGMENTS: &[(&str, &[&str])] = &[
    ("preamble", &["cvd_type", "descriptor"]),
    ("notes", &["notes"]),
    ("request_explicit", &["utterance"]),
    ("request_implicit", &[]),
    ("cot", &[]),
    ("schema_hint", &[]),
    ("corrective", &[]),
];

pub const STEP_COUNT: usize = 4;

/// A validated set of prompt fragments plus the descriptor registry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    pub version: String,
    preamble: String,
    notes: String,
    request_explicit: String,
    request_implicit: String,
    cot: String,
    schema_hint: String,
    corrective: String,
    descriptors: BTreeMap<CvdType, String>,
}

impl TemplateSet {
    /// The fragments compiled into the binary.
    pub fn builtin() -> Self {
        let mut files = BTreeMap::new();
        files.insert("preamble", include_str!("../templates/v1/preamble.txt"));
        files.insert("notes", include_str!("../templates/v1/notes.txt"));
        files.insert("request_explicit", include_str!("../templates/v1/request_explicit.txt"));
        files.insert("request_implicit", include_str!("../templates/v1/request_implicit.txt"));
        files.insert("cot", include_str!("../templates/v1/cot.txt"));
        files.insert("schema_hint", include_str!("../templates/v1/schema_hint.txt"));
        files.insert("corrective", include_str!("../templates/v1/corrective.txt"));
        let descriptors = include_str!("../templates/v1/descriptors.json");
        Self::from_parts(
            "v1",
            |name| Ok(files[name].to_string()),
            descriptors,
        )
        .expect("builtin templates are valid")
    }

    /// Loads `<dir>/<fragment>.txt` for every fragment and
    /// `<dir>/descriptors.json`. The directory name becomes the version.
    pub fn load(dir: &Path) -> Result<Self, PromptError> {
        let read = |path: &Path| {
            std::fs::read_to_string(path).map_err(|source| PromptError::Io {
                path: path.display().to_string(),
                source,
            })
        };
        let version = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "custom".into());
        let descriptors = read(&dir.join("descriptors.json"))?;
        Self::from_parts(
            &version,
            |name| read(&dir.join(format!("{name}.txt"))),
            &descriptors,
        )
    }

    fn from_parts(
        version: &str,
        mut fragment: impl FnMut(&str) -> Result<String, PromptError>,
        descriptors_json: &str,
    ) -> Result<Self, PromptError> {
        let mut texts = BTreeMap::new();
        for (name, required) in FRAGMENTS {
            let text = fragment(name)?.trim_end().to_string();
            check_placeholders(name, &text, required)?;
            let steps = step_markers(&text);
            let expected: Vec<usize> = if *name == "cot" {
                (1..=STEP_COUNT).collect()
            } else {
                Vec::new()
            };
            if steps != expected {
                return Err(PromptError::Template {
                    fragment: name.to_string(),
                    reason: format!("numbered step lines {steps:?}, expected {expected:?}"),
                });
            }
            texts.insert(*name, text);
        }

        let raw: BTreeMap<String, String> =
            serde_json::from_str(descriptors_json).map_err(|e| PromptError::Template {
                fragment: "descriptors".into(),
                reason: e.to_string(),
            })?;
        let mut descriptors = BTreeMap::new();
        for (key, text) in raw {
            let cvd: CvdType = key.parse().map_err(|_| PromptError::Template {
                fragment: "descriptors".into(),
                reason: format!("unknown type `{key}`"),
            })?;
            if text.trim().is_empty() {
                return Err(PromptError::Template {
                    fragment: "descriptors".into(),
                    reason: format!("empty descriptor for `{key}`"),
                });
            }
            descriptors.insert(cvd, text);
        }

        let mut take = |name: &str| texts.remove(name).unwrap_or_default();
        Ok(TemplateSet {
            version: version.to_string(),
            preamble: take("preamble"),
            notes: take("notes"),
            request_explicit: take("request_explicit"),
            request_implicit: take("request_implicit"),
            cot: take("cot"),
            schema_hint: take("schema_hint"),
            corrective: take("corrective"),
            descriptors,
        })
    }

    pub fn descriptor(&self, cvd: CvdType) -> Option<&str> {
        self.descriptors.get(&cvd).map(String::as_str)
    }

    pub fn corrective(&self) -> &str {
        &self.corrective
    }
}

/// Placeholder names appearing as `{identifier}` in a fragment. Braces
/// around anything else (JSON examples, quotes) are literal text.
fn placeholders(text: &str) -> Vec<(usize, usize, &str)> {
    let mut found = Vec::new();
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'{' {
            let start = i + 1;
            let mut end = start;
            while end < bytes.len() && (bytes[end].is_ascii_lowercase() || bytes[end] == b'_') {
                end += 1;
            }
            if end > start && end < bytes.len() && bytes[end] == b'}' {
                found.push((i, end + 1, &text[start..end]));
                i = end + 1;
                continue;
            }
        }
        i += 1;
    }
    found
}

fn check_placeholders(fragment: &str, text: &str, required: &[&str]) -> Result<(), PromptError> {
    let present: BTreeSet<&str> = placeholders(text).into_iter().map(|(_, _, n)| n).collect();
    let required: BTreeSet<&str> = required.iter().copied().collect();
    let unknown: Vec<_> = present.difference(&required).collect();
    let missing: Vec<_> = required.difference(&present).collect();
    if !unknown.is_empty() || !missing.is_empty() {
        return Err(PromptError::Template {
            fragment: fragment.to_string(),
            reason: format!("unknown placeholders {unknown:?}, missing placeholders {missing:?}"),
        });
    }
    Ok(())
}

/// Single-pass substitution; substituted values are never rescanned.
fn fill(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut last = 0;
    for (start, end, name) in placeholders(template) {
        out.push_str(&template[last..start]);
        let value = values
            .iter()
            .find(|(k, _)| *k == name)
            .map(|(_, v)| *v)
            .expect("placeholders validated at load");
        out.push_str(value);
        last = end;
    }
    out.push_str(&template[last..]);
    out
}

/// Numbers of lines that look like `N. ...` at the start of a line.
pub fn step_markers(text: &str) -> Vec<usize> {
    text.lines()
        .filter_map(|line| {
            let line = line.trim_start();
            let digits: String = line.chars().take_while(|c| c.is_ascii_digit()).collect();
            if digits.is_empty() || !line[digits.len()..].starts_with(". ") {
                return None;
            }
            digits.parse().ok()
        })
        .collect()
}

/// Everything sent to the model for one request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PromptBundle {
    pub system_text: String,
    pub user_text: String,
    #[serde(skip)]
    pub image_attachments: Vec<CapturedContext>,
    pub response_schema_hint: String,
    pub template_version: String,
    /// Set on the single corrective re-invocation after an unreadable reply.
    pub corrective: bool,
}

impl PromptBundle {
    pub fn image(&self) -> Option<&CapturedContext> {
        self.image_attachments.first()
    }
}

#[derive(Debug, Clone)]
pub struct PromptEngine {
    templates: Arc<TemplateSet>,
}

impl Default for PromptEngine {
    fn default() -> Self {
        Self::new(TemplateSet::builtin())
    }
}

impl PromptEngine {
    pub fn new(templates: TemplateSet) -> Self {
        PromptEngine {
            templates: Arc::new(templates),
        }
    }

    pub fn templates(&self) -> &TemplateSet {
        &self.templates
    }

    pub fn build_context_preamble(&self, profile: &UserProfile) -> Result<String, PromptError> {
        let descriptor = self
            .templates
            .descriptor(profile.cvd_type)
            .ok_or(PromptError::UnknownCvdType(profile.cvd_type))?;
        let mut text = fill(
            &self.templates.preamble,
            &[
                ("cvd_type", profile.cvd_type.as_str()),
                ("descriptor", descriptor),
            ],
        );
        if let Some(notes) = profile.notes.as_deref().filter(|n| !n.trim().is_empty()) {
            text.push_str("\n\n");
            text.push_str(&fill(&self.templates.notes, &[("notes", notes)]));
        }
        Ok(text)
    }

    pub fn build_cot_instructions(&self) -> String {
        self.templates.cot.clone()
    }

    pub fn build_request_section(&self, request: &SupportRequest) -> String {
        match request {
            SupportRequest::Explicit { text } => {
                // Line breaks in the utterance would let it fake step lines.
                let one_line = text.lines().collect::<Vec<_>>().join(" ");
                fill(&self.templates.request_explicit, &[("utterance", &one_line)])
            }
            SupportRequest::Implicit => self.templates.request_implicit.clone(),
        }
    }

    pub fn assemble_prompt(
        &self,
        profile: &UserProfile,
        request: &SupportRequest,
        context: &CapturedContext,
    ) -> Result<PromptBundle, PromptError> {
        let system_text = self.build_context_preamble(profile)?;
        let user_text = format!(
            "{}\n\n{}\n\n{}",
            self.build_request_section(request),
            self.build_cot_instructions(),
            self.templates.schema_hint
        );
        Ok(PromptBundle {
            system_text,
            user_text,
            image_attachments: vec![context.clone()],
            response_schema_hint: self.templates.schema_hint.clone(),
            template_version: self.templates.version.clone(),
            corrective: false,
        })
    }

    /// The bundle for the one retry after an unreadable reply.
    pub fn corrective_bundle(&self, bundle: &PromptBundle) -> PromptBundle {
        let mut next = bundle.clone();
        next.user_text = format!("{}\n\n{}", bundle.user_text, self.templates.corrective);
        next.corrective = true;
        next
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{make_user_profile, ImageSource};
    use chrono::{TimeZone, Utc};
    use proptest::prelude::*;

    fn context() -> CapturedContext {
        let img = image::RgbImage::from_pixel(64, 64, image::Rgb([0, 0, 0]));
        let mut out = std::io::Cursor::new(Vec::new());
        img.write_to(&mut out, image::ImageFormat::Png).unwrap();
        CapturedContext::new(
            out.into_inner(),
            ImageSource::Fixture,
            Some("traffic_light_a".into()),
            Utc.with_ymd_and_hms(2024, 5, 1, 12, 0, 0).unwrap(),
            1 << 20,
        )
        .unwrap()
    }

    fn profile(t: CvdType, notes: Option<&str>) -> UserProfile {
        make_user_profile("Alice", t, notes).unwrap()
    }

    #[test]
    fn protanomaly_preamble_mentions_red_sensitivity() {
        let engine = PromptEngine::default();
        let text = engine
            .build_context_preamble(&profile(CvdType::Protanomaly, None))
            .unwrap();
        assert!(text.contains("reduced sensitivity to red light"));
        assert!(text.contains("protanomaly"));
    }

    #[test]
    fn deuteranomaly_preamble_mentions_green_sensitivity() {
        let engine = PromptEngine::default();
        let text = engine
            .build_context_preamble(&profile(CvdType::Deuteranomaly, None))
            .unwrap();
        assert!(text.contains("reduced sensitivity to green light"));
    }

    #[test]
    fn preamble_carries_notes() {
        let engine = PromptEngine::default();
        let text = engine
            .build_context_preamble(&profile(CvdType::Protanomaly, Some("prefers terse replies")))
            .unwrap();
        assert!(text.contains("prefers terse replies"));
    }

    #[test]
    fn every_type_has_a_descriptor_in_its_preamble() {
        let engine = PromptEngine::default();
        for t in CvdType::ALL {
            let descriptor = engine.templates().descriptor(t).unwrap();
            assert!(!descriptor.trim().is_empty());
            let text = engine.build_context_preamble(&profile(t, None)).unwrap();
            assert!(text.contains(descriptor), "{t}");
        }
    }

    #[test]
    fn cot_steps_in_order() {
        let engine = PromptEngine::default();
        let cot = engine.build_cot_instructions();
        assert_eq!(cot, engine.build_cot_instructions());
        assert_eq!(step_markers(&cot), vec![1, 2, 3, 4]);
        let step3 = cot.lines().find(|l| l.starts_with("3. ")).unwrap();
        assert!(step3.contains("at most 10 words"));
        let situation = cot.find("environmental situation").unwrap();
        let intent = cot.find("intent").unwrap();
        assert!(situation < intent);
        let emphasis = cot.find("emphasized").unwrap();
        assert!(cot.find("at most 10 words").unwrap() < emphasis);
    }

    #[test]
    fn request_sections() {
        let engine = PromptEngine::default();
        let explicit = engine.build_request_section(&SupportRequest::Explicit {
            text: "Please tell me the color of the traffic light".into(),
        });
        assert!(explicit.contains("\"Please tell me the color of the traffic light\""));

        let shirt = engine.build_request_section(&SupportRequest::Explicit {
            text: "Is this shirt green?".into(),
        });
        assert!(shirt.contains("Is this shirt green?"));

        let implicit = engine.build_request_section(&SupportRequest::Implicit);
        assert!(implicit.contains("Infer"));
        assert!(!implicit.contains("The user asked"));
        assert!(!implicit.contains('"'));
    }

    #[test]
    fn assembled_bundle_shape() {
        let engine = PromptEngine::default();
        let p = profile(CvdType::Protanomaly, None);
        let ctx = context();
        let bundle = engine
            .assemble_prompt(&p, &SupportRequest::Implicit, &ctx)
            .unwrap();
        assert_eq!(bundle.image_attachments.len(), 1);
        assert_eq!(step_markers(&bundle.user_text), vec![1, 2, 3, 4]);
        assert!(bundle.user_text.ends_with(&bundle.response_schema_hint));
        assert_eq!(
            bundle,
            engine.assemble_prompt(&p, &SupportRequest::Implicit, &ctx).unwrap()
        );

        let explicit = SupportRequest::Explicit {
            text: "Please tell me the color of the traffic light".into(),
        };
        let bundle = engine.assemble_prompt(&p, &explicit, &ctx).unwrap();
        assert!(bundle.user_text.contains("Please tell me the color of the traffic light"));
        assert!(bundle.user_text.contains("at most 10 words"));
        assert!(bundle.system_text.contains("reduced sensitivity to red light"));
    }

    #[test]
    fn corrective_bundle_appends_instruction() {
        let engine = PromptEngine::default();
        let bundle = engine
            .assemble_prompt(&profile(CvdType::Tritanopia, None), &SupportRequest::Implicit, &context())
            .unwrap();
        let next = engine.corrective_bundle(&bundle);
        assert!(next.corrective);
        assert!(next.user_text.starts_with(&bundle.user_text));
        assert!(next.user_text.contains("only the JSON object"));
        assert_eq!(step_markers(&next.user_text), vec![1, 2, 3, 4]);
    }

    #[test]
    fn placeholder_scanner_ignores_json_braces() {
        let found: Vec<_> = placeholders(r#"{"a": 1} {name} {Bad} {}"#)
            .into_iter()
            .map(|(_, _, n)| n)
            .collect();
        assert_eq!(found, vec!["name"]);
        assert_eq!(fill("x {a} {b}", &[("a", "{b}"), ("b", "2")]), "x {b} 2");
    }

    fn write_builtin(dir: &Path) {
        for (name, _) in FRAGMENTS {
            let src = Path::new(env!("CARGO_MANIFEST_DIR")).join(format!("templates/v1/{name}.txt"));
            std::fs::copy(src, dir.join(format!("{name}.txt"))).unwrap();
        }
        std::fs::copy(
            Path::new(env!("CARGO_MANIFEST_DIR")).join("templates/v1/descriptors.json"),
            dir.join("descriptors.json"),
        )
        .unwrap();
    }

    #[test]
    fn loading_from_disk_matches_builtin() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("v1");
        std::fs::create_dir(&dir).unwrap();
        write_builtin(&dir);
        assert_eq!(TemplateSet::load(&dir).unwrap(), TemplateSet::builtin());
    }

    #[test]
    fn loading_rejects_bad_placeholders() {
        let tmp = tempfile::tempdir().unwrap();
        write_builtin(tmp.path());

        std::fs::write(tmp.path().join("preamble.txt"), "User has {cvd_type}.").unwrap();
        let err = TemplateSet::load(tmp.path()).unwrap_err();
        assert!(err.to_string().contains("descriptor"), "{err}");

        std::fs::write(
            tmp.path().join("preamble.txt"),
            "User has {cvd_type}: {descriptor} {colour}.",
        )
        .unwrap();
        let err = TemplateSet::load(tmp.path()).unwrap_err();
        assert!(err.to_string().contains("colour"), "{err}");
    }

    #[test]
    fn loading_rejects_wrong_step_count() {
        let tmp = tempfile::tempdir().unwrap();
        write_builtin(tmp.path());
        std::fs::write(tmp.path().join("cot.txt"), "1. look\n2. think\n3. answer\n").unwrap();
        assert!(TemplateSet::load(tmp.path()).is_err());

        write_builtin(tmp.path());
        std::fs::write(tmp.path().join("schema_hint.txt"), "5. extra step\n").unwrap();
        assert!(TemplateSet::load(tmp.path()).is_err());
    }

    #[test]
    fn missing_file_is_io_error() {
        let tmp = tempfile::tempdir().unwrap();
        assert!(matches!(
            TemplateSet::load(tmp.path()),
            Err(PromptError::Io { .. })
        ));
    }

    proptest! {
        #[test]
        fn user_text_always_has_four_steps(utter in "\\PC{1,60}", t in proptest::sample::select(CvdType::ALL.to_vec())) {
            prop_assume!(!utter.trim().is_empty());
            let engine = PromptEngine::default();
            let req = SupportRequest::Explicit { text: utter.replace("\n1. ", " ") };
            let bundle = engine.assemble_prompt(&profile(t, None), &req, &context()).unwrap();
            prop_assert_eq!(step_markers(&bundle.user_text), vec![1, 2, 3, 4]);
        }

        #[test]
        fn multiline_utterances_cannot_add_steps(a in "[a-z ]{1,10}", n in 1usize..9) {
            let engine = PromptEngine::default();
            let req = SupportRequest::Explicit { text: format!("{a}\n{n}. fake step") };
            let bundle = engine.assemble_prompt(&profile(CvdType::Protanopia, None), &req, &context()).unwrap();
            prop_assert_eq!(step_markers(&bundle.user_text), vec![1, 2, 3, 4]);
        }
    }
}
