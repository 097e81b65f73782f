use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{word_count, RequestMode, MAX_SUPPORT_WORDS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    TrafficLight,
    MeatDoneness,
    FruitRipeness,
    ClothingCoordination,
    TransitSigns,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [
        Scenario::TrafficLight,
        Scenario::MeatDoneness,
        Scenario::FruitRipeness,
        Scenario::ClothingCoordination,
        Scenario::TransitSigns,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::TrafficLight => "traffic_light",
            Scenario::MeatDoneness => "meat_doneness",
            Scenario::FruitRipeness => "fruit_ripeness",
            Scenario::ClothingCoordination => "clothing_coordination",
            Scenario::TransitSigns => "transit_signs",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Environment {
    A,
    B,
}

impl Environment {
    pub const ALL: [Environment; 2] = [Environment::A, Environment::B];
}

impl fmt::Display for Environment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Environment::A => "a",
            Environment::B => "b",
        })
    }
}

/// One evaluation fixture. `image_path` is relative to the manifest's
/// directory unless absolute.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioCase {
    pub case_id: String,
    pub scenario: Scenario,
    pub environment: Environment,
    pub image_path: PathBuf,
    pub mode: RequestMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub utterance: Option<String>,
    pub gold_keywords: Vec<String>,
    pub gold_intent_keywords: Vec<String>,
}

impl ScenarioCase {
    /// Key the mock backend uses for this case's reply.
    pub fn fixture_key(&self) -> String {
        self.image_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid manifest: {0}")]
    ManifestInvalid(String),
    #[error("missing image {}", .0.display())]
    MissingImage(PathBuf),
}

fn invalid(reason: impl Into<String>) -> ScenarioError {
    ScenarioError::ManifestInvalid(reason.into())
}

fn check_keywords(case: &ScenarioCase, field: &str, keywords: &[String]) -> Result<(), ScenarioError> {
    if keywords.is_empty() {
        return Err(invalid(format!("{}: {field} must not be empty", case.case_id)));
    }
    for k in keywords {
        if k.trim().is_empty() || k.trim() != k || k.contains('*') {
            return Err(invalid(format!("{}: bad {field} entry {k:?}", case.case_id)));
        }
    }
    Ok(())
}

/// Checks one case in isolation.
pub fn validate_case(case: &ScenarioCase) -> Result<(), ScenarioError> {
    if case.case_id.trim().is_empty() {
        return Err(invalid("case_id must not be empty"));
    }
    match (case.mode, case.utterance.as_deref()) {
        (RequestMode::Explicit, Some(u)) if !u.trim().is_empty() => {}
        (RequestMode::Explicit, _) => {
            return Err(invalid(format!("{}: explicit case needs an utterance", case.case_id)))
        }
        (RequestMode::Implicit, None) => {}
        (RequestMode::Implicit, Some(_)) => {
            return Err(invalid(format!("{}: implicit case must not carry an utterance", case.case_id)))
        }
    }
    check_keywords(case, "gold_keywords", &case.gold_keywords)?;
    check_keywords(case, "gold_intent_keywords", &case.gold_intent_keywords)?;
    // The oracle must be able to state every keyword within the word limit.
    if word_count(&case.gold_keywords.join(" and ")) > MAX_SUPPORT_WORDS {
        return Err(invalid(format!(
            "{}: gold keywords do not fit in {MAX_SUPPORT_WORDS} words",
            case.case_id
        )));
    }
    if case.fixture_key().is_empty() {
        return Err(invalid(format!("{}: image_path has no file name", case.case_id)));
    }
    Ok(())
}

/// Checks a whole suite: unique ids and every scenario × environment pair.
pub fn validate_suite(cases: &[ScenarioCase]) -> Result<(), ScenarioError> {
    let mut ids = HashSet::new();
    let mut keys = HashSet::new();
    for case in cases {
        validate_case(case)?;
        if !ids.insert(case.case_id.as_str()) {
            return Err(invalid(format!("duplicate case_id {}", case.case_id)));
        }
        if !keys.insert(case.fixture_key()) {
            return Err(invalid(format!(
                "{}: image file stem `{}` is used by another case",
                case.case_id,
                case.fixture_key()
            )));
        }
    }
    let covered: BTreeSet<_> = cases.iter().map(|c| (c.scenario, c.environment)).collect();
    let missing: Vec<String> = Scenario::ALL
        .iter()
        .flat_map(|s| Environment::ALL.iter().map(move |e| (*s, *e)))
        .filter(|pair| !covered.contains(pair))
        .map(|(s, e)| format!("{s}/{e}"))
        .collect();
    if !missing.is_empty() {
        return Err(invalid(format!("no case for {}", missing.join(", "))));
    }
    Ok(())
}

/// Parses a JSON manifest, resolves image paths against its directory and
/// validates the suite.
pub fn load_scenarios(manifest_path: &Path) -> Result<Vec<ScenarioCase>, ScenarioError> {
    let text = std::fs::read_to_string(manifest_path)
        .map_err(|e| invalid(format!("reading {}: {e}", manifest_path.display())))?;
    let mut cases: Vec<ScenarioCase> =
        serde_json::from_str(&text).map_err(|e| invalid(e.to_string()))?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    for case in &mut cases {
        if case.image_path.is_relative() {
            case.image_path = base.join(&case.image_path);
        }
    }
    validate_suite(&cases)?;
    for case in &cases {
        if !case.image_path.is_file() {
            return Err(ScenarioError::MissingImage(case.image_path.clone()));
        }
    }
    Ok(cases)
}

struct Spec {
    scenario: Scenario,
    environment: Environment,
    utterance: Option<&'static str>,
    gold: &'static [&'static str],
    intent: &'static [&'static str],
}

const SHIPPED: &[Spec] = &[
    Spec {
        scenario: Scenario::TrafficLight,
        environment: Environment::A,
        utterance: Some("Please tell me the color of the traffic light"),
        gold: &["green"],
        intent: &["traffic light"],
    },
    Spec {
        scenario: Scenario::TrafficLight,
        environment: Environment::B,
        utterance: None,
        gold: &["red"],
        intent: &["traffic light"],
    },
    Spec {
        scenario: Scenario::MeatDoneness,
        environment: Environment::A,
        utterance: None,
        gold: &["cooked"],
        intent: &["doneness"],
    },
    Spec {
        scenario: Scenario::MeatDoneness,
        environment: Environment::B,
        utterance: Some("Is this meat ready to eat?"),
        gold: &["raw"],
        intent: &["doneness"],
    },
    Spec {
        scenario: Scenario::FruitRipeness,
        environment: Environment::A,
        utterance: None,
        gold: &["left"],
        intent: &["ripe"],
    },
    Spec {
        scenario: Scenario::FruitRipeness,
        environment: Environment::B,
        utterance: Some("Which of these tomatoes is ripe?"),
        gold: &["right"],
        intent: &["ripe"],
    },
    Spec {
        scenario: Scenario::ClothingCoordination,
        environment: Environment::A,
        utterance: Some("What color is this shirt?"),
        gold: &["navy"],
        intent: &["outfit"],
    },
    Spec {
        scenario: Scenario::ClothingCoordination,
        environment: Environment::B,
        utterance: None,
        gold: &["olive green"],
        intent: &["outfit"],
    },
    Spec {
        scenario: Scenario::TransitSigns,
        environment: Environment::A,
        utterance: None,
        gold: &["orange line"],
        intent: &["sign"],
    },
    Spec {
        scenario: Scenario::TransitSigns,
        environment: Environment::B,
        utterance: Some("Which sign leads to the exit?"),
        gold: &["green exit"],
        intent: &["sign"],
    },
];

/// The built-in ten-case suite with image paths of the form
/// `images/<case_id>.png`.
pub fn shipped_cases() -> Vec<ScenarioCase> {
    SHIPPED
        .iter()
        .map(|s| {
            let case_id = format!("{}_{}", s.scenario, s.environment);
            ScenarioCase {
                image_path: PathBuf::from(format!("images/{case_id}.png")),
                case_id,
                scenario: s.scenario,
                environment: s.environment,
                mode: if s.utterance.is_some() {
                    RequestMode::Explicit
                } else {
                    RequestMode::Implicit
                },
                utterance: s.utterance.map(str::to_string),
                gold_keywords: s.gold.iter().map(|k| k.to_string()).collect(),
                gold_intent_keywords: s.intent.iter().map(|k| k.to_string()).collect(),
            }
        })
        .collect()
}
