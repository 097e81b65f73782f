//! Rule-based ground truth for scenario cases. Its traces are what the mock
//! backend replays.

use std::path::Path;

use crate::domain::{word_count, ReasoningTrace, MAX_SUPPORT_WORDS};

use super::scenario::{Scenario, ScenarioCase};

struct Wording {
    situation: &'static str,
    intent: &'static str,
    lead: &'static str,
}

fn wording(scenario: Scenario) -> Wording {
    match scenario {
        Scenario::TrafficLight => Wording {
            situation: "A pedestrian traffic signal is ahead",
            intent: "Decide whether it is safe to cross",
            lead: "The traffic light is",
        },
        Scenario::MeatDoneness => Wording {
            situation: "Meat is grilling on a hot plate",
            intent: "Judge whether the meat can be eaten",
            lead: "The meat is",
        },
        Scenario::FruitRipeness => Wording {
            situation: "Two fruits sit side by side on a shelf",
            intent: "Choose the better fruit to buy",
            lead: "Pick the fruit on the",
        },
        Scenario::ClothingCoordination => Wording {
            situation: "A shirt is held up for an outfit",
            intent: "Pick matching colors",
            lead: "The shirt is",
        },
        Scenario::TransitSigns => Wording {
            situation: "Color-coded signs hang in a train station",
            intent: "Find the right route to follow",
            lead: "Follow the",
        },
    }
}

/// Deterministic trace stating every gold keyword, emphasizing each, within
/// the word limit.
pub fn oracle_answer(case: &ScenarioCase) -> ReasoningTrace {
    let w = wording(case.scenario);
    let keywords = case.gold_keywords.join(" and ");
    let with_lead = format!("{} {keywords}", w.lead);
    let support_text = if word_count(&with_lead) <= MAX_SUPPORT_WORDS {
        with_lead
    } else {
        keywords
    };
    ReasoningTrace {
        situation: format!("{} (environment {}).", w.situation, case.environment),
        intent: format!("{}; concerns: {}.", w.intent, case.gold_intent_keywords.join(", ")),
        support_text,
        emphasis_terms: case.gold_keywords.clone(),
    }
}

/// Fixture body for a case: the oracle trace as pretty JSON.
pub fn fixture_body(case: &ScenarioCase) -> String {
    let mut body = serde_json::to_string_pretty(&oracle_answer(case)).expect("trace serializes");
    body.push('\n');
    body
}

/// Writes `<out_dir>/<fixture key>.json` for every case; returns the paths.
pub fn write_fixtures(cases: &[ScenarioCase], out_dir: &Path) -> std::io::Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    cases
        .iter()
        .map(|case| {
            let path = out_dir.join(format!("{}.json", case.fixture_key()));
            std::fs::write(&path, fixture_body(case))?;
            Ok(path)
        })
        .collect()
}
