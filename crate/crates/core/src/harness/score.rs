use serde::{Deserialize, Serialize};

use crate::parser::strip_markers;
use crate::pipeline::SupportResponse;

use super::scenario::{Environment, Scenario, ScenarioCase};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseError {
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseResult {
    pub case_id: String,
    pub scenario: Scenario,
    pub environment: Environment,
    pub passed: bool,
    pub matched_keywords: Vec<String>,
    pub missing_keywords: Vec<String>,
    pub matched_intent_keywords: Vec<String>,
    pub missing_intent_keywords: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<SupportResponse>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<CaseError>,
}

fn partition(haystack: &str, needles: &[String]) -> (Vec<String>, Vec<String>) {
    let haystack = haystack.to_lowercase();
    needles
        .iter()
        .cloned()
        .partition(|k| haystack.contains(&k.to_lowercase()))
}

/// A case passes when every gold keyword appears in the support text and
/// every gold intent keyword appears in the inferred intent, both compared
/// case-insensitively with emphasis markers removed.
pub fn score_case(case: &ScenarioCase, response: &SupportResponse) -> CaseResult {
    let support = strip_markers(&response.content.support_text);
    let (matched_keywords, missing_keywords) = partition(&support, &case.gold_keywords);
    let (matched_intent_keywords, missing_intent_keywords) =
        partition(&strip_markers(&response.trace.intent), &case.gold_intent_keywords);
    CaseResult {
        case_id: case.case_id.clone(),
        scenario: case.scenario,
        environment: case.environment,
        passed: missing_keywords.is_empty() && missing_intent_keywords.is_empty(),
        matched_keywords,
        missing_keywords,
        matched_intent_keywords,
        missing_intent_keywords,
        response: Some(response.clone()),
        error: None,
    }
}

/// Result for a case whose pipeline run failed.
pub fn failed_case(case: &ScenarioCase, error: CaseError) -> CaseResult {
    CaseResult {
        case_id: case.case_id.clone(),
        scenario: case.scenario,
        environment: case.environment,
        passed: false,
        matched_keywords: Vec::new(),
        missing_keywords: case.gold_keywords.clone(),
        matched_intent_keywords: Vec::new(),
        missing_intent_keywords: case.gold_intent_keywords.clone(),
        response: None,
        error: Some(error),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{ReasoningTrace, SupportContent};
    use crate::harness::oracle::oracle_answer;
    use crate::harness::scenario::shipped_cases;
    use crate::parser::validate_support_content;

    fn response(support: &str, intent: &str) -> SupportResponse {
        SupportResponse {
            request_id: "r".into(),
            content: SupportContent {
                support_text: support.into(),
                emphasis_terms: vec![],
                rendered: support.into(),
            },
            trace: ReasoningTrace {
                situation: "s".into(),
                intent: intent.into(),
                support_text: support.into(),
                emphasis_terms: vec![],
            },
            warnings: vec![],
            latency_ms: 0,
        }
    }

    fn case(gold: &[&str]) -> ScenarioCase {
        let mut c = shipped_cases().remove(0);
        c.gold_keywords = gold.iter().map(|s| s.to_string()).collect();
        c
    }

    #[test]
    fn containment_after_marker_removal() {
        let r = score_case(&case(&["green"]), &response("The traffic light is **green**", "traffic light check"));
        assert!(r.passed);
        assert_eq!(r.matched_keywords, vec!["green"]);
    }

    #[test]
    fn case_insensitive() {
        assert!(score_case(&case(&["Green"]), &response("it is green now", "Traffic Light")).passed);
    }

    #[test]
    fn absent_keyword_fails() {
        let r = score_case(&case(&["red"]), &response("The light is green", "traffic light"));
        assert!(!r.passed);
        assert_eq!(r.missing_keywords, vec!["red"]);
    }

    #[test]
    fn wrong_intent_fails() {
        let r = score_case(&case(&["green"]), &response("The light is green", "clothing"));
        assert!(!r.passed);
        assert_eq!(r.missing_intent_keywords, vec!["traffic light"]);
    }

    #[test]
    fn oracle_responses_pass_every_shipped_case() {
        for c in shipped_cases() {
            let trace = oracle_answer(&c);
            let v = validate_support_content(&trace).unwrap();
            let resp = SupportResponse {
                request_id: "r".into(),
                content: v.content,
                trace,
                warnings: vec![],
                latency_ms: 0,
            };
            assert!(score_case(&c, &resp).passed, "{}", c.case_id);
        }
    }
}
