//! Scenario evaluation: five everyday scenarios in two environments each,
//! scored by keyword containment.

pub mod oracle;
pub mod scenario;
pub mod score;
pub mod suite;
pub mod synth;

use std::path::Path;

pub use oracle::{fixture_body, oracle_answer, write_fixtures};
pub use scenario::{
    load_scenarios, shipped_cases, validate_suite, Environment, Scenario, ScenarioCase,
    ScenarioError,
};
pub use score::{score_case, CaseError, CaseResult};
pub use suite::{run_suite, CaseExecutor, PipelineExecutor, SuiteError, SuiteReport};

/// Writes the shipped suite into `dir`: `shipped.json`, `images/` and
/// `fixtures/`.
pub fn write_shipped_suite(dir: &Path) -> Result<(), Box<dyn std::error::Error + Send + Sync>> {
    let cases = shipped_cases();
    std::fs::create_dir_all(dir)?;
    synth::write_images(&cases, dir)?;
    write_fixtures(&cases, &dir.join("fixtures"))?;
    let mut manifest = serde_json::to_string_pretty(&cases)?;
    manifest.push('\n');
    std::fs::write(dir.join("shipped.json"), manifest)?;
    Ok(())
}
