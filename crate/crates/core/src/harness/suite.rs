use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use async_trait::async_trait;
use chrono::Utc;
use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{CapturedContext, ImageSource, ModeHint, RequestMode, UserProfile};
use crate::pipeline::{Pipeline, SupportResponse};

use super::scenario::ScenarioCase;
use super::score::{failed_case, score_case, CaseError, CaseResult};

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error("suite has no cases")]
    EmptySuite,
    #[error("writing report to {}: {source}", path.display())]
    Report {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Anything that can answer a scenario case end to end: the in-process
/// pipeline or a running service.
#[async_trait]
pub trait CaseExecutor: Send + Sync {
    async fn execute(&self, case: &ScenarioCase) -> Result<SupportResponse, CaseError>;
}

/// Runs cases through an in-process [`Pipeline`] for one profile.
pub struct PipelineExecutor {
    pub pipeline: Pipeline,
    pub profile: UserProfile,
    pub max_image_bytes: usize,
}

#[async_trait]
impl CaseExecutor for PipelineExecutor {
    async fn execute(&self, case: &ScenarioCase) -> Result<SupportResponse, CaseError> {
        let bytes = tokio::fs::read(&case.image_path).await.map_err(|e| CaseError {
            kind: "missing_image".into(),
            message: format!("{}: {e}", case.image_path.display()),
        })?;
        let context = CapturedContext::new(
            bytes,
            ImageSource::Fixture,
            Some(case.fixture_key()),
            Utc::now(),
            self.max_image_bytes,
        )
        .map_err(|e| CaseError {
            kind: crate::pipeline::PipelineError::from(e.clone()).kind().into(),
            message: e.to_string(),
        })?;
        let hint = match case.mode {
            RequestMode::Explicit => ModeHint::VoiceOrText,
            RequestMode::Implicit => ModeHint::Button,
        };
        self.pipeline
            .run(&self.profile, hint, case.utterance.as_deref(), &context)
            .await
            .map_err(|e| CaseError {
                kind: e.kind().into(),
                message: e.to_string(),
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub backend: String,
    pub cases: Vec<CaseResult>,
    pub passed: usize,
    pub total: usize,
    pub accuracy: f64,
    pub wall_time_ms: u64,
}

impl SuiteReport {
    pub fn from_results(backend: &str, cases: Vec<CaseResult>, wall_time_ms: u64) -> Self {
        let passed = cases.iter().filter(|c| c.passed).count();
        let total = cases.len();
        SuiteReport {
            backend: backend.to_string(),
            accuracy: if total == 0 { 0.0 } else { passed as f64 / total as f64 },
            cases,
            passed,
            total,
            wall_time_ms,
        }
    }

    pub fn all_passed(&self) -> bool {
        self.total > 0 && self.passed == self.total
    }

    pub fn to_markdown(&self) -> String {
        let mut md = String::new();
        let _ = writeln!(md, "# Scenario suite report\n");
        let _ = writeln!(
            md,
            "Backend: `{}`. Accuracy: **{}/{}** ({:.1}%). Wall time: {} ms.\n",
            self.backend,
            self.passed,
            self.total,
            self.accuracy * 100.0,
            self.wall_time_ms
        );
        let _ = writeln!(md, "| case | scenario | env | result | support text | missing |");
        let _ = writeln!(md, "|---|---|---|---|---|---|");
        for c in &self.cases {
            let support = match (&c.response, &c.error) {
                (Some(r), _) => r.content.rendered.replace('|', "\\|"),
                (None, Some(e)) => format!("error `{}`", e.kind),
                (None, None) => String::new(),
            };
            let missing: Vec<&str> = c
                .missing_keywords
                .iter()
                .chain(&c.missing_intent_keywords)
                .map(String::as_str)
                .collect();
            let _ = writeln!(
                md,
                "| {} | {} | {} | {} | {} | {} |",
                c.case_id,
                c.scenario,
                c.environment,
                if c.passed { "pass" } else { "FAIL" },
                support,
                missing.join(", ")
            );
        }
        md
    }

    /// Writes `report.json` and `report.md` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(PathBuf, PathBuf), SuiteError> {
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| SuiteError::Report { path, source }
        };
        std::fs::create_dir_all(dir).map_err(io(dir))?;
        let json_path = dir.join("report.json");
        let md_path = dir.join("report.md");
        let json = serde_json::to_string_pretty(self).expect("report serializes");
        std::fs::write(&json_path, json).map_err(io(&json_path))?;
        std::fs::write(&md_path, self.to_markdown()).map_err(io(&md_path))?;
        Ok((json_path, md_path))
    }
}

/// Executes every case with up to `parallel` in flight, scores each and
/// aggregates. Results keep manifest order regardless of completion order.
pub async fn run_suite(
    cases: &[ScenarioCase],
    executor: &dyn CaseExecutor,
    backend: &str,
    parallel: usize,
) -> Result<SuiteReport, SuiteError> {
    if cases.is_empty() {
        return Err(SuiteError::EmptySuite);
    }
    let started = Instant::now();
    let mut results: Vec<(usize, CaseResult)> = stream::iter(cases.iter().enumerate())
        .map(|(i, case)| async move {
            let result = match executor.execute(case).await {
                Ok(response) => score_case(case, &response),
                Err(error) => failed_case(case, error),
            };
            (i, result)
        })
        .buffer_unordered(parallel.max(1))
        .collect()
        .await;
    results.sort_by_key(|(i, _)| *i);
    Ok(SuiteReport::from_results(
        backend,
        results.into_iter().map(|(_, r)| r).collect(),
        started.elapsed().as_millis() as u64,
    ))
}
