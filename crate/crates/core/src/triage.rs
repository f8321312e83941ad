//! Confirmation pass: resample each candidate, judge the completions against
//! the token text, and classify the candidate.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_case_mapping::case_folded;

use crate::client::wire::Usage;
use crate::client::{ClientError, LlmClient};
use crate::jsonl::{JsonlContents, JsonlError, JsonlWriter};
use crate::metrics::ConfidenceMetrics;
use crate::scan::{Candidate, CandidateReason, CandidateSet};
use crate::vocab::TokenId;

pub const DEFAULT_SAMPLES: usize = 10;

#[derive(Error, Debug)]
pub enum TriageError {
    #[error("invalid confirmation configuration: {0}")]
    Config(String),
    #[error("confirmation checkpoint: {0}")]
    Checkpoint(#[from] JsonlError),
    #[error("confirmation checkpoint {path} does not match this run: {reason}")]
    Mismatch { path: PathBuf, reason: String },
    #[error("confirmation interrupted after {completed} candidates: {source}; rerun with the same checkpoint to resume")]
    Interrupted {
        completed: usize,
        #[source]
        source: ClientError,
    },
}

/// Strips every whitespace character and applies simple Unicode case folding.
pub fn normalize(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars().filter(|c| !c.is_whitespace()) {
        match case_folded(c) {
            Some(f) => out.push(char::from_u32(f.get()).unwrap_or(c)),
            None => out.push(c),
        }
    }
    out
}

pub fn is_repetition(input: &str, output: &str) -> bool {
    normalize(input) == normalize(output)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfirmationOutcome {
    pub completion_text: String,
    pub matched: bool,
    /// Final HTTP status when the request failed after retries.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<u16>,
    #[serde(default)]
    pub empty_logprobs: bool,
    #[serde(default)]
    pub usage: Usage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfirmationRun {
    pub token_id: TokenId,
    pub token_text: String,
    /// Requested sample count.
    pub samples: usize,
    pub outcomes: Vec<ConfirmationOutcome>,
    /// Sampling stopped early because the token fails permanently.
    #[serde(default)]
    pub truncated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Major,
    Minor,
    FalsePositive,
    NoResult,
    PermanentError,
}

impl Classification {
    pub const ALL: [Classification; 5] = [
        Classification::Major,
        Classification::Minor,
        Classification::FalsePositive,
        Classification::NoResult,
        Classification::PermanentError,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Classification::Major => "major",
            Classification::Minor => "minor",
            Classification::FalsePositive => "false_positive",
            Classification::NoResult => "no_result",
            Classification::PermanentError => "permanent_error",
        }
    }

    /// Reported together as major anomalies.
    pub fn is_severe(self) -> bool {
        matches!(self, Classification::Major | Classification::NoResult)
    }
}

impl std::fmt::Display for Classification {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyRecord {
    pub token_id: TokenId,
    pub token_text: String,
    pub classification: Classification,
    pub off_target_count: usize,
    /// Scan-pass metrics; absent for no-result and error candidates.
    pub metrics: Option<ConfidenceMetrics>,
    pub evidence: ConfirmationRun,
}

/// Majority rule over `n` samples: strictly more than half off target.
pub fn classify_count(off_target: usize, n: usize) -> Classification {
    if off_target == 0 {
        Classification::FalsePositive
    } else if 2 * off_target > n {
        Classification::Major
    } else {
        Classification::Minor
    }
}

pub fn classify(run: ConfirmationRun, metrics: Option<ConfidenceMetrics>) -> AnomalyRecord {
    let off_target_count = run.outcomes.iter().filter(|o| !o.matched).count();
    let all = |f: fn(&ConfirmationOutcome) -> bool| !run.outcomes.is_empty() && run.outcomes.iter().all(f);
    let classification = if run.truncated || all(|o| o.error.is_some()) {
        Classification::PermanentError
    } else if all(|o| o.empty_logprobs) {
        Classification::NoResult
    } else {
        classify_count(off_target_count, run.outcomes.len())
    };
    AnomalyRecord {
        token_id: run.token_id,
        token_text: run.token_text.clone(),
        classification,
        off_target_count,
        metrics,
        evidence: run,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfirmConfig {
    pub samples: usize,
    pub concurrency: usize,
    pub checkpoint_path: PathBuf,
}

impl ConfirmConfig {
    pub fn new(checkpoint_path: impl Into<PathBuf>) -> Self {
        Self {
            samples: DEFAULT_SAMPLES,
            concurrency: 4,
            checkpoint_path: checkpoint_path.into(),
        }
    }
}

/// Records already in a confirmation checkpoint, keyed by token id.
pub fn load_confirmations(path: &Path) -> Result<(BTreeMap<TokenId, AnomalyRecord>, u64), TriageError> {
    let contents = JsonlContents::read(path)?;
    let mut out = BTreeMap::new();
    for i in 0..contents.lines.len() {
        let r: AnomalyRecord = contents.parse_line(path, i)?;
        let id = r.token_id;
        if out.insert(id, r).is_some() {
            return Err(TriageError::Checkpoint(JsonlError::Corrupt {
                path: path.to_path_buf(),
                line: i + 1,
                message: format!("token {id} recorded twice"),
            }));
        }
    }
    Ok((out, contents.valid_len))
}

/// Confirms every candidate, resuming from `cfg.checkpoint_path` when it
/// already holds records. Returns one record per candidate in id order.
pub async fn run_confirmation(
    client: &LlmClient,
    candidates: &CandidateSet,
    cfg: &ConfirmConfig,
) -> Result<Vec<AnomalyRecord>, TriageError> {
    if cfg.samples == 0 || cfg.concurrency == 0 {
        return Err(TriageError::Config("samples and concurrency must be at least 1".into()));
    }
    let path = &cfg.checkpoint_path;
    let (mut done, valid_len) = load_confirmations(path)?;
    for r in done.values() {
        let reason = match candidates.get(r.token_id) {
            None => Some(format!("token {} is not a candidate", r.token_id)),
            Some(c) if c.text != r.token_text => Some(format!("token {} text differs", r.token_id)),
            Some(_) if r.evidence.samples != cfg.samples => Some(format!(
                "recorded with {} samples, requested {}",
                r.evidence.samples, cfg.samples
            )),
            Some(_) => None,
        };
        if let Some(reason) = reason {
            return Err(TriageError::Mismatch { path: path.clone(), reason });
        }
    }
    let mut writer = JsonlWriter::open(path, valid_len)?;

    let pending: Vec<&Candidate> = candidates.iter().filter(|c| !done.contains_key(&c.id)).collect();
    log::info!("confirming {} candidates ({} already recorded)", pending.len(), done.len());
    let samples = cfg.samples;
    let mut results = stream::iter(pending)
        .map(|c| confirm_candidate(client, c, samples))
        .buffered(cfg.concurrency);
    while let Some(result) = results.next().await {
        match result {
            Ok(record) => {
                writer.append(&record)?;
                done.insert(record.token_id, record);
            }
            Err(source) => {
                drop(results);
                writer.finish()?;
                return Err(TriageError::Interrupted {
                    completed: done.len(),
                    source,
                });
            }
        }
    }
    writer.finish()?;
    Ok(done.into_values().collect())
}

async fn confirm_candidate(
    client: &LlmClient,
    candidate: &Candidate,
    samples: usize,
) -> Result<AnomalyRecord, ClientError> {
    let stop_on_error = matches!(candidate.reason, CandidateReason::PermError { .. });
    let mut outcomes = Vec::with_capacity(samples);
    let mut truncated = false;
    for _ in 0..samples {
        let o = client.confirm_probe(&candidate.text).await?;
        let errored = o.error.is_some();
        outcomes.push(ConfirmationOutcome {
            matched: !errored && is_repetition(&candidate.text, &o.text),
            completion_text: o.text,
            error: o.error,
            empty_logprobs: o.empty_logprobs,
            usage: o.usage,
        });
        if errored && stop_on_error {
            truncated = outcomes.len() < samples;
            break;
        }
    }
    let run = ConfirmationRun {
        token_id: candidate.id,
        token_text: candidate.text.clone(),
        samples,
        outcomes,
        truncated,
    };
    Ok(classify(run, candidate.metrics()))
}

/// Distinct classifications present, for quick summaries.
pub fn classifications(records: &[AnomalyRecord]) -> HashSet<Classification> {
    records.iter().map(|r| r.classification).collect()
}
