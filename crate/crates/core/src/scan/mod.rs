//! Full-vocabulary REPEAT scan with a resumable per-token checkpoint.
//!
//! Tokens are probed in ascending id order by a bounded pool of concurrent
//! requests; results are written to the checkpoint in that same order, so the
//! file is always an ordered prefix of the finished scan and resuming yields
//! the same bytes as an uninterrupted run.

mod checkpoint;

use std::collections::BTreeMap;
use std::ops::Range;
use std::path::PathBuf;

use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use checkpoint::{
    CheckpointHeader, FingerprintInput, ProbeStatus, ScanCheckpoint, ScanRecord, CHECKPOINT_VERSION,
};

use crate::client::{ClientError, FinishStatus, LedgerSnapshot, LlmClient};
use crate::jsonl::JsonlError;
use crate::metrics::{
    compute_metrics, is_candidate, BaselineAccumulator, BaselineSummary, ConfidenceMetrics, ThresholdConfig,
};
use crate::vocab::{TokenEntry, TokenId, Vocabulary};

#[derive(Error, Debug)]
pub enum ScanError {
    #[error("invalid scan configuration: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(#[from] JsonlError),
    #[error("checkpoint {0} already exists; load it to resume or choose a new path")]
    CheckpointExists(PathBuf),
    #[error("checkpoint was written with a different configuration (fingerprint {found}, expected {expected})")]
    FingerprintMismatch { expected: String, found: String },
    #[error("scan interrupted after {completed} recorded tokens: {source}; rerun with the same checkpoint to resume")]
    Interrupted {
        completed: usize,
        #[source]
        source: ClientError,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanConfig {
    pub thresholds: ThresholdConfig,
    pub scan_temperature: f64,
    pub concurrency: usize,
    pub checkpoint_path: PathBuf,
    /// Half-open id interval; `None` scans the whole vocabulary.
    pub token_range: Option<Range<TokenId>>,
}

impl ScanConfig {
    pub fn new(checkpoint_path: impl Into<PathBuf>) -> Self {
        Self {
            thresholds: ThresholdConfig::default(),
            scan_temperature: 0.0,
            concurrency: 4,
            checkpoint_path: checkpoint_path.into(),
            token_range: None,
        }
    }

    pub fn validate(&self) -> Result<(), ScanError> {
        self.thresholds
            .validate()
            .map_err(|e| ScanError::Config(e.to_string()))?;
        if self.concurrency == 0 {
            return Err(ScanError::Config("concurrency must be at least 1".into()));
        }
        if !(0.0..=2.0).contains(&self.scan_temperature) {
            return Err(ScanError::Config("scan temperature outside [0, 2]".into()));
        }
        if let Some(r) = &self.token_range {
            if r.start > r.end {
                return Err(ScanError::Config(format!("inverted range {}..{}", r.start, r.end)));
            }
        }
        Ok(())
    }

    pub fn fingerprint_input(&self, vocab: &Vocabulary, model: &str) -> FingerprintInput {
        FingerprintInput {
            version: CHECKPOINT_VERSION,
            vocabulary: vocab.fingerprint().to_string(),
            model: model.to_string(),
            thresholds: self.thresholds,
            scan_temperature: self.scan_temperature,
            token_range: self.token_range.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum CandidateReason {
    LowConfidence { metrics: ConfidenceMetrics },
    NoResult,
    PermError { code: u16 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: TokenId,
    pub text: String,
    #[serde(flatten)]
    pub reason: CandidateReason,
}

impl Candidate {
    pub fn metrics(&self) -> Option<ConfidenceMetrics> {
        match self.reason {
            CandidateReason::LowConfidence { metrics } => Some(metrics),
            _ => None,
        }
    }
}

/// Tokens flagged by the scan, keyed by id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CandidateSet {
    candidates: BTreeMap<TokenId, Candidate>,
}

impl CandidateSet {
    /// Re-derives candidates from scan records alone: low-confidence metrics,
    /// no-result and permanent-error tokens. Records whose id is not a
    /// probeable vocabulary entry are ignored.
    pub fn from_records<'a>(
        records: impl IntoIterator<Item = &'a ScanRecord>,
        thresholds: &ThresholdConfig,
        vocab: &Vocabulary,
    ) -> Self {
        let mut candidates = BTreeMap::new();
        for r in records {
            let reason = match r.status {
                ProbeStatus::Ok { metrics } if is_candidate(&metrics, thresholds) => {
                    CandidateReason::LowConfidence { metrics }
                }
                ProbeStatus::Ok { .. } => continue,
                ProbeStatus::NoResult => CandidateReason::NoResult,
                ProbeStatus::PermError { code } => CandidateReason::PermError { code },
            };
            let Some(text) = vocab.get(r.id).and_then(|e| e.decoded.clone()) else {
                continue;
            };
            candidates.insert(r.id, Candidate { id: r.id, text, reason });
        }
        Self { candidates }
    }

    pub fn from_checkpoint(cp: &ScanCheckpoint, vocab: &Vocabulary) -> Self {
        Self::from_records(cp.records.values(), &cp.header.config.thresholds, vocab)
    }

    pub fn from_candidates(items: impl IntoIterator<Item = Candidate>) -> Self {
        Self {
            candidates: items.into_iter().map(|c| (c.id, c)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn contains(&self, id: TokenId) -> bool {
        self.candidates.contains_key(&id)
    }

    pub fn get(&self, id: TokenId) -> Option<&Candidate> {
        self.candidates.get(&id)
    }

    pub fn ids(&self) -> Vec<TokenId> {
        self.candidates.keys().copied().collect()
    }

    /// Ascending id order.
    pub fn iter(&self) -> impl Iterator<Item = &Candidate> {
        self.candidates.values()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    InvalidUtf8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedToken {
    pub id: TokenId,
    pub reason: SkipReason,
}

/// Splits the entries in `range` into probeable tokens and skipped ones.
pub fn probe_targets<'v>(
    vocab: &'v Vocabulary,
    range: Option<&Range<TokenId>>,
) -> (Vec<&'v TokenEntry>, Vec<SkippedToken>) {
    let mut targets = Vec::new();
    let mut skipped = Vec::new();
    for e in vocab.iter().filter(|e| range.is_none_or(|r| r.contains(&e.id))) {
        if e.is_probeable() {
            targets.push(e);
        } else {
            skipped.push(SkippedToken {
                id: e.id,
                reason: SkipReason::InvalidUtf8,
            });
        }
    }
    (targets, skipped)
}

#[derive(Debug, Clone)]
pub struct ScanSummary {
    pub candidates: CandidateSet,
    /// `None` when no probe returned a distribution.
    pub baseline: Option<BaselineSummary>,
    pub skipped: Vec<SkippedToken>,
    /// Records in the checkpoint after the run.
    pub recorded: usize,
    /// Tokens probed by this invocation.
    pub newly_probed: usize,
    /// Usage summed over every checkpoint record.
    pub usage: LedgerSnapshot,
}

/// Probes every probeable token in range that `resume` has not completed.
pub async fn run_scan(
    vocab: &Vocabulary,
    client: &LlmClient,
    cfg: &ScanConfig,
    resume: Option<ScanCheckpoint>,
) -> Result<ScanSummary, ScanError> {
    cfg.validate()?;
    let header = CheckpointHeader::new(cfg.fingerprint_input(vocab, client.model()));
    let (mut checkpoint, mut writer) = match resume {
        Some(cp) => {
            if cp.header.fingerprint != header.fingerprint {
                return Err(ScanError::FingerprintMismatch {
                    expected: header.fingerprint,
                    found: cp.header.fingerprint,
                });
            }
            let w = cp.reopen()?;
            (cp, w)
        }
        None => {
            // A file without a complete header line holds nothing to resume.
            if ScanCheckpoint::load(&cfg.checkpoint_path)?.is_some() {
                return Err(ScanError::CheckpointExists(cfg.checkpoint_path.clone()));
            }
            ScanCheckpoint::create(&cfg.checkpoint_path, header)?
        }
    };

    let (targets, skipped) = probe_targets(vocab, cfg.token_range.as_ref());
    let pending: Vec<&TokenEntry> = targets
        .into_iter()
        .filter(|e| !checkpoint.records.contains_key(&e.id))
        .collect();
    let total = pending.len();
    log::info!(
        "scanning {total} tokens ({} already recorded, {} skipped)",
        checkpoint.records.len(),
        skipped.len()
    );

    let temperature = cfg.scan_temperature;
    let mut results = stream::iter(pending)
        .map(|entry| async move {
            let text = entry.decoded.as_deref().expect("probe targets are decodable");
            let probe = client.repeat_probe(text, temperature).await?;
            let status = match probe.finish_status {
                FinishStatus::Ok => ProbeStatus::Ok {
                    metrics: compute_metrics(&probe.distribution)
                        .expect("ok status implies a non-empty distribution"),
                },
                FinishStatus::EmptyLogprobs => ProbeStatus::NoResult,
                FinishStatus::ApiError { code } => ProbeStatus::PermError { code },
            };
            Ok::<_, ClientError>(ScanRecord {
                id: entry.id,
                status,
                usage: probe.usage,
            })
        })
        .buffered(cfg.concurrency);

    let mut newly_probed = 0;
    while let Some(result) = results.next().await {
        match result {
            Ok(record) => {
                writer.append(&record)?;
                checkpoint.records.insert(record.id, record);
                newly_probed += 1;
                if newly_probed % 1000 == 0 {
                    log::info!("probed {newly_probed}/{total}");
                }
            }
            Err(source) => {
                drop(results);
                writer.finish()?;
                return Err(ScanError::Interrupted {
                    completed: checkpoint.records.len(),
                    source,
                });
            }
        }
    }
    writer.finish()?;

    Ok(summarize(&checkpoint, vocab, skipped, newly_probed))
}

fn summarize(
    checkpoint: &ScanCheckpoint,
    vocab: &Vocabulary,
    skipped: Vec<SkippedToken>,
    newly_probed: usize,
) -> ScanSummary {
    let mut acc = BaselineAccumulator::default();
    for r in checkpoint.records.values() {
        if let ProbeStatus::Ok { metrics } = &r.status {
            acc.push(metrics);
        }
    }
    ScanSummary {
        candidates: CandidateSet::from_checkpoint(checkpoint, vocab),
        baseline: acc.finish().ok(),
        skipped,
        recorded: checkpoint.records.len(),
        newly_probed,
        usage: checkpoint.ledger(),
    }
}
