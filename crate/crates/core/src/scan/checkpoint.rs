use std::collections::BTreeMap;
use std::ops::Range;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ScanError;
use crate::client::{LedgerSnapshot, Usage};
use crate::jsonl::{JsonlContents, JsonlError, JsonlWriter};
use crate::metrics::{ConfidenceMetrics, ThresholdConfig};
use crate::vocab::TokenId;

pub const CHECKPOINT_VERSION: u32 = 1;

/// Outcome of one scan probe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ProbeStatus {
    Ok { metrics: ConfidenceMetrics },
    NoResult,
    PermError { code: u16 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanRecord {
    pub id: TokenId,
    #[serde(flatten)]
    pub status: ProbeStatus,
    pub usage: Usage,
}

/// Everything that changes what a scan records. Concurrency, pacing and the
/// endpoint address are deliberately absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FingerprintInput {
    pub version: u32,
    pub vocabulary: String,
    pub model: String,
    pub thresholds: ThresholdConfig,
    pub scan_temperature: f64,
    pub token_range: Option<Range<TokenId>>,
}

impl FingerprintInput {
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("fingerprint input serializes");
        hex::encode(Sha256::digest(&canonical))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub kind: String,
    pub version: u32,
    pub fingerprint: String,
    pub config: FingerprintInput,
}

impl CheckpointHeader {
    pub fn new(config: FingerprintInput) -> Self {
        Self {
            kind: "header".into(),
            version: CHECKPOINT_VERSION,
            fingerprint: config.digest(),
            config,
        }
    }
}

/// A loaded scan checkpoint: header plus completed records by id.
#[derive(Debug, Clone)]
pub struct ScanCheckpoint {
    pub path: PathBuf,
    pub header: CheckpointHeader,
    pub records: BTreeMap<TokenId, ScanRecord>,
    valid_len: u64,
}

impl ScanCheckpoint {
    /// Loads `path`; `Ok(None)` if the file is missing or holds no complete
    /// header line.
    pub fn load(path: impl AsRef<Path>) -> Result<Option<Self>, ScanError> {
        let path = path.as_ref();
        let contents = JsonlContents::read(path)?;
        if contents.lines.is_empty() {
            return Ok(None);
        }
        let header: CheckpointHeader = contents.parse_line(path, 0)?;
        if header.kind != "header" || header.version != CHECKPOINT_VERSION {
            return Err(corrupt(path, 1, "missing or unsupported checkpoint header"));
        }
        if header.fingerprint != header.config.digest() {
            return Err(corrupt(path, 1, "header fingerprint does not match its config"));
        }
        let mut records = BTreeMap::new();
        for i in 1..contents.lines.len() {
            let r: ScanRecord = contents.parse_line(path, i)?;
            if records.insert(r.id, r).is_some() {
                return Err(corrupt(path, i + 1, &format!("token {} recorded twice", r.id)));
            }
        }
        Ok(Some(Self {
            path: path.to_path_buf(),
            header,
            records,
            valid_len: contents.valid_len,
        }))
    }

    /// Creates a fresh checkpoint containing only the header.
    pub(crate) fn create(path: &Path, header: CheckpointHeader) -> Result<(Self, JsonlWriter), ScanError> {
        let mut w = JsonlWriter::open(path, 0)?;
        w.append(&header)?;
        w.flush()?;
        let valid_len = std::fs::metadata(path)
            .map_err(|e| JsonlError::io(path, e))?
            .len();
        Ok((
            Self {
                path: path.to_path_buf(),
                header,
                records: BTreeMap::new(),
                valid_len,
            },
            w,
        ))
    }

    pub(crate) fn reopen(&self) -> Result<JsonlWriter, ScanError> {
        Ok(JsonlWriter::open(&self.path, self.valid_len)?)
    }

    /// Sum of per-record usage.
    pub fn ledger(&self) -> LedgerSnapshot {
        let mut s = LedgerSnapshot::default();
        for r in self.records.values() {
            s.add_usage(&r.usage);
        }
        s
    }
}

fn corrupt(path: &Path, line: usize, message: &str) -> ScanError {
    ScanError::Checkpoint(JsonlError::Corrupt {
        path: path.to_path_buf(),
        line,
        message: message.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn input() -> FingerprintInput {
        FingerprintInput {
            version: CHECKPOINT_VERSION,
            vocabulary: "abc".into(),
            model: "m".into(),
            thresholds: ThresholdConfig::default(),
            scan_temperature: 0.0,
            token_range: Some(0..10),
        }
    }

    #[test]
    fn record_wire_shape() {
        let r = ScanRecord {
            id: 7,
            status: ProbeStatus::PermError { code: 400 },
            usage: Usage::default(),
        };
        assert_eq!(
            serde_json::to_string(&r).unwrap(),
            r#"{"id":7,"status":"perm_error","code":400,"usage":{"prompt_tokens":0,"completion_tokens":0}}"#
        );
        let back: ScanRecord = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
        assert_eq!(back, r);
        let ok = ScanRecord {
            id: 1,
            status: ProbeStatus::Ok {
                metrics: ConfidenceMetrics { entropy: 0.1, tail_prob: 0.0, margin: 0.9, top_prob: 0.95 },
            },
            usage: Usage { prompt_tokens: 6, completion_tokens: 1 },
        };
        let s = serde_json::to_string(&ok).unwrap();
        assert!(s.starts_with(r#"{"id":1,"status":"ok","metrics":{"entropy":0.1"#), "{s}");
        assert_eq!(serde_json::from_str::<ScanRecord>(&s).unwrap(), ok);
    }

    #[test]
    fn fingerprint_changes_with_thresholds() {
        let a = input();
        let mut b = input();
        b.thresholds.margin_min = 0.4;
        assert_ne!(a.digest(), b.digest());
        assert_eq!(a.digest(), input().digest());
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("scan.jsonl");
        let header = serde_json::to_string(&CheckpointHeader::new(input())).unwrap();
        let rec = r#"{"id":3,"status":"no_result","usage":{"prompt_tokens":1,"completion_tokens":1}}"#;
        std::fs::write(&p, format!("{header}\n{rec}\n{rec}\n")).unwrap();
        let err = ScanCheckpoint::load(&p).unwrap_err().to_string();
        assert!(err.contains(":3:"), "{err}");
        std::fs::write(&p, format!("{header}\n{rec}\n")).unwrap();
        let c = ScanCheckpoint::load(&p).unwrap().unwrap();
        assert_eq!(c.records.len(), 1);
        assert_eq!(c.ledger().prompt_tokens, 1);
    }

    #[test]
    fn tampered_header_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("scan.jsonl");
        let mut h = CheckpointHeader::new(input());
        h.config.model = "other".into();
        std::fs::write(&p, format!("{}\n", serde_json::to_string(&h).unwrap())).unwrap();
        assert!(ScanCheckpoint::load(&p).is_err());
    }
}
