//! Merges scan and confirmation checkpoints into `report.json` and
//! `report.csv`. Output is ordered by token id and numbers are rounded so the
//! same checkpoints always produce the same bytes.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::client::{format_currency, LedgerSnapshot, PriceTable};
use crate::metrics::{BaselineAccumulator, BaselineSummary, ConfidenceMetrics, ThresholdConfig};
use crate::scan::{probe_targets, CandidateSet, ProbeStatus, ScanCheckpoint};
use crate::triage::{AnomalyRecord, Classification};
use crate::vocab::{TokenId, Vocabulary};

#[derive(Error, Debug)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("confirmation record for token {0}, which the scan did not flag")]
    NotACandidate(TokenId),
}

/// Rounds to six significant digits.
pub fn round_sig(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.5e}").parse().expect("formatted float parses")
}

fn round_metrics(m: &ConfidenceMetrics) -> ConfidenceMetrics {
    ConfidenceMetrics {
        entropy: round_sig(m.entropy),
        tail_prob: round_sig(m.tail_prob),
        margin: round_sig(m.margin),
        top_prob: round_sig(m.top_prob),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub total_scanned: usize,
    pub candidates: usize,
    pub major: usize,
    pub minor: usize,
    pub false_positive: usize,
    pub no_result: usize,
    pub perm_error: usize,
    pub skipped: usize,
    /// Major plus no-result.
    pub major_total: usize,
    /// Candidates without a confirmation record yet.
    pub unconfirmed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub id: TokenId,
    pub token: String,
    pub classification: Classification,
    pub off_target_count: usize,
    pub samples: usize,
    pub metrics: Option<ConfidenceMetrics>,
    pub completions: Vec<String>,
    pub errors: Vec<u16>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerReport {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    /// Responses that carried usage.
    pub responses: u64,
    pub price: PriceTable,
    /// Dollars, two decimals.
    pub total_cost: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub model: String,
    pub vocabulary: String,
    pub fingerprint: String,
    pub thresholds: ThresholdConfig,
    pub scan_temperature: f64,
    pub token_range: Option<std::ops::Range<TokenId>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub summary: ReportSummary,
    pub baseline: Option<BaselineSummary>,
    pub records: Vec<ReportRecord>,
    pub ledger: LedgerReport,
    pub config: Option<ConfigEcho>,
}

/// Builds the report; `scan` may be absent for an empty report.
pub fn build_report(
    scan: Option<&ScanCheckpoint>,
    confirmations: &[AnomalyRecord],
    vocab: &Vocabulary,
    price: PriceTable,
) -> Result<ScanReport, ReportError> {
    let candidates = scan.map(|s| CandidateSet::from_checkpoint(s, vocab)).unwrap_or_default();
    let mut usage = scan.map(ScanCheckpoint::ledger).unwrap_or_default();
    let mut by_id: BTreeMap<TokenId, &AnomalyRecord> = BTreeMap::new();
    for r in confirmations {
        if !candidates.contains(r.token_id) {
            return Err(ReportError::NotACandidate(r.token_id));
        }
        by_id.insert(r.token_id, r);
    }

    let mut summary = ReportSummary {
        total_scanned: scan.map_or(0, |s| s.records.len()),
        candidates: candidates.len(),
        unconfirmed: candidates.len() - by_id.len(),
        skipped: scan.map_or(0, |s| probe_targets(vocab, s.header.config.token_range.as_ref()).1.len()),
        ..Default::default()
    };
    let mut records = Vec::with_capacity(by_id.len());
    for r in by_id.values() {
        match r.classification {
            Classification::Major => summary.major += 1,
            Classification::Minor => summary.minor += 1,
            Classification::FalsePositive => summary.false_positive += 1,
            Classification::NoResult => summary.no_result += 1,
            Classification::PermanentError => summary.perm_error += 1,
        }
        for o in &r.evidence.outcomes {
            usage.add_usage(&o.usage);
        }
        records.push(ReportRecord {
            id: r.token_id,
            token: r.token_text.clone(),
            classification: r.classification,
            off_target_count: r.off_target_count,
            samples: r.evidence.samples,
            metrics: r.metrics.as_ref().map(round_metrics),
            completions: r.evidence.outcomes.iter().map(|o| o.completion_text.clone()).collect(),
            errors: r.evidence.outcomes.iter().filter_map(|o| o.error).collect(),
        });
    }
    summary.major_total = summary.major + summary.no_result;

    let mut acc = BaselineAccumulator::default();
    for r in scan.iter().flat_map(|s| s.records.values()) {
        if let ProbeStatus::Ok { metrics } = &r.status {
            acc.push(metrics);
        }
    }
    let baseline = acc.finish().ok().map(|b| BaselineSummary {
        count: b.count,
        mean_top_prob: round_sig(b.mean_top_prob),
        mean_margin: round_sig(b.mean_margin),
        mean_entropy: round_sig(b.mean_entropy),
        mean_tail: round_sig(b.mean_tail),
    });

    Ok(ScanReport {
        summary,
        baseline,
        records,
        ledger: ledger_report(usage, price),
        config: scan.map(|s| ConfigEcho {
            model: s.header.config.model.clone(),
            vocabulary: s.header.config.vocabulary.clone(),
            fingerprint: s.header.fingerprint.clone(),
            thresholds: s.header.config.thresholds,
            scan_temperature: s.header.config.scan_temperature,
            token_range: s.header.config.token_range.clone(),
        }),
    })
}

pub fn ledger_report(usage: LedgerSnapshot, price: PriceTable) -> LedgerReport {
    LedgerReport {
        prompt_tokens: usage.prompt_tokens,
        completion_tokens: usage.completion_tokens,
        responses: usage.requests,
        total_cost: format_currency(price.cost(&usage)),
        price,
    }
}

impl ScanReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), ReportError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "id",
            "token",
            "classification",
            "off_target_count",
            "entropy",
            "tail",
            "margin",
            "top_prob",
        ])?;
        for r in &self.records {
            let m = |f: fn(&ConfidenceMetrics) -> f64| r.metrics.as_ref().map(|x| f(x).to_string()).unwrap_or_default();
            w.write_record([
                r.id.to_string(),
                r.token.escape_debug().to_string(),
                r.classification.to_string(),
                r.off_target_count.to_string(),
                m(|x| x.entropy),
                m(|x| x.tail_prob),
                m(|x| x.margin),
                m(|x| x.top_prob),
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// Writes `report.json` and `report.csv` into `dir`.
    pub fn write_files(&self, dir: &Path) -> Result<(), ReportError> {
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| ReportError::Io { path, source }
        };
        std::fs::create_dir_all(dir).map_err(io(dir))?;
        let json = dir.join("report.json");
        std::fs::write(&json, self.to_json()).map_err(io(&json))?;
        let csv_path = dir.join("report.csv");
        let file = std::fs::File::create(&csv_path).map_err(io(&csv_path))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}
