//! Scan, confirm and report over a 1,000-token slice of cl100k_base served by
//! the mock, with a few planted anomalies.

use glitchscan::client::{ClientConfig, LlmClient};
use glitchscan::mock::{AnomalyProfile, Behavior, MockServer};
use glitchscan::report::build_report;
use glitchscan::scan::{run_scan, ScanCheckpoint, ScanConfig};
use glitchscan::triage::{run_confirmation, ConfirmConfig};
use glitchscan::{PriceTable, RetryPolicy, Vocabulary};

const VOCAB: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/cl100k_base.tiktoken");

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    let head: String = std::fs::read_to_string(VOCAB)?
        .lines()
        .take(1000)
        .map(|l| format!("{l}\n"))
        .collect();
    let vocab = Vocabulary::from_bytes(head.as_bytes())?;

    let profile = AnomalyProfile::default()
        .with_override(" the", Behavior::MajorAnomalous { flat_k: 4 })
        .with_override("ing", Behavior::MinorAnomalous { off_target_rate: 0.3, variants: vec![] })
        .with_override(" and", Behavior::NoResult)
        .with_override("ion", Behavior::Normal { top_prob: 0.45 });
    let server = MockServer::start_local(profile).await?;
    let mut cfg = ClientConfig::new(server.endpoint());
    cfg.retry = RetryPolicy::fast(3);
    let client = LlmClient::new(cfg)?;

    let dir = tempfile::tempdir()?;
    let mut scan_cfg = ScanConfig::new(dir.path().join("scan.jsonl"));
    scan_cfg.concurrency = 8;
    let scan = run_scan(&vocab, &client, &scan_cfg, None).await?;
    println!("{} probed, {} skipped, {} candidates", scan.recorded, scan.skipped.len(), scan.candidates.len());
    if let Some(b) = &scan.baseline {
        println!("baseline: {b:?}");
    }

    let confirm_cfg = ConfirmConfig::new(dir.path().join("confirm.jsonl"));
    let records = run_confirmation(&client, &scan.candidates, &confirm_cfg).await?;
    for r in &records {
        println!("{:>5} {:<10?} {:<15} off-target {}/{}", r.token_id, r.token_text, r.classification, r.off_target_count, r.evidence.outcomes.len());
    }

    let checkpoint = ScanCheckpoint::load(&scan_cfg.checkpoint_path)?.expect("scan wrote a checkpoint");
    let report = build_report(Some(&checkpoint), &records, &vocab, PriceTable::GPT4_1106_PREVIEW)?;
    println!("{:?}", report.summary);
    println!("cost at gpt-4-1106-preview prices: ${}", report.ledger.total_cost);
    let mut csv = Vec::new();
    report.write_csv(&mut csv)?;
    print!("{}", String::from_utf8(csv)?);
    Ok(())
}
