//! Interrupt a scan part-way, resume it from its checkpoint and check that the
//! result matches an uninterrupted run byte for byte.

use std::time::Duration;

use glitchscan::client::{ClientConfig, LlmClient};
use glitchscan::mock::{AnomalyProfile, MockServer};
use glitchscan::scan::{run_scan, ScanCheckpoint, ScanConfig};
use glitchscan::{RetryPolicy, Vocabulary};

const VOCAB: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/cl100k_base.tiktoken");

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    let head: String = std::fs::read_to_string(VOCAB)?
        .lines()
        .take(600)
        .map(|l| format!("{l}\n"))
        .collect();
    let vocab = Vocabulary::from_bytes(head.as_bytes())?;
    let server = MockServer::start_local(AnomalyProfile {
        delay_ms: 2,
        ..Default::default()
    })
    .await?;
    let mut cfg = ClientConfig::new(server.endpoint());
    cfg.retry = RetryPolicy::fast(3);
    let client = LlmClient::new(cfg)?;
    let dir = tempfile::tempdir()?;

    let reference = ScanConfig::new(dir.path().join("reference.jsonl"));
    run_scan(&vocab, &client, &reference, None).await?;

    let resumable = ScanConfig::new(dir.path().join("resumable.jsonl"));
    // Dropping the scan future stands in for a crash.
    let cut = tokio::time::timeout(Duration::from_millis(150), run_scan(&vocab, &client, &resumable, None)).await;
    assert!(cut.is_err(), "scan finished before the cut");
    let partial = ScanCheckpoint::load(&resumable.checkpoint_path)?.expect("header was written");
    println!("interrupted with {} records on disk", partial.records.len());

    let done = run_scan(&vocab, &client, &resumable, Some(partial)).await?;
    println!("resumed: {} probed now, {} total", done.newly_probed, done.recorded);

    let a = std::fs::read(&reference.checkpoint_path)?;
    let b = std::fs::read(&resumable.checkpoint_path)?;
    println!("identical to uninterrupted run: {}", a == b);
    Ok(())
}
