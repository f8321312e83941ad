mod common;

use std::collections::BTreeMap;

use common::{fast_client, mock_vocab, planted};
use glitchscan::client::format_currency;
use glitchscan::mock::MockServer;
use glitchscan::report::build_report;
use glitchscan::scan::{run_scan, ScanCheckpoint, ScanConfig, ScanError};
use glitchscan::triage::{run_confirmation, ConfirmConfig};
use glitchscan::{Classification, PriceTable};

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn planted_anomalies_are_recovered() {
    let vocab = mock_vocab();
    let plant = planted(vocab, 11);
    let server = MockServer::start_local(plant.profile.clone()).await.unwrap();
    let client = fast_client(&server.endpoint());
    let dir = tempfile::tempdir().unwrap();

    let mut cfg = ScanConfig::new(dir.path().join("scan.jsonl"));
    cfg.concurrency = 8;
    let scan = run_scan(vocab, &client, &cfg, None).await.unwrap();
    assert_eq!(scan.candidates.ids(), plant.expected.keys().copied().collect::<Vec<_>>());
    let undecodable = vocab.iter().filter(|e| std::str::from_utf8(&e.bytes).is_err()).count();
    assert_eq!(scan.skipped.len(), undecodable);
    let baseline = scan.baseline.unwrap();
    assert!(baseline.mean_top_prob > 0.95);

    let ccfg = ConfirmConfig {
        concurrency: 8,
        ..ConfirmConfig::new(dir.path().join("confirm.jsonl"))
    };
    let records = run_confirmation(&client, &scan.candidates, &ccfg).await.unwrap();
    let got: BTreeMap<_, _> = records.iter().map(|r| (r.token_id, r.classification)).collect();
    assert_eq!(got, plant.expected);

    let checkpoint = ScanCheckpoint::load(&cfg.checkpoint_path).unwrap().unwrap();
    let report = build_report(Some(&checkpoint), &records, vocab, PriceTable::GPT4_1106_PREVIEW).unwrap();
    let s = &report.summary;
    assert_eq!((s.major, s.minor, s.no_result, s.perm_error, s.false_positive), (8, 4, 3, 2, 5));
    assert_eq!(s.major_total, 11);
    assert_eq!(s.total_scanned + s.skipped, 1000);

    // Pacing through the same client keeps both ledgers in step.
    let client_side = client.ledger().snapshot();
    let server_side = server.shutdown().await;
    assert_eq!(client_side.prompt_tokens, server_side.prompt_tokens);
    assert_eq!(client_side.completion_tokens, server_side.completion_tokens);
    assert_eq!(client_side.requests, server_side.request_count);
    assert_eq!(report.ledger.prompt_tokens, client_side.prompt_tokens);
    assert_eq!(report.ledger.completion_tokens, client_side.completion_tokens);
    assert_eq!(
        report.ledger.total_cost,
        format_currency(PriceTable::GPT4_1106_PREVIEW.cost(&client_side))
    );

    // Rebuilding from the files gives identical bytes.
    let (again, _) = glitchscan::triage::load_confirmations(&ccfg.checkpoint_path).unwrap();
    let again: Vec<_> = again.into_values().collect();
    let rebuilt = build_report(Some(&checkpoint), &again, vocab, PriceTable::GPT4_1106_PREVIEW).unwrap();
    assert_eq!(rebuilt.to_json(), report.to_json());
    let mut csv = Vec::new();
    report.write_csv(&mut csv).unwrap();
    assert_eq!(String::from_utf8(csv).unwrap().lines().count(), report.records.len() + 1);

    // Re-running either pass over finished checkpoints sends nothing.
    let before = client.ledger().snapshot().requests;
    let resume = run_scan(vocab, &client, &cfg, Some(checkpoint)).await.unwrap();
    assert_eq!(resume.newly_probed, 0);
    let again = run_confirmation(&client, &scan.candidates, &ccfg).await.unwrap();
    assert_eq!(again.len(), records.len());
    assert_eq!(client.ledger().snapshot().requests, before);
    assert!(records.iter().all(|r| r.classification != Classification::Major || r.off_target_count >= 6));
}

#[tokio::test]
async fn existing_checkpoint_is_not_clobbered() {
    let vocab = mock_vocab();
    let server = MockServer::start_local(Default::default()).await.unwrap();
    let client = fast_client(&server.endpoint());
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ScanConfig::new(dir.path().join("scan.jsonl"));
    cfg.token_range = Some(300..320);
    run_scan(vocab, &client, &cfg, None).await.unwrap();
    assert!(matches!(
        run_scan(vocab, &client, &cfg, None).await,
        Err(ScanError::CheckpointExists(_))
    ));
    let cp = ScanCheckpoint::load(&cfg.checkpoint_path).unwrap().unwrap();
    cfg.thresholds.margin_min = 0.4;
    assert!(matches!(
        run_scan(vocab, &client, &cfg, Some(cp)).await,
        Err(ScanError::FingerprintMismatch { .. })
    ));
}

#[tokio::test]
async fn outage_stops_the_scan_resumably() {
    let vocab = mock_vocab();
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ScanConfig::new(dir.path().join("scan.jsonl"));
    cfg.token_range = Some(300..340);
    let err = run_scan(vocab, &fast_client("http://127.0.0.1:9/v1/chat/completions"), &cfg, None)
        .await
        .unwrap_err();
    assert!(matches!(err, ScanError::Interrupted { completed: 0, .. }), "{err}");

    let server = MockServer::start_local(Default::default()).await.unwrap();
    let client = fast_client(&server.endpoint());
    let cp = ScanCheckpoint::load(&cfg.checkpoint_path).unwrap().unwrap();
    let done = run_scan(vocab, &client, &cfg, Some(cp)).await.unwrap();
    assert_eq!(done.recorded, 40);
}
