//! Deterministic chat-completions server with per-token behavior profiles.

mod model;
mod profile;
mod server;

use std::net::SocketAddr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use model::{MockModel, MockReply, DECK_LEN, FLAT_MASS, FLAT_WEIGHTS, UNRELATED};
pub use profile::{AnomalyProfile, Behavior};
pub use server::{MockServer, COMPLETIONS_PATH};

#[derive(Error, Debug)]
pub enum MockError {
    #[error("invalid profile: {0}")]
    Profile(String),
    #[error("cannot bind {0}: {1}")]
    Bind(SocketAddr, #[source] std::io::Error),
}

/// Server-side counters, for cross-checking the client's cost ledger.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockLedger {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub request_count: u64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::client::wire::{parse_completion, parse_top_logprobs};
    use crate::client::ProbeRequest;
    use crate::metrics::{compute_metrics, is_candidate, ThresholdConfig};
    use crate::triage::is_repetition;
    use proptest::prelude::*;

    fn profile() -> AnomalyProfile {
        AnomalyProfile {
            seed: 42,
            ..Default::default()
        }
        .with_override("nores", Behavior::NoResult)
        .with_override("err", Behavior::Error400 { rate: 1.0 })
        .with_override("flaky", Behavior::Error400 { rate: 0.5 })
        .with_override("major", Behavior::MajorAnomalous { flat_k: 3 })
        .with_override(
            "minor",
            Behavior::MinorAnomalous {
                off_target_rate: 0.3,
                variants: vec!["mino".into()],
            },
        )
        .with_override("blank", Behavior::Unspeakable)
        .with_override("schema", Behavior::SchemaViolating)
        .with_override("fp", Behavior::Normal { top_prob: 0.45 })
    }

    fn ask(model: &MockModel, req: ProbeRequest) -> MockReply {
        model.respond(&req.payload("mock"))
    }

    #[test]
    fn normal_token_top_prob() {
        let m = MockModel::new(profile());
        let r = ask(&m, ProbeRequest::repeat("hello", 0.0));
        assert_eq!(r.status, 200);
        let d = parse_top_logprobs(&r.body).unwrap();
        let metrics = compute_metrics(&d).unwrap();
        assert!((metrics.top_prob - 0.99).abs() < 1e-9);
        assert_eq!(parse_completion(&r.body).unwrap().content, "hello");
    }

    #[test]
    fn no_result_has_empty_logprobs() {
        let m = MockModel::new(profile());
        let r = ask(&m, ProbeRequest::repeat("nores", 0.0));
        assert!(parse_top_logprobs(&r.body).unwrap().is_empty());
        let text = String::from_utf8(r.body).unwrap();
        assert!(text.contains(r#""logprobs":{"content":[]}"#));
    }

    #[test]
    fn error400_rates() {
        let m = MockModel::new(profile());
        for _ in 0..5 {
            assert_eq!(ask(&m, ProbeRequest::repeat("err", 0.0)).status, 400);
        }
        let fails = (0..200)
            .filter(|_| ask(&m, ProbeRequest::repeat("flaky", 0.0)).status == 400)
            .count();
        assert!((60..140).contains(&fails), "{fails}");
    }

    #[test]
    fn minor_off_target_is_stratified() {
        let m = MockModel::new(profile());
        for _block in 0..3 {
            let off = (0..DECK_LEN)
                .map(|_| parse_completion(&ask(&m, ProbeRequest::confirm("minor")).body).unwrap().content)
                .filter(|c| !is_repetition("minor", c))
                .count();
            assert_eq!(off, 3);
        }
    }

    #[test]
    fn normal_samples_are_repetitions() {
        let m = MockModel::new(profile());
        for _ in 0..30 {
            let c = parse_completion(&ask(&m, ProbeRequest::confirm("fp")).body).unwrap().content;
            assert!(is_repetition("fp", &c), "{c:?}");
        }
    }

    #[test]
    fn major_samples_are_off_target_and_explanations_vary() {
        let m = MockModel::new(profile());
        for _ in 0..10 {
            let c = parse_completion(&ask(&m, ProbeRequest::confirm("major")).body).unwrap().content;
            assert!(!is_repetition("major", &c));
        }
        let texts: std::collections::BTreeSet<String> = (0..4)
            .map(|_| {
                let body = ask(&m, ProbeRequest::explain("major", 0.3)).body;
                let c = parse_completion(&body).unwrap().content;
                let v: serde_json::Value = serde_json::from_str(&c).unwrap();
                v["text"].as_str().unwrap().to_string()
            })
            .collect();
        assert_eq!(texts.len(), 4);
    }

    #[test]
    fn schema_violation_and_blank_replies() {
        let m = MockModel::new(profile());
        let c = parse_completion(&ask(&m, ProbeRequest::explain("schema", 0.3)).body).unwrap().content;
        assert!(serde_json::from_str::<serde_json::Value>(&c).is_err());
        let c = parse_completion(&ask(&m, ProbeRequest::confirm("blank")).body).unwrap().content;
        assert!(c.trim().is_empty());
        let c = parse_completion(&ask(&m, ProbeRequest::explain("hello", 0.2)).body).unwrap().content;
        let v: serde_json::Value = serde_json::from_str(&c).unwrap();
        assert_eq!(v["text"], "hello");
    }

    #[test]
    fn ledger_counts_advertised_usage() {
        let m = MockModel::new(profile());
        assert_eq!(m.ledger(), MockLedger::default());
        let r = ask(&m, ProbeRequest::repeat("hello there", 0.0));
        let usage = parse_completion(&r.body).unwrap().usage;
        // "Repeat user message exactly" (4 words) + "hello there" (2) + 1
        assert_eq!(usage.prompt_tokens, 7);
        assert_eq!(usage.completion_tokens, 1);
        let l = m.ledger();
        assert_eq!((l.request_count, l.prompt_tokens, l.completion_tokens), (1, 7, 1));
        ask(&m, ProbeRequest::repeat("err", 0.0));
        assert_eq!(m.ledger().request_count, 2);
        assert_eq!(m.ledger().prompt_tokens, 7);
    }

    #[test]
    fn malformed_request_is_422() {
        let m = MockModel::new(profile());
        assert_eq!(m.respond(b"{").status, 422);
    }

    #[test]
    fn identical_sequences_give_identical_bytes() {
        let run = || {
            let m = MockModel::new(profile());
            let mut out = Vec::new();
            for t in ["hello", "minor", "major", "flaky", "blank", "fp"] {
                for _ in 0..3 {
                    out.push(ask(&m, ProbeRequest::confirm(t)));
                    out.push(ask(&m, ProbeRequest::explain(t, 0.3)));
                }
            }
            out
        };
        assert_eq!(run(), run());
    }

    proptest! {
        #[test]
        fn profile_faithfulness(p in 0.9f64..=1.0, k in 3usize..=5, token in "[a-zA-Z_]{1,12}") {
            let t = ThresholdConfig::default();
            let normal = MockModel::new(AnomalyProfile {
                default: Behavior::Normal { top_prob: p },
                ..Default::default()
            });
            let d = parse_top_logprobs(&ask(&normal, ProbeRequest::repeat(token.clone(), 0.0)).body).unwrap();
            prop_assert!(!is_candidate(&compute_metrics(&d).unwrap(), &t));
            let major = MockModel::new(AnomalyProfile {
                default: Behavior::MajorAnomalous { flat_k: k },
                ..Default::default()
            });
            let d = parse_top_logprobs(&ask(&major, ProbeRequest::repeat(token, 0.0)).body).unwrap();
            let m = compute_metrics(&d).unwrap();
            prop_assert!(m.entropy > 1.0);
            prop_assert!(is_candidate(&m, &t));
        }
    }
}
