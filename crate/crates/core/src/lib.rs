//! Black-box scanner for anomalous ("glitch") tokens in chat-completion models.
//!
//! The pipeline probes every token of a byte-level BPE vocabulary with a
//! REPEAT prompt, flags low-confidence first-token predictions, confirms the
//! flagged tokens with repeated sampling, and classifies them as major or minor
//! anomalies. A text guard perturbs input so that it no longer tokenizes into
//! blocklisted ids.
//!
//! Runnable walkthroughs of every stage live in `examples/`:
//!
//! ```bash
//! cargo run -p glitchscan --example tokenize
//! cargo run -p glitchscan --example confidence_metrics
//! cargo run -p glitchscan --example mock_server
//! cargo run -p glitchscan --example scan_pipeline
//! cargo run -p glitchscan --example resume_scan
//! cargo run -p glitchscan --example explain_probe
//! cargo run -p glitchscan --example guard_text
//! ```

pub mod cli;
pub mod client;
pub mod config;
pub mod guard;
pub mod jsonl;
pub mod metrics;
pub mod mock;
pub mod report;
pub mod scan;
pub mod triage;
pub mod vocab;

pub use client::{CostLedger, LlmClient, PriceTable, RetryPolicy};
pub use guard::{Blocklist, Perturbed};
pub use metrics::{ConfidenceMetrics, PredictionDistribution, ThresholdConfig};
pub use mock::{AnomalyProfile, Behavior, MockServer};
pub use scan::{CandidateSet, ScanConfig};
pub use triage::{AnomalyRecord, Classification};
pub use vocab::{TokenEntry, TokenId, Vocabulary};
