//! Low-confidence metrics over a top-5 first-token distribution.
//!
//! Entropy is the plug-in entropy (nats) of the returned probabilities, not
//! renormalized; mass outside the top entries is measured separately as the
//! tail probability.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Maximum number of alternatives a distribution carries.
pub const TOP_K: usize = 5;

/// Probabilities below this are clamped before taking the logarithm.
const MIN_PROB: f64 = 1e-300;

/// Slack allowed on the probability sum; served logprobs are rounded, and a
/// top entry of exactly 0.0 next to small alternatives overshoots 1.
const SUM_SLACK: f64 = 1e-3;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum MetricsError {
    #[error("empty distribution")]
    EmptyDistribution,
    #[error("distribution has {0} entries, at most {TOP_K} allowed")]
    TooManyEntries(usize),
    #[error("log-probability {0} for {1:?} is not a finite value <= 0")]
    InvalidLogprob(f64, String),
    #[error("probabilities sum to {0}, which exceeds 1")]
    MassExceedsOne(f64),
    #[error("no metrics to aggregate")]
    EmptyBaseline,
    #[error("invalid thresholds: {0}")]
    InvalidThresholds(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopLogprob {
    pub token: String,
    pub logprob: f64,
}

impl TopLogprob {
    pub fn new(token: impl Into<String>, logprob: f64) -> Self {
        Self {
            token: token.into(),
            logprob,
        }
    }

    pub fn prob(&self) -> f64 {
        self.logprob.exp()
    }
}

/// Up to five alternatives for a single completion position, most likely
/// first. An empty distribution marks a no-result probe.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PredictionDistribution {
    entries: Vec<TopLogprob>,
}

impl PredictionDistribution {
    /// Validates the entries and orders them by descending log-probability.
    pub fn new(mut entries: Vec<TopLogprob>) -> Result<Self, MetricsError> {
        if entries.len() > TOP_K {
            return Err(MetricsError::TooManyEntries(entries.len()));
        }
        for e in &entries {
            if !e.logprob.is_finite() || e.logprob > 0.0 {
                return Err(MetricsError::InvalidLogprob(e.logprob, e.token.clone()));
            }
        }
        entries.sort_by(|a, b| b.logprob.total_cmp(&a.logprob));
        let sum: f64 = entries.iter().map(TopLogprob::prob).sum();
        if sum > 1.0 + SUM_SLACK {
            return Err(MetricsError::MassExceedsOne(sum));
        }
        Ok(Self { entries })
    }

    /// Builds a distribution from plain probabilities; tokens are named `t0`, `t1`, ...
    pub fn from_probs(probs: &[f64]) -> Result<Self, MetricsError> {
        Self::new(
            probs
                .iter()
                .enumerate()
                .map(|(i, &p)| TopLogprob::new(format!("t{i}"), p.ln()))
                .collect(),
        )
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[TopLogprob] {
        &self.entries
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.entries.iter().map(TopLogprob::prob).collect()
    }

    pub fn top_token(&self) -> Option<&str> {
        self.entries.first().map(|e| e.token.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceMetrics {
    pub entropy: f64,
    pub tail_prob: f64,
    pub margin: f64,
    pub top_prob: f64,
}

/// Candidate-detection thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ThresholdConfig {
    pub entropy_max: f64,
    pub tail_max: f64,
    pub margin_min: f64,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        Self {
            entropy_max: 1.0,
            tail_max: 0.1,
            margin_min: 0.5,
        }
    }
}

impl ThresholdConfig {
    pub fn validate(&self) -> Result<(), MetricsError> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.entropy_max) || !positive(self.tail_max) || !positive(self.margin_min) {
            return Err(MetricsError::InvalidThresholds(
                "all thresholds must be strictly positive".into(),
            ));
        }
        if self.margin_min > 1.0 {
            return Err(MetricsError::InvalidThresholds(
                "margin_min must not exceed 1".into(),
            ));
        }
        Ok(())
    }
}

pub fn compute_metrics(dist: &PredictionDistribution) -> Result<ConfidenceMetrics, MetricsError> {
    if dist.is_empty() {
        return Err(MetricsError::EmptyDistribution);
    }
    let probs = dist.probabilities();
    let entropy = probs
        .iter()
        .map(|&p| {
            let p = p.max(MIN_PROB);
            -p * p.ln()
        })
        .sum::<f64>()
        // -0.0 for a point mass
        .max(0.0);
    let mass: f64 = probs.iter().sum();
    let tail_prob = (1.0 - mass).clamp(0.0, 1.0);
    let top_prob = probs[0];
    let second = probs.get(1).copied().unwrap_or(0.0);
    Ok(ConfidenceMetrics {
        entropy,
        tail_prob,
        margin: top_prob - second,
        top_prob,
    })
}

/// Strict three-way OR over the thresholds.
pub fn is_candidate(m: &ConfidenceMetrics, t: &ThresholdConfig) -> bool {
    m.entropy > t.entropy_max || m.tail_prob > t.tail_max || m.margin < t.margin_min
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineSummary {
    pub count: u64,
    pub mean_top_prob: f64,
    pub mean_margin: f64,
    pub mean_entropy: f64,
    pub mean_tail: f64,
}

/// Streaming accumulator behind [`aggregate_baseline`].
#[derive(Debug, Clone, Default)]
pub struct BaselineAccumulator {
    count: u64,
    top_prob: f64,
    margin: f64,
    entropy: f64,
    tail: f64,
}

impl BaselineAccumulator {
    pub fn push(&mut self, m: &ConfidenceMetrics) {
        self.count += 1;
        self.top_prob += m.top_prob;
        self.margin += m.margin;
        self.entropy += m.entropy;
        self.tail += m.tail_prob;
    }

    pub fn finish(&self) -> Result<BaselineSummary, MetricsError> {
        if self.count == 0 {
            return Err(MetricsError::EmptyBaseline);
        }
        let n = self.count as f64;
        Ok(BaselineSummary {
            count: self.count,
            mean_top_prob: self.top_prob / n,
            mean_margin: self.margin / n,
            mean_entropy: self.entropy / n,
            mean_tail: self.tail / n,
        })
    }
}

pub fn aggregate_baseline<'a>(
    all: impl IntoIterator<Item = &'a ConfidenceMetrics>,
) -> Result<BaselineSummary, MetricsError> {
    let mut acc = BaselineAccumulator::default();
    for m in all {
        acc.push(m);
    }
    acc.finish()
}
