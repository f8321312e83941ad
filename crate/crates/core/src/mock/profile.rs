use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::MockError;
use crate::triage::is_repetition;

/// Per-token behavior of the mock model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Behavior {
    /// Echoes the token. The first position puts `top_prob` on the token and
    /// splits the rest over four whitespace variants of it.
    Normal { top_prob: f64 },
    /// Echoes most of the time; a fraction `off_target_rate` of sampled
    /// completions are near-miss `variants`.
    MinorAnomalous {
        off_target_rate: f64,
        #[serde(default)]
        variants: Vec<String>,
    },
    /// Near-uniform first position over `flat_k` unrelated strings; sampled
    /// completions are unrelated strings.
    MajorAnomalous { flat_k: usize },
    /// Empty logprob list and empty content.
    NoResult,
    /// Blank or whitespace-only replies.
    Unspeakable,
    /// Answers HTTP 400 with probability `rate`, otherwise behaves like
    /// `Normal { top_prob: 0.99 }`.
    Error400 { rate: f64 },
    /// Major-anomalous REPEAT behavior plus malformed EXPLAIN JSON.
    SchemaViolating,
}

impl Behavior {
    pub fn label(&self) -> &'static str {
        match self {
            Behavior::Normal { .. } => "normal",
            Behavior::MinorAnomalous { .. } => "minor_anomalous",
            Behavior::MajorAnomalous { .. } => "major_anomalous",
            Behavior::NoResult => "no_result",
            Behavior::Unspeakable => "unspeakable",
            Behavior::Error400 { .. } => "error400",
            Behavior::SchemaViolating => "schema_violating",
        }
    }

    fn validate(&self, token: Option<&str>) -> Result<(), String> {
        match self {
            Behavior::Normal { top_prob } if !(0.2..=1.0).contains(top_prob) => {
                Err(format!("normal top_prob {top_prob} outside [0.2, 1]"))
            }
            Behavior::MinorAnomalous {
                off_target_rate,
                variants,
            } => {
                if !(*off_target_rate > 0.0 && *off_target_rate <= 0.5) {
                    return Err(format!("off_target_rate {off_target_rate} outside (0, 0.5]"));
                }
                if variants.len() > 4 {
                    return Err("at most 4 variants".into());
                }
                let echo = token.and_then(|t| variants.iter().find(|v| is_repetition(t, v)));
                match echo {
                    Some(v) => Err(format!("variant {v:?} repeats the token")),
                    None => Ok(()),
                }
            }
            Behavior::MajorAnomalous { flat_k } if !(3..=5).contains(flat_k) => {
                Err(format!("flat_k {flat_k} outside 3..=5"))
            }
            Behavior::Error400 { rate } if !(*rate > 0.0 && *rate <= 1.0) => {
                Err(format!("error rate {rate} outside (0, 1]"))
            }
            _ => Ok(()),
        }
    }
}

/// Behavior table for the mock server, loaded from a JSON document such as:
///
/// ```json
/// {
///   "seed": 7,
///   "default": {"kind": "normal", "top_prob": 0.99},
///   "overrides": {
///     "atrigesimal": {"kind": "major_anomalous", "flat_k": 5},
///     "<decltype": {"kind": "minor_anomalous", "off_target_rate": 0.3, "variants": ["decltype"]}
///   }
/// }
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyProfile {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_behavior")]
    pub default: Behavior,
    #[serde(default)]
    pub overrides: BTreeMap<String, Behavior>,
    /// Fixed latency added to every response.
    #[serde(default)]
    pub delay_ms: u64,
}

fn default_behavior() -> Behavior {
    Behavior::Normal { top_prob: 0.99 }
}

impl Default for AnomalyProfile {
    fn default() -> Self {
        Self {
            seed: 0,
            default: default_behavior(),
            overrides: BTreeMap::new(),
            delay_ms: 0,
        }
    }
}

impl AnomalyProfile {
    pub fn with_override(mut self, token: impl Into<String>, behavior: Behavior) -> Self {
        self.overrides.insert(token.into(), behavior);
        self
    }

    pub fn behavior_for(&self, token: &str) -> &Behavior {
        self.overrides.get(token).unwrap_or(&self.default)
    }

    pub fn validate(&self) -> Result<(), MockError> {
        self.default
            .validate(None)
            .map_err(|e| MockError::Profile(format!("default: {e}")))?;
        for (token, b) in &self.overrides {
            b.validate(Some(token))
                .map_err(|e| MockError::Profile(format!("{token:?}: {e}")))?;
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, MockError> {
        let profile: Self =
            serde_json::from_str(text).map_err(|e| MockError::Profile(e.to_string()))?;
        profile.validate()?;
        Ok(profile)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, MockError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| MockError::Profile(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_documented_shape() {
        let p = AnomalyProfile::from_json(
            r#"{"seed": 7, "default": {"kind": "normal", "top_prob": 0.99},
                "overrides": {"x": {"kind": "no_result"}, "y": {"kind": "error400", "rate": 1.0},
                              "z": {"kind": "minor_anomalous", "off_target_rate": 0.3}}}"#,
        )
        .unwrap();
        assert_eq!(p.seed, 7);
        assert_eq!(p.behavior_for("x"), &Behavior::NoResult);
        assert_eq!(p.behavior_for("other"), &Behavior::Normal { top_prob: 0.99 });
    }

    #[test]
    fn rejects_out_of_range_parameters() {
        let bad = [
            r#"{"default": {"kind": "normal", "top_prob": 0.1}}"#,
            r#"{"overrides": {"a": {"kind": "major_anomalous", "flat_k": 2}}}"#,
            r#"{"overrides": {"a": {"kind": "minor_anomalous", "off_target_rate": 0.7}}}"#,
            r#"{"overrides": {"ab": {"kind": "minor_anomalous", "off_target_rate": 0.3, "variants": [" AB"]}}}"#,
            r#"{"overrides": {"a": {"kind": "error400", "rate": 0.0}}}"#,
            r#"{"overrides": {"a": {"kind": "bogus"}}}"#,
        ];
        for doc in bad {
            assert!(AnomalyProfile::from_json(doc).is_err(), "{doc}");
        }
    }
}
