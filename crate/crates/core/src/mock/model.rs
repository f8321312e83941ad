//! Deterministic response synthesis, independent of the HTTP layer.
//!
//! Every random choice is drawn from a ChaCha stream keyed by
//! `(seed, stream name, token text, ordinal)`, where the ordinal counts the
//! sampled (temperature > 0) requests for that token. Temperature 0 always
//! returns the mode and consumes no ordinal.
//!
//! Off-target draws are stratified: each block of [`DECK_LEN`] consecutive
//! samples for a token holds exactly `round(DECK_LEN * rate)` off-target
//! completions, at positions shuffled by the seeded generator.

use std::collections::HashMap;
use std::sync::Mutex;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use super::{AnomalyProfile, Behavior, MockLedger};
use crate::client::wire::{
    ChatMessage, ChatRequest, ChatResponse, Choice, ChoiceLogprobs, PositionLogprobs, Usage,
};
use crate::client::EXPLAIN_SYSTEM_PROMPT;
use crate::metrics::TopLogprob;
use crate::triage::is_repetition;

pub const DECK_LEN: usize = 10;

/// Completions a major anomaly drifts to.
pub const UNRELATED: [&str; 16] = [
    "lambdaFrame",
    "quxBuilder",
    "OnPostRender",
    "vertexPool",
    "_SHADOW",
    "mergeSort",
    "xlim",
    "cellPadding",
    "Ptr",
    "tabIndex",
    "deserialize",
    "iPhone",
    "Mutable",
    "KERNEL",
    "foreach",
    "autorelease",
];

const BLANK_TOP: [&str; 5] = [" ", "\n", "\t", "  ", "\u{3000}"];
const BLANK_COMPLETIONS: [&str; 5] = [" ", "", "\n", "\t", "  "];

/// Relative weights of a flat first position, normalized to [`FLAT_MASS`].
pub const FLAT_WEIGHTS: [f64; 5] = [1.0, 0.95, 0.9, 0.85, 0.8];
pub const FLAT_MASS: f64 = 0.97;

/// Top probability used for the non-error responses of `Error400` tokens.
pub const ERROR_FALLBACK_TOP: f64 = 0.99;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MockReply {
    pub status: u16,
    pub body: Vec<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Stream {
    Repeat,
    Explain,
    Error,
}

impl Stream {
    fn name(self) -> &'static str {
        match self {
            Stream::Repeat => "repeat",
            Stream::Explain => "explain",
            Stream::Error => "error",
        }
    }
}

#[derive(Serialize)]
struct Explanation<'a> {
    text: &'a str,
    meaning: String,
}

#[derive(Debug)]
pub struct MockModel {
    profile: AnomalyProfile,
    ordinals: Mutex<HashMap<(Stream, String), u64>>,
    ledger: Mutex<MockLedger>,
}

impl MockModel {
    pub fn new(profile: AnomalyProfile) -> Self {
        Self {
            profile,
            ordinals: Mutex::new(HashMap::new()),
            ledger: Mutex::new(MockLedger::default()),
        }
    }

    pub fn profile(&self) -> &AnomalyProfile {
        &self.profile
    }

    pub fn ledger(&self) -> MockLedger {
        *self.ledger.lock().expect("ledger lock")
    }

    /// Answers one chat-completions request body.
    pub fn respond(&self, body: &[u8]) -> MockReply {
        self.ledger.lock().expect("ledger lock").request_count += 1;
        let req: ChatRequest = match serde_json::from_slice(body) {
            Ok(r) => r,
            Err(e) => return error_reply(422, "invalid_request_body", &e.to_string()),
        };
        let explain = req
            .messages
            .iter()
            .any(|m| m.role == "system" && m.content == EXPLAIN_SYSTEM_PROMPT);
        let token = req
            .messages
            .iter()
            .rev()
            .find(|m| m.role == "user")
            .map(|m| m.content.clone())
            .unwrap_or_default();

        let mut behavior = self.profile.behavior_for(&token).clone();
        if let Behavior::Error400 { rate } = behavior {
            let ord = self.next_ordinal(Stream::Error, &token);
            let fails = rate >= 1.0 || self.rng(Stream::Error, "bernoulli", &token, ord).random_bool(rate);
            if fails {
                return error_reply(400, "invalid_request_error", "BadRequest");
            }
            behavior = Behavior::Normal {
                top_prob: ERROR_FALLBACK_TOP,
            };
        }

        let stream = if explain { Stream::Explain } else { Stream::Repeat };
        let ordinal = (req.temperature > 0.0).then(|| self.next_ordinal(stream, &token));
        let dist = self.first_position(&behavior, &token);
        let content = if explain {
            self.explain_content(&behavior, &token, ordinal)
        } else {
            match ordinal {
                Some(ord) => self.sample_completion(&behavior, &token, ord),
                None => dist.first().map(|(s, _)| s.clone()).unwrap_or_default(),
            }
        };

        let prompt_words: usize = req.messages.iter().map(|m| word_count(&m.content)).sum();
        let usage = Usage {
            prompt_tokens: prompt_words as u64 + 1,
            completion_tokens: (word_count(&content) as u64 + 1).min(req.max_tokens.max(1) as u64),
        };
        let logprobs = req.logprobs.then(|| ChoiceLogprobs {
            content: position_logprobs(&dist, &content, req.top_logprobs.unwrap_or(0)),
        });
        let request_number = {
            let mut l = self.ledger.lock().expect("ledger lock");
            l.prompt_tokens += usage.prompt_tokens;
            l.completion_tokens += usage.completion_tokens;
            l.request_count
        };
        let response = ChatResponse {
            id: format!("mockcmpl-{request_number}"),
            object: "chat.completion".into(),
            model: req.model,
            choices: vec![Choice {
                index: 0,
                message: ChatMessage {
                    role: "assistant".into(),
                    content,
                },
                logprobs,
                finish_reason: "stop".into(),
            }],
            usage: usage.into(),
        };
        MockReply {
            status: 200,
            body: serde_json::to_vec(&response).expect("response serializes"),
        }
    }

    /// First-position alternatives for `behavior`, most likely first.
    pub fn first_position(&self, behavior: &Behavior, token: &str) -> Vec<(String, f64)> {
        match behavior {
            Behavior::Normal { top_prob } => {
                let rest = (1.0 - top_prob) / 4.0;
                let mut d = vec![(token.to_string(), *top_prob)];
                if rest > 0.0 {
                    d.extend(fillers(token).into_iter().map(|f| (f, rest)));
                }
                d
            }
            Behavior::MinorAnomalous {
                off_target_rate,
                variants,
            } => {
                let vs = variants_or_default(token, variants);
                let each = off_target_rate / vs.len() as f64;
                let mut d = vec![(token.to_string(), 1.0 - off_target_rate)];
                d.extend(vs.into_iter().map(|v| (v, each)));
                d
            }
            Behavior::MajorAnomalous { flat_k } => flat(self.unrelated_for(token).into_iter().take(*flat_k)),
            Behavior::SchemaViolating => flat(self.unrelated_for(token).into_iter().take(5)),
            Behavior::Unspeakable => flat(BLANK_TOP.iter().map(|s| s.to_string())),
            Behavior::NoResult => Vec::new(),
            Behavior::Error400 { .. } => self.first_position(
                &Behavior::Normal {
                    top_prob: ERROR_FALLBACK_TOP,
                },
                token,
            ),
        }
    }

    fn sample_completion(&self, behavior: &Behavior, token: &str, ord: u64) -> String {
        let stream = Stream::Repeat;
        match behavior {
            Behavior::Normal { top_prob } => {
                let off = ((1.0 - top_prob) * DECK_LEN as f64).round() as usize;
                if self.deck_slot(stream, token, ord, DECK_LEN) < off {
                    let f = fillers(token);
                    let i = self.rng(stream, "pick", token, ord).random_range(0..f.len());
                    f[i].clone()
                } else {
                    token.to_string()
                }
            }
            Behavior::MinorAnomalous {
                off_target_rate,
                variants,
            } => self.minor_pick(stream, token, ord, *off_target_rate, variants),
            Behavior::MajorAnomalous { .. } | Behavior::SchemaViolating => {
                let pool = self.unrelated_for(token);
                pool[self.deck_slot(stream, token, ord, pool.len())].clone()
            }
            Behavior::Unspeakable => {
                BLANK_COMPLETIONS[self.deck_slot(stream, token, ord, BLANK_COMPLETIONS.len())].to_string()
            }
            Behavior::NoResult => String::new(),
            Behavior::Error400 { .. } => token.to_string(),
        }
    }

    fn explain_content(&self, behavior: &Behavior, token: &str, ord: Option<u64>) -> String {
        let stream = Stream::Explain;
        let unrelated = |ord: Option<u64>| {
            let pool = self.unrelated_for(token);
            let i = ord.map_or(0, |o| self.deck_slot(stream, token, o, pool.len()));
            pool[i].clone()
        };
        let text = match behavior {
            Behavior::NoResult => return String::new(),
            Behavior::SchemaViolating => {
                let t = serde_json::to_string(&unrelated(ord)).expect("string serializes");
                return format!("{{\"text\": {t}, meaning");
            }
            Behavior::Normal { .. } | Behavior::Error400 { .. } => token.to_string(),
            Behavior::MinorAnomalous {
                off_target_rate,
                variants,
            } => match ord {
                Some(o) => self.minor_pick(stream, token, o, *off_target_rate, variants),
                None => token.to_string(),
            },
            Behavior::MajorAnomalous { .. } => unrelated(ord),
            Behavior::Unspeakable => String::new(),
        };
        serde_json::to_string(&Explanation {
            meaning: format!("A string that reads {text:?}."),
            text: &text,
        })
        .expect("explanation serializes")
    }

    fn minor_pick(&self, stream: Stream, token: &str, ord: u64, rate: f64, variants: &[String]) -> String {
        let off = (rate * DECK_LEN as f64).round() as usize;
        if self.deck_slot(stream, token, ord, DECK_LEN) < off {
            let vs = variants_or_default(token, variants);
            let i = self.rng(stream, "pick", token, ord).random_range(0..vs.len());
            vs[i].clone()
        } else {
            token.to_string()
        }
    }

    /// Unrelated strings in a token-specific seeded order, excluding any that
    /// would count as a repetition of the token.
    fn unrelated_for(&self, token: &str) -> Vec<String> {
        let mut pool: Vec<String> = UNRELATED
            .iter()
            .filter(|s| !is_repetition(token, s))
            .map(|s| s.to_string())
            .collect();
        pool.shuffle(&mut self.rng(Stream::Repeat, "pool", token, 0));
        pool
    }

    fn deck_slot(&self, stream: Stream, token: &str, ordinal: u64, len: usize) -> usize {
        let block = ordinal / len as u64;
        let mut perm: Vec<usize> = (0..len).collect();
        perm.shuffle(&mut self.rng(stream, "deck", token, block));
        perm[(ordinal % len as u64) as usize]
    }

    fn rng(&self, stream: Stream, purpose: &str, token: &str, index: u64) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(self.profile.seed.to_le_bytes());
        h.update(stream.name().as_bytes());
        h.update([0]);
        h.update(purpose.as_bytes());
        h.update([0]);
        h.update((token.len() as u64).to_le_bytes());
        h.update(token.as_bytes());
        h.update(index.to_le_bytes());
        ChaCha8Rng::from_seed(h.finalize().into())
    }

    fn next_ordinal(&self, stream: Stream, token: &str) -> u64 {
        let mut map = self.ordinals.lock().expect("ordinal lock");
        let slot = map.entry((stream, token.to_string())).or_insert(0);
        let ord = *slot;
        *slot += 1;
        ord
    }
}

/// Whitespace variants that still count as repetitions.
fn fillers(token: &str) -> Vec<String> {
    vec![
        format!(" {token}"),
        format!("\t{token}"),
        format!("{token}\n"),
        format!(" {token} "),
    ]
}

fn variants_or_default(token: &str, variants: &[String]) -> Vec<String> {
    if !variants.is_empty() {
        return variants.to_vec();
    }
    let mut chars = token.chars();
    chars.next();
    let dropped: String = chars.collect();
    if !dropped.is_empty() && !is_repetition(token, &dropped) {
        vec![dropped]
    } else {
        vec![format!("{token}_")]
    }
}

fn flat(items: impl Iterator<Item = String>) -> Vec<(String, f64)> {
    let items: Vec<String> = items.collect();
    let total: f64 = FLAT_WEIGHTS[..items.len()].iter().sum();
    items
        .into_iter()
        .zip(FLAT_WEIGHTS)
        .map(|(s, w)| (s, FLAT_MASS * w / total))
        .collect()
}

fn position_logprobs(dist: &[(String, f64)], content: &str, top_n: u8) -> Vec<PositionLogprobs> {
    let Some(first) = dist.first() else {
        return Vec::new();
    };
    let chosen = dist.iter().find(|(s, _)| s == content).unwrap_or(first);
    vec![PositionLogprobs {
        token: chosen.0.clone(),
        logprob: chosen.1.ln(),
        top_logprobs: dist
            .iter()
            .take(top_n as usize)
            .map(|(s, p)| TopLogprob::new(s.clone(), p.ln()))
            .collect(),
    }]
}

fn word_count(s: &str) -> usize {
    s.split_whitespace().count()
}

fn error_reply(status: u16, kind: &str, message: &str) -> MockReply {
    let body = serde_json::json!({"error": {"message": message, "type": kind, "code": status}});
    MockReply {
        status,
        body: serde_json::to_vec(&body).expect("error body serializes"),
    }
}
