#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use glitchscan::client::{ClientConfig, LlmClient};
use glitchscan::mock::{AnomalyProfile, Behavior};
use glitchscan::{Classification, RetryPolicy, TokenId, Vocabulary};

pub const CL100K_PATH: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/cl100k_base.tiktoken");
pub const MOCK_VOCAB_LEN: usize = 1000;

pub fn cl100k() -> &'static Vocabulary {
    static V: OnceLock<Vocabulary> = OnceLock::new();
    V.get_or_init(|| glitchscan::vocab::load_vocabulary(CL100K_PATH).expect("cl100k_base loads"))
}

/// Writes the first [`MOCK_VOCAB_LEN`] ranks of cl100k_base to `dir`.
pub fn write_mock_vocab(dir: &Path) -> PathBuf {
    let text = std::fs::read_to_string(CL100K_PATH).unwrap();
    let head: String = text.lines().take(MOCK_VOCAB_LEN).map(|l| format!("{l}\n")).collect();
    let path = dir.join("mock_vocab.tiktoken");
    std::fs::write(&path, head).unwrap();
    path
}

pub fn mock_vocab() -> &'static Vocabulary {
    static V: OnceLock<Vocabulary> = OnceLock::new();
    V.get_or_init(|| {
        let text = std::fs::read_to_string(CL100K_PATH).unwrap();
        let head: String = text.lines().take(MOCK_VOCAB_LEN).map(|l| format!("{l}\n")).collect();
        Vocabulary::from_bytes(head.as_bytes()).unwrap()
    })
}

pub fn fast_client(endpoint: &str) -> LlmClient {
    let mut cfg = ClientConfig::new(endpoint);
    cfg.retry = RetryPolicy::fast(5);
    cfg.model = "mock-model".into();
    LlmClient::new(cfg).unwrap()
}

/// Planted behaviors and the classification each must receive.
pub struct Planted {
    pub profile: AnomalyProfile,
    pub expected: BTreeMap<TokenId, Classification>,
}

/// 8 major, 4 minor, 3 no-result, 2 erroring and 5 borderline-but-benign
/// tokens spread over word-like ids of the mock vocabulary.
pub fn planted(vocab: &Vocabulary, seed: u64) -> Planted {
    let words: Vec<(TokenId, String)> = vocab
        .iter()
        .filter_map(|e| Some((e.id, e.decoded.clone()?)))
        .filter(|(_, t)| {
            let w = t.trim_start_matches(' ');
            w.chars().count() >= 3 && w.chars().all(|c| c.is_ascii_alphabetic())
        })
        .collect();
    assert!(words.len() >= 22 * 5, "mock vocabulary has {} word tokens", words.len());
    let stride = words.len() / 22;
    let picks: Vec<&(TokenId, String)> = (0..22).map(|i| &words[i * stride + 1]).collect();

    let minor = |rate: f64, variants: usize, text: &str| Behavior::MinorAnomalous {
        off_target_rate: rate,
        variants: (0..variants).map(|i| format!("{}{}", text.trim(), ["_x", "_y"][i])).collect(),
    };
    let mut profile = AnomalyProfile {
        seed,
        ..Default::default()
    };
    let mut expected = BTreeMap::new();
    for (i, (id, text)) in picks.into_iter().enumerate() {
        let (behavior, class) = match i {
            0..=7 => (
                Behavior::MajorAnomalous { flat_k: 3 + i % 3 },
                Classification::Major,
            ),
            8 => (minor(0.3, 1, text), Classification::Minor),
            9 => (minor(0.4, 1, text), Classification::Minor),
            10 => (minor(0.5, 1, text), Classification::Minor),
            11 => (minor(0.4, 2, text), Classification::Minor),
            12..=14 => (Behavior::NoResult, Classification::NoResult),
            15..=16 => (Behavior::Error400 { rate: 1.0 }, Classification::PermanentError),
            _ => (Behavior::Normal { top_prob: 0.45 }, Classification::FalsePositive),
        };
        profile.overrides.insert(text.clone(), behavior);
        expected.insert(*id, class);
    }
    Planted { profile, expected }
}
