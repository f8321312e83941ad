//! Byte-level BPE vocabulary: loading, id lookup and encoding.
//!
//! Vocabulary files use the tiktoken distribution format, one entry per line:
//!
//! ```text
//! <base64(token bytes)> <decimal rank>
//! ```
//!
//! The rank doubles as the token id and as the merge priority (lower ranks
//! merge first).

mod encode;
mod load;

use std::collections::HashMap;
use std::ops::Range;

use fancy_regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use load::load_vocabulary;

pub type TokenId = u32;

/// cl100k_base pre-tokenization pattern.
pub const CL100K_PATTERN: &str = r"(?i:'s|'t|'re|'ve|'m|'ll|'d)|[^\r\n\p{L}\p{N}]?\p{L}+|\p{N}{1,3}| ?[^\s\p{L}\p{N}]+[\r\n]*|\s*[\r\n]+|\s+(?!\S)|\s+";

#[derive(Error, Debug)]
pub enum VocabError {
    #[error("failed to read vocabulary: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("line {line}: duplicate rank {rank} (first seen on line {first_line})")]
    DuplicateRank {
        line: usize,
        rank: TokenId,
        first_line: usize,
    },
    #[error("line {line}: duplicate token bytes (already assigned rank {rank})")]
    DuplicateBytes { line: usize, rank: TokenId },
    #[error("token id {0} is not in the vocabulary")]
    NotFound(TokenId),
}

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum EncodeError {
    #[error("byte 0x{0:02x} has no single-byte token; the vocabulary is not byte-complete")]
    MissingByte(u8),
}

/// Named pre-tokenization patterns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitPattern {
    Cl100k,
}

impl SplitPattern {
    pub fn regex_source(self) -> &'static str {
        match self {
            SplitPattern::Cl100k => CL100K_PATTERN,
        }
    }
}

/// One vocabulary entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenEntry {
    pub id: TokenId,
    pub bytes: Vec<u8>,
    /// Present iff `bytes` is valid UTF-8.
    pub decoded: Option<String>,
}

impl TokenEntry {
    pub fn new(id: TokenId, bytes: Vec<u8>) -> Self {
        let decoded = String::from_utf8(bytes.clone()).ok();
        Self { id, bytes, decoded }
    }

    /// Whether the token can be sent as text through a chat API.
    pub fn is_probeable(&self) -> bool {
        self.decoded.is_some()
    }
}

/// A token produced by [`Vocabulary::encode_with_spans`], with the byte range
/// of the input it covers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedToken {
    pub id: TokenId,
    pub span: Range<usize>,
}

/// Immutable after construction; share it behind an `Arc` across workers.
#[derive(Debug)]
pub struct Vocabulary {
    /// Sorted by id.
    entries: Vec<TokenEntry>,
    ranks: HashMap<Vec<u8>, TokenId>,
    split_pattern: SplitPattern,
    splitter: Regex,
    fingerprint: String,
}

impl Vocabulary {
    /// Builds a vocabulary from already-validated entries (unique ids and bytes).
    pub(crate) fn from_entries(mut entries: Vec<TokenEntry>, split_pattern: SplitPattern) -> Self {
        use sha2::{Digest, Sha256};

        entries.sort_by_key(|e| e.id);
        let ranks = entries.iter().map(|e| (e.bytes.clone(), e.id)).collect();
        let splitter =
            Regex::new(split_pattern.regex_source()).expect("built-in split pattern compiles");
        let mut hasher = Sha256::new();
        for e in &entries {
            hasher.update(e.id.to_le_bytes());
            hasher.update((e.bytes.len() as u64).to_le_bytes());
            hasher.update(&e.bytes);
        }
        let fingerprint = hex::encode(hasher.finalize());
        Self {
            entries,
            ranks,
            split_pattern,
            splitter,
            fingerprint,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn split_pattern(&self) -> SplitPattern {
        self.split_pattern
    }

    /// SHA-256 over every `(id, bytes)` pair, hex encoded.
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    /// Entries in ascending id order.
    pub fn iter(&self) -> impl Iterator<Item = &TokenEntry> {
        self.entries.iter()
    }

    pub fn get(&self, id: TokenId) -> Option<&TokenEntry> {
        self.entries
            .binary_search_by_key(&id, |e| e.id)
            .ok()
            .map(|i| &self.entries[i])
    }

    pub fn decode_token(&self, id: TokenId) -> Result<&TokenEntry, VocabError> {
        self.get(id).ok_or(VocabError::NotFound(id))
    }

    pub fn contains(&self, id: TokenId) -> bool {
        self.get(id).is_some()
    }

    /// Concatenated bytes of `ids`.
    pub fn decode_bytes(&self, ids: &[TokenId]) -> Result<Vec<u8>, VocabError> {
        let mut out = Vec::new();
        for &id in ids {
            out.extend_from_slice(&self.decode_token(id)?.bytes);
        }
        Ok(out)
    }

    /// Rank of an exact byte string, if it is a token.
    pub fn rank_of(&self, bytes: &[u8]) -> Option<TokenId> {
        self.ranks.get(bytes).copied()
    }

    pub fn encode(&self, text: &str) -> Result<Vec<TokenId>, EncodeError> {
        Ok(self
            .encode_with_spans(text)?
            .into_iter()
            .map(|t| t.id)
            .collect())
    }

    pub fn encode_with_spans(&self, text: &str) -> Result<Vec<EncodedToken>, EncodeError> {
        let mut out = Vec::new();
        for piece in self.pieces(text) {
            let bytes = &text.as_bytes()[piece.clone()];
            encode::encode_piece(&self.ranks, bytes, piece.start, &mut out)?;
        }
        Ok(out)
    }

    /// Byte ranges of the pre-tokenization pieces of `text`.
    pub fn pieces(&self, text: &str) -> Vec<Range<usize>> {
        // The pattern has no catastrophic backtracking; a match error can only
        // come from the backtrack limit, which these alternatives never reach.
        self.splitter
            .find_iter(text)
            .map(|m| m.expect("split pattern match").range())
            .collect()
    }

    /// Multi-byte entries that cannot be formed by merging two lower-ranked
    /// entries. Empty for a well-formed BPE vocabulary.
    pub fn unreachable_entries(&self) -> Vec<TokenId> {
        self.entries
            .iter()
            .filter(|e| e.bytes.len() > 1)
            .filter(|e| {
                !(1..e.bytes.len()).any(|split| {
                    let (l, r) = e.bytes.split_at(split);
                    matches!(
                        (self.rank_of(l), self.rank_of(r)),
                        (Some(a), Some(b)) if a < e.id && b < e.id
                    )
                })
            })
            .map(|e| e.id)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Vocabulary {
        let mut entries: Vec<TokenEntry> = (0u8..=255)
            .map(|b| TokenEntry::new(b as TokenId, vec![b]))
            .collect();
        for (i, s) in ["ab", "abc", " a", "bc"].iter().enumerate() {
            entries.push(TokenEntry::new(256 + i as TokenId, s.as_bytes().to_vec()));
        }
        Vocabulary::from_entries(entries, SplitPattern::Cl100k)
    }

    #[test]
    fn decode_known_and_unknown() {
        let v = tiny();
        assert_eq!(v.decode_token(257).unwrap().decoded.as_deref(), Some("abc"));
        assert!(matches!(v.decode_token(9999), Err(VocabError::NotFound(9999))));
    }

    #[test]
    fn non_utf8_bytes_are_not_probeable() {
        let v = tiny();
        let e = v.decode_token(0xff).unwrap();
        assert_eq!(e.decoded, None);
        assert!(!e.is_probeable());
        assert!(v.decode_token(b'a' as TokenId).unwrap().is_probeable());
    }

    #[test]
    fn encodes_with_lowest_rank_first() {
        let v = tiny();
        // "abc": ab(256) merges before bc(259), then ab+c -> abc(257).
        assert_eq!(v.encode("abc").unwrap(), vec![257]);
        assert_eq!(v.encode("abcbc").unwrap(), vec![257, 259]);
        let spans = v.encode_with_spans("x abc").unwrap();
        assert_eq!(spans.first().unwrap().span, 0..1);
        assert_eq!(v.decode_bytes(&v.encode("x abc").unwrap()).unwrap(), b"x abc");
    }

    #[test]
    fn missing_byte_is_reported() {
        let v = Vocabulary::from_entries(vec![TokenEntry::new(0, b"a".to_vec())], SplitPattern::Cl100k);
        assert_eq!(v.encode("a").unwrap(), vec![0]);
        assert_eq!(v.encode("b"), Err(EncodeError::MissingByte(b'b')));
    }

    #[test]
    fn reachability() {
        let v = tiny();
        assert!(v.unreachable_entries().is_empty());
        let mut entries: Vec<TokenEntry> = v.iter().cloned().collect();
        entries.push(TokenEntry::new(300, b"zzzz".to_vec()));
        let v = Vocabulary::from_entries(entries, SplitPattern::Cl100k);
        assert_eq!(v.unreachable_entries(), vec![300]);
    }

    #[test]
    fn fingerprint_tracks_content() {
        let a = tiny();
        let b = tiny();
        assert_eq!(a.fingerprint(), b.fingerprint());
        let mut entries: Vec<TokenEntry> = a.iter().cloned().collect();
        entries.pop();
        let c = Vocabulary::from_entries(entries, SplitPattern::Cl100k);
        assert_ne!(a.fingerprint(), c.fingerprint());
    }
}
