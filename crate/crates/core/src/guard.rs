//! Input-side mitigation: find spans that encode to blocklisted ids and break
//! them up by inserting a space in front.
//!
//! A blocked token that itself begins with a space usually survives the
//! insertion (the extra space tokenizes on its own) and is reported as
//! unresolvable. Inserting inside a word changes how the text reads; that is
//! accepted.

use std::collections::BTreeSet;
use std::ops::Range;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::triage::{AnomalyRecord, Classification};
use crate::vocab::{EncodeError, TokenId, Vocabulary};

pub const MAX_PASSES: usize = 3;

#[derive(Error, Debug)]
pub enum GuardError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("blocklisted id {0} is not in the vocabulary")]
    UnknownId(TokenId),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error("blocked ids {surviving:?} remain after {MAX_PASSES} perturbation passes")]
    Unresolvable { surviving: Vec<TokenId>, text: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BlocklistSource {
    Report(PathBuf),
    IdList(PathBuf),
    Inline,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Blocklist {
    ids: BTreeSet<TokenId>,
    source: BlocklistSource,
}

#[derive(Deserialize)]
struct ReportView {
    records: Vec<ReportRecordView>,
}

#[derive(Deserialize)]
struct ReportRecordView {
    id: TokenId,
    classification: Classification,
}

impl Blocklist {
    pub fn new(ids: impl IntoIterator<Item = TokenId>, vocab: &Vocabulary) -> Result<Self, GuardError> {
        Self::with_source(ids.into_iter().collect(), BlocklistSource::Inline, vocab)
    }

    fn with_source(ids: BTreeSet<TokenId>, source: BlocklistSource, vocab: &Vocabulary) -> Result<Self, GuardError> {
        if let Some(&bad) = ids.iter().find(|&&id| !vocab.contains(id)) {
            return Err(GuardError::UnknownId(bad));
        }
        Ok(Self { ids, source })
    }

    /// Major and no-result records.
    pub fn from_records(records: &[AnomalyRecord], vocab: &Vocabulary) -> Result<Self, GuardError> {
        let ids = records
            .iter()
            .filter(|r| r.classification.is_severe())
            .map(|r| r.token_id)
            .collect();
        Self::with_source(ids, BlocklistSource::Inline, vocab)
    }

    /// Reads a `report.json` (major and no-result records) or a plain list
    /// with one id per line; blank lines and `#` comments are ignored.
    pub fn load(path: impl AsRef<Path>, vocab: &Vocabulary) -> Result<Self, GuardError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| GuardError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let parse_err = |message: String| GuardError::Parse {
            path: path.to_path_buf(),
            message,
        };
        if text.trim_start().starts_with('{') {
            let report: ReportView = serde_json::from_str(&text).map_err(|e| parse_err(e.to_string()))?;
            let ids = report
                .records
                .iter()
                .filter(|r| r.classification.is_severe())
                .map(|r| r.id)
                .collect();
            return Self::with_source(ids, BlocklistSource::Report(path.to_path_buf()), vocab);
        }
        let mut ids = BTreeSet::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let id = line
                .parse()
                .map_err(|_| parse_err(format!("line {}: {line:?} is not a token id", i + 1)))?;
            ids.insert(id);
        }
        Self::with_source(ids, BlocklistSource::IdList(path.to_path_buf()), vocab)
    }

    pub fn ids(&self) -> &BTreeSet<TokenId> {
        &self.ids
    }

    pub fn source(&self) -> &BlocklistSource {
        &self.source
    }

    pub fn contains(&self, id: TokenId) -> bool {
        self.ids.contains(&id)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockedHit {
    /// Byte offsets into the input.
    pub span: Range<usize>,
    pub id: TokenId,
}

/// Every token of `text` whose id is blocklisted, in order.
pub fn find_blocked(text: &str, vocab: &Vocabulary, bl: &Blocklist) -> Result<Vec<BlockedHit>, GuardError> {
    Ok(vocab
        .encode_with_spans(text)?
        .into_iter()
        .filter(|t| bl.contains(t.id))
        .map(|t| BlockedHit { span: t.span, id: t.id })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Perturbed {
    pub text: String,
    pub changed: bool,
    /// Byte offsets in `text` of every inserted space, ascending.
    pub inserted: Vec<usize>,
}

impl Perturbed {
    /// The input text, recovered by deleting the inserted spaces.
    pub fn restore(&self) -> String {
        let mut out = String::with_capacity(self.text.len());
        let mut last = 0;
        for &pos in &self.inserted {
            out.push_str(&self.text[last..pos]);
            last = pos + 1;
        }
        out.push_str(&self.text[last..]);
        out
    }
}

/// Inserts a space before each blocked span, re-encoding after each pass.
/// Spans that start inside a multi-byte character get the space before that
/// character.
pub fn perturb(text: &str, vocab: &Vocabulary, bl: &Blocklist) -> Result<Perturbed, GuardError> {
    let mut cur = text.to_string();
    let mut inserted: Vec<usize> = Vec::new();
    for _ in 0..MAX_PASSES {
        let hits = find_blocked(&cur, vocab, bl)?;
        if hits.is_empty() {
            break;
        }
        let mut points: Vec<usize> = hits.iter().map(|h| floor_char_boundary(&cur, h.span.start)).collect();
        points.dedup();
        for &p in points.iter().rev() {
            cur.insert(p, ' ');
            for q in inserted.iter_mut().filter(|q| **q >= p) {
                *q += 1;
            }
            inserted.push(p);
        }
        inserted.sort_unstable();
    }
    let surviving: BTreeSet<TokenId> = find_blocked(&cur, vocab, bl)?.into_iter().map(|h| h.id).collect();
    if !surviving.is_empty() {
        return Err(GuardError::Unresolvable {
            surviving: surviving.into_iter().collect(),
            text: cur,
        });
    }
    Ok(Perturbed {
        changed: !inserted.is_empty(),
        text: cur,
        inserted,
    })
}

fn floor_char_boundary(s: &str, mut i: usize) -> usize {
    while !s.is_char_boundary(i) {
        i -= 1;
    }
    i
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vocab::{SplitPattern, TokenEntry};

    // single bytes, then " a" (256) and "ab" (257)
    fn vocab() -> Vocabulary {
        let mut entries: Vec<TokenEntry> = (0u8..=255).map(|b| TokenEntry::new(b as TokenId, vec![b])).collect();
        entries.push(TokenEntry::new(256, b" a".to_vec()));
        entries.push(TokenEntry::new(257, b"ab".to_vec()));
        Vocabulary::from_entries(entries, SplitPattern::Cl100k)
    }

    #[test]
    fn finds_and_breaks_spans() {
        let v = vocab();
        let bl = Blocklist::new([257], &v).unwrap();
        let hits = find_blocked("ab", &v, &bl).unwrap();
        assert_eq!(hits, vec![BlockedHit { span: 0..2, id: 257 }]);
        assert!(find_blocked("ba", &v, &bl).unwrap().is_empty());
        // " ab" encodes as " a" + "b", so one space suffices.
        let p = perturb("ab", &v, &bl).unwrap();
        assert_eq!(p.text, " ab");
        assert!(p.changed);
        assert_eq!(p.restore(), "ab");
        assert!(!perturb(&p.text, &v, &bl).unwrap().changed);
    }

    #[test]
    fn leading_space_tokens_are_unresolvable() {
        let v = vocab();
        let bl = Blocklist::new([256], &v).unwrap();
        match perturb("x a", &v, &bl) {
            Err(GuardError::Unresolvable { surviving, .. }) => assert_eq!(surviving, vec![256]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_ids_rejected() {
        assert!(matches!(Blocklist::new([999], &vocab()), Err(GuardError::UnknownId(999))));
    }

    #[test]
    fn loads_id_lists_and_reports() {
        let v = vocab();
        let dir = tempfile::tempdir().unwrap();
        let list = dir.path().join("ids.txt");
        std::fs::write(&list, "# blocked\n256\n\n257 # trailing\n").unwrap();
        let bl = Blocklist::load(&list, &v).unwrap();
        assert_eq!(bl.ids().iter().copied().collect::<Vec<_>>(), vec![256, 257]);
        std::fs::write(&list, "25x\n").unwrap();
        assert!(matches!(Blocklist::load(&list, &v), Err(GuardError::Parse { .. })));

        let report = dir.path().join("report.json");
        std::fs::write(
            &report,
            r#"{"records":[{"id":256,"classification":"major"},{"id":257,"classification":"minor"},{"id":97,"classification":"no_result"}]}"#,
        )
        .unwrap();
        let bl = Blocklist::load(&report, &v).unwrap();
        assert_eq!(bl.ids().iter().copied().collect::<Vec<_>>(), vec![97, 256]);
        assert_eq!(bl.source(), &BlocklistSource::Report(report));
    }
}
