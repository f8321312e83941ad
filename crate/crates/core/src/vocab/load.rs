use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;

use super::{SplitPattern, TokenEntry, TokenId, VocabError, Vocabulary};

/// Loads a vocabulary file in the `<base64> <rank>` line format.
pub fn load_vocabulary(path: impl AsRef<Path>) -> Result<Vocabulary, VocabError> {
    let file = std::fs::File::open(path)?;
    Vocabulary::from_reader(std::io::BufReader::new(file))
}

impl Vocabulary {
    pub fn from_reader(reader: impl BufRead) -> Result<Self, VocabError> {
        let mut entries = Vec::new();
        let mut rank_lines: HashMap<TokenId, usize> = HashMap::new();
        let mut seen_bytes: HashMap<Vec<u8>, TokenId> = HashMap::new();

        for (idx, line) in reader.split(b'\n').enumerate() {
            let line_no = idx + 1;
            let mut line = line?;
            if line.last() == Some(&b'\r') {
                line.pop();
            }
            let (id, bytes) = parse_line(&line, line_no)?;
            if let Some(&first_line) = rank_lines.get(&id) {
                return Err(VocabError::DuplicateRank {
                    line: line_no,
                    rank: id,
                    first_line,
                });
            }
            if let Some(&rank) = seen_bytes.get(&bytes) {
                return Err(VocabError::DuplicateBytes { line: line_no, rank });
            }
            rank_lines.insert(id, line_no);
            seen_bytes.insert(bytes.clone(), id);
            entries.push(TokenEntry::new(id, bytes));
        }
        Ok(Vocabulary::from_entries(entries, SplitPattern::Cl100k))
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self, VocabError> {
        Self::from_reader(data)
    }
}

fn parse_line(line: &[u8], line_no: usize) -> Result<(TokenId, Vec<u8>), VocabError> {
    let malformed = |reason: &str| VocabError::Malformed {
        line: line_no,
        reason: reason.to_string(),
    };
    let text = std::str::from_utf8(line).map_err(|_| malformed("line is not ASCII"))?;
    let mut fields = text.split(' ');
    let (b64, rank) = match (fields.next(), fields.next(), fields.next()) {
        (Some(""), _, _) | (None, _, _) => return Err(malformed("empty line")),
        (Some(b64), Some(rank), None) => (b64, rank),
        (Some(_), None, _) => return Err(malformed("missing rank")),
        (Some(_), Some(_), Some(_)) => return Err(malformed("expected exactly two fields")),
    };
    let bytes = STANDARD
        .decode(b64)
        .map_err(|e| malformed(&format!("bad base64: {e}")))?;
    if bytes.is_empty() {
        return Err(malformed("empty token"));
    }
    if rank.is_empty() || !rank.bytes().all(|b| b.is_ascii_digit()) {
        return Err(malformed(&format!("rank {rank:?} is not a decimal integer")));
    }
    let id: TokenId = rank
        .parse()
        .map_err(|_| malformed(&format!("rank {rank} out of range")))?;
    Ok((id, bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_entry() {
        let v = Vocabulary::from_bytes(b"YQ== 0\n").unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(v.decode_token(0).unwrap().decoded.as_deref(), Some("a"));
    }

    #[test]
    fn no_trailing_newline_and_crlf() {
        let v = Vocabulary::from_bytes(b"YQ== 0\r\nYg== 1").unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!(v.decode_token(1).unwrap().bytes, b"b");
    }

    #[test]
    fn invalid_utf8_entry_is_kept() {
        // 0xff
        let v = Vocabulary::from_bytes(b"/w== 0\n").unwrap();
        let e = v.decode_token(0).unwrap();
        assert_eq!(e.bytes, vec![0xff]);
        assert!(e.decoded.is_none());
    }

    #[test]
    fn duplicate_rank_cites_second_line() {
        let err = Vocabulary::from_bytes(b"YQ== 0\nYg== 1\nYw== 0\n").unwrap_err();
        match err {
            VocabError::DuplicateRank { line, rank, first_line } => {
                assert_eq!((line, rank, first_line), (3, 0, 1));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(err_line(b"YQ== 0\nYQ== 1\n").contains("line 2"));
    }

    fn err_line(data: &[u8]) -> String {
        Vocabulary::from_bytes(data).unwrap_err().to_string()
    }

    #[test]
    fn malformed_lines_name_the_line() {
        assert!(err_line(b"YQ== 0\n!!!! 1\n").starts_with("line 2: bad base64"));
        assert!(err_line(b"YQ==\n").starts_with("line 1: missing rank"));
        assert!(err_line(b"YQ== x\n").starts_with("line 1: rank"));
        assert!(err_line(b"YQ== -1\n").starts_with("line 1: rank"));
        assert!(err_line(b"YQ== 0\n\nYg== 1\n").starts_with("line 2: empty line"));
        assert!(err_line(b"YQ== 0 extra\n").starts_with("line 1: expected exactly two"));
        assert!(err_line(b"YQ== 99999999999\n").contains("out of range"));
    }
}
