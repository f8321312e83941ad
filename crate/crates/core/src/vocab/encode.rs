use std::collections::HashMap;

use super::{EncodeError, EncodedToken, TokenId};

/// Encodes one pre-tokenization piece, appending tokens with spans offset by
/// `base`.
pub(super) fn encode_piece(
    ranks: &HashMap<Vec<u8>, TokenId>,
    piece: &[u8],
    base: usize,
    out: &mut Vec<EncodedToken>,
) -> Result<(), EncodeError> {
    if let Some(&id) = ranks.get(piece) {
        out.push(EncodedToken {
            id,
            span: base..base + piece.len(),
        });
        return Ok(());
    }
    let bounds = merge_boundaries(ranks, piece);
    for w in bounds.windows(2) {
        let (start, end) = (w[0], w[1]);
        let bytes = &piece[start..end];
        let id = match ranks.get(bytes) {
            Some(&id) => id,
            // Only single bytes can be left unmerged without a rank.
            None => return Err(EncodeError::MissingByte(bytes[0])),
        };
        out.push(EncodedToken {
            id,
            span: base + start..base + end,
        });
    }
    Ok(())
}

/// Repeatedly merges the adjacent pair whose concatenation has the lowest
/// rank; ties go to the leftmost pair. Returns the part boundaries, including
/// 0 and `piece.len()`.
fn merge_boundaries(ranks: &HashMap<Vec<u8>, TokenId>, piece: &[u8]) -> Vec<usize> {
    const NONE: TokenId = TokenId::MAX;

    // parts[i] = (start offset, rank of merging part i with part i+1)
    let rank_of = |parts: &[(usize, TokenId)], i: usize| -> TokenId {
        // Rank of the bytes covering parts i and i+1, as if part i+1 were
        // already removed: that is parts[i].0 .. parts[i + 3].0.
        if i + 3 < parts.len() {
            ranks
                .get(&piece[parts[i].0..parts[i + 3].0])
                .copied()
                .unwrap_or(NONE)
        } else {
            NONE
        }
    };

    let mut parts: Vec<(usize, TokenId)> = Vec::with_capacity(piece.len() + 1);
    for i in 0..piece.len().saturating_sub(1) {
        let r = ranks.get(&piece[i..i + 2]).copied().unwrap_or(NONE);
        parts.push((i, r));
    }
    parts.push((piece.len().saturating_sub(1), NONE));
    parts.push((piece.len(), NONE));

    loop {
        let mut best = (NONE, 0usize);
        for (i, &(_, r)) in parts[..parts.len() - 1].iter().enumerate() {
            if r < best.0 {
                best = (r, i);
            }
        }
        if best.0 == NONE {
            break;
        }
        let i = best.1;
        if i > 0 {
            parts[i - 1].1 = rank_of(&parts, i - 1);
        }
        parts[i].1 = rank_of(&parts, i);
        parts.remove(i + 1);
    }

    parts.into_iter().map(|(start, _)| start).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ranks(entries: &[(&str, TokenId)]) -> HashMap<Vec<u8>, TokenId> {
        let mut m: HashMap<Vec<u8>, TokenId> =
            (0u8..=255).map(|b| (vec![b], b as TokenId)).collect();
        for (s, r) in entries {
            m.insert(s.as_bytes().to_vec(), *r);
        }
        m
    }

    fn ids(ranks: &HashMap<Vec<u8>, TokenId>, s: &str) -> Vec<TokenId> {
        let mut out = Vec::new();
        encode_piece(ranks, s.as_bytes(), 0, &mut out).unwrap();
        out.into_iter().map(|t| t.id).collect()
    }

    #[test]
    fn no_merges_gives_bytes() {
        let r = ranks(&[]);
        assert_eq!(ids(&r, "xyz"), vec![b'x' as u32, b'y' as u32, b'z' as u32]);
    }

    #[test]
    fn merge_order_follows_rank_not_position() {
        // "bc" outranks "ab", so "abc" -> a + bc.
        let r = ranks(&[("bc", 256), ("ab", 257)]);
        assert_eq!(ids(&r, "abc"), vec![b'a' as u32, 256]);
        let r = ranks(&[("ab", 256), ("bc", 257)]);
        assert_eq!(ids(&r, "abc"), vec![256, b'c' as u32]);
    }

    #[test]
    fn whole_piece_shortcut_and_spans() {
        let r = ranks(&[("ab", 256), ("abab", 257)]);
        let mut out = Vec::new();
        encode_piece(&r, b"ababa", 10, &mut out).unwrap();
        assert_eq!(
            out,
            vec![
                EncodedToken { id: 257, span: 10..14 },
                EncodedToken { id: b'a' as u32, span: 14..15 },
            ]
        );
    }

    #[test]
    fn single_byte_piece() {
        let r = ranks(&[]);
        assert_eq!(ids(&r, "q"), vec![b'q' as u32]);
    }
}
