//! Run collapse of cluster-id sequences and their code-point text form.
//!
//! Symbols stay integers everywhere in the pipeline. The text form maps
//! symbol `i` to the character `U+4E00 + i`, which keeps every symbol a
//! single printable code point for external subword tools.

use crate::error::{Error, Result};
use crate::quantizer::ClusterIdSeq;

/// First code point of the text rendering.
pub const BASE: u32 = 0x4E00;
/// Size of the contiguous CJK Unified Ideographs block starting at [`BASE`].
pub const MAX_ALPHABET: usize = 0x9FFF - 0x4E00 + 1;

/// Run-collapsed symbols of one clip.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SymbolSeq {
    pub clip_id: String,
    pub symbols: Vec<u32>,
}

/// Keeps one symbol per maximal run of equal ids.
pub fn collapse_runs(ids: &ClusterIdSeq) -> SymbolSeq {
    SymbolSeq {
        clip_id: ids.clip_id.clone(),
        symbols: collapse(&ids.ids),
    }
}

/// Slice form of [`collapse_runs`].
pub fn collapse(ids: &[u32]) -> Vec<u32> {
    let mut out = ids.to_vec();
    out.dedup();
    out
}

pub fn dump_text(symbols: &[u32], alphabet_size: usize) -> Result<String> {
    check_alphabet(alphabet_size)?;
    symbols
        .iter()
        .map(|&s| {
            if (s as usize) < alphabet_size {
                // BASE + s stays inside the ideograph block, never a surrogate.
                Ok(char::from_u32(BASE + s).expect("valid code point"))
            } else {
                Err(Error::OutOfRange(
                    "symbol",
                    format!("{s} >= alphabet size {alphabet_size}"),
                ))
            }
        })
        .collect()
}

pub fn parse_text(text: &str, alphabet_size: usize) -> Result<Vec<u32>> {
    check_alphabet(alphabet_size)?;
    text.chars()
        .map(|c| {
            let cp = c as u32;
            match cp.checked_sub(BASE) {
                Some(s) if (s as usize) < alphabet_size => Ok(s),
                _ => Err(Error::OutOfRange(
                    "symbol character",
                    format!("{c:?} (U+{cp:04X}) outside alphabet of size {alphabet_size}"),
                )),
            }
        })
        .collect()
}

fn check_alphabet(alphabet_size: usize) -> Result<()> {
    if alphabet_size == 0 || alphabet_size > MAX_ALPHABET {
        return Err(Error::OutOfRange(
            "alphabet size",
            format!("{alphabet_size} not in 1..={MAX_ALPHABET}"),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seq(ids: &[u32]) -> ClusterIdSeq {
        ClusterIdSeq {
            clip_id: "c".into(),
            ids: ids.to_vec(),
        }
    }

    #[test]
    fn collapse_examples() {
        assert_eq!(collapse_runs(&seq(&[1, 1, 2, 2, 2, 1])).symbols, vec![1, 2, 1]);
        assert!(collapse_runs(&seq(&[])).symbols.is_empty());
        assert_eq!(collapse_runs(&seq(&[5])).symbols, vec![5]);
        assert_eq!(collapse_runs(&seq(&[5])).clip_id, "c");
    }

    #[test]
    fn text_examples() {
        assert_eq!(dump_text(&[0, 1], 500).unwrap(), "一丁");
        assert_eq!(parse_text("一丁", 500).unwrap(), vec![0, 1]);
        assert!(dump_text(&[500], 500).is_err());
        assert!(parse_text("a", 500).is_err());
        assert!(dump_text(&[0], 0).is_err());
    }

    proptest! {
        #[test]
        fn collapse_properties(ids in proptest::collection::vec(0u32..6, 0..80)) {
            let once = collapse(&ids);
            prop_assert_eq!(collapse(&once), once.clone());
            prop_assert!(once.len() <= ids.len());
            prop_assert!(once.windows(2).all(|w| w[0] != w[1]));
            let mut a: Vec<u32> = ids.clone();
            a.sort_unstable();
            a.dedup();
            let mut b = once.clone();
            b.sort_unstable();
            b.dedup();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn text_round_trip(symbols in proptest::collection::vec(0u32..500, 0..100)) {
            let text = dump_text(&symbols, 500).unwrap();
            prop_assert_eq!(text.chars().count(), symbols.len());
            prop_assert_eq!(parse_text(&text, 500).unwrap(), symbols);
        }
    }
}
