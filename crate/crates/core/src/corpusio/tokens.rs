//! Per-clip integer sequences as text.
//!
//! Token files: `clip_id<TAB>t1 t2 t3` (decimal ids, single spaces, empty
//! after the tab for an empty sequence). Symbol files: `clip_id<TAB>` followed
//! by the code-point rendering from [`crate::symbolizer::dump_text`].

use std::collections::HashSet;
use std::path::Path;

use super::{read_text, write_bytes};
use crate::error::{Error, Result};
use crate::symbolizer::{dump_text, parse_text, SymbolSeq, MAX_ALPHABET};

/// Acoustic token ids of one clip.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSeq {
    pub clip_id: String,
    pub tokens: Vec<u32>,
}

/// Token sequences for a set of clips, unique ids, file order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TokenFile {
    pub seqs: Vec<TokenSeq>,
}

impl TokenFile {
    pub fn new(seqs: Vec<TokenSeq>) -> Result<Self> {
        let mut seen = HashSet::new();
        for (i, s) in seqs.iter().enumerate() {
            check_clip_id(&s.clip_id).map_err(|m| Error::parse("token file", i + 1, m))?;
            if !seen.insert(s.clip_id.as_str()) {
                return Err(Error::DuplicateClip {
                    clip_id: s.clip_id.clone(),
                    line: i + 1,
                });
            }
        }
        Ok(Self { seqs })
    }

    pub fn len(&self) -> usize {
        self.seqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seqs.is_empty()
    }

    /// Largest token id plus one, 0 when there are no tokens.
    pub fn id_bound(&self) -> usize {
        self.seqs
            .iter()
            .flat_map(|s| s.tokens.iter())
            .map(|&t| t as usize + 1)
            .max()
            .unwrap_or(0)
    }
}

fn check_clip_id(id: &str) -> std::result::Result<(), String> {
    if id.is_empty() {
        Err("empty clip id".into())
    } else if id.contains(['\t', '\n', '\r']) {
        Err(format!("clip id {id:?} contains a tab or newline"))
    } else {
        Ok(())
    }
}

fn split_record<'a>(what: &'static str, line_no: usize, line: &'a str) -> Result<(&'a str, &'a str)> {
    let (id, rest) = line
        .split_once('\t')
        .ok_or_else(|| Error::parse(what, line_no, "missing tab after clip id"))?;
    check_clip_id(id).map_err(|m| Error::parse(what, line_no, m))?;
    Ok((id, rest))
}

/// Parses a token file. With `vocab_size`, every id must be below it.
pub fn parse_token_file(text: &str, vocab_size: Option<usize>) -> Result<TokenFile> {
    const WHAT: &str = "token file";
    let mut seqs = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.is_empty() {
            continue;
        }
        let (id, rest) = split_record(WHAT, line_no, line)?;
        let mut tokens = Vec::new();
        for field in rest.split(' ').filter(|f| !f.is_empty()) {
            let t: u32 = field
                .parse()
                .map_err(|_| Error::parse(WHAT, line_no, format!("bad token id {field:?}")))?;
            if let Some(v) = vocab_size {
                if t as usize >= v {
                    return Err(Error::parse(
                        WHAT,
                        line_no,
                        format!("token id {t} >= vocabulary size {v}"),
                    ));
                }
            }
            tokens.push(t);
        }
        if !seen.insert(id.to_string()) {
            return Err(Error::DuplicateClip {
                clip_id: id.to_string(),
                line: line_no,
            });
        }
        seqs.push(TokenSeq {
            clip_id: id.to_string(),
            tokens,
        });
    }
    Ok(TokenFile { seqs })
}

pub fn render_token_file(file: &TokenFile) -> String {
    let mut out = String::new();
    for s in &file.seqs {
        out.push_str(&s.clip_id);
        out.push('\t');
        for (i, t) in s.tokens.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            out.push_str(&t.to_string());
        }
        out.push('\n');
    }
    out
}

pub fn read_token_file(path: impl AsRef<Path>, vocab_size: Option<usize>) -> Result<TokenFile> {
    parse_token_file(&read_text(path.as_ref())?, vocab_size)
}

pub fn write_token_file(path: impl AsRef<Path>, file: &TokenFile) -> Result<()> {
    write_bytes(path.as_ref(), render_token_file(file).as_bytes())
}

/// Parses a symbol file. `alphabet_size` defaults to [`MAX_ALPHABET`].
pub fn parse_symbol_file(text: &str, alphabet_size: Option<usize>) -> Result<Vec<SymbolSeq>> {
    const WHAT: &str = "symbol file";
    let alphabet = alphabet_size.unwrap_or(MAX_ALPHABET);
    let mut seqs = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.is_empty() {
            continue;
        }
        let (id, rest) = split_record(WHAT, line_no, line)?;
        let symbols =
            parse_text(rest, alphabet).map_err(|e| Error::parse(WHAT, line_no, e.to_string()))?;
        if !seen.insert(id.to_string()) {
            return Err(Error::DuplicateClip {
                clip_id: id.to_string(),
                line: line_no,
            });
        }
        seqs.push(SymbolSeq {
            clip_id: id.to_string(),
            symbols,
        });
    }
    Ok(seqs)
}

pub fn render_symbol_file(seqs: &[SymbolSeq], alphabet_size: usize) -> Result<String> {
    let mut out = String::new();
    for s in seqs {
        check_clip_id(&s.clip_id).map_err(Error::InvalidArgument)?;
        out.push_str(&s.clip_id);
        out.push('\t');
        out.push_str(&dump_text(&s.symbols, alphabet_size)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn read_symbol_file(
    path: impl AsRef<Path>,
    alphabet_size: Option<usize>,
) -> Result<Vec<SymbolSeq>> {
    parse_symbol_file(&read_text(path.as_ref())?, alphabet_size)
}

pub fn write_symbol_file(
    path: impl AsRef<Path>,
    seqs: &[SymbolSeq],
    alphabet_size: usize,
) -> Result<()> {
    write_bytes(path.as_ref(), render_symbol_file(seqs, alphabet_size)?.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn token_file_round_trip() {
        let f = TokenFile::new(vec![
            TokenSeq {
                clip_id: "c1".into(),
                tokens: vec![3, 3, 7],
            },
            TokenSeq {
                clip_id: "c0".into(),
                tokens: vec![],
            },
        ])
        .unwrap();
        let text = render_token_file(&f);
        assert_eq!(text, "c1\t3 3 7\nc0\t\n");
        assert_eq!(parse_token_file(&text, Some(8)).unwrap(), f);
        assert_eq!(f.id_bound(), 8);
    }

    #[test]
    fn token_id_bound_enforced() {
        let err = parse_token_file("a\t1 2\nb\t10\n", Some(10)).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn token_file_rejects_garbage() {
        assert!(parse_token_file("no-tab-here\n", None).is_err());
        assert!(parse_token_file("a\t1 x\n", None).is_err());
        assert!(parse_token_file("a\t-1\n", None).is_err());
        assert!(parse_token_file("a\t1\na\t2\n", None).is_err());
    }

    #[test]
    fn symbol_file_round_trip() {
        let seqs = vec![
            SymbolSeq {
                clip_id: "x".into(),
                symbols: vec![0, 1, 499],
            },
            SymbolSeq {
                clip_id: "y".into(),
                symbols: vec![],
            },
        ];
        let text = render_symbol_file(&seqs, 500).unwrap();
        assert!(text.starts_with("x\t一丁"));
        assert_eq!(parse_symbol_file(&text, Some(500)).unwrap(), seqs);
        assert!(parse_symbol_file(&text, Some(499)).is_err());
    }
}
