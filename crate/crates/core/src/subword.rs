//! Pairwise-merge (BPE-style) subword tokenizer over symbol sequences.
//!
//! Token ids `0..alphabet_size` are the base symbols; merge `r` creates id
//! `alphabet_size + r`. Training repeatedly merges the most frequent
//! adjacent pair (ties: lexicographically smaller pair of base-symbol
//! expansions) until the vocabulary reaches `V` or no pair occurs at least
//! [`MIN_PAIR_COUNT`] times. Pairs never span two sequences.
//!
//! Every vocabulary entry expands to a distinct base-symbol string: a pair
//! whose concatenation already exists in the vocabulary is never merged.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpusio::TokenSeq;
use crate::error::{Error, Result};
use crate::symbolizer::{dump_text, parse_text, SymbolSeq, MAX_ALPHABET};

pub const DEFAULT_VOCAB_SIZE: usize = 10_000;
pub const MIN_PAIR_COUNT: u64 = 2;

/// Maps symbol sequences to token sequences and back.
pub trait Tokenizer {
    fn vocab_size(&self) -> usize;
    fn encode_symbols(&self, symbols: &[u32]) -> Result<Vec<u32>>;
    fn decode_tokens(&self, tokens: &[u32]) -> Result<Vec<u32>>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct TokenizerModel {
    alphabet_size: usize,
    requested_vocab: usize,
    merges: Vec<(u32, u32)>,
    expansions: Vec<Vec<u32>>,
    ranks: HashMap<(u32, u32), u32>,
}

impl TokenizerModel {
    /// Identity tokenizer: one token per base symbol.
    pub fn identity(alphabet_size: usize) -> Result<Self> {
        Self::from_merges(alphabet_size, alphabet_size, Vec::new())
    }

    /// Rebuilds a model from an ordered merge list.
    pub fn from_merges(alphabet_size: usize, requested_vocab: usize, merges: Vec<(u32, u32)>) -> Result<Self> {
        if alphabet_size == 0 || alphabet_size > MAX_ALPHABET {
            return Err(Error::OutOfRange(
                "alphabet size",
                format!("{alphabet_size} not in 1..={MAX_ALPHABET}"),
            ));
        }
        if requested_vocab < alphabet_size {
            return Err(Error::InvalidArgument(format!(
                "vocabulary size {requested_vocab} is below alphabet size {alphabet_size}"
            )));
        }
        if alphabet_size + merges.len() > requested_vocab {
            return Err(Error::InvalidArgument(format!(
                "{} merges exceed vocabulary size {requested_vocab}",
                merges.len()
            )));
        }
        let mut expansions: Vec<Vec<u32>> = (0..alphabet_size as u32).map(|s| vec![s]).collect();
        let mut seen: HashSet<Vec<u32>> = expansions.iter().cloned().collect();
        let mut ranks = HashMap::with_capacity(merges.len());
        for (r, &(a, b)) in merges.iter().enumerate() {
            let bound = expansions.len() as u32;
            if a >= bound || b >= bound {
                return Err(Error::InvalidArgument(format!(
                    "merge {r} ({a}, {b}) refers to a token not yet defined"
                )));
            }
            let mut e = expansions[a as usize].clone();
            e.extend_from_slice(&expansions[b as usize]);
            if !seen.insert(e.clone()) {
                return Err(Error::InvalidArgument(format!(
                    "merge {r} ({a}, {b}) duplicates an existing token"
                )));
            }
            expansions.push(e);
            ranks.insert((a, b), r as u32);
        }
        Ok(Self {
            alphabet_size,
            requested_vocab,
            merges,
            expansions,
            ranks,
        })
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet_size
    }

    /// The vocabulary size asked for at training time.
    pub fn requested_vocab(&self) -> usize {
        self.requested_vocab
    }

    /// Actual vocabulary: alphabet plus merges.
    pub fn vocab_size(&self) -> usize {
        self.expansions.len()
    }

    /// True when the corpus could not support the requested vocabulary.
    pub fn is_truncated(&self) -> bool {
        self.vocab_size() < self.requested_vocab
    }

    pub fn merges(&self) -> &[(u32, u32)] {
        &self.merges
    }

    /// Base-symbol string of token `id`.
    pub fn expansion(&self, id: u32) -> Option<&[u32]> {
        self.expansions.get(id as usize).map(Vec::as_slice)
    }

    pub fn encode(&self, seq: &SymbolSeq) -> Result<TokenSeq> {
        Ok(TokenSeq {
            clip_id: seq.clip_id.clone(),
            tokens: self.encode_symbols(&seq.symbols)?,
        })
    }

    pub fn decode(&self, tokens: &TokenSeq) -> Result<SymbolSeq> {
        Ok(SymbolSeq {
            clip_id: tokens.clip_id.clone(),
            symbols: self.decode_tokens(&tokens.tokens)?,
        })
    }

    pub fn to_json(&self) -> String {
        let merges = self
            .merges
            .iter()
            .map(|&(a, b)| {
                let text = |t: u32| dump_text(&self.expansions[t as usize], self.alphabet_size);
                Ok([text(a)?, text(b)?])
            })
            .collect::<Result<Vec<_>>>()
            .expect("expansions stay inside the alphabet");
        let file = ModelFile {
            alphabet_size: self.alphabet_size,
            vocab_size: self.requested_vocab,
            merges,
        };
        let mut s = serde_json::to_string_pretty(&file).expect("model serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        const WHAT: &str = "tokenizer model";
        let file: ModelFile =
            serde_json::from_str(text).map_err(|e| Error::parse(WHAT, e.line(), e.to_string()))?;
        if file.alphabet_size == 0 || file.alphabet_size > MAX_ALPHABET {
            return Err(Error::format(WHAT, format!("bad alphabet size {}", file.alphabet_size)));
        }
        let mut by_string: HashMap<Vec<u32>, u32> = (0..file.alphabet_size as u32).map(|s| (vec![s], s)).collect();
        let mut merges = Vec::with_capacity(file.merges.len());
        for (r, [left, right]) in file.merges.iter().enumerate() {
            let lookup = |s: &str| -> Result<u32> {
                let symbols = parse_text(s, file.alphabet_size)
                    .map_err(|e| Error::format(WHAT, format!("merge {r}: {e}")))?;
                by_string
                    .get(&symbols)
                    .copied()
                    .ok_or_else(|| Error::format(WHAT, format!("merge {r}: unknown token {s:?}")))
            };
            let (a, b) = (lookup(left)?, lookup(right)?);
            let mut joined = parse_text(left, file.alphabet_size)?;
            joined.extend(parse_text(right, file.alphabet_size)?);
            let id = (file.alphabet_size + r) as u32;
            if by_string.insert(joined, id).is_some() {
                return Err(Error::format(WHAT, format!("merge {r} duplicates an existing token")));
            }
            merges.push((a, b));
        }
        Self::from_merges(file.alphabet_size, file.vocab_size, merges)
            .map_err(|e| Error::format(WHAT, e.to_string()))
    }
}

impl Tokenizer for TokenizerModel {
    fn vocab_size(&self) -> usize {
        TokenizerModel::vocab_size(self)
    }

    /// Merge replay: always apply the lowest-rank merge present, leftmost
    /// occurrence first. Equivalent to applying every merge in learned order.
    fn encode_symbols(&self, symbols: &[u32]) -> Result<Vec<u32>> {
        if let Some(&bad) = symbols.iter().find(|&&s| s as usize >= self.alphabet_size) {
            return Err(Error::OutOfRange(
                "symbol",
                format!("{bad} >= alphabet size {}", self.alphabet_size),
            ));
        }
        let n = symbols.len();
        if n < 2 || self.merges.is_empty() {
            return Ok(symbols.to_vec());
        }
        let mut tok = symbols.to_vec();
        let mut next: Vec<usize> = (1..=n).collect();
        let mut prev: Vec<usize> = (0..n).map(|i| i.wrapping_sub(1)).collect();
        let mut alive = vec![true; n];
        let mut heap = BinaryHeap::new();
        for i in 0..n - 1 {
            if let Some(&r) = self.ranks.get(&(tok[i], tok[i + 1])) {
                heap.push(Reverse((r, i)));
            }
        }
        while let Some(Reverse((r, i))) = heap.pop() {
            if !alive[i] || next[i] >= n {
                continue;
            }
            let j = next[i];
            if self.ranks.get(&(tok[i], tok[j])) != Some(&r) {
                continue;
            }
            tok[i] = (self.alphabet_size as u32) + r;
            alive[j] = false;
            next[i] = next[j];
            if next[j] < n {
                prev[next[j]] = i;
            }
            let p = prev[i];
            if p < n {
                if let Some(&rp) = self.ranks.get(&(tok[p], tok[i])) {
                    heap.push(Reverse((rp, p)));
                }
            }
            if next[i] < n {
                if let Some(&rn) = self.ranks.get(&(tok[i], tok[next[i]])) {
                    heap.push(Reverse((rn, i)));
                }
            }
        }
        Ok((0..n).filter(|&i| alive[i]).map(|i| tok[i]).collect())
    }

    fn decode_tokens(&self, tokens: &[u32]) -> Result<Vec<u32>> {
        let mut out = Vec::with_capacity(tokens.len());
        for &t in tokens {
            let e = self.expansions.get(t as usize).ok_or_else(|| {
                Error::OutOfRange("token id", format!("{t} >= vocabulary size {}", self.vocab_size()))
            })?;
            out.extend_from_slice(e);
        }
        Ok(out)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    alphabet_size: usize,
    vocab_size: usize,
    merges: Vec<[String; 2]>,
}

pub fn read_tokenizer(path: impl AsRef<Path>) -> Result<TokenizerModel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    TokenizerModel::from_json(&text)
}

pub fn write_tokenizer(path: impl AsRef<Path>, model: &TokenizerModel) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, model.to_json()).map_err(|e| Error::io(path, e))
}

/// Heap entry; the greatest entry is the next merge.
struct Candidate {
    count: u64,
    pair: (u32, u32),
    left: Vec<u32>,
    right: Vec<u32>,
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.count
            .cmp(&other.count)
            .then_with(|| other.left.cmp(&self.left))
            .then_with(|| other.right.cmp(&self.right))
            .then_with(|| other.pair.cmp(&self.pair))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

fn decrement(counts: &mut HashMap<(u32, u32), u64>, pair: (u32, u32)) {
    let c = counts.get_mut(&pair).expect("adjacent pair is counted");
    *c -= 1;
}

/// Trains a merge tokenizer over `alphabet_size` base symbols.
pub fn train_tokenizer(corpus: &[SymbolSeq], alphabet_size: usize, vocab_size: usize) -> Result<TokenizerModel> {
    if corpus.is_empty() {
        return Err(Error::Empty("tokenizer training corpus"));
    }
    // Validates alphabet and V before any work.
    TokenizerModel::from_merges(alphabet_size, vocab_size, Vec::new())?;
    for s in corpus {
        if let Some(&bad) = s.symbols.iter().find(|&&x| x as usize >= alphabet_size) {
            return Err(Error::OutOfRange(
                "symbol",
                format!("{bad} >= alphabet size {alphabet_size} in clip {}", s.clip_id),
            ));
        }
    }

    // One flat array of linked positions; NONE marks sequence boundaries.
    const NONE: usize = usize::MAX;
    let total: usize = corpus.iter().map(|s| s.symbols.len()).sum();
    let mut tok = Vec::with_capacity(total);
    let mut next = Vec::with_capacity(total);
    let mut prev = Vec::with_capacity(total);
    for s in corpus {
        let start = tok.len();
        let len = s.symbols.len();
        for (j, &sym) in s.symbols.iter().enumerate() {
            tok.push(sym);
            next.push(if j + 1 < len { start + j + 1 } else { NONE });
            prev.push(if j > 0 { start + j - 1 } else { NONE });
        }
    }
    let mut alive = vec![true; total];

    let mut counts: HashMap<(u32, u32), u64> = HashMap::new();
    let mut positions: HashMap<(u32, u32), Vec<usize>> = HashMap::new();
    for i in 0..total {
        if next[i] != NONE {
            let pair = (tok[i], tok[next[i]]);
            *counts.entry(pair).or_default() += 1;
            positions.entry(pair).or_default().push(i);
        }
    }

    let mut expansions: Vec<Vec<u32>> = (0..alphabet_size as u32).map(|s| vec![s]).collect();
    let mut vocab: HashSet<Vec<u32>> = expansions.iter().cloned().collect();
    let candidate = |pair: (u32, u32), count: u64, expansions: &[Vec<u32>]| Candidate {
        count,
        pair,
        left: expansions[pair.0 as usize].clone(),
        right: expansions[pair.1 as usize].clone(),
    };
    let mut heap: BinaryHeap<Candidate> = counts
        .iter()
        .filter(|(_, &c)| c >= MIN_PAIR_COUNT)
        .map(|(&p, &c)| candidate(p, c, &expansions))
        .collect();

    let mut merges = Vec::new();
    let mut banned: HashSet<(u32, u32)> = HashSet::new();
    while expansions.len() < vocab_size {
        let Some(top) = heap.pop() else { break };
        if banned.contains(&top.pair) {
            continue;
        }
        let current = counts.get(&top.pair).copied().unwrap_or(0);
        if current != top.count {
            if current >= MIN_PAIR_COUNT {
                heap.push(candidate(top.pair, current, &expansions));
            }
            continue;
        }
        let (a, b) = top.pair;
        let mut joined = top.left;
        joined.extend_from_slice(&top.right);
        if vocab.contains(&joined) {
            banned.insert(top.pair);
            continue;
        }
        let z = expansions.len() as u32;
        vocab.insert(joined.clone());
        expansions.push(joined);
        merges.push((a, b));

        let mut created: Vec<(u32, u32)> = Vec::new();
        let occ = positions.remove(&top.pair).unwrap_or_default();
        for i in occ {
            if !alive[i] || tok[i] != a {
                continue;
            }
            let j = next[i];
            if j == NONE || tok[j] != b {
                continue;
            }
            let p = prev[i];
            let q = next[j];
            if p != NONE {
                decrement(&mut counts, (tok[p], a));
            }
            if q != NONE {
                decrement(&mut counts, (b, tok[q]));
            }
            decrement(&mut counts, (a, b));
            tok[i] = z;
            alive[j] = false;
            next[i] = q;
            if q != NONE {
                prev[q] = i;
            }
            if p != NONE {
                let pair = (tok[p], z);
                *counts.entry(pair).or_default() += 1;
                positions.entry(pair).or_default().push(p);
                created.push(pair);
            }
            if q != NONE {
                let pair = (z, tok[q]);
                *counts.entry(pair).or_default() += 1;
                positions.entry(pair).or_default().push(i);
                created.push(pair);
            }
        }
        counts.remove(&(a, b));
        created.sort_unstable();
        created.dedup();
        for pair in created {
            let c = counts.get(&pair).copied().unwrap_or(0);
            if c >= MIN_PAIR_COUNT {
                heap.push(candidate(pair, c, &expansions));
            }
        }
    }

    TokenizerModel::from_merges(alphabet_size, vocab_size, merges)
}
