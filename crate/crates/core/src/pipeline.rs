//! Symbol-stage pipeline: collapse, tokenizer training, encoding and
//! scoring, as run on target and donor symbol corpora.

use rayon::prelude::*;

use crate::corpusio::{TokenFile, TokenSeq};
use crate::error::Result;
use crate::scorer::{build_frequency_vector, score_corpus, CorpusScores, FreqVector};
use crate::subword::{train_tokenizer, TokenizerModel};
use crate::symbolizer::{collapse, SymbolSeq};

/// Run-collapses every sequence.
pub fn collapse_all(seqs: &[SymbolSeq]) -> Vec<SymbolSeq> {
    seqs.par_iter()
        .map(|s| SymbolSeq {
            clip_id: s.clip_id.clone(),
            symbols: collapse(&s.symbols),
        })
        .collect()
}

pub fn encode_all(model: &TokenizerModel, seqs: &[SymbolSeq]) -> Result<TokenFile> {
    let encoded = seqs
        .par_iter()
        .map(|s| model.encode(s))
        .collect::<Result<Vec<TokenSeq>>>()?;
    TokenFile::new(encoded)
}

/// Aggregate token counts over a whole token file.
pub fn reference_vector(tokens: &TokenFile, vocab_size: usize) -> Result<FreqVector> {
    build_frequency_vector(tokens.seqs.iter().map(|s| s.tokens.as_slice()), vocab_size)
}

/// Everything produced by scoring donors against a target corpus.
#[derive(Debug, Clone)]
pub struct SymbolRun {
    pub tokenizer: TokenizerModel,
    pub target_ref: FreqVector,
    pub donor_tokens: TokenFile,
    pub scores: CorpusScores,
}

/// Trains the tokenizer on the collapsed target corpus, builds the target
/// reference vector and scores the collapsed donor clips.
pub fn score_symbols(
    target: &[SymbolSeq],
    donors: &[SymbolSeq],
    alphabet_size: usize,
    vocab_size: usize,
    epsilon: f64,
) -> Result<SymbolRun> {
    let target = collapse_all(target);
    let tokenizer = train_tokenizer(&target, alphabet_size, vocab_size)?;
    let target_tokens = encode_all(&tokenizer, &target)?;
    let target_ref = reference_vector(&target_tokens, tokenizer.vocab_size())?;
    let donor_tokens = encode_all(&tokenizer, &collapse_all(donors))?;
    let scores = score_corpus(&target_ref, &donor_tokens, epsilon)?;
    Ok(SymbolRun {
        tokenizer,
        target_ref,
        donor_tokens,
        scores,
    })
}
