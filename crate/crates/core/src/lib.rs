//! Clip-wise acoustic token distribution similarity (CATDS).
//!
//! The pipeline turns speech-feature frames into acoustic tokens and scores
//! every donor clip against a target-language token distribution:
//!
//! 1. [`quantizer`]: k-means codebook over target frames, nearest-centroid assignment.
//! 2. [`symbolizer`]: run collapse of cluster ids, optional code-point text export.
//! 3. [`subword`]: pairwise-merge tokenizer trained on target symbols.
//! 4. [`scorer`]: token frequency vectors, cosine similarity, quadratic
//!    length scaler and the CATDS ratio.
//! 5. [`selector`]: random, LID, CATDS and unscaled-CATDS subset manifests.
//!
//! [`pipeline`] chains the symbol-stage steps, [`corpusio`] owns every on-disk format, [`statsreport`] holds the
//! significance tests and diagnostics, and [`synthcorpus`] generates Markov
//! symbol corpora for testing without real speech.

pub mod corpusio;
pub mod error;
pub mod pipeline;
pub mod quantizer;
pub mod scorer;
pub mod selector;
pub mod statsreport;
pub mod subword;
pub mod symbolizer;
pub mod synthcorpus;

pub use error::{Error, Result};
