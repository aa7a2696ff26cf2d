//! Persistent formats and donor clip assembly.
//!
//! | format | reader | writer |
//! |---|---|---|
//! | manifest (JSON-lines) | [`read_manifest`] / [`parse_manifest`] | [`write_manifest`] |
//! | CATF feature matrix | [`read_feature_file`] / [`FeatureMatrix::from_bytes`] | [`write_feature_file`] |
//! | token file (`clip_id\tt1 t2 ...`) | [`read_token_file`] / [`parse_token_file`] | [`write_token_file`] |
//! | symbol file (`clip_id\t<code points>`) | [`read_symbol_file`] / [`parse_symbol_file`] | [`write_symbol_file`] |
//! | frequency vector | [`read_freq_vector`] / [`parse_freq_vector`] | [`write_freq_vector`] |
//! | score table (TSV) | [`read_score_table`] / [`parse_score_table`] | [`write_score_table`] |
//! | LID table (TSV) | [`read_lid_table`] / [`parse_lid_table`] | [`write_lid_table`] |
//!
//! Writers produce byte-identical output for identical input.

mod assemble;
mod catf;
mod manifest;
mod tables;
mod tokens;

use std::path::Path;

pub use assemble::{assemble_clips, concat_features, Assembly};
pub use catf::{read_feature_file, write_feature_file, FeatureMatrix, CATF_MAGIC, CATF_VERSION};
pub use manifest::{parse_manifest, read_manifest, write_manifest, ClipEntry, ClipManifest};
pub use tables::{
    parse_freq_vector, parse_lid_table, parse_score_table, read_freq_vector, read_lid_table,
    read_score_table, render_freq_vector, render_lid_table, render_score_table, write_freq_vector,
    write_lid_table, write_score_table,
};
pub use tokens::{
    parse_symbol_file, parse_token_file, read_symbol_file, read_token_file, render_symbol_file,
    render_token_file, write_symbol_file, write_token_file, TokenFile, TokenSeq,
};

use crate::error::{Error, Result};

pub(crate) fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
