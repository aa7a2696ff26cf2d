//! Run configuration: built-in defaults, then an optional `--config` JSON
//! file, then command-line flags.

use std::path::Path;

use serde::Deserialize;

use catds::quantizer::{DEFAULT_K, DEFAULT_MAX_ITERS, DEFAULT_REL_TOL};
use catds::scorer::DEFAULT_EPSILON;
use catds::selector::{DEFAULT_DELTA_N, DEFAULT_K_MAX, DEFAULT_N, DEFAULT_RANDOM_SEEDS};
use catds::subword::DEFAULT_VOCAB_SIZE;

pub const DEFAULT_MAX_CLIP_S: f64 = 21.6;

/// Every key is optional; unknown keys are rejected.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub k: Option<usize>,
    pub vocab_size: Option<usize>,
    pub max_clip_s: Option<f64>,
    pub n_total: Option<usize>,
    pub delta_n: Option<usize>,
    pub k_max: Option<usize>,
    pub random_seeds: Option<Vec<u64>>,
    pub kmeans_seed: Option<u64>,
    pub max_iters: Option<usize>,
    pub rel_tol: Option<f64>,
    pub max_frames: Option<usize>,
    pub epsilon: Option<f64>,
    pub language: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub k: usize,
    pub vocab_size: usize,
    pub max_clip_s: f64,
    pub n_total: usize,
    pub delta_n: usize,
    pub k_max: usize,
    pub random_seeds: Vec<u64>,
    pub kmeans_seed: u64,
    pub max_iters: usize,
    pub rel_tol: f64,
    pub max_frames: Option<usize>,
    pub epsilon: f64,
    pub language: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            vocab_size: DEFAULT_VOCAB_SIZE,
            max_clip_s: DEFAULT_MAX_CLIP_S,
            n_total: DEFAULT_N,
            delta_n: DEFAULT_DELTA_N,
            k_max: DEFAULT_K_MAX,
            random_seeds: DEFAULT_RANDOM_SEEDS.to_vec(),
            kmeans_seed: 0,
            max_iters: DEFAULT_MAX_ITERS,
            rel_tol: DEFAULT_REL_TOL,
            max_frames: None,
            epsilon: DEFAULT_EPSILON,
            language: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let mut cfg = Self::default();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path)
                .map_err(|e| anyhow::anyhow!("reading config {}: {e}", path.display()))?;
            let file: ConfigFile = serde_json::from_str(&text)
                .map_err(|e| anyhow::anyhow!("config {}: {e}", path.display()))?;
            cfg.apply(file);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, f: ConfigFile) {
        macro_rules! take {
            ($($field:ident),*) => { $(if let Some(v) = f.$field { self.$field = v; })* };
        }
        take!(k, vocab_size, max_clip_s, n_total, delta_n, k_max, random_seeds, kmeans_seed, max_iters, rel_tol, epsilon);
        if f.max_frames.is_some() {
            self.max_frames = f.max_frames;
        }
        if f.language.is_some() {
            self.language = f.language;
        }
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        anyhow::ensure!(self.k > 0, "k must be positive");
        anyhow::ensure!(self.vocab_size > 0, "vocab_size must be positive");
        anyhow::ensure!(self.max_clip_s > 0.0 && self.max_clip_s.is_finite(), "max_clip_s must be positive");
        anyhow::ensure!(self.delta_n > 0, "delta_n must be positive");
        anyhow::ensure!(self.max_iters > 0, "max_iters must be positive");
        anyhow::ensure!(self.rel_tol >= 0.0 && self.rel_tol.is_finite(), "rel_tol must be non-negative");
        anyhow::ensure!(self.epsilon > 0.0 && self.epsilon.is_finite(), "epsilon must be positive");
        if let Some(m) = self.max_frames {
            anyhow::ensure!(m >= self.k, "max_frames {m} is below k = {}", self.k);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_reference_setup() {
        let c = RunConfig::default();
        assert_eq!((c.k, c.vocab_size, c.n_total, c.delta_n, c.k_max), (500, 10_000, 20_000, 4_000, 5));
        assert_eq!(c.max_clip_s, 21.6);
        assert_eq!(c.random_seeds, vec![1, 2, 3]);
        assert_eq!(c.epsilon, 1e-6);
    }

    #[test]
    fn file_overrides_defaults() {
        let mut c = RunConfig::default();
        c.apply(serde_json::from_str(r#"{"k": 20, "random_seeds": [7]}"#).unwrap());
        assert_eq!(c.k, 20);
        assert_eq!(c.random_seeds, vec![7]);
        assert_eq!(c.vocab_size, 10_000);
        assert!(serde_json::from_str::<ConfigFile>(r#"{"kk": 1}"#).is_err());
    }
}
