//! Markov-chain symbol corpora for exercising the pipeline without speech.
//!
//! Clip `i` of a generation run draws from its own RNG seeded with
//! `spec.seed + i`, so corpora are reproducible and clips can be generated
//! in parallel.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpusio::FeatureMatrix;
use crate::error::{Error, Result};
use crate::symbolizer::{SymbolSeq, MAX_ALPHABET};

const ROW_TOL: f64 = 1e-9;

/// A first-order Markov source over `alphabet_size` symbols.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LanguageSpec {
    pub alphabet_size: usize,
    /// Row-stochastic `alphabet_size x alphabet_size` matrix.
    pub transition: Vec<Vec<f64>>,
    pub initial: Vec<f64>,
    /// Inclusive bounds of the uniform sequence-length distribution.
    pub length_min: usize,
    pub length_max: usize,
    pub seed: u64,
}

impl LanguageSpec {
    pub fn validate(&self) -> Result<()> {
        let k = self.alphabet_size;
        if k == 0 || k > MAX_ALPHABET {
            return Err(Error::InvalidArgument(format!("alphabet size {k} out of range")));
        }
        if self.length_min > self.length_max {
            return Err(Error::InvalidArgument(format!(
                "length bounds {}..={} are reversed",
                self.length_min, self.length_max
            )));
        }
        check_distribution("initial distribution", &self.initial, k)?;
        if self.transition.len() != k {
            return Err(Error::InvalidArgument(format!(
                "transition matrix has {} rows, expected {k}",
                self.transition.len()
            )));
        }
        for (i, row) in self.transition.iter().enumerate() {
            check_distribution("transition row", row, k)
                .map_err(|e| Error::InvalidArgument(format!("row {i}: {e}")))?;
        }
        Ok(())
    }

    /// Every transition and the initial state uniform over all symbols.
    pub fn uniform(alphabet_size: usize, length_min: usize, length_max: usize, seed: u64) -> Self {
        Self::uniform_over(alphabet_size, &(0..alphabet_size as u32).collect::<Vec<_>>(), length_min, length_max, seed)
    }

    /// Uniform chain restricted to `support`.
    pub fn uniform_over(alphabet_size: usize, support: &[u32], length_min: usize, length_max: usize, seed: u64) -> Self {
        let mut row = vec![0.0; alphabet_size];
        for &s in support {
            row[s as usize] = 1.0 / support.len() as f64;
        }
        Self {
            alphabet_size,
            transition: vec![row.clone(); alphabet_size],
            initial: row,
            length_min,
            length_max,
            seed,
        }
    }

    /// A random chain whose transitions only reach `support`. `peakedness`
    /// above 1 concentrates each row on a few successors.
    pub fn random_over(
        alphabet_size: usize,
        support: &[u32],
        peakedness: f64,
        length_min: usize,
        length_max: usize,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x005e_ed0f_c4a1);
        let transition = (0..alphabet_size)
            .map(|_| random_row(&mut rng, alphabet_size, support, peakedness))
            .collect();
        let initial = random_row(&mut rng, alphabet_size, support, 1.0);
        Self {
            alphabet_size,
            transition,
            initial,
            length_min,
            length_max,
            seed,
        }
    }

    /// Blends every row with a random row over the same support:
    /// `(1 - strength) * T + strength * R`.
    pub fn perturbed(&self, strength: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let support: Vec<u32> = (0..self.alphabet_size as u32)
            .filter(|&s| self.transition.iter().any(|r| r[s as usize] > 0.0) || self.initial[s as usize] > 0.0)
            .collect();
        let blend = |row: &[f64], rng: &mut ChaCha8Rng| {
            let noise = random_row(rng, self.alphabet_size, &support, 1.0);
            let mixed: Vec<f64> = row.iter().zip(&noise).map(|(a, b)| (1.0 - strength) * a + strength * b).collect();
            normalize(mixed)
        };
        let transition = self.transition.iter().map(|r| blend(r, &mut rng)).collect();
        let initial = blend(&self.initial, &mut rng);
        Self {
            transition,
            initial,
            seed,
            ..self.clone()
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)
            .map_err(|e| Error::parse("language spec", e.line(), e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes") + "\n"
    }
}

pub fn read_language_spec(path: impl AsRef<Path>) -> Result<LanguageSpec> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    LanguageSpec::from_json(&text)
}

fn check_distribution(what: &str, p: &[f64], k: usize) -> Result<()> {
    if p.len() != k {
        return Err(Error::InvalidArgument(format!("{what} has length {}, expected {k}", p.len())));
    }
    if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidArgument(format!("{what} has a negative or non-finite entry")));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > ROW_TOL {
        return Err(Error::InvalidArgument(format!("{what} sums to {sum}, not 1")));
    }
    Ok(())
}

fn random_row(rng: &mut ChaCha8Rng, k: usize, support: &[u32], peakedness: f64) -> Vec<f64> {
    let mut row = vec![0.0; k];
    for &s in support {
        // Bounded away from zero so every support transition stays possible.
        row[s as usize] = 0.01 + rng.random::<f64>().powf(peakedness);
    }
    normalize(row)
}

fn normalize(mut row: Vec<f64>) -> Vec<f64> {
    let sum: f64 = row.iter().sum();
    row.iter_mut().for_each(|v| *v /= sum);
    row
}

fn sample_categorical(rng: &mut ChaCha8Rng, p: &[f64]) -> u32 {
    let r = rng.random::<f64>();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &w) in p.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        acc += w;
        last = i;
        if r < acc {
            return i as u32;
        }
    }
    last as u32
}

fn generate_clip(spec: &LanguageSpec, index: u64) -> Vec<u32> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_add(index));
    let len = rng.random_range(spec.length_min..=spec.length_max);
    let mut out = Vec::with_capacity(len);
    if len == 0 {
        return out;
    }
    let mut s = sample_categorical(&mut rng, &spec.initial);
    out.push(s);
    for _ in 1..len {
        s = sample_categorical(&mut rng, &spec.transition[s as usize]);
        out.push(s);
    }
    out
}

/// `n_clips` sequences named `{prefix}{i:05}`. Consecutive duplicates are
/// kept; run collapse happens downstream.
pub fn generate_corpus(spec: &LanguageSpec, n_clips: usize, prefix: &str) -> Result<Vec<SymbolSeq>> {
    generate_range(spec, 0, n_clips, prefix)
}

fn generate_range(spec: &LanguageSpec, first_index: usize, n_clips: usize, prefix: &str) -> Result<Vec<SymbolSeq>> {
    spec.validate()?;
    Ok((0..n_clips)
        .into_par_iter()
        .map(|i| SymbolSeq {
            clip_id: format!("{prefix}{i:05}"),
            symbols: generate_clip(spec, (first_index + i) as u64),
        })
        .collect())
}

/// Clips tagged with whether they came from the target-like source.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledCorpus {
    pub clips: Vec<SymbolSeq>,
    pub target_like: Vec<bool>,
}

impl LabeledCorpus {
    pub fn is_target_like(&self, clip_id: &str) -> Option<bool> {
        self.clips
            .iter()
            .position(|c| c.clip_id == clip_id)
            .map(|i| self.target_like[i])
    }
}

/// `n_target_like` clips `t00000..` from `target` followed by
/// `n_distractor` clips `d00000..` from `distractor`. Distractor clip `i`
/// uses index `n_target_like + i`, so identical specs still give distinct
/// clips.
pub fn make_mixture(
    target: &LanguageSpec,
    distractor: &LanguageSpec,
    n_target_like: usize,
    n_distractor: usize,
) -> Result<LabeledCorpus> {
    if target.alphabet_size != distractor.alphabet_size {
        return Err(Error::InvalidArgument(format!(
            "alphabet sizes differ: {} vs {}",
            target.alphabet_size, distractor.alphabet_size
        )));
    }
    let mut clips = generate_range(target, 0, n_target_like, "t")?;
    clips.extend(generate_range(distractor, n_target_like, n_distractor, "d")?);
    let mut target_like = vec![true; n_target_like];
    target_like.extend(std::iter::repeat_n(false, n_distractor));
    Ok(LabeledCorpus { clips, target_like })
}

/// Fraction of target-like clips among the first `k` ids of `ranking`.
pub fn precision_at_k(ranking: &[&str], corpus: &LabeledCorpus, k: usize) -> Result<f64> {
    if k == 0 || k > ranking.len() {
        return Err(Error::InvalidArgument(format!("k = {k} with {} ranked clips", ranking.len())));
    }
    let mut hits = 0;
    for id in &ranking[..k] {
        match corpus.is_target_like(id) {
            Some(true) => hits += 1,
            Some(false) => {}
            None => {
                return Err(Error::Missing {
                    what: "label",
                    clip_id: id.to_string(),
                })
            }
        }
    }
    Ok(hits as f64 / k as f64)
}

/// Frames for a symbol sequence: each symbol emits between
/// `frames_per_symbol.0` and `.1` frames drawn from an isotropic Gaussian
/// around its centroid row.
pub fn emit_features(
    symbols: &[u32],
    centroids: &FeatureMatrix,
    frames_per_symbol: (usize, usize),
    noise_sd: f32,
    seed: u64,
) -> Result<FeatureMatrix> {
    let (lo, hi) = frames_per_symbol;
    if lo == 0 || lo > hi {
        return Err(Error::InvalidArgument(format!("bad frames per symbol {lo}..={hi}")));
    }
    let noise = Normal::new(0.0f32, noise_sd)
        .map_err(|e| Error::InvalidArgument(format!("noise sd {noise_sd}: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = centroids.dim();
    let mut data = Vec::new();
    for &s in symbols {
        if s as usize >= centroids.n_frames() {
            return Err(Error::OutOfRange("symbol", format!("{s} >= {} centroids", centroids.n_frames())));
        }
        let c = centroids.row(s as usize);
        for _ in 0..rng.random_range(lo..=hi) {
            data.extend(c.iter().map(|&v| v + noise.sample(&mut rng)));
        }
    }
    FeatureMatrix::new(dim, data)
}
