//! Donor subset selection: random, LID rank, CATDS and unscaled CATDS.
//!
//! Every ranking strategy breaks ties by ascending clip id, so subsets are
//! reproducible and nested: the subset of size `s2` is a prefix of the
//! ranking that yields size `s1 > s2`.

use std::collections::{HashMap, HashSet};
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpusio::{ClipEntry, ClipManifest};
use crate::error::{Error, Result};
use crate::scorer::ScoreRecord;

pub const DEFAULT_N: usize = 20_000;
pub const DEFAULT_DELTA_N: usize = 4_000;
pub const DEFAULT_K_MAX: usize = 5;
pub const DEFAULT_RANDOM_SEEDS: [u64; 3] = [1, 2, 3];

/// Language-ID output for one clip: rank of the target language among the
/// model's predictions (1 = most likely) and its probability.
#[derive(Debug, Clone, PartialEq)]
pub struct LidRecord {
    pub clip_id: String,
    pub rank: u32,
    pub prob: f64,
}

impl LidRecord {
    pub fn new(clip_id: impl Into<String>, rank: u32, prob: f64) -> Result<Self> {
        if rank < 1 {
            return Err(Error::OutOfRange("LID rank", format!("{rank} < 1")));
        }
        if !(0.0..=1.0).contains(&prob) {
            return Err(Error::OutOfRange("LID probability", format!("{prob} not in [0, 1]")));
        }
        Ok(Self {
            clip_id: clip_id.into(),
            rank,
            prob,
        })
    }
}

/// `N - k * delta_n` for `k = 0..=k_max`.
pub fn subset_sizes(n: usize, delta_n: usize, k_max: usize) -> Result<Vec<usize>> {
    if delta_n == 0 {
        return Err(Error::InvalidArgument("delta_n must be positive".into()));
    }
    if k_max.checked_mul(delta_n).is_none_or(|span| span > n) {
        return Err(Error::InvalidArgument(format!(
            "{n} - {k_max} * {delta_n} is negative"
        )));
    }
    Ok((0..=k_max).map(|k| n - k * delta_n).collect())
}

/// Uniform sample without replacement, returned in manifest order.
pub fn select_random(manifest: &ClipManifest, size: usize, seed: u64) -> Result<ClipManifest> {
    check_size(size, manifest.len())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, manifest.len(), size).into_vec();
    picked.sort_unstable();
    let entries = picked.into_iter().map(|i| manifest.entries()[i].clone()).collect();
    ClipManifest::new(entries)
}

fn check_size(size: usize, available: usize) -> Result<()> {
    if size > available {
        return Err(Error::InvalidArgument(format!(
            "subset size {size} exceeds {available} available clips"
        )));
    }
    Ok(())
}

/// Manifest clips ordered by LID rank ascending, then probability
/// descending, then clip id.
pub fn lid_ranking<'m>(manifest: &'m ClipManifest, lid: &[LidRecord]) -> Result<Vec<&'m ClipEntry>> {
    let by_id: HashMap<&str, &LidRecord> = lid.iter().map(|r| (r.clip_id.as_str(), r)).collect();
    let mut ranked = manifest
        .entries()
        .iter()
        .map(|e| {
            by_id
                .get(e.clip_id.as_str())
                .map(|r| (e, *r))
                .ok_or_else(|| Error::Missing {
                    what: "LID score",
                    clip_id: e.clip_id.clone(),
                })
        })
        .collect::<Result<Vec<_>>>()?;
    ranked.sort_by(|(ea, a), (eb, b)| {
        a.rank
            .cmp(&b.rank)
            .then_with(|| b.prob.total_cmp(&a.prob))
            .then_with(|| ea.clip_id.cmp(&eb.clip_id))
    });
    Ok(ranked.into_iter().map(|(e, _)| e).collect())
}

pub fn select_by_lid(manifest: &ClipManifest, lid: &[LidRecord], size: usize) -> Result<ClipManifest> {
    check_size(size, manifest.len())?;
    let ranked = lid_ranking(manifest, lid)?;
    ClipManifest::new(ranked.into_iter().take(size).cloned().collect())
}

/// Manifest clips ordered by descending CATDS (`scaled`) or raw similarity,
/// then clip id. Clips without a score are left out.
pub fn catds_ranking<'m>(
    manifest: &'m ClipManifest,
    scores: &[ScoreRecord],
    scaled: bool,
) -> Result<Vec<&'m ClipEntry>> {
    let by_id: HashMap<&str, &ClipEntry> = manifest
        .entries()
        .iter()
        .map(|e| (e.clip_id.as_str(), e))
        .collect();
    let mut ranked = scores
        .iter()
        .map(|r| {
            by_id
                .get(r.clip_id.as_str())
                .map(|e| (*e, if scaled { r.catds } else { r.raw_similarity }))
                .ok_or_else(|| Error::Missing {
                    what: "manifest entry",
                    clip_id: r.clip_id.clone(),
                })
        })
        .collect::<Result<Vec<_>>>()?;
    ranked.sort_by(|(ea, a), (eb, b)| b.total_cmp(a).then_with(|| ea.clip_id.cmp(&eb.clip_id)));
    Ok(ranked.into_iter().map(|(e, _)| e).collect())
}

pub fn select_by_catds(
    manifest: &ClipManifest,
    scores: &[ScoreRecord],
    size: usize,
    scaled: bool,
) -> Result<ClipManifest> {
    let ranked = catds_ranking(manifest, scores, scaled)?;
    check_size(size, ranked.len())?;
    ClipManifest::new(ranked.into_iter().take(size).cloned().collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// The full corpus or the empty set, identical under every strategy.
    Shared,
    Random,
    Lid,
    Catds,
    /// Ranked by raw cosine similarity, without the length scaler.
    Ucatds,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Shared => "shared",
            Strategy::Random => "random",
            Strategy::Lid => "lid",
            Strategy::Catds => "catds",
            Strategy::Ucatds => "ucatds",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One training-set configuration of the experiment grid.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub strategy: Strategy,
    pub size: usize,
    pub seed: Option<u64>,
}

impl DatasetConfig {
    /// `{language}_{strategy}_{size}[_seed{n}].jsonl`
    pub fn file_name(&self, language: &str) -> String {
        match self.seed {
            Some(seed) => format!("{language}_{}_{}_seed{seed}.jsonl", self.strategy, self.size),
            None => format!("{language}_{}_{}.jsonl", self.strategy, self.size),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub n_total: usize,
    pub delta_n: usize,
    pub k_max: usize,
    pub random_seeds: Vec<u64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            n_total: DEFAULT_N,
            delta_n: DEFAULT_DELTA_N,
            k_max: DEFAULT_K_MAX,
            random_seeds: DEFAULT_RANDOM_SEEDS.to_vec(),
        }
    }
}

/// Enumerates the dataset configurations for one donor language: a single
/// shared configuration at the full and empty sizes, and one per random seed
/// plus LID, CATDS and unscaled CATDS at every size in between.
pub fn plan_grid(grid: &GridConfig) -> Result<Vec<DatasetConfig>> {
    let mut seeds = grid.random_seeds.clone();
    seeds.sort_unstable();
    seeds.dedup();
    if seeds.len() != grid.random_seeds.len() {
        return Err(Error::InvalidArgument("random seeds must be distinct".into()));
    }
    let mut out = Vec::new();
    for size in subset_sizes(grid.n_total, grid.delta_n, grid.k_max)? {
        if size == grid.n_total || size == 0 {
            out.push(DatasetConfig {
                strategy: Strategy::Shared,
                size,
                seed: None,
            });
            continue;
        }
        for &seed in &grid.random_seeds {
            out.push(DatasetConfig {
                strategy: Strategy::Random,
                size,
                seed: Some(seed),
            });
        }
        for strategy in [Strategy::Lid, Strategy::Catds, Strategy::Ucatds] {
            out.push(DatasetConfig {
                strategy,
                size,
                seed: None,
            });
        }
    }
    Ok(out)
}

/// Audit record written next to each subset manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub language: String,
    pub strategy: Strategy,
    pub size: usize,
    pub seed: Option<u64>,
    pub source_manifest_sha256: String,
    /// Hash of the score or LID table the ranking used.
    pub ranking_table_sha256: Option<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Inputs for materializing grid configurations.
pub struct SelectionInputs<'a> {
    pub manifest: &'a ClipManifest,
    pub scores: Option<&'a [ScoreRecord]>,
    pub lid: Option<&'a [LidRecord]>,
}

pub fn build_subset(config: &DatasetConfig, inputs: &SelectionInputs<'_>) -> Result<ClipManifest> {
    let manifest = inputs.manifest;
    match config.strategy {
        Strategy::Shared => {
            if config.size == manifest.len() {
                Ok(manifest.clone())
            } else if config.size == 0 {
                Ok(ClipManifest::default())
            } else {
                Err(Error::InvalidArgument(format!(
                    "shared subset of size {} for a corpus of {}",
                    config.size,
                    manifest.len()
                )))
            }
        }
        Strategy::Random => {
            let seed = config
                .seed
                .ok_or_else(|| Error::InvalidArgument("random subset without seed".into()))?;
            select_random(manifest, config.size, seed)
        }
        Strategy::Lid => {
            let lid = inputs
                .lid
                .ok_or_else(|| Error::InvalidArgument("LID selection needs a LID table".into()))?;
            select_by_lid(manifest, lid, config.size)
        }
        Strategy::Catds | Strategy::Ucatds => {
            let scores = inputs
                .scores
                .ok_or_else(|| Error::InvalidArgument("CATDS selection needs a score table".into()))?;
            select_by_catds(manifest, scores, config.size, config.strategy == Strategy::Catds)
        }
    }
}

/// Ids of `subset` that are not in `superset`.
pub fn not_contained(subset: &ClipManifest, superset: &ClipManifest) -> Vec<String> {
    let ids: HashSet<&str> = superset.entries().iter().map(|e| e.clip_id.as_str()).collect();
    subset
        .entries()
        .iter()
        .filter(|e| !ids.contains(e.clip_id.as_str()))
        .map(|e| e.clip_id.clone())
        .collect()
}
