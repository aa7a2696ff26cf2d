//! k-means codebook over feature frames and nearest-centroid assignment.
//!
//! Distances are squared Euclidean on raw features, accumulated in f64.
//! Training is deterministic for a given seed: the per-frame work runs in
//! parallel, but every reduction (objective, centroid sums) is a sequential
//! pass in frame order, so the result does not depend on the thread count.

use std::collections::HashSet;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::corpusio::FeatureMatrix;
use crate::error::{Error, Result};

pub const DEFAULT_K: usize = 500;
pub const DEFAULT_MAX_ITERS: usize = 100;
pub const DEFAULT_REL_TOL: f64 = 1e-6;

pub const CATK_MAGIC: &[u8; 4] = b"CATK";
pub const CATK_VERSION: u16 = 1;
const CATK_HEADER_LEN: usize = 30;

/// Cluster index per frame of one clip.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterIdSeq {
    pub clip_id: String,
    pub ids: Vec<u32>,
}

/// k distinct, finite centroids of dimension `dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    k: usize,
    dim: usize,
    centroids: Vec<f32>,
    train_seed: u64,
    inertia: f64,
}

impl Codebook {
    pub fn new(dim: usize, centroids: Vec<f32>, train_seed: u64, inertia: f64) -> Result<Self> {
        if dim == 0 || centroids.is_empty() || !centroids.len().is_multiple_of(dim) {
            return Err(Error::InvalidArgument(format!(
                "{} centroid values do not form rows of dim {dim}",
                centroids.len()
            )));
        }
        if let Some(index) = centroids.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        let k = centroids.len() / dim;
        let mut seen = HashSet::with_capacity(k);
        for (i, c) in centroids.chunks_exact(dim).enumerate() {
            let bits: Vec<u32> = c.iter().map(|v| v.to_bits()).collect();
            if !seen.insert(bits) {
                return Err(Error::InvalidArgument(format!("centroid {i} duplicates an earlier centroid")));
            }
        }
        Ok(Self {
            k,
            dim,
            centroids,
            train_seed,
            inertia,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn train_seed(&self) -> u64 {
        self.train_seed
    }

    /// Objective of the stored centroids on the training frames.
    pub fn inertia(&self) -> f64 {
        self.inertia
    }

    pub fn centroid(&self, i: usize) -> &[f32] {
        &self.centroids[i * self.dim..(i + 1) * self.dim]
    }

    /// Centroids as a `k x dim` matrix.
    pub fn centroid_matrix(&self) -> FeatureMatrix {
        FeatureMatrix::new(self.dim, self.centroids.clone()).expect("codebook invariants")
    }

    /// Index of the nearest centroid, lowest index on ties.
    pub fn nearest(&self, frame: &[f32]) -> (u32, f64) {
        let mut best = 0u32;
        let mut best_d = f64::INFINITY;
        for (i, c) in self.centroids.chunks_exact(self.dim).enumerate() {
            let d = sq_dist_f32(frame, c);
            if d < best_d {
                best_d = d;
                best = i as u32;
            }
        }
        (best, best_d)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(CATK_HEADER_LEN + 4 * self.centroids.len());
        out.extend_from_slice(CATK_MAGIC);
        out.extend_from_slice(&CATK_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.k as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&self.train_seed.to_le_bytes());
        out.extend_from_slice(&self.inertia.to_le_bytes());
        for v in &self.centroids {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        const WHAT: &str = "CATK";
        if bytes.len() < CATK_HEADER_LEN {
            return Err(Error::format(WHAT, "truncated header"));
        }
        if &bytes[0..4] != CATK_MAGIC {
            return Err(Error::format(WHAT, format!("bad magic {:?}", &bytes[0..4])));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != CATK_VERSION {
            return Err(Error::format(WHAT, format!("unsupported version {version}")));
        }
        let k = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
        let dim = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as usize;
        let seed = u64::from_le_bytes(bytes[14..22].try_into().unwrap());
        let inertia = f64::from_le_bytes(bytes[22..30].try_into().unwrap());
        if k == 0 || dim == 0 {
            return Err(Error::format(WHAT, "k and dim must be positive"));
        }
        if !(inertia.is_finite() && inertia >= 0.0) {
            return Err(Error::format(WHAT, "invalid inertia"));
        }
        let payload = &bytes[CATK_HEADER_LEN..];
        let expected = k
            .checked_mul(dim)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::format(WHAT, "size overflow"))?;
        if payload.len() != expected {
            return Err(Error::format(
                WHAT,
                format!("payload is {} bytes, header implies {expected}", payload.len()),
            ));
        }
        let centroids = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::new(dim, centroids, seed, inertia).map_err(|e| Error::format(WHAT, e.to_string()))
    }
}

pub fn write_codebook(path: impl AsRef<Path>, codebook: &Codebook) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, codebook.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_codebook(path: impl AsRef<Path>) -> Result<Codebook> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Codebook::from_bytes(&bytes)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansOptions {
    pub k: usize,
    pub seed: u64,
    pub max_iters: usize,
    pub rel_tol: f64,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            seed: 0,
            max_iters: DEFAULT_MAX_ITERS,
            rel_tol: DEFAULT_REL_TOL,
        }
    }
}

/// Trained codebook plus the objective after each assignment step.
#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub codebook: Codebook,
    pub history: Vec<f64>,
    pub converged: bool,
    pub reseeded: usize,
}

/// Lloyd's algorithm with k-means++ seeding.
///
/// Stops after `max_iters` assignment steps or once the relative objective
/// decrease falls below `rel_tol`. A cluster left empty by an update is
/// moved onto the frame farthest from its current centroid.
pub fn train_kmeans(frames: &FeatureMatrix, opts: &KMeansOptions) -> Result<KMeansFit> {
    let k = opts.k;
    let n = frames.n_frames();
    let dim = frames.dim();
    if k == 0 {
        return Err(Error::InvalidArgument("k must be positive".into()));
    }
    if n < k {
        return Err(Error::InvalidArgument(format!("{n} frames is fewer than k = {k}")));
    }
    if opts.max_iters == 0 {
        return Err(Error::InvalidArgument("max_iters must be positive".into()));
    }
    if !(opts.rel_tol.is_finite() && opts.rel_tol >= 0.0) {
        return Err(Error::InvalidArgument(format!("invalid rel_tol {}", opts.rel_tol)));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut centroids = kmeans_plus_plus(frames, k, &mut rng)?;
    let mut history = Vec::new();
    let mut converged = false;
    let mut reseeded = 0;

    for iter in 0..opts.max_iters {
        let (labels, dists) = assign_f64(frames, &centroids, dim);
        let objective: f64 = dists.iter().sum();
        history.push(objective);
        if iter > 0 {
            let prev = history[iter - 1];
            if objective == 0.0 || (prev - objective) <= opts.rel_tol * prev {
                converged = true;
                break;
            }
        }
        if iter + 1 == opts.max_iters {
            break;
        }

        let mut sums = vec![0.0f64; k * dim];
        let mut counts = vec![0usize; k];
        for (i, &l) in labels.iter().enumerate() {
            let l = l as usize;
            counts[l] += 1;
            let acc = &mut sums[l * dim..(l + 1) * dim];
            for (a, &x) in acc.iter_mut().zip(frames.row(i)) {
                *a += x as f64;
            }
        }
        let mut dists = dists;
        for c in 0..k {
            let dst = &mut centroids[c * dim..(c + 1) * dim];
            if counts[c] > 0 {
                let inv = counts[c] as f64;
                for (d, s) in dst.iter_mut().zip(&sums[c * dim..(c + 1) * dim]) {
                    *d = s / inv;
                }
                continue;
            }
            // Empty cluster: take the frame farthest from its own centroid.
            let far = dists
                .iter()
                .enumerate()
                .fold(None::<(usize, f64)>, |best, (i, &d)| match best {
                    Some((_, bd)) if d <= bd => best,
                    _ if d > 0.0 => Some((i, d)),
                    _ => best,
                });
            if let Some((i, _)) = far {
                for (d, &x) in dst.iter_mut().zip(frames.row(i)) {
                    *d = x as f64;
                }
                dists[i] = 0.0;
                reseeded += 1;
            }
        }
    }

    let centroids32: Vec<f32> = centroids.iter().map(|&v| v as f32).collect();
    let inertia = objective_f32(frames, &centroids32, dim);
    let codebook = Codebook::new(dim, centroids32, opts.seed, inertia)?;
    Ok(KMeansFit {
        codebook,
        history,
        converged,
        reseeded,
    })
}

fn kmeans_plus_plus(frames: &FeatureMatrix, k: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let n = frames.n_frames();
    let dim = frames.dim();
    let mut centroids = Vec::with_capacity(k * dim);
    let first = rng.random_range(0..n);
    centroids.extend(frames.row(first).iter().map(|&x| x as f64));
    let mut nearest: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| sq_dist_mixed(frames.row(i), &centroids[0..dim]))
        .collect();
    for c in 1..k {
        let total: f64 = nearest.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "only {c} distinct frames, fewer than k = {k}"
            )));
        }
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut chosen = None;
        for (i, &d) in nearest.iter().enumerate() {
            if d <= 0.0 {
                continue;
            }
            acc += d;
            chosen = Some(i);
            if acc > target {
                break;
            }
        }
        let chosen = chosen.expect("positive total implies a positive weight");
        let start = centroids.len();
        centroids.extend(frames.row(chosen).iter().map(|&x| x as f64));
        let new_c = &centroids[start..start + dim];
        nearest
            .par_iter_mut()
            .enumerate()
            .for_each(|(i, d)| *d = d.min(sq_dist_mixed(frames.row(i), new_c)));
    }
    Ok(centroids)
}

fn assign_f64(frames: &FeatureMatrix, centroids: &[f64], dim: usize) -> (Vec<u32>, Vec<f64>) {
    (0..frames.n_frames())
        .into_par_iter()
        .map(|i| {
            let x = frames.row(i);
            let mut best = 0u32;
            let mut best_d = f64::INFINITY;
            for (c, centroid) in centroids.chunks_exact(dim).enumerate() {
                let d = sq_dist_mixed(x, centroid);
                if d < best_d {
                    best_d = d;
                    best = c as u32;
                }
            }
            (best, best_d)
        })
        .unzip()
}

fn objective_f32(frames: &FeatureMatrix, centroids: &[f32], dim: usize) -> f64 {
    let per_frame: Vec<f64> = (0..frames.n_frames())
        .into_par_iter()
        .map(|i| {
            centroids
                .chunks_exact(dim)
                .map(|c| sq_dist_f32(frames.row(i), c))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    per_frame.iter().sum()
}

fn sq_dist_mixed(x: &[f32], c: &[f64]) -> f64 {
    x.iter()
        .zip(c)
        .map(|(&a, &b)| {
            let d = a as f64 - b;
            d * d
        })
        .sum()
}

fn sq_dist_f32(x: &[f32], c: &[f32]) -> f64 {
    x.iter()
        .zip(c)
        .map(|(&a, &b)| {
            let d = a as f64 - b as f64;
            d * d
        })
        .sum()
}

/// Nearest-centroid id for every frame.
pub fn assign_frames(codebook: &Codebook, frames: &FeatureMatrix) -> Result<Vec<u32>> {
    if frames.dim() != codebook.dim() {
        return Err(Error::DimensionMismatch {
            expected: codebook.dim(),
            actual: frames.dim(),
        });
    }
    Ok((0..frames.n_frames())
        .into_par_iter()
        .map(|i| codebook.nearest(frames.row(i)).0)
        .collect())
}

pub fn assign(codebook: &Codebook, clip_id: &str, frames: &FeatureMatrix) -> Result<ClusterIdSeq> {
    Ok(ClusterIdSeq {
        clip_id: clip_id.to_string(),
        ids: assign_frames(codebook, frames)?,
    })
}

/// Uniform sample of at most `cap` rows without replacement, original row
/// order preserved. Identity when the matrix already fits.
pub fn subsample_frames(frames: &FeatureMatrix, cap: usize, k: usize, seed: u64) -> Result<FeatureMatrix> {
    if cap < k {
        return Err(Error::InvalidArgument(format!("frame cap {cap} is below k = {k}")));
    }
    let n = frames.n_frames();
    if n <= cap {
        return Ok(frames.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, n, cap).into_vec();
    picked.sort_unstable();
    Ok(frames.select_rows(&picked))
}
