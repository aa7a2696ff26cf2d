//! Token frequency vectors, cosine similarity and the length-debiased
//! CATDS score.
//!
//! Raw cosine similarity of a short clip's counts against the target
//! distribution is biased low. A quadratic `q(p) = a p^2 + b p + c` in the
//! clip's token count `p` is fitted to the raw similarities of the donor
//! corpus, and each clip scores `S / max(q(p), epsilon)`.

use log::warn;
use rayon::prelude::*;

use crate::corpusio::{TokenFile, TokenSeq};
use crate::error::{Error, Result};

pub const DEFAULT_EPSILON: f64 = 1e-6;

/// Nonnegative token counts, one slot per vocabulary entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FreqVector {
    counts: Vec<u64>,
}

impl FreqVector {
    pub fn zeros(dim: usize) -> Self {
        Self {
            counts: vec![0; dim],
        }
    }

    pub fn from_counts(counts: Vec<u64>) -> Self {
        Self { counts }
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.counts.iter().all(|&c| c == 0)
    }

    /// Adds one sequence's tokens.
    pub fn add_tokens(&mut self, tokens: &[u32]) -> Result<()> {
        let dim = self.dim();
        if let Some(&bad) = tokens.iter().find(|&&t| t as usize >= dim) {
            return Err(Error::OutOfRange("token id", format!("{bad} >= vocabulary size {dim}")));
        }
        for &t in tokens {
            self.counts[t as usize] += 1;
        }
        Ok(())
    }
}

/// Counts every token across `seqs`. The target reference vector is the
/// aggregate over all target clips.
pub fn build_frequency_vector<'a, I>(seqs: I, vocab_size: usize) -> Result<FreqVector>
where
    I: IntoIterator<Item = &'a [u32]>,
{
    let mut v = FreqVector::zeros(vocab_size);
    for s in seqs {
        v.add_tokens(s)?;
    }
    Ok(v)
}

/// Cosine of the angle between two count vectors.
pub fn cosine_similarity(x: &FreqVector, y: &FreqVector) -> Result<f64> {
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch {
            expected: x.dim(),
            actual: y.dim(),
        });
    }
    let (mut dot, mut xx, mut yy) = (0.0f64, 0.0f64, 0.0f64);
    for (&a, &b) in x.counts.iter().zip(&y.counts) {
        let (a, b) = (a as f64, b as f64);
        dot += a * b;
        xx += a * a;
        yy += b * b;
    }
    if xx == 0.0 || yy == 0.0 {
        return Err(Error::InvalidArgument("cosine similarity of a zero vector".into()));
    }
    Ok((dot / (xx * yy).sqrt()).clamp(0.0, 1.0))
}

/// Quadratic length scaler, fitted on standardized token counts.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadModel {
    /// Coefficients in raw token-count space: `q = a p^2 + b p + c`.
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub p_mean: f64,
    pub p_std: f64,
    /// Coefficients on `z = (p - p_mean) / p_std`, constant term first.
    pub z_coef: [f64; 3],
    /// Set when fewer than three distinct token counts were seen: `q` is
    /// then the mean similarity everywhere.
    pub fallback_q: Option<f64>,
    pub epsilon: f64,
}

impl QuadModel {
    /// A constant scaler.
    pub fn constant(q: f64, epsilon: f64) -> Self {
        Self {
            a: 0.0,
            b: 0.0,
            c: q,
            p_mean: 0.0,
            p_std: 0.0,
            z_coef: [q, 0.0, 0.0],
            fallback_q: Some(q),
            epsilon,
        }
    }

    pub fn is_fallback(&self) -> bool {
        self.fallback_q.is_some()
    }

    /// Unclamped prediction at token count `p`.
    pub fn predict(&self, p: f64) -> f64 {
        if let Some(q) = self.fallback_q {
            return q;
        }
        let z = (p - self.p_mean) / self.p_std;
        self.z_coef[0] + z * (self.z_coef[1] + z * self.z_coef[2])
    }
}

/// Least-squares quadratic fit of similarity on token count.
///
/// The 3x3 normal equations are solved on `z = (p - mean) / std` (population
/// std). With fewer than three distinct `p` values the model falls back to a
/// constant `q = mean(S)`.
pub fn fit_length_scaler(points: &[(f64, f64)], epsilon: f64) -> Result<QuadModel> {
    if points.is_empty() {
        return Err(Error::Empty("length scaler points"));
    }
    if let Some(i) = points.iter().position(|(p, s)| !p.is_finite() || !s.is_finite()) {
        return Err(Error::NonFinite { index: i });
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidArgument(format!("epsilon must be positive, got {epsilon}")));
    }
    let n = points.len() as f64;
    let mean_s = points.iter().map(|&(_, s)| s).sum::<f64>() / n;

    let mut distinct: Vec<f64> = points.iter().map(|&(p, _)| p).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 3 {
        return Ok(QuadModel::constant(mean_s, epsilon));
    }

    let p_mean = points.iter().map(|&(p, _)| p).sum::<f64>() / n;
    let p_std = (points.iter().map(|&(p, _)| (p - p_mean).powi(2)).sum::<f64>() / n).sqrt();

    // Gram matrix of [1, z, z^2] and right-hand side.
    let mut m = [[0.0f64; 3]; 3];
    let mut rhs = [0.0f64; 3];
    for &(p, s) in points {
        let z = (p - p_mean) / p_std;
        let basis = [1.0, z, z * z];
        for r in 0..3 {
            for c in 0..3 {
                m[r][c] += basis[r] * basis[c];
            }
            rhs[r] += basis[r] * s;
        }
    }
    let Some(coef) = solve3(m, rhs) else {
        warn!("singular normal equations; using constant length scaler");
        return Ok(QuadModel::constant(mean_s, epsilon));
    };

    let [g0, g1, g2] = coef;
    let (mu, sd) = (p_mean, p_std);
    Ok(QuadModel {
        a: g2 / (sd * sd),
        b: g1 / sd - 2.0 * g2 * mu / (sd * sd),
        c: g0 - g1 * mu / sd + g2 * mu * mu / (sd * sd),
        p_mean,
        p_std,
        z_coef: coef,
        fallback_q: None,
        epsilon,
    })
}

/// Gaussian elimination with partial pivoting.
fn solve3(mut m: [[f64; 3]; 3], mut rhs: [f64; 3]) -> Option<[f64; 3]> {
    let scale = m.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
    for col in 0..3 {
        let pivot = (col..3).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))?;
        if m[pivot][col].abs() <= 1e-12 * scale {
            return None;
        }
        m.swap(col, pivot);
        rhs.swap(col, pivot);
        for row in col + 1..3 {
            let f = m[row][col] / m[col][col];
            let upper = m[col];
            for (v, u) in m[row].iter_mut().zip(upper).skip(col) {
                *v -= f * u;
            }
            rhs[row] -= f * rhs[col];
        }
    }
    let mut x = [0.0f64; 3];
    for row in (0..3).rev() {
        let tail: f64 = (row + 1..3).map(|c| m[row][c] * x[c]).sum();
        x[row] = (rhs[row] - tail) / m[row][row];
    }
    Some(x)
}

/// `(catds, clamped)` for similarity `s` at token count `p`.
pub fn catds_score(s: f64, model: &QuadModel, p: f64) -> (f64, bool) {
    let q = model.predict(p);
    let clamped = q < model.epsilon;
    (s / q.max(model.epsilon), clamped)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRecord {
    pub clip_id: String,
    pub token_count: u64,
    pub raw_similarity: f64,
    pub fitted_q: f64,
    pub catds: f64,
    pub clamped: bool,
}

#[derive(Debug, Clone)]
pub struct CorpusScores {
    /// One record per scorable clip, in token-file order.
    pub records: Vec<ScoreRecord>,
    /// Clips without tokens; their similarity is undefined.
    pub excluded: Vec<String>,
    pub model: QuadModel,
}

/// Scores every donor clip against the target reference vector.
pub fn score_corpus(target_ref: &FreqVector, donors: &TokenFile, epsilon: f64) -> Result<CorpusScores> {
    if donors.is_empty() {
        return Err(Error::Empty("donor corpus"));
    }
    if target_ref.is_zero() {
        return Err(Error::InvalidArgument("target reference vector is all zeros".into()));
    }
    let dim = target_ref.dim();
    let raw: Vec<Option<(u64, f64)>> = donors
        .seqs
        .par_iter()
        .map(|s: &TokenSeq| {
            if s.tokens.is_empty() {
                return Ok(None);
            }
            let y = build_frequency_vector([s.tokens.as_slice()], dim)?;
            Ok(Some((s.tokens.len() as u64, cosine_similarity(target_ref, &y)?)))
        })
        .collect::<Result<_>>()?;

    let mut excluded = Vec::new();
    let mut fit_order: Vec<(&str, f64, f64)> = Vec::new();
    for (s, r) in donors.seqs.iter().zip(&raw) {
        match r {
            Some((p, sim)) => fit_order.push((s.clip_id.as_str(), *p as f64, *sim)),
            None => {
                warn!("clip {} has no tokens; excluded from scoring", s.clip_id);
                excluded.push(s.clip_id.clone());
            }
        }
    }
    if fit_order.is_empty() {
        return Err(Error::Empty("donor corpus has no clip with tokens"));
    }
    fit_order.sort_by(|a, b| a.0.cmp(b.0));
    let points: Vec<(f64, f64)> = fit_order.iter().map(|&(_, p, s)| (p, s)).collect();
    let model = fit_length_scaler(&points, epsilon)?;

    let records = donors
        .seqs
        .iter()
        .zip(&raw)
        .filter_map(|(s, r)| r.map(|(p, sim)| (s, p, sim)))
        .map(|(s, p, sim)| {
            let q = model.predict(p as f64);
            let (catds, clamped) = catds_score(sim, &model, p as f64);
            if clamped {
                warn!("clip {}: fitted q {q} clamped to {}", s.clip_id, model.epsilon);
            }
            ScoreRecord {
                clip_id: s.clip_id.clone(),
                token_count: p,
                raw_similarity: sim,
                fitted_q: q,
                catds,
                clamped,
            }
        })
        .collect();
    Ok(CorpusScores {
        records,
        excluded,
        model,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fv(c: &[u64]) -> FreqVector {
        FreqVector::from_counts(c.to_vec())
    }

    #[test]
    fn frequency_vector_examples() {
        let v = build_frequency_vector([&[3u32, 3, 7][..]], 10).unwrap();
        assert_eq!(v.counts()[3], 2);
        assert_eq!(v.counts()[7], 1);
        assert_eq!(v.total(), 3);
        assert!(build_frequency_vector([&[][..]], 10).unwrap().is_zero());
        let v = build_frequency_vector([&[1u32][..], &[1, 2][..]], 10).unwrap();
        assert_eq!((v.counts()[1], v.counts()[2]), (2, 1));
        assert!(build_frequency_vector([&[10u32][..]], 10).is_err());
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine_similarity(&fv(&[3, 1, 4]), &fv(&[3, 1, 4])).unwrap(), 1.0);
        assert_eq!(cosine_similarity(&fv(&[1, 0, 0]), &fv(&[0, 2, 5])).unwrap(), 0.0);
        let s = cosine_similarity(&fv(&[1, 0, 1]), &fv(&[1, 1, 0])).unwrap();
        assert!((s - 0.5).abs() < 1e-15);
        assert!(cosine_similarity(&fv(&[0, 0]), &fv(&[1, 0])).is_err());
        assert!(cosine_similarity(&fv(&[1]), &fv(&[1, 0])).is_err());
    }

    #[test]
    fn exact_interpolation() {
        let m = fit_length_scaler(&[(0.0, 1.0), (1.0, 2.0), (2.0, 5.0)], DEFAULT_EPSILON).unwrap();
        assert!((m.a - 1.0).abs() < 1e-9, "{m:?}");
        assert!(m.b.abs() < 1e-9);
        assert!((m.c - 1.0).abs() < 1e-9);
    }

    #[test]
    fn linear_data() {
        let pts: Vec<(f64, f64)> = (1..=4).map(|p| (p as f64, 2.0 * p as f64 + 3.0)).collect();
        let m = fit_length_scaler(&pts, DEFAULT_EPSILON).unwrap();
        assert!(m.a.abs() < 1e-9);
        assert!((m.b - 2.0).abs() < 1e-9);
        assert!((m.c - 3.0).abs() < 1e-9);
    }

    #[test]
    fn shared_p_falls_back_to_mean() {
        let m = fit_length_scaler(&[(100.0, 0.2), (100.0, 0.4), (100.0, 0.9)], DEFAULT_EPSILON).unwrap();
        assert!(m.is_fallback());
        assert!((m.predict(5.0) - 0.5).abs() < 1e-15);
        assert!(fit_length_scaler(&[], DEFAULT_EPSILON).is_err());
    }

    #[test]
    fn catds_examples() {
        let m = QuadModel::constant(0.8, DEFAULT_EPSILON);
        assert_eq!(catds_score(0.8, &m, 10.0), (1.0, false));
        let m = QuadModel::constant(0.6, DEFAULT_EPSILON);
        assert!((catds_score(0.9, &m, 10.0).0 - 1.5).abs() < 1e-12);
        let m = QuadModel::constant(-0.01, DEFAULT_EPSILON);
        let (c, clamped) = catds_score(0.5, &m, 10.0);
        assert!(clamped);
        assert!((c - 0.5 / 1e-6).abs() < 1e-6);
    }

    #[test]
    fn score_corpus_identity_and_exclusion() {
        let target = fv(&[4, 2, 0, 1]);
        let donors = TokenFile::new(vec![
            TokenSeq { clip_id: "same".into(), tokens: vec![0, 0, 0, 0, 1, 1, 3] },
            TokenSeq { clip_id: "empty".into(), tokens: vec![] },
            TokenSeq { clip_id: "other".into(), tokens: vec![2, 2] },
        ])
        .unwrap();
        let out = score_corpus(&target, &donors, DEFAULT_EPSILON).unwrap();
        assert_eq!(out.excluded, vec!["empty"]);
        assert_eq!(out.records.len(), 2);
        assert_eq!(out.records[0].raw_similarity, 1.0);
        assert_eq!(out.records[1].raw_similarity, 0.0);
        assert!(score_corpus(&target, &TokenFile::default(), DEFAULT_EPSILON).is_err());
    }

    #[test]
    fn constant_similarity_gives_constant_catds() {
        let target = fv(&[1, 1]);
        let donors = TokenFile::new(
            (1..=6)
                .map(|n| TokenSeq {
                    clip_id: format!("c{n}"),
                    tokens: [0u32, 1].repeat(n),
                })
                .collect(),
        )
        .unwrap();
        let out = score_corpus(&target, &donors, DEFAULT_EPSILON).unwrap();
        let first = out.records[0].catds;
        for r in &out.records {
            assert!((r.raw_similarity - 1.0).abs() < 1e-15);
            assert!((r.catds - first).abs() < 1e-9, "{r:?}");
        }
    }

    proptest! {
        #[test]
        fn cosine_scale_invariant_and_bounded(
            x in proptest::collection::vec(0u64..50, 8),
            y in proptest::collection::vec(0u64..50, 8),
            alpha in 1u64..20,
        ) {
            prop_assume!(x.iter().any(|&v| v > 0) && y.iter().any(|&v| v > 0));
            let s = cosine_similarity(&fv(&x), &fv(&y)).unwrap();
            prop_assert!((0.0..=1.0).contains(&s));
            let scaled: Vec<u64> = x.iter().map(|v| v * alpha).collect();
            let s2 = cosine_similarity(&fv(&scaled), &fv(&y)).unwrap();
            prop_assert!((s - s2).abs() < 1e-12);
        }

        #[test]
        fn residuals_orthogonal_to_basis(
            pts in proptest::collection::vec((1u32..2000, 0.0f64..1.0), 4..60)
        ) {
            let pts: Vec<(f64, f64)> = pts.into_iter().map(|(p, s)| (p as f64, s)).collect();
            let m = fit_length_scaler(&pts, DEFAULT_EPSILON).unwrap();
            prop_assume!(!m.is_fallback());
            let mut sums = [0.0f64; 3];
            for &(p, s) in &pts {
                let z = (p - m.p_mean) / m.p_std;
                let r = s - m.predict(p);
                sums[0] += r;
                sums[1] += r * z;
                sums[2] += r * z * z;
            }
            for v in sums {
                prop_assert!(v.abs() < 1e-8, "{sums:?}");
            }
        }

        #[test]
        fn catds_monotone_in_similarity(s1 in 0.0f64..1.0, s2 in 0.0f64..1.0, p in 1.0f64..500.0) {
            let m = fit_length_scaler(&[(1.0, 0.1), (50.0, 0.4), (400.0, 0.7), (600.0, 0.75)], DEFAULT_EPSILON).unwrap();
            let (lo, hi) = if s1 <= s2 { (s1, s2) } else { (s2, s1) };
            prop_assert!(catds_score(lo, &m, p).0 <= catds_score(hi, &m, p).0);
        }
    }
}
