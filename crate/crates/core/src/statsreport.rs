//! Paired Wilcoxon signed-rank test, Pearson correlation, summaries and
//! report tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::scorer::ScoreRecord;

/// Largest effective sample size handled by exact enumeration.
pub const EXACT_MAX_N: usize = 25;

/// Relative tolerance, against the largest observed magnitude, under which
/// two absolute differences count as tied and a difference counts as zero.
/// Differences of decimal inputs such as WER percentages carry rounding
/// noise (29.41 - 28.97 != 29.00 - 28.56 in binary floating point).
pub const TIE_REL_TOL: f64 = 1e-9;

/// Two equal-length series of paired measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedResults {
    pub labels: Vec<String>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl PairedResults {
    pub fn new(labels: Vec<String>, a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if a.len() != b.len() || labels.len() != a.len() {
            return Err(Error::DimensionMismatch {
                expected: a.len(),
                actual: b.len().max(labels.len()),
            });
        }
        if let Some(i) = a.iter().chain(&b).position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index: i });
        }
        Ok(Self { labels, a, b })
    }

    pub fn unlabeled(a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        let labels = (0..a.len()).map(|i| i.to_string()).collect();
        Self::new(labels, a, b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WilcoxonResult {
    /// Sum of ranks of positive differences `a - b`.
    pub w_plus: f64,
    pub w_minus: f64,
    /// `min(w_plus, w_minus)`.
    pub statistic: f64,
    /// Two-sided p-value.
    pub p_value: f64,
    /// Pairs left after dropping zero differences.
    pub n_eff: usize,
    pub exact: bool,
}

/// Mid-ranks of `values` (1-based), grouping values within `tol`.
fn mid_ranks(values: &[f64], tol: f64) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut tie_sizes = Vec::new();
    let mut start = 0;
    while start < order.len() {
        let first = values[order[start]];
        let mut end = start + 1;
        while end < order.len() && values[order[end]] - first <= tol {
            end += 1;
        }
        // Positions start+1 ..= end share their average rank.
        let rank = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        tie_sizes.push(end - start);
        start = end;
    }
    (ranks, tie_sizes)
}

/// Null distribution of the exact test when magnitudes tie. Both agree
/// when there are no ties.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum ExactNull {
    /// Sign flips of the untied ranks `1..=n`, evaluated at the mid-rank
    /// statistic rounded toward the centre. This matches scipy's
    /// `method="exact"`.
    #[default]
    UntiedRanks,
    /// Sign flips of the observed mid-ranks, i.e. the permutation
    /// distribution conditional on the tie pattern.
    MidRanks,
}

/// Two-sided paired Wilcoxon signed-rank test on `a - b`.
///
/// Zero differences are dropped and tied magnitudes share mid-ranks. Up to
/// [`EXACT_MAX_N`] remaining pairs the null distribution of `W+` is counted
/// exactly over all `2^n` sign assignments (see [`ExactNull`] for ties);
/// above that a tie-corrected
/// normal approximation with continuity correction is used.
pub fn wilcoxon_signed_rank(pairs: &PairedResults) -> Result<WilcoxonResult> {
    wilcoxon_signed_rank_with(pairs, ExactNull::default())
}

/// [`wilcoxon_signed_rank`] with an explicit null for the exact case.
pub fn wilcoxon_signed_rank_with(pairs: &PairedResults, null: ExactNull) -> Result<WilcoxonResult> {
    let scale = pairs
        .a
        .iter()
        .chain(&pairs.b)
        .fold(1.0f64, |m, v| m.max(v.abs()));
    let tol = TIE_REL_TOL * scale;
    let diffs: Vec<f64> = pairs
        .a
        .iter()
        .zip(&pairs.b)
        .map(|(x, y)| x - y)
        .filter(|d| d.abs() > tol)
        .collect();
    let n = diffs.len();
    if n == 0 {
        return Err(Error::InvalidArgument(
            "all paired differences are zero".into(),
        ));
    }
    let magnitudes: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let (ranks, tie_sizes) = mid_ranks(&magnitudes, tol);
    let w_plus: f64 = diffs.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
    let total = (n * (n + 1)) as f64 / 2.0;
    let w_minus = total - w_plus;

    let (p_value, exact) = if n <= EXACT_MAX_N {
        let p = match null {
            ExactNull::MidRanks => exact_p(&ranks, w_plus, w_plus),
            ExactNull::UntiedRanks => {
                // A half-integer statistic is widened to the neighbouring
                // integers in each tail.
                let untied: Vec<f64> = (1..=n).map(|r| r as f64).collect();
                exact_p(&untied, w_plus.ceil(), w_plus.floor())
            }
        };
        (p, true)
    } else {
        (normal_p(n, &tie_sizes, w_plus), false)
    };
    Ok(WilcoxonResult {
        w_plus,
        w_minus,
        statistic: w_plus.min(w_minus),
        p_value,
        n_eff: n,
        exact,
    })
}

/// Exact two-sided p-value over all sign assignments of `ranks`. Doubled
/// mid-ranks are integers, so the number of assignments reaching each
/// doubled rank sum is counted by a subset-sum recurrence.
/// The lower tail counts sums up to `lower_at`, the upper tail sums from
/// `upper_at`.
fn exact_p(ranks: &[f64], lower_at: f64, upper_at: f64) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let max_sum: usize = doubled.iter().sum();
    let mut counts = vec![0u64; max_sum + 1];
    counts[0] = 1;
    let mut reach = 0;
    for &r in &doubled {
        for s in (0..=reach).rev() {
            if counts[s] > 0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    let lo = ((2.0 * lower_at).round() as usize).min(max_sum);
    let hi = ((2.0 * upper_at).round() as usize).min(max_sum);
    let total = 2f64.powi(ranks.len() as i32);
    let lower: u64 = counts[..=lo].iter().sum();
    let upper: u64 = counts[hi..].iter().sum();
    (2.0 * lower.min(upper) as f64 / total).min(1.0)
}

fn normal_p(n: usize, tie_sizes: &[usize], w_plus: f64) -> f64 {
    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let tie_term: f64 = tie_sizes.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / 48.0;
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term;
    let dev = (w_plus - mean).abs();
    let z = (dev - 0.5).max(0.0) / var.sqrt();
    let normal = Normal::standard();
    (2.0 * normal.sf(z)).min(1.0)
}

/// Sample Pearson correlation.
pub fn pearson_r(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            expected: xs.len(),
            actual: ys.len(),
        });
    }
    if xs.len() < 2 {
        return Err(Error::InvalidArgument("Pearson r needs at least two points".into()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(Error::ZeroVariance("x series"));
    }
    if syy == 0.0 {
        return Err(Error::ZeroVariance("y series"));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation; 0 when `n == 1`.
    pub std: f64,
    /// False when `n == 1` and `std` is a placeholder.
    pub std_defined: bool,
}

pub fn summarize(values: &[f64]) -> Result<Summary> {
    if values.is_empty() {
        return Err(Error::Empty("summary values"));
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return Ok(Summary {
            n,
            mean,
            std: 0.0,
            std_defined: false,
        });
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    Ok(Summary {
        n,
        mean,
        std: var.sqrt(),
        std_defined: true,
    })
}

/// Two-column `(token_count, score)` TSV with a header row. The score is
/// CATDS when `scaled`, otherwise the raw similarity.
pub fn export_scatter(records: &[ScoreRecord], scaled: bool) -> String {
    let mut out = String::from(if scaled {
        "token_count\tcatds\n"
    } else {
        "token_count\traw_similarity\n"
    });
    for r in records {
        let v = if scaled { r.catds } else { r.raw_similarity };
        let _ = writeln!(out, "{}\t{}", r.token_count, v);
    }
    out
}

pub const RESULTS_HEADER: &str = "condition\tmethod\tsize\tmetric";

/// One measurement, e.g. the WER of one trained model.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub condition: String,
    pub method: String,
    pub size: u64,
    pub metric: f64,
}

pub fn parse_results(text: &str) -> Result<Vec<ResultRow>> {
    const WHAT: &str = "results table";
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == RESULTS_HEADER => {}
        _ => return Err(Error::parse(WHAT, 1, format!("expected header {RESULTS_HEADER:?}"))),
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 4 {
            return Err(Error::parse(WHAT, line_no, format!("expected 4 fields, found {}", f.len())));
        }
        if f[0].is_empty() || f[1].is_empty() {
            return Err(Error::parse(WHAT, line_no, "empty condition or method"));
        }
        let size = f[2]
            .parse()
            .map_err(|_| Error::parse(WHAT, line_no, format!("bad size {:?}", f[2])))?;
        let metric: f64 = f[3]
            .parse()
            .map_err(|_| Error::parse(WHAT, line_no, format!("bad metric {:?}", f[3])))?;
        if !metric.is_finite() {
            return Err(Error::parse(WHAT, line_no, "non-finite metric"));
        }
        rows.push(ResultRow {
            condition: f[0].to_string(),
            method: f[1].to_string(),
            size,
            metric,
        });
    }
    Ok(rows)
}

pub fn read_results(path: impl AsRef<Path>) -> Result<Vec<ResultRow>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_results(&text)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub condition: String,
    pub method: String,
    pub size: u64,
    pub summary: Summary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodComparison {
    pub method: String,
    pub baseline: String,
    pub pairs: PairedResults,
    pub test: WilcoxonResult,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub cells: Vec<CellSummary>,
    pub comparisons: Vec<MethodComparison>,
}

/// Groups rows into `(condition, method, size)` cells (repeated runs are
/// averaged) and tests each method against `baseline` over the cells both
/// share. Methods sharing fewer than one non-tied cell are skipped.
pub fn build_report(rows: &[ResultRow], baseline: &str) -> Result<Report> {
    let mut groups: BTreeMap<(String, String, u64), Vec<f64>> = BTreeMap::new();
    for r in rows {
        groups
            .entry((r.condition.clone(), r.method.clone(), r.size))
            .or_default()
            .push(r.metric);
    }
    let cells = groups
        .iter()
        .map(|((c, m, s), v)| {
            Ok(CellSummary {
                condition: c.clone(),
                method: m.clone(),
                size: *s,
                summary: summarize(v)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mean_of = |c: &str, m: &str, s: u64| {
        cells
            .iter()
            .find(|x| x.condition == c && x.method == m && x.size == s)
            .map(|x| x.summary.mean)
    };
    let mut methods: Vec<&str> = cells.iter().map(|c| c.method.as_str()).collect();
    methods.sort_unstable();
    methods.dedup();

    let mut comparisons = Vec::new();
    for method in methods.into_iter().filter(|m| *m != baseline) {
        let (mut labels, mut a, mut b) = (Vec::new(), Vec::new(), Vec::new());
        for cell in cells.iter().filter(|c| c.method == baseline) {
            if let Some(v) = mean_of(&cell.condition, method, cell.size) {
                labels.push(format!("{}/{}", cell.condition, cell.size));
                a.push(cell.summary.mean);
                b.push(v);
            }
        }
        if labels.is_empty() {
            continue;
        }
        let pairs = PairedResults::new(labels, a, b)?;
        match wilcoxon_signed_rank(&pairs) {
            Ok(test) => comparisons.push(MethodComparison {
                method: method.to_string(),
                baseline: baseline.to_string(),
                pairs,
                test,
            }),
            Err(e) => log::warn!("{method} vs {baseline}: {e}"),
        }
    }
    Ok(Report { cells, comparisons })
}

impl Report {
    /// Summary TSV followed by a blank line and the test TSV.
    pub fn render(&self) -> String {
        let mut out = String::from("condition\tmethod\tsize\tn\tmean\tstd\n");
        for c in &self.cells {
            let std = if c.summary.std_defined {
                format!("{:.4}", c.summary.std)
            } else {
                "NA".to_string()
            };
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{:.4}\t{}",
                c.condition, c.method, c.size, c.summary.n, c.summary.mean, std
            );
        }
        out.push_str("\nmethod\tbaseline\tn_eff\tW\tp_value\texact\n");
        for cmp in &self.comparisons {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{:.6}\t{}",
                cmp.method, cmp.baseline, cmp.test.n_eff, cmp.test.statistic, cmp.test.p_value, cmp.test.exact
            );
        }
        out
    }
}
