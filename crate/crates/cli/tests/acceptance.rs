//! Acceptance checks. Run with `cargo test -p catds-cli --test acceptance`;
//! prints one PASS/FAIL line per criterion and fails if any criterion fails.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use catds::corpusio::{ClipEntry, ClipManifest, FeatureMatrix, TokenSeq};
use catds::pipeline::score_symbols;
use catds::quantizer::{assign_frames, Codebook};
use catds::scorer::{cosine_similarity, fit_length_scaler, FreqVector};
use catds::selector::{build_subset, plan_grid, DatasetConfig, GridConfig, LidRecord, SelectionInputs, Strategy};
use catds::statsreport::{
    build_report, parse_results, pearson_r, wilcoxon_signed_rank, wilcoxon_signed_rank_with, ExactNull, PairedResults,
};
use catds::subword::train_tokenizer;
use catds::symbolizer::{collapse, SymbolSeq};
use catds::synthcorpus::{generate_corpus, make_mixture, precision_at_k, LanguageSpec};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    check(elapsed < limit, format!("took {elapsed:.2?}, limit {limit:?}"))
}

fn e<E: std::fmt::Display>(err: E) -> String {
    err.to_string()
}

// scipy.stats.wilcoxon(random, other, method="exact") on the fixture.
const P_SCALED: f64 = 2.0 / 4096.0;
const P_UNSCALED: f64 = 0.7333984375;

fn wilcoxon_table() -> Outcome {
    let start = Instant::now();
    let text = include_str!("fixtures/pa_wer.tsv");
    let rows = parse_results(text).map_err(e)?;
    check(rows.len() == 36, format!("{} rows in fixture", rows.len()))?;
    let mut by_method: HashMap<&str, Vec<f64>> = HashMap::new();
    for r in &rows {
        by_method.entry(r.method.as_str()).or_default().push(r.metric);
    }
    let random = by_method["random"].clone();
    let test = |m: &str| {
        let pairs = PairedResults::unlabeled(random.clone(), by_method[m].clone()).map_err(e)?;
        wilcoxon_signed_rank(&pairs).map_err(e)
    };
    let scaled = test("catds")?;
    let unscaled = test("ucatds")?;
    check(scaled.exact && unscaled.exact, "expected exact p-values")?;
    check(
        (scaled.p_value - P_SCALED).abs() < 1e-12,
        format!("scaled p = {}", scaled.p_value),
    )?;
    check(
        (unscaled.p_value - 0.733).abs() <= 0.02 && (unscaled.p_value - P_UNSCALED).abs() < 1e-12,
        format!("unscaled p = {}", unscaled.p_value),
    )?;
    let report = build_report(&rows, "random").map_err(e)?;
    for c in &report.comparisons {
        let want = if c.method == "catds" { scaled.p_value } else { unscaled.p_value };
        check(c.test.p_value == want, format!("report p for {} = {}", c.method, c.test.p_value))?;
    }
    within(start.elapsed(), Duration::from_secs(1))?;
    Ok(format!(
        "p(scaled) = {:.5}, p(unscaled) = {:.4}",
        scaled.p_value, unscaled.p_value
    ))
}

fn decorrelation() -> Outcome {
    let start = Instant::now();
    let alphabet = 20;
    let support: Vec<u32> = (0..alphabet as u32).collect();
    let target_spec = LanguageSpec::random_over(alphabet, &support, 3.0, 20, 600, 1);
    let target = generate_corpus(&target_spec, 300, "ref").map_err(e)?;
    let donor_spec = LanguageSpec {
        seed: 1000,
        length_min: 5,
        length_max: 400,
        ..target_spec.perturbed(0.5, 77)
    };
    let donors = generate_corpus(&donor_spec, 1000, "c").map_err(e)?;
    let run = score_symbols(&target, &donors, alphabet, 200, 1e-6).map_err(e)?;
    let recs = &run.scores.records;
    let p: Vec<f64> = recs.iter().map(|r| r.token_count as f64).collect();
    let s: Vec<f64> = recs.iter().map(|r| r.raw_similarity).collect();
    let c: Vec<f64> = recs.iter().map(|r| r.catds).collect();
    let r_raw = pearson_r(&p, &s).map_err(e)?;
    let r_scaled = pearson_r(&p, &c).map_err(e)?;
    check(r_raw.abs() > 0.5, format!("|r(p, S)| = {r_raw:.3}"))?;
    check(r_scaled.abs() < 0.1, format!("|r(p, CATDS)| = {r_scaled:.3}"))?;
    within(start.elapsed(), Duration::from_secs(10))?;
    Ok(format!("r(p, S) = {r_raw:.3}, r(p, CATDS) = {r_scaled:.3}"))
}

fn mixture_precision(target: &LanguageSpec, distractor: &LanguageSpec, alphabet: usize) -> Result<f64, String> {
    let reference = generate_corpus(target, 200, "ref").map_err(e)?;
    let mix = make_mixture(target, distractor, 200, 200).map_err(e)?;
    let run = score_symbols(&reference, &mix.clips, alphabet, 150, 1e-6).map_err(e)?;
    check(run.scores.excluded.is_empty(), "mixture clips excluded")?;
    let mut recs: Vec<_> = run.scores.records.iter().collect();
    recs.sort_by(|a, b| b.catds.total_cmp(&a.catds).then_with(|| a.clip_id.cmp(&b.clip_id)));
    let ranking: Vec<&str> = recs.iter().map(|r| r.clip_id.as_str()).collect();
    precision_at_k(&ranking, &mix, 200).map_err(e)
}

fn ranking_oracle() -> Outcome {
    let start = Instant::now();
    let alphabet = 20;
    let low: Vec<u32> = (0..10).collect();
    let high: Vec<u32> = (10..20).collect();
    let target = LanguageSpec::random_over(alphabet, &low, 2.0, 10, 150, 5);
    let distractor = LanguageSpec::random_over(alphabet, &high, 2.0, 10, 150, 6);
    let disjoint = mixture_precision(&target, &distractor, alphabet)?;
    check(disjoint == 1.0, format!("disjoint precision@200 = {disjoint}"))?;

    let mut worst = (1.0f64, 0.0f64);
    let mut mean = 0.0;
    for seed in 0..20u64 {
        let spec = LanguageSpec::random_over(alphabet, &(0..20).collect::<Vec<_>>(), 2.0, 10, 150, 100 + seed);
        let p = mixture_precision(&spec, &spec, alphabet)?;
        check((0.4..=0.6).contains(&p), format!("seed {seed}: identical-spec precision@200 = {p}"))?;
        worst = (worst.0.min(p), worst.1.max(p));
        mean += p / 20.0;
    }
    within(start.elapsed(), Duration::from_secs(60))?;
    Ok(format!(
        "disjoint 1.0, identical specs mean {mean:.3} range [{:.3}, {:.3}]",
        worst.0, worst.1
    ))
}

fn naive_cosine(x: &[u64], y: &[u64]) -> f64 {
    let mut dot = 0.0;
    let mut xx = 0.0;
    let mut yy = 0.0;
    for i in 0..x.len() {
        dot += x[i] as f64 * y[i] as f64;
        xx += x[i] as f64 * x[i] as f64;
        yy += y[i] as f64 * y[i] as f64;
    }
    dot / (xx.sqrt() * yy.sqrt())
}

fn brute_nearest(frame: &[f32], centroids: &[Vec<f32>]) -> u32 {
    let mut best = 0;
    let mut best_d = f64::MAX;
    for (i, c) in centroids.iter().enumerate() {
        let mut d = 0.0f64;
        for j in 0..frame.len() {
            d += (frame[j] as f64 - c[j] as f64).powi(2);
        }
        if d < best_d {
            best_d = d;
            best = i as u32;
        }
    }
    best
}

fn rank_sum(ranks: &[f64], mask: u32) -> f64 {
    (0..ranks.len()).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum()
}

/// Two-sided exact p by listing every sign pattern over `null_ranks`, with
/// the lower tail up to `lo` and the upper tail from `hi`.
fn enumerate_p(null_ranks: &[f64], lo: f64, hi: f64) -> f64 {
    let n = null_ranks.len();
    let (mut le, mut ge) = (0u64, 0u64);
    for mask in 0..(1u32 << n) {
        let v = rank_sum(null_ranks, mask);
        if v <= lo + 1e-9 {
            le += 1;
        }
        if v >= hi - 1e-9 {
            ge += 1;
        }
    }
    (2.0 * le.min(ge) as f64 / (1u64 << n) as f64).min(1.0)
}

/// Constant, linear and quadratic coefficients of the parabola through
/// three points.
fn lagrange_coefficients(x: &[f64], y: &[f64]) -> [f64; 3] {
    let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
    for i in 0..3 {
        let (j, l) = ((i + 1) % 3, (i + 2) % 3);
        let w = y[i] / ((x[i] - x[j]) * (x[i] - x[l]));
        a += w;
        b -= w * (x[j] + x[l]);
        c += w * x[j] * x[l];
    }
    [c, b, a]
}

/// Mid-ranks of small positive integers.
fn int_mid_ranks(mags: &[u32]) -> Vec<f64> {
    mags.iter()
        .map(|&m| {
            let below = mags.iter().filter(|&&x| x < m).count() as f64;
            let equal = mags.iter().filter(|&&x| x == m).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

fn oracle_suites() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(20);

    let mut max_cos = 0.0f64;
    for _ in 0..1000 {
        let dim = rng.random_range(1..64);
        let mut x: Vec<u64> = (0..dim).map(|_| rng.random_range(0..1000)).collect();
        let mut y: Vec<u64> = (0..dim).map(|_| rng.random_range(0..1000)).collect();
        x[0] += 1;
        y[dim - 1] += 1;
        let got = cosine_similarity(&FreqVector::from_counts(x.clone()), &FreqVector::from_counts(y.clone())).map_err(e)?;
        max_cos = max_cos.max((got - naive_cosine(&x, &y)).abs());
    }
    check(max_cos < 1e-12, format!("cosine |delta| = {max_cos:e}"))?;

    for case in 0..100 {
        let dim = rng.random_range(1..9);
        let k = rng.random_range(1..20);
        let grid = case % 2 == 0;
        let draw = |rng: &mut ChaCha8Rng| -> f32 {
            if grid {
                rng.random_range(-3..=3) as f32
            } else {
                rng.random_range(-5.0f32..5.0)
            }
        };
        let mut centroids: Vec<Vec<f32>> = Vec::new();
        while centroids.len() < k {
            let c: Vec<f32> = (0..dim).map(|_| draw(&mut rng)).collect();
            if !centroids.contains(&c) {
                centroids.push(c);
            }
            if grid && centroids.len() == 7usize.pow(dim as u32).min(k) {
                break;
            }
        }
        let codebook = Codebook::new(dim, centroids.concat(), 0, 0.0).map_err(e)?;
        let frames: Vec<f32> = (0..200 * dim).map(|_| draw(&mut rng)).collect();
        let frames = FeatureMatrix::new(dim, frames).map_err(e)?;
        let got = assign_frames(&codebook, &frames).map_err(e)?;
        for (i, row) in frames.rows().enumerate() {
            let want = brute_nearest(row, &centroids);
            check(got[i] == want, format!("case {case} frame {i}: {} vs {want}", got[i]))?;
        }
    }

    let (mut max_coef, mut max_raw) = (0.0f64, 0.0f64);
    for _ in 0..1000 {
        let mut ps: Vec<f64> = Vec::new();
        while ps.len() < 3 {
            let p = rng.random_range(1..500) as f64;
            if !ps.contains(&p) {
                ps.push(p);
            }
        }
        let ss: Vec<f64> = (0..3).map(|_| rng.random_range(0.0..1.0)).collect();
        let pts: Vec<(f64, f64)> = ps.iter().copied().zip(ss.iter().copied()).collect();
        let model = fit_length_scaler(&pts, 1e-6).map_err(e)?;
        // The fit works on standardized token counts; interpolate there.
        let mean = ps.iter().sum::<f64>() / 3.0;
        let sd = (ps.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / 3.0).sqrt();
        let z: Vec<f64> = ps.iter().map(|p| (p - mean) / sd).collect();
        let coef = lagrange_coefficients(&z, &ss);
        for (got, want) in model.z_coef.iter().zip(coef) {
            max_coef = max_coef.max((got - want).abs());
        }
        // Raw coefficients can be large, so compare them relatively.
        let raw = lagrange_coefficients(&ps, &ss);
        for (got, want) in [model.c, model.b, model.a].iter().zip(raw) {
            max_raw = max_raw.max((got - want).abs() / want.abs().max(1.0));
        }
    }
    check(max_coef < 1e-9, format!("quadratic |delta coef| = {max_coef:e}"))?;
    check(max_raw < 1e-9, format!("quadratic raw relative delta = {max_raw:e}"))?;

    let mut patterns = 0;
    for n in 1..=10usize {
        let magnitude_sets: [Vec<u32>; 2] = [
            (1..=n as u32).collect(),
            (0..n as u32).map(|i| 1 + i / 2).collect(),
        ];
        for mags in &magnitude_sets {
            let ranks = int_mid_ranks(mags);
            let untied: Vec<f64> = (1..=n).map(|r| r as f64).collect();
            for signs in 0..(1u32 << n) {
                let diffs: Vec<f64> = (0..n)
                    .map(|i| if signs >> i & 1 == 1 { mags[i] as f64 } else { -(mags[i] as f64) })
                    .collect();
                let pairs = PairedResults::unlabeled(diffs, vec![0.0; n]).map_err(e)?;
                let obs = rank_sum(&ranks, signs);
                let got = wilcoxon_signed_rank(&pairs).map_err(e)?;
                let want = enumerate_p(&untied, obs.ceil(), obs.floor());
                check(
                    got.exact && got.w_plus == obs && (got.p_value - want).abs() < 1e-12,
                    format!("n = {n} signs {signs:b}: {} vs {want}", got.p_value),
                )?;
                let got = wilcoxon_signed_rank_with(&pairs, ExactNull::MidRanks).map_err(e)?;
                let want = enumerate_p(&ranks, obs, obs);
                check(
                    (got.p_value - want).abs() < 1e-12,
                    format!("mid-rank null, n = {n} signs {signs:b}: {} vs {want}", got.p_value),
                )?;
                patterns += 1;
            }
        }
    }
    Ok(format!(
        "cosine {max_cos:.1e}, 100 assignment cases, quad {max_coef:.1e}, {patterns} sign patterns"
    ))
}

fn scaled_manifest(rng: &mut ChaCha8Rng) -> Result<(ClipManifest, Vec<catds::scorer::ScoreRecord>, Vec<LidRecord>), String> {
    let n = 20;
    let entries = (0..n)
        .map(|i| ClipEntry {
            clip_id: format!("c{i:03}"),
            feature_path: String::new(),
            duration_s: 1.0 + i as f64,
            language: "donor".into(),
            source_sample_ids: vec![],
        })
        .collect();
    let manifest = ClipManifest::new(entries).map_err(e)?;
    let scores = (0..n)
        .map(|i| catds::scorer::ScoreRecord {
            clip_id: format!("c{i:03}"),
            token_count: rng.random_range(1..100),
            // Coarse values so ties exercise the id tie-break.
            raw_similarity: rng.random_range(0..5) as f64 / 4.0,
            fitted_q: 0.5,
            catds: rng.random_range(0..6) as f64 / 3.0,
            clamped: false,
        })
        .collect();
    let lid = (0..n)
        .map(|i| LidRecord::new(format!("c{i:03}"), rng.random_range(1..4), rng.random_range(0..4) as f64 / 4.0))
        .collect::<Result<Vec<_>, _>>()
        .map_err(e)?;
    Ok((manifest, scores, lid))
}

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_catds"))
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = cli().args(args).output().map_err(e)?;
    check(
        out.status.success(),
        format!("catds {} failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr)),
    )
}

fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 temp path")
}

/// Synthetic feature-level fixture: target and donor manifests with CATF
/// files, plus a LID table for the donors.
fn e2e_fixture(dir: &Path) -> Result<(), String> {
    let f = |name: &str| dir.join(name);
    run_cli(&["synth", "spec", "--alphabet-size", "12", "--seed", "1", "--length-min", "20", "--length-max", "120", "--out", p(&f("t.json"))])?;
    run_cli(&["synth", "spec", "--perturb-from", p(&f("t.json")), "--strength", "0.5", "--seed", "2", "--out", p(&f("d.json"))])?;
    run_cli(&[
        "synth", "corpus", "--spec", p(&f("t.json")), "--n-clips", "60", "--prefix", "tgt",
        "--out", p(&f("target.sym")), "--manifest-out", p(&f("target.jsonl")),
        "--features-dir", p(&f("target_feats")), "--dim", "8",
    ])?;
    run_cli(&[
        "synth", "mixture", "--target-spec", p(&f("t.json")), "--distractor-spec", p(&f("d.json")),
        "--n-target-like", "20", "--n-distractor", "20", "--out", p(&f("donor.sym")),
        "--manifest-out", p(&f("donor.jsonl")), "--lid-out", p(&f("donor_lid.tsv")),
        "--features-dir", p(&f("donor_feats")), "--dim", "8", "--centroid-seed", "0",
    ])
}

/// The documented 7-command sequence.
fn e2e_run(fixture: &Path, out: &Path, threads: &str) -> Result<(), String> {
    let f = |name: &str| fixture.join(name);
    let o = |name: &str| out.join(name);
    let t = ["--threads", threads];
    std::fs::create_dir_all(out).map_err(e)?;
    run_cli(&[&["train-quantizer", "--manifest", p(&f("target.jsonl")), "--k", "12", "--out", p(&o("codebook.catk"))][..], &t].concat())?;
    run_cli(&[&["tokenize", "--codebook", p(&o("codebook.catk")), "--manifest", p(&f("target.jsonl")), "--out", p(&o("target.sym"))][..], &t].concat())?;
    run_cli(&[&["tokenize", "--codebook", p(&o("codebook.catk")), "--manifest", p(&f("donor.jsonl")), "--out", p(&o("donor.sym"))][..], &t].concat())?;
    run_cli(&[&[
        "train-tokenizer", "--symbols", p(&o("target.sym")), "--alphabet-size", "12", "--vocab-size", "80",
        "--out", p(&o("tokenizer.json")), "--ref-out", p(&o("target.vec")),
    ][..], &t].concat())?;
    run_cli(&[&["encode", "--tokenizer", p(&o("tokenizer.json")), "--symbols", p(&o("donor.sym")), "--out", p(&o("donor.tok"))][..], &t].concat())?;
    run_cli(&[&["score", "--target-ref", p(&o("target.vec")), "--tokens", p(&o("donor.tok")), "--out", p(&o("scores.tsv"))][..], &t].concat())?;
    run_cli(&[&[
        "select", "--manifest", p(&f("donor.jsonl")), "--scores", p(&o("scores.tsv")), "--lid", p(&f("donor_lid.tsv")),
        "--n-total", "40", "--delta-n", "8", "--k-max", "4", "--out-dir", p(&o("subsets")),
    ][..], &t].concat())
}

fn dir_files(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(e)? {
        let path: PathBuf = entry.map_err(e)?.path();
        if path.is_file() {
            let name = path.file_name().unwrap().to_string_lossy().into_owned();
            files.push((name, std::fs::read(&path).map_err(e)?));
        }
    }
    files.sort();
    Ok(files)
}

fn pipeline_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(16);

    let alphabet = 16;
    let spec = LanguageSpec::random_over(alphabet, &(0..16).collect::<Vec<_>>(), 2.0, 5, 200, 3);
    let corpus = generate_corpus(&spec, 200, "x").map_err(e)?;
    let model = train_tokenizer(&corpus, alphabet, 400).map_err(e)?;
    for i in 0..10_000 {
        let len = rng.random_range(0..120);
        let symbols: Vec<u32> = (0..len).map(|_| rng.random_range(0..alphabet as u32)).collect();
        let seq = SymbolSeq {
            clip_id: format!("r{i}"),
            symbols: if i % 2 == 0 { collapse(&symbols) } else { symbols },
        };
        let tokens: TokenSeq = model.encode(&seq).map_err(e)?;
        let back = model.decode(&tokens).map_err(e)?;
        check(back == seq, format!("round trip failed on sequence {i}"))?;
        let once = collapse(&seq.symbols);
        check(collapse(&once) == once, format!("collapse not idempotent on sequence {i}"))?;
        check(once.windows(2).all(|w| w[0] != w[1]), "collapse left a run")?;
    }

    let (manifest, scores, lid) = scaled_manifest(&mut rng)?;
    let inputs = SelectionInputs {
        manifest: &manifest,
        scores: Some(&scores),
        lid: Some(&lid),
    };
    for strategy in [Strategy::Catds, Strategy::Ucatds, Strategy::Lid] {
        let subsets = [16, 12, 8, 4]
            .iter()
            .map(|&size| build_subset(&DatasetConfig { strategy, size, seed: None }, &inputs).map_err(e))
            .collect::<Result<Vec<_>, _>>()?;
        for w in subsets.windows(2) {
            let outer: Vec<&str> = w[0].entries().iter().map(|c| c.clip_id.as_str()).collect();
            check(
                w[1].entries().iter().all(|c| outer.contains(&c.clip_id.as_str())),
                format!("{strategy} subset of {} not nested in {}", w[1].len(), w[0].len()),
            )?;
        }
    }

    let tmp = tempfile::tempdir().map_err(e)?;
    let fixture = tmp.path().join("fixture");
    std::fs::create_dir_all(&fixture).map_err(e)?;
    e2e_fixture(&fixture)?;
    let a = tmp.path().join("run_a");
    let b = tmp.path().join("run_b");
    e2e_run(&fixture, &a, "1")?;
    e2e_run(&fixture, &b, "4")?;
    let (fa, fb) = (dir_files(&a)?, dir_files(&b)?);
    check(fa == fb, "pipeline artifacts differ between runs")?;
    let (sa, sb) = (dir_files(&a.join("subsets"))?, dir_files(&b.join("subsets"))?);
    check(!sa.is_empty() && sa == sb, "subset manifests differ between runs")?;
    Ok(format!(
        "10000 round trips, nesting over [16, 12, 8, 4], {} subset files identical across 1 and 4 threads",
        sa.len()
    ))
}

fn grid_enumeration() -> Outcome {
    let plan = plan_grid(&GridConfig::default()).map_err(e)?;
    check(plan.len() == 26, format!("{} configurations", plan.len()))?;
    let mut names: Vec<String> = plan.iter().map(|c| c.file_name("hi")).collect();
    names.sort();
    names.dedup();
    check(names.len() == 26, "duplicate configuration names")?;
    Ok("26 configurations".into())
}

fn main() {
    let criteria: [Criterion; 6] = [
        ("wilcoxon_table_reproduction", wilcoxon_table),
        ("length_decorrelation", decorrelation),
        ("ranking_oracle", ranking_oracle),
        ("oracle_equivalence", oracle_suites),
        ("pipeline_invariants", pipeline_invariants),
        ("grid_enumeration", grid_enumeration),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let start = Instant::now();
        match run() {
            Ok(detail) => println!("PASS {name} ({detail}; {:.2?})", start.elapsed()),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why}");
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
