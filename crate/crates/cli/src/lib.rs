//! `catds` command-line pipeline.
//!
//! [`dispatch`] parses arguments and runs one subcommand; it returns the
//! process exit status (0 success, 1 failure, 2 usage error).

pub mod config;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use catds::corpusio::{
    assemble_clips, concat_features, read_feature_file, read_freq_vector, read_lid_table, read_manifest,
    read_score_table, read_symbol_file, read_token_file, write_feature_file, write_freq_vector, write_lid_table,
    write_manifest, write_score_table, write_symbol_file, write_token_file, ClipEntry, ClipManifest,
    FeatureMatrix,
};
use catds::pipeline::{collapse_all, encode_all, reference_vector};
use catds::quantizer::{
    assign, read_codebook, subsample_frames, train_kmeans, write_codebook, KMeansOptions,
};
use catds::scorer::score_corpus;
use catds::selector::{
    build_subset, plan_grid, sha256_hex, GridConfig, LidRecord, Provenance, SelectionInputs, Strategy,
};
use catds::statsreport::{build_report, export_scatter, pearson_r, read_results};
use catds::subword::{read_tokenizer, train_tokenizer, write_tokenizer};
use catds::symbolizer::{collapse_runs, SymbolSeq};
use catds::synthcorpus::{emit_features, generate_corpus, make_mixture, read_language_spec, LanguageSpec};

use crate::config::RunConfig;

/// Environment variable holding the log filter (e.g. `info`, `debug`).
pub const LOG_ENV: &str = "CATDS_LOG";

#[derive(Debug, Parser)]
#[command(name = "catds", version, about = "Donor clip scoring and subset selection", arg_required_else_help = true)]
struct Cli {
    /// JSON run configuration; flags take precedence over its values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Concatenate samples into clips of bounded duration.
    Assemble(AssembleArgs),
    /// Train the k-means codebook on target-language features.
    TrainQuantizer(TrainQuantizerArgs),
    /// Quantize features and collapse runs into symbol sequences.
    Tokenize(TokenizeArgs),
    /// Train the subword tokenizer on target symbol sequences.
    TrainTokenizer(TrainTokenizerArgs),
    /// Encode symbol sequences into acoustic tokens.
    Encode(EncodeArgs),
    /// Score donor clips against the target reference vector.
    Score(ScoreArgs),
    /// Write subset manifests for the experiment grid.
    Select(SelectArgs),
    /// Summaries, significance tests and scatter data.
    Report(ReportArgs),
    /// Synthetic Markov corpora for testing.
    #[command(subcommand)]
    Synth(SynthCommand),
}

#[derive(Debug, Args)]
struct AssembleArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    max_clip_s: Option<f64>,
    /// Write concatenated CATF files here and point the clips at them.
    #[arg(long, value_name = "DIR")]
    features_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainQuantizerArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Sample manifest for clips assembled from several samples.
    #[arg(long)]
    samples: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    rel_tol: Option<f64>,
    /// Uniformly subsample at most this many frames before training.
    #[arg(long)]
    max_frames: Option<usize>,
}

#[derive(Debug, Args)]
struct TokenizeArgs {
    #[arg(long)]
    codebook: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    samples: Option<PathBuf>,
    /// Symbol file output.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainTokenizerArgs {
    #[arg(long)]
    symbols: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    vocab_size: Option<usize>,
    /// Number of base symbols; defaults to the configured k.
    #[arg(long)]
    alphabet_size: Option<usize>,
    /// Also encode the training symbols into this token file.
    #[arg(long, value_name = "FILE")]
    tokens_out: Option<PathBuf>,
    /// Also write the reference frequency vector of the training symbols.
    #[arg(long, value_name = "FILE")]
    ref_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EncodeArgs {
    #[arg(long)]
    tokenizer: PathBuf,
    #[arg(long)]
    symbols: PathBuf,
    /// Token file output.
    #[arg(long)]
    out: PathBuf,
    /// Also write the aggregate frequency vector of all clips.
    #[arg(long, value_name = "FILE")]
    ref_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ScoreArgs {
    #[arg(long)]
    target_ref: PathBuf,
    #[arg(long)]
    tokens: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Write token-count scatter TSVs before and after scaling.
    #[arg(long, value_name = "DIR")]
    scatter_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SelectArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    scores: Option<PathBuf>,
    #[arg(long)]
    lid: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    out_dir: PathBuf,
    /// Language tag used in file names; defaults to the manifest's.
    #[arg(long)]
    language: Option<String>,
    #[arg(long)]
    n_total: Option<usize>,
    #[arg(long)]
    delta_n: Option<usize>,
    #[arg(long)]
    k_max: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Restrict to these strategies (shared,random,lid,catds,ucatds).
    #[arg(long, value_delimiter = ',')]
    strategies: Option<Vec<String>>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Results TSV: condition, method, size, metric.
    #[arg(long)]
    results: Option<PathBuf>,
    #[arg(long, default_value = "random")]
    baseline: String,
    /// Score table for token-count diagnostics.
    #[arg(long)]
    scores: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    scatter_dir: Option<PathBuf>,
    /// Report output; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum SynthCommand {
    /// Write a language spec JSON.
    Spec(SynthSpecArgs),
    /// Sample a corpus from one spec.
    Corpus(SynthCorpusArgs),
    /// Sample a labeled mixture of target-like and distractor clips.
    Mixture(SynthMixtureArgs),
}

#[derive(Debug, Args)]
struct SynthSpecArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, required_unless_present = "perturb_from")]
    alphabet_size: Option<usize>,
    /// Reachable symbols, e.g. `0-9` or `0,2,4`; all symbols by default.
    #[arg(long)]
    support: Option<String>,
    /// Use uniform transitions instead of random ones.
    #[arg(long)]
    uniform: bool,
    #[arg(long, default_value_t = 3.0)]
    peakedness: f64,
    #[arg(long)]
    length_min: Option<usize>,
    #[arg(long)]
    length_max: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Blend an existing spec with random noise instead.
    #[arg(long, value_name = "SPEC")]
    perturb_from: Option<PathBuf>,
    #[arg(long, default_value_t = 0.3)]
    strength: f64,
}

#[derive(Debug, Args)]
struct FeatureOpts {
    /// Emit CATF features for every clip into this directory.
    #[arg(long, value_name = "DIR")]
    features_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 16)]
    dim: usize,
    #[arg(long, default_value_t = 0.25)]
    noise_sd: f32,
    #[arg(long, default_value_t = 3)]
    max_frames_per_symbol: usize,
    #[arg(long, default_value_t = 0)]
    centroid_seed: u64,
}

#[derive(Debug, Args)]
struct SynthCorpusArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    n_clips: usize,
    #[arg(long, default_value = "c")]
    prefix: String,
    /// Symbol file output.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    manifest_out: Option<PathBuf>,
    #[arg(long, default_value = "synth")]
    language: String,
    #[command(flatten)]
    features: FeatureOpts,
}

#[derive(Debug, Args)]
struct SynthMixtureArgs {
    #[arg(long)]
    target_spec: PathBuf,
    #[arg(long)]
    distractor_spec: PathBuf,
    #[arg(long)]
    n_target_like: usize,
    #[arg(long)]
    n_distractor: usize,
    #[arg(long)]
    out: PathBuf,
    /// `clip_id<TAB>target_like` labels.
    #[arg(long)]
    labels_out: Option<PathBuf>,
    /// Synthetic LID table: target-like clips tend to rank the target first.
    #[arg(long)]
    lid_out: Option<PathBuf>,
    #[arg(long)]
    manifest_out: Option<PathBuf>,
    #[arg(long, default_value = "donor")]
    language: String,
    #[command(flatten)]
    features: FeatureOpts,
}

/// Parses `argv` (program name first) and runs the subcommand.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "warn"))
        .format_timestamp(None)
        .try_init();
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = RunConfig::load(cli.config.as_deref())?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cli.threads {
        anyhow::ensure!(t > 0, "--threads must be positive");
        pool = pool.num_threads(t);
    }
    let pool = pool.build().context("building thread pool")?;
    pool.install(|| match cli.command {
        Command::Assemble(a) => cmd_assemble(&cfg, a),
        Command::TrainQuantizer(a) => cmd_train_quantizer(&cfg, a),
        Command::Tokenize(a) => cmd_tokenize(a),
        Command::TrainTokenizer(a) => cmd_train_tokenizer(&cfg, a),
        Command::Encode(a) => cmd_encode(a),
        Command::Score(a) => cmd_score(&cfg, a),
        Command::Select(a) => cmd_select(&cfg, a),
        Command::Report(a) => cmd_report(a),
        Command::Synth(SynthCommand::Spec(a)) => cmd_synth_spec(a),
        Command::Synth(SynthCommand::Corpus(a)) => cmd_synth_corpus(a),
        Command::Synth(SynthCommand::Mixture(a)) => cmd_synth_mixture(a),
    })
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn cmd_assemble(cfg: &RunConfig, a: AssembleArgs) -> Result<()> {
    let samples = read_manifest(&a.manifest)?;
    let assembly = assemble_clips(&samples, a.max_clip_s.unwrap_or(cfg.max_clip_s))?;
    for id in &assembly.oversized {
        warn!("{id} holds a single sample longer than the cap");
    }
    let manifest = match &a.features_out {
        None => assembly.manifest,
        Some(dir) => {
            create_dir(dir)?;
            let entries = assembly
                .manifest
                .entries()
                .iter()
                .map(|clip| {
                    let path = dir.join(format!("{}.catf", clip.clip_id));
                    write_feature_file(&path, &concat_features(clip, &samples)?)?;
                    Ok(ClipEntry {
                        feature_path: path.to_string_lossy().into_owned(),
                        ..clip.clone()
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            ClipManifest::new(entries)?
        }
    };
    write_manifest(&a.out, &manifest)?;
    info!("{} samples -> {} clips", samples.len(), manifest.len());
    Ok(())
}

fn load_features(entry: &ClipEntry, samples: Option<&ClipManifest>) -> Result<FeatureMatrix> {
    if !entry.feature_path.is_empty() {
        return Ok(read_feature_file(&entry.feature_path)?);
    }
    match samples {
        Some(s) if !entry.source_sample_ids.is_empty() => Ok(concat_features(entry, s)?),
        _ => bail!(
            "clip {} has no feature_path (pass --samples for assembled clips)",
            entry.clip_id
        ),
    }
}

fn read_optional_manifest(path: Option<&Path>) -> Result<Option<ClipManifest>> {
    path.map(read_manifest).transpose().map_err(Into::into)
}

fn cmd_train_quantizer(cfg: &RunConfig, a: TrainQuantizerArgs) -> Result<()> {
    let manifest = read_manifest(&a.manifest)?;
    let samples = read_optional_manifest(a.samples.as_deref())?;
    let parts = manifest
        .entries()
        .iter()
        .map(|e| load_features(e, samples.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    let frames = FeatureMatrix::concat(&parts)?;
    let opts = KMeansOptions {
        k: a.k.unwrap_or(cfg.k),
        seed: a.seed.unwrap_or(cfg.kmeans_seed),
        max_iters: a.max_iters.unwrap_or(cfg.max_iters),
        rel_tol: a.rel_tol.unwrap_or(cfg.rel_tol),
    };
    let frames = match a.max_frames.or(cfg.max_frames) {
        Some(cap) => subsample_frames(&frames, cap, opts.k, opts.seed)?,
        None => frames,
    };
    let fit = train_kmeans(&frames, &opts)?;
    info!(
        "k-means: {} frames, {} iterations, converged {}, inertia {}",
        frames.n_frames(),
        fit.history.len(),
        fit.converged,
        fit.codebook.inertia()
    );
    write_codebook(&a.out, &fit.codebook)?;
    Ok(())
}

fn cmd_tokenize(a: TokenizeArgs) -> Result<()> {
    let codebook = read_codebook(&a.codebook)?;
    let manifest = read_manifest(&a.manifest)?;
    let samples = read_optional_manifest(a.samples.as_deref())?;
    let seqs = manifest
        .entries()
        .iter()
        .map(|e| {
            let frames = load_features(e, samples.as_ref())?;
            Ok(collapse_runs(&assign(&codebook, &e.clip_id, &frames)?))
        })
        .collect::<Result<Vec<SymbolSeq>>>()?;
    write_symbol_file(&a.out, &seqs, codebook.k())?;
    Ok(())
}

fn cmd_train_tokenizer(cfg: &RunConfig, a: TrainTokenizerArgs) -> Result<()> {
    let alphabet = a.alphabet_size.unwrap_or(cfg.k);
    let seqs = collapse_all(&read_symbol_file(&a.symbols, Some(alphabet))?);
    let model = train_tokenizer(&seqs, alphabet, a.vocab_size.unwrap_or(cfg.vocab_size))?;
    if model.is_truncated() {
        warn!(
            "corpus supports only {} of {} vocabulary entries",
            model.vocab_size(),
            model.requested_vocab()
        );
    }
    write_tokenizer(&a.out, &model)?;
    if a.tokens_out.is_some() || a.ref_out.is_some() {
        let tokens = encode_all(&model, &seqs)?;
        if let Some(path) = &a.tokens_out {
            write_token_file(path, &tokens)?;
        }
        if let Some(path) = &a.ref_out {
            write_freq_vector(path, &reference_vector(&tokens, model.vocab_size())?)?;
        }
    }
    Ok(())
}

fn cmd_encode(a: EncodeArgs) -> Result<()> {
    let model = read_tokenizer(&a.tokenizer)?;
    let seqs = collapse_all(&read_symbol_file(&a.symbols, Some(model.alphabet_size()))?);
    let tokens = encode_all(&model, &seqs)?;
    write_token_file(&a.out, &tokens)?;
    if let Some(path) = &a.ref_out {
        write_freq_vector(path, &reference_vector(&tokens, model.vocab_size())?)?;
    }
    Ok(())
}

fn cmd_score(cfg: &RunConfig, a: ScoreArgs) -> Result<()> {
    let target_ref = read_freq_vector(&a.target_ref)?;
    let tokens = read_token_file(&a.tokens, Some(target_ref.dim()))?;
    let scored = score_corpus(&target_ref, &tokens, a.epsilon.unwrap_or(cfg.epsilon))?;
    let m = &scored.model;
    info!(
        "length scaler q = {} p^2 + {} p + {}{}",
        m.a,
        m.b,
        m.c,
        if m.is_fallback() { " (constant fallback)" } else { "" }
    );
    write_score_table(&a.out, &scored.records)?;
    if let Some(dir) = &a.scatter_dir {
        write_scatter(dir, &scored.records)?;
    }
    Ok(())
}

fn write_scatter(dir: &Path, records: &[catds::scorer::ScoreRecord]) -> Result<()> {
    create_dir(dir)?;
    for (scaled, name) in [(false, "scatter_unscaled.tsv"), (true, "scatter_scaled.tsv")] {
        let path = dir.join(name);
        fs::write(&path, export_scatter(records, scaled)).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn parse_strategy(name: &str) -> Result<Strategy> {
    Ok(match name {
        "shared" => Strategy::Shared,
        "random" => Strategy::Random,
        "lid" => Strategy::Lid,
        "catds" => Strategy::Catds,
        "ucatds" => Strategy::Ucatds,
        other => bail!("unknown strategy {other:?}"),
    })
}

fn cmd_select(cfg: &RunConfig, a: SelectArgs) -> Result<()> {
    let manifest_text = fs::read(&a.manifest).with_context(|| format!("reading {}", a.manifest.display()))?;
    let manifest = read_manifest(&a.manifest)?;
    let grid = GridConfig {
        n_total: a.n_total.unwrap_or(cfg.n_total),
        delta_n: a.delta_n.unwrap_or(cfg.delta_n),
        k_max: a.k_max.unwrap_or(cfg.k_max),
        random_seeds: a.seeds.clone().unwrap_or_else(|| cfg.random_seeds.clone()),
    };
    anyhow::ensure!(
        manifest.len() == grid.n_total,
        "manifest has {} clips but N = {} (set --n-total)",
        manifest.len(),
        grid.n_total
    );
    let wanted = a
        .strategies
        .as_ref()
        .map(|names| names.iter().map(|n| parse_strategy(n)).collect::<Result<Vec<_>>>())
        .transpose()?;
    let plan: Vec<_> = plan_grid(&grid)?
        .into_iter()
        .filter(|c| wanted.as_ref().is_none_or(|w| w.contains(&c.strategy)))
        .collect();

    let (scores, scores_hash) = match &a.scores {
        Some(p) => (Some(read_score_table(p)?), Some(sha256_hex(&fs::read(p)?))),
        None => (None, None),
    };
    let (lid, lid_hash): (Option<Vec<LidRecord>>, _) = match &a.lid {
        Some(p) => (Some(read_lid_table(p)?), Some(sha256_hex(&fs::read(p)?))),
        None => (None, None),
    };
    let language = a
        .language
        .clone()
        .or_else(|| cfg.language.clone())
        .or_else(|| manifest.entries().first().map(|e| e.language.clone()))
        .unwrap_or_else(|| "donor".to_string());
    let inputs = SelectionInputs {
        manifest: &manifest,
        scores: scores.as_deref(),
        lid: lid.as_deref(),
    };
    let manifest_hash = sha256_hex(&manifest_text);

    create_dir(&a.out_dir)?;
    let mut plan_tsv = String::from("file\tstrategy\tsize\tseed\tn_clips\n");
    for config in &plan {
        let subset = build_subset(config, &inputs)
            .with_context(|| format!("building {}", config.file_name(&language)))?;
        let name = config.file_name(&language);
        write_manifest(a.out_dir.join(&name), &subset)?;
        let provenance = Provenance {
            language: language.clone(),
            strategy: config.strategy,
            size: config.size,
            seed: config.seed,
            source_manifest_sha256: manifest_hash.clone(),
            ranking_table_sha256: match config.strategy {
                Strategy::Catds | Strategy::Ucatds => scores_hash.clone(),
                Strategy::Lid => lid_hash.clone(),
                _ => None,
            },
        };
        let meta = a.out_dir.join(name.replace(".jsonl", ".meta.json"));
        fs::write(&meta, serde_json::to_string_pretty(&provenance)? + "\n")
            .with_context(|| format!("writing {}", meta.display()))?;
        plan_tsv.push_str(&format!(
            "{name}\t{}\t{}\t{}\t{}\n",
            config.strategy,
            config.size,
            config.seed.map(|s| s.to_string()).unwrap_or_default(),
            subset.len()
        ));
    }
    fs::write(a.out_dir.join("plan.tsv"), plan_tsv)?;
    info!("wrote {} subset manifests to {}", plan.len(), a.out_dir.display());
    Ok(())
}

fn cmd_report(a: ReportArgs) -> Result<()> {
    anyhow::ensure!(
        a.results.is_some() || a.scores.is_some(),
        "report needs --results and/or --scores"
    );
    let mut out = String::new();
    if let Some(path) = &a.results {
        let rows = read_results(path)?;
        out.push_str(&build_report(&rows, &a.baseline)?.render());
    }
    if let Some(path) = &a.scores {
        let records = read_score_table(path)?;
        let p: Vec<f64> = records.iter().map(|r| r.token_count as f64).collect();
        let s: Vec<f64> = records.iter().map(|r| r.raw_similarity).collect();
        let c: Vec<f64> = records.iter().map(|r| r.catds).collect();
        if !out.is_empty() {
            out.push('\n');
        }
        out.push_str("diagnostic\tvalue\n");
        out.push_str(&format!("clips\t{}\n", records.len()));
        out.push_str(&format!("clamped\t{}\n", records.iter().filter(|r| r.clamped).count()));
        for (name, ys) in [("pearson_tokens_raw", &s), ("pearson_tokens_catds", &c)] {
            match pearson_r(&p, ys) {
                Ok(r) => out.push_str(&format!("{name}\t{r:.6}\n")),
                Err(e) => out.push_str(&format!("{name}\tNA ({e})\n")),
            }
        }
        if let Some(dir) = &a.scatter_dir {
            write_scatter(dir, &records)?;
        }
    }
    match &a.out {
        Some(p) => fs::write(p, out).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{out}"),
    }
    Ok(())
}

fn parse_support(text: &str, alphabet: usize) -> Result<Vec<u32>> {
    let mut out = Vec::new();
    for part in text.split(',').filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((lo, hi)) => {
                let (lo, hi): (u32, u32) = (lo.trim().parse()?, hi.trim().parse()?);
                anyhow::ensure!(lo <= hi, "bad range {part}");
                out.extend(lo..=hi);
            }
            None => out.push(part.trim().parse()?),
        }
    }
    out.sort_unstable();
    out.dedup();
    anyhow::ensure!(!out.is_empty(), "empty support");
    anyhow::ensure!(
        out.iter().all(|&s| (s as usize) < alphabet),
        "support exceeds alphabet size {alphabet}"
    );
    Ok(out)
}

fn cmd_synth_spec(a: SynthSpecArgs) -> Result<()> {
    let spec = if let Some(base) = &a.perturb_from {
        let base = read_language_spec(base)?;
        let mut s = base.perturbed(a.strength, a.seed);
        s.length_min = a.length_min.unwrap_or(s.length_min);
        s.length_max = a.length_max.unwrap_or(s.length_max);
        s
    } else {
        let alphabet = a.alphabet_size.expect("required by clap");
        let support = match &a.support {
            Some(text) => parse_support(text, alphabet)?,
            None => (0..alphabet as u32).collect(),
        };
        let (lo, hi) = (a.length_min.unwrap_or(20), a.length_max.unwrap_or(200));
        if a.uniform {
            LanguageSpec::uniform_over(alphabet, &support, lo, hi, a.seed)
        } else {
            LanguageSpec::random_over(alphabet, &support, a.peakedness, lo, hi, a.seed)
        }
    };
    spec.validate()?;
    fs::write(&a.out, spec.to_json()).with_context(|| format!("writing {}", a.out.display()))?;
    Ok(())
}

/// Nominal frame stride for synthetic durations.
const FRAME_S: f64 = 0.02;

fn synth_outputs(
    clips: &[SymbolSeq],
    alphabet: usize,
    out: &Path,
    manifest_out: Option<&Path>,
    language: &str,
    features: &FeatureOpts,
) -> Result<()> {
    write_symbol_file(out, clips, alphabet)?;
    let mut entries = Vec::with_capacity(clips.len());
    let centroids = match &features.features_dir {
        Some(dir) => {
            create_dir(dir)?;
            let mut rng = ChaCha8Rng::seed_from_u64(features.centroid_seed);
            let data = (0..alphabet * features.dim).map(|_| rng.random_range(-4.0f32..4.0)).collect();
            Some(FeatureMatrix::new(features.dim, data)?)
        }
        None => None,
    };
    for (i, clip) in clips.iter().enumerate() {
        let (feature_path, n_frames) = match (&features.features_dir, &centroids) {
            (Some(dir), Some(c)) => {
                let m = emit_features(
                    &clip.symbols,
                    c,
                    (1, features.max_frames_per_symbol),
                    features.noise_sd,
                    features.centroid_seed.wrapping_add(1 + i as u64),
                )?;
                let path = dir.join(format!("{}.catf", clip.clip_id));
                write_feature_file(&path, &m)?;
                (path.to_string_lossy().into_owned(), m.n_frames())
            }
            _ => (String::new(), clip.symbols.len()),
        };
        entries.push(ClipEntry {
            clip_id: clip.clip_id.clone(),
            feature_path,
            duration_s: n_frames as f64 * FRAME_S,
            language: language.to_string(),
            source_sample_ids: vec![],
        });
    }
    if let Some(path) = manifest_out {
        write_manifest(path, &ClipManifest::new(entries)?)?;
    }
    Ok(())
}

fn cmd_synth_corpus(a: SynthCorpusArgs) -> Result<()> {
    let spec = read_language_spec(&a.spec)?;
    let clips = generate_corpus(&spec, a.n_clips, &a.prefix)?;
    synth_outputs(&clips, spec.alphabet_size, &a.out, a.manifest_out.as_deref(), &a.language, &a.features)
}

fn cmd_synth_mixture(a: SynthMixtureArgs) -> Result<()> {
    let target = read_language_spec(&a.target_spec)?;
    let distractor = read_language_spec(&a.distractor_spec)?;
    let mix = make_mixture(&target, &distractor, a.n_target_like, a.n_distractor)?;
    synth_outputs(
        &mix.clips,
        target.alphabet_size,
        &a.out,
        a.manifest_out.as_deref(),
        &a.language,
        &a.features,
    )?;
    if let Some(path) = &a.labels_out {
        let mut text = String::from("clip_id\ttarget_like\n");
        for (c, &l) in mix.clips.iter().zip(&mix.target_like) {
            text.push_str(&format!("{}\t{}\n", c.clip_id, l));
        }
        fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    if let Some(path) = &a.lid_out {
        let records = mix
            .clips
            .iter()
            .zip(&mix.target_like)
            .enumerate()
            .map(|(i, (c, &like))| {
                let mut rng = ChaCha8Rng::seed_from_u64(target.seed ^ (0x11d0_0000 + i as u64));
                let first = rng.random::<f64>() < if like { 0.7 } else { 0.3 };
                let rank = if first { 1 } else { rng.random_range(2..=5) };
                Ok(LidRecord::new(c.clip_id.clone(), rank, rng.random::<f64>())?)
            })
            .collect::<Result<Vec<_>>>()?;
        write_lid_table(path, &records)?;
    }
    Ok(())
}
