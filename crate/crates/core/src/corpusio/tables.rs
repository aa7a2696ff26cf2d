//! Tab-separated tables: frequency vectors, score tables, LID tables.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use super::{read_text, write_bytes};
use crate::error::{Error, Result};
use crate::scorer::{FreqVector, ScoreRecord};
use crate::selector::LidRecord;

const FREQ_MAGIC: &str = "catds-freq-vector";
pub const SCORE_HEADER: &str = "clip_id\ttoken_count\traw_similarity\tfitted_q\tcatds\tclamped";
pub const LID_HEADER: &str = "clip_id\trank\tprob";

/// Sparse text form: a `catds-freq-vector<TAB>V` header, then one
/// `id<TAB>count` line per nonzero entry in ascending id order.
pub fn render_freq_vector(v: &FreqVector) -> String {
    let mut out = format!("{FREQ_MAGIC}\t{}\n", v.dim());
    for (id, &c) in v.counts().iter().enumerate() {
        if c > 0 {
            let _ = writeln!(out, "{id}\t{c}");
        }
    }
    out
}

pub fn parse_freq_vector(text: &str) -> Result<FreqVector> {
    const WHAT: &str = "frequency vector";
    // Dense allocation is bounded so a hostile header cannot exhaust memory.
    const MAX_DIM: usize = 1 << 24;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse(WHAT, 1, "missing header"))?;
    let dim = match header.split_once('\t') {
        Some((FREQ_MAGIC, d)) => d
            .parse::<usize>()
            .map_err(|_| Error::parse(WHAT, 1, format!("bad dimension {d:?}")))?,
        _ => return Err(Error::parse(WHAT, 1, "bad header")),
    };
    if dim == 0 || dim > MAX_DIM {
        return Err(Error::parse(WHAT, 1, format!("dimension {dim} out of range")));
    }
    let mut counts = vec![0u64; dim];
    let mut last: Option<usize> = None;
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.is_empty() {
            continue;
        }
        let (id, count) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(WHAT, line_no, "expected id<TAB>count"))?;
        let id: usize = id
            .parse()
            .map_err(|_| Error::parse(WHAT, line_no, format!("bad id {id:?}")))?;
        let count: u64 = count
            .parse()
            .map_err(|_| Error::parse(WHAT, line_no, format!("bad count {count:?}")))?;
        if id >= dim {
            return Err(Error::parse(WHAT, line_no, format!("id {id} >= dimension {dim}")));
        }
        if last.is_some_and(|l| id <= l) {
            return Err(Error::parse(WHAT, line_no, "ids must be strictly ascending"));
        }
        last = Some(id);
        counts[id] = count;
    }
    Ok(FreqVector::from_counts(counts))
}

pub fn read_freq_vector(path: impl AsRef<Path>) -> Result<FreqVector> {
    parse_freq_vector(&read_text(path.as_ref())?)
}

pub fn write_freq_vector(path: impl AsRef<Path>, v: &FreqVector) -> Result<()> {
    write_bytes(path.as_ref(), render_freq_vector(v).as_bytes())
}

fn parse_f64(what: &'static str, line_no: usize, field: &str, name: &str) -> Result<f64> {
    let v: f64 = field
        .parse()
        .map_err(|_| Error::parse(what, line_no, format!("bad {name} {field:?}")))?;
    if !v.is_finite() {
        return Err(Error::parse(what, line_no, format!("non-finite {name}")));
    }
    Ok(v)
}

fn check_id(what: &'static str, line_no: usize, id: &str, seen: &mut HashSet<String>) -> Result<()> {
    if id.is_empty() {
        return Err(Error::parse(what, line_no, "empty clip id"));
    }
    if !seen.insert(id.to_string()) {
        return Err(Error::DuplicateClip {
            clip_id: id.to_string(),
            line: line_no,
        });
    }
    Ok(())
}

/// Score table with a fixed header row. Floats use the shortest decimal
/// form that parses back to the same bits.
pub fn render_score_table(records: &[ScoreRecord]) -> String {
    let mut out = String::from(SCORE_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            r.clip_id, r.token_count, r.raw_similarity, r.fitted_q, r.catds, r.clamped
        );
    }
    out
}

pub fn parse_score_table(text: &str) -> Result<Vec<ScoreRecord>> {
    const WHAT: &str = "score table";
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == SCORE_HEADER => {}
        _ => return Err(Error::parse(WHAT, 1, "missing or wrong header")),
    }
    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 6 {
            return Err(Error::parse(
                WHAT,
                line_no,
                format!("expected 6 fields, found {}", fields.len()),
            ));
        }
        check_id(WHAT, line_no, fields[0], &mut seen)?;
        let token_count: u64 = fields[1]
            .parse()
            .map_err(|_| Error::parse(WHAT, line_no, format!("bad token_count {:?}", fields[1])))?;
        let clamped = match fields[5] {
            "true" | "1" => true,
            "false" | "0" => false,
            other => return Err(Error::parse(WHAT, line_no, format!("bad clamped {other:?}"))),
        };
        records.push(ScoreRecord {
            clip_id: fields[0].to_string(),
            token_count,
            raw_similarity: parse_f64(WHAT, line_no, fields[2], "raw_similarity")?,
            fitted_q: parse_f64(WHAT, line_no, fields[3], "fitted_q")?,
            catds: parse_f64(WHAT, line_no, fields[4], "catds")?,
            clamped,
        });
    }
    Ok(records)
}

pub fn read_score_table(path: impl AsRef<Path>) -> Result<Vec<ScoreRecord>> {
    parse_score_table(&read_text(path.as_ref())?)
}

pub fn write_score_table(path: impl AsRef<Path>, records: &[ScoreRecord]) -> Result<()> {
    write_bytes(path.as_ref(), render_score_table(records).as_bytes())
}

pub fn render_lid_table(records: &[LidRecord]) -> String {
    let mut out = String::from(LID_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(out, "{}\t{}\t{}", r.clip_id, r.rank, r.prob);
    }
    out
}

/// LID table `clip_id<TAB>rank<TAB>prob`; the header row is optional.
pub fn parse_lid_table(text: &str) -> Result<Vec<LidRecord>> {
    const WHAT: &str = "LID table";
    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.is_empty() || (idx == 0 && line == LID_HEADER) {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::parse(
                WHAT,
                line_no,
                format!("expected 3 fields, found {}", fields.len()),
            ));
        }
        check_id(WHAT, line_no, fields[0], &mut seen)?;
        let rank: u32 = fields[1]
            .parse()
            .map_err(|_| Error::parse(WHAT, line_no, format!("bad rank {:?}", fields[1])))?;
        let prob = parse_f64(WHAT, line_no, fields[2], "prob")?;
        let record = LidRecord::new(fields[0], rank, prob)
            .map_err(|e| Error::parse(WHAT, line_no, e.to_string()))?;
        records.push(record);
    }
    Ok(records)
}

pub fn read_lid_table(path: impl AsRef<Path>) -> Result<Vec<LidRecord>> {
    parse_lid_table(&read_text(path.as_ref())?)
}

pub fn write_lid_table(path: impl AsRef<Path>, records: &[LidRecord]) -> Result<()> {
    write_bytes(path.as_ref(), render_lid_table(records).as_bytes())
}
