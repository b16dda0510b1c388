//! Patent records and the time-indexed citation graph.
//!
//! The graph is stored as two compressed adjacency arrays. Backward lists
//! (citing -> cited) are sorted by patent index; forward lists
//! (cited -> citing) are sorted by the citer's grant date so that windowed
//! queries reduce to two binary searches.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use chrono::{Datelike, Months, NaiveDate};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Day number used for records with no grant date. Sorts after every real date.
const UNDATED: i32 = i32::MAX;

pub const PATENTS_HEADER: [&str; 6] = [
    "patent_id",
    "grant_date",
    "group_code",
    "novelty_count",
    "is_focal",
    "case_label",
];
pub const CITATIONS_HEADER: [&str; 2] = ["citing_id", "cited_id"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatentRecord {
    pub patent_id: String,
    pub grant_date: Option<NaiveDate>,
    pub group_code: Option<String>,
    /// New keyword combinations (K).
    pub novelty_count: u64,
    /// Utility patent in the scoring population. Citing-only patents
    /// (design and other non-utility grants) are `false`.
    pub is_focal: bool,
    pub case_label: Option<bool>,
}

impl PatentRecord {
    /// Placeholder for an id that only appears in the citations file.
    pub fn implicit(patent_id: impl Into<String>) -> Self {
        PatentRecord {
            patent_id: patent_id.into(),
            grant_date: None,
            group_code: None,
            novelty_count: 0,
            is_focal: false,
            case_label: None,
        }
    }

    pub fn grant_year(&self) -> Option<i32> {
        self.grant_date.map(|d| d.year())
    }
}

/// Successor partition of a focal patent within a forward window.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct SuccessorCounts {
    /// Forward citations to the focal patent (`n_i + n_j`).
    pub f: u64,
    /// Citers of the focal patent that cite none of its prior art.
    pub n_i: u64,
    /// Citers of the focal patent that also cite its prior art.
    pub n_j: u64,
    /// Citers of the prior art that skip the focal patent.
    pub n_k: u64,
}

impl SuccessorCounts {
    pub fn new(n_i: u64, n_j: u64, n_k: u64) -> Self {
        SuccessorCounts {
            f: n_i + n_j,
            n_i,
            n_j,
            n_k,
        }
    }

    /// Builds counts from signed inputs, rejecting negatives.
    pub fn from_signed(n_i: i64, n_j: i64, n_k: i64) -> Result<Self> {
        let conv = |v: i64, name: &str| {
            u64::try_from(v)
                .map_err(|_| Error::invalid(format!("{name} must be non-negative, got {v}")))
        };
        Ok(Self::new(
            conv(n_i, "N_i")?,
            conv(n_j, "N_j")?,
            conv(n_k, "N_k")?,
        ))
    }

    pub fn is_consistent(&self) -> bool {
        self.f == self.n_i + self.n_j
    }
}

/// Bookkeeping produced while building a corpus.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadMetadata {
    pub records: usize,
    pub implicit_records: usize,
    pub edges: usize,
    pub duplicate_edges: usize,
    pub self_citations: usize,
    /// Edges whose citer has no grant date; these never enter a window.
    pub undated_citer_edges: usize,
}

#[derive(Debug, Clone)]
pub struct CitationCorpus {
    records: Vec<PatentRecord>,
    index: HashMap<String, u32>,
    days: Vec<i32>,
    back_off: Vec<usize>,
    back: Vec<u32>,
    fwd_off: Vec<usize>,
    fwd: Vec<u32>,
    metadata: LoadMetadata,
}

pub(crate) fn day_number(d: NaiveDate) -> i32 {
    d.num_days_from_ce()
}

/// Calendar-month addition; month ends clamp (Jan 31 + 1 month = Feb 28/29).
pub fn add_months(d: NaiveDate, months: u32) -> Result<NaiveDate> {
    d.checked_add_months(Months::new(months))
        .ok_or_else(|| Error::invalid(format!("date overflow adding {months} months to {d}")))
}

/// Parses `YYYY-MM-DD` or `YYYY-MM` (mapped to the first of the month).
pub fn parse_date(s: &str) -> Option<NaiveDate> {
    let s = s.trim();
    match s.len() {
        10 => NaiveDate::parse_from_str(s, "%Y-%m-%d").ok(),
        7 => NaiveDate::parse_from_str(&format!("{s}-01"), "%Y-%m-%d").ok(),
        _ => None,
    }
}

impl CitationCorpus {
    /// Builds a corpus from records and `(citing, cited)` id pairs.
    ///
    /// Ids missing from `records` become implicit non-focal records with no
    /// date. Duplicate edges are stored once and self-citations dropped; both
    /// are counted in [`LoadMetadata`].
    pub fn from_parts<I, S>(records: Vec<PatentRecord>, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, S)>,
        S: AsRef<str>,
    {
        let (records, mut index) = dedup_records(records)?;
        let mut records = records;
        let explicit = records.len();
        let mut pairs = Vec::new();
        for (citing, cited) in edges {
            let a = intern(&mut records, &mut index, citing.as_ref());
            let b = intern(&mut records, &mut index, cited.as_ref());
            pairs.push((a, b));
        }
        let implicit = records.len() - explicit;
        let mut corpus = Self::from_indexed(records, pairs)?;
        corpus.index = index;
        corpus.metadata.implicit_records = implicit;
        Ok(corpus)
    }

    /// Builds a corpus from records and index pairs into `records`.
    pub fn from_indexed(records: Vec<PatentRecord>, mut pairs: Vec<(u32, u32)>) -> Result<Self> {
        let n = records.len();
        if n > u32::MAX as usize {
            return Err(Error::invalid("corpus too large"));
        }
        if let Some(&(a, b)) = pairs
            .iter()
            .find(|&&(a, b)| a as usize >= n || b as usize >= n)
        {
            return Err(Error::invalid(format!("edge ({a},{b}) out of range")));
        }
        let mut metadata = LoadMetadata {
            records: n,
            ..Default::default()
        };
        let before = pairs.len();
        pairs.retain(|&(a, b)| a != b);
        metadata.self_citations = before - pairs.len();
        pairs.par_sort_unstable();
        let before = pairs.len();
        pairs.dedup();
        metadata.duplicate_edges = before - pairs.len();
        metadata.edges = pairs.len();

        let days: Vec<i32> = records
            .iter()
            .map(|r| r.grant_date.map_or(UNDATED, day_number))
            .collect();
        metadata.undated_citer_edges = pairs
            .iter()
            .filter(|&&(a, _)| days[a as usize] == UNDATED)
            .count();

        let mut back_off = vec![0usize; n + 1];
        for &(a, _) in &pairs {
            back_off[a as usize + 1] += 1;
        }
        for i in 0..n {
            back_off[i + 1] += back_off[i];
        }
        // pairs are sorted by (citing, cited), so targets land in order.
        let back: Vec<u32> = pairs.iter().map(|&(_, b)| b).collect();

        let mut fwd_off = vec![0usize; n + 1];
        for &(_, b) in &pairs {
            fwd_off[b as usize + 1] += 1;
        }
        for i in 0..n {
            fwd_off[i + 1] += fwd_off[i];
        }
        let mut cursor = fwd_off.clone();
        let mut fwd = vec![0u32; pairs.len()];
        for &(a, b) in &pairs {
            fwd[cursor[b as usize]] = a;
            cursor[b as usize] += 1;
        }
        drop(pairs);
        let mut rest: &mut [u32] = &mut fwd;
        let mut segments = Vec::with_capacity(n);
        for i in 0..n {
            let (seg, tail) = rest.split_at_mut(fwd_off[i + 1] - fwd_off[i]);
            segments.push(seg);
            rest = tail;
        }
        segments
            .into_par_iter()
            .for_each(|seg| seg.sort_unstable_by_key(|&c| (days[c as usize], c)));

        let index = records
            .iter()
            .enumerate()
            .map(|(i, r)| (r.patent_id.clone(), i as u32))
            .collect();
        Ok(CitationCorpus {
            records,
            index,
            days,
            back_off,
            back,
            fwd_off,
            fwd,
            metadata,
        })
    }

    pub fn records(&self) -> &[PatentRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.back.len()
    }

    pub fn metadata(&self) -> &LoadMetadata {
        &self.metadata
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).map(|&i| i as usize)
    }

    pub fn record(&self, idx: usize) -> &PatentRecord {
        &self.records[idx]
    }

    pub fn get(&self, id: &str) -> Option<&PatentRecord> {
        self.index_of(id).map(|i| &self.records[i])
    }

    /// Patents cited by `idx`, ascending by index.
    pub fn backward(&self, idx: usize) -> &[u32] {
        &self.back[self.back_off[idx]..self.back_off[idx + 1]]
    }

    /// Patents citing `idx`, ordered by citer grant date (undated last).
    pub fn forward(&self, idx: usize) -> &[u32] {
        &self.fwd[self.fwd_off[idx]..self.fwd_off[idx + 1]]
    }

    /// All `(citing, cited)` index pairs in citing order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.records.len())
            .flat_map(move |a| self.backward(a).iter().map(move |&b| (a, b as usize)))
    }

    /// Citers of `idx` whose grant day lies in `(after, until]`.
    pub(crate) fn citers_between(&self, idx: usize, after: i32, until: i32) -> &[u32] {
        let all = self.forward(idx);
        let lo = all.partition_point(|&c| self.days[c as usize] <= after);
        let hi = all.partition_point(|&c| self.days[c as usize] <= until);
        if hi <= lo {
            &[]
        } else {
            &all[lo..hi]
        }
    }

    /// Focal index check shared by every per-patent query.
    pub(crate) fn focal_index(&self, id: &str) -> Result<(usize, NaiveDate)> {
        let idx = self
            .index_of(id)
            .ok_or_else(|| Error::UnknownPatent(id.to_string()))?;
        let rec = &self.records[idx];
        if !rec.is_focal {
            return Err(Error::NotFocal(id.to_string()));
        }
        let date = rec
            .grant_date
            .ok_or_else(|| Error::MissingDate(id.to_string()))?;
        Ok((idx, date))
    }

    /// Indices of focal patents in record order.
    pub fn focal_indices(&self) -> Vec<usize> {
        (0..self.records.len())
            .filter(|&i| self.records[i].is_focal)
            .collect()
    }
}

fn dedup_records(records: Vec<PatentRecord>) -> Result<(Vec<PatentRecord>, HashMap<String, u32>)> {
    let mut index: HashMap<String, u32> = HashMap::with_capacity(records.len());
    let mut out: Vec<PatentRecord> = Vec::with_capacity(records.len());
    for rec in records {
        if let Some(&i) = index.get(&rec.patent_id) {
            if out[i as usize] != rec {
                return Err(Error::DuplicatePatent(rec.patent_id));
            }
            continue;
        }
        index.insert(rec.patent_id.clone(), out.len() as u32);
        out.push(rec);
    }
    Ok((out, index))
}

fn intern(records: &mut Vec<PatentRecord>, index: &mut HashMap<String, u32>, id: &str) -> u32 {
    if let Some(&i) = index.get(id) {
        return i;
    }
    let i = records.len() as u32;
    records.push(PatentRecord::implicit(id));
    index.insert(id.to_string(), i);
    i
}

/// Reusable marker arrays for partition queries on one thread.
pub struct PartitionScratch {
    epoch: u32,
    in_prior: Vec<u32>,
    seen: Vec<u32>,
}

impl PartitionScratch {
    pub fn new(corpus: &CitationCorpus) -> Self {
        PartitionScratch {
            epoch: 0,
            in_prior: vec![0; corpus.len()],
            seen: vec![0; corpus.len()],
        }
    }

    fn next_epoch(&mut self) -> u32 {
        if self.epoch == u32::MAX {
            self.in_prior.fill(0);
            self.seen.fill(0);
            self.epoch = 0;
        }
        self.epoch += 1;
        self.epoch
    }
}

/// Window end day for a focal patent granted on `grant`.
fn window_end(grant: NaiveDate, window_months: u32) -> Result<i32> {
    Ok(day_number(add_months(grant, window_months)?))
}

/// Successor partition of `focal` using citers granted within
/// `window_months` after the focal grant date.
pub fn successor_partition(
    corpus: &CitationCorpus,
    focal: &str,
    window_months: u32,
) -> Result<SuccessorCounts> {
    if window_months == 0 {
        return Err(Error::invalid("window_months must be positive"));
    }
    let (idx, grant) = corpus.focal_index(focal)?;
    let mut scratch = PartitionScratch::new(corpus);
    Ok(partition_at(
        corpus,
        idx,
        day_number(grant),
        window_end(grant, window_months)?,
        &mut scratch,
    ))
}

pub(crate) fn partition_at(
    corpus: &CitationCorpus,
    idx: usize,
    start: i32,
    end: i32,
    scratch: &mut PartitionScratch,
) -> SuccessorCounts {
    let epoch = scratch.next_epoch();
    let prior = corpus.backward(idx);
    for &b in prior {
        scratch.in_prior[b as usize] = epoch;
    }
    let (mut n_i, mut n_j, mut n_k) = (0u64, 0u64, 0u64);
    for &c in corpus.citers_between(idx, start, end) {
        scratch.seen[c as usize] = epoch;
        if corpus
            .backward(c as usize)
            .iter()
            .any(|&x| scratch.in_prior[x as usize] == epoch)
        {
            n_j += 1;
        } else {
            n_i += 1;
        }
    }
    for &b in prior {
        for &c in corpus.citers_between(b as usize, start, end) {
            if scratch.seen[c as usize] != epoch {
                scratch.seen[c as usize] = epoch;
                n_k += 1;
            }
        }
    }
    SuccessorCounts::new(n_i, n_j, n_k)
}

/// Successor partitions for every focal patent, in record order.
///
/// Focal patents without a grant date or group code cannot occur in a loaded
/// corpus; synthetic builders must uphold the same rule.
pub fn partition_all(
    corpus: &CitationCorpus,
    window_months: u32,
) -> Result<Vec<(usize, SuccessorCounts)>> {
    if window_months == 0 {
        return Err(Error::invalid("window_months must be positive"));
    }
    let focal = corpus.focal_indices();
    let bounds: Vec<(usize, i32, i32)> = focal
        .iter()
        .map(|&i| {
            let rec = corpus.record(i);
            let grant = rec
                .grant_date
                .ok_or_else(|| Error::MissingDate(rec.patent_id.clone()))?;
            Ok((i, day_number(grant), window_end(grant, window_months)?))
        })
        .collect::<Result<_>>()?;
    Ok(bounds
        .par_iter()
        .map_init(
            || PartitionScratch::new(corpus),
            |scratch, &(i, start, end)| (i, partition_at(corpus, i, start, end, scratch)),
        )
        .collect())
}

/// Distinct citers of `focal` granted after it and no later than `horizon`.
pub fn long_term_citations(
    corpus: &CitationCorpus,
    focal: &str,
    horizon: NaiveDate,
) -> Result<u64> {
    let idx = corpus
        .index_of(focal)
        .ok_or_else(|| Error::UnknownPatent(focal.to_string()))?;
    let grant = corpus.records[idx]
        .grant_date
        .ok_or_else(|| Error::MissingDate(focal.to_string()))?;
    if horizon < grant {
        return Err(Error::invalid(format!(
            "horizon {horizon} precedes grant date {grant} of `{focal}`"
        )));
    }
    Ok(corpus
        .citers_between(idx, day_number(grant), day_number(horizon))
        .len() as u64)
}

/// Nearest-rank quantile (`rank = ceil(q * n)`) of unsorted values.
pub fn nearest_rank_quantile(values: &[f64], quantile: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyInput("quantile of an empty sequence"));
    }
    if !(0.0..=1.0).contains(&quantile) {
        return Err(Error::invalid(format!("quantile {quantile} outside [0,1]")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted[nearest_rank(sorted.len(), quantile) - 1])
}

/// One-based nearest rank for `n` sorted values.
pub(crate) fn nearest_rank(n: usize, quantile: f64) -> usize {
    ((quantile * n as f64).ceil() as usize).clamp(1, n)
}

/// Caps values strictly above the nearest-rank `quantile` at that quantile.
pub fn winsorize_upper(values: &[f64], quantile: f64) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::EmptyInput("winsorize an empty sequence"));
    }
    if !(quantile > 0.0 && quantile < 1.0) {
        return Err(Error::invalid(format!(
            "winsorization quantile {quantile} outside (0,1)"
        )));
    }
    let cap = nearest_rank_quantile(values, quantile)?;
    Ok(values
        .iter()
        .map(|&v| if v > cap { cap } else { v })
        .collect())
}

fn parse_error(file: &Path, line: u64, column: &str, message: impl Into<String>) -> Error {
    Error::Parse {
        file: file.to_path_buf(),
        line,
        column: column.to_string(),
        message: message.into(),
    }
}

fn open_csv(path: &Path, expected: &[&str]) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| parse_error(path, 1, "header", e.to_string()))?;
    let got: Vec<&str> = headers.iter().map(str::trim).collect();
    if got != expected {
        return Err(parse_error(
            path,
            1,
            "header",
            format!(
                "expected `{}`, found `{}`",
                expected.join(","),
                got.join(",")
            ),
        ));
    }
    Ok(reader)
}

fn parse_bool(s: &str) -> Option<bool> {
    match s.trim() {
        "0" => Some(false),
        "1" => Some(true),
        _ => None,
    }
}

pub fn read_patents(path: &Path) -> Result<Vec<PatentRecord>> {
    let mut reader = open_csv(path, &PATENTS_HEADER)?;
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_error(path, line, "row", e.to_string())
        })?;
        let line = row.position().map_or(0, |p| p.line());
        let field = |i: usize| row.get(i).unwrap_or("").trim();
        let col = |i: usize| PATENTS_HEADER[i];

        let patent_id = field(0);
        if patent_id.is_empty() {
            return Err(parse_error(path, line, col(0), "empty patent id"));
        }
        let is_focal = parse_bool(field(4)).ok_or_else(|| {
            parse_error(
                path,
                line,
                col(4),
                format!("expected 0 or 1, found `{}`", field(4)),
            )
        })?;
        let grant_date = match field(1) {
            "" => None,
            s => Some(parse_date(s).ok_or_else(|| {
                parse_error(path, line, col(1), format!("unparsable date `{s}`"))
            })?),
        };
        let group_code = match field(2) {
            "" => None,
            s => Some(s.to_string()),
        };
        if is_focal && grant_date.is_none() {
            return Err(parse_error(
                path,
                line,
                col(1),
                "focal patent without grant date",
            ));
        }
        if is_focal && group_code.is_none() {
            return Err(parse_error(
                path,
                line,
                col(2),
                "focal patent without group code",
            ));
        }
        let novelty_count = field(3).parse::<u64>().map_err(|_| {
            parse_error(
                path,
                line,
                col(3),
                format!("expected a non-negative integer, found `{}`", field(3)),
            )
        })?;
        let case_label = match field(5) {
            "" => None,
            s => Some(parse_bool(s).ok_or_else(|| {
                parse_error(
                    path,
                    line,
                    col(5),
                    format!("expected 0, 1 or empty, found `{s}`"),
                )
            })?),
        };
        out.push(PatentRecord {
            patent_id: patent_id.to_string(),
            grant_date,
            group_code,
            novelty_count,
            is_focal,
            case_label,
        });
    }
    Ok(out)
}

pub fn read_citations(path: &Path) -> Result<Vec<(String, String)>> {
    let mut reader = open_csv(path, &CITATIONS_HEADER)?;
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_error(path, line, "row", e.to_string())
        })?;
        let line = row.position().map_or(0, |p| p.line());
        let citing = row.get(0).unwrap_or("").trim();
        let cited = row.get(1).unwrap_or("").trim();
        if citing.is_empty() {
            return Err(parse_error(path, line, CITATIONS_HEADER[0], "empty id"));
        }
        if cited.is_empty() {
            return Err(parse_error(path, line, CITATIONS_HEADER[1], "empty id"));
        }
        out.push((citing.to_string(), cited.to_string()));
    }
    Ok(out)
}

pub fn load_corpus(patents_file: &Path, citations_file: &Path) -> Result<CitationCorpus> {
    let records = read_patents(patents_file)?;
    let edges = read_citations(citations_file)?;
    CitationCorpus::from_parts(records, edges)
}

fn fmt_bool(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

/// Writes the corpus in the same two-file format [`load_corpus`] reads.
pub fn write_corpus(
    corpus: &CitationCorpus,
    patents_file: &Path,
    citations_file: &Path,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(patents_file).map_err(|e| Error::io(patents_file, e))?);
    writeln!(w, "{}", PATENTS_HEADER.join(",")).map_err(|e| Error::io(patents_file, e))?;
    for r in &corpus.records {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.patent_id,
            r.grant_date
                .map(|d| d.format("%Y-%m-%d").to_string())
                .unwrap_or_default(),
            r.group_code.as_deref().unwrap_or(""),
            r.novelty_count,
            fmt_bool(r.is_focal),
            r.case_label.map(fmt_bool).unwrap_or(""),
        )
        .map_err(|e| Error::io(patents_file, e))?;
    }
    w.flush().map_err(|e| Error::io(patents_file, e))?;

    let mut w =
        BufWriter::new(File::create(citations_file).map_err(|e| Error::io(citations_file, e))?);
    writeln!(w, "{}", CITATIONS_HEADER.join(",")).map_err(|e| Error::io(citations_file, e))?;
    for (a, b) in corpus.edges() {
        writeln!(
            w,
            "{},{}",
            corpus.records[a].patent_id, corpus.records[b].patent_id
        )
        .map_err(|e| Error::io(citations_file, e))?;
    }
    w.flush().map_err(|e| Error::io(citations_file, e))
}
