//! Group-wise empirical-CDF percentile ranks and score-table assembly.

use std::collections::HashMap;
use std::hash::Hash;

use chrono::{Datelike, NaiveDate};
use rayon::prelude::*;

use crate::corpus::{partition_all, winsorize_upper, CitationCorpus, SuccessorCounts};
use crate::error::{Error, Result};
use crate::indices::{disruption_indices, IndexChoice, IndexSet};

/// Which records are compared with each other when ranking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Grouping {
    #[default]
    Industry,
    Year,
    IndustryYear,
}

impl Grouping {
    pub fn key(self, group_code: &str, year: i32) -> String {
        match self {
            Grouping::Industry => group_code.to_string(),
            Grouping::Year => year.to_string(),
            Grouping::IndustryYear => format!("{group_code}|{year}"),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Grouping::Industry => "industry",
            Grouping::Year => "year",
            Grouping::IndustryYear => "industry-year",
        }
    }
}

impl std::str::FromStr for Grouping {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "industry" => Ok(Grouping::Industry),
            "year" => Ok(Grouping::Year),
            "industry-year" => Ok(Grouping::IndustryYear),
            other => Err(Error::Usage(format!(
                "unknown grouping `{other}` (expected industry, year or industry-year)"
            ))),
        }
    }
}

/// Treatment of rows whose raw value is undefined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UndefinedPolicy {
    /// Left out of the ranking population and of the output.
    #[default]
    Exclude,
    /// Ranked below every defined value of the group (ties among themselves).
    RankLowest,
}

impl UndefinedPolicy {
    pub fn name(self) -> &'static str {
        match self {
            UndefinedPolicy::Exclude => "exclude",
            UndefinedPolicy::RankLowest => "rank-lowest",
        }
    }
}

impl std::str::FromStr for UndefinedPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exclude" => Ok(UndefinedPolicy::Exclude),
            "rank-lowest" => Ok(UndefinedPolicy::RankLowest),
            other => Err(Error::Usage(format!(
                "unknown undefined-value policy `{other}` (expected exclude or rank-lowest)"
            ))),
        }
    }
}

/// `le` of the `n` group members have a value at most this row's value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rank {
    pub le: u64,
    pub n: u64,
}

impl Rank {
    pub fn value(self) -> f64 {
        self.le as f64 / self.n as f64
    }
}

/// Percentile rank `|{j in group: v_j <= v_i}| / n` for every position.
///
/// `values[i]` and `groups[i]` describe the same row. Rows dropped under
/// [`UndefinedPolicy::Exclude`] get `None`.
pub fn percentile_rank<K>(
    values: &[Option<f64>],
    groups: &[K],
    policy: UndefinedPolicy,
) -> Result<Vec<Option<Rank>>>
where
    K: Hash + Eq + Sync,
{
    if values.len() != groups.len() {
        return Err(Error::invalid(format!(
            "{} values but {} group labels",
            values.len(),
            groups.len()
        )));
    }
    if values.iter().flatten().any(|v| v.is_nan()) {
        return Err(Error::invalid("NaN raw value"));
    }
    let mut members: HashMap<&K, Vec<usize>> = HashMap::new();
    for (i, k) in groups.iter().enumerate() {
        members.entry(k).or_default().push(i);
    }
    let members: Vec<Vec<usize>> = members.into_values().collect();
    let ranked: Vec<Vec<(usize, Option<Rank>)>> = members
        .par_iter()
        .map(|rows| rank_group(values, rows, policy))
        .collect();
    let mut out = vec![None; values.len()];
    for (i, r) in ranked.into_iter().flatten() {
        out[i] = r;
    }
    Ok(out)
}

fn rank_group(
    values: &[Option<f64>],
    rows: &[usize],
    policy: UndefinedPolicy,
) -> Vec<(usize, Option<Rank>)> {
    let mut defined: Vec<f64> = rows.iter().filter_map(|&i| values[i]).collect();
    defined.sort_by(f64::total_cmp);
    let undefined = (rows.len() - defined.len()) as u64;
    let (n, below) = match policy {
        UndefinedPolicy::Exclude => (defined.len() as u64, 0),
        UndefinedPolicy::RankLowest => (rows.len() as u64, undefined),
    };
    rows.iter()
        .map(|&i| {
            let rank = match (values[i], policy) {
                (Some(v), _) => Some(Rank {
                    le: below + defined.partition_point(|&x| x <= v) as u64,
                    n,
                }),
                (None, UndefinedPolicy::RankLowest) => Some(Rank { le: undefined, n }),
                (None, UndefinedPolicy::Exclude) => None,
            };
            (i, rank)
        })
        .collect()
}

/// Which raw feature columns are winsorized, and at what upper quantile.
#[derive(Debug, Clone, PartialEq)]
pub struct WinsorConfig {
    pub quantile: f64,
    /// Flags for x1 (F), x2 (K) and x3 (index).
    pub columns: [bool; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreConfig {
    pub window_months: u32,
    pub index: IndexChoice,
    pub grouping: Grouping,
    pub winsor: Option<WinsorConfig>,
    pub undefined_policy: UndefinedPolicy,
    pub min_group_size: usize,
    /// Restrict the scored population to grant dates in this closed range.
    pub date_range: Option<(NaiveDate, NaiveDate)>,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        ScoreConfig {
            window_months: 60,
            index: IndexChoice::Cd,
            grouping: Grouping::Industry,
            winsor: None,
            undefined_policy: UndefinedPolicy::Exclude,
            min_group_size: 30,
            date_range: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RowFlags {
    /// Ranked within a group smaller than the configured minimum.
    pub small_group: bool,
    pub x3_undefined: bool,
}

impl RowFlags {
    pub fn render(&self) -> String {
        let mut parts = Vec::new();
        if self.small_group {
            parts.push("small_group");
        }
        if self.x3_undefined {
            parts.push("x3_undefined");
        }
        parts.join(";")
    }

    pub fn parse(s: &str) -> Result<Self> {
        let mut f = RowFlags::default();
        for part in s.split(';').filter(|p| !p.is_empty()) {
            match part {
                "small_group" => f.small_group = true,
                "x3_undefined" => f.x3_undefined = true,
                other => return Err(Error::invalid(format!("unknown flag `{other}`"))),
            }
        }
        Ok(f)
    }
}

/// One focal patent with its raw features, normalized scores and score.
///
/// Rows read back from a score file carry no successor counts or indices.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub patent_id: String,
    pub group_code: String,
    pub grant_year: i32,
    pub grant_date: Option<NaiveDate>,
    pub counts: Option<SuccessorCounts>,
    pub indices: Option<IndexSet>,
    pub case_label: Option<bool>,
    /// Forward citations (possibly winsorized).
    pub x1: f64,
    /// Novelty count (possibly winsorized).
    pub x2: f64,
    /// Chosen disruption index (possibly winsorized).
    pub x3: Option<f64>,
    pub g: Option<[f64; 3]>,
    pub flags: RowFlags,
    pub dflex: Option<f64>,
}

impl ScoreRow {
    /// Raw windowed forward citations; falls back to `x1` for file rows.
    pub fn forward_citations(&self) -> f64 {
        self.counts.map_or(self.x1, |c| c.f as f64)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreMetadata {
    pub focal: usize,
    pub scored: usize,
    pub excluded_undefined: usize,
    pub outside_date_range: usize,
    pub small_groups: Vec<(String, usize)>,
    pub winsorized: [usize; 3],
    pub undated_citer_edges: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    /// Every focal patent in the date range, ordered by patent id.
    pub rows: Vec<ScoreRow>,
    pub metadata: ScoreMetadata,
}

impl ScoreTable {
    /// Rows that received normalized scores.
    pub fn scored(&self) -> impl Iterator<Item = &ScoreRow> {
        self.rows.iter().filter(|r| r.g.is_some())
    }
}

fn winsorize_column(values: &mut [Option<f64>], quantile: f64) -> Result<usize> {
    let defined: Vec<f64> = values.iter().flatten().copied().collect();
    if defined.is_empty() {
        return Ok(0);
    }
    let capped = winsorize_upper(&defined, quantile)?;
    let mut changed = 0;
    let mut it = capped.into_iter();
    for v in values.iter_mut().flatten() {
        let c = it.next().expect("same length");
        if c != *v {
            changed += 1;
            *v = c;
        }
    }
    Ok(changed)
}

/// Partitions, indices, optional winsorization and percentile ranks for
/// every focal patent of the corpus.
pub fn assemble_scores(corpus: &CitationCorpus, config: &ScoreConfig) -> Result<ScoreTable> {
    let partitions = partition_all(corpus, config.window_months)?;
    scores_from_partitions(corpus, &partitions, config)
}

/// As [`assemble_scores`], reusing partitions from [`partition_all`] at
/// `config.window_months`.
pub fn scores_from_partitions(
    corpus: &CitationCorpus,
    partitions: &[(usize, SuccessorCounts)],
    config: &ScoreConfig,
) -> Result<ScoreTable> {
    let mut metadata = ScoreMetadata {
        focal: partitions.len(),
        undated_citer_edges: corpus.metadata().undated_citer_edges,
        ..Default::default()
    };
    let mut rows = Vec::with_capacity(partitions.len());
    for &(idx, counts) in partitions {
        let rec = corpus.record(idx);
        let date = rec.grant_date.expect("focal records are dated");
        if let Some((from, to)) = config.date_range {
            if date < from || date > to {
                metadata.outside_date_range += 1;
                continue;
            }
        }
        let indices = disruption_indices(&counts)?;
        let x3 = config.index.pick(&indices);
        rows.push(ScoreRow {
            patent_id: rec.patent_id.clone(),
            group_code: rec.group_code.clone().expect("focal records have a group"),
            grant_year: date.year(),
            grant_date: Some(date),
            counts: Some(counts),
            indices: Some(indices),
            case_label: rec.case_label,
            x1: counts.f as f64,
            x2: rec.novelty_count as f64,
            x3,
            g: None,
            flags: RowFlags {
                small_group: false,
                x3_undefined: x3.is_none(),
            },
            dflex: None,
        });
    }
    rows.sort_by(|a, b| a.patent_id.cmp(&b.patent_id));

    let mut columns: [Vec<Option<f64>>; 3] = [
        rows.iter().map(|r| Some(r.x1)).collect(),
        rows.iter().map(|r| Some(r.x2)).collect(),
        rows.iter().map(|r| r.x3).collect(),
    ];
    if let Some(w) = &config.winsor {
        for (s, col) in columns.iter_mut().enumerate() {
            if w.columns[s] {
                metadata.winsorized[s] = winsorize_column(col, w.quantile)?;
            }
        }
    }
    for (r, ((a, b), c)) in rows
        .iter_mut()
        .zip(columns[0].iter().zip(&columns[1]).zip(&columns[2]))
    {
        r.x1 = a.expect("x1 defined");
        r.x2 = b.expect("x2 defined");
        r.x3 = *c;
    }

    // Under Exclude, a row with undefined x3 leaves every ranking population.
    let population: Vec<usize> = (0..rows.len())
        .filter(|&i| config.undefined_policy == UndefinedPolicy::RankLowest || rows[i].x3.is_some())
        .collect();
    metadata.excluded_undefined = rows.len() - population.len();
    let keys: Vec<String> = population
        .iter()
        .map(|&i| config.grouping.key(&rows[i].group_code, rows[i].grant_year))
        .collect();
    let mut ranks = Vec::with_capacity(3);
    for col in &columns {
        let vals: Vec<Option<f64>> = population.iter().map(|&i| col[i]).collect();
        ranks.push(percentile_rank(&vals, &keys, config.undefined_policy)?);
    }

    let mut sizes: HashMap<&str, usize> = HashMap::new();
    for k in &keys {
        *sizes.entry(k.as_str()).or_default() += 1;
    }
    for (p, &i) in population.iter().enumerate() {
        let g = [&ranks[0][p], &ranks[1][p], &ranks[2][p]]
            .map(|r| r.expect("population rows are ranked").value());
        rows[i].g = Some(g);
        rows[i].flags.small_group = sizes[keys[p].as_str()] < config.min_group_size;
    }
    let mut small: Vec<(String, usize)> = sizes
        .into_iter()
        .filter(|&(_, n)| n < config.min_group_size)
        .map(|(k, n)| (k.to_string(), n))
        .collect();
    small.sort();
    metadata.small_groups = small;
    metadata.scored = population.len();
    Ok(ScoreTable { rows, metadata })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ranks(values: &[f64], groups: &[u8]) -> Vec<f64> {
        let vals: Vec<Option<f64>> = values.iter().map(|&v| Some(v)).collect();
        percentile_rank(&vals, groups, UndefinedPolicy::Exclude)
            .unwrap()
            .into_iter()
            .map(|r| r.unwrap().value())
            .collect()
    }

    #[test]
    fn single_group() {
        assert_eq!(
            ranks(&[1.0, 2.0, 3.0], &[0, 0, 0]),
            vec![1.0 / 3.0, 2.0 / 3.0, 1.0]
        );
    }

    #[test]
    fn ties_share_upper_rank() {
        assert_eq!(
            ranks(&[0.0, 0.0, 5.0], &[0, 0, 0]),
            vec![2.0 / 3.0, 2.0 / 3.0, 1.0]
        );
    }

    #[test]
    fn groups_are_ranked_separately() {
        assert_eq!(
            ranks(&[1.0, 9.0, 9.0, 1.0], &[0, 0, 1, 1]),
            vec![0.5, 1.0, 1.0, 0.5]
        );
    }

    #[test]
    fn six_or_fewer_semantics() {
        // 4 of 5 patents have 6 or fewer citations.
        let r = ranks(&[2.0, 6.0, 6.0, 4.0, 11.0], &[0; 5]);
        assert_eq!(r[1], 0.8);
        assert_eq!(r[2], 0.8);
    }

    #[test]
    fn undefined_policies() {
        let vals = [Some(1.0), None, Some(3.0)];
        let ex = percentile_rank(&vals, &[0, 0, 0], UndefinedPolicy::Exclude).unwrap();
        assert_eq!(ex[1], None);
        assert_eq!(ex[0], Some(Rank { le: 1, n: 2 }));
        let low = percentile_rank(&vals, &[0, 0, 0], UndefinedPolicy::RankLowest).unwrap();
        assert_eq!(low[1], Some(Rank { le: 1, n: 3 }));
        assert_eq!(low[0], Some(Rank { le: 2, n: 3 }));
        assert_eq!(low[2], Some(Rank { le: 3, n: 3 }));
    }

    #[test]
    fn mismatched_lengths_and_nan_rejected() {
        assert!(percentile_rank(&[Some(1.0)], &[0, 1], UndefinedPolicy::Exclude).is_err());
        assert!(percentile_rank(&[Some(f64::NAN)], &[0], UndefinedPolicy::Exclude).is_err());
    }

    #[test]
    fn parse_options() {
        assert_eq!(
            "industry-year".parse::<Grouping>().unwrap(),
            Grouping::IndustryYear
        );
        assert!("decade".parse::<Grouping>().is_err());
        assert_eq!(
            RowFlags::parse("small_group").unwrap().render(),
            "small_group"
        );
        assert_eq!(RowFlags::parse("").unwrap(), RowFlags::default());
    }
}
