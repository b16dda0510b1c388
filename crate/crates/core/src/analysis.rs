//! Diagnostic tables, histograms, validation bins, trend series, a logistic
//! regression and single-patent lookups over score tables.
//!
//! Quantiles are nearest-rank (`ceil(p * n)`) on sorted values throughout.

use std::collections::BTreeMap;

use chrono::{Datelike, NaiveDate};
use nalgebra::{DMatrix, DVector};
use statrs::function::erf::erfc;

use crate::corpus::{add_months, long_term_citations, nearest_rank, CitationCorpus};
use crate::error::{Error, Result};
use crate::indices::IndexChoice;
use crate::normalize::ScoreRow;

pub const DIMENSION_NAMES: [&str; 3] = ["impact", "novelty", "disruptiveness"];

/// Column a threshold or histogram is taken over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Measure {
    Dflex,
    Index(IndexChoice),
    Mcd,
}

impl Measure {
    pub fn value(self, row: &ScoreRow) -> Option<f64> {
        match self {
            Measure::Dflex => row.dflex,
            Measure::Index(c) => row.indices.as_ref().and_then(|s| c.pick(s)),
            Measure::Mcd => row.indices.as_ref().and_then(|s| s.mcd),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Measure::Dflex => "dflex",
            Measure::Index(c) => c.name(),
            Measure::Mcd => "mcd",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Selection {
    /// Value at least `tau`.
    Absolute(f64),
    /// Value at least the nearest-rank `p`-quantile.
    Percentile(f64),
}

/// Statistics over one side of a threshold split. `None` marks statistics
/// of an empty selection.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdSummary {
    pub n_selected: usize,
    pub share_selected: f64,
    pub share_f_below_5: Option<f64>,
    pub mean_f: Option<f64>,
    pub median_f: Option<f64>,
    pub mean_k: Option<f64>,
    pub median_k: Option<f64>,
    pub mean_x3: Option<f64>,
    pub median_x3: Option<f64>,
    pub mean_g: [Option<f64>; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdReport {
    pub label: String,
    /// Effective cutoff; `None` for predicate selections.
    pub cutoff: Option<f64>,
    /// Rows where the measure is defined.
    pub n_considered: usize,
    pub n_undefined: usize,
    pub selected: ThresholdSummary,
    pub complement: ThresholdSummary,
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

fn quantile_sorted(sorted: &[f64], p: f64) -> Option<f64> {
    (!sorted.is_empty()).then(|| sorted[nearest_rank(sorted.len(), p) - 1])
}

fn median(values: &[f64]) -> Option<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, 0.5)
}

fn summarize(rows: &[&ScoreRow], total: usize) -> ThresholdSummary {
    let f: Vec<f64> = rows.iter().map(|r| r.x1).collect();
    let k: Vec<f64> = rows.iter().map(|r| r.x2).collect();
    let x3: Vec<f64> = rows.iter().filter_map(|r| r.x3).collect();
    let mut mean_g = [None; 3];
    for (s, slot) in mean_g.iter_mut().enumerate() {
        let g: Vec<f64> = rows.iter().filter_map(|r| r.g.map(|g| g[s])).collect();
        *slot = mean(&g);
    }
    ThresholdSummary {
        n_selected: rows.len(),
        share_selected: if total == 0 {
            0.0
        } else {
            rows.len() as f64 / total as f64
        },
        share_f_below_5: (!rows.is_empty()).then(|| {
            rows.iter().filter(|r| r.forward_citations() < 5.0).count() as f64 / rows.len() as f64
        }),
        mean_f: mean(&f),
        median_f: median(&f),
        mean_k: mean(&k),
        median_k: median(&k),
        mean_x3: mean(&x3),
        median_x3: median(&x3),
        mean_g,
    }
}

/// Splits the rows where `measure` is defined by a value or percentile cutoff.
pub fn threshold_summary(
    rows: &[ScoreRow],
    measure: Measure,
    selection: Selection,
) -> Result<ThresholdReport> {
    if rows.is_empty() {
        return Err(Error::EmptyInput("score table"));
    }
    let defined: Vec<(&ScoreRow, f64)> = rows
        .iter()
        .filter_map(|r| measure.value(r).map(|v| (r, v)))
        .collect();
    let cutoff = match selection {
        Selection::Absolute(tau) => tau,
        Selection::Percentile(p) => {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(format!("percentile {p} outside [0,1]")));
            }
            let mut v: Vec<f64> = defined.iter().map(|&(_, v)| v).collect();
            v.sort_by(f64::total_cmp);
            quantile_sorted(&v, p).unwrap_or(f64::INFINITY)
        }
    };
    let (sel, rest): (Vec<_>, Vec<_>) = defined.iter().partition(|&&(_, v)| v >= cutoff);
    let sel: Vec<&ScoreRow> = sel.into_iter().map(|&(r, _)| r).collect();
    let rest: Vec<&ScoreRow> = rest.into_iter().map(|&(r, _)| r).collect();
    let label = match selection {
        Selection::Absolute(t) => format!("{} >= {}", measure.name(), t),
        Selection::Percentile(p) => format!("{} >= p{}", measure.name(), p * 100.0),
    };
    Ok(ThresholdReport {
        label,
        cutoff: cutoff.is_finite().then_some(cutoff),
        n_considered: defined.len(),
        n_undefined: rows.len() - defined.len(),
        selected: summarize(&sel, defined.len()),
        complement: summarize(&rest, defined.len()),
    })
}

/// Splits all rows by an arbitrary predicate (joint cutoffs).
pub fn predicate_summary<F>(rows: &[ScoreRow], label: &str, predicate: F) -> Result<ThresholdReport>
where
    F: Fn(&ScoreRow) -> bool,
{
    if rows.is_empty() {
        return Err(Error::EmptyInput("score table"));
    }
    let (sel, rest): (Vec<&ScoreRow>, Vec<&ScoreRow>) = rows.iter().partition(|r| predicate(r));
    Ok(ThresholdReport {
        label: label.to_string(),
        cutoff: None,
        n_considered: rows.len(),
        n_undefined: 0,
        selected: summarize(&sel, rows.len()),
        complement: summarize(&rest, rows.len()),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    /// `n_bins + 1` edges.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub below: u64,
    pub above: u64,
}

impl Histogram {
    pub fn bin_of(&self, v: f64) -> Option<usize> {
        bin_index(
            v,
            self.edges[0],
            *self.edges.last().expect("edges"),
            self.counts.len(),
        )
    }
}

fn bin_index(v: f64, lo: f64, hi: f64, n_bins: usize) -> Option<usize> {
    if v < lo || v > hi {
        return None;
    }
    let width = (hi - lo) / n_bins as f64;
    Some((((v - lo) / width).floor() as usize).min(n_bins - 1))
}

/// Equal-width histogram over the closed range `[lo, hi]`; `hi` falls in the last bin.
pub fn histogram(values: &[f64], n_bins: usize, range: (f64, f64)) -> Result<Histogram> {
    if values.is_empty() {
        return Err(Error::EmptyInput("histogram values"));
    }
    let (lo, hi) = range;
    if n_bins == 0 || !(lo < hi) {
        return Err(Error::invalid("histogram needs n_bins >= 1 and lo < hi"));
    }
    let edges = (0..=n_bins)
        .map(|i| lo + (hi - lo) * i as f64 / n_bins as f64)
        .collect();
    let mut h = Histogram {
        edges,
        counts: vec![0; n_bins],
        below: 0,
        above: 0,
    };
    for &v in values {
        match bin_index(v, lo, hi, n_bins) {
            Some(b) => h.counts[b] += 1,
            None if v < lo => h.below += 1,
            None => h.above += 1,
        }
    }
    Ok(h)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MassPoint {
    pub count_at_max: u64,
    pub share_at_max: f64,
    /// Count of the bin immediately left of the bin holding `max_value`.
    pub count_adjacent: u64,
    pub share_adjacent: f64,
}

impl MassPoint {
    /// The exact maximum holds more observations than the neighbouring bin.
    pub fn has_spike(&self) -> bool {
        self.count_at_max > self.count_adjacent
    }
}

pub fn mass_point_share(
    values: &[f64],
    max_value: f64,
    n_bins: usize,
    range: (f64, f64),
) -> Result<MassPoint> {
    let h = histogram(values, n_bins, range)?;
    let bin = h
        .bin_of(max_value)
        .ok_or_else(|| Error::invalid("maximum value outside the histogram range"))?;
    let count_adjacent = if bin == 0 { 0 } else { h.counts[bin - 1] };
    let count_at_max = values.iter().filter(|&&v| v == max_value).count() as u64;
    let n = values.len() as f64;
    Ok(MassPoint {
        count_at_max,
        share_at_max: count_at_max as f64 / n,
        count_adjacent,
        share_adjacent: count_adjacent as f64 / n,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScatterPoint {
    pub patent_id: String,
    pub cd: f64,
    pub mcd: f64,
    pub f: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScatterData {
    pub points: Vec<ScatterPoint>,
    /// `(p, nearest-rank p-quantile of mCD over the whole table)`.
    pub percentile_lines: Vec<(f64, f64)>,
}

/// CD vs. mCD points for CD in `cd_range`, with mCD percentile reference lines.
pub fn mcd_scale_scatter(
    rows: &[ScoreRow],
    cd_range: (f64, f64),
    percentiles: &[f64],
) -> Result<ScatterData> {
    let mut all_mcd = Vec::new();
    let mut points = Vec::new();
    for r in rows {
        let (Some(set), Some(counts)) = (r.indices.as_ref(), r.counts) else {
            continue;
        };
        if let Some(m) = set.mcd {
            all_mcd.push(m);
        }
        if let (Some(cd), Some(mcd)) = (set.cd, set.mcd) {
            if cd >= cd_range.0 && cd <= cd_range.1 {
                points.push(ScatterPoint {
                    patent_id: r.patent_id.clone(),
                    cd,
                    mcd,
                    f: counts.f,
                });
            }
        }
    }
    all_mcd.sort_by(f64::total_cmp);
    let mut lines = Vec::with_capacity(percentiles.len());
    for &p in percentiles {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::invalid(format!("percentile {p} outside [0,1]")));
        }
        if let Some(q) = quantile_sorted(&all_mcd, p) {
            lines.push((p, q));
        }
    }
    Ok(ScatterData {
        points,
        percentile_lines: lines,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TopThreshold {
    /// At least this many long-term citations.
    Count(u64),
    /// At least the nearest-rank quantile of the cohort's long-term citations.
    Percentile(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinStat {
    pub count: usize,
    pub mean_long_term: Option<f64>,
    pub share_top: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinnedValidation {
    pub edges: Vec<f64>,
    pub bins: Vec<BinStat>,
    pub cohort_size: usize,
    pub top_threshold: u64,
    /// `(patent_id, dflex, long_term)` per cohort member.
    pub members: Vec<(String, f64, u64)>,
}

/// Citations arriving after the scoring window and up to `horizon`,
/// binned by score.
pub fn long_term_bins(
    corpus: &CitationCorpus,
    rows: &[ScoreRow],
    cohort: (NaiveDate, NaiveDate),
    horizon: NaiveDate,
    window_months: u32,
    n_bins: usize,
    top: TopThreshold,
) -> Result<BinnedValidation> {
    if n_bins == 0 {
        return Err(Error::invalid("at least one bin is required"));
    }
    let earliest = add_months(cohort.1, window_months)?;
    if horizon < earliest {
        return Err(Error::invalid(format!(
            "horizon {horizon} precedes cohort end plus scoring window ({earliest})"
        )));
    }
    let mut members = Vec::new();
    for r in rows {
        let (Some(d), Some(score)) = (r.grant_date, r.dflex) else {
            continue;
        };
        if d < cohort.0 || d > cohort.1 {
            continue;
        }
        let total = long_term_citations(corpus, &r.patent_id, horizon)?;
        let window = long_term_citations(corpus, &r.patent_id, add_months(d, window_months)?)?;
        members.push((r.patent_id.clone(), score, total - window));
    }
    if members.is_empty() {
        return Err(Error::EmptyInput("cohort"));
    }
    let top_threshold = match top {
        TopThreshold::Count(c) => c,
        TopThreshold::Percentile(p) => {
            let mut lt: Vec<u64> = members.iter().map(|m| m.2).collect();
            lt.sort_unstable();
            lt[nearest_rank(lt.len(), p) - 1]
        }
    };
    let mut sums = vec![(0usize, 0u64, 0usize); n_bins];
    for (_, score, lt) in &members {
        let b = bin_index(*score, 0.0, 1.0, n_bins)
            .ok_or_else(|| Error::invalid(format!("score {score} outside [0,1]")))?;
        sums[b].0 += 1;
        sums[b].1 += lt;
        if *lt >= top_threshold {
            sums[b].2 += 1;
        }
    }
    Ok(BinnedValidation {
        edges: (0..=n_bins).map(|i| i as f64 / n_bins as f64).collect(),
        bins: sums
            .into_iter()
            .map(|(count, total, top)| BinStat {
                count,
                mean_long_term: (count > 0).then(|| total as f64 / count as f64),
                share_top: (count > 0).then(|| top as f64 / count as f64),
            })
            .collect(),
        cohort_size: members.len(),
        top_threshold,
        members,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrendPoint {
    /// Group code, or `"all"` for the pooled series.
    pub group: String,
    pub year: i32,
    pub n: usize,
    pub mean: f64,
    pub share_at_least_090: f64,
    pub p90: f64,
    pub share_below_030: f64,
    /// The year is the last one in the data and is incomplete.
    pub partial: bool,
}

/// Yearly score series per group and pooled. The final year is marked
/// partial when its latest grant date falls before December.
pub fn trend_panels(rows: &[ScoreRow]) -> Result<Vec<TrendPoint>> {
    let mut cells: BTreeMap<(String, i32), Vec<f64>> = BTreeMap::new();
    let mut last: Option<NaiveDate> = None;
    for r in rows {
        let Some(v) = r.dflex else { continue };
        cells
            .entry((r.group_code.clone(), r.grant_year))
            .or_default()
            .push(v);
        cells
            .entry(("all".to_string(), r.grant_year))
            .or_default()
            .push(v);
        if let Some(d) = r.grant_date {
            last = Some(last.map_or(d, |l: NaiveDate| l.max(d)));
        }
    }
    if cells.is_empty() {
        return Err(Error::EmptyInput("score table without scores"));
    }
    let partial_year = last.filter(|d| d.month() < 12).map(|d| d.year());
    Ok(cells
        .into_iter()
        .map(|((group, year), mut v)| {
            v.sort_by(f64::total_cmp);
            let n = v.len();
            TrendPoint {
                group,
                year,
                n,
                mean: v.iter().sum::<f64>() / n as f64,
                share_at_least_090: v.iter().filter(|&&x| x >= 0.90).count() as f64 / n as f64,
                p90: v[nearest_rank(n, 0.90) - 1],
                share_below_030: v.iter().filter(|&&x| x < 0.30).count() as f64 / n as f64,
                partial: partial_year == Some(year),
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearFit {
    pub coefficients: Vec<f64>,
    /// Heteroskedasticity-robust (HC1) standard errors.
    pub std_errors: Vec<f64>,
    pub p_values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogitFit {
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub z_values: Vec<f64>,
    /// Two-sided Wald p-values.
    pub p_values: Vec<f64>,
    /// Average marginal effect `mean(p (1 - p)) * beta` per coefficient.
    pub marginal_effects: Vec<f64>,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub fitted: Vec<f64>,
    pub linear_probability: LinearFit,
}

fn two_sided_p(z: f64) -> f64 {
    erfc(z.abs() / std::f64::consts::SQRT_2)
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn check_rank(x: &DMatrix<f64>) -> Result<()> {
    let sv = x.clone().svd(false, false).singular_values;
    let max = sv.max();
    if max == 0.0 || sv.min() <= 1e-10 * max {
        return Err(Error::SingularDesign);
    }
    Ok(())
}

/// Name of a single column that separates the classes, if any.
fn separating_column(labels: &[bool], x: &DMatrix<f64>, names: &[String]) -> Option<String> {
    for j in 0..x.ncols() {
        let col = x.column(j);
        let (mut min1, mut max1, mut min0, mut max0) = (
            f64::INFINITY,
            f64::NEG_INFINITY,
            f64::INFINITY,
            f64::NEG_INFINITY,
        );
        for (v, &y) in col.iter().zip(labels) {
            if y {
                min1 = min1.min(*v);
                max1 = max1.max(*v);
            } else {
                min0 = min0.min(*v);
                max0 = max0.max(*v);
            }
        }
        let constant = col.iter().all(|v| *v == col[0]);
        if !constant && (max0 <= min1 || max1 <= min0) {
            return Some(names[j].clone());
        }
    }
    None
}

/// Logistic regression by iteratively reweighted least squares.
/// `covariates` must include the intercept column if one is wanted.
pub fn logit_fit(labels: &[bool], covariates: &DMatrix<f64>, names: &[String]) -> Result<LogitFit> {
    let (n, k) = covariates.shape();
    if labels.len() != n || names.len() != k {
        return Err(Error::invalid(
            "labels, covariates and names disagree in size",
        ));
    }
    if n == 0 || k == 0 {
        return Err(Error::EmptyInput("regression data"));
    }
    if labels.iter().all(|&y| y) || labels.iter().all(|&y| !y) {
        return Err(Error::invalid("both outcome classes must be present"));
    }
    check_rank(covariates)?;
    if let Some(name) = separating_column(labels, covariates, names) {
        return Err(Error::PerfectSeparation(name));
    }
    let y = DVector::from_iterator(n, labels.iter().map(|&b| if b { 1.0 } else { 0.0 }));
    let x = covariates;
    let mut beta = DVector::zeros(k);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < 100 {
        iterations += 1;
        let eta = x * &beta;
        let p = eta.map(logistic);
        let w = p.map(|v| v * (1.0 - v));
        let mut xtwx = DMatrix::zeros(k, k);
        for i in 0..n {
            let row = x.row(i);
            xtwx += row.transpose() * row * w[i];
        }
        let grad = x.transpose() * (&y - &p);
        let chol = xtwx.cholesky().ok_or(Error::SingularDesign)?;
        let step = chol.solve(&grad);
        beta += &step;
        if step.amax() <= 1e-14 * (1.0 + beta.amax()) {
            converged = true;
            break;
        }
        if beta.amax() > 50.0 {
            return Err(Error::PerfectSeparation(
                "linear combination of covariates".into(),
            ));
        }
    }
    if !converged {
        return Err(Error::Numeric("IRLS did not converge".into()));
    }
    let eta = x * &beta;
    let p = eta.map(logistic);
    let w = p.map(|v| v * (1.0 - v));
    let mut info = DMatrix::zeros(k, k);
    for i in 0..n {
        let row = x.row(i);
        info += row.transpose() * row * w[i];
    }
    let cov = info.try_inverse().ok_or(Error::SingularDesign)?;
    let se: Vec<f64> = (0..k).map(|j| cov[(j, j)].sqrt()).collect();
    let coefficients: Vec<f64> = beta.iter().copied().collect();
    let z: Vec<f64> = coefficients.iter().zip(&se).map(|(b, s)| b / s).collect();
    let mean_w = w.sum() / n as f64;
    let log_likelihood = y
        .iter()
        .zip(eta.iter())
        .map(|(yi, e)| yi * e - (e.max(0.0) + (-e.abs()).exp().ln_1p()))
        .sum();
    Ok(LogitFit {
        names: names.to_vec(),
        marginal_effects: coefficients.iter().map(|b| b * mean_w).collect(),
        p_values: z.iter().map(|&z| two_sided_p(z)).collect(),
        z_values: z,
        std_errors: se,
        coefficients,
        log_likelihood,
        iterations,
        fitted: p.iter().copied().collect(),
        linear_probability: linear_probability(&y, x)?,
    })
}

fn linear_probability(y: &DVector<f64>, x: &DMatrix<f64>) -> Result<LinearFit> {
    let (n, k) = x.shape();
    let xtx_inv = (x.transpose() * x)
        .try_inverse()
        .ok_or(Error::SingularDesign)?;
    let beta = &xtx_inv * x.transpose() * y;
    let resid = y - x * &beta;
    let mut meat = DMatrix::zeros(k, k);
    for i in 0..n {
        let row = x.row(i);
        meat += row.transpose() * row * (resid[i] * resid[i]);
    }
    let dof = if n > k {
        n as f64 / (n - k) as f64
    } else {
        1.0
    };
    let cov = &xtx_inv * meat * &xtx_inv * dof;
    let se: Vec<f64> = (0..k).map(|j| cov[(j, j)].sqrt()).collect();
    Ok(LinearFit {
        p_values: beta
            .iter()
            .zip(&se)
            .map(|(b, s)| two_sided_p(b / s))
            .collect(),
        coefficients: beta.iter().copied().collect(),
        std_errors: se,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RelativeCutoff {
    /// Recomputed from the table's score distribution.
    Percentile(f64),
    /// Externally supplied cutoff value.
    Value(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Criteria {
    pub absolute: f64,
    pub relative: RelativeCutoff,
}

impl Default for Criteria {
    fn default() -> Self {
        Criteria {
            absolute: 0.90,
            relative: RelativeCutoff::Percentile(0.90),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Binding {
    Dimension(usize),
    /// Several dimensions share the minimum.
    Tie(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseReport {
    pub patent_id: String,
    pub x: [Option<f64>; 3],
    pub g: [f64; 3],
    pub dflex: f64,
    pub binding: Binding,
    pub relative_cutoff: f64,
    pub absolute_cutoff: f64,
    pub relative: bool,
    pub absolute: bool,
}

impl CaseReport {
    pub fn render(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or("undefined".to_string(), |v| format!("{v}"));
        let binding = match &self.binding {
            Binding::Dimension(s) => DIMENSION_NAMES[*s].to_string(),
            Binding::Tie(dims) => format!(
                "tie ({})",
                dims.iter()
                    .map(|&s| DIMENSION_NAMES[s])
                    .collect::<Vec<_>>()
                    .join(", ")
            ),
        };
        let yes = |b: bool| if b { "yes" } else { "no" };
        format!(
            "patent {}\n  raw features: F = {}, K = {}, index = {}\n  \
             percentiles: G1 = {:.3}, G2 = {:.3}, G3 = {:.3}\n  dflex = {:.3}\n  \
             binding dimension: {}\n  relative criterion (>= {:.3}): {}\n  \
             absolute criterion (>= {:.3}): {}\n",
            self.patent_id,
            fmt(self.x[0]),
            fmt(self.x[1]),
            fmt(self.x[2]),
            self.g[0],
            self.g[1],
            self.g[2],
            self.dflex,
            binding,
            self.relative_cutoff,
            yes(self.relative),
            self.absolute_cutoff,
            yes(self.absolute),
        )
    }
}

pub fn binding_dimension(g: &[f64; 3]) -> Binding {
    let min = g.iter().copied().fold(f64::INFINITY, f64::min);
    let at_min: Vec<usize> = (0..3).filter(|&s| g[s] == min).collect();
    if at_min.len() == 1 {
        Binding::Dimension(at_min[0])
    } else {
        Binding::Tie(at_min)
    }
}

/// Single-patent report against the absolute and relative criteria.
pub fn case_lookup(rows: &[ScoreRow], patent_id: &str, criteria: &Criteria) -> Result<CaseReport> {
    let row = rows
        .iter()
        .find(|r| r.patent_id == patent_id)
        .ok_or_else(|| Error::UnknownPatent(patent_id.to_string()))?;
    let (Some(g), Some(dflex)) = (row.g, row.dflex) else {
        return Err(Error::invalid(format!("patent `{patent_id}` has no score")));
    };
    let relative_cutoff = match criteria.relative {
        RelativeCutoff::Value(v) => v,
        RelativeCutoff::Percentile(p) => {
            let mut all: Vec<f64> = rows.iter().filter_map(|r| r.dflex).collect();
            all.sort_by(f64::total_cmp);
            quantile_sorted(&all, p).expect("at least this row is scored")
        }
    };
    Ok(CaseReport {
        patent_id: row.patent_id.clone(),
        x: [Some(row.x1), Some(row.x2), row.x3],
        g,
        dflex,
        binding: binding_dimension(&g),
        relative_cutoff,
        absolute_cutoff: criteria.absolute,
        relative: dflex >= relative_cutoff,
        absolute: dflex >= criteria.absolute,
    })
}
