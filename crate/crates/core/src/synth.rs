//! Synthetic citation corpora with planted high-impact patents, plus the
//! brute-force successor partition used as an independent oracle.
//!
//! Each new patent cites earlier ones through a mixture of preferential
//! attachment and recency. A citation may drag along one of the target's own
//! references (co-citation), which is what produces consolidating citers.
//! Citers of a planted patent skip its prior art with the configured
//! probability.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use chrono::{Months, NaiveDate};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Poisson};

use crate::aggregate::{mean_unchecked, DflexParams};
use crate::calibrate::CalibrationSample;
use crate::corpus::{add_months, day_number, CitationCorpus, PatentRecord, SuccessorCounts};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedProfile {
    /// Multiplier on the rate at which a planted patent attracts citations.
    pub citation_multiplier: f64,
    /// Multiplier on the novelty count.
    pub novelty_multiplier: f64,
    /// Probability that a citer of a planted patent skips its prior art.
    pub bypass_probability: f64,
}

impl Default for PlantedProfile {
    fn default() -> Self {
        PlantedProfile {
            citation_multiplier: 4.0,
            novelty_multiplier: 8.0,
            bypass_probability: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_patents: usize,
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub n_groups: usize,
    /// Mean number of base citation draws per patent; co-citations come on top.
    pub mean_out_degree: f64,
    /// Share of citation draws taken uniformly from the most recent patents.
    pub recency_share: f64,
    /// Number of most recent patents eligible for a recency draw.
    pub recency_window: usize,
    /// Chance that a citation also cites one reference of its target.
    pub cocitation_probability: f64,
    /// Share of citing-only (non-focal) patents.
    pub nonfocal_share: f64,
    pub planted_fraction: f64,
    pub planted: PlantedProfile,
    /// Expected extra citations per planted patent from citers granted after
    /// `late_after_months`.
    pub late_boost: f64,
    pub late_after_months: u32,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_patents: 1000,
            start: NaiveDate::from_ymd_opt(1982, 1, 1).expect("valid date"),
            end: NaiveDate::from_ymd_opt(2015, 6, 30).expect("valid date"),
            n_groups: 6,
            mean_out_degree: 8.0,
            recency_share: 0.5,
            recency_window: 2000,
            cocitation_probability: 0.3,
            nonfocal_share: 0.05,
            planted_fraction: 0.02,
            planted: PlantedProfile::default(),
            late_boost: 0.0,
            late_after_months: 60,
            seed: 1,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let frac = |v: f64, name: &str| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} = {v} outside [0,1]")))
            }
        };
        if self.n_patents < 2 {
            return Err(Error::invalid("at least two patents are required"));
        }
        if self.start > self.end {
            return Err(Error::invalid("start date after end date"));
        }
        if self.n_groups == 0 {
            return Err(Error::invalid("at least one group is required"));
        }
        if !(self.mean_out_degree >= 0.0 && self.mean_out_degree < self.n_patents as f64) {
            return Err(Error::invalid(format!(
                "mean out-degree {} infeasible for {} patents",
                self.mean_out_degree, self.n_patents
            )));
        }
        if self.recency_window == 0 {
            return Err(Error::invalid("recency window must be positive"));
        }
        frac(self.recency_share, "recency_share")?;
        frac(self.cocitation_probability, "cocitation_probability")?;
        frac(self.nonfocal_share, "nonfocal_share")?;
        frac(self.planted_fraction, "planted_fraction")?;
        frac(self.planted.bypass_probability, "bypass_probability")?;
        if !(self.planted.citation_multiplier >= 1.0 && self.planted.novelty_multiplier >= 0.0) {
            return Err(Error::invalid(
                "planted multipliers must be >= 1 (citations) and >= 0 (novelty)",
            ));
        }
        if !(self.late_boost >= 0.0 && self.late_boost.is_finite()) {
            return Err(Error::invalid("late boost must be finite and non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub corpus: CitationCorpus,
    /// Planted patent ids in generation order.
    pub planted: Vec<String>,
}

impl SynthCorpus {
    /// Writes the `patent_id,case_label` table for planted patents.
    pub fn write_labels(&self, path: &Path) -> Result<()> {
        let io = |e| Error::io(path, e);
        let mut w = BufWriter::new(File::create(path).map_err(io)?);
        writeln!(w, "patent_id,case_label").map_err(io)?;
        for id in &self.planted {
            writeln!(w, "{id},1").map_err(io)?;
        }
        w.flush().map_err(io)
    }
}

pub fn patent_id(i: usize) -> String {
    format!("P{i:07}")
}

pub fn generate_corpus(config: &SynthConfig) -> Result<SynthCorpus> {
    config.validate()?;
    let n = config.n_patents;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let span = (day_number(config.end) - day_number(config.start)) as i64;
    let mut offsets: Vec<i64> = (0..n).map(|_| rng.gen_range(0..=span)).collect();
    offsets.sort_unstable();
    let dates: Vec<NaiveDate> = offsets
        .iter()
        .map(|&d| config.start + chrono::Duration::days(d))
        .collect();

    let novelty: LogNormal<f64> = LogNormal::new(3.0, 1.4).expect("valid lognormal");
    let mut records = Vec::with_capacity(n);
    let mut planted_flag = vec![false; n];
    for (i, &date) in dates.iter().enumerate() {
        let is_focal = rng.gen::<f64>() >= config.nonfocal_share;
        let planted = is_focal && rng.gen::<f64>() < config.planted_fraction;
        planted_flag[i] = planted;
        let mut k = novelty.sample(&mut rng).floor();
        if planted {
            k = (k * config.planted.novelty_multiplier).floor();
        }
        let group = rng.gen_range(0..config.n_groups) + 1;
        records.push(PatentRecord {
            patent_id: patent_id(i),
            grant_date: Some(date),
            group_code: Some(group.to_string()),
            novelty_count: k as u64,
            is_focal,
            case_label: is_focal.then_some(planted),
        });
    }

    let extra_copies = (config.planted.citation_multiplier - 1.0).round() as usize;
    let degree = (config.mean_out_degree > 0.0)
        .then(|| Poisson::new(config.mean_out_degree).expect("positive mean"));
    // Preferential-attachment urn: one ticket at birth plus one per citation.
    let mut urn: Vec<u32> = Vec::with_capacity(n + (n as f64 * config.mean_out_degree) as usize);
    let mut back_off: Vec<usize> = Vec::with_capacity(n + 1);
    back_off.push(0);
    let mut back: Vec<u32> = Vec::with_capacity(urn.capacity());
    let mut chosen: Vec<u32> = Vec::new();
    let mut extra: Vec<u32> = Vec::new();

    for i in 0..n {
        chosen.clear();
        extra.clear();
        if i > 0 {
            let want = degree
                .as_ref()
                .map_or(0, |d| d.sample(&mut rng) as usize)
                .min(i);
            let mut attempts = 0;
            while chosen.len() < want && attempts < 8 * want + 8 {
                attempts += 1;
                let t = if rng.gen::<f64>() < config.recency_share || urn.is_empty() {
                    let lo = i.saturating_sub(config.recency_window);
                    rng.gen_range(lo..i) as u32
                } else {
                    urn[rng.gen_range(0..urn.len())]
                };
                if !chosen.contains(&t) {
                    chosen.push(t);
                }
            }
            let mut skip: Vec<u32> = Vec::new();
            for &t in &chosen {
                let refs = &back[back_off[t as usize]..back_off[t as usize + 1]];
                if planted_flag[t as usize] {
                    if rng.gen::<f64>() < config.planted.bypass_probability {
                        skip.extend_from_slice(refs);
                    }
                } else if !refs.is_empty() && rng.gen::<f64>() < config.cocitation_probability {
                    extra.push(refs[rng.gen_range(0..refs.len())]);
                }
            }
            chosen.extend_from_slice(&extra);
            chosen.sort_unstable();
            chosen.dedup();
            if !skip.is_empty() {
                chosen.retain(|c| !skip.contains(c));
            }
        }
        for &t in &chosen {
            back.push(t);
            urn.push(t);
            if planted_flag[t as usize] {
                urn.extend(std::iter::repeat_n(t, extra_copies));
            }
        }
        back_off.push(back.len());
        urn.push(i as u32);
        if planted_flag[i] {
            urn.extend(std::iter::repeat_n(i as u32, extra_copies));
        }
    }
    drop(urn);

    let mut pairs: Vec<(u32, u32)> = Vec::with_capacity(back.len());
    for i in 0..n {
        for &t in &back[back_off[i]..back_off[i + 1]] {
            pairs.push((i as u32, t));
        }
    }
    drop(back);

    let planted: Vec<usize> = (0..n).filter(|&i| planted_flag[i]).collect();
    if config.late_boost > 0.0 {
        let late = Poisson::new(config.late_boost).expect("positive mean");
        for &p in &planted {
            let after = add_months(dates[p], config.late_after_months)?;
            let first = dates.partition_point(|&d| d <= after);
            if first >= n {
                continue;
            }
            let count = late.sample(&mut rng) as usize;
            for _ in 0..count {
                pairs.push((rng.gen_range(first..n) as u32, p as u32));
            }
        }
    }

    let corpus = CitationCorpus::from_indexed(records, pairs)?;
    Ok(SynthCorpus {
        planted: planted.iter().map(|&i| patent_id(i)).collect(),
        corpus,
    })
}

/// Adds `per_target` citations to each target from citers granted more
/// than `after_months` after it.
pub fn boost_late_citations(
    corpus: &CitationCorpus,
    targets: &[String],
    per_target: usize,
    after_months: u32,
    seed: u64,
) -> Result<CitationCorpus> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dated: Vec<(NaiveDate, u32)> = corpus
        .records()
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.grant_date.map(|d| (d, i as u32)))
        .collect();
    dated.sort_unstable();
    let mut pairs: Vec<(u32, u32)> = corpus.edges().map(|(a, b)| (a as u32, b as u32)).collect();
    for id in targets {
        let t = corpus
            .index_of(id)
            .ok_or_else(|| Error::UnknownPatent(id.clone()))?;
        let grant = corpus
            .record(t)
            .grant_date
            .ok_or_else(|| Error::MissingDate(id.clone()))?;
        let after = add_months(grant, after_months)?;
        let first = dated.partition_point(|&(d, _)| d <= after);
        let pool = &dated[first..];
        if pool.is_empty() {
            continue;
        }
        for _ in 0..per_target {
            pairs.push((pool[rng.gen_range(0..pool.len())].1, t as u32));
        }
    }
    CitationCorpus::from_indexed(corpus.records().to_vec(), pairs)
}

/// Small random corpus for oracle comparisons: random dates (some missing),
/// random focal flags and arbitrary edges, cycles included.
pub fn random_small_corpus(seed: u64, max_nodes: usize) -> CitationCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=max_nodes.max(2));
    let base = NaiveDate::from_ymd_opt(2000, 1, 1).expect("valid date");
    let records: Vec<PatentRecord> = (0..n)
        .map(|i| {
            let dated = rng.gen::<f64>() < 0.9;
            let is_focal = dated && rng.gen::<f64>() < 0.85;
            PatentRecord {
                patent_id: format!("N{i:02}"),
                grant_date: dated.then(|| base + chrono::Duration::days(rng.gen_range(0..=3650))),
                group_code: is_focal.then(|| "1".to_string()),
                novelty_count: rng.gen_range(0..20),
                is_focal,
                case_label: None,
            }
        })
        .collect();
    let density: f64 = rng.gen_range(0.02..0.25);
    let mut pairs = Vec::new();
    for a in 0..n {
        for b in 0..n {
            if a != b && rng.gen::<f64>() < density {
                pairs.push((a as u32, b as u32));
            }
        }
    }
    pairs.shuffle(&mut rng);
    CitationCorpus::from_indexed(records, pairs).expect("indices in range")
}

/// Successor partition by direct enumeration over the edge list.
pub fn brute_force_partition(
    corpus: &CitationCorpus,
    focal: &str,
    window_months: u32,
) -> Result<SuccessorCounts> {
    if window_months == 0 {
        return Err(Error::invalid("window_months must be positive"));
    }
    let records = corpus.records();
    let f = records
        .iter()
        .position(|r| r.patent_id == focal)
        .ok_or_else(|| Error::UnknownPatent(focal.to_string()))?;
    if !records[f].is_focal {
        return Err(Error::NotFocal(focal.to_string()));
    }
    let grant = records[f]
        .grant_date
        .ok_or_else(|| Error::MissingDate(focal.to_string()))?;
    let end = grant
        .checked_add_months(Months::new(window_months))
        .ok_or_else(|| Error::invalid("window end overflows"))?;
    let edges: Vec<(usize, usize)> = corpus.edges().collect();
    let prior: Vec<usize> = edges.iter().filter(|e| e.0 == f).map(|e| e.1).collect();

    let mut counts = SuccessorCounts::default();
    for (c, rec) in records.iter().enumerate() {
        let Some(d) = rec.grant_date else { continue };
        if d <= grant || d > end {
            continue;
        }
        let cites_focal = edges.iter().any(|&(a, b)| a == c && b == f);
        let cites_prior = edges.iter().any(|&(a, b)| a == c && prior.contains(&b));
        match (cites_focal, cites_prior) {
            (true, false) => counts.n_i += 1,
            (true, true) => counts.n_j += 1,
            (false, true) => counts.n_k += 1,
            (false, false) => {}
        }
    }
    counts.f = counts.n_i + counts.n_j;
    Ok(counts)
}

/// Population prevalence `E[M(g)]` for `g` uniform on the unit cube,
/// by the midpoint rule on a `points^dims` grid.
pub fn uniform_prevalence(theta: &DflexParams, points: usize) -> f64 {
    let dims = theta.dims();
    let total = points.pow(dims as u32);
    let mut g = vec![0.0; dims];
    let mut sum = 0.0;
    for cell in 0..total {
        let mut rest = cell;
        for v in g.iter_mut() {
            *v = ((rest % points) as f64 + 0.5) / points as f64;
            rest /= points;
        }
        sum += mean_unchecked(&g, theta);
    }
    sum / total as f64
}

/// Case-population sample with normalized scores uniform on `(0,1]^S` and
/// cases drawn with probability proportional to `M_theta(g)`.
pub fn calibration_sample(
    theta: &DflexParams,
    n_population: usize,
    n_cases: usize,
    prevalence: f64,
    seed: u64,
) -> Result<CalibrationSample> {
    theta.validate()?;
    let dims = theta.dims();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw =
        |rng: &mut ChaCha8Rng| -> Vec<f64> { (0..dims).map(|_| 1.0 - rng.gen::<f64>()).collect() };
    let population: Vec<Vec<f64>> = (0..n_population).map(|_| draw(&mut rng)).collect();
    let mut cases = Vec::with_capacity(n_cases);
    while cases.len() < n_cases {
        let g = draw(&mut rng);
        if rng.gen::<f64>() < mean_unchecked(&g, theta) {
            cases.push(g);
        }
    }
    CalibrationSample::new(cases, population, prevalence)
}
