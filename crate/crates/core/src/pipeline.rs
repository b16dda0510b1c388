//! Run configuration, stage orchestration and on-disk artifacts.
//!
//! A run executes ingest, partition, indices, normalize and dflex in order
//! up to the requested stage, then an optional report. Every table written
//! is listed with its SHA-256 digest in `manifest.txt`; while a run is in
//! progress the output directory carries a `.partial` marker.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::aggregate::{generalized_mean, DflexParams, EvalMode, Exponent};
use crate::analysis::{
    self, Criteria, Measure, RelativeCutoff, Selection, ThresholdReport, ThresholdSummary,
    TopThreshold,
};
use crate::calibrate::{
    fit_gmm, fit_ml, parse_grid, prevalence_sensitivity, CalibrationSample, FitConfig, FitResult,
};
use crate::corpus::{load_corpus, parse_date, partition_all, CitationCorpus, SuccessorCounts};
use crate::error::{Error, Result};
use crate::format::{fmt_f64, fmt_opt};
use crate::indices::{disruption_indices, IndexChoice};
use crate::normalize::{
    scores_from_partitions, Grouping, RowFlags, ScoreConfig, ScoreRow, UndefinedPolicy,
    WinsorConfig,
};
use crate::synth::{generate_corpus, SynthConfig};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "DFLEX_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "dflex-out";
pub const PARTIAL_MARKER: &str = ".partial";
pub const MANIFEST: &str = "manifest.txt";

pub const SCORE_HEADER: [&str; 10] = [
    "patent_id",
    "group_code",
    "grant_year",
    "x1",
    "x2",
    "x3",
    "g1",
    "g2",
    "g3",
    "flags",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub patents: Option<PathBuf>,
    pub citations: Option<PathBuf>,
    /// Precomputed score table used instead of a corpus.
    pub scores: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub window_months: u32,
    pub index: IndexChoice,
    pub grouping: Grouping,
    pub winsor_quantile: Option<f64>,
    pub winsor_columns: [bool; 3],
    pub undefined_policy: UndefinedPolicy,
    pub min_group_size: usize,
    pub date_from: Option<NaiveDate>,
    pub date_to: Option<NaiveDate>,
    pub mode: EvalMode,
    pub weights: Vec<f64>,
    pub sigma: f64,
    /// Key-value fit result supplying weights and exponent.
    pub fit_result: Option<PathBuf>,
    pub seed: u64,
    pub threads: Option<usize>,
    pub threshold: f64,
    pub percentile: f64,
    pub hist_bins: usize,
    pub cd_range: (f64, f64),
    pub scatter_percentiles: Vec<f64>,
    pub cohort_from: Option<NaiveDate>,
    pub cohort_to: Option<NaiveDate>,
    pub horizon: Option<NaiveDate>,
    pub longterm_bins: usize,
    pub top_count: Option<u64>,
    pub top_percentile: f64,
    pub absolute_cutoff: f64,
    pub relative_percentile: f64,
    pub cases: Option<PathBuf>,
    pub population: Option<PathBuf>,
    pub pi: Option<f64>,
    pub pi_grid: Option<String>,
    pub starts: usize,
    pub synth: SynthConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            patents: None,
            citations: None,
            scores: None,
            out_dir: default_out_dir(),
            window_months: 60,
            index: IndexChoice::Cd,
            grouping: Grouping::Industry,
            winsor_quantile: None,
            winsor_columns: [false; 3],
            undefined_policy: UndefinedPolicy::Exclude,
            min_group_size: 30,
            date_from: None,
            date_to: None,
            mode: EvalMode::Min,
            weights: vec![1.0 / 3.0; 3],
            sigma: -1.0,
            fit_result: None,
            seed: 0,
            threads: None,
            threshold: 0.90,
            percentile: 0.90,
            hist_bins: 20,
            cd_range: (-0.2, 0.2),
            scatter_percentiles: vec![0.5, 0.9, 0.99],
            cohort_from: None,
            cohort_to: None,
            horizon: None,
            longterm_bins: 10,
            top_count: None,
            top_percentile: 0.99,
            absolute_cutoff: 0.90,
            relative_percentile: 0.90,
            cases: None,
            population: None,
            pi: None,
            pi_grid: None,
            starts: 8,
            synth: SynthConfig::default(),
        }
    }
}

/// `$DFLEX_OUT_DIR`, or `dflex-out` when unset.
pub fn default_out_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

fn usage(msg: impl Into<String>) -> Error {
    Error::Usage(msg.into())
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| usage(format!("`{key}`: cannot parse `{v}`")))
}

fn parse_list(key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',').map(|p| parse_num(key, p.trim())).collect()
}

fn parse_day(key: &str, v: &str) -> Result<NaiveDate> {
    parse_date(v).ok_or_else(|| usage(format!("`{key}`: `{v}` is not a date")))
}

fn opt_path(v: &str) -> Option<PathBuf> {
    (!v.is_empty()).then(|| PathBuf::from(v))
}

impl RunConfig {
    /// Reads `key = value` lines; `#` starts a comment.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = RunConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                usage(format!(
                    "{}:{}: expected `key = value`",
                    path.display(),
                    n + 1
                ))
            })?;
            let (k, v) = (k.trim(), v.trim());
            // input paths are relative to the file that names them
            let base = path.parent().unwrap_or(Path::new(""));
            match k {
                "patents" | "citations" | "scores" | "fit_result" | "cases" | "population"
                    if !v.is_empty() && Path::new(v).is_relative() =>
                {
                    cfg.set(k, &base.join(v).to_string_lossy())?
                }
                _ => cfg.set(k, v)?,
            }
        }
        Ok(cfg)
    }

    /// Applies one setting by key.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "patents" => self.patents = opt_path(v),
            "citations" => self.citations = opt_path(v),
            "scores" => self.scores = opt_path(v),
            "out_dir" => self.out_dir = PathBuf::from(v),
            "window_months" => self.window_months = parse_num(key, v)?,
            "index" => self.index = v.parse()?,
            "group_by" => self.grouping = v.parse()?,
            "winsor_quantile" => {
                self.winsor_quantile = if v.is_empty() {
                    None
                } else {
                    Some(parse_num(key, v)?)
                }
            }
            "winsor_columns" => {
                let mut cols = [false; 3];
                for c in v.split(',').map(str::trim).filter(|c| !c.is_empty()) {
                    match c {
                        "x1" => cols[0] = true,
                        "x2" => cols[1] = true,
                        "x3" => cols[2] = true,
                        other => return Err(usage(format!("`{key}`: unknown column `{other}`"))),
                    }
                }
                self.winsor_columns = cols;
            }
            "undefined_policy" => self.undefined_policy = v.parse()?,
            "min_group_size" => self.min_group_size = parse_num(key, v)?,
            "date_from" => self.date_from = Some(parse_day(key, v)?),
            "date_to" => self.date_to = Some(parse_day(key, v)?),
            "mode" => self.mode = v.parse()?,
            "weights" => self.weights = parse_list(key, v)?,
            "sigma" => self.sigma = parse_num(key, v)?,
            "fit_result" => self.fit_result = opt_path(v),
            "seed" => self.seed = parse_num(key, v)?,
            "threads" => self.threads = Some(parse_num(key, v)?),
            "threshold" => self.threshold = parse_num(key, v)?,
            "percentile" => self.percentile = parse_num(key, v)?,
            "hist_bins" => self.hist_bins = parse_num(key, v)?,
            "cd_range" => {
                let r = parse_list(key, v)?;
                if r.len() != 2 {
                    return Err(usage("`cd_range` takes two values"));
                }
                self.cd_range = (r[0], r[1]);
            }
            "scatter_percentiles" => self.scatter_percentiles = parse_list(key, v)?,
            "cohort_from" => self.cohort_from = Some(parse_day(key, v)?),
            "cohort_to" => self.cohort_to = Some(parse_day(key, v)?),
            "horizon" => self.horizon = Some(parse_day(key, v)?),
            "longterm_bins" => self.longterm_bins = parse_num(key, v)?,
            "top_count" => self.top_count = Some(parse_num(key, v)?),
            "top_percentile" => self.top_percentile = parse_num(key, v)?,
            "absolute_cutoff" => self.absolute_cutoff = parse_num(key, v)?,
            "relative_percentile" => self.relative_percentile = parse_num(key, v)?,
            "cases" => self.cases = opt_path(v),
            "population" => self.population = opt_path(v),
            "pi" => self.pi = Some(parse_num(key, v)?),
            "pi_grid" => self.pi_grid = Some(v.to_string()),
            "starts" => self.starts = parse_num(key, v)?,
            "synth_n_patents" => self.synth.n_patents = parse_num(key, v)?,
            "synth_start" => self.synth.start = parse_day(key, v)?,
            "synth_end" => self.synth.end = parse_day(key, v)?,
            "synth_n_groups" => self.synth.n_groups = parse_num(key, v)?,
            "synth_mean_out_degree" => self.synth.mean_out_degree = parse_num(key, v)?,
            "synth_planted_fraction" => self.synth.planted_fraction = parse_num(key, v)?,
            "synth_nonfocal_share" => self.synth.nonfocal_share = parse_num(key, v)?,
            "synth_late_boost" => self.synth.late_boost = parse_num(key, v)?,
            _ => return Err(usage(format!("unknown configuration key `{key}`"))),
        }
        Ok(())
    }

    /// Applies `key=value` overrides in order.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let (k, v) = o
                .as_ref()
                .split_once('=')
                .ok_or_else(|| usage(format!("override `{}` must be key=value", o.as_ref())))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn score_config(&self) -> Result<ScoreConfig> {
        let date_range = match (self.date_from, self.date_to) {
            (None, None) => None,
            (from, to) => Some((from.unwrap_or(NaiveDate::MIN), to.unwrap_or(NaiveDate::MAX))),
        };
        Ok(ScoreConfig {
            window_months: self.window_months,
            index: self.index,
            grouping: self.grouping,
            winsor: self.winsor_quantile.map(|q| WinsorConfig {
                quantile: q,
                columns: self.winsor_columns,
            }),
            undefined_policy: self.undefined_policy,
            min_group_size: self.min_group_size,
            date_range,
        })
    }

    pub fn dflex_params(&self) -> Result<DflexParams> {
        match &self.fit_result {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                FitResult::params_from_key_value(&text)
            }
            None => DflexParams::from_mode(self.mode, self.weights.clone(), self.sigma)
                .map_err(|e| usage(e.to_string())),
        }
    }

    fn validate(&self) -> Result<()> {
        self.dflex_params()?;
        for (name, p) in [
            ("percentile", self.percentile),
            ("top_percentile", self.top_percentile),
            ("relative_percentile", self.relative_percentile),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(usage(format!("`{name}` must lie in [0,1]")));
            }
        }
        if let Some(q) = self.winsor_quantile {
            if !(q > 0.0 && q <= 1.0) {
                return Err(usage("`winsor_quantile` must lie in (0,1]"));
            }
        }
        if self.hist_bins == 0 || self.longterm_bins == 0 {
            return Err(usage("bin counts must be positive"));
        }
        if self.threads == Some(0) {
            return Err(usage("`threads` must be positive"));
        }
        Ok(())
    }

    /// Settings that determine output content, for the manifest. Input
    /// paths are reduced to file names; placement settings are omitted.
    pub fn describe(&self) -> Vec<(String, String)> {
        let name = |p: &Option<PathBuf>| {
            p.as_ref()
                .and_then(|p| p.file_name())
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default()
        };
        let date = |d: Option<NaiveDate>| d.map(|d| d.to_string()).unwrap_or_default();
        let list = |v: &[f64]| v.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(",");
        let cols = ["x1", "x2", "x3"]
            .iter()
            .zip(self.winsor_columns)
            .filter(|(_, on)| *on)
            .map(|(c, _)| *c)
            .collect::<Vec<_>>()
            .join(",");
        let mode = match self.mode {
            EvalMode::Exact => "exact",
            EvalMode::Min => "min",
            EvalMode::Max => "max",
            EvalMode::Geometric => "geometric",
        };
        vec![
            ("patents".into(), name(&self.patents)),
            ("citations".into(), name(&self.citations)),
            ("scores".into(), name(&self.scores)),
            ("window_months".into(), self.window_months.to_string()),
            ("index".into(), self.index.name().into()),
            ("group_by".into(), self.grouping.name().into()),
            ("winsor_quantile".into(), fmt_opt(self.winsor_quantile)),
            ("winsor_columns".into(), cols),
            (
                "undefined_policy".into(),
                self.undefined_policy.name().into(),
            ),
            ("min_group_size".into(), self.min_group_size.to_string()),
            ("date_from".into(), date(self.date_from)),
            ("date_to".into(), date(self.date_to)),
            ("mode".into(), mode.into()),
            ("weights".into(), list(&self.weights)),
            ("sigma".into(), fmt_f64(self.sigma)),
            ("fit_result".into(), name(&self.fit_result)),
            ("seed".into(), self.seed.to_string()),
            ("threshold".into(), fmt_f64(self.threshold)),
            ("percentile".into(), fmt_f64(self.percentile)),
            ("hist_bins".into(), self.hist_bins.to_string()),
            ("cd_range".into(), list(&[self.cd_range.0, self.cd_range.1])),
            (
                "scatter_percentiles".into(),
                list(&self.scatter_percentiles),
            ),
            ("cohort_from".into(), date(self.cohort_from)),
            ("cohort_to".into(), date(self.cohort_to)),
            ("horizon".into(), date(self.horizon)),
            ("longterm_bins".into(), self.longterm_bins.to_string()),
            (
                "top_count".into(),
                self.top_count.map(|v| v.to_string()).unwrap_or_default(),
            ),
            ("top_percentile".into(), fmt_f64(self.top_percentile)),
            ("absolute_cutoff".into(), fmt_f64(self.absolute_cutoff)),
            (
                "relative_percentile".into(),
                fmt_f64(self.relative_percentile),
            ),
            ("cases".into(), name(&self.cases)),
            ("population".into(), name(&self.population)),
            ("pi".into(), fmt_opt(self.pi)),
            ("pi_grid".into(), self.pi_grid.clone().unwrap_or_default()),
            ("starts".into(), self.starts.to_string()),
            ("synth_n_patents".into(), self.synth.n_patents.to_string()),
            ("synth_start".into(), self.synth.start.to_string()),
            ("synth_end".into(), self.synth.end.to_string()),
            ("synth_n_groups".into(), self.synth.n_groups.to_string()),
            (
                "synth_mean_out_degree".into(),
                fmt_f64(self.synth.mean_out_degree),
            ),
            (
                "synth_planted_fraction".into(),
                fmt_f64(self.synth.planted_fraction),
            ),
            (
                "synth_nonfocal_share".into(),
                fmt_f64(self.synth.nonfocal_share),
            ),
            ("synth_late_boost".into(), fmt_f64(self.synth.late_boost)),
        ]
    }
}

/// What a run produces.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Command {
    Ingest,
    Partition,
    Indices,
    Normalize,
    Dflex,
    Report(ReportKind),
    Lookup(String),
    Calibrate,
    Synth,
}

impl Command {
    pub fn name(&self) -> String {
        match self {
            Command::Ingest => "ingest".into(),
            Command::Partition => "partition".into(),
            Command::Indices => "indices".into(),
            Command::Normalize => "normalize".into(),
            Command::Dflex => "dflex".into(),
            Command::Report(k) => format!("report {}", k.name()),
            Command::Lookup(id) => format!("lookup {id}"),
            Command::Calibrate => "calibrate".into(),
            Command::Synth => "synth".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportKind {
    Table2,
    Table4,
    Hist,
    Scatter,
    LongTerm,
    Trends,
    Logit,
}

impl ReportKind {
    pub const ALL: [ReportKind; 7] = [
        ReportKind::Table2,
        ReportKind::Table4,
        ReportKind::Hist,
        ReportKind::Scatter,
        ReportKind::LongTerm,
        ReportKind::Trends,
        ReportKind::Logit,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ReportKind::Table2 => "table2",
            ReportKind::Table4 => "table4",
            ReportKind::Hist => "hist",
            ReportKind::Scatter => "scatter",
            ReportKind::LongTerm => "longterm",
            ReportKind::Trends => "trends",
            ReportKind::Logit => "logit",
        }
    }
}

impl std::str::FromStr for ReportKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ReportKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| usage(format!("unknown report `{s}`")))
    }
}

/// Files written by a run, in write order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunSummary {
    pub files: Vec<PathBuf>,
    pub row_counts: Vec<(String, usize)>,
    pub warnings: Vec<String>,
}

struct Artifacts {
    dir: PathBuf,
    files: BTreeMap<String, String>,
    summary: RunSummary,
}

impl Artifacts {
    fn write(&mut self, name: &str, contents: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
        self.files
            .insert(name.to_string(), hex::encode(Sha256::digest(contents)));
        self.summary.files.push(path);
        Ok(())
    }

    fn table(&mut self, name: &str, header: &[&str], rows: Vec<Vec<String>>) -> Result<()> {
        self.summary.row_counts.push((name.to_string(), rows.len()));
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        let path = self.dir.join(name);
        let csv_err = |e: csv::Error| Error::io(&path, std::io::Error::other(e));
        w.write_record(header).map_err(csv_err)?;
        for r in rows {
            w.write_record(&r).map_err(csv_err)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::io(&path, std::io::Error::other(e.to_string())))?;
        self.write(name, &bytes)
    }
}

/// Executes `command` and writes its artifacts under `config.out_dir`.
pub fn run(config: &RunConfig, command: &Command) -> Result<RunSummary> {
    config.validate()?;
    let needs_corpus = matches!(
        command,
        Command::Ingest | Command::Partition | Command::Indices | Command::Normalize
    ) || matches!(command, Command::Report(ReportKind::LongTerm));
    if needs_corpus && (config.patents.is_none() || config.citations.is_none()) {
        return Err(usage(format!(
            "`{}` needs `patents` and `citations`",
            command.name()
        )));
    }
    if matches!(
        command,
        Command::Dflex | Command::Report(_) | Command::Lookup(_)
    ) && config.scores.is_none()
        && (config.patents.is_none() || config.citations.is_none())
    {
        return Err(usage(format!(
            "`{}` needs `scores` or `patents` and `citations`",
            command.name()
        )));
    }
    let dir = config.out_dir.clone();
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let marker = dir.join(PARTIAL_MARKER);
    fs::write(&marker, command.name()).map_err(|e| Error::io(&marker, e))?;
    let mut art = Artifacts {
        dir: dir.clone(),
        files: BTreeMap::new(),
        summary: RunSummary::default(),
    };
    let work = |art: &mut Artifacts| execute(config, command, art);
    match config.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| usage(format!("thread pool: {e}")))?;
            pool.install(|| work(&mut art))?
        }
        None => work(&mut art)?,
    }
    write_manifest(config, command, &mut art)?;
    fs::remove_file(&marker).map_err(|e| Error::io(&marker, e))?;
    Ok(art.summary)
}

fn write_manifest(config: &RunConfig, command: &Command, art: &mut Artifacts) -> Result<()> {
    let mut m = String::new();
    m.push_str(&format!("tool=dflex {}\n", env!("CARGO_PKG_VERSION")));
    m.push_str(&format!("command={}\n", command.name()));
    m.push_str("\n[config]\n");
    for (k, v) in config.describe() {
        m.push_str(&format!("{k}={v}\n"));
    }
    m.push_str("\n[inputs]\n");
    for p in [
        &config.patents,
        &config.citations,
        &config.scores,
        &config.fit_result,
        &config.cases,
        &config.population,
    ]
    .into_iter()
    .flatten()
    {
        let bytes = fs::read(p).map_err(|e| Error::io(p, e))?;
        let name = p
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        m.push_str(&format!(
            "{name} sha256={}\n",
            hex::encode(Sha256::digest(&bytes))
        ));
    }
    m.push_str("\n[rows]\n");
    for (name, n) in &art.summary.row_counts {
        m.push_str(&format!("{name}={n}\n"));
    }
    m.push_str("\n[outputs]\n");
    for (name, digest) in &art.files {
        m.push_str(&format!("{name} sha256={digest}\n"));
    }
    let path = art.dir.join(MANIFEST);
    fs::write(&path, m).map_err(|e| Error::io(&path, e))?;
    art.summary.files.push(path);
    Ok(())
}

/// Scored rows with their source corpus, when one was loaded.
struct Scored {
    corpus: Option<CitationCorpus>,
    rows: Vec<ScoreRow>,
}

fn execute(config: &RunConfig, command: &Command, art: &mut Artifacts) -> Result<()> {
    match command {
        Command::Synth => return stage_synth(config, art).map_err(|e| e.in_stage("synth")),
        Command::Calibrate => {
            return stage_calibrate(config, art).map_err(|e| e.in_stage("calibrate"))
        }
        _ => {}
    }
    let scored = if let Some(path) = config
        .scores
        .as_ref()
        .filter(|_| !matches!(command, Command::Report(ReportKind::LongTerm)))
    {
        let rows = read_score_table(path).map_err(|e| e.in_stage("ingest"))?;
        Scored { corpus: None, rows }
    } else {
        match stages_from_corpus(config, command, art)? {
            Some(s) => s,
            None => return Ok(()),
        }
    };
    let mut scored = scored;
    let params = config.dflex_params().map_err(|e| e.in_stage("dflex"))?;
    for r in &mut scored.rows {
        if let Some(g) = r.g {
            r.dflex = Some(generalized_mean(&g, &params).map_err(|e| e.in_stage("dflex"))?);
        }
    }
    let rows: Vec<Vec<String>> = scored
        .rows
        .iter()
        .filter(|r| r.g.is_some())
        .map(|r| score_record(r, true))
        .collect();
    let mut header = SCORE_HEADER.to_vec();
    header.push("dflex");
    art.table("dflex.csv", &header, rows)?;
    match command {
        Command::Report(kind) => {
            report(config, *kind, &scored, art).map_err(|e| e.in_stage("report"))
        }
        Command::Lookup(id) => {
            lookup(config, id, &scored.rows, art).map_err(|e| e.in_stage("lookup"))
        }
        _ => Ok(()),
    }
}

fn stages_from_corpus(
    config: &RunConfig,
    command: &Command,
    art: &mut Artifacts,
) -> Result<Option<Scored>> {
    let (Some(patents), Some(citations)) = (&config.patents, &config.citations) else {
        return Err(usage("`patents` and `citations` are required"));
    };
    let corpus = load_corpus(patents, citations).map_err(|e| e.in_stage("ingest"))?;
    let md = corpus.metadata();
    let text = format!(
        "records={}\nimplicit_records={}\nedges={}\nduplicate_edges={}\nself_citations={}\nundated_citer_edges={}\n",
        md.records, md.implicit_records, md.edges, md.duplicate_edges, md.self_citations, md.undated_citer_edges
    );
    art.write("ingest.txt", text.as_bytes())?;
    if *command == Command::Ingest {
        return Ok(None);
    }

    let partitions =
        partition_all(&corpus, config.window_months).map_err(|e| e.in_stage("partition"))?;
    let mut ordered: Vec<&(usize, SuccessorCounts)> = partitions.iter().collect();
    ordered.sort_by(|a, b| {
        corpus
            .record(a.0)
            .patent_id
            .cmp(&corpus.record(b.0).patent_id)
    });
    let counts_cells = |c: &SuccessorCounts| [c.f, c.n_i, c.n_j, c.n_k].map(|v| v.to_string());
    art.table(
        "partitions.csv",
        &["patent_id", "F", "N_i", "N_j", "N_k"],
        ordered
            .iter()
            .map(|(idx, c)| {
                let mut r = vec![corpus.record(*idx).patent_id.clone()];
                r.extend(counts_cells(c));
                r
            })
            .collect(),
    )?;
    if *command == Command::Partition {
        return Ok(None);
    }

    let mut index_rows = Vec::with_capacity(ordered.len());
    for (idx, c) in &ordered {
        let s = disruption_indices(c).map_err(|e| e.in_stage("indices"))?;
        let mut r = vec![corpus.record(*idx).patent_id.clone()];
        r.extend(counts_cells(c));
        r.extend([s.cd, s.bdtc, s.csf_d, s.csf_c, s.bwh, s.mcd].map(fmt_opt));
        index_rows.push(r);
    }
    art.table(
        "indices.csv",
        &[
            "patent_id",
            "F",
            "N_i",
            "N_j",
            "N_k",
            "cd",
            "bdtc",
            "csf_d",
            "csf_c",
            "bwh",
            "mcd",
        ],
        index_rows,
    )?;
    if *command == Command::Indices {
        return Ok(None);
    }

    let table = scores_from_partitions(&corpus, &partitions, &config.score_config()?)
        .map_err(|e| e.in_stage("normalize"))?;
    let rows: Vec<Vec<String>> = table.scored().map(|r| score_record(r, false)).collect();
    art.table("scores.csv", &SCORE_HEADER, rows)?;
    let md = &table.metadata;
    let mut text = format!(
        "focal={}\nscored={}\nexcluded_undefined={}\noutside_date_range={}\nwinsorized_x1={}\nwinsorized_x2={}\nwinsorized_x3={}\nundated_citer_edges={}\nsmall_groups={}\n",
        md.focal,
        md.scored,
        md.excluded_undefined,
        md.outside_date_range,
        md.winsorized[0],
        md.winsorized[1],
        md.winsorized[2],
        md.undated_citer_edges,
        md.small_groups.len()
    );
    for (g, n) in &md.small_groups {
        text.push_str(&format!("small_group {g}={n}\n"));
    }
    art.write("normalize.txt", text.as_bytes())?;
    if *command == Command::Normalize {
        return Ok(None);
    }
    Ok(Some(Scored {
        corpus: Some(corpus),
        rows: table.rows,
    }))
}

fn score_record(r: &ScoreRow, with_dflex: bool) -> Vec<String> {
    let g = r.g.map(|g| g.map(fmt_f64)).unwrap_or_default();
    let mut rec = vec![
        r.patent_id.clone(),
        r.group_code.clone(),
        r.grant_year.to_string(),
        fmt_f64(r.x1),
        fmt_f64(r.x2),
        fmt_opt(r.x3),
        g[0].clone(),
        g[1].clone(),
        g[2].clone(),
        r.flags.render(),
    ];
    if with_dflex {
        rec.push(fmt_opt(r.dflex));
    }
    rec
}

/// Reads a score table (`scores.csv` or `dflex.csv` layout). Optional
/// `case_label` and `dflex` columns are honored.
pub fn read_score_table(path: &Path) -> Result<Vec<ScoreRow>> {
    let mut rdr = csv::ReaderBuilder::new()
        .from_path(path)
        .map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    let header = rdr
        .headers()
        .map_err(|e| Error::io(path, std::io::Error::other(e)))?
        .clone();
    let col = |name: &str| header.iter().position(|h| h == name);
    let mut idx = Vec::new();
    for name in SCORE_HEADER {
        idx.push(col(name).ok_or_else(|| Error::Parse {
            file: path.to_path_buf(),
            line: 1,
            column: name.to_string(),
            message: "missing column".into(),
        })?);
    }
    let label_col = col("case_label");
    let dflex_col = col("dflex");
    let mut rows = Vec::new();
    for (n, rec) in rdr.records().enumerate() {
        let line = n as u64 + 2;
        let rec = rec.map_err(|e| Error::Parse {
            file: path.to_path_buf(),
            line,
            column: String::new(),
            message: e.to_string(),
        })?;
        let field = |i: usize| rec.get(idx[i]).unwrap_or("").trim();
        let bad = |i: usize, what: &str| Error::Parse {
            file: path.to_path_buf(),
            line,
            column: SCORE_HEADER[i].to_string(),
            message: format!("`{}` is not {what}", field(i)),
        };
        let num = |i: usize| field(i).parse::<f64>().map_err(|_| bad(i, "a number"));
        let opt = |i: usize| {
            if field(i).is_empty() {
                Ok(None)
            } else {
                num(i).map(Some)
            }
        };
        let g = match (opt(6)?, opt(7)?, opt(8)?) {
            (Some(a), Some(b), Some(c)) => {
                for (i, v) in [(6, a), (7, b), (8, c)] {
                    if !(v > 0.0 && v <= 1.0) {
                        return Err(bad(i, "a score in (0,1]"));
                    }
                }
                Some([a, b, c])
            }
            (None, None, None) => None,
            _ => return Err(bad(6, "a complete score triple")),
        };
        let case_label = match label_col.map(|c| rec.get(c).unwrap_or("").trim()) {
            None | Some("") => None,
            Some("1") => Some(true),
            Some("0") => Some(false),
            Some(other) => {
                return Err(Error::Parse {
                    file: path.to_path_buf(),
                    line,
                    column: "case_label".into(),
                    message: format!("`{other}` is not 0 or 1"),
                })
            }
        };
        let dflex = match dflex_col.map(|c| rec.get(c).unwrap_or("").trim()) {
            None | Some("") => None,
            Some(v) => Some(v.parse::<f64>().map_err(|_| Error::Parse {
                file: path.to_path_buf(),
                line,
                column: "dflex".into(),
                message: format!("`{v}` is not a number"),
            })?),
        };
        rows.push(ScoreRow {
            patent_id: field(0).to_string(),
            group_code: field(1).to_string(),
            grant_year: field(2).parse().map_err(|_| bad(2, "a year"))?,
            grant_date: None,
            counts: None,
            indices: None,
            case_label,
            x1: num(3)?,
            x2: num(4)?,
            x3: opt(5)?,
            g,
            flags: RowFlags::parse(field(9))?,
            dflex,
        });
    }
    if rows.is_empty() {
        return Err(Error::EmptyInput("score table"));
    }
    Ok(rows)
}

const SUMMARY_HEADER: [&str; 16] = [
    "panel",
    "selection",
    "cutoff",
    "set",
    "n",
    "share",
    "share_f_below_5",
    "mean_f",
    "median_f",
    "mean_k",
    "median_k",
    "mean_x3",
    "median_x3",
    "mean_g1",
    "mean_g2",
    "mean_g3",
];

fn summary_records(panel: &str, r: &ThresholdReport) -> Vec<Vec<String>> {
    let rec = |set: &str, s: &ThresholdSummary| {
        vec![
            panel.to_string(),
            r.label.clone(),
            fmt_opt(r.cutoff),
            set.to_string(),
            s.n_selected.to_string(),
            fmt_f64(s.share_selected),
            fmt_opt(s.share_f_below_5),
            fmt_opt(s.mean_f),
            fmt_opt(s.median_f),
            fmt_opt(s.mean_k),
            fmt_opt(s.median_k),
            fmt_opt(s.mean_x3),
            fmt_opt(s.median_x3),
            fmt_opt(s.mean_g[0]),
            fmt_opt(s.mean_g[1]),
            fmt_opt(s.mean_g[2]),
        ]
    };
    vec![
        rec("selected", &r.selected),
        rec("complement", &r.complement),
    ]
}

fn summary_text(panel: &str, r: &ThresholdReport) -> String {
    let f = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.3}"));
    let mut t = format!(
        "[{panel}] {} (cutoff {}; {} defined, {} undefined)\n",
        r.label,
        f(r.cutoff),
        r.n_considered,
        r.n_undefined
    );
    for (set, s) in [("selected", &r.selected), ("complement", &r.complement)] {
        t.push_str(&format!(
            "  {set:<10} n={} share={:.4} F<5={} F mean/median={}/{} K mean/median={}/{} x3 mean/median={}/{} G mean={}/{}/{}\n",
            s.n_selected,
            s.share_selected,
            f(s.share_f_below_5),
            f(s.mean_f),
            f(s.median_f),
            f(s.mean_k),
            f(s.median_k),
            f(s.mean_x3),
            f(s.median_x3),
            f(s.mean_g[0]),
            f(s.mean_g[1]),
            f(s.mean_g[2]),
        ));
    }
    t
}

fn write_summaries(
    art: &mut Artifacts,
    stem: &str,
    reports: Vec<(String, ThresholdReport)>,
) -> Result<()> {
    let mut rows = Vec::new();
    let mut text = String::new();
    for (panel, r) in &reports {
        rows.extend(summary_records(panel, r));
        text.push_str(&summary_text(panel, r));
    }
    art.table(&format!("{stem}.csv"), &SUMMARY_HEADER, rows)?;
    art.write(&format!("{stem}.txt"), text.as_bytes())
}

fn report(
    config: &RunConfig,
    kind: ReportKind,
    scored: &Scored,
    art: &mut Artifacts,
) -> Result<()> {
    let rows = &scored.rows;
    let stem = format!("report_{}", kind.name());
    match kind {
        ReportKind::Table2 => {
            if rows.iter().all(|r| r.indices.is_none()) {
                return Err(usage("table2 needs index columns; run from a corpus"));
            }
            let indices = [
                IndexChoice::Cd,
                IndexChoice::Bdtc,
                IndexChoice::CsfD,
                IndexChoice::Bwh,
            ];
            let mut out = Vec::new();
            for c in indices {
                out.push((
                    "A".to_string(),
                    analysis::threshold_summary(
                        rows,
                        Measure::Index(c),
                        Selection::Absolute(config.threshold),
                    )?,
                ));
            }
            for m in indices
                .map(Measure::Index)
                .into_iter()
                .chain([Measure::Mcd])
            {
                out.push((
                    "B".to_string(),
                    analysis::threshold_summary(rows, m, Selection::Percentile(config.percentile))?,
                ));
            }
            write_summaries(art, &stem, out)
        }
        ReportKind::Table4 => {
            let scored_rows: Vec<ScoreRow> =
                rows.iter().filter(|r| r.dflex.is_some()).cloned().collect();
            let out = vec![
                (
                    "A".to_string(),
                    analysis::threshold_summary(
                        &scored_rows,
                        Measure::Dflex,
                        Selection::Absolute(config.threshold),
                    )?,
                ),
                (
                    "B".to_string(),
                    analysis::threshold_summary(
                        &scored_rows,
                        Measure::Dflex,
                        Selection::Percentile(config.percentile),
                    )?,
                ),
            ];
            write_summaries(art, &stem, out)
        }
        ReportKind::Hist => {
            let mut measures = vec![(Measure::Dflex, (0.0, 1.0))];
            if rows.iter().any(|r| r.indices.is_some()) {
                for c in [
                    IndexChoice::Cd,
                    IndexChoice::Bdtc,
                    IndexChoice::CsfD,
                    IndexChoice::Bwh,
                ] {
                    measures.push((Measure::Index(c), c.range()));
                }
            }
            let mut table = Vec::new();
            let mut text = String::new();
            for (m, range) in measures {
                let values: Vec<f64> = rows.iter().filter_map(|r| m.value(r)).collect();
                if values.is_empty() {
                    text.push_str(&format!("{}: no defined values\n", m.name()));
                    continue;
                }
                let h = analysis::histogram(&values, config.hist_bins, range)?;
                for (b, count) in h.counts.iter().enumerate() {
                    table.push(vec![
                        m.name().to_string(),
                        fmt_f64(h.edges[b]),
                        fmt_f64(h.edges[b + 1]),
                        count.to_string(),
                    ]);
                }
                let mp = analysis::mass_point_share(&values, range.1, config.hist_bins, range)?;
                text.push_str(&format!(
                    "{}: n={} at_max={} ({:.4}) adjacent_bin={} ({:.4}) spike={}\n",
                    m.name(),
                    values.len(),
                    mp.count_at_max,
                    mp.share_at_max,
                    mp.count_adjacent,
                    mp.share_adjacent,
                    if mp.has_spike() { "yes" } else { "no" }
                ));
            }
            art.table(
                &format!("{stem}.csv"),
                &["measure", "bin_lo", "bin_hi", "count"],
                table,
            )?;
            art.write(&format!("{stem}.txt"), text.as_bytes())
        }
        ReportKind::Scatter => {
            let data =
                analysis::mcd_scale_scatter(rows, config.cd_range, &config.scatter_percentiles)?;
            let points = data
                .points
                .iter()
                .map(|p| {
                    vec![
                        p.patent_id.clone(),
                        fmt_f64(p.cd),
                        fmt_f64(p.mcd),
                        p.f.to_string(),
                    ]
                })
                .collect();
            art.table(
                &format!("{stem}.csv"),
                &["patent_id", "cd", "mcd", "F"],
                points,
            )?;
            let lines = data
                .percentile_lines
                .iter()
                .map(|(p, q)| vec![fmt_f64(*p), fmt_f64(*q)])
                .collect();
            art.table(&format!("{stem}_lines.csv"), &["percentile", "mcd"], lines)?;
            let mut text = format!(
                "{} patents with cd in [{}, {}]\n",
                data.points.len(),
                config.cd_range.0,
                config.cd_range.1
            );
            for (p, q) in &data.percentile_lines {
                text.push_str(&format!("mcd p{}: {q}\n", p * 100.0));
            }
            art.write(&format!("{stem}.txt"), text.as_bytes())
        }
        ReportKind::LongTerm => {
            let corpus = scored
                .corpus
                .as_ref()
                .ok_or_else(|| usage("longterm needs a corpus"))?;
            let dates: Vec<NaiveDate> = rows.iter().filter_map(|r| r.grant_date).collect();
            let (first, last) = match (dates.iter().min(), dates.iter().max()) {
                (Some(a), Some(b)) => (*a, *b),
                _ => return Err(Error::EmptyInput("dated score rows")),
            };
            let horizon = config.horizon.unwrap_or(last);
            // by default the cohort ends one scoring window before the horizon
            let cohort_to = match config.cohort_to {
                Some(d) => d,
                None => horizon
                    .checked_sub_months(chrono::Months::new(config.window_months))
                    .ok_or_else(|| usage("horizon too early"))?,
            };
            let cohort = (config.cohort_from.unwrap_or(first), cohort_to);
            let top = match config.top_count {
                Some(c) => TopThreshold::Count(c),
                None => TopThreshold::Percentile(config.top_percentile),
            };
            let v = analysis::long_term_bins(
                corpus,
                rows,
                cohort,
                horizon,
                config.window_months,
                config.longterm_bins,
                top,
            )?;
            let table = v
                .bins
                .iter()
                .enumerate()
                .map(|(b, s)| {
                    vec![
                        fmt_f64(v.edges[b]),
                        fmt_f64(v.edges[b + 1]),
                        s.count.to_string(),
                        fmt_opt(s.mean_long_term),
                        fmt_opt(s.share_top),
                    ]
                })
                .collect();
            art.table(
                &format!("{stem}.csv"),
                &["bin_lo", "bin_hi", "count", "mean_long_term", "share_top"],
                table,
            )?;
            let mut text = format!(
                "cohort {} to {}, horizon {}, {} patents, top threshold {} long-term citations\n",
                cohort.0, cohort.1, horizon, v.cohort_size, v.top_threshold
            );
            for (b, s) in v.bins.iter().enumerate() {
                text.push_str(&format!(
                    "  [{:.1}, {:.1}{} n={} mean={} top_share={}\n",
                    v.edges[b],
                    v.edges[b + 1],
                    if b + 1 == v.bins.len() { "]" } else { ")" },
                    s.count,
                    s.mean_long_term.map_or("-".into(), |m| format!("{m:.3}")),
                    s.share_top.map_or("-".into(), |m| format!("{m:.4}")),
                ));
            }
            art.write(&format!("{stem}.txt"), text.as_bytes())
        }
        ReportKind::Trends => {
            let t = analysis::trend_panels(rows)?;
            let table = t
                .iter()
                .map(|p| {
                    vec![
                        p.group.clone(),
                        p.year.to_string(),
                        p.n.to_string(),
                        fmt_f64(p.mean),
                        fmt_f64(p.share_at_least_090),
                        fmt_f64(p.p90),
                        fmt_f64(p.share_below_030),
                        if p.partial { "1" } else { "0" }.to_string(),
                    ]
                })
                .collect();
            art.table(
                &format!("{stem}.csv"),
                &[
                    "group",
                    "year",
                    "n",
                    "mean",
                    "share_ge_090",
                    "p90",
                    "share_lt_030",
                    "partial",
                ],
                table,
            )?;
            let mut text = String::from(
                "No correction for citation truncation or legal changes is applied; late years have shorter observed histories.\n",
            );
            for p in t.iter().filter(|p| p.group == "all") {
                text.push_str(&format!(
                    "{}{}: n={} mean={:.3} >=0.90={:.4} p90={:.3} <0.30={:.4}\n",
                    p.year,
                    if p.partial { " (partial)" } else { "" },
                    p.n,
                    p.mean,
                    p.share_at_least_090,
                    p.p90,
                    p.share_below_030
                ));
            }
            art.write(&format!("{stem}.txt"), text.as_bytes())
        }
        ReportKind::Logit => {
            let data: Vec<(bool, f64)> = rows
                .iter()
                .filter_map(|r| Some((r.case_label?, r.dflex?)))
                .collect();
            if data.is_empty() {
                return Err(Error::EmptyInput("labeled scored rows"));
            }
            let labels: Vec<bool> = data.iter().map(|d| d.0).collect();
            let x = DMatrix::from_fn(data.len(), 2, |i, j| if j == 0 { 1.0 } else { data[i].1 });
            let names = vec!["const".to_string(), "dflex".to_string()];
            let fit = analysis::logit_fit(&labels, &x, &names)?;
            let lpm = &fit.linear_probability;
            let table = (0..names.len())
                .map(|j| {
                    vec![
                        names[j].clone(),
                        fmt_f64(fit.coefficients[j]),
                        fmt_f64(fit.std_errors[j]),
                        fmt_f64(fit.p_values[j]),
                        fmt_f64(fit.marginal_effects[j]),
                        fmt_f64(lpm.coefficients[j]),
                        fmt_f64(lpm.std_errors[j]),
                        fmt_f64(lpm.p_values[j]),
                    ]
                })
                .collect();
            art.table(
                &format!("{stem}.csv"),
                &[
                    "covariate",
                    "logit_coef",
                    "logit_se",
                    "logit_p",
                    "ame",
                    "lpm_coef",
                    "lpm_se_hc1",
                    "lpm_p",
                ],
                table,
            )?;
            let text = format!(
                "logit of case label on dflex, n={} ({} positive)\nmarginal effect convention: average marginal effect\n\
                 dflex coefficient {:.4} (se {:.4}, p {:.3e}), AME {:.4}\n\
                 linear probability model: dflex {:.4} (robust se {:.4}, p {:.3e})\nlog-likelihood {:.4}\n",
                data.len(),
                labels.iter().filter(|&&y| y).count(),
                fit.coefficients[1],
                fit.std_errors[1],
                fit.p_values[1],
                fit.marginal_effects[1],
                lpm.coefficients[1],
                lpm.std_errors[1],
                lpm.p_values[1],
                fit.log_likelihood,
            );
            art.write(&format!("{stem}.txt"), text.as_bytes())
        }
    }
}

fn lookup(config: &RunConfig, id: &str, rows: &[ScoreRow], art: &mut Artifacts) -> Result<()> {
    let criteria = Criteria {
        absolute: config.absolute_cutoff,
        relative: RelativeCutoff::Percentile(config.relative_percentile),
    };
    let r = analysis::case_lookup(rows, id, &criteria)?;
    let safe: String = id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect();
    art.write(&format!("lookup_{safe}.txt"), r.render().as_bytes())
}

fn score_rows_to_g(rows: &[ScoreRow]) -> Vec<Vec<f64>> {
    rows.iter()
        .filter_map(|r| r.g.map(|g| g.to_vec()))
        .collect()
}

fn stage_calibrate(config: &RunConfig, art: &mut Artifacts) -> Result<()> {
    let (cases, population, default_pi) = match (&config.cases, &config.population) {
        (Some(c), Some(p)) => (
            score_rows_to_g(&read_score_table(c)?),
            score_rows_to_g(&read_score_table(p)?),
            None,
        ),
        (None, None) => {
            // Labeled cases and a seeded draw of the remaining scored rows.
            let rows = match &config.scores {
                Some(path) => read_score_table(path)?,
                None => {
                    let (Some(p), Some(c)) = (&config.patents, &config.citations) else {
                        return Err(usage(
                            "calibrate needs `cases` and `population`, `scores`, or a corpus",
                        ));
                    };
                    let corpus = load_corpus(p, c)?;
                    crate::normalize::assemble_scores(&corpus, &config.score_config()?)?.rows
                }
            };
            let scored: Vec<&ScoreRow> = rows.iter().filter(|r| r.g.is_some()).collect();
            let cases: Vec<Vec<f64>> = scored
                .iter()
                .filter(|r| r.case_label == Some(true))
                .map(|r| r.g.expect("scored").to_vec())
                .collect();
            let mut population: Vec<Vec<f64>> = scored
                .iter()
                .filter(|r| r.case_label != Some(true))
                .map(|r| r.g.expect("scored").to_vec())
                .collect();
            population.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed));
            let pi = cases.len() as f64 / scored.len().max(1) as f64;
            (cases, population, Some(pi))
        }
        _ => return Err(usage("`cases` and `population` must be given together")),
    };
    let pi = config
        .pi
        .or(default_pi)
        .ok_or_else(|| usage("`pi` is required with explicit case and population files"))?;
    let sample = CalibrationSample::new(cases, population, pi)?;
    let fit_config = FitConfig {
        seed: config.seed,
        starts: config.starts,
        ..FitConfig::default()
    };
    let init = DflexParams::uniform(sample.dims(), Exponent::Finite(-1.0))?;
    let ml = fit_ml(&sample, &init, &fit_config)?;
    art.write("fit_ml.txt", ml.to_key_value().as_bytes())?;
    let gmm = fit_gmm(&sample, &init, &fit_config)?;
    art.write("fit_gmm.txt", gmm.to_key_value().as_bytes())?;
    for fit in [&ml, &gmm] {
        if !fit.converged {
            art.summary.warnings.push(format!(
                "{} fit did not converge (identified={}, at_boundary={}); best point written",
                fit.estimator.name(),
                fit.identified,
                fit.at_boundary
            ));
        }
    }
    if let Some(grid) = &config.pi_grid {
        let grid = parse_grid(grid)?;
        let fits = prevalence_sensitivity(&sample, &grid, &init, &fit_config)?;
        let mut header = vec!["pi".to_string()];
        header.extend((1..=sample.dims()).map(|i| format!("alpha{i}")));
        header.extend(["sigma", "loglik", "converged", "min_approx_gap"].map(String::from));
        let rows = fits
            .iter()
            .map(|f| {
                let mut r = vec![fmt_f64(f.prevalence)];
                r.extend(f.weights.iter().map(|w| fmt_f64(*w)));
                r.extend([
                    fmt_f64(f.sigma),
                    fmt_f64(f.log_likelihood),
                    f.converged.to_string(),
                    fmt_f64(f.min_approx_gap),
                ]);
                r
            })
            .collect();
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        art.table("pi_sensitivity.csv", &header, rows)?;
    }
    Ok(())
}

fn stage_synth(config: &RunConfig, art: &mut Artifacts) -> Result<()> {
    let mut synth = config.synth.clone();
    synth.seed = config.seed;
    let generated = generate_corpus(&synth)?;
    let dir = art.dir.clone();
    let (p, c, l) = (
        dir.join("patents.csv"),
        dir.join("citations.csv"),
        dir.join("labels.csv"),
    );
    crate::corpus::write_corpus(&generated.corpus, &p, &c)?;
    generated.write_labels(&l)?;
    for (name, path) in [
        ("patents.csv", &p),
        ("citations.csv", &c),
        ("labels.csv", &l),
    ] {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        art.files
            .insert(name.to_string(), hex::encode(Sha256::digest(&bytes)));
        art.summary.files.push(path.clone());
    }
    art.summary
        .row_counts
        .push(("patents.csv".into(), generated.corpus.len()));
    art.summary
        .row_counts
        .push(("citations.csv".into(), generated.corpus.edge_count()));
    art.summary
        .row_counts
        .push(("labels.csv".into(), generated.planted.len()));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_parsing() {
        let mut cfg = RunConfig::default();
        cfg.apply_overrides(&[
            "index=bdtc",
            "group_by = industry-year",
            "weights=0.2,0.3,0.5",
            "mode=exact",
            "sigma=-4",
        ])
        .unwrap();
        assert_eq!(cfg.index, IndexChoice::Bdtc);
        assert_eq!(cfg.grouping, Grouping::IndustryYear);
        let p = cfg.dflex_params().unwrap();
        assert_eq!(p.exponent, Exponent::Finite(-4.0));
        assert!(matches!(cfg.set("index", "di_star"), Err(Error::Usage(_))));
        assert!(matches!(cfg.set("colour", "blue"), Err(Error::Usage(_))));
        assert!(cfg.apply_overrides(&["novalue"]).is_err());
    }

    #[test]
    fn report_names() {
        for k in ReportKind::ALL {
            assert_eq!(k.name().parse::<ReportKind>().unwrap(), k);
        }
        assert!("fig9".parse::<ReportKind>().is_err());
    }

    #[test]
    fn invalid_usage_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = RunConfig {
            out_dir: dir.path().join("out"),
            ..Default::default()
        };
        cfg.weights = vec![0.5, 0.6, 0.1];
        cfg.mode = EvalMode::Exact;
        let err = run(&cfg, &Command::Dflex).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(!cfg.out_dir.exists());
    }
}
