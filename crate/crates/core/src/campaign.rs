//! End-to-end campaigns: profile every (row, condition) combination of a
//! model file, persist the series with a hashed manifest, and run the
//! analyses over the persisted files.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::device::{DeviceError, ModelFile, RowState};
use crate::params::{AggOn, Condition, DataPattern, Temperature};
use crate::profiler::{self, MeasurementSeries, ProfileError, SweepConfig, GUESS_SAMPLES};
use crate::report::{self, MarginRow, StatsRow};
use crate::sampling::{self, Metric, SamplingError, SamplingQuery, SamplingRecord};
use crate::seed::{derive_seed, label_word};
use crate::stats::{self, StatsError};

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] DeviceError),
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: content hash does not match the manifest")]
    Integrity { path: PathBuf },
    #[error("derived seed {seed} collides between {first} and {second}")]
    SeedCollision { seed: u64, first: String, second: String },
    #[error("analysis of {series} failed: {reason}")]
    Analysis { series: String, reason: String },
}

impl CampaignError {
    /// Process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            CampaignError::Config(_) => 3,
            CampaignError::Io { .. } => 4,
            CampaignError::Model(_) => 5,
            CampaignError::Profile(ProfileError::Device(_)) => 5,
            CampaignError::Profile(ProfileError::Io { .. }) => 4,
            CampaignError::Profile(_) => 5,
            CampaignError::Integrity { .. } => 6,
            CampaignError::Analysis { .. } => 7,
            CampaignError::SeedCollision { .. } => 8,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CampaignError + '_ {
    move |source| CampaignError::Io { path: path.to_path_buf(), source }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Analysis {
    Stats,
    RunLengths,
    Acf,
    ChiSquare,
    Sampling,
    CvScurve,
    MarginTable,
}

impl Analysis {
    pub const ALL: [Analysis; 7] = [
        Analysis::Stats,
        Analysis::RunLengths,
        Analysis::Acf,
        Analysis::ChiSquare,
        Analysis::Sampling,
        Analysis::CvScurve,
        Analysis::MarginTable,
    ];

    fn name(self) -> &'static str {
        match self {
            Analysis::Stats => "stats",
            Analysis::RunLengths => "run_lengths",
            Analysis::Acf => "acf",
            Analysis::ChiSquare => "chi_square",
            Analysis::Sampling => "sampling",
            Analysis::CvScurve => "cv_scurve",
            Analysis::MarginTable => "margin_table",
        }
    }
}

impl fmt::Display for Analysis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Analysis {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Analysis::ALL
            .into_iter()
            .find(|a| a.name() == s.replace('-', "_"))
            .ok_or_else(|| format!("unknown analysis `{s}`"))
    }
}

/// How each series' sweep range is chosen.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SweepSource {
    /// Bootstrap an RDT guess per combination, then sweep guess/2..guess*3.
    Guess {
        #[serde(default = "default_samples")]
        samples: usize,
        #[serde(default)]
        ceiling: Option<u64>,
    },
    Fixed { rdt_min: u64, rdt_max: u64, rdt_step: u64 },
}

fn default_samples() -> usize {
    GUESS_SAMPLES
}

impl Default for SweepSource {
    fn default() -> Self {
        SweepSource::Guess { samples: GUESS_SAMPLES, ceiling: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOptions {
    #[serde(default = "default_max_lag")]
    pub acf_max_lag: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub sampling: SamplingQuery,
}

fn default_max_lag() -> usize {
    50
}

fn default_alpha() -> f64 {
    0.05
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions { acf_max_lag: default_max_lag(), alpha: default_alpha(), sampling: SamplingQuery::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub model_file: PathBuf,
    /// Rows to profile; all rows of the model when absent.
    #[serde(default)]
    pub rows: Option<Vec<u64>>,
    pub iterations: u64,
    #[serde(default)]
    pub sweep: SweepSource,
    pub patterns: Vec<DataPattern>,
    pub t_aggon: Vec<AggOn>,
    pub temperatures: Vec<Temperature>,
    pub output_dir: PathBuf,
    pub master_seed: u64,
    #[serde(default)]
    pub analyses: BTreeSet<Analysis>,
    #[serde(default)]
    pub analysis: AnalysisOptions,
}

impl CampaignConfig {
    /// Reads a TOML (`.toml`) or JSON config. Relative paths inside it are
    /// resolved against the config file's directory.
    pub fn load(path: &Path) -> Result<Self, CampaignError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let mut cfg: CampaignConfig = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).map_err(|e| CampaignError::Config(e.to_string()))?
        } else {
            serde_json::from_str(&text).map_err(|e| CampaignError::Config(e.to_string()))?
        };
        let base = path.parent().unwrap_or(Path::new("."));
        if cfg.model_file.is_relative() {
            cfg.model_file = base.join(&cfg.model_file);
        }
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CampaignError> {
        if self.patterns.is_empty() || self.t_aggon.is_empty() || self.temperatures.is_empty() {
            return Err(CampaignError::Config("parameter grid must be nonempty".into()));
        }
        if let Some(a) = self.t_aggon.iter().find(|a| !a.is_valid()) {
            return Err(CampaignError::Config(format!("t_aggon {a} is below minimum tRAS")));
        }
        if matches!(self.rows.as_deref(), Some([])) {
            return Err(CampaignError::Config("row selection is empty".into()));
        }
        if let SweepSource::Guess { samples: 0, .. } = self.sweep {
            return Err(CampaignError::Config("guess needs at least one sample".into()));
        }
        Ok(())
    }

    /// Every (row, condition) in deterministic order.
    pub fn combinations(&self, model: &ModelFile) -> Result<Vec<(u64, Condition)>, CampaignError> {
        let rows: Vec<u64> = match &self.rows {
            Some(r) => {
                for &row in r {
                    model.get(row)?;
                }
                r.clone()
            }
            None => model.rows.iter().map(|r| r.row).collect(),
        };
        let mut out = Vec::new();
        for &row in &rows {
            for &pattern in &self.patterns {
                for &t_aggon in &self.t_aggon {
                    for &temperature in &self.temperatures {
                        out.push((row, Condition::new(pattern, t_aggon, temperature)));
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Seed of one series: a hash of the master seed, row, and condition.
pub fn series_seed(master: u64, row: u64, cond: &Condition) -> u64 {
    derive_seed(&[
        master,
        row,
        label_word(&cond.pattern.to_string()),
        label_word(&cond.t_aggon.to_string()),
        label_word(&cond.temperature.to_string()),
    ])
}

pub fn series_id(row: u64, cond: &Condition) -> String {
    format!("row{row}_{}_{}_{}", cond.pattern, cond.t_aggon, cond.temperature)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub row: u64,
    #[serde(flatten)]
    pub condition: Condition,
    pub seed: u64,
    pub csv: PathBuf,
    pub meta: PathBuf,
    pub csv_sha256: String,
    pub meta_sha256: String,
    pub length: u64,
    pub noflip: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub master_seed: u64,
    /// Series paths are relative to the manifest's directory.
    pub entries: Vec<ManifestEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

impl Manifest {
    pub fn load(path: &Path) -> Result<Self, CampaignError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        serde_json::from_str(&text).map_err(|e| CampaignError::Config(format!("{}: {e}", path.display())))
    }

    /// Loads every series after checking both file hashes.
    pub fn load_series(&self, base: &Path) -> Result<Vec<(ManifestEntry, MeasurementSeries)>, CampaignError> {
        self.entries
            .iter()
            .map(|e| {
                let csv = base.join(&e.csv);
                let meta = base.join(&e.meta);
                for (path, expected) in [(&csv, &e.csv_sha256), (&meta, &e.meta_sha256)] {
                    if &sha256_file(path)? != expected {
                        return Err(CampaignError::Integrity { path: path.clone() });
                    }
                }
                Ok((e.clone(), MeasurementSeries::load(&csv, &meta)?))
            })
            .collect()
    }
}

pub fn sha256_file(path: &Path) -> Result<String, CampaignError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn profile_one(
    model: &ModelFile,
    cfg: &CampaignConfig,
    row: u64,
    cond: &Condition,
    seed: u64,
) -> Result<MeasurementSeries, CampaignError> {
    let rec = model.get(row)?;
    let mut state = RowState::new(row, rec.model.clone(), seed)?;
    state.cell_encoding = rec.cell_encoding;
    let sweep = match cfg.sweep {
        SweepSource::Guess { samples, ceiling } => {
            let guess = profiler::guess_rdt(&mut state, cond, samples, ceiling)?;
            SweepConfig::from_guess(guess, cfg.iterations)?
        }
        SweepSource::Fixed { rdt_min, rdt_max, rdt_step } => SweepConfig::new(rdt_min, rdt_max, rdt_step, cfg.iterations)?,
    };
    Ok(profiler::test_loop(&mut state, &sweep, cond)?)
}

/// Profiles every combination and writes `series/*.csv`, their metadata,
/// and `manifest.json` into the output directory.
///
/// `jobs` bounds the worker pool; results do not depend on it.
pub fn run_campaign(cfg: &CampaignConfig, jobs: Option<usize>) -> Result<Manifest, CampaignError> {
    cfg.validate()?;
    let model = ModelFile::load(&cfg.model_file)?;
    let combos = cfg.combinations(&model)?;

    let mut seen: BTreeMap<u64, String> = BTreeMap::new();
    let mut planned = Vec::with_capacity(combos.len());
    for (row, cond) in combos {
        let seed = series_seed(cfg.master_seed, row, &cond);
        let id = series_id(row, &cond);
        if let Some(first) = seen.insert(seed, id.clone()) {
            return Err(CampaignError::SeedCollision { seed, first, second: id });
        }
        planned.push((row, cond, seed, id));
    }

    let series_dir = cfg.output_dir.join("series");
    fs::create_dir_all(&series_dir).map_err(io_err(&series_dir))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| CampaignError::Config(format!("worker pool: {e}")))?;
    let entries: Vec<ManifestEntry> = pool.install(|| {
        planned
            .par_iter()
            .map(|(row, cond, seed, id)| {
                let series = profile_one(&model, cfg, *row, cond, *seed)?;
                let (csv, meta) = series.save(&series_dir, id)?;
                Ok(ManifestEntry {
                    id: id.clone(),
                    row: *row,
                    condition: *cond,
                    seed: *seed,
                    csv_sha256: sha256_file(&csv)?,
                    meta_sha256: sha256_file(&meta)?,
                    csv: Path::new("series").join(format!("{id}.csv")),
                    meta: Path::new("series").join(format!("{id}.meta.json")),
                    length: series.values.len() as u64,
                    noflip: series.noflip_count() as u64,
                })
            })
            .collect::<Result<_, CampaignError>>()
    })?;
    let manifest = Manifest { master_seed: cfg.master_seed, entries };
    let path = cfg.output_dir.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    fs::write(&path, text).map_err(io_err(&path))?;
    Ok(manifest)
}

fn analysis_err(series: &str) -> impl Fn(&dyn fmt::Display) -> CampaignError + '_ {
    move |e| CampaignError::Analysis { series: series.to_string(), reason: e.to_string() }
}

/// What an analysis run produced.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AnalysisReport {
    pub files: Vec<PathBuf>,
    pub sampling: Vec<SamplingRecord>,
    pub markdown: Option<String>,
}

/// Runs the selected analyses over the series listed in `manifest_path`
/// and writes the report files into `out_dir`.
pub fn analyze(
    manifest_path: &Path,
    which: &BTreeSet<Analysis>,
    opts: &AnalysisOptions,
    out_dir: &Path,
    seed: u64,
) -> Result<AnalysisReport, CampaignError> {
    let mut report = AnalysisReport::default();
    if which.is_empty() {
        return Ok(report);
    }
    let manifest = Manifest::load(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let loaded = manifest.load_series(base)?;
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let plots = out_dir.join("plots");
    let write = |report: &mut AnalysisReport, path: PathBuf, r: io::Result<()>| -> Result<(), CampaignError> {
        r.map_err(io_err(&path))?;
        report.files.push(path);
        Ok(())
    };

    let mut all_stats = Vec::new();
    let mut fits = Vec::new();
    if which.contains(&Analysis::Stats) {
        let mut rows_out = Vec::new();
        for (e, s) in &loaded {
            let st = stats::summarize_series(s).map_err(|x| analysis_err(&e.id)(&x))?;
            let hist_path = plots.join(format!("{}_histogram.xy", e.id));
            let points: Vec<(f64, f64)> = st.histogram.iter().map(|b| ((b.low + b.high) / 2.0, b.count as f64)).collect();
            write(&mut report, hist_path.clone(), report::write_xy(&hist_path, points))?;
            all_stats.push((e.id.clone(), st));
        }
        for ((id, st), (e, _)) in all_stats.iter().zip(&loaded) {
            rows_out.push(StatsRow::new(id, e.row, st));
        }
        let p = out_dir.join("stats.csv");
        write(&mut report, p.clone(), report::write_records(&p, &rows_out))?;
    }
    if which.contains(&Analysis::RunLengths) {
        let hists: Vec<(String, stats::RunLengthHistogram)> =
            loaded.iter().map(|(e, s)| (e.id.clone(), stats::run_lengths(&s.numeric()))).collect();
        for (id, h) in &hists {
            let p = plots.join(format!("{id}_runlength.xy"));
            let pts = h.0.iter().map(|(&l, &c)| (l as f64, c as f64));
            write(&mut report, p.clone(), report::write_xy(&p, pts))?;
        }
        let p = out_dir.join("run_lengths.csv");
        write(&mut report, p.clone(), report::write_run_lengths(&p, &hists))?;
    }
    if which.contains(&Analysis::Acf) {
        let mut acfs = Vec::new();
        for (e, s) in &loaded {
            let values: Vec<f64> = s.numeric().into_iter().map(|v| v as f64).collect();
            let lag = opts.acf_max_lag.min(values.len().saturating_sub(1));
            match stats::acf(&values, lag) {
                Ok(r) => acfs.push((e.id.clone(), r)),
                // a constant or single-value series has no defined ACF
                Err(StatsError::ZeroVariance | StatsError::TooShort { .. }) => {}
                Err(x) => return Err(analysis_err(&e.id)(&x)),
            }
        }
        for (id, r) in &acfs {
            let p = plots.join(format!("{id}_acf.xy"));
            let pts = r.iter().enumerate().map(|(k, &v)| (k as f64, v));
            write(&mut report, p.clone(), report::write_xy(&p, pts))?;
        }
        let p = out_dir.join("acf.csv");
        write(&mut report, p.clone(), report::write_acf(&p, &acfs))?;
    }
    if which.contains(&Analysis::ChiSquare) {
        for (e, s) in &loaded {
            let values: Vec<f64> = s.numeric().into_iter().map(|v| v as f64).collect();
            match stats::chi_square_normal_fit(&values, opts.alpha) {
                Ok(f) => fits.push((e.id.clone(), f)),
                Err(StatsError::TooFewDistinct | StatsError::TooFewBins(_) | StatsError::ZeroVariance) => {}
                Err(x) => return Err(analysis_err(&e.id)(&x)),
            }
        }
        let p = out_dir.join("chi_square.csv");
        write(&mut report, p.clone(), report::write_chi_square(&p, &fits))?;
    }
    let need_sampling = which.contains(&Analysis::Sampling) || which.contains(&Analysis::MarginTable);
    let mut boxes = Vec::new();
    if need_sampling {
        let dir = out_dir.join("sampling");
        for (e, s) in &loaded {
            let values = s.numeric();
            if values.is_empty() {
                continue;
            }
            let recs = sampling::analyze_values(e.row, &values, &opts.sampling, derive_seed(&[seed, e.seed]))
                .map_err(|x: SamplingError| analysis_err(&e.id)(&x))?;
            if which.contains(&Analysis::Sampling) {
                let p = dir.join(format!("{}.csv", e.id));
                write(&mut report, p.clone(), report::write_sampling(&p, &recs))?;
            }
            report.sampling.extend(recs);
        }
        if which.contains(&Analysis::Sampling) && !report.sampling.is_empty() {
            boxes = sampling::boxplot(&report.sampling).map_err(|x| analysis_err("boxplot")(&x))?;
            let p = out_dir.join("sampling_boxplot.csv");
            write(&mut report, p.clone(), report::write_boxplot(&p, &boxes))?;
        }
        if which.contains(&Analysis::MarginTable) {
            let rows = margin_table(&report.sampling);
            let p = out_dir.join("margin_table.csv");
            write(&mut report, p.clone(), report::write_margin_table(&p, &rows))?;
        }
    }
    if which.contains(&Analysis::CvScurve) {
        let series: Vec<MeasurementSeries> =
            loaded.iter().filter(|(_, s)| !s.numeric().is_empty()).map(|(_, s)| s.clone()).collect();
        let points = if series.is_empty() {
            Vec::new()
        } else {
            sampling::cv_scurve(&series).map_err(|x| analysis_err("cv_scurve")(&x))?
        };
        let p = out_dir.join("cv_scurve.csv");
        write(&mut report, p.clone(), report::write_scurve(&p, &points))?;
    }
    let md = report::markdown_summary(&all_stats, &fits, &boxes);
    report.markdown = Some(md);
    Ok(report)
}

/// Margin-probability rows (find-min counts as margin 0) aggregated over
/// series.
pub fn margin_table(records: &[SamplingRecord]) -> Vec<MarginRow> {
    let mut groups: BTreeMap<(usize, u64), Vec<f64>> = BTreeMap::new();
    for r in records {
        let margin = match r.metric {
            Metric::FindMin => 0.0,
            Metric::WithinMargin(m) => m,
            Metric::NormalizedMin => continue,
        };
        // margins are nonnegative, so bit order matches numeric order
        groups.entry((r.n, margin.to_bits())).or_default().push(r.exact);
    }
    groups
        .into_iter()
        .map(|((n, bits), xs)| MarginRow {
            n,
            margin: f64::from_bits(bits),
            min: xs.iter().copied().fold(f64::INFINITY, f64::min),
            mean: stats::mean(&xs),
            max: xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn analysis_names() {
        for a in Analysis::ALL {
            assert_eq!(a.to_string().parse::<Analysis>().unwrap(), a);
        }
        assert_eq!("run-lengths".parse::<Analysis>().unwrap(), Analysis::RunLengths);
        assert!("fft".parse::<Analysis>().is_err());
    }

    #[test]
    fn seeds_differ_per_condition() {
        let a = Condition::default();
        let b = Condition { temperature: Temperature::C80, ..a };
        assert_ne!(series_seed(1, 0, &a), series_seed(1, 0, &b));
        assert_ne!(series_seed(1, 0, &a), series_seed(1, 1, &a));
        assert_eq!(series_seed(1, 0, &a), series_seed(1, 0, &a));
    }

    #[test]
    fn margin_table_groups() {
        let rec = |n, metric, exact| SamplingRecord { row: 0, n, metric, exact, mc_estimate: exact, mc_stderr: 0.0 };
        let rows = margin_table(&[
            rec(1, Metric::FindMin, 0.1),
            rec(1, Metric::FindMin, 0.3),
            rec(1, Metric::WithinMargin(0.5), 0.9),
            rec(5, Metric::FindMin, 0.6),
            rec(5, Metric::NormalizedMin, 1.2),
        ]);
        assert_eq!(rows.len(), 3);
        assert_eq!((rows[0].n, rows[0].margin, rows[0].min, rows[0].max), (1, 0.0, 0.1, 0.3));
        assert!((rows[0].mean - 0.2).abs() < 1e-12);
        assert_eq!((rows[1].n, rows[1].margin), (1, 0.5));
        assert_eq!((rows[2].n, rows[2].margin), (5, 0.0));
    }

    #[test]
    fn config_validation() {
        let cfg = CampaignConfig {
            model_file: "m.json".into(),
            rows: None,
            iterations: 10,
            sweep: SweepSource::default(),
            patterns: vec![],
            t_aggon: vec![AggOn::Tras],
            temperatures: vec![Temperature::C50],
            output_dir: "out".into(),
            master_seed: 1,
            analyses: BTreeSet::new(),
            analysis: AnalysisOptions::default(),
        };
        assert!(matches!(cfg.validate(), Err(CampaignError::Config(_))));
        assert_eq!(CampaignError::Config(String::new()).exit_code(), 3);
    }
}
