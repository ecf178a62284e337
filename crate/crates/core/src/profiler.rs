//! RDT profiling loop: victim selection, RDT guessing, and repeated
//! bounded-sweep measurements.

use std::fmt;
use std::fs::{self, File};
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::device::{DeviceError, HammerRequest, RowState};
use crate::params::Condition;

/// Bootstrap measurements per RDT guess.
pub const GUESS_SAMPLES: usize = 10;
/// A row qualifies as victim when its guessed RDT is below this.
pub const VICTIM_THRESHOLD: u64 = 40_000;

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error(transparent)]
    Device(#[from] DeviceError),
    #[error("invalid sweep: {0}")]
    InvalidSweep(String),
    #[error("row {row}: all {n} bootstrap measurements saw no bitflip")]
    BootstrapNoFlip { row: u64, n: usize },
    #[error("no row with a guessed RDT below {threshold}")]
    NotFound { threshold: u64 },
    #[error("victim search needs at least one row")]
    EmptyRows,
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {reason}")]
    Parse { path: PathBuf, reason: String },
}

/// Hammer-count sweep used for every measurement of a series.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rdt_guess: Option<u64>,
    pub rdt_min: u64,
    pub rdt_max: u64,
    pub rdt_step: u64,
    pub iterations: u64,
}

impl SweepConfig {
    /// Sweep from guess/2 to guess*3 in steps of guess/100 (at least 1).
    pub fn from_guess(guess: u64, iterations: u64) -> Result<Self, ProfileError> {
        if guess == 0 {
            return Err(ProfileError::InvalidSweep("RDT guess must be positive".into()));
        }
        let step = ((guess as f64 / 100.0).round() as u64).max(1);
        let max = guess
            .checked_mul(3)
            .ok_or_else(|| ProfileError::InvalidSweep("RDT guess too large".into()))?;
        let mut cfg = SweepConfig::new((guess / 2).max(1), max, step, iterations)?;
        cfg.rdt_guess = Some(guess);
        Ok(cfg)
    }

    pub fn new(rdt_min: u64, rdt_max: u64, rdt_step: u64, iterations: u64) -> Result<Self, ProfileError> {
        let cfg = SweepConfig { rdt_guess: None, rdt_min, rdt_max, rdt_step, iterations };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ProfileError> {
        if self.rdt_min == 0 || self.rdt_step == 0 {
            return Err(ProfileError::InvalidSweep("rdt_min and rdt_step must be positive".into()));
        }
        if self.rdt_min >= self.rdt_max {
            return Err(ProfileError::InvalidSweep(format!(
                "rdt_min {} must be below rdt_max {}",
                self.rdt_min, self.rdt_max
            )));
        }
        if (self.rdt_max - self.rdt_min) / self.rdt_step < 1 {
            return Err(ProfileError::InvalidSweep("sweep has a single grid point".into()));
        }
        Ok(())
    }

    /// Hammer counts tried by one measurement, ascending, `rdt_max` inclusive.
    pub fn grid(&self) -> impl Iterator<Item = u64> {
        (self.rdt_min..=self.rdt_max).step_by(self.rdt_step as usize)
    }

    pub fn on_grid(&self, v: u64) -> bool {
        v >= self.rdt_min && v <= self.rdt_max && (v - self.rdt_min).is_multiple_of(self.rdt_step)
    }
}

/// Outcome of one bounded sweep.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Measurement {
    Rdt(u64),
    /// No hammer count in the sweep induced a bitflip.
    NoFlip,
}

impl Measurement {
    pub fn value(self) -> Option<u64> {
        match self {
            Measurement::Rdt(v) => Some(v),
            Measurement::NoFlip => None,
        }
    }
}

impl fmt::Display for Measurement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Measurement::Rdt(v) => write!(f, "{v}"),
            Measurement::NoFlip => f.write_str("noflip"),
        }
    }
}

impl FromStr for Measurement {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("noflip") {
            return Ok(Measurement::NoFlip);
        }
        match s.parse::<u64>() {
            Ok(v) if v > 0 => Ok(Measurement::Rdt(v)),
            _ => Err(format!("`{s}` is neither a positive RDT nor `noflip`")),
        }
    }
}

impl Serialize for Measurement {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Measurement {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Metadata stored next to a series CSV.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeriesMeta {
    pub row_address: u64,
    pub config: SweepConfig,
    #[serde(flatten)]
    pub condition: Condition,
    pub seed: u64,
    pub length: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MeasurementSeries {
    pub row_address: u64,
    pub config: SweepConfig,
    pub condition: Condition,
    pub seed: u64,
    pub values: Vec<Measurement>,
}

impl MeasurementSeries {
    /// Numeric measurements in order, sentinels dropped.
    pub fn numeric(&self) -> Vec<u64> {
        self.values.iter().filter_map(|m| m.value()).collect()
    }

    pub fn noflip_count(&self) -> usize {
        self.values.iter().filter(|m| **m == Measurement::NoFlip).count()
    }

    pub fn meta(&self) -> SeriesMeta {
        SeriesMeta {
            row_address: self.row_address,
            config: self.config.clone(),
            condition: self.condition,
            seed: self.seed,
            length: self.values.len() as u64,
        }
    }

    /// Writes `index,rdt` rows.
    pub fn write_csv<W: Write>(&self, w: W) -> io::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["index", "rdt"])?;
        for (i, m) in self.values.iter().enumerate() {
            out.write_record([i.to_string(), m.to_string()])?;
        }
        out.flush()
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Vec<Measurement>, String> {
        let mut rdr = csv::Reader::from_reader(r);
        let headers = rdr.headers().map_err(|e| e.to_string())?;
        if headers != vec!["index", "rdt"] {
            return Err(format!("expected header `index,rdt`, got `{}`", headers.iter().collect::<Vec<_>>().join(",")));
        }
        let mut values = Vec::new();
        for (expected, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| e.to_string())?;
            let index: usize = rec.get(0).unwrap_or("").parse().map_err(|_| format!("bad index at row {expected}"))?;
            if index != expected {
                return Err(format!("index {index} out of order, expected {expected}"));
            }
            values.push(rec.get(1).unwrap_or("").parse()?);
        }
        Ok(values)
    }

    /// Writes `<stem>.csv` and `<stem>.meta.json` under `dir`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<(PathBuf, PathBuf), ProfileError> {
        let csv_path = dir.join(format!("{stem}.csv"));
        let meta_path = dir.join(format!("{stem}.meta.json"));
        let io_err = |path: &Path| {
            let path = path.to_path_buf();
            move |source| ProfileError::Io { path, source }
        };
        let file = File::create(&csv_path).map_err(io_err(&csv_path))?;
        self.write_csv(BufWriter::new(file)).map_err(io_err(&csv_path))?;
        let mut meta = serde_json::to_string_pretty(&self.meta()).expect("metadata serializes");
        meta.push('\n');
        fs::write(&meta_path, meta).map_err(io_err(&meta_path))?;
        Ok((csv_path, meta_path))
    }

    pub fn load(csv_path: &Path, meta_path: &Path) -> Result<Self, ProfileError> {
        let parse_err = |path: &Path, reason: String| ProfileError::Parse { path: path.into(), reason };
        let meta_text =
            fs::read_to_string(meta_path).map_err(|source| ProfileError::Io { path: meta_path.into(), source })?;
        let meta: SeriesMeta = serde_json::from_str(&meta_text).map_err(|e| parse_err(meta_path, e.to_string()))?;
        let file = File::open(csv_path).map_err(|source| ProfileError::Io { path: csv_path.into(), source })?;
        let values = Self::read_csv(file).map_err(|e| parse_err(csv_path, e))?;
        if values.len() as u64 != meta.length {
            return Err(parse_err(csv_path, format!("{} values, metadata says {}", values.len(), meta.length)));
        }
        Ok(MeasurementSeries {
            row_address: meta.row_address,
            config: meta.config,
            condition: meta.condition,
            seed: meta.seed,
            values,
        })
    }
}

/// One RDT measurement: draw a latent RDT, then hammer with increasing
/// counts along the sweep grid until the first bitflip.
pub fn measure_rdt_once(
    row: &mut RowState,
    config: &SweepConfig,
    cond: &Condition,
) -> Result<Measurement, ProfileError> {
    row.draw_latent_rdt(cond)?;
    let mut req = HammerRequest::new(row.row_address, config.rdt_min, cond);
    for h in config.grid() {
        req.hammer_count = h;
        if row.hammer(&req)? {
            return Ok(Measurement::Rdt(h));
        }
    }
    Ok(Measurement::NoFlip)
}

/// `config.iterations` consecutive measurements of one row.
pub fn test_loop(row: &mut RowState, config: &SweepConfig, cond: &Condition) -> Result<MeasurementSeries, ProfileError> {
    config.validate()?;
    let values = (0..config.iterations)
        .map(|_| measure_rdt_once(row, config, cond))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(MeasurementSeries {
        row_address: row.row_address,
        config: config.clone(),
        condition: *cond,
        seed: row.seed(),
        values,
    })
}

/// Mean of `n` bootstrap measurements, rounded to the nearest integer.
///
/// The bootstrap sweep spans the row model's own grid, optionally capped at
/// `ceiling`. Sentinel measurements are left out of the mean.
pub fn guess_rdt(row: &mut RowState, cond: &Condition, n: usize, ceiling: Option<u64>) -> Result<u64, ProfileError> {
    let grid = row.model.grid;
    let top = ceiling.map_or(grid.max, |c| c.min(grid.max));
    let bootstrap = SweepConfig { rdt_guess: None, rdt_min: grid.min, rdt_max: top, rdt_step: grid.step, iterations: n as u64 };
    let mut sum: u128 = 0;
    let mut hits: u128 = 0;
    for _ in 0..n {
        if top < grid.min {
            // Empty sweep: still one draw per measurement.
            row.draw_latent_rdt(cond)?;
            continue;
        }
        if let Measurement::Rdt(v) = measure_rdt_once(row, &bootstrap, cond)? {
            sum += u128::from(v);
            hits += 1;
        }
    }
    if hits == 0 {
        return Err(ProfileError::BootstrapNoFlip { row: row.row_address, n });
    }
    Ok(((sum + hits / 2) / hits) as u64)
}

/// First row, by ascending address, whose guessed RDT is below `threshold`.
///
/// Returns `(rdt_guess, row_address)`. Rows whose bootstrap never flips do
/// not qualify.
pub fn find_victim(
    rows: &mut [RowState],
    cond: &Condition,
    threshold: u64,
    n: usize,
    ceiling: Option<u64>,
) -> Result<(u64, u64), ProfileError> {
    if rows.is_empty() {
        return Err(ProfileError::EmptyRows);
    }
    rows.sort_by_key(|r| r.row_address);
    for row in rows.iter_mut() {
        match guess_rdt(row, cond, n, ceiling) {
            Ok(g) if g < threshold => return Ok((g, row.row_address)),
            Ok(_) | Err(ProfileError::BootstrapNoFlip { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    Err(ProfileError::NotFound { threshold })
}
