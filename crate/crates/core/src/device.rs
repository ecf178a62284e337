//! Generative models of time-varying read-disturbance thresholds.
//!
//! A [`RowState`] holds one latent RDT per measurement sweep. The profiler
//! calls [`RowState::draw_latent_rdt`] once at the start of every sweep and
//! then asks [`RowState::hammer`] whether a given hammer count flips a bit.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::params::{AggOn, AggOnClass, Condition, DataPattern, Temperature};
use crate::seed::{derive_seed, substream};

#[derive(Debug, Error)]
pub enum DeviceError {
    #[error("invalid grid: min {min} > max {max}")]
    InvalidGrid { min: u64, max: u64 },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("replay list of row {row} exhausted after {len} values")]
    ReplayExhausted { row: u64, len: usize },
    #[error("row {row} was hammered before any RDT was drawn")]
    NoDraw { row: u64 },
    #[error("invalid hammer request: {0}")]
    InvalidRequest(String),
    #[error("row {0} is not part of the device model")]
    UnknownRow(u64),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {reason}")]
    Parse { path: PathBuf, reason: String },
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    DiscreteNormal,
    BimodalMixture,
    EmpiricalReplay,
    Constant,
}

/// The hammer-count lattice an RDT value lives on: `min + k * step`, capped
/// at `max`.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    pub min: u64,
    pub max: u64,
    pub step: u64,
}

impl Grid {
    pub fn new(min: u64, max: u64, step: u64) -> Result<Self, DeviceError> {
        let g = Grid { min, max, step };
        g.validate()?;
        Ok(g)
    }

    /// Unit-step grid `[1, max]`; quantization is the identity on it.
    pub fn unit(max: u64) -> Self {
        Grid { min: 1, max, step: 1 }
    }

    pub fn validate(&self) -> Result<(), DeviceError> {
        if self.min > self.max {
            return Err(DeviceError::InvalidGrid { min: self.min, max: self.max });
        }
        if self.min == 0 || self.step == 0 {
            return Err(DeviceError::InvalidModel("grid min and step must be positive".into()));
        }
        Ok(())
    }

    /// Largest grid point not above `max`.
    pub fn top(&self) -> u64 {
        self.min + (self.max - self.min) / self.step * self.step
    }

    /// Nearest grid point to `x`, clamped into the grid.
    pub fn quantize(&self, x: f64) -> u64 {
        let k = ((x - self.min as f64) / self.step as f64).round();
        if k.is_nan() || k <= 0.0 {
            return self.min;
        }
        let max_k = (self.max - self.min) / self.step;
        self.min + (k as u64).min(max_k) * self.step
    }

    pub fn contains(&self, v: u64) -> bool {
        v >= self.min && v <= self.max && (v - self.min).is_multiple_of(self.step)
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mixture {
    /// Probability of drawing from this second component.
    pub weight: f64,
    pub mean: f64,
    pub stddev: f64,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ModifierKey {
    pub pattern: DataPattern,
    pub t_aggon: AggOnClass,
    pub temperature: Temperature,
}

impl From<&Condition> for ModifierKey {
    fn from(c: &Condition) -> Self {
        ModifierKey { pattern: c.pattern, t_aggon: c.t_aggon.class(), temperature: c.temperature }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Modifier {
    #[serde(flatten)]
    pub key: ModifierKey,
    pub scale: f64,
}

mod modifier_list {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(map: &BTreeMap<ModifierKey, f64>, s: S) -> Result<S::Ok, S::Error> {
        let list: Vec<Modifier> = map.iter().map(|(k, v)| Modifier { key: *k, scale: *v }).collect();
        list.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<ModifierKey, f64>, D::Error> {
        let list = Vec::<Modifier>::deserialize(d)?;
        Ok(list.into_iter().map(|m| (m.key, m.scale)).collect())
    }
}

/// Generative description of one row's RDT over time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RdtModel {
    pub family: Family,
    pub mean: f64,
    #[serde(default)]
    pub stddev: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mixture: Option<Mixture>,
    pub grid: Grid,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replay_values: Option<Vec<u64>>,
    /// Multiplicative scale per test condition; missing keys scale by 1.
    #[serde(default, with = "modifier_list", skip_serializing_if = "BTreeMap::is_empty")]
    pub modifiers: BTreeMap<ModifierKey, f64>,
}

impl RdtModel {
    pub fn constant(value: u64, grid: Grid) -> Self {
        RdtModel {
            family: Family::Constant,
            mean: value as f64,
            stddev: 0.0,
            mixture: None,
            grid,
            replay_values: None,
            modifiers: BTreeMap::new(),
        }
    }

    pub fn discrete_normal(mean: f64, stddev: f64, grid: Grid) -> Self {
        RdtModel { family: Family::DiscreteNormal, stddev, ..RdtModel::constant(0, grid) }.with_mean(mean)
    }

    pub fn bimodal(mean: f64, stddev: f64, second: Mixture, grid: Grid) -> Self {
        RdtModel {
            family: Family::BimodalMixture,
            stddev,
            mixture: Some(second),
            ..RdtModel::constant(0, grid)
        }
        .with_mean(mean)
    }

    /// Replays `values` in order on a unit grid reaching the largest value.
    pub fn replay(values: Vec<u64>) -> Self {
        let max = values.iter().copied().max().unwrap_or(1).max(1);
        RdtModel::replay_on(values, Grid::unit(max))
    }

    pub fn replay_on(values: Vec<u64>, grid: Grid) -> Self {
        let mean = if values.is_empty() {
            0.0
        } else {
            values.iter().map(|&v| v as f64).sum::<f64>() / values.len() as f64
        };
        RdtModel {
            family: Family::EmpiricalReplay,
            mean,
            replay_values: Some(values),
            ..RdtModel::constant(0, grid)
        }
    }

    fn with_mean(mut self, mean: f64) -> Self {
        self.mean = mean;
        self
    }

    pub fn with_modifier(mut self, key: ModifierKey, scale: f64) -> Self {
        self.modifiers.insert(key, scale);
        self
    }

    pub fn validate(&self) -> Result<(), DeviceError> {
        self.grid.validate()?;
        let bad = |msg: &str| Err(DeviceError::InvalidModel(msg.to_string()));
        if !(self.mean.is_finite() && self.stddev.is_finite() && self.stddev >= 0.0) {
            return bad("mean and stddev must be finite, stddev non-negative");
        }
        match self.family {
            Family::Constant | Family::DiscreteNormal | Family::BimodalMixture => {
                if self.mean.is_nan() || self.mean <= 0.0 {
                    return bad("mean must be positive");
                }
                if self.mean < self.grid.min as f64 || self.mean > self.grid.max as f64 {
                    return bad("mean must lie within [grid.min, grid.max]");
                }
            }
            Family::EmpiricalReplay => match &self.replay_values {
                Some(v) if !v.is_empty() && v.iter().all(|&x| x > 0) => {}
                _ => return bad("empirical replay needs a nonempty list of positive values"),
            },
        }
        if self.family == Family::BimodalMixture {
            match self.mixture {
                Some(m) if (0.0..=1.0).contains(&m.weight) && m.mean > 0.0 && m.stddev >= 0.0 => {}
                Some(_) => return bad("mixture weight must be in [0, 1] with positive mean"),
                None => return bad("bimodal mixture needs a second component"),
            }
        }
        if self.modifiers.values().any(|s| !(s.is_finite() && *s > 0.0)) {
            return bad("modifier scales must be positive");
        }
        Ok(())
    }

    pub fn scale_for(&self, cond: &Condition) -> f64 {
        self.modifiers.get(&ModifierKey::from(cond)).copied().unwrap_or(1.0)
    }

    /// Draws one grid-quantized value. `draw_index` selects the replay
    /// element for replay models.
    pub fn sample<R: Rng>(&self, rng: &mut R, scale: f64, draw_index: u64, row: u64) -> Result<u64, DeviceError> {
        let raw = match self.family {
            Family::Constant => self.mean * scale,
            Family::DiscreteNormal => normal(rng, self.mean * scale, self.stddev * scale),
            Family::BimodalMixture => {
                let m = self.mixture.expect("validated");
                if rng.random_bool(m.weight) {
                    normal(rng, m.mean * scale, m.stddev * scale)
                } else {
                    normal(rng, self.mean * scale, self.stddev * scale)
                }
            }
            Family::EmpiricalReplay => {
                let values = self.replay_values.as_deref().unwrap_or_default();
                let v = usize::try_from(draw_index)
                    .ok()
                    .and_then(|i| values.get(i))
                    .ok_or(DeviceError::ReplayExhausted { row, len: values.len() })?;
                *v as f64 * scale
            }
        };
        Ok(self.grid.quantize(raw))
    }
}

fn normal<R: Rng>(rng: &mut R, mean: f64, sd: f64) -> f64 {
    if sd == 0.0 {
        return mean;
    }
    Normal::new(mean, sd).expect("finite parameters").sample(rng)
}

/// Informational only; has no effect on the model.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellEncoding {
    #[default]
    True,
    Anti,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HammerRequest {
    pub row_address: u64,
    /// Activations per aggressor.
    pub hammer_count: u64,
    pub t_aggon: AggOn,
    pub data_pattern: DataPattern,
    pub temperature: Temperature,
}

impl HammerRequest {
    pub fn new(row_address: u64, hammer_count: u64, cond: &Condition) -> Self {
        HammerRequest {
            row_address,
            hammer_count,
            t_aggon: cond.t_aggon,
            data_pattern: cond.pattern,
            temperature: cond.temperature,
        }
    }
}

/// One simulated victim row.
#[derive(Clone, Debug)]
pub struct RowState {
    pub row_address: u64,
    pub model: RdtModel,
    pub cell_encoding: CellEncoding,
    seed: u64,
    latent_rdt: Option<u64>,
    draw_count: u64,
}

impl RowState {
    pub fn new(row_address: u64, model: RdtModel, seed: u64) -> Result<Self, DeviceError> {
        model.validate()?;
        Ok(RowState {
            row_address,
            model,
            cell_encoding: CellEncoding::default(),
            seed,
            latent_rdt: None,
            draw_count: 0,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn latent_rdt(&self) -> Option<u64> {
        self.latent_rdt
    }

    /// Number of completed draws (one per measurement sweep).
    pub fn draw_count(&self) -> u64 {
        self.draw_count
    }

    /// Starts a new sweep by drawing a fresh latent RDT.
    ///
    /// Draw `i` uses substream `i` of the row seed, so the value depends
    /// only on `(seed, draw_count)`.
    pub fn draw_latent_rdt(&mut self, cond: &Condition) -> Result<u64, DeviceError> {
        let mut rng = substream(self.seed, self.draw_count);
        let scale = self.model.scale_for(cond);
        let v = self.model.sample(&mut rng, scale, self.draw_count, self.row_address)?;
        self.latent_rdt = Some(v);
        self.draw_count += 1;
        Ok(v)
    }

    /// Whether hammering with `req.hammer_count` flips a bit in the current
    /// sweep.
    pub fn hammer(&self, req: &HammerRequest) -> Result<bool, DeviceError> {
        if req.row_address != self.row_address {
            return Err(DeviceError::InvalidRequest(format!(
                "request for row {} sent to row {}",
                req.row_address, self.row_address
            )));
        }
        if req.hammer_count == 0 {
            return Err(DeviceError::InvalidRequest("hammer_count must be at least 1".into()));
        }
        if !req.t_aggon.is_valid() {
            return Err(DeviceError::InvalidRequest(format!("t_aggon {} is below minimum tRAS", req.t_aggon)));
        }
        let latent = self.latent_rdt.ok_or(DeviceError::NoDraw { row: self.row_address })?;
        Ok(req.hammer_count >= latent)
    }
}

/// One record of a model file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RowModelRecord {
    pub row: u64,
    #[serde(flatten)]
    pub model: RdtModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replay_file: Option<PathBuf>,
    #[serde(default)]
    pub cell_encoding: CellEncoding,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub rows: Vec<RowModelRecord>,
}

impl ModelFile {
    /// Reads a model file and resolves `replay_file` entries relative to it.
    pub fn load(path: &Path) -> Result<Self, DeviceError> {
        let text = fs::read_to_string(path).map_err(|source| DeviceError::Io { path: path.into(), source })?;
        let mut file: ModelFile = serde_json::from_str(&text)
            .map_err(|e| DeviceError::Parse { path: path.into(), reason: e.to_string() })?;
        let base = path.parent().unwrap_or(Path::new("."));
        for rec in &mut file.rows {
            if let Some(rel) = &rec.replay_file {
                let values = read_replay_file(&base.join(rel))?;
                rec.model.replay_values = Some(values);
            }
        }
        file.validate()?;
        Ok(file)
    }

    pub fn validate(&self) -> Result<(), DeviceError> {
        let mut seen = std::collections::BTreeSet::new();
        for rec in &self.rows {
            if !seen.insert(rec.row) {
                return Err(DeviceError::InvalidModel(format!("row {} listed twice", rec.row)));
            }
            rec.model
                .validate()
                .map_err(|e| DeviceError::InvalidModel(format!("row {}: {e}", rec.row)))?;
        }
        Ok(())
    }

    pub fn get(&self, row: u64) -> Result<&RowModelRecord, DeviceError> {
        self.rows.iter().find(|r| r.row == row).ok_or(DeviceError::UnknownRow(row))
    }

    /// Fresh row state whose stream is keyed by `(campaign_seed, row, extra...)`.
    pub fn row_state(&self, row: u64, seed_parts: &[u64]) -> Result<RowState, DeviceError> {
        let rec = self.get(row)?;
        let mut parts = vec![row];
        parts.extend_from_slice(seed_parts);
        let mut state = RowState::new(row, rec.model.clone(), derive_seed(&parts))?;
        state.cell_encoding = rec.cell_encoding;
        Ok(state)
    }
}

/// One positive integer per line; blank lines are ignored.
pub fn read_replay_file(path: &Path) -> Result<Vec<u64>, DeviceError> {
    let text = fs::read_to_string(path).map_err(|source| DeviceError::Io { path: path.into(), source })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim().parse::<u64>().map_err(|e| DeviceError::Parse {
                path: path.into(),
                reason: format!("line {}: {e}", i + 1),
            })
        })
        .collect()
}
