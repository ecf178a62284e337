//! RDT test-time estimation from DRAM command schedules.
//!
//! Every measurement is modeled as a tightly packed command sequence:
//! initialize the victim and both aggressors, hammer double-sided, and read
//! the victim back. Durations are kept as integer picoseconds so schedule
//! sums are exact; nanosecond values are reported rounded to 0.01 ns.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, Mul};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::params::AggOn;
use crate::profiler::SweepConfig;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TimingError {
    #[error("bank-parallel schedules are defined for 16 banks, got {0}")]
    UnsupportedBankCount(u32),
    #[error("parallel_banks must be 1 or 16, got {0}")]
    UnsupportedParallelism(u32),
    #[error("campaign field `{0}` must be positive")]
    NonPositive(&'static str),
    #[error("campaign time overflows 128-bit picoseconds")]
    Overflow,
}

/// A duration in whole picoseconds.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Picos(pub u128);

impl Picos {
    pub const ZERO: Picos = Picos(0);

    pub const fn from_ps(ps: u64) -> Self {
        Picos(ps as u128)
    }

    pub fn as_ns(self) -> f64 {
        self.0 as f64 / 1e3
    }

    /// Nanoseconds rounded to two decimals (half away from zero).
    pub fn ns_centi(self) -> f64 {
        // 10 ps = 0.01 ns
        let centi = (self.0 + 5) / 10;
        centi as f64 / 100.0
    }

    pub fn as_secs(self) -> f64 {
        self.0 as f64 / 1e12
    }

    pub fn checked_mul(self, k: u128) -> Option<Picos> {
        self.0.checked_mul(k).map(Picos)
    }

    pub fn max(self, other: Picos) -> Picos {
        if self >= other {
            self
        } else {
            other
        }
    }
}

impl Add for Picos {
    type Output = Picos;
    fn add(self, rhs: Picos) -> Picos {
        Picos(self.0 + rhs.0)
    }
}

impl Mul<u64> for Picos {
    type Output = Picos;
    fn mul(self, rhs: u64) -> Picos {
        Picos(self.0 * rhs as u128)
    }
}

impl Sum for Picos {
    fn sum<I: Iterator<Item = Picos>>(iter: I) -> Picos {
        iter.fold(Picos::ZERO, Add::add)
    }
}

impl fmt::Display for Picos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.2} ns", self.ns_centi())
    }
}

/// DDR5 timing parameters at 8800 MT/s.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimingParams {
    pub t_rrd_s: Picos,
    pub t_ccd_s: Picos,
    pub t_ccd_l: Picos,
    pub t_ccd_l_wr: Picos,
    pub t_rcd: Picos,
    pub t_rp: Picos,
    pub t_ras: Picos,
    pub t_rtp: Picos,
    pub t_wr: Picos,
    pub t_refi: Picos,
}

impl Default for TimingParams {
    fn default() -> Self {
        TimingParams {
            t_rrd_s: Picos::from_ps(1_816),
            t_ccd_s: Picos::from_ps(1_816),
            t_ccd_l: Picos::from_ps(5_000),
            t_ccd_l_wr: Picos::from_ps(20_000),
            t_rcd: Picos::from_ps(14_090),
            t_rp: Picos::from_ps(14_090),
            t_ras: Picos::from_ps(32_000),
            t_rtp: Picos::from_ps(7_500),
            t_wr: Picos::from_ps(30_000),
            t_refi: Picos::from_ps(7_800_000),
        }
    }
}

impl TimingParams {
    /// Resolves an aggressor on-time to a duration.
    pub fn aggon(&self, aggon: AggOn) -> Picos {
        match aggon {
            AggOn::Tras => self.t_ras,
            AggOn::Trefi => self.t_refi,
            AggOn::NineTrefi => self.t_refi * 9,
            AggOn::Custom { ps } => Picos::from_ps(ps),
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Command {
    Act,
    Write,
    Read,
    Pre,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Victim,
    Agg1,
    Agg2,
}

/// Which timing constraint sets the delay after a command.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Timing {
    Rcd,
    Rp,
    Wr,
    Rtp,
    CcdL,
    CcdLWr,
    CcdS,
    RrdS,
    AggOn,
    /// max(tAggOn, 16 x tRRD_S)
    AggOnOrRrdBurst,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduledCommand {
    pub command: Command,
    pub target: Target,
    pub timing: Timing,
    pub delay: Picos,
    pub repeat: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommandSchedule {
    pub commands: Vec<ScheduledCommand>,
}

impl CommandSchedule {
    fn push(&mut self, command: Command, target: Target, timing: Timing, delay: Picos, repeat: u64) {
        if repeat > 0 {
            self.commands.push(ScheduledCommand { command, target, timing, delay, repeat });
        }
    }

    pub fn command_count(&self) -> u64 {
        self.commands.iter().map(|c| c.repeat).sum()
    }
}

/// Sum of `delay x repeat` over the schedule.
pub fn schedule_time(schedule: &CommandSchedule) -> Picos {
    schedule.commands.iter().map(|c| c.delay * c.repeat).sum()
}

const INIT_TARGETS: [Target; 3] = [Target::Victim, Target::Agg1, Target::Agg2];
const COLUMN_BURSTS: u64 = 128;
pub const BANK_PARALLEL_BANKS: u32 = 16;

fn push_hammers(s: &mut CommandSchedule, p: &TimingParams, hammer_count: u64, timing: Timing, on: Picos) {
    for agg in [Target::Agg1, Target::Agg2] {
        s.push(Command::Act, agg, timing, on, hammer_count);
        s.push(Command::Pre, agg, Timing::Rp, p.t_rp, hammer_count);
    }
}

fn push_readback(s: &mut CommandSchedule, p: &TimingParams) {
    s.push(Command::Act, Target::Victim, Timing::Rcd, p.t_rcd, 1);
    s.push(Command::Read, Target::Victim, Timing::CcdL, p.t_ccd_l, COLUMN_BURSTS - 1);
    s.push(Command::Read, Target::Victim, Timing::Rtp, p.t_rtp, 1);
}

/// One RDT measurement of one victim row in one bank.
///
/// Hammer pairs are listed as four aggregated entries (ACT/PRE per
/// aggressor); their order does not change the total.
pub fn build_single_bank_schedule(p: &TimingParams, hammer_count: u64, aggon: AggOn) -> CommandSchedule {
    let mut s = CommandSchedule::default();
    for target in INIT_TARGETS {
        s.push(Command::Act, target, Timing::Rcd, p.t_rcd, 1);
        s.push(Command::Write, target, Timing::CcdLWr, p.t_ccd_l_wr, COLUMN_BURSTS - 1);
        s.push(Command::Write, target, Timing::Wr, p.t_wr, 1);
        s.push(Command::Pre, target, Timing::Rp, p.t_rp, 1);
    }
    push_hammers(&mut s, p, hammer_count, Timing::AggOn, p.aggon(aggon));
    push_readback(&mut s, p);
    s
}

/// One RDT measurement of the same victim row address in 16 banks at once.
pub fn build_bank_parallel_schedule(
    p: &TimingParams,
    hammer_count: u64,
    aggon: AggOn,
    banks: u32,
) -> Result<CommandSchedule, TimingError> {
    if banks != BANK_PARALLEL_BANKS {
        return Err(TimingError::UnsupportedBankCount(banks));
    }
    let banks = u64::from(banks);
    let mut s = CommandSchedule::default();
    for target in INIT_TARGETS {
        s.push(Command::Act, target, Timing::RrdS, p.t_rrd_s, banks);
        s.push(Command::Write, target, Timing::CcdS, p.t_ccd_s, banks * (COLUMN_BURSTS - 1));
        s.push(Command::Write, target, Timing::Wr, p.t_wr, 1);
        s.push(Command::Pre, target, Timing::Rp, p.t_rp, 1);
    }
    let spacing = p.aggon(aggon).max(p.t_rrd_s * banks);
    push_hammers(&mut s, p, hammer_count, Timing::AggOnOrRrdBurst, spacing);
    push_readback(&mut s, p);
    Ok(s)
}

/// Cost of one double-sided hammer (both aggressors activated once).
pub fn hammer_pair_cost(p: &TimingParams, aggon: AggOn, parallel_banks: u32) -> Picos {
    let on = if parallel_banks == 1 {
        p.aggon(aggon)
    } else {
        p.aggon(aggon).max(p.t_rrd_s * u64::from(parallel_banks))
    };
    (on + p.t_rp) * 2
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CampaignSpec {
    /// Victim rows per bank.
    pub rows: u64,
    pub banks: u32,
    pub measurements_per_row: u64,
    pub hammer_count: u64,
    pub t_aggon: AggOn,
    pub patterns: u32,
    pub temperatures: u32,
    pub parallel_banks: u32,
}

impl CampaignSpec {
    pub fn single_row(measurements: u64, hammer_count: u64, t_aggon: AggOn) -> Self {
        CampaignSpec {
            rows: 1,
            banks: 1,
            measurements_per_row: measurements,
            hammer_count,
            t_aggon,
            patterns: 1,
            temperatures: 1,
            parallel_banks: 1,
        }
    }

    pub fn validate(&self) -> Result<(), TimingError> {
        let fields: [(&'static str, u64); 5] = [
            ("rows", self.rows),
            ("banks", u64::from(self.banks)),
            ("measurements_per_row", self.measurements_per_row),
            ("patterns", u64::from(self.patterns)),
            ("temperatures", u64::from(self.temperatures)),
        ];
        if let Some((name, _)) = fields.iter().find(|(_, v)| *v == 0) {
            return Err(TimingError::NonPositive(name));
        }
        if self.hammer_count == 0 {
            return Err(TimingError::NonPositive("hammer_count"));
        }
        match self.parallel_banks {
            1 | BANK_PARALLEL_BANKS => Ok(()),
            other => Err(TimingError::UnsupportedParallelism(other)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CampaignTime {
    pub per_measurement: Picos,
    /// Number of sequential measurement slots the campaign needs.
    pub slots: u128,
    pub total: Picos,
}

/// Wall-clock time of a profiling campaign.
///
/// Uses one hammer session of `hammer_count` per measurement. With
/// `parallel_banks = 16` banks are tested in groups of 16 using the
/// bank-parallel schedule.
pub fn campaign_time(p: &TimingParams, spec: &CampaignSpec) -> Result<CampaignTime, TimingError> {
    spec.validate()?;
    let (schedule, bank_slots) = if spec.parallel_banks == 1 {
        (build_single_bank_schedule(p, spec.hammer_count, spec.t_aggon), u128::from(spec.banks))
    } else {
        let groups = spec.banks.div_ceil(BANK_PARALLEL_BANKS);
        (
            build_bank_parallel_schedule(p, spec.hammer_count, spec.t_aggon, BANK_PARALLEL_BANKS)?,
            u128::from(groups),
        )
    };
    let per_measurement = schedule_time(&schedule);
    let slots = [
        u128::from(spec.measurements_per_row),
        u128::from(spec.patterns),
        u128::from(spec.temperatures),
        bank_slots,
    ]
    .into_iter()
    .try_fold(u128::from(spec.rows), |acc, k| acc.checked_mul(k))
    .ok_or(TimingError::Overflow)?;
    let total = per_measurement.checked_mul(slots).ok_or(TimingError::Overflow)?;
    Ok(CampaignTime { per_measurement, slots, total })
}

/// Time for one measurement taken the way the profiler sweeps: a full
/// initialize/hammer/readback pass for every grid hammer count from
/// `rdt_min` upward, stopping at the first `H >= flip_at` (or at the end of
/// the grid when `flip_at` is `None` or beyond it).
pub fn sweep_measurement_time(p: &TimingParams, config: &SweepConfig, aggon: AggOn, flip_at: Option<u64>) -> Picos {
    let base = schedule_time(&build_single_bank_schedule(p, 0, aggon));
    let pair = hammer_pair_cost(p, aggon, 1);
    let mut total = Picos::ZERO;
    for h in config.grid() {
        total = total + base + pair * h;
        if flip_at.is_some_and(|f| h >= f) {
            break;
        }
    }
    total
}

/// Output of the `esttime` command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeEstimate {
    pub per_measurement_ns: f64,
    pub total_seconds: f64,
    pub human_readable: String,
}

impl From<CampaignTime> for TimeEstimate {
    fn from(t: CampaignTime) -> Self {
        TimeEstimate {
            per_measurement_ns: t.per_measurement.ns_centi(),
            total_seconds: t.total.as_secs(),
            human_readable: human_readable(t.total),
        }
    }
}

pub fn human_readable(d: Picos) -> String {
    let s = d.as_secs();
    const MIN: f64 = 60.0;
    const HOUR: f64 = 3600.0;
    const DAY: f64 = 86_400.0;
    const YEAR: f64 = 365.0 * DAY;
    if s < 1e-6 {
        format!("{:.2} ns", d.ns_centi())
    } else if s < 1e-3 {
        format!("{:.2} us", s * 1e6)
    } else if s < 1.0 {
        format!("{:.2} ms", s * 1e3)
    } else if s < 2.0 * MIN {
        format!("{s:.2} seconds")
    } else if s < 2.0 * HOUR {
        format!("{:.1} minutes", s / MIN)
    } else if s < 2.0 * DAY {
        format!("{:.1} hours", s / HOUR)
    } else if s < 2.0 * YEAR {
        format!("{:.1} days", s / DAY)
    } else {
        format!("{:.1} years", s / YEAR)
    }
}
