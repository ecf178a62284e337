//! CSV and plot-data emitters.
//!
//! Numeric CSV cells use the shortest representation that round-trips;
//! only the markdown summary rounds.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::sampling::{BoxPlotRow, SamplingRecord, ScurvePoint};
use crate::stats::{ChiSquareFit, RunLengthHistogram, SeriesStats};

fn create(path: &Path) -> io::Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

/// Serializes `rows` as CSV with a header derived from the row type.
pub fn write_records<T: Serialize>(path: &Path, rows: &[T]) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()
}

/// Two-column `x,y` plot data.
pub fn write_xy(path: &Path, points: impl IntoIterator<Item = (f64, f64)>) -> io::Result<()> {
    let mut w = create(path)?;
    writeln!(w, "x,y")?;
    for (x, y) in points {
        writeln!(w, "{x},{y}")?;
    }
    w.flush()
}

#[derive(Serialize)]
pub struct StatsRow<'a> {
    pub series: &'a str,
    pub row: u64,
    pub count: usize,
    pub noflip: usize,
    pub mean: f64,
    pub stddev: f64,
    pub min: f64,
    pub max: f64,
    pub cv: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub unique_values: usize,
}

impl<'a> StatsRow<'a> {
    pub fn new(series: &'a str, row: u64, s: &SeriesStats<f64>) -> Self {
        StatsRow {
            series,
            row,
            count: s.count,
            noflip: s.noflip,
            mean: s.mean,
            stddev: s.stddev,
            min: s.min,
            max: s.max,
            cv: s.cv,
            q1: s.quartiles.q1,
            median: s.quartiles.median,
            q3: s.quartiles.q3,
            unique_values: s.unique_values,
        }
    }
}

#[derive(Serialize)]
struct RunLengthRow<'a> {
    series: &'a str,
    run_length: usize,
    count: usize,
}

pub fn write_run_lengths(path: &Path, hists: &[(String, RunLengthHistogram)]) -> io::Result<()> {
    let rows: Vec<RunLengthRow> = hists
        .iter()
        .flat_map(|(id, h)| h.0.iter().map(move |(&run_length, &count)| RunLengthRow { series: id, run_length, count }))
        .collect();
    write_records(path, &rows)
}

#[derive(Serialize)]
struct AcfRow<'a> {
    series: &'a str,
    lag: usize,
    acf: f64,
}

pub fn write_acf(path: &Path, acfs: &[(String, Vec<f64>)]) -> io::Result<()> {
    let rows: Vec<AcfRow> = acfs
        .iter()
        .flat_map(|(id, r)| r.iter().enumerate().map(move |(lag, &acf)| AcfRow { series: id, lag, acf }))
        .collect();
    write_records(path, &rows)
}

#[derive(Serialize)]
struct ChiRow<'a> {
    series: &'a str,
    statistic: f64,
    p_value: f64,
    dof: usize,
    bins: usize,
    reject: bool,
}

pub fn write_chi_square(path: &Path, fits: &[(String, ChiSquareFit)]) -> io::Result<()> {
    let rows: Vec<ChiRow> = fits
        .iter()
        .map(|(id, f)| ChiRow {
            series: id,
            statistic: f.statistic,
            p_value: f.p_value,
            dof: f.dof,
            bins: f.bins,
            reject: f.reject,
        })
        .collect();
    write_records(path, &rows)
}

pub fn write_sampling(path: &Path, records: &[SamplingRecord]) -> io::Result<()> {
    write_records(path, records)
}

pub fn write_boxplot(path: &Path, rows: &[BoxPlotRow]) -> io::Result<()> {
    write_records(path, rows)
}

#[derive(Serialize)]
struct ScurveRow {
    rank: usize,
    row: u64,
    max_cv: f64,
}

pub fn write_scurve(path: &Path, points: &[ScurvePoint]) -> io::Result<()> {
    let rows: Vec<ScurveRow> =
        points.iter().enumerate().map(|(rank, p)| ScurveRow { rank, row: p.row, max_cv: p.max_cv }).collect();
    write_records(path, &rows)
}

/// Probability that `N` measurements find the minimum within a margin,
/// aggregated across series.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MarginRow {
    #[serde(rename = "N")]
    pub n: usize,
    pub margin: f64,
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

pub fn write_margin_table(path: &Path, rows: &[MarginRow]) -> io::Result<()> {
    write_records(path, rows)
}

/// Human-readable summary; values are rounded for display only.
pub fn markdown_summary(stats: &[(String, SeriesStats<f64>)], fits: &[(String, ChiSquareFit)], boxes: &[BoxPlotRow]) -> String {
    let mut s = String::from("# VRD campaign report\n\n");
    if !stats.is_empty() {
        s.push_str("## Series\n\n| series | n | noflip | mean | min | max | CV | unique |\n|---|---|---|---|---|---|---|---|\n");
        for (id, st) in stats {
            let _ = writeln!(
                s,
                "| {id} | {} | {} | {:.1} | {:.0} | {:.0} | {:.4} | {} |",
                st.count, st.noflip, st.mean, st.min, st.max, st.cv, st.unique_values
            );
        }
        s.push('\n');
    }
    if !fits.is_empty() {
        s.push_str("## Normality (chi-square)\n\n| series | statistic | dof | p-value | reject |\n|---|---|---|---|---|\n");
        for (id, f) in fits {
            let _ = writeln!(s, "| {id} | {:.2} | {} | {:.3} | {} |", f.statistic, f.dof, f.p_value, f.reject);
        }
        s.push('\n');
    }
    if !boxes.is_empty() {
        s.push_str("## Sampling (exact, across series)\n\n| N | metric | min | median | mean | max |\n|---|---|---|---|---|---|\n");
        for b in boxes {
            let _ = writeln!(s, "| {} | {} | {:.4} | {:.4} | {:.4} | {:.4} |", b.n, b.metric, b.min, b.median, b.mean, b.max);
        }
    }
    s
}
