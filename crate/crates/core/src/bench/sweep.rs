//! One run per grid point and transaction type, tabulated and plotted.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use plotters::prelude::*;
use serde::{Deserialize, Serialize};

use super::load::{run_prepared, LoadConfig, Prepared, TopologySpec, TransactionMix};
use super::report::{BenchReport, TxKind};
use super::BenchError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepKind {
    /// Grid values are transactions per second.
    SendRate,
    /// Grid values are peers per org.
    Peers,
    /// Grid values are datacenter counts.
    Geo,
}

impl SweepKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepKind::SendRate => "send-rate",
            SweepKind::Peers => "peers",
            SweepKind::Geo => "geo",
        }
    }

    fn axis(self) -> &'static str {
        match self {
            SweepKind::SendRate => "send rate (tx/s)",
            SweepKind::Peers => "peers per org",
            SweepKind::Geo => "datacenters",
        }
    }
}

impl FromStr for SweepKind {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "send-rate" => Ok(SweepKind::SendRate),
            "peers" => Ok(SweepKind::Peers),
            "geo" => Ok(SweepKind::Geo),
            other => Err(BenchError::InvalidConfig(format!("unknown sweep kind {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SweepRow {
    pub x: f64,
    pub tx_type: TxKind,
    pub send_rate: f64,
    pub submitted: usize,
    pub valid: usize,
    pub invalid: usize,
    pub failed: usize,
    pub throughput: f64,
    pub latency_mean: f64,
    pub latency_median: f64,
    pub latency_p95: f64,
    pub latency_p99: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SweepResult {
    pub kind: SweepKind,
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    /// Rows of one transaction type, in grid order.
    pub fn series(&self, kind: TxKind) -> Vec<&SweepRow> {
        self.rows.iter().filter(|r| r.tx_type == kind).collect()
    }
}

/// `base` with the swept parameter set to `x`.
pub fn point_config(kind: SweepKind, x: f64, base: &LoadConfig) -> Result<LoadConfig, BenchError> {
    let mut c = base.clone();
    let count = |x: f64| -> Result<usize, BenchError> {
        if x >= 1.0 && x.fract() == 0.0 {
            Ok(x as usize)
        } else {
            Err(BenchError::InvalidConfig(format!("{} grid value {x} is not a positive integer", kind.as_str())))
        }
    };
    match kind {
        SweepKind::SendRate => c.send_rate = x,
        SweepKind::Peers | SweepKind::Geo => {
            let n = count(x)?;
            let TopologySpec::Generated { peers_per_org, datacenters, .. } = &mut c.topology else {
                return Err(BenchError::InvalidConfig("peer and geo sweeps need a generated topology".into()));
            };
            if kind == SweepKind::Peers {
                *peers_per_org = n;
            } else {
                *datacenters = n;
            }
        }
    }
    Ok(c)
}

/// Runs every grid point once per transaction type of the base mix, each
/// type on its own.
pub fn sweep(kind: SweepKind, grid: &[f64], base: &LoadConfig, prepared: &Prepared) -> Result<SweepResult, BenchError> {
    sweep_with(kind, grid, base, prepared, |_, _| {})
}

/// [`sweep`] with a callback after every run.
pub fn sweep_with(
    kind: SweepKind,
    grid: &[f64],
    base: &LoadConfig,
    prepared: &Prepared,
    mut on_run: impl FnMut(&SweepRow, &BenchReport),
) -> Result<SweepResult, BenchError> {
    if grid.is_empty() {
        return Err(BenchError::InvalidConfig("empty grid".into()));
    }
    let mut rows = Vec::new();
    for tx in base.transaction_mix.kinds() {
        for &x in grid {
            let mut cfg = point_config(kind, x, base)?;
            cfg.transaction_mix = TransactionMix::only(tx);
            let report = run_prepared(&cfg, prepared)?;
            let k = report.kind(tx).cloned().unwrap_or_default();
            let row = SweepRow {
                x,
                tx_type: tx,
                send_rate: cfg.send_rate,
                submitted: k.submitted,
                valid: k.valid,
                invalid: k.invalid,
                failed: k.failed,
                throughput: k.throughput,
                latency_mean: k.latency.mean,
                latency_median: k.latency.median,
                latency_p95: k.latency.p95,
                latency_p99: k.latency.p99,
            };
            on_run(&row, &report);
            rows.push(row);
        }
    }
    Ok(SweepResult { kind, rows })
}

pub fn write_csv(result: &SweepResult, path: &Path) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in &result.rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `<kind>.csv`, `<kind>-throughput.svg` and `<kind>-latency.svg`
/// into `dir`. Returns the paths written.
pub fn write_outputs(result: &SweepResult, dir: &Path) -> Result<Vec<PathBuf>, BenchError> {
    std::fs::create_dir_all(dir)?;
    let name = result.kind.as_str();
    let csv = dir.join(format!("{name}.csv"));
    write_csv(result, &csv)?;
    let tp = dir.join(format!("{name}-throughput.svg"));
    plot(result, &tp, "throughput (tx/s)", |r| r.throughput)?;
    let lat = dir.join(format!("{name}-latency.svg"));
    plot(result, &lat, "mean latency (s)", |r| r.latency_mean)?;
    Ok(vec![csv, tp, lat])
}

fn plot(result: &SweepResult, path: &Path, y_label: &str, y: fn(&SweepRow) -> f64) -> Result<(), BenchError> {
    let err = |e: &dyn std::fmt::Display| BenchError::Plot(e.to_string());
    let xs = result.rows.iter().map(|r| r.x);
    let x_lo = xs.clone().fold(f64::INFINITY, f64::min);
    let x_hi = xs.fold(f64::NEG_INFINITY, f64::max);
    let y_hi = result.rows.iter().map(y).fold(0.0, f64::max);
    let (x_lo, x_hi) = if x_hi > x_lo { (x_lo, x_hi) } else { (x_lo - 1.0, x_hi + 1.0) };
    let y_hi = if y_hi > 0.0 { y_hi * 1.1 } else { 1.0 };

    let root = SVGBackend::new(path, (720, 480)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| err(&e))?;
    let mut chart = ChartBuilder::on(&root)
        .caption(format!("{} sweep", result.kind.as_str()), ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(x_lo..x_hi, 0.0..y_hi)
        .map_err(|e| err(&e))?;
    chart
        .configure_mesh()
        .x_desc(result.kind.axis())
        .y_desc(y_label)
        .draw()
        .map_err(|e| err(&e))?;
    for (i, kind) in TxKind::ALL.into_iter().enumerate() {
        let pts: Vec<(f64, f64)> = result.series(kind).into_iter().map(|r| (r.x, y(r))).collect();
        if pts.is_empty() {
            continue;
        }
        let color = Palette99::pick(i).to_rgba();
        chart
            .draw_series(LineSeries::new(pts.clone(), color.stroke_width(2)))
            .map_err(|e| err(&e))?
            .label(kind.as_str())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], color));
        chart
            .draw_series(pts.into_iter().map(|p| Circle::new(p, 3, color.filled())))
            .map_err(|e| err(&e))?;
    }
    chart
        .configure_series_labels()
        .border_style(BLACK)
        .background_style(WHITE.mix(0.8))
        .draw()
        .map_err(|e| err(&e))?;
    root.present().map_err(|e| err(&e))?;
    Ok(())
}
