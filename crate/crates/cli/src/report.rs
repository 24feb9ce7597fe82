//! Per-seed and median summaries, residual distributions and plot exports.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use hydrosentinel_core::detect::AlarmMetrics;
use hydrosentinel_core::gnn::Mse;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::pipeline::{
    self, alarm_metrics, train_metrics, write_json, Context, SplitMse, Stamped, ESTIMATES_FILE, LEAK, LEAK_BASELINE,
};

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TEXT: &str = "report.txt";
pub const QUARTILES_FILE: &str = "residual_quartiles.csv";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub count: usize,
}

/// Linear interpolation between order statistics.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

impl Quartiles {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Some(Quartiles {
            min: v[0],
            q1: quantile(&v, 0.25),
            median: quantile(&v, 0.5),
            q3: quantile(&v, 0.75),
            max: v[v.len() - 1],
            count: v.len(),
        })
    }
}

/// Median with the two middle values averaged; infinities sort last.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median of optional step counts, with a missing value counted as never.
pub fn median_delay(values: &[Option<usize>]) -> Option<f64> {
    let v: Vec<f64> = values.iter().map(|d| d.map_or(f64::INFINITY, |d| d as f64)).collect();
    Some(median(&v)).filter(|m| m.is_finite())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRow {
    pub seed: u64,
    pub placement: String,
    pub sensors: Vec<String>,
    pub reconstructor: SplitMse,
    pub predictor: SplitMse,
    pub alarms: AlarmMetrics,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MedianMse {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MedianRow {
    pub placement: String,
    /// Physical units (m²).
    pub reconstructor: MedianMse,
    pub predictor: MedianMse,
    pub detection_delay_steps: Option<f64>,
    pub first_alarm_delay_steps: Option<f64>,
    pub false_alarm_steps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JunctionResidual {
    pub junction: String,
    pub sensed: bool,
    pub quartiles: Quartiles,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualSummary {
    pub seed: u64,
    pub placement: String,
    pub model: String,
    pub all: Quartiles,
    pub unsensed: Option<Quartiles>,
    pub junctions: Vec<JunctionResidual>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub code_version: String,
    pub seeds: Vec<u64>,
    pub rows: Vec<SeedRow>,
    pub median: Vec<MedianRow>,
    pub residuals: Vec<ResidualSummary>,
}

impl ExperimentReport {
    pub fn median_row(&self, placement: &str) -> Option<&MedianRow> {
        self.median.iter().find(|m| m.placement == placement)
    }
}

fn median_mse(rows: &[&SplitMse]) -> MedianMse {
    let pick = |f: fn(&SplitMse) -> Mse| median(&rows.iter().map(|r| f(r).physical).collect::<Vec<_>>());
    MedianMse {
        train: pick(|s| s.train),
        val: pick(|s| s.val),
        test: pick(|s| s.test),
    }
}

/// Estimate-minus-true residuals per junction from the stored test estimates.
fn residual_summaries(
    ctx: &Context,
    seed: u64,
    placement: &str,
    sensors: &[String],
) -> Result<Vec<ResidualSummary>> {
    let path = ctx.placement_dir(seed, placement).join(ESTIMATES_FILE);
    let mut rd = csv::Reader::from_path(&path).map_err(|e| CliError::data(format!("{}: {e} (run `train` first)", path.display())))?;
    let labels = ctx.index.labels();
    let n = labels.len();
    let header = rd.headers()?.clone();
    if header.len() != 1 + 3 * n {
        return Err(CliError::data(format!("{}: expected {} columns", path.display(), 1 + 3 * n)));
    }
    // per model, per junction
    let mut res = vec![vec![Vec::new(); n]; 2];
    for (row, rec) in rd.records().enumerate() {
        let rec = rec?;
        let val = |c: usize| -> Result<f64> {
            rec[c].parse().map_err(|_| CliError::data(format!("{}: row {}, column {c} is not a number", path.display(), row + 1)))
        };
        for i in 0..n {
            let truth = val(1 + i)?;
            res[0][i].push(val(1 + n + i)? - truth);
            res[1][i].push(val(1 + 2 * n + i)? - truth);
        }
    }
    let mut out = Vec::new();
    for (m, model) in ["reconstructor", "predictor"].iter().enumerate() {
        let all: Vec<f64> = res[m].iter().flatten().copied().collect();
        let unsensed: Vec<f64> = (0..n)
            .filter(|&i| !sensors.contains(&labels[i]))
            .flat_map(|i| res[m][i].iter().copied())
            .collect();
        let junctions = (0..n)
            .map(|i| {
                Ok(JunctionResidual {
                    junction: labels[i].clone(),
                    sensed: sensors.contains(&labels[i]),
                    quartiles: Quartiles::of(&res[m][i])
                        .ok_or_else(|| CliError::data(format!("{}: no rows", path.display())))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(ResidualSummary {
            seed,
            placement: placement.to_string(),
            model: model.to_string(),
            all: Quartiles::of(&all).ok_or_else(|| CliError::data(format!("{}: no rows", path.display())))?,
            unsensed: Quartiles::of(&unsensed),
            junctions,
        });
    }
    Ok(out)
}

fn write_quartiles_csv(path: &Path, summaries: &[ResidualSummary]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["seed", "placement", "model", "junction", "sensed", "min", "q1", "median", "q3", "max"])?;
    for s in summaries {
        let groups = s
            .junctions
            .iter()
            .map(|j| (j.junction.as_str(), j.sensed.to_string(), j.quartiles))
            .chain(std::iter::once(("all", String::new(), s.all)))
            .chain(s.unsensed.map(|q| ("unsensed", "false".to_string(), q)));
        for (name, sensed, q) in groups {
            w.write_record([
                s.seed.to_string(),
                s.placement.clone(),
                s.model.clone(),
                name.to_string(),
                sensed,
                q.min.to_string(),
                q.q1.to_string(),
                q.median.to_string(),
                q.q3.to_string(),
                q.max.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Leak-run pressures next to their difference from the leak-free twin.
fn write_leak_difference(ctx: &Context, seed: u64) -> Result<()> {
    let leak = pipeline::load_dataset(ctx, seed, LEAK)?;
    let base = pipeline::load_dataset(ctx, seed, LEAK_BASELINE)?;
    let path = ctx.exp.seed_dir(seed).join("leak_difference.csv");
    let mut w = csv::Writer::from_path(&path)?;
    let labels = ctx.index.labels();
    let mut header = vec!["time_s".to_string()];
    header.extend(labels.iter().map(|l| format!("p_{l}")));
    header.extend(labels.iter().map(|l| format!("dp_{l}")));
    w.write_record(&header)?;
    for t in 0..leak.len() {
        let mut rec = vec![leak.timestamps[t].to_string()];
        rec.extend(leak.pressures.row(t).iter().map(f64::to_string));
        rec.extend(
            leak.pressures
                .row(t)
                .iter()
                .zip(base.pressures.row(t))
                .map(|(a, b)| (a - b).to_string()),
        );
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| CliError::io(&path, e))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("none".to_string(), |d| format!("{d}"))
}

fn render_text(hash: &str, r: &ExperimentReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "config {hash}");
    let _ = writeln!(s, "validation MSE (m^2) and alarm metrics (steps)\n");
    let _ = writeln!(
        s,
        "{:<8} {:<12} {:>12} {:>12} {:>12} {:>12} {:>8} {:>8} {:>8}",
        "seed", "placement", "recon val", "recon test", "pred val", "pred test", "delay", "first", "false"
    );
    let opt = |d: Option<usize>| d.map_or("none".to_string(), |d| d.to_string());
    for row in &r.rows {
        let _ = writeln!(
            s,
            "{:<8} {:<12} {:>12.6} {:>12.6} {:>12.6} {:>12.6} {:>8} {:>8} {:>8}",
            row.seed,
            row.placement,
            row.reconstructor.val.physical,
            row.reconstructor.test.physical,
            row.predictor.val.physical,
            row.predictor.test.physical,
            opt(row.alarms.detection_delay_steps),
            opt(row.alarms.first_alarm_delay_steps),
            row.alarms.false_alarm_steps
        );
    }
    for m in &r.median {
        let _ = writeln!(
            s,
            "{:<8} {:<12} {:>12.6} {:>12.6} {:>12.6} {:>12.6} {:>8} {:>8} {:>8}",
            "median",
            m.placement,
            m.reconstructor.val,
            m.reconstructor.test,
            m.predictor.val,
            m.predictor.test,
            fmt_opt(m.detection_delay_steps),
            fmt_opt(m.first_alarm_delay_steps),
            m.false_alarm_steps
        );
    }
    let _ = writeln!(s, "\ntest residual quartiles (m), all junctions | unsensed junctions\n");
    for q in &r.residuals {
        let u = q
            .unsensed
            .map_or("-".to_string(), |u| format!("[{:.4}, {:.4}, {:.4}]", u.q1, u.median, u.q3));
        let _ = writeln!(
            s,
            "{:<8} {:<12} {:<14} [{:.4}, {:.4}, {:.4}] | {u}",
            q.seed, q.placement, q.model, q.all.q1, q.all.median, q.all.q3
        );
    }
    s
}

/// Assembles the report from stored artifacts, refusing mixed config hashes.
pub fn report(ctx: &Context) -> Result<ExperimentReport> {
    let out = &ctx.exp.output_dir;
    let empty = fs::read_dir(out).map(|mut d| d.next().is_none()).unwrap_or(true);
    if empty {
        return Err(CliError::data(format!("{} holds no artifacts; run the pipeline first", out.display())));
    }
    let placements = pipeline::load_placements(ctx)?;
    let mut rows = Vec::new();
    let mut residuals = Vec::new();
    for &seed in &ctx.exp.config.seeds {
        for (name, _) in &placements {
            let m = train_metrics(ctx, seed, name)?;
            let alarms = alarm_metrics(ctx, seed, name)?;
            residuals.extend(residual_summaries(ctx, seed, name, &m.sensors)?);
            rows.push(SeedRow {
                seed,
                placement: name.clone(),
                sensors: m.sensors,
                reconstructor: m.reconstructor.mse,
                predictor: m.predictor.mse,
                alarms,
            });
        }
        if ctx.exp.config.leak_scenario.is_some() {
            write_leak_difference(ctx, seed)?;
        }
    }
    let median = placements
        .iter()
        .map(|(name, _)| {
            let mine: Vec<&SeedRow> = rows.iter().filter(|r| &r.placement == name).collect();
            let delays = |f: fn(&AlarmMetrics) -> Option<usize>| {
                median_delay(&mine.iter().map(|r| f(&r.alarms)).collect::<Vec<_>>())
            };
            MedianRow {
                placement: name.clone(),
                reconstructor: median_mse(&mine.iter().map(|r| &r.reconstructor).collect::<Vec<_>>()),
                predictor: median_mse(&mine.iter().map(|r| &r.predictor).collect::<Vec<_>>()),
                detection_delay_steps: delays(|a| a.detection_delay_steps),
                first_alarm_delay_steps: delays(|a| a.first_alarm_delay_steps),
                false_alarm_steps: median(&mine.iter().map(|r| r.alarms.false_alarm_steps as f64).collect::<Vec<_>>()),
            }
        })
        .collect();
    let report = ExperimentReport {
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        seeds: ctx.exp.config.seeds.clone(),
        rows,
        median,
        residuals,
    };
    write_json(
        &out.join(REPORT_JSON),
        &Stamped {
            config_hash: ctx.exp.hash.clone(),
            body: &report,
        },
    )?;
    let text = render_text(&ctx.exp.hash, &report);
    fs::write(out.join(REPORT_TEXT), &text).map_err(|e| CliError::io(&out.join(REPORT_TEXT), e))?;
    write_quartiles_csv(&out.join(QUARTILES_FILE), &report.residuals)?;
    Ok(report)
}
