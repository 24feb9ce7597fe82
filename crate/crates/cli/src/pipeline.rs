//! The experiment stages. Each reads the artifacts of earlier stages from the
//! output directory, checks their config hash, and writes its own.

use std::fs;
use std::path::{Path, PathBuf};

use hydrosentinel_core::detect::{calibrate, detect, residuals, AlarmMetrics, AlarmReport, LeakMarker};
use hydrosentinel_core::gnn::{
    evaluate, predict_series, train_predictor, train_reconstructor, ChebNetModel, Mse, Split, TrainingRun,
};
use hydrosentinel_core::graph::{GraphTopology, SpectralOperator};
use hydrosentinel_core::hydro::{simulate, PressureDataset};
use hydrosentinel_core::network::{junction_graph, parse_inp, JunctionIndex, NetworkModel};
use hydrosentinel_core::placement::{place_arbitrary, place_pagerank, PlacementMethod, PlacementReport, SensorPlacement};
use ndarray::{s, Array2, ArrayView2};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::{rows_for, Experiment, PlacementSpec};
use crate::error::{CliError, Result};

pub const HEALTHY: &str = "healthy";
pub const LEAK: &str = "leak";
pub const LEAK_BASELINE: &str = "leak_baseline";
pub const PLACEMENTS_FILE: &str = "placements.json";

/// Network, junction graph and spectral operator shared by every stage.
pub struct Context {
    pub exp: Experiment,
    pub network: NetworkModel,
    pub graph: GraphTopology,
    pub index: JunctionIndex,
    pub op: SpectralOperator,
}

impl Context {
    pub fn new(exp: Experiment) -> Result<Self> {
        let parsed = parse_inp(&exp.network_text).map_err(|e| CliError::from(e).context(exp.network_path.display()))?;
        let network = parsed.model;
        let (graph, index) = junction_graph(&network)?;
        let op = SpectralOperator::new(&graph, exp.config.lambda_mode)?;
        Ok(Context {
            exp,
            network,
            graph,
            index,
            op,
        })
    }

    fn timestep(&self) -> f64 {
        self.exp.config.simulation.timestep_s
    }

    /// Train, validation and test row ranges of the healthy dataset.
    pub fn split_rows(&self) -> Result<(usize, usize, usize)> {
        let s = &self.exp.config.split;
        let dt = self.timestep();
        let train = rows_for(s.train_hours, dt, "train_hours")?;
        let val = rows_for(s.val_hours, dt, "val_hours")?;
        let test = rows_for(s.test_hours, dt, "test_hours")?;
        Ok((train, train + val, train + val + test))
    }

    pub fn placement_dir(&self, seed: u64, name: &str) -> PathBuf {
        self.exp.seed_dir(seed).join(name)
    }
}

/// Any artifact body plus the hash of the config that produced it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Stamped<T> {
    pub config_hash: String,
    #[serde(flatten)]
    pub body: T,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let text = serde_json::to_string_pretty(value).expect("artifact serializes") + "\n";
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn read_json<T: DeserializeOwned>(path: &Path, hint: &str) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| CliError::data(format!("{}: {e} (run `{hint}` first)", path.display())))?;
    serde_json::from_slice(&bytes).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn check_hash(ctx: &Context, found: &str, path: &Path) -> Result<()> {
    if found != ctx.exp.hash {
        return Err(CliError::data(format!(
            "{} was produced by config {found}, current config is {}; rerun the pipeline into a clean directory",
            path.display(),
            ctx.exp.hash
        )));
    }
    Ok(())
}

/// Reads a stamped artifact, refusing one from a different config.
pub fn read_stamped<T: DeserializeOwned>(ctx: &Context, path: &Path, hint: &str) -> Result<T> {
    let doc: Stamped<T> = read_json(path, hint)?;
    check_hash(ctx, &doc.config_hash, path)?;
    Ok(doc.body)
}

pub fn load_dataset(ctx: &Context, seed: u64, stem: &str) -> Result<PressureDataset> {
    let dir = ctx.exp.seed_dir(seed);
    let ds = PressureDataset::load(&dir, stem, &ctx.index)
        .map_err(|e| CliError::from(e).context(format!("{}/{stem}.csv (run `gen-data` first)", dir.display())))?;
    check_hash(ctx, &ds.metadata.config_hash, &dir.join(format!("{stem}.meta.json")))?;
    Ok(ds)
}

fn save_dataset(ctx: &Context, mut ds: PressureDataset, seed: u64, stem: &str) -> Result<()> {
    ds.metadata.config_hash = ctx.exp.hash.clone();
    let dir = ctx.exp.seed_dir(seed);
    ds.save(&dir, stem).map_err(|e| CliError::from(e).context(dir.display()))
}

/// Simulates the healthy dataset and, when configured, the leak scenario with its leak-free twin.
pub fn gen_data(ctx: &Context) -> Result<()> {
    for &seed in &ctx.exp.config.seeds {
        let cfg = ctx.exp.healthy_simulation(seed);
        let ds = simulate(&ctx.network, &cfg).map_err(|e| CliError::from(e).context(format!("seed {seed}")))?;
        save_dataset(ctx, ds, seed, HEALTHY)?;
        if let Some((leaky, baseline)) = ctx.exp.leak_simulations(seed) {
            let ds = simulate(&ctx.network, &leaky).map_err(|e| CliError::from(e).context(format!("seed {seed} leak run")))?;
            save_dataset(ctx, ds, seed, LEAK)?;
            let ds = simulate(&ctx.network, &baseline)
                .map_err(|e| CliError::from(e).context(format!("seed {seed} leak-free run")))?;
            save_dataset(ctx, ds, seed, LEAK_BASELINE)?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NamedPlacement {
    pub name: String,
    #[serde(flatten)]
    pub placement: PlacementReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlacementFile {
    pub placements: Vec<NamedPlacement>,
}

fn build_placement(ctx: &Context, spec: &PlacementSpec) -> Result<SensorPlacement> {
    let p = match spec.method {
        PlacementMethod::Pagerank => {
            let s = spec.s.expect("validated");
            place_pagerank(&ctx.graph, s, spec.alpha, spec.epsilon)?
        }
        PlacementMethod::Arbitrary => {
            let labels = spec.sensors.as_ref().expect("validated");
            let idx = labels
                .iter()
                .map(|l| {
                    ctx.index
                        .index_of(l)
                        .ok_or_else(|| CliError::config(format!("placement {}: unknown junction {l}", spec.name)))
                })
                .collect::<Result<Vec<_>>>()?;
            place_arbitrary(&ctx.graph, &idx)?
        }
    };
    Ok(p)
}

/// Computes every configured placement and writes `placements.json`.
pub fn place(ctx: &Context) -> Result<Vec<NamedPlacement>> {
    let placements = ctx
        .exp
        .config
        .placements
        .iter()
        .map(|spec| {
            let p = build_placement(ctx, spec).map_err(|e| e.context(format!("placement {}", spec.name)))?;
            Ok(NamedPlacement {
                name: spec.name.clone(),
                placement: p.report(&ctx.index),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let file = PlacementFile { placements };
    write_json(
        &ctx.exp.output_dir.join(PLACEMENTS_FILE),
        &Stamped {
            config_hash: ctx.exp.hash.clone(),
            body: &file,
        },
    )?;
    Ok(file.placements)
}

pub fn load_placements(ctx: &Context) -> Result<Vec<(String, SensorPlacement)>> {
    let path = ctx.exp.output_dir.join(PLACEMENTS_FILE);
    let file: PlacementFile = read_stamped(ctx, &path, "place")?;
    let names: Vec<&str> = ctx.exp.config.placements.iter().map(|p| p.name.as_str()).collect();
    let stored: Vec<&str> = file.placements.iter().map(|p| p.name.as_str()).collect();
    if names != stored {
        return Err(CliError::data(format!("{} does not list the configured placements", path.display())));
    }
    file.placements
        .iter()
        .map(|p| Ok((p.name.clone(), p.placement.to_placement(&ctx.index)?)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitMse {
    pub train: Mse,
    pub val: Mse,
    pub test: Mse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub mse: SplitMse,
    pub best_epoch: usize,
    pub epochs: usize,
    pub optimizer_steps: usize,
    pub train_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMetrics {
    pub sensors: Vec<String>,
    pub reconstructor: ModelSummary,
    pub predictor: ModelSummary,
}

pub const RECONSTRUCTOR_FILE: &str = "reconstructor.json";
pub const PREDICTOR_FILE: &str = "predictor.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const ESTIMATES_FILE: &str = "test_estimates.csv";
pub const ALARMS_FILE: &str = "alarms.json";
pub const RESIDUALS_FILE: &str = "residuals.csv";

fn write_loss_curve(path: &Path, run: &TrainingRun) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["epoch", "train_loss", "val_loss"])?;
    for (e, (t, v)) in run.train_loss.iter().zip(&run.val_loss).enumerate() {
        w.write_record([e.to_string(), t.to_string(), v.to_string()])?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

fn summarize(
    ctx: &Context,
    model: &ChebNetModel,
    run: &TrainingRun,
    pressures: ArrayView2<f64>,
    mask: &[u8],
) -> Result<ModelSummary> {
    let (train, val, test) = ctx.split_rows()?;
    let score = |r: std::ops::Range<usize>| evaluate(model, &ctx.op, pressures, mask, r, 1);
    Ok(ModelSummary {
        mse: SplitMse {
            train: score(0..train)?,
            val: score(train..val)?,
            test: score(val..test)?,
        },
        best_epoch: run.best_epoch,
        epochs: run.train_loss.len(),
        optimizer_steps: run.optimizer_steps,
        train_samples: run.train_samples,
    })
}

/// True, reconstructed and predicted pressures over the test split.
fn write_estimates(
    path: &Path,
    ds: &PressureDataset,
    recon: ArrayView2<f64>,
    pred: ArrayView2<f64>,
    window: usize,
    rows: std::ops::Range<usize>,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let labels = ds.labels.labels();
    let mut header = vec!["time_s".to_string()];
    for prefix in ["true", "recon", "pred"] {
        header.extend(labels.iter().map(|l| format!("{prefix}_{l}")));
    }
    w.write_record(&header)?;
    for t in rows {
        let mut rec = vec![ds.timestamps[t].to_string()];
        rec.extend(ds.pressures.row(t).iter().map(f64::to_string));
        rec.extend(recon.row(t).iter().map(f64::to_string));
        rec.extend(pred.row(t - window).iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Trains a reconstructor and a predictor per seed and placement.
pub fn train(ctx: &Context) -> Result<()> {
    let placements = load_placements(ctx)?;
    let (train_end, val_end, total) = ctx.split_rows()?;
    let split = Split {
        train: 0..train_end,
        val: train_end..val_end,
    };
    let arch = &ctx.exp.config.architecture;
    let w = ctx.exp.config.window;
    for &seed in &ctx.exp.config.seeds {
        let ds = load_dataset(ctx, seed, HEALTHY)?;
        if ds.len() != total {
            return Err(CliError::data(format!("seed {seed}: dataset has {} rows, split needs {total}", ds.len())));
        }
        let cfg = ctx.exp.training(seed);
        for (name, p) in &placements {
            let dir = ctx.placement_dir(seed, name);
            fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
            let tag = |role: &str| format!("seed {seed} {name} {role}");
            let (mut recon, rrun) = train_reconstructor(ds.pressures.view(), &p.mask, &ctx.op, arch, &split, &cfg)
                .map_err(|e| CliError::from(e).context(tag("reconstructor")))?;
            let (mut pred, prun) = train_predictor(ds.pressures.view(), &p.mask, &ctx.op, arch, w, &split, &cfg)
                .map_err(|e| CliError::from(e).context(tag("predictor")))?;
            for (model, file) in [(&mut recon, RECONSTRUCTOR_FILE), (&mut pred, PREDICTOR_FILE)] {
                model.config_hash = Some(ctx.exp.hash.clone());
                let path = dir.join(file);
                model.save(&path).map_err(|e| CliError::io(&path, e))?;
            }
            write_loss_curve(&dir.join("reconstructor_loss.csv"), &rrun)?;
            write_loss_curve(&dir.join("predictor_loss.csv"), &prun)?;
            let metrics = TrainMetrics {
                sensors: p.sensors.iter().map(|&i| ctx.index.label(i).to_string()).collect(),
                reconstructor: summarize(ctx, &recon, &rrun, ds.pressures.view(), &p.mask)?,
                predictor: summarize(ctx, &pred, &prun, ds.pressures.view(), &p.mask)?,
            };
            write_json(
                &dir.join(METRICS_FILE),
                &Stamped {
                    config_hash: ctx.exp.hash.clone(),
                    body: &metrics,
                },
            )?;
            let r = predict_series(&recon, &ctx.op, ds.pressures.view(), &p.mask)?;
            let q = predict_series(&pred, &ctx.op, ds.pressures.view(), &p.mask)?;
            write_estimates(&dir.join(ESTIMATES_FILE), &ds, r.view(), q.view(), w, val_end..total)?;
        }
    }
    Ok(())
}

fn load_model(ctx: &Context, path: &Path) -> Result<ChebNetModel> {
    let model = ChebNetModel::load(path).map_err(|e| {
        CliError::data(format!("{}: {e} (run `train` first)", path.display()))
    })?;
    check_hash(ctx, model.config_hash.as_deref().unwrap_or("none"), path)?;
    Ok(model)
}

/// Reconstructor minus predictor aligned on the rows both can score.
fn aligned_estimates(
    ctx: &Context,
    recon: &ChebNetModel,
    pred: &ChebNetModel,
    pressures: ArrayView2<f64>,
    mask: &[u8],
) -> Result<(Array2<f64>, Array2<f64>, usize)> {
    let w = pred.window;
    let r = predict_series(recon, &ctx.op, pressures, mask)?;
    let p = predict_series(pred, &ctx.op, pressures, mask)?;
    Ok((r.slice(s![w.., ..]).to_owned(), p, w))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectionFile {
    /// Healthy rows `[start, end)` the thresholds were fitted on.
    pub calibration_rows: [usize; 2],
    /// Dataset the alarms were computed on.
    pub dataset: String,
    #[serde(flatten)]
    pub report: AlarmReport,
}

/// Calibrates thresholds on healthy data and runs the detector on the leak scenario
/// (or on the healthy dataset when none is configured).
pub fn detect_stage(ctx: &Context) -> Result<()> {
    let placements = load_placements(ctx)?;
    let d = &ctx.exp.config.detector;
    let dt = ctx.timestep();
    let (train_end, val_end, _) = ctx.split_rows()?;
    let calibration = match d.calibration_hours {
        Some([a, b]) => rows_for(a, dt, "calibration start")?..rows_for(b, dt, "calibration end")?,
        None => train_end..val_end,
    };
    let leak = match &ctx.exp.config.leak_scenario {
        Some(l) => Some(LeakMarker {
            junction: ctx
                .index
                .index_of(&l.junction)
                .ok_or_else(|| CliError::config(format!("leak junction {} is not a junction", l.junction)))?,
            start: rows_for(l.start_hours, dt, "leak start")?,
        }),
        None => None,
    };
    for &seed in &ctx.exp.config.seeds {
        let healthy = load_dataset(ctx, seed, HEALTHY)?;
        let (target_name, target) = match leak {
            Some(_) => (LEAK, load_dataset(ctx, seed, LEAK)?),
            None => (HEALTHY, healthy.clone()),
        };
        for (name, p) in &placements {
            let dir = ctx.placement_dir(seed, name);
            let recon = load_model(ctx, &dir.join(RECONSTRUCTOR_FILE))?;
            let pred = load_model(ctx, &dir.join(PREDICTOR_FILE))?;

            let (r, q, w) = aligned_estimates(ctx, &recon, &pred, healthy.pressures.view(), &p.mask)?;
            let series = residuals(r.view(), q.view(), &ctx.graph, d.window)?.with_offset(w);
            let profile = calibrate(&series, calibration.clone(), d.alpha, d.sigma_floor)
                .map_err(|e| CliError::from(e).context(format!("seed {seed} {name} calibration")))?;

            let (r, q, w) = aligned_estimates(ctx, &recon, &pred, target.pressures.view(), &p.mask)?;
            let series = residuals(r.view(), q.view(), &ctx.graph, d.window)?.with_offset(w);
            let timeline = detect(&series, &profile, leak)?;
            let path = dir.join(RESIDUALS_FILE);
            let file = fs::File::create(&path).map_err(|e| CliError::io(&path, e))?;
            series.write_csv(file, &ctx.index)?;
            write_json(
                &dir.join(ALARMS_FILE),
                &Stamped {
                    config_hash: ctx.exp.hash.clone(),
                    body: DetectionFile {
                        calibration_rows: [calibration.start, calibration.end],
                        dataset: target_name.to_string(),
                        report: timeline.report(&profile, &ctx.index),
                    },
                },
            )?;
        }
    }
    Ok(())
}

pub fn alarm_metrics(ctx: &Context, seed: u64, name: &str) -> Result<AlarmMetrics> {
    let f: DetectionFile = read_stamped(ctx, &ctx.placement_dir(seed, name).join(ALARMS_FILE), "detect")?;
    Ok(f.report.metrics)
}

pub fn train_metrics(ctx: &Context, seed: u64, name: &str) -> Result<TrainMetrics> {
    read_stamped(ctx, &ctx.placement_dir(seed, name).join(METRICS_FILE), "train")
}

/// Every stage in order.
pub fn run_all(ctx: &Context) -> Result<crate::report::ExperimentReport> {
    gen_data(ctx)?;
    place(ctx)?;
    train(ctx)?;
    detect_stage(ctx)?;
    crate::report::report(ctx)
}
