use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::time::Instant;

use stcorr::data::{
    assemble_samples, generate_synthetic, load_dataset, save_dataset, split, NormParams, Sample, SplitRanges,
    SynthConfig, TrafficDataset,
};
use stcorr::eval::evaluate as score;
use stcorr::model::train as fit;
use stcorr::neural::{laplacian_normalize, with_self_loops};
use stcorr::tcorr::{reduce_verdicts, tcorr_report};
use stcorr::{
    compute_scorr, windowed_scorr, MetricReport, Model, ModelConfig, ModelMeta, NormalizedAdjacency, Period,
    PeriodSet, PeriodSpec, SCorrTensor, TCorrReport, TCorrWeights,
};

use crate::error::{CliError, CliResult};
use crate::manifest::RunManifest;
use crate::{
    DataArgs, EvaluateArgs, ExportArgs, ModelArgs, Part, PredictArgs, ScorrArgs, SelectArgs, SynthArgs, TcorrArgs,
    TrainArgs,
};

pub const CHECKPOINT_FILE: &str = "model.cstn";
pub const META_FILE: &str = "model.json";
pub const SCORR_FILE: &str = "scorr.scor";
pub const TRAIN_LOG_FILE: &str = "train_log.csv";
pub const REPORT_FILE: &str = "report.json";
pub const HORIZON_FILE: &str = "horizon.csv";

/// Fails with a message naming the command that produces `path`.
fn require(path: &Path, producer: &str) -> CliResult<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::data(format!(
            "{} not found; create it with `stcorr {producer}`",
            path.display()
        )))
    }
}

/// Directory that holds `out`: itself when it is a directory path, else its
/// parent.
fn out_dir(out: &Path, is_dir: bool) -> PathBuf {
    if is_dir {
        out.to_path_buf()
    } else {
        out.parent()
            .filter(|p| !p.as_os_str().is_empty())
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."))
    }
}

fn create_parent(out: &Path) -> CliResult<()> {
    std::fs::create_dir_all(out_dir(out, false))?;
    Ok(())
}

fn load(args: &DataArgs, manifest: &mut RunManifest) -> CliResult<(TrafficDataset, SplitRanges)> {
    require(&args.data, "synth")?;
    require(&args.edges, "synth")?;
    manifest.datasets = vec![args.data.display().to_string(), args.edges.display().to_string()];
    let ds = manifest.time("load", || {
        load_dataset(&args.data, &args.edges, args.interval, args.binary_adjacency)
    })?;
    let ranges = split(ds.tensor.timestamps(), args.split)?;
    Ok((ds, ranges))
}

fn normalized_adjacency(ds: &TrafficDataset) -> CliResult<NormalizedAdjacency> {
    let n = ds.sensors();
    Ok(laplacian_normalize(&with_self_loops(&ds.adjacency, n), n)?)
}

fn read_scorr(path: &Path) -> CliResult<SCorrTensor> {
    require(path, "scorr")?;
    Ok(SCorrTensor::read_from(BufReader::new(File::open(path)?))?)
}

fn read_tcorr(path: &Path) -> CliResult<TCorrReport> {
    require(path, "tcorr")?;
    Ok(TCorrReport::from_json(&std::fs::read_to_string(path)?)?)
}

fn stride(samples: Vec<Sample>, k: usize) -> CliResult<Vec<Sample>> {
    if k == 0 {
        return Err(CliError::config("--sample-stride must be at least 1"));
    }
    Ok(samples.into_iter().step_by(k).collect())
}

pub fn synth(a: &SynthArgs) -> CliResult<()> {
    let mut m = RunManifest::new("synth", &a.out);
    m.seed = Some(a.seed);
    let cfg = SynthConfig {
        sensors: a.sensors,
        weeks: a.weeks,
        attributes: a.attributes,
        interval_minutes: a.interval,
        daily_amplitude: a.daily_amplitude,
        weekly_amplitude: a.weekly_amplitude,
        noise_sigma: a.noise,
        seed: a.seed,
        ..SynthConfig::default()
    };
    let mut ds = m.time("generate", || generate_synthetic(&cfg))?;
    ds.name = a.name.clone();
    std::fs::create_dir_all(&a.out)?;
    let tensor = a.out.join(format!("{}.sttf", a.name));
    let edges = a.out.join(format!("{}.edges.csv", a.name));
    m.time("write", || save_dataset(&ds, &tensor, &edges))?;
    m.metric("timestamps", ds.tensor.timestamps());
    m.metric("sensors", ds.sensors());
    println!("wrote {} and {}", tensor.display(), edges.display());
    m.write(&a.out)?;
    Ok(())
}

pub fn scorr(a: &ScorrArgs) -> CliResult<()> {
    let mut m = RunManifest::new("scorr", &a.out);
    let (ds, ranges) = load(&a.data, &mut m)?;
    let train = ds.tensor.slice_time(0, ranges.train.end)?;
    let (n, c) = (ds.sensors(), ds.tensor.attributes());
    let start = Instant::now();
    let tensors = match (a.window, a.stride) {
        (Some(w), Some(s)) => m.time("scorr", || windowed_scorr(&train, w, s, a.eta))?,
        _ => vec![m.time("scorr", || compute_scorr(&train, a.eta))?],
    };
    let seconds = start.elapsed().as_secs_f64();
    let pairs = tensors.len() * c * n * n.saturating_sub(1) / 2;
    create_parent(&a.out)?;
    let write_one = |t: &SCorrTensor, path: &Path| -> CliResult<()> {
        let mut w = BufWriter::new(File::create(path)?);
        t.write_to(&mut w)?;
        w.flush()?;
        if a.csv {
            t.write_csv(BufWriter::new(File::create(path.with_extension("csv"))?))?;
        }
        Ok(())
    };
    if tensors.len() == 1 && a.window.is_none() {
        write_one(&tensors[0], &a.out)?;
    } else {
        let stem = a.out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        for (k, t) in tensors.iter().enumerate() {
            write_one(t, &a.out.with_file_name(format!("{stem}-w{k}.scor")))?;
        }
    }
    m.metric("eta", a.eta);
    m.metric("windows", tensors.len());
    m.metric("pairs", pairs);
    m.metric("seconds", seconds);
    m.metric("pairs_per_second", pairs as f64 / seconds.max(1e-12));
    println!(
        "{pairs} sensor pairs in {seconds:.3} s ({:.1} pairs/s, {} threads)",
        pairs as f64 / seconds.max(1e-12),
        rayon::current_num_threads()
    );
    m.write(&out_dir(&a.out, false))?;
    Ok(())
}

pub fn tcorr(a: &TcorrArgs) -> CliResult<()> {
    let mut m = RunManifest::new("tcorr", &a.out);
    let (ds, ranges) = load(&a.data, &mut m)?;
    let spec = PeriodSpec::for_interval(ds.tensor.interval_minutes(), a.tau)?;
    let weights = TCorrWeights {
        hourly: a.weights[0],
        daily: a.weights[1],
        weekly: a.weights[2],
    };
    let report = m.time("tcorr", || {
        tcorr_report(&ds.name, &ds.tensor, ranges.train.clone(), &spec, &weights, a.eta)
    })?;
    create_parent(&a.out)?;
    std::fs::write(&a.out, report.to_json()?)?;
    for (c, (means, v)) in report.per_period_means.iter().zip(&report.verdict).enumerate() {
        println!(
            "attribute {c}: hourly {:.3} daily {:.3} weekly {:.3} -> {v}",
            means.hourly, means.daily, means.weekly
        );
    }
    let overall = report.overall_verdict();
    println!("selected: {overall}");
    m.metric("anchors", report.anchors);
    m.metric("verdict", overall.to_string());
    m.write(&out_dir(&a.out, false))?;
    Ok(())
}

#[derive(serde::Serialize, serde::Deserialize)]
struct Selection {
    per_attribute: Vec<PeriodSet>,
    overall: PeriodSet,
}

pub fn select(a: &SelectArgs) -> CliResult<()> {
    let report = read_tcorr(&a.tcorr)?;
    let overall = reduce_verdicts(&report.verdict);
    println!("{overall}");
    if let Some(out) = &a.out {
        let mut m = RunManifest::new("select", out);
        m.datasets = vec![a.tcorr.display().to_string()];
        create_parent(out)?;
        let sel = Selection {
            per_attribute: report.verdict.clone(),
            overall,
        };
        std::fs::write(out, serde_json::to_string_pretty(&sel)?)?;
        m.metric("verdict", overall.to_string());
        m.write(&out_dir(out, false))?;
    }
    Ok(())
}

fn model_config(a: &TrainArgs, m: &mut RunManifest) -> CliResult<ModelConfig> {
    let mut cfg = match (&a.config, &a.preset) {
        (Some(path), _) => {
            if !path.exists() {
                return Err(CliError::config(format!("config file {} not found", path.display())));
            }
            m.config = Some(path.display().to_string());
            ModelConfig::from_toml(&std::fs::read_to_string(path)?)
                .map_err(|e| CliError::config(e.to_string()))?
        }
        (None, Some(name)) => {
            m.config = Some(format!("preset:{name}"));
            ModelConfig::preset(name)?
        }
        (None, None) => ModelConfig::tiny(),
    };
    if let Some(path) = &a.tcorr {
        cfg.periods = read_tcorr(path)?.overall_verdict();
    }
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    if let Some(epochs) = a.epochs {
        cfg.max_epochs = epochs;
    }
    Ok(cfg)
}

pub fn train(a: &TrainArgs) -> CliResult<()> {
    let mut m = RunManifest::new("train", &a.out);
    let cfg = model_config(a, &mut m)?;
    m.seed = Some(cfg.seed);
    let (ds, ranges) = load(&a.data, &mut m)?;
    let scorr = read_scorr(&a.scorr)?;
    let adjacency = normalized_adjacency(&ds)?;
    let norm = NormParams::fit(&ds.tensor, ranges.train.clone())?;
    let meta = ModelMeta {
        config: cfg,
        sensors: ds.sensors(),
        attributes: ds.tensor.attributes(),
        interval_minutes: ds.tensor.interval_minutes(),
        norm,
    };
    let mut model = Model::build(meta, &scorr, &adjacency)?;
    let layout = *model.layout();
    let train_set = stride(assemble_samples(&ds.tensor, ranges.train.clone(), &layout)?, a.sample_stride)?;
    let val_set = stride(assemble_samples(&ds.tensor, ranges.val.clone(), &layout)?, a.sample_stride)?;
    println!(
        "training {} parameters on {} samples ({} validation), periods {}",
        model.parameter_count(),
        train_set.len(),
        val_set.len(),
        layout.periods
    );
    let log = m.time("train", || fit(&mut model, &train_set, &val_set))?;

    std::fs::create_dir_all(&a.out)?;
    let mut ckpt = BufWriter::new(File::create(a.out.join(CHECKPOINT_FILE))?);
    model.write_checkpoint(&mut ckpt)?;
    ckpt.flush()?;
    std::fs::write(a.out.join(META_FILE), model.meta_json()?)?;
    std::fs::copy(&a.scorr, a.out.join(SCORR_FILE))?;
    log.write_csv(BufWriter::new(File::create(a.out.join(TRAIN_LOG_FILE))?))?;

    let best = &log.epochs[log.best_epoch - 1];
    println!(
        "best epoch {} of {}: train MAE {:.4}{}",
        log.best_epoch,
        log.epochs.len(),
        best.train_mae,
        best.val_mae.map(|v| format!(", validation MAE {v:.4}")).unwrap_or_default()
    );
    m.metric("parameters", model.parameter_count());
    m.metric("epochs", log.epochs.len());
    m.metric("best_epoch", log.best_epoch);
    m.metric("stopped_early", log.stopped_early);
    m.metric("best_train_mae", best.train_mae);
    m.metric("best_val_mae", best.val_mae);
    m.write(&a.out)?;
    Ok(())
}

/// Rebuilds a trained model and the samples of the requested split.
fn restore(a: &ModelArgs, m: &mut RunManifest) -> CliResult<(Model, Vec<Sample>)> {
    let meta_path = a.model.join(META_FILE);
    let ckpt_path = a.model.join(CHECKPOINT_FILE);
    require(&meta_path, "train")?;
    require(&ckpt_path, "train")?;
    let meta = ModelMeta::from_json(&std::fs::read_to_string(&meta_path)?)?;
    m.seed = Some(meta.config.seed);
    m.config = Some(meta_path.display().to_string());
    let (ds, ranges) = load(&a.data, m)?;
    let scorr = read_scorr(&a.model.join(SCORR_FILE))?;
    let mut model = Model::build(meta, &scorr, &normalized_adjacency(&ds)?)?;
    model.read_checkpoint(BufReader::new(File::open(&ckpt_path)?))?;
    let range: Range<usize> = match a.part {
        Part::Train => ranges.train,
        Part::Val => ranges.val,
        Part::Test => ranges.test,
    };
    let samples = stride(assemble_samples(&ds.tensor, range, model.layout())?, a.sample_stride)?;
    Ok((model, samples))
}

pub fn predict(a: &PredictArgs) -> CliResult<()> {
    let mut m = RunManifest::new("predict", &a.out);
    let (model, samples) = restore(&a.model, &mut m)?;
    create_parent(&a.out)?;
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(&a.out)?));
    w.write_record(["anchor", "horizon", "sensor", "prediction", "target"])?;
    m.time("predict", || -> CliResult<()> {
        for s in &samples {
            let p = model.predict_sample(s)?;
            for h in 0..p.timestamps() {
                for i in 0..p.sensors() {
                    w.write_record([
                        s.anchor.to_string(),
                        (h + 1).to_string(),
                        i.to_string(),
                        p.get(h, i, 0).to_string(),
                        s.target.get(h, i, 0).to_string(),
                    ])?;
                }
            }
        }
        Ok(())
    })?;
    w.flush()?;
    m.metric("samples", samples.len());
    println!("wrote {} forecasts to {}", samples.len(), a.out.display());
    m.write(&out_dir(&a.out, false))?;
    Ok(())
}

pub fn evaluate(a: &EvaluateArgs) -> CliResult<()> {
    let mut m = RunManifest::new("evaluate", &a.out);
    let (model, samples) = restore(&a.model, &mut m)?;
    let report = m.time("evaluate", || score(&model, &samples))?;
    std::fs::create_dir_all(&a.out)?;
    std::fs::write(a.out.join(REPORT_FILE), report.to_json()?)?;
    report.write_horizon_csv(BufWriter::new(File::create(a.out.join(HORIZON_FILE))?))?;
    let o = report.overall;
    println!(
        "MAE {:.4}  RMSE {:.4}  MAPE {}  over {} points",
        o.mae,
        o.rmse,
        o.mape.map(|v| format!("{:.2}%", v * 100.0)).unwrap_or_else(|| "undefined".into()),
        report.n_points
    );
    m.metric("mae", o.mae);
    m.metric("rmse", o.rmse);
    m.metric("mape", o.mape);
    m.metric("samples", samples.len());
    m.write(&a.out)?;
    Ok(())
}

pub fn export_plot_data(a: &ExportArgs) -> CliResult<()> {
    if a.report.is_empty() && a.tcorr.is_none() {
        return Err(CliError::config("nothing to export: pass --report and/or --tcorr"));
    }
    if !a.label.is_empty() && a.label.len() != a.report.len() {
        return Err(CliError::config("--label must be given once per --report"));
    }
    let mut m = RunManifest::new("export-plot-data", &a.out);
    std::fs::create_dir_all(&a.out)?;

    if !a.report.is_empty() {
        let mut ablation = csv::Writer::from_writer(File::create(a.out.join("ablation.csv"))?);
        ablation.write_record(["label", "mae", "rmse", "mape_percent"])?;
        for (k, path) in a.report.iter().enumerate() {
            require(path, "evaluate")?;
            let r = MetricReport::from_json(&std::fs::read_to_string(path)?)?;
            let label = a.label.get(k).cloned().unwrap_or_else(|| {
                path.parent()
                    .and_then(|p| p.file_name())
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| format!("run{k}"))
            });
            r.write_horizon_csv(File::create(a.out.join(format!("horizon_{label}.csv")))?)?;
            ablation.write_record([
                label,
                r.overall.mae.to_string(),
                r.overall.rmse.to_string(),
                r.overall.mape.map(|v| (v * 100.0).to_string()).unwrap_or_default(),
            ])?;
        }
        ablation.flush()?;
    }

    if let Some(path) = &a.tcorr {
        let r = read_tcorr(path)?;
        let per = |p: Period| match p {
            Period::Hourly => &r.per_sensor.hourly,
            Period::Daily => &r.per_sensor.daily,
            Period::Weekly => &r.per_sensor.weekly,
        };
        let mut scatter = csv::Writer::from_writer(File::create(a.out.join("tcorr_scatter.csv"))?);
        scatter.write_record(["sensor", "attribute", "hourly", "daily", "weekly"])?;
        for i in 0..r.sensors {
            for c in 0..r.attributes {
                let k = i * r.attributes + c;
                scatter.write_record([
                    i.to_string(),
                    c.to_string(),
                    per(Period::Hourly)[k].to_string(),
                    per(Period::Daily)[k].to_string(),
                    per(Period::Weekly)[k].to_string(),
                ])?;
            }
        }
        scatter.flush()?;

        let bins = a.bins.max(1);
        let mut hist = csv::Writer::from_writer(File::create(a.out.join("tcorr_histogram.csv"))?);
        hist.write_record(["period", "bin_lower", "bin_upper", "count"])?;
        for p in Period::ALL {
            let mut counts = vec![0usize; bins];
            for &v in per(p) {
                counts[((v * bins as f64) as usize).min(bins - 1)] += 1;
            }
            for (b, n) in counts.iter().enumerate() {
                hist.write_record([
                    p.name().to_string(),
                    (b as f64 / bins as f64).to_string(),
                    ((b + 1) as f64 / bins as f64).to_string(),
                    n.to_string(),
                ])?;
            }
        }
        hist.flush()?;
    }
    m.datasets = a.report.iter().chain(&a.tcorr).map(|p| p.display().to_string()).collect();
    println!("wrote plot data to {}", a.out.display());
    m.write(&a.out)?;
    Ok(())
}
