use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::Instant;

use hdfuzz_core::dataset::load_idx_images;
use hdfuzz_core::{
    emit_case_triples, fuzz_campaign_with, per_class_stats, render_table, run_defense, CampaignReport, HdcModel,
    LabeledDataset, ModelSpec,
};
use log::{info, warn};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub const SUMMARY_SCHEMA_VERSION: u32 = 1;

#[derive(Serialize)]
struct Durations {
    load_secs: f64,
    train_secs: f64,
    eval_secs: f64,
    save_secs: f64,
}

#[derive(Serialize)]
struct TrainSummary {
    schema_version: u32,
    accuracy: f64,
    dim: usize,
    seed: u64,
    width: usize,
    height: usize,
    levels: usize,
    classes: usize,
    train_examples: usize,
    test_examples: usize,
    model: PathBuf,
    durations: Durations,
}

#[derive(Serialize)]
struct EvalSummary {
    schema_version: u32,
    accuracy: f64,
    test_examples: usize,
    per_class_accuracy: Vec<Option<f64>>,
    eval_secs: f64,
}

fn load_pair(name: &str, images: &Path, labels: &Path) -> CliResult<LabeledDataset> {
    let data = LabeledDataset::load(name, images, labels).map_err(CliError::input)?;
    if data.is_empty() {
        return Err(CliError::Input(format!("{} holds no images", images.display())));
    }
    Ok(data)
}

fn load_model(cfg: &RunConfig) -> CliResult<HdcModel> {
    HdcModel::load(&cfg.model).map_err(CliError::input)
}

fn out_file(cfg: &RunConfig, name: &str) -> CliResult<PathBuf> {
    fs::create_dir_all(&cfg.out_dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", cfg.out_dir.display())))?;
    Ok(cfg.out_dir.join(name))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn emit_json<T: Serialize>(cfg: &RunConfig, name: &str, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    write_text(&out_file(cfg, name)?, &text)?;
    println!("{text}");
    Ok(())
}

pub fn train(cfg: &RunConfig) -> CliResult<()> {
    let t = Instant::now();
    let train = load_pair("train", &cfg.train_images, &cfg.train_labels)?;
    let test = load_pair("test", &cfg.test_images, &cfg.test_labels)?;
    train.check_classes(cfg.classes).map_err(CliError::input)?;
    test.check_classes(cfg.classes).map_err(CliError::input)?;
    let first = &train.images()[0];
    let spec = ModelSpec {
        dim: cfg.dim,
        width: first.width(),
        height: first.height(),
        levels: 256,
        classes: cfg.classes,
        seed: cfg.seed,
    };
    let load_secs = t.elapsed().as_secs_f64();
    info!("loaded {} training and {} test images", train.len(), test.len());

    let t = Instant::now();
    let mut model = HdcModel::new(spec)?;
    model.train(train.iter()).map_err(CliError::input)?;
    let train_secs = t.elapsed().as_secs_f64();
    info!("trained in {train_secs:.1}s");

    let t = Instant::now();
    let accuracy = model.accuracy(test.images(), test.labels()).map_err(CliError::input)?;
    let eval_secs = t.elapsed().as_secs_f64();

    let t = Instant::now();
    if let Some(parent) = cfg.model.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)
            .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", parent.display())))?;
    }
    model.save(&cfg.model)?;
    let save_secs = t.elapsed().as_secs_f64();

    emit_json(
        cfg,
        "train_summary.json",
        &TrainSummary {
            schema_version: SUMMARY_SCHEMA_VERSION,
            accuracy,
            dim: spec.dim,
            seed: spec.seed,
            width: spec.width,
            height: spec.height,
            levels: spec.levels,
            classes: spec.classes,
            train_examples: train.len(),
            test_examples: test.len(),
            model: cfg.model.clone(),
            durations: Durations {
                load_secs,
                train_secs,
                eval_secs,
                save_secs,
            },
        },
    )
}

pub fn eval(cfg: &RunConfig) -> CliResult<()> {
    let model = load_model(cfg)?;
    let test = load_pair("test", &cfg.test_images, &cfg.test_labels)?;
    test.check_classes(model.classes()).map_err(CliError::input)?;
    let t = Instant::now();
    let mut hits = vec![0usize; model.classes()];
    let mut totals = vec![0usize; model.classes()];
    for (img, label) in test.iter() {
        totals[label] += 1;
        if model.predict(img).map_err(CliError::input)?.label == label {
            hits[label] += 1;
        }
    }
    let correct: usize = hits.iter().sum();
    emit_json(
        cfg,
        "eval_summary.json",
        &EvalSummary {
            schema_version: SUMMARY_SCHEMA_VERSION,
            accuracy: correct as f64 / test.len() as f64,
            test_examples: test.len(),
            per_class_accuracy: hits
                .iter()
                .zip(&totals)
                .map(|(&h, &n)| (n > 0).then(|| h as f64 / n as f64))
                .collect(),
            eval_secs: t.elapsed().as_secs_f64(),
        },
    )
}

pub fn fuzz(cfg: &RunConfig, stop: &AtomicBool) -> CliResult<()> {
    let fuzz_cfg = cfg.fuzz_config()?;
    let model = load_model(cfg)?;
    let images = load_idx_images(&cfg.test_images).map_err(CliError::input)?;
    let start = cfg.input_offset.min(images.len());
    let end = cfg
        .input_count
        .map_or(images.len(), |n| start.saturating_add(n).min(images.len()));
    if start == end {
        return Err(CliError::Config(format!(
            "input slice [{start}, {end}) is empty; {} images available",
            images.len()
        )));
    }
    info!("fuzzing inputs {start}..{end} with {}", fuzz_cfg.strategy.name());
    let report =
        fuzz_campaign_with(&model, &images[start..end], &fuzz_cfg, start, Some(stop)).map_err(CliError::input)?;

    write_text(&out_file(cfg, "report.json")?, &report.to_json()?)?;
    write_text(&out_file(cfg, "report.csv")?, &report.to_csv()?)?;
    write_text(&out_file(cfg, "per_class.csv")?, &per_class_stats(&report).to_csv())?;
    if cfg.emit_triples > 0 {
        let written = emit_case_triples(&report, out_file(cfg, "triples")?, cfg.emit_triples)?;
        info!("wrote {} triple images", written.len());
    }
    println!(
        "{}",
        serde_json::to_string_pretty(&report.summary).map_err(|e| CliError::Runtime(e.to_string()))?
    );
    finish(report.interrupted || stop.load(Ordering::Relaxed))
}

pub fn defend(cfg: &RunConfig, stop: &AtomicBool) -> CliResult<()> {
    let defense_cfg = cfg.defense_config()?;
    let model = load_model(cfg)?;
    let test = load_pair("test", &cfg.test_images, &cfg.test_labels)?;
    let outcome = run_defense(&model, &test, &defense_cfg, Some(stop)).map_err(CliError::input)?;
    for w in &outcome.summary.warnings {
        warn!("{w}");
    }
    outcome.model.save(out_file(cfg, "hardened.hdcm")?)?;
    emit_json(cfg, "defense_summary.json", &outcome.summary)?;
    finish(outcome.summary.interrupted)
}

pub fn report(cfg: &RunConfig, paths: &[PathBuf]) -> CliResult<()> {
    let reports = paths
        .iter()
        .map(|p| {
            let text =
                fs::read_to_string(p).map_err(|e| CliError::Input(format!("cannot read {}: {e}", p.display())))?;
            CampaignReport::from_json(&text).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))
        })
        .collect::<CliResult<Vec<_>>>()?;
    let table = render_table(&reports);
    write_text(&out_file(cfg, "table.csv")?, &table.csv)?;
    write_text(&out_file(cfg, "table.txt")?, &table.text)?;
    for (path, r) in paths.iter().zip(&reports) {
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
        write_text(
            &out_file(cfg, &format!("{stem}.per_class.csv"))?,
            &per_class_stats(r).to_csv(),
        )?;
    }
    print!("{}", table.text);
    if reports.iter().any(|r| r.strategy().is_distance_exempt()) {
        println!("* shift rearranges pixels; its distances are reported but exempt from the budget");
    }
    Ok(())
}

fn finish(interrupted: bool) -> CliResult<()> {
    if interrupted {
        Err(CliError::Interrupted)
    } else {
        Ok(())
    }
}
