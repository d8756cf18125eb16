//! Distance-guided differential fuzzing of an [`HdcModel`].
//!
//! For each input the fuzzer records the model's own prediction as the
//! reference label, then repeatedly mutates a small population of seeds.
//! A mutant whose predicted label differs from the reference is an
//! adversarial example. Between iterations only the `top_n` seeds furthest
//! from the reference class hypervector survive (or a uniform sample, in
//! unguided mode). Ground-truth labels are never consulted.

use std::sync::atomic::{AtomicBool, Ordering};
use std::time::Instant;

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::model::HdcModel;
use crate::rng::RngStream;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Pixel mutation applied to a seed image.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum MutationStrategy {
    /// One uniformly chosen row gets fresh uniform values.
    RowRand,
    /// One uniformly chosen column gets fresh uniform values.
    ColRand,
    /// Row or column, picked uniformly per application.
    RowColRand,
    /// Independent uniform integer offset in `[-amplitude, amplitude]` per pixel.
    Rand { amplitude: u8 },
    /// Independent rounded Gaussian noise per pixel.
    Gauss { sigma: f64 },
    /// Translate the whole image `step` pixels in a random cardinal direction,
    /// filling vacated pixels with 0.
    Shift { step: usize },
}

impl MutationStrategy {
    pub const DEFAULT_SIGMA: f64 = 2.0;
    pub const DEFAULT_AMPLITUDE: u8 = 3;
    pub const DEFAULT_SHIFT_STEP: usize = 1;

    pub fn gauss() -> Self {
        Self::Gauss {
            sigma: Self::DEFAULT_SIGMA,
        }
    }

    pub fn rand() -> Self {
        Self::Rand {
            amplitude: Self::DEFAULT_AMPLITUDE,
        }
    }

    pub fn shift() -> Self {
        Self::Shift {
            step: Self::DEFAULT_SHIFT_STEP,
        }
    }

    /// Strategy by name with default parameters.
    pub fn from_name(name: &str) -> Result<Self> {
        Ok(match name {
            "row_rand" => Self::RowRand,
            "col_rand" => Self::ColRand,
            "row_col_rand" => Self::RowColRand,
            "rand" => Self::rand(),
            "gauss" => Self::gauss(),
            "shift" => Self::shift(),
            other => {
                return Err(Error::InvalidConfig(format!(
                    "unknown strategy {other:?}; expected row_rand, col_rand, row_col_rand, rand, gauss or shift"
                )))
            }
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::RowRand => "row_rand",
            Self::ColRand => "col_rand",
            Self::RowColRand => "row_col_rand",
            Self::Rand { .. } => "rand",
            Self::Gauss { .. } => "gauss",
            Self::Shift { .. } => "shift",
        }
    }

    /// Shift rearranges pixels, so distance budgets do not apply to it.
    pub fn is_distance_exempt(&self) -> bool {
        matches!(self, Self::Shift { .. })
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Rand { amplitude: 0 } => Err(Error::InvalidConfig("rand amplitude must be positive".into())),
            Self::Gauss { sigma } if !(sigma > 0.0 && sigma.is_finite()) => Err(Error::InvalidConfig(format!(
                "gauss sigma must be positive, got {sigma}"
            ))),
            Self::Shift { step: 0 } => Err(Error::InvalidConfig("shift step must be positive".into())),
            _ => Ok(()),
        }
    }
}

/// Applies `strategy` with pixels clamped to `[0, 255]`.
pub fn mutate<R: Rng + ?Sized>(img: &Image, strategy: &MutationStrategy, rng: &mut R) -> Image {
    mutate_bounded(img, strategy, u8::MAX, rng)
}

/// Applies `strategy` with pixels clamped to `[0, max_value]`.
pub fn mutate_bounded<R: Rng + ?Sized>(img: &Image, strategy: &MutationStrategy, max_value: u8, rng: &mut R) -> Image {
    let (w, h) = (img.width(), img.height());
    let mut out = img.clone();
    let px = out.pixels_mut();
    let clamp = |v: i32| v.clamp(0, max_value as i32) as u8;
    match *strategy {
        MutationStrategy::RowRand => fill_row(px, w, rng.random_range(0..h), max_value, rng),
        MutationStrategy::ColRand => fill_col(px, w, h, rng.random_range(0..w), max_value, rng),
        MutationStrategy::RowColRand => {
            if rng.random::<bool>() {
                fill_row(px, w, rng.random_range(0..h), max_value, rng)
            } else {
                fill_col(px, w, h, rng.random_range(0..w), max_value, rng)
            }
        }
        MutationStrategy::Rand { amplitude } => {
            let a = amplitude as i32;
            for p in px.iter_mut() {
                *p = clamp(*p as i32 + rng.random_range(-a..=a));
            }
        }
        MutationStrategy::Gauss { sigma } => {
            let normal = Normal::new(0.0, sigma).expect("sigma validated positive");
            for p in px.iter_mut() {
                let noise: f64 = normal.sample(rng);
                *p = clamp(*p as i32 + noise.round() as i32);
            }
        }
        MutationStrategy::Shift { step } => {
            let (dx, dy): (isize, isize) = match rng.random_range(0..4) {
                0 => (step as isize, 0),
                1 => (-(step as isize), 0),
                2 => (0, step as isize),
                _ => (0, -(step as isize)),
            };
            return translate(img, dx, dy);
        }
    }
    out
}

fn fill_row<R: Rng + ?Sized>(px: &mut [u8], w: usize, row: usize, max: u8, rng: &mut R) {
    for p in &mut px[row * w..(row + 1) * w] {
        *p = rng.random_range(0..=max);
    }
}

fn fill_col<R: Rng + ?Sized>(px: &mut [u8], w: usize, h: usize, col: usize, max: u8, rng: &mut R) {
    for y in 0..h {
        px[y * w + col] = rng.random_range(0..=max);
    }
}

/// Moves content by `(dx, dy)`; vacated pixels become 0, nothing wraps.
pub fn translate(img: &Image, dx: isize, dy: isize) -> Image {
    let (w, h) = (img.width() as isize, img.height() as isize);
    let mut out = vec![0u8; img.len()];
    for y in 0..h {
        let sy = y - dy;
        if !(0..h).contains(&sy) {
            continue;
        }
        for x in 0..w {
            let sx = x - dx;
            if (0..w).contains(&sx) {
                out[(y * w + x) as usize] = img.pixels()[(sy * w + sx) as usize];
            }
        }
    }
    Image::new(img.width(), img.height(), out).expect("same shape")
}

/// `1 - cos(AM[reference_label], encode(img))`, in `[0, 2]`.
pub fn fitness(model: &HdcModel, reference_label: usize, img: &Image) -> Result<f64> {
    let reference = reference_of(model, reference_label)?;
    Ok(1.0 - reference.cosine(&model.encode(img)?)?)
}

fn reference_of(model: &HdcModel, label: usize) -> Result<&crate::hv::Hypervector> {
    if label >= model.classes() {
        return Err(Error::LabelOutOfRange {
            label,
            classes: model.classes(),
        });
    }
    model
        .associative_memory()
        .reference(label)
        .ok_or(Error::UntrainedClass(label))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Seed {
    pub image: Image,
    pub fitness: f64,
    /// Creation order within one fuzzing run; breaks fitness ties.
    pub generation: usize,
}

/// The `n` fittest seeds, highest fitness first; equal fitness keeps the
/// lower generation index first.
pub fn select_fittest(mut seeds: Vec<Seed>, n: usize) -> Result<Vec<Seed>> {
    if seeds.is_empty() {
        return Err(Error::EmptyInput("seed list"));
    }
    if n == 0 {
        return Err(Error::InvalidConfig("selection size must be at least 1".into()));
    }
    seeds.sort_by(|a, b| b.fitness.total_cmp(&a.fitness).then(a.generation.cmp(&b.generation)));
    seeds.truncate(n);
    Ok(seeds)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Norm {
    L1,
    L2,
}

/// Minkowski distance over pixels scaled to `[0, 1]`.
pub fn normalized_distance(a: &Image, b: &Image, norm: Norm) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(Error::DimensionMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let diffs = a
        .pixels()
        .iter()
        .zip(b.pixels())
        .map(|(&x, &y)| (x as f64 - y as f64).abs() / 255.0);
    Ok(match norm {
        Norm::L1 => diffs.sum(),
        Norm::L2 => diffs.map(|d| d * d).sum::<f64>().sqrt(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FuzzConfig {
    /// Iteration budget per input.
    pub iter_times: usize,
    /// Survivors kept between iterations.
    pub top_n: usize,
    /// Mutants generated from each survivor per iteration.
    pub batch: usize,
    /// Maximum normalized L2 distance from the original (non-shift strategies).
    pub l2_threshold: f64,
    /// Fitness-guided survivor selection; uniform sampling when false.
    pub guided: bool,
    pub strategy: MutationStrategy,
    pub master_seed: u64,
}

impl Default for FuzzConfig {
    fn default() -> Self {
        Self {
            iter_times: 50,
            top_n: 3,
            batch: 10,
            l2_threshold: 1.0,
            guided: true,
            strategy: MutationStrategy::gauss(),
            master_seed: 0,
        }
    }
}

impl FuzzConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iter_times == 0 {
            return Err(Error::InvalidConfig("iter_times must be at least 1".into()));
        }
        if self.top_n == 0 {
            return Err(Error::InvalidConfig("top_n must be at least 1".into()));
        }
        if self.batch == 0 {
            return Err(Error::InvalidConfig("batch must be at least 1".into()));
        }
        if self.l2_threshold.is_nan() || self.l2_threshold <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "l2_threshold must be positive, got {}",
                self.l2_threshold
            )));
        }
        self.strategy.validate()
    }
}

/// One adversarial finding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FuzzResult {
    pub original: Image,
    pub adversarial: Image,
    pub reference_label: usize,
    pub adversarial_label: usize,
    pub iterations: usize,
    pub l1: f64,
    pub l2: f64,
    pub strategy: MutationStrategy,
    pub elapsed_secs: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum FuzzOutcome {
    Found(FuzzResult),
    Exhausted {
        reference_label: usize,
        iterations: usize,
        elapsed_secs: f64,
    },
}

impl FuzzOutcome {
    pub fn is_found(&self) -> bool {
        matches!(self, Self::Found(_))
    }

    pub fn iterations(&self) -> usize {
        match self {
            Self::Found(r) => r.iterations,
            Self::Exhausted { iterations, .. } => *iterations,
        }
    }

    pub fn reference_label(&self) -> usize {
        match self {
            Self::Found(r) => r.reference_label,
            Self::Exhausted { reference_label, .. } => *reference_label,
        }
    }
}

/// What happened in one iteration of one fuzzing run.
#[derive(Clone, Debug)]
pub struct IterationTrace {
    pub iteration: usize,
    /// Mutants dropped for exceeding the L2 budget.
    pub over_budget: usize,
    /// Fitness of every seed that survived into the next iteration.
    pub survivors: Vec<f64>,
    /// Fitness of every evaluated candidate that did not survive.
    pub discarded: Vec<f64>,
}

/// Fuzzes a single input.
pub fn fuzz_one(model: &HdcModel, img: &Image, cfg: &FuzzConfig, rng: &mut RngStream) -> Result<FuzzOutcome> {
    fuzz_one_observed(model, img, cfg, rng, &mut |_| {})
}

/// [`fuzz_one`] with a callback after every iteration that ends without a finding.
pub fn fuzz_one_observed(
    model: &HdcModel,
    img: &Image,
    cfg: &FuzzConfig,
    rng: &mut RngStream,
    observe: &mut dyn FnMut(&IterationTrace),
) -> Result<FuzzOutcome> {
    cfg.validate()?;
    if !model.is_trained() {
        return Err(Error::NoTrainedClasses);
    }
    let start = Instant::now();
    let max_value = (model.levels() - 1).min(u8::MAX as usize) as u8;
    let exempt = cfg.strategy.is_distance_exempt();

    let original_query = model.encode(img)?;
    let reference_label = model.predict_encoded(&original_query)?.label;
    let reference = reference_of(model, reference_label)?;

    let mut generation = 0usize;
    let mut survivors = vec![Seed {
        image: img.clone(),
        fitness: 1.0 - reference.cosine(&original_query)?,
        generation,
    }];

    for iteration in 1..=cfg.iter_times {
        let mut candidates = Vec::with_capacity(survivors.len() * cfg.batch);
        let mut over_budget = 0;
        for parent in &survivors {
            for _ in 0..cfg.batch {
                let mutant = mutate_bounded(&parent.image, &cfg.strategy, max_value, rng);
                let l2 = normalized_distance(img, &mutant, Norm::L2)?;
                if !exempt && l2 > cfg.l2_threshold {
                    over_budget += 1;
                    continue;
                }
                let query = model.encode(&mutant)?;
                let prediction = model.predict_encoded(&query)?;
                if prediction.label != reference_label {
                    return Ok(FuzzOutcome::Found(FuzzResult {
                        l1: normalized_distance(img, &mutant, Norm::L1)?,
                        l2,
                        original: img.clone(),
                        adversarial: mutant,
                        reference_label,
                        adversarial_label: prediction.label,
                        iterations: iteration,
                        strategy: cfg.strategy,
                        elapsed_secs: start.elapsed().as_secs_f64(),
                    }));
                }
                generation += 1;
                candidates.push(Seed {
                    image: mutant,
                    fitness: 1.0
                        - prediction
                            .similarity(reference_label)
                            .expect("reference class is trained"),
                    generation,
                });
            }
        }

        let mut pool = std::mem::take(&mut survivors);
        pool.extend(candidates);
        let (kept, dropped) = if cfg.guided {
            let kept = select_fittest(pool.clone(), cfg.top_n)?;
            let dropped = drop_kept(pool, &kept);
            (kept, dropped)
        } else {
            sample_uniform(pool, cfg.top_n, rng)
        };
        observe(&IterationTrace {
            iteration,
            over_budget,
            survivors: kept.iter().map(|s| s.fitness).collect(),
            discarded: dropped.iter().map(|s| s.fitness).collect(),
        });
        survivors = kept;
    }

    Ok(FuzzOutcome::Exhausted {
        reference_label,
        iterations: cfg.iter_times,
        elapsed_secs: start.elapsed().as_secs_f64(),
    })
}

fn drop_kept(pool: Vec<Seed>, kept: &[Seed]) -> Vec<Seed> {
    pool.into_iter()
        .filter(|s| !kept.iter().any(|k| k.generation == s.generation))
        .collect()
}

fn sample_uniform(pool: Vec<Seed>, n: usize, rng: &mut RngStream) -> (Vec<Seed>, Vec<Seed>) {
    if pool.len() <= n {
        return (pool, Vec::new());
    }
    let mut picked = sample(rng, pool.len(), n).into_vec();
    picked.sort_unstable();
    let mut kept = Vec::with_capacity(n);
    let mut dropped = Vec::with_capacity(pool.len() - n);
    for (i, seed) in pool.into_iter().enumerate() {
        if picked.binary_search(&i).is_ok() {
            kept.push(seed);
        } else {
            dropped.push(seed);
        }
    }
    (kept, dropped)
}

/// Per-input outcome inside a [`CampaignReport`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub input_index: usize,
    pub success: bool,
    pub reference_label: usize,
    pub adversarial_label: Option<usize>,
    pub iterations: usize,
    pub l1: Option<f64>,
    pub l2: Option<f64>,
    pub elapsed_secs: f64,
    pub original: Image,
    pub adversarial: Option<Image>,
}

impl CaseRecord {
    fn from_outcome(input_index: usize, original: &Image, outcome: FuzzOutcome) -> Self {
        match outcome {
            FuzzOutcome::Found(r) => Self {
                input_index,
                success: true,
                reference_label: r.reference_label,
                adversarial_label: Some(r.adversarial_label),
                iterations: r.iterations,
                l1: Some(r.l1),
                l2: Some(r.l2),
                elapsed_secs: r.elapsed_secs,
                original: r.original,
                adversarial: Some(r.adversarial),
            },
            FuzzOutcome::Exhausted {
                reference_label,
                iterations,
                elapsed_secs,
            } => Self {
                input_index,
                success: false,
                reference_label,
                adversarial_label: None,
                iterations,
                l1: None,
                l2: None,
                elapsed_secs,
                original: original.clone(),
                adversarial: None,
            },
        }
    }
}

/// Aggregates derived from the case records.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub attempts: usize,
    pub successes: usize,
    pub success_rate: f64,
    /// Mean over successful cases only.
    pub mean_l1: Option<f64>,
    pub mean_l2: Option<f64>,
    /// Mean over all attempts, failures counted at their full budget.
    pub mean_iterations: f64,
    pub successes_per_class: Vec<usize>,
    pub attempts_per_class: Vec<usize>,
    /// `"enforced"` or `"exempt"` (shift).
    pub distance_budget: String,
    pub iteration_mean_basis: String,
    pub distance_mean_basis: String,
}

impl CampaignSummary {
    pub fn from_cases(cases: &[CaseRecord], classes: usize, strategy: &MutationStrategy) -> Self {
        let attempts = cases.len();
        let successes = cases.iter().filter(|c| c.success).count();
        let mean = |xs: Vec<f64>| (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64);
        let mut successes_per_class = vec![0; classes];
        let mut attempts_per_class = vec![0; classes];
        for c in cases {
            if c.reference_label < classes {
                attempts_per_class[c.reference_label] += 1;
                successes_per_class[c.reference_label] += c.success as usize;
            }
        }
        Self {
            attempts,
            successes,
            success_rate: if attempts == 0 {
                0.0
            } else {
                successes as f64 / attempts as f64
            },
            mean_l1: mean(cases.iter().filter_map(|c| c.l1).collect()),
            mean_l2: mean(cases.iter().filter_map(|c| c.l2).collect()),
            mean_iterations: if attempts == 0 {
                0.0
            } else {
                cases.iter().map(|c| c.iterations).sum::<usize>() as f64 / attempts as f64
            },
            successes_per_class,
            attempts_per_class,
            distance_budget: if strategy.is_distance_exempt() {
                "exempt"
            } else {
                "enforced"
            }
            .into(),
            iteration_mean_basis: "all_attempts".into(),
            distance_mean_basis: "successes".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub schema_version: u32,
    pub classes: usize,
    pub config: FuzzConfig,
    pub summary: CampaignSummary,
    pub wall_clock_secs: f64,
    /// Wall-clock seconds scaled to 1000 successes; `None` without successes.
    pub secs_per_1k_successes: Option<f64>,
    /// True when the campaign stopped early; missing inputs have no record.
    pub interrupted: bool,
    /// Sorted by `input_index`.
    pub cases: Vec<CaseRecord>,
}

impl CampaignReport {
    pub fn new(
        classes: usize,
        config: FuzzConfig,
        mut cases: Vec<CaseRecord>,
        wall_clock_secs: f64,
        interrupted: bool,
    ) -> Self {
        cases.sort_by_key(|c| c.input_index);
        let summary = CampaignSummary::from_cases(&cases, classes, &config.strategy);
        let secs_per_1k_successes =
            (summary.successes > 0).then(|| wall_clock_secs * 1000.0 / summary.successes as f64);
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            classes,
            config,
            summary,
            wall_clock_secs,
            secs_per_1k_successes,
            interrupted,
            cases,
        }
    }

    pub fn strategy(&self) -> &MutationStrategy {
        &self.config.strategy
    }

    pub fn successes(&self) -> impl Iterator<Item = &CaseRecord> {
        self.cases.iter().filter(|c| c.success)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let report: Self = serde_json::from_str(text)?;
        if report.schema_version != REPORT_SCHEMA_VERSION {
            return Err(Error::Format(format!(
                "unsupported report schema version {}",
                report.schema_version
            )));
        }
        Ok(report)
    }

    /// One row per case:
    /// `input_index,success,reference_label,adversarial_label,iterations,l1,l2,elapsed_secs`.
    /// Missing values are empty fields.
    pub fn to_csv(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Row {
            input_index: usize,
            success: bool,
            reference_label: usize,
            adversarial_label: Option<usize>,
            iterations: usize,
            l1: Option<f64>,
            l2: Option<f64>,
            elapsed_secs: f64,
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        for c in &self.cases {
            w.serialize(Row {
                input_index: c.input_index,
                success: c.success,
                reference_label: c.reference_label,
                adversarial_label: c.adversarial_label,
                iterations: c.iterations,
                l1: c.l1,
                l2: c.l2,
                elapsed_secs: c.elapsed_secs,
            })?;
        }
        if self.cases.is_empty() {
            w.write_record([
                "input_index",
                "success",
                "reference_label",
                "adversarial_label",
                "iterations",
                "l1",
                "l2",
                "elapsed_secs",
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Fuzzes every input in parallel. Input `i` draws from stream
/// `("fuzz-input", i)` of `cfg.master_seed`, so the report does not depend on
/// thread count or scheduling (apart from timing fields).
pub fn fuzz_campaign(model: &HdcModel, inputs: &[Image], cfg: &FuzzConfig) -> Result<CampaignReport> {
    fuzz_campaign_with(model, inputs, cfg, 0, None)
}

/// [`fuzz_campaign`] with an index offset for the per-input streams and an
/// optional stop flag. Inputs not started when the flag is raised are skipped.
pub fn fuzz_campaign_with(
    model: &HdcModel,
    inputs: &[Image],
    cfg: &FuzzConfig,
    index_offset: usize,
    stop: Option<&AtomicBool>,
) -> Result<CampaignReport> {
    cfg.validate()?;
    if inputs.is_empty() {
        return Err(Error::EmptyInput("campaign inputs"));
    }
    if !model.is_trained() {
        return Err(Error::NoTrainedClasses);
    }
    let start = Instant::now();
    let cases: Vec<Option<CaseRecord>> = inputs
        .par_iter()
        .enumerate()
        .map(|(i, img)| {
            if stop.is_some_and(|s| s.load(Ordering::Relaxed)) {
                return Ok(None);
            }
            let index = index_offset + i;
            let mut rng = RngStream::derive(cfg.master_seed, "fuzz-input", index as u64);
            let outcome = fuzz_one(model, img, cfg, &mut rng)?;
            Ok(Some(CaseRecord::from_outcome(index, img, outcome)))
        })
        .collect::<Result<_>>()?;
    let interrupted = cases.iter().any(Option::is_none);
    Ok(CampaignReport::new(
        model.classes(),
        cfg.clone(),
        cases.into_iter().flatten().collect(),
        start.elapsed().as_secs_f64(),
        interrupted,
    ))
}
