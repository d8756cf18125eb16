//! Retraining defense: harvest adversarials, fold half of them back into the
//! class accumulators under their ground-truth labels, then attack again.

use std::str::FromStr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::fuzz::{fuzz_campaign_with, CaseRecord, FuzzConfig};
use crate::image::Image;
use crate::model::HdcModel;
use crate::rng::RngStream;

pub const DEFENSE_SCHEMA_VERSION: u32 = 1;

/// How subset B is attacked after retraining.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReattackMode {
    /// Fuzz B's original images from scratch against both models.
    #[default]
    Refuzz,
    /// Re-submit B's stored adversarials to the retrained model.
    Replay,
}

impl FromStr for ReattackMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "refuzz" => Ok(Self::Refuzz),
            "replay" => Ok(Self::Replay),
            other => Err(Error::InvalidConfig(format!(
                "unknown re-attack mode {other:?}; expected refuzz or replay"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DefenseConfig {
    /// Adversarials to harvest before splitting.
    pub target_adversarials: usize,
    /// Share of the harvested adversarials used for retraining.
    pub retrain_fraction: f64,
    pub retrain_weight: i32,
    pub mode: ReattackMode,
    pub fuzz: FuzzConfig,
}

impl Default for DefenseConfig {
    fn default() -> Self {
        Self {
            target_adversarials: 1000,
            retrain_fraction: 0.5,
            retrain_weight: 1,
            mode: ReattackMode::Refuzz,
            fuzz: FuzzConfig::default(),
        }
    }
}

impl DefenseConfig {
    pub fn validate(&self) -> Result<()> {
        self.fuzz.validate()?;
        if self.target_adversarials == 0 {
            return Err(Error::InvalidConfig("target_adversarials must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.retrain_fraction) {
            return Err(Error::InvalidConfig("retrain_fraction must lie in [0, 1]".into()));
        }
        if self.retrain_weight <= 0 {
            return Err(Error::InvalidConfig("retrain_weight must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DefenseSummary {
    pub schema_version: u32,
    pub mode: ReattackMode,
    pub target_adversarials: usize,
    pub inputs_fuzzed: usize,
    pub adversarials: usize,
    pub retrain_count: usize,
    pub reattack_count: usize,
    pub retrain_weight: i32,
    pub success_rate_before: f64,
    pub success_rate_after: f64,
    /// `before - after` in percentage points.
    pub drop_points: f64,
    /// `(before - after) / before`; `None` when `before` is zero.
    pub relative_drop: Option<f64>,
    pub clean_accuracy_before: f64,
    pub clean_accuracy_after: f64,
    pub harvest_secs: f64,
    pub retrain_secs: f64,
    pub reattack_secs: f64,
    pub interrupted: bool,
    pub warnings: Vec<String>,
}

#[derive(Debug)]
pub struct DefenseOutcome {
    pub model: HdcModel,
    pub summary: DefenseSummary,
}

struct Harvested {
    image: Image,
    truth: usize,
    case: CaseRecord,
}

/// Runs the whole defense loop against a copy of `model`. `clean` provides
/// both the fuzzing inputs (in order) and the clean-accuracy benchmark.
pub fn run_defense(
    model: &HdcModel,
    clean: &LabeledDataset,
    cfg: &DefenseConfig,
    stop: Option<&AtomicBool>,
) -> Result<DefenseOutcome> {
    cfg.validate()?;
    if clean.is_empty() {
        return Err(Error::EmptyInput("defense dataset"));
    }
    clean.check_classes(model.classes())?;
    let stopped = || stop.is_some_and(|s| s.load(Ordering::Relaxed));
    let mut warnings = Vec::new();
    let clean_accuracy_before = model.accuracy(clean.images(), clean.labels())?;

    let t = Instant::now();
    let mut harvested = Vec::new();
    let mut next = 0;
    let mut interrupted = false;
    while harvested.len() < cfg.target_adversarials && next < clean.len() {
        if stopped() {
            interrupted = true;
            break;
        }
        let want = cfg.target_adversarials - harvested.len();
        let len = (want + want / 10).max(32).min(clean.len() - next);
        let report = fuzz_campaign_with(model, &clean.images()[next..next + len], &cfg.fuzz, next, stop)?;
        interrupted |= report.interrupted;
        for case in report.cases.into_iter().filter(|c| c.success) {
            if harvested.len() == cfg.target_adversarials {
                break;
            }
            let i = case.input_index;
            harvested.push(Harvested {
                image: case
                    .adversarial
                    .clone()
                    .expect("successful case carries its adversarial"),
                truth: clean.labels()[i],
                case,
            });
        }
        next += len;
    }
    let harvest_secs = t.elapsed().as_secs_f64();
    if harvested.len() < cfg.target_adversarials {
        warnings.push(format!(
            "harvested {} adversarials, fewer than the {} requested",
            harvested.len(),
            cfg.target_adversarials
        ));
    }

    let mut order: Vec<usize> = (0..harvested.len()).collect();
    order.shuffle(&mut RngStream::named(cfg.fuzz.master_seed, "defense-split"));
    let split = (harvested.len() as f64 * cfg.retrain_fraction).floor() as usize;
    let (subset_a, subset_b) = order.split_at(split);

    let t = Instant::now();
    let mut hardened = model.clone();
    hardened.retrain(
        subset_a.iter().map(|&i| (&harvested[i].image, harvested[i].truth)),
        cfg.retrain_weight,
    )?;
    let retrain_secs = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let (success_rate_before, success_rate_after) = if subset_b.is_empty() {
        warnings.push("re-attack subset is empty".into());
        (0.0, 0.0)
    } else {
        match cfg.mode {
            ReattackMode::Refuzz => {
                let originals: Vec<Image> = subset_b.iter().map(|&i| harvested[i].case.original.clone()).collect();
                let mut reattack = cfg.fuzz.clone();
                reattack.master_seed = RngStream::named(cfg.fuzz.master_seed, "defense-reattack").next_u64();
                let before = fuzz_campaign_with(model, &originals, &reattack, 0, stop)?;
                let after = fuzz_campaign_with(&hardened, &originals, &reattack, 0, stop)?;
                interrupted |= before.interrupted || after.interrupted;
                (before.summary.success_rate, after.summary.success_rate)
            }
            ReattackMode::Replay => {
                let mut fooled = 0usize;
                for &i in subset_b {
                    let h = &harvested[i];
                    let reference = hardened.predict(&h.case.original)?.label;
                    if hardened.predict(&h.image)?.label != reference {
                        fooled += 1;
                    }
                }
                (1.0, fooled as f64 / subset_b.len() as f64)
            }
        }
    };
    let reattack_secs = t.elapsed().as_secs_f64();
    if interrupted {
        warnings.push("interrupted before completion; rates cover finished inputs only".into());
    }

    let clean_accuracy_after = hardened.accuracy(clean.images(), clean.labels())?;
    let summary = DefenseSummary {
        schema_version: DEFENSE_SCHEMA_VERSION,
        mode: cfg.mode,
        target_adversarials: cfg.target_adversarials,
        inputs_fuzzed: next,
        adversarials: harvested.len(),
        retrain_count: subset_a.len(),
        reattack_count: subset_b.len(),
        retrain_weight: cfg.retrain_weight,
        success_rate_before,
        success_rate_after,
        drop_points: (success_rate_before - success_rate_after) * 100.0,
        relative_drop: (success_rate_before > 0.0)
            .then(|| (success_rate_before - success_rate_after) / success_rate_before),
        clean_accuracy_before,
        clean_accuracy_after,
        harvest_secs,
        retrain_secs,
        reattack_secs,
        interrupted,
        warnings,
    };
    Ok(DefenseOutcome {
        model: hardened,
        summary,
    })
}
