use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use hdfuzz_core::{DefenseConfig, FuzzConfig, MutationStrategy, ReattackMode};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Declares `RunConfig` (JSON, every key optional) and `Overrides` (one
/// `--kebab-case` flag per field) from a single field list.
macro_rules! run_config {
    ($( $(#[doc = $doc:literal])* $field:ident : $ty:ty = $default:expr ),* $(,)?) => {
        #[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
        #[serde(deny_unknown_fields, default)]
        pub struct RunConfig {
            $( $(#[doc = $doc])* pub $field: $ty, )*
        }

        impl Default for RunConfig {
            fn default() -> Self {
                Self { $( $field: $default, )* }
            }
        }

        #[derive(Args, Clone, Debug, Default)]
        pub struct Overrides {
            $( $(#[doc = $doc])* #[arg(long, global = true)] pub $field: Option<$ty>, )*
        }

        impl Overrides {
            fn apply(self, cfg: &mut RunConfig) {
                $( if let Some(v) = self.$field { cfg.$field = v; } )*
            }
        }
    };
}

run_config! {
    /// IDX training images.
    train_images: PathBuf = "data/mnist/train-images-idx3-ubyte".into(),
    /// IDX training labels.
    train_labels: PathBuf = "data/mnist/train-labels-idx1-ubyte".into(),
    /// IDX test images (evaluation and fuzzing inputs).
    test_images: PathBuf = "data/mnist/t10k-images-idx3-ubyte".into(),
    /// IDX test labels.
    test_labels: PathBuf = "data/mnist/t10k-labels-idx1-ubyte".into(),
    /// Model file written by `train` and read by the other verbs.
    model: PathBuf = "model.hdcm".into(),
    /// Directory for reports, summaries and image triples.
    out_dir: PathBuf = "out".into(),
    /// Hypervector dimension.
    dim: usize = 10_000,
    /// Number of classes.
    classes: usize = 10,
    /// Master seed for item memories, fuzzing streams and the defense split.
    seed: u64 = 42,
    /// Fuzzing iteration budget per input.
    iter_times: usize = 50,
    /// Survivors kept per iteration.
    top_n: usize = 3,
    /// Mutants per survivor per iteration.
    batch: usize = 10,
    /// Maximum normalized L2 distance (ignored by shift).
    l2_threshold: f64 = 1.0,
    /// Fitness-guided survivor selection.
    guided: bool = true,
    /// Mutation strategy: gauss, rand, row_rand, col_rand, row_col_rand or shift.
    strategy: String = "gauss".into(),
    /// Gauss noise standard deviation in gray levels.
    sigma: f64 = MutationStrategy::DEFAULT_SIGMA,
    /// Rand noise amplitude in gray levels.
    amplitude: u8 = MutationStrategy::DEFAULT_AMPLITUDE,
    /// Shift step in pixels.
    step: usize = MutationStrategy::DEFAULT_SHIFT_STEP,
    /// First test image to fuzz.
    input_offset: usize = 0,
    /// Number of test images to fuzz (all remaining when unset).
    input_count: Option<usize> = None,
    /// Successful cases to write as original/mask/adversarial PGM triples.
    emit_triples: usize = 0,
    /// Adversarials harvested by `defend`.
    target_adversarials: usize = 1000,
    /// Share of harvested adversarials used for retraining.
    retrain_fraction: f64 = 0.5,
    /// Weight of each retraining example.
    retrain_weight: i32 = 1,
    /// Re-attack mode for `defend`: refuzz or replay.
    reattack_mode: ReattackMode = ReattackMode::Refuzz,
}

impl RunConfig {
    /// Defaults, then the JSON file, then flags.
    pub fn resolve(file: Option<&Path>, overrides: Overrides, unguided: bool) -> CliResult<Self> {
        let mut cfg = match file {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
                serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
            }
            None => Self::default(),
        };
        overrides.apply(&mut cfg);
        if unguided {
            cfg.guided = false;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.dim == 0 {
            return Err(CliError::Config("dim must be positive".into()));
        }
        if self.classes == 0 {
            return Err(CliError::Config("classes must be positive".into()));
        }
        if self.input_count == Some(0) {
            return Err(CliError::Config("input_count must be positive".into()));
        }
        self.defense_config()?.validate()?;
        Ok(())
    }

    pub fn strategy(&self) -> CliResult<MutationStrategy> {
        Ok(match MutationStrategy::from_name(&self.strategy)? {
            MutationStrategy::Gauss { .. } => MutationStrategy::Gauss { sigma: self.sigma },
            MutationStrategy::Rand { .. } => MutationStrategy::Rand {
                amplitude: self.amplitude,
            },
            MutationStrategy::Shift { .. } => MutationStrategy::Shift { step: self.step },
            other => other,
        })
    }

    pub fn fuzz_config(&self) -> CliResult<FuzzConfig> {
        Ok(FuzzConfig {
            iter_times: self.iter_times,
            top_n: self.top_n,
            batch: self.batch,
            l2_threshold: self.l2_threshold,
            guided: self.guided,
            strategy: self.strategy()?,
            master_seed: self.seed,
        })
    }

    pub fn defense_config(&self) -> CliResult<DefenseConfig> {
        Ok(DefenseConfig {
            target_adversarials: self.target_adversarials,
            retrain_fraction: self.retrain_fraction,
            retrain_weight: self.retrain_weight,
            mode: self.reattack_mode,
            fuzz: self.fuzz_config()?,
        })
    }
}
