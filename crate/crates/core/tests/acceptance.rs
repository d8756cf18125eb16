//! Acceptance suite. Prints one PASS/FAIL/SKIP line per criterion and exits
//! non-zero if any criterion fails. Criteria 1-7 need MNIST (see
//! `HDFUZZ_MNIST_DIR`); 8 and 9 always run.

mod common;

use std::io::Write as _;
use std::panic::catch_unwind;
use std::process::ExitCode;
use std::time::Instant;

use hdfuzz_core::dataset::{encode_pgm, parse_idx_images, parse_idx_labels, parse_pgm};
use hdfuzz_core::hv::{bundle, cosine};
use hdfuzz_core::{
    fuzz_campaign, per_class_stats, run_defense, CampaignReport, DefenseConfig, FuzzConfig, HdcModel, Hypervector,
    Image, LabeledDataset, ModelSpec, MutationStrategy, ReattackMode, RngStream,
};
use rand::seq::SliceRandom;
use rand::Rng;

const ACCURACY_BAND: (f64, f64) = (0.85, 0.93);
const TRAIN_BUDGET_SECS: f64 = 30.0 * 60.0;
const GAUSS_INPUTS: usize = 500;
const MIN_SUCCESS_RATE: f64 = 0.90;
const MAX_MEAN_ITERATIONS: f64 = 5.0;
const MAX_RAND_MEAN_L2: f64 = 0.25;
const THROUGHPUT_INPUTS: usize = 1000;
const MIN_PER_MINUTE: f64 = 100.0;
const GUIDED_INPUTS: usize = 500;
const MAX_GUIDED_RATIO: f64 = 0.95;
const MIN_DEFENSE_DROP_POINTS: f64 = 10.0;
const MAX_CLEAN_ACCURACY_LOSS: f64 = 0.03;
const HARDEST_CLASS: usize = 1;
const ORTHOGONAL_PAIRS: usize = 1000;
const MAX_ORTHOGONAL_COS: f64 = 0.06;
const IDX_FUZZ_INPUTS: usize = 10_000;

enum Status {
    Pass,
    Fail,
    Skip,
}

struct Board {
    failed: usize,
}

impl Board {
    fn record(&mut self, id: u32, name: &str, status: Status, detail: String) {
        let tag = match status {
            Status::Pass => "PASS",
            Status::Fail => {
                self.failed += 1;
                "FAIL"
            }
            Status::Skip => "SKIP",
        };
        println!("[{tag}] {id}. {name}: {detail}");
        let _ = std::io::stdout().flush();
    }

    fn check(&mut self, id: u32, name: &str, ok: bool, detail: String) {
        self.record(id, name, if ok { Status::Pass } else { Status::Fail }, detail);
    }
}

fn main() -> ExitCode {
    let mut board = Board { failed: 0 };
    let mut soundness = Vec::new();

    match common::load_mnist() {
        Some((train, test)) => dataset_criteria(&mut board, &train, &test, &mut soundness),
        None => {
            let why = format!("MNIST not found under {}", common::mnist_dir().display());
            for (id, name) in [
                (1, "accuracy"),
                (2, "fuzzing effectiveness"),
                (3, "perturbation size"),
                (4, "throughput"),
                (5, "guided benefit"),
                (6, "defense"),
                (7, "per-class ordering"),
            ] {
                board.record(id, name, Status::Skip, why.clone());
            }
        }
    }

    let mismatch = common::oracle_mismatch(42);
    board.check(
        8,
        "oracle equivalence",
        mismatch.is_none(),
        match mismatch {
            None => "256 images, D=16, 4 levels: bundles, encodings, accumulators, references, labels, similarities bit-exact".into(),
            Some(m) => format!("first mismatch at {m}"),
        },
    );

    let problems = property_suites(soundness);
    board.check(
        9,
        "property suites",
        problems.is_empty(),
        if problems.is_empty() {
            "hv algebra, orthogonality, fuzzer soundness, IDX fuzz, model/PGM round-trips all hold".into()
        } else {
            problems.join("; ")
        },
    );

    if board.failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{} criteria failed", board.failed);
        ExitCode::FAILURE
    }
}

/// Runs a campaign and re-checks every emitted result against the model.
fn campaign(model: &HdcModel, inputs: &[Image], cfg: FuzzConfig, violations: &mut Vec<String>) -> CampaignReport {
    let report = fuzz_campaign(model, inputs, &cfg).expect("campaign runs");
    violations.extend(common::soundness_violations(model, &report));
    report
}

fn dataset_criteria(board: &mut Board, train: &LabeledDataset, test: &LabeledDataset, soundness: &mut Vec<String>) {
    // 1. one epoch on the full training set, single-threaded
    let start = Instant::now();
    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let (model, accuracy) = single.install(|| {
        let mut model = HdcModel::new(ModelSpec::default()).unwrap();
        model.train(train.iter()).unwrap();
        let accuracy = model.accuracy(test.images(), test.labels()).unwrap();
        (model, accuracy)
    });
    let secs = start.elapsed().as_secs_f64();
    board.check(
        1,
        "accuracy",
        (ACCURACY_BAND.0..=ACCURACY_BAND.1).contains(&accuracy) && secs <= TRAIN_BUDGET_SECS,
        format!(
            "{}k train / {}k test, D={}: accuracy {accuracy:.4} (band {:?}), train+eval {secs:.1}s single-threaded (budget {TRAIN_BUDGET_SECS}s)",
            train.len() / 1000,
            test.len() / 1000,
            model.dim(),
            ACCURACY_BAND
        ),
    );

    // 2. gauss defaults
    let gauss = campaign(&model, &test.images()[..GAUSS_INPUTS], FuzzConfig::default(), soundness);
    let s = &gauss.summary;
    board.check(
        2,
        "fuzzing effectiveness",
        s.success_rate >= MIN_SUCCESS_RATE && s.mean_iterations <= MAX_MEAN_ITERATIONS,
        format!(
            "gauss over {GAUSS_INPUTS} inputs: success {:.3} (min {MIN_SUCCESS_RATE}), mean iterations {:.3} (max {MAX_MEAN_ITERATIONS})",
            s.success_rate, s.mean_iterations
        ),
    );

    // 3. rand defaults; the hard budget is checked on every non-shift campaign below
    let rand_cfg = FuzzConfig {
        strategy: MutationStrategy::rand(),
        ..Default::default()
    };
    let rand = campaign(&model, &test.images()[..GAUSS_INPUTS], rand_cfg, soundness);
    let mean_l2 = rand.summary.mean_l2.unwrap_or(f64::INFINITY);
    let over_budget: usize = [&gauss, &rand]
        .iter()
        .flat_map(|r| r.successes())
        .filter(|c| common::manual_l2(&c.original, c.adversarial.as_ref().unwrap()) > 1.0)
        .count();
    board.check(
        3,
        "perturbation size",
        mean_l2 <= MAX_RAND_MEAN_L2 && over_budget == 0,
        format!(
            "rand mean L2 {mean_l2:.4} over {} successes (max {MAX_RAND_MEAN_L2}); {over_budget} non-shift successes above L2 1.0",
            rand.summary.successes
        ),
    );

    // 4. throughput with the default pool
    let threads = rayon::current_num_threads();
    let cfg = FuzzConfig {
        master_seed: 4,
        ..Default::default()
    };
    let through = campaign(&model, &test.images()[..THROUGHPUT_INPUTS], cfg, soundness);
    let per_minute = through.summary.successes as f64 / through.wall_clock_secs * 60.0;
    board.check(
        4,
        "throughput",
        per_minute >= MIN_PER_MINUTE,
        format!(
            "{} adversarials in {:.2}s on {threads} thread(s): {per_minute:.0}/min (min {MIN_PER_MINUTE})",
            through.summary.successes, through.wall_clock_secs
        ),
    );

    // 5. guided vs unguided on matched inputs and seeds
    let strategy = MutationStrategy::Rand { amplitude: 1 };
    let inputs = &test.images()[..GUIDED_INPUTS];
    let guided = campaign(
        &model,
        inputs,
        FuzzConfig {
            strategy,
            ..Default::default()
        },
        soundness,
    );
    let unguided = campaign(
        &model,
        inputs,
        FuzzConfig {
            strategy,
            guided: false,
            ..Default::default()
        },
        soundness,
    );
    let ratio = guided.summary.mean_iterations / unguided.summary.mean_iterations;
    board.check(
        5,
        "guided benefit",
        ratio <= MAX_GUIDED_RATIO,
        format!(
            "rand(amplitude 1) over {GUIDED_INPUTS} inputs: guided {:.3} vs unguided {:.3} mean iterations, ratio {ratio:.3} (max {MAX_GUIDED_RATIO})",
            guided.summary.mean_iterations, unguided.summary.mean_iterations
        ),
    );

    // 6. defense with default settings; replay shown for reference
    let defense = run_defense(&model, test, &DefenseConfig::default(), None)
        .expect("defense runs")
        .summary;
    let replay_cfg = DefenseConfig {
        mode: ReattackMode::Replay,
        ..Default::default()
    };
    let replay = run_defense(&model, test, &replay_cfg, None)
        .expect("defense runs")
        .summary;
    let accuracy_loss = defense.clean_accuracy_before - defense.clean_accuracy_after;
    board.check(
        6,
        "defense",
        defense.drop_points >= MIN_DEFENSE_DROP_POINTS && accuracy_loss <= MAX_CLEAN_ACCURACY_LOSS,
        format!(
            "re-fuzz, weight {}: {} adversarials, success {:.3} -> {:.3} (drop {:.1}pp, min {MIN_DEFENSE_DROP_POINTS}), clean accuracy {:.4} -> {:.4}; replay for reference: {:.3} -> {:.3} (drop {:.1}pp)",
            defense.retrain_weight,
            defense.adversarials,
            defense.success_rate_before,
            defense.success_rate_after,
            defense.drop_points,
            defense.clean_accuracy_before,
            defense.clean_accuracy_after,
            replay.success_rate_before,
            replay.success_rate_after,
            replay.drop_points
        ),
    );

    // 7. per-class iterations over the whole test set
    let full = campaign(&model, test.images(), FuzzConfig::default(), soundness);
    let stats = per_class_stats(&full);
    let hardest = stats.hardest_class();
    let means: Vec<String> = stats
        .rows
        .iter()
        .map(|r| format!("{}:{:.2}", r.class, r.mean_iterations.unwrap_or(f64::NAN)))
        .collect();
    board.check(
        7,
        "per-class ordering",
        hardest == Some(HARDEST_CLASS),
        format!(
            "gauss over {} inputs: hardest class {hardest:?} (expected {HARDEST_CLASS}); mean iterations {}",
            test.len(),
            means.join(" ")
        ),
    );
}

fn property_suites(mut violations: Vec<String>) -> Vec<String> {
    let mut problems = Vec::new();
    let mut rng = RngStream::named(99, "acceptance-properties");

    // hv algebra
    for trial in 0..200 {
        let dim = rng.random_range(1..=300);
        let a = Hypervector::random(&mut rng, dim).unwrap();
        let b = Hypervector::random(&mut rng, dim).unwrap();
        let c = Hypervector::random(&mut rng, dim).unwrap();
        let ones = Hypervector::ones(dim).unwrap();
        let ab = a.bind(&b).unwrap();
        let bipolar = |v: &Hypervector| v.as_slice().iter().all(|&x| x == 1 || x == -1);
        let mut ok = bipolar(&ab) && bipolar(&a.permute(trial));
        ok &= a.bind(&ones).unwrap() == a && a.bind(&a).unwrap() == ones;
        ok &= ab == b.bind(&a).unwrap();
        let (j, k) = (rng.random_range(0..2 * dim), rng.random_range(0..2 * dim));
        ok &= a.permute(dim) == a && a.permute(j).permute(k) == a.permute(j + k);
        let mut shuffled = vec![a.clone(), b.clone(), c.clone()];
        let forward = bundle(&shuffled).unwrap();
        shuffled.shuffle(&mut rng);
        ok &= bundle(&shuffled).unwrap() == forward;
        let bip = forward.bipolarize(&mut rng);
        ok &= bipolar(&bip);
        let cos = a.cosine(&b).unwrap();
        ok &= (-1.0..=1.0).contains(&cos) && a.cosine(&a).unwrap() == 1.0;
        ok &= cosine(forward.as_slice(), c.as_slice()).is_ok_and(|x| (-1.0..=1.0).contains(&x));
        if !ok {
            problems.push(format!("hv algebra violated at trial {trial} (D={dim})"));
            break;
        }
    }

    // pseudo-orthogonality at D=10000
    let mut worst = 0f64;
    for _ in 0..ORTHOGONAL_PAIRS {
        let a = Hypervector::random(&mut rng, 10_000).unwrap();
        let b = Hypervector::random(&mut rng, 10_000).unwrap();
        worst = worst.max(a.cosine(&b).unwrap().abs());
    }
    if worst >= MAX_ORTHOGONAL_COS {
        problems.push(format!("max |cos| {worst:.4} over {ORTHOGONAL_PAIRS} pairs"));
    }

    // fuzzer soundness on a synthetic model plus every campaign above
    let data = common::synthetic(80, 4, 12, 6);
    let spec = ModelSpec {
        dim: 2000,
        width: 12,
        height: 12,
        levels: 256,
        classes: 4,
        seed: 6,
    };
    let mut model = HdcModel::new(spec).unwrap();
    model.train(data.iter()).unwrap();
    for strategy in [
        MutationStrategy::gauss(),
        MutationStrategy::rand(),
        MutationStrategy::shift(),
    ] {
        let cfg = FuzzConfig {
            strategy,
            iter_times: 20,
            ..Default::default()
        };
        campaign(&model, data.images(), cfg, &mut violations);
    }
    if let Some(first) = violations.first() {
        problems.push(format!("{} soundness violations ({first})", violations.len()));
    }

    // IDX parser totality
    let mut idx_rng = RngStream::named(2024, "idx-fuzz");
    let panics = (0..IDX_FUZZ_INPUTS)
        .filter(|_| {
            let bytes = common::idx_fuzz_input(&mut idx_rng);
            catch_unwind(|| {
                let _ = parse_idx_images(&bytes);
                let _ = parse_idx_labels(&bytes);
            })
            .is_err()
        })
        .count();
    if panics > 0 {
        problems.push(format!("IDX parser panicked on {panics} inputs"));
    }

    // round-trips
    let bytes = model.to_bytes();
    if HdcModel::from_bytes(&bytes).map(|m| m.to_bytes()).ok() != Some(bytes) {
        problems.push("model file round-trip differs".into());
    }
    for img in data.images() {
        if parse_pgm(&encode_pgm(img)).ok().as_ref() != Some(img) {
            problems.push("PGM round-trip differs".into());
            break;
        }
    }
    problems
}
