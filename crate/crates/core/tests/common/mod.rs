#![allow(dead_code, clippy::needless_range_loop)]

use std::path::PathBuf;

use hdfuzz_core::fuzz::{normalized_distance, Norm};
use hdfuzz_core::{CampaignReport, HdcModel, Image, LabeledDataset, ModelSpec, RngStream};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Straight-line classifier: no shortcuts, no shared code with the library
/// beyond the `rand` primitives.
pub struct BruteForce {
    pub dim: usize,
    pub pixels: usize,
    pub seed: u64,
    pub position: Vec<Vec<i8>>,
    pub value: Vec<Vec<i8>>,
    pub accumulators: Vec<Vec<i64>>,
    pub counts: Vec<u64>,
    pub references: Vec<Option<Vec<i8>>>,
}

pub fn stream(seed: u64, name: &str, index: u64) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(b"hdfuzz-stream-v1");
    h.update(seed.to_le_bytes());
    h.update((name.len() as u64).to_le_bytes());
    h.update(name.as_bytes());
    h.update(index.to_le_bytes());
    ChaCha8Rng::from_seed(h.finalize().into())
}

fn random_bipolar(rng: &mut ChaCha8Rng, dim: usize) -> Vec<i8> {
    let mut out = Vec::new();
    let mut word = 0u64;
    for i in 0..dim {
        if i % 64 == 0 {
            word = rng.next_u64();
        }
        out.push(if (word >> (i % 64)) & 1 == 1 { 1 } else { -1 });
    }
    out
}

fn sign(sums: &[i64], rng: &mut ChaCha8Rng) -> Vec<i8> {
    let mut out = Vec::new();
    for &s in sums {
        let v = if s > 0 {
            1
        } else if s < 0 {
            -1
        } else if rng.random::<bool>() {
            1
        } else {
            -1
        };
        out.push(v);
    }
    out
}

impl BruteForce {
    pub fn new(seed: u64, pixels: usize, levels: usize, classes: usize, dim: usize) -> Self {
        let mut position = Vec::new();
        for k in 0..pixels {
            position.push(random_bipolar(&mut stream(seed, "pos", k as u64), dim));
        }
        let mut value = Vec::new();
        for v in 0..levels {
            value.push(random_bipolar(&mut stream(seed, "val", v as u64), dim));
        }
        Self {
            dim,
            pixels,
            seed,
            position,
            value,
            accumulators: vec![vec![0; dim]; classes],
            counts: vec![0; classes],
            references: vec![None; classes],
        }
    }

    pub fn raw(&self, img: &[u8]) -> Vec<i64> {
        let mut sums = vec![0i64; self.dim];
        for i in 0..self.dim {
            for k in 0..self.pixels {
                sums[i] += self.position[k][i] as i64 * self.value[img[k] as usize][i] as i64;
            }
        }
        sums
    }

    pub fn encode(&self, img: &[u8]) -> Vec<i8> {
        sign(&self.raw(img), &mut stream(self.seed, "query-tie", 0))
    }

    pub fn train(&mut self, data: &[(Vec<u8>, usize)]) {
        for (img, label) in data {
            let hv = self.encode(img);
            for i in 0..self.dim {
                self.accumulators[*label][i] += hv[i] as i64;
            }
            self.counts[*label] += 1;
        }
        for c in 0..self.counts.len() {
            if self.counts[c] > 0 {
                self.references[c] = Some(sign(&self.accumulators[c], &mut stream(self.seed, "am-tie", c as u64)));
            }
        }
    }

    pub fn predict(&self, img: &[u8]) -> (usize, Vec<Option<f64>>) {
        let q = self.encode(img);
        let mut sims = Vec::new();
        let mut best: Option<(usize, f64)> = None;
        for (c, r) in self.references.iter().enumerate() {
            let Some(r) = r else {
                sims.push(None);
                continue;
            };
            let mut dot = 0i64;
            let (mut nq, mut nr) = (0i64, 0i64);
            for i in 0..self.dim {
                dot += q[i] as i64 * r[i] as i64;
                nq += q[i] as i64 * q[i] as i64;
                nr += r[i] as i64 * r[i] as i64;
            }
            let s = (dot as f64 / (nq as f64 * nr as f64).sqrt()).clamp(-1.0, 1.0);
            sims.push(Some(s));
            match best {
                Some((_, b)) if s <= b => {}
                _ => best = Some((c, s)),
            }
        }
        (best.expect("trained").0, sims)
    }
}

/// All `levels^pixels` images in lexicographic order.
pub fn all_images(pixels: usize, levels: u8) -> Vec<Vec<u8>> {
    let mut out = vec![vec![]];
    for _ in 0..pixels {
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..levels).map(move |v| {
                    let mut q = p.clone();
                    q.push(v);
                    q
                })
            })
            .collect();
    }
    out
}

/// Compares the library pipeline with [`BruteForce`] on every 2x2 image over
/// 4 gray levels. Returns a description of the first mismatch.
pub fn oracle_mismatch(seed: u64) -> Option<String> {
    let (dim, classes) = (16, 3);
    let images = all_images(4, 4);
    let data: Vec<(Vec<u8>, usize)> = images
        .iter()
        .map(|p| (p.clone(), p.iter().map(|&v| v as usize).sum::<usize>() % classes))
        .collect();

    let mut oracle = BruteForce::new(seed, 4, 4, classes, dim);
    oracle.train(&data);

    let spec = ModelSpec {
        dim,
        width: 2,
        height: 2,
        levels: 4,
        classes,
        seed,
    };
    let mut model = HdcModel::new(spec).ok()?;
    let imgs: Vec<Image> = images.iter().map(|p| Image::new(2, 2, p.clone()).unwrap()).collect();
    model.train(imgs.iter().zip(data.iter().map(|d| d.1))).ok()?;

    for (i, img) in imgs.iter().enumerate() {
        let raw: Vec<i64> = model
            .memories()
            .accumulate(img)
            .ok()?
            .as_slice()
            .iter()
            .map(|&v| v as i64)
            .collect();
        if raw != oracle.raw(&images[i]) {
            return Some(format!("bundle of image {i}"));
        }
        if model.encode(img).ok()?.as_slice() != oracle.encode(&images[i]).as_slice() {
            return Some(format!("encoding of image {i}"));
        }
    }
    for c in 0..classes {
        let am = &model.associative_memory().classes()[c];
        let acc: Vec<i64> = am.accumulator.as_slice().iter().map(|&v| v as i64).collect();
        if acc != oracle.accumulators[c] || am.trained_count != oracle.counts[c] {
            return Some(format!("accumulator of class {c}"));
        }
        if am.reference.as_ref().map(|r| r.as_slice().to_vec()) != oracle.references[c] {
            return Some(format!("reference of class {c}"));
        }
    }
    for (i, img) in imgs.iter().enumerate() {
        let p = model.predict(img).ok()?;
        let (label, sims) = oracle.predict(&images[i]);
        let bits = |s: &[Option<f64>]| s.iter().map(|x| x.map(f64::to_bits)).collect::<Vec<_>>();
        if p.label != label || bits(&p.similarities) != bits(&sims) {
            return Some(format!("prediction of image {i}"));
        }
    }
    None
}

/// Blocky synthetic digits: class `c` lights the `c`-th vertical band.
pub fn synthetic(count: usize, classes: usize, side: usize, seed: u64) -> LabeledDataset {
    let mut rng = RngStream::named(seed, "synthetic");
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for n in 0..count {
        let class = n % classes;
        let mut px = vec![0u8; side * side];
        for (i, p) in px.iter_mut().enumerate() {
            if (i % side) * classes / side == class && rng.random::<f64>() < 0.85 {
                *p = rng.random_range(180..=255);
            }
        }
        images.push(Image::new(side, side, px).unwrap());
        labels.push(class);
    }
    LabeledDataset::new("synthetic", images, labels).unwrap()
}

/// Re-derives every success of `report` from scratch: the adversarial label
/// must differ from the model's label for the original, the recorded label
/// must be reproducible, and non-exempt results must respect the L2 budget.
pub fn soundness_violations(model: &HdcModel, report: &CampaignReport) -> Vec<String> {
    let mut bad = Vec::new();
    let budget = report.config.l2_threshold;
    let exempt = report.strategy().is_distance_exempt();
    for case in report.successes() {
        let Some(adv) = case.adversarial.as_ref() else {
            bad.push(format!("case {}: missing adversarial", case.input_index));
            continue;
        };
        let original = model.predict(&case.original).unwrap().label;
        let flipped = model.predict(adv).unwrap().label;
        if original != case.reference_label || flipped == original || Some(flipped) != case.adversarial_label {
            bad.push(format!("case {}: labels {original} -> {flipped}", case.input_index));
        }
        let l2 = manual_l2(&case.original, adv);
        if !exempt && l2 > budget {
            bad.push(format!("case {}: l2 {l2} over budget {budget}", case.input_index));
        }
        let lib = normalized_distance(&case.original, adv, Norm::L2).unwrap();
        if (lib - l2).abs() > 1e-12 || case.l2.is_none_or(|r| (r - l2).abs() > 1e-12) {
            bad.push(format!("case {}: recorded l2 disagrees", case.input_index));
        }
    }
    bad
}

pub fn manual_l2(a: &Image, b: &Image) -> f64 {
    a.pixels()
        .iter()
        .zip(b.pixels())
        .map(|(&x, &y)| {
            let d = (x as f64 - y as f64) / 255.0;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

pub fn mnist_dir() -> PathBuf {
    std::env::var_os("HDFUZZ_MNIST_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"))
}

pub fn load_mnist() -> Option<(LabeledDataset, LabeledDataset)> {
    let dir = mnist_dir();
    let file = |stem: &str| {
        let plain = dir.join(stem);
        if plain.exists() {
            plain
        } else {
            dir.join(format!("{stem}.gz"))
        }
    };
    let train = LabeledDataset::load(
        "train",
        file("train-images-idx3-ubyte"),
        file("train-labels-idx1-ubyte"),
    )
    .ok()?;
    let test = LabeledDataset::load("t10k", file("t10k-images-idx3-ubyte"), file("t10k-labels-idx1-ubyte")).ok()?;
    Some((train, test))
}

/// Random byte strings biased towards plausible IDX headers.
pub fn idx_fuzz_input(rng: &mut RngStream) -> Vec<u8> {
    let len = rng.random_range(0..64usize);
    let mut bytes: Vec<u8> = (0..len).map(|_| rng.random()).collect();
    match rng.random_range(0..4) {
        0 => {}
        1 => {
            let mut head = vec![0, 0, 8, 3];
            for _ in 0..3 {
                head.extend_from_slice(&rng.random_range(0u32..6).to_be_bytes());
            }
            head.extend(bytes);
            bytes = head;
        }
        2 => {
            let mut head = vec![0, 0, 8, 1];
            head.extend_from_slice(&rng.random_range(0u32..40).to_be_bytes());
            head.extend(bytes);
            bytes = head;
        }
        _ => {
            let mut head = vec![0, 0, rng.random(), rng.random_range(0..5)];
            head.extend_from_slice(&rng.random::<u32>().to_be_bytes());
            head.extend(bytes);
            bytes = head;
        }
    }
    bytes
}
