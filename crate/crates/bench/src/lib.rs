//! Fixtures shared by the benchmarks: MNIST-shaped synthetic digits and a
//! model trained on them.

use hdfuzz_core::{HdcModel, Image, ModelSpec, RngStream};
use rand::Rng;

pub const SIDE: usize = 28;
pub const CLASSES: usize = 10;

/// A 28x28 image with a bright stroke pattern that depends on `class`.
pub fn digit(class: usize, salt: u64) -> Image {
    let mut rng = RngStream::derive(salt, "bench-digit", class as u64);
    let mut px = vec![0u8; SIDE * SIDE];
    for (i, p) in px.iter_mut().enumerate() {
        let (x, y) = (i % SIDE, i / SIDE);
        let on = (4..24).contains(&y) && (x + y * class) % 11 < 3;
        if on && rng.random::<f64>() < 0.9 {
            *p = rng.random_range(160..=255);
        }
    }
    Image::new(SIDE, SIDE, px).expect("fixed shape")
}

pub fn dataset(per_class: usize) -> Vec<(Image, usize)> {
    (0..per_class * CLASSES)
        .map(|n| (digit(n % CLASSES, n as u64), n % CLASSES))
        .collect()
}

pub fn trained_model(dim: usize, per_class: usize) -> HdcModel {
    let spec = ModelSpec {
        dim,
        ..ModelSpec::default()
    };
    let mut model = HdcModel::new(spec).expect("valid spec");
    let data = dataset(per_class);
    model.train(data.iter().map(|(i, l)| (i, *l))).expect("non-empty data");
    model
}
