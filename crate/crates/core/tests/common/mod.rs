#![allow(dead_code)]

use maglev::builder::{Segment, TakeRecord, ViewRecord, ViewRole, WindowFeatures};
use maglev::graph::TypeDims;
use maglev::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn small_dims() -> TypeDims {
    TypeDims {
        vision: 4,
        depth: 3,
        text: 2,
    }
}

pub fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
    Tensor::from_vec(r, c, (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// `n` one-second segments, one ego view (id 0) and `k` exo views (ids
/// 1..=k), two vision windows per segment, and depth, narration and object
/// features everywhere.
pub fn take(id: &str, n: usize, k: usize, num_classes: u32, dims: TypeDims, seed: u64) -> TakeRecord {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let segments = (0..n)
        .map(|s| Segment {
            start_s: s as f64,
            end_s: s as f64 + 1.0,
            class_id: rng.random_range(0..num_classes),
        })
        .collect();
    let views = (0..=k as u32)
        .map(|v| ViewRecord {
            view_id: v,
            role: if v == 0 { ViewRole::Ego } else { ViewRole::Exo },
            vision: WindowFeatures {
                centers: (0..2 * n).map(|w| 0.25 + 0.5 * w as f64).collect(),
                features: random(&mut rng, 2 * n, dims.vision),
            },
            depth: Some(random(&mut rng, n, dims.depth)),
        })
        .collect();
    TakeRecord {
        take_id: id.to_string(),
        scenario: "cooking".into(),
        segments,
        views,
        text: Some(random(&mut rng, n, dims.text)),
        objects: Some(random(&mut rng, n, dims.text)),
    }
}
