#![allow(dead_code)]

use mreval_core::rng::StreamRng;
use mreval_core::volume::{GridGeometry, LabelVolume, ProbabilityVolume};

pub fn grid(dims: [usize; 3]) -> GridGeometry {
    GridGeometry::new(dims, [1.0, 1.0, 1.0]).unwrap()
}

/// Raters that copy a shared random base map and relabel each voxel with probability `flip`.
pub fn random_raters(rng: &mut StreamRng, g: GridGeometry, r: usize, flip: f64) -> Vec<LabelVolume> {
    let n = g.voxel_count();
    let base: Vec<u8> = (0..n).map(|_| rng.below(4) as u8).collect();
    (0..r)
        .map(|_| {
            let v = base
                .iter()
                .map(|&b| if rng.unit() < flip { rng.below(4) as u8 } else { b })
                .collect();
            LabelVolume::new(g, v).unwrap()
        })
        .collect()
}

/// Softmax-like map: a random positive vector per voxel, optionally sharpened, normalized to sum 1.
pub fn random_probs(rng: &mut StreamRng, g: GridGeometry) -> ProbabilityVolume {
    let n = g.voxel_count();
    let mut data = vec![0f64; 4 * n];
    for i in 0..n {
        let sharp = 1 + rng.below(6) as i32;
        let w: Vec<f64> = (0..4).map(|_| rng.unit().powi(sharp) + 1e-9).collect();
        let s: f64 = w.iter().sum();
        for c in 0..4 {
            data[c * n + i] = w[c] / s;
        }
    }
    ProbabilityVolume::from_f64(g, data).unwrap()
}

pub fn random_dims(rng: &mut StreamRng, max: usize) -> [usize; 3] {
    std::array::from_fn(|_| 1 + rng.below(max as u64) as usize)
}
