//! Fixture builders shared by the kernel benchmarks.

use mreval_core::phantom::{PredictionModel, SphereSpec};
use mreval_core::{CaseMetrics, Organ, Phantom, PhantomSpec, StreamRng};

/// Cubic phantom of side `n` with three raters and a blurred prediction.
pub fn phantom(n: usize) -> Phantom {
    let s = n as f64;
    PhantomSpec {
        dims: [n; 3],
        spacing_mm: [1.0; 3],
        spheres: vec![
            SphereSpec { organ: Organ::Pancreas, center: [0.3 * s, 0.3 * s, 0.5 * s], radius: 0.1 * s },
            SphereSpec { organ: Organ::Kidney, center: [0.7 * s, 0.3 * s, 0.5 * s], radius: 0.12 * s },
            SphereSpec { organ: Organ::Liver, center: [0.5 * s, 0.72 * s, 0.5 * s], radius: 0.2 * s },
        ],
        rater_deltas: vec![-1, 0, 1],
        prediction: PredictionModel::Blurred { sigma: 1.0 },
        radius_offset: 0.0,
        noise: 0.0,
        seed: 1,
    }
    .generate()
    .expect("bench phantom is valid")
}

/// Synthetic per-case metrics for `algorithms` teams over `cases` cases.
pub fn case_metrics(cases: usize, algorithms: usize, seed: u64) -> Vec<CaseMetrics> {
    let mut rng = StreamRng::new(seed, 0);
    let mut out = Vec::with_capacity(cases * algorithms);
    for c in 0..cases {
        for a in 0..algorithms {
            let skill = a as f64 * 0.005;
            out.push(CaseMetrics {
                case_id: format!("case_{c:03}"),
                algorithm: format!("team_{a}"),
                classes: vec![],
                dsc: 0.93 - skill + 0.04 * rng.unit(),
                c_seg: Some(0.96 - skill + 0.03 * rng.unit()),
                cece: 0.002 + 0.4 * skill + 0.003 * rng.unit(),
                crps: 9.0 + 800.0 * skill + 6.0 * rng.unit(),
                cece_per_rater: vec![],
            });
        }
    }
    out
}
