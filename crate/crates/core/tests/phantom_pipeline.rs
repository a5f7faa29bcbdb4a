mod oracles;

use mreval_core::consensus::{derive_regions, region_counts};
use mreval_core::phantom::{AlgorithmSpec, PredictionModel, SphereSpec, VolumeFormat};
use mreval_core::{evaluate_case, load_manifest, EvalConfig, Organ, PhantomDatasetSpec, PhantomSpec};

fn spheres() -> Vec<SphereSpec> {
    vec![
        SphereSpec { organ: Organ::Pancreas, center: [9.0, 9.0, 9.0], radius: 4.0 },
        SphereSpec { organ: Organ::Kidney, center: [23.0, 9.0, 10.0], radius: 5.0 },
        SphereSpec { organ: Organ::Liver, center: [16.0, 22.0, 18.0], radius: 7.5 },
    ]
}

fn spec(prediction: PredictionModel) -> PhantomSpec {
    PhantomSpec {
        dims: [32, 36, 30],
        spacing_mm: [0.9, 0.9, 2.5],
        spheres: spheres(),
        rater_deltas: vec![-1, 0, 2],
        prediction,
        radius_offset: 0.0,
        noise: 0.0,
        seed: 0,
    }
}

#[test]
fn truth_record_matches_consensus_and_volumes() {
    let p = spec(PredictionModel::Perfect).generate().unwrap();
    let counts = region_counts(&derive_regions(&p.raters).unwrap());
    let cm3 = 0.9 * 0.9 * 2.5 / 1000.0;
    for organ in Organ::ALL {
        let t = p.truth.class(organ);
        let c = counts[organ.slot()];
        assert_eq!((t.fg, t.bg, t.dissensus), (c.fg, c.bg, c.dissensus));
        for (k, rater) in p.raters.iter().enumerate() {
            let v = rater.class_count(organ) as f64 * cm3;
            assert!((t.rater_volumes_cm3[k] - v).abs() < 1e-12);
        }
        assert!((t.std_cm3 - oracles::population_std(&t.rater_volumes_cm3)).abs() < 1e-12);
    }
}

#[test]
fn perfect_prediction_scores() {
    let p = spec(PredictionModel::Perfect).generate().unwrap();
    let m = evaluate_case("c", "perfect", &p.prediction, &p.raters, &EvalConfig::default()).unwrap();
    assert_eq!(m.dsc, 1.0);
    assert_eq!(m.c_seg, Some(1.0));
    // one-hot on the unanimous map: every disagreement costs full confidence
    let probs = oracles::voxels(&p.prediction);
    let want = p.raters.iter().map(|r| oracles::cece(&probs, r.voxels(), 10, false, None)).sum::<f64>() / 3.0;
    assert!((m.cece - want).abs() < 1e-12);

    let unanimous = PhantomSpec { rater_deltas: vec![0, 0], ..spec(PredictionModel::Perfect) }.generate().unwrap();
    let m = evaluate_case("c", "perfect", &unanimous.prediction, &unanimous.raters, &EvalConfig::default()).unwrap();
    assert_eq!((m.dsc, m.c_seg, m.cece, m.crps), (1.0, Some(1.0), 0.0, 0.0));
}

#[test]
fn overconfidence_raises_calibration_error() {
    let blurred = spec(PredictionModel::Blurred { sigma: 1.0 }).generate().unwrap();
    let over = spec(PredictionModel::Miscalibrated { delta: 0.3, sigma: 1.0 }).generate().unwrap();
    let cfg = EvalConfig::default();
    let a = evaluate_case("c", "b", &blurred.prediction, &blurred.raters, &cfg).unwrap();
    let b = evaluate_case("c", "m", &over.prediction, &over.raters, &cfg).unwrap();
    assert!(b.cece > a.cece, "{} vs {}", b.cece, a.cece);
}

#[test]
fn blurred_prediction_matches_composed_oracles() {
    let p = spec(PredictionModel::Blurred { sigma: 1.2 }).generate().unwrap();
    let m = evaluate_case("c", "blur", &p.prediction, &p.raters, &EvalConfig::default()).unwrap();
    let probs = oracles::voxels(&p.prediction);
    let cm3 = p.prediction.geometry().voxel_volume_cm3();
    for organ in Organ::ALL {
        let id = organ.class_id();
        let t = p.truth.class(organ);
        let region = oracles::regions(&p.raters, id);
        let c = m.class(organ).unwrap();
        assert_eq!(c.dsc, oracles::dsc(&probs, &region, id, oracles::Rule::Threshold(0.5)).0);
        assert!((c.c_seg.unwrap() - oracles::c_seg(&probs, &region, id).unwrap()).abs() < 1e-12);
        let y: f64 = probs.iter().map(|v| v[id as usize]).sum::<f64>() * cm3;
        assert!((c.crps - oracles::crps(t.mean_cm3, t.std_cm3, y, 2000.0)).abs() < 1e-6);
    }
}

#[test]
fn dataset_writing_is_deterministic_and_loadable() {
    let ds = PhantomDatasetSpec {
        dims: [32, 36, 30],
        spacing_mm: [1.0, 1.0, 1.0],
        spheres: spheres(),
        rater_deltas: vec![-1, 0, 1],
        cases: 4,
        groups: vec![],
        jitter: 1,
        algorithms: vec![
            AlgorithmSpec { name: "a".into(), prediction: PredictionModel::Perfect, radius_offset: 0.0, noise: 0.0 },
            AlgorithmSpec {
                name: "b".into(),
                prediction: PredictionModel::Blurred { sigma: 1.0 },
                radius_offset: -1.0,
                noise: 0.02,
            },
        ],
        seed: 5,
        format: VolumeFormat::Nifti,
    };
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    ds.write(d1.path()).unwrap();
    ds.write(d2.path()).unwrap();
    let m = load_manifest(d1.path().join("manifest.json")).unwrap();
    assert_eq!(m.cases.len(), 4);
    assert_eq!(m.rater_count(), 3);
    for case in &m.cases {
        for path in case.rater_annotations.iter().chain(case.algorithm_predictions.values()) {
            let rel = path.strip_prefix(d1.path()).unwrap();
            assert_eq!(std::fs::read(path).unwrap(), std::fs::read(d2.path().join(rel)).unwrap());
        }
    }
    assert_eq!(
        std::fs::read(d1.path().join("phantom_truth.json")).unwrap(),
        std::fs::read(d2.path().join("phantom_truth.json")).unwrap()
    );

    let mut bad = ds.clone();
    bad.spheres[1].center = [14.0, 9.0, 10.0];
    assert_eq!(bad.write(d1.path().join("bad")).unwrap_err().kind(), mreval_core::ErrorKind::Validation);
}
