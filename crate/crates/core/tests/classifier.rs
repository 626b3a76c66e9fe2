use pirsim::classifier::{kfold_cv, train_pipeline, train_svm, FeatureSet, Grid, Kernel, SvmParams};
use pirsim::features::FeatureVector;
use pirsim::Label;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn blobs(n: usize, sep: f64, seed: u64) -> (Vec<Vec<f64>>, Vec<bool>, Vec<String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::new();
    let mut y = Vec::new();
    for i in 0..n {
        let pos = i % 2 == 0;
        let c = if pos { sep } else { -sep };
        x.push(vec![c + rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal)]);
        y.push(pos);
    }
    let ids = (0..n).map(|i| format!("e{i}")).collect();
    (x, y, ids)
}

#[test]
fn shuffled_labels_give_chance_accuracy() {
    let grid = Grid::single(Kernel::Rbf { gamma: 0.5 }, 1.0);
    let mut total = 0.0;
    for seed in 0..20 {
        let (x, mut y, ids) = blobs(80, 2.0, seed);
        y.shuffle(&mut ChaCha8Rng::seed_from_u64(100 + seed));
        total += kfold_cv(&x, &y, &ids, ["neg", "pos"], 5, &grid, seed).unwrap().overall.avg;
    }
    let mean = total / 20.0;
    assert!((40.0..=60.0).contains(&mean), "{mean}");
}

#[test]
fn midpoint_of_symmetric_blobs_has_zero_margin() {
    let x = vec![vec![-2.0, 0.0], vec![-2.0, 1.0], vec![-3.0, 0.5], vec![2.0, 0.0], vec![2.0, 1.0], vec![3.0, 0.5]];
    let y = vec![false, false, false, true, true, true];
    let ids: Vec<String> = (0..6).map(|i| i.to_string()).collect();
    let m = train_svm(&x, &y, &ids, &SvmParams::new(Kernel::Linear, 10.0)).unwrap();
    assert!(m.predict(&[0.0, 0.5]).unwrap().margin.abs() < 1e-2);
    assert!(m.predict(&[1.0, 2.0, 3.0]).is_err());
}

#[test]
fn cv_report_is_deterministic() {
    let (x, y, ids) = blobs(60, 1.0, 4);
    let grid = Grid {
        points: vec![(Kernel::Linear, 1.0), (Kernel::Rbf { gamma: 1.0 }, 2.0)],
    };
    let a = kfold_cv(&x, &y, &ids, ["neg", "pos"], 5, &grid, 9).unwrap();
    let b = kfold_cv(&x, &y, &ids, ["neg", "pos"], 5, &grid, 9).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    for r in a.rows.iter().chain([&a.overall]) {
        assert!(r.min <= r.avg && (0.0..=100.0).contains(&r.min) && r.avg <= 100.0);
    }
    let sizes = &a.fold_sizes;
    assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    assert_eq!(sizes.iter().sum::<usize>(), 60);
}

fn row(i: usize, label: Label, rng: &mut ChaCha8Rng) -> FeatureVector {
    let (level, height) = match label {
        Label::Clutter => (0.0, 0.0),
        Label::Human => (3.0, 2.0),
        Label::Animal => (3.0, -2.0),
    };
    let mut e8 = [0.0; 8];
    for (k, v) in e8.iter_mut().enumerate() {
        *v = if k < 2 { height } else { 0.0 } + rng.gen_range(-0.5..0.5);
    }
    FeatureVector {
        id: format!("e{i}"),
        label: Some(label),
        e8,
        rho_max: rng.gen_range(0.0..1.0),
        c60: (0..60).map(|_| level + rng.gen_range(-0.5..0.5)).collect(),
        flags: vec![],
    }
}

#[test]
fn pipeline_only_sends_stage_one_intruders_to_stage_two() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let labels = [Label::Clutter, Label::Human, Label::Animal];
    let rows: Vec<FeatureVector> = (0..45).map(|i| row(i, labels[i % 3], &mut rng)).collect();
    let grid = Grid::single(Kernel::Linear, 1.0);
    let (model, report) = train_pipeline(&rows, 3, &grid, 5).unwrap();
    let names: Vec<&str> = report.rows.iter().map(|r| r.name.as_str()).collect();
    assert_eq!(names, ["Clutter", "Intruder", "Human", "Animal"]);
    assert_eq!(report.overall.name, "Overall");
    assert_eq!(report.overall.avg, 100.0);
    for r in &rows {
        let stage1 = model.stage1.predict(&FeatureSet::C60.extract(r)).unwrap().positive;
        let label = model.classify(r).unwrap();
        assert_eq!(stage1, label.is_intruder());
    }
}
