use formation_core::experiment::{generate_training_data, training_instances, ExperimentSpec};
use formation_core::nn::{
    load_weights, save_weights, train, Dataset, FoldedMlp, InputLayout, Mlp, TrainConfig,
};
use formation_core::sim::SimConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn memorizes_four_samples() {
    // One follower in 3-D: input width 2·1·3 + 1 + 1 = 8, output 3.
    let layout = InputLayout::new(1, 3);
    let mut ds = Dataset::empty(0, layout);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..4 {
        let x: Vec<f64> = (0..layout.input_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        ds.push(&x, &y).unwrap();
    }
    let mut net = Mlp::<f32>::new(&layout.standard_widths(), 5).unwrap();
    let cfg = TrainConfig {
        epochs: 2000,
        target_loss: 1e-6,
        ..TrainConfig::default()
    };
    let out = train(&mut net, &ds, &cfg).unwrap();
    assert!(out.reached_target, "best loss {:.3e}", out.best_loss);
    assert!(out.history.len() <= 2000);
}

#[test]
fn inference_ignores_batch_composition() {
    let layout = InputLayout::new(3, 2);
    let net = Mlp::<f32>::new(&layout.standard_widths(), 9).unwrap();
    let d = layout.input_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let rows: Vec<Vec<f32>> = (0..37)
        .map(|_| (0..d).map(|_| rng.random_range(-3.0..3.0)).collect())
        .collect();
    let all: Vec<f32> = rows.concat();
    let batch = net.infer(&all, rows.len()).unwrap();
    for (k, row) in rows.iter().enumerate() {
        let single = net.infer(row, 1).unwrap();
        assert_eq!(single[..], batch[k * 2..(k + 1) * 2]);
    }
    // Same row inside a different batch.
    let mixed: Vec<f32> = [rows[5].clone(), rows[30].clone(), rows[5].clone()].concat();
    let out = net.infer(&mixed, 3).unwrap();
    assert_eq!(out[0..2], batch[10..12]);
    assert_eq!(out[4..6], batch[10..12]);
}

#[test]
fn trained_weights_survive_disk_and_folding() {
    let spec = ExperimentSpec {
        training_trajectories: 3,
        samples_per_trajectory: 40,
        duration: 2.0,
        ..ExperimentSpec::exp1(4)
    };
    let inst = training_instances(&spec).unwrap();
    let data = generate_training_data(&inst, &SimConfig::with_duration(spec.duration), 40).unwrap();
    assert_eq!(data.datasets.len(), 5);
    assert!(data.datasets.iter().all(|d| d.len() == 120));

    let ds = &data.datasets[2];
    let mut net = Mlp::<f32>::new(&[ds.layout.input_dim(), 32, 32, 3], 1).unwrap();
    let cfg = TrainConfig {
        epochs: 5,
        batch_size: 32,
        ..TrainConfig::default()
    };
    let out = train(&mut net, ds, &cfg).unwrap();
    let best_so_far: Vec<f64> = out
        .history
        .iter()
        .scan(f64::INFINITY, |b, &l| {
            *b = b.min(l);
            Some(*b)
        })
        .collect();
    assert!(best_so_far.windows(2).all(|w| w[1] <= w[0]));
    assert_eq!(out.best_loss, *best_so_far.last().unwrap());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("agent3.fmlp");
    save_weights(&net, &path).unwrap();
    let back: Mlp<f32> = load_weights(&path).unwrap();
    assert_eq!(back.params(), net.params());
    assert_eq!(back.running_mean(), net.running_mean());
    assert_eq!(back.running_var(), net.running_var());

    let folded = FoldedMlp::from_mlp(&back);
    let x: Vec<f64> = ds.sample(7).input.to_vec();
    let xf: Vec<f32> = x.iter().map(|&v| v as f32).collect();
    let direct = net.infer(&xf, 1).unwrap();
    let via_fold = folded.eval(&x);
    for (a, b) in direct.iter().zip(&via_fold) {
        assert!((*a as f64 - b).abs() < 1e-4 * (1.0 + b.abs()));
    }

    let csv = dir.path().join("agent3.csv");
    ds.save(&csv).unwrap();
    let reread = Dataset::load(&csv).unwrap();
    assert_eq!(reread.inputs(), ds.inputs());
    assert_eq!(reread.targets(), ds.targets());
}
