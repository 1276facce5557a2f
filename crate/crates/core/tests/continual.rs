use sgp_core::data::{gen_synthetic_split, InputShape, Split, SyntheticSpec, TaskDataset, TaskSequence};
use sgp_core::net::{batch_from_samples, Activation, LayerSpec};
use sgp_core::rng::{normal, stream, Stream};
use sgp_core::trainer::{evaluate, train_continual, train_continual_with};
use sgp_core::{Method, Network, ProjectionMode, ScaleConfig, TrainConfig};

fn dense(input: usize, output: usize, activation: Activation) -> LayerSpec {
    LayerSpec::Dense {
        input_dim: input,
        output_dim: output,
        activation,
    }
}

fn flat_weights(net: &Network) -> Vec<f64> {
    net.layers().iter().flat_map(|l| l.weight.as_slice().to_vec()).collect()
}

#[test]
fn huge_alpha_tracks_gpm() {
    let spec = SyntheticSpec {
        tasks: 5,
        classes_per_task: 3,
        dim: 24,
        samples_per_class: 60,
        test_per_class: 30,
        ..SyntheticSpec::default()
    };
    let seq = gen_synthetic_split(21, &spec).unwrap();
    let specs = [dense(24, 16, Activation::Relu), dense(16, 16, Activation::Relu)];
    let run = |method: Method, alpha: f64| {
        let mut cfg = TrainConfig::new(method, ScaleConfig::new(ProjectionMode::Sgp, alpha, vec![0.97, 0.97], 0.003));
        cfg.epochs = 8;
        cfg.batch_size = 32;
        cfg.seed = 21;
        let mut trace: Vec<(usize, Vec<f64>)> = Vec::new();
        let net = Network::new(&specs, &mut stream(21, Stream::Init)).unwrap();
        let res = train_continual_with(net, &seq, &cfg, |e| trace.push((e.task, flat_weights(e.net)))).unwrap();
        (res, trace)
    };
    let (gpm, gpm_trace) = run(Method::Gpm, 0.0);
    let (sgp, sgp_trace) = run(Method::Sgp, 1e9);
    assert_eq!(gpm_trace.len(), sgp_trace.len());

    // per-step drift once projection is active
    let first_projected = gpm_trace.iter().position(|(t, _)| *t == 1).unwrap();
    for ((_, a), (_, b)) in gpm_trace[first_projected..first_projected + 100].iter().zip(&sgp_trace[first_projected..]) {
        let drift = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(drift <= 1e-8, "drift {drift:e}");
    }
    for i in 0..5 {
        for j in 0..=i {
            let (a, b) = (gpm.accuracy.get(i, j).unwrap(), sgp.accuracy.get(i, j).unwrap());
            assert!((a - b).abs() <= 1e-4, "r[{i}][{j}] {a} vs {b}");
        }
    }
}

/// Task-1 inputs live in a 3-dimensional subspace of R^8.
fn low_rank_task(task_id: usize, seed: u64, rank: Option<usize>) -> TaskDataset {
    let mut rng = stream(seed, Stream::Data);
    let frame: Vec<Vec<f64>> = (0..rank.unwrap_or(8)).map(|_| (0..8).map(|_| normal(&mut rng)).collect()).collect();
    let mut draw = |n: usize| {
        let mut split = Split::default();
        for _ in 0..n {
            let coeffs: Vec<f64> = frame.iter().map(|_| normal(&mut rng)).collect();
            let x: Vec<f64> = (0..8).map(|d| frame.iter().zip(&coeffs).map(|(f, c)| f[d] * c).sum()).collect();
            let label = usize::from(x[0] + 0.5 * x[1] > 0.0);
            split.push(x, label);
        }
        split
    };
    TaskDataset {
        task_id,
        class_count: 2,
        train: draw(80),
        validation: Split::default(),
        test: draw(40),
    }
}

#[test]
fn linear_backbone_has_zero_interference() {
    let seq = TaskSequence {
        tasks: vec![low_rank_task(1, 3, Some(3)), low_rank_task(2, 4, None)],
        input_shape: InputShape::flat(8),
        provenance: "low-rank fixture".into(),
    };
    let specs = [dense(8, 6, Activation::Identity), dense(6, 5, Activation::Identity)];
    let mut cfg = TrainConfig::new(Method::Gpm, ScaleConfig::new(ProjectionMode::Gpm, 0.0, vec![0.9999, 0.9999], 0.0));
    cfg.epochs = 10;
    cfg.batch_size = 16;
    cfg.lr = 0.05;

    let res = train_continual(Network::new(&specs, &mut stream(3, Stream::Init)).unwrap(), &seq, &cfg).unwrap();

    // the end-of-task-1 network, by replaying task 1 alone
    let single = TaskSequence {
        tasks: vec![seq.tasks[0].clone()],
        input_shape: seq.input_shape,
        provenance: seq.provenance.clone(),
    };
    let first = train_continual(Network::new(&specs, &mut stream(3, Stream::Init)).unwrap(), &single, &cfg).unwrap();
    assert!(res.snapshots[0].layers.iter().all(|l| l.lambda().iter().all(|&x| x == 1.0)));
    assert_ne!(flat_weights(&first.net), flat_weights(&res.net), "task 2 must change the weights");

    let m = first.memory.layers[0].basis();
    let mut rng = stream(8, Stream::Sampling);
    let probes: Vec<Vec<f64>> = (0..20)
        .map(|_| {
            let c: Vec<f64> = (0..m.cols()).map(|_| normal(&mut rng)).collect();
            (0..8).map(|d| (0..m.cols()).map(|j| m.get(d, j) * c[j]).sum()).collect()
        })
        .collect();
    let refs: Vec<&[f64]> = probes.iter().map(Vec::as_slice).collect();
    let batch = batch_from_samples(&refs).unwrap();
    let before = first.net.features(&batch).unwrap();
    let after = res.net.features(&batch).unwrap();
    let diff = after.sub(&before).unwrap().max_abs();
    assert!(diff <= 1e-6, "feature change {diff:e}");
    assert_eq!(res.accuracy.get(1, 0), first.accuracy.get(0, 0));
}

#[test]
fn default_suite_is_learnable_per_task() {
    let spec = SyntheticSpec::default();
    let seq = gen_synthetic_split(0, &spec).unwrap();
    let specs = [dense(spec.dim, 32, Activation::Relu), dense(32, 32, Activation::Relu)];
    for task in &seq.tasks {
        let mut alone = task.clone();
        alone.task_id = 1;
        let single = TaskSequence {
            tasks: vec![alone],
            input_shape: seq.input_shape,
            provenance: seq.provenance.clone(),
        };
        let mut cfg = TrainConfig::new(Method::Finetune, ScaleConfig::new(ProjectionMode::Sgp, 1.0, vec![0.97; 2], 0.0));
        cfg.batch_size = 32;
        let res = train_continual(Network::new(&specs, &mut stream(0, Stream::Init)).unwrap(), &single, &cfg).unwrap();
        let acc = evaluate(&res.net, &task.test, 0).unwrap();
        assert!(acc >= 0.95, "task {}: {acc}", task.task_id);
    }
}

#[test]
fn zero_spread_is_linearly_separable() {
    let spec = SyntheticSpec {
        tasks: 2,
        cluster_spread: 0.0,
        ..SyntheticSpec::default()
    };
    let seq = gen_synthetic_split(4, &spec).unwrap();
    let specs = [dense(spec.dim, spec.dim, Activation::Identity)];
    let mut cfg = TrainConfig::new(Method::Finetune, ScaleConfig::new(ProjectionMode::Sgp, 1.0, vec![0.97], 0.0));
    cfg.epochs = 200;
    cfg.patience = 200;
    cfg.lr = 0.2;
    let res = train_continual(Network::new(&specs, &mut stream(4, Stream::Init)).unwrap(), &seq, &cfg).unwrap();
    for (i, task) in seq.tasks.iter().enumerate() {
        assert_eq!(evaluate(&res.net, &task.train, i).unwrap(), 1.0);
    }
}
