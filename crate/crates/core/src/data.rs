//! Task sequences: seeded synthetic suites, permuted variants and class-split
//! task builders over labelled sample pools.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{dot, norm};
use crate::math;
use crate::rng::{normal, stream, Stream};

/// Shape of one input sample; inputs are stored flattened channel-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InputShape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl InputShape {
    pub fn flat(dim: usize) -> Self {
        Self {
            channels: 1,
            height: 1,
            width: dim,
        }
    }

    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Split {
    pub inputs: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

impl Split {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn push(&mut self, x: Vec<f64>, y: usize) {
        self.inputs.push(x);
        self.labels.push(y);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskDataset {
    /// 1-based position in its sequence.
    pub task_id: usize,
    pub class_count: usize,
    pub train: Split,
    pub validation: Split,
    pub test: Split,
}

impl TaskDataset {
    pub fn validate(&self, input_len: usize) -> Result<()> {
        for (name, split) in [("train", &self.train), ("validation", &self.validation), ("test", &self.test)] {
            if split.inputs.len() != split.labels.len() {
                return Err(Error::Config(format!("task {}: {name} inputs and labels differ in length", self.task_id)));
            }
            if let Some(&l) = split.labels.iter().find(|&&l| l >= self.class_count) {
                return Err(Error::InvalidLabel {
                    label: l,
                    classes: self.class_count,
                });
            }
            if split.inputs.iter().any(|x| x.len() != input_len) {
                return Err(Error::Config(format!("task {}: {name} input length mismatch", self.task_id)));
            }
        }
        if self.train.is_empty() {
            return Err(Error::Config(format!("task {} has no training data", self.task_id)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskSequence {
    pub tasks: Vec<TaskDataset>,
    pub input_shape: InputShape,
    /// Generator name and seed, or file source and split description.
    pub provenance: String,
}

impl TaskSequence {
    pub fn validate(&self) -> Result<()> {
        if self.tasks.is_empty() {
            return Err(Error::Config("task sequence is empty".into()));
        }
        for (i, t) in self.tasks.iter().enumerate() {
            if t.task_id != i + 1 {
                return Err(Error::Config(format!("task ids must run 1..T, found {} at {}", t.task_id, i)));
            }
            t.validate(self.input_shape.len())?;
        }
        Ok(())
    }
}

/// Parameters of the synthetic suite.
///
/// Every class is an isotropic Gaussian around a mean of norm `separation`.
/// Means mix a component from a subspace shared by all tasks (weight
/// `overlap`) with one from a subspace private to the task, so representations
/// of different tasks overlap partially. All inputs additionally carry a
/// common offset of norm `offset` along one shared direction.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub tasks: usize,
    pub classes_per_task: usize,
    pub dim: usize,
    /// Training plus validation samples per class.
    pub samples_per_class: usize,
    pub test_per_class: usize,
    /// Norm scale of the per-sample noise (per-coordinate std is
    /// `cluster_spread / sqrt(dim)`).
    pub cluster_spread: f64,
    pub separation: f64,
    pub shared_dim: usize,
    pub private_dim: usize,
    /// Share of each class mean's energy in the shared subspace, in [0, 1].
    pub overlap: f64,
    pub offset: f64,
    pub validation_fraction: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            tasks: 5,
            classes_per_task: 5,
            dim: 32,
            samples_per_class: 100,
            test_per_class: 40,
            cluster_spread: 0.5,
            separation: 2.0,
            shared_dim: 4,
            private_dim: 5,
            overlap: 0.5,
            offset: 1.0,
            validation_fraction: 0.05,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("tasks", self.tasks),
            ("classes_per_task", self.classes_per_task),
            ("dim", self.dim),
            ("samples_per_class", self.samples_per_class),
            ("test_per_class", self.test_per_class),
            ("shared_dim", self.shared_dim),
            ("private_dim", self.private_dim),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.dim < self.tasks * self.classes_per_task {
            return Err(Error::Config(format!(
                "dim {} is below tasks × classes = {}",
                self.dim,
                self.tasks * self.classes_per_task
            )));
        }
        if self.shared_dim > self.dim || self.private_dim > self.dim {
            return Err(Error::Config("subspace dimensions exceed dim".into()));
        }
        if !(0.0..=1.0).contains(&self.overlap) {
            return Err(Error::Config("overlap must lie in [0, 1]".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::Config("validation_fraction must lie in [0, 1)".into()));
        }
        for (name, v) in [("cluster_spread", self.cluster_spread), ("separation", self.separation), ("offset", self.offset)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be finite and non-negative")));
            }
        }
        Ok(())
    }
}

fn random_unit<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| normal(rng)).collect();
        let n = norm(&v);
        if n > 1e-8 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// `k` random orthonormal vectors in `R^dim` (Gram-Schmidt of Gaussians).
fn random_frame<R: Rng + ?Sized>(dim: usize, k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut frame: Vec<Vec<f64>> = Vec::with_capacity(k);
    while frame.len() < k {
        let mut v = random_unit(dim, rng);
        for _ in 0..2 {
            for b in &frame {
                let d = dot(&v, b);
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
            }
        }
        let n = norm(&v);
        if n > 1e-6 {
            frame.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    frame
}

fn combine(frame: &[Vec<f64>], coeffs: &[f64], dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    for (b, c) in frame.iter().zip(coeffs) {
        out.iter_mut().zip(b).for_each(|(o, x)| *o += c * x);
    }
    out
}

/// Seeded synthetic continual-learning suite. A pure function of
/// `(seed, spec)`.
pub fn gen_synthetic_split(seed: u64, spec: &SyntheticSpec) -> Result<TaskSequence> {
    spec.validate()?;
    let mut rng = stream(seed, Stream::Data);
    let d = spec.dim;
    let shared = random_frame(d, spec.shared_dim, &mut rng);
    let noise_std = spec.cluster_spread / math::sqrt(d as f64);
    let offset: Vec<f64> = shared[0].iter().map(|x| x * spec.offset).collect();

    let mut tasks = Vec::with_capacity(spec.tasks);
    for t in 0..spec.tasks {
        let private = random_frame(d, spec.private_dim, &mut rng);
        let means: Vec<Vec<f64>> = (0..spec.classes_per_task)
            .map(|_| {
                let a = random_unit(spec.shared_dim, &mut rng);
                let b = random_unit(spec.private_dim, &mut rng);
                let s = combine(&shared, &a, d);
                let p = combine(&private, &b, d);
                let ws = math::sqrt(spec.overlap);
                let wp = math::sqrt(1.0 - spec.overlap);
                let mut m: Vec<f64> = s.iter().zip(&p).map(|(x, y)| ws * x + wp * y).collect();
                let n = norm(&m).max(1e-12);
                m.iter_mut().zip(&offset).for_each(|(x, o)| *x = *x / n * spec.separation + o);
                m
            })
            .collect();

        let draw = |mean: &[f64], rng: &mut crate::rng::SeededRng| -> Vec<f64> {
            mean.iter().map(|m| m + noise_std * normal(rng)).collect()
        };

        let n_val = math::round(spec.samples_per_class as f64 * spec.validation_fraction) as usize;
        let mut train = Split::default();
        let mut validation = Split::default();
        let mut test = Split::default();
        for (c, mean) in means.iter().enumerate() {
            for i in 0..spec.samples_per_class {
                let x = draw(mean, &mut rng);
                if i < n_val {
                    validation.push(x, c);
                } else {
                    train.push(x, c);
                }
            }
            for _ in 0..spec.test_per_class {
                test.push(draw(mean, &mut rng), c);
            }
        }
        tasks.push(TaskDataset {
            task_id: t + 1,
            class_count: spec.classes_per_task,
            train,
            validation,
            test,
        });
    }
    Ok(TaskSequence {
        tasks,
        input_shape: InputShape::flat(d),
        provenance: format!("synthetic seed={seed}"),
    })
}

fn permute(split: &Split, perm: &[usize]) -> Split {
    Split {
        inputs: split.inputs.iter().map(|x| perm.iter().map(|&p| x[p]).collect()).collect(),
        labels: split.labels.clone(),
    }
}

/// Task `τ ≥ 2` applies a fixed seeded permutation of input positions to every
/// split of `base`; task 1 is `base` unchanged.
pub fn gen_permuted(seed: u64, base: &TaskDataset, shape: InputShape, tasks: usize) -> TaskSequence {
    let mut rng = stream(seed, Stream::Permutation);
    let n = shape.len();
    let mut out = Vec::with_capacity(tasks);
    for t in 0..tasks {
        let mut perm: Vec<usize> = (0..n).collect();
        if t > 0 {
            perm.shuffle(&mut rng);
        }
        out.push(TaskDataset {
            task_id: t + 1,
            class_count: base.class_count,
            train: permute(&base.train, &perm),
            validation: permute(&base.validation, &perm),
            test: permute(&base.test, &perm),
        });
    }
    TaskSequence {
        tasks: out,
        input_shape: shape,
        provenance: format!("permuted seed={seed} tasks={tasks}"),
    }
}

/// Labelled samples before they are cut into tasks.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledPool {
    pub inputs: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub shape: Option<InputShape>,
}

impl LabeledPool {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Number of distinct classes, `max label + 1`.
    pub fn class_count(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }

    /// Per-class sample counts, index = label.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_count()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitOptions {
    pub validation_fraction: f64,
    /// Fraction held out for testing when no separate test pool is given.
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SplitOptions {
    fn default() -> Self {
        Self {
            validation_fraction: 0.05,
            test_fraction: 0.2,
            seed: 0,
        }
    }
}

/// Cuts `pool` into tasks of `classes_per_task` consecutive classes, labels
/// remapped to `0..classes_per_task`. Samples of each task are shuffled with a
/// seeded stream, then split into validation / train (and test when
/// `test_pool` is `None`).
pub fn split_by_class(
    pool: &LabeledPool,
    test_pool: Option<&LabeledPool>,
    classes_per_task: usize,
    opts: SplitOptions,
) -> Result<TaskSequence> {
    if classes_per_task == 0 {
        return Err(Error::Config("classes_per_task must be positive".into()));
    }
    let classes = pool.class_count();
    let counts = pool.class_counts();
    if classes == 0 {
        return Err(Error::Config("pool has no samples".into()));
    }
    if counts.contains(&0) {
        return Err(Error::Config("pool labels do not cover a contiguous class range".into()));
    }
    if !classes.is_multiple_of(classes_per_task) {
        return Err(Error::Config(format!(
            "{classes} classes are not divisible into tasks of {classes_per_task}"
        )));
    }
    for f in [opts.validation_fraction, opts.test_fraction] {
        if !(0.0..1.0).contains(&f) {
            return Err(Error::Config("split fractions must lie in [0, 1)".into()));
        }
    }
    let shape = pool
        .shape
        .unwrap_or_else(|| InputShape::flat(pool.inputs.first().map_or(0, Vec::len)));
    let mut rng = stream(opts.seed, Stream::Shuffle);
    let tasks = classes / classes_per_task;
    let mut out = Vec::with_capacity(tasks);
    for t in 0..tasks {
        let lo = t * classes_per_task;
        let hi = lo + classes_per_task;
        let mut idx: Vec<usize> = (0..pool.len()).filter(|&i| (lo..hi).contains(&pool.labels[i])).collect();
        idx.shuffle(&mut rng);
        let n = idx.len();
        let n_test = if test_pool.is_some() {
            0
        } else {
            math::round(n as f64 * opts.test_fraction) as usize
        };
        let n_val = math::round(n as f64 * opts.validation_fraction) as usize;
        let mut ds = TaskDataset {
            task_id: t + 1,
            class_count: classes_per_task,
            train: Split::default(),
            validation: Split::default(),
            test: Split::default(),
        };
        for (j, &i) in idx.iter().enumerate() {
            let x = pool.inputs[i].clone();
            let y = pool.labels[i] - lo;
            if j < n_test {
                ds.test.push(x, y);
            } else if j < n_test + n_val {
                ds.validation.push(x, y);
            } else {
                ds.train.push(x, y);
            }
        }
        if let Some(tp) = test_pool {
            for (x, &y) in tp.inputs.iter().zip(&tp.labels) {
                if (lo..hi).contains(&y) {
                    ds.test.push(x.clone(), y - lo);
                }
            }
        }
        out.push(ds);
    }
    Ok(TaskSequence {
        tasks: out,
        input_shape: shape,
        provenance: format!(
            "class split: {tasks} tasks × {classes_per_task} classes, seed={}",
            opts.seed
        ),
    })
}
