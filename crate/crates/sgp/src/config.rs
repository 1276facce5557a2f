//! Experiment configuration (TOML). Unknown keys are rejected everywhere.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sgp_core::data::{
    gen_permuted, gen_synthetic_split, split_by_class, InputShape, SplitOptions, SyntheticSpec, TaskSequence,
};
use sgp_core::gpm::RepresentationConfig;
use sgp_core::net::{Activation, LayerSpec};
use sgp_core::optim::{AdamParams, OptimizerKind};
use sgp_core::{Method, ProjectionMode, ScaleConfig, TrainConfig};

use crate::error::{Error, Result};
use crate::{dump, idx};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Root seed for data, initialization, shuffling and sampling.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_methods")]
    pub methods: Vec<MethodName>,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    pub dataset: DatasetConfig,
    pub network: NetworkConfig,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub projection: ProjectionSection,
}

fn default_methods() -> Vec<MethodName> {
    vec![MethodName::Sgp, MethodName::Gpm]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodName {
    Sgp,
    Gpm,
    Finetune,
}

impl MethodName {
    pub fn method(self) -> Method {
        match self {
            MethodName::Sgp => Method::Sgp,
            MethodName::Gpm => Method::Gpm,
            MethodName::Finetune => Method::Finetune,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "sgp" => Ok(MethodName::Sgp),
            "gpm" => Ok(MethodName::Gpm),
            "finetune" => Ok(MethodName::Finetune),
            other => Err(Error::Config(format!("unknown method `{other}` (expected sgp, gpm or finetune)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DatasetConfig {
    Synthetic(SyntheticSection),
    Idx(IdxSection),
    /// A sequence written by `gen-data`.
    Dump(DumpSection),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSection {
    pub tasks: usize,
    pub classes_per_task: usize,
    pub dim: usize,
    pub samples_per_class: usize,
    pub test_per_class: usize,
    pub cluster_spread: f64,
    pub separation: f64,
    pub shared_dim: usize,
    pub private_dim: usize,
    pub overlap: f64,
    pub offset: f64,
    pub validation_fraction: f64,
}

impl Default for SyntheticSection {
    fn default() -> Self {
        let s = SyntheticSpec::default();
        Self {
            tasks: s.tasks,
            classes_per_task: s.classes_per_task,
            dim: s.dim,
            samples_per_class: s.samples_per_class,
            test_per_class: s.test_per_class,
            cluster_spread: s.cluster_spread,
            separation: s.separation,
            shared_dim: s.shared_dim,
            private_dim: s.private_dim,
            overlap: s.overlap,
            offset: s.offset,
            validation_fraction: s.validation_fraction,
        }
    }
}

impl SyntheticSection {
    pub fn spec(&self) -> SyntheticSpec {
        SyntheticSpec {
            tasks: self.tasks,
            classes_per_task: self.classes_per_task,
            dim: self.dim,
            samples_per_class: self.samples_per_class,
            test_per_class: self.test_per_class,
            cluster_spread: self.cluster_spread,
            separation: self.separation,
            shared_dim: self.shared_dim,
            private_dim: self.private_dim,
            overlap: self.overlap,
            offset: self.offset,
            validation_fraction: self.validation_fraction,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IdxSplit {
    /// Consecutive class blocks per task.
    Class,
    /// All classes in every task, task τ ≥ 2 permutes pixels.
    Permuted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdxSection {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    #[serde(default)]
    pub test_images: Option<PathBuf>,
    #[serde(default)]
    pub test_labels: Option<PathBuf>,
    pub split: IdxSplit,
    /// Required for `split = "class"`.
    #[serde(default)]
    pub classes_per_task: Option<usize>,
    /// Required for `split = "permuted"`.
    #[serde(default)]
    pub tasks: Option<usize>,
    #[serde(default = "default_validation")]
    pub validation_fraction: f64,
    /// Used only without a separate test file pair.
    #[serde(default = "default_test")]
    pub test_fraction: f64,
}

fn default_validation() -> f64 {
    0.05
}

fn default_test() -> f64 {
    0.2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DumpSection {
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub layers: Vec<LayerConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ActivationName {
    #[default]
    Relu,
    Identity,
}

impl From<ActivationName> for Activation {
    fn from(a: ActivationName) -> Self {
        match a {
            ActivationName::Relu => Activation::Relu,
            ActivationName::Identity => Activation::Identity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum LayerConfig {
    Dense {
        units: usize,
        #[serde(default)]
        activation: ActivationName,
    },
    Conv {
        out_channels: usize,
        /// `[height, width]`.
        kernel: [usize; 2],
        #[serde(default = "one")]
        stride: usize,
        #[serde(default)]
        activation: ActivationName,
    },
}

fn one() -> usize {
    1
}

impl NetworkConfig {
    /// Chains the layers starting from the dataset's input shape.
    pub fn layer_specs(&self, input: InputShape) -> Result<Vec<LayerSpec>> {
        if self.layers.is_empty() {
            return Err(Error::Config("network.layers is empty".into()));
        }
        let mut specs = Vec::with_capacity(self.layers.len());
        // current (channels, height, width); `None` once flattened by a dense layer
        let mut shape = Some(input);
        let mut flat = input.len();
        for (i, layer) in self.layers.iter().enumerate() {
            let spec = match *layer {
                LayerConfig::Dense { units, activation } => {
                    shape = None;
                    let s = LayerSpec::Dense {
                        input_dim: flat,
                        output_dim: units,
                        activation: activation.into(),
                    };
                    flat = units;
                    s
                }
                LayerConfig::Conv {
                    out_channels,
                    kernel,
                    stride,
                    activation,
                } => {
                    let Some(s) = shape else {
                        return Err(Error::Config(format!("layer {i}: conv layer after a dense layer")));
                    };
                    let spec = LayerSpec::Conv2d {
                        in_channels: s.channels,
                        height: s.height,
                        width: s.width,
                        kernel_h: kernel[0],
                        kernel_w: kernel[1],
                        stride,
                        out_channels,
                        activation: activation.into(),
                    };
                    spec.validate().map_err(|e| Error::Config(format!("layer {i}: {e}")))?;
                    let (oh, ow) = spec.output_hw();
                    shape = Some(InputShape {
                        channels: out_channels,
                        height: oh,
                        width: ow,
                    });
                    flat = spec.output_len();
                    spec
                }
            };
            spec.validate().map_err(|e| Error::Config(format!("layer {i}: {e}")))?;
            specs.push(spec);
        }
        Ok(specs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerName {
    Sgd,
    AdamGp,
    AdamPreprojected,
}

impl OptimizerName {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(OptimizerName::Sgd),
            "adam-gp" => Ok(OptimizerName::AdamGp),
            "adam-preprojected" => Ok(OptimizerName::AdamPreprojected),
            other => Err(Error::Config(format!(
                "unknown optimizer `{other}` (expected sgd, adam-gp or adam-preprojected)"
            ))),
        }
    }

    fn kind(self) -> OptimizerKind {
        match self {
            OptimizerName::Sgd => OptimizerKind::Sgd,
            OptimizerName::AdamGp => OptimizerKind::AdamGp,
            OptimizerName::AdamPreprojected => OptimizerKind::AdamPreprojected,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub min_improvement: f64,
    pub restore_best: bool,
    pub optimizer: OptimizerName,
    pub lr: f64,
    pub lr_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Samples per task used to build representation matrices.
    pub representation_samples: usize,
    pub max_representation_columns: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::new(Method::Sgp, ScaleConfig::new(ProjectionMode::Sgp, 1.0, vec![0.97], 0.0));
        Self {
            epochs: t.epochs,
            batch_size: t.batch_size,
            patience: t.patience,
            min_improvement: t.min_improvement,
            restore_best: t.restore_best,
            optimizer: OptimizerName::Sgd,
            lr: t.lr,
            lr_decay: t.lr_decay,
            beta1: t.adam.beta1,
            beta2: t.adam.beta2,
            adam_eps: t.adam.eps,
            representation_samples: t.representation.samples,
            max_representation_columns: t.representation.max_columns,
        }
    }
}

/// One threshold for every layer, or one per layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Thresholds {
    Shared(f64),
    PerLayer(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProjectionSection {
    pub alpha: f64,
    pub epsilon_th: Thresholds,
    /// Added to every threshold after each task.
    pub epsilon_increment: f64,
}

impl Default for ProjectionSection {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            epsilon_th: Thresholds::Shared(0.97),
            epsilon_increment: 0.0,
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub alpha: Option<f64>,
    pub epsilon_th: Option<Vec<f64>>,
    pub methods: Option<Vec<MethodName>>,
    pub optimizer: Option<OptimizerName>,
    pub out_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config file; relative dataset paths are resolved against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::Config(format!("config file {} not found", path.display())),
            _ => Error::io(path, e),
        })?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match &mut self.dataset {
            DatasetConfig::Idx(s) => {
                fix(&mut s.train_images);
                fix(&mut s.train_labels);
                if let Some(p) = &mut s.test_images {
                    fix(p);
                }
                if let Some(p) = &mut s.test_labels {
                    fix(p);
                }
            }
            DatasetConfig::Dump(s) => fix(&mut s.path),
            DatasetConfig::Synthetic(_) => {}
        }
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(a) = o.alpha {
            self.projection.alpha = a;
        }
        if let Some(e) = &o.epsilon_th {
            self.projection.epsilon_th = if e.len() == 1 {
                Thresholds::Shared(e[0])
            } else {
                Thresholds::PerLayer(e.clone())
            };
        }
        if let Some(m) = &o.methods {
            self.methods = m.clone();
        }
        if let Some(opt) = o.optimizer {
            self.train.optimizer = opt;
        }
        if let Some(out) = &o.out_dir {
            self.out_dir = Some(out.clone());
        }
    }

    /// Checks everything that does not need the data itself.
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Config("methods is empty".into()));
        }
        for (i, m) in self.methods.iter().enumerate() {
            if self.methods[..i].contains(m) {
                return Err(Error::Config(format!("method `{}` listed twice", m.method().name())));
            }
        }
        let layers = self.network.layers.len();
        if layers == 0 {
            return Err(Error::Config("network.layers is empty".into()));
        }
        let thresholds = self.thresholds(layers)?;
        match &self.dataset {
            DatasetConfig::Synthetic(s) => {
                let spec = s.spec();
                spec.validate().map_err(|e| Error::Config(format!("dataset: {e}")))?;
                self.network.layer_specs(InputShape::flat(spec.dim))?;
                self.train_config(Method::Sgp, thresholds.clone())
                    .validate(layers, spec.tasks)
                    .map_err(|e| Error::Config(e.to_string()))?;
            }
            DatasetConfig::Idx(s) => {
                match s.split {
                    IdxSplit::Class if s.classes_per_task.unwrap_or(0) == 0 => {
                        return Err(Error::Config("dataset.classes_per_task is required for split = \"class\"".into()))
                    }
                    IdxSplit::Permuted if s.tasks.unwrap_or(0) == 0 => {
                        return Err(Error::Config("dataset.tasks is required for split = \"permuted\"".into()))
                    }
                    _ => {}
                }
                if s.test_images.is_some() != s.test_labels.is_some() {
                    return Err(Error::Config("test_images and test_labels must be given together".into()));
                }
                for f in [s.validation_fraction, s.test_fraction] {
                    if !(0.0..1.0).contains(&f) {
                        return Err(Error::Config("split fractions must lie in [0, 1)".into()));
                    }
                }
            }
            DatasetConfig::Dump(_) => {}
        }
        // the task count is only known for idx and dump data after loading;
        // checked again by the trainer before any step
        self.train_config(Method::Sgp, thresholds)
            .validate(layers, 1)
            .map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    fn thresholds(&self, layers: usize) -> Result<Vec<f64>> {
        match &self.projection.epsilon_th {
            Thresholds::Shared(e) => Ok(vec![*e; layers]),
            Thresholds::PerLayer(v) if v.len() == layers => Ok(v.clone()),
            Thresholds::PerLayer(v) => Err(Error::Config(format!(
                "projection.epsilon_th has {} entries for {layers} layers",
                v.len()
            ))),
        }
    }

    fn train_config(&self, method: Method, thresholds: Vec<f64>) -> TrainConfig {
        let t = &self.train;
        let scale = ScaleConfig::new(
            ProjectionMode::Sgp,
            self.projection.alpha,
            thresholds,
            self.projection.epsilon_increment,
        );
        let mut c = TrainConfig::new(method, scale);
        c.epochs = t.epochs;
        c.batch_size = t.batch_size;
        c.patience = t.patience;
        c.min_improvement = t.min_improvement;
        c.restore_best = t.restore_best;
        c.seed = self.seed;
        c.optimizer = t.optimizer.kind();
        c.lr = t.lr;
        c.lr_decay = t.lr_decay;
        c.adam = AdamParams {
            beta1: t.beta1,
            beta2: t.beta2,
            eps: t.adam_eps,
        };
        c.representation = RepresentationConfig {
            samples: t.representation_samples,
            max_columns: t.max_representation_columns,
        };
        c
    }

    /// Trainer settings for `method`.
    pub fn train_config_for(&self, method: MethodName) -> Result<TrainConfig> {
        Ok(self.train_config(method.method(), self.thresholds(self.network.layers.len())?))
    }

    /// Builds or loads the task sequence.
    pub fn load_sequence(&self) -> Result<TaskSequence> {
        match &self.dataset {
            DatasetConfig::Synthetic(s) => Ok(gen_synthetic_split(self.seed, &s.spec())?),
            DatasetConfig::Dump(s) => dump::read_sequence(&s.path),
            DatasetConfig::Idx(s) => {
                let pool = idx::load_idx(&s.train_images, &s.train_labels)?;
                let test = match (&s.test_images, &s.test_labels) {
                    (Some(i), Some(l)) => Some(idx::load_idx(i, l)?),
                    _ => None,
                };
                let opts = SplitOptions {
                    validation_fraction: s.validation_fraction,
                    test_fraction: s.test_fraction,
                    seed: self.seed,
                };
                let to_config = |e: sgp_core::Error| match e {
                    sgp_core::Error::Config(m) => Error::Config(format!("dataset: {m}")),
                    other => other.into(),
                };
                match s.split {
                    IdxSplit::Class => {
                        let per_task = s.classes_per_task.unwrap_or(0);
                        split_by_class(&pool, test.as_ref(), per_task, opts).map_err(to_config)
                    }
                    IdxSplit::Permuted => {
                        let all = pool.class_count();
                        let base = split_by_class(&pool, test.as_ref(), all, opts).map_err(to_config)?;
                        let shape = base.input_shape;
                        let task = base.tasks.into_iter().next().expect("one task");
                        Ok(gen_permuted(self.seed, &task, shape, s.tasks.unwrap_or(0)))
                    }
                }
            }
        }
    }
}
