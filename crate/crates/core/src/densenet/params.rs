use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::{ModelConfig, KERNEL};
use super::ModelError;

/// A named tensor occupying `values[offset..offset + len()]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Ordered, gap-free partition of a flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Layout {
    tensors: Vec<TensorSpec>,
    total: usize,
}

impl Layout {
    pub fn push(&mut self, name: impl Into<String>, shape: Vec<usize>) -> usize {
        let offset = self.total;
        let spec = TensorSpec {
            name: name.into(),
            shape,
            offset,
        };
        self.total += spec.len();
        self.tensors.push(spec);
        offset
    }

    /// Rebuilds a layout from stored specs, checking that they tile `0..total`.
    pub fn from_specs(tensors: Vec<TensorSpec>) -> Result<Self, ModelError> {
        let mut layout = Layout::default();
        for t in tensors {
            if t.offset != layout.total {
                return Err(ModelError::Layout(format!(
                    "tensor {} starts at {}, expected {}",
                    t.name, t.offset, layout.total
                )));
            }
            layout.push(t.name, t.shape);
        }
        Ok(layout)
    }

    pub fn tensors(&self) -> &[TensorSpec] {
        &self.tensors
    }

    pub fn total_len(&self) -> usize {
        self.total
    }

    pub fn get(&self, name: &str) -> Option<&TensorSpec> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn slice<'a>(&self, values: &'a [f64], name: &str) -> Option<&'a [f64]> {
        self.get(name).map(|t| &values[t.range()])
    }
}

/// Trainable and running-statistics layouts for `config`.
///
/// Tensors appear in forward order: stem, then for every block its layers
/// followed by the transition, then the head.
pub fn build_layouts(config: &ModelConfig) -> (Layout, Layout) {
    let mut trainable = Layout::default();
    let mut running = Layout::default();
    let k = config.growth_rate;
    let mut bn = |t: &mut Layout, prefix: &str, c: usize| {
        t.push(format!("{prefix}.bn.gamma"), vec![c]);
        t.push(format!("{prefix}.bn.beta"), vec![c]);
        running.push(format!("{prefix}.bn.running_mean"), vec![c]);
        running.push(format!("{prefix}.bn.running_var"), vec![c]);
    };

    trainable.push(
        "stem.conv.weight",
        vec![
            config.initial_channels,
            config.input_channels,
            KERNEL,
            KERNEL,
        ],
    );
    let shapes = config.block_shapes();
    for (b, shape) in shapes.iter().enumerate() {
        for j in 0..config.layers_per_block {
            let prefix = format!("block{b}.layer{j}");
            let c = shape.entry_channels + j * k;
            bn(&mut trainable, &prefix, c);
            trainable.push(format!("{prefix}.conv.weight"), vec![k, c, KERNEL, KERNEL]);
        }
        if b + 1 < shapes.len() {
            let prefix = format!("transition{b}");
            let c = shape.entry_channels + config.layers_per_block * k;
            bn(&mut trainable, &prefix, c);
            trainable.push(
                format!("{prefix}.conv.weight"),
                vec![config.transition_channels(c), c, 1, 1],
            );
        }
    }
    let c = config.final_channels();
    bn(&mut trainable, "head", c);
    trainable.push("head.fc.weight", vec![config.n_classes, c]);
    trainable.push("head.fc.bias", vec![config.n_classes]);
    (trainable, running)
}

/// Model state: trainable vector, running normalization statistics and
/// provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub config: ModelConfig,
    pub layout: Layout,
    pub values: Vec<f64>,
    pub running_layout: Layout,
    pub running: Vec<f64>,
    /// Number of train-mode batches folded into the running statistics.
    pub stats_updates: u64,
    pub model_version: String,
}

pub const UNTRAINED_VERSION: &str = "untrained";

impl Params {
    pub fn tensor(&self, name: &str) -> Option<&[f64]> {
        self.layout.slice(&self.values, name)
    }

    pub fn running_tensor(&self, name: &str) -> Option<&[f64]> {
        self.running_layout.slice(&self.running, name)
    }

    pub fn check(&self) -> Result<(), ModelError> {
        self.config.validate()?;
        let (trainable, running) = build_layouts(&self.config);
        if trainable != self.layout || running != self.running_layout {
            return Err(ModelError::Layout("layout does not match config".into()));
        }
        if self.values.len() != trainable.total_len() || self.running.len() != running.total_len() {
            return Err(ModelError::Layout(format!(
                "payload sizes {}/{} do not match layout {}/{}",
                self.values.len(),
                self.running.len(),
                trainable.total_len(),
                running.total_len()
            )));
        }
        if let Some(i) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(ModelError::Numeric(format!("parameter {i} is not finite")));
        }
        if let Some(i) = self.running.iter().position(|v| !v.is_finite()) {
            return Err(ModelError::Numeric(format!(
                "running statistic {i} is not finite"
            )));
        }
        Ok(())
    }
}

/// He-normal convolution kernels, unit BN scale, zero BN shift, zero head.
pub fn init_params(config: &ModelConfig, seed: u64) -> Result<Params, ModelError> {
    config.validate()?;
    let (layout, running_layout) = build_layouts(config);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = vec![0.0; layout.total_len()];
    for t in layout.tensors() {
        let dst = &mut values[t.range()];
        if t.name.ends_with(".conv.weight") {
            let fan_in: usize = t.shape[1..].iter().product();
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
            dst.iter_mut().for_each(|v| *v = normal.sample(&mut rng));
        } else if t.name.ends_with(".bn.gamma") {
            dst.fill(1.0);
        }
    }
    let mut running = vec![0.0; running_layout.total_len()];
    for t in running_layout.tensors() {
        if t.name.ends_with(".running_var") {
            running[t.range()].fill(1.0);
        }
    }
    Ok(Params {
        config: config.clone(),
        layout,
        values,
        running_layout,
        running,
        stats_updates: 0,
        model_version: UNTRAINED_VERSION.to_string(),
    })
}
