use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::label::MODEL_CLASSES;

pub const KERNEL: usize = 3;
pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

/// Architecture hyperparameters.
///
/// Layout: 3×3 stem convolution and `stem_pool`×`stem_pool` average pooling,
/// then `n_blocks` dense blocks of `layers_per_block` composite layers
/// (BN → ReLU → 3×3 conv, `growth_rate` new channels each, concatenated),
/// separated by transitions (BN → ReLU → 1×1 conv to `compression`× channels
/// → 2×2 average pool), and a BN → ReLU → global-average-pool → affine →
/// softmax head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_height: usize,
    pub input_width: usize,
    pub input_channels: usize,
    pub n_blocks: usize,
    pub layers_per_block: usize,
    pub growth_rate: usize,
    pub initial_channels: usize,
    pub compression: f64,
    pub n_classes: usize,
    pub stem_pool: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_height: 64,
            input_width: 256,
            input_channels: 1,
            n_blocks: 3,
            layers_per_block: 4,
            growth_rate: 12,
            initial_channels: 16,
            compression: 0.5,
            n_classes: MODEL_CLASSES.len(),
            stem_pool: 4,
        }
    }
}

/// Channel and spatial bookkeeping for one dense block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockShape {
    pub entry_channels: usize,
    pub height: usize,
    pub width: usize,
}

impl ModelConfig {
    /// 1 block × 2 layers over 8×16 inputs; used for gradient checks.
    pub fn reduced() -> Self {
        Self {
            input_height: 8,
            input_width: 16,
            n_blocks: 1,
            layers_per_block: 2,
            stem_pool: 2,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let dims = [
            ("input_height", self.input_height),
            ("input_width", self.input_width),
            ("input_channels", self.input_channels),
            ("n_blocks", self.n_blocks),
            ("layers_per_block", self.layers_per_block),
            ("growth_rate", self.growth_rate),
            ("initial_channels", self.initial_channels),
            ("stem_pool", self.stem_pool),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(ModelError::Config(format!("{name} must be positive")));
        }
        if !(self.compression > 0.0 && self.compression <= 1.0) {
            return Err(ModelError::Config(format!(
                "compression must lie in (0, 1], got {}",
                self.compression
            )));
        }
        if self.n_classes != MODEL_CLASSES.len() {
            return Err(ModelError::Config(format!(
                "classifier has {} output classes, config declares {}",
                MODEL_CLASSES.len(),
                self.n_classes
            )));
        }
        let mut h = self.input_height / self.stem_pool;
        let mut w = self.input_width / self.stem_pool;
        for b in 0..self.n_blocks {
            if h == 0 || w == 0 {
                return Err(ModelError::Config(format!(
                    "feature map collapses to zero before block {b}"
                )));
            }
            if b + 1 < self.n_blocks {
                h /= 2;
                w /= 2;
            }
        }
        Ok(())
    }

    pub fn transition_channels(&self, channels: usize) -> usize {
        ((channels as f64 * self.compression).floor() as usize).max(1)
    }

    /// Shapes of every dense block, in order.
    pub fn block_shapes(&self) -> Vec<BlockShape> {
        let mut shapes = Vec::with_capacity(self.n_blocks);
        let mut c = self.initial_channels;
        let mut h = self.input_height / self.stem_pool;
        let mut w = self.input_width / self.stem_pool;
        for b in 0..self.n_blocks {
            shapes.push(BlockShape {
                entry_channels: c,
                height: h,
                width: w,
            });
            c += self.layers_per_block * self.growth_rate;
            if b + 1 < self.n_blocks {
                c = self.transition_channels(c);
                h /= 2;
                w /= 2;
            }
        }
        shapes
    }

    pub fn final_channels(&self) -> usize {
        self.block_shapes()
            .last()
            .map_or(self.initial_channels, |s| {
                s.entry_channels + self.layers_per_block * self.growth_rate
            })
    }
}
