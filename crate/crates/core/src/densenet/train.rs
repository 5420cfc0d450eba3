use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{absorb_batch_stats, set_population_stats, Network};
use super::{check_labels, loss_and_grad, Mode, ModelError, Params, CLASS_COUNT};
use crate::scalogram::ModelImage;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.02,
            momentum: 0.9,
            epochs: 12,
            batch_size: 16,
            seed: 0,
        }
    }
}

/// Mean train-mode loss and accuracy over one pass of the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
}

fn version_tag(params: &Params) -> String {
    let mut h = crc32fast::Hasher::new();
    for v in params.values.iter().chain(&params.running) {
        h.update(&v.to_le_bytes());
    }
    let c = &params.config;
    format!(
        "densenet-{}x{}-k{}-{:08x}",
        c.n_blocks,
        c.layers_per_block,
        c.growth_rate,
        h.finalize()
    )
}

/// Mini-batch SGD with momentum (`v ← μv − lr·g; θ ← θ + v`), reshuffling
/// every epoch from a generator seeded once with `config.seed`. Normalization
/// statistics are recomputed over the whole training set at the end.
pub fn train(
    params: &Params,
    images: &[ModelImage],
    labels: &[usize],
    config: &TrainConfig,
) -> Result<(Params, Vec<EpochStats>), ModelError> {
    if images.is_empty() {
        return Err(ModelError::InvalidArgument("empty training set".into()));
    }
    check_labels(labels, images.len())?;
    for class in 0..CLASS_COUNT {
        if !labels.contains(&class) {
            return Err(ModelError::InvalidArgument(format!(
                "class {class} has no training samples"
            )));
        }
    }
    if !(config.lr.is_finite() && config.lr >= 0.0) {
        return Err(ModelError::InvalidArgument(format!(
            "learning rate {}",
            config.lr
        )));
    }
    if !(0.0..1.0).contains(&config.momentum) {
        return Err(ModelError::InvalidArgument(format!(
            "momentum {} outside [0, 1)",
            config.momentum
        )));
    }
    if config.batch_size == 0 {
        return Err(ModelError::InvalidArgument(
            "batch size must be positive".into(),
        ));
    }
    params.check()?;

    let net = Network::new(&params.config)?;
    let mut params = params.clone();
    let mut velocity = vec![0.0; params.values.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..images.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for (batch, idx) in order.chunks(config.batch_size).enumerate() {
            let imgs: Vec<ModelImage> = idx.iter().map(|&i| images[i].clone()).collect();
            let ys: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
            let (loss, g, out) = loss_and_grad(&net, &params, &imgs, &ys).map_err(|e| match e {
                ModelError::Numeric(_) => ModelError::Diverged {
                    epoch,
                    batch,
                    loss: f64::NAN,
                },
                other => other,
            })?;
            for ((v, t), gi) in velocity.iter_mut().zip(&mut params.values).zip(&g) {
                *v = config.momentum * *v - config.lr * gi;
                *t += *v;
            }
            if params.values.iter().any(|v| !v.is_finite()) {
                return Err(ModelError::Diverged { epoch, batch, loss });
            }
            absorb_batch_stats(&mut params, &out.batch_stats);
            loss_sum += loss * idx.len() as f64;
            correct += out
                .cache
                .probs
                .iter()
                .zip(&ys)
                .filter(|(p, &y)| argmax(p) == y)
                .count();
        }
        let stats = EpochStats {
            epoch,
            loss: loss_sum / images.len() as f64,
            accuracy: correct as f64 / images.len() as f64,
        };
        log::debug!(
            "epoch {} loss {:.5} accuracy {:.4}",
            stats.epoch,
            stats.loss,
            stats.accuracy
        );
        history.push(stats);
    }
    if config.epochs > 0 {
        recalibrate(&net, &mut params, images, config.batch_size)?;
        params.model_version = version_tag(&params);
    }
    Ok((params, history))
}

/// Running averages trail weights that were still moving; one pass over
/// the training set with the final weights gives exact population statistics.
fn recalibrate(
    net: &Network,
    params: &mut Params,
    images: &[ModelImage],
    batch_size: usize,
) -> Result<(), ModelError> {
    let mut batches = Vec::new();
    for chunk in images.chunks(batch_size) {
        batches.push(net.forward(params, chunk, Mode::Train)?.batch_stats);
    }
    set_population_stats(params, &batches);
    Ok(())
}

fn argmax(p: &[f64; CLASS_COUNT]) -> usize {
    let mut best = 0;
    for (i, v) in p.iter().enumerate() {
        if *v > p[best] {
            best = i;
        }
    }
    best
}
