use super::config::{ModelConfig, BN_MOMENTUM, KERNEL};
use super::ops::{
    avg_pool_backward, avg_pool_forward, bn_relu_backward, bn_relu_forward, conv_backward,
    conv_forward, BatchStats, BnCache, BnStats, ConvShape, View,
};
use super::params::{build_layouts, Layout, Params};
use super::{Mode, ModelError, CLASS_COUNT, PROB_FLOOR};
use crate::scalogram::ModelImage;

#[derive(Debug, Clone, Copy)]
struct BnRef {
    gamma: usize,
    beta: usize,
    mean: usize,
    var: usize,
    channels: usize,
}

#[derive(Debug, Clone, Copy)]
struct ConvRef {
    weight: usize,
    shape: ConvShape,
}

#[derive(Debug, Clone)]
struct BlockRef {
    layers: Vec<(BnRef, ConvRef)>,
    channels: usize,
    h: usize,
    w: usize,
}

#[derive(Debug, Clone, Copy)]
struct TransitionRef {
    bn: BnRef,
    conv: ConvRef,
}

/// Offsets of every tensor, resolved once from the layouts.
#[derive(Debug, Clone)]
pub(crate) struct Network {
    config: ModelConfig,
    stem: ConvRef,
    blocks: Vec<BlockRef>,
    transitions: Vec<TransitionRef>,
    head_bn: BnRef,
    fc_weight: usize,
    fc_bias: usize,
    features: usize,
}

/// Activations retained for the backward pass.
pub(crate) struct Cache {
    n: usize,
    input: Vec<f64>,
    buffers: Vec<Vec<f64>>,
    layers: Vec<Vec<BnCache>>,
    transitions: Vec<BnCache>,
    head: BnCache,
    features: Vec<f64>,
    pub probs: Vec<[f64; CLASS_COUNT]>,
}

pub(crate) struct Outputs {
    pub cache: Cache,
    /// Per BN layer in running-layout order; empty in eval mode.
    pub batch_stats: Vec<(BnRefPublic, BatchStats)>,
}

/// Running-statistics offsets of one BN layer.
#[derive(Debug, Clone, Copy)]
pub(crate) struct BnRefPublic {
    pub(crate) mean: usize,
    pub(crate) var: usize,
}

fn offset(layout: &Layout, name: &str) -> usize {
    layout
        .get(name)
        .unwrap_or_else(|| panic!("layout lacks {name}"))
        .offset
}

fn bn_ref(t: &Layout, r: &Layout, prefix: &str, channels: usize) -> BnRef {
    BnRef {
        gamma: offset(t, &format!("{prefix}.bn.gamma")),
        beta: offset(t, &format!("{prefix}.bn.beta")),
        mean: offset(r, &format!("{prefix}.bn.running_mean")),
        var: offset(r, &format!("{prefix}.bn.running_var")),
        channels,
    }
}

impl Network {
    pub fn new(config: &ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let (t, r) = build_layouts(config);
        let k = config.growth_rate;
        let shapes = config.block_shapes();
        let stem = ConvRef {
            weight: offset(&t, "stem.conv.weight"),
            shape: ConvShape {
                c_in: config.input_channels,
                c_out: config.initial_channels,
                k: KERNEL,
                h: config.input_height,
                w: config.input_width,
            },
        };
        let mut blocks = Vec::new();
        let mut transitions = Vec::new();
        for (b, s) in shapes.iter().enumerate() {
            let mut layers = Vec::new();
            for j in 0..config.layers_per_block {
                let prefix = format!("block{b}.layer{j}");
                let c = s.entry_channels + j * k;
                layers.push((
                    bn_ref(&t, &r, &prefix, c),
                    ConvRef {
                        weight: offset(&t, &format!("{prefix}.conv.weight")),
                        shape: ConvShape {
                            c_in: c,
                            c_out: k,
                            k: KERNEL,
                            h: s.height,
                            w: s.width,
                        },
                    },
                ));
            }
            let channels = s.entry_channels + config.layers_per_block * k;
            debug_assert_eq!(layers.last().map(|(bn, _)| bn.channels + k), Some(channels));
            if b + 1 < shapes.len() {
                let prefix = format!("transition{b}");
                let c_out = config.transition_channels(channels);
                debug_assert_eq!(c_out, shapes[b + 1].entry_channels);
                transitions.push(TransitionRef {
                    bn: bn_ref(&t, &r, &prefix, channels),
                    conv: ConvRef {
                        weight: offset(&t, &format!("{prefix}.conv.weight")),
                        shape: ConvShape {
                            c_in: channels,
                            c_out,
                            k: 1,
                            h: s.height,
                            w: s.width,
                        },
                    },
                });
            }
            blocks.push(BlockRef {
                layers,
                channels,
                h: s.height,
                w: s.width,
            });
        }
        let features = config.final_channels();
        Ok(Self {
            config: config.clone(),
            stem,
            blocks,
            transitions,
            head_bn: bn_ref(&t, &r, "head", features),
            fc_weight: offset(&t, "head.fc.weight"),
            fc_bias: offset(&t, "head.fc.bias"),
            features,
        })
    }

    fn check_images(&self, images: &[ModelImage]) -> Result<(), ModelError> {
        let c = &self.config;
        for (i, img) in images.iter().enumerate() {
            let actual = (img.channels(), img.height, img.width);
            let expected = (c.input_channels, c.input_height, c.input_width);
            if actual != expected || img.data.len() != img.height * img.width {
                return Err(ModelError::Shape {
                    index: i,
                    expected: format!("{}×{}×{}", expected.0, expected.1, expected.2),
                    actual: format!(
                        "{}×{}×{} ({} values)",
                        actual.0,
                        actual.1,
                        actual.2,
                        img.data.len()
                    ),
                });
            }
        }
        Ok(())
    }

    pub fn forward(
        &self,
        params: &Params,
        images: &[ModelImage],
        mode: Mode,
    ) -> Result<Outputs, ModelError> {
        self.check_images(images)?;
        if mode == Mode::Eval && params.stats_updates == 0 {
            return Err(ModelError::MissingRunningStats);
        }
        let n = images.len();
        let theta = &params.values;
        let mut batch_stats = Vec::new();
        let mut bn = |x: &[f64], xv: View, r: &BnRef, hw: usize| {
            let gamma = &theta[r.gamma..r.gamma + r.channels];
            let beta = &theta[r.beta..r.beta + r.channels];
            let stats = match mode {
                Mode::Train => BnStats::Batch,
                Mode::Eval => BnStats::Running {
                    mean: &params.running[r.mean..r.mean + r.channels],
                    var: &params.running[r.var..r.var + r.channels],
                },
            };
            let (cache, batch) = bn_relu_forward(x, xv, n, r.channels, hw, gamma, beta, stats);
            if let Some(b) = batch {
                batch_stats.push((
                    BnRefPublic {
                        mean: r.mean,
                        var: r.var,
                    },
                    b,
                ));
            }
            cache
        };

        let input: Vec<f64> = images
            .iter()
            .flat_map(|img| img.data.iter().copied())
            .collect();
        let st = self.stem.shape;
        let mut stem_out = vec![0.0; n * st.c_out * st.h * st.w];
        let stem_w = &theta[self.stem.weight..][..st.c_out * st.c_in * KERNEL * KERNEL];
        conv_forward(
            &input,
            View::dense(st.c_in),
            n,
            &st,
            stem_w,
            &mut stem_out,
            View::dense(st.c_out),
        );

        let mut buffers: Vec<Vec<f64>> = self
            .blocks
            .iter()
            .map(|b| vec![0.0; n * b.channels * b.h * b.w])
            .collect();
        avg_pool_forward(
            &stem_out,
            n,
            st.c_out,
            st.h,
            st.w,
            self.config.stem_pool,
            &mut buffers[0],
            View::dense(self.blocks[0].channels),
        );
        drop(stem_out);

        let mut layer_caches = Vec::with_capacity(self.blocks.len());
        let mut transition_caches = Vec::with_capacity(self.transitions.len());
        for (b, block) in self.blocks.iter().enumerate() {
            let hw = block.h * block.w;
            let full = View::dense(block.channels);
            let mut caches = Vec::with_capacity(block.layers.len());
            for (bn_r, conv) in &block.layers {
                let cache = bn(&buffers[b], full, bn_r, hw);
                let sh = conv.shape;
                let w = &theta[conv.weight..][..sh.c_out * sh.c_in * KERNEL * KERNEL];
                let out = View {
                    stride: block.channels,
                    offset: sh.c_in,
                };
                conv_forward(
                    &cache.a,
                    View::dense(sh.c_in),
                    n,
                    &sh,
                    w,
                    &mut buffers[b],
                    out,
                );
                caches.push(cache);
            }
            layer_caches.push(caches);
            if let Some(tr) = self.transitions.get(b) {
                let cache = bn(&buffers[b], full, &tr.bn, hw);
                let sh = tr.conv.shape;
                let w = &theta[tr.conv.weight..][..sh.c_out * sh.c_in];
                let mut t = vec![0.0; n * sh.c_out * hw];
                conv_forward(
                    &cache.a,
                    View::dense(sh.c_in),
                    n,
                    &sh,
                    w,
                    &mut t,
                    View::dense(sh.c_out),
                );
                let next = View::dense(self.blocks[b + 1].channels);
                avg_pool_forward(
                    &t,
                    n,
                    sh.c_out,
                    block.h,
                    block.w,
                    2,
                    &mut buffers[b + 1],
                    next,
                );
                transition_caches.push(cache);
            }
        }

        let last = self.blocks.last().expect("at least one block");
        let hw = last.h * last.w;
        let head = bn(
            &buffers[self.blocks.len() - 1],
            View::dense(last.channels),
            &self.head_bn,
            hw,
        );
        let c = self.features;
        let features: Vec<f64> = head
            .a
            .chunks_exact(hw)
            .map(|ch| ch.iter().sum::<f64>() / hw as f64)
            .collect();
        let fw = &theta[self.fc_weight..][..CLASS_COUNT * c];
        let fb = &theta[self.fc_bias..][..CLASS_COUNT];
        let probs = features
            .chunks_exact(c)
            .map(|f| {
                let mut logits = [0.0; CLASS_COUNT];
                for (o, l) in logits.iter_mut().enumerate() {
                    *l = fb[o]
                        + fw[o * c..(o + 1) * c]
                            .iter()
                            .zip(f)
                            .map(|(a, b)| a * b)
                            .sum::<f64>();
                }
                softmax(&logits)
            })
            .collect::<Vec<_>>();
        if let Some(i) = probs.iter().position(|p| p.iter().any(|v| !v.is_finite())) {
            return Err(ModelError::Numeric(format!(
                "non-finite output for sample {i}"
            )));
        }

        Ok(Outputs {
            cache: Cache {
                n,
                input,
                buffers,
                layers: layer_caches,
                transitions: transition_caches,
                head,
                features,
                probs,
            },
            batch_stats,
        })
    }

    /// Gradient of the mean clamped cross-entropy with respect to `params.values`.
    pub fn backward(&self, params: &Params, cache: &Cache, labels: &[usize]) -> Vec<f64> {
        let theta = &params.values;
        let n = cache.n;
        let c = self.features;
        let mut grad = vec![0.0; theta.len()];

        let mut dlogits = vec![0.0; n * CLASS_COUNT];
        for (s, (p, &y)) in cache.probs.iter().zip(labels).enumerate() {
            // Clamped samples contribute a constant loss, hence zero gradient.
            if p[y] < PROB_FLOOR {
                continue;
            }
            for o in 0..CLASS_COUNT {
                let target = if o == y { 1.0 } else { 0.0 };
                dlogits[s * CLASS_COUNT + o] = (p[o] - target) / n as f64;
            }
        }

        let fw = &theta[self.fc_weight..][..CLASS_COUNT * c];
        let mut dfeatures = vec![0.0; n * c];
        for s in 0..n {
            let f = &cache.features[s * c..(s + 1) * c];
            for o in 0..CLASS_COUNT {
                let g = dlogits[s * CLASS_COUNT + o];
                grad[self.fc_bias + o] += g;
                let gw = &mut grad[self.fc_weight + o * c..self.fc_weight + (o + 1) * c];
                for (dw, fv) in gw.iter_mut().zip(f) {
                    *dw += g * fv;
                }
                for (df, wv) in dfeatures[s * c..(s + 1) * c]
                    .iter_mut()
                    .zip(&fw[o * c..(o + 1) * c])
                {
                    *df += g * wv;
                }
            }
        }

        let last = self.blocks.last().expect("at least one block");
        let hw = last.h * last.w;
        let da_head: Vec<f64> = dfeatures
            .iter()
            .flat_map(|&g| std::iter::repeat(g / hw as f64).take(hw))
            .collect();
        let mut dbuffers: Vec<Vec<f64>> =
            cache.buffers.iter().map(|b| vec![0.0; b.len()]).collect();
        let nb = self.blocks.len();
        self.bn_backward(
            theta,
            &mut grad,
            &self.head_bn,
            &cache.head,
            &da_head,
            n,
            hw,
            &mut dbuffers[nb - 1],
            View::dense(last.channels),
        );

        for b in (0..nb).rev() {
            let block = &self.blocks[b];
            let hw = block.h * block.w;
            let full = View::dense(block.channels);
            for (j, (bn_r, conv)) in block.layers.iter().enumerate().rev() {
                let lc = &cache.layers[b][j];
                let sh = conv.shape;
                let wlen = sh.c_out * sh.c_in * KERNEL * KERNEL;
                let mut da = vec![0.0; n * sh.c_in * hw];
                let dy_view = View {
                    stride: block.channels,
                    offset: sh.c_in,
                };
                let (w, dw) = (
                    &theta[conv.weight..][..wlen],
                    &mut grad[conv.weight..][..wlen],
                );
                conv_backward(
                    &lc.a,
                    View::dense(sh.c_in),
                    n,
                    &sh,
                    w,
                    &dbuffers[b],
                    dy_view,
                    dw,
                    Some((&mut da, View::dense(sh.c_in))),
                );
                self.bn_backward(
                    theta,
                    &mut grad,
                    bn_r,
                    lc,
                    &da,
                    n,
                    hw,
                    &mut dbuffers[b],
                    full,
                );
            }
            if b > 0 {
                let tr = &self.transitions[b - 1];
                let prev = &self.blocks[b - 1];
                let phw = prev.h * prev.w;
                let sh = tr.conv.shape;
                let dt = avg_pool_backward(
                    &dbuffers[b],
                    View::dense(block.channels),
                    n,
                    sh.c_out,
                    prev.h,
                    prev.w,
                    2,
                );
                let tc = &cache.transitions[b - 1];
                let wlen = sh.c_out * sh.c_in;
                let mut da = vec![0.0; n * sh.c_in * phw];
                let (w, dw) = (
                    &theta[tr.conv.weight..][..wlen],
                    &mut grad[tr.conv.weight..][..wlen],
                );
                conv_backward(
                    &tc.a,
                    View::dense(sh.c_in),
                    n,
                    &sh,
                    w,
                    &dt,
                    View::dense(sh.c_out),
                    dw,
                    Some((&mut da, View::dense(sh.c_in))),
                );
                self.bn_backward(
                    theta,
                    &mut grad,
                    &tr.bn,
                    tc,
                    &da,
                    n,
                    phw,
                    &mut dbuffers[b - 1],
                    View::dense(prev.channels),
                );
            } else {
                let st = self.stem.shape;
                let dstem = avg_pool_backward(
                    &dbuffers[0],
                    View::dense(block.channels),
                    n,
                    st.c_out,
                    st.h,
                    st.w,
                    self.config.stem_pool,
                );
                let wlen = st.c_out * st.c_in * KERNEL * KERNEL;
                let (w, dw) = (
                    &theta[self.stem.weight..][..wlen],
                    &mut grad[self.stem.weight..][..wlen],
                );
                conv_backward(
                    &cache.input,
                    View::dense(st.c_in),
                    n,
                    &st,
                    w,
                    &dstem,
                    View::dense(st.c_out),
                    dw,
                    None,
                );
            }
        }
        grad
    }

    #[allow(clippy::too_many_arguments)]
    fn bn_backward(
        &self,
        theta: &[f64],
        grad: &mut [f64],
        r: &BnRef,
        cache: &BnCache,
        da: &[f64],
        n: usize,
        hw: usize,
        dx: &mut [f64],
        dxv: View,
    ) {
        let ch = r.channels;
        let mut dgamma = vec![0.0; ch];
        let mut dbeta = vec![0.0; ch];
        bn_relu_backward(
            cache,
            da,
            n,
            ch,
            hw,
            &theta[r.gamma..r.gamma + ch],
            &mut dgamma,
            &mut dbeta,
            dx,
            dxv,
        );
        for (g, d) in grad[r.gamma..r.gamma + ch].iter_mut().zip(&dgamma) {
            *g += d;
        }
        for (g, d) in grad[r.beta..r.beta + ch].iter_mut().zip(&dbeta) {
            *g += d;
        }
    }
}

/// Folds one batch's statistics into the running averages (unbiased variance).
pub(crate) fn absorb_batch_stats(params: &mut Params, stats: &[(BnRefPublic, BatchStats)]) {
    for (r, b) in stats {
        let correction = if b.count > 1 {
            b.count as f64 / (b.count - 1) as f64
        } else {
            1.0
        };
        for (i, (m, v)) in b.mean.iter().zip(&b.var).enumerate() {
            let rm = &mut params.running[r.mean + i];
            *rm = BN_MOMENTUM * *rm + (1.0 - BN_MOMENTUM) * m;
            let rv = &mut params.running[r.var + i];
            *rv = BN_MOMENTUM * *rv + (1.0 - BN_MOMENTUM) * v * correction;
        }
    }
    if !stats.is_empty() {
        params.stats_updates += 1;
    }
}

/// Replaces the running statistics with the pooled statistics of `batches`
/// (population mean, unbiased variance over every sample seen).
pub(crate) fn set_population_stats(
    params: &mut Params,
    batches: &[Vec<(BnRefPublic, BatchStats)>],
) {
    let Some(first) = batches.first() else { return };
    for (layer, (r, _)) in first.iter().enumerate() {
        let channels = first[layer].1.mean.len();
        for i in 0..channels {
            let (mut n, mut sum, mut sq) = (0.0, 0.0, 0.0);
            for b in batches {
                let s = &b[layer].1;
                let c = s.count as f64;
                n += c;
                sum += c * s.mean[i];
                sq += c * (s.var[i] + s.mean[i] * s.mean[i]);
            }
            let mean = sum / n;
            let var = (sq / n - mean * mean).max(0.0);
            params.running[r.mean + i] = mean;
            params.running[r.var + i] = if n > 1.0 { var * n / (n - 1.0) } else { var };
        }
    }
    params.stats_updates += batches.len() as u64;
}

pub(crate) fn softmax(logits: &[f64; CLASS_COUNT]) -> [f64; CLASS_COUNT] {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p = logits.map(|l| (l - max).exp());
    let sum: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= sum);
    p
}
