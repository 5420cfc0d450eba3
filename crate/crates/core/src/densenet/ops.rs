//! NCHW kernels over flat `f64` buffers.
//!
//! A [`View`] addresses channels `offset..` of a buffer holding `stride`
//! channels per sample, so dense-block layers can read a channel prefix and
//! write their growth channels in place.

use super::config::BN_EPSILON;

#[derive(Debug, Clone, Copy)]
pub(crate) struct View {
    pub stride: usize,
    pub offset: usize,
}

impl View {
    pub fn dense(channels: usize) -> Self {
        Self {
            stride: channels,
            offset: 0,
        }
    }

    /// Start of channel `ch` of sample `s`.
    #[inline]
    pub fn at(&self, s: usize, ch: usize, hw: usize) -> usize {
        (s * self.stride + self.offset + ch) * hw
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvShape {
    pub c_in: usize,
    pub c_out: usize,
    pub k: usize,
    pub h: usize,
    pub w: usize,
}

impl ConvShape {
    fn hw(&self) -> usize {
        self.h * self.w
    }

    fn patch(&self) -> usize {
        self.c_in * self.k * self.k
    }
}

/// `C = A·B (+ C if accumulate)` with explicit row/column strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    c: &mut [f64],
    accumulate: bool,
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(k == 0 || (m - 1) * rsa + (k - 1) * csa < a.len());
    assert!(k == 0 || (k - 1) * rsb + (n - 1) * csb < b.len());
    assert!(m * n <= c.len());
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: the assertions above bound every index dgemm touches.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn im2col(x: &[f64], start: usize, sh: &ConvShape, cols: &mut [f64]) {
    let (h, w, k) = (sh.h, sh.w, sh.k);
    let hw = sh.hw();
    let pad = (k / 2) as isize;
    cols.fill(0.0);
    for i in 0..sh.c_in {
        let src = &x[start + i * hw..start + (i + 1) * hw];
        for ky in 0..k {
            let dy = ky as isize - pad;
            for kx in 0..k {
                let dx = kx as isize - pad;
                let row = &mut cols[((i * k + ky) * k + kx) * hw..][..hw];
                let x0 = (-dx).max(0) as usize;
                let x1 = (w as isize - dx).min(w as isize).max(0) as usize;
                for y in 0..h {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize || x0 >= x1 {
                        continue;
                    }
                    let s0 = sy as usize * w + (x0 as isize + dx) as usize;
                    row[y * w + x0..y * w + x1].copy_from_slice(&src[s0..s0 + (x1 - x0)]);
                }
            }
        }
    }
}

fn col2im_add(cols: &[f64], sh: &ConvShape, dx_buf: &mut [f64], start: usize) {
    let (h, w, k) = (sh.h, sh.w, sh.k);
    let hw = sh.hw();
    let pad = (k / 2) as isize;
    for i in 0..sh.c_in {
        let dst = &mut dx_buf[start + i * hw..start + (i + 1) * hw];
        for ky in 0..k {
            let dy = ky as isize - pad;
            for kx in 0..k {
                let dxo = kx as isize - pad;
                let row = &cols[((i * k + ky) * k + kx) * hw..][..hw];
                let x0 = (-dxo).max(0) as usize;
                let x1 = (w as isize - dxo).min(w as isize).max(0) as usize;
                for y in 0..h {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize || x0 >= x1 {
                        continue;
                    }
                    let s0 = sy as usize * w + (x0 as isize + dxo) as usize;
                    for (d, c) in dst[s0..s0 + (x1 - x0)]
                        .iter_mut()
                        .zip(&row[y * w + x0..y * w + x1])
                    {
                        *d += c;
                    }
                }
            }
        }
    }
}

/// Zero-padded "same" convolution without bias; overwrites the output channels.
pub(crate) fn conv_forward(
    x: &[f64],
    xv: View,
    n: usize,
    sh: &ConvShape,
    weight: &[f64],
    y: &mut [f64],
    yv: View,
) {
    let hw = sh.hw();
    let patch = sh.patch();
    let mut cols = if sh.k == 1 {
        Vec::new()
    } else {
        vec![0.0; patch * hw]
    };
    for s in 0..n {
        let xs = xv.at(s, 0, hw);
        let b: &[f64] = if sh.k == 1 {
            &x[xs..xs + patch * hw]
        } else {
            im2col(x, xs, sh, &mut cols);
            &cols
        };
        let ys = yv.at(s, 0, hw);
        gemm(
            sh.c_out,
            patch,
            hw,
            weight,
            (patch, 1),
            b,
            (hw, 1),
            &mut y[ys..ys + sh.c_out * hw],
            false,
        );
    }
}

/// Accumulates the weight gradient and, when `dx` is given, adds the input
/// gradient into it.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_backward(
    x: &[f64],
    xv: View,
    n: usize,
    sh: &ConvShape,
    weight: &[f64],
    dy: &[f64],
    dyv: View,
    dweight: &mut [f64],
    mut dx: Option<(&mut [f64], View)>,
) {
    let hw = sh.hw();
    let patch = sh.patch();
    let mut cols = if sh.k == 1 {
        Vec::new()
    } else {
        vec![0.0; patch * hw]
    };
    let mut dcols = vec![0.0; patch * hw];
    for s in 0..n {
        let xs = xv.at(s, 0, hw);
        let b: &[f64] = if sh.k == 1 {
            &x[xs..xs + patch * hw]
        } else {
            im2col(x, xs, sh, &mut cols);
            &cols
        };
        let g = &dy[dyv.at(s, 0, hw)..][..sh.c_out * hw];
        // dW += dY · colsᵀ
        gemm(sh.c_out, hw, patch, g, (hw, 1), b, (1, hw), dweight, true);
        if let Some((dx_buf, dxv)) = dx.as_mut() {
            // dcols = Wᵀ · dY
            gemm(
                patch,
                sh.c_out,
                hw,
                weight,
                (1, patch),
                g,
                (hw, 1),
                &mut dcols,
                false,
            );
            let start = dxv.at(s, 0, hw);
            if sh.k == 1 {
                for (d, c) in dx_buf[start..start + patch * hw].iter_mut().zip(&dcols) {
                    *d += c;
                }
            } else {
                col2im_add(&dcols, sh, dx_buf, start);
            }
        }
    }
}

/// Normalized input, post-ReLU activation and per-channel `1/σ` for one BN.
#[derive(Debug, Clone, Default)]
pub(crate) struct BnCache {
    pub xhat: Vec<f64>,
    pub a: Vec<f64>,
    pub inv_std: Vec<f64>,
}

/// Statistics of one train-mode batch: mean and biased variance per channel.
#[derive(Debug, Clone)]
pub(crate) struct BatchStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub count: usize,
}

pub(crate) enum BnStats<'a> {
    Batch,
    Running { mean: &'a [f64], var: &'a [f64] },
}

/// BN followed by ReLU; output is dense `[n, c, hw]`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn bn_relu_forward(
    x: &[f64],
    xv: View,
    n: usize,
    c: usize,
    hw: usize,
    gamma: &[f64],
    beta: &[f64],
    stats: BnStats<'_>,
) -> (BnCache, Option<BatchStats>) {
    let count = n * hw;
    let (mean, inv_std, batch) = match stats {
        BnStats::Batch => {
            let mut mean = vec![0.0; c];
            let mut var = vec![0.0; c];
            for ch in 0..c {
                let mut sum = 0.0;
                for s in 0..n {
                    sum += x[xv.at(s, ch, hw)..][..hw].iter().sum::<f64>();
                }
                let m = sum / count as f64;
                let mut sq = 0.0;
                for s in 0..n {
                    sq += x[xv.at(s, ch, hw)..][..hw]
                        .iter()
                        .map(|v| (v - m) * (v - m))
                        .sum::<f64>();
                }
                mean[ch] = m;
                var[ch] = sq / count as f64;
            }
            let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPSILON).sqrt()).collect();
            (mean.clone(), inv_std, Some(BatchStats { mean, var, count }))
        }
        BnStats::Running { mean, var } => (
            mean.to_vec(),
            var.iter().map(|v| 1.0 / (v + BN_EPSILON).sqrt()).collect(),
            None,
        ),
    };
    let mut xhat = vec![0.0; n * c * hw];
    let mut a = vec![0.0; n * c * hw];
    for s in 0..n {
        for ch in 0..c {
            let src = &x[xv.at(s, ch, hw)..][..hw];
            let o = (s * c + ch) * hw;
            let (m, is, g, b) = (mean[ch], inv_std[ch], gamma[ch], beta[ch]);
            for ((xh, av), v) in xhat[o..o + hw].iter_mut().zip(&mut a[o..o + hw]).zip(src) {
                *xh = (v - m) * is;
                *av = (g * *xh + b).max(0.0);
            }
        }
    }
    (BnCache { xhat, a, inv_std }, batch)
}

/// Backward through ReLU and train-mode BN; adds the input gradient into `dx`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn bn_relu_backward(
    cache: &BnCache,
    da: &[f64],
    n: usize,
    c: usize,
    hw: usize,
    gamma: &[f64],
    dgamma: &mut [f64],
    dbeta: &mut [f64],
    dx: &mut [f64],
    dxv: View,
) {
    let count = (n * hw) as f64;
    let mut dy = vec![0.0; hw];
    for ch in 0..c {
        let (mut sg, mut sb) = (0.0, 0.0);
        for s in 0..n {
            let o = (s * c + ch) * hw;
            for p in 0..hw {
                if cache.a[o + p] > 0.0 {
                    sg += da[o + p] * cache.xhat[o + p];
                    sb += da[o + p];
                }
            }
        }
        dgamma[ch] += sg;
        dbeta[ch] += sb;
        let scale = gamma[ch] * cache.inv_std[ch] / count;
        for s in 0..n {
            let o = (s * c + ch) * hw;
            for (p, d) in dy.iter_mut().enumerate() {
                *d = if cache.a[o + p] > 0.0 { da[o + p] } else { 0.0 };
            }
            let dst = &mut dx[dxv.at(s, ch, hw)..][..hw];
            for p in 0..hw {
                dst[p] += scale * (count * dy[p] - sb - cache.xhat[o + p] * sg);
            }
        }
    }
}

/// Non-overlapping `f×f` average pooling with floor cropping.
#[allow(clippy::too_many_arguments)]
pub(crate) fn avg_pool_forward(
    x: &[f64],
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    f: usize,
    y: &mut [f64],
    yv: View,
) {
    let (oh, ow) = (h / f, w / f);
    let norm = 1.0 / (f * f) as f64;
    for s in 0..n {
        for ch in 0..c {
            let src = &x[(s * c + ch) * h * w..][..h * w];
            let dst = &mut y[yv.at(s, ch, oh * ow)..][..oh * ow];
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = 0.0;
                    for dy in 0..f {
                        let row = &src[(oy * f + dy) * w + ox * f..][..f];
                        acc += row.iter().sum::<f64>();
                    }
                    dst[oy * ow + ox] = acc * norm;
                }
            }
        }
    }
}

/// Dense `[n, c, h, w]` input gradient of [`avg_pool_forward`].
#[allow(clippy::too_many_arguments)]
pub(crate) fn avg_pool_backward(
    dy: &[f64],
    dyv: View,
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    f: usize,
) -> Vec<f64> {
    let (oh, ow) = (h / f, w / f);
    let norm = 1.0 / (f * f) as f64;
    let mut dx = vec![0.0; n * c * h * w];
    for s in 0..n {
        for ch in 0..c {
            let src = &dy[dyv.at(s, ch, oh * ow)..][..oh * ow];
            let dst = &mut dx[(s * c + ch) * h * w..][..h * w];
            for oy in 0..oh {
                for ox in 0..ow {
                    let g = src[oy * ow + ox] * norm;
                    for dy in 0..f {
                        dst[(oy * f + dy) * w + ox * f..][..f]
                            .iter_mut()
                            .for_each(|v| *v = g);
                    }
                }
            }
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Literal nested-loop convolution.
    fn conv_naive(x: &[f64], sh: &ConvShape, w: &[f64]) -> Vec<f64> {
        let (h, wd, k) = (sh.h as isize, sh.w as isize, sh.k as isize);
        let p = k / 2;
        let mut out = vec![0.0; sh.c_out * sh.hw()];
        for o in 0..sh.c_out {
            for y in 0..h {
                for xx in 0..wd {
                    let mut acc = 0.0;
                    for i in 0..sh.c_in {
                        for ky in 0..k {
                            for kx in 0..k {
                                let (sy, sx) = (y + ky - p, xx + kx - p);
                                if sy < 0 || sx < 0 || sy >= h || sx >= wd {
                                    continue;
                                }
                                let wi =
                                    ((o * sh.c_in + i) * sh.k + ky as usize) * sh.k + kx as usize;
                                acc += w[wi] * x[(i * sh.h + sy as usize) * sh.w + sx as usize];
                            }
                        }
                    }
                    out[(o * sh.h + y as usize) * sh.w + xx as usize] = acc;
                }
            }
        }
        out
    }

    fn pseudo(n: usize, seed: u64) -> Vec<f64> {
        (0..n)
            .map(|i| (((i as u64 * 2654435761 + seed * 97) % 1000) as f64 - 500.0) / 250.0)
            .collect()
    }

    #[test]
    fn conv_matches_naive() {
        for k in [1, 3] {
            let sh = ConvShape {
                c_in: 3,
                c_out: 2,
                k,
                h: 5,
                w: 7,
            };
            let x = pseudo(sh.c_in * sh.hw(), 1);
            let w = pseudo(sh.c_out * sh.patch(), 2);
            let mut y = vec![0.0; sh.c_out * sh.hw()];
            conv_forward(&x, View::dense(3), 1, &sh, &w, &mut y, View::dense(2));
            let want = conv_naive(&x, &sh, &w);
            for (a, b) in y.iter().zip(&want) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn conv_backward_is_adjoint() {
        // <conv(x), g> = <x, conv_backward_x(g)> = <w, conv_backward_w(g)>
        let sh = ConvShape {
            c_in: 2,
            c_out: 3,
            k: 3,
            h: 4,
            w: 6,
        };
        let x = pseudo(sh.c_in * sh.hw(), 3);
        let w = pseudo(sh.c_out * sh.patch(), 4);
        let g = pseudo(sh.c_out * sh.hw(), 5);
        let y = conv_naive(&x, &sh, &w);
        let lhs: f64 = y.iter().zip(&g).map(|(a, b)| a * b).sum();
        let mut dw = vec![0.0; w.len()];
        let mut dx = vec![0.0; x.len()];
        conv_backward(
            &x,
            View::dense(2),
            1,
            &sh,
            &w,
            &g,
            View::dense(3),
            &mut dw,
            Some((&mut dx, View::dense(2))),
        );
        let via_x: f64 = x.iter().zip(&dx).map(|(a, b)| a * b).sum();
        let via_w: f64 = w.iter().zip(&dw).map(|(a, b)| a * b).sum();
        assert!((lhs - via_x).abs() < 1e-10 * lhs.abs().max(1.0));
        assert!((lhs - via_w).abs() < 1e-10 * lhs.abs().max(1.0));
    }

    #[test]
    fn pool_floor_crop() {
        let x: Vec<f64> = (0..15).map(|v| v as f64).collect(); // 1×1×3×5
        let mut y = vec![0.0; 2];
        avg_pool_forward(&x, 1, 1, 3, 5, 2, &mut y, View::dense(1));
        assert_eq!(
            y,
            vec![(0.0 + 1.0 + 5.0 + 6.0) / 4.0, (2.0 + 3.0 + 7.0 + 8.0) / 4.0]
        );
        let dx = avg_pool_backward(&[4.0, 8.0], View::dense(1), 1, 1, 3, 5, 2);
        assert_eq!(&dx[..5], &[1.0, 1.0, 2.0, 2.0, 0.0]);
        assert!(dx[10..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn batch_norm_zero_mean_unit_var() {
        let x = pseudo(2 * 3 * 10, 7);
        let (cache, stats) = bn_relu_forward(
            &x,
            View::dense(3),
            2,
            3,
            10,
            &[1.0; 3],
            &[0.0; 3],
            BnStats::Batch,
        );
        let stats = stats.unwrap();
        assert_eq!(stats.count, 20);
        for ch in 0..3 {
            let vals: Vec<f64> = (0..2)
                .flat_map(|s| cache.xhat[(s * 3 + ch) * 10..][..10].to_vec())
                .collect();
            let m = vals.iter().sum::<f64>() / 20.0;
            let v = vals.iter().map(|x| x * x).sum::<f64>() / 20.0;
            assert!(m.abs() < 1e-12);
            assert!((v - stats.var[ch] / (stats.var[ch] + BN_EPSILON)).abs() < 1e-12);
        }
    }
}
