use super::Scalogram;

pub const DEFAULT_IMAGE_HEIGHT: usize = 64;
pub const DEFAULT_IMAGE_WIDTH: usize = 256;

/// Single-channel model input, row-major `height × width`, values in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelImage {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl ModelImage {
    pub fn channels(&self) -> usize {
        1
    }

    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    /// Binary (P5) portable graymap, 8 bits per pixel.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(
            self.data
                .iter()
                .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
        );
        out
    }
}

/// Block-averages time to `width`, interpolates scales to `height`, applies
/// `log1p` and a per-image min–max to [0, 1]. Constant input maps to zeros.
pub fn to_model_input(scalogram: &Scalogram, height: usize, width: usize) -> ModelImage {
    let (n_scales, n_time) = (scalogram.n_scales, scalogram.n_time);
    if n_scales == 0 || n_time == 0 || height == 0 || width == 0 {
        return ModelImage {
            height,
            width,
            data: vec![0.0; height * width],
        };
    }

    let blocks: Vec<(usize, usize)> = (0..width)
        .map(|j| {
            let start = (j * n_time / width).min(n_time - 1);
            let end = ((j + 1) * n_time / width).max(start + 1).min(n_time);
            (start, end)
        })
        .collect();
    let pooled: Vec<f64> = (0..n_scales)
        .flat_map(|r| {
            let row = scalogram.row(r);
            blocks
                .iter()
                .map(move |&(a, b)| row[a..b].iter().sum::<f64>() / (b - a) as f64)
        })
        .collect();

    let mut data = Vec::with_capacity(height * width);
    for r in 0..height {
        let pos = if height == 1 || n_scales == 1 {
            0.0
        } else {
            r as f64 * (n_scales - 1) as f64 / (height - 1) as f64
        };
        let lo = (pos.floor() as usize).min(n_scales - 1);
        let hi = (lo + 1).min(n_scales - 1);
        let frac = pos - lo as f64;
        for c in 0..width {
            let a = pooled[lo * width + c];
            let b = pooled[hi * width + c];
            let v = if frac == 0.0 { a } else { a + (b - a) * frac };
            data.push(v.ln_1p());
        }
    }

    let min = data.iter().copied().fold(f64::INFINITY, f64::min);
    let max = data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    if range > 0.0 && range.is_finite() {
        for v in &mut data {
            *v = (*v - min) / range;
        }
    } else {
        data.iter_mut().for_each(|v| *v = 0.0);
    }
    ModelImage {
        height,
        width,
        data,
    }
}
