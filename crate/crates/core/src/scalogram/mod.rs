//! Continuous wavelet transform of a lead-I segment into a scales × time
//! magnitude image.

mod cwt;
mod grid;
mod image;
mod morlet;

pub use cwt::{cwt, cwt_complex, cwt_direct, ComplexScalogram, CwtPlan, Scalogram};
pub use grid::{
    pseudo_frequency, scale_grid, ScaleGrid, DEFAULT_F_MAX_HZ, DEFAULT_F_MIN_HZ, DEFAULT_N_SCALES,
};
pub use image::{to_model_input, ModelImage, DEFAULT_IMAGE_HEIGHT, DEFAULT_IMAGE_WIDTH};
pub use morlet::{morlet, DEFAULT_OMEGA0};

#[derive(Debug, thiserror::Error)]
pub enum ScalogramError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("sample {index} is not finite")]
    NonFinite { index: usize },
}
