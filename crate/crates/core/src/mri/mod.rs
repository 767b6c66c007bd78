//! Sparse MRI: images, 2-D Haar and DFT transforms, k-space undersampling,
//! the wavelet-domain quadratic form and a LASSO warm start.

mod fourier;
mod haar;
mod image;
mod lasso;
mod mask;
mod operators;
mod pipeline;

pub use fourier::{dft2, idft2, Fft2};
pub use haar::{haar2_forward, haar2_inverse, sparsify_wavelet};
pub use image::{bilinear_resize, phantom, GrayImage};
pub use lasso::{lasso_init, LassoOptions, LassoOutcome};
pub use mask::{make_mask, SamplingMask};
pub use operators::{assemble_explicit, assemble_operators, observe, MriOperators, EXPLICIT_MAX_N};
pub use pipeline::{build_problem, masked_signal, mri_params, prepare_target, MriProblem, MriSetup};
