use rand::Rng;

use crate::cdp::CdpMethod;
use crate::error::{Error, Result};
use crate::model::HyperParams;
use crate::mri::{
    assemble_operators, bilinear_resize, lasso_init, make_mask, observe, sparsify_wavelet, GrayImage, LassoOptions,
    MriOperators,
};
use crate::orchestrator::{alternating_minimize, AltOptions, AltOutcome, Backend};

/// A sparsified target image and its undersampled k-space problem.
#[derive(Debug, Clone)]
pub struct MriProblem {
    pub target: GrayImage,
    pub ops: MriOperators,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MriSetup {
    pub size: usize,
    pub sparseness: f64,
    pub compression: f64,
    pub gamma: f64,
}

impl Default for MriSetup {
    fn default() -> Self {
        MriSetup {
            size: 64,
            sparseness: 0.212,
            compression: 0.4,
            gamma: 1e-4,
        }
    }
}

impl MriSetup {
    /// Number of sampled k-space points, `round(compression · size²)`.
    pub fn samples(&self) -> usize {
        (self.compression * (self.size * self.size) as f64).round() as usize
    }
}

/// Resizes and sparsifies `image` once; reuse the result across masks.
pub fn prepare_target(image: &GrayImage, setup: &MriSetup) -> Result<GrayImage> {
    if !setup.size.is_power_of_two() {
        return Err(Error::Config(format!("MRI size must be a power of two, got {}", setup.size)));
    }
    let resized = if image.pixels.dim() == (setup.size, setup.size) {
        image.clone()
    } else {
        bilinear_resize(image, setup.size, setup.size)?
    };
    sparsify_wavelet(&resized, setup.sparseness)
}

pub fn build_problem(target: &GrayImage, setup: &MriSetup, mask_seed: u64) -> Result<MriProblem> {
    let (h, w) = target.pixels.dim();
    let mask = make_mask(h, w, setup.samples(), mask_seed)?;
    let y = observe(&mask, target)?;
    Ok(MriProblem {
        target: target.clone(),
        ops: assemble_operators(&mask, setup.gamma, &y)?,
    })
}

impl MriProblem {
    /// Pixel RMSE of the image synthesized from wavelet coefficients.
    pub fn rmse(&self, theta: &[f64]) -> Result<f64> {
        self.ops.synthesize(theta)?.rmse(&self.target)
    }

    /// LASSO on the data term alone (no smoothing).
    pub fn lasso(&self, lambda_l1: f64) -> Result<Vec<f64>> {
        let plain = self.ops.without_smoothing();
        let opts = LassoOptions {
            // ‖S F Ψᵀ‖₂ = 1
            lipschitz: Some(1.0),
            ..Default::default()
        };
        Ok(lasso_init(&plain, lambda_l1, None, opts)?.x)
    }

    pub fn reconstruct<G: Rng + ?Sized>(
        &self,
        backend: Backend,
        params: &HyperParams,
        r_init: &[f64],
        rng: &mut G,
    ) -> Result<AltOutcome> {
        let opts = AltOptions {
            method: CdpMethod::ConjugateGradient,
            ..Default::default()
        };
        alternating_minimize(&self.ops, backend, params, r_init, None, &opts, rng)
    }
}

/// MRI overrides on top of `base`: fixed threshold `η`, 12 alternations,
/// `d = 0.6`, and `K = 0.01` (Positive-P) or `0.1` (mean field).
pub fn mri_params(base: &HyperParams, backend: Backend, eta: f64) -> HyperParams {
    HyperParams {
        eta_init: eta,
        eta_end: eta,
        velo: 11,
        d: 0.6,
        k: if backend == Backend::PositiveP { 0.01 } else { 0.1 },
        ..*base
    }
}

/// Signal estimate `σ ∘ R` from an alternation outcome.
pub fn masked_signal(out: &AltOutcome) -> Vec<f64> {
    out.r.iter().zip(&out.sigma).map(|(&r, &s)| if s == 1 { r } else { 0.0 }).collect()
}
