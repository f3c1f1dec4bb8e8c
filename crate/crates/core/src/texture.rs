//! Texture attention: a CNN whose first-layer filters are constrained to the
//! Gabor family. The five Gabor parameters per filter are learned by
//! backpropagation; kernels are regenerated from them on every forward pass,
//! so the constraint is structural rather than a regularizer.

use crate::error::{Error, Result};
use crate::params::{uniform_fan_in, Binding, ParamStore};
use crate::tensor::{Conv2dSpec, Tape, Var};
use ndarray::{Array2, ArrayD, IxDyn};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Parameters of one Gabor filter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaborParams {
    /// Orientation in radians.
    pub theta: f64,
    /// Wavelength of the sinusoid in pixels.
    pub lambda: f64,
    /// Phase offset in radians.
    pub psi: f64,
    /// Gaussian envelope standard deviation in pixels.
    pub sigma: f64,
    /// Spatial aspect ratio of the envelope.
    pub gamma: f64,
    pub kernel_size: usize,
}

impl GaborParams {
    pub fn validate(&self) -> Result<()> {
        if self.sigma <= 0.0 || self.lambda <= 0.0 || self.gamma <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "gabor parameters must be positive: sigma={}, lambda={}, gamma={}",
                self.sigma, self.lambda, self.gamma
            )));
        }
        if self.kernel_size % 2 == 0 {
            return Err(Error::InvalidInput(format!(
                "gabor kernel size must be odd, got {}",
                self.kernel_size
            )));
        }
        Ok(())
    }
}

/// Evaluates the Gabor function on a centered `kernel_size x kernel_size`
/// grid:
///
/// `k(x, y) = exp(-(x'^2 + gamma^2 y'^2) / (2 sigma^2)) * cos(2 pi x' / lambda + psi)`
///
/// with `x' = x cos(theta) + y sin(theta)`, `y' = -x sin(theta) + y cos(theta)`.
/// Rows index y, columns index x.
pub fn gabor_kernel(p: &GaborParams) -> Array2<f64> {
    let ks = p.kernel_size;
    let half = (ks / 2) as isize;
    let (st, ct) = p.theta.sin_cos();
    let mut out = Array2::<f64>::zeros((ks, ks));
    for ky in 0..ks {
        for kx in 0..ks {
            let x = (kx as isize - half) as f64;
            let y = (ky as isize - half) as f64;
            let xp = x * ct + y * st;
            let yp = -x * st + y * ct;
            let env = (-(xp * xp + p.gamma * p.gamma * yp * yp) / (2.0 * p.sigma * p.sigma)).exp();
            let arg = 2.0 * std::f64::consts::PI * xp / p.lambda + p.psi;
            out[[ky, kx]] = env * arg.cos();
        }
    }
    out
}

/// Size and range configuration of the texture attention network.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TextureConfig {
    pub n_filters: usize,
    pub kernel_size: usize,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub head_width: usize,
}

impl Default for TextureConfig {
    fn default() -> Self {
        Self {
            n_filters: 32,
            kernel_size: 11,
            lambda_min: 2.0,
            lambda_max: 16.0,
            head_width: 16,
        }
    }
}

impl TextureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_filters == 0 || self.head_width == 0 {
            return Err(Error::Config("texture filter counts must be positive".into()));
        }
        if self.kernel_size % 2 == 0 {
            return Err(Error::Config("texture kernel size must be odd".into()));
        }
        if self.lambda_min <= 0.0 || self.lambda_max < self.lambda_min {
            return Err(Error::Config(format!(
                "invalid wavelength range [{}, {}]",
                self.lambda_min, self.lambda_max
            )));
        }
        Ok(())
    }
}

/// Initial filter bank: orientations evenly spaced over `[0, pi)`, wavelengths
/// log-spaced over the configured range, phases jittered from the seeded rng.
/// `sigma` tracks the wavelength; `gamma` starts isotropic.
pub fn init_filter_bank(
    n_filters: usize,
    config: &TextureConfig,
    rng: &mut ChaCha8Rng,
) -> Vec<GaborParams> {
    assert!(n_filters >= 1);
    let mut bank = Vec::with_capacity(n_filters);
    for i in 0..n_filters {
        let theta = i as f64 * std::f64::consts::PI / n_filters as f64;
        let lambda = if n_filters == 1 {
            config.lambda_min
        } else {
            let t = i as f64 / (n_filters - 1) as f64;
            (config.lambda_min.ln() + t * (config.lambda_max / config.lambda_min).ln()).exp()
        };
        let psi = rng.random_range(0.0..std::f64::consts::PI);
        bank.push(GaborParams {
            theta,
            lambda,
            psi,
            sigma: lambda / 2.0,
            gamma: 1.0,
            kernel_size: config.kernel_size,
        });
    }
    bank
}

const PARAM_FIELDS: [&str; 5] = [
    "texture/theta",
    "texture/lambda",
    "texture/psi",
    "texture/sigma",
    "texture/gamma",
];

/// Inserts the texture network's learnable tensors into `params`.
pub fn init_params(params: &mut ParamStore, config: &TextureConfig, rng: &mut ChaCha8Rng) {
    let bank = init_filter_bank(config.n_filters, config, rng);
    let n = bank.len();
    let mut fields = [
        ArrayD::<f64>::zeros(IxDyn(&[n])),
        ArrayD::<f64>::zeros(IxDyn(&[n])),
        ArrayD::<f64>::zeros(IxDyn(&[n])),
        ArrayD::<f64>::zeros(IxDyn(&[n])),
        ArrayD::<f64>::zeros(IxDyn(&[n])),
    ];
    for (i, p) in bank.iter().enumerate() {
        fields[0][[i]] = p.theta;
        fields[1][[i]] = p.lambda;
        fields[2][[i]] = p.psi;
        fields[3][[i]] = p.sigma;
        fields[4][[i]] = p.gamma;
    }
    for (name, value) in PARAM_FIELDS.iter().zip(fields.into_iter()) {
        params.insert(name, value);
    }

    let hw = config.head_width;
    let fan1 = config.n_filters * 9;
    params.insert(
        "texture/head1_w",
        uniform_fan_in(&[hw, config.n_filters, 3, 3], fan1, rng),
    );
    params.insert("texture/head1_b", ArrayD::zeros(IxDyn(&[hw])));
    params.insert("texture/head2_w", uniform_fan_in(&[1, hw, 1, 1], hw, rng));
    params.insert("texture/head2_b", ArrayD::zeros(IxDyn(&[1])));
}

/// Reads the current filter bank back out of the parameter store.
pub fn filter_bank_from_params(params: &ParamStore, kernel_size: usize) -> Vec<GaborParams> {
    let n = params.get("texture/theta").len();
    (0..n)
        .map(|i| GaborParams {
            theta: params.get("texture/theta")[[i]],
            lambda: params.get("texture/lambda")[[i]],
            psi: params.get("texture/psi")[[i]],
            sigma: params.get("texture/sigma")[[i]],
            gamma: params.get("texture/gamma")[[i]],
            kernel_size,
        })
        .collect()
}

/// After an optimizer step, pulls sigma/lambda/gamma back above small positive
/// floors so the Gabor invariants keep holding under gradient noise.
pub fn enforce_param_floors(params: &mut ParamStore) {
    for name in ["texture/lambda", "texture/sigma", "texture/gamma"] {
        for v in params.get_mut(name).iter_mut() {
            if *v < 0.1 {
                *v = 0.1;
            }
        }
    }
}

/// Forward pass of the texture attention module on one grayscale image
/// (`1 x H x W` leaf): Gabor-constrained conv -> 3x3 conv head -> 1x1
/// reduction -> sigmoid -> bilinear upsample to the input resolution.
/// Returns the attention map as an `H x W` variable with entries in `[0, 1]`.
pub fn texture_attention(
    tape: &mut Tape,
    binding: &Binding,
    config: &TextureConfig,
    gray: Var,
    out_h: usize,
    out_w: usize,
) -> Var {
    let kernels = tape.gabor_kernels(
        [
            binding.var("texture/theta"),
            binding.var("texture/lambda"),
            binding.var("texture/psi"),
            binding.var("texture/sigma"),
            binding.var("texture/gamma"),
        ],
        config.kernel_size,
    );
    let pad = config.kernel_size / 2;
    let x = tape.conv2d(
        gray,
        kernels,
        None,
        Conv2dSpec {
            stride: 1,
            padding: pad,
            dilation: 1,
        },
    );
    let x = tape.relu(x);
    let x = tape.conv2d(
        x,
        binding.var("texture/head1_w"),
        Some(binding.var("texture/head1_b")),
        Conv2dSpec {
            stride: 1,
            padding: 1,
            dilation: 1,
        },
    );
    let x = tape.relu(x);
    let x = tape.conv2d(
        x,
        binding.var("texture/head2_w"),
        Some(binding.var("texture/head2_b")),
        Conv2dSpec::default(),
    );
    let x = tape.sigmoid(x);
    let x = tape.upsample_bilinear(x, out_h, out_w);
    tape.reshape(x, &[out_h, out_w])
}

/// Converts an RGB image in `[0, 1]` (`3 x H x W`) to the luminance channel
/// the Gabor layer sees.
pub fn to_grayscale(rgb: &ArrayD<f64>) -> ArrayD<f64> {
    let shape = rgb.shape();
    assert_eq!(shape[0], 3, "expected 3 x H x W");
    let (h, w) = (shape[1], shape[2]);
    let mut out = ArrayD::<f64>::zeros(IxDyn(&[1, h, w]));
    for y in 0..h {
        for x in 0..w {
            out[[0, y, x]] =
                0.299 * rgb[[0, y, x]] + 0.587 * rgb[[1, y, x]] + 0.114 * rgb[[2, y, x]];
        }
    }
    out
}
