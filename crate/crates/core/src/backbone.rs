//! Dense per-pixel feature extraction. Two architectures sit behind one
//! contract: a modified VGG-16 (pool4 stride 1, dilated block 5) for full
//! runs and a three-layer CNN for desk-scale work. Both return features
//! bilinearly upsampled to the input resolution.

use crate::error::{Error, Result};
use crate::params::{uniform_fan_in, Binding, ParamStore};
use crate::tensor::{Conv2dSpec, Tape, Var};
use ndarray::{ArrayD, IxDyn};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Architecture {
    ReferenceVgg16,
    TinyCnn,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct BackboneConfig {
    pub architecture: Architecture,
    pub pretrained: bool,
    /// Dilation applied to the block-5 convolutions of the VGG variant.
    pub dilation_block5: usize,
    /// Stride of the fourth max-pool; 1 keeps block 5 at 1/8 resolution.
    pub stride_pool4: usize,
    /// Embedding width of the tiny architecture.
    pub tiny_width: usize,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        Self {
            architecture: Architecture::ReferenceVgg16,
            pretrained: false,
            dilation_block5: 2,
            stride_pool4: 1,
            tiny_width: 16,
        }
    }
}

impl BackboneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dilation_block5 < 1 {
            return Err(Error::Config("dilation_block5 must be >= 1".into()));
        }
        if !matches!(self.stride_pool4, 1 | 2) {
            return Err(Error::Config("stride_pool4 must be 1 or 2".into()));
        }
        if self.tiny_width == 0 {
            return Err(Error::Config("tiny_width must be positive".into()));
        }
        Ok(())
    }

    /// Embedding width D of the produced feature maps.
    pub fn embedding_width(&self) -> usize {
        match self.architecture {
            Architecture::ReferenceVgg16 => 512,
            Architecture::TinyCnn => self.tiny_width,
        }
    }

    /// Total downsampling factor; input sides must be divisible by this.
    pub fn total_stride(&self) -> usize {
        match self.architecture {
            Architecture::ReferenceVgg16 => 8 * self.stride_pool4,
            Architecture::TinyCnn => 2,
        }
    }
}

const VGG_BLOCKS: [(usize, usize); 5] = [(64, 2), (128, 2), (256, 3), (512, 3), (512, 3)];

/// Inserts the backbone's learnable tensors into `params`.
pub fn init_params(params: &mut ParamStore, config: &BackboneConfig, rng: &mut ChaCha8Rng) {
    match config.architecture {
        Architecture::ReferenceVgg16 => {
            let mut in_ch = 3;
            for (block, (width, convs)) in VGG_BLOCKS.iter().enumerate() {
                for conv in 0..*convs {
                    let name = format!("backbone/b{}c{}", block + 1, conv + 1);
                    params.insert(
                        &format!("{name}_w"),
                        uniform_fan_in(&[*width, in_ch, 3, 3], in_ch * 9, rng),
                    );
                    params.insert(&format!("{name}_b"), ArrayD::zeros(IxDyn(&[*width])));
                    in_ch = *width;
                }
            }
        }
        Architecture::TinyCnn => {
            let d = config.tiny_width;
            let mid = d.max(8);
            params.insert(
                "backbone/t1_w",
                uniform_fan_in(&[8, 3, 3, 3], 27, rng),
            );
            params.insert("backbone/t1_b", ArrayD::zeros(IxDyn(&[8])));
            params.insert(
                "backbone/t2_w",
                uniform_fan_in(&[mid, 8, 3, 3], 72, rng),
            );
            params.insert("backbone/t2_b", ArrayD::zeros(IxDyn(&[mid])));
            params.insert(
                "backbone/t3_w",
                uniform_fan_in(&[d, mid, 3, 3], mid * 9, rng),
            );
            params.insert("backbone/t3_b", ArrayD::zeros(IxDyn(&[d])));
        }
    }
}

/// Checks the divisibility precondition for `image` of size `h x w`.
pub fn check_input_size(config: &BackboneConfig, h: usize, w: usize) -> Result<()> {
    let stride = config.total_stride();
    if h % stride != 0 || w % stride != 0 {
        return Err(Error::InvalidInput(format!(
            "input {h}x{w} not divisible by backbone stride {stride}"
        )));
    }
    Ok(())
}

/// Forward pass producing a `D x H x W` feature map at the input resolution.
/// `image` must be a `3 x H x W` leaf already on the tape.
pub fn extract_features(
    tape: &mut Tape,
    binding: &Binding,
    config: &BackboneConfig,
    image: Var,
) -> Result<Var> {
    let shape = tape.value(image).shape().to_vec();
    if shape.len() != 3 || shape[0] != 3 {
        return Err(Error::InvalidInput(format!(
            "backbone expects 3 x H x W input, got {shape:?}"
        )));
    }
    let (h, w) = (shape[1], shape[2]);
    check_input_size(config, h, w)?;

    let pad1 = Conv2dSpec {
        stride: 1,
        padding: 1,
        dilation: 1,
    };
    let features = match config.architecture {
        Architecture::ReferenceVgg16 => {
            let mut x = image;
            for (block, (_, convs)) in VGG_BLOCKS.iter().enumerate() {
                let spec = if block == 4 {
                    Conv2dSpec {
                        stride: 1,
                        padding: config.dilation_block5,
                        dilation: config.dilation_block5,
                    }
                } else {
                    pad1
                };
                for conv in 0..*convs {
                    let name = format!("backbone/b{}c{}", block + 1, conv + 1);
                    x = tape.conv2d(
                        x,
                        binding.var(&format!("{name}_w")),
                        Some(binding.var(&format!("{name}_b"))),
                        spec,
                    );
                    x = tape.relu(x);
                }
                match block {
                    0 | 1 | 2 => x = tape.max_pool2d(x, 2, 2, 0),
                    3 => {
                        if config.stride_pool4 == 2 {
                            x = tape.max_pool2d(x, 2, 2, 0);
                        } else {
                            // Size-preserving pool: 3x3 window, stride 1, pad 1.
                            x = tape.max_pool2d(x, 3, 1, 1);
                        }
                    }
                    _ => {}
                }
            }
            x
        }
        Architecture::TinyCnn => {
            let mut x = tape.conv2d(
                image,
                binding.var("backbone/t1_w"),
                Some(binding.var("backbone/t1_b")),
                pad1,
            );
            x = tape.relu(x);
            x = tape.max_pool2d(x, 2, 2, 0);
            x = tape.conv2d(
                x,
                binding.var("backbone/t2_w"),
                Some(binding.var("backbone/t2_b")),
                pad1,
            );
            x = tape.relu(x);
            x = tape.conv2d(
                x,
                binding.var("backbone/t3_w"),
                Some(binding.var("backbone/t3_b")),
                pad1,
            );
            x
        }
    };
    Ok(tape.upsample_bilinear(features, h, w))
}
