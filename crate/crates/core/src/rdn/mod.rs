//! Residual dense network for single-channel deblurring.
//!
//! Layout (width `G`, `D` blocks of `C` layers):
//!
//! ```text
//! F₋₁ = relu(sfe1 ⊛ I)                      1 → G, 3x3
//! F₀  = relu(sfe2 ⊛ F₋₁)                    G → G, 3x3
//! F_d = F_{d-1} + fusion_d([F_{d-1}, F_{d,1}, …, F_{d,C}])
//!       with F_{d,c} = relu(conv_{d,c} ⊛ [F_{d-1}, F_{d,1}, …, F_{d,c-1}])
//! F_GR = F₋₁ + gff([F₁, …, F_D])            1x1, no activation
//! out  = clamp(relu(output ⊛ F_GR), 0, 1)   G → 1, 3x3
//! ```
//!
//! The up-scaling slot before the output convolution is the identity: input
//! and output tiles have the same size. All 3x3 convolutions use
//! replicate-edge "same" padding.

pub(crate) mod forward;
pub(crate) mod layers;
mod weights;

pub use forward::{forward, forward_volume};
pub use layers::FeatureMap;
pub use weights::{load_weights, save_weights, WEIGHTS_MAGIC, WEIGHTS_VERSION};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Network shape: `blocks` RDBs (D) of `layers` 3x3 convolutions (C), every
/// feature map `width` (G) channels wide.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct RdnConfig {
    pub blocks: usize,
    pub layers: usize,
    pub width: usize,
}

impl Default for RdnConfig {
    fn default() -> Self {
        RdnConfig {
            blocks: 4,
            layers: 5,
            width: 32,
        }
    }
}

impl RdnConfig {
    /// Smallest useful network, for gradient checks and desk-scale training.
    pub fn tiny() -> Self {
        RdnConfig {
            blocks: 1,
            layers: 2,
            width: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.blocks == 0 || self.layers == 0 || self.width == 0 {
            return Err(Error::InvalidArgument(format!(
                "network shape must be positive, got D={} C={} G={}",
                self.blocks, self.layers, self.width
            )));
        }
        Ok(())
    }
}

/// Weights `[out][in][k][k]` and one bias per output channel.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvParams {
    pub out_channels: usize,
    pub in_channels: usize,
    pub kernel_size: usize,
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
}

impl ConvParams {
    pub fn zeros(out_channels: usize, in_channels: usize, kernel_size: usize) -> Self {
        ConvParams {
            out_channels,
            in_channels,
            kernel_size,
            weight: vec![0.0; out_channels * in_channels * kernel_size * kernel_size],
            bias: vec![0.0; out_channels],
        }
    }

    pub fn fan_in(&self) -> usize {
        self.in_channels * self.kernel_size * self.kernel_size
    }

    pub fn parameter_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    fn check(&self, name: &str, out: usize, inp: usize, k: usize) -> Result<()> {
        if (self.out_channels, self.in_channels, self.kernel_size) != (out, inp, k) {
            return Err(Error::DimensionMismatch(format!(
                "{name}: expected {out}x{inp}x{k}x{k}, found {}x{}x{}x{}",
                self.out_channels, self.in_channels, self.kernel_size, self.kernel_size
            )));
        }
        if self.weight.len() != out * inp * k * k || self.bias.len() != out {
            return Err(Error::DimensionMismatch(format!(
                "{name}: tensor lengths do not match declared shape"
            )));
        }
        if self.weight.iter().chain(&self.bias).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("{name} holds NaN or inf")));
        }
        Ok(())
    }

    fn zero_out(&mut self) {
        self.weight.fill(0.0);
        self.bias.fill(0.0);
    }
}

/// One residual dense block: `layers` growing 3x3 convolutions and a 1x1
/// local fusion back to `width` channels.
#[derive(Clone, Debug, PartialEq)]
pub struct RdbParams {
    pub convs: Vec<ConvParams>,
    pub fusion: ConvParams,
}

impl RdbParams {
    /// Zeroes every weight and bias, turning the block into the identity.
    pub fn zero_out(&mut self) {
        self.convs.iter_mut().for_each(ConvParams::zero_out);
        self.fusion.zero_out();
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ModelMeta {
    /// Blur σ (pixels) of the data the model was trained on.
    pub trained_sigma: f32,
    pub run_id: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RdnModel {
    pub config: RdnConfig,
    pub sfe1: ConvParams,
    pub sfe2: ConvParams,
    pub rdbs: Vec<RdbParams>,
    pub gff: ConvParams,
    pub output: ConvParams,
    pub meta: ModelMeta,
}

impl RdnModel {
    /// All-zero model of the given shape.
    pub fn zeros(config: RdnConfig) -> Result<Self> {
        config.validate()?;
        let g = config.width;
        let rdbs = (0..config.blocks)
            .map(|_| RdbParams {
                convs: (0..config.layers)
                    .map(|c| ConvParams::zeros(g, g * (c + 1), 3))
                    .collect(),
                fusion: ConvParams::zeros(g, g * (config.layers + 1), 1),
            })
            .collect();
        Ok(RdnModel {
            config,
            sfe1: ConvParams::zeros(g, 1, 3),
            sfe2: ConvParams::zeros(g, g, 3),
            rdbs,
            gff: ConvParams::zeros(g, g * config.blocks, 1),
            output: ConvParams::zeros(1, g, 3),
            meta: ModelMeta::default(),
        })
    }

    /// Convolutions in canonical order, with their names.
    pub fn convs(&self) -> Vec<(String, &ConvParams)> {
        let mut out = vec![("sfe1".to_string(), &self.sfe1), ("sfe2".to_string(), &self.sfe2)];
        for (d, rdb) in self.rdbs.iter().enumerate() {
            for (c, conv) in rdb.convs.iter().enumerate() {
                out.push((format!("rdb{d}.conv{c}"), conv));
            }
            out.push((format!("rdb{d}.fusion"), &rdb.fusion));
        }
        out.push(("gff".to_string(), &self.gff));
        out.push(("output".to_string(), &self.output));
        out
    }

    pub fn convs_mut(&mut self) -> Vec<&mut ConvParams> {
        let mut out = vec![&mut self.sfe1, &mut self.sfe2];
        for rdb in &mut self.rdbs {
            out.extend(rdb.convs.iter_mut());
            out.push(&mut rdb.fusion);
        }
        out.push(&mut self.gff);
        out.push(&mut self.output);
        out
    }

    /// Flat parameter tensors (weight, bias per convolution) in canonical
    /// order. Gradients and optimizer state use the same order.
    pub fn tensors(&self) -> Vec<(String, &[f32])> {
        self.convs()
            .into_iter()
            .flat_map(|(name, c)| {
                [
                    (format!("{name}.weight"), c.weight.as_slice()),
                    (format!("{name}.bias"), c.bias.as_slice()),
                ]
            })
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f32]> {
        self.convs_mut()
            .into_iter()
            .flat_map(|c| [c.weight.as_mut_slice(), c.bias.as_mut_slice()])
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.convs().iter().map(|(_, c)| c.parameter_count()).sum()
    }

    /// Verifies every layer's channel algebra against the configuration.
    pub fn validate(&self) -> Result<()> {
        let cfg = self.config;
        cfg.validate()?;
        let g = cfg.width;
        if self.rdbs.len() != cfg.blocks {
            return Err(Error::DimensionMismatch(format!(
                "{} blocks for D={}",
                self.rdbs.len(),
                cfg.blocks
            )));
        }
        self.sfe1.check("sfe1", g, 1, 3)?;
        self.sfe2.check("sfe2", g, g, 3)?;
        for (d, rdb) in self.rdbs.iter().enumerate() {
            if rdb.convs.len() != cfg.layers {
                return Err(Error::DimensionMismatch(format!(
                    "rdb{d} has {} layers for C={}",
                    rdb.convs.len(),
                    cfg.layers
                )));
            }
            for (c, conv) in rdb.convs.iter().enumerate() {
                conv.check(&format!("rdb{d}.conv{c}"), g, g * (c + 1), 3)?;
            }
            rdb.fusion
                .check(&format!("rdb{d}.fusion"), g, g * (cfg.layers + 1), 1)?;
        }
        self.gff.check("gff", g, g * cfg.blocks, 1)?;
        self.output.check("output", 1, g, 3)?;
        Ok(())
    }
}

/// Number of parameters of a network with the given shape.
pub fn parameter_count(config: &RdnConfig) -> usize {
    let (d, c, g) = (config.blocks, config.layers, config.width);
    let conv = |out: usize, inp: usize, k: usize| out * inp * k * k + out;
    let block: usize = (1..=c).map(|i| conv(g, g * i, 3)).sum::<usize>() + conv(g, g * (c + 1), 1);
    conv(g, 1, 3) + conv(g, g, 3) + d * block + conv(g, g * d, 1) + conv(1, g, 3)
}

/// He-initialized model: weights `N(0, 2/fan_in)`, biases zero.
/// Deterministic for a given seed.
pub fn init_model(seed: u64, blocks: usize, layers: usize, width: usize) -> Result<RdnModel> {
    let mut model = RdnModel::zeros(RdnConfig {
        blocks,
        layers,
        width,
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for conv in model.convs_mut() {
        let std = (2.0 / conv.fan_in() as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("positive std");
        for w in conv.weight.iter_mut() {
            *w = normal.sample(&mut rng) as f32;
        }
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_model() {
        let a = init_model(7, 2, 3, 4).unwrap();
        assert_eq!(a, init_model(7, 2, 3, 4).unwrap());
        assert_ne!(a, init_model(8, 2, 3, 4).unwrap());
    }

    #[test]
    fn he_std_for_32_channel_3x3() {
        let model = init_model(1, 4, 5, 32).unwrap();
        let w = &model.sfe2.weight;
        let n = w.len() as f64;
        let mean = w.iter().map(|&v| v as f64).sum::<f64>() / n;
        let std = (w.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n).sqrt();
        let expected = (2.0f64 / (32.0 * 9.0)).sqrt();
        assert!((expected - 0.0833).abs() < 1e-4);
        // 9216 samples: standard error of the std estimate is about 0.7%.
        assert!((std - expected).abs() / expected < 0.03, "{std}");
        assert!(model.sfe2.bias.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn default_parameter_count_matches_hand_count() {
        // sfe1: 32·1·9 + 32 = 320; sfe2: 32·32·9 + 32 = 9248.
        // RDB convs with in = 32, 64, 96, 128, 160: 9216·(1+2+3+4+5) + 5·32 = 138400;
        // fusion 192 → 32 (1x1): 6144 + 32 = 6176; block total 144576, four blocks 578304.
        // gff 128 → 32: 4096 + 32 = 4128; output 32 → 1: 288 + 1 = 289.
        let hand = 320 + 9248 + 4 * 144_576 + 4128 + 289;
        assert_eq!(hand, 592_289);
        assert_eq!(parameter_count(&RdnConfig::default()), hand);
        let model = RdnModel::zeros(RdnConfig::default()).unwrap();
        assert_eq!(model.parameter_count(), hand);
        assert_eq!(model.tensors().len(), 2 * (2 + 4 * 6 + 2));
    }

    #[test]
    fn shape_check_catches_mismatches() {
        let mut model = init_model(3, 2, 2, 3).unwrap();
        model.validate().unwrap();
        model.rdbs[1].fusion = ConvParams::zeros(3, 6, 1);
        assert!(matches!(model.validate(), Err(Error::DimensionMismatch(_))));
        let mut model = init_model(3, 2, 2, 3).unwrap();
        model.output.bias[0] = f32::NAN;
        assert!(matches!(model.validate(), Err(Error::NonFinite(_))));
        assert!(init_model(0, 0, 1, 1).is_err());
    }
}
