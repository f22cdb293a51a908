use rayon::prelude::*;

use super::layers::{conv_forward, FeatureMap};
use super::RdnModel;
use crate::error::{Error, Result};
use crate::image::{Image, VolumeStack};

/// Every intermediate activation of one forward pass, kept for backprop.
pub(crate) struct ForwardCache {
    pub input: FeatureMap,
    /// F₋₁ (post-ReLU).
    pub shallow1: FeatureMap,
    /// `features[0]` is F₀, `features[d]` the output of block d.
    pub features: Vec<FeatureMap>,
    /// Post-ReLU outputs of each block's 3x3 layers.
    pub locals: Vec<Vec<FeatureMap>>,
    pub global_residual: FeatureMap,
    /// Output convolution before ReLU and clamping.
    pub pre_output: FeatureMap,
    /// Network output, ReLU'd and clamped to [0, 1].
    pub output: Vec<f64>,
}

pub(crate) fn forward_cached(model: &RdnModel, input: FeatureMap) -> ForwardCache {
    let mut shallow1 = conv_forward(&[&input], &model.sfe1);
    shallow1.relu_in_place();
    let mut f0 = conv_forward(&[&shallow1], &model.sfe2);
    f0.relu_in_place();

    let mut features = vec![f0];
    let mut locals = Vec::with_capacity(model.rdbs.len());
    for rdb in &model.rdbs {
        let prev = features.last().expect("F0 present");
        let mut block_locals: Vec<FeatureMap> = Vec::with_capacity(rdb.convs.len());
        for conv in &rdb.convs {
            let mut parts: Vec<&FeatureMap> = vec![prev];
            parts.extend(block_locals.iter());
            let mut f = conv_forward(&parts, conv);
            f.relu_in_place();
            block_locals.push(f);
        }
        let mut parts: Vec<&FeatureMap> = vec![prev];
        parts.extend(block_locals.iter());
        let mut fused = conv_forward(&parts, &rdb.fusion);
        fused.add_assign(prev);
        features.push(fused);
        locals.push(block_locals);
    }

    let block_outputs: Vec<&FeatureMap> = features[1..].iter().collect();
    let mut global_residual = conv_forward(&block_outputs, &model.gff);
    global_residual.add_assign(&shallow1);

    let pre_output = conv_forward(&[&global_residual], &model.output);
    let output = pre_output.data.iter().map(|&v| v.clamp(0.0, 1.0)).collect();
    ForwardCache {
        input,
        shallow1,
        features,
        locals,
        global_residual,
        pre_output,
        output,
    }
}

pub(crate) fn check_input(model: &RdnModel, tile: &Image) -> Result<()> {
    if tile.channels() != model.sfe1.in_channels {
        return Err(Error::DimensionMismatch(format!(
            "network takes {} input channel(s), tile has {}",
            model.sfe1.in_channels,
            tile.channels()
        )));
    }
    Ok(())
}

/// Runs the network on a single-channel tile. Output has the tile's size.
pub fn forward(model: &RdnModel, tile: &Image) -> Result<Image> {
    check_input(model, tile)?;
    let cache = forward_cached(model, FeatureMap::from_image(tile));
    Image::from_plane(tile.height(), tile.width(), &cache.output)
}

/// Runs [`forward`] on every slice of a stack in parallel.
pub fn forward_volume(model: &RdnModel, vol: &VolumeStack) -> Result<VolumeStack> {
    let slices = vol
        .slices()
        .par_iter()
        .map(|s| forward(model, s))
        .collect::<Result<Vec<_>>>()?;
    VolumeStack::new(slices)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rdn::{init_model, RdnConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(h: usize, w: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::from_fn(h, w, 1, |_, _, _| rng.random::<f32>()).unwrap()
    }

    /// Direct transcription of the network equations with explicit loops
    /// and explicit concatenation, sharing nothing with the layer code.
    fn oracle_forward(model: &RdnModel, img: &Image) -> Vec<f64> {
        type Maps = Vec<Vec<f64>>; // [channel][y*w+x]
        let (h, w) = (img.height(), img.width());
        let conv = |input: &Maps, p: &crate::rdn::ConvParams| -> Maps {
            let k = p.kernel_size as isize;
            let r = k / 2;
            (0..p.out_channels)
                .map(|o| {
                    let mut out = vec![0.0; h * w];
                    for y in 0..h as isize {
                        for x in 0..w as isize {
                            let mut acc = p.bias[o] as f64;
                            for (i, plane) in input.iter().enumerate() {
                                for ky in 0..k {
                                    for kx in 0..k {
                                        let sy = (y + ky - r).clamp(0, h as isize - 1) as usize;
                                        let sx = (x + kx - r).clamp(0, w as isize - 1) as usize;
                                        let wi = ((o * input.len() + i) * k as usize + ky as usize)
                                            * k as usize
                                            + kx as usize;
                                        acc += p.weight[wi] as f64 * plane[sy * w + sx];
                                    }
                                }
                            }
                            out[y as usize * w + x as usize] = acc;
                        }
                    }
                    out
                })
                .collect()
        };
        let relu = |m: Maps| -> Maps {
            m.into_iter()
                .map(|p| p.into_iter().map(|v| v.max(0.0)).collect())
                .collect()
        };
        let add = |a: &Maps, b: &Maps| -> Maps {
            a.iter()
                .zip(b)
                .map(|(p, q)| p.iter().zip(q).map(|(x, y)| x + y).collect())
                .collect()
        };
        let input: Maps = vec![img.plane(0)];
        let f_m1 = relu(conv(&input, &model.sfe1));
        let mut f = relu(conv(&f_m1, &model.sfe2));
        let mut outs = Vec::new();
        for rdb in &model.rdbs {
            let mut concat = f.clone();
            for c in &rdb.convs {
                let local = relu(conv(&concat, c));
                concat.extend(local);
            }
            let lf = conv(&concat, &rdb.fusion);
            f = add(&f, &lf);
            outs.push(f.clone());
        }
        let all: Maps = outs.concat();
        let gr = add(&f_m1, &conv(&all, &model.gff));
        conv(&gr, &model.output)[0]
            .iter()
            .map(|v| v.max(0.0).min(1.0))
            .collect()
    }

    #[test]
    fn output_shape_matches_input() {
        let model = init_model(1, 1, 2, 4).unwrap();
        for size in [64, 256] {
            let out = forward(&model, &random_image(size, size, 2)).unwrap();
            assert_eq!(out.dims(), (size, size, 1));
        }
        let odd = forward(&model, &random_image(9, 13, 3)).unwrap();
        assert_eq!(odd.dims(), (9, 13, 1));
    }

    #[test]
    fn zero_model_outputs_zero() {
        let model = crate::rdn::RdnModel::zeros(RdnConfig::tiny()).unwrap();
        let out = forward(&model, &random_image(8, 8, 4)).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn tiny_config_matches_loop_oracle() {
        for seed in 0..3 {
            let mut model = init_model(seed, 1, 1, 2).unwrap();
            // Non-zero biases so every add is exercised.
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
            for c in model.convs_mut() {
                for b in c.bias.iter_mut() {
                    *b = rng.random_range(-0.1..0.1);
                }
            }
            let img = random_image(4, 4, seed);
            let got = forward(&model, &img).unwrap();
            let expected = oracle_forward(&model, &img);
            for (a, b) in got.data().iter().zip(&expected) {
                assert!((*a as f64 - b).abs() < 1e-5, "{a} vs {b}");
            }
            let cache = forward_cached(&model, FeatureMap::from_image(&img));
            for (a, b) in cache.output.iter().zip(&expected) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        let model = init_model(9, 2, 3, 3).unwrap();
        let img = random_image(6, 5, 9);
        let expected = oracle_forward(&model, &img);
        let cache = forward_cached(&model, FeatureMap::from_image(&img));
        for (a, b) in cache.output.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zeroed_block_is_identity() {
        let mut model = init_model(5, 3, 2, 3).unwrap();
        model.rdbs[1].zero_out();
        let img = random_image(7, 7, 5);
        let cache = forward_cached(&model, FeatureMap::from_image(&img));
        assert_eq!(cache.features[2], cache.features[1]);
        assert_ne!(cache.features[3], cache.features[2]);
    }

    #[test]
    fn zeroed_blocks_and_fusion_leave_shallow_residual() {
        let mut model = init_model(6, 2, 2, 3).unwrap();
        for rdb in &mut model.rdbs {
            rdb.zero_out();
        }
        model.gff.weight.fill(0.0);
        model.gff.bias.fill(0.0);
        let img = random_image(7, 7, 6);
        let cache = forward_cached(&model, FeatureMap::from_image(&img));
        assert_eq!(cache.global_residual, cache.shallow1);
    }

    #[test]
    fn forward_is_deterministic_and_checks_channels() {
        let model = init_model(2, 1, 2, 2).unwrap();
        let img = random_image(10, 10, 1);
        assert_eq!(forward(&model, &img).unwrap(), forward(&model, &img).unwrap());
        let rgb = Image::filled(10, 10, 3, 0.5).unwrap();
        assert!(matches!(forward(&model, &rgb), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn volume_forward_keeps_slice_order() {
        let model = init_model(2, 1, 2, 2).unwrap();
        let slices: Vec<_> = (0..3).map(|s| random_image(8, 8, s)).collect();
        let vol = VolumeStack::new(slices.clone()).unwrap();
        let out = forward_volume(&model, &vol).unwrap();
        for (o, s) in out.slices().iter().zip(&slices) {
            assert_eq!(o, &forward(&model, s).unwrap());
        }
    }
}
