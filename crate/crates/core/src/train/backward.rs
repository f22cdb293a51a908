use crate::error::{Error, Result};
use crate::image::Image;
use crate::rdn::forward::{check_input, forward_cached, ForwardCache};
use crate::rdn::layers::{conv_backward, relu_backward, FeatureMap};
use crate::rdn::{ConvParams, RdnModel};

/// Parameter gradients, one `f64` vector per tensor of
/// [`RdnModel::tensors`], in the same order.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub tensors: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(model: &RdnModel) -> Self {
        Gradients {
            tensors: model.tensors().iter().map(|(_, t)| vec![0.0; t.len()]).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for v in self.tensors.iter_mut().flatten() {
            *v *= factor;
        }
    }

    /// Flattened view in canonical order.
    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.tensors.iter().flatten().copied()
    }

    fn conv_slots(&mut self, conv_index: usize) -> (&mut [f64], &mut [f64]) {
        let (head, tail) = self.tensors.split_at_mut(2 * conv_index + 1);
        (&mut head[2 * conv_index], &mut tail[0])
    }
}

/// Mean squared error between two equally shaped images.
pub fn mse_loss(pred: &Image, target: &Image) -> Result<f64> {
    pred.require_same_shape(target)?;
    let n = pred.data().len() as f64;
    Ok(pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| (p as f64 - t as f64).powi(2))
        .sum::<f64>()
        / n)
}

/// Gradient of [`mse_loss`] with respect to `pred`: `2(pred − target)/N`.
pub fn mse_loss_grad(pred: &Image, target: &Image) -> Result<Vec<f64>> {
    pred.require_same_shape(target)?;
    let n = pred.data().len() as f64;
    Ok(pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| 2.0 * (p as f64 - t as f64) / n)
        .collect())
}

fn check_pair(model: &RdnModel, tile: &Image, target: &Image) -> Result<()> {
    check_input(model, tile)?;
    if tile.dims() != target.dims() {
        return Err(Error::DimensionMismatch(format!(
            "tile is {:?}, target is {:?}",
            tile.dims(),
            target.dims()
        )));
    }
    Ok(())
}

/// Loss of the network output against `target`, evaluated in `f64`.
pub fn loss(model: &RdnModel, tile: &Image, target: &Image) -> Result<f64> {
    check_pair(model, tile, target)?;
    let cache = forward_cached(model, FeatureMap::from_image(tile));
    Ok(cache_loss(&cache, &target.plane(0)))
}

fn cache_loss(cache: &ForwardCache, target: &[f64]) -> f64 {
    cache
        .output
        .iter()
        .zip(target)
        .map(|(p, t)| (p - t).powi(2))
        .sum::<f64>()
        / target.len() as f64
}

/// On/off state of every ReLU and of the output clamp for one forward pass.
/// Central differences are only a valid gradient oracle when this pattern is
/// the same at both ends of the stencil.
pub fn activation_pattern(model: &RdnModel, tile: &Image) -> Result<Vec<bool>> {
    check_input(model, tile)?;
    let cache = forward_cached(model, FeatureMap::from_image(tile));
    let relu_maps = std::iter::once(&cache.shallow1)
        .chain(cache.features.first())
        .chain(cache.locals.iter().flatten());
    let mut pattern: Vec<bool> = relu_maps.flat_map(|f| f.data.iter().map(|&v| v > 0.0)).collect();
    pattern.extend(cache.pre_output.data.iter().map(|&v| v > 0.0 && v < 1.0));
    Ok(pattern)
}

/// Runs `forward` then reverse-mode differentiation of the MSE loss.
/// Returns the loss and the gradient of every weight and bias.
pub fn backward(model: &RdnModel, tile: &Image, target: &Image) -> Result<(f64, Gradients)> {
    check_pair(model, tile, target)?;
    let cache = forward_cached(model, FeatureMap::from_image(tile));
    let t = target.plane(0);
    let loss = cache_loss(&cache, &t);
    let n = t.len() as f64;

    let cfg = model.config;
    let (blocks, layers) = (cfg.blocks, cfg.layers);
    let block_base = |d: usize| 2 + d * (layers + 1);
    let gff_index = block_base(blocks);
    let output_index = gff_index + 1;

    let mut grads = Gradients::zeros_like(model);
    let mut run = |inputs: &[&FeatureMap], p: &ConvParams, g: &FeatureMap, idx: usize, want: bool| {
        let (gw, gb) = grads.conv_slots(idx);
        conv_backward(inputs, p, g, want, gw, gb)
    };

    // Output clamp(relu(·), 0, 1) passes gradient only strictly inside (0, 1).
    let mut g_pre = cache.pre_output.clone();
    for ((g, &pre), (&out, &tv)) in g_pre
        .data
        .iter_mut()
        .zip(&cache.pre_output.data)
        .zip(cache.output.iter().zip(&t))
    {
        *g = if pre > 0.0 && pre < 1.0 {
            2.0 * (out - tv) / n
        } else {
            0.0
        };
    }

    let g_gr = run(&[&cache.global_residual], &model.output, &g_pre, output_index, true)
        .pop()
        .expect("one input");
    let mut g_shallow1 = g_gr.clone();

    let block_outputs: Vec<&FeatureMap> = cache.features[1..].iter().collect();
    let mut g_features = vec![FeatureMap::zeros(
        cfg.width,
        g_gr.height,
        g_gr.width,
    )];
    g_features.extend(run(&block_outputs, &model.gff, &g_gr, gff_index, true));

    for d in (0..blocks).rev() {
        let rdb = &model.rdbs[d];
        let prev = &cache.features[d];
        let locals = &cache.locals[d];
        let g_out = g_features[d + 1].clone();

        let mut parts: Vec<&FeatureMap> = vec![prev];
        parts.extend(locals.iter());
        let mut part_grads = run(&parts, &rdb.fusion, &g_out, block_base(d) + layers, true);
        let mut g_locals = part_grads.split_off(1);
        let mut g_prev = part_grads.pop().expect("prev part");
        g_prev.add_assign(&g_out);

        for c in (0..layers).rev() {
            let mut g = std::mem::replace(&mut g_locals[c], FeatureMap::zeros(0, 0, 0));
            relu_backward(&mut g, &locals[c]);
            let mut parts: Vec<&FeatureMap> = vec![prev];
            parts.extend(locals[..c].iter());
            let pg = run(&parts, &rdb.convs[c], &g, block_base(d) + c, true);
            g_prev.add_assign(&pg[0]);
            for (j, gj) in pg[1..].iter().enumerate() {
                g_locals[j].add_assign(gj);
            }
        }
        g_features[d].add_assign(&g_prev);
    }

    let mut g_f0 = g_features.swap_remove(0);
    relu_backward(&mut g_f0, &cache.features[0]);
    let pg = run(&[&cache.shallow1], &model.sfe2, &g_f0, 1, true);
    g_shallow1.add_assign(&pg[0]);
    relu_backward(&mut g_shallow1, &cache.shallow1);
    run(&[&cache.input], &model.sfe1, &g_shallow1, 0, false);

    Ok((loss, grads))
}
