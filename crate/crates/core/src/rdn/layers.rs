//! Feature maps and the convolution primitives shared by the forward and
//! backward passes.

use std::borrow::Cow;

use super::ConvParams;
use crate::image::Image;

/// Channel-major (`[c][y][x]`) activations in `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl FeatureMap {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        FeatureMap {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn from_image(img: &Image) -> Self {
        FeatureMap {
            channels: 1,
            height: img.height(),
            width: img.width(),
            data: img.plane(0),
        }
    }

    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.plane_len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.plane_len();
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn add_assign(&mut self, other: &FeatureMap) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn relu_in_place(&mut self) {
        for v in &mut self.data {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
    }
}

/// Zeroes gradient entries where the post-ReLU activation is not positive.
pub(crate) fn relu_backward(grad: &mut FeatureMap, activation: &FeatureMap) {
    for (g, &a) in grad.data.iter_mut().zip(&activation.data) {
        if a <= 0.0 {
            *g = 0.0;
        }
    }
}

/// Replicate-pads one plane by `r` on every side.
fn pad(plane: &[f64], h: usize, w: usize, r: usize) -> Cow<'_, [f64]> {
    if r == 0 {
        return Cow::Borrowed(plane);
    }
    let pw = w + 2 * r;
    let mut out = Vec::with_capacity((h + 2 * r) * pw);
    for py in 0..h + 2 * r {
        let sy = py.saturating_sub(r).min(h - 1);
        let row = &plane[sy * w..(sy + 1) * w];
        out.extend(std::iter::repeat_n(row[0], r));
        out.extend_from_slice(row);
        out.extend(std::iter::repeat_n(row[w - 1], r));
    }
    Cow::Owned(out)
}

/// Iterates the input channels of a (virtually) concatenated input.
fn input_planes<'a>(inputs: &'a [&'a FeatureMap]) -> impl Iterator<Item = &'a [f64]> + 'a {
    inputs
        .iter()
        .flat_map(|f| (0..f.channels).map(move |c| f.plane(c)))
}

/// Cross-correlation with "same" replicate padding over the channel-wise
/// concatenation of `inputs`:
/// `out[o](y,x) = b[o] + Σ_{i,ky,kx} w[o][i][ky][kx]·in[i](y+ky−r, x+kx−r)`.
pub(crate) fn conv_forward(inputs: &[&FeatureMap], p: &ConvParams) -> FeatureMap {
    let (h, w) = (inputs[0].height, inputs[0].width);
    let in_ch: usize = inputs.iter().map(|f| f.channels).sum();
    assert_eq!(in_ch, p.in_channels, "input channels do not match layer");
    let k = p.kernel_size;
    let r = k / 2;
    let pw = w + 2 * r;

    let mut out = FeatureMap::zeros(p.out_channels, h, w);
    for o in 0..p.out_channels {
        out.plane_mut(o).fill(p.bias[o] as f64);
    }
    for (i, plane) in input_planes(inputs).enumerate() {
        let padded = pad(plane, h, w, r);
        for o in 0..p.out_channels {
            let dst = out.plane_mut(o);
            for ky in 0..k {
                for kx in 0..k {
                    let wv = p.weight[((o * in_ch + i) * k + ky) * k + kx] as f64;
                    if wv == 0.0 {
                        continue;
                    }
                    for y in 0..h {
                        let src = &padded[(y + ky) * pw + kx..][..w];
                        for (d, s) in dst[y * w..(y + 1) * w].iter_mut().zip(src) {
                            *d += wv * s;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Backward pass of [`conv_forward`]. Accumulates parameter gradients into
/// `grad_w`/`grad_b` and, when `want_input_grad`, returns one gradient map
/// per input part (replicate padding folds border gradients back onto the
/// edge pixels they were copied from).
pub(crate) fn conv_backward(
    inputs: &[&FeatureMap],
    p: &ConvParams,
    grad_out: &FeatureMap,
    want_input_grad: bool,
    grad_w: &mut [f64],
    grad_b: &mut [f64],
) -> Vec<FeatureMap> {
    let (h, w) = (inputs[0].height, inputs[0].width);
    let in_ch: usize = inputs.iter().map(|f| f.channels).sum();
    let k = p.kernel_size;
    let r = k / 2;
    let (ph, pw) = (h + 2 * r, w + 2 * r);

    for o in 0..p.out_channels {
        grad_b[o] += grad_out.plane(o).iter().sum::<f64>();
    }

    let mut grads: Vec<FeatureMap> = if want_input_grad {
        inputs
            .iter()
            .map(|f| FeatureMap::zeros(f.channels, h, w))
            .collect()
    } else {
        Vec::new()
    };
    let mut part_of = Vec::with_capacity(in_ch);
    for (pi, f) in inputs.iter().enumerate() {
        part_of.extend((0..f.channels).map(|c| (pi, c)));
    }

    let mut grad_pad = vec![0.0; ph * pw];
    for (i, plane) in input_planes(inputs).enumerate() {
        let padded = pad(plane, h, w, r);
        grad_pad.fill(0.0);
        for o in 0..p.out_channels {
            let g = grad_out.plane(o);
            for ky in 0..k {
                for kx in 0..k {
                    let idx = ((o * in_ch + i) * k + ky) * k + kx;
                    let wv = p.weight[idx] as f64;
                    let mut acc = 0.0;
                    for y in 0..h {
                        let g_row = &g[y * w..(y + 1) * w];
                        let off = (y + ky) * pw + kx;
                        let src = &padded[off..off + w];
                        acc += g_row.iter().zip(src).map(|(a, b)| a * b).sum::<f64>();
                        if want_input_grad && wv != 0.0 {
                            for (d, gv) in grad_pad[off..off + w].iter_mut().zip(g_row) {
                                *d += wv * gv;
                            }
                        }
                    }
                    grad_w[idx] += acc;
                }
            }
        }
        if want_input_grad {
            let (part, c) = part_of[i];
            let dst = grads[part].plane_mut(c);
            for py in 0..ph {
                let y = py.saturating_sub(r).min(h - 1);
                for px in 0..pw {
                    let x = px.saturating_sub(r).min(w - 1);
                    dst[y * w + x] += grad_pad[py * pw + px];
                }
            }
        }
    }
    grads
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_matches_direct_formula() {
        let input = FeatureMap {
            channels: 2,
            height: 3,
            width: 4,
            data: (0..24).map(|v| v as f64 * 0.1).collect(),
        };
        let mut p = ConvParams::zeros(2, 2, 3);
        for (i, w) in p.weight.iter_mut().enumerate() {
            *w = ((i * 7) % 5) as f32 * 0.25 - 0.5;
        }
        p.bias = vec![0.3, -0.2];
        let out = conv_forward(&[&input], &p);
        let at = |c: usize, y: isize, x: isize| {
            let y = y.clamp(0, 2) as usize;
            let x = x.clamp(0, 3) as usize;
            input.data[c * 12 + y * 4 + x]
        };
        for o in 0..2 {
            for y in 0..3 {
                for x in 0..4 {
                    let mut acc = p.bias[o] as f64;
                    for i in 0..2 {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                acc += p.weight[((o * 2 + i) * 3 + ky) * 3 + kx] as f64
                                    * at(i, y as isize + ky as isize - 1, x as isize + kx as isize - 1);
                            }
                        }
                    }
                    assert!((out.data[o * 12 + y * 4 + x] - acc).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn split_input_equals_concatenated_input() {
        let a = FeatureMap {
            channels: 1,
            height: 2,
            width: 2,
            data: vec![0.1, 0.2, 0.3, 0.4],
        };
        let b = FeatureMap {
            channels: 1,
            height: 2,
            width: 2,
            data: vec![0.5, 0.6, 0.7, 0.8],
        };
        let joined = FeatureMap {
            channels: 2,
            height: 2,
            width: 2,
            data: [a.data.clone(), b.data.clone()].concat(),
        };
        let mut p = ConvParams::zeros(1, 2, 1);
        p.weight = vec![2.0, -1.0];
        assert_eq!(conv_forward(&[&a, &b], &p), conv_forward(&[&joined], &p));
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let input = FeatureMap {
            channels: 2,
            height: 3,
            width: 3,
            data: (0..18).map(|v| ((v * 5) % 7) as f64 * 0.1).collect(),
        };
        let mut p = ConvParams::zeros(1, 2, 3);
        for (i, w) in p.weight.iter_mut().enumerate() {
            *w = ((i * 3) % 4) as f32 * 0.3 - 0.4;
        }
        // Loss = Σ out·coef with fixed coefficients.
        let coef: Vec<f64> = (0..9).map(|v| v as f64 * 0.1 - 0.3).collect();
        let loss = |f: &FeatureMap| -> f64 {
            conv_forward(&[f], &p).data.iter().zip(&coef).map(|(a, b)| a * b).sum()
        };
        let g_out = FeatureMap {
            channels: 1,
            height: 3,
            width: 3,
            data: coef.clone(),
        };
        let mut gw = vec![0.0; p.weight.len()];
        let mut gb = vec![0.0; 1];
        let grads = conv_backward(&[&input], &p, &g_out, true, &mut gw, &mut gb);
        let h = 1e-6;
        for i in 0..input.data.len() {
            let mut plus = input.clone();
            plus.data[i] += h;
            let mut minus = input.clone();
            minus.data[i] -= h;
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
            assert!((fd - grads[0].data[i]).abs() < 1e-8, "{i}: {fd} vs {}", grads[0].data[i]);
        }
        assert!((gb[0] - coef.iter().sum::<f64>()).abs() < 1e-12);
    }
}
