//! Loss, reverse-mode gradients, Adam, and the training loop.

mod adam;
mod backward;

pub use adam::{adam_step, AdamState};
pub use backward::{activation_pattern, backward, loss, mse_loss, mse_loss_grad, Gradients};

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::rdn::RdnModel;

/// One (input, ground truth) training example.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingPair {
    pub blurred: Image,
    pub target: Image,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr_initial: f64,
    /// Multiplicative learning-rate decay applied once per epoch.
    pub lr_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_adam: f64,
    pub epochs: usize,
    /// Seeds the train/validation split and the per-epoch shuffles.
    pub seed: u64,
    pub validation_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 8,
            lr_initial: 1e-4,
            lr_decay: 0.95,
            beta1: 0.9,
            beta2: 0.999,
            eps_adam: 1e-8,
            epochs: 100,
            seed: 0,
            validation_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.lr_initial.is_finite() && self.lr_initial > 0.0) {
            return bad(format!("lr_initial must be positive, got {}", self.lr_initial));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return bad(format!("lr_decay must be in (0, 1], got {}", self.lr_decay));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return bad(format!("{name} must be in (0, 1), got {b}"));
            }
        }
        if !(self.eps_adam > 0.0) {
            return bad(format!("eps_adam must be positive, got {}", self.eps_adam));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return bad(format!(
                "validation_fraction must be in (0, 1), got {}",
                self.validation_fraction
            ));
        }
        Ok(())
    }
}

/// `lr_initial · lr_decay^epoch`, with epochs counted from 0.
pub fn lr_at_epoch(cfg: &TrainConfig, epoch: usize) -> f64 {
    cfg.lr_initial * cfg.lr_decay.powi(epoch as i32)
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct LossRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

/// Per-epoch losses. Row 0 is the untrained model; row `e` follows epoch `e`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossCurve {
    pub rows: Vec<LossRow>,
}

impl LossCurve {
    pub const CSV_HEADER: &'static str = "epoch,train_loss,val_loss";

    /// Epoch with the lowest validation loss (earliest on ties).
    pub fn best_epoch(&self) -> Option<usize> {
        self.rows
            .iter()
            .fold(None::<&LossRow>, |best, r| match best {
                Some(b) if b.val_loss <= r.val_loss => Some(b),
                _ => Some(r),
            })
            .map(|r| r.epoch)
    }

    /// Largest relative rise of the validation loss above its minimum,
    /// looking only at epochs after the minimum.
    pub fn max_rise_after_best(&self) -> f64 {
        let Some(best) = self.best_epoch() else {
            return 0.0;
        };
        let min = self.rows[best].val_loss;
        self.rows[best..]
            .iter()
            .map(|r| (r.val_loss - min) / min.max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.rows
            .iter()
            .all(|r| r.train_loss.is_finite() && r.val_loss.is_finite())
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", Self::CSV_HEADER);
        for r in &self.rows {
            let _ = writeln!(out, "{},{:e},{:e}", r.epoch, r.train_loss, r.val_loss);
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters at the epoch with the lowest validation loss.
    pub best: RdnModel,
    pub best_epoch: usize,
    /// Parameters after the last epoch.
    pub last: RdnModel,
    pub curve: LossCurve,
}

/// Deterministic split: returns (train indices, validation indices). A
/// single pair is used for both.
fn split(n: usize, cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    if n == 1 {
        return (idx.clone(), idx);
    }
    idx.shuffle(rng);
    let n_val = ((n as f64 * cfg.validation_fraction).round() as usize).clamp(1, n - 1);
    let val = idx.split_off(n - n_val);
    (idx, val)
}

/// The (train, validation) indices [`train`] uses for `n` pairs under `cfg`.
pub fn validation_split(n: usize, cfg: &TrainConfig) -> Result<(Vec<usize>, Vec<usize>)> {
    cfg.validate()?;
    if n == 0 {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    // The split is the first draw from the training generator.
    Ok(split(n, cfg, &mut ChaCha8Rng::seed_from_u64(cfg.seed)))
}

fn mean_loss(model: &RdnModel, data: &[TrainingPair], indices: &[usize]) -> Result<f64> {
    let losses = indices
        .par_iter()
        .map(|&i| loss(model, &data[i].blurred, &data[i].target))
        .collect::<Result<Vec<_>>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

fn check_dataset(model: &RdnModel, data: &[TrainingPair]) -> Result<()> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    for (i, p) in data.iter().enumerate() {
        if p.blurred.dims() != p.target.dims() {
            return Err(Error::DimensionMismatch(format!(
                "pair {i}: input {:?} vs target {:?}",
                p.blurred.dims(),
                p.target.dims()
            )));
        }
        crate::rdn::forward::check_input(model, &p.blurred)?;
    }
    Ok(())
}

/// Mini-batch Adam training with a seeded split, per-epoch shuffling and
/// best-validation checkpointing. Per-sample gradients are computed in
/// parallel and summed in a fixed order, so results do not depend on the
/// thread count.
pub fn train(model: RdnModel, data: &[TrainingPair], cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_with(model, data, cfg, |_| {})
}

/// [`train`], calling `on_epoch` with each new curve row.
pub fn train_with(
    mut model: RdnModel,
    data: &[TrainingPair],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&LossRow),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    model.validate()?;
    check_dataset(&model, data)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (mut order, val) = split(data.len(), cfg, &mut rng);
    let mut state = AdamState::new(&model);

    let row = LossRow {
        epoch: 0,
        train_loss: mean_loss(&model, data, &order)?,
        val_loss: mean_loss(&model, data, &val)?,
    };
    if !(row.train_loss.is_finite() && row.val_loss.is_finite()) {
        return Err(Error::NonFinite("loss of the initial model".into()));
    }
    on_epoch(&row);
    let mut curve = LossCurve { rows: vec![row] };
    let mut best = (model.clone(), 0usize, row.val_loss);

    for epoch in 1..=cfg.epochs {
        let lr = lr_at_epoch(cfg, epoch - 1);
        order.shuffle(&mut rng);
        let mut train_sum = 0.0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let per_sample = batch
                .par_iter()
                .map(|&i| backward(&model, &data[i].blurred, &data[i].target))
                .collect::<Result<Vec<_>>>()?;
            let mut grads = Gradients::zeros_like(&model);
            let mut batch_loss = 0.0;
            for (l, g) in &per_sample {
                batch_loss += l;
                grads.add_assign(g);
            }
            if !batch_loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "training loss at epoch {epoch}, batch {b}"
                )));
            }
            train_sum += batch_loss;
            grads.scale(1.0 / batch.len() as f64);
            adam_step(&mut model, &grads, &mut state, lr, cfg).map_err(|e| match e {
                Error::NonFinite(msg) => {
                    Error::NonFinite(format!("{msg} (epoch {epoch}, batch {b})"))
                }
                other => other,
            })?;
        }
        let row = LossRow {
            epoch,
            train_loss: train_sum / order.len() as f64,
            val_loss: mean_loss(&model, data, &val)?,
        };
        if !row.val_loss.is_finite() {
            return Err(Error::NonFinite(format!("validation loss at epoch {epoch}")));
        }
        log::info!(
            "epoch {epoch}: lr {lr:.3e} train {:.6e} val {:.6e}",
            row.train_loss,
            row.val_loss
        );
        on_epoch(&row);
        curve.rows.push(row);
        if row.val_loss < best.2 {
            best = (model.clone(), epoch, row.val_loss);
        }
    }

    Ok(TrainOutcome {
        best: best.0,
        best_epoch: best.1,
        last: model,
        curve,
    })
}
