//! Gradient-descent training: θ ← θ − α∇θL per batch, where L is the batch
//! sum of ½(P − P̂)² on standardized labels.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Backend, LabeledDataset, Mlp, Normalization, PredictorError, PredictorModel, Row};
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// α.
    pub learning_rate: f64,
    /// Rows per gradient step.
    pub batch_size: usize,
    pub epochs: usize,
    /// Fraction of rows used for training; the rest validates.
    pub split: f64,
    pub seed: u64,
    pub hidden: Vec<usize>,
    pub backend: Backend,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            batch_size: 1100,
            epochs: 500,
            split: 0.8,
            seed: 0,
            hidden: vec![32, 32],
            backend: Backend::Deterministic,
        }
    }
}

impl TrainConfig {
    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut s = vec![3];
        s.extend(&self.hidden);
        s.push(1);
        s
    }

    pub fn validate(&self) -> Result<(), PredictorError> {
        let bad = |m: &str| Err(PredictorError::Config(m.into()));
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return bad("learning_rate must be finite and >= 0");
        }
        if !(self.split > 0.0 && self.split < 1.0) {
            return bad("split must lie in (0, 1)");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        if self.backend.member_count() == 0 {
            return bad("ensemble needs at least one member");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossPoint {
    pub epoch: usize,
    /// Mean ½(P − P̂)² over the training rows seen this epoch, W².
    pub train_loss: f64,
    /// Mean ½(P − P̂)² over the validation split, W².
    pub val_loss: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<T> {
    pub model: PredictorModel<T>,
    /// Averaged across ensemble members.
    pub curve: Vec<LossPoint>,
    pub train: LabeledDataset<T>,
    pub validation: LabeledDataset<T>,
    /// W.
    pub val_mae: T,
}

/// `epoch,train_loss,val_loss`.
pub fn write_loss_csv<W: std::io::Write>(curve: &[LossPoint], out: W) -> Result<(), PredictorError> {
    let mut wtr = csv::Writer::from_writer(out);
    for p in curve {
        wtr.serialize(p).map_err(|e| PredictorError::Format(e.to_string()))?;
    }
    wtr.flush()?;
    Ok(())
}

/// One pass over `xs`/`ys` in order, in batches of `batch_size`; returns the
/// summed pre-update batch losses.
pub fn train_epoch<T: Real>(
    model: &mut Mlp<T>,
    xs: &[Vec<T>],
    ys: &[Vec<T>],
    batch_size: usize,
    alpha: T,
    epoch: usize,
) -> Result<T, PredictorError> {
    let mut total = T::zero();
    for (batch, (bx, by)) in xs.chunks(batch_size).zip(ys.chunks(batch_size)).enumerate() {
        let (loss, grad) = model.loss_and_grad(bx, by)?;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(PredictorError::NonFinite { epoch, batch });
        }
        model.apply_gradient(&grad, alpha);
        total += loss;
    }
    Ok(total)
}

/// Seed of ensemble member `k`; member 0 uses the base seed itself.
pub fn member_seed(seed: u64, k: usize) -> u64 {
    if k == 0 {
        return seed;
    }
    let mut z = seed ^ (k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn canonical_order<T: Real>(rows: &mut [Row<T>]) {
    let key = |r: &Row<T>| {
        let f = r.features.to_array();
        [f[0], f[1], f[2], r.label].map(|v| v.to_f64_lossy())
    };
    rows.sort_by(|a, b| {
        key(a)
            .iter()
            .zip(key(b).iter())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
}

/// Seeded shuffle and split; the result does not depend on input row order.
pub fn split_dataset<T: Real>(
    data: &LabeledDataset<T>,
    split: f64,
    seed: u64,
) -> Result<(LabeledDataset<T>, LabeledDataset<T>), PredictorError> {
    let mut rows = data.rows.clone();
    canonical_order(&mut rows);
    rows.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((rows.len() as f64) * split).floor() as usize;
    if n_train == 0 || n_train == rows.len() {
        return Err(PredictorError::Dataset(format!(
            "{} rows cannot be split {split} into two non-empty sets",
            rows.len()
        )));
    }
    let val = rows.split_off(n_train);
    Ok((LabeledDataset { rows }, LabeledDataset { rows: val }))
}

struct MemberRun<T> {
    mlp: Mlp<T>,
    train_loss: Vec<f64>,
    val_loss: Vec<f64>,
}

pub fn train<T: Real>(
    data: &LabeledDataset<T>,
    config: &TrainConfig,
) -> Result<TrainOutcome<T>, PredictorError> {
    config.validate()?;
    let (train_set, val_set) = split_dataset(data, config.split, config.seed)?;
    let batch = if config.batch_size > train_set.len() {
        log::warn!(
            "batch size {} exceeds {} training rows; using full batch",
            config.batch_size,
            train_set.len()
        );
        train_set.len()
    } else {
        config.batch_size
    };
    if config.learning_rate == 0.0 {
        log::warn!("learning rate is 0: weights stay at initialization");
    }

    let feats = |d: &LabeledDataset<T>| -> Vec<Vec<T>> {
        d.rows.iter().map(|r| r.features.to_array().to_vec()).collect()
    };
    let labels = |d: &LabeledDataset<T>| -> Vec<Vec<T>> { d.rows.iter().map(|r| vec![r.label]).collect() };
    let input_norm = Normalization::fit(&feats(&train_set));
    let label_norm = Normalization::fit(&labels(&train_set));
    let scale_sq = (label_norm.scale[0] * label_norm.scale[0]).to_f64_lossy();

    let norm_x = |d: &LabeledDataset<T>| -> Vec<Vec<T>> {
        feats(d).iter().map(|x| input_norm.apply(x)).collect()
    };
    let norm_y = |d: &LabeledDataset<T>| -> Vec<Vec<T>> {
        labels(d).iter().map(|y| label_norm.apply(y)).collect()
    };
    let (train_x, train_y) = (norm_x(&train_set), norm_y(&train_set));
    let (val_x, val_y) = (norm_x(&val_set), norm_y(&val_set));

    let sizes = config.layer_sizes();
    let k_members = config.backend.member_count();
    let alpha = T::lit(config.learning_rate);

    let runs = (0..k_members)
        .into_par_iter()
        .map(|k| -> Result<MemberRun<T>, PredictorError> {
            let seed = member_seed(config.seed, k);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (xs, ys): (Vec<Vec<T>>, Vec<Vec<T>>) = if k_members > 1 {
                (0..train_x.len())
                    .map(|_| {
                        let i = rng.random_range(0..train_x.len());
                        (train_x[i].clone(), train_y[i].clone())
                    })
                    .unzip()
            } else {
                (train_x.clone(), train_y.clone())
            };
            let mut mlp = Mlp::init(&sizes, seed)?;
            let mut order: Vec<usize> = (0..xs.len()).collect();
            let mut bx = xs.clone();
            let mut by = ys.clone();
            let mut train_loss = Vec::with_capacity(config.epochs);
            let mut val_loss = Vec::with_capacity(config.epochs);
            for epoch in 0..config.epochs {
                order.shuffle(&mut rng);
                for (slot, &i) in order.iter().enumerate() {
                    bx[slot].clone_from(&xs[i]);
                    by[slot].clone_from(&ys[i]);
                }
                let total = train_epoch(&mut mlp, &bx, &by, batch, alpha, epoch)?;
                train_loss.push(total.to_f64_lossy() / xs.len() as f64 * scale_sq);
                let vl = mlp.batch_loss(&val_x, &val_y)?;
                val_loss.push(vl.to_f64_lossy() / val_x.len() as f64 * scale_sq);
            }
            Ok(MemberRun {
                mlp,
                train_loss,
                val_loss,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let curve = (0..config.epochs)
        .map(|e| LossPoint {
            epoch: e + 1,
            train_loss: runs.iter().map(|r| r.train_loss[e]).sum::<f64>() / k_members as f64,
            val_loss: runs.iter().map(|r| r.val_loss[e]).sum::<f64>() / k_members as f64,
        })
        .collect();
    let model = PredictorModel {
        backend: config.backend,
        input_norm,
        label_norm,
        members: runs.into_iter().map(|r| r.mlp).collect(),
        seed: config.seed,
    };
    let val_mae = super::mae(&model, &val_set)?;
    Ok(TrainOutcome {
        model,
        curve,
        train: train_set,
        validation: val_set,
        val_mae,
    })
}
