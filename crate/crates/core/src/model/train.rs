use std::io::Write;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{Activation, Mlp};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    #[default]
    Adam,
    Sgd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// Mini-batch size; data sets no larger than this train full-batch.
    pub batch_size: usize,
    pub seed: u64,
    pub validation_fraction: f64,
    pub optimizer: Optimizer,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    /// Learning rate at the last epoch relative to the first; the rate
    /// follows a cosine between them. 1 keeps it constant.
    pub final_lr_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            epochs: 2000,
            batch_size: 4096,
            seed: 0,
            validation_fraction: 0.0,
            optimizer: Optimizer::Adam,
            hidden: vec![20, 20, 20],
            activation: Activation::Tanh,
            final_lr_fraction: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if !(self.final_lr_fraction > 0.0 && self.final_lr_fraction <= 1.0) {
            return Err(Error::InvalidArgument(format!("final learning-rate fraction must lie in (0, 1], got {}", self.final_lr_fraction)));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::InvalidArgument(format!("validation fraction must lie in [0, 1), got {}", self.validation_fraction)));
        }
        Ok(())
    }

    /// Learning rate used during `epoch`.
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        if self.epochs < 2 {
            return self.learning_rate;
        }
        let t = epoch as f64 / (self.epochs - 1) as f64;
        let f = self.final_lr_fraction;
        self.learning_rate * (f + (1.0 - f) * 0.5 * (1.0 + (std::f64::consts::PI * t).cos()))
    }

    pub fn widths(&self, n_in: usize, n_out: usize) -> Vec<usize> {
        let mut w = vec![n_in];
        w.extend(&self.hidden);
        w.push(n_out);
        w
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossHistory {
    pub epochs: Vec<EpochRecord>,
}

impl LossHistory {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "epoch,train_loss,val_loss")?;
        for r in &self.epochs {
            let val = r.val_loss.map(crate::report::fmt_f64).unwrap_or_default();
            writeln!(w, "{},{},{}", r.epoch, crate::report::fmt_f64(r.train_loss), val)?;
        }
        Ok(())
    }

    pub fn last_train_loss(&self) -> Option<f64> {
        self.epochs.last().map(|r| r.train_loss)
    }
}

/// A differentiable training objective over indexed samples.
pub(crate) trait Objective {
    fn num_params(&self) -> usize;
    /// Mean loss over `batch`; its gradient is accumulated into `grad`.
    fn loss_grad(&self, batch: &[usize], grad: &mut [f64]) -> f64;
    fn loss(&self, idx: &[usize]) -> f64;
    /// Parameter storage, in the same flattened order as the gradient.
    fn params_mut(&mut self) -> Vec<&mut [f64]>;
}

struct Adam {
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(lr: f64, n: usize) -> Self {
        Self { lr, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    fn step(&mut self, params: Vec<&mut [f64]>, grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        let mut k = 0;
        for slice in params {
            for p in slice.iter_mut() {
                let g = grad[k];
                self.m[k] = Self::B1 * self.m[k] + (1.0 - Self::B1) * g;
                self.v[k] = Self::B2 * self.v[k] + (1.0 - Self::B2) * g * g;
                *p -= self.lr * (self.m[k] / c1) / ((self.v[k] / c2).sqrt() + Self::EPS);
                k += 1;
            }
        }
    }
}

fn sgd_step(lr: f64, params: Vec<&mut [f64]>, grad: &[f64]) {
    let mut k = 0;
    for slice in params {
        for p in slice.iter_mut() {
            *p -= lr * grad[k];
            k += 1;
        }
    }
}

/// Deterministic split of `0..n` into (train, validation) index sets.
pub fn split_indices(n: usize, validation_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    let n_val = ((n as f64) * validation_fraction).round() as usize;
    if n_val == 0 {
        return (idx, Vec::new());
    }
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0000_5b17));
    let val = idx.split_off(n - n_val);
    (idx, val)
}

/// Mini-batch gradient descent on `obj`.
pub(crate) fn optimize<O: Objective>(obj: &mut O, train: &[usize], val: &[usize], cfg: &TrainConfig) -> Result<LossHistory> {
    cfg.validate()?;
    let n_params = obj.num_params();
    let mut adam = Adam::new(cfg.learning_rate, n_params);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
    let mut order = train.to_vec();
    let mut grad = vec![0.0; n_params];
    let mut history = LossHistory::default();
    let batch = cfg.batch_size.min(order.len().max(1));
    for epoch in 0..cfg.epochs {
        if batch < order.len() {
            order.shuffle(&mut rng);
        }
        let lr = cfg.learning_rate_at(epoch);
        adam.lr = lr;
        let mut total = 0.0;
        for chunk in order.chunks(batch) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let loss = obj.loss_grad(chunk, &mut grad);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFinite(epoch));
            }
            total += loss * chunk.len() as f64;
            match cfg.optimizer {
                Optimizer::Adam => adam.step(obj.params_mut(), &grad),
                Optimizer::Sgd => sgd_step(lr, obj.params_mut(), &grad),
            }
        }
        let train_loss = total / order.len().max(1) as f64;
        let val_loss = (!val.is_empty()).then(|| obj.loss(val));
        history.epochs.push(EpochRecord { epoch, train_loss, val_loss });
    }
    Ok(history)
}

/// Squared-error regression objective for a plain MLP.
struct MlpObjective {
    mlp: Mlp,
    x: Array2<f64>,
    y: Array2<f64>,
}

impl Objective for MlpObjective {
    fn num_params(&self) -> usize {
        self.mlp.num_params()
    }

    fn loss_grad(&self, batch: &[usize], grad: &mut [f64]) -> f64 {
        let xb = self.x.select(Axis(0), batch);
        let yb = self.y.select(Axis(0), batch);
        let cache = self.mlp.forward_cached(xb.view());
        let diff = cache.output() - &yb;
        let scale = 1.0 / diff.len() as f64;
        let loss = diff.iter().map(|d| d * d).sum::<f64>() * scale;
        let d_out = diff.mapv(|d| 2.0 * d * scale);
        self.mlp.backward(&cache, d_out.view(), grad);
        loss
    }

    fn loss(&self, idx: &[usize]) -> f64 {
        let xb = self.x.select(Axis(0), idx);
        let yb = self.y.select(Axis(0), idx);
        let diff = self.mlp.forward(xb.view()) - &yb;
        diff.iter().map(|d| d * d).sum::<f64>() / diff.len() as f64
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.mlp.params.as_mut_slice()]
    }
}

#[derive(Clone, Debug)]
pub struct TrainedMlp {
    pub mlp: Mlp,
    pub history: LossHistory,
}

pub(crate) fn to_matrix(rows: &[Vec<f64>], width: usize) -> Result<Array2<f64>> {
    if let Some(bad) = rows.iter().find(|r| r.len() != width) {
        return Err(Error::WidthMismatch { expected: width, found: bad.len() });
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(Array2::from_shape_vec((rows.len(), width), flat).expect("checked widths"))
}

/// Fit an MLP with mean-squared-error loss. With zero epochs the freshly
/// initialized network is returned.
pub fn train_mlp(data: &[(Vec<f64>, Vec<f64>)], cfg: &TrainConfig) -> Result<TrainedMlp> {
    cfg.validate()?;
    let Some((x0, y0)) = data.first() else {
        return Err(Error::InvalidArgument("training data is empty".into()));
    };
    let (n_in, n_out) = (x0.len(), y0.len());
    let xs: Vec<Vec<f64>> = data.iter().map(|(x, _)| x.clone()).collect();
    let ys: Vec<Vec<f64>> = data.iter().map(|(_, y)| y.clone()).collect();
    let x = to_matrix(&xs, n_in)?;
    let y = to_matrix(&ys, n_out)?;
    let mlp = Mlp::new(&cfg.widths(n_in, n_out), cfg.activation, cfg.seed);
    let mut obj = MlpObjective { mlp, x, y };
    let (train, val) = split_indices(data.len(), cfg.validation_fraction, cfg.seed);
    let history = optimize(&mut obj, &train, &val, cfg)?;
    Ok(TrainedMlp { mlp: obj.mlp, history })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> Vec<f64> {
        (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn zero_epochs_returns_initial_network() {
        let cfg = TrainConfig { epochs: 0, seed: 3, ..Default::default() };
        let data: Vec<_> = grid(10).into_iter().map(|x| (vec![x], vec![x])).collect();
        let t = train_mlp(&data, &cfg).unwrap();
        assert_eq!(t.mlp, Mlp::new(&cfg.widths(1, 1), cfg.activation, 3));
        assert!(t.history.epochs.is_empty());
    }

    #[test]
    fn fits_identity_line() {
        let data: Vec<_> = grid(100).into_iter().map(|x| (vec![x], vec![x])).collect();
        let cfg = TrainConfig { learning_rate: 1e-2, epochs: 1000, seed: 1, ..Default::default() };
        let t = train_mlp(&data, &cfg).unwrap();
        let test: Vec<f64> = (0..37).map(|i| (i as f64 + 0.5) / 37.0).collect();
        let mse: f64 = test.iter().map(|x| (t.mlp.predict(&[*x]).unwrap()[0] - x).powi(2)).sum::<f64>() / test.len() as f64;
        // Closed-form least squares recovers y = x exactly, so its test MSE is 0.
        assert!(mse < 1e-3, "mse {mse}");
    }

    #[test]
    fn fits_parabola() {
        let data: Vec<_> = grid(100).into_iter().map(|x| (vec![x], vec![x * x])).collect();
        let cfg = TrainConfig { learning_rate: 1e-2, epochs: 1000, seed: 2, ..Default::default() };
        let t = train_mlp(&data, &cfg).unwrap();
        let test: Vec<f64> = (0..37).map(|i| (i as f64 + 0.5) / 37.0).collect();
        let mse: f64 = test.iter().map(|x| (t.mlp.predict(&[*x]).unwrap()[0] - x * x).powi(2)).sum::<f64>() / test.len() as f64;
        assert!(mse < 1e-3, "mse {mse}");
    }

    #[test]
    fn training_is_deterministic() {
        let data: Vec<_> = grid(40).into_iter().map(|x| (vec![x], vec![x.sin()])).collect();
        let cfg = TrainConfig { epochs: 50, batch_size: 8, validation_fraction: 0.25, seed: 5, ..Default::default() };
        let a = train_mlp(&data, &cfg).unwrap();
        let b = train_mlp(&data, &cfg).unwrap();
        assert_eq!(a.mlp, b.mlp);
        assert_eq!(a.history, b.history);
        assert!(a.history.epochs[0].val_loss.is_some());
    }

    #[test]
    fn divergence_is_reported() {
        let data: Vec<_> = grid(10).into_iter().map(|x| (vec![x], vec![1e200 * x])).collect();
        let cfg = TrainConfig { epochs: 5, optimizer: Optimizer::Sgd, learning_rate: 1e10, ..Default::default() };
        assert!(matches!(train_mlp(&data, &cfg), Err(Error::NonFinite(_))));
    }

    #[test]
    fn cosine_schedule_endpoints() {
        let c = TrainConfig { learning_rate: 2.0, epochs: 11, final_lr_fraction: 0.1, ..Default::default() };
        assert_eq!(c.learning_rate_at(0), 2.0);
        assert!((c.learning_rate_at(10) - 0.2).abs() < 1e-12);
        assert!((c.learning_rate_at(5) - 1.1).abs() < 1e-12);
        let flat = TrainConfig { learning_rate: 2.0, epochs: 11, ..Default::default() };
        assert!((0..11).all(|e| flat.learning_rate_at(e) == 2.0));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig { learning_rate: 0.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { final_lr_fraction: 0.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { validation_fraction: 1.0, ..Default::default() }.validate().is_err());
        assert!(train_mlp(&[], &TrainConfig::default()).is_err());
    }
}
