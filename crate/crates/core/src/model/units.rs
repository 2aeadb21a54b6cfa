//! Units-covariant regression.
//!
//! A prediction is a power product of the inputs carrying the target
//! dimension (the scaffold) times a learned function of the dimensionless
//! Pi features. Both factors are evaluated in log space:
//!
//! `log ŷ = Σ pᵢ log xᵢ + p_C θ + f(u)`, with `u_k = (log π_k − center_k) / scale_k`,
//!
//! where `θ` is the log-magnitude of an optional learned dimensional constant.

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use super::mlp::Mlp;
use super::train::{optimize, split_indices, LossHistory, Objective, TrainConfig};
use crate::dimensions::{pi_basis, solve_target, Dimension, Rational, UnitScaling};
use crate::{Error, Result};

/// Positive-valued inputs with declared dimensions and a positive target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitsData {
    pub names: Vec<String>,
    pub dims: Vec<Dimension>,
    pub rows: Vec<Vec<f64>>,
    pub target: Vec<f64>,
}

impl UnitsData {
    pub fn new(names: Vec<String>, dims: Vec<Dimension>, rows: Vec<Vec<f64>>, target: Vec<f64>) -> Result<Self> {
        let d = Self { names, dims, rows, target };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if self.names.len() != self.dims.len() {
            return Err(Error::InvalidArgument("one dimension per input name is required".into()));
        }
        if self.rows.is_empty() {
            return Err(Error::InvalidArgument("units data is empty".into()));
        }
        if self.rows.len() != self.target.len() {
            return Err(Error::InvalidArgument(format!("{} rows but {} targets", self.rows.len(), self.target.len())));
        }
        for r in &self.rows {
            if r.len() != self.dims.len() {
                return Err(Error::WidthMismatch { expected: self.dims.len(), found: r.len() });
            }
        }
        let positive = |v: &f64| *v > 0.0 && v.is_finite();
        if !self.rows.iter().flatten().all(positive) || !self.target.iter().all(positive) {
            return Err(Error::InvalidArgument("power-product models need finite positive inputs and targets".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn subset(&self, idx: &[usize]) -> UnitsData {
        UnitsData {
            names: self.names.clone(),
            dims: self.dims.clone(),
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            target: idx.iter().map(|&i| self.target[i]).collect(),
        }
    }

    /// The same data expressed in another unit system.
    pub fn rescaled(&self, s: &UnitScaling, target_dim: &Dimension) -> UnitsData {
        let f: Vec<f64> = self.dims.iter().map(|d| s.factor(d)).collect();
        let ft = s.factor(target_dim);
        UnitsData {
            names: self.names.clone(),
            dims: self.dims.clone(),
            rows: self.rows.iter().map(|r| r.iter().zip(&f).map(|(x, k)| x * k).collect()).collect(),
            target: self.target.iter().map(|y| y * ft).collect(),
        }
    }
}

/// A dimensional constant whose magnitude is learned.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnedConstant {
    pub name: String,
    pub dim: Dimension,
    pub log_magnitude: f64,
}

impl LearnedConstant {
    pub fn magnitude(&self) -> f64 {
        self.log_magnitude.exp()
    }
}

/// The dimensionless factor multiplying the scaffold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InnerFunction {
    /// No Pi features exist: the factor is a single fitted constant.
    Constant { log_alpha: f64 },
    /// `out_shift + out_scale · mlp(u)` on standardized log Pi features `u`.
    Mlp { mlp: Mlp, center: Vec<f64>, scale: Vec<f64>, out_shift: f64, out_scale: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitsCovariantModel {
    pub input_names: Vec<String>,
    pub input_dims: Vec<Dimension>,
    pub target_dim: Dimension,
    pub constant: Option<LearnedConstant>,
    /// Scaffold exponents over the inputs, then the constant if present.
    #[serde(with = "crate::dimensions::rational_vec")]
    pub scaffold: Vec<Rational>,
    /// Pi exponent vectors in the same layout as `scaffold`.
    #[serde(with = "crate::dimensions::rational_vec_vec")]
    pub pi_basis: Vec<Vec<Rational>>,
    pub inner: InnerFunction,
}

pub(crate) fn to_f64(r: &Rational) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

impl UnitsCovariantModel {
    fn n_inputs(&self) -> usize {
        self.input_dims.len()
    }

    fn log_inputs(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_inputs() {
            return Err(Error::WidthMismatch { expected: self.n_inputs(), found: x.len() });
        }
        if x.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidArgument("power-product models need positive inputs".into()));
        }
        let mut l: Vec<f64> = x.iter().map(|v| v.ln()).collect();
        if let Some(c) = &self.constant {
            l.push(c.log_magnitude);
        }
        Ok(l)
    }

    /// Natural log of the prediction.
    pub fn predict_log(&self, x: &[f64]) -> Result<f64> {
        let l = self.log_inputs(x)?;
        let dot = |e: &[Rational]| e.iter().zip(&l).map(|(e, v)| to_f64(e) * v).sum::<f64>();
        let scaffold = dot(&self.scaffold);
        let f = match &self.inner {
            InnerFunction::Constant { log_alpha } => *log_alpha,
            InnerFunction::Mlp { mlp, center, scale, out_shift, out_scale } => {
                let u: Vec<f64> = self.pi_basis.iter().enumerate().map(|(k, n)| (dot(n) - center[k]) / scale[k]).collect();
                out_shift + out_scale * mlp.predict(&u)?[0]
            }
        };
        Ok(scaffold + f)
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        Ok(self.predict_log(x)?.exp())
    }

    /// Log-space mean squared error on `data`.
    pub fn log_mse(&self, data: &UnitsData) -> Result<f64> {
        let mut s = 0.0;
        for (x, y) in data.rows.iter().zip(&data.target) {
            s += (self.predict_log(x)? - y.ln()).powi(2);
        }
        Ok(s / data.len().max(1) as f64)
    }

    /// The same model expressed in another unit system: only the learned
    /// constant's numeric value changes.
    pub fn rescaled(&self, s: &UnitScaling) -> UnitsCovariantModel {
        let mut m = self.clone();
        if let Some(c) = &mut m.constant {
            c.log_magnitude += s.factor(&c.dim).ln();
        }
        m
    }

    /// Pi features of one input row, as power products.
    pub fn pi_features(&self, x: &[f64]) -> Result<Vec<f64>> {
        let l = self.log_inputs(x)?;
        Ok(self.pi_basis.iter().map(|n| n.iter().zip(&l).map(|(e, v)| to_f64(e) * v).sum::<f64>().exp()).collect())
    }
}

struct UnitsObjective {
    mlp: Mlp,
    theta: f64,
    scaffold_fixed: Vec<f64>,
    pi_fixed: Array2<f64>,
    n_c: Vec<f64>,
    p_c: f64,
    center: Vec<f64>,
    scale: Vec<f64>,
    out_shift: f64,
    out_scale: f64,
    target: Vec<f64>,
}

impl UnitsObjective {
    fn features(&self, idx: &[usize]) -> Array2<f64> {
        let mut u = self.pi_fixed.select(Axis(0), idx);
        for mut row in u.axis_iter_mut(Axis(0)) {
            for (k, v) in row.iter_mut().enumerate() {
                *v = (*v + self.n_c[k] * self.theta - self.center[k]) / self.scale[k];
            }
        }
        u
    }

    fn residuals(&self, idx: &[usize], out: &Array2<f64>) -> Vec<f64> {
        idx.iter()
            .enumerate()
            .map(|(b, &r)| self.scaffold_fixed[r] + self.p_c * self.theta + self.out_shift + self.out_scale * out[[b, 0]] - self.target[r])
            .collect()
    }
}

impl Objective for UnitsObjective {
    fn num_params(&self) -> usize {
        self.mlp.num_params() + 1
    }

    fn loss_grad(&self, batch: &[usize], grad: &mut [f64]) -> f64 {
        let u = self.features(batch);
        let cache = self.mlp.forward_cached(u.view());
        let res = self.residuals(batch, cache.output());
        let n = batch.len() as f64;
        let loss = res.iter().map(|r| r * r).sum::<f64>() / n;
        let d_out = Array2::from_shape_fn((batch.len(), 1), |(b, _)| 2.0 * res[b] / n * self.out_scale);
        let (g_mlp, g_theta) = grad.split_at_mut(self.mlp.num_params());
        let du = self.mlp.backward(&cache, d_out.view(), g_mlp);
        let mut gt = 0.0;
        for b in 0..batch.len() {
            let through_pi: f64 = (0..self.n_c.len()).map(|k| du[[b, k]] * self.n_c[k] / self.scale[k]).sum();
            gt += 2.0 * res[b] / n * self.p_c + through_pi;
        }
        g_theta[0] += gt;
        loss
    }

    fn loss(&self, idx: &[usize]) -> f64 {
        let out = self.mlp.forward(self.features(idx).view());
        let res = self.residuals(idx, &out);
        res.iter().map(|r| r * r).sum::<f64>() / idx.len().max(1) as f64
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.mlp.params.as_mut_slice(), std::slice::from_mut(&mut self.theta)]
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

/// Fit on the rows in `train`; `val` rows only feed the loss history.
pub(crate) fn fit_on(
    data: &UnitsData,
    target_dim: &Dimension,
    extra: Option<&Dimension>,
    cfg: &TrainConfig,
    train: &[usize],
    val: &[usize],
) -> Result<(UnitsCovariantModel, LossHistory)> {
    data.validate()?;
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::InvalidArgument("no training rows".into()));
    }
    let mut dims = data.dims.clone();
    if let Some(d) = extra {
        dims.push(*d);
    }
    let sol = solve_target(&dims, target_dim)?;
    let basis = pi_basis(&dims);
    let n_in = data.dims.len();
    let with_const = extra.is_some();

    let logs: Vec<Vec<f64>> = data.rows.iter().map(|r| r.iter().map(|v| v.ln()).collect()).collect();
    let fixed = |e: &[Rational], l: &[f64]| e[..n_in].iter().zip(l).map(|(e, v)| to_f64(e) * v).sum::<f64>();
    let scaffold_fixed: Vec<f64> = logs.iter().map(|l| fixed(&sol.particular, l)).collect();
    let target: Vec<f64> = data.target.iter().map(|y| y.ln()).collect();
    let p_c = if with_const { to_f64(&sol.particular[n_in]) } else { 0.0 };
    let n_c: Vec<f64> = basis.iter().map(|n| if with_const { to_f64(&n[n_in]) } else { 0.0 }).collect();
    let pi_fixed = Array2::from_shape_fn((data.len(), basis.len()), |(r, k)| fixed(&basis[k], &logs[r]));

    // Start the constant where it centres the log Pi features on the
    // training rows (least squares over features).
    let col_means: Vec<f64> = (0..basis.len()).map(|k| mean(&train.iter().map(|&r| pi_fixed[[r, k]]).collect::<Vec<_>>())).collect();
    let nn: f64 = n_c.iter().map(|v| v * v).sum();
    let theta0 = if nn > 0.0 { -n_c.iter().zip(&col_means).map(|(a, m)| a * m).sum::<f64>() / nn } else { 0.0 };

    let constant = extra.map(|d| LearnedConstant { name: "C".into(), dim: *d, log_magnitude: theta0 });
    let residual_mean = mean(&train.iter().map(|&r| target[r] - scaffold_fixed[r] - p_c * theta0).collect::<Vec<_>>());

    if basis.is_empty() {
        let model = UnitsCovariantModel {
            input_names: data.names.clone(),
            input_dims: data.dims.clone(),
            target_dim: *target_dim,
            constant,
            scaffold: sol.particular,
            pi_basis: basis,
            inner: InnerFunction::Constant { log_alpha: residual_mean },
        };
        return Ok((model, LossHistory::default()));
    }

    // With a learned constant its magnitude is the only location parameter of
    // the Pi features, so the features are not re-centred and the first layer
    // carries no bias.
    let center: Vec<f64> = if with_const { vec![0.0; basis.len()] } else { col_means.clone() };
    let scale: Vec<f64> = (0..basis.len())
        .map(|k| {
            let shift = n_c[k] * theta0 - center[k];
            let var = mean(&train.iter().map(|&r| (pi_fixed[[r, k]] + shift).powi(2)).collect::<Vec<_>>())
                - mean(&train.iter().map(|&r| pi_fixed[[r, k]] + shift).collect::<Vec<_>>()).powi(2);
            let sd = var.max(0.0).sqrt();
            if sd > 1e-12 {
                sd
            } else {
                1.0
            }
        })
        .collect();
    let widths = cfg.widths(basis.len(), 1);
    let mlp = if with_const {
        Mlp::without_first_layer_bias(&widths, cfg.activation, cfg.seed)
    } else {
        Mlp::new(&widths, cfg.activation, cfg.seed)
    };
    // The network predicts the standardized residual of the scaffold.
    let resid: Vec<f64> = train.iter().map(|&r| target[r] - scaffold_fixed[r] - p_c * theta0).collect();
    let resid_sd = (mean(&resid.iter().map(|v| (v - residual_mean).powi(2)).collect::<Vec<_>>())).sqrt();
    let out_scale = if resid_sd > 1e-12 { resid_sd } else { 1.0 };

    let mut obj = UnitsObjective { mlp, theta: theta0, scaffold_fixed, pi_fixed, n_c, p_c, center, scale, out_shift: residual_mean, out_scale, target };
    let history = optimize(&mut obj, train, val, cfg)?;
    let model = UnitsCovariantModel {
        input_names: data.names.clone(),
        input_dims: data.dims.clone(),
        target_dim: *target_dim,
        constant: constant.map(|c| LearnedConstant { log_magnitude: obj.theta, ..c }),
        scaffold: sol.particular,
        pi_basis: basis,
        inner: InnerFunction::Mlp { mlp: obj.mlp, center: obj.center, scale: obj.scale, out_shift: obj.out_shift, out_scale: obj.out_scale },
    };
    Ok((model, history))
}

/// Fit a units-covariant model. `extra` adds a dimensional constant of that
/// dimension whose magnitude is trained jointly with the inner network.
/// Returns `Infeasible` when the target dimension is not reachable, which
/// signals that a dimensional constant is missing.
pub fn fit_units_covariant(
    data: &UnitsData,
    target_dim: &Dimension,
    extra: Option<&Dimension>,
    cfg: &TrainConfig,
) -> Result<(UnitsCovariantModel, LossHistory)> {
    let (train, val) = split_indices(data.len(), cfg.validation_fraction, cfg.seed);
    fit_on(data, target_dim, extra, cfg, &train, &val)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dim(s: &str) -> Dimension {
        Dimension::parse(s).unwrap()
    }

    /// Rayleigh-Jeans data: y = 2ckT/λ⁴ exactly.
    fn rj_data(n: usize) -> (UnitsData, Dimension) {
        let (c, k) = (299_792_458.0, 1.380_649e-23);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut rows = Vec::new();
        let mut target = Vec::new();
        for _ in 0..n {
            let lam: f64 = 10f64.powf(rng.random_range(-6.0..-4.0));
            let t: f64 = rng.random_range(300.0..8000.0);
            rows.push(vec![lam, t, c, k]);
            target.push(2.0 * c * k * t / lam.powi(4));
        }
        let names = ["lambda", "T", "c", "k"].map(String::from).to_vec();
        let dims = vec![dim("m"), dim("K"), dim("m/s"), dim("kg*m^2*s^-2*K^-1")];
        (UnitsData::new(names, dims, rows, target).unwrap(), dim("kg*m^-1*s^-3"))
    }

    #[test]
    fn constant_model_recovers_prefactor() {
        let (data, td) = rj_data(50);
        let (m, _) = fit_units_covariant(&data, &td, None, &TrainConfig::default()).unwrap();
        assert!(m.pi_basis.is_empty());
        match m.inner {
            InnerFunction::Constant { log_alpha } => assert!((log_alpha.exp() - 2.0).abs() < 1e-9),
            _ => panic!("expected constant inner function"),
        }
        assert!(m.log_mse(&data).unwrap() < 1e-20);
    }

    #[test]
    fn infeasible_without_constant() {
        let data = UnitsData::new(vec!["m".into()], vec![dim("kg")], vec![vec![1.0]], vec![1.0]).unwrap();
        assert!(matches!(fit_units_covariant(&data, &dim("K"), None, &TrainConfig::default()), Err(Error::Infeasible)));
        // A temperature constant makes it feasible.
        let cfg = TrainConfig { epochs: 1, ..Default::default() };
        assert!(fit_units_covariant(&data, &dim("K"), Some(&dim("K")), &cfg).is_ok());
    }

    #[test]
    fn predictions_commute_with_unit_changes() {
        let (data, td) = rj_data(64);
        let cfg = TrainConfig { epochs: 20, hidden: vec![8, 8], seed: 4, ..Default::default() };
        let (m, _) = fit_units_covariant(&data, &td, Some(&dim("kg^-1*m^-1*s^-1*K^-1")), &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..32 {
            let s = UnitScaling::new(std::array::from_fn(|_| rng.random_range(-3.0f64..3.0).exp())).unwrap();
            let moved = data.rescaled(&s, &td);
            let m2 = m.rescaled(&s);
            for (x, x2) in data.rows.iter().zip(&moved.rows).take(8) {
                let expect = m.predict(x).unwrap() * s.factor(&td);
                let got = m2.predict(x2).unwrap();
                assert!((got - expect).abs() <= 1e-10 * expect.abs(), "{got} vs {expect}");
            }
        }
    }

    #[test]
    fn scaffold_has_target_dimension() {
        let (data, td) = rj_data(8);
        let cfg = TrainConfig { epochs: 1, ..Default::default() };
        for extra in [None, Some(dim("s")), Some(dim("kg^-1*m^-1*s^-1*K^-1"))] {
            let (m, _) = fit_units_covariant(&data, &td, extra.as_ref(), &cfg).unwrap();
            let mut dims = data.dims.clone();
            dims.extend(extra);
            assert_eq!(crate::dimensions::combine(&dims, &m.scaffold), td);
            for n in &m.pi_basis {
                assert!(crate::dimensions::combine(&dims, n).is_dimensionless());
            }
        }
    }

    #[test]
    fn constant_gradient_matches_finite_differences() {
        let (data, td) = rj_data(30);
        let cfg = TrainConfig { epochs: 0, hidden: vec![6], seed: 2, ..Default::default() };
        let extra = dim("kg^-1*m^-1*s^-1*K^-1");
        let (m, _) = fit_units_covariant(&data, &td, Some(&extra), &cfg).unwrap();
        let InnerFunction::Mlp { mlp, center, scale, out_shift, out_scale } = m.inner.clone() else { panic!() };
        let n_in = data.dims.len();
        let logs: Vec<Vec<f64>> = data.rows.iter().map(|r| r.iter().map(|v| v.ln()).collect()).collect();
        let fixed = |e: &[Rational], l: &[f64]| e[..n_in].iter().zip(l).map(|(e, v)| to_f64(e) * v).sum::<f64>();
        let mut obj = UnitsObjective {
            mlp,
            theta: m.constant.as_ref().unwrap().log_magnitude + 0.3,
            scaffold_fixed: logs.iter().map(|l| fixed(&m.scaffold, l)).collect(),
            pi_fixed: Array2::from_shape_fn((data.len(), 1), |(r, k)| fixed(&m.pi_basis[k], &logs[r])),
            n_c: m.pi_basis.iter().map(|n| to_f64(&n[n_in])).collect(),
            p_c: to_f64(&m.scaffold[n_in]),
            center,
            scale,
            out_shift,
            out_scale,
            target: data.target.iter().map(|y| y.ln()).collect(),
        };
        let idx: Vec<usize> = (0..data.len()).collect();
        let mut grad = vec![0.0; obj.num_params()];
        obj.loss_grad(&idx, &mut grad);
        let h = 1e-5;
        let t0 = obj.theta;
        obj.theta = t0 + h;
        let lp = obj.loss(&idx);
        obj.theta = t0 - h;
        let lm = obj.loss(&idx);
        let fd = (lp - lm) / (2.0 * h);
        let g = *grad.last().unwrap();
        assert!((fd - g).abs() <= 1e-4 * (fd.abs() + g.abs()), "{fd} vs {g}");
    }
}
