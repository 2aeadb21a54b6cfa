//! Planck-law data and the three-way units-covariance experiment.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dimensions::{Dimension, Quantity};
use crate::model::mlp::Mlp;
use crate::model::search::{search_with_validation, CandidateScore, ConstantSearch};
use crate::model::train::{train_mlp, TrainConfig};
use crate::model::units::{fit_on, UnitsCovariantModel, UnitsData};
use crate::report::{fmt_f64, Series};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysConstants {
    pub c: Quantity,
    pub k: Quantity,
    pub h: Quantity,
}

pub fn speed_dim() -> Dimension {
    Dimension::from_ints([0, 1, -1, 0])
}

pub fn boltzmann_dim() -> Dimension {
    Dimension::from_ints([1, 2, -2, -1])
}

pub fn action_dim() -> Dimension {
    Dimension::from_ints([1, 2, -1, 0])
}

/// Spectral radiance per unit wavelength.
pub fn intensity_dim() -> Dimension {
    Dimension::from_ints([1, -1, -3, 0])
}

impl Default for PhysConstants {
    fn default() -> Self {
        Self {
            c: Quantity::new(299_792_458.0, speed_dim()),
            k: Quantity::new(1.380_649e-23, boltzmann_dim()),
            h: Quantity::new(6.626_070_15e-34, action_dim()),
        }
    }
}

impl PhysConstants {
    pub fn validate(&self) -> Result<()> {
        for (name, q, d) in [("c", &self.c, speed_dim()), ("k", &self.k, boltzmann_dim()), ("h", &self.h, action_dim())] {
            if q.dim != d {
                return Err(Error::DimensionError(format!("{name} must have dimension {d}, got {}", q.dim)));
            }
            if !(q.value > 0.0 && q.value.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {}", q.value)));
            }
        }
        Ok(())
    }

    /// `c·k·h⁻²`, the physical constant with the dimension the search should find.
    pub fn reference_constant(&self) -> Quantity {
        Quantity::new(self.c.value * self.k.value / (self.h.value * self.h.value), self.c.dim * self.k.dim / (self.h.dim * self.h.dim))
    }
}

/// `Bλ = 2hc²/λ⁵ · 1/(exp(hc/(λkT)) − 1)`.
pub fn planck_intensity(lambda: &Quantity, t: &Quantity, consts: &PhysConstants) -> Result<Quantity> {
    if lambda.dim != Dimension::length() {
        return Err(Error::DimensionError(format!("wavelength must be a length, got {}", lambda.dim)));
    }
    if t.dim != Dimension::temperature() {
        return Err(Error::DimensionError(format!("temperature must be a temperature, got {}", t.dim)));
    }
    consts.validate()?;
    if !(lambda.value > 0.0 && t.value > 0.0) {
        return Err(Error::InvalidArgument("wavelength and temperature must be positive".into()));
    }
    let (c, k, h) = (consts.c.value, consts.k.value, consts.h.value);
    let x = h * c / (lambda.value * k * t.value);
    let value = 2.0 * h * c * c / lambda.value.powi(5) / x.exp_m1();
    let dim = consts.h.dim * consts.c.dim.pow(2.into()) / lambda.dim.pow(5.into());
    Ok(Quantity::new(value, dim))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BlackbodyConfig {
    pub version: u32,
    pub lambda_range: [f64; 2],
    pub temperature_range: [f64; 2],
    pub n_samples: usize,
    pub noise: f64,
    pub seed: u64,
    /// Fractions of samples for training and validation; the rest is test.
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub lattice_bound: i64,
    /// Epochs and batch size for each search candidate; the selected
    /// constant is then refit with the full training config.
    pub search_epochs: usize,
    pub search_batch_size: usize,
    pub constants: PhysConstants,
    /// Temperature of the spectrum drawn in the SVG plot.
    pub plot_temperature: f64,
}

impl Default for BlackbodyConfig {
    fn default() -> Self {
        Self {
            version: 1,
            lambda_range: [2e-7, 5e-5],
            temperature_range: [300.0, 8000.0],
            n_samples: 5000,
            noise: 0.05,
            seed: 0,
            train_fraction: 0.6,
            val_fraction: 0.2,
            lattice_bound: 1,
            search_epochs: 300,
            search_batch_size: 256,
            constants: PhysConstants::default(),
            plot_temperature: 5000.0,
        }
    }
}

impl BlackbodyConfig {
    pub fn validate(&self) -> Result<()> {
        let [l0, l1] = self.lambda_range;
        let [t0, t1] = self.temperature_range;
        if !(l0 > 0.0 && l1 > l0 && t0 > 0.0 && t1 > t0) {
            return Err(Error::InvalidArgument("wavelength and temperature ranges must be positive and increasing".into()));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::InvalidArgument(format!("noise must be nonnegative, got {}", self.noise)));
        }
        if self.n_samples == 0 {
            return Err(Error::InvalidArgument("sample count must be positive".into()));
        }
        let (a, b) = (self.train_fraction, self.val_fraction);
        if !(a > 0.0 && b >= 0.0 && a + b < 1.0) {
            return Err(Error::InvalidArgument("train and validation fractions must leave a test set".into()));
        }
        self.constants.validate()
    }
}

/// Training defaults for this experiment: the shared defaults with a
/// larger step, since the log-intensity spans hundreds of units.
pub fn default_train_config() -> TrainConfig {
    TrainConfig { learning_rate: 3e-3, ..TrainConfig::default() }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlackbodyData {
    pub lambda: Vec<f64>,
    pub temperature: Vec<f64>,
    pub intensity: Vec<f64>,
}

impl BlackbodyData {
    pub fn len(&self) -> usize {
        self.lambda.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambda.is_empty()
    }

    /// Features `{λ, T, c, k}` for units-covariant fitting.
    pub fn units_data(&self, consts: &PhysConstants) -> Result<UnitsData> {
        UnitsData::new(
            ["lambda", "T", "c", "k"].map(String::from).to_vec(),
            vec![Dimension::length(), Dimension::temperature(), consts.c.dim, consts.k.dim],
            self.lambda.iter().zip(&self.temperature).map(|(l, t)| vec![*l, *t, consts.c.value, consts.k.value]).collect(),
            self.intensity.clone(),
        )
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["lambda", "T", "B"])?;
        for i in 0..self.len() {
            out.write_record([fmt_f64(self.lambda[i]), fmt_f64(self.temperature[i]), fmt_f64(self.intensity[i])])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Samples with λ log-uniform, T uniform and multiplicative Gaussian noise.
pub fn generate_blackbody(cfg: &BlackbodyConfig, consts: &PhysConstants) -> Result<BlackbodyData> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (ll0, ll1) = (cfg.lambda_range[0].ln(), cfg.lambda_range[1].ln());
    let mut d = BlackbodyData { lambda: Vec::new(), temperature: Vec::new(), intensity: Vec::new() };
    for _ in 0..cfg.n_samples {
        let lambda = rng.random_range(ll0..=ll1).exp();
        let t = rng.random_range(cfg.temperature_range[0]..=cfg.temperature_range[1]);
        let eps: f64 = rng.sample(StandardNormal);
        let b = planck_intensity(&Quantity::new(lambda, Dimension::length()), &Quantity::new(t, Dimension::temperature()), consts)?.value;
        d.lambda.push(lambda);
        d.temperature.push(t);
        // Keep intensities positive for the log-space fits.
        d.intensity.push(b * (1.0 + cfg.noise * eps).max(1e-6));
    }
    Ok(d)
}

/// Plain MLP on standardized raw `(λ, T)` predicting standardized `log Bλ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlainModel {
    pub mlp: Mlp,
    pub input_mean: [f64; 2],
    pub input_scale: [f64; 2],
    pub output_mean: f64,
    pub output_scale: f64,
}

impl PlainModel {
    pub fn predict_log(&self, lambda: f64, t: f64) -> f64 {
        let x = [(lambda - self.input_mean[0]) / self.input_scale[0], (t - self.input_mean[1]) / self.input_scale[1]];
        self.mlp.predict(&x).expect("two inputs")[0] * self.output_scale + self.output_mean
    }
}

fn mean_std(v: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = v.clone().count().max(1) as f64;
    let m = v.clone().sum::<f64>() / n;
    let s = (v.map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt();
    (m, if s > 0.0 { s } else { 1.0 })
}

fn fit_plain(d: &BlackbodyData, train: &[usize], cfg: &TrainConfig) -> Result<PlainModel> {
    let (lm, ls) = mean_std(train.iter().map(|&i| d.lambda[i]));
    let (tm, ts) = mean_std(train.iter().map(|&i| d.temperature[i]));
    let (ym, ys) = mean_std(train.iter().map(|&i| d.intensity[i].ln()));
    let rows: Vec<(Vec<f64>, Vec<f64>)> = train
        .iter()
        .map(|&i| (vec![(d.lambda[i] - lm) / ls, (d.temperature[i] - tm) / ts], vec![(d.intensity[i].ln() - ym) / ys]))
        .collect();
    let trained = train_mlp(&rows, &TrainConfig { validation_fraction: 0.0, ..cfg.clone() })?;
    Ok(PlainModel { mlp: trained.mlp, input_mean: [lm, tm], input_scale: [ls, ts], output_mean: ym, output_scale: ys })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelScore {
    pub name: String,
    /// Mean squared error of `ln Bλ` on the test rows.
    pub test_mse: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChosenConstant {
    pub dim: Dimension,
    pub exponents: [i64; 4],
    /// Magnitude after refitting with the full training config.
    pub magnitude: f64,
    /// Magnitude found during the search.
    pub search_magnitude: f64,
    pub reference_magnitude: f64,
    pub reference_dim: Dimension,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlackbodyReport {
    pub version: u32,
    pub seed: u64,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub models: Vec<ModelScore>,
    pub constant: ChosenConstant,
    pub constant_needed: bool,
    pub baseline_val_mse: Option<f64>,
    /// Lattice tuples equivalent to the chosen one on this data.
    pub equivalent: Vec<[i64; 4]>,
    pub scores: Vec<CandidateScore>,
    #[serde(skip)]
    pub fitted: Option<FittedModels>,
}

/// The trained models behind a report.
#[derive(Clone, Debug, PartialEq)]
pub struct FittedModels {
    pub without_constant: UnitsCovariantModel,
    pub with_constant: UnitsCovariantModel,
    pub plain: PlainModel,
    pub plot_temperature: f64,
    pub lambda_range: [f64; 2],
    pub constants: PhysConstants,
}

pub const MODEL_NAMES: [&str; 3] = ["units-covariant", "units-covariant+constant", "plain-mlp"];

impl BlackbodyReport {
    pub fn mse(&self, name: &str) -> Option<f64> {
        self.models.iter().find(|m| m.name == name).map(|m| m.test_mse)
    }

    pub fn write_scores_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["kg", "m", "s", "K", "dimension", "val_mse", "val_se", "magnitude"])?;
        for s in &self.scores {
            let mut rec: Vec<String> = s.exponents.iter().map(|e| e.to_string()).collect();
            rec.extend([s.dim.to_string(), fmt_f64(s.val_mse), fmt_f64(s.val_se), fmt_f64(s.magnitude)]);
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Spectra at the plot temperature: truth and the three fits.
    pub fn svg(&self) -> Option<String> {
        let f = self.fitted.as_ref()?;
        let t = f.plot_temperature;
        let (l0, l1) = (f.lambda_range[0].ln(), f.lambda_range[1].ln());
        let grid: Vec<f64> = (0..200).map(|i| (l0 + (l1 - l0) * i as f64 / 199.0).exp()).collect();
        let truth: Vec<(f64, f64)> = grid
            .iter()
            .map(|&l| (l, planck_intensity(&Quantity::new(l, Dimension::length()), &Quantity::new(t, Dimension::temperature()), &f.constants).map(|q| q.value).unwrap_or(f64::NAN)))
            .collect();
        let units = |m: &UnitsCovariantModel| -> Vec<(f64, f64)> {
            grid.iter().map(|&l| (l, m.predict(&[l, t, f.constants.c.value, f.constants.k.value]).unwrap_or(f64::NAN))).collect()
        };
        let series = vec![
            Series { label: "Planck", points: truth },
            Series { label: MODEL_NAMES[0], points: units(&f.without_constant) },
            Series { label: MODEL_NAMES[1], points: units(&f.with_constant) },
            Series { label: MODEL_NAMES[2], points: grid.iter().map(|&l| (l, f.plain.predict_log(l, t).exp())).collect() },
        ];
        Some(crate::report::svg_line_plot(&format!("Black-body spectrum at T = {t} K"), "wavelength [m]", "intensity", &series, true))
    }
}

fn split(n: usize, cfg: &BlackbodyConfig) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let (train, rest) = crate::model::train::split_indices(n, 1.0 - cfg.train_fraction, cfg.seed);
    let n_val = ((n as f64) * cfg.val_fraction).round() as usize;
    let n_val = n_val.min(rest.len());
    let mut rest = rest;
    let test = rest.split_off(n_val);
    let mut train = train;
    train.sort_unstable();
    rest.sort_unstable();
    let mut test = test;
    test.sort_unstable();
    (train, rest, test)
}

fn log_mse_units(m: &UnitsCovariantModel, d: &UnitsData, idx: &[usize]) -> Result<f64> {
    let mut s = 0.0;
    for &i in idx {
        s += (m.predict_log(&d.rows[i])? - d.target[i].ln()).powi(2);
    }
    Ok(s / idx.len().max(1) as f64)
}

/// Train the three models and compare them on held-out data.
pub fn run_blackbody_experiment(cfg: &BlackbodyConfig, train: &TrainConfig) -> Result<BlackbodyReport> {
    cfg.validate()?;
    let train = TrainConfig { seed: cfg.seed, ..train.clone() };
    let data = generate_blackbody(cfg, &cfg.constants)?;
    let ud = data.units_data(&cfg.constants)?;
    let target = intensity_dim();
    let (tr, va, te) = split(data.len(), cfg);
    if va.is_empty() || te.is_empty() {
        return Err(Error::InvalidArgument("validation and test sets must be nonempty".into()));
    }

    let (m1, _) = fit_on(&ud, &target, None, &train, &tr, &[])?;

    let search_cfg = TrainConfig { epochs: cfg.search_epochs, batch_size: cfg.search_batch_size, ..train.clone() };
    let search: ConstantSearch = search_with_validation(&ud, &target, cfg.lattice_bound, &search_cfg, &tr, &va)?;
    let chosen = search.chosen().clone();
    let (m2, _) = fit_on(&ud, &target, Some(&chosen.dim), &TrainConfig { seed: chosen.seed, ..train.clone() }, &tr, &[])?;

    let plain = fit_plain(&data, &tr, &train)?;
    let plain_mse = te.iter().map(|&i| (plain.predict_log(data.lambda[i], data.temperature[i]) - data.intensity[i].ln()).powi(2)).sum::<f64>() / te.len() as f64;

    let reference = cfg.constants.reference_constant();
    let report = BlackbodyReport {
        version: cfg.version,
        seed: cfg.seed,
        n_train: tr.len(),
        n_val: va.len(),
        n_test: te.len(),
        models: vec![
            ModelScore { name: MODEL_NAMES[0].into(), test_mse: log_mse_units(&m1, &ud, &te)? },
            ModelScore { name: MODEL_NAMES[1].into(), test_mse: log_mse_units(&m2, &ud, &te)? },
            ModelScore { name: MODEL_NAMES[2].into(), test_mse: plain_mse },
        ],
        constant: ChosenConstant {
            dim: chosen.dim,
            exponents: chosen.exponents,
            magnitude: m2.constant.as_ref().map(|c| c.magnitude()).unwrap_or(f64::NAN),
            search_magnitude: chosen.magnitude,
            reference_magnitude: reference.value,
            reference_dim: reference.dim,
        },
        constant_needed: search.constant_needed,
        baseline_val_mse: search.baseline.as_ref().map(|b| b.val_mse),
        equivalent: search.equivalent.iter().map(|&i| search.scores[i].exponents).collect(),
        scores: search.scores.clone(),
        fitted: Some(FittedModels {
            without_constant: m1,
            with_constant: m2,
            plain,
            plot_temperature: cfg.plot_temperature,
            lambda_range: cfg.lambda_range,
            constants: cfg.constants.clone(),
        }),
    };
    Ok(report)
}
