//! Springy double pendulum: ground-truth simulator, datasets and the
//! three-model experiment.
//!
//! Two point masses hang from a fixed pivot `q0` on two springs in a uniform
//! gravitational field `g`. All quantities are in SI base units.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dimensions::{Dimension, Quantity};
use crate::geometry::{dot3, haar_orthogonal, GeomFeature, Orthogonal3, Vec3};
use crate::model::dynamics::{fit_dynamics, predict_dynamics, DynamicsMode, DynamicsModel};
use crate::model::train::{LossHistory, TrainConfig};
use crate::report::{fmt_f64, Series};
use crate::{Error, Result};

pub type V3 = [f64; 3];

/// Separations below this are treated as coincident points.
pub const SINGULARITY_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PendulumParams {
    pub m1: f64,
    pub m2: f64,
    pub k1: f64,
    pub k2: f64,
    pub l1: f64,
    pub l2: f64,
    pub q0: V3,
    pub g: V3,
}

impl Default for PendulumParams {
    fn default() -> Self {
        Self { m1: 1.0, m2: 1.0, k1: 1.0, k2: 1.0, l1: 1.0, l2: 1.0, q0: [0.0; 3], g: [0.0, 0.0, -1.0] }
    }
}

impl PendulumParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("m1", self.m1), ("m2", self.m2), ("k1", self.k1), ("k2", self.k2), ("l1", self.l1), ("l2", self.l2)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        if self.q0.iter().chain(&self.g).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("pivot and gravity must be finite".into()));
        }
        Ok(())
    }

    /// Static equilibrium positions of the two masses.
    pub fn equilibrium(&self) -> (V3, V3) {
        let gn = norm(&self.g);
        let down = if gn > 0.0 { scale(&self.g, 1.0 / gn) } else { [0.0, 0.0, -1.0] };
        let d1 = self.l1 + (self.m1 + self.m2) * gn / self.k1;
        let d2 = self.l2 + self.m2 * gn / self.k2;
        let q1 = add(&self.q0, &scale(&down, d1));
        let q2 = add(&q1, &scale(&down, d2));
        (q1, q2)
    }

    pub fn rotated(&self, r: &Orthogonal3) -> PendulumParams {
        PendulumParams { q0: r.apply(&self.q0), g: r.apply(&self.g), ..self.clone() }
    }

    pub fn gravity(&self) -> Vec3 {
        Vec3::new(self.g, Dimension::from_ints([0, 1, -2, 0]))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PendulumState {
    pub q1: V3,
    pub q2: V3,
    pub p1: V3,
    pub p2: V3,
}

impl PendulumState {
    pub fn at_rest(q1: V3, q2: V3) -> Self {
        Self { q1, q2, p1: [0.0; 3], p2: [0.0; 3] }
    }

    pub fn flat(&self) -> [f64; 12] {
        let mut out = [0.0; 12];
        for (i, v) in [self.q1, self.q2, self.p1, self.p2].iter().enumerate() {
            out[3 * i..3 * i + 3].copy_from_slice(v);
        }
        out
    }

    pub fn from_flat(f: &[f64; 12]) -> Self {
        let v = |i: usize| [f[3 * i], f[3 * i + 1], f[3 * i + 2]];
        Self { q1: v(0), q2: v(1), p1: v(2), p2: v(3) }
    }

    pub fn rotated(&self, r: &Orthogonal3) -> Self {
        Self { q1: r.apply(&self.q1), q2: r.apply(&self.q2), p1: r.apply(&self.p1), p2: r.apply(&self.p2) }
    }

    fn axpy(&self, a: f64, d: &PendulumState) -> PendulumState {
        let f = |x: &V3, y: &V3| add(x, &scale(y, a));
        PendulumState { q1: f(&self.q1, &d.q1), q2: f(&self.q2, &d.q2), p1: f(&self.p1, &d.p1), p2: f(&self.p2, &d.p2) }
    }

    pub fn is_finite(&self) -> bool {
        self.flat().iter().all(|v| v.is_finite())
    }

    /// The state as typed geometric features.
    pub fn features(&self) -> Vec<GeomFeature> {
        let len = Dimension::length();
        let mom = Dimension::from_ints([1, 1, -1, 0]);
        vec![
            GeomFeature::vector("q1", Vec3::new(self.q1, len)),
            GeomFeature::vector("q2", Vec3::new(self.q2, len)),
            GeomFeature::vector("p1", Vec3::new(self.p1, mom)),
            GeomFeature::vector("p2", Vec3::new(self.p2, mom)),
        ]
    }
}

pub(crate) fn add(a: &V3, b: &V3) -> V3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub(crate) fn sub(a: &V3, b: &V3) -> V3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn scale(a: &V3, s: f64) -> V3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub(crate) fn norm(a: &V3) -> f64 {
    dot3(a, a).sqrt()
}

fn energy_dim() -> Dimension {
    Dimension::from_ints([1, 2, -2, 0])
}

/// Kinetic and potential energy.
pub fn energies(s: &PendulumState, p: &PendulumParams) -> (Quantity, Quantity) {
    let ke = dot3(&s.p1, &s.p1) / (2.0 * p.m1) + dot3(&s.p2, &s.p2) / (2.0 * p.m2);
    let r1 = sub(&s.q1, &p.q0);
    let r2 = sub(&s.q2, &p.q0);
    let e1 = norm(&r1) - p.l1;
    let e2 = norm(&sub(&s.q2, &s.q1)) - p.l2;
    let pe = 0.5 * p.k1 * e1 * e1 + 0.5 * p.k2 * e2 * e2 - p.m1 * dot3(&p.g, &r1) - p.m2 * dot3(&p.g, &r2);
    (Quantity::new(ke, energy_dim()), Quantity::new(pe, energy_dim()))
}

pub fn total_energy(s: &PendulumState, p: &PendulumParams) -> f64 {
    let (k, u) = energies(s, p);
    k.value + u.value
}

/// Hamilton's equations; the result holds `(q̇₁, q̇₂, ṗ₁, ṗ₂)`.
pub fn dynamics_rhs(s: &PendulumState, p: &PendulumParams) -> Result<PendulumState> {
    let d1 = sub(&s.q1, &p.q0);
    let d2 = sub(&s.q2, &s.q1);
    let (n1, n2) = (norm(&d1), norm(&d2));
    if n1 < SINGULARITY_TOL {
        return Err(Error::Singularity("first mass coincides with the pivot".into()));
    }
    if n2 < SINGULARITY_TOL {
        return Err(Error::Singularity("the two masses coincide".into()));
    }
    let f1 = scale(&d1, -p.k1 * (n1 - p.l1) / n1);
    let f2 = scale(&d2, -p.k2 * (n2 - p.l2) / n2);
    Ok(PendulumState {
        q1: scale(&s.p1, 1.0 / p.m1),
        q2: scale(&s.p2, 1.0 / p.m2),
        p1: add(&sub(&f1, &f2), &scale(&p.g, p.m1)),
        p2: add(&f2, &scale(&p.g, p.m2)),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<PendulumState>,
}

fn rk4_step(s: &PendulumState, p: &PendulumParams, dt: f64) -> Result<PendulumState> {
    let k1 = dynamics_rhs(s, p)?;
    let k2 = dynamics_rhs(&s.axpy(dt / 2.0, &k1), p)?;
    let k3 = dynamics_rhs(&s.axpy(dt / 2.0, &k2), p)?;
    let k4 = dynamics_rhs(&s.axpy(dt, &k3), p)?;
    Ok(s.axpy(dt / 6.0, &k1).axpy(dt / 3.0, &k2).axpy(dt / 3.0, &k3).axpy(dt / 6.0, &k4))
}

/// Classical fourth-order Runge-Kutta; returns `n_steps + 1` states.
pub fn integrate(s0: &PendulumState, p: &PendulumParams, dt: f64, n_steps: usize) -> Result<Trajectory> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
    }
    let mut times = Vec::with_capacity(n_steps + 1);
    let mut states = Vec::with_capacity(n_steps + 1);
    let mut s = *s0;
    times.push(0.0);
    states.push(s);
    for i in 1..=n_steps {
        s = rk4_step(&s, p, dt)?;
        times.push(i as f64 * dt);
        states.push(s);
    }
    Ok(Trajectory { times, states })
}

/// State at each requested time, integrating forward with step at most `dt`.
/// Times must be nonnegative and nondecreasing.
pub fn states_at(s0: &PendulumState, p: &PendulumParams, dt: f64, times: &[f64]) -> Result<Vec<PendulumState>> {
    let mut out = Vec::with_capacity(times.len());
    let mut s = *s0;
    let mut t = 0.0;
    for &target in times {
        if target < t {
            return Err(Error::InvalidArgument("label times must be nondecreasing".into()));
        }
        let n = ((target - t) / dt - 1e-9).ceil().max(0.0) as usize;
        if n > 0 {
            let h = (target - t) / n as f64;
            for _ in 0..n {
                s = rk4_step(&s, p, h)?;
            }
        }
        t = target;
        out.push(s);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingConfig {
    pub label_spacing: f64,
    pub dt: f64,
    pub position_radius: f64,
    pub momentum_radius: f64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self { label_spacing: 0.1, dt: 1e-3, position_radius: 0.5, momentum_radius: 0.5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub initial: PendulumState,
    /// Label times measured from the initial state.
    pub times: Vec<f64>,
    pub labels: Vec<PendulumState>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PendulumDataset {
    pub params: PendulumParams,
    pub samples: Vec<Sample>,
}

fn uniform_ball(rng: &mut ChaCha8Rng, radius: f64) -> V3 {
    loop {
        let d: V3 = [rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal)];
        let n = norm(&d);
        if n > 1e-12 {
            let r = radius * rng.random::<f64>().cbrt();
            return scale(&d, r / n);
        }
    }
}

fn sample_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ (index as u64).wrapping_add(0x632b_e59b_d9b4_e019).wrapping_mul(0xbf58_476d_1ce4_e5b9)
}

/// Random initial states near equilibrium with labels at `label_count`
/// evenly spaced later times.
pub fn generate_dataset(n: usize, label_count: usize, seed: u64, p: &PendulumParams) -> Result<PendulumDataset> {
    generate_dataset_with(n, label_count, seed, p, &SamplingConfig::default())
}

pub fn generate_dataset_with(n: usize, label_count: usize, seed: u64, p: &PendulumParams, sc: &SamplingConfig) -> Result<PendulumDataset> {
    p.validate()?;
    if n == 0 {
        return Err(Error::InvalidArgument("dataset needs at least one sample".into()));
    }
    if !(sc.label_spacing > 0.0 && sc.dt > 0.0) {
        return Err(Error::InvalidArgument("label spacing and time step must be positive".into()));
    }
    let (e1, e2) = p.equilibrium();
    let times: Vec<f64> = (1..=label_count).map(|i| i as f64 * sc.label_spacing).collect();
    let samples = (0..n)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(sample_seed(seed, i));
            let initial = PendulumState {
                q1: add(&e1, &uniform_ball(&mut rng, sc.position_radius)),
                q2: add(&e2, &uniform_ball(&mut rng, sc.position_radius)),
                p1: uniform_ball(&mut rng, sc.momentum_radius),
                p2: uniform_ball(&mut rng, sc.momentum_radius),
            };
            let labels = states_at(&initial, p, sc.dt, &times)?;
            Ok(Sample { initial, times: times.clone(), labels })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PendulumDataset { params: p.clone(), samples })
}

const STATE_COLUMNS: [&str; 12] = ["q1_x", "q1_y", "q1_z", "q2_x", "q2_y", "q2_z", "p1_x", "p1_y", "p1_z", "p2_x", "p2_y", "p2_z"];

impl PendulumDataset {
    /// One row per (sample, time); time 0 rows hold the initial states.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["sample".to_string(), "t".to_string()];
        header.extend(STATE_COLUMNS.iter().map(|s| s.to_string()));
        out.write_record(&header)?;
        for (i, s) in self.samples.iter().enumerate() {
            let rows = std::iter::once((0.0, &s.initial)).chain(s.times.iter().copied().zip(&s.labels));
            for (t, st) in rows {
                let mut rec = vec![i.to_string(), fmt_f64(t)];
                rec.extend(st.flat().iter().map(|v| fmt_f64(*v)));
                out.write_record(&rec)?;
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn num_pairs(&self) -> usize {
        self.samples.iter().map(|s| s.labels.len()).sum()
    }
}

/// `‖ẑ − z‖ / (‖ẑ‖ + ‖z‖)` over all twelve state components; 0 when both
/// states are zero.
pub fn state_rel_err(pred: &PendulumState, truth: &PendulumState) -> f64 {
    let (a, b) = (pred.flat(), truth.flat());
    let n = |v: &[f64; 12]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: f64 = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let den = n(&a) + n(&b);
    if den == 0.0 {
        0.0
    } else {
        diff / den
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PendulumConfig {
    pub version: u32,
    pub params: PendulumParams,
    pub sampling: SamplingConfig,
    pub n_train: usize,
    pub train_labels: usize,
    pub n_test: usize,
    pub test_labels: usize,
    pub seed: u64,
    pub modes: Vec<DynamicsMode>,
    /// Seeded O(3) elements per model in the equivariance check.
    pub equivariance_trials: usize,
}

impl Default for PendulumConfig {
    fn default() -> Self {
        Self {
            version: 1,
            params: PendulumParams::default(),
            sampling: SamplingConfig::default(),
            n_train: 500,
            train_labels: 5,
            n_test: 100,
            test_labels: 150,
            seed: 0,
            modes: vec![DynamicsMode::KnownG, DynamicsMode::NoG, DynamicsMode::LearnedG],
            equivariance_trials: 16,
        }
    }
}

/// Pendulum training defaults: the shared defaults with a larger step,
/// which the short training horizon tolerates.
pub fn default_train_config() -> TrainConfig {
    TrainConfig { learning_rate: 3e-3, epochs: 2000, final_lr_fraction: 0.1, ..TrainConfig::default() }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeReport {
    pub mode: DynamicsMode,
    pub final_train_loss: f64,
    /// Mean state relative error over test samples, one entry per label time.
    pub rel_err_curve: Vec<f64>,
    pub mean_rel_err: f64,
    /// Largest relative deviation `‖f(Rz) − R f(z)‖ / (‖f(Rz)‖ + ‖R f(z)‖)`
    /// over seeded O(3) elements and test states.
    pub equivariance_max_dev: f64,
    #[serde(skip)]
    pub model: Option<DynamicsModel>,
    #[serde(skip)]
    pub history: LossHistory,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnedGravity {
    pub u: V3,
    /// Angle between `u` and the true gravity vector.
    pub angle: f64,
    /// Angle between the lines spanned by `u` and `g`; the sign of `u` is not
    /// identifiable from data because the coefficients absorb it.
    pub axis_angle: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PendulumReport {
    pub version: u32,
    pub seed: u64,
    pub times: Vec<f64>,
    pub models: Vec<ModeReport>,
    pub learned_gravity: Option<LearnedGravity>,
    /// Ratio of mean test error, Learned-g over Known-g.
    pub learned_to_known_ratio: Option<f64>,
}

impl PendulumReport {
    pub fn mode(&self, mode: DynamicsMode) -> Option<&ModeReport> {
        self.models.iter().find(|m| m.mode == mode)
    }

    pub fn svg(&self) -> String {
        let series: Vec<Series<'_>> = self
            .models
            .iter()
            .map(|m| Series { label: m.mode.label(), points: self.times.iter().copied().zip(m.rel_err_curve.iter().copied()).collect() })
            .collect();
        crate::report::svg_line_plot("Springy double pendulum", "time [s]", "state relative error", &series, true)
    }
}

pub fn angle_between(a: &V3, b: &V3) -> f64 {
    let c = dot3(a, b) / (norm(a) * norm(b));
    c.clamp(-1.0, 1.0).acos()
}

/// Relative deviation between two predicted state lists.
fn state_list_dev(a: &[PendulumState], b: &[PendulumState]) -> f64 {
    a.iter().zip(b).map(|(x, y)| state_rel_err(x, y)).fold(0.0, f64::max)
}

/// Maximum equivariance deviation of `m` over seeded O(3) elements.
pub fn equivariance_deviation(m: &DynamicsModel, states: &[PendulumState], times: &[f64], trials: usize, seed: u64) -> f64 {
    let mut worst: f64 = 0.0;
    for t in 0..trials {
        let r = haar_orthogonal(seed.wrapping_add(t as u64), false);
        let rm = m.rotated(&r);
        for z in states {
            let lhs = predict_dynamics(&rm, &z.rotated(&r), times);
            let rhs: Vec<PendulumState> = predict_dynamics(m, z, times).iter().map(|s| s.rotated(&r)).collect();
            worst = worst.max(state_list_dev(&lhs, &rhs));
        }
    }
    worst
}

/// Train every configured model on the training protocol and evaluate on
/// long test trajectories.
pub fn run_pendulum_experiment(cfg: &PendulumConfig, train: &TrainConfig) -> Result<PendulumReport> {
    let train = &TrainConfig { seed: cfg.seed, ..train.clone() };
    let trainset = generate_dataset_with(cfg.n_train, cfg.train_labels, cfg.seed, &cfg.params, &cfg.sampling)?;
    let testset = generate_dataset_with(cfg.n_test, cfg.test_labels, cfg.seed ^ 0x7e57_7e57_7e57_7e57, &cfg.params, &cfg.sampling)?;
    let times = testset.samples[0].times.clone();
    let probe_states: Vec<PendulumState> = testset.samples.iter().take(8).map(|s| s.initial).collect();
    let probe_times: Vec<f64> = vec![0.1, 0.5, 2.0];
    let mut models = Vec::new();
    for &mode in &cfg.modes {
        let (model, history) = fit_dynamics(&trainset, mode, train)?;
        let mut curve = vec![0.0; times.len()];
        for s in &testset.samples {
            let pred = predict_dynamics(&model, &s.initial, &s.times);
            for (c, (p, t)) in curve.iter_mut().zip(pred.iter().zip(&s.labels)) {
                *c += state_rel_err(p, t);
            }
        }
        curve.iter_mut().for_each(|c| *c /= testset.samples.len() as f64);
        let mean_rel_err = curve.iter().sum::<f64>() / curve.len().max(1) as f64;
        let equivariance_max_dev = equivariance_deviation(&model, &probe_states, &probe_times, cfg.equivariance_trials, cfg.seed ^ 0xe9);
        models.push(ModeReport {
            mode,
            final_train_loss: history.last_train_loss().unwrap_or(f64::NAN),
            rel_err_curve: curve,
            mean_rel_err,
            equivariance_max_dev,
            model: Some(model),
            history,
        });
    }
    let learned_gravity = models.iter().find(|m| m.mode == DynamicsMode::LearnedG).and_then(|m| m.model.as_ref()).and_then(|m| m.u).map(|u| {
        let angle = angle_between(&u, &cfg.params.g);
        LearnedGravity { u, angle, axis_angle: angle.min(std::f64::consts::PI - angle) }
    });
    let err = |mode| models.iter().find(|m| m.mode == mode).map(|m| m.mean_rel_err);
    let learned_to_known_ratio = match (err(DynamicsMode::LearnedG), err(DynamicsMode::KnownG)) {
        (Some(l), Some(k)) => Some(l / k),
        _ => None,
    };
    Ok(PendulumReport { version: cfg.version, seed: cfg.seed, times, models, learned_gravity, learned_to_known_ratio })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rest() -> PendulumState {
        PendulumState::at_rest([0.0, 0.0, -3.0], [0.0, 0.0, -5.0])
    }

    fn random_state(seed: u64) -> PendulumState {
        generate_dataset(1, 0, seed, &PendulumParams::default()).unwrap().samples[0].initial
    }

    #[test]
    fn equilibrium_geometry() {
        let (q1, q2) = PendulumParams::default().equilibrium();
        assert_eq!(q1, [0.0, 0.0, -3.0]);
        assert_eq!(q2, [0.0, 0.0, -5.0]);
    }

    #[test]
    fn rest_state_energies() {
        let (ke, pe) = energies(&rest(), &PendulumParams::default());
        assert_eq!(ke.value, 0.0);
        // Springs stretched by 2 and 1: 2 + 0.5, gravity: −3 − 5.
        assert!((pe.value - (-5.5)).abs() < 1e-15);
        assert_eq!(pe.dim, Dimension::parse("kg*m^2*s^-2").unwrap());
        let mut s = rest();
        s.p1 = [1.0, 0.0, 0.0];
        assert_eq!(energies(&s, &PendulumParams::default()).0.value, 0.5);
    }

    #[test]
    fn equilibrium_is_fixed_point() {
        let d = dynamics_rhs(&rest(), &PendulumParams::default()).unwrap();
        assert!(d.flat().iter().all(|v| v.abs() < 1e-15));
        let tr = integrate(&rest(), &PendulumParams::default(), 1e-3, 1000).unwrap();
        for s in &tr.states {
            assert!(state_rel_err(s, &rest()) < 1e-12);
        }
    }

    #[test]
    fn singularity_guard() {
        let s = PendulumState::at_rest([0.0; 3], [0.0, 0.0, -1.0]);
        assert!(matches!(dynamics_rhs(&s, &PendulumParams::default()), Err(Error::Singularity(_))));
        let s = PendulumState::at_rest([0.0, 0.0, -1.0], [0.0, 0.0, -1.0]);
        assert!(matches!(dynamics_rhs(&s, &PendulumParams::default()), Err(Error::Singularity(_))));
    }

    #[test]
    fn energy_is_conserved() {
        let p = PendulumParams::default();
        let s0 = random_state(11);
        let tr = integrate(&s0, &p, 1e-3, 10_000).unwrap();
        let e0 = total_energy(&s0, &p);
        let drift = tr.states.iter().map(|s| ((total_energy(s, &p) - e0) / e0).abs()).fold(0.0, f64::max);
        assert!(drift < 1e-6, "drift {drift}");
    }

    #[test]
    fn fourth_order_convergence() {
        let p = PendulumParams::default();
        let s0 = random_state(5);
        let t_end = 2.0;
        let reference = states_at(&s0, &p, 1e-4, &[t_end]).unwrap()[0];
        let err = |dt: f64| {
            let s = states_at(&s0, &p, dt, &[t_end]).unwrap()[0];
            s.flat().iter().zip(reference.flat()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
        };
        let ratio = err(0.02) / err(0.01);
        assert!((12.0..=20.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn rotation_equivariance() {
        let p = PendulumParams::default();
        let s0 = random_state(2);
        for seed in 0..8 {
            let r = haar_orthogonal(seed, false);
            let a = dynamics_rhs(&s0.rotated(&r), &p.rotated(&r)).unwrap();
            let b = dynamics_rhs(&s0, &p).unwrap().rotated(&r);
            assert!(state_rel_err(&a, &b) < 1e-12);
            let (k1, u1) = energies(&s0.rotated(&r), &p.rotated(&r));
            let (k0, u0) = energies(&s0, &p);
            assert!((k1.value - k0.value).abs() < 1e-12 && (u1.value - u0.value).abs() < 1e-12);
            let ta = integrate(&s0.rotated(&r), &p.rotated(&r), 1e-3, 500).unwrap();
            let tb = integrate(&s0, &p, 1e-3, 500).unwrap();
            for (x, y) in ta.states.iter().zip(&tb.states) {
                assert!(state_rel_err(x, &y.rotated(&r)) < 1e-9);
            }
        }
    }

    #[test]
    fn rotations_about_gravity_need_no_rotated_field() {
        let p = PendulumParams::default();
        let s0 = random_state(8);
        let r = Orthogonal3::rotation([0.0, 0.0, 1.0], 0.7);
        let a = states_at(&s0.rotated(&r), &p, 1e-3, &[1.0]).unwrap()[0];
        let b = states_at(&s0, &p, 1e-3, &[1.0]).unwrap()[0].rotated(&r);
        assert!(state_rel_err(&a, &b) < 1e-9);
    }

    #[test]
    fn dataset_is_deterministic_and_consistent() {
        let p = PendulumParams::default();
        let a = generate_dataset(4, 5, 3, &p).unwrap();
        assert_eq!(a, generate_dataset(4, 5, 3, &p).unwrap());
        assert_ne!(a, generate_dataset(4, 5, 4, &p).unwrap());
        for s in &a.samples {
            assert_eq!(s.labels.len(), 5);
            assert!((s.times[4] - 0.5).abs() < 1e-15);
            let tr = integrate(&s.initial, &p, 1e-3, 500).unwrap();
            for (k, lab) in s.labels.iter().enumerate() {
                assert!(state_rel_err(lab, &tr.states[100 * (k + 1)]) < 1e-10);
            }
        }
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1 + 4 * 6);
    }

    #[test]
    fn relative_error_bounds() {
        let s = random_state(1);
        assert_eq!(state_rel_err(&s, &s), 0.0);
        let neg = PendulumState::from_flat(&s.flat().map(|v| -v));
        assert!((state_rel_err(&neg, &s) - 1.0).abs() < 1e-15);
        let r = haar_orthogonal(3, false);
        let t = random_state(2);
        assert!((state_rel_err(&s.rotated(&r), &t.rotated(&r)) - state_rel_err(&s, &t)).abs() < 1e-12);
    }
}
