//! O(3)-equivariant dynamics models for the springy double pendulum.
//!
//! The model maps `(z(0), Δt)` to `ẑ(Δt)`. Inputs are scalarized into the
//! Gram matrix of the basis vectors `V = [q₁−q₀, q₂−q₀, p₁, p₂]`, extended
//! with the gravity vector (Known-g) or a learned vector `u` (Learned-g).
//! An MLP maps the invariants and `Δt` to coefficients, and each output
//! vector is a coefficient-weighted sum of the basis. Vectors enter as
//! numbers in SI base units.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::mlp::Mlp;
use super::train::{optimize, split_indices, LossHistory, Objective, TrainConfig};
use crate::dimensions::Dimension;
use crate::geometry::{dot3, equivariant_combination, Orthogonal3, Vec3};
use crate::pendulum::{add, PendulumDataset, PendulumState, V3};
use crate::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DynamicsMode {
    #[serde(rename = "known-g")]
    KnownG,
    #[serde(rename = "no-g")]
    NoG,
    #[serde(rename = "learned-g")]
    LearnedG,
}

impl DynamicsMode {
    pub fn label(self) -> &'static str {
        match self {
            DynamicsMode::KnownG => "Known-g",
            DynamicsMode::NoG => "No-g",
            DynamicsMode::LearnedG => "Learned-g",
        }
    }

    fn basis_len(self) -> usize {
        match self {
            DynamicsMode::NoG => 4,
            _ => 5,
        }
    }
}

impl std::str::FromStr for DynamicsMode {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "known-g" => Ok(DynamicsMode::KnownG),
            "no-g" => Ok(DynamicsMode::NoG),
            "learned-g" => Ok(DynamicsMode::LearnedG),
            other => Err(crate::Error::Parse(format!("unknown dynamics mode '{other}'"))),
        }
    }
}

const OUTPUTS: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DynamicsModel {
    pub mode: DynamicsMode,
    /// Coefficient network: invariants in, `4 × |V|` coefficients out.
    pub mlp: Mlp,
    /// Gravity vector supplied in Known-g mode.
    pub g: Option<V3>,
    /// Learned vector in Learned-g mode, in units of acceleration.
    pub u: Option<V3>,
    /// Pendulum pivot; positions are predicted relative to it.
    pub pivot: V3,
    pub feature_mean: Vec<f64>,
    pub feature_scale: Vec<f64>,
    pub roles: Vec<String>,
}

fn roles(mode: DynamicsMode) -> Vec<String> {
    let mut r = vec!["q1-q0", "q2-q0", "p1", "p2"];
    match mode {
        DynamicsMode::KnownG => r.push("g"),
        DynamicsMode::LearnedG => r.push("u"),
        DynamicsMode::NoG => {}
    }
    r.into_iter().map(String::from).collect()
}

fn n_features(nv: usize) -> usize {
    nv * (nv + 1) / 2 + 1
}

/// Position of Gram entry `(i, j)`, `i ≤ j`, in the upper-triangle layout.
fn tri_index(i: usize, j: usize, nv: usize) -> usize {
    i * nv - i * (i + 1) / 2 + j
}

fn basis(z: &PendulumState, pivot: &V3, extra: Option<&V3>) -> Vec<V3> {
    let mut v = vec![crate::pendulum::sub(&z.q1, pivot), crate::pendulum::sub(&z.q2, pivot), z.p1, z.p2];
    v.extend(extra.copied());
    v
}

fn raw_features(v: &[V3], dt: f64) -> Vec<f64> {
    let nv = v.len();
    let mut f = Vec::with_capacity(n_features(nv));
    for i in 0..nv {
        for j in i..nv {
            f.push(dot3(&v[i], &v[j]));
        }
    }
    f.push(dt);
    f
}

impl DynamicsModel {
    fn extra(&self) -> Option<&V3> {
        match self.mode {
            DynamicsMode::KnownG => self.g.as_ref(),
            DynamicsMode::LearnedG => self.u.as_ref(),
            DynamicsMode::NoG => None,
        }
    }

    /// Coefficients `c[o][j]` for one state and time offset.
    pub fn coefficients(&self, z: &PendulumState, dt: f64) -> Vec<Vec<f64>> {
        let v = basis(z, &self.pivot, self.extra());
        let x: Vec<f64> = raw_features(&v, dt).iter().zip(&self.feature_mean).zip(&self.feature_scale).map(|((f, m), s)| (f - m) / s).collect();
        let out = self.mlp.predict(&x).expect("feature width fixed by mode");
        out.chunks(v.len()).map(|c| c.to_vec()).collect()
    }

    /// The model with its hidden vectors (gravity, `u`, pivot) transformed by
    /// `r`, as seen from a rotated or reflected frame.
    pub fn rotated(&self, r: &Orthogonal3) -> DynamicsModel {
        DynamicsModel {
            g: self.g.map(|g| r.apply(&g)),
            u: self.u.map(|u| r.apply(&u)),
            pivot: r.apply(&self.pivot),
            ..self.clone()
        }
    }

    pub fn learned_vector(&self) -> Option<Vec3> {
        self.u.map(|u| Vec3::new(u, Dimension::from_ints([0, 1, -2, 0])))
    }

    pub fn predict_one(&self, z: &PendulumState, dt: f64) -> PendulumState {
        let v = basis(z, &self.pivot, self.extra());
        let vecs: Vec<Vec3> = v.iter().map(|x| Vec3::dimensionless(*x)).collect();
        let c = self.coefficients(z, dt);
        let out: Vec<V3> = c.iter().map(|co| equivariant_combination(co, &vecs).expect("matching lengths, one dimension").v).collect();
        PendulumState { q1: add(&self.pivot, &out[0]), q2: add(&self.pivot, &out[1]), p1: out[2], p2: out[3] }
    }
}

/// One predicted state per requested time offset, each computed directly
/// from `z0`.
pub fn predict_dynamics(m: &DynamicsModel, z0: &PendulumState, times: &[f64]) -> Vec<PendulumState> {
    times.iter().map(|&t| m.predict_one(z0, t)).collect()
}

struct Pair {
    base: [V3; 4],
    dt: f64,
    target: [V3; OUTPUTS],
}

/// The learned vector is stored as `u / gain`, so adaptive optimizers move it
/// `gain` times faster than the network weights. At equal rates the network
/// co-adapts to whatever direction `u` starts in and `u` stalls.
const LEARNED_VECTOR_GAIN: f64 = 10.0;

pub(crate) struct DynObjective {
    mlp: Mlp,
    mode: DynamicsMode,
    g: V3,
    /// Raw parameter; the basis vector is `u_gain * u`.
    u: V3,
    u_gain: f64,
    pivot: V3,
    mean: Vec<f64>,
    scale: Vec<f64>,
    pairs: Vec<Pair>,
}

impl DynObjective {
    fn nv(&self) -> usize {
        self.mode.basis_len()
    }

    fn vectors(&self, p: &Pair) -> Vec<V3> {
        let mut v = p.base.to_vec();
        match self.mode {
            DynamicsMode::KnownG => v.push(self.g),
            DynamicsMode::LearnedG => v.push(self.u_vec()),
            DynamicsMode::NoG => {}
        }
        v
    }

    fn u_vec(&self) -> V3 {
        self.u.map(|w| w * self.u_gain)
    }

    fn inputs(&self, idx: &[usize]) -> (Vec<Vec<V3>>, Array2<f64>) {
        let nf = n_features(self.nv());
        let mut x = Array2::zeros((idx.len(), nf));
        let mut vs = Vec::with_capacity(idx.len());
        for (b, &i) in idx.iter().enumerate() {
            let v = self.vectors(&self.pairs[i]);
            for (k, f) in raw_features(&v, self.pairs[i].dt).into_iter().enumerate() {
                x[[b, k]] = (f - self.mean[k]) / self.scale[k];
            }
            vs.push(v);
        }
        (vs, x)
    }

    /// Predicted minus target vectors, per pair and output.
    fn residuals(&self, idx: &[usize], vs: &[Vec<V3>], c: &Array2<f64>) -> Vec<[V3; OUTPUTS]> {
        let nv = self.nv();
        idx.iter()
            .enumerate()
            .map(|(b, &i)| {
                std::array::from_fn(|o| {
                    let mut y = if o < 2 { self.pivot } else { [0.0; 3] };
                    for j in 0..nv {
                        let cj = c[[b, o * nv + j]];
                        for d in 0..3 {
                            y[d] += cj * vs[b][j][d];
                        }
                    }
                    crate::pendulum::sub(&y, &self.pairs[i].target[o])
                })
            })
            .collect()
    }
}

impl Objective for DynObjective {
    fn num_params(&self) -> usize {
        self.mlp.num_params() + if self.mode == DynamicsMode::LearnedG { 3 } else { 0 }
    }

    fn loss_grad(&self, batch: &[usize], grad: &mut [f64]) -> f64 {
        let nv = self.nv();
        let (vs, x) = self.inputs(batch);
        let cache = self.mlp.forward_cached(x.view());
        let c = cache.output();
        let res = self.residuals(batch, &vs, c);
        let n = batch.len() as f64;
        let loss = res.iter().flatten().map(|r| dot3(r, r)).sum::<f64>() / n;
        let d_out = Array2::from_shape_fn((batch.len(), OUTPUTS * nv), |(b, k)| {
            let (o, j) = (k / nv, k % nv);
            2.0 / n * dot3(&res[b][o], &vs[b][j])
        });
        let (g_mlp, g_u) = grad.split_at_mut(self.mlp.num_params());
        let dx = self.mlp.backward(&cache, d_out.view(), g_mlp);
        if self.mode == DynamicsMode::LearnedG {
            let ui = nv - 1;
            for b in 0..batch.len() {
                let mut gu = [0.0; 3];
                // Through the linear combination.
                for o in 0..OUTPUTS {
                    let w = 2.0 / n * c[[b, o * nv + ui]];
                    for d in 0..3 {
                        gu[d] += w * res[b][o][d];
                    }
                }
                // Through the Gram entries that involve u.
                for i in 0..nv {
                    let k = tri_index(i.min(ui), i.max(ui), nv);
                    let w = dx[[b, k]] / self.scale[k] * if i == ui { 2.0 } else { 1.0 };
                    for d in 0..3 {
                        gu[d] += w * vs[b][i][d];
                    }
                }
                for d in 0..3 {
                    g_u[d] += self.u_gain * gu[d];
                }
            }
        }
        loss
    }

    fn loss(&self, idx: &[usize]) -> f64 {
        let (vs, x) = self.inputs(idx);
        let c = self.mlp.forward(x.view());
        self.residuals(idx, &vs, &c).iter().flatten().map(|r| dot3(r, r)).sum::<f64>() / idx.len().max(1) as f64
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut p = vec![self.mlp.params.as_mut_slice()];
        if self.mode == DynamicsMode::LearnedG {
            p.push(self.u.as_mut_slice());
        }
        p
    }
}

pub(crate) fn build_objective(trainset: &PendulumDataset, mode: DynamicsMode, cfg: &TrainConfig) -> DynObjective {
    let pivot = trainset.params.q0;
    let sub = crate::pendulum::sub;
    let mut pairs = Vec::with_capacity(trainset.num_pairs());
    for s in &trainset.samples {
        let z = &s.initial;
        let base = [sub(&z.q1, &pivot), sub(&z.q2, &pivot), z.p1, z.p2];
        for (t, l) in s.times.iter().zip(&s.labels) {
            pairs.push(Pair { base, dt: *t, target: [l.q1, l.q2, l.p1, l.p2] });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x0075_ec70);
    let u: V3 = [rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal)];
    let nv = mode.basis_len();
    let nf = n_features(nv);
    let mut obj = DynObjective {
        mlp: Mlp::new(&cfg.widths(nf, OUTPUTS * nv), cfg.activation, cfg.seed),
        mode,
        g: trainset.params.g,
        u: u.map(|x| x / LEARNED_VECTOR_GAIN),
        u_gain: LEARNED_VECTOR_GAIN,
        pivot,
        mean: vec![0.0; nf],
        scale: vec![1.0; nf],
        pairs,
    };
    // Fixed standardization of the invariants, from the initial basis.
    let feats: Vec<Vec<f64>> = obj.pairs.iter().map(|p| raw_features(&obj.vectors(p), p.dt)).collect();
    let m = feats.len().max(1) as f64;
    for k in 0..nf {
        let mean = feats.iter().map(|f| f[k]).sum::<f64>() / m;
        let var = feats.iter().map(|f| (f[k] - mean).powi(2)).sum::<f64>() / m;
        obj.mean[k] = mean;
        obj.scale[k] = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
    }
    // Start from the identity map: each output copies its own basis vector.
    obj.mlp.output_weights_mut().iter_mut().for_each(|w| *w = 0.0);
    let bias = obj.mlp.output_bias_mut();
    bias.iter_mut().for_each(|b| *b = 0.0);
    for o in 0..OUTPUTS {
        bias[o * nv + o] = 1.0;
    }
    obj
}

fn into_model(obj: DynObjective) -> DynamicsModel {
    DynamicsModel {
        mode: obj.mode,
        g: (obj.mode == DynamicsMode::KnownG).then_some(obj.g),
        u: (obj.mode == DynamicsMode::LearnedG).then_some(obj.u_vec()),
        pivot: obj.pivot,
        feature_mean: obj.mean,
        feature_scale: obj.scale,
        roles: roles(obj.mode),
        mlp: obj.mlp,
    }
}

/// Train a dynamics model on every (initial state, label) pair of
/// `trainset` with mean squared Euclidean error summed over the four output
/// vectors. In Learned-g mode `u` is trained jointly with the network.
pub fn fit_dynamics(trainset: &PendulumDataset, mode: DynamicsMode, cfg: &TrainConfig) -> Result<(DynamicsModel, LossHistory)> {
    cfg.validate()?;
    trainset.params.validate()?;
    let mut obj = build_objective(trainset, mode, cfg);
    if obj.pairs.is_empty() {
        return Err(crate::Error::InvalidArgument("training set has no labels".into()));
    }
    let (train, val) = split_indices(obj.pairs.len(), cfg.validation_fraction, cfg.seed);
    let history = optimize(&mut obj, &train, &val, cfg)?;
    Ok((into_model(obj), history))
}
