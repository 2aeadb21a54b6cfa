//! Search over integer-exponent dimensional constants.

use serde::{Deserialize, Serialize};

use super::train::{split_indices, TrainConfig};
use super::units::{fit_on, UnitsCovariantModel, UnitsData};
use crate::dimensions::{Dimension, Rational, N_BASE};
use crate::linalg::rref;
use crate::{Error, Result};

/// Validation fraction used when the training config reserves none.
pub const DEFAULT_VALIDATION_FRACTION: f64 = 0.2;

/// A constant counts as needed when it beats the baseline by more than this
/// many standard errors of the paired validation difference.
pub const NOISE_FLOOR_STANDARD_ERRORS: f64 = 2.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub exponents: [i64; N_BASE],
    pub dim: Dimension,
    pub val_mse: f64,
    /// Standard error of `val_mse` over validation rows.
    pub val_se: f64,
    pub magnitude: f64,
    pub seed: u64,
    /// Candidates sharing a class induce the same model family on the data.
    pub class: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineScore {
    pub val_mse: f64,
    pub val_se: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantSearch {
    pub lattice_bound: i64,
    /// Model without any extra constant; `None` when it is infeasible.
    pub baseline: Option<BaselineScore>,
    /// One entry per nonzero lattice tuple, in enumeration order.
    pub scores: Vec<CandidateScore>,
    /// Index into `scores` of the selected candidate.
    pub selected: usize,
    /// Index of the candidate with the lowest validation MSE.
    pub best: usize,
    /// Indices of all candidates equivalent to the selected one.
    pub equivalent: Vec<usize>,
    /// False when the best candidate is no better than the baseline beyond
    /// the validation noise floor.
    pub constant_needed: bool,
    #[serde(skip)]
    pub model: Option<UnitsCovariantModel>,
}

impl ConstantSearch {
    pub fn chosen(&self) -> &CandidateScore {
        &self.scores[self.selected]
    }

    pub fn dim(&self) -> Dimension {
        self.chosen().dim
    }

    pub fn magnitude(&self) -> f64 {
        self.chosen().magnitude
    }
}

/// All nonzero tuples in `{−b..b}⁴`, lexicographic from `(−b, −b, −b, −b)`.
pub fn lattice(bound: i64) -> Vec<[i64; N_BASE]> {
    let side: Vec<i64> = (-bound..=bound).collect();
    let mut out = Vec::new();
    for &a in &side {
        for &b in &side {
            for &c in &side {
                for &d in &side {
                    if [a, b, c, d] != [0; N_BASE] {
                        out.push([a, b, c, d]);
                    }
                }
            }
        }
    }
    out
}

/// Per-candidate seed derived from the base seed and the exponent tuple.
pub fn candidate_seed(seed: u64, exps: &[i64; N_BASE]) -> u64 {
    let mut h = seed ^ 0x243f_6a88_85a3_08d3;
    for e in exps {
        h = splitmix(h ^ (*e as u64));
    }
    h
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn squared_errors(m: &UnitsCovariantModel, data: &UnitsData, idx: &[usize]) -> Result<Vec<f64>> {
    idx.iter().map(|&i| Ok((m.predict_log(&data.rows[i])? - data.target[i].ln()).powi(2))).collect()
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, (var / n).sqrt())
}

/// Inputs that are not constant over the training rows.
fn varying_columns(data: &UnitsData, train: &[usize]) -> Vec<bool> {
    (0..data.dims.len())
        .map(|j| {
            let first = data.rows[train[0]][j];
            train.iter().any(|&r| (data.rows[r][j] / first - 1.0).abs() > 1e-12)
        })
        .collect()
}

/// Exact description of the model family a fitted candidate spans on the
/// data: the span of its Pi exponents over the varying inputs (in reduced
/// row echelon form), and its scaffold exponents over the same inputs
/// reduced modulo that span. Constant inputs and the constant itself only
/// shift log-space predictions, which the inner function absorbs.
type ClassKey = (Vec<Vec<Rational>>, Vec<Rational>);

fn class_key(m: &UnitsCovariantModel, varying: &[bool]) -> ClassKey {
    let restrict = |v: &[Rational]| -> Vec<Rational> { varying.iter().enumerate().filter(|(_, on)| **on).map(|(i, _)| v[i]).collect() };
    let width = varying.iter().filter(|v| **v).count();
    let span = if m.pi_basis.is_empty() || width == 0 {
        Vec::new()
    } else {
        let r = rref(m.pi_basis.iter().map(|n| restrict(n)).collect());
        let rank = r.rank();
        r.rows.into_iter().take(rank).zip(r.pivots).collect::<Vec<_>>()
    };
    let mut scaffold = restrict(&m.scaffold);
    for (row, p) in &span {
        let f = scaffold[*p];
        for (s, v) in scaffold.iter_mut().zip(row) {
            *s -= f * v;
        }
    }
    (span.into_iter().map(|(row, _)| row).collect(), scaffold)
}

/// Enumerate constants with exponents in `{−b..b}⁴`, jointly train each
/// one's magnitude with the inner network, and select by validation MSE.
///
/// Many lattice dimensions induce the same Pi feature up to a power, and on
/// data where some inputs are constant even more of them coincide. Such
/// candidates define the same model family, so their score differences are
/// optimization noise. Candidates are grouped into exact equivalence
/// classes; the class of the best-scoring candidate wins, and its first
/// member in enumeration order is reported.
pub fn search_dimensional_constant(
    data: &UnitsData,
    target_dim: &Dimension,
    lattice_bound: i64,
    cfg: &TrainConfig,
) -> Result<ConstantSearch> {
    let frac = if cfg.validation_fraction > 0.0 { cfg.validation_fraction } else { DEFAULT_VALIDATION_FRACTION };
    let (train, val) = split_indices(data.len(), frac, cfg.seed);
    search_with_validation(data, target_dim, lattice_bound, cfg, &train, &val)
}

/// As [`search_dimensional_constant`] with explicit train and validation rows.
pub fn search_with_validation(
    data: &UnitsData,
    target_dim: &Dimension,
    lattice_bound: i64,
    cfg: &TrainConfig,
    train: &[usize],
    val: &[usize],
) -> Result<ConstantSearch> {
    if lattice_bound < 1 {
        return Err(Error::InvalidArgument(format!("lattice bound must be at least 1, got {lattice_bound}")));
    }
    if val.is_empty() {
        return Err(Error::InvalidArgument("constant search needs validation rows".into()));
    }
    let baseline_errs = match fit_on(data, target_dim, None, cfg, train, &[]) {
        Ok((m, _)) => Some(squared_errors(&m, data, val)?),
        Err(Error::Infeasible) => None,
        Err(e) => return Err(e),
    };
    let mut scores = Vec::new();
    let mut errs = Vec::new();
    let mut models = Vec::new();
    for exps in lattice(lattice_bound) {
        let dim = Dimension::from_ints(exps);
        let seed = candidate_seed(cfg.seed, &exps);
        let c_cfg = TrainConfig { seed, ..cfg.clone() };
        let (model, _) = fit_on(data, target_dim, Some(&dim), &c_cfg, train, &[])?;
        let e = squared_errors(&model, data, val)?;
        let (val_mse, val_se) = mean_se(&e);
        let magnitude = model.constant.as_ref().map(|c| c.magnitude()).unwrap_or(f64::NAN);
        scores.push(CandidateScore { exponents: exps, dim, val_mse, val_se, magnitude, seed, class: 0 });
        errs.push(e);
        models.push(model);
    }
    let valid = |s: &CandidateScore| s.val_mse.is_finite();
    let best = (0..scores.len())
        .filter(|&i| valid(&scores[i]))
        .min_by(|&a, &b| scores[a].val_mse.total_cmp(&scores[b].val_mse))
        .unwrap_or(0);
    let varying = varying_columns(data, train);
    let keys: Vec<ClassKey> = models.iter().map(|m| class_key(m, &varying)).collect();
    let mut distinct: Vec<&ClassKey> = Vec::new();
    for (i, k) in keys.iter().enumerate() {
        let id = match distinct.iter().position(|d| *d == k) {
            Some(id) => id,
            None => {
                distinct.push(k);
                distinct.len() - 1
            }
        };
        scores[i].class = id;
    }
    let equivalent: Vec<usize> = (0..scores.len()).filter(|&i| scores[i].class == scores[best].class).collect();
    let selected = equivalent[0];

    let (baseline, constant_needed) = match &baseline_errs {
        None => (None, true),
        Some(be) => {
            let (b_mse, b_se) = mean_se(be);
            let diff: Vec<f64> = be.iter().zip(&errs[best]).map(|(b, c)| b - c).collect();
            let (gain, gain_se) = mean_se(&diff);
            (Some(BaselineScore { val_mse: b_mse, val_se: b_se }), gain > NOISE_FLOOR_STANDARD_ERRORS * gain_se)
        }
    };
    Ok(ConstantSearch {
        lattice_bound,
        baseline,
        scores,
        selected,
        best,
        equivalent,
        constant_needed,
        model: models.into_iter().nth(selected),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn lattice_enumeration() {
        let l = lattice(1);
        assert_eq!(l.len(), 80);
        assert_eq!(l[0], [-1, -1, -1, -1]);
        assert_eq!(*l.last().unwrap(), [1, 1, 1, 1]);
        assert!(!l.contains(&[0, 0, 0, 0]));
        assert_eq!(lattice(2).len(), 624);
    }

    #[test]
    fn seeds_depend_on_tuple() {
        assert_ne!(candidate_seed(0, &[1, 0, 0, 0]), candidate_seed(0, &[0, 1, 0, 0]));
        assert_eq!(candidate_seed(7, &[1, 0, -1, 0]), candidate_seed(7, &[1, 0, -1, 0]));
    }

    #[test]
    fn no_constant_needed_for_projectile_range() {
        // y = v²/g with mild noise: a complete scaffold already exists.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut rows = Vec::new();
        let mut target = Vec::new();
        for _ in 0..200 {
            let v: f64 = rng.random_range(1.0..20.0);
            let g: f64 = rng.random_range(5.0..15.0);
            rows.push(vec![v, g]);
            target.push(v * v / g * (1.0 + 0.01 * rng.random_range(-1.0..1.0)));
        }
        let dims = vec![Dimension::parse("m/s").unwrap(), Dimension::parse("m/s^2").unwrap()];
        let data = UnitsData::new(vec!["v".into(), "g".into()], dims, rows, target).unwrap();
        let cfg = TrainConfig { epochs: 30, hidden: vec![8], batch_size: 64, learning_rate: 1e-2, ..Default::default() };
        let s = search_dimensional_constant(&data, &Dimension::length(), 1, &cfg).unwrap();
        assert_eq!(s.scores.len(), 80);
        assert!(s.baseline.is_some());
        assert!(!s.constant_needed);
        assert!(s.equivalent.contains(&s.best));
        assert!(s.selected <= s.best);
        let again = search_dimensional_constant(&data, &Dimension::length(), 1, &cfg).unwrap();
        assert_eq!(s.scores, again.scores);
    }

    #[test]
    fn rejects_bad_bound() {
        let data = UnitsData::new(vec!["x".into()], vec![Dimension::length()], vec![vec![1.0]], vec![1.0]).unwrap();
        assert!(search_dimensional_constant(&data, &Dimension::length(), 0, &TrainConfig::default()).is_err());
    }
}
