//! Learned models: a small MLP, units-covariant regression, the dimensional
//! constant search and O(3)-equivariant dynamics models.

pub mod dynamics;
pub mod mlp;
pub mod search;
pub mod train;
pub mod units;

pub use dynamics::{fit_dynamics, predict_dynamics, DynamicsMode, DynamicsModel};
pub use mlp::{mlp_predict, Activation, Mlp};
pub use search::{search_dimensional_constant, CandidateScore, ConstantSearch};
pub use train::{split_indices, train_mlp, EpochRecord, LossHistory, Optimizer, TrainConfig, TrainedMlp};
pub use units::{fit_units_covariant, InnerFunction, LearnedConstant, UnitsCovariantModel, UnitsData};
