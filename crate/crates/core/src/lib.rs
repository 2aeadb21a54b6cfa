//! Covariant learning toolkit.
//!
//! Representations of physical data involve arbitrary choices: the unit system
//! and the coordinate frame. Changing either leaves the physics untouched, so
//! every model and preprocessing step should commute with those changes. This
//! crate provides the machinery to build and check such pipelines:
//!
//! - [`dimensions`]: exact rational dimension algebra, power-product solving
//!   and dimensionless (Pi) feature bases.
//! - [`geometry`]: 3-vectors and 3×3 tensors that carry dimensions, O(3)
//!   actions, Gram-matrix scalarization and equivariant combinations.
//! - [`normalize`]: data normalization that respects units classes and
//!   rotates with the data.
//! - [`model`]: small MLPs, units-covariant regression with dimensional
//!   constant search, and O(3)-equivariant dynamics models.
//! - [`blackbody`] and [`pendulum`]: data generators and experiment drivers.
//! - [`audit`]: a pipeline linter and an empirical covariance tester.

pub mod audit;
pub mod blackbody;
pub mod dimensions;
mod error;
pub mod geometry;
pub mod linalg;
pub mod model;
pub mod normalize;
pub mod pendulum;
pub mod report;
pub mod schema;

pub use dimensions::{
    pi_basis, solve_target, Dimension, ExponentSolution, Quantity, Rational, UnitScaling,
    BASE_UNITS,
};
pub use error::{Error, Result};
pub use geometry::{GeomFeature, GeomValue, Orthogonal3, Tensor3, Vec3};
pub use schema::{Dataset, FeatureKind, FeatureSchema};
