//! Replica-symmetric predictions for compressed sensing with Gaussian
//! measurement matrices: scalar-channel curves, the variational
//! mutual-information formula and its minimizers, finite-size sandwich
//! bounds, and exact-posterior Monte Carlo for small instances.

pub mod bounds;
pub mod channel;
pub mod error;
pub mod montecarlo;
pub mod par;
pub mod prior;
pub mod quad;
pub mod replica;

pub use bounds::{BoundKind, SandwichBound};
pub use channel::{ChannelEval, QuadratureConfig};
pub use error::{CoreError, Result};
pub use montecarlo::{DiffRow, Estimator, Instance, McEstimate, PosteriorSummary, TrialRow};
pub use prior::{Component, Prior};
pub use replica::{
    CrossingReport, FixedPoint, FixedPointSet, JumpRecord, Plateau, PotentialPoint,
    ReplicaCurve, ReplicaPoint,
};
