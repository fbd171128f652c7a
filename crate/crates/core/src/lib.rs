//! Transfer learning for nonparametric contextual multi-armed bandits under
//! covariate shift.
//!
//! The crate is organised bottom-up:
//!
//! - [`geometry`]: dyadic bins of the unit cube `[0,1]^d`.
//! - [`environment`]: synthetic bump-function bandits, the shifted source
//!   covariate law, and auxiliary (logged) dataset generation.
//! - [`elimination`]: confidence bounds, pull limits and the per-bin
//!   successive-elimination state machine that blends logged and live rewards.
//! - [`transfer`]: the depth-capped partition-tree policy that uses known
//!   smoothness and transfer parameters.
//! - [`adaptive`]: smoothness estimation from two-bandwidth local averages
//!   and the smoothness-agnostic policy built on it.
//! - [`harness`]: seeded Monte Carlo regret studies, configuration and output.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adaptive;
pub mod elimination;
pub mod environment;
mod error;
pub mod geometry;
pub mod harness;
pub mod policy;
pub mod quadrature;
pub mod transfer;

pub use adaptive::{AdaptiveParams, AdaptivePolicy, LogBase, SmoothnessEstimate};
pub use elimination::{ArmAggregate, AuxIndex, BinBanditState, BoundParams, Phase};
pub use environment::{Arm, AuxDataset, AuxSample, Environment, OracleGap, RewardSpec, SourceSpec};
pub use error::{Error, Result};
pub use geometry::{BinBox, BinId};
pub use harness::{Algorithm, ExperimentConfig, RegretTrace, Summary};
pub use policy::Policy;
pub use transfer::{TransferParams, TransferPolicy};
