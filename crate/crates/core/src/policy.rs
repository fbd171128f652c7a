//! The interface the harness drives one timestep at a time.

use rand::RngCore;

use crate::environment::Arm;
use crate::error::Result;

/// A contextual bandit policy.
///
/// Every [`Policy::select`] must be followed by exactly one
/// [`Policy::observe`] for the same context and arm.
pub trait Policy: Send {
    fn select(&mut self, x: &[f64], rng: &mut dyn RngCore) -> Result<Arm>;

    fn observe(&mut self, x: &[f64], arm: Arm, reward: f64) -> Result<()>;
}
