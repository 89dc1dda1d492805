//! Pass/yield decision modeling for two-vehicle interactions.
//!
//! The crate models a target vehicle negotiating a shared conflict point
//! with one interacting vehicle. Trajectories live in a shared Frenet
//! frame whose station zero is the crossing point of the two reference
//! paths. A linear trajectory utility (learned by maximum-entropy IRL)
//! feeds a cumulative-prospect-theory valuation of the pass and yield
//! actions, whose shape parameters are fitted by nonlinear logistic
//! regression on labeled decisions. A time-to-collision baseline and an
//! evaluation harness round out the pipeline.

pub mod cli;
pub mod config;
pub mod cpt;
pub mod dataset;
pub mod estimation;
pub mod evaluation;
pub mod features;
pub mod geometry;
pub mod kinematics;
pub mod synthesis;

pub use cpt::{CptParams, Decision, DrivingUtilities, Prospect, WeightingMode};
pub use features::{UtilityConfig, UtilityWeights};
pub use kinematics::{Frame, InteractionPair, Trajectory};
