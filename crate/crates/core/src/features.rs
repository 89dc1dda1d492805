//! Trajectory features, the linear utility over a horizon, and its
//! analytic gradient with respect to the target stations.
//!
//! Each feature is a squared-exponential of one kinematic quantity scaled
//! by a length scale, so it peaks at 1 at the nominal condition and decays
//! with deviation. The utility is the weighted sum of the per-step
//! features accumulated over the horizon.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::{kinematics, Trajectory};

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("trajectory lengths differ: target {target}, interacting {interacting}")]
    LengthMismatch { target: usize, interacting: usize },
}

/// Nominal traffic speed and per-feature length scales.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtilityConfig {
    /// Nominal free-flow speed the speed feature peaks at (m/s).
    pub v_traffic: f64,
    /// Speed deviation scale (m/s).
    pub scale_speed: f64,
    /// Acceleration scale (m/s^2).
    pub scale_accel: f64,
    /// Jerk scale (m/s^3).
    pub scale_jerk: f64,
    /// Station-separation scale for the safety feature (m).
    pub scale_separation: f64,
}

impl Default for UtilityConfig {
    fn default() -> Self {
        Self {
            v_traffic: 8.0,
            scale_speed: 3.0,
            scale_accel: 2.0,
            scale_jerk: 5.0,
            scale_separation: 10.0,
        }
    }
}

impl UtilityConfig {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("v_traffic", self.v_traffic),
            ("scale_speed", self.scale_speed),
            ("scale_accel", self.scale_accel),
            ("scale_jerk", self.scale_jerk),
            ("scale_separation", self.scale_separation),
        ] {
            if !v.is_finite() || v <= 0.0 {
                return Err(format!("{name} must be positive, got {v}"));
            }
        }
        Ok(())
    }
}

/// Weights over the four features (speed, acceleration, jerk, safety).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtilityWeights(pub [f64; 4]);

impl UtilityWeights {
    pub const ZERO: UtilityWeights = UtilityWeights([0.0; 4]);

    pub fn dot(&self, phi: &[f64; 4]) -> f64 {
        self.0.iter().zip(phi).map(|(t, p)| t * p).sum()
    }
}

/// Per-step feature values, each in (0, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector {
    pub speed: f64,
    pub accel: f64,
    pub jerk: f64,
    pub safety: f64,
}

impl FeatureVector {
    pub fn as_array(&self) -> [f64; 4] {
        [self.speed, self.accel, self.jerk, self.safety]
    }
}

/// Kinematic state of the target at one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetState {
    pub station: f64,
    pub speed: f64,
    pub accel: f64,
    pub jerk: f64,
}

fn bump(deviation: f64, scale: f64) -> f64 {
    let z = deviation / scale;
    // Keep the value strictly positive even when exp underflows.
    (-z * z).exp().max(f64::MIN_POSITIVE)
}

/// Evaluates the four features at one step of the interaction.
pub fn features_at(
    state: &TargetState,
    interacting_station: f64,
    cfg: &UtilityConfig,
) -> FeatureVector {
    FeatureVector {
        speed: bump(state.speed - cfg.v_traffic, cfg.scale_speed),
        accel: bump(state.accel, cfg.scale_accel),
        jerk: bump(state.jerk, cfg.scale_jerk),
        safety: bump(interacting_station - state.station, cfg.scale_separation),
    }
}

/// Sums the feature vector over the horizon. `interacting` as `None`
/// evaluates the target in isolation: the safety component takes its
/// far-separation limit 0.
fn summed_features_impl(
    target: &Trajectory,
    interacting: Option<&Trajectory>,
    cfg: &UtilityConfig,
) -> Result<[f64; 4], FeatureError> {
    if let Some(other) = interacting {
        if other.len() != target.len() {
            return Err(FeatureError::LengthMismatch {
                target: target.len(),
                interacting: other.len(),
            });
        }
    }
    let prof = kinematics(target);
    let s = target.stations();
    let mut phi = [0.0; 4];
    for k in 0..s.len() {
        let state = TargetState {
            station: s[k],
            speed: prof.speeds[k],
            accel: prof.accelerations[k],
            jerk: prof.jerks[k],
        };
        phi[0] += bump(state.speed - cfg.v_traffic, cfg.scale_speed);
        phi[1] += bump(state.accel, cfg.scale_accel);
        phi[2] += bump(state.jerk, cfg.scale_jerk);
        if let Some(other) = interacting {
            phi[3] += bump(other.stations()[k] - state.station, cfg.scale_separation);
        }
    }
    Ok(phi)
}

/// Feature sum over the horizon for an interaction pair.
pub fn summed_features(
    target: &Trajectory,
    interacting: &Trajectory,
    cfg: &UtilityConfig,
) -> Result<[f64; 4], FeatureError> {
    summed_features_impl(target, Some(interacting), cfg)
}

/// Linear trajectory utility: weights dotted with the summed features.
pub fn utility(
    target: &Trajectory,
    interacting: &Trajectory,
    theta: &UtilityWeights,
    cfg: &UtilityConfig,
) -> Result<f64, FeatureError> {
    Ok(theta.dot(&summed_features_impl(target, Some(interacting), cfg)?))
}

/// Utility of the target alone, with the safety term at its
/// far-separation limit.
pub fn solo_utility(target: &Trajectory, theta: &UtilityWeights, cfg: &UtilityConfig) -> f64 {
    theta.dot(&summed_features_impl(target, None, cfg).expect("no length check without a pair"))
}

fn gradient_impl(
    target: &Trajectory,
    interacting: Option<&Trajectory>,
    theta: &UtilityWeights,
    cfg: &UtilityConfig,
) -> Result<Vec<f64>, FeatureError> {
    if let Some(other) = interacting {
        if other.len() != target.len() {
            return Err(FeatureError::LengthMismatch {
                target: target.len(),
                interacting: other.len(),
            });
        }
    }
    let n = target.len();
    let dt = target.dt();
    let s = target.stations();
    let prof = kinematics(target);

    // Per-step sensitivities of the utility to each kinematic profile.
    // d/dx exp(-(x/l)^2) = -2x/l^2 * exp(-(x/l)^2).
    let mut gv = vec![0.0; n];
    let mut ga = vec![0.0; n];
    let mut gj = vec![0.0; n];
    let mut gs = vec![0.0; n];
    for k in 0..n {
        let dv = prof.speeds[k] - cfg.v_traffic;
        gv[k] = theta.0[0]
            * (-2.0 * dv / (cfg.scale_speed * cfg.scale_speed))
            * bump(dv, cfg.scale_speed);
        ga[k] = theta.0[1]
            * (-2.0 * prof.accelerations[k] / (cfg.scale_accel * cfg.scale_accel))
            * bump(prof.accelerations[k], cfg.scale_accel);
        gj[k] = theta.0[2]
            * (-2.0 * prof.jerks[k] / (cfg.scale_jerk * cfg.scale_jerk))
            * bump(prof.jerks[k], cfg.scale_jerk);
        if let Some(other) = interacting {
            let sep = other.stations()[k] - s[k];
            // Derivative with respect to the target station flips the sign.
            gs[k] = theta.0[3]
                * (2.0 * sep / (cfg.scale_separation * cfg.scale_separation))
                * bump(sep, cfg.scale_separation);
        }
    }

    // Copy-forward padding makes the padded entries aliases of the first
    // defined one; fold their sensitivities in. Undefined profiles are
    // constant zero and carry no gradient.
    gv[1] += gv[0];
    gv[0] = 0.0;
    if n >= 3 {
        ga[2] += ga[0] + ga[1];
        ga[0] = 0.0;
        ga[1] = 0.0;
    } else {
        ga.iter_mut().for_each(|g| *g = 0.0);
    }
    if n >= 4 {
        gj[3] += gj[0] + gj[1] + gj[2];
        gj[0] = 0.0;
        gj[1] = 0.0;
        gj[2] = 0.0;
    } else {
        gj.iter_mut().for_each(|g| *g = 0.0);
    }

    // Reverse-mode chain through j = diff(a)/dt, a = diff(v)/dt,
    // v = diff(s)/dt.
    if n >= 4 {
        for k in 3..n {
            ga[k] += gj[k] / dt;
            ga[k - 1] -= gj[k] / dt;
        }
    }
    if n >= 3 {
        for k in 2..n {
            gv[k] += ga[k] / dt;
            gv[k - 1] -= ga[k] / dt;
        }
    }
    for k in 1..n {
        gs[k] += gv[k] / dt;
        gs[k - 1] -= gv[k] / dt;
    }
    Ok(gs)
}

/// Analytic gradient of `utility` with respect to each target station.
pub fn utility_gradient(
    target: &Trajectory,
    interacting: &Trajectory,
    theta: &UtilityWeights,
    cfg: &UtilityConfig,
) -> Result<Vec<f64>, FeatureError> {
    gradient_impl(target, Some(interacting), theta, cfg)
}

/// Gradient of `solo_utility` with respect to each target station.
pub fn solo_gradient(target: &Trajectory, theta: &UtilityWeights, cfg: &UtilityConfig) -> Vec<f64> {
    gradient_impl(target, None, theta, cfg).expect("no length check without a pair")
}
