//! Counterfactual target trajectories behind the pass and yield actions:
//! the unobstructed optimal pass, the pass truncated by forced maximal
//! braking, the stop-bounded yield, and the opponent's constant-speed
//! rollout.
//!
//! The decision variable is the station sequence. Optimization is
//! projected gradient ascent on the utility of the target alone; the
//! projection runs forward in speed space, clamping each step's speed to
//! the box allowed by the previous speed, the acceleration limits, the
//! speed limits, and (for yield) the braking headroom to the stop bound.

use thiserror::Error;

use crate::features::{solo_gradient, solo_utility, UtilityConfig, UtilityWeights};
use crate::kinematics::{kinematics, Trajectory};

#[derive(Debug, Error, PartialEq)]
pub enum SynthesisError {
    #[error("projected gradient line search failed {0} consecutive times")]
    NonConvergence(usize),
    #[error("initial station {station} is beyond the stop bound {stop_station}")]
    InfeasibleStart { station: f64, stop_station: f64 },
}

/// Current kinematic state a counterfactual rollout starts from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialState {
    pub station: f64,
    pub speed: f64,
    pub acceleration: f64,
}

impl InitialState {
    pub fn new(station: f64, speed: f64, acceleration: f64) -> Self {
        assert!(
            station.is_finite() && speed.is_finite() && acceleration.is_finite(),
            "non-finite initial state"
        );
        assert!(speed >= 0.0, "speed must be non-negative");
        Self {
            station,
            speed,
            acceleration,
        }
    }
}

/// Box limits on speed and acceleration.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MotionLimits {
    /// Most negative allowed acceleration (< 0), the maximal braking rate.
    pub a_min: f64,
    /// Largest allowed acceleration (> 0).
    pub a_max: f64,
    /// Speed cap (> 0).
    pub v_max: f64,
}

impl Default for MotionLimits {
    fn default() -> Self {
        Self {
            a_min: -3.0,
            a_max: 2.0,
            v_max: 15.0,
        }
    }
}

impl MotionLimits {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.a_min < 0.0 && self.a_max > 0.0 && self.v_max > 0.0) {
            return Err(format!(
                "need a_min < 0 < a_max and v_max > 0, got ({}, {}, {})",
                self.a_min, self.a_max, self.v_max
            ));
        }
        Ok(())
    }
}

/// Station upper bound a yielding target must respect until the
/// interacting vehicle clears the crossing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YieldConstraint {
    /// Hold-back bound (< 0, before the crossing point).
    pub stop_station: f64,
    /// The non-yield composition requires stopping at or before
    /// `-clearance_margin`.
    pub clearance_margin: f64,
}

impl YieldConstraint {
    pub fn new(stop_station: f64, clearance_margin: f64) -> Self {
        assert!(stop_station < 0.0, "stop bound must be before the crossing");
        assert!(clearance_margin >= 0.0);
        Self {
            stop_station,
            clearance_margin,
        }
    }

    /// No hold-back bound: the yield optimization degenerates to the
    /// unconstrained pass problem.
    pub fn unbounded(clearance_margin: f64) -> Self {
        Self {
            stop_station: f64::INFINITY,
            clearance_margin,
        }
    }
}

/// Rolls the state forward at its initial speed: `s[k] = s0 + k dt v0`.
pub fn constant_speed_trajectory(init: &InitialState, horizon: usize, dt: f64) -> Trajectory {
    assert!(horizon >= 2, "horizon must be at least 2 samples");
    let stations = (0..horizon)
        .map(|k| init.station + k as f64 * dt * init.speed)
        .collect();
    Trajectory::new(dt, stations)
}

/// Speed cap from which maximal braking still stops before `stop`,
/// counting the current step's travel; the continuous-time bound, which
/// upper-bounds the discrete stopping distance.
fn braking_speed_cap(current_station: f64, stop: f64, a_min: f64, dt: f64) -> f64 {
    let slack = (stop - current_station).max(0.0);
    let decel = -a_min;
    decel * (-dt + (dt * dt + 2.0 * slack / decel).sqrt())
}

/// Projects desired stations onto the feasible set by a forward pass in
/// speed space. The first station stays at `init.station`; each speed is
/// clamped to the acceleration box around the previous speed, to
/// [0, v_max], and, when `stop` is set, to the braking headroom so the
/// stop bound stays reachable under maximal braking.
pub fn project_feasible(
    desired: &[f64],
    init: &InitialState,
    limits: &MotionLimits,
    stop: Option<f64>,
    dt: f64,
) -> Vec<f64> {
    let n = desired.len();
    let mut out = Vec::with_capacity(n);
    out.push(init.station);
    let mut v_prev = init.speed;
    for k in 1..n {
        let v_lo = (v_prev + limits.a_min * dt).max(0.0);
        let mut v_hi = (v_prev + limits.a_max * dt).min(limits.v_max);
        if let Some(stop) = stop {
            let cap = braking_speed_cap(out[k - 1], stop, limits.a_min, dt).max(0.0);
            // The stop bound wins if it conflicts with the deceleration
            // floor; feasible starts never reach that branch.
            v_hi = v_hi.min(cap);
        }
        let v_des = (desired[k] - out[k - 1]) / dt;
        let v = v_des.clamp(v_lo.min(v_hi), v_hi);
        out.push(out[k - 1] + v * dt);
        v_prev = v;
    }
    out
}

/// Which constraint decided a rollout step's speed; drives the gradient
/// pullback.
#[derive(Clone, Copy, PartialEq)]
enum StepBranch {
    /// Speed followed the requested acceleration.
    Free,
    /// Speed pinned by the braking headroom to the stop bound; carries
    /// the cap's slope with respect to the previous station.
    Cap(f64),
    /// Speed pinned at 0 or v_max.
    Clamped,
}

struct Rollout {
    stations: Vec<f64>,
    branches: Vec<StepBranch>,
}

/// Rolls accelerations out into stations, clamping speeds to [0, v_max]
/// and to the braking headroom when a stop bound is present.
fn rollout_accels(
    accels: &[f64],
    init: &InitialState,
    limits: &MotionLimits,
    stop: Option<f64>,
    dt: f64,
) -> Rollout {
    let mut stations = Vec::with_capacity(accels.len() + 1);
    let mut branches = Vec::with_capacity(accels.len());
    stations.push(init.station);
    let mut v = init.speed;
    for (k, a) in accels.iter().enumerate() {
        let raw = v + a * dt;
        let clamped = raw.clamp(0.0, limits.v_max);
        let mut branch = if clamped == raw {
            StepBranch::Free
        } else {
            StepBranch::Clamped
        };
        let mut v_next = clamped;
        if let Some(stop) = stop {
            let decel = -limits.a_min;
            let slack = stop - stations[k];
            let cap = braking_speed_cap(stations[k], stop, limits.a_min, dt).max(0.0);
            if cap < v_next {
                v_next = cap;
                branch = if slack > 0.0 {
                    StepBranch::Cap(-1.0 / (dt * dt + 2.0 * slack / decel).sqrt())
                } else {
                    StepBranch::Clamped
                };
            }
        }
        v = v_next;
        stations.push(stations[k] + v * dt);
        branches.push(branch);
    }
    Rollout { stations, branches }
}

/// Reverse-mode pullback of a station-space gradient onto the
/// acceleration variables, following the branch each rollout step took.
fn accel_gradient(rollout: &Rollout, station_grad: &[f64], dt: f64) -> Vec<f64> {
    let n = station_grad.len();
    let mut gu = vec![0.0; n - 1];
    let mut bar_s_next = 0.0;
    let mut bar_v_next = 0.0;
    for k in (1..n).rev() {
        let bs = station_grad[k] + bar_s_next;
        let bv = bar_v_next + dt * bs;
        match rollout.branches[k - 1] {
            StepBranch::Free => {
                gu[k - 1] = bv * dt;
                bar_v_next = bv;
                bar_s_next = bs;
            }
            StepBranch::Cap(slope) => {
                bar_v_next = 0.0;
                bar_s_next = bs + bv * slope;
            }
            StepBranch::Clamped => {
                bar_v_next = 0.0;
                bar_s_next = bs;
            }
        }
    }
    gu
}

/// How many consecutive line-search failures count as non-convergence.
const LINE_SEARCH_RESTARTS: usize = 5;
const MAX_ITERATIONS: usize = 500;
const IMPROVEMENT_TOLERANCE: f64 = 1e-8;

/// Projected gradient ascent on the acceleration profile (the
/// best-conditioned parameterization of the station sequence), seeded
/// with the constant-speed rollout. Backtracking halves the step from 1.0
/// and the ascent stops once an accepted step improves by less than 1e-8.
fn ascend(
    init: &InitialState,
    theta: &UtilityWeights,
    cfg: &UtilityConfig,
    limits: &MotionLimits,
    stop: Option<f64>,
    horizon: usize,
    dt: f64,
) -> Result<Trajectory, SynthesisError> {
    let mut accels = vec![0.0; horizon - 1];
    let mut rolled = rollout_accels(&accels, init, limits, stop, dt);
    let mut current = Trajectory::new(dt, rolled.stations.clone());
    let mut value = solo_utility(&current, theta, cfg);
    let mut failures = 0;

    for _ in 0..MAX_ITERATIONS {
        let gs = solo_gradient(&current, theta, cfg);
        let gu = accel_gradient(&rolled, &gs, dt);
        if gu.iter().fold(0.0f64, |m, g| m.max(g.abs())) < 1e-12 {
            break;
        }

        let mut step = 1.0;
        let mut accepted = false;
        let mut saw_non_finite = false;
        for _ in 0..60 {
            let candidate_accels: Vec<f64> = accels
                .iter()
                .zip(&gu)
                .map(|(a, g)| (a + step * g).clamp(limits.a_min, limits.a_max))
                .collect();
            let candidate_rollout = rollout_accels(&candidate_accels, init, limits, stop, dt);
            let candidate = Trajectory::new(dt, candidate_rollout.stations.clone());
            let candidate_value = solo_utility(&candidate, theta, cfg);
            saw_non_finite |= !candidate_value.is_finite();
            if candidate_value > value {
                let gain = candidate_value - value;
                accels = candidate_accels;
                rolled = candidate_rollout;
                current = candidate;
                value = candidate_value;
                accepted = true;
                failures = 0;
                if gain < IMPROVEMENT_TOLERANCE {
                    return Ok(current);
                }
                break;
            }
            step *= 0.5;
        }

        if !accepted {
            if value.is_finite() && !saw_non_finite {
                // No feasible improving step at any scale down to machine
                // resolution: a local maximizer under the projection.
                break;
            }
            failures += 1;
            if failures >= LINE_SEARCH_RESTARTS {
                return Err(SynthesisError::NonConvergence(failures));
            }
        }
    }
    Ok(current)
}

/// Best-utility passing trajectory with the interacting vehicle absent,
/// found by projected gradient ascent from the constant-speed rollout.
pub fn optimal_pass_trajectory(
    init: &InitialState,
    theta: &UtilityWeights,
    cfg: &UtilityConfig,
    limits: &MotionLimits,
    horizon: usize,
    dt: f64,
) -> Result<Trajectory, SynthesisError> {
    ascend(init, theta, cfg, limits, None, horizon, dt)
}

/// Best-utility yielding trajectory: the same objective with every station
/// bounded by `constraint.stop_station`, enforced by projection.
pub fn optimal_yield_trajectory(
    init: &InitialState,
    constraint: &YieldConstraint,
    theta: &UtilityWeights,
    cfg: &UtilityConfig,
    limits: &MotionLimits,
    horizon: usize,
    dt: f64,
) -> Result<Trajectory, SynthesisError> {
    if init.station > constraint.stop_station {
        return Err(SynthesisError::InfeasibleStart {
            station: init.station,
            stop_station: constraint.stop_station,
        });
    }
    ascend(
        init,
        theta,
        cfg,
        limits,
        Some(constraint.stop_station),
        horizon,
        dt,
    )
}

/// Braking rollout from `(station, speed)` at constant `a_min`, clipped at
/// zero speed, for `steps` samples.
fn braking_tail(station: f64, speed: f64, a_min: f64, dt: f64, steps: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(steps);
    let mut s = station;
    let mut v = speed;
    for _ in 0..steps {
        v = (v + a_min * dt).max(0.0);
        s += v * dt;
        out.push(s);
    }
    out
}

/// Simulates braking that begins at 0-based sample `onset`: samples up to
/// `onset` follow the pass trajectory, later samples brake at `a_min`
/// from the state at `onset` (clipped at zero speed). Returns true when
/// the target stays at or before `-margin` for as long as the
/// (constant-speed-extended) interacting vehicle has not cleared the
/// crossing; the simulation extends past the horizon until the target
/// rests or the opponent clears.
fn braking_onset_is_safe(
    pass: &Trajectory,
    interacting: &Trajectory,
    onset: usize,
    limits: &MotionLimits,
    margin: f64,
    dt: f64,
) -> bool {
    let n = pass.len();
    let junction = onset.min(n - 1);
    let speeds = kinematics(pass).speeds;
    let i_stations = interacting.stations();
    let v_i = kinematics(interacting).speeds[n - 1];
    let opponent = |m: usize| -> f64 {
        if m < n {
            i_stations[m]
        } else {
            i_stations[n - 1] + (m - n + 1) as f64 * v_i * dt
        }
    };

    let brake_steps = (limits.v_max / (-limits.a_min * dt)).ceil() as usize;
    let mut s_t = pass.stations()[0];
    let mut v_t = speeds[0];
    for m in 0..=(n + brake_steps + 4) {
        if m <= junction {
            s_t = pass.stations()[m];
            v_t = speeds[m];
        } else {
            v_t = (v_t + limits.a_min * dt).max(0.0);
            s_t += v_t * dt;
        }
        if opponent(m) > 0.0 {
            return true;
        }
        if s_t > -margin {
            return false;
        }
        if m > junction && v_t == 0.0 {
            return true;
        }
    }
    // Opponent stalled before the crossing while the target rests behind
    // the margin.
    true
}

/// Composes the non-yield counterfactual: the optimal pass up to sample
/// `k0`, then constant maximal braking clipped at zero speed. `k0` is the
/// largest braking onset for which the target still stops at or before
/// `-margin` while the interacting vehicle has not cleared the crossing;
/// `k0` equal to the horizon means no braking is needed within it. If
/// even immediate braking cannot stop in time, returns that trajectory
/// with `k0 = 0`.
pub fn compose_pass_nonyield(
    optimal_pass: &Trajectory,
    interacting_constant: &Trajectory,
    limits: &MotionLimits,
    margin: f64,
    dt: f64,
) -> (Trajectory, usize) {
    assert_eq!(
        optimal_pass.len(),
        interacting_constant.len(),
        "trajectory lengths differ"
    );
    let n = optimal_pass.len();
    if braking_onset_is_safe(optimal_pass, interacting_constant, n, limits, margin, dt) {
        return (optimal_pass.clone(), n);
    }
    // Onset n - 1 keeps every sample too, so the largest distinct
    // interior onset is n - 2.
    for onset in (1..=n.saturating_sub(2)).rev() {
        if braking_onset_is_safe(optimal_pass, interacting_constant, onset, limits, margin, dt) {
            return (compose_at(optimal_pass, onset, limits, dt), onset);
        }
    }
    (compose_at(optimal_pass, 0, limits, dt), 0)
}

fn compose_at(pass: &Trajectory, onset: usize, limits: &MotionLimits, dt: f64) -> Trajectory {
    let n = pass.len();
    let junction = onset.min(n - 1);
    if junction >= n - 1 {
        return pass.clone();
    }
    let speeds = kinematics(pass).speeds;
    let mut stations = pass.stations()[..=junction].to_vec();
    stations.extend(braking_tail(
        pass.stations()[junction],
        speeds[junction],
        limits.a_min,
        dt,
        n - 1 - junction,
    ));
    Trajectory::new(dt, stations)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn cfg() -> UtilityConfig {
        UtilityConfig::default()
    }

    fn limits() -> MotionLimits {
        MotionLimits::default()
    }

    fn theta() -> UtilityWeights {
        UtilityWeights([1.0, 0.5, 0.25, 0.0])
    }

    #[test]
    fn constant_speed_rollout() {
        let t = constant_speed_trajectory(&InitialState::new(-30.0, 0.0, 0.0), 10, 0.1);
        assert!(t.stations().iter().all(|&s| s == -30.0));

        let t = constant_speed_trajectory(&InitialState::new(-30.0, 10.0, 0.0), 11, 0.1);
        assert!((t.last_station() - -20.0).abs() < 1e-12);

        let prof = kinematics(&t);
        assert!(prof.accelerations.iter().all(|&a| a.abs() < 1e-9));
    }

    #[test]
    fn optimizer_keeps_stationary_optimum() {
        let c = cfg();
        let init = InitialState::new(-40.0, c.v_traffic, 0.0);
        let seed = constant_speed_trajectory(&init, 30, 0.1);
        let out = optimal_pass_trajectory(&init, &theta(), &c, &limits(), 30, 0.1).unwrap();
        let u_seed = solo_utility(&seed, &theta(), &c);
        let u_out = solo_utility(&out, &theta(), &c);
        assert!((u_out - u_seed).abs() < 1e-9);
        for (a, b) in out.stations().iter().zip(seed.stations()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_weights_return_initialization() {
        let init = InitialState::new(-40.0, 5.0, 0.0);
        let out =
            optimal_pass_trajectory(&init, &UtilityWeights::ZERO, &cfg(), &limits(), 20, 0.1)
                .unwrap();
        let seed = constant_speed_trajectory(&init, 20, 0.1);
        for (a, b) in out.stations().iter().zip(seed.stations()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    fn assert_feasible(t: &Trajectory, init: &InitialState, lim: &MotionLimits, stop: Option<f64>) {
        let dt = t.dt();
        let s = t.stations();
        assert!((s[0] - init.station).abs() < 1e-12);
        let mut v_prev = init.speed;
        for k in 1..s.len() {
            let v = (s[k] - s[k - 1]) / dt;
            assert!(v >= -1e-9, "speed {v} negative at {k}");
            assert!(v <= lim.v_max + 1e-9, "speed {v} above cap at {k}");
            let a = (v - v_prev) / dt;
            assert!(a >= lim.a_min - 1e-6, "accel {a} below floor at {k}");
            assert!(a <= lim.a_max + 1e-6, "accel {a} above cap at {k}");
            if let Some(stop) = stop {
                assert!(s[k] <= stop + 1e-9, "station {} beyond stop {stop}", s[k]);
            }
            v_prev = v;
        }
    }

    /// Exhaustive oracle over piecewise-constant acceleration profiles:
    /// `levels` accelerations per 0.5 s block.
    fn grid_search_best(
        init: &InitialState,
        th: &UtilityWeights,
        c: &UtilityConfig,
        lim: &MotionLimits,
        stop: Option<f64>,
        horizon: usize,
        dt: f64,
        levels: usize,
    ) -> f64 {
        let block = (0.5 / dt).round() as usize;
        let blocks = horizon.div_ceil(block);
        let mut best = f64::NEG_INFINITY;
        let mut profile = vec![0usize; blocks];
        loop {
            // Roll out this acceleration profile.
            let mut stations = vec![init.station];
            let mut v = init.speed;
            let mut s = init.station;
            for k in 1..horizon {
                let level = profile[(k - 1) / block];
                let a = lim.a_min + (lim.a_max - lim.a_min) * level as f64 / (levels - 1) as f64;
                v = (v + a * dt).clamp(0.0, lim.v_max);
                if let Some(stop) = stop {
                    let cap = braking_speed_cap(s, stop, lim.a_min, dt).max(0.0);
                    v = v.min(cap);
                }
                s += v * dt;
                stations.push(s);
            }
            let u = solo_utility(&Trajectory::new(dt, stations), th, c);
            if u > best {
                best = u;
            }
            // Next profile in mixed radix.
            let mut i = 0;
            loop {
                if i == blocks {
                    return best;
                }
                profile[i] += 1;
                if profile[i] < levels {
                    break;
                }
                profile[i] = 0;
                i += 1;
            }
        }
    }

    #[test]
    fn slow_start_accelerates_toward_traffic_speed() {
        let c = cfg();
        let dt = 0.1;
        let horizon = 30;
        let init = InitialState::new(-50.0, c.v_traffic / 2.0, 0.0);
        let out = optimal_pass_trajectory(&init, &theta(), &c, &limits(), horizon, dt).unwrap();
        assert_feasible(&out, &init, &limits(), None);
        let prof = kinematics(&out);
        let terminal = prof.speeds[horizon - 1];
        assert!(
            (terminal - c.v_traffic).abs() <= 0.1 * c.v_traffic,
            "terminal speed {terminal}"
        );
        assert!(prof.speeds[horizon - 1] > prof.speeds[1]);

        // The optimizer must match or beat the 7-level profile oracle.
        let best_grid =
            grid_search_best(&init, &theta(), &c, &limits(), None, horizon, dt, 7);
        let u_out = solo_utility(&out, &theta(), &c);
        assert!(
            u_out >= best_grid - 1e-6,
            "optimizer {u_out} vs grid {best_grid}"
        );
    }

    #[test]
    fn yield_respects_stop_bound_and_matches_grid() {
        let c = cfg();
        let dt = 0.1;
        let horizon = 30;
        let init = InitialState::new(-23.0, c.v_traffic, 0.0);
        let constraint = YieldConstraint::new(-3.0, 0.5);
        let out = optimal_yield_trajectory(
            &init,
            &constraint,
            &theta(),
            &c,
            &limits(),
            horizon,
            dt,
        )
        .unwrap();
        assert_feasible(&out, &init, &limits(), Some(constraint.stop_station));
        let prof = kinematics(&out);
        assert!(prof.speeds[horizon - 1] < init.speed, "must slow down");

        let best_grid = grid_search_best(
            &init,
            &theta(),
            &c,
            &limits(),
            Some(constraint.stop_station),
            horizon,
            dt,
            7,
        );
        let u_out = solo_utility(&out, &theta(), &c);
        assert!(
            u_out >= best_grid - 1e-6,
            "optimizer {u_out} vs grid {best_grid}"
        );
    }

    #[test]
    fn yield_at_stop_line_with_zero_speed_stays_put() {
        let constraint = YieldConstraint::new(-3.0, 0.5);
        let init = InitialState::new(-3.0, 0.0, 0.0);
        let out = optimal_yield_trajectory(
            &init,
            &constraint,
            &theta(),
            &cfg(),
            &limits(),
            20,
            0.1,
        )
        .unwrap();
        assert!(out.stations().iter().all(|&s| (s - -3.0).abs() < 1e-12));
    }

    #[test]
    fn inactive_stop_bound_equals_optimal_pass() {
        let c = cfg();
        let init = InitialState::new(-40.0, 5.0, 0.0);
        let constraint = YieldConstraint::unbounded(0.5);
        let yielded = optimal_yield_trajectory(
            &init,
            &constraint,
            &theta(),
            &c,
            &limits(),
            25,
            0.1,
        )
        .unwrap();
        let pass = optimal_pass_trajectory(&init, &theta(), &c, &limits(), 25, 0.1).unwrap();
        for (a, b) in yielded.stations().iter().zip(pass.stations()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn infeasible_start_rejected() {
        let constraint = YieldConstraint::new(-3.0, 0.5);
        let init = InitialState::new(-1.0, 2.0, 0.0);
        assert!(matches!(
            optimal_yield_trajectory(
                &init,
                &constraint,
                &theta(),
                &cfg(),
                &limits(),
                20,
                0.1
            ),
            Err(SynthesisError::InfeasibleStart { .. })
        ));
    }

    #[test]
    fn compose_matches_closed_form_braking_distance() {
        // Constant 10 m/s from -50 m with a_min = -5: the continuous
        // braking distance is v^2 / (2 |a_min|) = 10 m, so braking must
        // start at -10 m, i.e. after 40 samples at dt = 0.1.
        let dt = 0.1;
        let lim = MotionLimits {
            a_min: -5.0,
            a_max: 2.0,
            v_max: 15.0,
        };
        let pass = constant_speed_trajectory(&InitialState::new(-50.0, 10.0, 0.0), 60, dt);
        // Opponent far away and slow: never clears within the check.
        let opp = constant_speed_trajectory(&InitialState::new(-500.0, 1.0, 0.0), 60, dt);
        let (composed, k0) = compose_pass_nonyield(&pass, &opp, &lim, 0.0, dt);
        assert_eq!(k0, 40);
        assert!(composed.stations().iter().all(|&s| s <= 0.0));
        // Discrete braking from -10 m at 10 m/s rests at -0.5 m.
        assert!((composed.last_station() - -0.5).abs() < 1e-9);

        // One step later would overshoot: verified by simulation.
        assert!(!braking_onset_is_safe(&pass, &opp, 41, &lim, 0.0, dt));
        assert!(braking_onset_is_safe(&pass, &opp, 40, &lim, 0.0, dt));
    }

    #[test]
    fn stopped_target_needs_no_braking() {
        let dt = 0.1;
        let pass = constant_speed_trajectory(&InitialState::new(-10.0, 0.0, 0.0), 30, dt);
        let opp = constant_speed_trajectory(&InitialState::new(-40.0, 3.0, 0.0), 30, dt);
        let (composed, k0) = compose_pass_nonyield(&pass, &opp, &limits(), 0.5, dt);
        assert_eq!(k0, 30);
        assert_eq!(composed.stations(), pass.stations());
    }

    #[test]
    fn hopeless_start_returns_immediate_braking_with_k0_zero() {
        let dt = 0.1;
        let lim = MotionLimits {
            a_min: -2.0,
            a_max: 2.0,
            v_max: 20.0,
        };
        // 14 m/s two meters before the crossing: cannot stop in time.
        let pass = constant_speed_trajectory(&InitialState::new(-2.0, 14.0, 0.0), 30, dt);
        let opp = constant_speed_trajectory(&InitialState::new(-400.0, 1.0, 0.0), 30, dt);
        let (composed, k0) = compose_pass_nonyield(&pass, &opp, &lim, 0.0, dt);
        assert_eq!(k0, 0);
        // Immediate braking: first speed already reduced.
        let prof = kinematics(&composed);
        assert!(prof.speeds[1] < 14.0);
    }

    #[test]
    fn early_clearing_opponent_allows_full_pass() {
        let dt = 0.1;
        // Opponent crosses almost immediately; the target may keep its
        // optimal pass even though it cannot stop before the crossing.
        let pass = constant_speed_trajectory(&InitialState::new(-8.0, 10.0, 0.0), 30, dt);
        let opp = constant_speed_trajectory(&InitialState::new(-0.5, 8.0, 0.0), 30, dt);
        let (composed, k0) = compose_pass_nonyield(&pass, &opp, &limits(), 0.5, dt);
        assert_eq!(k0, 30);
        assert_eq!(composed.stations(), pass.stations());
    }

    #[test]
    fn k0_maximality_on_random_scenarios() {
        let mut rng = StdRng::seed_from_u64(99);
        let dt = 0.1;
        for trial in 0..50 {
            let lim = MotionLimits {
                a_min: rng.random_range(-6.0..-2.0),
                a_max: 2.0,
                v_max: 20.0,
            };
            let margin = rng.random_range(0.0..1.0);
            let init = InitialState::new(
                rng.random_range(-60.0..-25.0),
                rng.random_range(4.0..12.0),
                0.0,
            );
            let pass = constant_speed_trajectory(&init, 50, dt);
            let opp = constant_speed_trajectory(
                &InitialState::new(rng.random_range(-300.0..-200.0), 1.0, 0.0),
                50,
                dt,
            );
            let (_composed, k0) = compose_pass_nonyield(&pass, &opp, &lim, margin, dt);
            if k0 > 0 {
                assert!(
                    braking_onset_is_safe(&pass, &opp, k0, &lim, margin, dt),
                    "trial {trial}: k0={k0} unsafe"
                );
            }
            if k0 <= 47 {
                assert!(
                    !braking_onset_is_safe(&pass, &opp, k0 + 1, &lim, margin, dt),
                    "trial {trial}: k0={k0} not maximal"
                );
            }
        }
    }

    #[test]
    fn composition_is_continuous() {
        let mut rng = StdRng::seed_from_u64(7);
        let dt = 0.1;
        let lim = limits();
        for _ in 0..20 {
            let init = InitialState::new(
                rng.random_range(-60.0..-20.0),
                rng.random_range(2.0..12.0),
                0.0,
            );
            let pass =
                optimal_pass_trajectory(&init, &theta(), &cfg(), &lim, 40, dt).unwrap();
            let opp = constant_speed_trajectory(
                &InitialState::new(rng.random_range(-80.0..-20.0), rng.random_range(0.0..8.0), 0.0),
                40,
                dt,
            );
            let (composed, _) = compose_pass_nonyield(&pass, &opp, &lim, 0.5, dt);
            for w in composed.stations().windows(2) {
                assert!(w[1] - w[0] <= lim.v_max * dt + 1e-9);
                assert!(w[1] - w[0] >= -1e-9);
            }
        }
    }

    #[test]
    fn optimum_beats_random_feasible_perturbations() {
        let mut rng = StdRng::seed_from_u64(2024);
        let c = cfg();
        let dt = 0.1;
        let lim = limits();
        for trial in 0..20 {
            let yielding = trial % 2 == 1;
            let init = InitialState::new(
                rng.random_range(-60.0..-25.0),
                rng.random_range(1.0..10.0),
                0.0,
            );
            let stop = if yielding { Some(-3.0) } else { None };
            let out = ascend(&init, &theta(), &c, &lim, stop, 30, dt).unwrap();
            let u_opt = solo_utility(&out, &theta(), &c);
            for _ in 0..1000 {
                let noisy: Vec<f64> = out
                    .stations()
                    .iter()
                    .map(|s| s + 0.05 * rng_normal(&mut rng))
                    .collect();
                let projected = project_feasible(&noisy, &init, &lim, stop, dt);
                let u = solo_utility(&Trajectory::new(dt, projected), &theta(), &c);
                // Slack covers the 1e-8 improvement cutoff of the ascent.
                assert!(
                    u <= u_opt + 1e-6,
                    "trial {trial}: perturbation {u} beats optimum {u_opt}"
                );
            }
        }
    }

    fn rng_normal(rng: &mut StdRng) -> f64 {
        // Box-Muller transform.
        let u1: f64 = rng.random_range(1e-12..1.0);
        let u2: f64 = rng.random_range(0.0..1.0);
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    #[test]
    fn braking_tail_rests_at_closed_form_station() {
        // From 10 m/s at -5 m/s^2: discrete rest v^2/(2|a|) - v dt / 2
        // below the continuous 10 m, i.e. 9.5 m traveled.
        let tail = braking_tail(-10.0, 10.0, -5.0, 0.1, 30);
        assert!((tail.last().unwrap() - -0.5).abs() < 1e-9);
        assert!(tail.windows(2).all(|w| w[1] >= w[0]));
    }
}
