//! Station trajectories, backward-difference kinematics, frame slicing,
//! and time-to-collision.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cpt::Decision;

#[derive(Debug, Error, PartialEq)]
pub enum KinematicsError {
    #[error("window of {window} samples exceeds pair length {len}")]
    WindowTooLong { window: usize, len: usize },
    /// The vehicle is past the crossing point or effectively stopped, so
    /// a time-to-collision is undefined; the caller decides the fallback.
    #[error("vehicle is not approaching the crossing point")]
    NotApproaching,
}

/// Uniformly sampled longitudinal stations of one vehicle in the shared
/// Frenet frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    dt: f64,
    stations: Vec<f64>,
}

impl Trajectory {
    /// Requires `dt > 0` and at least two samples.
    pub fn new(dt: f64, stations: Vec<f64>) -> Self {
        assert!(dt > 0.0, "dt must be positive");
        assert!(stations.len() >= 2, "trajectory needs at least 2 samples");
        Self { dt, stations }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn stations(&self) -> &[f64] {
        &self.stations
    }

    pub fn len(&self) -> usize {
        self.stations.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn last_station(&self) -> f64 {
        *self.stations.last().unwrap()
    }
}

/// Backward-difference speed, acceleration, and jerk profiles; same length
/// as the source trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct KinematicProfile {
    pub speeds: Vec<f64>,
    pub accelerations: Vec<f64>,
    pub jerks: Vec<f64>,
}

/// Backward differences with copy-forward padding: entries before the
/// first defined difference repeat it, so windows do not start with
/// spurious spikes. Profiles that need more samples than available
/// (acceleration below 3, jerk below 4) are zero-filled.
pub fn kinematics(traj: &Trajectory) -> KinematicProfile {
    let s = traj.stations();
    let dt = traj.dt();
    let n = s.len();

    let mut speeds = vec![0.0; n];
    for k in 1..n {
        speeds[k] = (s[k] - s[k - 1]) / dt;
    }
    speeds[0] = speeds[1];

    let mut accelerations = vec![0.0; n];
    if n >= 3 {
        for k in 2..n {
            accelerations[k] = (speeds[k] - speeds[k - 1]) / dt;
        }
        accelerations[0] = accelerations[2];
        accelerations[1] = accelerations[2];
    }

    let mut jerks = vec![0.0; n];
    if n >= 4 {
        for k in 3..n {
            jerks[k] = (accelerations[k] - accelerations[k - 1]) / dt;
        }
        let first = jerks[3];
        jerks[0] = first;
        jerks[1] = first;
        jerks[2] = first;
    }

    KinematicProfile {
        speeds,
        accelerations,
        jerks,
    }
}

/// Target and interacting trajectories over the same time grid, with an
/// optional pass/yield decision label for the target vehicle.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionPair {
    pub pair_id: String,
    pub target: Trajectory,
    pub interacting: Trajectory,
    pub label: Option<Decision>,
}

impl InteractionPair {
    /// Requires equal `dt` and equal sample counts across the two
    /// trajectories.
    pub fn new(
        pair_id: impl Into<String>,
        target: Trajectory,
        interacting: Trajectory,
        label: Option<Decision>,
    ) -> Self {
        assert_eq!(target.dt(), interacting.dt(), "dt mismatch within pair");
        assert_eq!(
            target.len(),
            interacting.len(),
            "sample count mismatch within pair"
        );
        Self {
            pair_id: pair_id.into(),
            target,
            interacting,
            label,
        }
    }

    pub fn len(&self) -> usize {
        self.target.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// One moving-window slice of an interaction pair; the unit of prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub pair_id: String,
    /// Index of the first sample of this window in the source pair.
    pub start: usize,
    pub target: Trajectory,
    pub interacting: Trajectory,
    pub label: Option<Decision>,
}

/// Slices `pair` into moving windows of `window` samples advancing by
/// `stride`; yields `floor((len - window) / stride) + 1` frames, each
/// inheriting the pair label.
pub fn slice_frames(
    pair: &InteractionPair,
    window: usize,
    stride: usize,
) -> Result<Vec<Frame>, KinematicsError> {
    assert!(stride >= 1, "stride must be at least 1");
    assert!(window >= 2, "window must span at least 2 samples");
    let len = pair.len();
    if window > len {
        return Err(KinematicsError::WindowTooLong { window, len });
    }
    let dt = pair.target.dt();
    let count = (len - window) / stride + 1;
    let mut frames = Vec::with_capacity(count);
    for i in 0..count {
        let start = i * stride;
        let t = pair.target.stations()[start..start + window].to_vec();
        let s = pair.interacting.stations()[start..start + window].to_vec();
        frames.push(Frame {
            pair_id: pair.pair_id.clone(),
            start,
            target: Trajectory::new(dt, t),
            interacting: Trajectory::new(dt, s),
            label: pair.label,
        });
    }
    Ok(frames)
}

/// Minimum speed treated as "approaching" for TTC purposes.
pub const TTC_SPEED_FLOOR: f64 = 1e-3;

/// Time to reach the crossing point: `(-station) / speed` for a vehicle
/// strictly before the crossing (`station < 0`) moving faster than the
/// speed floor.
pub fn ttc(station: f64, speed: f64) -> Result<f64, KinematicsError> {
    if station >= 0.0 || speed <= TTC_SPEED_FLOOR {
        return Err(KinematicsError::NotApproaching);
    }
    Ok(-station / speed)
}
