//! End-to-end predictors and success-rate evaluation.
//!
//! The TTC baseline turns the last-sample time-to-collision gap into a
//! pass probability; the valuation pipeline synthesizes the three
//! counterfactual trajectories, evaluates their utilities, and scores the
//! two actions. Reports carry a confusion matrix at frame or pair
//! granularity.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cpt::{
    decision_probabilities, driving_values, CptParams, Decision, DrivingUtilities, WeightingMode,
};
use crate::features::{solo_utility, utility, UtilityConfig, UtilityWeights};
use crate::kinematics::{kinematics, ttc, Frame, KinematicsError};
use crate::synthesis::{
    compose_pass_nonyield, constant_speed_trajectory, optimal_pass_trajectory,
    optimal_yield_trajectory, InitialState, MotionLimits, SynthesisError, YieldConstraint,
};

#[derive(Debug, Error, PartialEq)]
pub enum EvaluationError {
    #[error("frame {0} of pair {1} has no label")]
    UnlabeledFrame(usize, String),
    #[error("no predictions to evaluate")]
    EmptyPredictions,
    #[error(transparent)]
    Synthesis(#[from] SynthesisError),
}

/// One model output for one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub pair_id: String,
    pub frame_index: usize,
    pub model: String,
    pub pr_pass: f64,
    pub predicted: Decision,
    pub label: Option<Decision>,
}

/// Aggregation level of a report: each frame counts once, or frames vote
/// per pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Frame,
    Pair,
}

impl std::str::FromStr for Granularity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "frame" => Ok(Granularity::Frame),
            "pair" => Ok(Granularity::Pair),
            other => Err(format!("unknown granularity {other:?}")),
        }
    }
}

/// Success rate and confusion counts for one model.
/// `confusion[actual][predicted]` with index 0 = pass, 1 = yield.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub model: String,
    pub success_rate: f64,
    pub confusion: [[usize; 2]; 2],
    pub sample_count: usize,
    pub threshold: f64,
    pub granularity: Granularity,
}

/// Last-sample kinematic state of one vehicle in a frame.
fn last_state(traj: &crate::kinematics::Trajectory) -> InitialState {
    let prof = kinematics(traj);
    let n = traj.len();
    InitialState::new(
        traj.stations()[n - 1],
        prof.speeds[n - 1].max(0.0),
        prof.accelerations[n - 1],
    )
}

/// Pass probability of the target from the last-sample TTC gap, with
/// total fallbacks for degenerate states. A vehicle already past the
/// crossing has effectively taken its turn; a stopped vehicle concedes it.
/// The rules are antisymmetric under swapping the two roles, and fully
/// ambiguous states give 0.5.
pub fn ttc_pass_probability(frame: &Frame) -> f64 {
    let target = last_state(&frame.target);
    let interacting = last_state(&frame.interacting);
    let t_past = target.station >= 0.0;
    let i_past = interacting.station >= 0.0;
    match (t_past, i_past) {
        (true, true) => return 0.5,
        (true, false) => return 1.0,
        (false, true) => return 0.0,
        (false, false) => {}
    }
    let ttc_t = ttc(target.station, target.speed);
    let ttc_i = ttc(interacting.station, interacting.speed);
    match (ttc_t, ttc_i) {
        (Ok(t), Ok(i)) => 1.0 / (1.0 + (t - i).exp()),
        (Err(KinematicsError::NotApproaching), Ok(_)) => 0.0,
        (Ok(_), Err(KinematicsError::NotApproaching)) => 1.0,
        _ => 0.5,
    }
}

/// TTC baseline prediction for one frame.
pub fn ttc_predict(frame: &Frame) -> f64 {
    ttc_pass_probability(frame)
}

/// Everything the valuation pipeline needs besides the shape parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorConfig {
    pub theta: UtilityWeights,
    pub utility: UtilityConfig,
    pub limits: MotionLimits,
    /// Samples in each synthesized counterfactual.
    pub horizon: usize,
    pub dt: f64,
    /// Yield hold-back distance before the crossing (m); the stop bound
    /// is `-stop_offset` unless the vehicle is already closer.
    pub stop_offset: f64,
    /// Required stopping margin before the crossing in the non-yield
    /// composition (m).
    pub clearance_margin: f64,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            theta: UtilityWeights([1.0, 0.5, 0.25, 0.5]),
            utility: UtilityConfig::default(),
            limits: MotionLimits::default(),
            // 2 s keeps the utility scale inside the softmax's working
            // range for the default weights.
            horizon: 20,
            dt: 0.1,
            stop_offset: 3.0,
            clearance_margin: 0.5,
        }
    }
}

/// Pipeline output for one frame, with the intermediates kept for
/// interpretability.
#[derive(Debug, Clone, PartialEq)]
pub struct CptPrediction {
    pub pr_pass: f64,
    pub utilities: DrivingUtilities,
    pub p_yield: f64,
    /// Common offset added to all three utilities when any was negative
    /// (the valuation assumes gains only); 0 when untouched.
    pub gain_shift: f64,
    pub v_pass: f64,
    pub v_yield: f64,
}

/// Synthesizes the three counterfactuals for a frame and evaluates their
/// utilities and the yield probability. Returns `(utilities, p_yield,
/// gain_shift)`.
pub fn frame_observation(
    frame: &Frame,
    cfg: &PredictorConfig,
) -> Result<(DrivingUtilities, f64, f64), EvaluationError> {
    let target = last_state(&frame.target);
    let interacting = last_state(&frame.interacting);
    let dt = cfg.dt;

    let pass = optimal_pass_trajectory(
        &target,
        &cfg.theta,
        &cfg.utility,
        &cfg.limits,
        cfg.horizon,
        dt,
    )?;
    let opponent = constant_speed_trajectory(&interacting, cfg.horizon, dt);
    let (braked, _k0) =
        compose_pass_nonyield(&pass, &opponent, &cfg.limits, cfg.clearance_margin, dt);

    // Hold-back bound: the configured stop bar, or the current station if
    // the vehicle is already closer; past the crossing the yield
    // counterfactual degenerates to immediate braking.
    let yield_traj = if target.station < 0.0 {
        let stop = (-cfg.stop_offset).max(target.station);
        let constraint = YieldConstraint::new(stop, cfg.clearance_margin);
        optimal_yield_trajectory(
            &target,
            &constraint,
            &cfg.theta,
            &cfg.utility,
            &cfg.limits,
            cfg.horizon,
            dt,
        )?
    } else {
        // Already past the crossing: yield degenerates to braking to rest.
        let mut stations = vec![target.station];
        let mut v = target.speed.min(cfg.limits.v_max);
        for k in 1..cfg.horizon {
            v = (v + cfg.limits.a_min * dt).max(0.0);
            stations.push(stations[k - 1] + v * dt);
        }
        crate::kinematics::Trajectory::new(dt, stations)
    };

    let u_pass_yield = solo_utility(&pass, &cfg.theta, &cfg.utility);
    let u_pass_nonyield = utility(&braked, &opponent, &cfg.theta, &cfg.utility)
        .expect("synthesized trajectories share the horizon");
    let u_yield = utility(&yield_traj, &opponent, &cfg.theta, &cfg.utility)
        .expect("synthesized trajectories share the horizon");

    let raw = DrivingUtilities {
        u_pass_yield,
        u_pass_nonyield,
        u_yield,
    };
    let min = u_pass_yield.min(u_pass_nonyield).min(u_yield);
    let gain_shift = if min < 0.0 { -min } else { 0.0 };
    let utilities = DrivingUtilities {
        u_pass_yield: raw.u_pass_yield + gain_shift,
        u_pass_nonyield: raw.u_pass_nonyield + gain_shift,
        u_yield: raw.u_yield + gain_shift,
    };
    let p_yield = ttc_pass_probability(frame);
    Ok((utilities, p_yield, gain_shift))
}

/// Full pipeline prediction for one frame.
pub fn cpt_predict(
    frame: &Frame,
    cfg: &PredictorConfig,
    params: &CptParams,
    mode: WeightingMode,
) -> Result<CptPrediction, EvaluationError> {
    let (utilities, p_yield, gain_shift) = frame_observation(frame, cfg)?;
    let (v_pass, v_yield) = driving_values(&utilities, p_yield, params, mode)
        .expect("gain shift enforces non-negative utilities");
    let (pr_pass, _) = decision_probabilities(v_pass, v_yield);
    Ok(CptPrediction {
        pr_pass,
        utilities,
        p_yield,
        gain_shift,
        v_pass,
        v_yield,
    })
}

/// A runnable decision model.
#[derive(Debug, Clone)]
pub enum Predictor {
    Ttc,
    Cpt {
        config: PredictorConfig,
        params: CptParams,
        mode: WeightingMode,
    },
    /// Expected-utility ablation: the valuation pipeline at identity
    /// shape parameters.
    Eut { config: PredictorConfig },
}

impl Predictor {
    pub fn name(&self) -> &'static str {
        match self {
            Predictor::Ttc => "ttc",
            Predictor::Cpt { .. } => "cpt",
            Predictor::Eut { .. } => "eut",
        }
    }

    pub fn pr_pass(&self, frame: &Frame) -> Result<f64, EvaluationError> {
        match self {
            Predictor::Ttc => Ok(ttc_pass_probability(frame)),
            Predictor::Cpt {
                config,
                params,
                mode,
            } => Ok(cpt_predict(frame, config, params, *mode)?.pr_pass),
            Predictor::Eut { config } => Ok(cpt_predict(
                frame,
                config,
                &CptParams::default(),
                WeightingMode::PaperExact,
            )?
            .pr_pass),
        }
    }
}

/// Runs the model over the frames, producing one record per frame.
pub fn predict_frames(
    model: &Predictor,
    frames: &[Frame],
    threshold: f64,
) -> Result<Vec<PredictionRecord>, EvaluationError> {
    frames
        .iter()
        .map(|frame| {
            let pr_pass = model.pr_pass(frame)?;
            Ok(PredictionRecord {
                pair_id: frame.pair_id.clone(),
                frame_index: frame.start,
                model: model.name().to_string(),
                pr_pass,
                predicted: predicted_decision(pr_pass, threshold),
                label: frame.label,
            })
        })
        .collect()
}

/// Pass exactly when the probability clears the threshold.
pub fn predicted_decision(pr_pass: f64, threshold: f64) -> Decision {
    if pr_pass > threshold {
        Decision::Pass
    } else {
        Decision::Yield
    }
}

fn index(d: Decision) -> usize {
    match d {
        Decision::Pass => 0,
        Decision::Yield => 1,
    }
}

/// Builds a report from labeled prediction records. Pair granularity
/// majority-votes the predicted decisions within each pair (ties yield)
/// and counts each pair once.
pub fn report_from_records(
    records: &[PredictionRecord],
    threshold: f64,
    granularity: Granularity,
) -> Result<EvaluationReport, EvaluationError> {
    if records.is_empty() {
        return Err(EvaluationError::EmptyPredictions);
    }
    let model = records[0].model.clone();
    let mut confusion = [[0usize; 2]; 2];
    match granularity {
        Granularity::Frame => {
            for r in records {
                let label = r.label.ok_or_else(|| {
                    EvaluationError::UnlabeledFrame(r.frame_index, r.pair_id.clone())
                })?;
                confusion[index(label)][index(r.predicted)] += 1;
            }
        }
        Granularity::Pair => {
            let mut by_pair: BTreeMap<&str, (usize, usize, Option<Decision>)> = BTreeMap::new();
            for r in records {
                let label = r.label.ok_or_else(|| {
                    EvaluationError::UnlabeledFrame(r.frame_index, r.pair_id.clone())
                })?;
                let entry = by_pair.entry(&r.pair_id).or_insert((0, 0, Some(label)));
                match r.predicted {
                    Decision::Pass => entry.0 += 1,
                    Decision::Yield => entry.1 += 1,
                }
                entry.2 = Some(label);
            }
            for (_, (pass_votes, yield_votes, label)) in by_pair {
                let predicted = if pass_votes > yield_votes {
                    Decision::Pass
                } else {
                    Decision::Yield
                };
                confusion[index(label.unwrap())][index(predicted)] += 1;
            }
        }
    }
    let total: usize = confusion.iter().flatten().sum();
    let correct = confusion[0][0] + confusion[1][1];
    Ok(EvaluationReport {
        model,
        success_rate: correct as f64 / total as f64,
        confusion,
        sample_count: total,
        threshold,
        granularity,
    })
}

/// Runs the model over labeled frames and reports frame-level accuracy.
pub fn evaluate(
    model: &Predictor,
    frames: &[Frame],
    threshold: f64,
) -> Result<EvaluationReport, EvaluationError> {
    let records = predict_frames(model, frames, threshold)?;
    report_from_records(&records, threshold, Granularity::Frame)
}

/// Plain-text comparison table, one column per model.
pub fn render_comparison_table(reports: &[EvaluationReport]) -> String {
    let mut header = String::from("              ");
    let mut row = String::from("Success rates ");
    for r in reports {
        header.push_str(&format!("{:>10}", r.model.to_uppercase()));
        row.push_str(&format!("{:>9.2}%", 100.0 * r.success_rate));
    }
    format!("{header}\n{row}\n")
}
