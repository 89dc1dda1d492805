//! Python bindings: the main types and operations of the decision model
//! as plain functions over lists, tuples, and strings.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use prospect_drive::cpt;
use prospect_drive::dataset::{generate_synthetic, export_curves, LabelNoise, SynthConfig};
use prospect_drive::estimation::{self, CptObservation, Demonstration, IrlConfig};
use prospect_drive::evaluation::{self, PredictorConfig};
use prospect_drive::features::{self, UtilityConfig, UtilityWeights};
use prospect_drive::geometry;
use prospect_drive::kinematics::{self as kin, Frame, Trajectory};
use prospect_drive::synthesis::{self, InitialState, MotionLimits, YieldConstraint};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn driving_params(alpha: f64, gamma: f64) -> PyResult<cpt::CptParams> {
    cpt::CptParams::driving(alpha, gamma).map_err(value_err)
}

fn parse_mode(mode: &str) -> PyResult<cpt::WeightingMode> {
    mode.parse().map_err(value_err)
}

fn trajectory(stations: Vec<f64>, dt: f64) -> PyResult<Trajectory> {
    if dt <= 0.0 || stations.len() < 2 {
        return Err(PyValueError::new_err(
            "need dt > 0 and at least 2 stations",
        ));
    }
    Ok(Trajectory::new(dt, stations))
}

fn frame(target: Vec<f64>, interacting: Vec<f64>, dt: f64) -> PyResult<Frame> {
    if target.len() != interacting.len() {
        return Err(PyValueError::new_err("trajectory lengths differ"));
    }
    Ok(Frame {
        pair_id: String::new(),
        start: 0,
        target: trajectory(target, dt)?,
        interacting: trajectory(interacting, dt)?,
        label: None,
    })
}

/// Probability weighting `p^e / (p^e + (1-p)^e)^(1/e)`.
#[pyfunction]
fn weighting_fn(p: f64, exponent: f64) -> PyResult<f64> {
    if !(0.0..=1.0).contains(&p) || !(exponent > 0.0 && exponent <= 1.0) {
        return Err(PyValueError::new_err("need p in [0,1], exponent in (0,1]"));
    }
    Ok(cpt::weighting_fn(p, exponent))
}

/// Value function with driving defaults (beta = alpha, lambda = 1,
/// u0 = 0).
#[pyfunction]
#[pyo3(signature = (u, alpha, gamma=0.999_999, lambda_=1.0, u0=0.0))]
fn value_fn(u: f64, alpha: f64, gamma: f64, lambda_: f64, u0: f64) -> PyResult<f64> {
    let params = cpt::CptParams::new(alpha, alpha, gamma, gamma, lambda_, u0).map_err(value_err)?;
    Ok(cpt::value_fn(u, &params))
}

/// Values a prospect given as (utility, probability) pairs;
/// mode is "cpt" or "eut".
#[pyfunction]
#[pyo3(signature = (outcomes, alpha, gamma, mode="cpt"))]
fn prospect_value(
    outcomes: Vec<(f64, f64)>,
    alpha: f64,
    gamma: f64,
    mode: &str,
) -> PyResult<f64> {
    let prospect = cpt::Prospect::new(outcomes).map_err(value_err)?;
    let params = driving_params(alpha, gamma)?;
    let mode = match mode {
        "cpt" => cpt::ValuationMode::Cpt,
        "eut" => cpt::ValuationMode::Eut,
        other => return Err(PyValueError::new_err(format!("unknown mode {other:?}"))),
    };
    Ok(cpt::prospect_value(&prospect, &params, mode))
}

/// (V_pass, V_yield) of the two driving actions.
#[pyfunction]
#[pyo3(signature = (u_pass_yield, u_pass_nonyield, u_yield, p_yield, alpha, gamma, mode="paper_exact"))]
#[allow(clippy::too_many_arguments)]
fn driving_values(
    u_pass_yield: f64,
    u_pass_nonyield: f64,
    u_yield: f64,
    p_yield: f64,
    alpha: f64,
    gamma: f64,
    mode: &str,
) -> PyResult<(f64, f64)> {
    let utilities = cpt::DrivingUtilities {
        u_pass_yield,
        u_pass_nonyield,
        u_yield,
    };
    cpt::driving_values(&utilities, p_yield, &driving_params(alpha, gamma)?, parse_mode(mode)?)
        .map_err(value_err)
}

/// Probability that the interacting vehicle yields, from the TTC gap.
#[pyfunction]
fn yield_probability(ttc_target: f64, ttc_interacting: f64) -> f64 {
    cpt::yield_probability(ttc_target, ttc_interacting)
}

/// Softmax (Pr_pass, Pr_yield) over the two action values.
#[pyfunction]
fn decision_probabilities(v_pass: f64, v_yield: f64) -> (f64, f64) {
    cpt::decision_probabilities(v_pass, v_yield)
}

/// Argmax decision with ties to "yield".
#[pyfunction]
fn decide(v_pass: f64, v_yield: f64) -> &'static str {
    cpt::decide(v_pass, v_yield).as_str()
}

/// Backward-difference (speeds, accelerations, jerks) profiles.
#[pyfunction]
fn kinematics(stations: Vec<f64>, dt: f64) -> PyResult<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let profile = kin::kinematics(&trajectory(stations, dt)?);
    Ok((profile.speeds, profile.accelerations, profile.jerks))
}

/// Time to the crossing point; raises for stopped or past-crossing
/// states.
#[pyfunction]
fn time_to_collision(station: f64, speed: f64) -> PyResult<f64> {
    kin::ttc(station, speed).map_err(value_err)
}

/// Linear trajectory utility under weights (speed, accel, jerk, safety).
#[pyfunction]
fn trajectory_utility(
    target: Vec<f64>,
    interacting: Vec<f64>,
    dt: f64,
    theta: [f64; 4],
) -> PyResult<f64> {
    features::utility(
        &trajectory(target, dt)?,
        &trajectory(interacting, dt)?,
        &UtilityWeights(theta),
        &UtilityConfig::default(),
    )
    .map_err(value_err)
}

/// Analytic gradient of the utility in each target station.
#[pyfunction]
fn utility_gradient(
    target: Vec<f64>,
    interacting: Vec<f64>,
    dt: f64,
    theta: [f64; 4],
) -> PyResult<Vec<f64>> {
    features::utility_gradient(
        &trajectory(target, dt)?,
        &trajectory(interacting, dt)?,
        &UtilityWeights(theta),
        &UtilityConfig::default(),
    )
    .map_err(value_err)
}

/// Projects a point onto a polyline; returns (arclength, lateral).
#[pyfunction]
fn project_to_path(vertices: Vec<(f64, f64)>, point: (f64, f64)) -> PyResult<(f64, f64)> {
    let path = geometry::ReferencePath::new(
        vertices
            .into_iter()
            .map(|(x, y)| geometry::Point2::new(x, y))
            .collect(),
    )
    .map_err(value_err)?;
    Ok(geometry::project_to_path(
        &path,
        geometry::Point2::new(point.0, point.1),
    ))
}

/// Crossing point of two polylines as
/// (station_on_a, station_on_b, (x, y)).
#[pyfunction]
fn find_crossing(
    a: Vec<(f64, f64)>,
    b: Vec<(f64, f64)>,
) -> PyResult<(f64, f64, (f64, f64))> {
    let build = |pts: Vec<(f64, f64)>| {
        geometry::ReferencePath::new(
            pts.into_iter()
                .map(|(x, y)| geometry::Point2::new(x, y))
                .collect(),
        )
        .map_err(value_err)
    };
    let crossing = geometry::find_crossing(&build(a)?, &build(b)?).map_err(value_err)?;
    Ok((
        crossing.station_on_a,
        crossing.station_on_b,
        (crossing.location.x, crossing.location.y),
    ))
}

/// Best-utility passing trajectory from (station, speed, acceleration).
#[pyfunction]
#[pyo3(signature = (init, theta, horizon, dt=0.1))]
fn optimal_pass_trajectory(
    init: (f64, f64, f64),
    theta: [f64; 4],
    horizon: usize,
    dt: f64,
) -> PyResult<Vec<f64>> {
    let state = InitialState::new(init.0, init.1, init.2);
    synthesis::optimal_pass_trajectory(
        &state,
        &UtilityWeights(theta),
        &UtilityConfig::default(),
        &MotionLimits::default(),
        horizon,
        dt,
    )
    .map(|t| t.stations().to_vec())
    .map_err(value_err)
}

/// Best-utility yielding trajectory bounded by `stop_station`.
#[pyfunction]
#[pyo3(signature = (init, stop_station, theta, horizon, dt=0.1, clearance_margin=0.5))]
fn optimal_yield_trajectory(
    init: (f64, f64, f64),
    stop_station: f64,
    theta: [f64; 4],
    horizon: usize,
    dt: f64,
    clearance_margin: f64,
) -> PyResult<Vec<f64>> {
    let state = InitialState::new(init.0, init.1, init.2);
    synthesis::optimal_yield_trajectory(
        &state,
        &YieldConstraint::new(stop_station, clearance_margin),
        &UtilityWeights(theta),
        &UtilityConfig::default(),
        &MotionLimits::default(),
        horizon,
        dt,
    )
    .map(|t| t.stations().to_vec())
    .map_err(value_err)
}

/// Pass prefix plus maximal-braking tail against a non-yielding
/// opponent; returns (stations, k0).
#[pyfunction]
#[pyo3(signature = (pass, opponent, dt=0.1, clearance_margin=0.5))]
fn compose_pass_nonyield(
    pass: Vec<f64>,
    opponent: Vec<f64>,
    dt: f64,
    clearance_margin: f64,
) -> PyResult<(Vec<f64>, usize)> {
    let (composed, k0) = synthesis::compose_pass_nonyield(
        &trajectory(pass, dt)?,
        &trajectory(opponent, dt)?,
        &MotionLimits::default(),
        clearance_margin,
        dt,
    );
    Ok((composed.stations().to_vec(), k0))
}

/// TTC-baseline pass probability for a frame of two station lists.
#[pyfunction]
fn ttc_predict(target: Vec<f64>, interacting: Vec<f64>, dt: f64) -> PyResult<f64> {
    Ok(evaluation::ttc_predict(&frame(target, interacting, dt)?))
}

/// Full pipeline prediction; returns
/// (pr_pass, (u_pass_yield, u_pass_nonyield, u_yield), p_yield).
#[pyfunction]
#[pyo3(signature = (target, interacting, dt, theta, alpha, gamma, mode="paper_exact", horizon=20))]
#[allow(clippy::too_many_arguments)]
fn cpt_predict(
    target: Vec<f64>,
    interacting: Vec<f64>,
    dt: f64,
    theta: [f64; 4],
    alpha: f64,
    gamma: f64,
    mode: &str,
    horizon: usize,
) -> PyResult<(f64, (f64, f64, f64), f64)> {
    let config = PredictorConfig {
        theta: UtilityWeights(theta),
        horizon,
        dt,
        ..Default::default()
    };
    let prediction = evaluation::cpt_predict(
        &frame(target, interacting, dt)?,
        &config,
        &driving_params(alpha, gamma)?,
        parse_mode(mode)?,
    )
    .map_err(value_err)?;
    Ok((
        prediction.pr_pass,
        (
            prediction.utilities.u_pass_yield,
            prediction.utilities.u_pass_nonyield,
            prediction.utilities.u_yield,
        ),
        prediction.p_yield,
    ))
}

/// Fits (alpha, gamma) on observations of
/// ((u_pass_yield, u_pass_nonyield, u_yield), p_yield, label).
#[pyfunction]
#[pyo3(signature = (observations, mode="paper_exact", grid_resolution=20))]
fn fit_cpt(
    observations: Vec<((f64, f64, f64), f64, String)>,
    mode: &str,
    grid_resolution: usize,
) -> PyResult<(f64, f64, f64, bool)> {
    let observations: Vec<CptObservation> = observations
        .into_iter()
        .map(|((u_py, u_pny, u_y), p_yield, label)| {
            Ok(CptObservation {
                utilities: cpt::DrivingUtilities {
                    u_pass_yield: u_py,
                    u_pass_nonyield: u_pny,
                    u_yield: u_y,
                },
                p_yield,
                label: label.parse().map_err(value_err)?,
            })
        })
        .collect::<PyResult<_>>()?;
    let fit = estimation::cpt_fit(&observations, parse_mode(mode)?, grid_resolution)
        .map_err(value_err)?;
    Ok((fit.params.0, fit.params.1, fit.loss, fit.converged))
}

/// Fits the utility weights on (interacting, target) station-list
/// demonstrations; returns (theta, loss, converged).
#[pyfunction]
#[pyo3(signature = (demos, dt, seed=0, candidate_count=64))]
fn fit_irl(
    demos: Vec<(Vec<f64>, Vec<f64>)>,
    dt: f64,
    seed: u64,
    candidate_count: usize,
) -> PyResult<([f64; 4], f64, bool)> {
    let demos: Vec<Demonstration> = demos
        .into_iter()
        .map(|(interacting, target)| {
            Ok(Demonstration::new(
                trajectory(interacting, dt)?,
                trajectory(target, dt)?,
            ))
        })
        .collect::<PyResult<_>>()?;
    let cfg = IrlConfig {
        rng_seed: seed,
        candidate_count,
        ..Default::default()
    };
    let fit = estimation::irl_fit(&demos, &cfg, &UtilityConfig::default()).map_err(value_err)?;
    Ok((fit.params.0, fit.loss, fit.converged))
}

/// Draws a labeled synthetic dataset; returns
/// (pairs, observations) where pairs are
/// (pair_id, target, interacting, label) and observations are
/// ((u_py, u_pny, u_y), p_yield, pr_pass, label).
#[pyfunction]
#[pyo3(signature = (n_pairs, seed=7, label_noise="softmax_sample"))]
#[allow(clippy::type_complexity)]
fn generate_dataset(
    n_pairs: usize,
    seed: u64,
    label_noise: &str,
) -> PyResult<(
    Vec<(String, Vec<f64>, Vec<f64>, String)>,
    Vec<((f64, f64, f64), f64, f64, String)>,
)> {
    let label_noise: LabelNoise = label_noise.parse().map_err(value_err)?;
    let cfg = SynthConfig {
        n_pairs,
        rng_seed: seed,
        label_noise,
        ..Default::default()
    };
    let (dataset, records) = generate_synthetic(&cfg);
    let pairs = dataset
        .pairs
        .into_iter()
        .map(|p| {
            let label = p.label.expect("generator labels every pair");
            (
                p.pair_id,
                p.target.stations().to_vec(),
                p.interacting.stations().to_vec(),
                label.as_str().to_string(),
            )
        })
        .collect();
    let observations = records
        .into_iter()
        .map(|r| {
            (
                (
                    r.observation.utilities.u_pass_yield,
                    r.observation.utilities.u_pass_nonyield,
                    r.observation.utilities.u_yield,
                ),
                r.observation.p_yield,
                r.pr_pass,
                r.observation.label.as_str().to_string(),
            )
        })
        .collect();
    Ok((pairs, observations))
}

/// Weighting/value curve table as CSV text.
#[pyfunction]
#[pyo3(signature = (alpha, gamma, samples=101))]
fn curves_csv(alpha: f64, gamma: f64, samples: usize) -> PyResult<String> {
    if samples < 2 {
        return Err(PyValueError::new_err("need at least 2 samples"));
    }
    Ok(export_curves(&driving_params(alpha, gamma)?, samples, 5.0))
}

#[pymodule]
fn prospect_drive_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(weighting_fn, m)?)?;
    m.add_function(wrap_pyfunction!(value_fn, m)?)?;
    m.add_function(wrap_pyfunction!(prospect_value, m)?)?;
    m.add_function(wrap_pyfunction!(driving_values, m)?)?;
    m.add_function(wrap_pyfunction!(yield_probability, m)?)?;
    m.add_function(wrap_pyfunction!(decision_probabilities, m)?)?;
    m.add_function(wrap_pyfunction!(decide, m)?)?;
    m.add_function(wrap_pyfunction!(kinematics, m)?)?;
    m.add_function(wrap_pyfunction!(time_to_collision, m)?)?;
    m.add_function(wrap_pyfunction!(trajectory_utility, m)?)?;
    m.add_function(wrap_pyfunction!(utility_gradient, m)?)?;
    m.add_function(wrap_pyfunction!(project_to_path, m)?)?;
    m.add_function(wrap_pyfunction!(find_crossing, m)?)?;
    m.add_function(wrap_pyfunction!(optimal_pass_trajectory, m)?)?;
    m.add_function(wrap_pyfunction!(optimal_yield_trajectory, m)?)?;
    m.add_function(wrap_pyfunction!(compose_pass_nonyield, m)?)?;
    m.add_function(wrap_pyfunction!(ttc_predict, m)?)?;
    m.add_function(wrap_pyfunction!(cpt_predict, m)?)?;
    m.add_function(wrap_pyfunction!(fit_cpt, m)?)?;
    m.add_function(wrap_pyfunction!(fit_irl, m)?)?;
    m.add_function(wrap_pyfunction!(generate_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(curves_csv, m)?)?;
    Ok(())
}
