//! CSV ingestion and serialization, the synthetic interaction generator,
//! and curve export for plotting.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a
//! save/load cycle reproduces every value bit-exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::cpt::{decide, weighting_fn, value_fn, CptParams, Decision, WeightingMode};
use crate::estimation::CptObservation;
use crate::evaluation::{cpt_predict, PredictionRecord, PredictorConfig};
use crate::geometry::{find_crossing, to_shared_frenet, Point2, ReferencePath};
use crate::kinematics::{Frame, InteractionPair, Trajectory};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },
    #[error("missing column {0:?}")]
    Schema(String),
    #[error("pair {pair_id}: {reason}")]
    InconsistentPair { pair_id: String, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{0}")]
    Geometry(#[from] crate::geometry::GeometryError),
}

fn io_err(path: &Path, source: std::io::Error) -> DatasetError {
    DatasetError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetMeta {
    pub dt: f64,
    pub source: String,
    pub pair_count: usize,
    pub samples_per_pair: Vec<usize>,
}

/// A set of interaction pairs on one uniform time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryDataset {
    pub pairs: Vec<InteractionPair>,
    pub meta: DatasetMeta,
}

impl TrajectoryDataset {
    pub fn new(pairs: Vec<InteractionPair>, source: impl Into<String>) -> Self {
        assert!(!pairs.is_empty(), "dataset needs at least one pair");
        let dt = pairs[0].target.dt();
        let samples_per_pair = pairs.iter().map(|p| p.len()).collect();
        Self {
            meta: DatasetMeta {
                dt,
                source: source.into(),
                pair_count: pairs.len(),
                samples_per_pair,
            },
            pairs,
        }
    }
}

const TRAJECTORY_HEADER: [&str; 5] = ["pair_id", "role", "t_s", "station_m", "lateral_m"];
const LABELS_HEADER: [&str; 2] = ["pair_id", "decision"];
const PATHS_HEADER: [&str; 4] = ["path_id", "seq", "x_m", "y_m"];
const CARTESIAN_HEADER: [&str; 5] = ["pair_id", "role", "t_s", "x_m", "y_m"];
const PREDICTIONS_HEADER: [&str; 6] =
    ["pair_id", "frame_idx", "model", "pr_pass", "predicted", "label"];

/// Column indices of `required` within the file header.
fn header_indices(
    reader: &mut csv::Reader<&[u8]>,
    required: &[&str],
) -> Result<Vec<usize>, DatasetError> {
    let headers = reader
        .headers()
        .map_err(|e| DatasetError::Schema(e.to_string()))?
        .clone();
    required
        .iter()
        .map(|name| {
            headers
                .iter()
                .position(|h| h == *name)
                .ok_or_else(|| DatasetError::Schema((*name).to_string()))
        })
        .collect()
}

fn parse_field<T: std::str::FromStr>(
    record: &csv::StringRecord,
    idx: usize,
    row: usize,
    column: &str,
) -> Result<T, DatasetError>
where
    T::Err: std::fmt::Display,
{
    let raw = record.get(idx).ok_or_else(|| DatasetError::Parse {
        row,
        column: column.to_string(),
        message: "missing field".into(),
    })?;
    raw.parse().map_err(|e: T::Err| DatasetError::Parse {
        row,
        column: column.to_string(),
        message: format!("{e} ({raw:?})"),
    })
}

fn read_to_string(path: &Path) -> Result<String, DatasetError> {
    std::fs::read_to_string(path).map_err(|e| io_err(path, e))
}

struct RoleSamples {
    times: Vec<f64>,
    stations: Vec<f64>,
}

/// Loads a Frenet trajectory CSV (and optional labels CSV) into a
/// dataset. Pairs keep their order of first appearance; every pair must
/// have both roles on the same uniform time grid.
pub fn load_dataset(
    trajectory_csv: &Path,
    labels_csv: Option<&Path>,
) -> Result<TrajectoryDataset, DatasetError> {
    let text = read_to_string(trajectory_csv)?;
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let idx = header_indices(&mut reader, &TRAJECTORY_HEADER)?;

    let mut order: Vec<String> = Vec::new();
    let mut by_pair: BTreeMap<String, BTreeMap<String, RoleSamples>> = BTreeMap::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| DatasetError::Parse {
            row,
            column: String::new(),
            message: e.to_string(),
        })?;
        let pair_id: String = parse_field(&record, idx[0], row, "pair_id")?;
        let role: String = parse_field(&record, idx[1], row, "role")?;
        if role != "target" && role != "interacting" {
            return Err(DatasetError::Parse {
                row,
                column: "role".into(),
                message: format!("expected target or interacting, got {role:?}"),
            });
        }
        let t: f64 = parse_field(&record, idx[2], row, "t_s")?;
        let station: f64 = parse_field(&record, idx[3], row, "station_m")?;
        let _lateral: f64 = parse_field(&record, idx[4], row, "lateral_m")?;
        if !by_pair.contains_key(&pair_id) {
            order.push(pair_id.clone());
        }
        let entry = by_pair
            .entry(pair_id)
            .or_default()
            .entry(role)
            .or_insert_with(|| RoleSamples {
                times: Vec::new(),
                stations: Vec::new(),
            });
        entry.times.push(t);
        entry.stations.push(station);
    }

    let labels = match labels_csv {
        Some(path) => load_labels(path)?,
        None => BTreeMap::new(),
    };
    for pair_id in labels.keys() {
        if !by_pair.contains_key(pair_id) {
            return Err(DatasetError::InconsistentPair {
                pair_id: pair_id.clone(),
                reason: "label references a pair absent from the trajectory file".into(),
            });
        }
    }

    let mut pairs = Vec::with_capacity(order.len());
    let mut dataset_dt: Option<f64> = None;
    for pair_id in order {
        let mut roles = by_pair.remove(&pair_id).unwrap();
        let target = extract_role(&mut roles, "target", &pair_id)?;
        let interacting = extract_role(&mut roles, "interacting", &pair_id)?;
        if target.times.len() != interacting.times.len() {
            return Err(DatasetError::InconsistentPair {
                pair_id,
                reason: format!(
                    "sample counts differ: target {}, interacting {}",
                    target.times.len(),
                    interacting.times.len()
                ),
            });
        }
        let dt = uniform_dt(&target.times, &pair_id)?;
        uniform_dt(&interacting.times, &pair_id)?;
        if let Some(expected) = dataset_dt {
            if (dt - expected).abs() > 1e-9 {
                return Err(DatasetError::InconsistentPair {
                    pair_id,
                    reason: format!("dt {dt} differs from dataset dt {expected}"),
                });
            }
        } else {
            dataset_dt = Some(dt);
        }
        let label = labels.get(&pair_id).copied();
        pairs.push(InteractionPair::new(
            pair_id,
            Trajectory::new(dt, target.stations),
            Trajectory::new(dt, interacting.stations),
            label,
        ));
    }
    if pairs.is_empty() {
        return Err(DatasetError::Schema("no data rows".into()));
    }
    Ok(TrajectoryDataset::new(
        pairs,
        trajectory_csv.display().to_string(),
    ))
}

fn extract_role(
    roles: &mut BTreeMap<String, RoleSamples>,
    role: &str,
    pair_id: &str,
) -> Result<RoleSamples, DatasetError> {
    let mut samples = roles
        .remove(role)
        .ok_or_else(|| DatasetError::InconsistentPair {
            pair_id: pair_id.to_string(),
            reason: format!("missing {role} rows"),
        })?;
    if samples.times.len() < 2 {
        return Err(DatasetError::InconsistentPair {
            pair_id: pair_id.to_string(),
            reason: format!("{role} has fewer than 2 samples"),
        });
    }
    // Stable sort by time keeps ties in file order.
    let mut order: Vec<usize> = (0..samples.times.len()).collect();
    order.sort_by(|&a, &b| samples.times[a].partial_cmp(&samples.times[b]).unwrap());
    samples.times = order.iter().map(|&i| samples.times[i]).collect();
    samples.stations = order.iter().map(|&i| samples.stations[i]).collect();
    Ok(samples)
}

fn uniform_dt(times: &[f64], pair_id: &str) -> Result<f64, DatasetError> {
    let dt = times[1] - times[0];
    if dt <= 0.0 {
        return Err(DatasetError::InconsistentPair {
            pair_id: pair_id.to_string(),
            reason: format!("non-increasing timestamps (dt = {dt})"),
        });
    }
    for w in times.windows(2) {
        if ((w[1] - w[0]) - dt).abs() > 1e-9 {
            return Err(DatasetError::InconsistentPair {
                pair_id: pair_id.to_string(),
                reason: "non-uniform sampling interval".into(),
            });
        }
    }
    Ok(dt)
}

fn load_labels(path: &Path) -> Result<BTreeMap<String, Decision>, DatasetError> {
    let text = read_to_string(path)?;
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let idx = header_indices(&mut reader, &LABELS_HEADER)?;
    let mut labels = BTreeMap::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| DatasetError::Parse {
            row,
            column: String::new(),
            message: e.to_string(),
        })?;
        let pair_id: String = parse_field(&record, idx[0], row, "pair_id")?;
        let decision: Decision = parse_field(&record, idx[1], row, "decision")?;
        labels.insert(pair_id, decision);
    }
    Ok(labels)
}

/// Serializes the dataset as the trajectory CSV and, when labels exist,
/// the labels CSV. Lateral offsets are written as 0 (the model is
/// longitudinal).
pub fn save_dataset(
    dataset: &TrajectoryDataset,
    trajectory_csv: &Path,
    labels_csv: &Path,
) -> Result<(), DatasetError> {
    let mut out = String::new();
    writeln!(out, "{}", TRAJECTORY_HEADER.join(",")).unwrap();
    for pair in &dataset.pairs {
        let dt = pair.target.dt();
        for (role, traj) in [("target", &pair.target), ("interacting", &pair.interacting)] {
            for (k, s) in traj.stations().iter().enumerate() {
                writeln!(out, "{},{},{},{},0", pair.pair_id, role, k as f64 * dt, s).unwrap();
            }
        }
    }
    std::fs::write(trajectory_csv, out).map_err(|e| io_err(trajectory_csv, e))?;

    let mut labels = String::new();
    writeln!(labels, "{}", LABELS_HEADER.join(",")).unwrap();
    let mut any = false;
    for pair in &dataset.pairs {
        if let Some(label) = pair.label {
            writeln!(labels, "{},{}", pair.pair_id, label.as_str()).unwrap();
            any = true;
        }
    }
    if any {
        std::fs::write(labels_csv, labels).map_err(|e| io_err(labels_csv, e))?;
    }
    Ok(())
}

/// Writes prediction records to CSV.
pub fn save_predictions(records: &[PredictionRecord], path: &Path) -> Result<(), DatasetError> {
    let mut out = String::new();
    writeln!(out, "{}", PREDICTIONS_HEADER.join(",")).unwrap();
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.pair_id,
            r.frame_index,
            r.model,
            r.pr_pass,
            r.predicted.as_str(),
            r.label.map_or("", |l| l.as_str())
        )
        .unwrap();
    }
    std::fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Reads prediction records back from CSV.
pub fn load_predictions(path: &Path) -> Result<Vec<PredictionRecord>, DatasetError> {
    let text = read_to_string(path)?;
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let idx = header_indices(&mut reader, &PREDICTIONS_HEADER)?;
    let mut records = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| DatasetError::Parse {
            row,
            column: String::new(),
            message: e.to_string(),
        })?;
        let label_raw = record.get(idx[5]).unwrap_or("");
        let label = if label_raw.is_empty() {
            None
        } else {
            Some(
                label_raw
                    .parse::<Decision>()
                    .map_err(|e| DatasetError::Parse {
                        row,
                        column: "label".into(),
                        message: e,
                    })?,
            )
        };
        records.push(PredictionRecord {
            pair_id: parse_field(&record, idx[0], row, "pair_id")?,
            frame_index: parse_field(&record, idx[1], row, "frame_idx")?,
            model: parse_field(&record, idx[2], row, "model")?,
            pr_pass: parse_field(&record, idx[3], row, "pr_pass")?,
            predicted: record
                .get(idx[4])
                .unwrap_or("")
                .parse::<Decision>()
                .map_err(|e| DatasetError::Parse {
                    row,
                    column: "predicted".into(),
                    message: e,
                })?,
            label,
        });
    }
    Ok(records)
}

/// Loads polyline reference paths keyed by id; `seq` must strictly
/// increase within each path.
pub fn load_reference_paths(
    path: &Path,
) -> Result<BTreeMap<String, ReferencePath>, DatasetError> {
    let text = read_to_string(path)?;
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let idx = header_indices(&mut reader, &PATHS_HEADER)?;
    let mut vertices: BTreeMap<String, Vec<(i64, Point2)>> = BTreeMap::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| DatasetError::Parse {
            row,
            column: String::new(),
            message: e.to_string(),
        })?;
        let path_id: String = parse_field(&record, idx[0], row, "path_id")?;
        let seq: i64 = parse_field(&record, idx[1], row, "seq")?;
        let x: f64 = parse_field(&record, idx[2], row, "x_m")?;
        let y: f64 = parse_field(&record, idx[3], row, "y_m")?;
        let entry = vertices.entry(path_id.clone()).or_default();
        if let Some(&(last_seq, _)) = entry.last() {
            if seq <= last_seq {
                return Err(DatasetError::Parse {
                    row,
                    column: "seq".into(),
                    message: format!("seq {seq} not strictly increasing for path {path_id:?}"),
                });
            }
        }
        entry.push((seq, Point2::new(x, y)));
    }
    vertices
        .into_iter()
        .map(|(id, pts)| {
            let points = pts.into_iter().map(|(_, p)| p).collect();
            ReferencePath::new(points)
                .map(|p| (id, p))
                .map_err(DatasetError::from)
        })
        .collect()
}

/// Converts a Cartesian trajectory CSV into the Frenet schema using the
/// `target` and `interacting` reference paths, whose crossing point
/// becomes the shared station zero. Returns the output file content.
pub fn frenetize_csv(paths_csv: &Path, cartesian_csv: &Path) -> Result<String, DatasetError> {
    let paths = load_reference_paths(paths_csv)?;
    let get = |role: &str| {
        paths
            .get(role)
            .ok_or_else(|| DatasetError::Schema(format!("reference path {role:?}")))
    };
    let target_path = get("target")?;
    let interacting_path = get("interacting")?;
    let crossing = find_crossing(target_path, interacting_path)?;

    let text = read_to_string(cartesian_csv)?;
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let idx = header_indices(&mut reader, &CARTESIAN_HEADER)?;
    let mut rows: Vec<(String, String, f64, Point2)> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| DatasetError::Parse {
            row,
            column: String::new(),
            message: e.to_string(),
        })?;
        let role: String = parse_field(&record, idx[1], row, "role")?;
        if role != "target" && role != "interacting" {
            return Err(DatasetError::Parse {
                row,
                column: "role".into(),
                message: format!("expected target or interacting, got {role:?}"),
            });
        }
        rows.push((
            parse_field(&record, idx[0], row, "pair_id")?,
            role,
            parse_field(&record, idx[2], row, "t_s")?,
            Point2::new(
                parse_field(&record, idx[3], row, "x_m")?,
                parse_field(&record, idx[4], row, "y_m")?,
            ),
        ));
    }

    let mut out = String::new();
    writeln!(out, "{}", TRAJECTORY_HEADER.join(",")).unwrap();
    for (pair_id, role, t, point) in rows {
        let (path, station0) = if role == "target" {
            (target_path, crossing.station_on_a)
        } else {
            (interacting_path, crossing.station_on_b)
        };
        let poses = to_shared_frenet(path, station0, &[(t, point)]);
        let pose = poses[0].1;
        writeln!(
            out,
            "{},{},{},{},{}",
            pair_id, role, t, pose.station, pose.lateral
        )
        .unwrap();
    }
    Ok(out)
}

/// How synthetic labels are drawn from the forward model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelNoise {
    /// Bernoulli sample from the model's pass probability.
    SoftmaxSample,
    /// Deterministic argmax of the action values.
    Argmax,
}

impl std::str::FromStr for LabelNoise {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "softmax_sample" => Ok(LabelNoise::SoftmaxSample),
            "argmax" => Ok(LabelNoise::Argmax),
            other => Err(format!("unknown label_noise {other:?}")),
        }
    }
}

/// Ground-truth generator settings. The embedded predictor carries the
/// true utility weights, the synthesis horizon, and dt.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_pairs: usize,
    pub rng_seed: u64,
    /// True value/weighting exponents of the labeling model.
    pub alpha: f64,
    pub gamma: f64,
    pub mode: WeightingMode,
    pub label_noise: LabelNoise,
    /// Initial-station range for both vehicles (m, before the crossing).
    pub station_range: (f64, f64),
    /// Initial-speed range (m/s).
    pub speed_range: (f64, f64),
    /// Constant rollout acceleration range (m/s^2).
    pub accel_range: (f64, f64),
    /// Samples per generated pair.
    pub pair_length: usize,
    pub predictor: PredictorConfig,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_pairs: 200,
            rng_seed: 7,
            alpha: 0.9827,
            gamma: 0.6742,
            mode: WeightingMode::PaperExact,
            label_noise: LabelNoise::SoftmaxSample,
            station_range: (-55.0, -12.0),
            speed_range: (2.0, 11.0),
            accel_range: (-1.2, 1.2),
            pair_length: 12,
            predictor: PredictorConfig::default(),
        }
    }
}

/// Generator intermediates for one pair: the observation the labeling
/// model saw and its true pass probability.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticRecord {
    pub pair_id: String,
    pub observation: CptObservation,
    pub pr_pass: f64,
}

fn constant_accel_rollout(
    rng: &mut ChaCha8Rng,
    cfg: &SynthConfig,
) -> Vec<f64> {
    let s0 = rng.random_range(cfg.station_range.0..cfg.station_range.1);
    let v0 = rng.random_range(cfg.speed_range.0..cfg.speed_range.1);
    let a = rng.random_range(cfg.accel_range.0..cfg.accel_range.1);
    let dt = cfg.predictor.dt;
    let mut stations = vec![s0];
    let mut v = v0;
    for k in 1..cfg.pair_length {
        v = (v + a * dt).clamp(0.0, cfg.predictor.limits.v_max);
        stations.push(stations[k - 1] + v * dt);
    }
    stations
}

/// Draws labeled interaction pairs from the forward model: constant-
/// acceleration rollouts for both vehicles, labels from the valuation
/// pipeline under the true parameters. Deterministic per seed.
pub fn generate_synthetic(cfg: &SynthConfig) -> (TrajectoryDataset, Vec<SyntheticRecord>) {
    assert!(cfg.n_pairs >= 1);
    assert!(cfg.station_range.0 < cfg.station_range.1);
    assert!(cfg.speed_range.0 < cfg.speed_range.1);
    let params = CptParams::driving(cfg.alpha, cfg.gamma).expect("valid true parameters");
    let mut rng: ChaCha8Rng = rand::SeedableRng::seed_from_u64(cfg.rng_seed);
    let dt = cfg.predictor.dt;
    let mut pairs = Vec::with_capacity(cfg.n_pairs);
    let mut records = Vec::with_capacity(cfg.n_pairs);
    for i in 0..cfg.n_pairs {
        let pair_id = format!("synth_{i:05}");
        let target = Trajectory::new(dt, constant_accel_rollout(&mut rng, cfg));
        let interacting = Trajectory::new(dt, constant_accel_rollout(&mut rng, cfg));
        let frame = Frame {
            pair_id: pair_id.clone(),
            start: 0,
            target: target.clone(),
            interacting: interacting.clone(),
            label: None,
        };
        let prediction = cpt_predict(&frame, &cfg.predictor, &params, cfg.mode)
            .expect("generator states stay within the synthesizable domain");
        let label = match cfg.label_noise {
            LabelNoise::Argmax => decide(prediction.v_pass, prediction.v_yield),
            LabelNoise::SoftmaxSample => {
                if rng.random_range(0.0..1.0) < prediction.pr_pass {
                    Decision::Pass
                } else {
                    Decision::Yield
                }
            }
        };
        records.push(SyntheticRecord {
            pair_id: pair_id.clone(),
            observation: CptObservation {
                utilities: prediction.utilities,
                p_yield: prediction.p_yield,
                label,
            },
            pr_pass: prediction.pr_pass,
        });
        pairs.push(InteractionPair::new(
            pair_id,
            target,
            interacting,
            Some(label),
        ));
    }
    (TrajectoryDataset::new(pairs, "synthetic"), records)
}

/// Weighting and value curves as CSV: `p, w_plus(p), w_minus(p)` on
/// [0, 1] and `u, v(u)` on a symmetric range, endpoints included.
pub fn export_curves(params: &CptParams, samples: usize, utility_range: f64) -> String {
    assert!(samples >= 2, "need at least the two endpoints");
    let mut out = String::from("p,w_plus,w_minus,u,v\n");
    for i in 0..samples {
        let f = i as f64 / (samples - 1) as f64;
        let p = f;
        let u = -utility_range + 2.0 * utility_range * f;
        writeln!(
            out,
            "{},{},{},{},{}",
            p,
            weighting_fn(p, params.gamma),
            weighting_fn(p, params.delta),
            u,
            value_fn(u, params)
        )
        .unwrap();
    }
    out
}
