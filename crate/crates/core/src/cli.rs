//! Command implementations behind the `prospect-drive` binary.
//!
//! Exit codes: 0 on success, 2 on input/schema/config errors, 3 when a
//! fit did not converge (outputs are still written) or a synthesis step
//! failed to converge.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::config::{apply_seed_override, load_config, AppConfig, ConfigError};
use crate::cpt::{CptParams, WeightingMode};
use crate::dataset::{
    export_curves, frenetize_csv, generate_synthetic, load_dataset, load_predictions,
    save_dataset, save_predictions, DatasetError, TrajectoryDataset,
};
use crate::estimation::{cpt_fit, irl_fit, CptObservation, Demonstration, EstimationError};
use crate::evaluation::{
    frame_observation, predict_frames, render_comparison_table, report_from_records,
    EvaluationError, Granularity, Predictor,
};
use crate::features::UtilityWeights;
use crate::kinematics::{slice_frames, Frame};
use crate::synthesis::SynthesisError;

#[derive(Parser)]
#[command(
    name = "prospect-drive",
    about = "Pass/yield decision modeling for two-vehicle interactions",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled synthetic dataset from the forward model.
    Gen {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "out-dir")]
        out_dir: PathBuf,
    },
    /// Convert Cartesian trajectories to the shared Frenet frame.
    Frenetize {
        #[arg(long)]
        paths: PathBuf,
        #[arg(long)]
        cartesian: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the utility weights on demonstration pairs.
    TrainIrl {
        #[arg(long)]
        data: PathBuf,
        /// File listing demonstration pair ids, one per line.
        #[arg(long)]
        demos: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the value/weighting exponents on labeled decisions.
    FitCpt {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        theta: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        mode: Option<WeightingModeArg>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict pass probabilities for every frame of a dataset.
    Predict {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        theta: Option<PathBuf>,
        #[arg(long)]
        cpt: Option<PathBuf>,
        #[arg(long)]
        model: ModelArg,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score predictions against labels.
    Evaluate {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, default_value = "frame")]
        granularity: GranularityArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export weighting- and value-function curves.
    Curves {
        #[arg(long)]
        cpt: PathBuf,
        #[arg(long, default_value_t = 101)]
        samples: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum ModelArg {
    Cpt,
    Ttc,
    Eut,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum WeightingModeArg {
    #[value(name = "paper_exact")]
    PaperExact,
    #[value(name = "rank_ordered")]
    RankOrdered,
}

impl From<WeightingModeArg> for WeightingMode {
    fn from(arg: WeightingModeArg) -> Self {
        match arg {
            WeightingModeArg::PaperExact => WeightingMode::PaperExact,
            WeightingModeArg::RankOrdered => WeightingMode::RankOrdered,
        }
    }
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum GranularityArg {
    Frame,
    Pair,
}

impl From<GranularityArg> for Granularity {
    fn from(arg: GranularityArg) -> Self {
        match arg {
            GranularityArg::Frame => Granularity::Frame,
            GranularityArg::Pair => Granularity::Pair,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Estimation(#[from] EstimationError),
    #[error(transparent)]
    Evaluation(#[from] EvaluationError),
    #[error(transparent)]
    Synthesis(#[from] SynthesisError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{0}")]
    Input(String),
    /// A fit finished without meeting its stopping rule; outputs were
    /// written.
    #[error("fit did not converge (results written)")]
    NotConverged,
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::NotConverged => 3,
            CliError::Evaluation(EvaluationError::Synthesis(_)) | CliError::Synthesis(_) => 3,
            _ => 2,
        }
    }
}

fn io_err(path: &Path, source: std::io::Error) -> CliError {
    CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// On-disk fit result shared by both learning stages.
#[derive(Debug, Serialize, Deserialize)]
struct FitJson {
    theta: Option<[f64; 4]>,
    alpha: Option<f64>,
    gamma: Option<f64>,
    loss: f64,
    converged: bool,
    trace: Vec<f64>,
}

fn write_json(path: &Path, value: &FitJson) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    std::fs::write(path, text + "\n").map_err(|e| io_err(path, e))
}

fn read_fit_json(path: &Path) -> Result<FitJson, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn load_config_with_env(path: &Path) -> Result<AppConfig, CliError> {
    let mut cfg = load_config(path)?;
    apply_seed_override(&mut cfg)?;
    Ok(cfg)
}

fn dataset_frames(dataset: &TrajectoryDataset, cfg: &AppConfig) -> Result<Vec<Frame>, CliError> {
    let mut frames = Vec::new();
    for pair in &dataset.pairs {
        let sliced = slice_frames(pair, cfg.window, cfg.stride)
            .map_err(|e| CliError::Input(format!("pair {}: {e}", pair.pair_id)))?;
        frames.extend(sliced);
    }
    Ok(frames)
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Gen { config, out_dir } => {
            let cfg = load_config_with_env(&config)?;
            std::fs::create_dir_all(&out_dir).map_err(|e| io_err(&out_dir, e))?;
            let (dataset, _records) = generate_synthetic(&cfg.synth);
            let traj = out_dir.join("trajectories.csv");
            let labels = out_dir.join("labels.csv");
            save_dataset(&dataset, &traj, &labels)?;
            println!(
                "wrote {} pairs to {} and {}",
                dataset.pairs.len(),
                traj.display(),
                labels.display()
            );
            Ok(())
        }
        Command::Frenetize {
            paths,
            cartesian,
            out,
        } => {
            let csv = frenetize_csv(&paths, &cartesian)?;
            std::fs::write(&out, csv).map_err(|e| io_err(&out, e))?;
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::TrainIrl {
            data,
            demos,
            config,
            out,
        } => {
            let cfg = load_config_with_env(&config)?;
            let dataset = load_dataset(&data, None)?;
            let ids = std::fs::read_to_string(&demos).map_err(|e| io_err(&demos, e))?;
            let mut selected = Vec::new();
            for line in ids.lines().map(str::trim).filter(|l| !l.is_empty()) {
                let pair = dataset
                    .pairs
                    .iter()
                    .find(|p| p.pair_id == line)
                    .ok_or_else(|| {
                        CliError::Input(format!("demo pair {line:?} not in the dataset"))
                    })?;
                selected.push(Demonstration::new(
                    pair.interacting.clone(),
                    pair.target.clone(),
                ));
            }
            let fit = irl_fit(&selected, &cfg.irl, &cfg.synth.predictor.utility)?;
            write_json(
                &out,
                &FitJson {
                    theta: Some(fit.params.0),
                    alpha: None,
                    gamma: None,
                    loss: fit.loss,
                    converged: fit.converged,
                    trace: fit.trace,
                },
            )?;
            println!(
                "theta = {:?}, loss = {:.6}, converged = {}",
                fit.params.0, fit.loss, fit.converged
            );
            if fit.converged {
                Ok(())
            } else {
                Err(CliError::NotConverged)
            }
        }
        Command::FitCpt {
            data,
            labels,
            theta,
            config,
            mode,
            out,
        } => {
            let mut cfg = load_config_with_env(&config)?;
            if let Some(mode) = mode {
                cfg.mode = mode.into();
            }
            let theta_json = read_fit_json(&theta)?;
            let weights = theta_json
                .theta
                .ok_or_else(|| CliError::Input("theta file carries no weights".into()))?;
            cfg.synth.predictor.theta = UtilityWeights(weights);
            let dataset = load_dataset(&data, Some(&labels))?;
            let predictor_cfg = cfg.predictor();
            let mut observations = Vec::new();
            for frame in dataset_frames(&dataset, &cfg)? {
                let Some(label) = frame.label else { continue };
                let (utilities, p_yield, _shift) = frame_observation(&frame, &predictor_cfg)?;
                observations.push(CptObservation {
                    utilities,
                    p_yield,
                    label,
                });
            }
            if observations.is_empty() {
                return Err(CliError::Input("no labeled frames to fit".into()));
            }
            let fit = cpt_fit(&observations, cfg.mode, cfg.grid_resolution)?;
            write_json(
                &out,
                &FitJson {
                    theta: None,
                    alpha: Some(fit.params.0),
                    gamma: Some(fit.params.1),
                    loss: fit.loss,
                    converged: fit.converged,
                    trace: fit.trace,
                },
            )?;
            println!(
                "alpha = {:.4}, gamma = {:.4}, loss = {:.6}, converged = {}",
                fit.params.0, fit.params.1, fit.loss, fit.converged
            );
            if fit.converged {
                Ok(())
            } else {
                Err(CliError::NotConverged)
            }
        }
        Command::Predict {
            data,
            theta,
            cpt,
            model,
            config,
            out,
        } => {
            let mut cfg = match config {
                Some(path) => load_config_with_env(&path)?,
                None => AppConfig::default(),
            };
            let dataset = load_dataset(&data, None)?;
            let predictor = match model {
                ModelArg::Ttc => Predictor::Ttc,
                ModelArg::Cpt | ModelArg::Eut => {
                    let theta_path = theta.ok_or_else(|| {
                        CliError::Input("--theta is required for the cpt/eut models".into())
                    })?;
                    let theta_json = read_fit_json(&theta_path)?;
                    let weights = theta_json
                        .theta
                        .ok_or_else(|| CliError::Input("theta file carries no weights".into()))?;
                    cfg.synth.predictor.theta = UtilityWeights(weights);
                    if matches!(model, ModelArg::Eut) {
                        Predictor::Eut {
                            config: cfg.predictor(),
                        }
                    } else {
                        let cpt_path = cpt.ok_or_else(|| {
                            CliError::Input("--cpt is required for the cpt model".into())
                        })?;
                        let fit = read_fit_json(&cpt_path)?;
                        let (alpha, gamma) = match (fit.alpha, fit.gamma) {
                            (Some(a), Some(g)) => (a, g),
                            _ => {
                                return Err(CliError::Input(
                                    "cpt file carries no alpha/gamma".into(),
                                ))
                            }
                        };
                        let params = CptParams::driving(alpha, gamma)
                            .map_err(|e| CliError::Input(e.to_string()))?;
                        Predictor::Cpt {
                            config: cfg.predictor(),
                            params,
                            mode: cfg.mode,
                        }
                    }
                }
            };
            let frames = dataset_frames(&dataset, &cfg)?;
            let records = predict_frames(&predictor, &frames, cfg.threshold)?;
            save_predictions(&records, &out)?;
            println!("wrote {} predictions to {}", records.len(), out.display());
            Ok(())
        }
        Command::Evaluate {
            predictions,
            labels,
            granularity,
            out,
        } => {
            let mut records = load_predictions(&predictions)?;
            let label_map = load_dataset_labels(&labels)?;
            for record in &mut records {
                if record.label.is_none() {
                    record.label = label_map.get(&record.pair_id).copied();
                }
            }
            // Predicted decisions were thresholded at predict time; the
            // report echoes the default.
            let report = report_from_records(&records, 0.5, granularity.into())?;
            let text = serde_json::to_string_pretty(&report).expect("serializable");
            std::fs::write(&out, text + "\n").map_err(|e| io_err(&out, e))?;
            print!("{}", render_comparison_table(std::slice::from_ref(&report)));
            println!(
                "{} samples at {:?} granularity -> {}",
                report.sample_count,
                report.granularity,
                out.display()
            );
            Ok(())
        }
        Command::Curves { cpt, samples, out } => {
            let fit = read_fit_json(&cpt)?;
            let (alpha, gamma) = match (fit.alpha, fit.gamma) {
                (Some(a), Some(g)) => (a, g),
                _ => return Err(CliError::Input("cpt file carries no alpha/gamma".into())),
            };
            let params =
                CptParams::driving(alpha, gamma).map_err(|e| CliError::Input(e.to_string()))?;
            let csv = export_curves(&params, samples, 5.0);
            std::fs::write(&out, csv).map_err(|e| io_err(&out, e))?;
            println!("wrote {}", out.display());
            Ok(())
        }
    }
}

fn load_dataset_labels(
    path: &Path,
) -> Result<std::collections::BTreeMap<String, crate::cpt::Decision>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| CliError::Input(e.to_string()))?
        .clone();
    let id_idx = headers
        .iter()
        .position(|h| h == "pair_id")
        .ok_or_else(|| CliError::Input("labels file misses pair_id".into()))?;
    let decision_idx = headers
        .iter()
        .position(|h| h == "decision")
        .ok_or_else(|| CliError::Input("labels file misses decision".into()))?;
    let mut map = std::collections::BTreeMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| CliError::Input(e.to_string()))?;
        let id = record.get(id_idx).unwrap_or("").to_string();
        let decision = record
            .get(decision_idx)
            .unwrap_or("")
            .parse()
            .map_err(CliError::Input)?;
        map.insert(id, decision);
    }
    Ok(map)
}
