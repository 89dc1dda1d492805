//! Plain-text configuration: one `key = value` per line, `#` comments.
//! Unset keys keep their defaults; unknown keys are errors.

use thiserror::Error;

use crate::cpt::WeightingMode;
use crate::dataset::SynthConfig;
use crate::estimation::IrlConfig;
use crate::evaluation::PredictorConfig;
use crate::features::UtilityWeights;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {0}: expected `key = value`, got {1:?}")]
    Malformed(usize, String),
    #[error("line {0}: unknown key {1:?}")]
    UnknownKey(usize, String),
    #[error("line {0}: invalid value for {1}: {2}")]
    InvalidValue(usize, String, String),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Everything the pipeline commands can tune.
#[derive(Debug, Clone, PartialEq)]
pub struct AppConfig {
    pub seed: u64,
    /// Frame window (samples) and stride for slicing.
    pub window: usize,
    pub stride: usize,
    /// Evaluation decision threshold on Pr(pass).
    pub threshold: f64,
    pub mode: WeightingMode,
    pub grid_resolution: usize,
    pub synth: SynthConfig,
    pub irl: IrlConfig,
}

impl Default for AppConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            window: 10,
            stride: 1,
            threshold: 0.5,
            mode: WeightingMode::PaperExact,
            grid_resolution: 20,
            synth: SynthConfig::default(),
            irl: IrlConfig::default(),
        }
    }
}

impl AppConfig {
    /// The predictor bundle shared by gen/predict/fit.
    pub fn predictor(&self) -> PredictorConfig {
        self.synth.predictor.clone()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let p = &self.synth.predictor;
        p.utility.validate().map_err(ConfigError::Invalid)?;
        p.limits.validate().map_err(ConfigError::Invalid)?;
        if p.horizon < 2 {
            return Err(ConfigError::Invalid("horizon must be at least 2".into()));
        }
        if !p.dt.is_finite() || p.dt <= 0.0 {
            return Err(ConfigError::Invalid("dt must be positive".into()));
        }
        if self.window < 2 || self.stride < 1 {
            return Err(ConfigError::Invalid(
                "window must be >= 2 and stride >= 1".into(),
            ));
        }
        if self.synth.pair_length < self.window {
            return Err(ConfigError::Invalid(format!(
                "pair_length {} is shorter than the frame window {}",
                self.synth.pair_length, self.window
            )));
        }
        if !(self.synth.alpha > 0.0 && self.synth.alpha <= 1.0)
            || !(self.synth.gamma > 0.0 && self.synth.gamma <= 1.0)
        {
            return Err(ConfigError::Invalid(
                "alpha_true and gamma_true must lie in (0, 1]".into(),
            ));
        }
        if self.grid_resolution < 2 {
            return Err(ConfigError::Invalid("grid_resolution must be >= 2".into()));
        }
        Ok(())
    }
}

fn parse_pair(value: &str) -> Result<(f64, f64), String> {
    let parts: Vec<&str> = value.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        return Err(format!("expected `lo,hi`, got {value:?}"));
    }
    let lo: f64 = parts[0].parse().map_err(|e| format!("{e}"))?;
    let hi: f64 = parts[1].parse().map_err(|e| format!("{e}"))?;
    Ok((lo, hi))
}

fn parse_theta(value: &str) -> Result<UtilityWeights, String> {
    let parts: Vec<&str> = value.split(',').map(str::trim).collect();
    if parts.len() != 4 {
        return Err(format!("expected 4 comma-separated weights, got {value:?}"));
    }
    let mut theta = [0.0; 4];
    for (slot, part) in theta.iter_mut().zip(&parts) {
        *slot = part.parse().map_err(|e| format!("{e}"))?;
    }
    Ok(UtilityWeights(theta))
}

/// Parses the config text over the defaults.
pub fn parse_config(text: &str) -> Result<AppConfig, ConfigError> {
    let mut cfg = AppConfig::default();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| ConfigError::Malformed(line_no, raw.to_string()))?;
        let key = key.trim();
        let value = value.trim();
        let invalid =
            |e: String| ConfigError::InvalidValue(line_no, key.to_string(), e);
        macro_rules! set {
            ($target:expr) => {
                $target = value.parse().map_err(|e| invalid(format!("{e}")))?
            };
        }
        match key {
            "seed" => {
                set!(cfg.seed);
                cfg.synth.rng_seed = cfg.seed;
                cfg.irl.rng_seed = cfg.seed;
            }
            "window" => set!(cfg.window),
            "stride" => set!(cfg.stride),
            "threshold" => set!(cfg.threshold),
            "mode" => set!(cfg.mode),
            "grid_resolution" => set!(cfg.grid_resolution),
            "n_pairs" => set!(cfg.synth.n_pairs),
            "alpha_true" => set!(cfg.synth.alpha),
            "gamma_true" => set!(cfg.synth.gamma),
            "label_noise" => set!(cfg.synth.label_noise),
            "pair_length" => set!(cfg.synth.pair_length),
            "station_range" => {
                cfg.synth.station_range = parse_pair(value).map_err(invalid)?;
            }
            "speed_range" => {
                cfg.synth.speed_range = parse_pair(value).map_err(invalid)?;
            }
            "accel_range" => {
                cfg.synth.accel_range = parse_pair(value).map_err(invalid)?;
            }
            "theta_true" => {
                cfg.synth.predictor.theta = parse_theta(value).map_err(invalid)?;
            }
            "dt" => set!(cfg.synth.predictor.dt),
            "horizon" => set!(cfg.synth.predictor.horizon),
            "stop_offset" => set!(cfg.synth.predictor.stop_offset),
            "clearance_margin" => set!(cfg.synth.predictor.clearance_margin),
            "v_traffic" => set!(cfg.synth.predictor.utility.v_traffic),
            "scale_speed" => set!(cfg.synth.predictor.utility.scale_speed),
            "scale_accel" => set!(cfg.synth.predictor.utility.scale_accel),
            "scale_jerk" => set!(cfg.synth.predictor.utility.scale_jerk),
            "scale_separation" => set!(cfg.synth.predictor.utility.scale_separation),
            "a_min" => set!(cfg.synth.predictor.limits.a_min),
            "a_max" => set!(cfg.synth.predictor.limits.a_max),
            "v_max" => set!(cfg.synth.predictor.limits.v_max),
            "candidate_count" => set!(cfg.irl.candidate_count),
            "perturbation_scale" => set!(cfg.irl.perturbation_scale),
            "learning_rate" => set!(cfg.irl.learning_rate),
            "max_iterations" => set!(cfg.irl.max_iterations),
            "gradient_tolerance" => set!(cfg.irl.gradient_tolerance),
            other => return Err(ConfigError::UnknownKey(line_no, other.to_string())),
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Loads a config file; a missing `--config` falls back to defaults via
/// `AppConfig::default()` at the call site.
pub fn load_config(path: &std::path::Path) -> Result<AppConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::Invalid(format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

/// Applies the `PROSPECT_DRIVE_SEED` override when the variable is set.
pub fn apply_seed_override(cfg: &mut AppConfig) -> Result<(), ConfigError> {
    if let Ok(raw) = std::env::var("PROSPECT_DRIVE_SEED") {
        let seed: u64 = raw
            .parse()
            .map_err(|e| ConfigError::Invalid(format!("PROSPECT_DRIVE_SEED: {e}")))?;
        cfg.seed = seed;
        cfg.synth.rng_seed = seed;
        cfg.irl.rng_seed = seed;
    }
    Ok(())
}
