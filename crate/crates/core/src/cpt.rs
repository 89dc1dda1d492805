//! Prospect valuation: value function, probability weighting,
//! rank-dependent decision weights, the expected-utility special case,
//! and the two-action driving specialization.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CptError {
    #[error("prospect outcomes must be sorted ascending by utility")]
    UnsortedProspect,
    /// The driving valuation assumes a gains-only regime (u0 = 0,
    /// utilities non-negative).
    #[error("negative utility {0} in gains-only driving valuation")]
    NegativeUtility(f64),
    #[error("invalid prospect: {0}")]
    InvalidProspect(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

/// The target vehicle's discrete decision: merge ahead of the interacting
/// vehicle, or wait for it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Pass,
    Yield,
}

impl Decision {
    pub fn as_str(&self) -> &'static str {
        match self {
            Decision::Pass => "pass",
            Decision::Yield => "yield",
        }
    }
}

impl std::str::FromStr for Decision {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pass" => Ok(Decision::Pass),
            "yield" => Ok(Decision::Yield),
            other => Err(format!("unknown decision {other:?}")),
        }
    }
}

/// An action's possible outcomes as (utility, probability) pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct Prospect {
    outcomes: Vec<(f64, f64)>,
}

impl Prospect {
    /// Probabilities must be in [0, 1] and sum to 1 within 1e-9.
    pub fn new(outcomes: Vec<(f64, f64)>) -> Result<Self, CptError> {
        if outcomes.is_empty() {
            return Err(CptError::InvalidProspect("no outcomes".into()));
        }
        let mut sum = 0.0;
        for &(u, p) in &outcomes {
            if !u.is_finite() || !p.is_finite() {
                return Err(CptError::InvalidProspect("non-finite outcome".into()));
            }
            if !(0.0..=1.0).contains(&p) {
                return Err(CptError::InvalidProspect(format!(
                    "probability {p} outside [0, 1]"
                )));
            }
            sum += p;
        }
        if (sum - 1.0).abs() > 1e-9 {
            return Err(CptError::InvalidProspect(format!(
                "probabilities sum to {sum}, expected 1"
            )));
        }
        Ok(Self { outcomes })
    }

    pub fn outcomes(&self) -> &[(f64, f64)] {
        &self.outcomes
    }

    fn is_sorted(&self) -> bool {
        self.outcomes.windows(2).all(|w| w[0].0 <= w[1].0)
    }
}

/// Value- and weighting-function parameters.
///
/// `alpha`/`beta` curve gains/losses, `gamma`/`delta` are the weighting
/// exponents for gains/losses, `lambda >= 1` scales losses, and `u0` is
/// the reference utility separating gains from losses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CptParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub lambda: f64,
    pub u0: f64,
}

impl CptParams {
    pub fn new(
        alpha: f64,
        beta: f64,
        gamma: f64,
        delta: f64,
        lambda: f64,
        u0: f64,
    ) -> Result<Self, CptError> {
        for (name, v) in [
            ("alpha", alpha),
            ("beta", beta),
            ("gamma", gamma),
            ("delta", delta),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(CptError::InvalidParams(format!(
                    "{name} = {v} outside (0, 1]"
                )));
            }
        }
        if lambda < 1.0 {
            return Err(CptError::InvalidParams(format!("lambda = {lambda} < 1")));
        }
        if !u0.is_finite() {
            return Err(CptError::InvalidParams("u0 not finite".into()));
        }
        Ok(Self {
            alpha,
            beta,
            gamma,
            delta,
            lambda,
            u0,
        })
    }

    /// Driving-model convention: beta = alpha, delta = gamma, lambda = 1,
    /// u0 = 0.
    pub fn driving(alpha: f64, gamma: f64) -> Result<Self, CptError> {
        Self::new(alpha, alpha, gamma, gamma, 1.0, 0.0)
    }
}

impl Default for CptParams {
    /// Identity parameters, under which the valuation reduces to expected
    /// utility.
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            gamma: 1.0,
            delta: 1.0,
            lambda: 1.0,
            u0: 0.0,
        }
    }
}

/// How the two pass outcomes receive their decision weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightingMode {
    /// Assigns `w(p_yield)` directly to the non-yield outcome and the
    /// complement to the yield outcome, regardless of which utility is
    /// larger. Default for reproducing the published pipeline.
    PaperExact,
    /// Sorts the two outcomes by utility and applies the cumulative
    /// rank-dependent weights.
    RankOrdered,
}

impl std::str::FromStr for WeightingMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "paper_exact" => Ok(WeightingMode::PaperExact),
            "rank_ordered" => Ok(WeightingMode::RankOrdered),
            other => Err(format!("unknown weighting mode {other:?}")),
        }
    }
}

impl WeightingMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            WeightingMode::PaperExact => "paper_exact",
            WeightingMode::RankOrdered => "rank_ordered",
        }
    }
}

/// Whether a prospect is valued with decision weights or as a plain
/// expectation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValuationMode {
    Cpt,
    Eut,
}

/// Best achievable utilities of the three counterfactuals behind the two
/// driving actions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrivingUtilities {
    /// Passing with a yielding interacting vehicle (free pass).
    pub u_pass_yield: f64,
    /// Passing against a non-yielding interacting vehicle (forced brake).
    pub u_pass_nonyield: f64,
    /// Yielding (certain outcome).
    pub u_yield: f64,
}

/// Value function: `(u - u0)^alpha` on gains, `-lambda (u0 - u)^beta` on
/// losses.
pub fn value_fn(u: f64, p: &CptParams) -> f64 {
    if u >= p.u0 {
        (u - p.u0).powf(p.alpha)
    } else {
        -p.lambda * (p.u0 - u).powf(p.beta)
    }
}

/// Probability weighting `p^e / (p^e + (1-p)^e)^(1/e)` with exact
/// endpoints; the identity for exponent 1.
pub fn weighting_fn(p: f64, exponent: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&p), "probability out of range");
    if p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return 1.0;
    }
    if exponent == 1.0 {
        return p;
    }
    let num = p.powf(exponent);
    let den = (num + (1.0 - p).powf(exponent)).powf(1.0 / exponent);
    num / den
}

/// Rank-dependent decision weights for a prospect sorted ascending by
/// utility. Each weight is the difference of the weighting function at
/// consecutive upper-tail probabilities; gain entries populate the first
/// vector, loss entries the second, zeros elsewhere.
pub fn decision_weights(
    prospect: &Prospect,
    p: &CptParams,
) -> Result<(Vec<f64>, Vec<f64>), CptError> {
    if !prospect.is_sorted() {
        return Err(CptError::UnsortedProspect);
    }
    let outcomes = prospect.outcomes();
    let m = outcomes.len();
    let mut pi_plus = vec![0.0; m];
    let mut pi_minus = vec![0.0; m];
    // Upper-tail sums: tail[j] = sum of probabilities from j to the end.
    let mut tail = vec![0.0; m + 1];
    for j in (0..m).rev() {
        tail[j] = tail[j + 1] + outcomes[j].1;
    }
    // The full tail is 1 by the prospect invariant; rounding drift must
    // not leak through the weighting function's steep slope at 1.
    debug_assert!((tail[0] - 1.0).abs() <= 1e-9);
    tail[0] = 1.0;
    for j in 0..m {
        let (u, _) = outcomes[j];
        if u >= p.u0 {
            pi_plus[j] = weighting_fn(tail[j].min(1.0), p.gamma)
                - weighting_fn(tail[j + 1].min(1.0), p.gamma);
        } else {
            pi_minus[j] = weighting_fn(tail[j].min(1.0), p.delta)
                - weighting_fn(tail[j + 1].min(1.0), p.delta);
        }
    }
    Ok((pi_plus, pi_minus))
}

/// Values a prospect: rank-dependent weights over the value function in
/// `Cpt` mode, plain probability-weighted utility in `Eut` mode. Outcomes
/// are sorted internally.
pub fn prospect_value(prospect: &Prospect, p: &CptParams, mode: ValuationMode) -> f64 {
    match mode {
        ValuationMode::Eut => prospect.outcomes().iter().map(|&(u, pr)| u * pr).sum(),
        ValuationMode::Cpt => {
            let mut sorted = prospect.clone();
            sorted
                .outcomes
                .sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            let (pi_plus, pi_minus) =
                decision_weights(&sorted, p).expect("sorted by construction");
            sorted
                .outcomes()
                .iter()
                .enumerate()
                .map(|(j, &(u, _))| value_fn(u, p) * (pi_plus[j] + pi_minus[j]))
                .sum()
        }
    }
}

/// Values of the pass and yield actions in the gains-only driving model
/// (u0 = 0). `p_yield` is the probability that the interacting vehicle
/// yields. Returns `(V_pass, V_yield)`.
pub fn driving_values(
    u: &DrivingUtilities,
    p_yield: f64,
    p: &CptParams,
    mode: WeightingMode,
) -> Result<(f64, f64), CptError> {
    for v in [u.u_pass_yield, u.u_pass_nonyield, u.u_yield] {
        if v < 0.0 {
            return Err(CptError::NegativeUtility(v));
        }
    }
    debug_assert!((0.0..=1.0).contains(&p_yield));
    let v_yield = value_fn(u.u_yield, p);
    let v_pass = match mode {
        WeightingMode::PaperExact => {
            let w = weighting_fn(p_yield, p.gamma);
            value_fn(u.u_pass_yield, p) * (1.0 - w) + value_fn(u.u_pass_nonyield, p) * w
        }
        WeightingMode::RankOrdered => {
            let prospect = Prospect::new(vec![
                (u.u_pass_yield, p_yield),
                (u.u_pass_nonyield, 1.0 - p_yield),
            ])
            .expect("valid two-outcome prospect");
            prospect_value(&prospect, p, ValuationMode::Cpt)
        }
    };
    Ok((v_pass, v_yield))
}

/// Probability that the interacting vehicle yields, from the TTC gap:
/// `1 / (1 + exp(ttc_target - ttc_interacting))`.
pub fn yield_probability(ttc_target: f64, ttc_interacting: f64) -> f64 {
    1.0 / (1.0 + (ttc_target - ttc_interacting).exp())
}

/// Softmax probabilities over the two action values; returns
/// `(Pr_pass, Pr_yield)` with exact complementarity.
pub fn decision_probabilities(v_pass: f64, v_yield: f64) -> (f64, f64) {
    let pr_pass = 1.0 / (1.0 + (v_yield - v_pass).exp());
    (pr_pass, 1.0 - pr_pass)
}

/// Tolerance below which two action values count as tied.
pub const DECISION_TIE_TOLERANCE: f64 = 1e-12;

/// Argmax over the two action values; ties go to yield.
pub fn decide(v_pass: f64, v_yield: f64) -> Decision {
    if v_pass - v_yield >= DECISION_TIE_TOLERANCE {
        Decision::Pass
    } else {
        Decision::Yield
    }
}
