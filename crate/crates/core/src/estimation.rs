//! Hierarchical parameter learning. Stage 1 recovers the utility weights
//! from decision-free demonstrations by maximum-entropy IRL over finite
//! candidate sets; stage 2 fits the value/weighting exponents by
//! cross-entropy over labeled decisions, with a coarse grid followed by
//! Nelder-Mead refinement.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cpt::{
    decision_probabilities, driving_values, CptParams, Decision, DrivingUtilities, WeightingMode,
};
use crate::features::{summed_features, UtilityConfig, UtilityWeights};
use crate::kinematics::Trajectory;

#[derive(Debug, Error, PartialEq)]
pub enum EstimationError {
    #[error("demonstration {0} has an empty candidate set")]
    EmptyCandidates(usize),
    #[error("no data to fit")]
    EmptyDataset,
    #[error("candidate sets do not match demonstrations: {0} vs {1}")]
    CandidateCountMismatch(usize, usize),
}

/// Decision-free trajectory pair used to fit the utility weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Demonstration {
    pub interacting: Trajectory,
    pub target: Trajectory,
}

impl Demonstration {
    pub fn new(interacting: Trajectory, target: Trajectory) -> Self {
        assert_eq!(interacting.len(), target.len(), "length mismatch");
        Self {
            interacting,
            target,
        }
    }
}

/// Candidate-set IRL settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrlConfig {
    /// Candidates per demonstration (the demonstration itself included).
    pub candidate_count: usize,
    /// Standard deviation of the station perturbations (m).
    pub perturbation_scale: f64,
    pub learning_rate: f64,
    pub max_iterations: usize,
    /// Ascent stops when the max-norm of the log-likelihood gradient
    /// falls below this.
    pub gradient_tolerance: f64,
    pub rng_seed: u64,
}

impl Default for IrlConfig {
    fn default() -> Self {
        Self {
            candidate_count: 64,
            perturbation_scale: 0.5,
            learning_rate: 0.05,
            max_iterations: 2000,
            gradient_tolerance: 1e-4,
            rng_seed: 0,
        }
    }
}

/// One labeled decision with its precomputed utilities and yield
/// probability; the unit of the stage-2 fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CptObservation {
    pub utilities: DrivingUtilities,
    pub p_yield: f64,
    pub label: Decision,
}

/// Outcome of a fit: parameters, final loss, the accepted-loss trace, and
/// whether the stopping rule was met.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult<P> {
    pub params: P,
    pub loss: f64,
    pub trace: Vec<f64>,
    pub converged: bool,
}

/// Smooths a noise sequence with a centered 5-tap moving average,
/// shrinking the window at the edges.
fn smooth_5(noise: &[f64]) -> Vec<f64> {
    let n = noise.len();
    (0..n)
        .map(|k| {
            let lo = k.saturating_sub(2);
            let hi = (k + 2).min(n - 1);
            noise[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect()
}

/// Generates the candidate set for one demonstration: the demonstration
/// first, then `candidate_count - 1` variants built by adding smoothed
/// Gaussian station noise (first station fixed) and projecting to
/// monotone non-decreasing stations.
pub fn generate_candidates(
    demo: &Demonstration,
    cfg: &IrlConfig,
    rng: &mut ChaCha8Rng,
) -> Vec<Trajectory> {
    let n = demo.target.len();
    let dt = demo.target.dt();
    let base = demo.target.stations();
    let mut out = Vec::with_capacity(cfg.candidate_count);
    out.push(demo.target.clone());
    for _ in 1..cfg.candidate_count {
        let noise: Vec<f64> = (0..n)
            .map(|_| normal_sample(rng) * cfg.perturbation_scale)
            .collect();
        let smoothed = smooth_5(&noise);
        let mut stations: Vec<f64> = base
            .iter()
            .zip(&smoothed)
            .enumerate()
            .map(|(k, (s, d))| if k == 0 { *s } else { s + d })
            .collect();
        for k in 1..n {
            stations[k] = stations[k].max(stations[k - 1]);
        }
        out.push(Trajectory::new(dt, stations));
    }
    out
}

fn normal_sample(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller transform.
    let u1: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.random_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

struct DemoFeatures {
    demo_phi: [f64; 4],
    candidate_phi: Vec<[f64; 4]>,
}

fn collect_features(
    demos: &[Demonstration],
    candidates_per_demo: &[Vec<Trajectory>],
    cfg_u: &UtilityConfig,
) -> Result<Vec<DemoFeatures>, EstimationError> {
    if demos.len() != candidates_per_demo.len() {
        return Err(EstimationError::CandidateCountMismatch(
            demos.len(),
            candidates_per_demo.len(),
        ));
    }
    demos
        .iter()
        .zip(candidates_per_demo)
        .enumerate()
        .map(|(i, (demo, cands))| {
            if cands.is_empty() {
                return Err(EstimationError::EmptyCandidates(i));
            }
            let demo_phi = summed_features(&demo.target, &demo.interacting, cfg_u)
                .expect("lengths checked at construction");
            let candidate_phi = cands
                .iter()
                .map(|c| {
                    summed_features(c, &demo.interacting, cfg_u)
                        .expect("candidates share the demo grid")
                })
                .collect();
            Ok(DemoFeatures {
                demo_phi,
                candidate_phi,
            })
        })
        .collect()
}

fn loglik_and_grad_features(theta: &UtilityWeights, features: &[DemoFeatures]) -> (f64, [f64; 4]) {
    let mut loglik = 0.0;
    let mut grad = [0.0; 4];
    for df in features {
        let demo_u = theta.dot(&df.demo_phi);
        let utilities: Vec<f64> = df.candidate_phi.iter().map(|phi| theta.dot(phi)).collect();
        let max_u = utilities.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        let mut expected = [0.0; 4];
        for (u, phi) in utilities.iter().zip(&df.candidate_phi) {
            let w = (u - max_u).exp();
            z += w;
            for (e, p) in expected.iter_mut().zip(phi) {
                *e += w * p;
            }
        }
        loglik += demo_u - max_u - z.ln();
        for i in 0..4 {
            grad[i] += df.demo_phi[i] - expected[i] / z;
        }
    }
    (loglik, grad)
}

/// Log-likelihood of the demonstrations under the softmax trajectory
/// model, and its gradient in the weights: the demonstrated feature sums
/// minus the model-expected ones.
pub fn irl_loglik_and_grad(
    theta: &UtilityWeights,
    demos: &[Demonstration],
    candidates_per_demo: &[Vec<Trajectory>],
    cfg_u: &UtilityConfig,
) -> Result<(f64, [f64; 4]), EstimationError> {
    let features = collect_features(demos, candidates_per_demo, cfg_u)?;
    Ok(loglik_and_grad_features(theta, &features))
}

/// Fits the utility weights on caller-supplied candidate sets by gradient
/// ascent from zero weights, with backtracking on the step so accepted
/// iterates never decrease the likelihood.
pub fn irl_fit_with_candidates(
    demos: &[Demonstration],
    candidates_per_demo: &[Vec<Trajectory>],
    cfg: &IrlConfig,
    cfg_u: &UtilityConfig,
) -> Result<FitResult<UtilityWeights>, EstimationError> {
    if demos.is_empty() {
        return Err(EstimationError::EmptyDataset);
    }
    let features = collect_features(demos, candidates_per_demo, cfg_u)?;

    let mut theta = UtilityWeights::ZERO;
    let (mut loglik, mut grad) = loglik_and_grad_features(&theta, &features);
    let mut trace = vec![-loglik];
    let mut rate = cfg.learning_rate;
    let mut converged = false;

    for _ in 0..cfg.max_iterations {
        let grad_norm = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        if grad_norm < cfg.gradient_tolerance {
            converged = true;
            break;
        }
        let mut step = rate;
        let mut accepted = false;
        for _ in 0..40 {
            let candidate = UtilityWeights(std::array::from_fn(|i| theta.0[i] + step * grad[i]));
            let (cand_loglik, cand_grad) = loglik_and_grad_features(&candidate, &features);
            if cand_loglik > loglik {
                theta = candidate;
                loglik = cand_loglik;
                grad = cand_grad;
                trace.push(-loglik);
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        // Grow the base step on success so the flat tail of a separable
        // likelihood is still covered within the iteration budget.
        rate = if step == rate { rate * 1.5 } else { step };
    }
    if !converged {
        converged = grad.iter().fold(0.0f64, |m, g| m.max(g.abs())) < cfg.gradient_tolerance;
    }
    Ok(FitResult {
        params: theta,
        loss: -loglik,
        trace,
        converged,
    })
}

/// Fits the utility weights, generating each demonstration's candidate
/// set internally from the seeded perturbation scheme.
pub fn irl_fit(
    demos: &[Demonstration],
    cfg: &IrlConfig,
    cfg_u: &UtilityConfig,
) -> Result<FitResult<UtilityWeights>, EstimationError> {
    if demos.is_empty() {
        return Err(EstimationError::EmptyDataset);
    }
    let mut rng = rand::SeedableRng::seed_from_u64(cfg.rng_seed);
    let candidates: Vec<Vec<Trajectory>> = demos
        .iter()
        .map(|d| generate_candidates(d, cfg, &mut rng))
        .collect();
    irl_fit_with_candidates(demos, &candidates, cfg, cfg_u)
}

/// Smallest probability fed into the cross-entropy logs.
pub const PROBABILITY_CLAMP: f64 = 1e-12;

/// Cross-entropy of the labeled decisions under the two-action softmax,
/// with probabilities clamped to [1e-12, 1 - 1e-12]. Also reports how
/// often the clamp fired.
pub fn cpt_loss_counting(
    alpha: f64,
    gamma: f64,
    observations: &[CptObservation],
    mode: WeightingMode,
) -> (f64, usize) {
    let params = CptParams::driving(alpha, gamma).expect("alpha/gamma in (0, 1]");
    let mut loss = 0.0;
    let mut clamped = 0;
    for obs in observations {
        let (v_pass, v_yield) = driving_values(&obs.utilities, obs.p_yield, &params, mode)
            .expect("observations carry non-negative utilities");
        let (pr_pass, pr_yield) = decision_probabilities(v_pass, v_yield);
        let pr = match obs.label {
            Decision::Pass => pr_pass,
            Decision::Yield => pr_yield,
        };
        let bounded = pr.clamp(PROBABILITY_CLAMP, 1.0 - PROBABILITY_CLAMP);
        if bounded != pr {
            clamped += 1;
        }
        loss -= bounded.ln();
    }
    (loss, clamped)
}

/// Cross-entropy of the labeled decisions; 0 for an empty set.
pub fn cpt_loss(
    alpha: f64,
    gamma: f64,
    observations: &[CptObservation],
    mode: WeightingMode,
) -> f64 {
    cpt_loss_counting(alpha, gamma, observations, mode).0
}

const REFINE_ITERATIONS: usize = 200;
const REFINE_TOLERANCE: f64 = 1e-12;
const PARAM_FLOOR: f64 = 1e-6;

fn clamp_params(p: (f64, f64)) -> (f64, f64) {
    (p.0.clamp(PARAM_FLOOR, 1.0), p.1.clamp(PARAM_FLOOR, 1.0))
}

/// Nelder-Mead on the box (0, 1]^2, candidates projected back into the
/// box. Returns the best vertex, its loss, the best-loss trace, and
/// whether the simplex collapsed below tolerance.
fn nelder_mead(
    start: (f64, f64),
    spread: f64,
    observations: &[CptObservation],
    mode: WeightingMode,
) -> ((f64, f64), f64, Vec<f64>, bool) {
    let f = |p: (f64, f64)| cpt_loss(p.0, p.1, observations, mode);
    let mut simplex = vec![
        clamp_params(start),
        clamp_params((start.0 - spread, start.1)),
        clamp_params((start.0, start.1 - spread)),
    ];
    let mut values: Vec<f64> = simplex.iter().map(|&p| f(p)).collect();
    let mut trace = Vec::new();
    let mut converged = false;

    for _ in 0..REFINE_ITERATIONS {
        let mut order = [0, 1, 2];
        order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
        simplex = order.iter().map(|&i| simplex[i]).collect();
        values = order.iter().map(|&i| values[i]).collect();
        trace.push(values[0]);
        if (values[2] - values[0]).abs() < REFINE_TOLERANCE {
            converged = true;
            break;
        }
        let centroid = (
            (simplex[0].0 + simplex[1].0) / 2.0,
            (simplex[0].1 + simplex[1].1) / 2.0,
        );
        let worst = simplex[2];
        let reflect = |t: f64| {
            clamp_params((
                centroid.0 + t * (centroid.0 - worst.0),
                centroid.1 + t * (centroid.1 - worst.1),
            ))
        };
        let reflected = reflect(1.0);
        let fr = f(reflected);
        if fr < values[0] {
            let expanded = reflect(2.0);
            let fe = f(expanded);
            if fe < fr {
                simplex[2] = expanded;
                values[2] = fe;
            } else {
                simplex[2] = reflected;
                values[2] = fr;
            }
        } else if fr < values[1] {
            simplex[2] = reflected;
            values[2] = fr;
        } else {
            let contracted = reflect(-0.5);
            let fc = f(contracted);
            if fc < values[2] {
                simplex[2] = contracted;
                values[2] = fc;
            } else {
                for i in 1..3 {
                    simplex[i] = clamp_params((
                        simplex[0].0 + 0.5 * (simplex[i].0 - simplex[0].0),
                        simplex[0].1 + 0.5 * (simplex[i].1 - simplex[0].1),
                    ));
                    values[i] = f(simplex[i]);
                }
            }
        }
    }
    let mut best = 0;
    for i in 1..3 {
        if values[i] < values[best] {
            best = i;
        }
    }
    (simplex[best], values[best], trace, converged)
}

/// Fits (alpha, gamma) by an exhaustive grid over (0, 1]^2 followed by
/// Nelder-Mead refinement from the best cell. A flat landscape returns
/// the grid default (1, 1) flagged as not converged.
pub fn cpt_fit(
    observations: &[CptObservation],
    mode: WeightingMode,
    grid_resolution: usize,
) -> Result<FitResult<(f64, f64)>, EstimationError> {
    if observations.is_empty() {
        return Err(EstimationError::EmptyDataset);
    }
    assert!(grid_resolution >= 2, "grid needs at least 2 points per axis");

    let has_pass = observations.iter().any(|o| o.label == Decision::Pass);
    let has_yield = observations.iter().any(|o| o.label == Decision::Yield);
    if !(has_pass && has_yield) {
        eprintln!("warning: single-label dataset; the fit may be degenerate");
    }

    // Grid scan, seeded at (1, 1) so a flat loss keeps the default.
    let mut best = (1.0, 1.0);
    let mut best_loss = cpt_loss(1.0, 1.0, observations, mode);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut trace = vec![best_loss];
    for i in 1..=grid_resolution {
        for j in 1..=grid_resolution {
            let alpha = i as f64 / grid_resolution as f64;
            let gamma = j as f64 / grid_resolution as f64;
            let loss = cpt_loss(alpha, gamma, observations, mode);
            lo = lo.min(loss);
            hi = hi.max(loss);
            if loss < best_loss {
                best_loss = loss;
                best = (alpha, gamma);
                trace.push(loss);
            }
        }
    }

    if hi - lo < 1e-12 {
        return Ok(FitResult {
            params: (1.0, 1.0),
            loss: best_loss,
            trace,
            converged: false,
        });
    }

    let spread = 0.5 / grid_resolution as f64;
    let (refined, refined_loss, refine_trace, converged) =
        nelder_mead(best, spread, observations, mode);
    let (params, loss) = if refined_loss <= best_loss {
        (refined, refined_loss)
    } else {
        (best, best_loss)
    };
    trace.extend(refine_trace.into_iter().filter(|&l| l <= best_loss));
    Ok(FitResult {
        params,
        loss,
        trace,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn cfg_u() -> UtilityConfig {
        UtilityConfig::default()
    }

    fn straight_demo(n: usize, v: f64) -> Demonstration {
        let dt = 0.1;
        let target: Vec<f64> = (0..n).map(|k| -30.0 + v * dt * k as f64).collect();
        let inter: Vec<f64> = (0..n).map(|k| -25.0 + 6.0 * dt * k as f64).collect();
        Demonstration::new(Trajectory::new(dt, inter), Trajectory::new(dt, target))
    }

    #[test]
    fn singleton_candidate_set_gives_zero_loglik_and_grad() {
        let demo = straight_demo(10, 8.0);
        let cands = vec![vec![demo.target.clone()]];
        let theta = UtilityWeights([0.3, -0.2, 0.5, 0.1]);
        let (ll, grad) = irl_loglik_and_grad(&theta, &[demo], &cands, &cfg_u()).unwrap();
        assert_eq!(ll, 0.0);
        assert!(grad.iter().all(|&g| g.abs() < 1e-12));
    }

    #[test]
    fn identical_candidates_split_probability() {
        let demo = straight_demo(10, 8.0);
        let cands = vec![vec![demo.target.clone(), demo.target.clone()]];
        let theta = UtilityWeights([1.0, 0.5, 0.2, -0.4]);
        let (ll, grad) = irl_loglik_and_grad(&theta, &[demo], &cands, &cfg_u()).unwrap();
        assert!((ll - 0.5f64.ln()).abs() < 1e-12);
        assert!(grad.iter().all(|&g| g.abs() < 1e-12));
    }

    #[test]
    fn loglik_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = IrlConfig {
            candidate_count: 8,
            ..Default::default()
        };
        for trial in 0..100 {
            let demo = straight_demo(12, 4.0 + (trial % 7) as f64);
            let cands = vec![generate_candidates(&demo, &cfg, &mut rng)];
            let demos = vec![demo];
            let theta = UtilityWeights(std::array::from_fn(|_| normal_sample(&mut rng)));
            let (_, grad) = irl_loglik_and_grad(&theta, &demos, &cands, &cfg_u()).unwrap();
            let h = 1e-5;
            let mut fd = [0.0; 4];
            for i in 0..4 {
                let mut up = theta;
                let mut dn = theta;
                up.0[i] += h;
                dn.0[i] -= h;
                let (lu, _) = irl_loglik_and_grad(&up, &demos, &cands, &cfg_u()).unwrap();
                let (ld, _) = irl_loglik_and_grad(&dn, &demos, &cands, &cfg_u()).unwrap();
                fd[i] = (lu - ld) / (2.0 * h);
            }
            let scale = fd.iter().fold(1.0f64, |m, g| m.max(g.abs()));
            for i in 0..4 {
                assert!(
                    (grad[i] - fd[i]).abs() / scale < 1e-5,
                    "trial {trial} component {i}: {} vs {}",
                    grad[i],
                    fd[i]
                );
            }
        }
    }

    #[test]
    fn zero_demos_error() {
        assert_eq!(
            irl_fit(&[], &IrlConfig::default(), &cfg_u()).unwrap_err(),
            EstimationError::EmptyDataset
        );
    }

    #[test]
    fn two_candidate_fit_concentrates_on_demo() {
        // Closed-form two-candidate softmax: the fitted weights must push
        // the demonstration's probability toward 1 when features are
        // separable.
        let demo = straight_demo(20, 8.0);
        let mut slower = demo.target.stations().to_vec();
        for (k, s) in slower.iter_mut().enumerate() {
            *s -= 0.3 * k as f64 * 0.1;
        }
        let other = Trajectory::new(0.1, slower);
        let cands = vec![vec![demo.target.clone(), other.clone()]];
        let demos = vec![demo.clone()];
        let cfg = IrlConfig::default();
        let fit = irl_fit_with_candidates(&demos, &cands, &cfg, &cfg_u()).unwrap();

        let phi_demo = summed_features(&demo.target, &demo.interacting, &cfg_u()).unwrap();
        let phi_other = summed_features(&other, &demo.interacting, &cfg_u()).unwrap();
        let margin = fit.params.dot(&phi_demo) - fit.params.dot(&phi_other);
        let pr_demo = 1.0 / (1.0 + (-margin).exp());
        assert!(pr_demo > 0.99, "Pr(demo) = {pr_demo}");
        // Loss trace never increases on accepted steps.
        assert!(fit.trace.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }

    #[test]
    fn moment_matching_at_convergence() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let cfg = IrlConfig {
            candidate_count: 24,
            ..Default::default()
        };
        let theta_true = UtilityWeights([1.2, 0.6, 0.3, -0.7]);
        let mut demos = Vec::new();
        let mut cands = Vec::new();
        for i in 0..12 {
            let base = straight_demo(15, 3.0 + (i % 6) as f64);
            let set = generate_candidates(&base, &cfg, &mut rng);
            // The demonstration is the argmax candidate under the true
            // weights.
            let best = set
                .iter()
                .map(|c| {
                    let phi = summed_features(c, &base.interacting, &cfg_u()).unwrap();
                    theta_true.dot(&phi)
                })
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
                .unwrap()
                .0;
            demos.push(Demonstration::new(
                base.interacting.clone(),
                set[best].clone(),
            ));
            cands.push(set);
        }
        let fit = irl_fit_with_candidates(&demos, &cands, &cfg, &cfg_u()).unwrap();
        assert!(
            fit.converged,
            "loss {} trace len {}",
            fit.loss,
            fit.trace.len()
        );
        let (_, grad) = irl_loglik_and_grad(&fit.params, &demos, &cands, &cfg_u()).unwrap();
        let gap = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        assert!(gap < 1e-3, "moment gap {gap}");
    }

    fn symmetric_obs(label: Decision) -> CptObservation {
        CptObservation {
            utilities: DrivingUtilities {
                u_pass_yield: 5.0,
                u_pass_nonyield: 5.0,
                u_yield: 5.0,
            },
            p_yield: 0.5,
            label,
        }
    }

    #[test]
    fn symmetric_observation_loss_is_ln2() {
        for mode in [WeightingMode::PaperExact, WeightingMode::RankOrdered] {
            let obs = vec![
                symmetric_obs(Decision::Pass),
                symmetric_obs(Decision::Yield),
            ];
            let loss = cpt_loss(0.7, 0.6, &obs, mode);
            assert!((loss - 2.0 * 2.0f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_observations_give_zero_loss() {
        assert_eq!(cpt_loss(0.5, 0.5, &[], WeightingMode::PaperExact), 0.0);
    }

    /// Independent per-sample recomputation through the valuation engine.
    #[test]
    fn batch_loss_matches_per_sample_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let obs: Vec<CptObservation> = (0..60)
            .map(|_| CptObservation {
                utilities: DrivingUtilities {
                    u_pass_yield: rng.random_range(0.5..20.0),
                    u_pass_nonyield: rng.random_range(0.5..20.0),
                    u_yield: rng.random_range(0.5..20.0),
                },
                p_yield: rng.random_range(0.01..0.99),
                label: if rng.random_range(0.0..1.0) < 0.5 {
                    Decision::Pass
                } else {
                    Decision::Yield
                },
            })
            .collect();
        let (alpha, gamma) = (0.83, 0.61);
        let loss = cpt_loss(alpha, gamma, &obs, WeightingMode::PaperExact);
        let params = CptParams::driving(alpha, gamma).unwrap();
        let mut expected = 0.0;
        for o in &obs {
            let (vp, vy) =
                driving_values(&o.utilities, o.p_yield, &params, WeightingMode::PaperExact)
                    .unwrap();
            let (pp, py) = decision_probabilities(vp, vy);
            expected -= match o.label {
                Decision::Pass => pp.ln(),
                Decision::Yield => py.ln(),
            };
        }
        assert!((loss - expected).abs() < 1e-9);
    }

    #[test]
    fn loss_at_identity_parameters_is_eut_cross_entropy() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let obs: Vec<CptObservation> = (0..40)
            .map(|_| CptObservation {
                utilities: DrivingUtilities {
                    u_pass_yield: rng.random_range(0.5..15.0),
                    u_pass_nonyield: rng.random_range(0.5..15.0),
                    u_yield: rng.random_range(0.5..15.0),
                },
                p_yield: rng.random_range(0.05..0.95),
                label: Decision::Pass,
            })
            .collect();
        let loss = cpt_loss(1.0, 1.0, &obs, WeightingMode::PaperExact);
        let mut expected = 0.0;
        for o in &obs {
            let v_pass = o.utilities.u_pass_yield * (1.0 - o.p_yield)
                + o.utilities.u_pass_nonyield * o.p_yield;
            let (pp, _) = decision_probabilities(v_pass, o.utilities.u_yield);
            expected -= pp.ln();
        }
        assert!((loss - expected).abs() < 1e-9);
    }

    #[test]
    fn flat_landscape_returns_grid_default_not_converged() {
        let obs = vec![
            symmetric_obs(Decision::Pass),
            symmetric_obs(Decision::Yield),
        ];
        let fit = cpt_fit(&obs, WeightingMode::PaperExact, 10).unwrap();
        assert_eq!(fit.params, (1.0, 1.0));
        assert!(!fit.converged);
    }

    #[test]
    fn empty_dataset_rejected() {
        assert_eq!(
            cpt_fit(&[], WeightingMode::PaperExact, 10).unwrap_err(),
            EstimationError::EmptyDataset
        );
    }

    #[test]
    fn fit_beats_every_grid_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let true_params = CptParams::driving(0.9, 0.55).unwrap();
        let obs: Vec<CptObservation> = (0..400)
            .map(|_| {
                let utilities = DrivingUtilities {
                    u_pass_yield: rng.random_range(4.0..14.0),
                    u_pass_nonyield: rng.random_range(0.5..6.0),
                    u_yield: rng.random_range(2.0..10.0),
                };
                let p_yield = rng.random_range(0.05..0.95);
                let (vp, vy) =
                    driving_values(&utilities, p_yield, &true_params, WeightingMode::PaperExact)
                        .unwrap();
                let (pp, _) = decision_probabilities(vp, vy);
                let label = if rng.random_range(0.0..1.0) < pp {
                    Decision::Pass
                } else {
                    Decision::Yield
                };
                CptObservation {
                    utilities,
                    p_yield,
                    label,
                }
            })
            .collect();
        let resolution = 12;
        let fit = cpt_fit(&obs, WeightingMode::PaperExact, resolution).unwrap();
        for i in 1..=resolution {
            for j in 1..=resolution {
                let loss = cpt_loss(
                    i as f64 / resolution as f64,
                    j as f64 / resolution as f64,
                    &obs,
                    WeightingMode::PaperExact,
                );
                assert!(fit.loss <= loss + 1e-12);
            }
        }
        assert!(fit.converged);
    }

    #[test]
    fn cpt_fit_is_deterministic() {
        let obs: Vec<CptObservation> = (0..50)
            .map(|k| CptObservation {
                utilities: DrivingUtilities {
                    u_pass_yield: 6.0 + (k % 5) as f64,
                    u_pass_nonyield: 2.0 + (k % 3) as f64,
                    u_yield: 4.0 + (k % 4) as f64,
                },
                p_yield: 0.1 + 0.8 * (k as f64 / 49.0),
                label: if k % 3 == 0 {
                    Decision::Yield
                } else {
                    Decision::Pass
                },
            })
            .collect();
        let a = cpt_fit(&obs, WeightingMode::PaperExact, 15).unwrap();
        let b = cpt_fit(&obs, WeightingMode::PaperExact, 15).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.loss, b.loss);
        assert_eq!(a.trace, b.trace);
    }
}
