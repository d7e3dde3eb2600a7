//! Numerical verifiers for the policy-improvement theory: exact identities
//! relating performance differences to KL reductions, lower bounds under the
//! old policy's state weighting, the forward-KL counterexample construction,
//! the sufficient-reduction bounds, and the relative-gap experiment.
//!
//! Every check computes both sides of its statement exactly (linear algebra
//! on the tabular MDP) and reports the gap or slack. Inequalities are only
//! asserted when their stated hypotheses verifiably hold; otherwise the
//! report carries `hypotheses_satisfied = false` and makes no claim.

use crate::error::{Error, Result};
use crate::mdp::{exact_soft_values, visitation_distribution, DiscretePolicy, FiniteMdp};
use crate::rng::RngStream;
use crate::target::{
    boltzmann_log_probs, boltzmann_probs, kappa_of_exp, kl_discrete, kl_vs_log_target,
    renyi_inf_vs_log,
};

/// Default tolerance for the equality checks.
pub const IDENTITY_TOL: f64 = 1e-8;
/// Default slack tolerance for the inequality checks.
pub const BOUND_TOL: f64 = 1e-8;
/// Values this close to each other are "exact" for linear solves.
const SOLVE_TOL: f64 = 1e-12;

/// Two sides of an identity and their gap.
#[derive(Debug, Clone, Copy)]
pub struct IdentityReport {
    pub lhs: f64,
    pub rhs: f64,
    pub abs_gap: f64,
    pub passed: bool,
}

impl IdentityReport {
    fn new(lhs: f64, rhs: f64, tol: f64) -> Self {
        let abs_gap = (lhs - rhs).abs();
        Self {
            lhs,
            rhs,
            abs_gap,
            passed: abs_gap < tol,
        }
    }
}

/// A one-sided bound check. `slack` is the margin by which the bound holds
/// (achieved minus bound for lower bounds, bound minus achieved for upper
/// bounds); it must be `>= -tol` whenever `hypotheses_satisfied` is true.
#[derive(Debug, Clone, Copy)]
pub struct BoundReport {
    pub bound_value: f64,
    pub achieved_value: f64,
    pub slack: f64,
    pub hypotheses_satisfied: bool,
}

/// KL(new(s) || old(s)) per state.
fn policy_kl(pi_new: &DiscretePolicy, pi_old: &DiscretePolicy, s: usize) -> Result<f64> {
    kl_discrete(pi_new.row(s), pi_old.row(s))
}

/// Soft performance difference identity:
/// `eta_tau(new) - eta_tau(old)` equals
/// `1/(1-gamma) E_{d^new}[ E_new[A_tau^old] - tau KL(new || old) ]`.
pub fn check_soft_perf_diff(
    mdp: &FiniteMdp,
    pi_old: &DiscretePolicy,
    pi_new: &DiscretePolicy,
    tau: f64,
) -> Result<IdentityReport> {
    let vals_old = exact_soft_values(mdp, pi_old, tau, SOLVE_TOL)?;
    let eta_old = expected_start_value(mdp, &vals_old.v);
    let vals_new = exact_soft_values(mdp, pi_new, tau, SOLVE_TOL)?;
    let eta_new = expected_start_value(mdp, &vals_new.v);
    let d_new = visitation_distribution(mdp, pi_new)?;

    let mut acc = 0.0;
    for s in 0..mdp.n_states() {
        let mut inner = 0.0;
        for a in 0..mdp.n_actions() {
            let p_new = pi_new.prob(s, a);
            if p_new == 0.0 {
                continue;
            }
            let p_old = pi_old.prob(s, a);
            let log_term = if tau > 0.0 {
                if p_old == 0.0 {
                    return Err(Error::KlUndefined { index: a, p: p_new });
                }
                tau * p_old.ln()
            } else {
                0.0
            };
            let adv = vals_old.q(s, a) - log_term - vals_old.v[s];
            inner += p_new * adv;
        }
        if tau > 0.0 {
            inner -= tau * policy_kl(pi_new, pi_old, s)?;
        }
        acc += d_new.weights[s] * inner;
    }
    let rhs = acc / (1.0 - mdp.gamma());
    Ok(IdentityReport::new(eta_new - eta_old, rhs, IDENTITY_TOL))
}

/// Reverse-KL reduction per state against the Boltzmann target of `scores`:
/// `RKL(old) - RKL(new)`.
fn delta_rkl_state(
    pi_old: &DiscretePolicy,
    pi_new: &DiscretePolicy,
    scores: &[f64],
    tau: f64,
    s: usize,
) -> Result<f64> {
    // The target is kept in log space: at small temperatures its small
    // entries underflow as plain probabilities.
    let log_b = boltzmann_log_probs(scores, tau)?;
    Ok(kl_vs_log_target(pi_old.row(s), &log_b)? - kl_vs_log_target(pi_new.row(s), &log_b)?)
}

/// Improvement identity under average reverse-KL reduction:
/// `eta_tau(new) - eta_tau(old) = tau/(1-gamma) E_{d^new}[Delta RKL]`, where
/// the reduction is measured against `B_tau Q_tau^old`. Improvement holds iff
/// the average reduction is nonnegative.
pub fn check_rkl_improvement(
    mdp: &FiniteMdp,
    pi_old: &DiscretePolicy,
    pi_new: &DiscretePolicy,
    tau: f64,
) -> Result<IdentityReport> {
    if tau <= 0.0 {
        return Err(Error::TemperatureDomain(tau));
    }
    let vals_old = exact_soft_values(mdp, pi_old, tau, SOLVE_TOL)?;
    let eta_old = expected_start_value(mdp, &vals_old.v);
    let vals_new = exact_soft_values(mdp, pi_new, tau, SOLVE_TOL)?;
    let eta_new = expected_start_value(mdp, &vals_new.v);
    let d_new = visitation_distribution(mdp, pi_new)?;
    let mut avg = 0.0;
    for s in 0..mdp.n_states() {
        avg += d_new.weights[s] * delta_rkl_state(pi_old, pi_new, vals_old.q_row(s), tau, s)?;
    }
    let rhs = tau / (1.0 - mdp.gamma()) * avg;
    Ok(IdentityReport::new(eta_new - eta_old, rhs, IDENTITY_TOL))
}

/// Approximate soft performance difference: with an action-value estimate
/// `q_hat` and its error `eps = q_hat - Q_tau^old`,
/// `eta diff + eps_bar = tau/(1-gamma) E_{d^new}[Delta RKL-hat]`, where
/// `eps_bar = 1/(1-gamma) E_{d^new}[E_new[eps] - E_old[eps]]`. The
/// normalization on `eps_bar` comes out of the per-state identity
/// `tau DeltaRKL-hat(s) = sum_a pi_new A_tau^old - tau KL(new||old)
///  + sum_a (pi_new - pi_old) eps`,
/// which every term of the final statement is an average of.
pub fn check_approx_spd(
    mdp: &FiniteMdp,
    pi_old: &DiscretePolicy,
    pi_new: &DiscretePolicy,
    q_hat: &[f64],
    tau: f64,
) -> Result<IdentityReport> {
    if tau <= 0.0 {
        return Err(Error::TemperatureDomain(tau));
    }
    if q_hat.len() != mdp.n_states() * mdp.n_actions() {
        return Err(Error::Invalid("q_hat has wrong size".into()));
    }
    let vals_old = exact_soft_values(mdp, pi_old, tau, SOLVE_TOL)?;
    let eta_old = expected_start_value(mdp, &vals_old.v);
    let vals_new = exact_soft_values(mdp, pi_new, tau, SOLVE_TOL)?;
    let eta_new = expected_start_value(mdp, &vals_new.v);
    let d_new = visitation_distribution(mdp, pi_new)?;

    let na = mdp.n_actions();
    let mut eps_bar = 0.0;
    let mut avg = 0.0;
    for s in 0..mdp.n_states() {
        let q_hat_row = &q_hat[s * na..(s + 1) * na];
        let mut inner = 0.0;
        for a in 0..na {
            let eps = q_hat_row[a] - vals_old.q(s, a);
            inner += (pi_new.prob(s, a) - pi_old.prob(s, a)) * eps;
        }
        eps_bar += d_new.weights[s] * inner;
        avg += d_new.weights[s] * delta_rkl_state(pi_old, pi_new, q_hat_row, tau, s)?;
    }
    let rhs = tau / (1.0 - mdp.gamma()) * avg;
    let eps_bar = eps_bar / (1.0 - mdp.gamma());
    Ok(IdentityReport::new(eta_new - eta_old + eps_bar, rhs, IDENTITY_TOL))
}

/// `V_{tau,max} = (r_max + tau ln |A|) / (1 - gamma)`.
pub fn v_tau_max(mdp: &FiniteMdp, tau: f64) -> f64 {
    (mdp.max_abs_reward() + tau * (mdp.n_actions() as f64).ln()) / (1.0 - mdp.gamma())
}

/// Lower bound on the performance difference under the old policy's
/// weighting, assuming `KL(new || old)(s) <= alpha` in every state. With
/// `q_hat` present the approximate variant is checked instead.
pub fn check_dpiold_bounds(
    mdp: &FiniteMdp,
    pi_old: &DiscretePolicy,
    pi_new: &DiscretePolicy,
    tau: f64,
    alpha: f64,
    q_hat: Option<&[f64]>,
) -> Result<BoundReport> {
    if tau <= 0.0 {
        return Err(Error::TemperatureDomain(tau));
    }
    let vals_old = exact_soft_values(mdp, pi_old, tau, SOLVE_TOL)?;
    let eta_old = expected_start_value(mdp, &vals_old.v);
    let vals_new = exact_soft_values(mdp, pi_new, tau, SOLVE_TOL)?;
    let eta_new = expected_start_value(mdp, &vals_new.v);
    let d_old = visitation_distribution(mdp, pi_old)?;
    let v_max = v_tau_max(mdp, tau);
    let penalty = 4.0 * v_max * (2.0 * alpha).sqrt();

    // Hypothesis: per-state KL(new || old) <= alpha.
    let mut hypotheses = true;
    for s in 0..mdp.n_states() {
        if policy_kl(pi_new, pi_old, s)? > alpha + 1e-15 {
            hypotheses = false;
        }
    }

    let na = mdp.n_actions();
    let mut acc = 0.0;
    for s in 0..mdp.n_states() {
        let inner = match q_hat {
            None => {
                // sum_a pi_new A_tau^old - tau KL(new || old)
                let mut term = 0.0;
                for a in 0..na {
                    let p_new = pi_new.prob(s, a);
                    if p_new == 0.0 {
                        continue;
                    }
                    let p_old = pi_old.prob(s, a);
                    if p_old == 0.0 {
                        return Err(Error::KlUndefined { index: a, p: p_new });
                    }
                    let adv = vals_old.q(s, a) - tau * p_old.ln() - vals_old.v[s];
                    term += p_new * adv;
                }
                term - tau * policy_kl(pi_new, pi_old, s)?
            }
            Some(q_hat) => {
                let q_hat_row = &q_hat[s * na..(s + 1) * na];
                let delta = delta_rkl_state(pi_old, pi_new, q_hat_row, tau, s)?;
                let mut err_term = 0.0;
                for a in 0..na {
                    let eps = q_hat_row[a] - vals_old.q(s, a);
                    err_term += eps * (pi_old.prob(s, a) - pi_new.prob(s, a));
                }
                tau * delta + err_term
            }
        };
        acc += d_old.weights[s] * (inner - penalty);
    }
    let bound = acc / (1.0 - mdp.gamma());
    let achieved = eta_new - eta_old;
    Ok(BoundReport {
        bound_value: bound,
        achieved_value: achieved,
        slack: achieved - bound,
        hypotheses_satisfied: hypotheses,
    })
}

/// Outcome of the forward-KL counterexample search: a pair of policies on
/// the one-state two-action MDP (rewards -1 and 1) where the forward KL to
/// the old policy's Boltzmann target strictly drops while every value gets
/// strictly worse.
#[derive(Debug, Clone, Copy)]
pub struct CounterexampleReport {
    pub eps1: f64,
    pub eps2: f64,
    pub delta_fkl: f64,
    /// `Q_tau^old(a) - Q_tau^new(a)` per action; positive means worse.
    pub q_drop: [f64; 2],
    pub eta_old: f64,
    pub eta_new: f64,
    pub certified: bool,
}

/// Soft value of a policy `(p1, 1 - p1)` in the counterexample MDP.
fn counterexample_value(p1: f64, tau: f64, gamma: f64) -> f64 {
    let p2 = 1.0 - p1;
    let mean_r = -p1 + p2;
    let entropy = -(xlnx(p1) + xlnx(p2));
    (mean_r + tau * entropy) / (1.0 - gamma)
}

fn xlnx(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

/// Forward KL of policy `pi` (as `(p1, p2)`) to target `b`:
/// `KL(b || pi)`. With `tau = 0` the target is the point mass on the
/// maximizing action.
fn counterexample_fkl(b: &[f64; 2], pi: &[f64; 2]) -> f64 {
    let mut acc = 0.0;
    for i in 0..2 {
        if b[i] > 0.0 {
            acc += b[i] * (b[i].ln() - pi[i].ln());
        }
    }
    acc
}

/// Searches `(eps1, eps2)` such that, at the given temperature and discount,
/// `pi_old = (eps1, 1 - eps1)` and `pi_new = (1 - eps2, eps2)` satisfy the
/// full certificate: positive forward-KL reduction, strictly lower soft Q at
/// both actions, strictly lower soft performance.
///
/// `eps2` candidates that satisfy the closed value inequality
/// `2 eps2 - 1 + tau H(pi_new) < 1` are paired with `eps1` shrinking
/// geometrically from 1e-2 down to 1e-12. At `tau = 0` the target collapses
/// to a point mass on the good action, forward-KL reduction becomes
/// equivalent to raising that action's probability, and no pair can be
/// certified; the search reports failure rather than pretending otherwise.
pub fn build_fkl_counterexample(tau: f64, gamma: f64) -> Result<(f64, f64, CounterexampleReport)> {
    if tau < 0.0 {
        return Err(Error::TemperatureDomain(tau));
    }
    if !(0.0..1.0).contains(&gamma) || gamma == 0.0 {
        return Err(Error::Invalid(format!("gamma {gamma} not in (0, 1)")));
    }
    let mut eps2_candidates: Vec<f64> = vec![0.01, 0.03, 0.1, 0.2, 0.3, 0.5];
    for k in 2..=12 {
        eps2_candidates.push(1.0 - 10f64.powi(-k));
    }
    for &eps2 in &eps2_candidates {
        // Closed value inequality for eps2.
        let pi_new = [1.0 - eps2, eps2];
        let h_new = -(xlnx(pi_new[0]) + xlnx(pi_new[1]));
        if 2.0 * eps2 - 1.0 + tau * h_new >= 1.0 {
            continue;
        }
        let mut eps1 = 1e-2;
        while eps1 >= 1e-12 {
            if let Some(report) = certify_counterexample(eps1, eps2, tau, gamma) {
                return Ok((eps1, eps2, report));
            }
            eps1 *= 0.1;
        }
    }
    Err(Error::CounterexampleNotFound { tau, gamma })
}

fn certify_counterexample(
    eps1: f64,
    eps2: f64,
    tau: f64,
    gamma: f64,
) -> Option<CounterexampleReport> {
    let pi_old = [eps1, 1.0 - eps1];
    let pi_new = [1.0 - eps2, eps2];
    let v_old = counterexample_value(pi_old[0], tau, gamma);
    let v_new = counterexample_value(pi_new[0], tau, gamma);
    let q_old = [-1.0 + gamma * v_old, 1.0 + gamma * v_old];
    let q_new = [-1.0 + gamma * v_new, 1.0 + gamma * v_new];
    let b = if tau > 0.0 {
        let probs = boltzmann_probs(&q_old, tau).ok()?;
        [probs[0], probs[1]]
    } else {
        // Hard limit: point mass on the maximizing action (a2).
        [0.0, 1.0]
    };
    let delta_fkl = counterexample_fkl(&b, &pi_old) - counterexample_fkl(&b, &pi_new);
    let q_drop = [q_old[0] - q_new[0], q_old[1] - q_new[1]];
    let certified = delta_fkl > 0.0 && q_drop[0] > 0.0 && q_drop[1] > 0.0 && v_new < v_old;
    if !certified {
        return None;
    }
    Some(CounterexampleReport {
        eps1,
        eps2,
        delta_fkl,
        q_drop,
        eta_old: v_old,
        eta_new: v_new,
        certified,
    })
}

/// Required forward-KL reduction in a bandit, and an implication test.
#[derive(Debug, Clone, Copy)]
pub struct FklBoundReport {
    /// Required reduction `max{0, FKL(old) - 0.5 (tau/||q||_inf (RKL(old) +
    /// B^T ln pi_old))^2}`.
    pub required: f64,
    /// Maximum possible reduction `FKL(old || B)`.
    pub max_reduction: f64,
    /// Hypothesis `RKL(old || B) + B^T ln pi_old >= 0`.
    pub hypothesis: bool,
    /// Smallest reverse-KL reduction among sampled policies whose
    /// forward-KL reduction met the requirement (`+inf` if none did).
    pub min_delta_rkl: f64,
    pub n_qualifying: usize,
}

/// Sufficient forward-KL reduction bound in the bandit setting. Computes the
/// required reduction for `(pi_old, q, tau)` and stress-tests the
/// implication "enough FKL reduction gives RKL reduction" over `n_samples`
/// random new policies (mixtures of a uniform-simplex draw and the target,
/// so that both qualifying and non-qualifying policies appear).
pub fn fkl_sufficient_bound(
    pi_old: &[f64],
    q: &[f64],
    tau: f64,
    n_samples: usize,
    rng: &mut RngStream,
) -> Result<FklBoundReport> {
    let (required, max_reduction, hypothesis, b) = fkl_required_reduction(pi_old, q, tau)?;
    let log_b = boltzmann_log_probs(q, tau)?;
    let rkl_old = kl_vs_log_target(pi_old, &log_b)?;
    let mut min_delta_rkl = f64::INFINITY;
    let mut n_qualifying = 0;
    for _ in 0..n_samples {
        let beta = rng.uniform();
        let base = rng.simplex(pi_old.len());
        let pi_new: Vec<f64> = base
            .iter()
            .zip(&b)
            .map(|(&u, &t)| (1.0 - beta) * u + beta * t)
            .collect();
        let delta_fkl = max_reduction - kl_discrete(&b, &pi_new)?;
        if delta_fkl >= required {
            n_qualifying += 1;
            let delta_rkl = rkl_old - kl_vs_log_target(&pi_new, &log_b)?;
            min_delta_rkl = min_delta_rkl.min(delta_rkl);
        }
    }
    Ok(FklBoundReport {
        required,
        max_reduction,
        hypothesis,
        min_delta_rkl,
        n_qualifying,
    })
}

/// Shared bound arithmetic: returns (required reduction, max reduction,
/// hypothesis flag, Boltzmann target).
fn fkl_required_reduction(
    pi_old: &[f64],
    q: &[f64],
    tau: f64,
) -> Result<(f64, f64, bool, Vec<f64>)> {
    let b = boltzmann_probs(q, tau)?;
    let log_b = boltzmann_log_probs(q, tau)?;
    let fkl_old = kl_discrete(&b, pi_old)?;
    let rkl_old = kl_vs_log_target(pi_old, &log_b)?;
    let cross: f64 = b
        .iter()
        .zip(pi_old)
        .filter(|(&bi, _)| bi > 0.0)
        .map(|(&bi, &pi)| bi * pi.ln())
        .sum();
    let hypothesis = rkl_old + cross >= 0.0;
    let q_norm = q.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let squared = if q_norm > 0.0 {
        0.5 * (tau / q_norm * (rkl_old + cross)).powi(2)
    } else {
        f64::INFINITY
    };
    let required = (fkl_old - squared).max(0.0);
    Ok((required, fkl_old, hypothesis, b))
}

/// One row of the relative-gap experiment.
#[derive(Debug, Clone, Copy)]
pub struct GapRow {
    pub lambda: f64,
    pub tau: f64,
    pub seed: u64,
    pub bound: f64,
    pub max_reduction: f64,
    pub relative_gap: f64,
}

/// Median and quartiles of the relative gap for one `(lambda, tau)` cell.
#[derive(Debug, Clone, Copy)]
pub struct GapSummary {
    pub lambda: f64,
    pub tau: f64,
    pub median: f64,
    pub p25: f64,
    pub p75: f64,
}

/// Relative-gap experiment: for each seed draw a random action-value vector,
/// form `pi_old = (1 - lambda) uniform + lambda B_tau q`, and record how far
/// the required forward-KL reduction sits below the maximum possible one.
/// `relative_gap = 1 - required / max_reduction`, in [0, 1].
pub fn relative_gap_experiment(
    n_actions: usize,
    lambdas: &[f64],
    tau_grid: &[f64],
    seeds: u64,
    base_seed: u64,
) -> Result<Vec<GapRow>> {
    let mut rows = Vec::with_capacity(lambdas.len() * tau_grid.len() * seeds as usize);
    let base = RngStream::new(base_seed);
    for seed in 0..seeds {
        let mut rng = base.substream(seed);
        let q: Vec<f64> = (0..n_actions).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
        for &lambda in lambdas {
            for &tau in tau_grid {
                let b = boltzmann_probs(&q, tau)?;
                let uniform = 1.0 / n_actions as f64;
                let pi_old: Vec<f64> = b
                    .iter()
                    .map(|&t| (1.0 - lambda) * uniform + lambda * t)
                    .collect();
                let (required, max_reduction, _, _) = fkl_required_reduction(&pi_old, &q, tau)?;
                let relative_gap = if max_reduction > 0.0 {
                    1.0 - required / max_reduction
                } else {
                    0.0
                };
                rows.push(GapRow {
                    lambda,
                    tau,
                    seed,
                    bound: required,
                    max_reduction,
                    relative_gap,
                });
            }
        }
    }
    Ok(rows)
}

/// Per-(lambda, tau) medians and quartiles over seeds.
pub fn gap_summaries(rows: &[GapRow]) -> Vec<GapSummary> {
    let mut cells: Vec<(f64, f64)> = rows.iter().map(|r| (r.lambda, r.tau)).collect();
    cells.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cells.dedup();
    cells
        .into_iter()
        .map(|(lambda, tau)| {
            let mut gaps: Vec<f64> = rows
                .iter()
                .filter(|r| r.lambda == lambda && r.tau == tau)
                .map(|r| r.relative_gap)
                .collect();
            gaps.sort_by(|a, b| a.partial_cmp(b).unwrap());
            GapSummary {
                lambda,
                tau,
                median: percentile(&gaps, 0.5),
                p25: percentile(&gaps, 0.25),
                p75: percentile(&gaps, 0.75),
            }
        })
        .collect()
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let idx = p * (sorted.len() - 1) as f64;
    let lo = idx.floor() as usize;
    let hi = idx.ceil() as usize;
    let frac = idx - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// Average sufficient forward-KL reduction on an MDP: if the per-state
/// forward KL to `B_tau Q` never increases, the cross-entropy hypothesis
/// holds, and the average reduction meets the required amount, then the soft
/// performance cannot drop. The report's `slack` is `eta_new - eta_old`.
/// With `q_hat` the approximate variant is checked (the error mean enters
/// both the hypothesis and the required amount, as in the proof).
pub fn check_avg_fkl_reduction(
    mdp: &FiniteMdp,
    pi_old: &DiscretePolicy,
    pi_new: &DiscretePolicy,
    tau: f64,
    q_hat: Option<&[f64]>,
) -> Result<BoundReport> {
    if tau <= 0.0 {
        return Err(Error::TemperatureDomain(tau));
    }
    let vals_old = exact_soft_values(mdp, pi_old, tau, SOLVE_TOL)?;
    let eta_old = expected_start_value(mdp, &vals_old.v);
    let vals_new = exact_soft_values(mdp, pi_new, tau, SOLVE_TOL)?;
    let eta_new = expected_start_value(mdp, &vals_new.v);
    let d_new = visitation_distribution(mdp, pi_new)?;
    let na = mdp.n_actions();

    let scores_row = |s: usize| -> &[f64] {
        match q_hat {
            Some(qh) => &qh[s * na..(s + 1) * na],
            None => vals_old.q_row(s),
        }
    };
    let q_norm = (0..mdp.n_states())
        .flat_map(|s| scores_row(s).iter().cloned())
        .fold(0.0f64, |m, x| m.max(x.abs()));

    let mut per_state_ok = true;
    let mut avg_delta_fkl = 0.0;
    let mut avg_fkl_old = 0.0;
    let mut avg_rkl_old = 0.0;
    let mut avg_cross = 0.0;
    let mut eps_bar = 0.0;
    for s in 0..mdp.n_states() {
        let b = boltzmann_probs(scores_row(s), tau)?;
        let log_b = boltzmann_log_probs(scores_row(s), tau)?;
        let fkl_old = kl_discrete(&b, pi_old.row(s))?;
        let fkl_new = kl_discrete(&b, pi_new.row(s))?;
        let delta = fkl_old - fkl_new;
        if delta < 0.0 {
            per_state_ok = false;
        }
        let w = d_new.weights[s];
        avg_delta_fkl += w * delta;
        avg_fkl_old += w * fkl_old;
        avg_rkl_old += w * kl_vs_log_target(pi_old.row(s), &log_b)?;
        avg_cross += w
            * b.iter()
                .zip(pi_old.row(s))
                .filter(|(&bi, _)| bi > 0.0)
                .map(|(&bi, &pi)| bi * pi.ln())
                .sum::<f64>();
        if let Some(qh) = q_hat {
            let mut inner = 0.0;
            for a in 0..na {
                let eps = qh[s * na + a] - vals_old.q(s, a);
                inner += (pi_new.prob(s, a) - pi_old.prob(s, a)) * eps;
            }
            eps_bar += w * inner;
        }
    }
    // Improvement needs tau E[DeltaRKL-hat] >= E[sum_a (pi_new - pi_old) eps],
    // so the error mean enters the squared term divided by tau.
    let cross_term = avg_rkl_old + avg_cross - eps_bar / tau;
    let hypothesis_cross = cross_term >= 0.0;
    let required = if q_norm > 0.0 {
        avg_fkl_old - 0.5 * (tau / q_norm * cross_term).powi(2)
    } else {
        f64::NEG_INFINITY
    };
    let reduction_sufficient = avg_delta_fkl >= required;
    Ok(BoundReport {
        bound_value: eta_old,
        achieved_value: eta_new,
        slack: eta_new - eta_old,
        hypotheses_satisfied: per_state_ok && hypothesis_cross && reduction_sufficient,
    })
}

/// Per-state upper bound of the reverse KL by `kappa(exp(D_inf)) *` forward
/// KL, against the Boltzmann target of `q`. Slack is bound minus achieved.
pub fn check_kappa_bound(pi_new: &[f64], q: &[f64], tau: f64) -> Result<BoundReport> {
    let b = boltzmann_probs(q, tau)?;
    let log_b = boltzmann_log_probs(q, tau)?;
    let rkl = kl_vs_log_target(pi_new, &log_b)?;
    let fkl = kl_discrete(&b, pi_new)?;
    let d_inf = renyi_inf_vs_log(pi_new, &log_b)?;
    if d_inf.abs() < 1e-14 {
        // pi equals the target: both divergences vanish and kappa is not
        // defined at 1.
        return Err(Error::KappaDomain(1.0));
    }
    let bound = kappa_of_exp(d_inf)? * fkl;
    Ok(BoundReport {
        bound_value: bound,
        achieved_value: rkl,
        slack: bound - rkl,
        hypotheses_satisfied: true,
    })
}

/// Intermediate inequality behind the sufficient-reduction results: when the
/// forward KL does not increase,
/// `RKL(new || B) <= ||q||_inf / tau sqrt(2 FKL(new || B)) - B^T ln pi_old`.
/// Slack is bound minus achieved.
pub fn check_intermediate_inequality(
    pi_old: &[f64],
    pi_new: &[f64],
    q: &[f64],
    tau: f64,
) -> Result<BoundReport> {
    let b = boltzmann_probs(q, tau)?;
    let log_b = boltzmann_log_probs(q, tau)?;
    let fkl_new = kl_discrete(&b, pi_new)?;
    let fkl_old = kl_discrete(&b, pi_old)?;
    let rkl_new = kl_vs_log_target(pi_new, &log_b)?;
    let cross: f64 = b
        .iter()
        .zip(pi_old)
        .filter(|(&bi, _)| bi > 0.0)
        .map(|(&bi, &pi)| bi * pi.ln())
        .sum();
    let q_norm = q.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let bound = q_norm / tau * (2.0 * fkl_new).sqrt() - cross;
    Ok(BoundReport {
        bound_value: bound,
        achieved_value: rkl_new,
        slack: bound - rkl_new,
        hypotheses_satisfied: fkl_new <= fkl_old,
    })
}

fn expected_start_value(mdp: &FiniteMdp, v: &[f64]) -> f64 {
    mdp.start_dist().iter().zip(v).map(|(&p, &x)| p * x).sum()
}

/// Flat exact soft action-value table of `policy`; convenience for building
/// perturbed estimates in the verification suites.
pub fn exact_soft_values_for(
    mdp: &FiniteMdp,
    policy: &DiscretePolicy,
    tau: f64,
) -> Result<Vec<f64>> {
    Ok(exact_soft_values(mdp, policy, tau, SOLVE_TOL)?.q)
}

// ---------------------------------------------------------------------------
// Random instance generators shared by the verification suites
// ---------------------------------------------------------------------------

/// Policy with Dirichlet(1, ..., 1) rows (uniform over the simplex).
pub fn random_policy(n_states: usize, n_actions: usize, rng: &mut RngStream) -> DiscretePolicy {
    let mut probs = Vec::with_capacity(n_states * n_actions);
    for _ in 0..n_states {
        probs.extend(rng.simplex(n_actions));
    }
    DiscretePolicy::new(n_states, n_actions, probs).expect("simplex rows are valid")
}

/// Action-value table with independent uniform entries in [-1, 1].
pub fn random_q(n_states: usize, n_actions: usize, rng: &mut RngStream) -> Vec<f64> {
    (0..n_states * n_actions)
        .map(|_| rng.uniform_in(-1.0, 1.0))
        .collect()
}

/// Random dense MDP: Dirichlet transition rows, uniform rewards in [-1, 1],
/// Dirichlet start distribution.
pub fn random_mdp(n_states: usize, n_actions: usize, gamma: f64, rng: &mut RngStream) -> FiniteMdp {
    let mut transition = Vec::with_capacity(n_states * n_actions * n_states);
    for _ in 0..n_states * n_actions {
        transition.extend(rng.simplex(n_states));
    }
    let reward = random_q(n_states, n_actions, rng);
    let rho0 = rng.simplex(n_states);
    FiniteMdp::new(n_states, n_actions, transition, reward, gamma, rho0)
        .expect("valid by construction")
}

/// A policy close to `base`: multiplies each row by `exp(scale * normal)`
/// noise and renormalizes, so per-state KLs scale like `scale^2`.
pub fn near_policy(base: &DiscretePolicy, scale: f64, rng: &mut RngStream) -> DiscretePolicy {
    let mut probs = Vec::with_capacity(base.n_states() * base.n_actions());
    for s in 0..base.n_states() {
        let mut row: Vec<f64> = base
            .row(s)
            .iter()
            .map(|&p| p * (scale * rng.normal()).exp())
            .collect();
        let total: f64 = row.iter().sum();
        for p in &mut row {
            *p /= total;
        }
        probs.extend(row);
    }
    DiscretePolicy::new(base.n_states(), base.n_actions(), probs).expect("rows renormalized")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{soft_performance, switch_stay};
    use approx::assert_abs_diff_eq;

    fn bandit(n_actions: usize) -> FiniteMdp {
        let transition = vec![1.0; n_actions];
        let reward: Vec<f64> = (0..n_actions).map(|a| a as f64 * 0.3 - 0.5).collect();
        FiniteMdp::new(1, n_actions, transition, reward, 0.0, vec![1.0]).unwrap()
    }

    #[test]
    fn spd_identical_policies() {
        let mdp = switch_stay();
        let pi = DiscretePolicy::uniform(2, 2);
        for tau in [0.0, 0.5] {
            let r = check_soft_perf_diff(&mdp, &pi, &pi, tau).unwrap();
            assert_abs_diff_eq!(r.lhs, 0.0, epsilon = 1e-10);
            assert_abs_diff_eq!(r.rhs, 0.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn spd_holds_on_random_pairs() {
        let mdp = switch_stay();
        let mut rng = RngStream::new(101);
        for tau in [0.0, 0.1, 1.0] {
            for _ in 0..100 {
                let pi_old = random_policy(2, 2, &mut rng);
                let pi_new = random_policy(2, 2, &mut rng);
                let r = check_soft_perf_diff(&mdp, &pi_old, &pi_new, tau).unwrap();
                assert!(r.passed, "tau {tau}: gap {}", r.abs_gap);
            }
        }
    }

    #[test]
    fn spd_tau_zero_is_classical_pdl() {
        // At tau = 0 the rhs must reproduce the plain return difference
        // computed independently from unregularized values.
        let mdp = switch_stay();
        let mut rng = RngStream::new(7);
        for _ in 0..20 {
            let pi_old = random_policy(2, 2, &mut rng);
            let pi_new = random_policy(2, 2, &mut rng);
            let r = check_soft_perf_diff(&mdp, &pi_old, &pi_new, 0.0).unwrap();
            let direct = soft_performance(&mdp, &pi_new, 0.0).unwrap()
                - soft_performance(&mdp, &pi_old, 0.0).unwrap();
            assert_abs_diff_eq!(r.rhs, direct, epsilon = 1e-8);
        }
    }

    #[test]
    fn rkl_improvement_identity_and_iff() {
        let mdp = switch_stay();
        let mut rng = RngStream::new(202);
        for tau in [0.1, 1.0] {
            for _ in 0..100 {
                let pi_old = random_policy(2, 2, &mut rng);
                let pi_new = random_policy(2, 2, &mut rng);
                let r = check_rkl_improvement(&mdp, &pi_old, &pi_new, tau).unwrap();
                assert!(r.passed, "tau {tau}: gap {}", r.abs_gap);
                // Sign consistency: improvement iff average reduction >= 0.
                if r.rhs > 1e-10 {
                    assert!(r.lhs > -1e-8);
                }
                if r.rhs < -1e-10 {
                    assert!(r.lhs < 1e-8);
                }
            }
        }
    }

    #[test]
    fn approx_spd_reduces_to_exact_and_holds() {
        let mdp = switch_stay();
        let mut rng = RngStream::new(303);
        let tau = 0.3;
        let pi_old = random_policy(2, 2, &mut rng);
        let pi_new = random_policy(2, 2, &mut rng);
        // q_hat = exact soft Q: eps = 0, identity matches the exact one.
        let vals = exact_soft_values(&mdp, &pi_old, tau, 1e-12).unwrap();
        let exact = check_rkl_improvement(&mdp, &pi_old, &pi_new, tau).unwrap();
        let with_exact_q = check_approx_spd(&mdp, &pi_old, &pi_new, &vals.q, tau).unwrap();
        assert_abs_diff_eq!(with_exact_q.lhs, exact.lhs, epsilon = 1e-9);
        assert!(with_exact_q.passed);
        // Random bounded perturbations.
        for _ in 0..100 {
            let pi_old = random_policy(2, 2, &mut rng);
            let pi_new = random_policy(2, 2, &mut rng);
            let vals = exact_soft_values(&mdp, &pi_old, tau, 1e-12).unwrap();
            let q_hat: Vec<f64> = vals
                .q
                .iter()
                .map(|&q| q + rng.uniform_in(-1.0, 1.0))
                .collect();
            let r = check_approx_spd(&mdp, &pi_old, &pi_new, &q_hat, tau).unwrap();
            assert!(r.passed, "gap {}", r.abs_gap);
        }
    }

    #[test]
    fn dpiold_bound_near_coincident_pairs() {
        let mdp = switch_stay();
        let mut rng = RngStream::new(404);
        let tau = 0.2;
        for _ in 0..200 {
            let pi_old = random_policy(2, 2, &mut rng);
            let pi_new = near_policy(&pi_old, 0.03, &mut rng);
            let alpha = (0..2)
                .map(|s| kl_discrete(pi_new.row(s), pi_old.row(s)).unwrap())
                .fold(0.0f64, f64::max)
                .max(1e-12);
            let r = check_dpiold_bounds(&mdp, &pi_old, &pi_new, tau, alpha, None).unwrap();
            assert!(r.hypotheses_satisfied);
            assert!(r.slack >= -1e-8, "slack {}", r.slack);
            // Approximate variant with perturbed values.
            let vals = exact_soft_values(&mdp, &pi_old, tau, 1e-12).unwrap();
            let q_hat: Vec<f64> = vals
                .q
                .iter()
                .map(|&q| q + rng.uniform_in(-0.5, 0.5))
                .collect();
            let r = check_dpiold_bounds(&mdp, &pi_old, &pi_new, tau, alpha, Some(&q_hat)).unwrap();
            assert!(r.hypotheses_satisfied);
            assert!(r.slack >= -1e-8, "approx slack {}", r.slack);
        }
    }

    #[test]
    fn dpiold_bound_zero_alpha_identical_policies() {
        let mdp = switch_stay();
        let pi = DiscretePolicy::uniform(2, 2);
        let r = check_dpiold_bounds(&mdp, &pi, &pi, 0.5, 0.0, None).unwrap();
        assert!(r.hypotheses_satisfied);
        assert_abs_diff_eq!(r.achieved_value, 0.0, epsilon = 1e-10);
        assert!(r.slack >= -1e-10);
    }

    #[test]
    fn counterexample_certificates() {
        for tau in [0.1, 1.0] {
            let (eps1, eps2, report) = build_fkl_counterexample(tau, 0.9).unwrap();
            assert!(report.certified);
            assert!(report.delta_fkl > 0.0);
            assert!(report.q_drop[0] > 0.0 && report.q_drop[1] > 0.0);
            assert!(report.eta_new < report.eta_old);
            assert!(eps1 > 0.0 && eps2 > 0.0 && eps2 < 1.0);
        }
        let (_, _, report) = build_fkl_counterexample(0.1, 0.5).unwrap();
        assert!(report.certified);
    }

    #[test]
    fn counterexample_impossible_at_tau_zero() {
        // At tau = 0 the target is a point mass on the better action, so a
        // forward-KL reduction is exactly an increase of that action's
        // probability, which raises performance: the certificate cannot
        // exist and the search must say so.
        assert!(matches!(
            build_fkl_counterexample(0.0, 0.9),
            Err(Error::CounterexampleNotFound { .. })
        ));
    }

    #[test]
    fn fkl_bound_at_fixed_point() {
        // pi_old already equals the target: nothing left to reduce, the
        // required reduction is zero, and any qualifying new policy (there
        // is only the target itself) keeps the reverse KL from growing.
        let q = [0.5, -0.2, 0.1, 0.8, -0.6];
        let tau = 1.0;
        let b = boltzmann_probs(&q, tau).unwrap();
        let mut rng = RngStream::new(505);
        let r = fkl_sufficient_bound(&b, &q, tau, 100, &mut rng).unwrap();
        assert_abs_diff_eq!(r.max_reduction, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.required, 0.0, epsilon = 1e-12);
        assert!(r.min_delta_rkl >= -1e-10);
    }

    #[test]
    fn fkl_bound_implication_random_bandits() {
        // The cross-entropy hypothesis mostly holds at small temperatures
        // (peaked targets); the implication is only claimed there.
        let mut rng = RngStream::new(606);
        let mut hypothesis_instances = 0;
        let mut total_qualifying = 0;
        for tau in [0.05, 0.1, 0.5, 1.0] {
            for _ in 0..20 {
                let q: Vec<f64> = (0..5).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
                let pi_old = rng.simplex(5);
                let r = fkl_sufficient_bound(&pi_old, &q, tau, 1000, &mut rng).unwrap();
                assert!(r.required <= r.max_reduction + 1e-12);
                assert!(r.required >= 0.0);
                if r.hypothesis {
                    hypothesis_instances += 1;
                    assert!(
                        r.min_delta_rkl >= -1e-10,
                        "implication violated: {}",
                        r.min_delta_rkl
                    );
                    total_qualifying += r.n_qualifying;
                }
            }
        }
        assert!(hypothesis_instances > 10, "hypothesis never held");
        assert!(total_qualifying > 0, "sampler never produced qualifying policies");
    }

    #[test]
    fn gap_rows_structure_and_range() {
        let lambdas = [0.0, 1.0 / 3.0, 2.0 / 3.0, 0.99];
        let taus = [0.1, 1.0, 10.0];
        let rows = relative_gap_experiment(5, &lambdas, &taus, 30, 9).unwrap();
        assert_eq!(rows.len(), 4 * 3 * 30);
        for r in &rows {
            assert!((0.0..=1.0 + 1e-12).contains(&r.relative_gap), "gap {}", r.relative_gap);
            assert!(r.bound >= 0.0 && r.bound <= r.max_reduction + 1e-12);
        }
        let summaries = gap_summaries(&rows);
        assert_eq!(summaries.len(), 12);
        for s in &summaries {
            assert!(s.p25 <= s.median + 1e-12 && s.median <= s.p75 + 1e-12);
        }
    }

    #[test]
    fn gap_near_fixed_point_approaches_one() {
        // lambda close to 1: pi_old ~ target, both bound terms vanish and the
        // clipped bound hits zero, so the gap saturates at 1.
        let rows = relative_gap_experiment(5, &[0.999999], &[1.0], 10, 3).unwrap();
        for r in &rows {
            assert!(r.relative_gap > 0.99, "gap {}", r.relative_gap);
        }
    }

    #[test]
    fn avg_fkl_reduction_maximal_improves() {
        let mdp = switch_stay();
        let mut rng = RngStream::new(707);
        let tau = 0.5;
        for _ in 0..20 {
            let pi_old = random_policy(2, 2, &mut rng);
            let vals = exact_soft_values(&mdp, &pi_old, tau, 1e-12).unwrap();
            // pi_new = Boltzmann target of old values: maximal reduction.
            let mut probs = Vec::new();
            for s in 0..2 {
                probs.extend(boltzmann_probs(vals.q_row(s), tau).unwrap());
            }
            let pi_new = DiscretePolicy::new(2, 2, probs).unwrap();
            let r = check_avg_fkl_reduction(&mdp, &pi_old, &pi_new, tau, None).unwrap();
            assert!(r.hypotheses_satisfied, "exact greedification should qualify");
            assert!(r.slack >= -1e-10, "improvement violated: {}", r.slack);
        }
    }

    #[test]
    fn avg_fkl_reduction_implication_filtered_pairs() {
        let mdp = switch_stay();
        let mut rng = RngStream::new(808);
        let tau = 0.5;
        let mut n_qualifying = 0;
        for _ in 0..1000 {
            let pi_old = random_policy(2, 2, &mut rng);
            // Mix toward the target so some pairs qualify.
            let vals = exact_soft_values(&mdp, &pi_old, tau, 1e-12).unwrap();
            let beta = rng.uniform();
            let mut probs = Vec::new();
            for s in 0..2 {
                let b = boltzmann_probs(vals.q_row(s), tau).unwrap();
                let u = rng.simplex(2);
                probs.extend(
                    b.iter()
                        .zip(&u)
                        .map(|(&t, &x)| beta * t + (1.0 - beta) * x),
                );
            }
            let pi_new = DiscretePolicy::new(2, 2, probs).unwrap();
            let r = check_avg_fkl_reduction(&mdp, &pi_old, &pi_new, tau, None).unwrap();
            if r.hypotheses_satisfied {
                n_qualifying += 1;
                assert!(r.slack >= -1e-10, "implication violated: {}", r.slack);
            }
        }
        assert!(n_qualifying > 0, "no qualifying pairs sampled");
    }

    #[test]
    fn kappa_bound_random_instances() {
        let mut rng = RngStream::new(909);
        for _ in 0..1000 {
            let q: Vec<f64> = (0..5).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
            let tau = rng.uniform_in(0.1, 2.0);
            let pi = rng.simplex(5);
            let r = check_kappa_bound(&pi, &q, tau).unwrap();
            assert!(r.slack >= -1e-10, "kappa bound violated: {}", r.slack);
        }
    }

    #[test]
    fn kappa_bound_both_sides_vanish_near_target() {
        let q = [0.2, -0.1, 0.4];
        let tau = 0.5;
        let b = boltzmann_probs(&q, tau).unwrap();
        // Slightly perturbed target: both divergences are tiny.
        let mut rng = RngStream::new(17);
        let pi: Vec<f64> = {
            let mut p: Vec<f64> = b.iter().map(|&x| x * (1e-6 * rng.normal()).exp()).collect();
            let t: f64 = p.iter().sum();
            p.iter_mut().for_each(|x| *x /= t);
            p
        };
        let r = check_kappa_bound(&pi, &q, tau).unwrap();
        assert!(r.achieved_value < 1e-9 && r.bound_value < 1e-8);
        // Exactly at the target: degenerate.
        assert!(check_kappa_bound(&b, &q, tau).is_err());
    }

    #[test]
    fn intermediate_inequality_random_instances() {
        let mut rng = RngStream::new(111);
        let mut n_applicable = 0;
        for _ in 0..1000 {
            let q: Vec<f64> = (0..4).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
            let tau = rng.uniform_in(0.2, 2.0);
            let pi_old = rng.simplex(4);
            let pi_new = rng.simplex(4);
            let r = check_intermediate_inequality(&pi_old, &pi_new, &q, tau).unwrap();
            if r.hypotheses_satisfied {
                n_applicable += 1;
                assert!(r.slack >= -1e-8, "intermediate inequality violated: {}", r.slack);
            }
        }
        assert!(n_applicable > 100);
    }

    #[test]
    fn identities_hold_on_random_mdps_and_bandit() {
        let mut rng = RngStream::new(222);
        let b5 = bandit(5);
        for _ in 0..5 {
            let mdp3 = random_mdp(3, 3, 0.9, &mut rng);
            for tau in [0.1, 1.0] {
                for _ in 0..20 {
                    let po3 = random_policy(3, 3, &mut rng);
                    let pn3 = random_policy(3, 3, &mut rng);
                    assert!(check_soft_perf_diff(&mdp3, &po3, &pn3, tau).unwrap().passed);
                    assert!(check_rkl_improvement(&mdp3, &po3, &pn3, tau).unwrap().passed);
                    let po5 = random_policy(1, 5, &mut rng);
                    let pn5 = random_policy(1, 5, &mut rng);
                    assert!(check_soft_perf_diff(&b5, &po5, &pn5, tau).unwrap().passed);
                    assert!(check_rkl_improvement(&b5, &po5, &pn5, tau).unwrap().passed);
                }
            }
        }
    }
}
