//! Finite MDPs and exact quantities computed on them: soft value functions,
//! discounted visitation distributions, performance criteria, advantages,
//! and value-polytope points for the two-state domain.
//!
//! Everything here is deterministic ground truth; the stochastic estimators
//! elsewhere in the crate are tested against these computations.

pub mod maze;

use crate::error::{Error, Result};
use crate::policy::SquashedGaussianPolicy;
use crate::target::ClenshawCurtis;

use maze::{MazeLayout, DIRS};

const PROB_TOL: f64 = 1e-12;
/// Above this size, linear systems are solved by fixed-point sweeps instead
/// of dense elimination.
const DIRECT_SOLVE_LIMIT: usize = 64;
const MAX_SWEEPS: usize = 2_000_000;

/// Tabular MDP: dense transition tensor, dense rewards, discount, start
/// distribution.
#[derive(Debug, Clone)]
pub struct FiniteMdp {
    n_states: usize,
    n_actions: usize,
    /// P[s][a][s'] flattened state-major.
    transition: Vec<f64>,
    /// r[s][a] flattened.
    reward: Vec<f64>,
    gamma: f64,
    start_dist: Vec<f64>,
}

impl FiniteMdp {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transition: Vec<f64>,
        reward: Vec<f64>,
        gamma: f64,
        start_dist: Vec<f64>,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::Invalid("empty state or action space".into()));
        }
        if transition.len() != n_states * n_actions * n_states {
            return Err(Error::Invalid("transition tensor has wrong size".into()));
        }
        if reward.len() != n_states * n_actions {
            return Err(Error::Invalid("reward tensor has wrong size".into()));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::Invalid(format!("gamma {gamma} not in [0, 1)")));
        }
        if start_dist.len() != n_states {
            return Err(Error::Invalid("start distribution has wrong size".into()));
        }
        let mdp = Self {
            n_states,
            n_actions,
            transition,
            reward,
            gamma,
            start_dist,
        };
        for s in 0..n_states {
            for a in 0..n_actions {
                let row = mdp.transition_row(s, a);
                if row.iter().any(|&p| p < 0.0) {
                    return Err(Error::Invalid(format!(
                        "negative transition probability at ({s}, {a})"
                    )));
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > PROB_TOL {
                    return Err(Error::Invalid(format!(
                        "transition row ({s}, {a}) sums to {sum}"
                    )));
                }
            }
        }
        if mdp.start_dist.iter().any(|&p| p < 0.0)
            || (mdp.start_dist.iter().sum::<f64>() - 1.0).abs() > PROB_TOL
        {
            return Err(Error::Invalid("start distribution is not a distribution".into()));
        }
        Ok(mdp)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn start_dist(&self) -> &[f64] {
        &self.start_dist
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.n_actions + a]
    }

    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        let base = (s * self.n_actions + a) * self.n_states;
        &self.transition[base..base + self.n_states]
    }

    pub fn max_abs_reward(&self) -> f64 {
        self.reward.iter().fold(0.0, |m, r| m.max(r.abs()))
    }

    /// Plain-text form readable by [`FiniteMdp::parse`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("states {}\n", self.n_states));
        out.push_str(&format!("actions {}\n", self.n_actions));
        out.push_str(&format!("gamma {}\n", self.gamma));
        out.push_str("rho0");
        for p in &self.start_dist {
            out.push_str(&format!(" {p}"));
        }
        out.push('\n');
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                out.push_str(&format!("transition {s} {a}"));
                for p in self.transition_row(s, a) {
                    out.push_str(&format!(" {p}"));
                }
                out.push('\n');
            }
        }
        for s in 0..self.n_states {
            out.push_str(&format!("reward {s}"));
            for a in 0..self.n_actions {
                out.push_str(&format!(" {}", self.reward(s, a)));
            }
            out.push('\n');
        }
        out
    }

    /// Parses the plain-text MDP format:
    ///
    /// ```text
    /// states 2
    /// actions 2
    /// gamma 0.9
    /// rho0 1 0
    /// transition 0 0  1 0
    /// ...
    /// reward 0  1 -1
    /// ...
    /// ```
    ///
    /// Lines starting with `#` are comments. All transition rows and reward
    /// rows must be present.
    pub fn parse(text: &str) -> Result<Self> {
        let mut n_states = None;
        let mut n_actions = None;
        let mut gamma = None;
        let mut rho0: Option<Vec<f64>> = None;
        let mut transition: Vec<Option<Vec<f64>>> = Vec::new();
        let mut reward: Vec<Option<Vec<f64>>> = Vec::new();

        let parse_f64 = |tok: &str| -> Result<f64> {
            tok.parse::<f64>()
                .map_err(|_| Error::Parse(format!("bad number {tok:?}")))
        };
        let parse_usize = |tok: &str| -> Result<usize> {
            tok.parse::<usize>()
                .map_err(|_| Error::Parse(format!("bad index {tok:?}")))
        };

        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut toks = line.split_whitespace();
            let key = toks.next().unwrap();
            match key {
                "states" => {
                    let n = parse_usize(toks.next().ok_or_else(|| miss("states"))?)?;
                    n_states = Some(n);
                }
                "actions" => {
                    let n = parse_usize(toks.next().ok_or_else(|| miss("actions"))?)?;
                    n_actions = Some(n);
                }
                "gamma" => {
                    gamma = Some(parse_f64(toks.next().ok_or_else(|| miss("gamma"))?)?);
                }
                "rho0" => {
                    rho0 = Some(toks.map(parse_f64).collect::<Result<Vec<f64>>>()?);
                }
                "transition" => {
                    let (ns, na) = dims(n_states, n_actions)?;
                    let s = parse_usize(toks.next().ok_or_else(|| miss("transition state"))?)?;
                    let a = parse_usize(toks.next().ok_or_else(|| miss("transition action"))?)?;
                    if s >= ns || a >= na {
                        return Err(Error::Parse(format!("transition index ({s}, {a}) out of range")));
                    }
                    if transition.is_empty() {
                        transition = vec![None; ns * na];
                    }
                    let row = toks.map(parse_f64).collect::<Result<Vec<f64>>>()?;
                    if row.len() != ns {
                        return Err(Error::Parse(format!(
                            "transition row ({s}, {a}) has {} entries, expected {ns}",
                            row.len()
                        )));
                    }
                    transition[s * na + a] = Some(row);
                }
                "reward" => {
                    let (ns, na) = dims(n_states, n_actions)?;
                    let s = parse_usize(toks.next().ok_or_else(|| miss("reward state"))?)?;
                    if s >= ns {
                        return Err(Error::Parse(format!("reward state {s} out of range")));
                    }
                    if reward.is_empty() {
                        reward = vec![None; ns];
                    }
                    let row = toks.map(parse_f64).collect::<Result<Vec<f64>>>()?;
                    if row.len() != na {
                        return Err(Error::Parse(format!(
                            "reward row {s} has {} entries, expected {na}",
                            row.len()
                        )));
                    }
                    reward[s] = Some(row);
                }
                other => return Err(Error::Parse(format!("unknown key {other:?}"))),
            }
        }

        let (ns, na) = dims(n_states, n_actions)?;
        let gamma = gamma.ok_or_else(|| miss("gamma"))?;
        let rho0 = rho0.ok_or_else(|| miss("rho0"))?;
        if rho0.len() != ns {
            return Err(Error::Parse("rho0 has wrong length".into()));
        }
        let mut p = Vec::with_capacity(ns * na * ns);
        for (i, row) in transition.iter().enumerate() {
            let row = row
                .as_ref()
                .ok_or_else(|| Error::Parse(format!("missing transition row {}", i)))?;
            p.extend_from_slice(row);
        }
        if transition.is_empty() {
            return Err(Error::Parse("no transition rows".into()));
        }
        let mut r = Vec::with_capacity(ns * na);
        for (s, row) in reward.iter().enumerate() {
            let row = row
                .as_ref()
                .ok_or_else(|| Error::Parse(format!("missing reward row {s}")))?;
            r.extend_from_slice(row);
        }
        if reward.is_empty() {
            return Err(Error::Parse("no reward rows".into()));
        }
        Self::new(ns, na, p, r, gamma, rho0)
    }
}

fn miss(what: &str) -> Error {
    Error::Parse(format!("missing {what}"))
}

fn dims(n_states: Option<usize>, n_actions: Option<usize>) -> Result<(usize, usize)> {
    match (n_states, n_actions) {
        (Some(s), Some(a)) => Ok((s, a)),
        _ => Err(Error::Parse("states/actions must come first".into())),
    }
}

/// Row-stochastic action-probability table.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretePolicy {
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl DiscretePolicy {
    pub fn new(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != n_states * n_actions {
            return Err(Error::Invalid("policy table has wrong size".into()));
        }
        for s in 0..n_states {
            let row = &probs[s * n_actions..(s + 1) * n_actions];
            if row.iter().any(|&p| p < 0.0) {
                return Err(Error::Invalid(format!("negative probability in state {s}")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > PROB_TOL {
                return Err(Error::Invalid(format!("policy row {s} sums to {sum}")));
            }
        }
        Ok(Self {
            n_states,
            n_actions,
            probs,
        })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            probs: vec![1.0 / n_actions as f64; n_states * n_actions],
        }
    }

    /// Point mass on one action per state.
    pub fn deterministic(n_states: usize, n_actions: usize, actions: &[usize]) -> Self {
        let mut probs = vec![0.0; n_states * n_actions];
        for (s, &a) in actions.iter().enumerate() {
            probs[s * n_actions + a] = 1.0;
        }
        Self {
            n_states,
            n_actions,
            probs,
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.n_actions + a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.n_actions..(s + 1) * self.n_actions]
    }

    /// Entropy of the action distribution at `s` (zero-probability terms
    /// contribute zero).
    pub fn entropy(&self, s: usize) -> f64 {
        -self
            .row(s)
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| p * p.ln())
            .sum::<f64>()
    }

    pub fn greedy_actions(&self) -> Vec<usize> {
        (0..self.n_states)
            .map(|s| {
                self.row(s)
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .map(|(i, _)| i)
                    .unwrap()
            })
            .collect()
    }
}

/// Soft state- and action-values at a given temperature, valid to `tol`.
#[derive(Debug, Clone)]
pub struct SoftValues {
    /// q[s][a] flattened.
    pub q: Vec<f64>,
    pub v: Vec<f64>,
    pub tau: f64,
    pub tol: f64,
    n_actions: usize,
}

impl SoftValues {
    pub fn q(&self, s: usize, a: usize) -> f64 {
        self.q[s * self.n_actions + a]
    }

    pub fn q_row(&self, s: usize) -> &[f64] {
        &self.q[s * self.n_actions..(s + 1) * self.n_actions]
    }

    /// Global sup norm of the action-values.
    pub fn q_sup_norm(&self) -> f64 {
        self.q.iter().fold(0.0, |m, q| m.max(q.abs()))
    }
}

/// Normalized discounted state-visitation weights.
#[derive(Debug, Clone)]
pub struct StateDistribution {
    pub weights: Vec<f64>,
}

/// Entropy-augmented expected reward of `policy` at `s`:
/// `sum_a pi(a|s) (r(s,a) - tau ln pi(a|s))`.
fn soft_reward(mdp: &FiniteMdp, policy: &DiscretePolicy, tau: f64, s: usize) -> f64 {
    policy
        .row(s)
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > 0.0)
        .map(|(a, &p)| p * (mdp.reward(s, a) - tau * p.ln()))
        .sum()
}

fn policy_transition(mdp: &FiniteMdp, policy: &DiscretePolicy) -> Vec<f64> {
    let n = mdp.n_states();
    let mut p_pi = vec![0.0; n * n];
    for s in 0..n {
        for a in 0..mdp.n_actions() {
            let pa = policy.prob(s, a);
            if pa == 0.0 {
                continue;
            }
            for (s2, &p) in mdp.transition_row(s, a).iter().enumerate() {
                p_pi[s * n + s2] += pa * p;
            }
        }
    }
    p_pi
}

fn q_from_v(mdp: &FiniteMdp, v: &[f64]) -> Vec<f64> {
    let mut q = vec![0.0; mdp.n_states() * mdp.n_actions()];
    for s in 0..mdp.n_states() {
        for a in 0..mdp.n_actions() {
            let exp_v: f64 = mdp
                .transition_row(s, a)
                .iter()
                .zip(v)
                .map(|(&p, &vs)| p * vs)
                .sum();
            q[s * mdp.n_actions() + a] = mdp.reward(s, a) + mdp.gamma() * exp_v;
        }
    }
    q
}

fn v_from_q(mdp: &FiniteMdp, policy: &DiscretePolicy, tau: f64, q: &[f64]) -> Vec<f64> {
    (0..mdp.n_states())
        .map(|s| {
            policy
                .row(s)
                .iter()
                .enumerate()
                .filter(|(_, &p)| p > 0.0)
                .map(|(a, &p)| p * (q[s * mdp.n_actions() + a] - tau * p.ln()))
                .sum()
        })
        .collect()
}

/// Fixed point of the soft Bellman operator for `policy`: a direct linear
/// solve for small MDPs, iterative sweeps otherwise.
pub fn exact_soft_values(
    mdp: &FiniteMdp,
    policy: &DiscretePolicy,
    tau: f64,
    tol: f64,
) -> Result<SoftValues> {
    check_policy_shape(mdp, policy)?;
    if tol <= 0.0 {
        return Err(Error::Invalid(format!("tolerance {tol} must be positive")));
    }
    if tau < 0.0 {
        return Err(Error::Invalid(format!("tau {tau} must be nonnegative")));
    }
    let n = mdp.n_states();
    let v = if n <= DIRECT_SOLVE_LIMIT {
        // Solve (I - gamma P_pi) v = r_pi^tau.
        let p_pi = policy_transition(mdp, policy);
        let mut a = vec![0.0; n * n];
        for s in 0..n {
            for s2 in 0..n {
                a[s * n + s2] = if s == s2 { 1.0 } else { 0.0 } - mdp.gamma() * p_pi[s * n + s2];
            }
        }
        let b: Vec<f64> = (0..n).map(|s| soft_reward(mdp, policy, tau, s)).collect();
        solve_dense(&a, &b)?
    } else {
        let r_pi: Vec<f64> = (0..n).map(|s| soft_reward(mdp, policy, tau, s)).collect();
        let p_pi = policy_transition(mdp, policy);
        let mut v = vec![0.0; n];
        let mut converged = false;
        let mut residual = f64::INFINITY;
        for _ in 0..MAX_SWEEPS {
            let mut next = r_pi.clone();
            for s in 0..n {
                let mut acc = 0.0;
                for s2 in 0..n {
                    acc += p_pi[s * n + s2] * v[s2];
                }
                next[s] += mdp.gamma() * acc;
            }
            residual = next
                .iter()
                .zip(&v)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            v = next;
            if residual < tol {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::EvaluationDiverged {
                residual,
                iterations: MAX_SWEEPS,
            });
        }
        v
    };
    let q = q_from_v(mdp, &v);
    let v = v_from_q(mdp, policy, tau, &q);
    Ok(SoftValues {
        q,
        v,
        tau,
        tol,
        n_actions: mdp.n_actions(),
    })
}

/// Soft policy evaluation with the relative stopping rule used for the maze:
/// stop once the relative change between successive Q sweeps stays below
/// `rel_tol` for `consecutive` iterations.
pub fn soft_values_relative_stop(
    mdp: &FiniteMdp,
    policy: &DiscretePolicy,
    tau: f64,
    rel_tol: f64,
    consecutive: usize,
) -> Result<SoftValues> {
    check_policy_shape(mdp, policy)?;
    let mut q = vec![0.0; mdp.n_states() * mdp.n_actions()];
    let mut streak = 0;
    for _ in 0..MAX_SWEEPS {
        let v = v_from_q(mdp, policy, tau, &q);
        let next = q_from_v(mdp, &v);
        let max_q = q.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let delta = next
            .iter()
            .zip(&q)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let rel = delta / (max_q + 1e-30);
        q = next;
        streak = if rel < rel_tol { streak + 1 } else { 0 };
        if streak >= consecutive {
            let v = v_from_q(mdp, policy, tau, &q);
            return Ok(SoftValues {
                q,
                v,
                tau,
                tol: rel_tol,
                n_actions: mdp.n_actions(),
            });
        }
    }
    Err(Error::EvaluationDiverged {
        residual: f64::NAN,
        iterations: MAX_SWEEPS,
    })
}

/// Normalized discounted visitation distribution
/// `d(s) = (1 - gamma) sum_t gamma^t P(S_t = s)`, from the linear system
/// `d = (1 - gamma) rho0 + gamma P_pi^T d`.
pub fn visitation_distribution(mdp: &FiniteMdp, policy: &DiscretePolicy) -> Result<StateDistribution> {
    check_policy_shape(mdp, policy)?;
    let n = mdp.n_states();
    let p_pi = policy_transition(mdp, policy);
    let b: Vec<f64> = mdp.start_dist().iter().map(|&p| (1.0 - mdp.gamma()) * p).collect();
    let mut d = if n <= DIRECT_SOLVE_LIMIT {
        // (I - gamma P_pi^T) d = (1 - gamma) rho0
        let mut a = vec![0.0; n * n];
        for s in 0..n {
            for s2 in 0..n {
                a[s * n + s2] = if s == s2 { 1.0 } else { 0.0 } - mdp.gamma() * p_pi[s2 * n + s];
            }
        }
        solve_dense(&a, &b)?
    } else {
        let mut d = b.clone();
        let mut converged = false;
        for _ in 0..MAX_SWEEPS {
            let mut next = b.clone();
            for s2 in 0..n {
                if d[s2] == 0.0 {
                    continue;
                }
                for s in 0..n {
                    next[s] += mdp.gamma() * p_pi[s2 * n + s] * d[s2];
                }
            }
            let delta = next
                .iter()
                .zip(&d)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            d = next;
            if delta < 1e-14 {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::EvaluationDiverged {
                residual: f64::NAN,
                iterations: MAX_SWEEPS,
            });
        }
        d
    };
    for w in &mut d {
        if *w < 0.0 {
            *w = 0.0;
        }
    }
    let total: f64 = d.iter().sum();
    for w in &mut d {
        *w /= total;
    }
    Ok(StateDistribution { weights: d })
}

/// Soft performance criterion `eta_tau(pi) = E_{rho0}[V_tau(S)]`. With
/// `tau = 0` this is the unregularized performance criterion.
pub fn soft_performance(mdp: &FiniteMdp, policy: &DiscretePolicy, tau: f64) -> Result<f64> {
    let values = exact_soft_values(mdp, policy, tau, 1e-10)?;
    Ok(mdp
        .start_dist()
        .iter()
        .zip(&values.v)
        .map(|(&p, &v)| p * v)
        .sum())
}

/// Soft advantage `A_tau(s, a) = Q_tau(s, a) - tau ln pi(a|s) - V_tau(s)`;
/// averages to zero under the policy.
pub fn soft_advantage(
    values: &SoftValues,
    policy: &DiscretePolicy,
    s: usize,
    a: usize,
) -> Result<f64> {
    let p = policy.prob(s, a);
    let log_term = if values.tau > 0.0 {
        if p == 0.0 {
            return Err(Error::LogOfZero { state: s, action: a });
        }
        values.tau * p.ln()
    } else {
        0.0
    };
    Ok(values.q(s, a) - log_term - values.v[s])
}

/// Hard value iteration. Returns optimal values and a greedy policy; used as
/// an independent oracle for the training code.
pub fn value_iteration(mdp: &FiniteMdp, tol: f64) -> Result<(Vec<f64>, DiscretePolicy)> {
    let n = mdp.n_states();
    let mut v = vec![0.0; n];
    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let q = q_from_v(mdp, &v);
        let next: Vec<f64> = (0..n)
            .map(|s| {
                (0..mdp.n_actions())
                    .map(|a| q[s * mdp.n_actions() + a])
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
        let delta = next
            .iter()
            .zip(&v)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        v = next;
        if delta < tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::EvaluationDiverged {
            residual: f64::NAN,
            iterations: MAX_SWEEPS,
        });
    }
    let q = q_from_v(mdp, &v);
    let greedy: Vec<usize> = (0..n)
        .map(|s| {
            (0..mdp.n_actions())
                .max_by(|&a, &b| {
                    q[s * mdp.n_actions() + a]
                        .partial_cmp(&q[s * mdp.n_actions() + b])
                        .unwrap()
                })
                .unwrap()
        })
        .collect();
    Ok((v, DiscretePolicy::deterministic(n, mdp.n_actions(), &greedy)))
}

fn check_policy_shape(mdp: &FiniteMdp, policy: &DiscretePolicy) -> Result<()> {
    if policy.n_states() != mdp.n_states() || policy.n_actions() != mdp.n_actions() {
        return Err(Error::Invalid("policy shape does not match MDP".into()));
    }
    Ok(())
}

/// A finite MDP exposed through a continuous action space: `[-1, 1]` is
/// partitioned into one interval per discrete action.
#[derive(Debug, Clone)]
pub struct ContinuousActionEncoding {
    base: FiniteMdp,
    /// `n_actions + 1` strictly increasing boundaries from -1 to 1. Interval
    /// `i` is `(b_i, b_{i+1}]`, with the first one closed on the left.
    boundaries: Vec<f64>,
}

impl ContinuousActionEncoding {
    pub fn new(base: FiniteMdp, boundaries: Vec<f64>) -> Result<Self> {
        if boundaries.len() != base.n_actions() + 1 {
            return Err(Error::Invalid("need n_actions + 1 boundaries".into()));
        }
        if boundaries[0] != -1.0 || *boundaries.last().unwrap() != 1.0 {
            return Err(Error::Invalid("intervals must cover [-1, 1] exactly".into()));
        }
        if boundaries.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Invalid("boundaries must be strictly increasing".into()));
        }
        Ok(Self { base, boundaries })
    }

    pub fn base(&self) -> &FiniteMdp {
        &self.base
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    pub fn interval(&self, action: usize) -> (f64, f64) {
        (self.boundaries[action], self.boundaries[action + 1])
    }

    /// Discrete action whose interval contains `a`.
    pub fn action_of(&self, a: f64) -> usize {
        for i in 0..self.base.n_actions() {
            if a <= self.boundaries[i + 1] {
                return i;
            }
        }
        self.base.n_actions() - 1
    }

    /// Converts a per-state squashed-Gaussian policy into a discrete policy
    /// by integrating its density over each action interval with `rule`.
    /// Fails if the density does not integrate to 1 within 1e-3.
    pub fn discretize(
        &self,
        policy: &SquashedGaussianPolicy,
        rule: &ClenshawCurtis,
    ) -> Result<DiscretePolicy> {
        let n = self.base.n_states();
        let na = self.base.n_actions();
        let mut masses = Vec::with_capacity(n);
        for s in 0..n {
            let mut mass = vec![0.0; na];
            for (&x, &w) in rule.nodes().iter().zip(rule.weights()) {
                mass[self.action_of(x)] += w * policy.density(s, x);
            }
            masses.push(mass);
        }
        self.discretize_masses(&masses)
    }

    /// Builds the discrete policy from per-state interval masses (one vector
    /// per state, one entry per action). Each row must total 1 within 1e-3 —
    /// the quadrature sanity check — and is renormalized exactly.
    pub fn discretize_masses(&self, masses: &[Vec<f64>]) -> Result<DiscretePolicy> {
        let n = self.base.n_states();
        let na = self.base.n_actions();
        if masses.len() != n {
            return Err(Error::Invalid("need one mass row per state".into()));
        }
        let mut probs = vec![0.0; n * na];
        for (s, mass) in masses.iter().enumerate() {
            let total: f64 = mass.iter().sum();
            if (total - 1.0).abs() > 1e-3 {
                return Err(Error::IntegrationFailure(total));
            }
            for (a, m) in mass.iter().enumerate() {
                probs[s * na + a] = (m / total).clamp(0.0, 1.0);
            }
            let row_sum: f64 = probs[s * na..(s + 1) * na].iter().sum();
            for p in &mut probs[s * na..(s + 1) * na] {
                *p /= row_sum;
            }
        }
        DiscretePolicy::new(n, na, probs)
    }
}

/// Unregularized value vector of the discretized policy:
/// `(I - gamma P_pi)^{-1} r_pi`.
pub fn polytope_point(
    enc: &ContinuousActionEncoding,
    policy: &SquashedGaussianPolicy,
    rule: &ClenshawCurtis,
) -> Result<Vec<f64>> {
    let discrete = enc.discretize(policy, rule)?;
    let values = exact_soft_values(enc.base(), &discrete, 0.0, 1e-12)?;
    Ok(values.v)
}

/// The two-state Switch-Stay domain. Action 0 stays, action 1 switches;
/// staying pays 1 in state 0 and 2 in state 1, switching pays -1 from state 0
/// and 0 from state 1. `gamma = 0.9`, starts in state 0.
pub fn switch_stay() -> FiniteMdp {
    let transition = vec![
        // s0 stay -> s0, s0 switch -> s1
        1.0, 0.0, 0.0, 1.0, //
        // s1 stay -> s1, s1 switch -> s0
        0.0, 1.0, 1.0, 0.0,
    ];
    let reward = vec![1.0, -1.0, 2.0, 0.0];
    FiniteMdp::new(2, 2, transition, reward, 0.9, vec![1.0, 0.0]).expect("valid by construction")
}

/// Switch-Stay with actions in `[-1, 1]`: `a <= 0` stays, `a > 0` switches.
pub fn switch_stay_continuous() -> ContinuousActionEncoding {
    ContinuousActionEncoding::new(switch_stay(), vec![-1.0, 0.0, 1.0]).expect("valid")
}

/// Continuous two-mode bandit on `[-1, 1]` with a taller mode at `a = 0.5`.
#[derive(Debug, Clone, Copy, Default)]
pub struct BimodalBandit;

impl BimodalBandit {
    pub fn value(&self, a: f64) -> f64 {
        let z1 = (2.0 * a + 1.0) / 0.2;
        let z2 = (2.0 * a - 1.0) / 0.2;
        (-0.5 * z1 * z1).exp() + 1.5 * (-0.5 * z2 * z2).exp()
    }

    pub fn deriv(&self, a: f64) -> f64 {
        let z1 = (2.0 * a + 1.0) / 0.2;
        let z2 = (2.0 * a - 1.0) / 0.2;
        (-0.5 * z1 * z1).exp() * (-z1 * 10.0) + 1.5 * (-0.5 * z2 * z2).exp() * (-z2 * 10.0)
    }

    /// Global maximizer of the reward (the taller mode).
    pub fn argmax(&self) -> f64 {
        0.5
    }
}

pub fn bimodal_bandit() -> BimodalBandit {
    BimodalBandit
}

/// Tabular maze MDP. Moving into a wall leaves the position unchanged.
/// Landing anywhere but the goal pays `-0.1 / n_cells`; landing on the goal
/// pays 1. The goal is absorbing with zero reward.
pub fn discrete_maze(
    layout: &MazeLayout,
    start: (usize, usize),
    goal: (usize, usize),
    gamma: f64,
) -> FiniteMdp {
    let n = layout.n_cells();
    let na = 4;
    let goal_idx = layout.index(goal.0, goal.1);
    let step_reward = -0.1 / n as f64;
    let mut transition = vec![0.0; n * na * n];
    let mut reward = vec![0.0; n * na];
    for y in 0..layout.height() {
        for x in 0..layout.width() {
            let s = layout.index(x, y);
            for (a, &dir) in DIRS.iter().enumerate() {
                let ns = if s == goal_idx {
                    goal_idx
                } else {
                    match layout.neighbor(x, y, dir) {
                        Some((nx, ny)) => layout.index(nx, ny),
                        None => s,
                    }
                };
                transition[(s * na + a) * n + ns] = 1.0;
                reward[s * na + a] = if s == goal_idx {
                    0.0
                } else if ns == goal_idx {
                    1.0
                } else {
                    step_reward
                };
            }
        }
    }
    let mut rho0 = vec![0.0; n];
    rho0[layout.index(start.0, start.1)] = 1.0;
    FiniteMdp::new(n, na, transition, reward, gamma, rho0).expect("valid by construction")
}

/// Dense linear solve by Gaussian elimination with partial pivoting.
/// `a` is row-major `n x n`.
pub(crate) fn solve_dense(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    let n = b.len();
    debug_assert_eq!(a.len(), n * n);
    let mut m = a.to_vec();
    let mut x = b.to_vec();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[i * n + col].abs().partial_cmp(&m[j * n + col].abs()).unwrap())
            .unwrap();
        if m[pivot * n + col].abs() < 1e-300 {
            return Err(Error::Invalid("singular linear system".into()));
        }
        if pivot != col {
            for k in 0..n {
                m.swap(col * n + k, pivot * n + k);
            }
            x.swap(col, pivot);
        }
        let diag = m[col * n + col];
        for row in col + 1..n {
            let factor = m[row * n + col] / diag;
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                m[row * n + k] -= factor * m[col * n + k];
            }
            x[row] -= factor * x[col];
        }
    }
    for col in (0..n).rev() {
        x[col] /= m[col * n + col];
        for row in 0..col {
            x[row] -= m[row * n + col] * x[col];
        }
    }
    Ok(x)
}
