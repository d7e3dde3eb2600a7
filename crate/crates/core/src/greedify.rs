//! The four KL greedification objectives and their gradient estimators.
//!
//! For a state's action-value scores `q` and temperature `tau`, the losses
//! (per state) are:
//!
//!   reverse KL       KL(pi || B_tau q)
//!   forward KL       KL(B_tau q || pi)
//!   hard reverse KL  -E_pi[q]                (the tau -> 0 limit, rescaled)
//!   hard forward KL  -mean over maximizers of ln pi(a*)
//!
//! Gradients come in four flavours: exact all-actions sums (or their
//! quadrature analogue for continuous actions), likelihood-ratio estimates
//! from sampled actions with an optional value baseline, reparameterized
//! pathwise estimates for the squashed Gaussian, and a weighted
//! importance-sampling estimate for the forward KL so actions never have to
//! be drawn from the Boltzmann target itself.

use crate::error::{Error, Result};
use crate::policy::{SoftmaxPolicy, SquashedGaussianPolicy};
use crate::rng::RngStream;
use crate::target::{argmax_set, boltzmann_probs, log_partition, ActionScores, ClenshawCurtis};

/// Direction and regularization of the greedification objective. Soft
/// variants carry a strictly positive temperature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KlVariant {
    Rkl { tau: f64 },
    Fkl { tau: f64 },
    HardRkl,
    HardFkl,
}

impl KlVariant {
    pub fn soft_rkl(tau: f64) -> Result<Self> {
        if tau <= 0.0 {
            return Err(Error::TemperatureDomain(tau));
        }
        Ok(KlVariant::Rkl { tau })
    }

    pub fn soft_fkl(tau: f64) -> Result<Self> {
        if tau <= 0.0 {
            return Err(Error::TemperatureDomain(tau));
        }
        Ok(KlVariant::Fkl { tau })
    }

    /// Maps a direction name and a temperature to a variant; `tau = 0`
    /// selects the hard variant.
    pub fn from_name_tau(name: &str, tau: f64) -> Result<Self> {
        if tau < 0.0 {
            return Err(Error::TemperatureDomain(tau));
        }
        match (name, tau == 0.0) {
            ("rkl", true) => Ok(KlVariant::HardRkl),
            ("rkl", false) => Ok(KlVariant::Rkl { tau }),
            ("fkl", true) => Ok(KlVariant::HardFkl),
            ("fkl", false) => Ok(KlVariant::Fkl { tau }),
            _ => Err(Error::Invalid(format!("unknown kl direction {name:?}"))),
        }
    }

    pub fn tau(&self) -> f64 {
        match self {
            KlVariant::Rkl { tau } | KlVariant::Fkl { tau } => *tau,
            KlVariant::HardRkl | KlVariant::HardFkl => 0.0,
        }
    }

    pub fn is_forward(&self) -> bool {
        matches!(self, KlVariant::Fkl { .. } | KlVariant::HardFkl)
    }

    pub fn is_reverse(&self) -> bool {
        !self.is_forward()
    }

    pub fn name(&self) -> &'static str {
        match self {
            KlVariant::Rkl { .. } => "rkl",
            KlVariant::Fkl { .. } => "fkl",
            KlVariant::HardRkl => "hard-rkl",
            KlVariant::HardFkl => "hard-fkl",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimator {
    AllActions,
    Sampled(usize),
    Reparam(usize),
    Wis(usize),
}

/// A gradient of the greedification loss for one state, aligned
/// index-for-index with the policy's flat parameter vector.
#[derive(Debug, Clone)]
pub struct GradientEstimate {
    pub partials: Vec<f64>,
    pub estimator: Estimator,
    pub state: usize,
}

impl GradientEstimate {
    fn checked(partials: Vec<f64>, estimator: Estimator, state: usize) -> Result<Self> {
        if let Some(i) = partials.iter().position(|x| !x.is_finite()) {
            return Err(Error::NanGradient(i));
        }
        Ok(Self {
            partials,
            estimator,
            state,
        })
    }
}

// ---------------------------------------------------------------------------
// Discrete actions (tabular softmax)
// ---------------------------------------------------------------------------

/// Scalar greedification loss at state `s` for a softmax policy against
/// action-value scores `q`.
pub fn loss(variant: KlVariant, policy: &SoftmaxPolicy, q: &[f64], s: usize) -> f64 {
    let lp = policy.log_probs(s);
    match variant {
        KlVariant::Rkl { tau } => {
            let lz = log_partition(q, tau).expect("tau > 0 by construction");
            lp.iter()
                .zip(q)
                .map(|(&l, &qa)| l.exp() * (l - qa / tau))
                .sum::<f64>()
                + lz
        }
        KlVariant::Fkl { tau } => {
            let b = boltzmann_probs(q, tau).expect("tau > 0 by construction");
            b.iter()
                .zip(&lp)
                .filter(|(&ba, _)| ba > 0.0)
                .map(|(&ba, &l)| ba * (ba.ln() - l))
                .sum()
        }
        KlVariant::HardRkl => -lp.iter().zip(q).map(|(&l, &qa)| l.exp() * qa).sum::<f64>(),
        KlVariant::HardFkl => {
            let ties = argmax_set(q);
            -ties.iter().map(|&a| lp[a]).sum::<f64>() / ties.len() as f64
        }
    }
}

/// Adds `scale` times the all-actions gradient of `loss` at state `s` into
/// `out` (full parameter length). The hard forward KL draws uniformly among
/// tied maximizers.
pub fn add_grad_all_actions(
    variant: KlVariant,
    policy: &SoftmaxPolicy,
    q: &[f64],
    s: usize,
    rng: &mut RngStream,
    scale: f64,
    out: &mut [f64],
) {
    let probs = policy.probs(s);
    let lp = policy.log_probs(s);
    let (lo, hi) = policy.param_block(s);
    let block = &mut out[lo..hi];
    match variant {
        KlVariant::Rkl { tau } => {
            // -sum_a grad pi(a) [q_a / tau - ln pi_a]
            let coef: Vec<f64> = q.iter().zip(&lp).map(|(&qa, &l)| qa / tau - l).collect();
            let mean: f64 = probs.iter().zip(&coef).map(|(&p, &c)| p * c).sum();
            for (b, g) in block.iter_mut().enumerate() {
                *g += scale * (-probs[b] * (coef[b] - mean));
            }
        }
        KlVariant::Fkl { tau } => {
            let bprobs = boltzmann_probs(q, tau).expect("tau > 0 by construction");
            for (b, g) in block.iter_mut().enumerate() {
                *g += scale * (probs[b] - bprobs[b]);
            }
        }
        KlVariant::HardRkl => {
            let mean: f64 = probs.iter().zip(q).map(|(&p, &qa)| p * qa).sum();
            for (b, g) in block.iter_mut().enumerate() {
                *g += scale * (-probs[b] * (q[b] - mean));
            }
        }
        KlVariant::HardFkl => {
            let ties = argmax_set(q);
            let a_star = *rng.choose(&ties);
            for (b, g) in block.iter_mut().enumerate() {
                let indicator = if b == a_star { 1.0 } else { 0.0 };
                *g += scale * (probs[b] - indicator);
            }
        }
    }
}

/// Exact all-actions gradient of the loss (Boltzmann-weighted sums over the
/// whole action set).
pub fn grad_all_actions(
    variant: KlVariant,
    policy: &SoftmaxPolicy,
    q: &[f64],
    s: usize,
    rng: &mut RngStream,
) -> GradientEstimate {
    let mut partials = vec![0.0; policy.n_params()];
    add_grad_all_actions(variant, policy, q, s, rng, 1.0, &mut partials);
    GradientEstimate {
        partials,
        estimator: Estimator::AllActions,
        state: s,
    }
}

/// Likelihood-ratio estimate from `n` actions sampled from the policy, for
/// the reverse-KL variants. `baseline` subtracts a state value from the
/// scores (variance reduction, no bias); `None` means zero.
pub fn grad_sampled(
    variant: KlVariant,
    policy: &SoftmaxPolicy,
    q: &[f64],
    baseline: Option<f64>,
    s: usize,
    n: usize,
    rng: &mut RngStream,
) -> Result<GradientEstimate> {
    if variant.is_forward() {
        return Err(Error::Invalid(
            "sampled-action updates apply to the reverse KL variants".into(),
        ));
    }
    if n == 0 {
        return Err(Error::Invalid("need at least one sample".into()));
    }
    let v = baseline.unwrap_or(0.0);
    let lp = policy.log_probs(s);
    let probs: Vec<f64> = lp.iter().map(|&l| l.exp()).collect();
    let mut partials = vec![0.0; policy.n_params()];
    let (lo, _) = policy.param_block(s);
    let inv_n = 1.0 / n as f64;
    for _ in 0..n {
        let a = rng.categorical(&probs);
        let coef = match variant {
            KlVariant::Rkl { tau } => (q[a] - v) / tau - lp[a],
            KlVariant::HardRkl => q[a] - v,
            _ => unreachable!(),
        };
        // grad ln pi(a) = e_a - pi
        for (b, &p) in probs.iter().enumerate() {
            let g = if b == a { 1.0 - p } else { -p };
            partials[lo + b] -= inv_n * g * coef;
        }
    }
    GradientEstimate::checked(partials, Estimator::Sampled(n), s)
}

/// Forward-KL gradient by weighted importance sampling: actions come from
/// the policy, weights are self-normalized Boltzmann ratios.
pub fn grad_fkl_wis(
    policy: &SoftmaxPolicy,
    q: &[f64],
    tau: f64,
    s: usize,
    n: usize,
    rng: &mut RngStream,
) -> Result<GradientEstimate> {
    if tau <= 0.0 {
        return Err(Error::TemperatureDomain(tau));
    }
    if n == 0 {
        return Err(Error::Invalid("need at least one sample".into()));
    }
    let lp = policy.log_probs(s);
    let probs: Vec<f64> = lp.iter().map(|&l| l.exp()).collect();
    let actions: Vec<usize> = (0..n).map(|_| rng.categorical(&probs)).collect();
    let log_w: Vec<f64> = actions.iter().map(|&a| q[a] / tau - lp[a]).collect();
    let weights = normalized_weights(&log_w)?;
    let mut partials = vec![0.0; policy.n_params()];
    let (lo, _) = policy.param_block(s);
    for (&a, &w) in actions.iter().zip(&weights) {
        for (b, &p) in probs.iter().enumerate() {
            let g = if b == a { 1.0 - p } else { -p };
            partials[lo + b] -= w * g;
        }
    }
    GradientEstimate::checked(partials, Estimator::Wis(n), s)
}

/// Self-normalized weights from log space; sums to one.
pub(crate) fn normalized_weights(log_w: &[f64]) -> Result<Vec<f64>> {
    let m = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return Err(Error::DegenerateWeights);
    }
    let mut w: Vec<f64> = log_w.iter().map(|&l| (l - m).exp()).collect();
    let total: f64 = w.iter().sum();
    if total <= 0.0 || !total.is_finite() {
        return Err(Error::DegenerateWeights);
    }
    for x in &mut w {
        *x /= total;
    }
    Ok(w)
}

/// Residuals of the hard-limit identity for a decreasing temperature
/// sequence. At each `tau` the residual is
/// `|tau RKL_tau - (HardRKL + max q + tau ln n* + tau sum_a pi ln pi)|`,
/// where `n*` counts maximizing actions; it shrinks as `tau` drops because
/// the non-maximizers stop contributing to the partition sum.
pub fn hard_limit_check(
    policy: &SoftmaxPolicy,
    q: &[f64],
    s: usize,
    tau_seq: &[f64],
) -> Vec<(f64, f64)> {
    let lp = policy.log_probs(s);
    let neg_entropy: f64 = lp.iter().map(|&l| l.exp() * l).sum();
    let hard = loss(KlVariant::HardRkl, policy, q, s);
    let max_q = q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let n_star = argmax_set(q).len() as f64;
    tau_seq
        .iter()
        .map(|&tau| {
            let rkl = loss(KlVariant::Rkl { tau }, policy, q, s);
            let limit = hard + max_q + tau * n_star.ln() + tau * neg_entropy;
            (tau, (tau * rkl - limit).abs())
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Continuous actions (squashed Gaussian over [-1, 1])
// ---------------------------------------------------------------------------

/// Quadrature nodes with the parameter-independent parts of the squashed
/// density precomputed: `u = atanh(node)` and the tanh Jacobian log-term.
/// Build once, evaluate many policies against it.
#[derive(Debug, Clone)]
pub struct NodeTable {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    u: Vec<f64>,
    log_jac: Vec<f64>,
}

impl NodeTable {
    pub fn new(rule: &ClenshawCurtis) -> Self {
        let nodes = rule.nodes().to_vec();
        let weights = rule.weights().to_vec();
        let u = nodes.iter().map(|&x| x.atanh()).collect();
        let log_jac = nodes.iter().map(|&x| (1.0 - x * x).ln()).collect();
        Self {
            nodes,
            weights,
            u,
            log_jac,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// Per-node policy evaluations reused across the continuous-action loss and
/// gradient: log densities, densities, and score-function partials at every
/// quadrature node.
pub struct PolicyNodeEval {
    pub lp: Vec<f64>,
    pub p: Vec<f64>,
    pub glp: Vec<[f64; 2]>,
}

/// Evaluates the squashed density and its score function at every node with
/// one exponential per node.
pub fn eval_policy_nodes(
    policy: &SquashedGaussianPolicy,
    s: usize,
    table: &NodeTable,
) -> PolicyNodeEval {
    let n = table.len();
    let mu = policy.mu(s);
    let sigma = policy.sigma(s);
    let dsig = 1.0 / (1.0 + (-policy.sigma_hat(s)).exp());
    let log_norm = -sigma.ln() - 0.5 * 1.8378770664093453;
    let inv_sigma = 1.0 / sigma;
    let mut lp = Vec::with_capacity(n);
    let mut p = Vec::with_capacity(n);
    let mut glp = Vec::with_capacity(n);
    for k in 0..n {
        let z = (table.u[k] - mu) * inv_sigma;
        let l = log_norm - 0.5 * z * z - table.log_jac[k];
        lp.push(l);
        p.push(l.exp());
        glp.push([z * inv_sigma, (z * z - 1.0) * inv_sigma * dsig]);
    }
    PolicyNodeEval { lp, p, glp }
}

/// Greedification loss for a squashed-Gaussian policy at state `s`, with all
/// action integrals evaluated on `rule`. The hard forward KL asks the score
/// function for a greedy action, which may be a random draw when the
/// maximizer is an interval.
pub fn loss_continuous(
    variant: KlVariant,
    policy: &SquashedGaussianPolicy,
    scores: &impl ActionScores,
    s: usize,
    rule: &ClenshawCurtis,
    rng: &mut RngStream,
) -> f64 {
    loss_continuous_with(variant, policy, scores, s, &NodeTable::new(rule), rng)
}

/// As [`loss_continuous`] against a prebuilt [`NodeTable`].
pub fn loss_continuous_with(
    variant: KlVariant,
    policy: &SquashedGaussianPolicy,
    scores: &impl ActionScores,
    s: usize,
    table: &NodeTable,
    rng: &mut RngStream,
) -> f64 {
    if let KlVariant::HardFkl = variant {
        let a_star = scores.greedy_action(rng);
        return -policy.log_prob_clamped(s, a_star);
    }
    let q: Vec<f64> = table.nodes().iter().map(|&x| scores.value(x)).collect();
    let ev = eval_policy_nodes(policy, s, table);
    loss_from_eval(variant, &ev, &q, table.weights())
}

/// Loss from precomputed node evaluations; not defined for the hard forward
/// KL, which needs the maximizing action rather than an integral.
pub fn loss_from_eval(variant: KlVariant, ev: &PolicyNodeEval, q: &[f64], weights: &[f64]) -> f64 {
    match variant {
        KlVariant::Rkl { tau } => {
            let m = q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = weights
                .iter()
                .zip(q)
                .map(|(&w, &qa)| w * ((qa - m) / tau).exp())
                .sum();
            let lz = m / tau + z.ln();
            weights
                .iter()
                .zip(&ev.p)
                .zip(ev.lp.iter().zip(q))
                .map(|((&w, &p), (&l, &qa))| w * p * (l - qa / tau))
                .sum::<f64>()
                + lz
        }
        KlVariant::Fkl { tau } => {
            let m = q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = weights
                .iter()
                .zip(q)
                .map(|(&w, &qa)| w * ((qa - m) / tau).exp())
                .sum();
            let ln_z = z.ln();
            weights
                .iter()
                .zip(q)
                .zip(&ev.lp)
                .map(|((&w, &qa), &l)| {
                    let lb = (qa - m) / tau - ln_z;
                    w * lb.exp() * (lb - l)
                })
                .sum()
        }
        KlVariant::HardRkl => -weights
            .iter()
            .zip(&ev.p)
            .zip(q)
            .map(|((&w, &p), &qa)| w * p * qa)
            .sum::<f64>(),
        KlVariant::HardFkl => unreachable!("hard forward KL has no integral loss"),
    }
}

/// Quadrature analogue of the all-actions gradient: the exact gradient of
/// [`loss_continuous`] in the policy parameters.
pub fn grad_quadrature(
    variant: KlVariant,
    policy: &SquashedGaussianPolicy,
    scores: &impl ActionScores,
    s: usize,
    rule: &ClenshawCurtis,
    rng: &mut RngStream,
) -> GradientEstimate {
    let mut partials = vec![0.0; policy.n_params()];
    add_grad_quadrature_with(
        variant,
        policy,
        scores,
        s,
        &NodeTable::new(rule),
        rng,
        1.0,
        &mut partials,
    );
    GradientEstimate {
        partials,
        estimator: Estimator::AllActions,
        state: s,
    }
}

/// Adds `scale` times the quadrature gradient into `out`.
pub fn add_grad_quadrature(
    variant: KlVariant,
    policy: &SquashedGaussianPolicy,
    scores: &impl ActionScores,
    s: usize,
    rule: &ClenshawCurtis,
    rng: &mut RngStream,
    scale: f64,
    out: &mut [f64],
) {
    add_grad_quadrature_with(
        variant,
        policy,
        scores,
        s,
        &NodeTable::new(rule),
        rng,
        scale,
        out,
    );
}

/// As [`add_grad_quadrature`] against a prebuilt [`NodeTable`].
#[allow(clippy::too_many_arguments)]
pub fn add_grad_quadrature_with(
    variant: KlVariant,
    policy: &SquashedGaussianPolicy,
    scores: &impl ActionScores,
    s: usize,
    table: &NodeTable,
    rng: &mut RngStream,
    scale: f64,
    out: &mut [f64],
) {
    let (lo, hi) = policy.param_block(s);
    if let KlVariant::HardFkl = variant {
        let a_star = scores.greedy_action(rng);
        let g = policy.grad_log_prob_clamped(s, a_star);
        out[lo] -= scale * g[0];
        out[hi - 1] -= scale * g[1];
        return;
    }
    let q: Vec<f64> = table.nodes().iter().map(|&x| scores.value(x)).collect();
    let ev = eval_policy_nodes(policy, s, table);
    let acc = grad_block_from_eval(variant, &ev, &q, table.weights());
    out[lo] += scale * acc[0];
    out[hi - 1] += scale * acc[1];
}

/// Gradient block (mu_hat, sigma_hat partials) from precomputed node
/// evaluations; not defined for the hard forward KL.
pub fn grad_block_from_eval(
    variant: KlVariant,
    ev: &PolicyNodeEval,
    q: &[f64],
    weights: &[f64],
) -> [f64; 2] {
    let mut acc = [0.0f64; 2];
    match variant {
        KlVariant::Rkl { tau } => {
            for (k, &w) in weights.iter().enumerate() {
                let c = w * ev.p[k] * (1.0 + ev.lp[k] - q[k] / tau);
                acc[0] += c * ev.glp[k][0];
                acc[1] += c * ev.glp[k][1];
            }
        }
        KlVariant::Fkl { tau } => {
            let m = q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = weights
                .iter()
                .zip(q)
                .map(|(&w, &qa)| w * ((qa - m) / tau).exp())
                .sum();
            for (k, &w) in weights.iter().enumerate() {
                let b = ((q[k] - m) / tau).exp() / z;
                acc[0] -= w * b * ev.glp[k][0];
                acc[1] -= w * b * ev.glp[k][1];
            }
        }
        KlVariant::HardRkl => {
            for (k, &w) in weights.iter().enumerate() {
                let c = w * ev.p[k] * q[k];
                acc[0] -= c * ev.glp[k][0];
                acc[1] -= c * ev.glp[k][1];
            }
        }
        KlVariant::HardFkl => unreachable!("hard forward KL has no integral gradient"),
    }
    acc
}

/// Likelihood-ratio estimate with sampled actions for the continuous
/// reverse-KL variants.
pub fn grad_sampled_continuous(
    variant: KlVariant,
    policy: &SquashedGaussianPolicy,
    scores: &impl ActionScores,
    baseline: Option<f64>,
    s: usize,
    n: usize,
    rng: &mut RngStream,
) -> Result<GradientEstimate> {
    if variant.is_forward() {
        return Err(Error::Invalid(
            "sampled-action updates apply to the reverse KL variants".into(),
        ));
    }
    if n == 0 {
        return Err(Error::Invalid("need at least one sample".into()));
    }
    let v = baseline.unwrap_or(0.0);
    let mut acc = [0.0f64; 2];
    let inv_n = 1.0 / n as f64;
    for _ in 0..n {
        let a = policy.sample(s, rng);
        let coef = match variant {
            KlVariant::Rkl { tau } => {
                (scores.value(a) - v) / tau - policy.log_prob_clamped(s, a)
            }
            KlVariant::HardRkl => scores.value(a) - v,
            _ => unreachable!(),
        };
        let g = policy.grad_log_prob_clamped(s, a);
        acc[0] -= inv_n * g[0] * coef;
        acc[1] -= inv_n * g[1] * coef;
    }
    let mut partials = vec![0.0; policy.n_params()];
    let (lo, hi) = policy.param_block(s);
    partials[lo] = acc[0];
    partials[hi - 1] = acc[1];
    GradientEstimate::checked(partials, Estimator::Sampled(n), s)
}

/// Reparameterized (pathwise) estimate for the reverse-KL variants; requires
/// the score function to expose its derivative in the action.
pub fn grad_reparam(
    variant: KlVariant,
    policy: &SquashedGaussianPolicy,
    scores: &impl ActionScores,
    s: usize,
    n: usize,
    rng: &mut RngStream,
) -> Result<GradientEstimate> {
    if variant.is_forward() {
        return Err(Error::Invalid(
            "reparameterized updates apply to the reverse KL variants".into(),
        ));
    }
    if n == 0 {
        return Err(Error::Invalid("need at least one sample".into()));
    }
    let mut acc = [0.0f64; 2];
    let inv_n = 1.0 / n as f64;
    for _ in 0..n {
        let z = rng.normal();
        let rp = policy.reparam(s, z);
        let dq = scores.deriv(rp.action).ok_or(Error::NotDifferentiable)?;
        match variant {
            KlVariant::Rkl { tau } => {
                acc[0] += inv_n * (rp.d_log_prob[0] - dq * rp.d_action[0] / tau);
                acc[1] += inv_n * (rp.d_log_prob[1] - dq * rp.d_action[1] / tau);
            }
            KlVariant::HardRkl => {
                acc[0] -= inv_n * dq * rp.d_action[0];
                acc[1] -= inv_n * dq * rp.d_action[1];
            }
            _ => unreachable!(),
        }
    }
    let mut partials = vec![0.0; policy.n_params()];
    let (lo, hi) = policy.param_block(s);
    partials[lo] = acc[0];
    partials[hi - 1] = acc[1];
    GradientEstimate::checked(partials, Estimator::Reparam(n), s)
}

/// Weighted-importance-sampling forward-KL gradient for continuous actions.
pub fn grad_fkl_wis_continuous(
    policy: &SquashedGaussianPolicy,
    scores: &impl ActionScores,
    tau: f64,
    s: usize,
    n: usize,
    rng: &mut RngStream,
) -> Result<GradientEstimate> {
    if tau <= 0.0 {
        return Err(Error::TemperatureDomain(tau));
    }
    if n == 0 {
        return Err(Error::Invalid("need at least one sample".into()));
    }
    let actions: Vec<f64> = (0..n).map(|_| policy.sample(s, rng)).collect();
    let log_w: Vec<f64> = actions
        .iter()
        .map(|&a| scores.value(a) / tau - policy.log_prob_clamped(s, a))
        .collect();
    let weights = normalized_weights(&log_w)?;
    let mut acc = [0.0f64; 2];
    for (&a, &w) in actions.iter().zip(&weights) {
        let g = policy.grad_log_prob_clamped(s, a);
        acc[0] -= w * g[0];
        acc[1] -= w * g[1];
    }
    let mut partials = vec![0.0; policy.n_params()];
    let (lo, hi) = policy.param_block(s);
    partials[lo] = acc[0];
    partials[hi - 1] = acc[1];
    GradientEstimate::checked(partials, Estimator::Wis(n), s)
}
