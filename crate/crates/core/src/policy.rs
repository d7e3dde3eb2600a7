//! Policy parameterizations: tabular softmax over discrete actions and a
//! per-state tanh-squashed Gaussian over the interval (-1, 1).
//!
//! Policies are immutable value objects; optimizer steps write a fresh
//! parameter vector back with `set_params`. Parameter vectors are flat and
//! state-major so gradients line up with them index-for-index.

use crate::error::{Error, Result};
use crate::mdp::DiscretePolicy;
use crate::rng::RngStream;
use crate::target::ClenshawCurtis;

/// Squashed actions are kept this far inside (-1, 1) so atanh stays finite.
const ATANH_MARGIN: f64 = 1e-7;
const LN_2PI: f64 = 1.8378770664093453;

/// Tabular softmax policy: `pi(a|s) = exp(theta_sa) / sum_b exp(theta_sb)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxPolicy {
    n_states: usize,
    n_actions: usize,
    logits: Vec<f64>,
}

impl SoftmaxPolicy {
    pub fn new(n_states: usize, n_actions: usize, logits: Vec<f64>) -> Result<Self> {
        if logits.len() != n_states * n_actions {
            return Err(Error::Invalid("logit table has wrong size".into()));
        }
        Ok(Self {
            n_states,
            n_actions,
            logits,
        })
    }

    /// Uniform policy (all logits zero).
    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            logits: vec![0.0; n_states * n_actions],
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_params(&self) -> usize {
        self.logits.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.logits
    }

    pub fn set_params(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.logits.len());
        self.logits.copy_from_slice(params);
    }

    pub fn logits_row(&self, s: usize) -> &[f64] {
        &self.logits[s * self.n_actions..(s + 1) * self.n_actions]
    }

    /// Log probabilities at `s`, computed with max subtraction.
    pub fn log_probs(&self, s: usize) -> Vec<f64> {
        let row = self.logits_row(s);
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = row.iter().map(|&t| (t - m).exp()).sum();
        let log_z = m + z.ln();
        row.iter().map(|&t| t - log_z).collect()
    }

    pub fn probs(&self, s: usize) -> Vec<f64> {
        self.log_probs(s).iter().map(|&lp| lp.exp()).collect()
    }

    pub fn log_prob(&self, s: usize, a: usize) -> f64 {
        self.log_probs(s)[a]
    }

    pub fn sample(&self, s: usize, rng: &mut RngStream) -> usize {
        rng.categorical(&self.probs(s))
    }

    pub fn entropy(&self, s: usize) -> f64 {
        self.log_probs(s).iter().map(|&lp| -lp.exp() * lp).sum()
    }

    /// Gradient of `ln pi(a|s)` with respect to the logits of state `s`:
    /// `e_a - pi(.|s)`. Other states' blocks are zero, so only the block is
    /// returned; see [`SoftmaxPolicy::param_block`] for its offset.
    pub fn grad_log_prob_block(&self, s: usize, a: usize) -> Vec<f64> {
        let mut g = self.probs(s);
        for x in &mut g {
            *x = -*x;
        }
        g[a] += 1.0;
        g
    }

    /// Full-length gradient of `ln pi(a|s)` aligned with `params()`.
    pub fn grad_log_prob(&self, s: usize, a: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.n_params()];
        let block = self.grad_log_prob_block(s, a);
        let (lo, _) = self.param_block(s);
        out[lo..lo + self.n_actions].copy_from_slice(&block);
        out
    }

    /// Index range of state `s`'s parameters inside the flat vector.
    pub fn param_block(&self, s: usize) -> (usize, usize) {
        (s * self.n_actions, (s + 1) * self.n_actions)
    }

    pub fn table(&self) -> DiscretePolicy {
        let mut probs = Vec::with_capacity(self.n_params());
        for s in 0..self.n_states {
            probs.extend(self.probs(s));
        }
        DiscretePolicy::new(self.n_states, self.n_actions, probs).expect("softmax rows are valid")
    }

    /// One CSV row of the parameters, state-major.
    pub fn params_csv(&self) -> String {
        join_csv(&self.logits)
    }

    pub fn from_params_csv(n_states: usize, n_actions: usize, row: &str) -> Result<Self> {
        Self::new(n_states, n_actions, parse_csv(row)?)
    }
}

/// Per-state Gaussian with learned `(mu_hat, sigma_hat)` and standard
/// deviation `softplus(sigma_hat)`; samples are squashed through tanh.
///
/// The density on (-1, 1) includes the change-of-variables correction
/// `-ln(1 - a^2)`, so all divergences against it compare distributions on
/// the same space. Parameters are laid out `[mu_0, sigma_hat_0, mu_1, ...]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SquashedGaussianPolicy {
    n_states: usize,
    params: Vec<f64>,
}

/// Per-parameter partials for one state of a squashed Gaussian:
/// `(d/d mu_hat, d/d sigma_hat)`.
pub type StateGrad = [f64; 2];

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn softplus_inverse(y: f64) -> f64 {
    // x = ln(e^y - 1), stable form
    y + (-(-y).exp_m1()).ln()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl SquashedGaussianPolicy {
    pub fn new(mu_hat: Vec<f64>, sigma_hat: Vec<f64>) -> Result<Self> {
        if mu_hat.len() != sigma_hat.len() || mu_hat.is_empty() {
            return Err(Error::Invalid("mu/sigma length mismatch".into()));
        }
        let n_states = mu_hat.len();
        let mut params = Vec::with_capacity(2 * n_states);
        for (m, s) in mu_hat.iter().zip(&sigma_hat) {
            params.push(*m);
            params.push(*s);
        }
        Ok(Self { n_states, params })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn set_params(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.params.len());
        self.params.copy_from_slice(params);
    }

    pub fn param_block(&self, s: usize) -> (usize, usize) {
        (2 * s, 2 * s + 2)
    }

    pub fn mu(&self, s: usize) -> f64 {
        self.params[2 * s]
    }

    pub fn sigma_hat(&self, s: usize) -> f64 {
        self.params[2 * s + 1]
    }

    pub fn sigma(&self, s: usize) -> f64 {
        softplus(self.sigma_hat(s))
    }

    /// Log density at action `a` in (-1, 1): the Normal log density at
    /// `u = atanh(a)` minus `ln(1 - a^2)`.
    pub fn log_prob(&self, s: usize, a: f64) -> Result<f64> {
        if a.abs() >= 1.0 {
            return Err(Error::ActionOutOfRange(a));
        }
        Ok(self.log_prob_clamped(s, a))
    }

    /// As `log_prob` but clamps `a` just inside (-1, 1) instead of erroring;
    /// sampled actions can round to exactly +-1.
    pub fn log_prob_clamped(&self, s: usize, a: f64) -> f64 {
        let a = a.clamp(-1.0 + ATANH_MARGIN, 1.0 - ATANH_MARGIN);
        let u = a.atanh();
        self.log_normal(s, u) - (1.0 - a * a).ln()
    }

    fn log_normal(&self, s: usize, u: f64) -> f64 {
        let mu = self.mu(s);
        let sigma = self.sigma(s);
        let z = (u - mu) / sigma;
        -sigma.ln() - 0.5 * LN_2PI - 0.5 * z * z
    }

    /// Density at `a`; zero outside (-1, 1).
    pub fn density(&self, s: usize, a: f64) -> f64 {
        if a.abs() >= 1.0 {
            0.0
        } else {
            self.log_prob_clamped(s, a).exp()
        }
    }

    pub fn sample(&self, s: usize, rng: &mut RngStream) -> f64 {
        self.sample_with_noise(s, rng).0
    }

    /// Draws `z ~ N(0, 1)`, returns `(tanh(mu + sigma z), z)`.
    pub fn sample_with_noise(&self, s: usize, rng: &mut RngStream) -> (f64, f64) {
        let z = rng.normal();
        (self.action_from_noise(s, z), z)
    }

    pub fn action_from_noise(&self, s: usize, z: f64) -> f64 {
        (self.mu(s) + self.sigma(s) * z)
            .tanh()
            .clamp(-1.0 + ATANH_MARGIN, 1.0 - ATANH_MARGIN)
    }

    /// Differential entropy of the squashed density by quadrature.
    pub fn entropy(&self, s: usize, rule: &ClenshawCurtis) -> f64 {
        rule.integrate(|a| {
            let lp = self.log_prob_clamped(s, a);
            let p = lp.exp();
            if p == 0.0 {
                0.0
            } else {
                -p * lp
            }
        })
    }

    /// Score function: gradient of `ln pi(a|s)` in `(mu_hat, sigma_hat)` at
    /// fixed `a`.
    pub fn grad_log_prob(&self, s: usize, a: f64) -> Result<StateGrad> {
        if a.abs() >= 1.0 {
            return Err(Error::ActionOutOfRange(a));
        }
        Ok(self.grad_log_prob_clamped(s, a))
    }

    pub fn grad_log_prob_clamped(&self, s: usize, a: f64) -> StateGrad {
        let a = a.clamp(-1.0 + ATANH_MARGIN, 1.0 - ATANH_MARGIN);
        let u = a.atanh();
        let mu = self.mu(s);
        let sigma = self.sigma(s);
        let d_mu = (u - mu) / (sigma * sigma);
        let d_sigma = (-1.0 / sigma + (u - mu) * (u - mu) / (sigma * sigma * sigma))
            * sigmoid(self.sigma_hat(s));
        [d_mu, d_sigma]
    }

    /// Pathwise quantities for the reparameterized action `a = tanh(mu +
    /// sigma z)` at fixed noise `z`: the action, the total derivative of
    /// `ln pi(a_theta(z)|s)` in the parameters, and `d a / d theta`.
    pub fn reparam(&self, s: usize, z: f64) -> ReparamPoint {
        let mu = self.mu(s);
        let sigma = self.sigma(s);
        let u = mu + sigma * z;
        let a = u.tanh();
        let dsig = sigmoid(self.sigma_hat(s));
        let sech2 = 1.0 - a * a;
        ReparamPoint {
            action: a.clamp(-1.0 + ATANH_MARGIN, 1.0 - ATANH_MARGIN),
            d_log_prob: [2.0 * a, (-1.0 / sigma + 2.0 * a * z) * dsig],
            d_action: [sech2, sech2 * z * dsig],
        }
    }

    pub fn params_csv(&self) -> String {
        join_csv(&self.params)
    }

    pub fn from_params_csv(row: &str) -> Result<Self> {
        let params = parse_csv(row)?;
        if params.len() % 2 != 0 || params.is_empty() {
            return Err(Error::Parse("squashed-Gaussian row must have 2 entries per state".into()));
        }
        Ok(Self {
            n_states: params.len() / 2,
            params,
        })
    }
}

/// See [`SquashedGaussianPolicy::reparam`].
#[derive(Debug, Clone, Copy)]
pub struct ReparamPoint {
    pub action: f64,
    pub d_log_prob: StateGrad,
    pub d_action: StateGrad,
}

fn join_csv(values: &[f64]) -> String {
    values
        .iter()
        .map(f64::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

fn parse_csv(row: &str) -> Result<Vec<f64>> {
    row.trim()
        .split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("bad csv number {tok:?}")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn softmax_uniform_log_probs() {
        let pi = SoftmaxPolicy::zeros(1, 4);
        for a in 0..4 {
            assert_abs_diff_eq!(pi.log_prob(0, a), 0.25f64.ln(), epsilon = 1e-12);
        }
        assert_abs_diff_eq!(pi.entropy(0), 4.0f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn softmax_peaked_entropy_near_zero() {
        let pi = SoftmaxPolicy::new(1, 3, vec![50.0, 0.0, 0.0]).unwrap();
        assert!(pi.entropy(0) < 1e-6);
    }

    #[test]
    fn softmax_sample_concentrates() {
        let pi = SoftmaxPolicy::new(1, 3, vec![0.0, 50.0, 0.0]).unwrap();
        let mut rng = RngStream::new(0);
        let hits = (0..10_000).filter(|_| pi.sample(0, &mut rng) == 1).count();
        assert!(hits as f64 / 10_000.0 > 0.999);
    }

    #[test]
    fn softmax_sampling_deterministic() {
        let pi = SoftmaxPolicy::new(1, 4, vec![0.1, -0.5, 0.9, 0.0]).unwrap();
        let mut a = RngStream::new(123);
        let mut b = RngStream::new(123);
        let seq_a: Vec<usize> = (0..100).map(|_| pi.sample(0, &mut a)).collect();
        let seq_b: Vec<usize> = (0..100).map(|_| pi.sample(0, &mut b)).collect();
        assert_eq!(seq_a, seq_b);
    }

    #[test]
    fn softmax_grad_uniform_two_actions() {
        let pi = SoftmaxPolicy::zeros(1, 2);
        let g = pi.grad_log_prob(0, 0);
        assert_abs_diff_eq!(g[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(g[1], -0.5, epsilon = 1e-12);
    }

    #[test]
    fn softmax_score_identity() {
        let pi = SoftmaxPolicy::new(2, 3, vec![0.4, -1.0, 0.3, 2.0, 0.0, -0.5]).unwrap();
        for s in 0..2 {
            let probs = pi.probs(s);
            let mut mean = vec![0.0; pi.n_params()];
            for (a, &p) in probs.iter().enumerate() {
                for (m, g) in mean.iter_mut().zip(pi.grad_log_prob(s, a)) {
                    *m += p * g;
                }
            }
            for m in mean {
                assert_abs_diff_eq!(m, 0.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn softmax_grad_matches_finite_differences() {
        let mut rng = RngStream::new(17);
        for _ in 0..100 {
            let n_actions = 2 + (rng.uniform() * 4.0) as usize;
            let logits: Vec<f64> = (0..n_actions).map(|_| rng.uniform_in(-2.0, 2.0)).collect();
            let a = (rng.uniform() * n_actions as f64) as usize;
            let pi = SoftmaxPolicy::new(1, n_actions, logits.clone()).unwrap();
            let grad = pi.grad_log_prob(0, a);
            let h = 1e-6;
            for b in 0..n_actions {
                let mut plus = logits.clone();
                plus[b] += h;
                let mut minus = logits.clone();
                minus[b] -= h;
                let fd = (SoftmaxPolicy::new(1, n_actions, plus).unwrap().log_prob(0, a)
                    - SoftmaxPolicy::new(1, n_actions, minus).unwrap().log_prob(0, a))
                    / (2.0 * h);
                let denom = grad[b].abs().max(1e-3);
                assert!(
                    (grad[b] - fd).abs() / denom < 1e-5,
                    "grad {} vs fd {}",
                    grad[b],
                    fd
                );
            }
        }
    }

    #[test]
    fn squashed_log_prob_at_zero() {
        let pi = SquashedGaussianPolicy::new(vec![0.0], vec![softplus_inverse(1.0)]).unwrap();
        assert_abs_diff_eq!(pi.sigma(0), 1.0, epsilon = 1e-12);
        let lp = pi.log_prob(0, 0.0).unwrap();
        assert_abs_diff_eq!(lp, -0.5 * LN_2PI, epsilon = 1e-10);
    }

    #[test]
    fn squashed_density_integrates_to_one() {
        let rule = ClenshawCurtis::new(1024);
        let mut rng = RngStream::new(2);
        for _ in 0..20 {
            let mu = rng.uniform_in(-1.0, 1.0);
            let sig = rng.uniform_in(0.1, 1.0);
            let pi = SquashedGaussianPolicy::new(vec![mu], vec![softplus_inverse(sig)]).unwrap();
            let total = rule.integrate(|a| pi.density(0, a));
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn squashed_samples_in_open_interval() {
        let pi = SquashedGaussianPolicy::new(vec![0.5], vec![softplus_inverse(0.8)]).unwrap();
        let mut rng = RngStream::new(7);
        for _ in 0..100_000 {
            let a = pi.sample(0, &mut rng);
            assert!(a > -1.0 && a < 1.0);
        }
    }

    #[test]
    fn squashed_action_out_of_range() {
        let pi = SquashedGaussianPolicy::new(vec![0.0], vec![0.0]).unwrap();
        assert!(matches!(pi.log_prob(0, 1.0), Err(Error::ActionOutOfRange(_))));
        assert!(pi.grad_log_prob(0, -1.1).is_err());
    }

    #[test]
    fn squashed_grad_matches_finite_differences() {
        let mut rng = RngStream::new(5);
        for _ in 0..100 {
            let mu = rng.uniform_in(-1.0, 1.0);
            let sh = rng.uniform_in(-1.0, 1.0);
            let a = rng.uniform_in(-0.95, 0.95);
            let pi = SquashedGaussianPolicy::new(vec![mu], vec![sh]).unwrap();
            let g = pi.grad_log_prob(0, a).unwrap();
            let h = 1e-6;
            let fd_mu = (SquashedGaussianPolicy::new(vec![mu + h], vec![sh])
                .unwrap()
                .log_prob(0, a)
                .unwrap()
                - SquashedGaussianPolicy::new(vec![mu - h], vec![sh])
                    .unwrap()
                    .log_prob(0, a)
                    .unwrap())
                / (2.0 * h);
            let fd_sh = (SquashedGaussianPolicy::new(vec![mu], vec![sh + h])
                .unwrap()
                .log_prob(0, a)
                .unwrap()
                - SquashedGaussianPolicy::new(vec![mu], vec![sh - h])
                    .unwrap()
                    .log_prob(0, a)
                    .unwrap())
                / (2.0 * h);
            assert!((g[0] - fd_mu).abs() / g[0].abs().max(1e-3) < 1e-5);
            assert!((g[1] - fd_sh).abs() / g[1].abs().max(1e-3) < 1e-5);
        }
    }

    #[test]
    fn squashed_score_identity_monte_carlo() {
        let pi = SquashedGaussianPolicy::new(vec![0.3], vec![softplus_inverse(0.6)]).unwrap();
        let mut rng = RngStream::new(11);
        let n = 100_000;
        let mut sum = [0.0; 2];
        let mut sumsq = [0.0; 2];
        for _ in 0..n {
            let a = pi.sample(0, &mut rng);
            let g = pi.grad_log_prob_clamped(0, a);
            for k in 0..2 {
                sum[k] += g[k];
                sumsq[k] += g[k] * g[k];
            }
        }
        for k in 0..2 {
            let mean = sum[k] / n as f64;
            let var = (sumsq[k] / n as f64 - mean * mean).max(0.0);
            let stderr = (var / n as f64).sqrt();
            assert!(
                mean.abs() <= 3.0 * stderr.max(1e-6),
                "score mean {mean} vs stderr {stderr}"
            );
        }
    }

    #[test]
    fn squashed_entropy_below_gaussian_entropy() {
        let rule = ClenshawCurtis::new(1024);
        for (mu, sig) in [(0.0, 0.5), (0.4, 0.3), (-0.2, 1.0)] {
            let pi = SquashedGaussianPolicy::new(vec![mu], vec![softplus_inverse(sig)]).unwrap();
            let h = pi.entropy(0, &rule);
            let gauss = 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E * sig * sig).ln();
            assert!(h <= gauss + 1e-9, "h {h} vs gaussian {gauss}");
        }
    }

    #[test]
    fn reparam_consistent_with_grad_at_action() {
        // d_action finite-difference check
        let pi = SquashedGaussianPolicy::new(vec![0.2], vec![0.1]).unwrap();
        let z = 0.7;
        let rp = pi.reparam(0, z);
        let h = 1e-6;
        let plus = SquashedGaussianPolicy::new(vec![0.2 + h], vec![0.1]).unwrap();
        let minus = SquashedGaussianPolicy::new(vec![0.2 - h], vec![0.1]).unwrap();
        let fd = (plus.action_from_noise(0, z) - minus.action_from_noise(0, z)) / (2.0 * h);
        assert_abs_diff_eq!(rp.d_action[0], fd, epsilon = 1e-6);
        let plus = SquashedGaussianPolicy::new(vec![0.2], vec![0.1 + h]).unwrap();
        let minus = SquashedGaussianPolicy::new(vec![0.2], vec![0.1 - h]).unwrap();
        let fd = (plus.action_from_noise(0, z) - minus.action_from_noise(0, z)) / (2.0 * h);
        assert_abs_diff_eq!(rp.d_action[1], fd, epsilon = 1e-6);
        // total log-prob derivative finite difference
        let f = |mu: f64, sh: f64| {
            let p = SquashedGaussianPolicy::new(vec![mu], vec![sh]).unwrap();
            let a = p.action_from_noise(0, z);
            p.log_prob_clamped(0, a)
        };
        let fd_mu = (f(0.2 + h, 0.1) - f(0.2 - h, 0.1)) / (2.0 * h);
        let fd_sh = (f(0.2, 0.1 + h) - f(0.2, 0.1 - h)) / (2.0 * h);
        assert_abs_diff_eq!(rp.d_log_prob[0], fd_mu, epsilon = 1e-5);
        assert_abs_diff_eq!(rp.d_log_prob[1], fd_sh, epsilon = 1e-5);
    }

    #[test]
    fn params_csv_roundtrip() {
        let pi = SquashedGaussianPolicy::new(vec![0.25, -0.5], vec![0.1, 0.9]).unwrap();
        let row = pi.params_csv();
        let back = SquashedGaussianPolicy::from_params_csv(&row).unwrap();
        assert_eq!(pi, back);
        let sm = SoftmaxPolicy::new(2, 2, vec![0.0, 1.0, -1.0, 2.0]).unwrap();
        let back = SoftmaxPolicy::from_params_csv(2, 2, &sm.params_csv()).unwrap();
        assert_eq!(sm, back);
    }

    proptest! {
        #[test]
        fn softmax_probs_simplex(logits in proptest::collection::vec(-30.0f64..30.0, 2..8)) {
            let n = logits.len();
            let pi = SoftmaxPolicy::new(1, n, logits).unwrap();
            let p = pi.probs(0);
            let sum: f64 = p.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            prop_assert!(p.iter().all(|&x| x.is_finite() && x >= 0.0));
        }

        #[test]
        fn squashed_log_prob_finite(
            mu in -3.0f64..3.0,
            sh in -3.0f64..3.0,
            a in -0.999f64..0.999,
        ) {
            let pi = SquashedGaussianPolicy::new(vec![mu], vec![sh]).unwrap();
            prop_assert!(pi.log_prob(0, a).unwrap().is_finite());
        }
    }
}
