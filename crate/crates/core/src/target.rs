//! Boltzmann target distributions, KL divergences in both directions,
//! numerical integration over the action interval, and the auxiliary
//! divergence quantities (Renyi-infinity, kappa, total variation).
//!
//! All log-sum computations subtract the max before exponentiating;
//! temperatures down to 1e-3 show up in sweeps and plain exponentials
//! overflow long before that.

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Probabilities below this are treated as "numerically zero" when deciding
/// whether a KL is undefined rather than merely floored.
const KL_P_CUTOFF: f64 = 1e-12;
const KL_Q_FLOOR: f64 = 1e-300;
/// Two scores within this of the maximum count as tied maximizers.
pub const TIE_TOL: f64 = 1e-9;

/// Interior-node Clenshaw-Curtis rule on [-1, 1].
///
/// `new(n)` lays out the n-point Chebyshev extremum grid and keeps the n - 2
/// interior nodes, with weights computed for that interior node set so the
/// rule still integrates constants exactly. The endpoints are dropped because
/// the squashed-Gaussian densities this rule integrates are evaluated through
/// atanh, which is singular at +-1.
#[derive(Debug, Clone)]
pub struct ClenshawCurtis {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl ClenshawCurtis {
    pub fn new(n: usize) -> Self {
        assert!(n >= 3, "need at least 3 points to have an interior");
        let big_n = n - 1;
        let mut nodes = Vec::with_capacity(n - 2);
        let mut weights = Vec::with_capacity(n - 2);
        for k in 1..big_n {
            let theta = k as f64 * std::f64::consts::PI / big_n as f64;
            nodes.push(theta.cos());
            let mut acc = 0.0;
            let mut j = 1usize;
            while 2 * j - 1 <= big_n {
                let m = (2 * j - 1) as f64;
                acc += (m * theta).sin() / m;
                j += 1;
            }
            weights.push(4.0 / big_n as f64 * theta.sin() * acc);
        }
        // cos is decreasing in theta; store nodes in ascending order.
        nodes.reverse();
        weights.reverse();
        Self { nodes, weights }
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

    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Integration scheme for expectations over the action interval.
#[derive(Debug, Clone)]
pub enum Integrator {
    ClenshawCurtis(ClenshawCurtis),
    /// Draws from the first KL argument and averages log ratios.
    MonteCarlo { n_samples: usize },
}

impl Integrator {
    pub fn clenshaw_curtis(n: usize) -> Self {
        Integrator::ClenshawCurtis(ClenshawCurtis::new(n))
    }
}

/// Softmax of `scores / tau` with max subtraction.
pub fn boltzmann_probs(scores: &[f64], tau: f64) -> Result<Vec<f64>> {
    if tau <= 0.0 {
        return Err(Error::TemperatureDomain(tau));
    }
    let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = scores.iter().map(|&q| ((q - m) / tau).exp()).collect();
    let z: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= z;
    }
    Ok(probs)
}

/// Log probabilities of the Boltzmann distribution. Unlike
/// [`boltzmann_probs`] these stay exact for peaked targets whose small
/// entries underflow as plain probabilities (score gaps of a few hundred
/// times tau).
pub fn boltzmann_log_probs(scores: &[f64], tau: f64) -> Result<Vec<f64>> {
    if tau <= 0.0 {
        return Err(Error::TemperatureDomain(tau));
    }
    let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = scores.iter().map(|&q| ((q - m) / tau).exp()).sum();
    let log_z = z.ln();
    Ok(scores.iter().map(|&q| (q - m) / tau - log_z).collect())
}

/// `sum_i p_i (ln p_i - log_q_i)`: KL of `p` against a distribution given in
/// log space, exact even where `exp(log_q)` would underflow.
pub fn kl_vs_log_target(p: &[f64], log_q: &[f64]) -> Result<f64> {
    if p.len() != log_q.len() {
        return Err(Error::Invalid("distribution length mismatch".into()));
    }
    let mut acc = 0.0;
    for (i, (&pi, &lq)) in p.iter().zip(log_q).enumerate() {
        if pi <= 0.0 {
            continue;
        }
        if lq == f64::NEG_INFINITY {
            return Err(Error::KlUndefined { index: i, p: pi });
        }
        acc += pi * (pi.ln() - lq);
    }
    Ok(acc)
}

/// Renyi-infinity divergence against a log-space distribution:
/// `max_i (ln p_i - log_q_i)` over the support of `p`.
pub fn renyi_inf_vs_log(p: &[f64], log_q: &[f64]) -> Result<f64> {
    if p.len() != log_q.len() {
        return Err(Error::Invalid("distribution length mismatch".into()));
    }
    let mut best = f64::NEG_INFINITY;
    for (i, (&pi, &lq)) in p.iter().zip(log_q).enumerate() {
        if pi > 0.0 {
            if lq == f64::NEG_INFINITY {
                return Err(Error::RenyiUndefined(i));
            }
            best = best.max(pi.ln() - lq);
        }
    }
    Ok(best)
}

/// `kappa(exp(d))` computed without forming `exp(d)`, stable for any
/// exponent: `(d - 1 + e^-d) / (1 - (1 + d) e^-d)`.
pub fn kappa_of_exp(d: f64) -> Result<f64> {
    if d == 0.0 {
        return Err(Error::KappaDomain(1.0));
    }
    let e = (-d).exp();
    Ok((d - 1.0 + e) / (1.0 - (1.0 + d) * e))
}

/// `ln sum_a exp(scores_a / tau)`, computed in shifted form.
pub fn log_partition(scores: &[f64], tau: f64) -> Result<f64> {
    if tau <= 0.0 {
        return Err(Error::TemperatureDomain(tau));
    }
    let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = scores.iter().map(|&q| ((q - m) / tau).exp()).sum();
    Ok(m / tau + z.ln())
}

/// Boltzmann density over [-1, 1] for a continuous score function, with the
/// log-partition computed once by quadrature and cached.
pub struct BoltzmannTarget<F: Fn(f64) -> f64> {
    scores: F,
    tau: f64,
    shift: f64,
    log_z: f64,
}

impl<F: Fn(f64) -> f64> BoltzmannTarget<F> {
    pub fn new(scores: F, tau: f64, rule: &ClenshawCurtis) -> Result<Self> {
        if tau <= 0.0 {
            return Err(Error::TemperatureDomain(tau));
        }
        let shift = rule
            .nodes()
            .iter()
            .map(|&x| scores(x))
            .fold(f64::NEG_INFINITY, f64::max);
        let z = rule.integrate(|x| ((scores(x) - shift) / tau).exp());
        if !z.is_finite() || z <= 0.0 {
            return Err(Error::IntegrationFailure(z));
        }
        Ok(Self {
            scores,
            tau,
            shift,
            log_z: z.ln(),
        })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn log_density(&self, a: f64) -> f64 {
        ((self.scores)(a) - self.shift) / self.tau - self.log_z
    }

    pub fn density(&self, a: f64) -> f64 {
        self.log_density(a).exp()
    }
}

/// Entropy-regularized objective `sum_a p(a) (q(a) - tau ln p(a))`, the
/// quantity the Boltzmann distribution maximizes over `p`.
pub fn entropy_regularized_objective(p: &[f64], q_scores: &[f64], tau: f64) -> Result<f64> {
    if p.len() != q_scores.len() {
        return Err(Error::Invalid("distribution/scores length mismatch".into()));
    }
    let mut acc = 0.0;
    for (a, (&pa, &qa)) in p.iter().zip(q_scores).enumerate() {
        if pa == 0.0 {
            if tau > 0.0 {
                return Err(Error::LogOfZero { state: 0, action: a });
            }
            continue;
        }
        acc += pa * (qa - tau * pa.ln());
    }
    Ok(acc)
}

/// Discrete KL divergence `sum_i p_i ln(p_i / q_i)`.
///
/// Where `q_i` is zero: if `p_i` is numerically zero (< 1e-12) the
/// denominator is floored at 1e-300 so sweeps over many distributions stay
/// total; if `p_i` carries real mass the divergence is undefined and an
/// error is returned.
pub fn kl_discrete(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Invalid("distribution length mismatch".into()));
    }
    let mut acc = 0.0;
    for (i, (&pi, &qi)) in p.iter().zip(q).enumerate() {
        if pi <= 0.0 {
            continue;
        }
        let qi = if qi < KL_Q_FLOOR {
            if pi >= KL_P_CUTOFF {
                return Err(Error::KlUndefined { index: i, p: pi });
            }
            KL_Q_FLOOR
        } else {
            qi
        };
        acc += pi * (pi / qi).ln();
    }
    Ok(acc)
}

/// KL between two continuous densities given in log space, by quadrature.
pub fn kl_quadrature(
    rule: &ClenshawCurtis,
    log_p: impl Fn(f64) -> f64,
    log_q: impl Fn(f64) -> f64,
) -> f64 {
    rule.integrate(|x| {
        let lp = log_p(x);
        let p = lp.exp();
        if p == 0.0 {
            0.0
        } else {
            p * (lp - log_q(x))
        }
    })
}

/// Monte-Carlo KL estimate: draws from `p` and averages `log p - log q`.
/// Returns the mean and its standard error.
pub fn kl_monte_carlo(
    n: usize,
    rng: &mut RngStream,
    mut sample_p: impl FnMut(&mut RngStream) -> f64,
    log_p: impl Fn(f64) -> f64,
    log_q: impl Fn(f64) -> f64,
) -> (f64, f64) {
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for _ in 0..n {
        let a = sample_p(rng);
        let ratio = log_p(a) - log_q(a);
        sum += ratio;
        sumsq += ratio * ratio;
    }
    let mean = sum / n as f64;
    let var = (sumsq / n as f64 - mean * mean).max(0.0);
    (mean, (var / n as f64).sqrt())
}

/// Renyi divergence of order infinity: `ln max_i p_i / q_i`. Requires the
/// two supports to match.
pub fn renyi_inf(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Invalid("distribution length mismatch".into()));
    }
    let mut max_ratio = 0.0f64;
    for (i, (&pi, &qi)) in p.iter().zip(q).enumerate() {
        if (pi > 0.0) != (qi > 0.0) {
            return Err(Error::RenyiUndefined(i));
        }
        if pi > 0.0 {
            max_ratio = max_ratio.max(pi / qi);
        }
    }
    Ok(max_ratio.ln())
}

/// `kappa(t) = (t ln t + 1 - t) / (t - 1 - ln t)` on (0, 1) union (1, inf);
/// monotone increasing, grows like ln t.
pub fn kappa(t: f64) -> Result<f64> {
    if t <= 0.0 || t == 1.0 {
        return Err(Error::KappaDomain(t));
    }
    Ok((t * t.ln() + 1.0 - t) / (t - 1.0 - t.ln()))
}

/// Unnormalized total variation `sum_i |p_i - q_i|` (the 1-norm, as used in
/// the Pinsker step of the bound proofs).
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum()
}

/// Indices of entries within [`TIE_TOL`] of the maximum.
pub fn argmax_set(scores: &[f64]) -> Vec<usize> {
    let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    scores
        .iter()
        .enumerate()
        .filter(|(_, &q)| q >= m - TIE_TOL)
        .map(|(i, _)| i)
        .collect()
}

/// Score function over the continuous action interval [-1, 1].
pub trait ActionScores {
    fn value(&self, a: f64) -> f64;

    /// Derivative in the action, `None` when not available.
    fn deriv(&self, a: f64) -> Option<f64>;

    /// A maximizing action. Stochastic when the maximizer is a region
    /// rather than a point.
    fn greedy_action(&self, rng: &mut RngStream) -> f64;
}

impl ActionScores for crate::mdp::BimodalBandit {
    fn value(&self, a: f64) -> f64 {
        BimodalBandit::value(self, a)
    }

    fn deriv(&self, a: f64) -> Option<f64> {
        Some(BimodalBandit::deriv(self, a))
    }

    fn greedy_action(&self, _rng: &mut RngStream) -> f64 {
        self.argmax()
    }
}

use crate::mdp::BimodalBandit;

/// Piecewise-constant scores over a partition of [-1, 1]: the continuous
/// view of one state's discrete action-values. The greedy "action" is a
/// uniform draw from the maximizing interval.
#[derive(Debug, Clone)]
pub struct IntervalScores {
    boundaries: Vec<f64>,
    values: Vec<f64>,
}

impl IntervalScores {
    pub fn new(boundaries: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if boundaries.len() != values.len() + 1 {
            return Err(Error::Invalid("need one more boundary than value".into()));
        }
        Ok(Self { boundaries, values })
    }

    fn interval_of(&self, a: f64) -> usize {
        for i in 0..self.values.len() {
            if a <= self.boundaries[i + 1] {
                return i;
            }
        }
        self.values.len() - 1
    }
}

impl ActionScores for IntervalScores {
    fn value(&self, a: f64) -> f64 {
        self.values[self.interval_of(a)]
    }

    fn deriv(&self, _a: f64) -> Option<f64> {
        // Constant within each interval.
        Some(0.0)
    }

    fn greedy_action(&self, rng: &mut RngStream) -> f64 {
        let ties = argmax_set(&self.values);
        let &i = rng.choose(&ties);
        rng.uniform_in(self.boundaries[i], self.boundaries[i + 1])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn cc_integrates_constants() {
        for n in [16, 64, 1024] {
            let rule = ClenshawCurtis::new(n);
            assert_eq!(rule.len(), n - 2);
            assert_abs_diff_eq!(rule.integrate(|_| 1.0), 2.0, epsilon = 1e-10);
            let wsum: f64 = rule.weights().iter().sum();
            assert_abs_diff_eq!(wsum, 2.0, epsilon = 1e-10);
            assert!(rule.weights().iter().all(|&w| w > 0.0));
        }
    }

    #[test]
    fn cc_integrates_square_and_exp() {
        let rule = ClenshawCurtis::new(1024);
        assert_abs_diff_eq!(rule.integrate(|x| x * x), 2.0 / 3.0, epsilon = 1e-10);
        let e = std::f64::consts::E;
        assert_abs_diff_eq!(rule.integrate(f64::exp), e - 1.0 / e, epsilon = 1e-8);
    }

    #[test]
    fn cc_nodes_exclude_endpoints_and_ascend() {
        let rule = ClenshawCurtis::new(1024);
        assert!(rule.nodes().first().unwrap() > &-1.0);
        assert!(rule.nodes().last().unwrap() < &1.0);
        assert!(rule.nodes().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn boltzmann_uniform_for_constant_scores() {
        let p = boltzmann_probs(&[3.0, 3.0, 3.0, 3.0], 0.7).unwrap();
        for &pi in &p {
            assert_abs_diff_eq!(pi, 0.25, epsilon = 1e-12);
        }
    }

    #[test]
    fn boltzmann_quarter_three_quarters() {
        let tau = 0.37;
        let p = boltzmann_probs(&[0.0, tau * 3.0f64.ln()], tau).unwrap();
        assert_abs_diff_eq!(p[0], 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(p[1], 0.75, epsilon = 1e-12);
    }

    #[test]
    fn boltzmann_high_temperature_limit() {
        let p = boltzmann_probs(&[1.0, -2.0, 0.5], 1e6).unwrap();
        for &pi in &p {
            assert_abs_diff_eq!(pi, 1.0 / 3.0, epsilon = 1e-5);
        }
    }

    #[test]
    fn boltzmann_score_shift_invariance() {
        let q = [0.3, -1.2, 0.8, 0.1];
        let shifted: Vec<f64> = q.iter().map(|x| x + 123.456).collect();
        let a = boltzmann_probs(&q, 0.25).unwrap();
        let b = boltzmann_probs(&shifted, 0.25).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-10);
        }
    }

    #[test]
    fn boltzmann_rejects_nonpositive_tau() {
        assert!(matches!(
            boltzmann_probs(&[1.0, 2.0], 0.0),
            Err(Error::TemperatureDomain(_))
        ));
        assert!(boltzmann_probs(&[1.0, 2.0], -0.1).is_err());
    }

    #[test]
    fn objective_maximized_by_boltzmann() {
        let mut rng = RngStream::new(42);
        let q = [0.6, -0.4, 0.1, 0.9, -1.0];
        let tau = 0.5;
        let b = boltzmann_probs(&q, tau).unwrap();
        let at_b = entropy_regularized_objective(&b, &q, tau).unwrap();
        for _ in 0..100 {
            let p = rng.simplex(5);
            let at_p = entropy_regularized_objective(&p, &q, tau).unwrap();
            assert!(at_b >= at_p - 1e-12);
        }
    }

    #[test]
    fn objective_special_cases() {
        let p = [0.2, 0.3, 0.5];
        let q = [1.0, -1.0, 0.5];
        let dot: f64 = p.iter().zip(&q).map(|(a, b)| a * b).sum();
        assert_abs_diff_eq!(
            entropy_regularized_objective(&p, &q, 0.0).unwrap(),
            dot,
            epsilon = 1e-12
        );
        // uniform p, constant scores c: c + tau ln|A|
        let u = [0.25; 4];
        let c = [0.7; 4];
        assert_abs_diff_eq!(
            entropy_regularized_objective(&u, &c, 0.3).unwrap(),
            0.7 + 0.3 * 4.0f64.ln(),
            epsilon = 1e-12
        );
        assert!(entropy_regularized_objective(&[0.0, 1.0], &[0.0, 0.0], 0.5).is_err());
    }

    #[test]
    fn kl_bernoulli_closed_form() {
        let kl = kl_discrete(&[0.5, 0.5], &[0.75, 0.25]).unwrap();
        assert_abs_diff_eq!(kl, 0.5 * (4.0f64 / 3.0).ln(), epsilon = 1e-12);
        let rev = kl_discrete(&[0.75, 0.25], &[0.5, 0.5]).unwrap();
        assert_abs_diff_eq!(rev, 0.75 * 1.5f64.ln() + 0.25 * 0.5f64.ln(), epsilon = 1e-12);
        assert!((kl - rev).abs() > 1e-3, "kl should be asymmetric");
        assert_abs_diff_eq!(kl_discrete(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn kl_undefined_vs_floored() {
        // Real mass over a zero: undefined.
        assert!(matches!(
            kl_discrete(&[0.5, 0.5], &[1.0, 0.0]),
            Err(Error::KlUndefined { .. })
        ));
        // Numerically-zero mass over a zero: floored, stays finite.
        let kl = kl_discrete(&[1.0 - 1e-13, 1e-13], &[1.0, 0.0]).unwrap();
        assert!(kl.is_finite());
    }

    #[test]
    fn renyi_examples() {
        assert_abs_diff_eq!(renyi_inf(&[0.4, 0.6], &[0.4, 0.6]).unwrap(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(
            renyi_inf(&[0.9, 0.1], &[0.5, 0.5]).unwrap(),
            1.8f64.ln(),
            epsilon = 1e-12
        );
        assert!(renyi_inf(&[1.0, 0.0], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn renyi_dominates_kl() {
        let mut rng = RngStream::new(3);
        for _ in 0..100 {
            let p = rng.simplex(6);
            let q = rng.simplex(6);
            let r = renyi_inf(&p, &q).unwrap();
            let kl = kl_discrete(&p, &q).unwrap();
            assert!(r >= kl - 1e-12);
        }
    }

    #[test]
    fn kappa_values() {
        let e = std::f64::consts::E;
        assert_abs_diff_eq!(kappa(e).unwrap(), 1.0 / (e - 2.0), epsilon = 1e-12);
        assert!(kappa(2.0).unwrap() < kappa(3.0).unwrap());
        assert!(kappa(3.0).unwrap() < kappa(10.0).unwrap());
        let x = 1e8;
        assert!((kappa(x).unwrap() / x.ln() - 1.0).abs() < 0.15);
        assert!(kappa(1.0).is_err());
        assert!(kappa(-2.0).is_err());
    }

    #[test]
    fn tv_and_pinsker() {
        assert_abs_diff_eq!(total_variation(&[0.5, 0.5], &[0.5, 0.5]), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(total_variation(&[1.0, 0.0], &[0.0, 1.0]), 2.0, epsilon = 1e-15);
        let mut rng = RngStream::new(9);
        for _ in 0..1000 {
            let p = rng.simplex(4);
            let q = rng.simplex(4);
            let tv = total_variation(&p, &q);
            let kl = kl_discrete(&p, &q).unwrap();
            assert!(tv <= (2.0 * kl).sqrt() + 1e-12);
        }
    }

    #[test]
    fn continuous_boltzmann_normalizes() {
        let rule = ClenshawCurtis::new(1024);
        let bandit = crate::mdp::bimodal_bandit();
        for tau in [0.01, 0.1, 1.0] {
            let target = BoltzmannTarget::new(|a| bandit.value(a), tau, &rule).unwrap();
            let total = rule.integrate(|a| target.density(a));
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn interval_scores_greedy_draws_from_max_interval() {
        let scores = IntervalScores::new(vec![-1.0, 0.0, 1.0], vec![2.0, 1.0]).unwrap();
        let mut rng = RngStream::new(4);
        for _ in 0..100 {
            let a = scores.greedy_action(&mut rng);
            assert!((-1.0..=0.0).contains(&a));
        }
        assert_eq!(scores.value(-0.5), 2.0);
        assert_eq!(scores.value(0.5), 1.0);
        assert_eq!(scores.deriv(0.3), Some(0.0));
        // Tied intervals both get drawn.
        let tied = IntervalScores::new(vec![-1.0, 0.0, 1.0], vec![1.0, 1.0]).unwrap();
        let mut saw = [false, false];
        for _ in 0..200 {
            let a = tied.greedy_action(&mut rng);
            saw[usize::from(a > 0.0)] = true;
        }
        assert!(saw[0] && saw[1]);
    }
}
