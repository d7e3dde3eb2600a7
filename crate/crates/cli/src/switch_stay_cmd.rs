//! Iterate study on continuous-action Switch-Stay: many independently
//! initialized squashed-Gaussian policies take gradient steps against their
//! own exactly-evaluated action-values, and the final value functions are
//! recorded as points of the value polytope.

use crate::config::{EstimatorChoice, SwitchStayConfig};
use crate::out::write_csv;
use anyhow::Result;
use klgreed::greedify::{
    eval_policy_nodes, grad_block_from_eval, grad_fkl_wis_continuous, grad_sampled_continuous,
    KlVariant, NodeTable,
};
use klgreed::mdp::{exact_soft_values, polytope_point, switch_stay_continuous};
use klgreed::optim::{Optimizer, OptimizerKind};
use klgreed::policy::{softplus_inverse, SquashedGaussianPolicy};
use klgreed::rng::RngStream;
use klgreed::target::{ClenshawCurtis, IntervalScores};
use rayon::prelude::*;
use std::path::{Path, PathBuf};

/// Final state of one iterate.
#[derive(Debug, Clone)]
pub struct IterateOutcome {
    pub kl: String,
    pub tau: f64,
    pub iterate: u64,
    /// Final value-polytope point (one value per state).
    pub values: Vec<f64>,
    pub mu_hat: Vec<f64>,
    pub sigma: Vec<f64>,
}

pub fn run(config: &SwitchStayConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let outcomes = run_iterates(config)?;
    let rows = outcomes.iter().map(|o| {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            o.kl,
            o.tau,
            o.iterate,
            o.values[0],
            o.values[1],
            o.mu_hat[0],
            o.sigma[0],
            o.mu_hat[1],
            o.sigma[1]
        )
    });
    let file = write_csv(
        out_dir,
        "switch_stay.csv",
        "kl,tau,iterate,v0,v1,mu0,sigma0,mu1,sigma1",
        rows,
    )?;
    Ok(vec![file])
}

/// Runs the full (kl, tau, iterate) grid in parallel; outcomes are in
/// deterministic (kl, tau, iterate) order regardless of thread count.
pub fn run_iterates(config: &SwitchStayConfig) -> Result<Vec<IterateOutcome>> {
    config.validate()?;
    let mut combos = Vec::new();
    for kl in &config.kls {
        for &tau in &config.taus {
            combos.push((kl.clone(), tau));
        }
    }
    let rule = ClenshawCurtis::new(config.quad_nodes);
    let base = RngStream::new(config.seed);
    let mut jobs = Vec::new();
    for (combo_idx, (kl, tau)) in combos.iter().enumerate() {
        for iterate in 0..config.iterates as u64 {
            jobs.push((combo_idx, kl.clone(), *tau, iterate));
        }
    }
    let outcomes: Vec<IterateOutcome> = jobs
        .par_iter()
        .map(|(combo_idx, kl, tau, iterate)| {
            let stream = base
                .substream((*combo_idx as u64) * config.iterates as u64 + iterate);
            run_single(config, kl, *tau, *iterate, stream, &rule)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(outcomes)
}

fn run_single(
    config: &SwitchStayConfig,
    kl: &str,
    tau: f64,
    iterate: u64,
    mut rng: RngStream,
    rule: &ClenshawCurtis,
) -> Result<IterateOutcome> {
    let variant = KlVariant::from_name_tau(kl, tau)?;
    let enc = switch_stay_continuous();
    let n_states = enc.base().n_states();
    let table = NodeTable::new(rule);
    // Discrete action covering each node, fixed by the rule.
    let node_interval: Vec<usize> = table.nodes().iter().map(|&x| enc.action_of(x)).collect();
    // Means start uniform in (-0.95, 0.95); the standard deviation starts
    // at 1.
    let mu0: Vec<f64> = (0..n_states)
        .map(|_| rng.uniform_in(-0.95, 0.95))
        .collect();
    let sig0 = vec![softplus_inverse(1.0); n_states];
    let mut policy = SquashedGaussianPolicy::new(mu0, sig0).expect("two states");
    let mut opt = Optimizer::new(OptimizerKind::rmsprop(), policy.n_params());
    let mut grad = vec![0.0; policy.n_params()];
    let state_weight = 1.0 / n_states as f64;
    let n_actions = enc.base().n_actions();

    for _ in 0..config.steps {
        // One density pass per state per step: the interval masses give the
        // discretized policy (hence the exactly evaluated action-values for
        // the greedification target), and the same node evaluations feed
        // the quadrature gradient.
        let evals: Vec<_> = (0..n_states)
            .map(|s| eval_policy_nodes(&policy, s, &table))
            .collect();
        let masses: Vec<Vec<f64>> = evals
            .iter()
            .map(|ev| {
                let mut mass = vec![0.0; n_actions];
                for (k, &w) in table.weights().iter().enumerate() {
                    mass[node_interval[k]] += w * ev.p[k];
                }
                mass
            })
            .collect();
        let discrete = enc.discretize_masses(&masses)?;
        let values = exact_soft_values(enc.base(), &discrete, variant.tau(), 1e-12)?;
        grad.iter_mut().for_each(|g| *g = 0.0);
        for s in 0..n_states {
            let scores =
                IntervalScores::new(enc.boundaries().to_vec(), values.q_row(s).to_vec())?;
            let (lo, hi) = policy.param_block(s);
            match (config.estimator, variant) {
                // The hard forward KL only consults the maximizing action,
                // in either estimation mode.
                (_, KlVariant::HardFkl) => {
                    let a_star = klgreed::target::ActionScores::greedy_action(&scores, &mut rng);
                    let g = policy.grad_log_prob_clamped(s, a_star);
                    grad[lo] -= state_weight * g[0];
                    grad[hi - 1] -= state_weight * g[1];
                }
                (EstimatorChoice::Quadrature, _) => {
                    let q_nodes: Vec<f64> = node_interval
                        .iter()
                        .map(|&a| values.q(s, a))
                        .collect();
                    let block =
                        grad_block_from_eval(variant, &evals[s], &q_nodes, table.weights());
                    grad[lo] += state_weight * block[0];
                    grad[hi - 1] += state_weight * block[1];
                }
                (EstimatorChoice::Sampled { n }, KlVariant::Fkl { tau }) => {
                    let estimate =
                        grad_fkl_wis_continuous(&policy, &scores, tau, s, n, &mut rng)?;
                    for (g, e) in grad.iter_mut().zip(&estimate.partials) {
                        *g += state_weight * e;
                    }
                }
                (EstimatorChoice::Sampled { n }, _) => {
                    let estimate = grad_sampled_continuous(
                        variant,
                        &policy,
                        &scores,
                        Some(values.v[s]),
                        s,
                        n,
                        &mut rng,
                    )?;
                    for (g, e) in grad.iter_mut().zip(&estimate.partials) {
                        *g += state_weight * e;
                    }
                }
            }
        }
        let mut params = policy.params().to_vec();
        opt.step(&mut params, &grad, config.lr)?;
        policy.set_params(&params);
    }

    let values = polytope_point(&enc, &policy, rule)?;
    Ok(IterateOutcome {
        kl: kl.to_string(),
        tau,
        iterate,
        values,
        mu_hat: (0..n_states).map(|s| policy.mu(s)).collect(),
        sigma: (0..n_states).map(|s| policy.sigma(s)).collect(),
    })
}
