//! The training loop: a tabular environment wrapper, a replay buffer,
//! tabular action- and state-value critics, the KL-greedification policy
//! update, and the exact-evaluation variant used for the exploration
//! studies.
//!
//! Episode cut-offs (timeouts) reset the position but are *not* terminal:
//! the stored transition keeps `done = false` so bootstrapping still uses
//! the next state's value.

use crate::error::{Error, Result};
use crate::greedify::{add_grad_all_actions, KlVariant};
use crate::mdp::{
    exact_soft_values, soft_values_relative_stop, FiniteMdp, SoftValues,
};
use crate::optim::{Optimizer, OptimizerKind};
use crate::policy::SoftmaxPolicy;
use crate::rng::RngStream;

/// Relative-change stopping rule for exact policy evaluation in the maze:
/// below 0.01% for 10 consecutive sweeps.
pub const DP_REL_TOL: f64 = 1e-4;
pub const DP_CONSECUTIVE: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub s: usize,
    pub a: usize,
    pub r: f64,
    pub s_next: usize,
    /// True only for genuine terminal transitions, never for timeouts.
    pub done: bool,
}

/// Fixed-capacity ring buffer with uniform sampling over current contents.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    data: Vec<Transition>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        Self {
            capacity,
            data: Vec::with_capacity(capacity),
            next: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: Transition) {
        if self.data.len() < self.capacity {
            self.data.push(t);
        } else {
            self.data[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn sample(&self, rng: &mut RngStream) -> Transition {
        let i = (rng.uniform() * self.data.len() as f64) as usize;
        self.data[i.min(self.data.len() - 1)]
    }
}

/// Tabular action-value and state-value estimates.
#[derive(Debug, Clone)]
pub struct TabularCritics {
    pub q: Vec<f64>,
    pub v: Vec<f64>,
    n_actions: usize,
}

impl TabularCritics {
    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        Self {
            q: vec![0.0; n_states * n_actions],
            v: vec![0.0; n_states],
            n_actions,
        }
    }

    pub fn q_value(&self, s: usize, a: usize) -> f64 {
        self.q[s * self.n_actions + a]
    }

    pub fn q_row(&self, s: usize) -> &[f64] {
        &self.q[s * self.n_actions..(s + 1) * self.n_actions]
    }
}

/// Sampled-transition environment over a tabular MDP with designated
/// terminal states and an episode cut-off.
#[derive(Debug, Clone)]
pub struct TabularEnv {
    mdp: FiniteMdp,
    terminal: Vec<bool>,
    timeout: usize,
    state: usize,
    episode_steps: usize,
}

/// What one environment interaction produced.
#[derive(Debug, Clone, Copy)]
pub struct StepOutcome {
    pub transition: Transition,
    /// Episode hit the cut-off and the position was reset; not terminal.
    pub timed_out: bool,
}

impl TabularEnv {
    pub fn new(mdp: FiniteMdp, terminal: Vec<bool>, timeout: usize, rng: &mut RngStream) -> Self {
        assert_eq!(terminal.len(), mdp.n_states());
        let state = rng.categorical(mdp.start_dist());
        Self {
            mdp,
            terminal,
            timeout,
            state,
            episode_steps: 0,
        }
    }

    pub fn mdp(&self) -> &FiniteMdp {
        &self.mdp
    }

    pub fn state(&self) -> usize {
        self.state
    }

    fn reset(&mut self, rng: &mut RngStream) {
        self.state = rng.categorical(self.mdp.start_dist());
        self.episode_steps = 0;
    }

    pub fn step(&mut self, a: usize, rng: &mut RngStream) -> StepOutcome {
        let s = self.state;
        let s_next = rng.categorical(self.mdp.transition_row(s, a));
        let r = self.mdp.reward(s, a);
        let done = self.terminal[s_next];
        let transition = Transition {
            s,
            a,
            r,
            s_next,
            done,
        };
        self.state = s_next;
        self.episode_steps += 1;
        let timed_out = !done && self.episode_steps >= self.timeout;
        if done || timed_out {
            self.reset(rng);
        }
        StepOutcome {
            transition,
            timed_out,
        }
    }
}

/// One policy-driven environment interaction, appended to the buffer.
pub fn agent_step(
    env: &mut TabularEnv,
    policy: &SoftmaxPolicy,
    buffer: &mut ReplayBuffer,
    rng: &mut RngStream,
) -> Transition {
    let a = policy.sample(env.state(), rng);
    let outcome = env.step(a, rng);
    buffer.push(outcome.transition);
    outcome.transition
}

/// Gradients for the two critics from one minibatch.
#[derive(Debug, Clone)]
pub struct ValueGradients {
    /// Aligned with the state-value table.
    pub v_grad: Vec<f64>,
    /// Aligned with the action-value table, state-major.
    pub q_grad: Vec<f64>,
}

/// Semi-gradient critic updates: the state-value target is
/// `Q(s, a~) - tau ln pi(a~|s)` with `a~` freshly drawn from the policy, and
/// the action-value target bootstraps `r + gamma (1 - done) V(s')`.
/// Both sums are divided by the batch size.
pub fn value_updates(
    batch: &[Transition],
    policy: &SoftmaxPolicy,
    critics: &TabularCritics,
    tau: f64,
    gamma: f64,
    rng: &mut RngStream,
) -> ValueGradients {
    assert!(!batch.is_empty(), "batch must be nonempty");
    let mut v_grad = vec![0.0; critics.v.len()];
    let mut q_grad = vec![0.0; critics.q.len()];
    let scale = 1.0 / batch.len() as f64;
    for t in batch {
        let a_tilde = policy.sample(t.s, rng);
        let v_target = critics.q_value(t.s, a_tilde) - tau * policy.log_prob(t.s, a_tilde);
        v_grad[t.s] -= scale * (v_target - critics.v[t.s]);
        let not_done = if t.done { 0.0 } else { 1.0 };
        let q_target = t.r + gamma * not_done * critics.v[t.s_next];
        q_grad[t.s * critics.n_actions + t.a] -= scale * (q_target - critics.q_value(t.s, t.a));
    }
    ValueGradients { v_grad, q_grad }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub variant: KlVariant,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub iterations: usize,
    pub timeout: usize,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    /// Evenly spaced evaluation points, always including start and end.
    pub n_checkpoints: usize,
    pub rollouts_per_checkpoint: usize,
}

impl TrainConfig {
    /// Maze defaults: replay of 10k, batches of 32, RMSprop critics at 1e-3,
    /// 20k iterations, 10k-step episode cut-off.
    pub fn maze_defaults(variant: KlVariant, seed: u64) -> Self {
        Self {
            variant,
            actor_lr: 1e-3,
            critic_lr: 1e-3,
            batch_size: 32,
            buffer_capacity: 10_000,
            iterations: 20_000,
            timeout: 10_000,
            seed,
            optimizer: OptimizerKind::rmsprop(),
            n_checkpoints: 5,
            rollouts_per_checkpoint: 100,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CheckpointRecord {
    pub step: usize,
    /// Exact soft performance of the current policy.
    pub eta_tau: f64,
    /// Exact unregularized performance.
    pub eta: f64,
    /// Normalized state-visitation counts from policy rollouts.
    pub visitation: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub checkpoints: Vec<CheckpointRecord>,
    pub policy: SoftmaxPolicy,
    pub critics: TabularCritics,
    /// Diagnostic set when a non-finite gradient aborted the run early.
    pub aborted: Option<String>,
}

fn checkpoint_steps(iterations: usize, n_checkpoints: usize) -> Vec<usize> {
    if n_checkpoints <= 1 {
        return vec![iterations];
    }
    let mut steps: Vec<usize> = (0..n_checkpoints)
        .map(|k| k * iterations / (n_checkpoints - 1))
        .collect();
    steps.dedup();
    steps
}

/// Replay-buffer training: one environment step per iteration, then (once
/// the buffer can fill a batch) one all-actions policy update against the
/// learned action-values and one critic update per iteration.
pub fn train(mdp: &FiniteMdp, terminal: &[bool], config: &TrainConfig) -> Result<TrainResult> {
    let tau = config.variant.tau();
    let mut rng = RngStream::new(config.seed);
    let mut env = TabularEnv::new(mdp.clone(), terminal.to_vec(), config.timeout, &mut rng);
    let mut policy = SoftmaxPolicy::zeros(mdp.n_states(), mdp.n_actions());
    let mut critics = TabularCritics::zeros(mdp.n_states(), mdp.n_actions());
    let mut buffer = ReplayBuffer::new(config.buffer_capacity);
    let mut actor_opt = Optimizer::new(config.optimizer, policy.n_params());
    let mut v_opt = Optimizer::new(config.optimizer, critics.v.len());
    let mut q_opt = Optimizer::new(config.optimizer, critics.q.len());
    let marks = checkpoint_steps(config.iterations, config.n_checkpoints);
    let mut checkpoints = Vec::with_capacity(marks.len());
    let mut aborted = None;

    let mut actor_grad = vec![0.0; policy.n_params()];
    for t in 0..=config.iterations {
        if marks.contains(&t) {
            checkpoints.push(record_checkpoint(
                mdp, terminal, &policy, tau, t, config,
            )?);
        }
        if t == config.iterations || aborted.is_some() {
            break;
        }
        agent_step(&mut env, &policy, &mut buffer, &mut rng);
        if buffer.len() < config.batch_size {
            continue;
        }
        let batch: Vec<Transition> = (0..config.batch_size)
            .map(|_| buffer.sample(&mut rng))
            .collect();
        actor_grad.iter_mut().for_each(|g| *g = 0.0);
        let scale = 1.0 / batch.len() as f64;
        for tr in &batch {
            add_grad_all_actions(
                config.variant,
                &policy,
                critics.q_row(tr.s),
                tr.s,
                &mut rng,
                scale,
                &mut actor_grad,
            );
        }
        let values = value_updates(&batch, &policy, &critics, tau, mdp.gamma(), &mut rng);
        let mut params = policy.params().to_vec();
        let step_result = actor_opt
            .step(&mut params, &actor_grad, config.actor_lr)
            .and_then(|_| v_opt.step(&mut critics.v, &values.v_grad, config.critic_lr))
            .and_then(|_| q_opt.step(&mut critics.q, &values.q_grad, config.critic_lr));
        match step_result {
            Ok(()) => policy.set_params(&params),
            Err(e) => {
                aborted = Some(format!("aborted at iteration {t}: {e}"));
            }
        }
    }
    Ok(TrainResult {
        checkpoints,
        policy,
        critics,
        aborted,
    })
}

fn record_checkpoint(
    mdp: &FiniteMdp,
    terminal: &[bool],
    policy: &SoftmaxPolicy,
    tau: f64,
    step: usize,
    config: &TrainConfig,
) -> Result<CheckpointRecord> {
    let table = policy.table();
    let eta_tau = expected_start(mdp, &exact_soft_values(mdp, &table, tau, 1e-9)?);
    let eta = if tau == 0.0 {
        eta_tau
    } else {
        expected_start(mdp, &exact_soft_values(mdp, &table, 0.0, 1e-9)?)
    };
    // Evaluation rollouts use a stream derived from the base seed and the
    // checkpoint step, so recording never perturbs the training stream.
    let mut eval_rng = RngStream::new(config.seed).substream(1_000_000 + step as u64);
    let visitation = rollout_visitation(
        mdp,
        terminal,
        policy,
        config.rollouts_per_checkpoint,
        config.timeout,
        &mut eval_rng,
    );
    Ok(CheckpointRecord {
        step,
        eta_tau,
        eta,
        visitation,
    })
}

fn expected_start(mdp: &FiniteMdp, vals: &SoftValues) -> f64 {
    mdp.start_dist()
        .iter()
        .zip(&vals.v)
        .map(|(&p, &v)| p * v)
        .sum()
}

/// Visitation counts over `n_rollouts` policy rollouts (each capped at
/// `max_steps`, ending early at terminal states), normalized to sum to one.
pub fn rollout_visitation(
    mdp: &FiniteMdp,
    terminal: &[bool],
    policy: &SoftmaxPolicy,
    n_rollouts: usize,
    max_steps: usize,
    rng: &mut RngStream,
) -> Vec<f64> {
    let mut counts = vec![0.0; mdp.n_states()];
    for _ in 0..n_rollouts {
        let mut s = rng.categorical(mdp.start_dist());
        counts[s] += 1.0;
        for _ in 0..max_steps {
            if terminal[s] {
                break;
            }
            let a = policy.sample(s, rng);
            s = rng.categorical(mdp.transition_row(s, a));
            counts[s] += 1.0;
        }
    }
    let total: f64 = counts.iter().sum();
    if total > 0.0 {
        for c in &mut counts {
            *c /= total;
        }
    }
    counts
}

/// Follows the policy's argmax action from a start-state draw; reports
/// whether a terminal state was reached within `max_steps` and how long it
/// took.
pub fn greedy_rollout(
    mdp: &FiniteMdp,
    terminal: &[bool],
    policy: &SoftmaxPolicy,
    max_steps: usize,
    rng: &mut RngStream,
) -> (bool, usize) {
    let mut s = rng.categorical(mdp.start_dist());
    for step in 0..max_steps {
        if terminal[s] {
            return (true, step);
        }
        let probs = policy.probs(s);
        let a = probs
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.partial_cmp(y.1).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        s = rng.categorical(mdp.transition_row(s, a));
    }
    (terminal[s], max_steps)
}

/// Exact-evaluation training: alternates dynamic-programming policy
/// evaluation (relative stopping rule) with one full-state greedification
/// step, RMSprop at the given rate. Returns the policy after every
/// iteration, the initialization first.
pub fn true_value_training(
    mdp: &FiniteMdp,
    variant: KlVariant,
    lr: f64,
    iterations: usize,
    seed: u64,
) -> Result<Vec<SoftmaxPolicy>> {
    let tau = variant.tau();
    let mut rng = RngStream::new(seed);
    let mut policy = SoftmaxPolicy::zeros(mdp.n_states(), mdp.n_actions());
    let mut opt = Optimizer::new(OptimizerKind::rmsprop(), policy.n_params());
    let mut snapshots = Vec::with_capacity(iterations + 1);
    snapshots.push(policy.clone());
    let mut grad = vec![0.0; policy.n_params()];
    let scale = 1.0 / mdp.n_states() as f64;
    for _ in 0..iterations {
        let values =
            soft_values_relative_stop(mdp, &policy.table(), tau, DP_REL_TOL, DP_CONSECUTIVE)?;
        grad.iter_mut().for_each(|g| *g = 0.0);
        for s in 0..mdp.n_states() {
            add_grad_all_actions(
                variant,
                &policy,
                values.q_row(s),
                s,
                &mut rng,
                scale,
                &mut grad,
            );
        }
        let mut params = policy.params().to_vec();
        opt.step(&mut params, &grad, lr)
            .map_err(|e| Error::Invalid(format!("greedification step failed: {e}")))?;
        policy.set_params(&params);
        snapshots.push(policy.clone());
    }
    Ok(snapshots)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::greedify::KlVariant;
    use crate::mdp::maze::MazeLayout;
    use crate::mdp::{discrete_maze, switch_stay, value_iteration, DiscretePolicy};
    use approx::assert_abs_diff_eq;

    fn small_maze() -> (MazeLayout, FiniteMdp, Vec<bool>) {
        let layout = MazeLayout::generate(5, 5, 11);
        let mdp = discrete_maze(&layout, (0, 0), (4, 4), 0.99);
        let goal = layout.index(4, 4);
        let mut terminal = vec![false; 25];
        terminal[goal] = true;
        (layout, mdp, terminal)
    }

    #[test]
    fn replay_ring_and_uniform_sampling() {
        let mut buf = ReplayBuffer::new(8);
        for i in 0..20 {
            buf.push(Transition {
                s: i,
                a: 0,
                r: 0.0,
                s_next: 0,
                done: false,
            });
        }
        assert_eq!(buf.len(), 8);
        // Only the last 8 transitions remain.
        let mut rng = RngStream::new(1);
        for _ in 0..100 {
            let t = buf.sample(&mut rng);
            assert!(t.s >= 12);
        }
        // Chi-square uniformity over a full buffer.
        let mut counts = vec![0.0; 8];
        let n = 80_000;
        for _ in 0..n {
            counts[buf.sample(&mut rng).s - 12] += 1.0;
        }
        let expected = n as f64 / 8.0;
        let chi2: f64 = counts.iter().map(|c| (c - expected).powi(2) / expected).sum();
        // 7 degrees of freedom; p > 0.001 cutoff is 24.32.
        assert!(chi2 < 24.32, "chi2 {chi2}");
    }

    #[test]
    fn maze_env_rewards_and_timeout_semantics() {
        let (layout, mdp, terminal) = small_maze();
        let mut rng = RngStream::new(3);
        let mut env = TabularEnv::new(mdp.clone(), terminal.clone(), 50, &mut rng);
        let goal = layout.index(4, 4);
        let mut saw_goal = false;
        let mut saw_timeout = false;
        for _ in 0..20_000 {
            let a = (rng.uniform() * 4.0) as usize;
            let out = env.step(a, &mut rng);
            if out.transition.done {
                saw_goal = true;
                assert_eq!(out.transition.s_next, goal);
                assert_eq!(out.transition.r, 1.0);
            } else {
                assert_abs_diff_eq!(out.transition.r, -0.1 / 25.0, epsilon = 1e-15);
            }
            if out.timed_out {
                saw_timeout = true;
                // Timeout is not terminal in the stored transition.
                assert!(!out.transition.done);
            }
        }
        assert!(saw_goal, "random walk should reach the goal eventually");
        assert!(saw_timeout, "short cut-off should trigger timeouts");
    }

    #[test]
    fn value_updates_batch_semantics() {
        let mdp = switch_stay();
        let policy = SoftmaxPolicy::zeros(2, 2);
        let critics = TabularCritics::zeros(2, 2);
        let t = Transition {
            s: 0,
            a: 1,
            r: -1.0,
            s_next: 1,
            done: false,
        };
        // A batch of identical transitions equals the single-transition
        // update (same rng for the fresh action draws).
        let single = value_updates(&[t], &policy, &critics, 0.0, 0.9, &mut RngStream::new(5));
        let batch = value_updates(
            &[t; 4],
            &policy,
            &critics,
            0.0,
            0.9,
            &mut RngStream::new(5),
        );
        assert_abs_diff_eq!(single.q_grad[1], batch.q_grad[1], epsilon = 1e-12);
        // Terminal transitions exclude the bootstrap term.
        let done = Transition {
            s: 0,
            a: 0,
            r: 2.0,
            s_next: 1,
            done: true,
        };
        let mut critics2 = TabularCritics::zeros(2, 2);
        critics2.v[1] = 100.0;
        let g = value_updates(&[done], &policy, &critics2, 0.0, 0.9, &mut RngStream::new(5));
        // Target is r alone: gradient is -(2.0 - 0.0).
        assert_abs_diff_eq!(g.q_grad[0], -2.0, epsilon = 1e-12);
    }

    #[test]
    fn value_updates_vanish_at_fixed_point() {
        // With critics set to the exact soft values of a frozen policy, the
        // expected gradients are zero (checked to 3 standard errors).
        let mdp = switch_stay();
        let policy = SoftmaxPolicy::new(2, 2, vec![0.3, -0.2, 0.1, 0.5]).unwrap();
        let tau = 0.2;
        let vals = exact_soft_values(&mdp, &policy.table(), tau, 1e-12).unwrap();
        let mut critics = TabularCritics::zeros(2, 2);
        critics.q.copy_from_slice(&vals.q);
        critics.v.copy_from_slice(&vals.v);
        let mut rng = RngStream::new(8);
        let mut env = TabularEnv::new(mdp.clone(), vec![false, false], usize::MAX, &mut rng);
        let n = 10_000;
        let dim = 6; // 2 v entries + 4 q entries
        let mut sum = vec![0.0; dim];
        let mut sumsq = vec![0.0; dim];
        for _ in 0..n {
            let a = policy.sample(env.state(), &mut rng);
            let out = env.step(a, &mut rng);
            let g = value_updates(&[out.transition], &policy, &critics, tau, 0.9, &mut rng);
            let flat: Vec<f64> = g.v_grad.iter().chain(&g.q_grad).cloned().collect();
            for (k, x) in flat.iter().enumerate() {
                sum[k] += x;
                sumsq[k] += x * x;
            }
        }
        for k in 0..dim {
            let mean = sum[k] / n as f64;
            let var = (sumsq[k] / n as f64 - mean * mean).max(0.0);
            let stderr = (var / n as f64).sqrt().max(1e-9);
            assert!(
                mean.abs() <= 3.0 * stderr,
                "coord {k}: mean {mean}, stderr {stderr}"
            );
        }
    }

    #[test]
    fn critics_converge_on_switch_stay() {
        // Frozen policy, 1e5 critic-only update steps: both tables end
        // within 0.05 of the exact soft values.
        let mdp = switch_stay();
        let policy = SoftmaxPolicy::new(2, 2, vec![0.4, -0.1, -0.3, 0.6]).unwrap();
        let tau = 0.1;
        let vals = exact_soft_values(&mdp, &policy.table(), tau, 1e-12).unwrap();
        let mut rng = RngStream::new(12);
        let mut env = TabularEnv::new(mdp.clone(), vec![false, false], usize::MAX, &mut rng);
        let mut buffer = ReplayBuffer::new(10_000);
        let mut critics = TabularCritics::zeros(2, 2);
        let mut v_opt = Optimizer::new(OptimizerKind::Sgd, 2);
        let mut q_opt = Optimizer::new(OptimizerKind::Sgd, 4);
        for _ in 0..100_000 {
            agent_step(&mut env, &policy, &mut buffer, &mut rng);
            if buffer.len() < 32 {
                continue;
            }
            let batch: Vec<Transition> = (0..32).map(|_| buffer.sample(&mut rng)).collect();
            let g = value_updates(&batch, &policy, &critics, tau, mdp.gamma(), &mut rng);
            v_opt.step(&mut critics.v, &g.v_grad, 0.05).unwrap();
            q_opt.step(&mut critics.q, &g.q_grad, 0.05).unwrap();
        }
        for s in 0..2 {
            assert!(
                (critics.v[s] - vals.v[s]).abs() < 0.05,
                "v[{s}] {} vs {}",
                critics.v[s],
                vals.v[s]
            );
            for a in 0..2 {
                assert!(
                    (critics.q_value(s, a) - vals.q(s, a)).abs() < 0.05,
                    "q[{s},{a}] {} vs {}",
                    critics.q_value(s, a),
                    vals.q(s, a)
                );
            }
        }
    }

    #[test]
    fn train_is_deterministic() {
        let (_, mdp, terminal) = small_maze();
        let mut config = TrainConfig::maze_defaults(KlVariant::HardRkl, 42);
        config.iterations = 300;
        config.n_checkpoints = 3;
        config.rollouts_per_checkpoint = 5;
        config.timeout = 200;
        let a = train(&mdp, &terminal, &config).unwrap();
        let b = train(&mdp, &terminal, &config).unwrap();
        assert_eq!(a.policy.params(), b.policy.params());
        for (x, y) in a.checkpoints.iter().zip(&b.checkpoints) {
            assert_eq!(x.eta_tau.to_bits(), y.eta_tau.to_bits());
            assert_eq!(x.visitation, y.visitation);
        }
        assert_eq!(a.checkpoints.len(), 3);
        assert_eq!(a.checkpoints[0].step, 0);
        assert_eq!(a.checkpoints.last().unwrap().step, 300);
    }

    #[test]
    fn no_done_without_terminal() {
        let (_, mdp, _) = small_maze();
        // No terminal states at all: nothing stored may carry done = true,
        // even across timeouts.
        let terminal = vec![false; 25];
        let mut rng = RngStream::new(9);
        let mut env = TabularEnv::new(mdp.clone(), terminal, 40, &mut rng);
        let policy = SoftmaxPolicy::zeros(25, 4);
        let mut buffer = ReplayBuffer::new(512);
        for _ in 0..512 {
            let t = agent_step(&mut env, &policy, &mut buffer, &mut rng);
            assert!(!t.done);
        }
    }

    #[test]
    fn true_value_training_tau_zero_reaches_optimal() {
        let (_, mdp, _) = small_maze();
        let snapshots =
            true_value_training(&mdp, KlVariant::HardRkl, 0.1, 100, 3).unwrap();
        assert_eq!(snapshots.len(), 101);
        // Iteration 0 snapshot is the uniform initialization.
        assert!(snapshots[0].params().iter().all(|&x| x == 0.0));
        let final_policy = snapshots.last().unwrap().table();
        let (_, oracle) = value_iteration(&mdp, 1e-10).unwrap();
        let greedy = final_policy.greedy_actions();
        let optimal = oracle.greedy_actions();
        let matches = greedy
            .iter()
            .zip(&optimal)
            .filter(|(a, b)| a == b)
            .count();
        // At least 99% of states (the goal state's action is arbitrary).
        assert!(matches * 100 >= 99 * 24, "{matches}/25 greedy matches");
    }

    #[test]
    fn true_value_training_entropy_increases_with_tau() {
        let (_, mdp, _) = small_maze();
        let hard = true_value_training(&mdp, KlVariant::HardRkl, 0.1, 100, 3).unwrap();
        let soft = true_value_training(
            &mdp,
            KlVariant::Rkl { tau: 0.1 },
            0.1,
            100,
            3,
        )
        .unwrap();
        let mean_entropy = |p: &SoftmaxPolicy| -> f64 {
            (0..25).map(|s| p.entropy(s)).sum::<f64>() / 25.0
        };
        let h_hard = mean_entropy(hard.last().unwrap());
        let h_soft = mean_entropy(soft.last().unwrap());
        assert!(
            h_soft > h_hard,
            "entropy with tau = 0.1 ({h_soft}) should exceed tau = 0 ({h_hard})"
        );
    }

    #[test]
    fn greedy_rollout_on_optimal_policy() {
        let (_, mdp, terminal) = small_maze();
        let (_, oracle) = value_iteration(&mdp, 1e-10).unwrap();
        // Convert the deterministic oracle into logits.
        let mut logits = vec![0.0; 100];
        for s in 0..25 {
            for a in 0..4 {
                if oracle.prob(s, a) > 0.5 {
                    logits[s * 4 + a] = 10.0;
                }
            }
        }
        let policy = SoftmaxPolicy::new(25, 4, logits).unwrap();
        let (reached, steps) = greedy_rollout(&mdp, &terminal, &policy, 1000, &mut RngStream::new(2));
        assert!(reached);
        assert!(steps <= 48, "optimal path should be short, took {steps}");
    }

    #[test]
    fn checkpoint_steps_layout() {
        assert_eq!(checkpoint_steps(100, 5), vec![0, 25, 50, 75, 100]);
        assert_eq!(checkpoint_steps(10, 1), vec![10]);
        assert_eq!(checkpoint_steps(7, 2), vec![0, 7]);
    }

    #[test]
    fn uniform_policy_on_discrete_policy_rows() {
        let pi = DiscretePolicy::uniform(3, 4);
        for s in 0..3 {
            assert_abs_diff_eq!(pi.entropy(s), 4.0f64.ln(), epsilon = 1e-12);
        }
    }
}
