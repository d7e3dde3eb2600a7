//! Runs the full verification suite — identities, inequality bounds, the
//! forward-KL counterexample, the sufficient-reduction implication — and
//! exports the relative-gap experiment as CSV.

use crate::config::TheoryConfig;
use crate::out::write_csv;
use anyhow::Result;
use klgreed::mdp::{switch_stay, DiscretePolicy, FiniteMdp};
use klgreed::rng::RngStream;
use klgreed::target::{boltzmann_probs, kl_discrete, total_variation};
use klgreed::theory::{
    build_fkl_counterexample, check_approx_spd, check_avg_fkl_reduction, check_dpiold_bounds,
    check_intermediate_inequality, check_kappa_bound, check_rkl_improvement, check_soft_perf_diff,
    exact_soft_values_for, fkl_sufficient_bound, gap_summaries, near_policy, random_mdp,
    random_policy, relative_gap_experiment,
};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// One named check with its verdict.
#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

pub struct TheoryRun {
    pub outcomes: Vec<CheckOutcome>,
    pub files: Vec<PathBuf>,
}

pub fn run(config: &TheoryConfig, out_dir: &Path) -> Result<TheoryRun> {
    config.validate()?;
    let mut outcomes = Vec::new();

    // --- identity suite -----------------------------------------------
    let mut rng = RngStream::new(config.seed);
    let mut mdps: Vec<(String, FiniteMdp)> = vec![("switch-stay".into(), switch_stay())];
    for i in 0..config.random_mdps {
        mdps.push((format!("random-3x3-{i}"), random_mdp(3, 3, 0.9, &mut rng)));
    }
    for (name, mdp) in &mdps {
        let mut worst_spd = 0.0f64;
        let mut worst_rkl = 0.0f64;
        let mut worst_approx = 0.0f64;
        let mut ok = true;
        for &tau in &config.taus {
            for _ in 0..config.pairs {
                let pi_old = random_policy(mdp.n_states(), mdp.n_actions(), &mut rng);
                let pi_new = random_policy(mdp.n_states(), mdp.n_actions(), &mut rng);
                let spd = check_soft_perf_diff(mdp, &pi_old, &pi_new, tau)?;
                let rkl = check_rkl_improvement(mdp, &pi_old, &pi_new, tau)?;
                let q_exact = exact_soft_values_for(mdp, &pi_old, tau)?;
                let q_hat: Vec<f64> = q_exact
                    .iter()
                    .map(|&q| q + rng.uniform_in(-1.0, 1.0))
                    .collect();
                let approx = check_approx_spd(mdp, &pi_old, &pi_new, &q_hat, tau)?;
                worst_spd = worst_spd.max(spd.abs_gap);
                worst_rkl = worst_rkl.max(rkl.abs_gap);
                worst_approx = worst_approx.max(approx.abs_gap);
                ok &= spd.passed && rkl.passed && approx.passed;
            }
        }
        outcomes.push(CheckOutcome::new(
            format!("identities[{name}]"),
            ok,
            format!(
                "worst gaps: spd {worst_spd:.2e}, rkl-improvement {worst_rkl:.2e}, approx-spd {worst_approx:.2e}"
            ),
        ));
    }

    // --- inequality suite ----------------------------------------------
    let mdp = switch_stay();
    let mut worst = f64::INFINITY;
    let mut ok = true;
    let mut n_checked = 0;
    while n_checked < config.instances {
        let pi_old = random_policy(2, 2, &mut rng);
        let pi_new = near_policy(&pi_old, 0.03, &mut rng);
        let alpha = (0..2)
            .map(|s| kl_discrete(pi_new.row(s), pi_old.row(s)).unwrap())
            .fold(0.0f64, f64::max)
            .max(1e-12);
        let tau = config.taus[n_checked % config.taus.len()];
        let exact = check_dpiold_bounds(&mdp, &pi_old, &pi_new, tau, alpha, None)?;
        let q_exact = exact_soft_values_for(&mdp, &pi_old, tau)?;
        let q_hat: Vec<f64> = q_exact
            .iter()
            .map(|&q| q + rng.uniform_in(-0.5, 0.5))
            .collect();
        let approx = check_dpiold_bounds(&mdp, &pi_old, &pi_new, tau, alpha, Some(&q_hat))?;
        if exact.hypotheses_satisfied {
            ok &= exact.slack >= -1e-8;
            worst = worst.min(exact.slack);
            n_checked += 1;
        }
        if approx.hypotheses_satisfied {
            ok &= approx.slack >= -1e-8;
            worst = worst.min(approx.slack);
        }
    }
    outcomes.push(CheckOutcome::new(
        "dpiold-lower-bounds",
        ok,
        format!("{n_checked} hypothesis-satisfying pairs, min slack {worst:.2e}"),
    ));

    let mut ok = true;
    let mut worst = f64::INFINITY;
    let mut n_checked = 0;
    while n_checked < config.instances {
        let q: Vec<f64> = (0..5).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
        let tau = config.taus[n_checked % config.taus.len()];
        let pi_old = rng.simplex(5);
        let pi_new = rng.simplex(5);
        let r = check_intermediate_inequality(&pi_old, &pi_new, &q, tau)?;
        if r.hypotheses_satisfied {
            ok &= r.slack >= -1e-8;
            worst = worst.min(r.slack);
            n_checked += 1;
        }
    }
    outcomes.push(CheckOutcome::new(
        "intermediate-inequality",
        ok,
        format!("{n_checked} hypothesis-satisfying instances, min slack {worst:.2e}"),
    ));

    let mut ok = true;
    for _ in 0..config.instances {
        let p = rng.simplex(4);
        let q = rng.simplex(4);
        let tv = total_variation(&p, &q);
        ok &= tv <= (2.0 * kl_discrete(&p, &q)?).sqrt() + 1e-8;
    }
    outcomes.push(CheckOutcome::new(
        "pinsker",
        ok,
        format!("{} random pairs", config.instances),
    ));

    let mut ok = true;
    let mut worst = f64::INFINITY;
    for i in 0..config.instances {
        let q: Vec<f64> = (0..5).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
        let tau = config.taus[i % config.taus.len()];
        let pi = rng.simplex(5);
        let r = check_kappa_bound(&pi, &q, tau)?;
        ok &= r.slack >= -1e-8;
        worst = worst.min(r.slack);
    }
    outcomes.push(CheckOutcome::new(
        "kappa-fkl-upper-bounds-rkl",
        ok,
        format!("{} instances, min slack {worst:.2e}", config.instances),
    ));

    // --- average sufficient FKL reduction on the MDP ---------------------
    let mut n_qualifying = 0;
    let mut ok = true;
    for i in 0..config.instances {
        let tau = config.taus[i % config.taus.len()];
        let pi_old = random_policy(2, 2, &mut rng);
        let q_exact = exact_soft_values_for(&mdp, &pi_old, tau)?;
        let beta = rng.uniform();
        let mut probs = Vec::new();
        for s in 0..2 {
            let b = boltzmann_probs(&q_exact[s * 2..(s + 1) * 2], tau)?;
            let u = rng.simplex(2);
            probs.extend(b.iter().zip(&u).map(|(&t, &x)| beta * t + (1.0 - beta) * x));
        }
        let pi_new = DiscretePolicy::new(2, 2, probs)?;
        let r = check_avg_fkl_reduction(&mdp, &pi_old, &pi_new, tau, None)?;
        if r.hypotheses_satisfied {
            n_qualifying += 1;
            ok &= r.slack >= -1e-10;
        }
    }
    outcomes.push(CheckOutcome::new(
        "avg-sufficient-fkl-reduction",
        ok && n_qualifying > 0,
        format!("{n_qualifying} qualifying pairs out of {}", config.instances),
    ));

    // --- counterexample --------------------------------------------------
    for &tau in &config.counterexample_taus {
        match build_fkl_counterexample(tau, config.counterexample_gamma) {
            Ok((eps1, eps2, report)) => {
                outcomes.push(CheckOutcome::new(
                    format!("fkl-counterexample[tau={tau}]"),
                    report.certified,
                    format!(
                        "eps1 {eps1:.1e}, eps2 {eps2}, delta-fkl {:.3e}, eta {:.6} -> {:.6}",
                        report.delta_fkl, report.eta_old, report.eta_new
                    ),
                ));
            }
            Err(e) => {
                outcomes.push(CheckOutcome::new(
                    format!("fkl-counterexample[tau={tau}]"),
                    false,
                    format!("{e}"),
                ));
            }
        }
    }

    // --- sufficient-reduction implication (bandit) ----------------------
    let per_instance = 200;
    let n_instances = config.implication_samples / per_instance;
    let mut n_hyp = 0;
    let mut n_qualifying = 0;
    let mut ok = true;
    for i in 0..n_instances {
        let tau = config.gap_taus[i % config.gap_taus.len()].min(10.0);
        let q: Vec<f64> = (0..config.gap_actions)
            .map(|_| rng.uniform_in(-1.0, 1.0))
            .collect();
        let pi_old = rng.simplex(config.gap_actions);
        let r = fkl_sufficient_bound(&pi_old, &q, tau, per_instance, &mut rng)?;
        if r.hypothesis {
            n_hyp += 1;
            n_qualifying += r.n_qualifying;
            ok &= r.min_delta_rkl >= -1e-10;
        }
    }
    outcomes.push(CheckOutcome::new(
        "fkl-sufficient-bound-implication",
        ok && n_hyp > 0 && n_qualifying > 0,
        format!(
            "{n_hyp}/{n_instances} hypothesis-satisfying instances, {n_qualifying} qualifying samples"
        ),
    ));

    // --- relative-gap experiment ----------------------------------------
    let rows = relative_gap_experiment(
        config.gap_actions,
        &config.gap_lambdas,
        &config.gap_taus,
        config.gap_seeds,
        config.seed,
    )?;
    let gaps_in_range = rows
        .iter()
        .all(|r| (0.0..=1.0 + 1e-12).contains(&r.relative_gap));
    outcomes.push(CheckOutcome::new(
        "relative-gap-range",
        gaps_in_range,
        format!("{} rows", rows.len()),
    ));
    let mut files = Vec::new();
    files.push(write_csv(
        out_dir,
        "relative_gap.csv",
        "lambda,tau,seed,bound,max_reduction,relative_gap",
        rows.iter().map(|r| {
            format!(
                "{},{},{},{},{},{}",
                r.lambda, r.tau, r.seed, r.bound, r.max_reduction, r.relative_gap
            )
        }),
    )?);
    let summaries = gap_summaries(&rows);
    files.push(write_csv(
        out_dir,
        "relative_gap_summary.csv",
        "lambda,tau,median,p25,p75",
        summaries.iter().map(|s| {
            format!("{},{},{},{},{}", s.lambda, s.tau, s.median, s.p25, s.p75)
        }),
    )?);

    Ok(TheoryRun { outcomes, files })
}

pub fn render_report(outcomes: &[CheckOutcome]) -> String {
    let mut out = String::new();
    for o in outcomes {
        let verdict = if o.passed { "PASS" } else { "FAIL" };
        let _ = writeln!(out, "[{verdict}] {} — {}", o.name, o.detail);
    }
    let n_fail = outcomes.iter().filter(|o| !o.passed).count();
    let _ = writeln!(
        out,
        "{} checks, {} failed",
        outcomes.len(),
        n_fail
    );
    out
}
