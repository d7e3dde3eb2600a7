//! Loss surfaces of the four KL variants on the continuous bimodal bandit:
//! one CSV grid `(mu_hat, sigma_hat, loss)` per (direction, temperature).

use crate::config::BanditSurfaceConfig;
use crate::out::{float_tag, write_csv};
use anyhow::Result;
use klgreed::greedify::{loss_continuous, KlVariant};
use klgreed::mdp::bimodal_bandit;
use klgreed::policy::{softplus_inverse, SquashedGaussianPolicy};
use klgreed::rng::RngStream;
use klgreed::target::ClenshawCurtis;
use rayon::prelude::*;
use std::path::{Path, PathBuf};

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

pub fn run(config: &BanditSurfaceConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    config.validate().map_err(anyhow::Error::from)?;
    let rule = ClenshawCurtis::new(config.quad_nodes);
    let bandit = bimodal_bandit();
    let mus = linspace(config.mu_min, config.mu_max, config.n_mu);
    let sigma_hats: Vec<f64> = linspace(config.sigma_min, config.sigma_max, config.n_sigma)
        .into_iter()
        .map(softplus_inverse)
        .collect();
    let mut files = Vec::new();
    for kl in &config.kls {
        for &tau in &config.taus {
            let variant = KlVariant::from_name_tau(kl, tau)?;
            let rows: Vec<String> = mus
                .par_iter()
                .flat_map_iter(|&mu| {
                    // The bandit's greedy action is a fixed point, so the
                    // rng is never consulted and each cell is deterministic.
                    let mut rng = RngStream::new(0);
                    sigma_hats
                        .iter()
                        .map(|&sh| {
                            let policy = SquashedGaussianPolicy::new(vec![mu], vec![sh])
                                .expect("single state");
                            let loss =
                                loss_continuous(variant, &policy, &bandit, 0, &rule, &mut rng);
                            format!("{mu},{sh},{loss}")
                        })
                        .collect::<Vec<_>>()
                })
                .collect();
            let name = format!("bandit_surface_{kl}_tau{}.csv", float_tag(tau));
            files.push(write_csv(out_dir, &name, "mu_hat,sigma_hat,loss", rows)?);
        }
    }
    Ok(files)
}

/// Grid scan used by the surface checks: number of strict local minima of
/// the loss along the mu axis at the sigma row closest to `sigma`.
pub fn local_minima_in_mu(config: &BanditSurfaceConfig, variant: KlVariant, sigma: f64) -> usize {
    let rule = ClenshawCurtis::new(config.quad_nodes);
    let bandit = bimodal_bandit();
    let mut rng = RngStream::new(0);
    let sh = softplus_inverse(sigma);
    let mus = linspace(config.mu_min, config.mu_max, config.n_mu);
    let losses: Vec<f64> = mus
        .iter()
        .map(|&mu| {
            let policy = SquashedGaussianPolicy::new(vec![mu], vec![sh]).expect("single state");
            loss_continuous(variant, &policy, &bandit, 0, &rule, &mut rng)
        })
        .collect();
    losses
        .windows(3)
        .filter(|w| w[1] < w[0] && w[1] < w[2])
        .count()
}

/// Location of the global minimum over the whole (mu, sigma) grid.
pub fn global_minimizer(config: &BanditSurfaceConfig, variant: KlVariant) -> (f64, f64) {
    let rule = ClenshawCurtis::new(config.quad_nodes);
    let bandit = bimodal_bandit();
    let mut rng = RngStream::new(0);
    let mus = linspace(config.mu_min, config.mu_max, config.n_mu);
    let sigmas = linspace(config.sigma_min, config.sigma_max, config.n_sigma);
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for &mu in &mus {
        for &sigma in &sigmas {
            let policy = SquashedGaussianPolicy::new(vec![mu], vec![softplus_inverse(sigma)])
                .expect("single state");
            let loss = loss_continuous(variant, &policy, &bandit, 0, &rule, &mut rng);
            if loss < best.0 {
                best = (loss, mu, sigma);
            }
        }
    }
    (best.1, best.2)
}
