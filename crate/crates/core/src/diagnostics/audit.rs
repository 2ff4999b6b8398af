//! Long-run steady-state audit: MH-adjusted chains run far past the training
//! path length, started from data and from noise.

use std::fmt::{self, Write};

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;

use super::mean_sd;
use crate::error::{Error, Result};
use crate::numerics::{batch_energies, check_batch, Energy, Tensor};
use crate::rng;
use crate::sampler::{mh_path, uniform_batch};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuditConfig {
    pub epsilon: f64,
    /// Long-run chain length `K`.
    pub steps: usize,
    /// Chains per initialization.
    pub chains: usize,
    /// Trajectory sampling cadence.
    pub record_every: usize,
    /// Cap on data samples used for the reference energy statistics.
    pub reference_samples: usize,
}

impl AuditConfig {
    /// `K = 100 L` for a model trained with `L`-step chains.
    pub fn for_training(epsilon: f64, training_steps: usize) -> Self {
        let steps = 100 * training_steps;
        Self {
            epsilon,
            steps,
            chains: 64,
            record_every: (steps / 200).max(1),
            reference_samples: 2000,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!("audit epsilon must be positive, got {}", self.epsilon)));
        }
        if self.steps == 0 || self.chains == 0 || self.record_every == 0 || self.reference_samples == 0 {
            return Err(Error::Config("audit steps, chains, cadence and reference size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Convergent,
    NonConvergent,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Convergent => "convergent",
            Verdict::NonConvergent => "non-convergent",
        })
    }
}

/// Chains sharing one initialization.
#[derive(Debug, Clone)]
pub struct AuditArm {
    /// `(step, mean energy over surviving chains)`.
    pub trajectory: Vec<(usize, f64)>,
    pub terminal_energies: Vec<f64>,
    pub terminal_states: Tensor,
    pub accept_rate: f64,
    /// `(chain, step)` of every chain that produced a non-finite state.
    pub diverged: Vec<(usize, usize)>,
}

impl AuditArm {
    pub fn terminal_mean(&self) -> f64 {
        mean_sd(&self.terminal_energies).0
    }

    pub fn survivors(&self) -> usize {
        self.terminal_energies.len()
    }
}

#[derive(Debug, Clone)]
pub struct AuditReport {
    pub config: AuditConfig,
    pub data_mean: f64,
    pub data_sd: f64,
    pub from_data: AuditArm,
    pub from_noise: AuditArm,
    pub verdict: Verdict,
}

impl AuditReport {
    /// `(terminal mean - data mean) / data sd` for the data-initialized chains.
    pub fn gap_in_sds(&self) -> f64 {
        (self.from_data.terminal_mean() - self.data_mean) / self.data_sd
    }

    /// Flat `key=value` report.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let c = &self.config;
        let _ = writeln!(s, "verdict={}", self.verdict);
        let _ = writeln!(s, "epsilon={}", c.epsilon);
        let _ = writeln!(s, "steps={}", c.steps);
        let _ = writeln!(s, "chains={}", c.chains);
        let _ = writeln!(s, "data_mean_energy={}", self.data_mean);
        let _ = writeln!(s, "data_sd_energy={}", self.data_sd);
        let _ = writeln!(s, "gap_in_sds={}", self.gap_in_sds());
        for (name, arm) in [("data_init", &self.from_data), ("noise_init", &self.from_noise)] {
            let _ = writeln!(s, "{name}.terminal_mean_energy={}", arm.terminal_mean());
            let _ = writeln!(s, "{name}.terminal_sd_energy={}", mean_sd(&arm.terminal_energies).1);
            let _ = writeln!(s, "{name}.accept_rate={}", arm.accept_rate);
            let _ = writeln!(s, "{name}.survivors={}", arm.survivors());
            let div: Vec<String> = arm.diverged.iter().map(|(c, t)| format!("{c}@{t}")).collect();
            let _ = writeln!(s, "{name}.diverged={}", div.join(","));
        }
        s
    }

    /// `step,data_init,noise_init` mean-energy trajectories.
    pub fn trajectory_csv(&self) -> String {
        let mut s = String::from("step,data_init,noise_init\n");
        for ((t, a), (_, b)) in self.from_data.trajectory.iter().zip(&self.from_noise.trajectory) {
            let _ = writeln!(s, "{t},{a},{b}");
        }
        s
    }
}

fn run_arm<E: Energy + ?Sized>(pot: &E, init: &Tensor, cfg: &AuditConfig, key: u64) -> Result<AuditArm> {
    let n = init.sample_len();
    let runs: Vec<_> = init
        .samples()
        .enumerate()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(i, x0)| {
            let mut x = x0.to_vec();
            let mut r = rng::stream(key, i as u64);
            let out = mh_path(pot, &mut x, cfg.epsilon, cfg.steps, cfg.record_every, &mut r);
            (i, out.map(|(e, acc)| (e, acc, x)))
        })
        .collect();

    let mut diverged = Vec::new();
    let mut paths = Vec::new();
    let mut states = Vec::new();
    let mut accepted = 0;
    for (i, run) in runs {
        match run {
            Ok((e, acc, x)) => {
                paths.push(e);
                accepted += acc;
                states.extend_from_slice(&x);
            }
            Err(Error::ChainDivergence { step, .. }) => diverged.push((i, step)),
            Err(e) => return Err(e),
        }
    }
    if paths.is_empty() {
        let (chain, step) = diverged[0];
        return Err(Error::ChainDivergence { chain, step });
    }
    let mut record_steps: Vec<usize> = (0..=cfg.steps).step_by(cfg.record_every).collect();
    if *record_steps.last().unwrap() != cfg.steps {
        record_steps.push(cfg.steps);
    }
    let trajectory = record_steps
        .iter()
        .enumerate()
        .map(|(j, &t)| (t, paths.iter().map(|p| p[j]).sum::<f64>() / paths.len() as f64))
        .collect();
    let mut shape = vec![paths.len()];
    shape.extend_from_slice(init.sample_shape());
    debug_assert_eq!(states.len(), paths.len() * n);
    Ok(AuditArm {
        trajectory,
        terminal_energies: paths.iter().map(|p| *p.last().unwrap()).collect(),
        terminal_states: Tensor::new(shape, states)?,
        accept_rate: accepted as f64 / (paths.len() * cfg.steps) as f64,
        diverged,
    })
}

/// Runs the audit and classifies the model.
///
/// The model is non-convergent when the data-initialized chains end with a
/// mean energy more than two data-energy standard deviations below the mean
/// energy of the data.
pub fn longrun_audit<E: Energy + ?Sized, R: Rng + ?Sized>(
    pot: &E,
    data: &Tensor,
    cfg: &AuditConfig,
    rng: &mut R,
) -> Result<AuditReport> {
    cfg.validate()?;
    check_batch(pot, data)?;
    let n_data = data.batch_len();

    let m = cfg.reference_samples.min(n_data);
    let reference = if m == n_data {
        data.clone()
    } else {
        data.select(&index::sample(rng, n_data, m).into_vec())?
    };
    let (data_mean, data_sd) = mean_sd(&batch_energies(pot, &reference)?);

    let picks: Vec<usize> = (0..cfg.chains).map(|_| rng.random_range(0..n_data)).collect();
    let data_init = data.select(&picks)?;
    let noise_init = uniform_batch(pot.input_shape(), cfg.chains, rng)?;
    let from_data = run_arm(pot, &data_init, cfg, rng::fork_key(rng))?;
    let from_noise = run_arm(pot, &noise_init, cfg, rng::fork_key(rng))?;

    let verdict = if from_data.terminal_mean() < data_mean - 2.0 * data_sd {
        Verdict::NonConvergent
    } else {
        Verdict::Convergent
    };
    Ok(AuditReport {
        config: *cfg,
        data_mean,
        data_sd,
        from_data,
        from_noise,
        verdict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::analytic::Quadratic;
    use crate::sampler::uniform_batch;

    #[test]
    fn quadratic_terminal_energy_matches_chi_square_mean() {
        // U = |x|^2 / 2 in N dims: U(X) ~ chi2_N / 2, mean N / 2.
        let dim = 8;
        let pot = Quadratic::standard(dim);
        let mut r = rng::seeded(5);
        let data = uniform_batch(&[dim], 200, &mut r).unwrap();
        let cfg = AuditConfig {
            epsilon: 0.5,
            steps: 2000,
            chains: 400,
            record_every: 100,
            reference_samples: 200,
        };
        let rep = longrun_audit(&pot, &data, &cfg, &mut r).unwrap();
        let target = dim as f64 / 2.0;
        for arm in [&rep.from_data, &rep.from_noise] {
            assert!((arm.terminal_mean() / target - 1.0).abs() < 0.05, "{}", arm.terminal_mean());
            assert!(arm.diverged.is_empty());
            assert_eq!(arm.trajectory.len(), 21);
        }
        assert!(rep.to_kv().contains("verdict="));
    }

    #[test]
    fn audit_flags_energy_collapse() {
        // Data sits far up the bowl, so long-run chains drop well below it.
        let pot = Quadratic::new(vec![2], 0.1);
        let data = Tensor::new(vec![4, 2], vec![0.9, 0.9, -0.9, 0.9, 0.9, -0.9, -0.85, -0.95]).unwrap();
        let cfg = AuditConfig {
            epsilon: 0.05,
            steps: 500,
            chains: 16,
            record_every: 50,
            reference_samples: 10,
        };
        let rep = longrun_audit(&pot, &data, &cfg, &mut rng::seeded(1)).unwrap();
        assert_eq!(rep.verdict, Verdict::NonConvergent);
    }
}
