//! The maximum-likelihood learning loop.
//!
//! Each step draws a batch of training samples, runs the negative chains,
//! and descends the gradient of `mean U(positives) - mean U(negatives)`.

mod optimizer;

use std::fmt;
use std::str::FromStr;

use rand::Rng;

pub use optimizer::{optimizer_step, OptimizerKind, OptimizerState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};

use crate::diagnostics::{displacement, DiagnosticsRecord};
use crate::error::{Error, Result};
use crate::numerics::{check_batch, mean_energy_param_grad, ParametricEnergy, Tensor};
use crate::rng;
use crate::sampler::{init_batch, run_chain, InitMode, PersistentBank, SamplerConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainerConfig {
    /// Number of parameter updates `T`.
    pub steps: usize,
    /// Positive batch size `n`.
    pub batch_pos: usize,
    /// Number of negative chains `m`.
    pub batch_neg: usize,
    /// Learning rate.
    pub lr: f64,
    pub optimizer: OptimizerKind,
    pub sampler: SamplerConfig,
    /// Size of the persistent bank (ignored unless the sampler is persistent).
    pub bank_capacity: usize,
    /// Checkpoint cadence in steps; the final step is always checkpointed.
    pub checkpoint_every: usize,
    pub seed: u64,
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        self.sampler.validate()?;
        if self.steps == 0 {
            return Err(Error::Config("training steps must be at least 1".into()));
        }
        if self.batch_pos == 0 || self.batch_neg == 0 {
            return Err(Error::Config("batch sizes must be at least 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.lr)));
        }
        if self.checkpoint_every == 0 {
            return Err(Error::Config("checkpoint cadence must be at least 1".into()));
        }
        if self.sampler.init == InitMode::Persistent && self.bank_capacity < self.batch_neg {
            return Err(Error::Config(format!(
                "bank capacity {} is smaller than the negative batch {}",
                self.bank_capacity, self.batch_neg
            )));
        }
        Ok(())
    }
}

/// Named hyperparameter sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Short-run noise-initialized learning of a 2D toy with too little noise.
    ToyNonconv,
    /// Persistent learning of a 2D toy with step size matched to the data.
    ToyConv,
    /// Short-run noise-initialized image synthesis.
    ImageNonconv,
    /// Persistent learning of an image steady state.
    ImageConv,
}

impl Preset {
    pub const ALL: [Preset; 4] = [
        Preset::ToyNonconv,
        Preset::ToyConv,
        Preset::ImageNonconv,
        Preset::ImageConv,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::ToyNonconv => "toy-nonconv",
            Preset::ToyConv => "toy-conv",
            Preset::ImageNonconv => "image-nonconv",
            Preset::ImageConv => "image-conv",
        }
    }

    /// Architecture preset the hyperparameters were chosen for.
    pub fn potential_preset(self) -> &'static str {
        match self {
            Preset::ToyNonconv | Preset::ToyConv => "toy-mlp",
            Preset::ImageNonconv | Preset::ImageConv => "image-convnet",
        }
    }

    pub fn is_toy(self) -> bool {
        matches!(self, Preset::ToyNonconv | Preset::ToyConv)
    }

    pub fn config(self) -> TrainerConfig {
        match self {
            Preset::ToyNonconv => TrainerConfig {
                steps: 2000,
                batch_pos: 100,
                batch_neg: 100,
                lr: 3e-3,
                optimizer: OptimizerKind::adam(),
                sampler: SamplerConfig {
                    epsilon: 0.01,
                    steps: 100,
                    tau: 1,
                    mh: false,
                    init: InitMode::Noise,
                },
                bank_capacity: 0,
                checkpoint_every: 500,
                seed: 0,
            },
            Preset::ToyConv => TrainerConfig {
                steps: 2000,
                batch_pos: 100,
                batch_neg: 100,
                lr: 2e-2,
                optimizer: OptimizerKind::Sgd,
                sampler: SamplerConfig {
                    epsilon: 0.125,
                    steps: 500,
                    tau: 1,
                    mh: false,
                    init: InitMode::Persistent,
                },
                bank_capacity: 10_000,
                checkpoint_every: 500,
                seed: 0,
            },
            Preset::ImageNonconv => TrainerConfig {
                steps: 20_000,
                batch_pos: 100,
                batch_neg: 100,
                lr: 1e-4,
                optimizer: OptimizerKind::adam(),
                sampler: SamplerConfig {
                    epsilon: 1.0,
                    steps: 100,
                    tau: 0,
                    mh: false,
                    init: InitMode::Noise,
                },
                bank_capacity: 0,
                checkpoint_every: 500,
                seed: 0,
            },
            Preset::ImageConv => TrainerConfig {
                steps: 20_000,
                batch_pos: 100,
                batch_neg: 100,
                lr: 5e-4,
                optimizer: OptimizerKind::Sgd,
                sampler: SamplerConfig {
                    epsilon: 0.015,
                    steps: 500,
                    tau: 1,
                    mh: false,
                    init: InitMode::Persistent,
                },
                bank_capacity: 10_000,
                checkpoint_every: 500,
                seed: 0,
            },
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown preset `{s}`")))
    }
}

/// Hyperparameters of a named preset.
pub fn preset(name: &str) -> Result<TrainerConfig> {
    name.parse::<Preset>().map(Preset::config)
}

/// Gradient of `mean U(positives) - mean U(negatives)` with respect to the
/// parameters, plus the two mean energies.
pub fn ml_gradient_parts<P: ParametricEnergy + ?Sized>(
    pot: &P,
    positives: &Tensor,
    negatives: &Tensor,
) -> Result<(Tensor, f64, f64)> {
    check_batch(pot, positives)?;
    check_batch(pot, negatives)?;
    let (mean_pos, g_pos) = mean_energy_param_grad(pot, positives)?;
    let (mean_neg, g_neg) = mean_energy_param_grad(pot, negatives)?;
    let mut g = g_pos;
    for (a, b) in g.data_mut().iter_mut().zip(g_neg.data()) {
        *a -= b;
    }
    Ok((g, mean_pos, mean_neg))
}

/// Stochastic maximum-likelihood gradient.
pub fn ml_gradient<P: ParametricEnergy + ?Sized>(
    pot: &P,
    positives: &Tensor,
    negatives: &Tensor,
) -> Result<Tensor> {
    ml_gradient_parts(pot, positives, negatives).map(|(g, _, _)| g)
}

/// Hooks called by [`train_with`] as the run progresses.
pub trait TrainObserver<P> {
    fn on_step(&mut self, _record: &DiagnosticsRecord) -> Result<()> {
        Ok(())
    }

    /// Called after update `t` with the updated potential and the negatives
    /// that produced the update.
    fn on_checkpoint(&mut self, _t: usize, _pot: &P, _negatives: &Tensor) -> Result<()> {
        Ok(())
    }
}

/// Observer that ignores everything.
pub struct Silent;

impl<P> TrainObserver<P> for Silent {}

/// Result of a completed run.
#[derive(Debug, Clone)]
pub struct TrainRun<P> {
    pub potential: P,
    /// One record per update, in order.
    pub log: Vec<DiagnosticsRecord>,
    /// Steps at which checkpoints were taken.
    pub checkpoints: Vec<usize>,
    /// Final persistent states, when the sampler is persistent.
    pub bank: Option<PersistentBank>,
    /// Negatives of the last update.
    pub last_negatives: Tensor,
}

/// Runs the learning loop without observers.
pub fn train<P: ParametricEnergy + Clone>(
    data: &Tensor,
    pot0: &P,
    cfg: &TrainerConfig,
) -> Result<TrainRun<P>> {
    train_with(data, pot0, cfg, &mut Silent)
}

/// Runs the learning loop.
///
/// Random draws per step, in order: `n` positive indices, the initial
/// negatives, then one key for the chain streams. The persistent bank is
/// filled from noise with seed `rng::mix(cfg.seed)`.
pub fn train_with<P: ParametricEnergy + Clone>(
    data: &Tensor,
    pot0: &P,
    cfg: &TrainerConfig,
    observer: &mut dyn TrainObserver<P>,
) -> Result<TrainRun<P>> {
    cfg.validate()?;
    check_batch(pot0, data)?;
    let mut pot = pot0.clone();
    let sample_shape = pot.input_shape().to_vec();
    let mut rng = rng::seeded(cfg.seed);
    let mut bank = match cfg.sampler.init {
        InitMode::Persistent => Some(PersistentBank::from_noise(
            &sample_shape,
            cfg.bank_capacity,
            rng::mix(cfg.seed),
        )?),
        _ => None,
    };
    let mut opt = OptimizerState::new(cfg.optimizer, pot.num_params());
    let mut theta = pot.params().to_vec();
    let mut log = Vec::with_capacity(cfg.steps);
    let mut checkpoints = Vec::new();
    let mut last_negatives = None;

    for t in 1..=cfg.steps {
        let last_checkpoint = checkpoints.last().copied();
        let abort = |e: Error| Error::TrainingAborted {
            step: t,
            last_checkpoint,
            source: Box::new(e),
        };
        let idx: Vec<usize> = (0..cfg.batch_pos)
            .map(|_| rng.random_range(0..data.batch_len()))
            .collect();
        let positives = data.select(&idx)?;
        let init = init_batch(
            cfg.sampler.init,
            &sample_shape,
            Some(data),
            bank.as_ref(),
            cfg.batch_neg,
            &mut rng,
        )?;
        let chain = run_chain(&init.states, &pot, &cfg.sampler, &mut rng).map_err(abort)?;
        let (grad, mean_pos, mean_neg) =
            ml_gradient_parts(&pot, &positives, &chain.final_states).map_err(abort)?;
        let record = DiagnosticsRecord {
            t,
            d: mean_pos - mean_neg,
            v: chain.mean_grad_norm,
            r: displacement(cfg.sampler.epsilon, chain.mean_grad_norm),
            mean_pos,
            mean_neg,
            accept_rate: chain.accept_rate,
        };
        if !record.is_finite() {
            return Err(abort(Error::NonFinite("diagnostics record")));
        }
        optimizer::apply(&mut opt, &mut theta, grad.data(), cfg.lr).map_err(abort)?;
        pot.set_params(&theta)?;
        if let (Some(bank), Some(slots)) = (bank.as_mut(), init.slots.as_ref()) {
            bank.store(slots, &chain.final_states)?;
        }
        observer.on_step(&record)?;
        log.push(record);
        if t % cfg.checkpoint_every == 0 || t == cfg.steps {
            observer.on_checkpoint(t, &pot, &chain.final_states)?;
            checkpoints.push(t);
        }
        last_negatives = Some(chain.final_states);
    }

    Ok(TrainRun {
        potential: pot,
        log,
        checkpoints,
        bank,
        last_negatives: last_negatives.expect("at least one step"),
    })
}
