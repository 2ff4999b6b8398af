use std::fmt;

use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            eps: ADAM_EPS,
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OptimizerKind::Sgd => f.write_str("sgd"),
            OptimizerKind::Adam { .. } => f.write_str("adam"),
        }
    }
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::adam()),
            _ => Err(Error::Config(format!("unknown optimizer `{s}`"))),
        }
    }
}

/// Moment estimates carried between optimizer steps.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    kind: OptimizerKind,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, dim: usize) -> Self {
        let (m, v) = match kind {
            OptimizerKind::Sgd => (Vec::new(), Vec::new()),
            OptimizerKind::Adam { .. } => (vec![0.0; dim], vec![0.0; dim]),
        };
        Self { kind, step: 0, m, v }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }
}

/// Applies one descent step to `theta`.
///
/// SGD: `theta - lr * grad`. Adam: the bias-corrected update with the fixed
/// `(beta1, beta2, eps)` of the state's kind.
pub fn optimizer_step(
    state: &mut OptimizerState,
    theta: &Tensor,
    grad: &Tensor,
    lr: f64,
) -> Result<Tensor> {
    if theta.shape() != grad.shape() {
        return Err(Error::dim("optimizer step", theta.shape(), grad.shape()));
    }
    let mut out = theta.clone();
    apply(state, out.data_mut(), grad.data(), lr)?;
    Ok(out)
}

/// In-place variant of [`optimizer_step`].
pub(crate) fn apply(state: &mut OptimizerState, theta: &mut [f64], grad: &[f64], lr: f64) -> Result<()> {
    if !grad.iter().all(|g| g.is_finite()) {
        return Err(Error::NonFinite("parameter gradient"));
    }
    state.step += 1;
    match state.kind {
        OptimizerKind::Sgd => {
            for (t, g) in theta.iter_mut().zip(grad) {
                *t -= lr * g;
            }
        }
        OptimizerKind::Adam { beta1, beta2, eps } => {
            if state.m.len() != theta.len() {
                return Err(Error::dim("adam state", &[state.m.len()], &[theta.len()]));
            }
            let k = state.step as i32;
            let c1 = 1.0 - beta1.powi(k);
            let c2 = 1.0 - beta2.powi(k);
            for i in 0..theta.len() {
                let g = grad[i];
                state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g;
                state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g * g;
                let m_hat = state.m[i] / c1;
                let v_hat = state.v[i] / c2;
                theta[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
    Ok(())
}
