//! Tensors, convolution kernels, and reverse-mode differentiation of scalar
//! energies with respect to inputs and parameters.

pub mod conv;
pub mod network;
mod tensor;

pub use conv::{conv2d, ConvGeometry};
pub use network::{LayerSpec, Network, Tape};
pub use tensor::{GradientPair, Tensor};

pub(crate) use tensor::{dot, l2_norm};

use rayon::prelude::*;

use crate::error::{Error, Result};

const PARAM_GRAD_CHUNK: usize = 8;

/// A scalar energy `U(x)` over inputs of a fixed shape.
///
/// Implementors work on flat row-major slices; the tensor-level entry points
/// are provided.
pub trait Energy: Sync {
    fn input_shape(&self) -> &[usize];

    fn energy_at(&self, x: &[f64]) -> Result<f64>;

    /// Returns `U(x)` and writes `dU/dx` into `grad` (overwriting it).
    fn energy_grad_at(&self, x: &[f64], grad: &mut [f64]) -> Result<f64>;

    fn input_len(&self) -> usize {
        self.input_shape().iter().product()
    }

    fn energy(&self, x: &Tensor) -> Result<f64> {
        check_input(self, x.shape())?;
        self.energy_at(x.data())
    }

    fn grad_wrt_input(&self, x: &Tensor) -> Result<GradientPair> {
        check_input(self, x.shape())?;
        let mut grad = Tensor::zeros(x.shape());
        let value = self.energy_grad_at(x.data(), grad.data_mut())?;
        Ok(GradientPair { value, grad })
    }
}

/// An energy family `U(x; theta)` with a flat parameter vector.
pub trait ParametricEnergy: Energy {
    fn params(&self) -> &[f64];

    fn set_params(&mut self, theta: &[f64]) -> Result<()>;

    /// Adds `scale * dU(x)/dtheta` into `acc` and returns `U(x)`.
    fn accumulate_param_grad(&self, x: &[f64], scale: f64, acc: &mut [f64]) -> Result<f64>;

    fn num_params(&self) -> usize {
        self.params().len()
    }
}

fn check_input<E: Energy + ?Sized>(e: &E, shape: &[usize]) -> Result<()> {
    if shape == e.input_shape() {
        Ok(())
    } else {
        Err(Error::dim("energy input", e.input_shape(), shape))
    }
}

pub(crate) fn check_batch<E: Energy + ?Sized>(e: &E, batch: &Tensor) -> Result<()> {
    if batch.shape().len() < 2 || batch.sample_shape() != e.input_shape() {
        let mut expected = vec![batch.shape().first().copied().unwrap_or(1)];
        expected.extend_from_slice(e.input_shape());
        return Err(Error::dim("batch", &expected, batch.shape()));
    }
    Ok(())
}

/// `U(x)` and `dU/dx` for a single input.
pub fn grad_wrt_input<E: Energy + ?Sized>(pot: &E, x: &Tensor) -> Result<GradientPair> {
    pot.grad_wrt_input(x)
}

/// Gradient of the batch-mean energy `(1/B) sum_i U(x_i)` with respect to the
/// parameters, together with that mean energy.
pub fn mean_energy_param_grad<P: ParametricEnergy + ?Sized>(
    pot: &P,
    batch: &Tensor,
) -> Result<(f64, Tensor)> {
    check_batch(pot, batch)?;
    let b = batch.batch_len();
    if b == 0 || batch.is_empty() {
        return Err(Error::Precondition("empty batch".into()));
    }
    let scale = 1.0 / b as f64;
    let d = pot.num_params();
    // Fixed chunking keeps the summation order independent of the thread count.
    let partials: Vec<Result<(f64, Vec<f64>)>> = batch
        .data()
        .par_chunks(PARAM_GRAD_CHUNK * batch.sample_len())
        .map(|chunk| {
            let mut acc = vec![0.0; d];
            let mut total = 0.0;
            for x in chunk.chunks_exact(batch.sample_len()) {
                total += pot.accumulate_param_grad(x, scale, &mut acc)?;
            }
            Ok((total, acc))
        })
        .collect();
    let mut acc = vec![0.0; d];
    let mut total = 0.0;
    for part in partials {
        let (t, g) = part?;
        total += t;
        for (a, v) in acc.iter_mut().zip(&g) {
            *a += v;
        }
    }
    Ok((total * scale, Tensor::vector(acc)))
}

/// Gradient of the batch-mean energy with respect to the parameters.
pub fn grad_wrt_params<P: ParametricEnergy + ?Sized>(pot: &P, batch: &Tensor) -> Result<Tensor> {
    mean_energy_param_grad(pot, batch).map(|(_, g)| g)
}

/// Energies of every sample in a batch.
pub fn batch_energies<E: Energy + ?Sized>(pot: &E, batch: &Tensor) -> Result<Vec<f64>> {
    check_batch(pot, batch)?;
    batch.samples().map(|x| pot.energy_at(x)).collect()
}
