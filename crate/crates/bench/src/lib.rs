//! Fixtures shared by the benchmarks.

use ebm_core::sampler::uniform_batch;
use ebm_core::{rng, Energy, Potential, PotentialSpec, Tensor};

pub fn toy_potential() -> Potential {
    Potential::build(PotentialSpec::toy_mlp(2, 1)).expect("toy spec is valid")
}

pub fn image_potential(size: usize) -> Potential {
    Potential::build(PotentialSpec::image_convnet_small([1, size, size], 1)).expect("image spec is valid")
}

/// `n` uniform states shaped like the potential's input.
pub fn noise_batch(pot: &Potential, n: usize, seed: u64) -> Tensor {
    uniform_batch(pot.input_shape(), n, &mut rng::seeded(seed)).expect("n >= 1")
}
