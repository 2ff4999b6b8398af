//! Closed-form energies used as references for the sampler, the toy grids
//! and the landscape mapper.

use crate::error::{Error, Result};
use crate::numerics::{dot, Energy, ParametricEnergy};

/// `U(x) = |x - center|^2 / (2 sigma^2) + offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic {
    shape: Vec<usize>,
    pub center: Vec<f64>,
    pub sigma: f64,
    pub offset: f64,
}

impl Quadratic {
    /// Standard Gaussian energy `|x|^2 / 2`.
    pub fn standard(dim: usize) -> Self {
        Self::new(vec![dim], 1.0)
    }

    pub fn new(shape: Vec<usize>, sigma: f64) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            center: vec![0.0; n],
            sigma,
            offset: 0.0,
        }
    }

    pub fn with_center(mut self, center: Vec<f64>) -> Self {
        self.center = center;
        self
    }

    pub fn with_offset(mut self, offset: f64) -> Self {
        self.offset = offset;
        self
    }
}

impl Energy for Quadratic {
    fn input_shape(&self) -> &[usize] {
        &self.shape
    }

    fn energy_at(&self, x: &[f64]) -> Result<f64> {
        let s2 = self.sigma * self.sigma;
        let r2: f64 = x.iter().zip(&self.center).map(|(a, c)| (a - c) * (a - c)).sum();
        Ok(0.5 * r2 / s2 + self.offset)
    }

    fn energy_grad_at(&self, x: &[f64], grad: &mut [f64]) -> Result<f64> {
        let s2 = self.sigma * self.sigma;
        for ((g, a), c) in grad.iter_mut().zip(x).zip(&self.center) {
            *g = (a - c) / s2;
        }
        self.energy_at(x)
    }
}

/// `U(x) = c` everywhere.
#[derive(Debug, Clone, PartialEq)]
pub struct Constant {
    shape: Vec<usize>,
    pub value: f64,
}

impl Constant {
    pub fn new(shape: Vec<usize>, value: f64) -> Self {
        Self { shape, value }
    }
}

impl Energy for Constant {
    fn input_shape(&self) -> &[usize] {
        &self.shape
    }

    fn energy_at(&self, _x: &[f64]) -> Result<f64> {
        Ok(self.value)
    }

    fn energy_grad_at(&self, _x: &[f64], grad: &mut [f64]) -> Result<f64> {
        grad.fill(0.0);
        Ok(self.value)
    }
}

/// `U(x; theta) = theta . x`, the simplest parametric family.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    shape: Vec<usize>,
    theta: Vec<f64>,
}

impl Linear {
    pub fn new(theta: Vec<f64>) -> Self {
        Self {
            shape: vec![theta.len()],
            theta,
        }
    }
}

impl Energy for Linear {
    fn input_shape(&self) -> &[usize] {
        &self.shape
    }

    fn energy_at(&self, x: &[f64]) -> Result<f64> {
        Ok(dot(&self.theta, x))
    }

    fn energy_grad_at(&self, x: &[f64], grad: &mut [f64]) -> Result<f64> {
        grad.copy_from_slice(&self.theta);
        self.energy_at(x)
    }
}

impl ParametricEnergy for Linear {
    fn params(&self) -> &[f64] {
        &self.theta
    }

    fn set_params(&mut self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.theta.len() {
            return Err(Error::dim("linear parameters", &[self.theta.len()], &[theta.len()]));
        }
        self.theta.copy_from_slice(theta);
        Ok(())
    }

    fn accumulate_param_grad(&self, x: &[f64], scale: f64, acc: &mut [f64]) -> Result<f64> {
        for (a, v) in acc.iter_mut().zip(x) {
            *a += scale * v;
        }
        self.energy_at(x)
    }
}

/// Two-dimensional double well `U = (x1^2 - 1)^2 + x2^2`.
///
/// Minima at `(+-1, 0)` with energy 0, saddle at the origin with energy 1.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DoubleWell;

const DOUBLE_WELL_SHAPE: [usize; 1] = [2];

impl Energy for DoubleWell {
    fn input_shape(&self) -> &[usize] {
        &DOUBLE_WELL_SHAPE
    }

    fn energy_at(&self, x: &[f64]) -> Result<f64> {
        let a = x[0] * x[0] - 1.0;
        Ok(a * a + x[1] * x[1])
    }

    fn energy_grad_at(&self, x: &[f64], grad: &mut [f64]) -> Result<f64> {
        let a = x[0] * x[0] - 1.0;
        grad[0] = 4.0 * x[0] * a;
        grad[1] = 2.0 * x[1];
        Ok(a * a + x[1] * x[1])
    }
}

/// Negative log density of an isotropic Gaussian mixture,
/// `U(x) = -log sum_k w_k N(x; mu_k, sigma^2 I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixtureEnergy {
    shape: Vec<usize>,
    pub centers: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub sigma: f64,
}

impl GaussianMixtureEnergy {
    pub fn new(centers: Vec<Vec<f64>>, weights: Vec<f64>, sigma: f64) -> Result<Self> {
        let dim = centers
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::Precondition("mixture needs a component".into()))?;
        if centers.iter().any(|c| c.len() != dim) || weights.len() != centers.len() {
            return Err(Error::Precondition("mixture components disagree in size".into()));
        }
        if weights.iter().any(|&w| w <= 0.0) || sigma <= 0.0 {
            return Err(Error::Precondition("mixture weights and sigma must be positive".into()));
        }
        let total: f64 = weights.iter().sum();
        Ok(Self {
            shape: vec![dim],
            centers,
            weights: weights.iter().map(|w| w / total).collect(),
            sigma,
        })
    }

    /// Per-component log terms `log w_k + log N(x; mu_k)`.
    fn log_terms(&self, x: &[f64]) -> Vec<f64> {
        let d = x.len() as f64;
        let s2 = self.sigma * self.sigma;
        let norm = -0.5 * d * (2.0 * std::f64::consts::PI * s2).ln();
        self.centers
            .iter()
            .zip(&self.weights)
            .map(|(c, w)| {
                let r2: f64 = x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
                w.ln() + norm - 0.5 * r2 / s2
            })
            .collect()
    }
}

impl Energy for GaussianMixtureEnergy {
    fn input_shape(&self) -> &[usize] {
        &self.shape
    }

    fn energy_at(&self, x: &[f64]) -> Result<f64> {
        let terms = self.log_terms(x);
        Ok(-log_sum_exp(&terms))
    }

    fn energy_grad_at(&self, x: &[f64], grad: &mut [f64]) -> Result<f64> {
        let terms = self.log_terms(x);
        let lse = log_sum_exp(&terms);
        let s2 = self.sigma * self.sigma;
        grad.fill(0.0);
        for (t, c) in terms.iter().zip(&self.centers) {
            let r = (t - lse).exp();
            for ((g, a), b) in grad.iter_mut().zip(x).zip(c) {
                *g += r * (a - b) / s2;
            }
        }
        Ok(-lse)
    }
}

pub(crate) fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{grad_wrt_params, Tensor};

    #[test]
    fn quadratic_value_and_grad() {
        let q = Quadratic::standard(2);
        let g = q.grad_wrt_input(&Tensor::vector(vec![1.0, -2.0])).unwrap();
        assert_eq!(g.value, 2.5);
        assert_eq!(g.grad.data(), &[1.0, -2.0]);
    }

    #[test]
    fn constant_grad_is_zero() {
        let c = Constant::new(vec![3], 4.0);
        let g = c.grad_wrt_input(&Tensor::vector(vec![1.0, 2.0, 3.0])).unwrap();
        assert_eq!(g.value, 4.0);
        assert!(g.grad.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_param_grad_is_batch_mean() {
        let lin = Linear::new(vec![0.7]);
        let batch = Tensor::new(vec![2, 1], vec![2.0, 4.0]).unwrap();
        assert_eq!(grad_wrt_params(&lin, &batch).unwrap().data(), &[3.0]);
    }

    #[test]
    fn mixture_gradient_matches_differences() {
        let m = GaussianMixtureEnergy::new(
            vec![vec![0.0, 0.5], vec![-0.4, -0.3], vec![0.4, -0.3]],
            vec![1.0, 2.0, 1.0],
            0.15,
        )
        .unwrap();
        let x = [0.1, 0.05];
        let mut g = [0.0; 2];
        m.energy_grad_at(&x, &mut g).unwrap();
        for i in 0..2 {
            let h = 1e-6;
            let mut a = x;
            let mut b = x;
            a[i] += h;
            b[i] -= h;
            let fd = (m.energy_at(&a).unwrap() - m.energy_at(&b).unwrap()) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-5 * fd.abs().max(1.0));
        }
    }
}
