use crate::error::{Error, Result};

/// Dense row-major array of `f64`.
///
/// A tensor whose leading dimension is a batch index is used throughout the
/// crate as a batch of samples; see [`Tensor::batch_len`] and
/// [`Tensor::sample`].
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::Precondition(format!(
                "tensor dimensions must be positive, got {shape:?}"
            )));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Dimension {
                context: "tensor construction",
                expected: shape,
                found: vec![data.len()],
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> f64) -> Self {
        let n: usize = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: (0..n).map(&mut f).collect(),
        }
    }

    /// One-dimensional tensor.
    pub fn vector(data: Vec<f64>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        Self::new(shape, self.data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.data)
    }

    // --- batch view -------------------------------------------------------

    pub fn batch_len(&self) -> usize {
        self.shape[0]
    }

    pub fn sample_shape(&self) -> &[usize] {
        &self.shape[1..]
    }

    pub fn sample_len(&self) -> usize {
        self.shape[1..].iter().product()
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        let n = self.sample_len();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn sample_mut(&mut self, i: usize) -> &mut [f64] {
        let n = self.sample_len();
        &mut self.data[i * n..(i + 1) * n]
    }

    pub fn samples(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.sample_len())
    }

    /// Copy of sample `i` as a standalone tensor.
    pub fn sample_tensor(&self, i: usize) -> Tensor {
        Tensor {
            shape: self.sample_shape().to_vec(),
            data: self.sample(i).to_vec(),
        }
    }

    /// Stacks equally shaped tensors along a new leading batch axis.
    pub fn stack(items: &[Tensor]) -> Result<Tensor> {
        let first = items
            .first()
            .ok_or_else(|| Error::Precondition("cannot stack an empty list".into()))?;
        let mut data = Vec::with_capacity(first.len() * items.len());
        for t in items {
            if t.shape != first.shape {
                return Err(Error::dim("stack", &first.shape, &t.shape));
            }
            data.extend_from_slice(&t.data);
        }
        let mut shape = vec![items.len()];
        shape.extend_from_slice(&first.shape);
        Ok(Tensor { shape, data })
    }

    /// New batch made of the listed samples, in order.
    pub fn select(&self, indices: &[usize]) -> Result<Tensor> {
        if indices.is_empty() {
            return Err(Error::Precondition("cannot select zero samples".into()));
        }
        let b = self.batch_len();
        let mut data = Vec::with_capacity(indices.len() * self.sample_len());
        for &i in indices {
            if i >= b {
                return Err(Error::Index(format!("sample {i} out of range for batch {b}")));
            }
            data.extend_from_slice(self.sample(i));
        }
        let mut shape = self.shape.clone();
        shape[0] = indices.len();
        Ok(Tensor { shape, data })
    }
}

/// Energy value paired with its gradient with respect to one argument.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientPair {
    pub value: f64,
    pub grad: Tensor,
}

pub(crate) fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
