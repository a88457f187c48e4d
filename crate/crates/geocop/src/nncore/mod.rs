//! Minimal dense tensor math with explicit backpropagation.
//!
//! Everything is `f64`, row-major, and deterministic: fixed accumulation
//! order, no hidden threading. The model layer builds its forward and
//! backward passes out of these pieces, and `grad_check` verifies any such
//! composition against central finite differences.

mod adam;
mod gradcheck;
mod ops;

pub use adam::AdamState;
pub use gradcheck::grad_check;
pub use ops::{
    cross_entropy, linear_backward, linear_forward, log_softmax, lstm_backward_step,
    lstm_forward_step, softmax_stable, LstmStepCache, LstmWeights,
};
pub(crate) use ops::{add_accum, dot, matvec_accum, matvec_t_accum, outer_accum};

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt;

/// Mask constant standing in for negative infinity. Large enough that masked
/// slots underflow to exactly zero probability, finite enough that
/// max-subtraction never produces NaN.
pub const MASK_SCORE: f64 = -1e9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![0.0; n] }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), data.len(), "shape/data mismatch");
        Tensor { shape: shape.to_vec(), data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Rows of a 2-D tensor.
    pub fn rows(&self) -> usize {
        assert_eq!(self.shape.len(), 2);
        self.shape[0]
    }

    /// Columns of a 2-D tensor.
    pub fn cols(&self) -> usize {
        assert_eq!(self.shape.len(), 2);
        self.shape[1]
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// A learnable tensor with its gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        let grad = Tensor::zeros(value.shape());
        Parameter { name: name.into(), value, grad }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NnError {
    ShapeMismatch(String),
    AllMasked,
    IndexOutOfRange { index: usize, len: usize },
}

impl fmt::Display for NnError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NnError::ShapeMismatch(why) => write!(f, "shape mismatch: {why}"),
            NnError::AllMasked => write!(f, "every score is masked"),
            NnError::IndexOutOfRange { index, len } => {
                write!(f, "index {index} out of range for length {len}")
            }
        }
    }
}

impl std::error::Error for NnError {}

/// Xavier/Glorot uniform initialization for a 2-D shape:
/// uniform on [-a, a] with `a = sqrt(6 / (fan_in + fan_out))`.
pub fn xavier_init(shape: [usize; 2], rng: &mut impl Rng) -> Tensor {
    let a = (6.0 / (shape[0] + shape[1]) as f64).sqrt();
    let data = (0..shape[0] * shape[1]).map(|_| rng.gen_range(-a..=a)).collect();
    Tensor::from_vec(&[shape[0], shape[1]], data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn xavier_bounds_and_determinism() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = xavier_init([20, 30], &mut rng);
        let a = (6.0 / 50.0f64).sqrt();
        assert!(t.data().iter().all(|&v| v.abs() <= a));
        let mut rng2 = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(t, xavier_init([20, 30], &mut rng2));
    }

    #[test]
    fn xavier_variance_matches_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (fan_in, fan_out) = (250, 150);
        let t = xavier_init([fan_in, fan_out], &mut rng);
        let n = t.len() as f64;
        let mean: f64 = t.data().iter().sum::<f64>() / n;
        let var: f64 = t.data().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        // Uniform[-a, a] has variance a^2 / 3 = 2 / (fan_in + fan_out).
        let expect = 2.0 / (fan_in + fan_out) as f64;
        assert!(
            (var - expect).abs() / expect < 0.1,
            "sample variance {var} vs expected {expect} on {n} draws"
        );
    }
}
