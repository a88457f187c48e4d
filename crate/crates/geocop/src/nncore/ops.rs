//! Forward/backward building blocks: dense kernels, linear maps, the LSTM
//! cell, stable softmax, and cross-entropy.

use super::{NnError, Parameter, Tensor, MASK_SCORE};
use rand::Rng;

/// Dot product with four independent accumulator lanes; fixed order, so the
/// result is deterministic.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let rem: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + rem
}

/// `y += x * W` for a row vector `x` ([n_in]) and row-major `W` ([n_in, n_out]).
pub(crate) fn matvec_accum(y: &mut [f64], x: &[f64], w: &[f64], n_in: usize, n_out: usize) {
    debug_assert_eq!(x.len(), n_in);
    debug_assert_eq!(y.len(), n_out);
    debug_assert_eq!(w.len(), n_in * n_out);
    for (xi, row) in x.iter().zip(w.chunks_exact(n_out)) {
        let xi = *xi;
        for (yj, wj) in y.iter_mut().zip(row) {
            *yj += xi * wj;
        }
    }
}

/// `dx += dy * W^T`: `dx[i] += dot(dy, W.row(i))`.
pub(crate) fn matvec_t_accum(dx: &mut [f64], dy: &[f64], w: &[f64], n_in: usize, n_out: usize) {
    debug_assert_eq!(dx.len(), n_in);
    debug_assert_eq!(dy.len(), n_out);
    for (dxi, row) in dx.iter_mut().zip(w.chunks_exact(n_out)) {
        *dxi += dot(dy, row);
    }
}

/// `dW += x ⊗ dy` (outer product accumulate).
pub(crate) fn outer_accum(dw: &mut [f64], x: &[f64], dy: &[f64], n_in: usize, n_out: usize) {
    debug_assert_eq!(dw.len(), n_in * n_out);
    for (xi, drow) in x.iter().zip(dw.chunks_exact_mut(n_out)) {
        let xi = *xi;
        for (dwj, dyj) in drow.iter_mut().zip(dy) {
            *dwj += xi * dyj;
        }
    }
}

pub(crate) fn add_accum(y: &mut [f64], x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += xi;
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `y = x W + b` for `x` with `n` rows of `W.rows()` columns.
pub fn linear_forward(x: &[f64], n: usize, w: &Tensor, b: &Tensor) -> Result<Vec<f64>, NnError> {
    let (n_in, n_out) = (w.rows(), w.cols());
    if x.len() != n * n_in || b.len() != n_out {
        return Err(NnError::ShapeMismatch(format!(
            "linear: x len {} vs {n}x{n_in}, b len {} vs {n_out}",
            x.len(),
            b.len()
        )));
    }
    let mut y = vec![0.0; n * n_out];
    for (xr, yr) in x.chunks_exact(n_in).zip(y.chunks_exact_mut(n_out)) {
        yr.copy_from_slice(b.data());
        matvec_accum(yr, xr, w.data(), n_in, n_out);
    }
    Ok(y)
}

/// Backward of [`linear_forward`]: accumulates into `w.grad` / `b.grad` and
/// returns `dx`.
pub fn linear_backward(
    x: &[f64],
    n: usize,
    w: &mut Parameter,
    b: &mut Parameter,
    dy: &[f64],
) -> Result<Vec<f64>, NnError> {
    let (n_in, n_out) = (w.value.rows(), w.value.cols());
    if x.len() != n * n_in || dy.len() != n * n_out {
        return Err(NnError::ShapeMismatch(format!(
            "linear backward: x len {}, dy len {}, expected {n}x{n_in} and {n}x{n_out}",
            x.len(),
            dy.len()
        )));
    }
    let mut dx = vec![0.0; n * n_in];
    for ((xr, dyr), dxr) in x
        .chunks_exact(n_in)
        .zip(dy.chunks_exact(n_out))
        .zip(dx.chunks_exact_mut(n_in))
    {
        outer_accum(w.grad.data_mut(), xr, dyr, n_in, n_out);
        add_accum(b.grad.data_mut(), dyr);
        matvec_t_accum(dxr, dyr, w.value.data(), n_in, n_out);
    }
    Ok(dx)
}

/// Max-subtracted softmax. Fails with `AllMasked` when every score sits at
/// or below the mask constant.
pub fn softmax_stable(scores: &[f64]) -> Result<Vec<f64>, NnError> {
    if scores.iter().all(|&s| s <= MASK_SCORE) {
        return Err(NnError::AllMasked);
    }
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = scores.iter().map(|&s| (s - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= sum);
    Ok(out)
}

/// Log-probabilities via the log-sum-exp trick.
pub fn log_softmax(scores: &[f64]) -> Result<Vec<f64>, NnError> {
    if scores.iter().all(|&s| s <= MASK_SCORE) {
        return Err(NnError::AllMasked);
    }
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse: f64 = scores.iter().map(|&s| (s - max).exp()).sum::<f64>().ln() + max;
    Ok(scores.iter().map(|&s| s - lse).collect())
}

/// Cross-entropy against a target class: loss `-log p(target)` and the
/// gradient with respect to the pre-softmax scores, `p - one_hot(target)`.
pub fn cross_entropy(log_probs: &[f64], target: usize) -> Result<(f64, Vec<f64>), NnError> {
    if target >= log_probs.len() {
        return Err(NnError::IndexOutOfRange { index: target, len: log_probs.len() });
    }
    let loss = -log_probs[target];
    let mut grad: Vec<f64> = log_probs.iter().map(|&lp| lp.exp()).collect();
    grad[target] -= 1.0;
    Ok((loss, grad))
}

/// Weights of one LSTM cell with fused gates in i, f, g, o order.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmWeights {
    /// Input kernel, `[input_dim, 4H]`.
    pub wx: Parameter,
    /// Recurrent kernel, `[H, 4H]`.
    pub wh: Parameter,
    /// Gate biases, `[4H]`.
    pub b: Parameter,
    pub input_dim: usize,
    pub hidden: usize,
}

impl LstmWeights {
    pub fn new(prefix: &str, input_dim: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        LstmWeights {
            wx: Parameter::new(format!("{prefix}.wx"), super::xavier_init([input_dim, 4 * hidden], rng)),
            wh: Parameter::new(format!("{prefix}.wh"), super::xavier_init([hidden, 4 * hidden], rng)),
            b: Parameter::new(format!("{prefix}.b"), Tensor::zeros(&[4 * hidden])),
            input_dim,
            hidden,
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        vec![&mut self.wx, &mut self.wh, &mut self.b]
    }
}

/// Post-activation state one step needs for its backward pass.
#[derive(Debug, Clone)]
pub struct LstmStepCache {
    /// i, f, g, o after their nonlinearities, `[4H]`.
    pub gates: Vec<f64>,
    /// New cell state, `[H]`.
    pub c: Vec<f64>,
    /// tanh of the new cell state, `[H]`.
    pub tanh_c: Vec<f64>,
}

/// One LSTM step: sigmoid input/forget/output gates, tanh candidate and
/// output squashing. Returns `(h, c, cache)`.
pub fn lstm_forward_step(
    w: &LstmWeights,
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
) -> Result<(Vec<f64>, Vec<f64>, LstmStepCache), NnError> {
    let hidden = w.hidden;
    if x.len() != w.input_dim || h_prev.len() != hidden || c_prev.len() != hidden {
        return Err(NnError::ShapeMismatch(format!(
            "lstm step: x {}, h {}, c {} vs input_dim {} hidden {hidden}",
            x.len(),
            h_prev.len(),
            c_prev.len(),
            w.input_dim
        )));
    }
    let mut z = w.b.value.data().to_vec();
    matvec_accum(&mut z, x, w.wx.value.data(), w.input_dim, 4 * hidden);
    matvec_accum(&mut z, h_prev, w.wh.value.data(), hidden, 4 * hidden);

    let mut gates = vec![0.0; 4 * hidden];
    for k in 0..hidden {
        gates[k] = sigmoid(z[k]); // i
        gates[hidden + k] = sigmoid(z[hidden + k]); // f
        gates[2 * hidden + k] = z[2 * hidden + k].tanh(); // g
        gates[3 * hidden + k] = sigmoid(z[3 * hidden + k]); // o
    }
    let mut c = vec![0.0; hidden];
    let mut tanh_c = vec![0.0; hidden];
    let mut h = vec![0.0; hidden];
    for k in 0..hidden {
        c[k] = gates[hidden + k] * c_prev[k] + gates[k] * gates[2 * hidden + k];
        tanh_c[k] = c[k].tanh();
        h[k] = gates[3 * hidden + k] * tanh_c[k];
    }
    Ok((h.clone(), c.clone(), LstmStepCache { gates, c, tanh_c }))
}

/// Backward of one LSTM step. `dh`/`dc` are the incoming gradients for this
/// step's outputs; gradients for the weights accumulate into `w`, and the
/// input-side gradients are added into `dx`, `dh_prev`, `dc_prev`.
#[allow(clippy::too_many_arguments)]
pub fn lstm_backward_step(
    w: &mut LstmWeights,
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    cache: &LstmStepCache,
    dh: &[f64],
    dc: &[f64],
    dx: &mut [f64],
    dh_prev: &mut [f64],
    dc_prev: &mut [f64],
) {
    let hidden = w.hidden;
    let mut dz = vec![0.0; 4 * hidden];
    for k in 0..hidden {
        let i = cache.gates[k];
        let f = cache.gates[hidden + k];
        let g = cache.gates[2 * hidden + k];
        let o = cache.gates[3 * hidden + k];
        let tc = cache.tanh_c[k];

        let d_o = dh[k] * tc;
        let dc_total = dc[k] + dh[k] * o * (1.0 - tc * tc);

        dz[k] = dc_total * g * i * (1.0 - i);
        dz[hidden + k] = dc_total * c_prev[k] * f * (1.0 - f);
        dz[2 * hidden + k] = dc_total * i * (1.0 - g * g);
        dz[3 * hidden + k] = d_o * o * (1.0 - o);
        dc_prev[k] += dc_total * f;
    }
    outer_accum(w.wx.grad.data_mut(), x, &dz, w.input_dim, 4 * hidden);
    outer_accum(w.wh.grad.data_mut(), h_prev, &dz, hidden, 4 * hidden);
    add_accum(w.b.grad.data_mut(), &dz);
    matvec_t_accum(dx, &dz, w.wx.value.data(), w.input_dim, 4 * hidden);
    matvec_t_accum(dh_prev, &dz, w.wh.value.data(), hidden, 4 * hidden);
}
