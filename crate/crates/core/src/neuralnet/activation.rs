//! Piecewise-linear "hard" activations.

use super::tensor::Tensor;

#[inline]
pub fn relu6(x: f64) -> f64 {
    x.clamp(0.0, 6.0)
}

/// `min(max(x + 3, 0), 6) / 6`
#[inline]
pub fn h_sigmoid(x: f64) -> f64 {
    relu6(x + 3.0) / 6.0
}

/// `x · h_sigmoid(x)`
#[inline]
pub fn h_swish(x: f64) -> f64 {
    x * h_sigmoid(x)
}

#[inline]
pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}

#[inline]
pub fn h_sigmoid_grad(x: f64) -> f64 {
    if x > -3.0 && x < 3.0 {
        1.0 / 6.0
    } else {
        0.0
    }
}

#[inline]
pub fn h_swish_grad(x: f64) -> f64 {
    if x <= -3.0 {
        0.0
    } else if x >= 3.0 {
        1.0
    } else {
        (2.0 * x + 3.0) / 6.0
    }
}

#[inline]
pub fn relu_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        0.0
    }
}

pub fn h_swish_tensor(t: &Tensor) -> Tensor {
    t.map(h_swish)
}

pub fn h_sigmoid_tensor(t: &Tensor) -> Tensor {
    t.map(h_sigmoid)
}
