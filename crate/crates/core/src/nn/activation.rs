use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
    /// Row-wise; only valid on the final layer.
    Softmax,
    Identity,
}

impl Activation {
    /// Applies the activation in place to a matrix of pre-activations.
    pub fn apply(self, z: &mut Matrix) {
        match self {
            Activation::Relu => z.as_mut_slice().iter_mut().for_each(|v| *v = v.max(0.0)),
            Activation::Tanh => z.as_mut_slice().iter_mut().for_each(|v| *v = v.tanh()),
            Activation::Sigmoid => z.as_mut_slice().iter_mut().for_each(|v| *v = sigmoid(*v)),
            Activation::Identity => {}
            Activation::Softmax => {
                for r in 0..z.rows() {
                    softmax_in_place(z.row_mut(r));
                }
            }
        }
    }

    /// Turns `grad` (dL/d output) into dL/d pre-activation, given the
    /// activation outputs `out` of the same forward pass.
    pub(crate) fn backprop(self, out: &Matrix, grad: &mut Matrix) {
        match self {
            Activation::Relu => {
                for (g, &y) in grad.as_mut_slice().iter_mut().zip(out.as_slice()) {
                    if y <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            Activation::Tanh => {
                for (g, &y) in grad.as_mut_slice().iter_mut().zip(out.as_slice()) {
                    *g *= 1.0 - y * y;
                }
            }
            Activation::Sigmoid => {
                for (g, &y) in grad.as_mut_slice().iter_mut().zip(out.as_slice()) {
                    *g *= y * (1.0 - y);
                }
            }
            Activation::Identity => {}
            Activation::Softmax => {
                // Jacobian-vector product: dz_i = y_i (g_i - Σ_j y_j g_j)
                for r in 0..out.rows() {
                    let y = out.row(r);
                    let g = grad.row_mut(r);
                    let s: f64 = y.iter().zip(g.iter()).map(|(a, b)| a * b).sum();
                    for (gi, yi) in g.iter_mut().zip(y) {
                        *gi = yi * (*gi - s);
                    }
                }
            }
        }
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
            Activation::Softmax => "softmax",
            Activation::Identity => "identity",
        };
        f.write_str(name)
    }
}

impl FromStr for Activation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "sigmoid" => Ok(Activation::Sigmoid),
            "softmax" => Ok(Activation::Softmax),
            "identity" | "linear" => Ok(Activation::Identity),
            other => Err(format!("unknown activation '{other}'")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut z = Matrix::from_rows(&[[1.0, 2.0, 3.0], [-50.0, 0.0, 700.0]]).unwrap();
        Activation::Softmax.apply(&mut z);
        for row in z.iter_rows() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(-800.0).is_finite());
        assert!(sigmoid(800.0) <= 1.0);
    }

    #[test]
    fn parses_names() {
        assert_eq!("ReLU".parse::<Activation>().unwrap(), Activation::Relu);
        assert!("gelu".parse::<Activation>().is_err());
    }
}
