//! Analytic parameter and FLOP counts.
//!
//! FLOPs count 2 per multiply-accumulate; bias additions, activations and
//! residual additions are not counted. Fully connected layers keep the height
//! of their input and reshape their output to `(1, height, n_out / height)`.

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSpec {
    Conv1xk {
        c_in: usize,
        c_out: usize,
        k: usize,
        stride: usize,
    },
    FullyConnected {
        n_in: usize,
        n_out: usize,
    },
    LeakyRelu,
    /// Adds the input of the enclosing residual block back in.
    ResidualAdd,
}

impl LayerSpec {
    pub fn params(&self) -> usize {
        match *self {
            LayerSpec::Conv1xk { c_in, c_out, k, .. } => c_in * c_out * k + c_out,
            LayerSpec::FullyConnected { n_in, n_out } => n_in * n_out + n_out,
            LayerSpec::LeakyRelu | LayerSpec::ResidualAdd => 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub fn new(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
        }
    }

    pub fn elements(&self) -> usize {
        self.channels * self.height * self.width
    }
}

pub fn count_params(spec: &[LayerSpec]) -> usize {
    spec.iter().map(LayerSpec::params).sum()
}

/// FLOPs of one pass through `spec` starting at `input`, and the output shape.
pub fn propagate(spec: &[LayerSpec], input: Shape) -> Result<(u64, Shape)> {
    let mut shape = input;
    let mut flops = 0u64;
    for layer in spec {
        match *layer {
            LayerSpec::Conv1xk {
                c_in,
                c_out,
                k,
                stride,
            } => {
                if shape.channels != c_in {
                    return Err(Error::shape(format!(
                        "conv expects {c_in} channels, got {}",
                        shape.channels
                    )));
                }
                if stride == 0 || !shape.width.is_multiple_of(stride) {
                    return Err(Error::shape(format!(
                        "width {} not divisible by stride {stride}",
                        shape.width
                    )));
                }
                let out_w = shape.width / stride;
                flops += 2 * (shape.height * out_w * k * c_in * c_out) as u64;
                shape = Shape::new(c_out, shape.height, out_w);
            }
            LayerSpec::FullyConnected { n_in, n_out } => {
                if shape.elements() != n_in {
                    return Err(Error::shape(format!(
                        "fc expects {n_in} inputs, got {}",
                        shape.elements()
                    )));
                }
                if n_out % shape.height != 0 {
                    return Err(Error::shape(format!(
                        "fc output {n_out} not divisible by height {}",
                        shape.height
                    )));
                }
                flops += 2 * (n_in * n_out) as u64;
                shape = Shape::new(1, shape.height, n_out / shape.height);
            }
            LayerSpec::LeakyRelu | LayerSpec::ResidualAdd => {}
        }
    }
    Ok((flops, shape))
}

pub fn count_flops(spec: &[LayerSpec], input: Shape) -> Result<u64> {
    propagate(spec, input).map(|(f, _)| f)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conv(c_in: usize, c_out: usize, k: usize, stride: usize) -> LayerSpec {
        LayerSpec::Conv1xk {
            c_in,
            c_out,
            k,
            stride,
        }
    }

    #[test]
    fn fcds_block_has_45_parameters() {
        let block = [
            conv(1, 2, 7, 1),
            LayerSpec::LeakyRelu,
            conv(2, 2, 5, 1),
            LayerSpec::LeakyRelu,
            conv(2, 1, 3, 2),
            LayerSpec::LeakyRelu,
        ];
        assert_eq!(count_params(&block), 16 + 22 + 7);
        assert_eq!(count_params(&block), 45);
    }

    #[test]
    fn fc_params() {
        assert_eq!(count_params(&[LayerSpec::FullyConnected { n_in: 4, n_out: 2 }]), 10);
    }

    #[test]
    fn conv_flops_are_two_per_mac() {
        for (k_rows, l) in [(1, 8), (2, 32), (8, 16)] {
            let f = count_flops(&[conv(1, 2, 7, 1)], Shape::new(1, k_rows, l)).unwrap();
            assert_eq!(f, 28 * (k_rows * l) as u64);
        }
    }

    #[test]
    fn shape_propagation() {
        let spec = [conv(1, 2, 7, 1), conv(2, 1, 3, 2), LayerSpec::FullyConnected { n_in: 16, n_out: 64 }];
        let (f, out) = propagate(&spec, Shape::new(1, 2, 16)).unwrap();
        assert_eq!(out, Shape::new(1, 2, 32));
        assert_eq!(f, 2 * (2 * 16 * 7 * 2) + 2 * (2 * 8 * 3 * 2) + 2 * 16 * 64);
        assert!(propagate(&[conv(2, 1, 3, 1)], Shape::new(1, 2, 16)).is_err());
    }
}
