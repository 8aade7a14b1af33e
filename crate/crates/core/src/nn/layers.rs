//! Convolution, fully-connected, ReLU and MSE kernels with hand-written
//! backward passes.

use crate::nn::NnError;
use crate::tensor::{Scalar, Tensor};

/// Output size and leading pad for SAME padding along one axis.
///
/// `out = ceil(input / stride)`; the total pad is split with the smaller half
/// in front.
pub fn same_padding(input: usize, kernel: usize, stride: usize) -> (usize, usize) {
    let out = input.div_ceil(stride);
    let total = ((out - 1) * stride + kernel).saturating_sub(input);
    (out, total / 2)
}

/// 2D convolution with SAME zero padding.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer<T: Scalar = f32> {
    /// `[out_channels, in_channels, k, k]`
    pub kernels: Tensor<T>,
    /// `[out_channels]`
    pub bias: Tensor<T>,
    pub stride: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvGrads<T: Scalar = f32> {
    pub input: Tensor<T>,
    pub kernels: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> ConvLayer<T> {
    pub fn new(kernels: Tensor<T>, bias: Tensor<T>, stride: usize) -> Result<Self, NnError> {
        let s = kernels.shape();
        if s.len() != 4 || s[2] != s[3] || s[2].is_multiple_of(2) {
            return Err(NnError::Config(format!(
                "conv kernels must be [out, in, k, k] with odd k, got {s:?}"
            )));
        }
        if !(1..=2).contains(&stride) {
            return Err(NnError::Config(format!(
                "conv stride must be 1 or 2, got {stride}"
            )));
        }
        if bias.shape() != [s[0]] {
            return Err(NnError::Config(format!(
                "conv bias shape {:?} does not match {} output channels",
                bias.shape(),
                s[0]
            )));
        }
        Ok(Self {
            kernels,
            bias,
            stride,
        })
    }

    pub fn out_channels(&self) -> usize {
        self.kernels.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.kernels.shape()[1]
    }

    pub fn kernel_size(&self) -> usize {
        self.kernels.shape()[2]
    }

    /// Spatial output size for an `h x w` input.
    pub fn output_hw(&self, h: usize, w: usize) -> (usize, usize) {
        (h.div_ceil(self.stride), w.div_ceil(self.stride))
    }

    fn check_input(&self, input: &Tensor<T>) -> Result<(usize, usize), NnError> {
        let s = input.shape();
        if s.len() != 3 || s[0] != self.in_channels() {
            return Err(NnError::Shape(format!(
                "conv expects [{}, H, W] input, got {s:?}",
                self.in_channels()
            )));
        }
        Ok((s[1], s[2]))
    }

    pub fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let (h, w) = self.check_input(input)?;
        let (oc_n, ic_n, k, stride) = (
            self.out_channels(),
            self.in_channels(),
            self.kernel_size(),
            self.stride,
        );
        let (oh_n, pad_top) = same_padding(h, k, stride);
        let (ow_n, pad_left) = same_padding(w, k, stride);
        let x = input.data();
        let wts = self.kernels.data();
        let mut out = vec![T::zero(); oc_n * oh_n * ow_n];

        for oc in 0..oc_n {
            let plane = &mut out[oc * oh_n * ow_n..(oc + 1) * oh_n * ow_n];
            plane.fill(self.bias.data()[oc]);
            for ic in 0..ic_n {
                let xin = &x[ic * h * w..(ic + 1) * h * w];
                for kh in 0..k {
                    for kw in 0..k {
                        let wv = wts[((oc * ic_n + ic) * k + kh) * k + kw];
                        let (ow_lo, ow_hi) = valid_range(ow_n, w, kw, pad_left, stride);
                        for oh in 0..oh_n {
                            let ih = (oh * stride + kh) as isize - pad_top as isize;
                            if ih < 0 || ih >= h as isize {
                                continue;
                            }
                            let row = &xin[ih as usize * w..];
                            let orow = &mut plane[oh * ow_n..(oh + 1) * ow_n];
                            for ow in ow_lo..ow_hi {
                                let iw = ow * stride + kw - pad_left;
                                orow[ow] += wv * row[iw];
                            }
                        }
                    }
                }
            }
        }
        Tensor::from_vec(&[oc_n, oh_n, ow_n], out)
    }

    pub fn backward(
        &self,
        input: &Tensor<T>,
        grad_out: &Tensor<T>,
    ) -> Result<ConvGrads<T>, NnError> {
        let (h, w) = self.check_input(input)?;
        let (oc_n, ic_n, k, stride) = (
            self.out_channels(),
            self.in_channels(),
            self.kernel_size(),
            self.stride,
        );
        let (oh_n, pad_top) = same_padding(h, k, stride);
        let (ow_n, pad_left) = same_padding(w, k, stride);
        if grad_out.shape() != [oc_n, oh_n, ow_n] {
            return Err(NnError::Shape(format!(
                "conv grad_out {:?} does not match output [{oc_n}, {oh_n}, {ow_n}]",
                grad_out.shape()
            )));
        }
        let x = input.data();
        let g = grad_out.data();
        let wts = self.kernels.data();
        let mut gx = vec![T::zero(); ic_n * h * w];
        let mut gw = vec![T::zero(); wts.len()];
        let mut gb = vec![T::zero(); oc_n];

        for oc in 0..oc_n {
            let gplane = &g[oc * oh_n * ow_n..(oc + 1) * oh_n * ow_n];
            gb[oc] = gplane.iter().copied().sum();
            for ic in 0..ic_n {
                let xin = &x[ic * h * w..(ic + 1) * h * w];
                let gxin = &mut gx[ic * h * w..(ic + 1) * h * w];
                for kh in 0..k {
                    for kw in 0..k {
                        let widx = ((oc * ic_n + ic) * k + kh) * k + kw;
                        let wv = wts[widx];
                        let (ow_lo, ow_hi) = valid_range(ow_n, w, kw, pad_left, stride);
                        let mut acc = T::zero();
                        for oh in 0..oh_n {
                            let ih = (oh * stride + kh) as isize - pad_top as isize;
                            if ih < 0 || ih >= h as isize {
                                continue;
                            }
                            let ih = ih as usize;
                            let grow = &gplane[oh * ow_n..(oh + 1) * ow_n];
                            for ow in ow_lo..ow_hi {
                                let iw = ow * stride + kw - pad_left;
                                acc += grow[ow] * xin[ih * w + iw];
                                gxin[ih * w + iw] += wv * grow[ow];
                            }
                        }
                        gw[widx] = acc;
                    }
                }
            }
        }
        Ok(ConvGrads {
            input: Tensor::from_vec(&[ic_n, h, w], gx)?,
            kernels: Tensor::from_vec(self.kernels.shape(), gw)?,
            bias: Tensor::from_vec(&[oc_n], gb)?,
        })
    }
}

/// Range of output columns whose input column `ow * stride + kw - pad` lies
/// inside `[0, w)`.
#[inline]
fn valid_range(ow_n: usize, w: usize, kw: usize, pad: usize, stride: usize) -> (usize, usize) {
    let lo = if kw >= pad {
        0
    } else {
        (pad - kw).div_ceil(stride)
    };
    // largest ow with ow*stride + kw - pad <= w - 1
    let hi = if w + pad < kw + 1 {
        0
    } else {
        ((w - 1 + pad - kw) / stride + 1).min(ow_n)
    };
    (lo.min(hi), hi)
}

/// Fully-connected layer, `y = W x + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer<T: Scalar = f32> {
    /// `[out_units, in_units]`
    pub weights: Tensor<T>,
    /// `[out_units]`
    pub bias: Tensor<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseGrads<T: Scalar = f32> {
    pub input: Tensor<T>,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> DenseLayer<T> {
    pub fn new(weights: Tensor<T>, bias: Tensor<T>) -> Result<Self, NnError> {
        let s = weights.shape();
        if s.len() != 2 || bias.shape() != [s[0]] {
            return Err(NnError::Config(format!(
                "dense layer needs weights [out, in] and bias [out], got {s:?} / {:?}",
                bias.shape()
            )));
        }
        Ok(Self { weights, bias })
    }

    pub fn in_units(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn out_units(&self) -> usize {
        self.weights.shape()[0]
    }

    /// Accepts any input shape whose element count equals `in_units`.
    pub fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let n_in = self.in_units();
        if input.len() != n_in {
            return Err(NnError::Shape(format!(
                "dense expects {n_in} inputs, got {}",
                input.len()
            )));
        }
        let x = input.data();
        let out = self
            .weights
            .data()
            .chunks_exact(n_in)
            .zip(self.bias.data())
            .map(|(row, &b)| b + row.iter().zip(x).map(|(&w, &v)| w * v).sum::<T>())
            .collect();
        Tensor::from_vec(&[self.out_units()], out)
    }

    pub fn backward(
        &self,
        input: &Tensor<T>,
        grad_out: &Tensor<T>,
    ) -> Result<DenseGrads<T>, NnError> {
        let (n_out, n_in) = (self.out_units(), self.in_units());
        if input.len() != n_in || grad_out.len() != n_out {
            return Err(NnError::Shape(format!(
                "dense backward expects input {n_in} / grad {n_out}, got {} / {}",
                input.len(),
                grad_out.len()
            )));
        }
        let x = input.data();
        let g = grad_out.data();
        let mut gw = Vec::with_capacity(n_out * n_in);
        let mut gx = vec![T::zero(); n_in];
        for (o, row) in self.weights.data().chunks_exact(n_in).enumerate() {
            let go = g[o];
            gw.extend(x.iter().map(|&v| go * v));
            for (gi, &w) in gx.iter_mut().zip(row) {
                *gi += w * go;
            }
        }
        Ok(DenseGrads {
            input: Tensor::from_vec(input.shape(), gx)?,
            weights: Tensor::from_vec(&[n_out, n_in], gw)?,
            bias: grad_out.clone().reshape(&[n_out])?,
        })
    }
}

pub fn relu<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|x| if x > T::zero() { x } else { T::zero() })
}

/// Passes the gradient where the input was strictly positive.
pub fn relu_backward<T: Scalar>(
    input: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<Tensor<T>, NnError> {
    if input.len() != grad_out.len() {
        return Err(NnError::Shape(format!(
            "relu backward length mismatch: {} vs {}",
            input.len(),
            grad_out.len()
        )));
    }
    let data = input
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&x, &g)| if x > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::from_vec(input.shape(), data)
}

/// Mean squared error and its gradient with respect to `pred`.
pub fn mse_loss<T: Scalar>(pred: &[T], target: &[T]) -> Result<(T, Vec<T>), NnError> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(NnError::Shape(format!(
            "mse needs equal non-empty lengths, got {} and {}",
            pred.len(),
            target.len()
        )));
    }
    let n = T::of(pred.len() as f64);
    let two = T::of(2.0);
    let mut loss = T::zero();
    let grad = pred
        .iter()
        .zip(target)
        .map(|(&p, &t)| {
            let d = p - t;
            loss += d * d;
            two * d / n
        })
        .collect();
    Ok((loss / n, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: Vec<f32>) -> Tensor {
        Tensor::from_vec(shape, data).unwrap()
    }

    #[test]
    fn same_padding_shapes() {
        assert_eq!(same_padding(66, 5, 2).0, 33);
        assert_eq!(same_padding(200, 5, 2).0, 100);
        assert_eq!(same_padding(33, 5, 2), (17, 2));
        assert_eq!(same_padding(9, 3, 1), (9, 1));
    }

    #[test]
    fn identity_kernel_is_identity() {
        let layer = ConvLayer::new(t(&[1, 1, 1, 1], vec![1.0]), t(&[1], vec![0.0]), 1).unwrap();
        let x = t(&[1, 3, 3], vec![1.0; 9]);
        assert_eq!(layer.forward(&x).unwrap(), x);
    }

    #[test]
    fn stride_two_output_dims() {
        let layer = ConvLayer::new(
            Tensor::filled(&[2, 1, 5, 5], 0.01),
            Tensor::filled(&[2], 0.0),
            2,
        )
        .unwrap();
        let out = layer.forward(&Tensor::zeros(&[1, 66, 200])).unwrap();
        assert_eq!(out.shape(), &[2, 33, 100]);
    }

    #[test]
    fn conv_rejects_bad_config_and_inputs() {
        assert!(
            ConvLayer::new(Tensor::<f32>::zeros(&[1, 1, 4, 4]), Tensor::zeros(&[1]), 1).is_err()
        );
        assert!(
            ConvLayer::new(Tensor::<f32>::zeros(&[1, 1, 3, 3]), Tensor::zeros(&[1]), 3).is_err()
        );
        assert!(
            ConvLayer::new(Tensor::<f32>::zeros(&[2, 1, 3, 3]), Tensor::zeros(&[1]), 1).is_err()
        );
        let layer =
            ConvLayer::new(Tensor::<f32>::zeros(&[1, 2, 3, 3]), Tensor::zeros(&[1]), 1).unwrap();
        assert!(matches!(
            layer.forward(&Tensor::zeros(&[1, 4, 4])),
            Err(NnError::Shape(_))
        ));
    }

    #[test]
    fn conv_zero_grad_out_gives_zero_grads() {
        let layer = ConvLayer::new(
            Tensor::filled(&[3, 2, 3, 3], 0.3),
            Tensor::filled(&[3], 0.1),
            2,
        )
        .unwrap();
        let x = Tensor::filled(&[2, 5, 5], 0.7);
        let g = layer.backward(&x, &Tensor::zeros(&[3, 3, 3])).unwrap();
        assert!(g.input.data().iter().all(|&v| v == 0.0));
        assert!(g.kernels.data().iter().all(|&v| v == 0.0));
        assert!(g.bias.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn one_by_one_kernel_grad_is_input_dot_grad() {
        let layer = ConvLayer::new(t(&[1, 1, 1, 1], vec![0.5]), t(&[1], vec![0.0]), 1).unwrap();
        let x = t(&[1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let go = t(&[1, 2, 2], vec![0.5, -1.0, 2.0, 1.0]);
        let g = layer.backward(&x, &go).unwrap();
        assert_eq!(g.kernels.data(), &[0.5 - 2.0 + 6.0 + 4.0]);
        assert_eq!(g.bias.data(), &[2.5]);
        assert_eq!(g.input.data(), &[0.25, -0.5, 1.0, 0.5]);
    }

    #[test]
    fn dense_direct_arithmetic() {
        let layer = DenseLayer::new(t(&[1, 2], vec![1.0, 2.0]), t(&[1], vec![0.1])).unwrap();
        let y = layer.forward(&t(&[2], vec![3.0, 4.0])).unwrap();
        assert!((y.data()[0] - 11.1).abs() < 1e-6);
    }

    #[test]
    fn dense_identity() {
        let layer =
            DenseLayer::new(t(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]), Tensor::zeros(&[2])).unwrap();
        let x = t(&[2], vec![-3.0, 7.5]);
        assert_eq!(layer.forward(&x).unwrap(), x);
        assert!(layer.forward(&t(&[3], vec![0.0; 3])).is_err());
    }

    #[test]
    fn dense_backward_closed_form() {
        let layer = DenseLayer::new(t(&[1, 2], vec![1.0, 2.0]), t(&[1], vec![0.1])).unwrap();
        let g = layer
            .backward(&t(&[2], vec![3.0, 4.0]), &t(&[1], vec![2.0]))
            .unwrap();
        assert_eq!(g.weights.data(), &[6.0, 8.0]);
        assert_eq!(g.bias.data(), &[2.0]);
        assert_eq!(g.input.data(), &[2.0, 4.0]);
    }

    #[test]
    fn relu_values_and_backward() {
        let x = t(&[3], vec![-1.0, 0.0, 2.0]);
        assert_eq!(relu(&x).data(), &[0.0, 0.0, 2.0]);
        assert_eq!(relu(&relu(&x)), relu(&x));
        let g = relu_backward(&t(&[2], vec![-1.0, 2.0]), &t(&[2], vec![5.0, 7.0])).unwrap();
        assert_eq!(g.data(), &[0.0, 7.0]);
        let tie = relu_backward(&t(&[1], vec![0.0]), &t(&[1], vec![3.0])).unwrap();
        assert_eq!(tie.data(), &[0.0]);
    }

    #[test]
    fn mse_values() {
        let (l, g) = mse_loss(&[1.0f32, 3.0], &[0.0, 1.0]).unwrap();
        assert_eq!(l, 2.5);
        assert_eq!(g, vec![1.0, 2.0]);
        let (l, _) = mse_loss(&[0.3f32, -0.2], &[0.3, -0.2]).unwrap();
        assert_eq!(l, 0.0);
        assert!(mse_loss(&[1.0f32], &[1.0, 2.0]).is_err());
    }
}
