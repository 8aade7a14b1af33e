//! Naive references and finite-difference probes for the layer kernels.

use lanepilot_core::nn::{mse_loss, ConvLayer, DenseLayer};
use lanepilot_core::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_EPS: f64 = 1e-3;
pub const REL_TOL: f64 = 1e-4;
pub const INSTANCES: usize = 20;
/// The two kernel configurations the network uses.
pub const CONV_CONFIGS: [(usize, usize); 2] = [(5, 2), (3, 1)];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Textbook convolution: explicit zero-padded input, then a plain sum.
pub fn naive_conv(x: &Tensor<f64>, k: &Tensor<f64>, b: &Tensor<f64>, stride: usize) -> Tensor<f64> {
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (oc, ks) = (k.shape()[0], k.shape()[2]);
    let oh = h.div_ceil(stride);
    let ow = w.div_ceil(stride);
    let pad_h = ((oh - 1) * stride + ks).saturating_sub(h);
    let pad_w = ((ow - 1) * stride + ks).saturating_sub(w);
    let (top, left) = (pad_h / 2, pad_w / 2);
    let (ph, pw) = (h + pad_h, w + pad_w);
    let mut padded = vec![0.0; c * ph * pw];
    for ci in 0..c {
        for i in 0..h {
            for j in 0..w {
                padded[(ci * ph + i + top) * pw + j + left] = x.data()[(ci * h + i) * w + j];
            }
        }
    }
    let mut out = vec![0.0; oc * oh * ow];
    for o in 0..oc {
        for i in 0..oh {
            for j in 0..ow {
                let mut acc = b.data()[o];
                for ci in 0..c {
                    for a in 0..ks {
                        for bb in 0..ks {
                            acc += k.data()[((o * c + ci) * ks + a) * ks + bb]
                                * padded[(ci * ph + i * stride + a) * pw + j * stride + bb];
                        }
                    }
                }
                out[(o * oh + i) * ow + j] = acc;
            }
        }
    }
    Tensor::from_vec(&[oc, oh, ow], out).unwrap()
}

pub fn max_abs_diff(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    if scale < 1e-7 {
        (analytic - numeric).abs()
    } else {
        (analytic - numeric).abs() / scale
    }
}

pub fn central_diff(mut f: impl FnMut(f64) -> f64, x0: f64) -> f64 {
    (f(x0 + FD_EPS) - f(x0 - FD_EPS)) / (2.0 * FD_EPS)
}

/// Loss `sum(out * r)` so that `d loss / d out = r`.
pub fn probe_loss(out: &Tensor<f64>, r: &Tensor<f64>) -> f64 {
    out.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
}

fn pick(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<usize> {
    (0..k.min(n)).map(|_| rng.gen_range(0..n)).collect()
}

/// Worst elementwise gap between the conv kernel and the naive reference
/// over random shapes.
pub fn conv_oracle_gap(seed: u64) -> f64 {
    let mut rng = rng(seed);
    let mut worst: f64 = 0.0;
    for (ks, stride) in CONV_CONFIGS {
        let mut shapes = vec![(1, 32, 64, 8), (1, 66, 200, 2), (4, 1, 6, 2)];
        for _ in 0..INSTANCES {
            shapes.push((rng.gen_range(1..5), rng.gen_range(1..20), rng.gen_range(1..20), rng.gen_range(1..6)));
        }
        for (c, h, w, oc) in shapes {
            let x = random(&mut rng, &[c, h, w]);
            let layer = ConvLayer::new(random(&mut rng, &[oc, c, ks, ks]), random(&mut rng, &[oc]), stride).unwrap();
            let got = layer.forward(&x).unwrap();
            worst = worst.max(max_abs_diff(&got, &naive_conv(&x, &layer.kernels, &layer.bias, stride)));
        }
    }
    worst
}

/// Worst relative error of conv input, kernel and bias gradients over
/// `INSTANCES` random layers per kernel configuration.
pub fn conv_gradient_error(seed: u64) -> f64 {
    let mut rng = rng(seed);
    let mut worst: f64 = 0.0;
    for (ks, stride) in CONV_CONFIGS {
        for _ in 0..INSTANCES {
            let (c, h, w, oc) = (rng.gen_range(1..4), rng.gen_range(2..10), rng.gen_range(2..10), rng.gen_range(1..4));
            let x = random(&mut rng, &[c, h, w]);
            let layer = ConvLayer::new(random(&mut rng, &[oc, c, ks, ks]), random(&mut rng, &[oc]), stride).unwrap();
            let r = random(&mut rng, layer.forward(&x).unwrap().shape());
            let g = layer.backward(&x, &r).unwrap();
            for i in pick(&mut rng, x.len(), 6) {
                let num = central_diff(
                    |v| {
                        let mut xp = x.clone();
                        xp.data_mut()[i] = v;
                        probe_loss(&layer.forward(&xp).unwrap(), &r)
                    },
                    x.data()[i],
                );
                worst = worst.max(rel_err(g.input.data()[i], num));
            }
            for i in pick(&mut rng, layer.kernels.len(), 6) {
                let num = central_diff(
                    |v| {
                        let mut lp = layer.clone();
                        lp.kernels.data_mut()[i] = v;
                        probe_loss(&lp.forward(&x).unwrap(), &r)
                    },
                    layer.kernels.data()[i],
                );
                worst = worst.max(rel_err(g.kernels.data()[i], num));
            }
            for i in 0..oc {
                let num = central_diff(
                    |v| {
                        let mut lp = layer.clone();
                        lp.bias.data_mut()[i] = v;
                        probe_loss(&lp.forward(&x).unwrap(), &r)
                    },
                    layer.bias.data()[i],
                );
                worst = worst.max(rel_err(g.bias.data()[i], num));
            }
        }
    }
    worst
}

pub fn dense_gradient_error(seed: u64) -> f64 {
    let mut rng = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..INSTANCES {
        let (n_in, n_out) = (rng.gen_range(1..50), rng.gen_range(1..10));
        let x = random(&mut rng, &[n_in]);
        let layer = DenseLayer::new(random(&mut rng, &[n_out, n_in]), random(&mut rng, &[n_out])).unwrap();
        let r = random(&mut rng, &[n_out]);
        let g = layer.backward(&x, &r).unwrap();
        for i in pick(&mut rng, n_in, 6) {
            let num = central_diff(
                |v| {
                    let mut xp = x.clone();
                    xp.data_mut()[i] = v;
                    probe_loss(&layer.forward(&xp).unwrap(), &r)
                },
                x.data()[i],
            );
            worst = worst.max(rel_err(g.input.data()[i], num));
        }
        for i in pick(&mut rng, layer.weights.len(), 6) {
            let num = central_diff(
                |v| {
                    let mut lp = layer.clone();
                    lp.weights.data_mut()[i] = v;
                    probe_loss(&lp.forward(&x).unwrap(), &r)
                },
                layer.weights.data()[i],
            );
            worst = worst.max(rel_err(g.weights.data()[i], num));
        }
        for i in 0..n_out {
            let num = central_diff(
                |v| {
                    let mut lp = layer.clone();
                    lp.bias.data_mut()[i] = v;
                    probe_loss(&lp.forward(&x).unwrap(), &r)
                },
                layer.bias.data()[i],
            );
            worst = worst.max(rel_err(g.bias.data()[i], num));
        }
    }
    worst
}

pub fn mse_gradient_error(seed: u64) -> f64 {
    let mut rng = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..INSTANCES {
        let n = rng.gen_range(1..30);
        let pred: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let target: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (_, grad) = mse_loss(&pred, &target).unwrap();
        for i in 0..n {
            let num = central_diff(
                |v| {
                    let mut p = pred.clone();
                    p[i] = v;
                    mse_loss(&p, &target).unwrap().0
                },
                pred[i],
            );
            worst = worst.max(rel_err(grad[i], num));
        }
    }
    worst
}
