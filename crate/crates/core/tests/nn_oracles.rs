//! Layer kernels against naive references and finite differences, in f64.

mod common;

use common::nn::*;
use lanepilot_core::nn::{same_padding, ConvLayer, NetConfig, Network};
use lanepilot_core::Tensor;
use proptest::prelude::*;
use rand::Rng;

#[test]
fn conv_matches_nested_loops() {
    let gap = conv_oracle_gap(11);
    assert!(gap < 1e-6, "max gap {gap:e}");
}

#[test]
fn same_padding_shape_law() {
    for input in 1..80 {
        for (k, s) in CONV_CONFIGS {
            let (out, front) = same_padding(input, k, s);
            assert_eq!(out, input.div_ceil(s));
            let total = ((out - 1) * s + k).saturating_sub(input);
            assert_eq!(front, total / 2);
            assert!(total - front >= front);
        }
    }
}

proptest! {
    #[test]
    fn conv_is_affine(h in 1usize..12, w in 1usize..12, cfg in 0usize..2, a in -3.0f64..3.0, b in -3.0f64..3.0, seed: u64) {
        let (ks, stride) = CONV_CONFIGS[cfg];
        let mut rng = rng(seed);
        let layer = ConvLayer::new(random(&mut rng, &[3, 2, ks, ks]), random(&mut rng, &[3]), stride).unwrap();
        let x = random(&mut rng, &[2, h, w]);
        let y = random(&mut rng, &[2, h, w]);
        let mut mix = x.clone();
        mix.scale(a);
        mix.add_scaled(&y, b);
        // f(ax + by) - bias == a (f(x) - bias) + b (f(y) - bias)
        let bias_term = layer.forward(&Tensor::zeros(&[2, h, w])).unwrap();
        let lhs = {
            let mut t = layer.forward(&mix).unwrap();
            t.add_scaled(&bias_term, -1.0);
            t
        };
        let mut rhs = layer.forward(&x).unwrap();
        rhs.add_scaled(&bias_term, -1.0);
        rhs.scale(a);
        let mut fy = layer.forward(&y).unwrap();
        fy.add_scaled(&bias_term, -1.0);
        rhs.add_scaled(&fy, b);
        prop_assert!(max_abs_diff(&lhs, &rhs) < 1e-9);
        let (oh, _) = same_padding(h, ks, stride);
        let (ow, _) = same_padding(w, ks, stride);
        prop_assert_eq!(lhs.shape(), &[3, oh, ow][..]);
    }
}

#[test]
fn conv_gradients_match_finite_differences() {
    let worst = conv_gradient_error(5);
    assert!(worst < REL_TOL, "worst relative error {worst:e}");
}

#[test]
fn dense_gradients_match_finite_differences() {
    let worst = dense_gradient_error(6);
    assert!(worst < REL_TOL, "worst relative error {worst:e}");
}

#[test]
fn mse_gradient_matches_finite_differences() {
    let worst = mse_gradient_error(7);
    assert!(worst < REL_TOL, "worst relative error {worst:e}");
}

fn pick(rng: &mut impl Rng, n: usize, k: usize) -> Vec<usize> {
    (0..k.min(n)).map(|_| rng.gen_range(0..n)).collect()
}

/// End to end through ReLUs: squared error of the prediction against every
/// parameter of every layer.
#[test]
fn network_gradients_match_finite_differences() {
    let cfg = NetConfig {
        profile: "check".into(),
        input_height: 13,
        input_width: 17,
        input_channels: 1,
        conv_channels: [3, 4, 4, 3],
        hidden_units: 6,
        seed: 0,
    };
    let mut rng = rng(8);
    let params = cfg
        .layer_shapes()
        .iter()
        .map(|(ws, b)| {
            let mut bias = random(&mut rng, &[*b]);
            // positive biases keep most units active
            bias.data_mut().iter_mut().for_each(|v| *v = 0.2 + 0.3 * v.abs());
            (random(&mut rng, ws), bias)
        })
        .collect();
    let net: Network<f64> = Network::from_parameters(cfg.clone(), params).unwrap();
    let x = random(&mut rng, &cfg.input_shape());
    let target = 0.3;
    let loss = |n: &Network<f64>| (n.predict(&x).unwrap() - target).powi(2);
    let trace = net.forward_trace(&x).unwrap();
    let (grads, gx) = net.backward(&trace, 2.0 * (trace.prediction() - target)).unwrap();

    for (li, (gw, gb)) in grads.layers.iter().enumerate() {
        let mut worst: f64 = 0.0;
        let n_w = net.layers()[li].weights().len();
        for i in pick(&mut rng, n_w, 24) {
            let w0 = net.layers()[li].weights().data()[i];
            let num = central_diff(
                |v| {
                    let mut p: Vec<_> = net.layers().iter().map(|l| (l.weights().clone(), l.bias().clone())).collect();
                    p[li].0.data_mut()[i] = v;
                    loss(&Network::from_parameters(cfg.clone(), p).unwrap())
                },
                w0,
            );
            worst = worst.max(rel_err(gw.data()[i], num));
        }
        for i in 0..gb.len() {
            let b0 = net.layers()[li].bias().data()[i];
            let num = central_diff(
                |v| {
                    let mut p: Vec<_> = net.layers().iter().map(|l| (l.weights().clone(), l.bias().clone())).collect();
                    p[li].1.data_mut()[i] = v;
                    loss(&Network::from_parameters(cfg.clone(), p).unwrap())
                },
                b0,
            );
            worst = worst.max(rel_err(gb.data()[i], num));
        }
        assert!(worst < REL_TOL, "layer {li}: worst relative error {worst:e}");
    }

    let mut worst: f64 = 0.0;
    for i in pick(&mut rng, x.len(), 24) {
        let num = central_diff(
            |v| {
                let mut xp = x.clone();
                xp.data_mut()[i] = v;
                (net.predict(&xp).unwrap() - target).powi(2)
            },
            x.data()[i],
        );
        worst = worst.max(rel_err(gx.data()[i], num));
    }
    assert!(worst < REL_TOL, "input gradient: worst relative error {worst:e}");
}

#[test]
fn tiny_profile_shapes() {
    let cfg = NetConfig::tiny(0);
    assert_eq!(cfg.parameter_count(), 26_205);
    let net = Network::init(&cfg).unwrap();
    let trace = net.forward_trace(&Tensor::zeros(&cfg.input_shape())).unwrap();
    let shapes: Vec<Vec<usize>> = trace.outputs().iter().map(|t| t.shape().to_vec()).collect();
    assert_eq!(shapes, vec![vec![8, 16, 32], vec![12, 8, 16], vec![16, 4, 8], vec![16, 4, 8], vec![32], vec![1]]);
}
