use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::nn::layers::{relu, relu_backward, ConvLayer, DenseLayer};
use crate::nn::NnError;
use crate::tensor::{Scalar, Tensor};

/// Initial bias value for every layer.
pub const INIT_BIAS: f32 = 0.1;
/// Weights are drawn uniformly from `[-INIT_WEIGHT_RANGE, INIT_WEIGHT_RANGE]`.
pub const INIT_WEIGHT_RANGE: f32 = 0.1;

/// Kernel size and stride of the four convolution stages.
pub const CONV_STAGES: [(usize, usize); 4] = [(5, 2), (5, 2), (5, 2), (3, 1)];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetConfig {
    pub profile: String,
    pub input_height: usize,
    pub input_width: usize,
    pub input_channels: usize,
    pub conv_channels: [usize; 4],
    pub hidden_units: usize,
    pub seed: u64,
}

impl NetConfig {
    /// 66x200 grayscale, channels [24, 36, 48, 64], 100 hidden units.
    pub fn full(seed: u64) -> Self {
        Self {
            profile: "full".into(),
            input_height: 66,
            input_width: 200,
            input_channels: 1,
            conv_channels: [24, 36, 48, 64],
            hidden_units: 100,
            seed,
        }
    }

    /// 32x64 grayscale, channels [8, 12, 16, 16], 32 hidden units.
    pub fn tiny(seed: u64) -> Self {
        Self {
            profile: "tiny".into(),
            input_height: 32,
            input_width: 64,
            input_channels: 1,
            conv_channels: [8, 12, 16, 16],
            hidden_units: 32,
            seed,
        }
    }

    pub fn from_profile(name: &str, seed: u64) -> Result<Self, NnError> {
        match name {
            "full" => Ok(Self::full(seed)),
            "tiny" => Ok(Self::tiny(seed)),
            other => Err(NnError::Config(format!(
                "unknown network profile `{other}`"
            ))),
        }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if self.input_height == 0
            || self.input_width == 0
            || self.input_channels == 0
            || self.hidden_units == 0
            || self.conv_channels.contains(&0)
        {
            return Err(NnError::Config(format!(
                "network dimensions must be positive: {self:?}"
            )));
        }
        Ok(())
    }

    pub fn input_shape(&self) -> [usize; 3] {
        [self.input_channels, self.input_height, self.input_width]
    }

    /// Shape of every parameter tensor in layer order, as (weights, bias).
    pub fn layer_shapes(&self) -> Vec<(Vec<usize>, usize)> {
        let mut shapes = Vec::with_capacity(6);
        let (mut c, mut h, mut w) = (self.input_channels, self.input_height, self.input_width);
        for (&out, &(k, stride)) in self.conv_channels.iter().zip(&CONV_STAGES) {
            shapes.push((vec![out, c, k, k], out));
            c = out;
            h = h.div_ceil(stride);
            w = w.div_ceil(stride);
        }
        let flat = c * h * w;
        shapes.push((vec![self.hidden_units, flat], self.hidden_units));
        shapes.push((vec![1, self.hidden_units], 1));
        shapes
    }

    pub fn parameter_count(&self) -> usize {
        self.layer_shapes()
            .iter()
            .map(|(w, b)| w.iter().product::<usize>() + b)
            .sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Layer<T: Scalar = f32> {
    Conv(ConvLayer<T>),
    Dense(DenseLayer<T>),
}

impl<T: Scalar> Layer<T> {
    pub fn weights(&self) -> &Tensor<T> {
        match self {
            Layer::Conv(c) => &c.kernels,
            Layer::Dense(d) => &d.weights,
        }
    }

    pub fn bias(&self) -> &Tensor<T> {
        match self {
            Layer::Conv(c) => &c.bias,
            Layer::Dense(d) => &d.bias,
        }
    }

    fn params_mut(&mut self) -> (&mut Tensor<T>, &mut Tensor<T>) {
        match self {
            Layer::Conv(c) => (&mut c.kernels, &mut c.bias),
            Layer::Dense(d) => (&mut d.weights, &mut d.bias),
        }
    }

    fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        match self {
            Layer::Conv(c) => c.forward(input),
            Layer::Dense(d) => d.forward(input),
        }
    }

    fn backward(&self, input: &Tensor<T>, grad_out: &Tensor<T>) -> Result<LayerGrad<T>, NnError> {
        Ok(match self {
            Layer::Conv(c) => {
                let g = c.backward(input, grad_out)?;
                LayerGrad {
                    weights: g.kernels,
                    bias: g.bias,
                    input: g.input,
                }
            }
            Layer::Dense(d) => {
                let g = d.backward(input, grad_out)?;
                LayerGrad {
                    weights: g.weights,
                    bias: g.bias,
                    input: g.input,
                }
            }
        })
    }
}

struct LayerGrad<T: Scalar> {
    weights: Tensor<T>,
    bias: Tensor<T>,
    input: Tensor<T>,
}

/// Four SAME-padded convolutions followed by two fully-connected layers.
/// ReLU follows every layer except the last, which is a linear scalar head.
#[derive(Clone, Debug, PartialEq)]
pub struct Network<T: Scalar = f32> {
    config: NetConfig,
    layers: Vec<Layer<T>>,
}

/// Parameter gradients, one (weights, bias) pair per layer.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T: Scalar = f32> {
    pub layers: Vec<(Tensor<T>, Tensor<T>)>,
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros_like(net: &Network<T>) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| {
                    (
                        Tensor::zeros(l.weights().shape()),
                        Tensor::zeros(l.bias().shape()),
                    )
                })
                .collect(),
        }
    }

    pub fn accumulate(&mut self, other: &Self) {
        for ((w, b), (ow, ob)) in self.layers.iter_mut().zip(&other.layers) {
            w.add_scaled(ow, T::one());
            b.add_scaled(ob, T::one());
        }
    }

    pub fn scale(&mut self, factor: T) {
        for (w, b) in &mut self.layers {
            w.scale(factor);
            b.scale(factor);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|(w, b)| w.is_finite() && b.is_finite())
    }
}

/// Activations kept from a forward pass for backpropagation.
pub struct ForwardTrace<T: Scalar = f32> {
    /// Input to each layer.
    inputs: Vec<Tensor<T>>,
    /// Pre-activation output of each layer.
    outputs: Vec<Tensor<T>>,
}

impl<T: Scalar> ForwardTrace<T> {
    /// Pre-activation output of each layer.
    pub fn outputs(&self) -> &[Tensor<T>] {
        &self.outputs
    }

    pub fn prediction(&self) -> T {
        self.outputs.last().expect("network has layers").data()[0]
    }
}

impl Network<f32> {
    /// Biases are set to 0.1; weights are i.i.d. uniform in [-0.1, 0.1]
    /// from a ChaCha8 stream seeded by `cfg.seed`.
    pub fn init(cfg: &NetConfig) -> Result<Self, NnError> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let layers = cfg
            .layer_shapes()
            .into_iter()
            .enumerate()
            .map(|(i, (wshape, blen))| {
                let n: usize = wshape.iter().product();
                let w = (0..n)
                    .map(|_| rng.gen_range(-INIT_WEIGHT_RANGE..=INIT_WEIGHT_RANGE))
                    .collect();
                let weights = Tensor::from_vec(&wshape, w)?;
                let bias = Tensor::filled(&[blen], INIT_BIAS);
                Self::make_layer(i, weights, bias)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            config: cfg.clone(),
            layers,
        })
    }
}

impl<T: Scalar> Network<T> {
    fn make_layer(index: usize, weights: Tensor<T>, bias: Tensor<T>) -> Result<Layer<T>, NnError> {
        if index < CONV_STAGES.len() {
            ConvLayer::new(weights, bias, CONV_STAGES[index].1).map(Layer::Conv)
        } else {
            DenseLayer::new(weights, bias).map(Layer::Dense)
        }
    }

    /// Builds a network from explicit parameters, checking them against the
    /// shapes implied by `config`.
    pub fn from_parameters(
        config: NetConfig,
        params: Vec<(Tensor<T>, Tensor<T>)>,
    ) -> Result<Self, NnError> {
        config.validate()?;
        let shapes = config.layer_shapes();
        if params.len() != shapes.len() {
            return Err(NnError::Shape(format!(
                "expected {} layers, got {}",
                shapes.len(),
                params.len()
            )));
        }
        let layers = params
            .into_iter()
            .zip(&shapes)
            .enumerate()
            .map(|(i, ((w, b), (ws, bl)))| {
                if w.shape() != ws.as_slice() || b.shape() != [*bl] {
                    return Err(NnError::Shape(format!(
                        "layer {i}: expected {ws:?}/[{bl}], got {:?}/{:?}",
                        w.shape(),
                        b.shape()
                    )));
                }
                Self::make_layer(i, w, b)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { config, layers })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn cast<U: Scalar>(&self) -> Network<U> {
        let params = self
            .layers
            .iter()
            .map(|l| (l.weights().cast(), l.bias().cast()))
            .collect();
        Network::from_parameters(self.config.clone(), params).expect("shapes unchanged by cast")
    }

    /// Overwrites every weight with `weight` and every bias with `bias`.
    pub fn fill(&mut self, weight: T, bias: T) {
        for layer in &mut self.layers {
            let (w, b) = layer.params_mut();
            w.data_mut().fill(weight);
            b.data_mut().fill(bias);
        }
    }

    pub fn forward_trace(&self, frame: &Tensor<T>) -> Result<ForwardTrace<T>, NnError> {
        if frame.shape() != self.config.input_shape() {
            return Err(NnError::Shape(format!(
                "frame shape {:?} does not match network input {:?}",
                frame.shape(),
                self.config.input_shape()
            )));
        }
        let n = self.layers.len();
        let mut inputs = Vec::with_capacity(n);
        let mut outputs = Vec::with_capacity(n);
        let mut x = frame.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.forward(&x)?;
            let next = if i + 1 < n { relu(&z) } else { z.clone() };
            inputs.push(x);
            outputs.push(z);
            x = next;
        }
        Ok(ForwardTrace { inputs, outputs })
    }

    /// Steering angle in radians for one `[C, H, W]` frame.
    pub fn predict(&self, frame: &Tensor<T>) -> Result<T, NnError> {
        if frame.shape() != self.config.input_shape() {
            return Err(NnError::Shape(format!(
                "frame shape {:?} does not match network input {:?}",
                frame.shape(),
                self.config.input_shape()
            )));
        }
        let n = self.layers.len();
        let mut x = frame.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.forward(&x)?;
            x = if i + 1 < n { relu(&z) } else { z };
        }
        Ok(x.data()[0])
    }

    /// Backpropagates `d loss / d prediction` through a recorded forward pass.
    /// Returns parameter gradients and the gradient with respect to the frame.
    pub fn backward(
        &self,
        trace: &ForwardTrace<T>,
        grad_prediction: T,
    ) -> Result<(Gradients<T>, Tensor<T>), NnError> {
        let n = self.layers.len();
        let mut grads = Vec::with_capacity(n);
        let mut g = Tensor::filled(&[1], grad_prediction);
        for i in (0..n).rev() {
            if i + 1 < n {
                g = relu_backward(&trace.outputs[i], &g)?;
            }
            let lg = self.layers[i].backward(&trace.inputs[i], &g)?;
            grads.push((lg.weights, lg.bias));
            g = lg.input;
        }
        grads.reverse();
        Ok((Gradients { layers: grads }, g))
    }

    /// `w <- w - lr * grad`
    pub fn apply_gradients(&mut self, grads: &Gradients<T>, learning_rate: T) {
        for (layer, (gw, gb)) in self.layers.iter_mut().zip(&grads.layers) {
            let (w, b) = layer.params_mut();
            w.add_scaled(gw, -learning_rate);
            b.add_scaled(gb, -learning_rate);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights().is_finite() && l.bias().is_finite())
    }
}
