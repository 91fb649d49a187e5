use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{shape_err, NetworkError, NetworkSpec};

// Every parameter mutation takes a fresh id, so a cache can only be replayed
// against the exact parameter state that produced it.
static NEXT_STATE: AtomicU64 = AtomicU64::new(1);

fn next_state() -> u64 {
    NEXT_STATE.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, z: &Array2<f64>) -> Array2<f64> {
        match self {
            Activation::Relu => z.mapv(|v| v.max(0.0)),
            Activation::Identity => z.clone(),
        }
    }

    /// Multiply `upstream` by the derivative at `z`; ReLU'(0) = 0.
    fn backprop(self, z: &Array2<f64>, upstream: &mut Array2<f64>) {
        if self == Activation::Relu {
            upstream.zip_mut_with(z, |g, &zv| {
                if zv <= 0.0 {
                    *g = 0.0;
                }
            });
        }
    }
}

/// `out = act(weights · in + bias)` with `weights` of shape `d_out × d_in`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn input_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.nrows()
    }

    fn pre_activation(&self, input: ArrayView2<f64>) -> Array2<f64> {
        input.dot(&self.weights.t()) + &self.bias
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Gradients in layer order: encoder layers first, then decoder layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
}

impl Gradients {
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for g in &self.layers {
            out.extend(g.weights.iter());
            out.extend(g.bias.iter());
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.flatten().iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Per-layer inputs and pre-activations from one batched forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    state: u64,
    inputs: Vec<Array2<f64>>,
    pre_activations: Vec<Array2<f64>>,
}

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    /// `n × d_kappa`, the activation of the last encoder layer.
    pub latent: Array2<f64>,
    /// `n × output_dim`, the decoder's final (identity) layer.
    pub output: Array2<f64>,
    pub cache: ForwardCache,
}

#[derive(Debug, Clone)]
pub struct EncoderDecoderNet {
    spec: NetworkSpec,
    layers: Vec<DenseLayer>,
    state: u64,
}

impl PartialEq for EncoderDecoderNet {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec && self.layers == other.layers
    }
}

impl EncoderDecoderNet {
    /// Fan-in scaled uniform weights `U(-sqrt(6/d_in), sqrt(6/d_in))`, zero biases.
    pub fn init(spec: &NetworkSpec) -> Result<Self, NetworkError> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let layers = layer_shapes(spec)
            .into_iter()
            .map(|(d_in, d_out, activation)| {
                let bound = (6.0 / d_in as f64).sqrt();
                let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
                let weights = Array2::from_shape_simple_fn((d_out, d_in), || dist.sample(&mut rng));
                DenseLayer {
                    weights,
                    bias: Array1::zeros(d_out),
                    activation,
                }
            })
            .collect();
        Ok(Self {
            spec: spec.clone(),
            layers,
            state: next_state(),
        })
    }

    /// Build from explicit layers; shapes must match `spec`.
    pub fn from_layers(spec: &NetworkSpec, layers: Vec<DenseLayer>) -> Result<Self, NetworkError> {
        spec.validate()?;
        let shapes = layer_shapes(spec);
        if shapes.len() != layers.len() {
            return Err(shape_err(
                format!("{} layers", shapes.len()),
                format!("{} layers", layers.len()),
            ));
        }
        for ((d_in, d_out, act), layer) in shapes.iter().zip(&layers) {
            if layer.weights.dim() != (*d_out, *d_in) || layer.bias.len() != *d_out {
                return Err(shape_err(
                    format!("{d_out}x{d_in}"),
                    format!("{:?} / bias {}", layer.weights.dim(), layer.bias.len()),
                ));
            }
            if layer.activation != *act {
                return Err(NetworkError::InvalidSpec(format!(
                    "layer activation {:?} where {:?} is required",
                    layer.activation, act
                )));
            }
            if !spec.use_bias && layer.bias.iter().any(|&b| b != 0.0) {
                return Err(NetworkError::InvalidSpec(
                    "non-zero bias with use_bias = false".into(),
                ));
            }
        }
        Ok(Self {
            spec: spec.clone(),
            layers,
            state: next_state(),
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn encoder_layers(&self) -> &[DenseLayer] {
        &self.layers[..self.spec.depth()]
    }

    pub fn decoder_layers(&self) -> &[DenseLayer] {
        &self.layers[self.spec.depth()..]
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn num_parameters(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn forward(&self, inputs: ArrayView2<f64>) -> Result<ForwardOutput, NetworkError> {
        if inputs.ncols() != self.spec.input_dim() {
            return Err(shape_err(self.spec.input_dim(), inputs.ncols()));
        }
        let depth = self.spec.depth();
        let mut cache_inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut current = inputs.to_owned();
        let mut latent = None;
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.pre_activation(current.view());
            let a = layer.activation.apply(&z);
            cache_inputs.push(current);
            pre.push(z);
            if i + 1 == depth {
                latent = Some(a.clone());
            }
            current = a;
        }
        Ok(ForwardOutput {
            latent: latent.expect("depth >= 1"),
            output: current,
            cache: ForwardCache {
                state: self.state,
                inputs: cache_inputs,
                pre_activations: pre,
            },
        })
    }

    /// Single-sample forward pass: `(latent, output, cache)`.
    pub fn forward_one(
        &self,
        x: ArrayView1<f64>,
    ) -> Result<(Array1<f64>, Array1<f64>, ForwardCache), NetworkError> {
        let out = self.forward(x.insert_axis(Axis(0)))?;
        Ok((
            out.latent.row(0).to_owned(),
            out.output.row(0).to_owned(),
            out.cache,
        ))
    }

    /// Latent codes for every row of `inputs`.
    pub fn encode_all(&self, inputs: ArrayView2<f64>) -> Result<Array2<f64>, NetworkError> {
        if inputs.ncols() != self.spec.input_dim() {
            return Err(shape_err(self.spec.input_dim(), inputs.ncols()));
        }
        let mut current = inputs.to_owned();
        for layer in self.encoder_layers() {
            current = layer
                .activation
                .apply(&layer.pre_activation(current.view()));
        }
        Ok(current)
    }

    /// Parameter gradients summed over the batch in `cache`.
    ///
    /// `output_grad` is `d loss / d output` per row. `latent_grad`, when given,
    /// is added to `d loss / d latent` (a penalty acting on the codes).
    pub fn backward(
        &self,
        cache: &ForwardCache,
        output_grad: ArrayView2<f64>,
        latent_grad: Option<ArrayView2<f64>>,
    ) -> Result<Gradients, NetworkError> {
        if cache.state != self.state {
            return Err(NetworkError::StaleCache);
        }
        let n = cache.inputs[0].nrows();
        let out_dim = self.spec.head.output_dim();
        if output_grad.dim() != (n, out_dim) {
            return Err(shape_err(
                format!("({n}, {out_dim})"),
                format!("{:?}", output_grad.dim()),
            ));
        }
        let depth = self.spec.depth();
        if let Some(lg) = &latent_grad {
            let d = self.spec.latent_dim();
            if lg.dim() != (n, d) {
                return Err(shape_err(format!("({n}, {d})"), format!("{:?}", lg.dim())));
            }
        }

        let mut grads = Vec::with_capacity(self.layers.len());
        let mut upstream = output_grad.to_owned();
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            if i + 1 == depth {
                if let Some(lg) = &latent_grad {
                    upstream += lg;
                }
            }
            layer
                .activation
                .backprop(&cache.pre_activations[i], &mut upstream);
            let weights = upstream.t().dot(&cache.inputs[i]);
            let bias = if self.spec.use_bias {
                upstream.sum_axis(Axis(0))
            } else {
                Array1::zeros(layer.output_dim())
            };
            grads.push(LayerGrad { weights, bias });
            if i > 0 {
                upstream = upstream.dot(&layer.weights);
            }
        }
        grads.reverse();
        Ok(Gradients { layers: grads })
    }

    /// All parameters, layer by layer, weights row-major then bias.
    pub fn parameters_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_parameters());
        for l in &self.layers {
            out.extend(l.weights.iter());
            out.extend(l.bias.iter());
        }
        out
    }

    pub fn set_parameters_flat(&mut self, params: &[f64]) -> Result<(), NetworkError> {
        if params.len() != self.num_parameters() {
            return Err(shape_err(self.num_parameters(), params.len()));
        }
        let mut offset = 0;
        for l in &mut self.layers {
            for w in l.weights.iter_mut() {
                *w = params[offset];
                offset += 1;
            }
            for b in l.bias.iter_mut() {
                *b = params[offset];
                offset += 1;
            }
        }
        if !self.spec.use_bias {
            for l in &mut self.layers {
                l.bias.fill(0.0);
            }
        }
        self.state = next_state();
        Ok(())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            spec: self.spec.clone(),
            layers: self
                .layers
                .iter()
                .map(|l| StoredLayer {
                    rows: l.weights.nrows(),
                    cols: l.weights.ncols(),
                    weights: l.weights.iter().copied().collect(),
                    bias: l.bias.to_vec(),
                    activation: l.activation,
                })
                .collect(),
        }
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self, NetworkError> {
        if ckpt.format != CHECKPOINT_FORMAT || ckpt.version != CHECKPOINT_VERSION {
            return Err(NetworkError::Checkpoint(format!(
                "unsupported container {} v{}",
                ckpt.format, ckpt.version
            )));
        }
        let layers = ckpt
            .layers
            .into_iter()
            .map(|s| {
                let weights = Array2::from_shape_vec((s.rows, s.cols), s.weights)
                    .map_err(|e| NetworkError::Checkpoint(e.to_string()))?;
                Ok(DenseLayer {
                    weights,
                    bias: Array1::from(s.bias),
                    activation: s.activation,
                })
            })
            .collect::<Result<Vec<_>, NetworkError>>()?;
        Self::from_layers(&ckpt.spec, layers)
    }

    pub fn save(&self, path: &Path) -> Result<(), NetworkError> {
        let text = serde_json::to_string(&self.to_checkpoint())
            .map_err(|e| NetworkError::Checkpoint(e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, NetworkError> {
        let text = std::fs::read_to_string(path)?;
        let ckpt: Checkpoint =
            serde_json::from_str(&text).map_err(|e| NetworkError::Checkpoint(e.to_string()))?;
        Self::from_checkpoint(ckpt)
    }
}

pub(crate) const CHECKPOINT_FORMAT: &str = "kmfm-network";
pub(crate) const CHECKPOINT_VERSION: u32 = 1;

/// Serialized network: spec plus row-major parameter matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub spec: NetworkSpec,
    pub layers: Vec<StoredLayer>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredLayer {
    pub rows: usize,
    pub cols: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

/// `(d_in, d_out, activation)` for encoder then decoder layers.
fn layer_shapes(spec: &NetworkSpec) -> Vec<(usize, usize, Activation)> {
    let dims = &spec.layer_dims;
    let k = spec.depth();
    let mut shapes: Vec<_> = dims
        .windows(2)
        .map(|w| (w[0], w[1], Activation::Relu))
        .collect();
    // Decoder: d_k -> d_{k-1} -> ... -> d_1 -> output.
    for i in (2..=k).rev() {
        shapes.push((dims[i], dims[i - 1], Activation::Relu));
    }
    shapes.push((dims[1], spec.head.output_dim(), Activation::Identity));
    shapes
}
