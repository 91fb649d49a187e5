//! Dense encoder-decoder networks with ReLU hidden units, a softmax or MSE
//! head, hand-written backpropagation and first-order optimisers.

mod loss;
mod network;
mod train;

pub use loss::{mse, mse_grad, softmax_nll, softmax_nll_grad, softmax_probabilities, LossHead};
pub use network::{
    Activation, Checkpoint, DenseLayer, EncoderDecoderNet, ForwardCache, ForwardOutput, Gradients,
    LayerGrad, StoredLayer,
};
pub use train::{
    evaluate_loss, train, train_with_latent_penalty, EpochLoss, LatentPenalty, LossHistory,
    Optimizer, TrainConfig,
};

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum NetworkError {
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },
    #[error("forward cache was produced by a different parameter state")]
    StaleCache,
    #[error("training diverged at epoch {epoch}: non-finite loss")]
    DivergenceDetected { epoch: usize },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn shape_err(expected: impl ToString, got: impl ToString) -> NetworkError {
    NetworkError::ShapeMismatch {
        expected: expected.to_string(),
        got: got.to_string(),
    }
}

/// Terminal loss attached to the decoder output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum HeadSpec {
    /// Softmax over the dummy-coded categorical block. With `blocks = None`
    /// one softmax spans all `output_dim` logits; otherwise one softmax per
    /// category block, block sizes summing to `output_dim`.
    SoftmaxCategorical {
        output_dim: usize,
        blocks: Option<Vec<usize>>,
    },
    /// Mean squared error against the numerical block.
    MseNumerical { output_dim: usize },
}

impl HeadSpec {
    pub fn output_dim(&self) -> usize {
        match self {
            HeadSpec::SoftmaxCategorical { output_dim, .. }
            | HeadSpec::MseNumerical { output_dim } => *output_dim,
        }
    }
}

/// Architecture of one encoder-decoder network.
///
/// `layer_dims = [d0, d1, ..., dk]`: `d0` is the input width and `dk` the
/// latent width. Widths must strictly decrease. With `input_lift` the first
/// hidden layer may be wider than the input (`d1 >= d0`), but `d1 > ... > dk`
/// must still hold. The decoder mirrors the encoder back to `d1` and ends in
/// a linear layer of width `head.output_dim()`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub layer_dims: Vec<usize>,
    pub head: HeadSpec,
    pub use_bias: bool,
    pub seed: u64,
    #[serde(default)]
    pub input_lift: bool,
}

impl NetworkSpec {
    pub fn new(layer_dims: Vec<usize>, head: HeadSpec, seed: u64) -> Self {
        Self {
            layer_dims,
            head,
            use_bias: true,
            seed,
            input_lift: false,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn latent_dim(&self) -> usize {
        *self.layer_dims.last().expect("validated spec")
    }

    /// Number of encoder layers (kappa).
    pub fn depth(&self) -> usize {
        self.layer_dims.len() - 1
    }

    pub fn validate(&self) -> Result<(), NetworkError> {
        let dims = &self.layer_dims;
        if dims.len() < 2 {
            return Err(NetworkError::InvalidSpec(
                "need an input width and at least one encoder layer".into(),
            ));
        }
        if dims.contains(&0) || self.head.output_dim() == 0 {
            return Err(NetworkError::InvalidSpec("all widths must be >= 1".into()));
        }
        let start = usize::from(self.input_lift);
        if let Some(w) = dims[start..].windows(2).find(|w| w[0] <= w[1]) {
            return Err(NetworkError::InvalidSpec(format!(
                "encoder widths must strictly decrease, found {} -> {} in {:?}",
                w[0], w[1], dims
            )));
        }
        if let HeadSpec::SoftmaxCategorical {
            output_dim,
            blocks: Some(blocks),
        } = &self.head
        {
            if blocks.contains(&0) || blocks.iter().sum::<usize>() != *output_dim {
                return Err(NetworkError::InvalidSpec(format!(
                    "softmax blocks {:?} do not partition {} outputs",
                    blocks, output_dim
                )));
            }
        }
        Ok(())
    }
}

/// Encoder widths for `depth` layers ending at `latent`.
///
/// When `latent < input` the widths interpolate geometrically between the
/// two. Otherwise the encoder first lifts to `2 * latent` and then
/// interpolates down, which requires `NetworkSpec::input_lift`. Rounded
/// widths are nudged so they stay strictly decreasing.
pub fn encoder_widths(input: usize, latent: usize, depth: usize) -> (Vec<usize>, bool) {
    assert!(depth >= 1 && latent >= 1);
    let lift = latent + depth > input;
    let (top, steps) = if lift {
        ((2 * latent).max(latent + depth - 1), depth - 1)
    } else {
        (input, depth)
    };
    let mut hidden = Vec::with_capacity(depth);
    for i in (if lift { 0 } else { 1 })..=steps {
        let t = i as f64 / steps.max(1) as f64;
        let w = (top as f64).powf(1.0 - t) * (latent as f64).powf(t);
        hidden.push(w.round() as usize);
    }
    if lift && depth == 1 {
        hidden = vec![latent];
    }
    // Walk backwards from the latent width enforcing strict decrease.
    let last = hidden.len() - 1;
    hidden[last] = latent;
    for i in (0..last).rev() {
        if hidden[i] <= hidden[i + 1] {
            hidden[i] = hidden[i + 1] + 1;
        }
    }
    let mut dims = Vec::with_capacity(depth + 1);
    dims.push(input);
    dims.extend(hidden);
    (dims, lift)
}
