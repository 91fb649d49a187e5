use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{shape_err, EncoderDecoderNet, LossHead, NetworkError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    Momentum { mu: f64 },
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub shuffle_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 32,
            learning_rate: 1e-3,
            optimizer: Optimizer::default(),
            shuffle_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, n_train: usize) -> Result<(), NetworkError> {
        if self.epochs == 0 {
            return Err(NetworkError::InvalidConfig(
                "epochs must be positive".into(),
            ));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(NetworkError::InvalidConfig(
                "learning_rate must be finite and >= 0".into(),
            ));
        }
        if self.batch_size == 0 || self.batch_size > n_train {
            return Err(NetworkError::InvalidConfig(format!(
                "batch_size {} must lie in 1..={}",
                self.batch_size, n_train
            )));
        }
        match self.optimizer {
            Optimizer::Momentum { mu } if !(0.0..1.0).contains(&mu) => Err(
                NetworkError::InvalidConfig("momentum mu must lie in [0, 1)".into()),
            ),
            Optimizer::Adam { beta1, beta2, eps }
                if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || eps <= 0.0 =>
            {
                Err(NetworkError::InvalidConfig(
                    "adam betas must lie in [0, 1), eps > 0".into(),
                ))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train_loss: f64,
    /// `None` when no validation rows were supplied.
    pub validation_loss: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossHistory {
    pub epochs: Vec<EpochLoss>,
}

impl LossHistory {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn final_train_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.train_loss)
    }
}

/// Fixed extra gradient on the latent codes of the training rows, e.g. from
/// a projection penalty evaluated at the start of the epoch.
#[derive(Debug, Clone)]
pub struct LatentPenalty {
    /// `n_train × d_kappa`; row `i` is `d penalty / d latent_i`.
    pub grad: Array2<f64>,
}

/// Mean per-sample head loss over all rows.
pub fn evaluate_loss(
    net: &EncoderDecoderNet,
    inputs: ArrayView2<f64>,
    targets: ArrayView2<f64>,
) -> Result<f64, NetworkError> {
    if inputs.nrows() != targets.nrows() {
        return Err(shape_err(inputs.nrows(), targets.nrows()));
    }
    if inputs.nrows() == 0 {
        return Err(NetworkError::InvalidConfig("no rows to evaluate".into()));
    }
    let head = LossHead::from_spec(&net.spec().head);
    let out = net.forward(inputs)?;
    let (losses, _) = head.batch(out.output.view(), targets)?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

struct OptimizerState {
    kind: Optimizer,
    lr: f64,
    step: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl OptimizerState {
    fn new(kind: Optimizer, lr: f64, n_params: usize) -> Self {
        Self {
            kind,
            lr,
            step: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        }
    }

    fn update(&mut self, params: &mut [f64], grad: &[f64]) {
        self.step += 1;
        match self.kind {
            Optimizer::Sgd => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= self.lr * g;
                }
            }
            Optimizer::Momentum { mu } => {
                for ((p, g), m) in params.iter_mut().zip(grad).zip(&mut self.m) {
                    *m = mu * *m + g;
                    *p -= self.lr * *m;
                }
            }
            Optimizer::Adam { beta1, beta2, eps } => {
                let c1 = 1.0 - beta1.powi(self.step);
                let c2 = 1.0 - beta2.powi(self.step);
                for (((p, g), m), v) in params
                    .iter_mut()
                    .zip(grad)
                    .zip(&mut self.m)
                    .zip(&mut self.v)
                {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                }
            }
        }
    }
}

/// Mini-batch training on the network's own head loss.
pub fn train(
    net: &mut EncoderDecoderNet,
    train_data: (ArrayView2<f64>, ArrayView2<f64>),
    validation: Option<(ArrayView2<f64>, ArrayView2<f64>)>,
    cfg: &TrainConfig,
) -> Result<LossHistory, NetworkError> {
    train_with_latent_penalty(net, train_data, validation, cfg, 1.0, None)
}

/// Mini-batch training on `loss_weight * head_loss + penalty`.
///
/// Each step uses the batch mean of the weighted head-loss gradient plus the
/// batch mean of the penalty's latent gradient rows. The recorded history is
/// the unweighted mean head loss, evaluated after each epoch.
pub fn train_with_latent_penalty(
    net: &mut EncoderDecoderNet,
    train_data: (ArrayView2<f64>, ArrayView2<f64>),
    validation: Option<(ArrayView2<f64>, ArrayView2<f64>)>,
    cfg: &TrainConfig,
    loss_weight: f64,
    penalty: Option<&LatentPenalty>,
) -> Result<LossHistory, NetworkError> {
    let (x, y) = train_data;
    let n = x.nrows();
    if y.nrows() != n {
        return Err(shape_err(n, y.nrows()));
    }
    if y.ncols() != net.spec().head.output_dim() {
        return Err(shape_err(net.spec().head.output_dim(), y.ncols()));
    }
    if let Some((vx, vy)) = &validation {
        if vx.nrows() != vy.nrows() {
            return Err(shape_err(vx.nrows(), vy.nrows()));
        }
    }
    if let Some(p) = penalty {
        if p.grad.dim() != (n, net.spec().latent_dim()) {
            return Err(shape_err(
                format!("({n}, {})", net.spec().latent_dim()),
                format!("{:?}", p.grad.dim()),
            ));
        }
    }
    cfg.validate(n)?;

    let head = LossHead::from_spec(&net.spec().head);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.shuffle_seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut opt = OptimizerState::new(cfg.optimizer, cfg.learning_rate, net.num_parameters());
    let mut params = net.parameters_flat();
    let mut history = LossHistory::default();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let bx = x.select(Axis(0), batch);
            let by = y.select(Axis(0), batch);
            let out = net.forward(bx.view())?;
            let (_, mut out_grad) = head.batch(out.output.view(), by.view())?;
            let scale = 1.0 / batch.len() as f64;
            out_grad *= loss_weight * scale;
            let latent_grad = penalty.map(|p| p.grad.select(Axis(0), batch) * scale);
            let grads = net.backward(
                &out.cache,
                out_grad.view(),
                latent_grad.as_ref().map(|g| g.view()),
            )?;
            opt.update(&mut params, &grads.flatten());
            net.set_parameters_flat(&params)?;
        }
        let train_loss = evaluate_loss(net, x, y)?;
        let validation_loss = match &validation {
            Some((vx, vy)) if vx.nrows() > 0 => Some(evaluate_loss(net, *vx, *vy)?),
            _ => None,
        };
        if !train_loss.is_finite() || validation_loss.is_some_and(|v| !v.is_finite()) {
            return Err(NetworkError::DivergenceDetected { epoch });
        }
        history.epochs.push(EpochLoss {
            epoch,
            train_loss,
            validation_loss,
        });
    }
    Ok(history)
}
