use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use super::{shape_err, HeadSpec, NetworkError};

/// Softmax with max-shift.
pub fn softmax_probabilities(logits: ArrayView1<f64>) -> Array1<f64> {
    let max = logits.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let exp = logits.mapv(|v| (v - max).exp());
    let total = exp.sum();
    exp / total
}

fn log_sum_exp(logits: ArrayView1<f64>) -> f64 {
    let max = logits.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    max + logits.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// `-sum_l onehot_l * log softmax(logits)_l` over one global softmax.
pub fn softmax_nll(logits: ArrayView1<f64>, onehot: ArrayView1<f64>) -> Result<f64, NetworkError> {
    if logits.len() != onehot.len() {
        return Err(shape_err(logits.len(), onehot.len()));
    }
    let lse = log_sum_exp(logits);
    Ok(logits
        .iter()
        .zip(onehot.iter())
        .filter(|(_, &y)| y != 0.0)
        .map(|(&z, &y)| y * (lse - z))
        .sum())
}

/// Gradient of [`softmax_nll`] with respect to the logits.
pub fn softmax_nll_grad(logits: ArrayView1<f64>, onehot: ArrayView1<f64>) -> Array1<f64> {
    let p = softmax_probabilities(logits);
    let mass = onehot.sum();
    p * mass - onehot
}

/// `p1^-1 * ||target - pred||^2`.
pub fn mse(pred: ArrayView1<f64>, target: ArrayView1<f64>) -> Result<f64, NetworkError> {
    if pred.len() != target.len() {
        return Err(shape_err(target.len(), pred.len()));
    }
    if pred.is_empty() {
        return Ok(0.0);
    }
    let sq: f64 = pred
        .iter()
        .zip(target.iter())
        .map(|(p, t)| (t - p) * (t - p))
        .sum();
    Ok(sq / pred.len() as f64)
}

pub fn mse_grad(pred: ArrayView1<f64>, target: ArrayView1<f64>) -> Array1<f64> {
    let scale = 2.0 / pred.len().max(1) as f64;
    (&pred - &target) * scale
}

/// Batched loss head: per-sample losses and `d loss_i / d output_i`.
#[derive(Debug, Clone, PartialEq)]
pub enum LossHead {
    Softmax { blocks: Vec<usize> },
    Mse,
}

impl LossHead {
    pub fn from_spec(spec: &HeadSpec) -> Self {
        match spec {
            HeadSpec::SoftmaxCategorical { output_dim, blocks } => LossHead::Softmax {
                blocks: blocks.clone().unwrap_or_else(|| vec![*output_dim]),
            },
            HeadSpec::MseNumerical { .. } => LossHead::Mse,
        }
    }

    pub fn loss(
        &self,
        output: ArrayView1<f64>,
        target: ArrayView1<f64>,
    ) -> Result<f64, NetworkError> {
        match self {
            LossHead::Mse => mse(output, target),
            LossHead::Softmax { blocks } => {
                if output.len() != target.len() {
                    return Err(shape_err(target.len(), output.len()));
                }
                let mut total = 0.0;
                let mut start = 0;
                for &b in blocks {
                    let end = start + b;
                    total += softmax_nll(
                        output.slice(ndarray::s![start..end]),
                        target.slice(ndarray::s![start..end]),
                    )?;
                    start = end;
                }
                Ok(total)
            }
        }
    }

    pub fn grad(&self, output: ArrayView1<f64>, target: ArrayView1<f64>) -> Array1<f64> {
        match self {
            LossHead::Mse => mse_grad(output, target),
            LossHead::Softmax { blocks } => {
                let mut g = Array1::zeros(output.len());
                let mut start = 0;
                for &b in blocks {
                    let end = start + b;
                    let part = softmax_nll_grad(
                        output.slice(ndarray::s![start..end]),
                        target.slice(ndarray::s![start..end]),
                    );
                    g.slice_mut(ndarray::s![start..end]).assign(&part);
                    start = end;
                }
                g
            }
        }
    }

    /// Per-row losses and output gradients for a batch.
    pub fn batch(
        &self,
        outputs: ArrayView2<f64>,
        targets: ArrayView2<f64>,
    ) -> Result<(Vec<f64>, Array2<f64>), NetworkError> {
        if outputs.dim() != targets.dim() {
            return Err(shape_err(
                format!("{:?}", targets.dim()),
                format!("{:?}", outputs.dim()),
            ));
        }
        let mut losses = Vec::with_capacity(outputs.nrows());
        let mut grads = Array2::zeros(outputs.dim());
        for ((o, t), mut g) in outputs
            .axis_iter(Axis(0))
            .zip(targets.axis_iter(Axis(0)))
            .zip(grads.axis_iter_mut(Axis(0)))
        {
            losses.push(self.loss(o, t)?);
            g.assign(&self.grad(o, t));
        }
        Ok((losses, grads))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn uniform_logits() {
        let loss = softmax_nll(
            array![0.3, 0.3, 0.3, 0.3].view(),
            array![0.0, 0.0, 1.0, 0.0].view(),
        )
        .unwrap();
        assert!((loss - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn large_logits_do_not_overflow() {
        let loss = softmax_nll(array![1000.0, 0.0].view(), array![1.0, 0.0].view()).unwrap();
        assert!(loss.is_finite() && loss.abs() < 1e-12);
        let other = softmax_nll(array![1000.0, 0.0].view(), array![0.0, 1.0].view()).unwrap();
        assert!((other - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn label_symmetry() {
        let z = array![0.0, 0.0, 0.0];
        let a = softmax_nll(z.view(), array![1.0, 0.0, 0.0].view()).unwrap();
        let b = softmax_nll(z.view(), array![0.0, 1.0, 0.0].view()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn probabilities_sum_to_one() {
        let p = softmax_probabilities(array![3.0, -2.0, 40.0, 0.5].view());
        assert!((p.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mse_examples() {
        assert_eq!(
            mse(array![1.0, 2.0].view(), array![1.0, 2.0].view()).unwrap(),
            0.0
        );
        assert_eq!(
            mse(array![0.0, 0.0].view(), array![3.0, 4.0].view()).unwrap(),
            12.5
        );
        let base = mse(array![0.0, 1.0].view(), array![1.0, -1.0].view()).unwrap();
        let doubled = mse(array![0.0, 2.0].view(), array![2.0, -2.0].view()).unwrap();
        assert!((doubled - 4.0 * base).abs() < 1e-12);
        assert!(mse(array![0.0].view(), array![1.0, 2.0].view()).is_err());
    }

    #[test]
    fn blockwise_softmax_sums_blocks() {
        let head = LossHead::Softmax { blocks: vec![2, 3] };
        let out = array![0.0, 0.0, 0.0, 0.0, 0.0];
        let target = array![1.0, 0.0, 0.0, 0.0, 1.0];
        let loss = head.loss(out.view(), target.view()).unwrap();
        assert!((loss - (2f64.ln() + 3f64.ln())).abs() < 1e-12);
        let g = head.grad(out.view(), target.view());
        assert!((g.slice(ndarray::s![0..2]).sum()).abs() < 1e-12);
        assert!((g.slice(ndarray::s![2..5]).sum()).abs() < 1e-12);
    }
}
