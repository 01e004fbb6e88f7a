use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Floor applied to predicted probabilities inside the log.
pub const PROB_FLOOR: f64 = 1e-12;

/// Mean over the batch of the per-row L1 distance.
pub fn l1_loss(a: &Tensor, b: &Tensor) -> Result<f64> {
    a.check_same_shape(b, "l1_loss")?;
    let sum: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).sum();
    Ok(sum / a.rows() as f64)
}

/// Subgradient of [`l1_loss`] with respect to `a`; ties get 0.
pub fn l1_loss_backward(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    a.check_same_shape(b, "l1_loss_backward")?;
    let inv = 1.0 / a.rows() as f64;
    let mut g = Tensor::zeros(a.shape());
    for ((g, x), y) in g.data_mut().iter_mut().zip(a.data()).zip(b.data()) {
        *g = if x > y {
            inv
        } else if x < y {
            -inv
        } else {
            0.0
        };
    }
    Ok(g)
}

fn check_targets(pred: &Tensor, target: &[usize]) -> Result<()> {
    if pred.rank() != 2 || pred.rows() != target.len() {
        return Err(Error::ShapeMismatch {
            op: "cross_entropy",
            left: pred.shape().to_vec(),
            right: vec![target.len()],
        });
    }
    let classes = pred.cols();
    if let Some(&id) = target.iter().find(|&&t| t >= classes) {
        return Err(Error::ClassOutOfRange { id, classes });
    }
    Ok(())
}

/// Mean negative log-probability of the target class.
pub fn cross_entropy(pred: &Tensor, target: &[usize]) -> Result<f64> {
    check_targets(pred, target)?;
    let sum: f64 = pred
        .iter_rows()
        .zip(target)
        .map(|(row, &t)| -row[t].max(PROB_FLOOR).ln())
        .sum();
    Ok(sum / target.len() as f64)
}

/// Gradient of [`cross_entropy`] with respect to the probabilities.
pub fn cross_entropy_backward(pred: &Tensor, target: &[usize]) -> Result<Tensor> {
    check_targets(pred, target)?;
    let n = target.len() as f64;
    let mut g = Tensor::zeros(pred.shape());
    for (i, &t) in target.iter().enumerate() {
        let p = pred.row(i)[t];
        if p > PROB_FLOOR {
            g.row_mut(i)[t] = -1.0 / (n * p);
        }
    }
    Ok(g)
}
