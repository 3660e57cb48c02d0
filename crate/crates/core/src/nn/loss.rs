use super::Tensor;
use crate::error::{Error, Result};

/// Mean squared error over all `2B` coordinates, with its gradient
/// `2 (pred - truth) / n`.
pub fn mse_loss(pred: &Tensor, truth: &Tensor) -> Result<(f64, Tensor)> {
    pred.same_shape(truth)?;
    if pred.is_empty() {
        return Err(Error::Empty("loss over an empty batch".into()));
    }
    let n = pred.len() as f64;
    let diff: Vec<f64> = pred.data.iter().zip(&truth.data).map(|(p, t)| p - t).collect();
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / n;
    let grad = Tensor {
        shape: pred.shape.clone(),
        data: diff.iter().map(|d| 2.0 * d / n).collect(),
    };
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{max_relative_error, random_tensor};

    #[test]
    fn examples() {
        let t = Tensor::from_vec(&[1, 2], vec![3.0, 4.0]).unwrap();
        assert_eq!(mse_loss(&t, &t).unwrap().0, 0.0);
        let p = Tensor::zeros(&[1, 2]);
        let (l, g) = mse_loss(&p, &t).unwrap();
        assert_eq!(l, 12.5);
        assert_eq!(g.data, vec![-3.0, -4.0]);
        assert!(matches!(
            mse_loss(&Tensor::zeros(&[0, 2]), &Tensor::zeros(&[0, 2])),
            Err(Error::Empty(_))
        ));
        assert!(mse_loss(&Tensor::zeros(&[2, 2]), &t).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let p = random_tensor(&[5, 2], 1);
        let t = random_tensor(&[5, 2], 2);
        let (_, g) = mse_loss(&p, &t).unwrap();
        let err = max_relative_error(&p, &g, |p| mse_loss(p, &t).unwrap().0);
        assert!(err < 1e-6, "{err:e}");
    }
}
