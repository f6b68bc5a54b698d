use crate::error::Result;

use super::{same_shape, Scalar, Tensor};

/// How the summed squared error is normalized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum MseNormalization {
    /// Divide by the batch size only: mean over pairs of the squared L2 norm.
    Batch,
    /// Additionally divide by the per-item element count, so the loss does
    /// not depend on patch size.
    #[default]
    Element,
}

/// Returns `(loss, d loss / d pred)`. The loss is accumulated in `f64`.
pub fn mse_loss<T: Scalar>(
    pred: &Tensor<T>,
    target: &Tensor<T>,
    norm: MseNormalization,
) -> Result<(f64, Tensor<T>)> {
    same_shape("mse_loss", pred, target)?;
    let denom = match norm {
        MseNormalization::Batch => pred.batch(),
        MseNormalization::Element => pred.len(),
    } as f64;
    let scale = T::from_f64(2.0 / denom);
    let mut grad = pred.clone();
    let mut sum = 0.0f64;
    for (g, &t) in grad.data_mut().iter_mut().zip(target.data()) {
        let d = *g - t;
        sum += d.as_f64() * d.as_f64();
        *g = scale * d;
    }
    Ok((sum / denom, grad))
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn equal_inputs_give_zero() {
        let t = Tensor::<f32>::from_fn([2, 3, 4, 4], |[b, c, y, x]| (b + c + y * x) as f32).unwrap();
        let (loss, grad) = mse_loss(&t, &t, MseNormalization::Batch).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn single_error_element() {
        let target = Tensor::<f64>::zeros([1, 1, 4, 4]).unwrap();
        let mut pred = target.clone();
        pred.set([0, 0, 2, 1], 0.5);
        let (loss, grad) = mse_loss(&pred, &target, MseNormalization::Batch).unwrap();
        assert_eq!(loss, 0.25);
        assert_eq!(grad.get([0, 0, 2, 1]), 1.0);
        let (loss, _) = mse_loss(&pred, &target, MseNormalization::Element).unwrap();
        assert_eq!(loss, 0.25 / 16.0);
    }

    #[test]
    fn matches_scalar_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let shape = [3, 2, 5, 4];
        let p = Tensor::<f64>::from_fn(shape, |_| rng.random_range(-1.0..1.0)).unwrap();
        let t = Tensor::<f64>::from_fn(shape, |_| rng.random_range(-1.0..1.0)).unwrap();
        let (loss, grad) = mse_loss(&p, &t, MseNormalization::Batch).unwrap();
        let mut expect = 0.0;
        for b in 0..3 {
            let mut norm2 = 0.0;
            for i in 0..40 {
                let d = p.item(b)[i] - t.item(b)[i];
                norm2 += d * d;
            }
            expect += norm2;
        }
        expect /= 3.0;
        assert!((loss - expect).abs() < 1e-7);
        for i in 0..p.len() {
            let g = 2.0 * (p.data()[i] - t.data()[i]) / 3.0;
            assert!((grad.data()[i] - g).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_mismatch() {
        let a = Tensor::<f32>::zeros([1, 1, 2, 2]).unwrap();
        let b = Tensor::<f32>::zeros([2, 1, 2, 2]).unwrap();
        assert!(mse_loss(&a, &b, MseNormalization::Element).is_err());
    }
}
