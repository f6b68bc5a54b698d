use crate::error::Result;

use super::{same_shape, Scalar, Tensor};

/// `x` where `x > 0`, `a * x` otherwise.
pub fn prelu_forward<T: Scalar>(x: &Tensor<T>, a: T) -> Tensor<T> {
    let mut out = x.clone();
    for v in out.data_mut() {
        if *v <= T::zero() {
            *v = a * *v;
        }
    }
    out
}

/// Returns `(grad_x, grad_a)`; `grad_a` sums `x * grad_out` over the non-positive entries.
pub fn prelu_backward<T: Scalar>(x: &Tensor<T>, a: T, grad_out: &Tensor<T>) -> Result<(Tensor<T>, T)> {
    same_shape("prelu_backward", x, grad_out)?;
    let mut grad_x = grad_out.clone();
    let mut grad_a = T::zero();
    for (g, &xv) in grad_x.data_mut().iter_mut().zip(x.data()) {
        if xv <= T::zero() {
            grad_a = grad_a + xv * *g;
            *g = a * *g;
        }
    }
    Ok((grad_x, grad_a))
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn scalar(v: f64) -> Tensor<f64> {
        Tensor::from_vec([1, 1, 1, 1], vec![v]).unwrap()
    }

    #[test]
    fn forward_branches() {
        assert_eq!(prelu_forward(&scalar(3.0), 0.25).data()[0], 3.0);
        assert_eq!(prelu_forward(&scalar(-2.0), 0.25).data()[0], -0.5);
        assert_eq!(prelu_forward(&scalar(0.0), 0.7).data()[0], 0.0);
    }

    #[test]
    fn backward_direct() {
        let (gx, ga) = prelu_backward(&scalar(-2.0), 0.25, &scalar(1.0)).unwrap();
        assert_eq!(gx.data()[0], 0.25);
        assert_eq!(ga, -2.0);

        let x = Tensor::from_vec([1, 1, 2, 2], vec![1.0, 2.0, 0.5, 9.0]).unwrap();
        let g = Tensor::from_vec([1, 1, 2, 2], vec![0.3, -1.0, 2.0, 4.0]).unwrap();
        let (gx, ga) = prelu_backward(&x, 0.25, &g).unwrap();
        assert_eq!(gx, g);
        assert_eq!(ga, 0.0);
    }

    #[test]
    fn backward_shape_mismatch() {
        let x = Tensor::<f64>::zeros([1, 1, 2, 2]).unwrap();
        let g = Tensor::<f64>::zeros([1, 1, 2, 3]).unwrap();
        assert!(prelu_backward(&x, 0.25, &g).is_err());
    }

    #[test]
    fn backward_matches_finite_differences() {
        let xs = [-1.3, -0.2, 0.4, 2.0, -0.7, 1.1];
        let gs = [0.5, -1.5, 0.25, 1.0, 2.0, -0.3];
        let x = Tensor::from_vec([1, 1, 2, 3], xs.to_vec()).unwrap();
        let g = Tensor::from_vec([1, 1, 2, 3], gs.to_vec()).unwrap();
        let a = 0.3;
        let f = |x: &Tensor<f64>, a: f64| prelu_forward(x, a).dot(&g).unwrap();
        let (gx, ga) = prelu_backward(&x, a, &g).unwrap();
        let h = 1e-5;
        let num_a = (f(&x, a + h) - f(&x, a - h)) / (2.0 * h);
        assert!((num_a - ga).abs() / ga.abs().max(1e-8) < 1e-4);
        for i in 0..xs.len() {
            let mut xp = x.clone();
            xp.data_mut()[i] += h;
            let mut xm = x.clone();
            xm.data_mut()[i] -= h;
            let num = (f(&xp, a) - f(&xm, a)) / (2.0 * h);
            let ana = gx.data()[i];
            assert!((num - ana).abs() / ana.abs().max(1e-8) < 1e-4, "{i}: {num} vs {ana}");
        }
    }

    proptest! {
        #[test]
        fn continuous_at_zero(a in -2.0f64..2.0, eps in 1e-12f64..1e-6) {
            let up = prelu_forward(&scalar(eps), a).data()[0];
            let down = prelu_forward(&scalar(-eps), a).data()[0];
            prop_assert!((up - down).abs() <= eps * (1.0 + a.abs()) * (1.0 + 1e-9));
        }
    }
}
