use crate::error::{Error, Result};

use super::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// One trainable parameter block together with its gradient.
pub struct ParamRef<'a, T> {
    pub name: String,
    pub value: &'a mut [T],
    pub grad: &'a [T],
}

/// Moment accumulators for every parameter block, in registration order.
#[derive(Clone, Debug)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(sizes: &[usize], config: AdamConfig) -> Self {
        AdamState {
            config,
            step: 0,
            first: sizes.iter().map(|&n| vec![T::zero(); n]).collect(),
            second: sizes.iter().map(|&n| vec![T::zero(); n]).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> (&[Vec<T>], &[Vec<T>]) {
        (&self.first, &self.second)
    }

    /// Applies one bias-corrected Adam update with learning rate `lr`.
    ///
    /// Gradients are validated before anything is mutated, so a non-finite
    /// gradient leaves both the parameters and the state untouched.
    pub fn step(&mut self, params: &mut [ParamRef<'_, T>], lr: f64) -> Result<()> {
        if params.len() != self.first.len() {
            return Err(Error::shape(
                "adam_step",
                format!("{} parameter blocks, state has {}", params.len(), self.first.len()),
            ));
        }
        for (p, m) in params.iter().zip(&self.first) {
            if p.value.len() != m.len() || p.grad.len() != m.len() {
                return Err(Error::shape(
                    "adam_step",
                    format!(
                        "parameter {}: value {} / grad {} / state {}",
                        p.name,
                        p.value.len(),
                        p.grad.len(),
                        m.len()
                    ),
                ));
            }
            if p.grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteGradient {
                    param: p.name.clone(),
                });
            }
        }
        self.step += 1;
        let AdamConfig {
            beta1,
            beta2,
            epsilon,
            ..
        } = self.config;
        let t = self.step as i32;
        let bc1 = T::from_f64(1.0 - beta1.powi(t));
        let bc2 = T::from_f64(1.0 - beta2.powi(t));
        let (b1, b2) = (T::from_f64(beta1), T::from_f64(beta2));
        let (one, eps, lr) = (T::one(), T::from_f64(epsilon), T::from_f64(lr));
        for ((p, m), v) in params.iter_mut().zip(&mut self.first).zip(&mut self.second) {
            for (((w, &g), m), v) in p.value.iter_mut().zip(p.grad).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = b1 * *m + (one - b1) * g;
                *v = b2 * *v + (one - b2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *w = *w - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step_scalar(state: &mut AdamState<f64>, w: &mut f64, g: f64, lr: f64) {
        let grad = [g];
        let mut params = [ParamRef {
            name: "w".into(),
            value: std::slice::from_mut(w),
            grad: &grad,
        }];
        state.step(&mut params, lr).unwrap();
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut state = AdamState::<f64>::new(&[1], AdamConfig::default());
        let mut w = 1.5;
        step_scalar(&mut state, &mut w, 0.0, 1e-4);
        assert_eq!(w, 1.5);
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // m = 0.1, v = 0.001; after bias correction m_hat = v_hat = 1, so the
        // update is lr / (1 + eps).
        let mut state = AdamState::<f64>::new(&[1], AdamConfig::default());
        let mut w = 1.0;
        step_scalar(&mut state, &mut w, 1.0, 1e-4);
        let expected = 1.0 - 1e-4 / (1.0 + 1e-8);
        assert!((w - expected).abs() < 1e-15);
        assert!((w - 0.9999).abs() < 1e-9);
    }

    #[test]
    fn descends_quadratic_monotonically() {
        let mut state = AdamState::<f64>::new(&[1], AdamConfig::default());
        let mut w = 1.0f64;
        let mut last = w.abs();
        for _ in 0..10 {
            let g = 2.0 * w;
            step_scalar(&mut state, &mut w, g, 0.05);
            assert!(w.abs() < last);
            last = w.abs();
        }
        assert_eq!(state.step_count(), 10);
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut state = AdamState::<f32>::new(&[2], AdamConfig::default());
        let mut w = [1.0f32, 2.0];
        let g = [0.0, f32::NAN];
        let mut params = [ParamRef {
            name: "layer3.bias".into(),
            value: &mut w,
            grad: &g,
        }];
        let err = state.step(&mut params, 1e-3).unwrap_err();
        assert!(matches!(err, Error::NonFiniteGradient { ref param } if param == "layer3.bias"));
        assert_eq!(state.step_count(), 0);
        assert_eq!(w, [1.0, 2.0]);
    }

    #[test]
    fn moment_shapes_mirror_params() {
        let state = AdamState::<f32>::new(&[3, 1, 7], AdamConfig::default());
        let (m, v) = state.moments();
        assert_eq!(m.iter().map(Vec::len).collect::<Vec<_>>(), vec![3, 1, 7]);
        assert_eq!(v.iter().map(Vec::len).collect::<Vec<_>>(), vec![3, 1, 7]);
    }
}
