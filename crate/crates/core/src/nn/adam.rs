use super::scalar::Real;
use crate::error::{Error, Result};

/// Bias-corrected Adam.
#[derive(Debug, Clone)]
pub struct AdamState<T: Real> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<T>,
    v: Vec<T>,
}

impl<T: Real> AdamState<T> {
    pub fn new(n_params: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: vec![T::zero(); n_params],
            v: vec![T::zero(); n_params],
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn second_moments(&self) -> &[T] {
        &self.v
    }

    pub fn step(&mut self, params: &mut [T], grads: &[T]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Dimension(format!(
                "optimizer tracks {} parameters, got {} params / {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let b1 = T::from_f64(self.beta1);
        let b2 = T::from_f64(self.beta2);
        let one = T::one();
        let c1 = T::from_f64(1.0 / (1.0 - self.beta1.powi(t)));
        let c2 = T::from_f64(1.0 / (1.0 - self.beta2.powi(t)));
        let lr = T::from_f64(self.lr);
        let eps = T::from_f64(self.eps);
        for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = b1 * *m + (one - b1) * g;
            *v = b2 * *v + (one - b2) * g * g;
            let m_hat = *m * c1;
            let v_hat = *v * c2;
            *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_hand_value() {
        let mut opt = AdamState::<f64>::new(1, 1e-3);
        let mut p = [0.0];
        opt.step(&mut p, &[1.0]).unwrap();
        let expected = -1e-3 / (1.0 + 1e-8);
        assert!((p[0] - expected).abs() < 1e-12, "{}", p[0]);
        assert!((p[0] + 0.000999999990).abs() < 1e-12);
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut opt = AdamState::<f64>::new(3, 1e-3);
        let mut p = [1.0, -2.0, 0.5];
        for _ in 0..100 {
            opt.step(&mut p, &[0.0; 3]).unwrap();
        }
        assert_eq!(p, [1.0, -2.0, 0.5]);
        assert_eq!(opt.step_count(), 100);
    }

    #[test]
    fn constant_gradient_step_tends_to_lr() {
        // With g constant, m̂ = v̂^(1/2) = g exactly after bias correction, so each
        // update is lr·g/(|g| + eps) for every step.
        let mut opt = AdamState::<f64>::new(1, 1e-3);
        let mut p = [0.0];
        let mut last = 0.0;
        for _ in 0..1000 {
            let before = p[0];
            opt.step(&mut p, &[0.3]).unwrap();
            last = before - p[0];
        }
        assert!((last - 1e-3 * 0.3 / (0.3 + 1e-8)).abs() < 1e-12);
        assert!(opt.second_moments()[0] >= 0.0);
    }

    #[test]
    fn shape_mismatch() {
        let mut opt = AdamState::<f32>::new(2, 1e-3);
        assert!(opt.step(&mut [0.0; 3], &[0.0; 3]).is_err());
    }
}
