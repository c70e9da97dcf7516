use super::{AeGrads, AeParams};
use crate::error::{Error, Result};

/// Adam moments and hyperparameters for one [`AeParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first_moment: AeGrads,
    pub second_moment: AeGrads,
    pub step_count: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(params: &AeParams, learning_rate: f64) -> Self {
        Self {
            first_moment: AeGrads::zeros_like(params),
            second_moment: AeGrads::zeros_like(params),
            step_count: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    /// One bias-corrected Adam update of `params` in place.
    pub fn step(&mut self, params: &mut AeParams, grads: &AeGrads) -> Result<()> {
        if grads
            .groups()
            .iter()
            .any(|g| g.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::NonFiniteValue("gradient"));
        }
        for (p, g) in params.groups_mut().iter().zip(grads.groups().iter()) {
            if p.len() != g.len() {
                return Err(Error::Shape {
                    expected: p.len(),
                    got: g.len(),
                });
            }
        }

        self.step_count += 1;
        let t = self.step_count as i32;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        let lr = self.learning_rate;
        let eps = self.epsilon;

        let groups = params.groups_mut();
        let ms = self.first_moment.groups_mut();
        let vs = self.second_moment.groups_mut();
        for (((p, g), m), v) in groups.into_iter().zip(grads.groups()).zip(ms).zip(vs) {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
