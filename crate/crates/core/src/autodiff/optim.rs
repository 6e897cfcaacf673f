use super::ParamStore;
use crate::error::{Error, Result};
use crate::tensor::Scalar;

/// Adam with Nesterov momentum.
///
/// For step `t ≥ 1` and gradient `g`:
///
/// ```text
/// m ← β₁·m + (1-β₁)·g
/// v ← β₂·v + (1-β₂)·g²
/// m̂ = m / (1-β₁ᵗ)          v̂ = v / (1-β₂ᵗ)
/// n = β₁·m̂ + (1-β₁)·g / (1-β₁ᵗ)
/// w ← w - lr · n / (√v̂ + ε)
/// ```
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Nadam {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for Nadam {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl Nadam {
    /// Applies one update using the gradients currently stored in `params`.
    /// Fails before touching any value if a gradient is non-finite.
    pub fn step<T: Scalar>(&self, params: &mut ParamStore<T>, lr: f64, step: u64) -> Result<()> {
        if step == 0 {
            return Err(Error::Param("optimizer step count starts at 1".into()));
        }
        if let Some(p) = params.iter().find(|p| p.grad.iter().any(|g| !g.is_finite())) {
            return Err(Error::Training {
                param: p.name().to_string(),
            });
        }
        let t = step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let b1 = T::from_f64_lossy(self.beta1);
        let b2 = T::from_f64_lossy(self.beta2);
        let one = T::one();
        let lr = T::from_f64_lossy(lr);
        let eps = T::from_f64_lossy(self.epsilon);
        let inv_c1 = T::from_f64_lossy(1.0 / c1);
        let inv_c2 = T::from_f64_lossy(1.0 / c2);
        for p in params.iter_mut() {
            let (value, grad, m, v) = (&mut p.value, &p.grad, &mut p.first_moment, &mut p.second_moment);
            for i in 0..value.len() {
                let g = grad[i];
                m[i] = b1 * m[i] + (one - b1) * g;
                v[i] = b2 * v[i] + (one - b2) * g * g;
                let m_hat = m[i] * inv_c1;
                let v_hat = v[i] * inv_c2;
                let numer = b1 * m_hat + (one - b1) * g * inv_c1;
                value[i] -= lr * numer / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
