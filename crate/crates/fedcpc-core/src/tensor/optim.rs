//! SGD and Adam over a [`ParameterSet`].
//!
//! Moment buffers are keyed by parameter name so they survive round trips
//! through federated broadcasts, and they stay local to the optimizer that
//! owns them.

use super::params::{Gradients, ParameterSet};
use super::{Scalar, Tensor};
use crate::error::{CoreError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

impl OptimizerKind {
    /// Adam with the conventional defaults.
    pub fn adam_default() -> Self {
        OptimizerKind::Adam { beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

#[derive(Debug, Clone)]
struct MomentEntry<T: Scalar> {
    name: String,
    first: Tensor<T>,
    second: Tensor<T>,
}

/// Optimizer state: kind, learning rate, step counter and (for Adam) the
/// per-parameter moment buffers.
#[derive(Debug, Clone)]
pub struct Optimizer<T: Scalar> {
    kind: OptimizerKind,
    learning_rate: f64,
    step_count: u64,
    moments: Vec<MomentEntry<T>>,
}

impl<T: Scalar> Optimizer<T> {
    pub fn new(kind: OptimizerKind, learning_rate: f64) -> Self {
        Self { kind, learning_rate, step_count: 0, moments: Vec::new() }
    }

    pub fn sgd(learning_rate: f64) -> Self {
        Self::new(OptimizerKind::Sgd, learning_rate)
    }

    pub fn adam(learning_rate: f64) -> Self {
        Self::new(OptimizerKind::adam_default(), learning_rate)
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    fn moment_index(&mut self, name: &str, shape: &[usize]) -> usize {
        if let Some(i) = self.moments.iter().position(|m| m.name == name) {
            return i;
        }
        self.moments.push(MomentEntry {
            name: name.to_string(),
            first: Tensor::zeros(shape),
            second: Tensor::zeros(shape),
        });
        self.moments.len() - 1
    }

    /// One update over the parameters selected by `plan` (indices into
    /// `params`). Every selected parameter must have a gradient.
    pub fn step(
        &mut self,
        params: &mut ParameterSet<T>,
        plan: &[usize],
        grads: &Gradients<T>,
    ) -> Result<()> {
        for &i in plan {
            if grads.get(i).is_none() {
                return Err(CoreError::Contract(format!(
                    "missing gradient for tracked parameter {:?}",
                    params.name_at(i)
                )));
            }
            let g_shape = grads.get(i).expect("checked").shape();
            let p_shape = params.tensor_at(i).shape();
            if g_shape != p_shape {
                return Err(CoreError::InvalidShape(format!(
                    "{}: gradient shape {g_shape:?} vs parameter {p_shape:?}",
                    params.name_at(i)
                )));
            }
        }
        self.step_count += 1;
        let lr = T::from_f64(self.learning_rate);
        match self.kind {
            OptimizerKind::Sgd => {
                for &i in plan {
                    let g = grads.get(i).expect("checked");
                    for (p, &gv) in params.tensor_at_mut(i).data_mut().iter_mut().zip(g.data()) {
                        *p -= lr * gv;
                    }
                }
            }
            OptimizerKind::Adam { beta1, beta2, epsilon } => {
                let t = self.step_count as i32;
                let b1 = T::from_f64(beta1);
                let b2 = T::from_f64(beta2);
                let one_m_b1 = T::from_f64(1.0 - beta1);
                let one_m_b2 = T::from_f64(1.0 - beta2);
                let corr1 = T::from_f64(1.0 / (1.0 - beta1.powi(t)));
                let corr2 = T::from_f64(1.0 / (1.0 - beta2.powi(t)));
                let eps = T::from_f64(epsilon);
                for &i in plan {
                    let name = params.name_at(i).to_string();
                    let shape = params.tensor_at(i).shape().to_vec();
                    let mi = self.moment_index(&name, &shape);
                    let g = grads.get(i).expect("checked");
                    let m = &mut self.moments[mi];
                    if m.first.shape() != shape.as_slice() {
                        return Err(CoreError::InvalidShape(format!(
                            "{name}: moment shape {:?} vs parameter {shape:?}",
                            m.first.shape()
                        )));
                    }
                    let p = params.tensor_at_mut(i).data_mut();
                    for (((pv, &gv), mv), vv) in p
                        .iter_mut()
                        .zip(g.data())
                        .zip(m.first.data_mut())
                        .zip(m.second.data_mut())
                    {
                        *mv = b1 * *mv + one_m_b1 * gv;
                        *vv = b2 * *vv + one_m_b2 * gv * gv;
                        let m_hat = *mv * corr1;
                        let v_hat = *vv * corr2;
                        *pv -= lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }

    /// Convenience: update every parameter in the set.
    pub fn step_all(&mut self, params: &mut ParameterSet<T>, grads: &Gradients<T>) -> Result<()> {
        let plan: Vec<usize> = (0..params.len()).collect();
        self.step(params, &plan, grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_param(v: f64) -> ParameterSet<f64> {
        let mut p = ParameterSet::new();
        p.push("w", Tensor::scalar(v)).unwrap();
        p
    }

    fn grad_of(v: f64) -> Gradients<f64> {
        Gradients(vec![Some(Tensor::scalar(v))])
    }

    #[test]
    fn sgd_known_update() {
        let mut p = one_param(1.0);
        let mut opt = Optimizer::sgd(0.1);
        opt.step_all(&mut p, &grad_of(0.5)).unwrap();
        assert!((p.get("w").unwrap().data()[0] - 0.95).abs() < 1e-15);
        assert_eq!(opt.step_count(), 1);
    }

    #[test]
    fn sgd_zero_gradient_leaves_parameters() {
        let mut p = one_param(2.5);
        let mut opt = Optimizer::sgd(0.1);
        opt.step_all(&mut p, &grad_of(0.0)).unwrap();
        assert_eq!(p.get("w").unwrap().data()[0], 2.5);
    }

    #[test]
    fn adam_first_step_magnitude_is_lr() {
        // With constant g, m_hat = g and v_hat = g^2, so the first update is
        // lr * g / (|g| + eps) ~= lr regardless of the gradient scale.
        for &scale in &[1e-3, 1.0, 1e3] {
            let mut p = one_param(0.0);
            let mut opt = Optimizer::adam(0.01);
            opt.step_all(&mut p, &grad_of(scale)).unwrap();
            let delta = -p.get("w").unwrap().data()[0];
            assert!(
                (delta - 0.01).abs() < 1e-6,
                "scale {scale}: delta {delta}"
            );
        }
    }

    #[test]
    fn adam_hand_computed_second_step() {
        // lr=0.1, b1=0.9, b2=0.999, eps=1e-8, g=1 both steps.
        // step1: m=0.1, v=0.001, m_hat=1, v_hat=1 -> p -= 0.1/(1+eps)
        // step2: m=0.19, v=0.001999, m_hat=0.19/0.19=1, v_hat=0.001999/0.001999=1
        let mut p = one_param(0.0);
        let mut opt = Optimizer::adam(0.1);
        opt.step_all(&mut p, &grad_of(1.0)).unwrap();
        opt.step_all(&mut p, &grad_of(1.0)).unwrap();
        let w = p.get("w").unwrap().data()[0];
        assert!((w + 0.2).abs() < 1e-6, "w = {w}");
        assert_eq!(opt.step_count(), 2);
    }

    #[test]
    fn missing_gradient_is_contract_violation() {
        let mut p = one_param(1.0);
        let mut opt = Optimizer::sgd(0.1);
        let err = opt.step_all(&mut p, &Gradients(vec![None])).unwrap_err();
        assert!(matches!(err, CoreError::Contract(_)));
    }
}
