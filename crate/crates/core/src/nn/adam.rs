//! Adam over flat parameter slices. One optimizer instance owns the moment
//! state for a fixed set of tensors registered at construction; nets and
//! extra tensors (like a policy's log-std vector) share one instance so the
//! bias-correction clock stays consistent across everything it updates.

use crate::scalar::{cast, Scalar};

use super::NnError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamParams<F> {
    pub lr: F,
    pub beta1: F,
    pub beta2: F,
    pub eps: F,
}

impl<F: Scalar> AdamParams<F> {
    /// Standard defaults with the given learning rate.
    pub fn with_lr(lr: F) -> Self {
        AdamParams { lr, beta1: cast(0.9), beta2: cast(0.999), eps: cast(1e-8) }
    }
}

#[derive(Debug, Clone)]
pub struct Adam<F> {
    hyper: AdamParams<F>,
    t: u32,
    m: Vec<Vec<F>>,
    v: Vec<Vec<F>>,
}

impl<F: Scalar> Adam<F> {
    pub fn new(shapes: &[usize], hyper: AdamParams<F>) -> Self {
        Adam {
            hyper,
            t: 0,
            m: shapes.iter().map(|n| vec![F::zero(); *n]).collect(),
            v: shapes.iter().map(|n| vec![F::zero(); *n]).collect(),
        }
    }

    pub fn hyper(&self) -> &AdamParams<F> {
        &self.hyper
    }

    /// Steps in time: how many updates have been applied.
    pub fn t(&self) -> u32 {
        self.t
    }

    /// Applies one update. Tensor count and lengths must match registration;
    /// a non-finite gradient aborts before touching any parameter.
    pub fn step(&mut self, tensors: &mut [&mut [F]], grads: &[&[F]]) -> Result<(), NnError> {
        if tensors.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(NnError::DimensionMismatch {
                what: "adam tensor count",
                expected: self.m.len(),
                got: tensors.len().min(grads.len()),
            });
        }
        for ((t, g), m) in tensors.iter().zip(grads).zip(&self.m) {
            if t.len() != m.len() || g.len() != m.len() {
                return Err(NnError::DimensionMismatch {
                    what: "adam tensor length",
                    expected: m.len(),
                    got: t.len().min(g.len()),
                });
            }
            if g.iter().any(|x| !x.is_finite()) {
                return Err(NnError::NonFinite { what: "gradient" });
            }
        }
        self.t += 1;
        let AdamParams { lr, beta1, beta2, eps } = self.hyper;
        let one = F::one();
        let bc1 = one - beta1.powi(self.t as i32);
        let bc2 = one - beta2.powi(self.t as i32);
        for ((tensor, grad), (m, v)) in
            tensors.iter_mut().zip(grads).zip(self.m.iter_mut().zip(&mut self.v))
        {
            for i in 0..m.len() {
                let g = grad[i];
                m[i] = beta1 * m[i] + (one - beta1) * g;
                v[i] = beta2 * v[i] + (one - beta2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                tensor[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
