//! Diagonal Gaussian policy: an MLP produces the action mean, a learned
//! state-independent log-std vector sets the exploration scale.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::scalar::{cast, Scalar};

use super::{Adam, Mlp, MlpGrads, NnError};

/// Clamp range for the log standard deviation. The floor stops the policy
/// from collapsing to a deterministic spike mid-training (σ ≈ 6.7e-3); the
/// ceiling stops runaway exploration (σ ≈ 7.4).
pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

const LN_2PI: f64 = 1.8378770664093453;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPolicy<F> {
    mean: Mlp<F>,
    log_std: Vec<F>,
}

impl<F: Scalar> GaussianPolicy<F> {
    /// Mean net `obs_dim → hidden… → act_dim`, log-std initialized to 0
    /// (unit exploration noise).
    pub fn init(obs_dim: usize, hidden: &[usize], act_dim: usize, seed: u64) -> Result<Self, NnError> {
        let mut sizes = Vec::with_capacity(hidden.len() + 2);
        sizes.push(obs_dim);
        sizes.extend_from_slice(hidden);
        sizes.push(act_dim);
        let mean = Mlp::init(&sizes, seed)?;
        let log_std = vec![F::zero(); act_dim];
        Ok(GaussianPolicy { mean, log_std })
    }

    pub fn from_parts(mean: Mlp<F>, log_std: Vec<F>) -> Result<Self, NnError> {
        if log_std.len() != mean.out_dim() {
            return Err(NnError::DimensionMismatch {
                what: "log_std",
                expected: mean.out_dim(),
                got: log_std.len(),
            });
        }
        if log_std
            .iter()
            .any(|v| !v.is_finite() || *v < cast(LOG_STD_MIN) || *v > cast(LOG_STD_MAX))
        {
            return Err(NnError::NonFinite { what: "log_std" });
        }
        Ok(GaussianPolicy { mean, log_std })
    }

    pub fn mean_net(&self) -> &Mlp<F> {
        &self.mean
    }

    /// Raw parameter access for finite-difference testing; callers must
    /// bump the mean net's version after mutating through it.
    #[cfg(test)]
    pub(crate) fn mean_net_mut(&mut self) -> &mut Mlp<F> {
        &mut self.mean
    }

    pub fn log_std(&self) -> &[F] {
        &self.log_std
    }

    #[cfg(test)]
    pub(crate) fn log_std_mut(&mut self) -> &mut [F] {
        &mut self.log_std
    }

    pub fn act_dim(&self) -> usize {
        self.mean.out_dim()
    }

    pub fn obs_dim(&self) -> usize {
        self.mean.in_dim()
    }

    /// Tensor lengths for Adam registration: mean-net tensors then log_std.
    pub fn param_shapes(&self) -> Vec<usize> {
        let mut shapes = self.mean.param_shapes();
        shapes.push(self.log_std.len());
        shapes
    }

    /// Draws an action and returns it with its log-density. Noise is drawn
    /// per dimension in order, in f64, so the stream is identical for f32
    /// and f64 nets.
    pub fn sample<R: Rng>(&self, obs: &[F], rng: &mut R) -> Result<(Vec<F>, F), NnError> {
        let (mu, _) = self.mean.forward(obs)?;
        let action: Vec<F> = mu
            .iter()
            .zip(&self.log_std)
            .map(|(m, ls)| {
                let z: f64 = rng.sample(StandardNormal);
                *m + ls.exp() * cast(z)
            })
            .collect();
        let lp = self.log_prob_given_mean(&mu, &action);
        Ok((action, lp))
    }

    /// Deterministic greedy action (the mean), used for evaluation.
    pub fn mean_action(&self, obs: &[F]) -> Result<Vec<F>, NnError> {
        Ok(self.mean.forward(obs)?.0)
    }

    pub fn log_prob(&self, obs: &[F], action: &[F]) -> Result<F, NnError> {
        let (mu, _) = self.mean.forward(obs)?;
        if action.len() != mu.len() {
            return Err(NnError::DimensionMismatch {
                what: "action",
                expected: mu.len(),
                got: action.len(),
            });
        }
        Ok(self.log_prob_given_mean(&mu, action))
    }

    /// log N(a | μ, σ²) summed over dimensions:
    /// Σ_d −½ln(2π) − log σ_d − (a_d − μ_d)²/(2σ_d²).
    pub fn log_prob_given_mean(&self, mu: &[F], action: &[F]) -> F {
        debug_assert_eq!(mu.len(), action.len());
        let half: F = cast(0.5);
        let half_ln_2pi: F = cast(0.5 * LN_2PI);
        mu.iter()
            .zip(action)
            .zip(&self.log_std)
            .map(|((m, a), ls)| {
                let sigma = ls.exp();
                let z = (*a - *m) / sigma;
                -half_ln_2pi - *ls - half * z * z
            })
            .sum()
    }

    /// Differential entropy Σ_d (½ + ½ln(2π) + log σ_d); depends only on
    /// log_std, so dH/d log_std_d = 1.
    pub fn entropy(&self) -> F {
        let per_dim: F = cast(0.5 + 0.5 * LN_2PI);
        self.log_std.iter().map(|ls| per_dim + *ls).sum()
    }

    /// Joint Adam step over mean-net gradients and log-std gradients, then
    /// re-clamps log_std to its legal range.
    pub fn adam_step(
        &mut self,
        grads: &MlpGrads<F>,
        log_std_grad: &[F],
        opt: &mut Adam<F>,
    ) -> Result<(), NnError> {
        if log_std_grad.len() != self.log_std.len() {
            return Err(NnError::DimensionMismatch {
                what: "log_std gradient",
                expected: self.log_std.len(),
                got: log_std_grad.len(),
            });
        }
        {
            let mut tensors = self.mean.flat_params_mut();
            tensors.push(self.log_std.as_mut_slice());
            let mut flat = grads.flat();
            flat.push(log_std_grad);
            opt.step(&mut tensors, &flat)?;
        }
        let (lo, hi) = (cast::<F>(LOG_STD_MIN), cast::<F>(LOG_STD_MAX));
        for ls in self.log_std.iter_mut() {
            *ls = ls.min(hi).max(lo);
        }
        self.mean.bump_version();
        Ok(())
    }
}
