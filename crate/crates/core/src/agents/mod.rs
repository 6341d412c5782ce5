//! A2C and PPO training loops over the portfolio env.
//!
//! Both algorithms share the rollout buffer, GAE advantage estimator, and
//! the Gaussian policy; they differ only in how a full buffer becomes a
//! parameter update. One training loop owns its env, nets, and optimizer
//! state exclusively; parallelism belongs to the harness, across runs.

mod rollout;
mod train;
mod update;

pub use rollout::{compute_advantages, RolloutBuffer};
pub use train::{evaluate, train, TrainLogRow, TrainedPolicy, write_training_log};
pub use update::{a2c_update, clip_gradients, ppo_update, standardize, UpdateDiagnostics};

use std::path::PathBuf;

use thiserror::Error;

use crate::env::EnvError;
use crate::nn::NnError;
use crate::scalar::{cast, Scalar};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("bad hyper-parameters: {0}")]
    BadHyper(String),
    #[error("{what}: expected length {expected}, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("empty rollout buffer")]
    EmptyBuffer,
    #[error("non-finite {context}; training aborted")]
    NonFinite { context: &'static str },
    #[error("policy was trained under fingerprint {policy}, env has {env}")]
    FingerprintMismatch { policy: String, env: String },
    #[error("policy bundle {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("policy metadata: {0}")]
    Meta(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Nn(#[from] NnError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    A2c,
    Ppo,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::A2c => "a2c",
            Algorithm::Ppo => "ppo",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "a2c" => Ok(Algorithm::A2c),
            "ppo" => Ok(Algorithm::Ppo),
            other => Err(format!("unknown algorithm `{other}` (expected a2c or ppo)")),
        }
    }
}

/// Hyper-parameters for both algorithms. PPO-only knobs (clip_epsilon,
/// batch_size, n_epochs) are carried but ignored by A2C.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentHyper<F> {
    pub algorithm: Algorithm,
    pub gamma: F,
    pub gae_lambda: F,
    pub learning_rate: F,
    pub entropy_coef: F,
    pub clip_epsilon: F,
    pub batch_size: usize,
    pub rollout_length: usize,
    pub n_epochs: usize,
    pub total_timesteps: usize,
    pub value_coef: F,
    pub max_grad_norm: F,
    pub standardize_advantages: bool,
    /// Hidden layer widths for both actor mean net and critic.
    pub hidden: Vec<usize>,
    pub seed: u64,
}

impl<F: Scalar> AgentHyper<F> {
    /// A2C defaults: short synchronous rollouts, single pass per buffer.
    pub fn a2c(seed: u64) -> Self {
        AgentHyper {
            algorithm: Algorithm::A2c,
            gamma: cast(0.99),
            gae_lambda: cast(0.95),
            learning_rate: cast(2e-4),
            entropy_coef: cast(5e-3),
            clip_epsilon: cast(0.2),
            batch_size: 128,
            rollout_length: 5,
            n_epochs: 1,
            total_timesteps: 50_000,
            value_coef: cast(0.5),
            max_grad_norm: cast(0.5),
            standardize_advantages: true,
            hidden: vec![64, 64],
            seed,
        }
    }

    /// PPO defaults: long rollouts, shuffled minibatch epochs.
    pub fn ppo(seed: u64) -> Self {
        AgentHyper {
            algorithm: Algorithm::Ppo,
            rollout_length: 2048,
            n_epochs: 10,
            ..Self::a2c(seed)
        }
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |msg: String| Err(AgentError::BadHyper(msg));
        let one = F::one();
        if !(self.gamma > F::zero() && self.gamma <= one) {
            return bad(format!("gamma must lie in (0, 1], got {}", self.gamma));
        }
        if !(self.gae_lambda >= F::zero() && self.gae_lambda <= one) {
            return bad(format!("gae_lambda must lie in [0, 1], got {}", self.gae_lambda));
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= F::zero() {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !self.entropy_coef.is_finite() || self.entropy_coef < F::zero() {
            return bad(format!("entropy_coef must be ≥ 0, got {}", self.entropy_coef));
        }
        if !(self.clip_epsilon > F::zero() && self.clip_epsilon < one) {
            return bad(format!("clip_epsilon must lie in (0, 1), got {}", self.clip_epsilon));
        }
        if self.batch_size == 0 || self.rollout_length == 0 || self.n_epochs == 0 {
            return bad("batch_size, rollout_length, n_epochs must all be ≥ 1".into());
        }
        if self.total_timesteps < self.rollout_length {
            return bad(format!(
                "total_timesteps {} < rollout_length {}",
                self.total_timesteps, self.rollout_length
            ));
        }
        if !self.value_coef.is_finite() || self.value_coef < F::zero() {
            return bad(format!("value_coef must be ≥ 0, got {}", self.value_coef));
        }
        if !self.max_grad_norm.is_finite() || self.max_grad_norm <= F::zero() {
            return bad(format!("max_grad_norm must be positive, got {}", self.max_grad_norm));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_hypers_validate() {
        AgentHyper::<f64>::a2c(0).validate().unwrap();
        AgentHyper::<f64>::ppo(0).validate().unwrap();
    }

    #[test]
    fn invalid_hypers_are_rejected() {
        let mut h = AgentHyper::<f64>::a2c(0);
        h.gamma = 0.0;
        assert!(h.validate().is_err());
        let mut h = AgentHyper::<f64>::ppo(0);
        h.clip_epsilon = 1.0;
        assert!(h.validate().is_err());
        let mut h = AgentHyper::<f64>::ppo(0);
        h.total_timesteps = h.rollout_length - 1;
        assert!(h.validate().is_err());
    }

    #[test]
    fn algorithm_names_round_trip() {
        for algo in [Algorithm::A2c, Algorithm::Ppo] {
            assert_eq!(algo.as_str().parse::<Algorithm>().unwrap(), algo);
        }
        assert!("ddpg".parse::<Algorithm>().is_err());
    }
}
