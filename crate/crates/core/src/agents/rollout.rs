//! Fixed-capacity on-policy rollout storage and generalized advantage
//! estimation.

use crate::scalar::Scalar;

use super::AgentError;

/// One transition per step: observation, action, the log-density of that
/// action under the collecting policy, the env reward, the critic's value
/// estimate of the observation, and the episode-end flag.
#[derive(Debug, Clone)]
pub struct RolloutBuffer<F> {
    capacity: usize,
    pub(crate) obs: Vec<Vec<F>>,
    pub(crate) actions: Vec<Vec<F>>,
    pub(crate) log_probs: Vec<F>,
    pub(crate) rewards: Vec<F>,
    pub(crate) values: Vec<F>,
    pub(crate) dones: Vec<bool>,
}

impl<F: Scalar> RolloutBuffer<F> {
    pub fn new(capacity: usize) -> Self {
        RolloutBuffer {
            capacity,
            obs: Vec::with_capacity(capacity),
            actions: Vec::with_capacity(capacity),
            log_probs: Vec::with_capacity(capacity),
            rewards: Vec::with_capacity(capacity),
            values: Vec::with_capacity(capacity),
            dones: Vec::with_capacity(capacity),
        }
    }

    pub fn push(&mut self, obs: Vec<F>, action: Vec<F>, log_prob: F, reward: F, value: F, done: bool) {
        debug_assert!(self.len() < self.capacity, "rollout buffer overfilled");
        self.obs.push(obs);
        self.actions.push(action);
        self.log_probs.push(log_prob);
        self.rewards.push(reward);
        self.values.push(value);
        self.dones.push(done);
    }

    pub fn clear(&mut self) {
        self.obs.clear();
        self.actions.clear();
        self.log_probs.clear();
        self.rewards.clear();
        self.values.clear();
        self.dones.clear();
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.len() == self.capacity
    }

    pub fn obs(&self, i: usize) -> &[F] {
        &self.obs[i]
    }

    pub fn action(&self, i: usize) -> &[F] {
        &self.actions[i]
    }

    pub fn log_probs(&self) -> &[F] {
        &self.log_probs
    }

    pub fn rewards(&self) -> &[F] {
        &self.rewards
    }

    pub fn values(&self) -> &[F] {
        &self.values
    }

    pub fn dones(&self) -> &[bool] {
        &self.dones
    }

    /// True when the final stored transition ended its episode, in which
    /// case bootstrapping past the buffer would leak across the reset.
    pub fn last_done(&self) -> bool {
        self.dones.last().copied().unwrap_or(false)
    }

    pub fn mean_reward(&self) -> F {
        if self.is_empty() {
            return F::zero();
        }
        self.rewards.iter().copied().sum::<F>() / crate::scalar::cast(self.len() as f64)
    }

    /// GAE over this buffer, bootstrapping from `last_value`.
    pub fn advantages(
        &self,
        last_value: F,
        gamma: F,
        gae_lambda: F,
    ) -> Result<(Vec<F>, Vec<F>), AgentError> {
        compute_advantages(&self.rewards, &self.values, &self.dones, last_value, gamma, gae_lambda)
    }
}

/// Generalized advantage estimation, swept backwards:
///
/// ```text
/// δ_t = r_t + γ·V_{t+1}·(1 − done_t) − V_t
/// A_t = δ_t + γ·λ·(1 − done_t)·A_{t+1}
/// ```
///
/// with `V_{T}` = `last_value`. Returns (advantages, returns) where
/// returns = A + V serve as critic regression targets.
pub fn compute_advantages<F: Scalar>(
    rewards: &[F],
    values: &[F],
    dones: &[bool],
    last_value: F,
    gamma: F,
    gae_lambda: F,
) -> Result<(Vec<F>, Vec<F>), AgentError> {
    let t = rewards.len();
    if values.len() != t {
        return Err(AgentError::LengthMismatch { what: "values", expected: t, got: values.len() });
    }
    if dones.len() != t {
        return Err(AgentError::LengthMismatch { what: "dones", expected: t, got: dones.len() });
    }
    if t == 0 {
        return Err(AgentError::EmptyBuffer);
    }
    let one = F::one();
    if !(gamma >= F::zero() && gamma <= one) || !(gae_lambda >= F::zero() && gae_lambda <= one) {
        return Err(AgentError::BadHyper(format!(
            "gamma {gamma} and gae_lambda {gae_lambda} must lie in [0, 1]"
        )));
    }
    if rewards.iter().chain(values).any(|v| !v.is_finite()) || !last_value.is_finite() {
        return Err(AgentError::NonFinite { context: "rewards or values" });
    }

    let mut advantages = vec![F::zero(); t];
    let mut next_adv = F::zero();
    let mut next_value = last_value;
    for i in (0..t).rev() {
        let cont = if dones[i] { F::zero() } else { one };
        let delta = rewards[i] + gamma * next_value * cont - values[i];
        next_adv = delta + gamma * gae_lambda * cont * next_adv;
        advantages[i] = next_adv;
        next_value = values[i];
    }
    let returns = advantages.iter().zip(values).map(|(a, v)| *a + *v).collect();
    Ok((advantages, returns))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_rewards_zero_values_unroll_to_horizon_counts() {
        let rewards = [1.0, 1.0, 1.0];
        let values = [0.0, 0.0, 0.0];
        let dones = [false, false, true];
        let (adv, ret) = compute_advantages(&rewards, &values, &dones, 0.0, 1.0, 1.0).unwrap();
        assert_eq!(adv, vec![3.0, 2.0, 1.0]);
        assert_eq!(ret, vec![3.0, 2.0, 1.0]);
    }

    #[test]
    fn lambda_zero_collapses_to_td_residuals() {
        let rewards = [0.5, -0.25, 1.0];
        let values = [0.2, 0.4, -0.1];
        let dones = [false, false, false];
        let gamma = 0.9;
        let (adv, _) = compute_advantages(&rewards, &values, &dones, 0.7, gamma, 0.0).unwrap();
        let expect: [f64; 3] = [
            0.5 + gamma * 0.4 - 0.2,
            -0.25 + gamma * -0.1 - 0.4,
            1.0 + gamma * 0.7 - -0.1,
        ];
        for (a, e) in adv.iter().zip(expect) {
            assert!((a - e).abs() < 1e-15);
        }
    }

    #[test]
    fn gamma_zero_is_myopic() {
        let rewards = [0.5, -0.25];
        let values = [0.2, 0.4];
        let dones = [false, false];
        let (adv, _) = compute_advantages(&rewards, &values, &dones, 3.0, 0.0, 0.95).unwrap();
        assert_eq!(adv, vec![0.5 - 0.2, -0.25 - 0.4]);
    }

    #[test]
    fn done_flag_cuts_the_bootstrap() {
        let rewards = [1.0, 1.0];
        let values = [5.0, 5.0];
        let dones = [true, false];
        let (adv, _) = compute_advantages(&rewards, &values, &dones, 9.0, 1.0, 1.0).unwrap();
        // Step 0 neither bootstraps from V_1 nor accumulates A_1.
        assert_eq!(adv[0], 1.0 - 5.0);
        assert_eq!(adv[1], 1.0 + 9.0 - 5.0);
    }

    #[test]
    fn mismatched_lengths_and_nonfinite_are_errors() {
        assert!(matches!(
            compute_advantages(&[1.0], &[1.0, 2.0], &[false], 0.0, 0.9, 0.9),
            Err(AgentError::LengthMismatch { .. })
        ));
        assert!(matches!(
            compute_advantages(&[f64::NAN], &[1.0], &[false], 0.0, 0.9, 0.9),
            Err(AgentError::NonFinite { .. })
        ));
    }

    #[test]
    fn buffer_bookkeeping() {
        let mut b = RolloutBuffer::<f64>::new(2);
        assert!(b.is_empty() && !b.is_full());
        b.push(vec![0.0], vec![0.1], -0.9, 0.01, 0.0, false);
        b.push(vec![1.0], vec![0.2], -0.8, 0.02, 0.1, true);
        assert!(b.is_full());
        assert!(b.last_done());
        assert!((b.mean_reward() - 0.015).abs() < 1e-15);
        b.clear();
        assert!(b.is_empty());
    }
}
