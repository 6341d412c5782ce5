//! Gradient updates from a full rollout buffer.
//!
//! Both updates drive the actor through the same machinery: for each sample
//! the scalar `coef` = ∂loss/∂logπ is pushed through the closed-form
//! Gaussian derivatives ∂logπ/∂μ = (a − μ)/σ² and ∂logπ/∂log σ = z² − 1,
//! and the μ part backpropagates through the mean net.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::nn::{Adam, ForwardCache, GaussianPolicy, Mlp, MlpGrads};
use crate::scalar::{cast, Scalar};

use super::rollout::RolloutBuffer;
use super::{AgentError, AgentHyper};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateDiagnostics<F> {
    /// A2C: mean(−logπ·Â). PPO: −mean clipped surrogate, averaged over
    /// minibatch updates. Entropy bonus excluded in both.
    pub policy_loss: F,
    /// Mean squared error of the critic against GAE returns (unscaled).
    pub value_loss: F,
    pub entropy: F,
    /// Advantage statistics before standardization.
    pub adv_mean: F,
    pub adv_std: F,
}

/// Mean and sample standard deviation (n − 1); std is 0 for n < 2.
pub(crate) fn mean_std<F: Scalar>(xs: &[F]) -> (F, F) {
    let n = xs.len();
    if n == 0 {
        return (F::zero(), F::zero());
    }
    let nf: F = cast(n as f64);
    let mean = xs.iter().copied().sum::<F>() / nf;
    if n < 2 {
        return (mean, F::zero());
    }
    let ss: F = xs.iter().map(|x| (*x - mean) * (*x - mean)).sum();
    (mean, (ss / (nf - F::one())).sqrt())
}

/// In-place standardization to mean 0, std 1 via (x − mean)/(std + 1e-8).
/// Slices shorter than 2 are left unchanged. Returns the prior (mean, std).
pub fn standardize<F: Scalar>(xs: &mut [F]) -> (F, F) {
    let (mean, std) = mean_std(xs);
    if xs.len() >= 2 {
        let denom = std + cast(1e-8);
        for x in xs.iter_mut() {
            *x = (*x - mean) / denom;
        }
    }
    (mean, std)
}

/// Global-norm gradient clip over a net's gradients plus an optional extra
/// tensor (the policy's log-std gradient), jointly. Returns the pre-clip
/// norm; after the call the joint norm is ≤ max_norm.
pub fn clip_gradients<F: Scalar>(
    grads: &mut MlpGrads<F>,
    extra: Option<&mut [F]>,
    max_norm: F,
) -> F {
    let mut sq = grads.sq_norm();
    if let Some(e) = extra.as_deref() {
        sq += e.iter().map(|x| *x * *x).sum::<F>();
    }
    let norm = sq.sqrt();
    if norm > max_norm && norm > F::zero() {
        let k = max_norm / norm;
        grads.scale(k);
        if let Some(e) = extra {
            for x in e.iter_mut() {
                *x *= k;
            }
        }
    }
    norm
}

/// One term of the PPO objective: min(ρ·Â, clip(ρ, 1−ε, 1+ε)·Â).
pub fn clipped_surrogate<F: Scalar>(ratio: F, advantage: F, clip_epsilon: F) -> F {
    let one = F::one();
    let clipped = ratio.min(one + clip_epsilon).max(one - clip_epsilon);
    (ratio * advantage).min(clipped * advantage)
}

/// Adds `coef`·∂logπ(a|s)/∂θ to the actor gradient accumulators, where
/// `coef` = ∂loss/∂logπ for this sample and `inv_var` = exp(−2·log_std).
fn accumulate_actor_grad<F: Scalar>(
    actor: &GaussianPolicy<F>,
    cache: &ForwardCache<F>,
    mu: &[F],
    action: &[F],
    inv_var: &[F],
    coef: F,
    mlp_grads: &mut MlpGrads<F>,
    log_std_grad: &mut [F],
) -> Result<(), AgentError> {
    let grad_mu: Vec<F> = mu
        .iter()
        .zip(action)
        .zip(inv_var)
        .map(|((m, a), iv)| coef * (*a - *m) * *iv)
        .collect();
    mlp_grads.add(&actor.mean_net().backward(cache, &grad_mu)?);
    for ((g, (m, a)), iv) in log_std_grad.iter_mut().zip(mu.iter().zip(action)).zip(inv_var) {
        let z2 = (*a - *m) * (*a - *m) * *iv;
        *g += coef * (z2 - F::one());
    }
    Ok(())
}

fn inverse_variances<F: Scalar>(actor: &GaussianPolicy<F>) -> Vec<F> {
    actor.log_std().iter().map(|ls| (-(*ls + *ls)).exp()).collect()
}

/// One synchronous advantage actor-critic update over the whole buffer:
/// actor loss mean(−logπ·Â) − c·H, critic loss mean((G − V)²), each applied
/// through its own optimizer after a global-norm clip.
#[allow(clippy::too_many_arguments)]
pub fn a2c_update<F: Scalar>(
    buffer: &RolloutBuffer<F>,
    last_value: F,
    actor: &mut GaussianPolicy<F>,
    critic: &mut Mlp<F>,
    actor_opt: &mut Adam<F>,
    critic_opt: &mut Adam<F>,
    hyper: &AgentHyper<F>,
) -> Result<UpdateDiagnostics<F>, AgentError> {
    let t = buffer.len();
    if t == 0 {
        return Err(AgentError::EmptyBuffer);
    }
    let (mut adv, returns) = buffer.advantages(last_value, hyper.gamma, hyper.gae_lambda)?;
    let (adv_mean, adv_std) = if hyper.standardize_advantages {
        standardize(&mut adv)
    } else {
        mean_std(&adv)
    };

    let nf: F = cast(t as f64);
    let two: F = cast(2.0);
    let inv_var = inverse_variances(actor);
    let mut mlp_grads = MlpGrads::zeros_like(actor.mean_net());
    let mut log_std_grad = vec![F::zero(); actor.act_dim()];
    let mut critic_grads = MlpGrads::zeros_like(critic);
    let mut policy_loss = F::zero();
    let mut value_loss = F::zero();

    for i in 0..t {
        let obs = buffer.obs(i);
        let action = buffer.action(i);
        let (mu, cache) = actor.mean_net().forward(obs)?;
        policy_loss += -actor.log_prob_given_mean(&mu, action) * adv[i];
        let coef = -adv[i] / nf;
        accumulate_actor_grad(actor, &cache, &mu, action, &inv_var, coef, &mut mlp_grads, &mut log_std_grad)?;

        let (v, vcache) = critic.forward(obs)?;
        let err = v[0] - returns[i];
        value_loss += err * err;
        critic_grads.add(&critic.backward(&vcache, &[two * err / nf])?);
    }
    policy_loss /= nf;
    value_loss /= nf;
    if !policy_loss.is_finite() || !value_loss.is_finite() {
        return Err(AgentError::NonFinite { context: "a2c loss" });
    }
    let entropy = actor.entropy();
    // Entropy bonus −c·H: state-independent, so it lands on log_std alone.
    for g in log_std_grad.iter_mut() {
        *g -= hyper.entropy_coef;
    }
    clip_gradients(&mut mlp_grads, Some(&mut log_std_grad), hyper.max_grad_norm);
    clip_gradients(&mut critic_grads, None, hyper.max_grad_norm);
    actor.adam_step(&mlp_grads, &log_std_grad, actor_opt)?;
    critic.adam_step(&critic_grads, critic_opt)?;
    Ok(UpdateDiagnostics { policy_loss, value_loss, entropy, adv_mean, adv_std })
}

/// PPO: `n_epochs` passes of shuffled minibatches, maximizing the clipped
/// surrogate plus entropy bonus against the log-probs stored at collection
/// time, with the critic regressed on GAE returns scaled by value_coef.
/// Advantages are standardized per minibatch.
#[allow(clippy::too_many_arguments)]
pub fn ppo_update<F: Scalar, R: Rng>(
    buffer: &RolloutBuffer<F>,
    last_value: F,
    actor: &mut GaussianPolicy<F>,
    critic: &mut Mlp<F>,
    actor_opt: &mut Adam<F>,
    critic_opt: &mut Adam<F>,
    hyper: &AgentHyper<F>,
    shuffle_rng: &mut R,
) -> Result<UpdateDiagnostics<F>, AgentError> {
    let t = buffer.len();
    if t == 0 {
        return Err(AgentError::EmptyBuffer);
    }
    let (adv_all, returns) = buffer.advantages(last_value, hyper.gamma, hyper.gae_lambda)?;
    let (adv_mean, adv_std) = mean_std(&adv_all);

    let two: F = cast(2.0);
    let mut policy_loss_sum = F::zero();
    let mut value_loss_sum = F::zero();
    let mut n_minibatches = 0usize;

    let mut indices: Vec<usize> = (0..t).collect();
    for _ in 0..hyper.n_epochs {
        indices.shuffle(shuffle_rng);
        for chunk in indices.chunks(hyper.batch_size) {
            let bf: F = cast(chunk.len() as f64);
            let mut adv_mb: Vec<F> = chunk.iter().map(|i| adv_all[*i]).collect();
            if hyper.standardize_advantages {
                standardize(&mut adv_mb);
            }
            let inv_var = inverse_variances(actor);
            let mut mlp_grads = MlpGrads::zeros_like(actor.mean_net());
            let mut log_std_grad = vec![F::zero(); actor.act_dim()];
            let mut critic_grads = MlpGrads::zeros_like(critic);
            let mut surrogate = F::zero();
            let mut vloss = F::zero();

            for (k, &i) in chunk.iter().enumerate() {
                let obs = buffer.obs(i);
                let action = buffer.action(i);
                let (mu, cache) = actor.mean_net().forward(obs)?;
                let lp_new = actor.log_prob_given_mean(&mu, action);
                let ratio = (lp_new - buffer.log_probs[i]).exp();
                if !ratio.is_finite() {
                    return Err(AgentError::NonFinite { context: "ppo ratio" });
                }
                let a_hat = adv_mb[k];
                surrogate += clipped_surrogate(ratio, a_hat, hyper.clip_epsilon);
                // The min picks the unclipped branch iff ρ·Â ≤ clip(ρ)·Â;
                // only then does the objective depend on θ at this sample.
                let clipped =
                    ratio.min(F::one() + hyper.clip_epsilon).max(F::one() - hyper.clip_epsilon);
                let coef = if ratio * a_hat <= clipped * a_hat {
                    -a_hat * ratio / bf
                } else {
                    F::zero()
                };
                if coef != F::zero() {
                    accumulate_actor_grad(
                        actor, &cache, &mu, action, &inv_var, coef, &mut mlp_grads, &mut log_std_grad,
                    )?;
                }

                let (v, vcache) = critic.forward(obs)?;
                let err = v[0] - returns[i];
                vloss += err * err;
                critic_grads.add(&critic.backward(&vcache, &[hyper.value_coef * two * err / bf])?);
            }
            for g in log_std_grad.iter_mut() {
                *g -= hyper.entropy_coef;
            }
            let policy_loss = -surrogate / bf;
            let value_loss = vloss / bf;
            if !policy_loss.is_finite() || !value_loss.is_finite() {
                return Err(AgentError::NonFinite { context: "ppo loss" });
            }
            policy_loss_sum += policy_loss;
            value_loss_sum += value_loss;
            n_minibatches += 1;
            clip_gradients(&mut mlp_grads, Some(&mut log_std_grad), hyper.max_grad_norm);
            clip_gradients(&mut critic_grads, None, hyper.max_grad_norm);
            actor.adam_step(&mlp_grads, &log_std_grad, actor_opt)?;
            critic.adam_step(&critic_grads, critic_opt)?;
        }
    }
    let nmb: F = cast(n_minibatches as f64);
    Ok(UpdateDiagnostics {
        policy_loss: policy_loss_sum / nmb,
        value_loss: value_loss_sum / nmb,
        entropy: actor.entropy(),
        adv_mean,
        adv_std,
    })
}
