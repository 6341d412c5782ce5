//! The training loop, deterministic evaluation, and policy persistence.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::{EnvError, EpisodeResult, NormStats, PortfolioEnv};
use crate::nn::{read_checkpoint, write_checkpoint, Adam, AdamParams, GaussianPolicy, Mlp};
use crate::scalar::Scalar;

use super::rollout::RolloutBuffer;
use super::update::{a2c_update, ppo_update};
use super::{AgentError, AgentHyper, Algorithm};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainLogRow<F> {
    pub update: usize,
    /// Env steps consumed up to and including this update's rollout.
    pub timestep: usize,
    pub policy_loss: F,
    pub value_loss: F,
    pub entropy: F,
    pub mean_reward: F,
}

pub fn write_training_log<F: Scalar, W: Write>(
    rows: &[TrainLogRow<F>],
    out: &mut W,
) -> std::io::Result<()> {
    writeln!(out, "update,timestep,policy_loss,value_loss,entropy,mean_reward")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.update, r.timestep, r.policy_loss, r.value_loss, r.entropy, r.mean_reward
        )?;
    }
    Ok(())
}

/// A trained actor-critic pair plus everything needed to rebuild its
/// observation pipeline: normalization statistics and the fingerprint of
/// the env semantics it was trained under.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedPolicy<F> {
    pub actor: GaussianPolicy<F>,
    pub critic: Mlp<F>,
    pub norm: Option<NormStats<F>>,
    pub fingerprint: String,
}

const META_VERSION: &str = "esgrl-policy v1";

impl<F: Scalar> TrainedPolicy<F> {
    /// Writes `actor.ckpt`, `critic.ckpt`, and `policy.meta` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<(), AgentError> {
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| AgentError::Io { path, source }
        };
        fs::create_dir_all(dir).map_err(io(dir))?;

        let mut actor_buf = Vec::new();
        write_checkpoint(&mut actor_buf, self.actor.mean_net(), Some(self.actor.log_std()))
            .expect("in-memory write");
        let actor_path = dir.join("actor.ckpt");
        fs::write(&actor_path, &actor_buf).map_err(io(&actor_path))?;

        let mut critic_buf = Vec::new();
        write_checkpoint(&mut critic_buf, &self.critic, None).expect("in-memory write");
        let critic_path = dir.join("critic.ckpt");
        fs::write(&critic_path, &critic_buf).map_err(io(&critic_path))?;

        let mut meta = String::new();
        let _ = writeln!(meta, "{META_VERSION}");
        let _ = writeln!(meta, "fingerprint {}", self.fingerprint);
        match &self.norm {
            None => {
                let _ = writeln!(meta, "norm none");
            }
            Some(n) => {
                let _ = write!(meta, "norm_mean");
                for v in n.mean() {
                    let _ = write!(meta, " {v}");
                }
                let _ = writeln!(meta);
                let _ = write!(meta, "norm_std");
                for v in n.std() {
                    let _ = write!(meta, " {v}");
                }
                let _ = writeln!(meta);
            }
        }
        let meta_path = dir.join("policy.meta");
        fs::write(&meta_path, meta).map_err(io(&meta_path))?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, AgentError> {
        let read = |name: &str| {
            let path = dir.join(name);
            fs::read_to_string(&path).map_err(|source| AgentError::Io { path, source })
        };
        let (mean, log_std) = read_checkpoint::<F>(&read("actor.ckpt")?)?;
        let log_std =
            log_std.ok_or_else(|| AgentError::Meta("actor checkpoint lacks log_std".into()))?;
        let actor = GaussianPolicy::from_parts(mean, log_std)?;
        let (critic, stray) = read_checkpoint::<F>(&read("critic.ckpt")?)?;
        if stray.is_some() {
            return Err(AgentError::Meta("critic checkpoint unexpectedly carries log_std".into()));
        }

        let meta = read("policy.meta")?;
        let mut lines = meta.lines();
        if lines.next().map(|l| l.trim_end()) != Some(META_VERSION) {
            return Err(AgentError::Meta(format!("expected `{META_VERSION}` header")));
        }
        let fingerprint = match lines.next().and_then(|l| l.strip_prefix("fingerprint ")) {
            Some(fp) if !fp.trim().is_empty() => fp.trim().to_owned(),
            _ => return Err(AgentError::Meta("missing fingerprint line".into())),
        };
        let norm = match lines.next().map(str::trim_end) {
            Some("norm none") => None,
            Some(line) => {
                let mean = parse_floats::<F>(line, "norm_mean")?;
                let std_line = lines
                    .next()
                    .ok_or_else(|| AgentError::Meta("missing norm_std line".into()))?;
                let std = parse_floats::<F>(std_line, "norm_std")?;
                Some(NormStats::from_parts(mean, std)?)
            }
            None => return Err(AgentError::Meta("missing norm line".into())),
        };
        Ok(TrainedPolicy { actor, critic, norm, fingerprint })
    }
}

fn parse_floats<F: Scalar>(line: &str, tag: &str) -> Result<Vec<F>, AgentError> {
    let rest = line
        .strip_prefix(tag)
        .ok_or_else(|| AgentError::Meta(format!("expected `{tag}` line, got `{line}`")))?;
    rest.split_ascii_whitespace()
        .map(|t| {
            t.parse::<F>()
                .map_err(|e| AgentError::Meta(format!("bad float `{t}` in {tag}: {e}")))
        })
        .collect()
}

/// Trains a fresh actor-critic pair on the env the factory produces.
///
/// The factory runs once; it exists so every training loop owns its env
/// exclusively. All randomness (actor init, critic init, action sampling,
/// minibatch shuffling) derives from `hyper.seed` through one master
/// stream, so identical (seed, data, hyper) reproduce bit-identical
/// policies and logs. The episode restarts from reset whenever the data
/// window is exhausted mid-rollout; `total_timesteps` is consumed in
/// ceil(total/rollout_length) full rollouts.
pub fn train<'d, F, E>(
    make_env: E,
    hyper: &AgentHyper<F>,
) -> Result<(TrainedPolicy<F>, Vec<TrainLogRow<F>>), AgentError>
where
    F: Scalar,
    E: FnOnce() -> Result<PortfolioEnv<'d, F>, EnvError>,
{
    hyper.validate()?;
    let mut env = make_env()?;
    let mut master = ChaCha8Rng::seed_from_u64(hyper.seed);
    let actor_seed = master.next_u64();
    let critic_seed = master.next_u64();
    let sample_seed = master.next_u64();
    let shuffle_seed = master.next_u64();

    let obs_dim = env.obs_dim();
    let act_dim = env.n_assets();
    let mut actor = GaussianPolicy::init(obs_dim, &hyper.hidden, act_dim, actor_seed)?;
    let mut critic_sizes = Vec::with_capacity(hyper.hidden.len() + 2);
    critic_sizes.push(obs_dim);
    critic_sizes.extend_from_slice(&hyper.hidden);
    critic_sizes.push(1);
    let mut critic = Mlp::init(&critic_sizes, critic_seed)?;
    let mut actor_opt = Adam::new(&actor.param_shapes(), AdamParams::with_lr(hyper.learning_rate));
    let mut critic_opt = Adam::new(&critic.param_shapes(), AdamParams::with_lr(hyper.learning_rate));
    let mut sample_rng = ChaCha8Rng::seed_from_u64(sample_seed);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(shuffle_seed);

    let n_updates = hyper.total_timesteps.div_ceil(hyper.rollout_length);
    let mut log = Vec::with_capacity(n_updates);
    let mut buffer = RolloutBuffer::new(hyper.rollout_length);
    let mut obs = env.reset(hyper.seed);
    let mut timestep = 0usize;

    for update in 0..n_updates {
        buffer.clear();
        for _ in 0..hyper.rollout_length {
            let value = critic.forward(&obs)?.0[0];
            let (action, log_prob) = actor.sample(&obs, &mut sample_rng)?;
            let out = env.step(&action)?;
            timestep += 1;
            let done = out.done;
            buffer.push(
                std::mem::replace(&mut obs, out.observation),
                action,
                log_prob,
                out.reward,
                value,
                done,
            );
            if done {
                obs = env.reset(hyper.seed);
            }
        }
        let last_value =
            if buffer.last_done() { F::zero() } else { critic.forward(&obs)?.0[0] };
        let diag = match hyper.algorithm {
            Algorithm::A2c => a2c_update(
                &buffer,
                last_value,
                &mut actor,
                &mut critic,
                &mut actor_opt,
                &mut critic_opt,
                hyper,
            )?,
            Algorithm::Ppo => ppo_update(
                &buffer,
                last_value,
                &mut actor,
                &mut critic,
                &mut actor_opt,
                &mut critic_opt,
                hyper,
                &mut shuffle_rng,
            )?,
        };
        log.push(TrainLogRow {
            update,
            timestep,
            policy_loss: diag.policy_loss,
            value_loss: diag.value_loss,
            entropy: diag.entropy,
            mean_reward: buffer.mean_reward(),
        });
    }

    let trained = TrainedPolicy {
        actor,
        critic,
        norm: env.norm_stats().cloned(),
        fingerprint: env.fingerprint(),
    };
    Ok((trained, log))
}

/// Replays one full episode with the policy's mean action (no sampling);
/// deterministic given the policy and data. The env must carry the same
/// semantics fingerprint the policy was trained under.
pub fn evaluate<F: Scalar>(
    policy: &TrainedPolicy<F>,
    env: &mut PortfolioEnv<'_, F>,
) -> Result<EpisodeResult<F>, AgentError> {
    let env_fp = env.fingerprint();
    if env_fp != policy.fingerprint {
        return Err(AgentError::FingerprintMismatch {
            policy: policy.fingerprint.clone(),
            env: env_fp,
        });
    }
    let mut obs = env.reset(0);
    let mut result = EpisodeResult::new();
    while !env.is_done() {
        let action = policy.actor.mean_action(&obs)?;
        let out = env.step(&action)?;
        let state = env.state();
        result.record(env.date(), out.reward, &out.info, state.portfolio_value, &state.weights);
        obs = out.observation;
    }
    Ok(result)
}
