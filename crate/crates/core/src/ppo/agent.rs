use std::path::Path;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::buffer::{compute_advantages, normalize_advantages, ppo_clip_objective, RolloutBuffer, Segment};
use super::policy::{gaussian_log_prob, ActorCritic};
use crate::env::Environment;
use crate::error::{Error, Result};
use crate::nn::{clip_grad_norm, LayerStack, LrSchedule, Optimizer, StackGrads};
use crate::util::rng_for;

const CHUNK: usize = 32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub clip_eps: f64,
    pub lr: f64,
    pub total_steps: u64,
    pub n_envs: usize,
    pub gamma: f64,
    pub lambda: f64,
    pub epochs: usize,
    pub minibatch: usize,
    pub horizon: usize,
    pub max_grad_norm: f64,
    pub hidden: usize,
    pub init_log_std: f64,
    pub seed: u64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            clip_eps: 0.2,
            lr: 0.0025,
            total_steps: 1_000_000,
            n_envs: 10,
            gamma: 0.99,
            lambda: 0.95,
            epochs: 10,
            minibatch: 256,
            horizon: 128,
            max_grad_norm: 0.5,
            hidden: 64,
            init_log_std: 0.0,
            seed: 0,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return Err(Error::config("clip epsilon must lie in (0, 1)"));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0 && self.lambda > 0.0 && self.lambda <= 1.0) {
            return Err(Error::config("gamma and lambda must lie in (0, 1]"));
        }
        if self.n_envs == 0 || self.horizon == 0 || self.minibatch == 0 || self.hidden == 0 {
            return Err(Error::config("n_envs, horizon, minibatch and hidden must be positive"));
        }
        if !(self.lr.is_finite() && self.lr > 0.0 && self.max_grad_norm > 0.0) {
            return Err(Error::config("learning rate and gradient bound must be positive"));
        }
        Ok(())
    }

    pub fn steps_per_iteration(&self) -> u64 {
        (self.n_envs * self.horizon) as u64
    }

    pub fn iterations(&self) -> u64 {
        self.total_steps.div_ceil(self.steps_per_iteration())
    }
}

/// An environment with its own random stream and episode bookkeeping.
pub struct EnvSlot<E: Environment> {
    pub env: E,
    rng: ChaCha8Rng,
    obs: Option<Vec<f64>>,
    episode_return: f64,
    pub finished_returns: Vec<f64>,
}

impl<E: Environment> EnvSlot<E> {
    pub fn new(env: E, seed: u64, index: usize) -> Self {
        Self { env, rng: rng_for(seed, 0x656e_7600 + index as u64), obs: None, episode_return: 0.0, finished_returns: Vec::new() }
    }
}

/// Runs every environment for `horizon` steps under the current policy.
/// Environments that finish an episode reset and continue.
pub fn collect_rollouts<E: Environment>(
    slots: &mut [EnvSlot<E>],
    ac: &ActorCritic,
    horizon: usize,
) -> Result<RolloutBuffer> {
    let segments = slots
        .par_iter_mut()
        .map(|slot| {
            let mut seg = Segment::default();
            for _ in 0..horizon {
                let obs = match slot.obs.take() {
                    Some(o) => o,
                    None => slot.env.reset()?,
                };
                let s = ac.policy.sample(&obs, &mut slot.rng)?;
                let v = ac.value.value(&obs)?;
                let (next, r, done) = slot.env.step(s.action)?;
                slot.episode_return += r;
                seg.obs.push(obs);
                seg.raw_actions.push(s.raw);
                seg.actions.push(s.action);
                seg.logp.push(s.logp);
                seg.rewards.push(r);
                seg.values.push(v);
                seg.dones.push(done);
                if done {
                    slot.finished_returns.push(slot.episode_return);
                    slot.episode_return = 0.0;
                    slot.obs = None;
                } else {
                    slot.obs = Some(next);
                }
            }
            seg.last_value = match &slot.obs {
                Some(o) => ac.value.value(o)?,
                None => 0.0,
            };
            Ok(seg)
        })
        .collect::<Result<Vec<_>>>()?;
    RolloutBuffer::new(segments, ac.generation)
}

/// Adam state for both networks, carried across updates of one run.
pub struct PpoOptimizers {
    policy: Optimizer,
    value: Optimizer,
}

impl PpoOptimizers {
    pub fn new(lr: f64) -> Self {
        Self { policy: Optimizer::adam(lr, LrSchedule::Constant), value: Optimizer::adam(lr, LrSchedule::Constant) }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub clip_fraction: f64,
    pub mean_ratio: f64,
}

/// Clipped-surrogate policy step and squared-error value step over shuffled
/// minibatches. On a non-finite loss or gradient the networks are restored
/// and a numeric error returned.
pub fn update(
    ac: &mut ActorCritic,
    buffer: &mut RolloutBuffer,
    cfg: &PpoConfig,
    opts: &mut PpoOptimizers,
    rng: &mut ChaCha8Rng,
) -> Result<UpdateStats> {
    if buffer.generation != ac.generation {
        return Err(Error::Usage(format!(
            "rollouts from generation {} cannot update generation {}",
            buffer.generation, ac.generation
        )));
    }
    if !buffer.advantages_ready() {
        compute_advantages(buffer, cfg.gamma, cfg.lambda);
    }
    normalize_advantages(&mut buffer.advantages);
    let flat: Vec<(&Vec<f64>, f64, f64)> = buffer.flat().collect();
    let n = flat.len();
    if n == 0 {
        return Err(Error::input("empty rollout buffer"));
    }
    let backup = ac.clone();
    match run_epochs(ac, &flat, &buffer.advantages, &buffer.returns, cfg, opts, rng) {
        Ok(stats) => {
            ac.generation += 1;
            Ok(stats)
        }
        Err(e) => {
            *ac = backup;
            Err(e)
        }
    }
}

struct PolicyGrad {
    net: StackGrads,
    log_std: f64,
    objective: f64,
    clipped: usize,
    ratio: f64,
}

fn run_epochs(
    ac: &mut ActorCritic,
    flat: &[(&Vec<f64>, f64, f64)],
    adv: &[f64],
    ret: &[f64],
    cfg: &PpoConfig,
    opts: &mut PpoOptimizers,
    rng: &mut ChaCha8Rng,
) -> Result<UpdateStats> {
    // Old log-densities without the squashing term, which cancels in ratios.
    let old_logp: Vec<f64> = flat
        .iter()
        .map(|(_, raw, logp)| logp + super::policy::squash_log_jacobian(*raw))
        .collect();
    let n = flat.len();
    let mut order: Vec<usize> = (0..n).collect();
    let (mut p_sum, mut v_sum, mut clipped, mut ratio_sum, mut count, mut batches) = (0.0, 0.0, 0usize, 0.0, 0usize, 0usize);
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for mb in order.chunks(cfg.minibatch) {
            let k = mb.len() as f64;
            let pg = policy_gradient(ac, flat, &old_logp, adv, mb, cfg.clip_eps)?;
            let (v_loss, mut vg) = value_gradient(&ac.value.net, flat, ret, mb)?;
            let objective = pg.objective / k;
            if !objective.is_finite() || !v_loss.is_finite() || !pg.net.all_finite() || !vg.all_finite() {
                return Err(Error::Numeric("non-finite PPO loss; update abandoned".into()));
            }

            // Minimize the negated surrogate.
            let mut net_g = pg.net;
            net_g.scale(-1.0 / k);
            let mut log_std_g = [-pg.log_std / k];
            {
                let mut slices: Vec<&mut [f64]> =
                    net_g.layers.iter_mut().flatten().flat_map(|l| l.iter_mut().map(Vec::as_mut_slice)).collect();
                slices.push(&mut log_std_g);
                clip_grad_norm(&mut slices, cfg.max_grad_norm);
            }
            {
                let mut slices: Vec<&mut [f64]> =
                    vg.layers.iter_mut().flatten().flat_map(|l| l.iter_mut().map(Vec::as_mut_slice)).collect();
                clip_grad_norm(&mut slices, cfg.max_grad_norm);
            }
            {
                let mut g = net_g.slices();
                g.push(&log_std_g);
                let mut p = ac.policy.net.trainable_slices_mut();
                p.push(std::slice::from_mut(&mut ac.policy.log_std));
                opts.policy.step(&mut p, &g)?;
            }
            opts.value.step_stack(&mut ac.value.net, &vg)?;

            p_sum += -objective;
            v_sum += v_loss;
            clipped += pg.clipped;
            ratio_sum += pg.ratio;
            count += mb.len();
            batches += 1;
        }
    }
    if !ac.policy.all_finite() || !ac.value.net.all_finite() {
        return Err(Error::Numeric("non-finite parameters after PPO update".into()));
    }
    let b = batches.max(1) as f64;
    Ok(UpdateStats {
        policy_loss: p_sum / b,
        value_loss: v_sum / b,
        clip_fraction: clipped as f64 / count.max(1) as f64,
        mean_ratio: ratio_sum / count.max(1) as f64,
    })
}

/// Gradient of the summed clipped surrogate with respect to the policy.
fn policy_gradient(
    ac: &ActorCritic,
    flat: &[(&Vec<f64>, f64, f64)],
    old_logp: &[f64],
    adv: &[f64],
    mb: &[usize],
    eps: f64,
) -> Result<PolicyGrad> {
    let net = &ac.policy.net;
    let log_std = ac.policy.log_std;
    let sigma = log_std.exp();
    let parts = mb
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut g = PolicyGrad { net: StackGrads::zeros_like(net), log_std: 0.0, objective: 0.0, clipped: 0, ratio: 0.0 };
            for &i in chunk {
                let (obs, raw, _) = flat[i];
                let trace = net.forward_trace(std::slice::from_ref(obs))?;
                let mu = trace.output()[0];
                let logp = gaussian_log_prob(raw, mu, log_std);
                let r = (logp - old_logp[i]).exp();
                let a = adv[i];
                g.objective += ppo_clip_objective(r, a, eps);
                g.ratio += r;
                let is_clipped = (a >= 0.0 && r > 1.0 + eps) || (a < 0.0 && r < 1.0 - eps);
                if is_clipped {
                    g.clipped += 1;
                    continue;
                }
                // d(r A)/d theta = r A d logp / d theta
                let k = r * a;
                let z = (raw - mu) / sigma;
                g.log_std += k * (z * z - 1.0);
                net.backward_trace(&trace, &[k * z / sigma], &mut g.net)?;
            }
            Ok(g)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut it = parts.into_iter();
    let mut acc = it.next().expect("non-empty minibatch");
    for p in it {
        acc.net.add_assign(&p.net);
        acc.log_std += p.log_std;
        acc.objective += p.objective;
        acc.clipped += p.clipped;
        acc.ratio += p.ratio;
    }
    Ok(acc)
}

/// Mean squared error against the return targets and its gradient.
fn value_gradient(net: &LayerStack, flat: &[(&Vec<f64>, f64, f64)], ret: &[f64], mb: &[usize]) -> Result<(f64, StackGrads)> {
    let parts = mb
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut g = StackGrads::zeros_like(net);
            let mut loss = 0.0;
            for &i in chunk {
                let trace = net.forward_trace(std::slice::from_ref(flat[i].0))?;
                let e = trace.output()[0] - ret[i];
                loss += e * e;
                net.backward_trace(&trace, &[2.0 * e], &mut g)?;
            }
            Ok((loss, g))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut it = parts.into_iter();
    let (mut loss, mut g) = it.next().expect("non-empty minibatch");
    for (l, p) in it {
        loss += l;
        g.add_assign(&p);
    }
    let k = mb.len() as f64;
    g.scale(1.0 / k);
    Ok((loss / k, g))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub iteration: usize,
    /// Mean per-step reward of the rollout times the episode length (or the
    /// mean of episodes finished during the rollout when the length varies).
    pub mean_episode_reward: f64,
    pub clip_fraction: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
}

pub struct TrainOutput {
    pub ac: ActorCritic,
    pub log: Vec<IterationLog>,
}

/// Runs `cfg.total_steps` environment steps of PPO starting from `initial`
/// (or a fresh policy) on environments built by `make_env(index)`.
pub fn train<E: Environment>(
    make_env: impl Fn(usize) -> Result<E>,
    cfg: &PpoConfig,
    initial: Option<ActorCritic>,
) -> Result<TrainOutput> {
    cfg.validate()?;
    let mut slots = (0..cfg.n_envs).map(|i| Ok(EnvSlot::new(make_env(i)?, cfg.seed, i))).collect::<Result<Vec<_>>>()?;
    let obs_dim = slots[0].env.obs_dim();
    let mut ac = initial.unwrap_or_else(|| ActorCritic::new(obs_dim, cfg.hidden, cfg.init_log_std, cfg.seed));
    if ac.policy.obs_dim() != obs_dim {
        return Err(Error::Schema(format!(
            "policy expects {} observation features, environment provides {obs_dim}",
            ac.policy.obs_dim()
        )));
    }
    let episode_len = slots[0].env.episode_len();
    let mut opts = PpoOptimizers::new(cfg.lr);
    let mut rng = rng_for(cfg.seed, 0x7570_64);
    let mut log = Vec::new();
    for it in 0..cfg.iterations() {
        let mut buffer = collect_rollouts(&mut slots, &ac, cfg.horizon)?;
        let rewards: Vec<f64> = buffer.rewards().collect();
        let mean_step = rewards.iter().sum::<f64>() / rewards.len() as f64;
        let finished: Vec<f64> = slots.iter_mut().flat_map(|s| s.finished_returns.drain(..)).collect();
        let mean_episode_reward = match episode_len {
            Some(len) => mean_step * len as f64,
            None if !finished.is_empty() => finished.iter().sum::<f64>() / finished.len() as f64,
            None => f64::NAN,
        };
        compute_advantages(&mut buffer, cfg.gamma, cfg.lambda);
        let stats = update(&mut ac, &mut buffer, cfg, &mut opts, &mut rng)?;
        log::debug!("ppo iteration {it}: reward {mean_episode_reward:.4} clip {:.3}", stats.clip_fraction);
        log.push(IterationLog {
            iteration: it as usize,
            mean_episode_reward,
            clip_fraction: stats.clip_fraction,
            policy_loss: stats.policy_loss,
            value_loss: stats.value_loss,
        });
    }
    Ok(TrainOutput { ac, log })
}

/// `iteration,mean_episode_reward,clip_fraction,policy_loss,value_loss`.
pub fn write_training_log(log: &[IterationLog], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["iteration", "mean_episode_reward", "clip_fraction", "policy_loss", "value_loss"])?;
    for l in log {
        w.write_record([
            l.iteration.to_string(),
            l.mean_episode_reward.to_string(),
            l.clip_fraction.to_string(),
            l.policy_loss.to_string(),
            l.value_loss.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Policy and value networks with provenance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyCheckpoint {
    pub ac: ActorCritic,
    pub config_hash: String,
    pub seed: u64,
}

impl PolicyCheckpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(f, self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::NotFound(path.to_path_buf()));
        }
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        let ck: PolicyCheckpoint = serde_json::from_reader(f)?;
        ck.ac.policy.net.validate().map_err(|e| Error::Schema(e.to_string()))?;
        ck.ac.value.net.validate().map_err(|e| Error::Schema(e.to_string()))?;
        Ok(ck)
    }
}
