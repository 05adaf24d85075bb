use crate::error::{Error, Result};
use crate::util::{mean, pop_std};

/// `min(r A, clip(r, 1-eps, 1+eps) A)`.
pub fn ppo_clip_objective(ratio: f64, adv: f64, eps: f64) -> f64 {
    (ratio * adv).min(ratio.clamp(1.0 - eps, 1.0 + eps) * adv)
}

/// Generalized advantage estimates and return targets for one contiguous
/// stretch of experience. `dones[t]` marks that step `t` ended its episode;
/// `last_value` bootstraps the step after the final one when it did not.
pub fn gae(rewards: &[f64], values: &[f64], dones: &[bool], last_value: f64, gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let next_v = if t + 1 < n { values[t + 1] } else { last_value };
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_v * live - values[t];
        running = delta + gamma * lambda * live * running;
        adv[t] = running;
    }
    let ret = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, ret)
}

/// Transitions from one environment in time order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Segment {
    pub obs: Vec<Vec<f64>>,
    pub raw_actions: Vec<f64>,
    pub actions: Vec<f64>,
    pub logp: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub dones: Vec<bool>,
    /// Value of the observation after the last step (unused if it was terminal).
    pub last_value: f64,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    fn consistent(&self) -> bool {
        let n = self.rewards.len();
        [self.obs.len(), self.raw_actions.len(), self.actions.len(), self.logp.len(), self.values.len(), self.dones.len()]
            .iter()
            .all(|&m| m == n)
    }
}

/// On-policy experience tagged with the policy generation that produced it.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RolloutBuffer {
    pub segments: Vec<Segment>,
    pub generation: u64,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
    advantages_ready: bool,
}

impl RolloutBuffer {
    pub fn new(segments: Vec<Segment>, generation: u64) -> Result<Self> {
        if segments.iter().any(|s| !s.consistent()) {
            return Err(Error::shape("rollout segment arrays differ in length"));
        }
        Ok(Self { segments, generation, ..Default::default() })
    }

    pub fn len(&self) -> usize {
        self.segments.iter().map(Segment::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn advantages_ready(&self) -> bool {
        self.advantages_ready
    }

    /// Flattened `(obs, raw action, logp)` in segment order.
    pub(crate) fn flat(&self) -> impl Iterator<Item = (&Vec<f64>, f64, f64)> {
        self.segments.iter().flat_map(|s| s.obs.iter().zip(&s.raw_actions).zip(&s.logp).map(|((o, r), l)| (o, *r, *l)))
    }

    pub fn rewards(&self) -> impl Iterator<Item = f64> + '_ {
        self.segments.iter().flat_map(|s| s.rewards.iter().copied())
    }
}

/// Fills advantages and returns for every segment, in segment order.
pub fn compute_advantages(buffer: &mut RolloutBuffer, gamma: f64, lambda: f64) {
    buffer.advantages.clear();
    buffer.returns.clear();
    for s in &buffer.segments {
        let (a, r) = gae(&s.rewards, &s.values, &s.dones, s.last_value, gamma, lambda);
        buffer.advantages.extend(a);
        buffer.returns.extend(r);
    }
    buffer.advantages_ready = true;
}

/// Shifts and scales advantages to mean 0 and (population) std 1.
pub fn normalize_advantages(adv: &mut [f64]) {
    if adv.is_empty() {
        return;
    }
    let m = mean(adv);
    let s = pop_std(adv);
    for a in adv.iter_mut() {
        *a -= m;
        if s > 0.0 {
            *a /= s;
        }
    }
    // A second centring pass removes the rounding left by the first.
    let m2 = mean(adv);
    adv.iter_mut().for_each(|a| *a -= m2);
}
