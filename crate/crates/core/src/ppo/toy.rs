use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::policy::ActorCritic;
use crate::env::Environment;
use crate::error::{Error, Result};
use crate::util::rng_for;

/// Tracking task: observe `s ~ U[-1, 1]`, receive `-(a - s)^2`.
pub struct QuadraticEnv {
    rng: ChaCha8Rng,
    s: f64,
    t: usize,
    pub episode_len: usize,
    active: bool,
}

impl QuadraticEnv {
    pub fn new(seed: u64, episode_len: usize) -> Self {
        Self { rng: rng_for(seed, 0x7175_6164), s: 0.0, t: 0, episode_len, active: false }
    }
}

impl Environment for QuadraticEnv {
    fn obs_dim(&self) -> usize {
        1
    }

    fn reset(&mut self) -> Result<Vec<f64>> {
        self.t = 0;
        self.s = self.rng.random_range(-1.0..=1.0);
        self.active = true;
        Ok(vec![self.s])
    }

    fn step(&mut self, action: f64) -> Result<(Vec<f64>, f64, bool)> {
        if !self.active {
            return Err(Error::Usage("step called on a finished episode; call reset".into()));
        }
        let r = -(action - self.s).powi(2);
        self.t += 1;
        self.s = self.rng.random_range(-1.0..=1.0);
        let done = self.t >= self.episode_len;
        self.active = !done;
        Ok((vec![self.s], r, done))
    }

    fn episode_len(&self) -> Option<usize> {
        Some(self.episode_len)
    }
}

/// Returns of `episodes` complete episodes. Stochastic evaluation samples
/// from the policy; otherwise the squashed mean is used.
pub fn evaluate_policy<E: Environment>(env: &mut E, ac: &ActorCritic, episodes: usize, stochastic: bool, seed: u64) -> Result<Vec<f64>> {
    let mut rng = rng_for(seed, 0x6576_616c);
    let mut out = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let mut obs = env.reset()?;
        let mut total = 0.0;
        loop {
            let a = if stochastic { ac.policy.sample(&obs, &mut rng)?.action } else { ac.policy.act_deterministic(&obs)? };
            let (next, r, done) = env.step(a)?;
            total += r;
            if done {
                break;
            }
            obs = next;
        }
        out.push(total);
    }
    Ok(out)
}
