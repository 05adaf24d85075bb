use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Activation, DenseLayer, Layer, LayerStack};
use crate::util::rng_for;

/// Actions live in `[-ACTION_BOUND, ACTION_BOUND]`.
pub const ACTION_BOUND: f64 = 2.0;
const LN_2PI: f64 = 1.837_877_066_409_345_3;
const LN_2: f64 = std::f64::consts::LN_2;

/// Maps an unbounded Gaussian sample into the action range.
#[inline]
pub fn squash(raw: f64) -> f64 {
    ACTION_BOUND * (raw / ACTION_BOUND).tanh()
}

/// `ln |d squash / d raw|`, computed without cancellation for large `|raw|`.
#[inline]
pub fn squash_log_jacobian(raw: f64) -> f64 {
    let x = raw / ACTION_BOUND;
    // ln(1 - tanh^2 x) = 2 (ln 2 - |x| - ln(1 + e^{-2|x|}))
    let ax = x.abs();
    2.0 * (LN_2 - ax - (-2.0 * ax).exp().ln_1p())
}

/// Log density of `raw` under `N(mu, sigma^2)`.
#[inline]
pub fn gaussian_log_prob(raw: f64, mu: f64, log_std: f64) -> f64 {
    let z = (raw - mu) / log_std.exp();
    -0.5 * z * z - log_std - 0.5 * LN_2PI
}

/// Tanh multilayer perceptron with a scalar linear output.
pub fn mlp(input: usize, hidden: usize, layers: usize, out_scale: f64, seed: u64, stream: u64) -> LayerStack {
    let mut rng = rng_for(seed, stream);
    let mut ls = Vec::new();
    let mut width = input;
    for _ in 0..layers {
        ls.push(Layer::Dense(DenseLayer::init(width, hidden, Activation::Tanh, &mut rng)));
        width = hidden;
    }
    let mut head = DenseLayer::init(width, 1, Activation::Identity, &mut rng);
    head.weights.data_mut().iter_mut().for_each(|w| *w *= out_scale);
    ls.push(Layer::Dense(head));
    LayerStack::new(ls).expect("mlp dimensions are consistent")
}

/// Gaussian policy over the pre-squash action with a state-independent
/// log standard deviation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub net: LayerStack,
    pub log_std: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampledAction {
    /// Squashed action in `[-2, 2]`.
    pub action: f64,
    /// Gaussian sample before squashing.
    pub raw: f64,
    /// Log density of `action`, including the squashing correction.
    pub logp: f64,
}

impl Policy {
    pub fn new(obs_dim: usize, hidden: usize, init_log_std: f64, seed: u64) -> Self {
        Self { net: mlp(obs_dim, hidden, 2, 0.01, seed, 0x706f_6c), log_std: init_log_std }
    }

    pub fn obs_dim(&self) -> usize {
        self.net.input_size()
    }

    pub fn mean(&self, obs: &[f64]) -> Result<f64> {
        let mu = self.net.forward(&[obs.to_vec()])?[0];
        if !mu.is_finite() || !self.log_std.is_finite() {
            return Err(Error::Numeric("non-finite policy output".into()));
        }
        Ok(mu)
    }

    /// Action for a given standard-normal draw `z`.
    pub fn action_from_noise(&self, obs: &[f64], z: f64) -> Result<SampledAction> {
        let mu = self.mean(obs)?;
        let raw = mu + self.log_std.exp() * z;
        Ok(SampledAction {
            action: squash(raw),
            raw,
            logp: gaussian_log_prob(raw, mu, self.log_std) - squash_log_jacobian(raw),
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Result<SampledAction> {
        let z: f64 = StandardNormal.sample(rng);
        self.action_from_noise(obs, z)
    }

    /// Squashed mean.
    pub fn act_deterministic(&self, obs: &[f64]) -> Result<f64> {
        Ok(squash(self.mean(obs)?))
    }

    pub fn all_finite(&self) -> bool {
        self.net.all_finite() && self.log_std.is_finite()
    }
}

/// Draws an action from `policy` at observation `s`.
pub fn sample_action<R: Rng + ?Sized>(policy: &Policy, s: &[f64], rng: &mut R) -> Result<SampledAction> {
    policy.sample(s, rng)
}

/// State-value network with the policy's torso shape.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueNet {
    pub net: LayerStack,
}

impl ValueNet {
    pub fn new(obs_dim: usize, hidden: usize, seed: u64) -> Self {
        Self { net: mlp(obs_dim, hidden, 2, 1.0, seed, 0x7661_6c) }
    }

    pub fn value(&self, obs: &[f64]) -> Result<f64> {
        let v = self.net.forward(&[obs.to_vec()])?[0];
        if !v.is_finite() {
            return Err(Error::Numeric("non-finite value estimate".into()));
        }
        Ok(v)
    }
}

/// Policy and value networks plus the number of updates applied so far.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActorCritic {
    pub policy: Policy,
    pub value: ValueNet,
    pub generation: u64,
}

impl ActorCritic {
    pub fn new(obs_dim: usize, hidden: usize, init_log_std: f64, seed: u64) -> Self {
        Self { policy: Policy::new(obs_dim, hidden, init_log_std, seed), value: ValueNet::new(obs_dim, hidden, seed), generation: 0 }
    }

    /// Digest of the policy parameters (network and log-std).
    pub fn policy_checksum(&self) -> String {
        let mut bytes = self.policy.net.checksum().into_bytes();
        bytes.extend(self.policy.log_std.to_le_bytes());
        crate::util::sha256_hex(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn squash_range_and_symmetry() {
        for raw in [-1e6, -5.0, -0.3, 0.0, 0.3, 5.0, 1e6] {
            let a = squash(raw);
            assert!((-2.0..=2.0).contains(&a));
            assert_eq!(squash(-raw), -a);
        }
    }

    #[test]
    fn log_jacobian_matches_direct_formula() {
        for raw in [-3.0, -0.5, 0.0, 0.7, 2.5] {
            let t = (raw / 2.0f64).tanh();
            assert!((squash_log_jacobian(raw) - (1.0 - t * t).ln()).abs() < 1e-12);
        }
        assert!(squash_log_jacobian(1e4).is_finite());
    }

    #[test]
    fn symmetric_noise_gives_opposite_actions() {
        let mut p = Policy::new(3, 8, 0.0, 1);
        // Zero the output layer so the mean is exactly 0.
        if let Some(Layer::Dense(d)) = p.net.layers_mut().last_mut() {
            d.weights.data_mut().iter_mut().for_each(|w| *w = 0.0);
        }
        let s = [0.1, 0.2, 0.3];
        for z in [0.1, 0.9, 2.5] {
            let a = p.action_from_noise(&s, z).unwrap().action;
            let b = p.action_from_noise(&s, -z).unwrap().action;
            assert_eq!(a, -b);
        }
    }

    #[test]
    fn tiny_sigma_is_deterministic() {
        let p = Policy { log_std: -40.0, ..Policy::new(2, 4, 0.0, 3) };
        let s = [0.5, -0.5];
        let a = p.action_from_noise(&s, 1.7).unwrap().action;
        assert!((a - p.act_deterministic(&s).unwrap()).abs() < 1e-12);
    }
}
