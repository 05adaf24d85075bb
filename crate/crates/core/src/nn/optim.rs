use serde::{Deserialize, Serialize};

use super::stack::{LayerStack, StackGrads};
use crate::error::{Error, Result};

/// `base_lr * (1 - step/total)`, floored at zero. Steps past `total` clamp to
/// the final value.
pub fn lr_schedule(step: u64, total: u64, base_lr: f64) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let frac = step.min(total) as f64 / total as f64;
    (base_lr * (1.0 - frac)).max(0.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum LrSchedule {
    Constant,
    Linear { total_steps: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UpdateRule {
    Adam,
    /// Plain gradient descent.
    Sgd,
}

/// Adaptive-moment optimizer state.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Optimizer {
    pub rule: UpdateRule,
    pub base_lr: f64,
    pub schedule: LrSchedule,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn adam(base_lr: f64, schedule: LrSchedule) -> Self {
        Self { rule: UpdateRule::Adam, base_lr, schedule, beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m: Vec::new(), v: Vec::new() }
    }

    pub fn sgd(base_lr: f64) -> Self {
        Self { rule: UpdateRule::Sgd, ..Self::adam(base_lr, LrSchedule::Constant) }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn current_lr(&self) -> f64 {
        match self.schedule {
            LrSchedule::Constant => self.base_lr,
            LrSchedule::Linear { total_steps } => lr_schedule(self.step, total_steps, self.base_lr),
        }
    }

    /// Applies one update. Rejects non-finite gradients without touching
    /// parameters or state.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != grads.len() || params.iter().zip(grads).any(|(p, g)| p.len() != g.len()) {
            return Err(Error::shape("parameter and gradient slices do not line up"));
        }
        if grads.iter().any(|g| g.iter().any(|v| !v.is_finite())) {
            return Err(Error::Numeric("non-finite gradient; update aborted".into()));
        }
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| vec![0.0; g.len()]).collect();
            self.v = self.m.clone();
        } else if self.m.len() != grads.len() || self.m.iter().zip(grads).any(|(m, g)| m.len() != g.len()) {
            return Err(Error::shape("optimizer state was built for different parameters"));
        }

        let lr = self.current_lr();
        self.step += 1;
        match self.rule {
            UpdateRule::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    for (pi, gi) in p.iter_mut().zip(g.iter()) {
                        *pi -= lr * gi;
                    }
                }
            }
            UpdateRule::Adam => {
                let t = self.step as i32;
                let bc1 = 1.0 - self.beta1.powi(t);
                let bc2 = 1.0 - self.beta2.powi(t);
                for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
                    let (m, v) = (&mut self.m[k], &mut self.v[k]);
                    for i in 0..g.len() {
                        let gi = g[i];
                        m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * gi;
                        v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * gi * gi;
                        if gi == 0.0 && m[i] == 0.0 {
                            continue;
                        }
                        let mhat = m[i] / bc1;
                        let vhat = v[i] / bc2;
                        p[i] -= lr * mhat / (vhat.sqrt() + self.eps);
                    }
                }
            }
        }
        Ok(())
    }

    /// Updates the trainable layers of `stack`; frozen layers are untouched.
    pub fn step_stack(&mut self, stack: &mut LayerStack, grads: &StackGrads) -> Result<()> {
        let g = grads.slices();
        let mut p = stack.trainable_slices_mut();
        self.step(&mut p, &g)
    }
}

/// Rescales gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(slices: &mut [&mut [f64]], max_norm: f64) -> f64 {
    let norm = slices.iter().flat_map(|s| s.iter()).map(|v| v * v).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let k = max_norm / norm;
        for s in slices.iter_mut() {
            s.iter_mut().for_each(|v| *v *= k);
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_examples() {
        assert_eq!(lr_schedule(0, 100, 0.001), 0.001);
        assert!((lr_schedule(50, 100, 0.001) - 0.0005).abs() <= 1e-12 * 0.0005);
        assert_eq!(lr_schedule(100, 100, 0.001), 0.0);
        assert_eq!(lr_schedule(250, 100, 0.001), 0.0);
    }

    #[test]
    fn sgd_single_step() {
        let mut opt = Optimizer::sgd(0.1);
        let mut p = vec![1.0];
        opt.step(&mut [&mut p], &[&[1.0]]).unwrap();
        assert!((p[0] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn zero_gradients_leave_params() {
        let mut opt = Optimizer::adam(0.01, LrSchedule::Constant);
        let mut p = vec![0.3, -2.0];
        opt.step(&mut [&mut p], &[&[0.0, 0.0]]).unwrap();
        opt.step(&mut [&mut p], &[&[0.0, 0.0]]).unwrap();
        assert_eq!(p, vec![0.3, -2.0]);
        assert_eq!(opt.step_count(), 2);
    }

    #[test]
    fn nan_gradient_aborts() {
        let mut opt = Optimizer::adam(0.01, LrSchedule::Constant);
        let mut p = vec![0.3];
        let err = opt.step(&mut [&mut p], &[&[f64::NAN]]);
        assert!(matches!(err, Err(Error::Numeric(_))));
        assert_eq!(p, vec![0.3]);
        assert_eq!(opt.step_count(), 0);
    }

    #[test]
    fn adam_moves_against_gradient() {
        let mut opt = Optimizer::adam(0.01, LrSchedule::Linear { total_steps: 10 });
        let mut p = vec![0.0, 0.0];
        opt.step(&mut [&mut p], &[&[1.0, -3.0]]).unwrap();
        assert!(p[0] < 0.0 && p[1] > 0.0);
    }

    #[test]
    fn clipping() {
        let mut a = vec![3.0];
        let mut b = vec![4.0];
        let n = clip_grad_norm(&mut [&mut a, &mut b], 0.5);
        assert_eq!(n, 5.0);
        assert!((a[0] - 0.3).abs() < 1e-15 && (b[0] - 0.4).abs() < 1e-15);
    }
}
