use super::{backward, Loss, LayerStack, Sample};
use crate::error::Result;

/// Gradients smaller than this are compared in absolute terms.
pub const GRADCHECK_FLOOR: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheck {
    pub params: usize,
    /// Largest `|analytic - numeric| / max(|analytic|, |numeric|, GRADCHECK_FLOOR)`.
    pub max_rel_error: f64,
}

fn batch_loss(stack: &LayerStack, batch: &[Sample], loss: Loss) -> Result<f64> {
    let mut total = 0.0;
    for s in batch {
        total += loss.value(&stack.forward(&s.seq)?, &s.target)?;
    }
    Ok(total / batch.len() as f64)
}

/// Compares backpropagated gradients of every trainable parameter with
/// central differences of step `h`.
pub fn check_gradients(stack: &LayerStack, batch: &[Sample], loss: Loss, h: f64) -> Result<GradCheck> {
    let (_, grads) = backward(stack, batch, loss)?;
    let analytic: Vec<f64> = grads.slices().iter().flat_map(|s| s.iter().copied()).collect();
    let mut probe = stack.clone();
    let mut max_rel: f64 = 0.0;
    let mut k = 0;
    let n_slices = probe.trainable_slices_mut().len();
    for si in 0..n_slices {
        let len = probe.trainable_slices_mut()[si].len();
        for j in 0..len {
            let orig = probe.trainable_slices_mut()[si][j];
            probe.trainable_slices_mut()[si][j] = orig + h;
            let up = batch_loss(&probe, batch, loss)?;
            probe.trainable_slices_mut()[si][j] = orig - h;
            let down = batch_loss(&probe, batch, loss)?;
            probe.trainable_slices_mut()[si][j] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[k];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(GRADCHECK_FLOOR);
            max_rel = max_rel.max(rel);
            k += 1;
        }
    }
    Ok(GradCheck { params: k, max_rel_error: max_rel })
}
