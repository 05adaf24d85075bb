//! Small neural-network engine: dense and LSTM layers, losses, full
//! backpropagation through time and an adaptive-moment optimizer.
//!
//! Everything runs in `f64`. Parameter containers are plain data and can be
//! shared read-only across threads.

mod gradcheck;
mod layers;
mod loss;
mod optim;
mod stack;
mod tensor;

use std::path::Path;

pub use gradcheck::{check_gradients, GradCheck, GRADCHECK_FLOOR};
pub use layers::{dense_forward, lstm_cell_forward, sigmoid, Activation, DenseLayer, Gate, LstmCell};
pub use loss::{bce_loss, mse_loss, Loss, BCE_EPS};
pub use optim::{clip_grad_norm, lr_schedule, LrSchedule, Optimizer, UpdateRule};
pub use stack::{stack_forward, Layer, LayerStack, StackGrads, Trace};
pub use tensor::Tensor2;

use crate::error::{Error, Result};

/// One training example: an input sequence and its target vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub seq: Vec<Vec<f64>>,
    pub target: Vec<f64>,
}

/// Mean loss over `batch` and its gradient for every trainable layer.
pub fn backward(stack: &LayerStack, batch: &[Sample], loss: Loss) -> Result<(f64, StackGrads)> {
    if batch.is_empty() {
        return Err(Error::input("empty batch"));
    }
    let mut grads = StackGrads::zeros_like(stack);
    let mut total = 0.0;
    for s in batch {
        let trace = stack.forward_trace(&s.seq)?;
        total += loss.value(trace.output(), &s.target)?;
        let d = loss.gradient(trace.output(), &s.target)?;
        stack.backward_trace(&trace, &d, &mut grads)?;
    }
    let n = batch.len() as f64;
    grads.scale(1.0 / n);
    Ok((total / n, grads))
}

/// Writes a stack as JSON. `f64` values round-trip bit-exactly.
pub fn save_stack(stack: &LayerStack, path: &Path) -> Result<()> {
    let f = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer(f, stack)?;
    Ok(())
}

pub fn load_stack(path: &Path) -> Result<LayerStack> {
    if !path.exists() {
        return Err(Error::NotFound(path.to_path_buf()));
    }
    let f = std::io::BufReader::new(std::fs::File::open(path)?);
    let stack: LayerStack = serde_json::from_reader(f)?;
    stack.validate().map_err(|e| Error::Schema(format!("checkpoint {}: {e}", path.display())))?;
    Ok(stack)
}
