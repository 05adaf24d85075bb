use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::layers::{DenseLayer, LstmCell, LstmStepTrace};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Layer {
    Dense(DenseLayer),
    Lstm(LstmCell),
}

impl Layer {
    pub fn input_size(&self) -> usize {
        match self {
            Layer::Dense(d) => d.input_size(),
            Layer::Lstm(l) => l.input_size(),
        }
    }

    pub fn output_size(&self) -> usize {
        match self {
            Layer::Dense(d) => d.output_size(),
            Layer::Lstm(l) => l.hidden_size(),
        }
    }

    pub fn is_dense(&self) -> bool {
        matches!(self, Layer::Dense(_))
    }

    fn validate(&self) -> Result<()> {
        match self {
            Layer::Dense(d) => d.validate(),
            Layer::Lstm(l) => l.validate(),
        }
    }

    pub(crate) fn param_slices(&self) -> Vec<&[f64]> {
        match self {
            Layer::Dense(d) => d.param_slices(),
            Layer::Lstm(l) => l.param_slices(),
        }
    }

    pub(crate) fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            Layer::Dense(d) => d.param_slices_mut(),
            Layer::Lstm(l) => l.param_slices_mut(),
        }
    }

    fn zero_grads(&self) -> Vec<Vec<f64>> {
        self.param_slices().iter().map(|s| vec![0.0; s.len()]).collect()
    }

    fn forward_seq(&self, seq: &[Vec<f64>]) -> LayerTrace {
        match self {
            Layer::Dense(d) => {
                let (pre, out) = seq.iter().map(|x| d.forward_step(x)).unzip();
                LayerTrace::Dense { inputs: seq.to_vec(), pre, out }
            }
            Layer::Lstm(l) => {
                let n = l.hidden_size();
                let mut h = vec![0.0; n];
                let mut c = vec![0.0; n];
                let mut steps = Vec::with_capacity(seq.len());
                for x in seq {
                    let s = l.forward_step(x, &h, &c);
                    h.clone_from(&s.h);
                    c.clone_from(&s.c);
                    steps.push(s);
                }
                LayerTrace::Lstm { steps }
            }
        }
    }
}

/// Per-layer record of a forward pass over a sequence.
#[derive(Clone, Debug)]
pub(crate) enum LayerTrace {
    Dense { inputs: Vec<Vec<f64>>, pre: Vec<Vec<f64>>, out: Vec<Vec<f64>> },
    Lstm { steps: Vec<LstmStepTrace> },
}

impl LayerTrace {
    fn outputs(&self) -> Vec<Vec<f64>> {
        match self {
            LayerTrace::Dense { out, .. } => out.clone(),
            LayerTrace::Lstm { steps } => steps.iter().map(|s| s.h.clone()).collect(),
        }
    }

    fn last_output(&self) -> &[f64] {
        match self {
            LayerTrace::Dense { out, .. } => out.last().expect("non-empty sequence"),
            LayerTrace::Lstm { steps } => &steps.last().expect("non-empty sequence").h,
        }
    }
}

/// Forward record for a stack, starting at layer `start`.
#[derive(Clone, Debug)]
pub struct Trace {
    start: usize,
    layers: Vec<LayerTrace>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.layers.last().expect("trace has layers").last_output()
    }
}

/// Gradients for a stack; `None` for layers that are frozen.
#[derive(Clone, Debug, PartialEq)]
pub struct StackGrads {
    pub layers: Vec<Option<Vec<Vec<f64>>>>,
}

impl StackGrads {
    pub fn zeros_like(stack: &LayerStack) -> Self {
        let layers = stack
            .layers
            .iter()
            .zip(&stack.trainable)
            .map(|(l, &t)| t.then(|| l.zero_grads()))
            .collect();
        Self { layers }
    }

    pub fn scale(&mut self, k: f64) {
        self.for_each_mut(|v| *v *= k);
    }

    pub fn add_assign(&mut self, other: &StackGrads) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            if let (Some(a), Some(b)) = (a, b) {
                for (sa, sb) in a.iter_mut().zip(b) {
                    for (x, y) in sa.iter_mut().zip(sb) {
                        *x += y;
                    }
                }
            }
        }
    }

    pub fn for_each_mut(&mut self, mut f: impl FnMut(&mut f64)) {
        for l in self.layers.iter_mut().flatten() {
            for s in l.iter_mut() {
                s.iter_mut().for_each(&mut f);
            }
        }
    }

    pub fn squared_norm(&self) -> f64 {
        self.slices().iter().flat_map(|s| s.iter()).map(|v| v * v).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }

    /// Flattened slices of every non-frozen layer, in layer order.
    pub fn slices(&self) -> Vec<&[f64]> {
        self.layers.iter().flatten().flat_map(|l| l.iter().map(Vec::as_slice)).collect()
    }
}

/// Ordered layers with a per-layer trainable flag.
///
/// Dense layers are applied independently to every element of an input
/// sequence; LSTM layers thread their hidden and cell state across it,
/// starting from zero. The stack output is the final step's output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerStack {
    layers: Vec<Layer>,
    trainable: Vec<bool>,
}

impl LayerStack {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        let trainable = vec![true; layers.len()];
        let stack = Self { layers, trainable };
        stack.validate()?;
        Ok(stack)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::shape("layer stack needs at least one layer"));
        }
        if self.trainable.len() != self.layers.len() {
            return Err(Error::shape(format!(
                "trainable mask has {} entries for {} layers",
                self.trainable.len(),
                self.layers.len()
            )));
        }
        for l in &self.layers {
            l.validate()?;
        }
        for (k, w) in self.layers.windows(2).enumerate() {
            if w[0].output_size() != w[1].input_size() {
                return Err(Error::shape(format!(
                    "layer {k} outputs {} values but layer {} expects {}",
                    w[0].output_size(),
                    k + 1,
                    w[1].input_size()
                )));
            }
        }
        Ok(())
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn trainable(&self) -> &[bool] {
        &self.trainable
    }

    pub fn set_trainable(&mut self, layer: usize, trainable: bool) {
        self.trainable[layer] = trainable;
    }

    pub fn input_size(&self) -> usize {
        self.layers[0].input_size()
    }

    pub fn output_size(&self) -> usize {
        self.layers.last().map(Layer::output_size).unwrap_or(0)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().flat_map(|l| l.param_slices()).map(<[f64]>::len).sum()
    }

    /// Number of leading layers that are frozen.
    pub fn frozen_prefix_len(&self) -> usize {
        self.trainable.iter().take_while(|t| !**t).count()
    }

    fn check_sequence(&self, seq: &[Vec<f64>], start: usize) -> Result<()> {
        if seq.is_empty() {
            return Err(Error::input("input sequence is empty"));
        }
        let want = self.layers[start].input_size();
        if let Some(x) = seq.iter().find(|x| x.len() != want) {
            return Err(Error::shape(format!("sequence element of length {} where {want} expected", x.len())));
        }
        Ok(())
    }

    /// Output of the final step.
    pub fn forward(&self, seq: &[Vec<f64>]) -> Result<Vec<f64>> {
        Ok(self.forward_trace(seq)?.output().to_vec())
    }

    pub fn forward_trace(&self, seq: &[Vec<f64>]) -> Result<Trace> {
        self.forward_trace_from(0, seq)
    }

    /// Runs layers `start..` on a sequence that already holds the outputs of
    /// layers `..start`.
    pub fn forward_trace_from(&self, start: usize, seq: &[Vec<f64>]) -> Result<Trace> {
        if start >= self.layers.len() {
            return Err(Error::shape(format!("start layer {start} out of range")));
        }
        self.check_sequence(seq, start)?;
        let mut layers = Vec::with_capacity(self.layers.len() - start);
        let mut current = seq.to_vec();
        for layer in &self.layers[start..] {
            let tr = layer.forward_seq(&current);
            current = tr.outputs();
            layers.push(tr);
        }
        Ok(Trace { start, layers })
    }

    /// Outputs of layers `..end` for every element of the sequence.
    pub fn prefix_outputs(&self, end: usize, seq: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        self.check_sequence(seq, 0)?;
        let mut current = seq.to_vec();
        for layer in &self.layers[..end] {
            current = layer.forward_seq(&current).outputs();
        }
        Ok(current)
    }

    /// Accumulates into `grads` the gradient of a loss whose derivative with
    /// respect to the final-step output is `d_out`.
    pub fn backward_trace(&self, trace: &Trace, d_out: &[f64], grads: &mut StackGrads) -> Result<()> {
        if d_out.len() != self.output_size() {
            return Err(Error::shape(format!(
                "output gradient of length {} for output size {}",
                d_out.len(),
                self.output_size()
            )));
        }
        let steps = match &trace.layers[0] {
            LayerTrace::Dense { inputs, .. } => inputs.len(),
            LayerTrace::Lstm { steps } => steps.len(),
        };
        let mut d_seq: Vec<Vec<f64>> = vec![Vec::new(); steps];
        for (t, d) in d_seq.iter_mut().enumerate() {
            *d = if t + 1 == steps { d_out.to_vec() } else { vec![0.0; d_out.len()] };
        }

        let first_trainable = self.trainable.iter().position(|&t| t);
        for (offset, tr) in trace.layers.iter().enumerate().rev() {
            let idx = trace.start + offset;
            // Gradients only need to flow further down if something below trains.
            let want_dx = offset > 0 && first_trainable.is_some_and(|f| f < idx);
            let g = grads.layers[idx].as_deref_mut();
            let layer = &self.layers[idx];
            match (layer, tr) {
                (Layer::Dense(d), LayerTrace::Dense { inputs, pre, out }) => {
                    let mut g = g;
                    let mut next = Vec::with_capacity(if want_dx { steps } else { 0 });
                    for t in 0..steps {
                        if d_seq[t].iter().all(|v| *v == 0.0) {
                            if want_dx {
                                next.push(vec![0.0; d.input_size()]);
                            }
                            continue;
                        }
                        let dx = d.backward_step(&inputs[t], &pre[t], &out[t], &d_seq[t], g.as_deref_mut(), want_dx);
                        if let Some(dx) = dx {
                            next.push(dx);
                        }
                    }
                    if !want_dx {
                        break;
                    }
                    d_seq = next;
                }
                (Layer::Lstm(l), LayerTrace::Lstm { steps: st }) => match l.backward_sequence(st, &d_seq, g, want_dx) {
                    Some(dx) => d_seq = dx,
                    None => break,
                },
                _ => return Err(Error::shape("trace does not match stack")),
            }
        }
        Ok(())
    }

    /// Mutable parameter slices of trainable layers, aligned with `StackGrads::slices`.
    pub fn trainable_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .zip(&self.trainable)
            .filter(|(_, t)| **t)
            .flat_map(|(l, _)| l.param_slices_mut())
            .collect()
    }

    pub fn all_finite(&self) -> bool {
        self.layers.iter().flat_map(|l| l.param_slices()).all(|s| s.iter().all(|v| v.is_finite()))
    }

    /// SHA-256 over the bit patterns of the selected layers' parameters.
    pub fn checksum_where(&self, mut include: impl FnMut(usize, &Layer) -> bool) -> String {
        let mut h = Sha256::new();
        for (k, l) in self.layers.iter().enumerate() {
            if !include(k, l) {
                continue;
            }
            h.update((k as u64).to_le_bytes());
            for s in l.param_slices() {
                for v in s {
                    h.update(v.to_bits().to_le_bytes());
                }
            }
        }
        hex::encode(h.finalize())
    }

    pub fn checksum(&self) -> String {
        self.checksum_where(|_, _| true)
    }
}

/// Final-step output of `stack` over `seq`.
pub fn stack_forward(seq: &[Vec<f64>], stack: &LayerStack) -> Result<Vec<f64>> {
    stack.forward(seq)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::layers::Activation;
    use crate::nn::tensor::Tensor2;

    fn identity_dense() -> Layer {
        Layer::Dense(DenseLayer::new(Tensor2::identity(1), vec![0.0], Activation::Identity).unwrap())
    }

    #[test]
    fn single_identity_layer() {
        let s = LayerStack::new(vec![identity_dense()]).unwrap();
        assert_eq!(stack_forward(&[vec![5.0]], &s).unwrap(), vec![5.0]);
    }

    #[test]
    fn zero_lstm_outputs_zero() {
        let s = LayerStack::new(vec![Layer::Lstm(LstmCell::zeros(1, 1))]).unwrap();
        let seq: Vec<Vec<f64>> = (0..6).map(|k| vec![k as f64 - 2.5]).collect();
        assert_eq!(stack_forward(&seq, &s).unwrap(), vec![0.0]);
    }

    #[test]
    fn dense_then_zero_lstm() {
        let dense = DenseLayer::new(Tensor2::identity(1), vec![0.0], Activation::Relu).unwrap();
        let s = LayerStack::new(vec![Layer::Dense(dense), Layer::Lstm(LstmCell::zeros(1, 1))]).unwrap();
        let seq = vec![vec![3.0], vec![-1.0], vec![0.7]];
        assert_eq!(stack_forward(&seq, &s).unwrap(), vec![0.0]);
    }

    #[test]
    fn empty_sequence_is_input_error() {
        let s = LayerStack::new(vec![identity_dense()]).unwrap();
        assert!(matches!(stack_forward(&[], &s), Err(Error::Input(_))));
    }

    #[test]
    fn incompatible_layers_rejected() {
        let a = Layer::Dense(DenseLayer::new(Tensor2::zeros(3, 2), vec![0.0; 3], Activation::Relu).unwrap());
        let b = Layer::Lstm(LstmCell::zeros(2, 4));
        assert!(LayerStack::new(vec![a, b]).is_err());
        assert!(LayerStack::new(vec![]).is_err());
    }

    #[test]
    fn checksum_tracks_parameters() {
        let mut s = LayerStack::new(vec![identity_dense()]).unwrap();
        let before = s.checksum();
        if let Layer::Dense(d) = &mut s.layers_mut()[0] {
            d.bias[0] = 1e-300;
        }
        assert_ne!(before, s.checksum());
    }
}
