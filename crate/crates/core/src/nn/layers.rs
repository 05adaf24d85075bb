//! Dense and LSTM layers with forward passes that can record the
//! intermediates needed for backpropagation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::{outer_acc, Tensor2};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => sigmoid(z),
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `y`.
    #[inline]
    fn derivative(self, z: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Fully connected layer `y = act(W x + b)` with `W` stored out x in.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub weights: Tensor2,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn new(weights: Tensor2, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        let layer = Self { weights, bias, activation };
        layer.validate()?;
        Ok(layer)
    }

    /// Uniform weights with zero bias: He bounds for relu, Glorot otherwise.
    pub fn init<R: Rng + ?Sized>(input: usize, output: usize, activation: Activation, rng: &mut R) -> Self {
        let limit = match activation {
            Activation::Relu => (6.0 / input as f64).sqrt(),
            _ => (6.0 / (input + output) as f64).sqrt(),
        };
        let weights = Tensor2::from_fn(output, input, |_, _| rng.random_range(-limit..limit));
        Self { weights, bias: vec![0.0; output], activation }
    }

    pub fn input_size(&self) -> usize {
        self.weights.cols()
    }

    pub fn output_size(&self) -> usize {
        self.weights.rows()
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if !self.weights.is_consistent() || self.bias.len() != self.weights.rows() {
            return Err(Error::shape(format!(
                "dense layer weights {}x{} with bias of length {}",
                self.weights.rows(),
                self.weights.cols(),
                self.bias.len()
            )));
        }
        Ok(())
    }

    pub(crate) fn param_slices(&self) -> Vec<&[f64]> {
        vec![self.weights.data(), &self.bias]
    }

    pub(crate) fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.weights.data_mut(), &mut self.bias]
    }

    fn pre_activation(&self, x: &[f64]) -> Vec<f64> {
        let mut z = self.bias.clone();
        self.weights.matvec_acc(x, &mut z);
        z
    }

    /// Forward for one input; returns `(pre_activation, output)`.
    pub(crate) fn forward_step(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let z = self.pre_activation(x);
        let y = z.iter().map(|&v| self.activation.apply(v)).collect();
        (z, y)
    }

    /// Accumulates parameter gradients for one step and returns `dL/dx` when asked.
    pub(crate) fn backward_step(
        &self,
        x: &[f64],
        z: &[f64],
        y: &[f64],
        dy: &[f64],
        grads: Option<&mut [Vec<f64>]>,
        want_dx: bool,
    ) -> Option<Vec<f64>> {
        let dz: Vec<f64> = dy
            .iter()
            .zip(z.iter().zip(y))
            .map(|(&d, (&zi, &yi))| d * self.activation.derivative(zi, yi))
            .collect();
        if let Some(g) = grads {
            outer_acc(&mut g[0], &dz, x);
            for (gb, d) in g[1].iter_mut().zip(&dz) {
                *gb += d;
            }
        }
        want_dx.then(|| {
            let mut dx = vec![0.0; self.input_size()];
            self.weights.transpose_matvec_acc(&dz, &mut dx);
            dx
        })
    }
}

/// `activation(W x + b)` for a single input vector.
pub fn dense_forward(x: &[f64], p: &DenseLayer) -> Result<Vec<f64>> {
    p.validate()?;
    if x.len() != p.input_size() {
        return Err(Error::shape(format!(
            "dense layer expects input of length {}, got {}",
            p.input_size(),
            x.len()
        )));
    }
    Ok(p.forward_step(x).1)
}

/// Input-side matrix, hidden-side matrix and bias of one LSTM gate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub w_x: Tensor2,
    pub w_h: Tensor2,
    pub b: Vec<f64>,
}

impl Gate {
    fn zeros(input: usize, hidden: usize) -> Self {
        Self { w_x: Tensor2::zeros(hidden, input), w_h: Tensor2::zeros(hidden, hidden), b: vec![0.0; hidden] }
    }

    fn init<R: Rng + ?Sized>(input: usize, hidden: usize, bias: f64, rng: &mut R) -> Self {
        let limit = 1.0 / (hidden as f64).sqrt();
        Self {
            w_x: Tensor2::from_fn(hidden, input, |_, _| rng.random_range(-limit..limit)),
            w_h: Tensor2::from_fn(hidden, hidden, |_, _| rng.random_range(-limit..limit)),
            b: vec![bias; hidden],
        }
    }

    #[inline]
    fn pre(&self, x: &[f64], h: &[f64]) -> Vec<f64> {
        let mut z = self.b.clone();
        self.w_x.matvec_acc(x, &mut z);
        self.w_h.matvec_acc(h, &mut z);
        z
    }
}

/// Parameters of one LSTM cell: input, forget, output and candidate gates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LstmCell {
    pub input: Gate,
    pub forget: Gate,
    pub output: Gate,
    pub candidate: Gate,
}

/// Everything the backward pass needs from one LSTM time step.
#[derive(Clone, Debug)]
pub(crate) struct LstmStepTrace {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub i: Vec<f64>,
    pub f: Vec<f64>,
    pub o: Vec<f64>,
    pub g: Vec<f64>,
    pub c: Vec<f64>,
    pub h: Vec<f64>,
}

impl LstmCell {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            input: Gate::zeros(input, hidden),
            forget: Gate::zeros(input, hidden),
            output: Gate::zeros(input, hidden),
            candidate: Gate::zeros(input, hidden),
        }
    }

    /// Uniform `±1/sqrt(hidden)` weights; forget-gate bias starts at 1.
    pub fn init<R: Rng + ?Sized>(input: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            input: Gate::init(input, hidden, 0.0, rng),
            forget: Gate::init(input, hidden, 1.0, rng),
            output: Gate::init(input, hidden, 0.0, rng),
            candidate: Gate::init(input, hidden, 0.0, rng),
        }
    }

    pub fn input_size(&self) -> usize {
        self.input.w_x.cols()
    }

    pub fn hidden_size(&self) -> usize {
        self.input.w_x.rows()
    }

    fn gates(&self) -> [&Gate; 4] {
        [&self.input, &self.forget, &self.output, &self.candidate]
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let (n, m) = (self.hidden_size(), self.input_size());
        for gate in self.gates() {
            let ok = gate.w_x.is_consistent()
                && gate.w_h.is_consistent()
                && gate.w_x.rows() == n
                && gate.w_x.cols() == m
                && gate.w_h.rows() == n
                && gate.w_h.cols() == n
                && gate.b.len() == n;
            if !ok {
                return Err(Error::shape(format!(
                    "lstm gate shapes inconsistent with hidden size {n} and input size {m}"
                )));
            }
        }
        Ok(())
    }

    pub(crate) fn param_slices(&self) -> Vec<&[f64]> {
        self.gates()
            .into_iter()
            .flat_map(|g| [g.w_x.data(), g.w_h.data(), g.b.as_slice()])
            .collect()
    }

    pub(crate) fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(12);
        for g in [&mut self.input, &mut self.forget, &mut self.output, &mut self.candidate] {
            out.push(g.w_x.data_mut());
            out.push(g.w_h.data_mut());
            out.push(g.b.as_mut_slice());
        }
        out
    }

    pub(crate) fn forward_step(&self, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> LstmStepTrace {
        let i: Vec<f64> = self.input.pre(x, h_prev).into_iter().map(sigmoid).collect();
        let f: Vec<f64> = self.forget.pre(x, h_prev).into_iter().map(sigmoid).collect();
        let o: Vec<f64> = self.output.pre(x, h_prev).into_iter().map(sigmoid).collect();
        let g: Vec<f64> = self.candidate.pre(x, h_prev).into_iter().map(f64::tanh).collect();
        let c: Vec<f64> = (0..g.len()).map(|k| g[k] * i[k] + c_prev[k] * f[k]).collect();
        let h: Vec<f64> = (0..c.len()).map(|k| c[k].tanh() * o[k]).collect();
        LstmStepTrace { x: x.to_vec(), h_prev: h_prev.to_vec(), c_prev: c_prev.to_vec(), i, f, o, g, c, h }
    }

    /// Backpropagation through time over a whole recorded sequence.
    ///
    /// `dh_ext[t]` is the gradient arriving at `h_t` from the layer above.
    /// Returns `dL/dx_t` for every step when `want_dx` is set.
    pub(crate) fn backward_sequence(
        &self,
        steps: &[LstmStepTrace],
        dh_ext: &[Vec<f64>],
        mut grads: Option<&mut [Vec<f64>]>,
        want_dx: bool,
    ) -> Option<Vec<Vec<f64>>> {
        let n = self.hidden_size();
        let m = self.input_size();
        let mut dh_next = vec![0.0; n];
        let mut dc_next = vec![0.0; n];
        let mut dxs = if want_dx { vec![Vec::new(); steps.len()] } else { Vec::new() };

        for (t, s) in steps.iter().enumerate().rev() {
            let mut dz = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
            let mut dc_prev = vec![0.0; n];
            for k in 0..n {
                let dh = dh_ext[t][k] + dh_next[k];
                let tc = s.c[k].tanh();
                let d_o = dh * tc;
                let dc = dc_next[k] + dh * s.o[k] * (1.0 - tc * tc);
                let d_i = dc * s.g[k];
                let d_g = dc * s.i[k];
                let d_f = dc * s.c_prev[k];
                dc_prev[k] = dc * s.f[k];
                dz[0][k] = d_i * s.i[k] * (1.0 - s.i[k]);
                dz[1][k] = d_f * s.f[k] * (1.0 - s.f[k]);
                dz[2][k] = d_o * s.o[k] * (1.0 - s.o[k]);
                dz[3][k] = d_g * (1.0 - s.g[k] * s.g[k]);
            }

            if let Some(g) = grads.as_deref_mut() {
                for (gi, d) in dz.iter().enumerate() {
                    outer_acc(&mut g[3 * gi], d, &s.x);
                    outer_acc(&mut g[3 * gi + 1], d, &s.h_prev);
                    for (gb, v) in g[3 * gi + 2].iter_mut().zip(d) {
                        *gb += v;
                    }
                }
            }

            let mut dh_prev = vec![0.0; n];
            for (gate, d) in self.gates().into_iter().zip(&dz) {
                gate.w_h.transpose_matvec_acc(d, &mut dh_prev);
            }
            if want_dx {
                let mut dx = vec![0.0; m];
                for (gate, d) in self.gates().into_iter().zip(&dz) {
                    gate.w_x.transpose_matvec_acc(d, &mut dx);
                }
                dxs[t] = dx;
            }
            dh_next = dh_prev;
            dc_next = dc_prev;
        }
        want_dx.then_some(dxs)
    }
}

/// One LSTM step; returns `(h_t, c_t)`.
pub fn lstm_cell_forward(x_t: &[f64], h_prev: &[f64], c_prev: &[f64], p: &LstmCell) -> Result<(Vec<f64>, Vec<f64>)> {
    p.validate()?;
    let n = p.hidden_size();
    if x_t.len() != p.input_size() || h_prev.len() != n || c_prev.len() != n {
        return Err(Error::shape(format!(
            "lstm expects x of length {}, h and c of length {n}; got {}, {}, {}",
            p.input_size(),
            x_t.len(),
            h_prev.len(),
            c_prev.len()
        )));
    }
    let s = p.forward_step(x_t, h_prev, c_prev);
    Ok((s.h, s.c))
}
