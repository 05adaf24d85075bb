//! Heating-energy, valve-state and cooling-energy models over 6-step
//! sequences of scaled state vectors.

mod eval;
mod metrics;
mod train;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use eval::{energy_predictions, evaluate_models, valve_predictions, write_eval_reports, ModelEvalReport};
pub use metrics::{cvrmse, roc_auc};
pub use train::{train_model, warm_start_retrain, EarlyStopping, EpochLog, TrainConfig, TrainHistory, Verdict};

use crate::data::{Column, ScalerParams, Target, LOOKBACK};
use crate::error::{Error, Result};
use crate::nn::{Activation, DenseLayer, Layer, LayerStack, Loss, LstmCell};
use crate::util::rng_for;

pub const STATE_DIM: usize = 6;
pub const DENSE_UNITS: usize = 16;
pub const VALVE_THRESHOLD: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Heating,
    Valve,
    Cooling,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Heating, ModelKind::Valve, ModelKind::Cooling];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Heating => "heating",
            ModelKind::Valve => "valve",
            ModelKind::Cooling => "cooling",
        }
    }

    /// `(dense layers, LSTM layers, LSTM units)`.
    pub fn architecture(self) -> (usize, usize, usize) {
        match self {
            ModelKind::Heating => (6, 2, 4),
            ModelKind::Valve => (4, 2, 8),
            ModelKind::Cooling => (6, 2, 8),
        }
    }

    pub fn target(self) -> Target {
        match self {
            ModelKind::Heating => Target::Heating,
            ModelKind::Valve => Target::Valve,
            ModelKind::Cooling => Target::Cooling,
        }
    }

    pub fn loss(self) -> Loss {
        match self {
            ModelKind::Valve => Loss::Bce,
            _ => Loss::Mse,
        }
    }

    fn head_activation(self) -> Activation {
        match self {
            ModelKind::Valve => Activation::Sigmoid,
            _ => Activation::Identity,
        }
    }

    fn energy_column(self) -> Option<Column> {
        match self {
            ModelKind::Heating => Some(Column::Hwe),
            ModelKind::Cooling => Some(Column::Cwe),
            ModelKind::Valve => None,
        }
    }
}

/// A model: feature dense layers, two LSTM layers and a one-unit head.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DynamicsModel {
    pub kind: ModelKind,
    pub stack: LayerStack,
}

impl DynamicsModel {
    pub fn new(kind: ModelKind, seed: u64) -> Self {
        let (n_dense, n_lstm, units) = kind.architecture();
        let mut rng = rng_for(seed, 0x6d6f_64 + kind as u64);
        let mut layers = Vec::new();
        let mut width = STATE_DIM;
        for _ in 0..n_dense {
            layers.push(Layer::Dense(DenseLayer::init(width, DENSE_UNITS, Activation::Relu, &mut rng)));
            width = DENSE_UNITS;
        }
        for _ in 0..n_lstm {
            layers.push(Layer::Lstm(LstmCell::init(width, units, &mut rng)));
            width = units;
        }
        layers.push(Layer::Dense(DenseLayer::init(width, 1, kind.head_activation(), &mut rng)));
        let stack = LayerStack::new(layers).expect("architecture is consistent");
        Self { kind, stack }
    }

    /// Wraps a stack after checking it has this kind's architecture.
    pub fn from_stack(kind: ModelKind, stack: LayerStack) -> Result<Self> {
        check_architecture(kind, &stack)?;
        Ok(Self { kind, stack })
    }

    pub fn ffn_len(&self) -> usize {
        self.kind.architecture().0
    }

    /// Marks the feature dense layers frozen and everything after trainable.
    pub fn freeze_ffn(&mut self) {
        let n = self.ffn_len();
        for k in 0..self.stack.layers().len() {
            self.stack.set_trainable(k, k >= n);
        }
    }

    pub fn unfreeze(&mut self) {
        for k in 0..self.stack.layers().len() {
            self.stack.set_trainable(k, true);
        }
    }

    /// Checksum of the feature dense layers.
    pub fn ffn_checksum(&self) -> String {
        let n = self.ffn_len();
        self.stack.checksum_where(|k, _| k < n)
    }

    /// Feature-layer output for one scaled state vector.
    pub fn features(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.stack.prefix_outputs(self.ffn_len(), &[x.to_vec()])?.remove(0))
    }

    /// Raw head output from precomputed per-step features.
    pub fn output_from_features(&self, feats: &[Vec<f64>]) -> Result<f64> {
        Ok(self.stack.forward_trace_from(self.ffn_len(), feats)?.output()[0])
    }

    /// Raw head output (scaled energy or valve probability).
    pub fn output(&self, seq: &[Vec<f64>]) -> Result<f64> {
        if seq.len() != LOOKBACK {
            return Err(Error::shape(format!("sequence of {} steps where {LOOKBACK} expected", seq.len())));
        }
        Ok(self.stack.forward(seq)?[0])
    }
}

fn check_architecture(kind: ModelKind, stack: &LayerStack) -> Result<()> {
    let (n_dense, n_lstm, units) = kind.architecture();
    let layers = stack.layers();
    let ok = layers.len() == n_dense + n_lstm + 1
        && layers[..n_dense].iter().all(|l| matches!(l, Layer::Dense(d) if d.output_size() == DENSE_UNITS))
        && layers[n_dense..n_dense + n_lstm].iter().all(|l| matches!(l, Layer::Lstm(c) if c.hidden_size() == units))
        && matches!(&layers[n_dense + n_lstm], Layer::Dense(d) if d.output_size() == 1 && d.activation == kind.head_activation())
        && stack.input_size() == STATE_DIM;
    if ok {
        Ok(())
    } else {
        Err(Error::Schema(format!("layer stack does not match the {} model architecture", kind.name())))
    }
}

/// Unscaled energy for an energy model's raw output; negative scaled
/// outputs clamp to zero first.
pub fn energy_from_output(kind: ModelKind, raw: f64, scaler: &ScalerParams) -> Result<f64> {
    let col = kind.energy_column().ok_or_else(|| Error::input("valve model does not predict energy"))?;
    Ok(scaler.unscale(col, raw.max(0.0)).max(0.0))
}

/// Energy (kBTU per interval) predicted for the interval after `seq`.
pub fn predict_energy(model: &DynamicsModel, seq: &[Vec<f64>], scaler: &ScalerParams) -> Result<f64> {
    energy_from_output(model.kind, model.output(seq)?, scaler)
}

/// `(on, probability)`; on when the probability reaches `threshold`.
pub fn predict_valve(model: &DynamicsModel, seq: &[Vec<f64>], threshold: f64) -> Result<(bool, f64)> {
    if model.kind != ModelKind::Valve {
        return Err(Error::input("not a valve model"));
    }
    let p = model.output(seq)?;
    Ok((p >= threshold, p))
}

/// The three models plus the scaler they were trained under.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSet {
    pub heating: DynamicsModel,
    pub valve: DynamicsModel,
    pub cooling: DynamicsModel,
    pub scaler: ScalerParams,
}

impl ModelSet {
    pub fn get(&self, kind: ModelKind) -> &DynamicsModel {
        match kind {
            ModelKind::Heating => &self.heating,
            ModelKind::Valve => &self.valve,
            ModelKind::Cooling => &self.cooling,
        }
    }

    pub fn get_mut(&mut self, kind: ModelKind) -> &mut DynamicsModel {
        match kind {
            ModelKind::Heating => &mut self.heating,
            ModelKind::Valve => &mut self.valve,
            ModelKind::Cooling => &mut self.cooling,
        }
    }
}

/// Serialized model with the metadata needed to use it later.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelCheckpoint {
    pub model: DynamicsModel,
    pub scaler: ScalerParams,
    /// Index of the training window the model was last fitted on.
    pub window: usize,
    pub seed: u64,
    pub config_hash: String,
}

impl ModelCheckpoint {
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
        let ck: ModelCheckpoint = serde_json::from_reader(f)?;
        ck.model.stack.validate().map_err(|e| Error::Schema(e.to_string()))?;
        check_architecture(ck.model.kind, &ck.model.stack)?;
        Ok(ck)
    }

    /// Loads and checks the checkpoint holds a model of `kind`.
    pub fn load_kind(path: &Path, kind: ModelKind) -> Result<Self> {
        let ck = Self::load(path)?;
        if ck.model.kind != kind {
            return Err(Error::Schema(format!(
                "{} holds a {} model, expected {}",
                path.display(),
                ck.model.kind.name(),
                kind.name()
            )));
        }
        Ok(ck)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Layer, LstmCell};

    fn zero_head(kind: ModelKind) -> DynamicsModel {
        let mut m = DynamicsModel::new(kind, 1);
        let (n_dense, n_lstm, units) = kind.architecture();
        let mut layers = m.stack.layers().to_vec();
        for l in &mut layers[n_dense..n_dense + n_lstm] {
            let input = match l {
                Layer::Lstm(c) => c.input_size(),
                _ => unreachable!(),
            };
            *l = Layer::Lstm(LstmCell::zeros(input, units));
        }
        if let Layer::Dense(d) = &mut layers[n_dense + n_lstm] {
            d.bias[0] = 0.0;
        }
        m.stack = LayerStack::new(layers).unwrap();
        m
    }

    fn scaler() -> ScalerParams {
        ScalerParams::new([0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 2.0, 3.0], [1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 12.0, 13.0]).unwrap()
    }

    #[test]
    fn architecture_audit() {
        for kind in ModelKind::ALL {
            let m = DynamicsModel::new(kind, 3);
            let (n_dense, n_lstm, units) = kind.architecture();
            let layers = m.stack.layers();
            assert_eq!(layers.len(), n_dense + n_lstm + 1);
            let dense = layers.iter().take(n_dense).filter(|l| matches!(l, Layer::Dense(d) if d.output_size() == 16));
            assert_eq!(dense.count(), n_dense);
            let lstm = layers.iter().filter(|l| matches!(l, Layer::Lstm(c) if c.hidden_size() == units));
            assert_eq!(lstm.count(), n_lstm);
        }
        assert_eq!(ModelKind::Heating.architecture(), (6, 2, 4));
        assert_eq!(ModelKind::Valve.architecture(), (4, 2, 8));
        assert_eq!(ModelKind::Cooling.architecture(), (6, 2, 8));
    }

    #[test]
    fn zero_head_predicts_column_min() {
        let seq = vec![vec![0.3; 6]; 6];
        let m = zero_head(ModelKind::Heating);
        assert_eq!(predict_energy(&m, &seq, &scaler()).unwrap(), 2.0);
        let v = zero_head(ModelKind::Valve);
        let (on, p) = predict_valve(&v, &seq, VALVE_THRESHOLD).unwrap();
        assert_eq!(p, 0.5);
        assert!(on);
    }

    #[test]
    fn negative_output_clamps() {
        assert_eq!(energy_from_output(ModelKind::Cooling, -0.05, &scaler()).unwrap(), 3.0);
    }

    #[test]
    fn wrong_length_is_shape_error() {
        let m = DynamicsModel::new(ModelKind::Cooling, 1);
        assert!(matches!(m.output(&vec![vec![0.0; 6]; 5]), Err(Error::Shape(_))));
    }

    #[test]
    fn features_match_full_forward() {
        let m = DynamicsModel::new(ModelKind::Cooling, 9);
        let seq: Vec<Vec<f64>> = (0..6).map(|t| (0..6).map(|k| (t * 6 + k) as f64 / 40.0).collect()).collect();
        let feats: Vec<Vec<f64>> = seq.iter().map(|x| m.features(x).unwrap()).collect();
        assert_eq!(m.output_from_features(&feats).unwrap(), m.output(&seq).unwrap());
    }

    #[test]
    fn checkpoint_roundtrip_and_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("h.json");
        let ck = ModelCheckpoint {
            model: DynamicsModel::new(ModelKind::Heating, 5),
            scaler: scaler(),
            window: 0,
            seed: 5,
            config_hash: "x".into(),
        };
        ck.save(&p).unwrap();
        assert_eq!(ModelCheckpoint::load(&p).unwrap(), ck);
        assert!(matches!(ModelCheckpoint::load_kind(&p, ModelKind::Valve), Err(Error::Schema(_))));
        let other = DynamicsModel::new(ModelKind::Cooling, 5);
        assert!(DynamicsModel::from_stack(ModelKind::Heating, other.stack).is_err());
    }
}
