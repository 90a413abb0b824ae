//! N1 predictors: the training-mean baseline, ridge least squares, and a
//! three-hidden-layer MLP. Every model maps an [`AnthroVector`] to Hz.

pub mod linear;
pub mod mlp;

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::anthro::{AnthroVector, FeatureVector, Normalizer};
use crate::error::{Error, Result};
use crate::io::write_atomic;

pub use mlp::{gradient_check, Mlp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Naive,
    Linear,
    Mlp,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Naive => "naive",
            ModelKind::Linear => "linear",
            ModelKind::Mlp => "mlp",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative given the pre-activation `z` and output `a`.
    #[inline]
    pub fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub hidden_units: usize,
    pub hidden_layers: usize,
    pub activation: Activation,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub ridge: f64,
    pub seed: u64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            kind: ModelKind::Mlp,
            hidden_units: 40,
            hidden_layers: 3,
            activation: Activation::Relu,
            learning_rate: 1e-3,
            batch_size: 32,
            max_epochs: 2000,
            patience: 100,
            ridge: 0.0,
            seed: 0,
        }
    }
}

impl ModelSpec {
    pub fn naive() -> Self {
        Self {
            kind: ModelKind::Naive,
            ..Default::default()
        }
    }

    pub fn linear() -> Self {
        Self {
            kind: ModelKind::Linear,
            ..Default::default()
        }
    }

    pub fn mlp(hidden_units: usize) -> Self {
        Self {
            hidden_units,
            ..Default::default()
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == ModelKind::Mlp {
            if self.hidden_layers != 3 {
                return Err(Error::InvalidInput(format!(
                    "mlp needs 3 hidden layers, got {}",
                    self.hidden_layers
                )));
            }
            if self.hidden_units == 0 || self.batch_size == 0 {
                return Err(Error::InvalidInput(
                    "hidden_units and batch_size must be positive".into(),
                ));
            }
            if !(self.learning_rate > 0.0) {
                return Err(Error::InvalidInput("learning_rate must be > 0".into()));
            }
        }
        if !(self.ridge >= 0.0) {
            return Err(Error::InvalidInput("ridge must be >= 0".into()));
        }
        Ok(())
    }

    /// Whether the topology is one of the two used for the reference results.
    pub fn is_replication(&self) -> bool {
        self.kind != ModelKind::Mlp
            || (self.hidden_layers == 3 && matches!(self.hidden_units, 20 | 40))
    }

    /// Short label such as `mlp(3x40,relu)`.
    pub fn summary(&self) -> String {
        match self.kind {
            ModelKind::Naive => "naive".into(),
            ModelKind::Linear if self.ridge > 0.0 => format!("linear(ridge={})", self.ridge),
            ModelKind::Linear => "linear".into(),
            ModelKind::Mlp => format!(
                "mlp({}x{},{})",
                self.hidden_layers,
                self.hidden_units,
                match self.activation {
                    Activation::Relu => "relu",
                    Activation::Tanh => "tanh",
                }
            ),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_rms_hz: f64,
    pub val_rms_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Parameters {
    Naive { mean_hz: f64 },
    Linear { weights: FeatureVector, bias_hz: f64 },
    /// Network output is in kHz.
    Mlp(Mlp),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub spec: ModelSpec,
    pub parameters: Parameters,
    pub normalizer: Option<Normalizer>,
    #[serde(default)]
    pub training_log: Vec<EpochLog>,
    /// Epoch whose parameters were kept (0 = initialization).
    #[serde(default)]
    pub best_epoch: usize,
}

impl TrainedModel {
    /// Predicted N1 in Hz. Values are reported as computed, never clamped.
    pub fn predict(&self, v: &AnthroVector) -> f64 {
        let x = || {
            self.normalizer
                .as_ref()
                .expect("linear and mlp models carry a normalizer")
                .apply(v)
        };
        match &self.parameters {
            Parameters::Naive { mean_hz } => *mean_hz,
            Parameters::Linear { weights, bias_hz } => {
                bias_hz + weights.iter().zip(x()).map(|(w, a)| w * a).sum::<f64>()
            }
            Parameters::Mlp(net) => net.predict(&x()) * 1000.0,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let snap = Snapshot {
            format: SNAPSHOT_FORMAT.into(),
            version: SNAPSHOT_VERSION,
            model: self.clone(),
        };
        let mut json = serde_json::to_string_pretty(&snap).expect("model serializes");
        json.push('\n');
        write_atomic(path, json.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let snap: Snapshot =
            serde_json::from_str(&text).map_err(|e| Error::manifest(path, e.to_string()))?;
        if snap.format != SNAPSHOT_FORMAT || snap.version != SNAPSHOT_VERSION {
            return Err(Error::manifest(
                path,
                format!("unsupported snapshot {} v{}", snap.format, snap.version),
            ));
        }
        Ok(snap.model)
    }
}

pub const SNAPSHOT_FORMAT: &str = "pinnanotch-model";
pub const SNAPSHOT_VERSION: u32 = 1;

/// Model snapshot file: JSON `{format, version, model}`.
#[derive(Debug, Serialize, Deserialize)]
struct Snapshot {
    format: String,
    version: u32,
    model: TrainedModel,
}

pub fn predict(m: &TrainedModel, v: &AnthroVector) -> f64 {
    m.predict(v)
}

/// Constant predictor at the mean training label.
pub fn train_naive(labels_hz: &[f64]) -> Result<TrainedModel> {
    if labels_hz.is_empty() {
        return Err(Error::DatasetTooSmall("naive model needs at least one label".into()));
    }
    Ok(TrainedModel {
        spec: ModelSpec::naive(),
        parameters: Parameters::Naive {
            mean_hz: labels_hz.iter().sum::<f64>() / labels_hz.len() as f64,
        },
        normalizer: None,
        training_log: Vec::new(),
        best_epoch: 0,
    })
}

/// Ridge regression on z-scored features, fitted in closed form.
pub fn train_linear(train: &[(AnthroVector, f64)], ridge: f64) -> Result<TrainedModel> {
    let vectors: Vec<AnthroVector> = train.iter().map(|(v, _)| *v).collect();
    let normalizer = Normalizer::fit(&vectors)?;
    let x: Vec<FeatureVector> = vectors.iter().map(|v| normalizer.apply(v)).collect();
    let y: Vec<f64> = train.iter().map(|(_, t)| *t).collect();
    let (weights, bias_hz) = linear::solve_ridge(&x, &y, ridge)?;
    Ok(TrainedModel {
        spec: ModelSpec {
            ridge,
            ..ModelSpec::linear()
        },
        parameters: Parameters::Linear { weights, bias_hz },
        normalizer: Some(normalizer),
        training_log: Vec::new(),
        best_epoch: 0,
    })
}

/// MLP with the normalizer fitted on `train` only; targets trained in kHz.
pub fn train_mlp(
    train: &[(AnthroVector, f64)],
    val: &[(AnthroVector, f64)],
    spec: &ModelSpec,
) -> Result<TrainedModel> {
    spec.validate()?;
    if spec.kind != ModelKind::Mlp {
        return Err(Error::InvalidInput(format!("train_mlp given a {} spec", spec.kind)));
    }
    if val.is_empty() {
        return Err(Error::EmptyValidation);
    }
    let vectors: Vec<AnthroVector> = train.iter().map(|(v, _)| *v).collect();
    let normalizer = Normalizer::fit(&vectors)?;
    let prep = |set: &[(AnthroVector, f64)]| -> (Vec<FeatureVector>, Vec<f64>) {
        set.iter()
            .map(|(v, t)| (normalizer.apply(v), t / 1000.0))
            .unzip()
    };
    let (xt, yt) = prep(train);
    let (xv, yv) = prep(val);
    let (net, training_log, best_epoch) = mlp::fit(&xt, &yt, &xv, &yv, spec)?;
    Ok(TrainedModel {
        spec: *spec,
        parameters: Parameters::Mlp(net),
        normalizer: Some(normalizer),
        training_log,
        best_epoch,
    })
}

/// Dispatches on `spec.kind`. Naive and linear ignore `val`.
pub fn train(
    spec: &ModelSpec,
    train_set: &[(AnthroVector, f64)],
    val: &[(AnthroVector, f64)],
) -> Result<TrainedModel> {
    spec.validate()?;
    match spec.kind {
        ModelKind::Naive => {
            let labels: Vec<f64> = train_set.iter().map(|(_, t)| *t).collect();
            train_naive(&labels).map(|m| TrainedModel { spec: *spec, ..m })
        }
        ModelKind::Linear => {
            train_linear(train_set, spec.ridge).map(|m| TrainedModel { spec: *spec, ..m })
        }
        ModelKind::Mlp => train_mlp(train_set, val, spec),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_set(n: usize, seed: u64) -> Vec<(AnthroVector, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let v = AnthroVector::from_array(std::array::from_fn(|_| rng.gen_range(0.5..5.0)));
                (v, rng.gen_range(6000.0..11000.0))
            })
            .collect()
    }

    #[test]
    fn naive_predicts_mean() {
        let m = train_naive(&[7000.0, 8000.0, 9000.0]).unwrap();
        for (v, _) in random_set(5, 1) {
            assert_eq!(m.predict(&v), 8000.0);
        }
        assert!(train_naive(&[]).is_err());
    }

    #[test]
    fn naive_rms_on_two_labels() {
        let m = train_naive(&[7000.0, 8000.0, 9000.0]).unwrap();
        let v = random_set(1, 2)[0].0;
        let errs = [m.predict(&v) - 7000.0, m.predict(&v) - 9000.0];
        let rms = (errs.iter().map(|e| e * e).sum::<f64>() / 2.0).sqrt();
        assert_eq!(rms, 1000.0);
    }

    #[test]
    fn naive_constant_beats_any_other_constant() {
        let set = random_set(50, 3);
        let labels: Vec<f64> = set.iter().map(|(_, t)| *t).collect();
        let m = train_naive(&labels).unwrap();
        let rms = |c: f64| (labels.iter().map(|t| (t - c).powi(2)).sum::<f64>() / 50.0).sqrt();
        let base = rms(m.predict(&set[0].0));
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            assert!(rms(rng.gen_range(5000.0..12000.0)) >= base);
        }
    }

    #[test]
    fn linear_prediction_is_hand_computable() {
        let set = random_set(30, 5);
        let m = train_linear(&set, 0.0).unwrap();
        let Parameters::Linear { weights, bias_hz } = m.parameters else {
            panic!()
        };
        let n = m.normalizer.unwrap();
        let v = set[3].0.to_array();
        let mut manual = bias_hz;
        for i in 0..9 {
            manual += weights[i] * (v[i] - n.mean[i]) / n.std[i];
        }
        assert!((m.predict(&set[3].0) - manual).abs() < 1e-9);
    }

    fn pinv_oracle(x: &[FeatureVector], y: &[f64]) -> Vec<f64> {
        let a = nalgebra::DMatrix::from_fn(x.len(), 10, |r, c| if c < 9 { x[r][c] } else { 1.0 });
        let b = nalgebra::DVector::from_column_slice(y);
        let pinv = a.pseudo_inverse(1e-12).unwrap();
        (pinv * b).iter().copied().collect()
    }

    #[test]
    fn linear_solver_matches_pseudo_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let x: Vec<FeatureVector> = (0..30)
                .map(|_| std::array::from_fn(|_| rng.gen_range(-2.0..2.0)))
                .collect();
            let y: Vec<f64> = (0..30).map(|_| rng.gen_range(5000.0..11000.0)).collect();
            let (w, b) = linear::solve_ridge(&x, &y, 0.0).unwrap();
            let oracle = pinv_oracle(&x, &y);
            let got: Vec<f64> = w.iter().copied().chain([b]).collect();
            let scale = oracle.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for (g, o) in got.iter().zip(&oracle) {
                assert!((g - o).abs() <= 1e-6 * scale, "{g} vs {o}");
            }
        }
    }

    #[test]
    fn linear_generator_fitted_exactly() {
        let spec = crate::synth::GenerativeSpec {
            n_examples: 200,
            mapping: crate::synth::MappingKind::Linear,
            noise_std_hz: 0.0,
            ..Default::default()
        };
        let set = crate::synth::synth_dataset(&spec).unwrap().examples().unwrap();
        let m = train_linear(&set, 0.0).unwrap();
        let rms = (set.iter().map(|(v, t)| (m.predict(v) - t).powi(2)).sum::<f64>()
            / set.len() as f64)
            .sqrt();
        let mean = set.iter().map(|(_, t)| t).sum::<f64>() / set.len() as f64;
        assert!(rms < 1e-6 * mean, "{rms}");
    }

    #[test]
    fn mlp_beats_linear_on_nonlinear_generator() {
        let set = crate::synth::synth_dataset(&Default::default())
            .unwrap()
            .examples()
            .unwrap();
        let (train, val) = (&set[..540], &set[540..720]);
        let rms = |m: &TrainedModel| {
            (val.iter().map(|(v, t)| (m.predict(v) - t).powi(2)).sum::<f64>() / val.len() as f64)
                .sqrt()
        };
        let lin = rms(&train_linear(train, 0.0).unwrap());
        let net = rms(&train_mlp(train, val, &ModelSpec::default()).unwrap());
        assert!(net < 0.6 * lin, "mlp {net} vs linear {lin}");
    }

    #[test]
    fn dead_mlp_predicts_output_bias_in_hz() {
        let spec = ModelSpec::mlp(20);
        let mut net = Mlp::zeros(Mlp::architecture(&spec), Activation::Relu);
        *net.output_bias_mut() = 8.5;
        let set = random_set(10, 6);
        let vectors: Vec<AnthroVector> = set.iter().map(|(v, _)| *v).collect();
        let m = TrainedModel {
            spec,
            parameters: Parameters::Mlp(net),
            normalizer: Some(Normalizer::fit(&vectors).unwrap()),
            training_log: Vec::new(),
            best_epoch: 0,
        };
        assert_eq!(m.predict(&set[0].0), 8500.0);
    }

    #[test]
    fn replication_flag() {
        assert!(ModelSpec::mlp(40).is_replication());
        assert!(ModelSpec::mlp(20).is_replication());
        assert!(!ModelSpec::mlp(64).is_replication());
        let bad = ModelSpec {
            hidden_layers: 2,
            ..ModelSpec::mlp(40)
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn snapshot_round_trip_reproduces_predictions() {
        let set = random_set(60, 7);
        let spec = ModelSpec {
            max_epochs: 20,
            ..ModelSpec::mlp(20)
        };
        let m = train_mlp(&set[..40], &set[40..], &spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        m.save(&path).unwrap();
        let back = TrainedModel::load(&path).unwrap();
        assert_eq!(back, m);
        for (v, _) in &set {
            assert_eq!(back.predict(v).to_bits(), m.predict(v).to_bits());
        }
    }

    #[test]
    fn early_stopping_keeps_best_validation_epoch() {
        let set = random_set(80, 8);
        let spec = ModelSpec {
            max_epochs: 300,
            patience: 10,
            ..ModelSpec::mlp(20)
        };
        let m = train_mlp(&set[..60], &set[60..], &spec).unwrap();
        let best = m
            .training_log
            .iter()
            .min_by(|a, b| a.val_rms_hz.total_cmp(&b.val_rms_hz))
            .unwrap();
        assert_eq!(best.epoch, m.best_epoch);
        let val_rms = (set[60..]
            .iter()
            .map(|(v, t)| (m.predict(v) - t).powi(2))
            .sum::<f64>()
            / 20.0)
            .sqrt();
        assert!((val_rms - best.val_rms_hz).abs() < 1e-6);
        assert!(m.training_log.len() < 301);
    }
}
