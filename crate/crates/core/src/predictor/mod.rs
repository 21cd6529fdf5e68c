//! Learned power-demand predictor: features from a planned trajectory in,
//! mission-mean demand out.

pub mod dataset;
pub mod mlp;
pub mod train;

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;
pub use mlp::Mlp;

#[derive(Debug, Error)]
pub enum PredictorError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("bad architecture {0}")]
    Architecture(String),
    #[error("non-finite gradient at epoch {epoch}, batch {batch}")]
    NonFinite { epoch: usize, batch: usize },
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("invalid dataset: {0}")]
    Dataset(String),
    #[error("only {ok} of {requested} samples could be planned")]
    TooManyFailures { ok: usize, requested: usize },
    #[error("model file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Inputs to the predictor, all non-negative.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector<T> {
    /// Mean planned speed, m/s.
    pub velocity: T,
    /// Planned trajectory length, m.
    pub length_d: T,
    /// Mean curvature magnitude, 1/m.
    pub mean_abs_curvature: T,
}

impl<T: Real> FeatureVector<T> {
    pub fn to_array(self) -> [T; 3] {
        [self.velocity, self.length_d, self.mean_abs_curvature]
    }

    pub fn is_valid(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite() && *v >= T::zero())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row<T> {
    pub features: FeatureVector<T>,
    /// W.
    pub label: T,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset<T> {
    pub rows: Vec<Row<T>>,
}

#[derive(Serialize, Deserialize)]
struct CsvRow {
    velocity: f64,
    length_d: f64,
    mean_abs_curv: f64,
    label_w: f64,
}

impl<T: Real> LabeledDataset<T> {
    pub fn new(rows: Vec<Row<T>>) -> Result<Self, PredictorError> {
        for (i, r) in rows.iter().enumerate() {
            if !r.features.is_valid() || !r.label.is_finite() || r.label < T::zero() {
                return Err(PredictorError::Dataset(format!("row {i} out of domain")));
            }
        }
        Ok(Self { rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn label_mean(&self) -> T {
        crate::trajectory::mean(&self.rows.iter().map(|r| r.label).collect::<Vec<_>>())
    }

    /// `velocity,length_d,mean_abs_curv,label_w`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), PredictorError> {
        let mut wtr = csv::Writer::from_writer(out);
        for r in &self.rows {
            wtr.serialize(CsvRow {
                velocity: r.features.velocity.to_f64_lossy(),
                length_d: r.features.length_d.to_f64_lossy(),
                mean_abs_curv: r.features.mean_abs_curvature.to_f64_lossy(),
                label_w: r.label.to_f64_lossy(),
            })
            .map_err(|e| PredictorError::Dataset(e.to_string()))?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self, PredictorError> {
        let mut rdr = csv::Reader::from_reader(input);
        let rows = rdr
            .deserialize::<CsvRow>()
            .map(|r| {
                let r = r.map_err(|e| PredictorError::Dataset(e.to_string()))?;
                Ok(Row {
                    features: FeatureVector {
                        velocity: T::lit(r.velocity),
                        length_d: T::lit(r.length_d),
                        mean_abs_curvature: T::lit(r.mean_abs_curv),
                    },
                    label: T::lit(r.label_w),
                })
            })
            .collect::<Result<Vec<_>, PredictorError>>()?;
        Self::new(rows)
    }
}

/// `½‖P − P̂‖`, the unsquared form.
pub fn loss<T: Real>(p: &[T], p_hat: &[T]) -> T {
    T::lit(0.5) * squared_norm(p, p_hat).sqrt()
}

/// `½‖P − P̂‖²`, the form that training minimizes.
pub fn squared_loss<T: Real>(p: &[T], p_hat: &[T]) -> T {
    T::lit(0.5) * squared_norm(p, p_hat)
}

fn squared_norm<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Backend {
    Deterministic,
    BayesianEnsemble { members: usize },
}

impl Backend {
    pub fn member_count(&self) -> usize {
        match self {
            Backend::Deterministic => 1,
            Backend::BayesianEnsemble { members } => *members,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Backend::Deterministic => "mlp",
            Backend::BayesianEnsemble { .. } => "ensemble",
        }
    }
}

/// Per-feature standardization `(x − mean) / scale`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Normalization<T> {
    pub mean: Vec<T>,
    pub scale: Vec<T>,
}

impl<T: Real> Normalization<T> {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![T::zero(); dim],
            scale: vec![T::one(); dim],
        }
    }

    /// Column statistics; constant columns get scale 1.
    pub fn fit(columns: &[Vec<T>]) -> Self {
        let dim = columns.first().map_or(0, Vec::len);
        let n = T::from_usize(columns.len().max(1)).unwrap();
        let mut mean = vec![T::zero(); dim];
        for row in columns {
            for (m, &v) in mean.iter_mut().zip(row) {
                *m += v / n;
            }
        }
        let mut scale = vec![T::zero(); dim];
        for row in columns {
            for ((s, &v), &m) in scale.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m) / n;
            }
        }
        for s in &mut scale {
            *s = s.sqrt();
            if !(*s > T::lit(1e-12)) {
                *s = T::one();
            }
        }
        Self { mean, scale }
    }

    pub fn apply(&self, x: &[T]) -> Vec<T> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((&v, &m), &s)| (v - m) / s)
            .collect()
    }

    pub fn invert(&self, z: &[T]) -> Vec<T> {
        z.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((&v, &m), &s)| v * s + m)
            .collect()
    }

    fn validate(&self, dim: usize) -> Result<(), PredictorError> {
        if self.mean.len() != dim || self.scale.len() != dim {
            return Err(PredictorError::Format("normalization dimension".into()));
        }
        if self.scale.iter().any(|s| !(*s > T::zero())) {
            return Err(PredictorError::Format("normalization scale must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction<T> {
    /// W.
    pub mean: T,
    /// Spread across ensemble members, W; 0 for a single network.
    pub std: T,
}

/// A trained predictor: one network or an ensemble sharing one architecture.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictorModel<T> {
    pub backend: Backend,
    pub input_norm: Normalization<T>,
    pub label_norm: Normalization<T>,
    pub members: Vec<Mlp<T>>,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Architecture {
    layer_sizes: Vec<usize>,
    activation: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MemberFile {
    weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    schema: u32,
    architecture: Architecture,
    backend: Backend,
    normalization: Normalization<f64>,
    label_normalization: Normalization<f64>,
    members: Vec<MemberFile>,
    seed: u64,
}

impl<T: Real> PredictorModel<T> {
    pub fn layer_sizes(&self) -> &[usize] {
        self.members[0].layer_sizes()
    }

    pub fn forward(&self, x: &FeatureVector<T>) -> Result<Prediction<T>, PredictorError> {
        let z = self.input_norm.apply(&x.to_array());
        let outs = self
            .members
            .iter()
            .map(|m| Ok(self.label_norm.invert(&m.forward(&z)?)[0]))
            .collect::<Result<Vec<T>, PredictorError>>()?;
        if outs.len() == 1 {
            return Ok(Prediction {
                mean: outs[0],
                std: T::zero(),
            });
        }
        let n = T::from_usize(outs.len()).unwrap();
        let mean = outs.iter().copied().sum::<T>() / n;
        let var = outs.iter().map(|&o| (o - mean) * (o - mean)).sum::<T>() / n;
        Ok(Prediction {
            mean,
            std: var.sqrt(),
        })
    }

    pub fn predict(&self, x: &FeatureVector<T>) -> Result<T, PredictorError> {
        Ok(self.forward(x)?.mean)
    }

    pub fn validate(&self) -> Result<(), PredictorError> {
        let first = self
            .members
            .first()
            .ok_or_else(|| PredictorError::Format("no members".into()))?;
        if first.input_dim() != 3 || first.output_dim() != 1 {
            return Err(PredictorError::Architecture(format!("{:?}", first.layer_sizes())));
        }
        if self.members.iter().any(|m| m.layer_sizes() != first.layer_sizes()) {
            return Err(PredictorError::Format("members differ in architecture".into()));
        }
        if self.members.len() != self.backend.member_count() {
            return Err(PredictorError::Format("member count does not match backend".into()));
        }
        self.input_norm.validate(3)?;
        self.label_norm.validate(1)
    }

    pub fn to_json(&self) -> Result<String, PredictorError> {
        let file = ModelFile {
            schema: 1,
            architecture: Architecture {
                layer_sizes: self.layer_sizes().to_vec(),
                activation: "tanh".into(),
            },
            backend: self.backend,
            normalization: to_f64_norm(&self.input_norm),
            label_normalization: to_f64_norm(&self.label_norm),
            members: self
                .members
                .iter()
                .map(|m| MemberFile {
                    weights: m.params().iter().map(|p| p.to_f64_lossy()).collect(),
                })
                .collect(),
            seed: self.seed,
        };
        serde_json::to_string_pretty(&file).map_err(|e| PredictorError::Format(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, PredictorError> {
        let file: ModelFile =
            serde_json::from_str(text).map_err(|e| PredictorError::Format(e.to_string()))?;
        if file.schema != 1 {
            return Err(PredictorError::Format(format!("unsupported schema {}", file.schema)));
        }
        if file.architecture.activation != "tanh" {
            return Err(PredictorError::Format("only tanh activation is supported".into()));
        }
        let sizes = &file.architecture.layer_sizes;
        let members = file
            .members
            .into_iter()
            .map(|m| Mlp::from_params(sizes, m.weights.into_iter().map(T::lit).collect()))
            .collect::<Result<Vec<_>, _>>()?;
        let from = |n: Normalization<f64>| Normalization {
            mean: n.mean.into_iter().map(T::lit).collect(),
            scale: n.scale.into_iter().map(T::lit).collect(),
        };
        let model = Self {
            backend: file.backend,
            input_norm: from(file.normalization),
            label_norm: from(file.label_normalization),
            members,
            seed: file.seed,
        };
        model.validate()?;
        Ok(model)
    }
}

fn to_f64_norm<T: Real>(n: &Normalization<T>) -> Normalization<f64> {
    Normalization {
        mean: n.mean.iter().map(|v| v.to_f64_lossy()).collect(),
        scale: n.scale.iter().map(|v| v.to_f64_lossy()).collect(),
    }
}

/// Mean absolute error of the (mean) prediction, W.
pub fn mae<T: Real>(model: &PredictorModel<T>, data: &LabeledDataset<T>) -> Result<T, PredictorError> {
    if data.is_empty() {
        return Err(PredictorError::Dataset("empty dataset".into()));
    }
    let errs = abs_errors(model, data)?;
    Ok(crate::trajectory::mean(&errs))
}

/// `|P̂ − P|` per row.
pub fn abs_errors<T: Real>(
    model: &PredictorModel<T>,
    data: &LabeledDataset<T>,
) -> Result<Vec<T>, PredictorError> {
    data.rows
        .iter()
        .map(|r| Ok((model.predict(&r.features)? - r.label).abs()))
        .collect()
}
