//! Real-valued predictors over binary features and the threshold wrapper
//! that turns them into a favorable/unfavorable classifier.

mod gbt;
mod io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bits::BinaryVector;
use crate::scalar::Scalar;

pub use gbt::{fit_gbt, train_gbt, GbtModel, GbtParams, Node, TrainedModel, Tree};
pub use io::{load_model, model_from_json, model_to_json, save_model, AnyModel, MODEL_VERSION};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("need at least {required} samples to train, got {got}")]
    TooFewSamples { required: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("empty input")]
    EmptyInput,
    #[error("percentile {0} is outside (0, 100]")]
    InvalidPercentile(f64),
    #[error("expected a vector of dimension {expected}, got {actual}")]
    Shape { expected: usize, actual: usize },
    #[error("cannot load model: {0}")]
    Load(String),
    #[error("unsupported model version {found} (expected {expected})")]
    Version { found: u64, expected: u64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A pure scoring function on `{0,1}^dim`.
pub trait Predictor<T: Scalar>: Send + Sync {
    fn dim(&self) -> usize;

    /// Callers guarantee `x.dim() == self.dim()`.
    fn score(&self, x: &BinaryVector) -> T;
}

impl<T: Scalar, P: Predictor<T> + ?Sized> Predictor<T> for &P {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn score(&self, x: &BinaryVector) -> T {
        (**self).score(x)
    }
}

impl<T: Scalar, P: Predictor<T> + ?Sized> Predictor<T> for Box<P> {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn score(&self, x: &BinaryVector) -> T {
        (**self).score(x)
    }
}

/// `bias + Σ weights[i] · x[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct LinearPredictor<T> {
    pub weights: Vec<T>,
    pub bias: T,
}

impl<T: Scalar> LinearPredictor<T> {
    pub fn new(weights: Vec<T>, bias: T) -> Self {
        Self { weights, bias }
    }
}

impl<T: Scalar> Predictor<T> for LinearPredictor<T> {
    fn dim(&self) -> usize {
        self.weights.len()
    }

    fn score(&self, x: &BinaryVector) -> T {
        x.active()
            .fold(self.bias, |acc, i| acc + self.weights[i as usize])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Class {
    Favorable,
    Unfavorable,
}

impl Class {
    pub fn opposite(self) -> Self {
        match self {
            Class::Favorable => Class::Unfavorable,
            Class::Unfavorable => Class::Favorable,
        }
    }
}

/// Favorable iff `score(x) > threshold`; a score equal to the threshold is
/// unfavorable.
#[derive(Debug, Clone)]
pub struct ThresholdClassifier<P, T> {
    pub predictor: P,
    pub threshold: T,
}

impl<T: Scalar, P: Predictor<T>> ThresholdClassifier<P, T> {
    pub fn new(predictor: P, threshold: T) -> Self {
        Self {
            predictor,
            threshold,
        }
    }

    pub fn dim(&self) -> usize {
        self.predictor.dim()
    }

    pub fn class_of(&self, score: T) -> Class {
        if score > self.threshold {
            Class::Favorable
        } else {
            Class::Unfavorable
        }
    }

    pub fn score(&self, x: &BinaryVector) -> T {
        self.predictor.score(x)
    }

    pub fn check_dim(&self, x: &BinaryVector) -> Result<(), ModelError> {
        if x.dim() == self.dim() {
            Ok(())
        } else {
            Err(ModelError::Shape {
                expected: self.dim(),
                actual: x.dim(),
            })
        }
    }

    pub fn classify(&self, x: &BinaryVector) -> Result<Class, ModelError> {
        self.check_dim(x)?;
        Ok(self.class_of(self.score(x)))
    }

    pub fn classify_unchecked(&self, x: &BinaryVector) -> Class {
        self.class_of(self.score(x))
    }
}

/// Nearest-rank percentile: the element at 1-based rank `ceil(p/100 · n)` of
/// the ascending sort.
pub fn percentile_threshold<T: Scalar>(values: &[T], p: f64) -> Result<T, ModelError> {
    if values.is_empty() {
        return Err(ModelError::EmptyInput);
    }
    if !(p > 0.0 && p <= 100.0) {
        return Err(ModelError::InvalidPercentile(p));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(ModelError::InvalidParameter(
            "NaN in percentile input".into(),
        ));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("NaN filtered above"));
    let n = sorted.len();
    let rank = ((p * n as f64) / 100.0).ceil() as usize;
    Ok(sorted[rank.clamp(1, n) - 1])
}
