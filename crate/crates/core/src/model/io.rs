//! Model files.
//!
//! ```text
//! {"kind":"linear","version":1,"weights":[w0,w1,..],"bias":b}
//! {"kind":"gbt","version":1,"dim":d,"base_score":b,"learning_rate":η,
//!  "trees":[{"nodes":[{"node":"split","feature":f,"absent":i,"present":j},
//!                     {"node":"leaf","value":v},..]},..]}
//! ```
//!
//! Reals are written as the shortest decimal that parses back to the same
//! value, so a loaded model scores bit-identically to the saved one.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{GbtModel, LinearPredictor, ModelError, Predictor};
use crate::bits::BinaryVector;
use crate::scalar::Scalar;

pub const MODEL_VERSION: u64 = 1;

/// Either supported model kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", bound = "T: Scalar")]
pub enum AnyModel<T> {
    Gbt(GbtModel<T>),
    Linear(LinearPredictor<T>),
}

impl<T: Scalar> Predictor<T> for AnyModel<T> {
    fn dim(&self) -> usize {
        match self {
            AnyModel::Gbt(m) => m.dim(),
            AnyModel::Linear(m) => m.dim(),
        }
    }

    fn score(&self, x: &BinaryVector) -> T {
        match self {
            AnyModel::Gbt(m) => m.score(x),
            AnyModel::Linear(m) => m.score(x),
        }
    }
}

impl<T> From<GbtModel<T>> for AnyModel<T> {
    fn from(m: GbtModel<T>) -> Self {
        AnyModel::Gbt(m)
    }
}

impl<T> From<LinearPredictor<T>> for AnyModel<T> {
    fn from(m: LinearPredictor<T>) -> Self {
        AnyModel::Linear(m)
    }
}

#[derive(Serialize)]
struct Versioned<'a, T: Scalar> {
    version: u64,
    #[serde(flatten)]
    model: &'a AnyModel<T>,
}

pub fn model_to_json<T: Scalar>(model: &AnyModel<T>) -> String {
    let mut s = serde_json::to_string(&Versioned {
        version: MODEL_VERSION,
        model,
    })
    .expect("models serialize");
    s.push('\n');
    s
}

pub fn model_from_json<T: Scalar>(text: &str) -> Result<AnyModel<T>, ModelError> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| ModelError::Load(e.to_string()))?;
    let version = value
        .get("version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| ModelError::Load("missing integer field `version`".into()))?;
    if version != MODEL_VERSION {
        return Err(ModelError::Version {
            found: version,
            expected: MODEL_VERSION,
        });
    }
    let model: AnyModel<T> =
        serde_json::from_value(value).map_err(|e| ModelError::Load(e.to_string()))?;
    if let AnyModel::Gbt(m) = &model {
        m.validate().map_err(ModelError::Load)?;
    }
    Ok(model)
}

pub fn save_model<T: Scalar>(
    model: &AnyModel<T>,
    path: impl AsRef<Path>,
) -> Result<(), ModelError> {
    fs::write(path, model_to_json(model))?;
    Ok(())
}

pub fn load_model<T: Scalar>(path: impl AsRef<Path>) -> Result<AnyModel<T>, ModelError> {
    let text = fs::read_to_string(path)?;
    model_from_json(&text)
}
