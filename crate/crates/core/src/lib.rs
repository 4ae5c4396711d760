//! Counterfactual explanations for classifiers over binary features.
//!
//! A real-valued [`Predictor`] (a boosted tree ensemble or a linear model) is
//! wrapped by a strict threshold into a [`ThresholdClassifier`]. The
//! [`search`] module finds small irreducible sets of feature toggles that
//! flip its decision: removing present features explains a favorable
//! decision, adding absent ones gives guidance for an unfavorable one.
//! [`attribution`] provides LIME- and Shapley-style baselines and [`eval`]
//! compares them. [`dataset`] synthesizes a skills market to run it all on,
//! and [`pipeline`] wires the pieces together.
//!
//! Models, search and attribution are generic over the score type
//! ([`Scalar`], `f32` or `f64`); the aliases below fix it.

pub mod attribution;
pub mod bits;
pub mod dataset;
pub mod eval;
pub mod model;
pub mod pipeline;
pub mod scalar;
pub mod search;

pub use attribution::{
    exact_shapley, lime_like, shap_like, AttributionError, AttributionRecord, AttributionResult,
    LimeConfig,
};
pub use bits::{BinaryVector, FeatureId};
pub use model::{
    percentile_threshold, AnyModel, Class, GbtModel, GbtParams, LinearPredictor, ModelError,
    Predictor, ThresholdClassifier,
};
pub use scalar::Scalar;
pub use search::{
    change_ranking, find_counterfactual, irreducibility_pass, Change, Counterfactual,
    CounterfactualRecord, Direction, Mode, SearchConfig, SearchError, Status,
};

pub type Gbt = GbtModel<f64>;
pub type GbtF32 = GbtModel<f32>;
pub type Linear = LinearPredictor<f64>;
pub type LinearF32 = LinearPredictor<f32>;
pub type Model = AnyModel<f64>;
pub type ModelF32 = AnyModel<f32>;
pub type Classifier<P> = ThresholdClassifier<P, f64>;
pub type ClassifierF32<P> = ThresholdClassifier<P, f32>;
pub type Cf = Counterfactual<f64>;
pub type CfF32 = Counterfactual<f32>;
pub type Attribution = AttributionResult<f64>;
pub type AttributionF32 = AttributionResult<f32>;
