//! Internal and external cluster-validity measures and the supervised
//! effect-validation protocol.

pub mod effect;
pub mod metrics;
pub mod report;

pub use effect::{effect_validation, stratified_split, ClassifierConfig, SmallCnn};
pub use metrics::{nmi, purity, silhouette};
pub use report::{compare_methods, comparison_csv, comparison_table, EvaluationReport};
