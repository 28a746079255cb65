#![doc = include_str!("../../../book/src/introduction.md")]

pub mod data;
pub mod error;
pub mod experiment;
pub mod geom;
pub mod labels;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod random;
pub mod sketch;
pub mod theory;

pub use error::{Error, Result};
pub use labels::LabelMatrix;
pub use linalg::DenseMatrix;
pub use model::{PredictOptions, SketchedModel};
pub use random::RngState;
pub use sketch::{SketchKind, SketchOperator};
