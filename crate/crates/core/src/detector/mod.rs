//! Per-cell obstacle detector: two 3×3 convolutions with ReLU and a 1×1 head,
//! with hand-written backward passes and a deterministic trainer.

mod io;
mod metric;
mod model;
mod train;

pub use metric::{extract_metric, MaskedMap, Metric};
pub use model::{
    backward, backward_region, forward, forward_region, forward_traced, DetectorParams, ModelOutput, Trace,
    CLASS_NAMES, DEFAULT_CLASSES, HIDDEN, HEAD_FIXED,
};
pub use train::{objectness_accuracy, train, CellTarget, LabeledScene, TrainConfig, TrainReport};
