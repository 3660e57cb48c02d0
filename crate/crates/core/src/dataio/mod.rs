//! On-disk formats: the array container, scenario configs, datasets,
//! checkpoints and CSV/JSON reports.

pub mod checkpoint;
pub mod container;
pub mod datasets;
pub mod scenario;
pub mod tables;

pub use checkpoint::{read_checkpoint, read_checkpoint_for, write_checkpoint, Checkpoint, CheckpointMeta};
pub use container::{write_atomic, Array, ArrayEntry, Container, MAGIC, VERSION};
pub use datasets::{read_tensors, write_tensors, MeasurementSet, TensorMeta};
pub use scenario::{AnchorConditions, GridDims, PositionSource, ScenarioConfig};
