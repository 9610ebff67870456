//! Segmented label volumes and signed Euclidean distance transforms.

mod edt;
mod sdv;
mod volume;

pub use edt::{squared_edt, SQ_INF};
pub use sdv::{sedt2, sedt3, sedt3_squared, BinaryImage, Provenance, SignedDistanceVolume};
pub use volume::{default_label_map, Dims, Label, LabelVolume, Lv1Header};
