//! Filtered cubical complexes over signed distance volumes and their persistence diagrams.

mod complex;
mod diagram;
mod persistence;

pub use complex::{build_filtration, Construction, FilteredCubicalComplex};
pub use diagram::{
    quadrant_summary, read_diagrams_csv, regularize_infinite, write_diagrams_csv, PersistenceDiagram,
    PersistencePair, QuadrantCounts, SubjectDiagrams,
};
pub use persistence::compute_persistence;

use crate::imaging::SignedDistanceVolume;

/// Diagrams in dimensions 0, 1, 2 of the sublevel filtration of `sdv`, before regularization.
pub fn diagrams_of(sdv: &SignedDistanceVolume, construction: Construction) -> [PersistenceDiagram; 3] {
    match sdv.crop_to_finite() {
        Some(cropped) => compute_persistence(&build_filtration(&cropped, construction)),
        None => [0, 1, 2].map(PersistenceDiagram::empty),
    }
}
