//! Grid, sparse operators and Hamiltonian assembly.

mod grid;
mod hamiltonian;
mod operator;

pub use grid::{build_grid, build_grid_with_spacing, Grid3D, MIN_TRANSVERSE_INTERVALS};
pub use hamiltonian::{
    assemble_metric_hamiltonian, assemble_twistframe_hamiltonian, Entry, HamiltonianForm,
    MetricForm, TwistFrame,
};
pub use operator::{SparseOperator, TripletBuilder};
