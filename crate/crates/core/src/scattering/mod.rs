//! Lead modes and the open-boundary scattering solve.

mod leads;
mod qtbm;
mod representation;

pub use leads::{
    lattice_threshold, lead_modes, propagation_factor, sine_profile, transverse_channels, LeadMode,
    LeadModeSet, TransverseChannel,
};
pub use qtbm::{
    solve_scattering, unitarity_defect, ChannelResult, Lead, ScatteringOptions, ScatteringProblem,
    ScatteringSolution,
};
pub use representation::{FullGrid, ModeSpace, SlicedSystem, TransverseRepresentation, FULL_GRID_CHANNELS};
