//! Magnetotelluric forward modelling: analytic 1D layered earth and the 2D
//! finite-volume solver.

pub mod fd2d;
pub mod layered;
pub mod response;
pub mod sparse;

pub use fd2d::{
    assemble, forward_response, solve_fields, surface_impedance, AssembledSystem, FieldSolution,
};
pub use layered::{
    apparent_resistivity, field_profile_1d, impedance_1d, phase_deg, LayeredModel, Mode, MU0,
};
pub use response::{Channel, FrequencySet, RmtResponse};
