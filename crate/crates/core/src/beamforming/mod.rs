//! Beamformer design: SCA for max-min MAC rates, zero forcing with equal or
//! optimal power, single-group multicast and unicast baselines.
//!
//! Optimization happens in `f64`, the precision of the conic solver.

mod clarabel_backend;
pub mod conic;
mod multicast;
mod sca;
mod unicast;
mod zf;

pub use clarabel_backend::ClarabelBackend;
pub use conic::{Capabilities, ConicProblem, Role, SolveStatus, SolverBackend};
pub use multicast::{maxmin_snr_multicast, MulticastDesign};
pub use sca::{
    build_subproblem, linearize, sca_maxmin_mac, MacEncoding, ScaInit, ScaOptions, ScaOutcome,
    ScaState, SinrLinearization, TraceRecord,
};
pub use unicast::{unicast_maxmin, UnicastDesign};
pub use zf::{
    zf_beamformers, zf_design, zf_equal_power, zf_gains, zf_power_opt, zf_rate, PowerAllocation,
};

use crate::phy::BeamformerSet;

/// Beamformers with their exact bottleneck MAC rate.
#[derive(Clone, Debug)]
pub struct BeamDesign {
    pub beams: BeamformerSet<f64>,
    pub rate: f64,
}
