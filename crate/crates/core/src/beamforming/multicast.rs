//! Single-group max-min SNR multicast beamforming.

use super::conic::SolverBackend;
use super::sca::{sca_maxmin_mac, ScaOptions};
use crate::combinatorics::OmegaSets;
use crate::error::Result;
use crate::linalg::{herm_dot, CVector};
use crate::phy::ChannelMatrix;

#[derive(Clone, Debug)]
pub struct MulticastDesign {
    pub beam: CVector<f64>,
    /// `min_{k∈T} |h_kᴴ w|² / N0`.
    pub min_snr: f64,
    /// `log2(1 + min_snr)`.
    pub rate: f64,
    pub history: Vec<f64>,
}

/// One beam serving every user of `target` under `‖w‖² ≤ SNR`, maximizing
/// the weakest SNR. This is the general engine with a single stream and no
/// interference, so the result is a local optimum.
pub fn maxmin_snr_multicast(
    h: &ChannelMatrix<f64>,
    target: &[usize],
    snr: f64,
    opts: &ScaOptions,
    backend: &dyn SolverBackend,
) -> Result<MulticastDesign> {
    let omega = OmegaSets::from_streams(target, vec![target.to_vec()])?;
    let out = sca_maxmin_mac(h, &omega, snr, opts, backend)?;
    let beam = out.beams.beam(0).clone();
    let min_snr = omega
        .users
        .iter()
        .map(|&k| herm_dot(h.h(k).as_slice(), beam.as_slice()).norm_sqr() / opts.n0)
        .fold(f64::INFINITY, f64::min);
    Ok(MulticastDesign {
        beam,
        min_snr,
        rate: out.rate,
        history: out.history,
    })
}
