//! Zero-forcing directions and their power allocation.
//!
//! Stream `T` is steered into the null space of every served user outside
//! `T`, so the only signal reaching a user is the set of streams it wants.
//! The remaining design freedom is the per-stream power.

use num_complex::Complex;

use super::conic::{AffineExpr, ConicProblem, Constraint, Role, SolverBackend};
use super::BeamDesign;
use crate::combinatorics::{combinations, OmegaSets};
use crate::error::{Error, Result};
use crate::linalg::{dominant_eigvec, herm_dot, null_projector, CMatrix, CVector};
use crate::num::Real;
use crate::phy::{evaluate_mac, mac_rate, BeamformerSet, ChannelMatrix};

/// Unit-norm ZF direction for every stream of `omega`.
///
/// When the null space has more than one dimension the direction is the
/// dominant eigenvector of `Q (Σ_{k∈T} h_k h_kᴴ) Q`, which maximizes the
/// summed gain towards the stream's own users.
pub fn zf_beamformers<R: Real>(h: &ChannelMatrix<R>, omega: &OmegaSets) -> Result<Vec<CVector<R>>> {
    let l = h.antennas();
    omega
        .omega
        .iter()
        .map(|target| {
            let others: Vec<CVector<R>> = omega
                .users
                .iter()
                .filter(|u| !target.contains(u))
                .map(|&u| h.h(u).clone())
                .collect();
            if others.len() >= l {
                return Err(Error::EmptyNullSpace {
                    stream: target.clone(),
                });
            }
            let q = null_projector(&others, l)?;
            let mut gram = CMatrix::zeros(l, l);
            for &k in target {
                gram = gram.add(&CMatrix::outer(h.h(k)))?;
            }
            let a = q.matmul(&gram)?.matmul(&q)?;
            let v = dominant_eigvec(&a)?.vector;
            // keep the result exactly inside range(Q)
            let projected = q.mul_vec(&v)?;
            match projected.normalized() {
                Some(w) if a.max_abs() > R::zero() => Ok(w.phase_normalized()),
                _ => strongest_column(&q).ok_or_else(|| Error::EmptyNullSpace {
                    stream: target.clone(),
                }),
            }
        })
        .collect()
}

/// Any null-space direction, used when the stream's users have no gain
/// left after projection.
fn strongest_column<R: Real>(q: &CMatrix<R>) -> Option<CVector<R>> {
    (0..q.cols())
        .map(|j| q.column(j))
        .max_by(|a, b| a.norm_sqr().partial_cmp(&b.norm_sqr()).expect("finite"))
        .and_then(|c| c.normalized())
        .map(|c| c.phase_normalized())
}

/// Effective gains `u_{k,T} = |h_kᴴ ŵ_T|² / N0`, aligned with
/// `omega.omega_k`.
pub fn zf_gains(h: &ChannelMatrix<f64>, omega: &OmegaSets, dirs: &[CVector<f64>], n0: f64) -> Vec<Vec<f64>> {
    omega
        .users
        .iter()
        .zip(&omega.omega_k)
        .map(|(&k, streams)| {
            streams
                .iter()
                .map(|&j| herm_dot(h.h(k).as_slice(), dirs[j].as_slice()).norm_sqr() / n0)
                .collect()
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct PowerAllocation {
    /// Power per stream, aligned with `omega.omega`.
    pub powers: Vec<f64>,
    /// `min_k R^k_MAC` with `γ_T^k = u_{k,T}·p_T`.
    pub rate: f64,
}

/// Bottleneck MAC rate of an interference-free allocation.
pub fn zf_rate(gains: &[Vec<f64>], omega: &OmegaSets, powers: &[f64]) -> f64 {
    gains
        .iter()
        .zip(&omega.omega_k)
        .map(|(u, streams)| {
            let g: Vec<f64> = u.iter().zip(streams).map(|(&u, &j)| u * powers[j]).collect();
            mac_rate(&g).expect("every served user wants a stream")
        })
        .fold(f64::INFINITY, f64::min)
}

pub fn zf_equal_power(gains: &[Vec<f64>], omega: &OmegaSets, snr: f64) -> PowerAllocation {
    let powers = vec![snr / omega.streams() as f64; omega.streams()];
    let rate = zf_rate(gains, omega, &powers);
    PowerAllocation { powers, rate }
}

/// Max-min MAC-rate power allocation over interference-free streams:
///
/// `max r̃  s.t.  r̃^{|B|} ≤ 1 + Σ_{T∈B} u_{k,T} p_T  ∀k, B;  Σ p ≤ SNR;  p ≥ 0`
///
/// with `r̃ = 2^r`. The solver's allocation is scaled to the full budget and
/// evaluated exactly; the equal split is returned instead if it happens to
/// be better, so the result never falls below the equal-power baseline.
pub fn zf_power_opt(
    gains: &[Vec<f64>],
    omega: &OmegaSets,
    snr: f64,
    backend: &dyn SolverBackend,
) -> Result<PowerAllocation> {
    let equal = zf_equal_power(gains, omega, snr);
    if gains.iter().flatten().all(|&u| u <= 0.0) {
        return Ok(equal);
    }
    let mut p = ConicProblem::new();
    let rt = p.add_var();
    let pw: Vec<usize> = p.add_vars(omega.streams()).collect();
    p.objective = AffineExpr::var(rt);
    for (pos, (u, streams)) in gains.iter().zip(&omega.omega_k).enumerate() {
        let user = omega.users[pos];
        let idx: Vec<usize> = (0..streams.len()).collect();
        for size in 1..=streams.len() {
            for b in combinations(&idx, size) {
                let mut s = AffineExpr::constant(1.0);
                for &m in &b {
                    s.add_term(pw[streams[m]], u[m]);
                }
                mac_bound(&mut p, rt, s, size, Role::MacBound { user, size });
            }
        }
    }
    let mut budget = AffineExpr::constant(snr);
    for &v in &pw {
        budget.add_term(v, -1.0);
        p.push(Constraint::NonNeg(AffineExpr::var(v)), Role::Aux);
    }
    p.push(Constraint::NonNeg(budget), Role::Power);

    let sol = backend.solve(&p);
    if !sol.status.has_solution() {
        return Err(Error::Solver(format!("ZF power allocation: {:?}", sol.status)));
    }
    let mut powers: Vec<f64> = pw.iter().map(|&v| sol.x[v].max(0.0)).collect();
    let total: f64 = powers.iter().sum();
    if total > 0.0 {
        powers.iter_mut().for_each(|x| *x *= snr / total);
    }
    let rate = zf_rate(gains, omega, &powers);
    Ok(if rate >= equal.rate {
        PowerAllocation { powers, rate }
    } else {
        equal
    })
}

/// Adds `r̃^{size} ≤ s`: linear for a single stream, a geometric-mean cone
/// `r̃ ≤ (s·1⋯1)^{1/size}` otherwise.
pub(crate) fn mac_bound(p: &mut ConicProblem, rt: usize, s: AffineExpr, size: usize, role: Role) {
    if size == 1 {
        p.push(Constraint::NonNeg(s.minus(&AffineExpr::var(rt))), role);
    } else {
        let mut x = vec![s];
        x.extend(std::iter::repeat_n(AffineExpr::constant(1.0), size - 1));
        p.push(
            Constraint::GeoMean {
                t: AffineExpr::var(rt),
                x,
            },
            role,
        );
    }
}

/// ZF directions with optimal (`optimal = true`) or equal power.
pub fn zf_design(
    h: &ChannelMatrix<f64>,
    omega: &OmegaSets,
    snr: f64,
    n0: f64,
    optimal: bool,
    backend: &dyn SolverBackend,
) -> Result<BeamDesign> {
    let dirs = zf_beamformers(h, omega)?;
    let gains = zf_gains(h, omega, &dirs, n0);
    let alloc = if optimal {
        zf_power_opt(&gains, omega, snr, backend)?
    } else {
        zf_equal_power(&gains, omega, snr)
    };
    let beams = BeamformerSet::new(
        dirs.iter()
            .zip(&alloc.powers)
            .map(|(d, &p)| d.scaled_complex(Complex::new(p.sqrt(), 0.0)))
            .collect(),
    )?;
    let rate = evaluate_mac(h, &beams, omega, n0)?.bottleneck;
    Ok(BeamDesign { beams, rate })
}
