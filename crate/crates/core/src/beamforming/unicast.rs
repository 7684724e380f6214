//! Max-min SINR unicast beamforming (one private stream per user).
//!
//! For a target SINR `γ` the minimum-power problem is an SOCP once each
//! user's useful signal is rotated to be real:
//! `Re(h_kᴴw_k)/√γ ≥ ‖(h_kᴴw_i)_{i≠k}, √N0‖`. Bisection on `γ` against the
//! power budget then gives the max-min SINR.

use num_complex::Complex;

use super::conic::{AffineExpr, ConicProblem, Constraint, Role, SolverBackend};
use crate::combinatorics::OmegaSets;
use crate::error::{Error, Result};
use crate::linalg::CVector;
use crate::phy::{evaluate_mac, BeamformerSet, ChannelMatrix};

#[derive(Clone, Debug)]
pub struct UnicastDesign {
    /// `beams[i]` serves `users[i]`.
    pub users: Vec<usize>,
    pub beams: Vec<CVector<f64>>,
    pub min_sinr: f64,
    /// `log2(1 + min_sinr)`.
    pub rate: f64,
}

/// Streams `{k}` for every served user, so the MAC machinery evaluates
/// plain unicast SINRs.
fn unicast_omega(users: &[usize]) -> Result<OmegaSets> {
    let mut sorted = users.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != users.len() {
        return Err(Error::Parameter("serving set has duplicate users".into()));
    }
    OmegaSets::from_streams(&sorted, sorted.iter().map(|&u| vec![u]).collect())
}

/// Minimum total power reaching SINR `gamma` for every user, with the
/// beams achieving it, or `None` if the solver finds no point.
fn min_power(
    h: &ChannelMatrix<f64>,
    users: &[usize],
    gamma: f64,
    n0: f64,
    backend: &dyn SolverBackend,
) -> Option<(f64, Vec<CVector<f64>>)> {
    let l = h.antennas();
    let n = users.len();
    let mut p = ConicProblem::new();
    let tau = p.add_var();
    let base = p.add_vars(2 * l * n).start;
    let re = |j: usize, i: usize| base + 2 * l * j + i;
    let im = |j: usize, i: usize| base + 2 * l * j + l + i;
    let inner = |hk: &CVector<f64>, j: usize| {
        let mut a = AffineExpr::default();
        let mut b = AffineExpr::default();
        for (i, c) in hk.iter().enumerate() {
            a.add_term(re(j, i), c.re).add_term(im(j, i), c.im);
            b.add_term(im(j, i), c.re).add_term(re(j, i), -c.im);
        }
        (a, b)
    };
    p.objective = AffineExpr::term(tau, -1.0);
    let scale = 1.0 / gamma.sqrt();
    for (k, &u) in users.iter().enumerate() {
        let hk = h.h(u);
        let (sig_re, sig_im) = inner(hk, k);
        p.push(Constraint::Equality(sig_im), Role::Aux);
        let mut x = Vec::with_capacity(2 * n - 1);
        for j in (0..n).filter(|&j| j != k) {
            let (a, b) = inner(hk, j);
            x.push(a);
            x.push(b);
        }
        x.push(AffineExpr::constant(n0.sqrt()));
        p.push(
            Constraint::SecondOrder {
                t: sig_re.scaled(scale),
                x,
            },
            Role::Sinr { user: u, stream: k },
        );
    }
    p.push(
        Constraint::SecondOrder {
            t: AffineExpr::var(tau),
            x: (base..base + 2 * l * n).map(AffineExpr::var).collect(),
        },
        Role::Power,
    );
    let sol = backend.solve(&p);
    if !sol.status.has_solution() {
        return None;
    }
    let beams = (0..n)
        .map(|j| {
            CVector::new(
                (0..l)
                    .map(|i| Complex::new(sol.x[re(j, i)], sol.x[im(j, i)]))
                    .collect(),
            )
        })
        .collect::<Result<Vec<_>>>()
        .ok()?;
    let power = beams.iter().map(|w| w.norm_sqr()).sum();
    Some((power, beams))
}

/// Max-min SINR unicast beamformers for `users` (at most `L` of them) under
/// `Σ‖w_k‖² ≤ SNR`. Bisection stops when the SINR bracket is narrower than
/// `rel_tol` relative to its upper end.
pub fn unicast_maxmin(
    h: &ChannelMatrix<f64>,
    users: &[usize],
    snr: f64,
    n0: f64,
    rel_tol: f64,
    backend: &dyn SolverBackend,
) -> Result<UnicastDesign> {
    if users.is_empty() || users.len() > h.antennas() {
        return Err(Error::Parameter(format!(
            "unicast serves 1..={} users, got {}",
            h.antennas(),
            users.len()
        )));
    }
    let omega = unicast_omega(users)?;
    let users = omega.users.clone();

    let mut lo = 0.0;
    let mut hi = users
        .iter()
        .map(|&k| snr * h.h(k).norm_sqr() / n0)
        .fold(f64::INFINITY, f64::min);
    // matched filters with equal power: a valid fallback point
    let per = (snr / users.len() as f64).sqrt();
    let mut best: Vec<CVector<f64>> = users
        .iter()
        .map(|&k| {
            h.h(k)
                .normalized()
                .unwrap_or_else(|| CVector::basis(h.antennas(), 0))
                .scaled(per)
        })
        .collect();
    for _ in 0..200 {
        if hi - lo <= rel_tol * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        match min_power(h, &users, mid, n0, backend) {
            Some((power, beams)) if power <= snr * (1.0 + 1e-9) => {
                lo = mid;
                best = beams;
            }
            _ => hi = mid,
        }
    }

    let mut set = BeamformerSet::new(best)?;
    let power = set.power();
    if power > 0.0 {
        set = set.scaled((snr / power).sqrt());
    }
    let eval = evaluate_mac(h, &set, &omega, n0)?;
    let min_sinr = eval.sinrs.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    Ok(UnicastDesign {
        users,
        beams: set.into_inner(),
        min_sinr,
        rate: (1.0 + min_sinr).log2(),
    })
}
