//! Successive convex approximation for max-min MAC-rate beamforming.
//!
//! The non-convex part of each SINR constraint `γ ≤ |s_T|² / (N0 + I)` is
//! rewritten as `N0 + I ≤ (|s_T|² + I + N0) / (1 + γ)`. The right-hand side
//! is jointly convex in `(w, γ)`, so its first-order expansion at the
//! current point is a global under-estimator and the resulting SOCP is an
//! inner approximation. Re-linearizing at each new solution with `γ̄` set to
//! the exact SINRs keeps the previous point feasible, so the objective can
//! only go up.

use num_complex::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use super::conic::{AffineExpr, ConicProblem, Constraint, Role, SolveStatus, SolverBackend};
use super::zf::{mac_bound, zf_design};
use crate::combinatorics::{combinations, OmegaSets};
use crate::error::{Error, Result};
use crate::linalg::{herm_dot, null_projector, CVector};
use crate::phy::{evaluate_mac, BeamformerSet, ChannelMatrix};

/// How the MAC bounds `r̃^{|B|} ≤ 1 + Σγ` enter each subproblem.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MacEncoding {
    /// Geometric-mean cones, maximizing `r̃` directly.
    GeoMean,
    /// Bisection on `r̃`, each step a pure SOC feasibility problem.
    Bisection,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ScaInit {
    /// ZF directions with optimal power, matched filter if ZF is impossible.
    ZfOptimal,
    /// ZF directions with equal power, matched filter if ZF is impossible.
    ZfEqual,
    /// `w_T ∝ Σ_{k∈T} h_k`, equal power.
    MatchedFilter,
    Given(BeamformerSet<f64>),
}

#[derive(Clone, Debug)]
pub struct ScaOptions {
    pub max_iter: usize,
    /// Stop once the relative objective gain drops below this.
    pub rel_tol: f64,
    /// Fresh random starts tried after a solver failure.
    pub restarts: usize,
    pub seed: u64,
    pub n0: f64,
    pub encoding: MacEncoding,
    /// Force `h_jᴴ w_T = 0` for every served `j ∉ T`.
    pub zero_forcing: bool,
    pub init: ScaInit,
    /// Relative width at which the `r̃` bisection stops.
    pub bisection_tol: f64,
}

impl Default for ScaOptions {
    fn default() -> Self {
        Self {
            max_iter: 50,
            rel_tol: 1e-4,
            restarts: 3,
            seed: 0,
            n0: 1.0,
            encoding: MacEncoding::GeoMean,
            zero_forcing: false,
            init: ScaInit::ZfOptimal,
            bisection_tol: 1e-7,
        }
    }
}

/// One line of the optional per-iteration trace.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceRecord {
    pub run: usize,
    pub iteration: usize,
    /// Exact bottleneck rate of the iteration's candidate, accepted or not.
    pub objective: f64,
    pub status: String,
}

/// Approximation point and progress of one SCA run.
#[derive(Clone, Debug, PartialEq)]
pub struct ScaState {
    pub beams: BeamformerSet<f64>,
    /// `gammas[i][m]`: SINR of `omega.users[i]` on its `m`-th desired stream.
    pub gammas: Vec<Vec<f64>>,
    pub iteration: usize,
    /// Exact bottleneck rate at every accepted iterate.
    pub history: Vec<f64>,
}

impl ScaState {
    pub fn new(h: &ChannelMatrix<f64>, omega: &OmegaSets, beams: BeamformerSet<f64>, n0: f64) -> Result<Self> {
        let eval = evaluate_mac(h, &beams, omega, n0)?;
        Ok(Self {
            beams,
            gammas: eval.sinrs,
            iteration: 0,
            history: vec![eval.bottleneck],
        })
    }

    pub fn objective(&self) -> f64 {
        *self.history.last().expect("history starts non-empty")
    }
}

#[derive(Clone, Debug)]
pub struct ScaOutcome {
    pub beams: BeamformerSet<f64>,
    /// Exact `min_k R^k_MAC` of `beams`.
    pub rate: f64,
    pub history: Vec<f64>,
    pub trace: Vec<TraceRecord>,
    pub restarts: usize,
}

/// First-order expansion of `f(w, γ) = (Σ_{T'}|hᴴw_{T'}|² + N0)/(1+γ)` at
/// `(w̄, γ̄)`, where `T'` ranges over the desired stream and the user's
/// interferers:
///
/// `𝓛 = q̄/(1+γ̄) + 2/(1+γ̄)·Σ_{T'} [Re(s̄*·s) − |s̄|²] − q̄/(1+γ̄)²·(γ − γ̄)`
///
/// with `s = hᴴw_{T'}` and `q̄ = Σ|s̄|² + N0`.
#[derive(Clone, Debug)]
pub struct SinrLinearization {
    h: CVector<f64>,
    streams: Vec<usize>,
    s_bar: Vec<Complex<f64>>,
    q_bar: f64,
    gamma_bar: f64,
    n0: f64,
}

pub fn linearize(
    h: &CVector<f64>,
    desired: usize,
    interferers: &[usize],
    point: &BeamformerSet<f64>,
    gamma_bar: f64,
    n0: f64,
) -> SinrLinearization {
    let mut streams = vec![desired];
    streams.extend_from_slice(interferers);
    let s_bar: Vec<Complex<f64>> = streams
        .iter()
        .map(|&j| herm_dot(h.as_slice(), point.beam(j).as_slice()))
        .collect();
    let q_bar = s_bar.iter().map(|s| s.norm_sqr()).sum::<f64>() + n0;
    SinrLinearization {
        h: h.clone(),
        streams,
        s_bar,
        q_bar,
        gamma_bar,
        n0,
    }
}

impl SinrLinearization {
    fn s(&self, beams: &BeamformerSet<f64>) -> Vec<Complex<f64>> {
        self.streams
            .iter()
            .map(|&j| herm_dot(self.h.as_slice(), beams.beam(j).as_slice()))
            .collect()
    }

    /// `𝓛(w, γ)`.
    pub fn value(&self, beams: &BeamformerSet<f64>, gamma: f64) -> f64 {
        let d = 1.0 + self.gamma_bar;
        let lin: f64 = self
            .s(beams)
            .iter()
            .zip(&self.s_bar)
            .map(|(s, sb)| (sb.conj() * s).re - sb.norm_sqr())
            .sum();
        self.q_bar / d + 2.0 / d * lin - self.q_bar / (d * d) * (gamma - self.gamma_bar)
    }

    /// The convex function being approximated.
    pub fn exact(&self, beams: &BeamformerSet<f64>, gamma: f64) -> f64 {
        let q = self.s(beams).iter().map(|s| s.norm_sqr()).sum::<f64>() + self.n0;
        q / (1.0 + gamma)
    }

    fn affine(&self, vars: &VarMap, gamma_var: usize) -> AffineExpr {
        let d = 1.0 + self.gamma_bar;
        let mut e = AffineExpr::constant(
            self.q_bar / d - 2.0 / d * self.s_bar.iter().map(|s| s.norm_sqr()).sum::<f64>()
                + self.q_bar / (d * d) * self.gamma_bar,
        );
        for (&j, sb) in self.streams.iter().zip(&self.s_bar) {
            // Re(s̄*·s) = Re s̄·Re s + Im s̄·Im s
            let (re, im) = vars.inner(&self.h, j);
            e = e.plus(&re.scaled(2.0 / d * sb.re)).plus(&im.scaled(2.0 / d * sb.im));
        }
        e.add_term(gamma_var, -self.q_bar / (d * d));
        e
    }
}

/// Variable layout of a subproblem: `r̃`, then `[Re w_j | Im w_j]` per
/// stream, then one `γ` per (user, desired stream).
struct VarMap {
    rt: usize,
    beam_base: usize,
    l: usize,
    gamma: Vec<Vec<usize>>,
}

impl VarMap {
    fn re(&self, j: usize, i: usize) -> usize {
        self.beam_base + 2 * self.l * j + i
    }

    fn im(&self, j: usize, i: usize) -> usize {
        self.beam_base + 2 * self.l * j + self.l + i
    }

    /// `(Re, Im)` of `hᴴ w_j`. With `h = c + jd` and `w = a + jb`,
    /// `Re = Σ c·a + d·b` and `Im = Σ c·b − d·a`.
    fn inner(&self, h: &CVector<f64>, j: usize) -> (AffineExpr, AffineExpr) {
        let mut re = AffineExpr::default();
        let mut im = AffineExpr::default();
        for (i, hi) in h.iter().enumerate() {
            re.add_term(self.re(j, i), hi.re).add_term(self.im(j, i), hi.im);
            im.add_term(self.im(j, i), hi.re).add_term(self.re(j, i), -hi.im);
        }
        (re, im)
    }

    fn beams(&self, x: &[f64], streams: usize) -> Result<BeamformerSet<f64>> {
        BeamformerSet::new(
            (0..streams)
                .map(|j| {
                    CVector::new(
                        (0..self.l)
                            .map(|i| Complex::new(x[self.re(j, i)], x[self.im(j, i)]))
                            .collect(),
                    )
                })
                .collect::<Result<Vec<_>>>()?,
        )
    }
}

/// Builds the convex subproblem at `state`. With `fixed_rate = Some(ρ)` the
/// MAC bounds become the linear constraints `Σγ ≥ ρ^{|B|} − 1` and the
/// problem is a pure feasibility check.
fn subproblem(
    h: &ChannelMatrix<f64>,
    omega: &OmegaSets,
    snr: f64,
    state: &ScaState,
    opts: &ScaOptions,
    fixed_rate: Option<f64>,
) -> (ConicProblem, VarMap) {
    let l = h.antennas();
    let mut p = ConicProblem::new();
    let rt = p.add_var();
    let beam_base = p.add_vars(2 * l * omega.streams()).start;
    let gamma: Vec<Vec<usize>> = omega
        .omega_k
        .iter()
        .map(|s| p.add_vars(s.len()).collect())
        .collect();
    let vars = VarMap {
        rt,
        beam_base,
        l,
        gamma,
    };

    match fixed_rate {
        Some(rho) => {
            p.push(
                Constraint::Equality(AffineExpr::var(vars.rt).minus(&AffineExpr::constant(rho))),
                Role::Aux,
            );
        }
        None => p.objective = AffineExpr::var(vars.rt),
    }

    for (pos, &user) in omega.users.iter().enumerate() {
        let desired = &omega.omega_k[pos];
        let idx: Vec<usize> = (0..desired.len()).collect();
        for size in 1..=desired.len() {
            for b in combinations(&idx, size) {
                let mut s = AffineExpr::constant(1.0);
                for &m in &b {
                    s.add_term(vars.gamma[pos][m], 1.0);
                }
                let role = Role::MacBound { user, size };
                match fixed_rate {
                    Some(rho) => {
                        p.push(Constraint::NonNeg(s.minus(&AffineExpr::constant(rho.powi(size as i32)))), role)
                    }
                    None => mac_bound(&mut p, vars.rt, s, size, role),
                }
            }
        }

        let hk = h.h(user);
        let interf = &omega.omega_bar_k[pos];
        let mut lhs: Vec<AffineExpr> = Vec::with_capacity(2 * interf.len() + 1);
        for &j in interf {
            let (re, im) = vars.inner(hk, j);
            lhs.push(re);
            lhs.push(im);
        }
        lhs.push(AffineExpr::constant(opts.n0.sqrt()));
        for (m, &j) in desired.iter().enumerate() {
            let lin = linearize(hk, j, interf, &state.beams, state.gammas[pos][m], opts.n0);
            let g = vars.gamma[pos][m];
            // ‖(interference, √N0)‖² ≤ 𝓛·1
            p.push(
                Constraint::rotated_vec(&lhs, &lin.affine(&vars, g), &AffineExpr::constant(1.0)),
                Role::Sinr { user, stream: j },
            );
            p.push(Constraint::NonNeg(AffineExpr::var(g)), Role::Aux);
        }
    }

    let all_beam_vars: Vec<AffineExpr> = (beam_base..beam_base + 2 * l * omega.streams())
        .map(AffineExpr::var)
        .collect();
    p.push(
        Constraint::SecondOrder {
            t: AffineExpr::constant(snr.sqrt()),
            x: all_beam_vars,
        },
        Role::Power,
    );

    if opts.zero_forcing {
        for (j, target) in omega.omega.iter().enumerate() {
            for &u in omega.users.iter().filter(|u| !target.contains(u)) {
                let (re, im) = vars.inner(h.h(u), j);
                p.push(Constraint::Equality(re), Role::ZeroForcing);
                p.push(Constraint::Equality(im), Role::ZeroForcing);
            }
        }
    }
    (p, vars)
}

/// The conic subproblem maximizing `r̃` at the given approximation point.
pub fn build_subproblem(
    h: &ChannelMatrix<f64>,
    omega: &OmegaSets,
    snr: f64,
    state: &ScaState,
    opts: &ScaOptions,
) -> ConicProblem {
    subproblem(h, omega, snr, state, opts, None).0
}

/// Scales a beamformer set to use the whole budget. More power never lowers
/// an SINR here: signal and interference grow together while noise stays.
fn fill_budget(beams: BeamformerSet<f64>, snr: f64) -> BeamformerSet<f64> {
    let p = beams.power();
    if p > 0.0 {
        beams.scaled((snr / p).sqrt())
    } else {
        beams
    }
}

fn equal_power(dirs: Vec<CVector<f64>>, snr: f64) -> Result<BeamformerSet<f64>> {
    let n = dirs.len() as f64;
    let per = (snr / n).sqrt();
    BeamformerSet::new(
        dirs.into_iter()
            .map(|d| d.normalized().map(|d| d.scaled(per)).unwrap_or(d))
            .collect(),
    )
}

fn matched_filter(h: &ChannelMatrix<f64>, omega: &OmegaSets, snr: f64) -> Result<BeamformerSet<f64>> {
    let l = h.antennas();
    let dirs = omega
        .omega
        .iter()
        .map(|t| {
            let mut w = CVector::zeros(l);
            for &k in t {
                w.axpy(Complex::new(1.0, 0.0), h.h(k));
            }
            w.normalized().unwrap_or_else(|| CVector::basis(l, 0))
        })
        .collect();
    equal_power(dirs, snr)
}

fn random_start(l: usize, streams: usize, snr: f64, seed: u64) -> Result<BeamformerSet<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dirs = (0..streams)
        .map(|_| {
            CVector::new(
                (0..l)
                    .map(|_| {
                        Complex::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng))
                    })
                    .collect(),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    equal_power(dirs, snr)
}

fn initial_beams(
    h: &ChannelMatrix<f64>,
    omega: &OmegaSets,
    snr: f64,
    opts: &ScaOptions,
    backend: &dyn SolverBackend,
) -> Result<BeamformerSet<f64>> {
    match &opts.init {
        ScaInit::ZfOptimal | ScaInit::ZfEqual if opts.zero_forcing => {
            let optimal = opts.init == ScaInit::ZfOptimal;
            Ok(zf_design(h, omega, snr, opts.n0, optimal, backend)?.beams)
        }
        ScaInit::ZfOptimal | ScaInit::ZfEqual => {
            // The better of ZF and the matched filter: ZF can leave a user
            // with zero gain, a stationary point SCA cannot escape.
            let optimal = opts.init == ScaInit::ZfOptimal;
            let mf = matched_filter(h, omega, snr)?;
            match zf_design(h, omega, snr, opts.n0, optimal, backend) {
                Ok(d) => {
                    let mf_rate = evaluate_mac(h, &mf, omega, opts.n0)?.bottleneck;
                    Ok(if d.rate >= mf_rate { d.beams } else { mf })
                }
                Err(Error::EmptyNullSpace { .. } | Error::DegenerateChannel { .. }) => Ok(mf),
                Err(e) => Err(e),
            }
        }
        ScaInit::MatchedFilter => matched_filter(h, omega, snr),
        ScaInit::Given(b) => {
            if b.len() != omega.streams() {
                return Err(Error::DimensionMismatch {
                    expected: omega.streams(),
                    found: b.len(),
                });
            }
            Ok(b.clone())
        }
    }
}

/// Projects every beam onto the null space of the served users outside its
/// target, so a start point satisfies the zero-forcing constraints.
fn project_zf(h: &ChannelMatrix<f64>, omega: &OmegaSets, beams: BeamformerSet<f64>) -> Result<BeamformerSet<f64>> {
    let l = h.antennas();
    let projected = omega
        .omega
        .iter()
        .zip(beams.beams())
        .map(|(target, w)| {
            let others: Vec<CVector<f64>> = omega
                .users
                .iter()
                .filter(|u| !target.contains(u))
                .map(|&u| h.h(u).clone())
                .collect();
            if others.is_empty() {
                return Ok(w.clone());
            }
            null_projector(&others, l)?.mul_vec(w)
        })
        .collect::<Result<Vec<_>>>()?;
    BeamformerSet::new(projected)
}

/// Solves one subproblem and returns the candidate beams, or the solver
/// status on failure.
fn step(
    h: &ChannelMatrix<f64>,
    omega: &OmegaSets,
    snr: f64,
    state: &ScaState,
    opts: &ScaOptions,
    backend: &dyn SolverBackend,
) -> std::result::Result<BeamformerSet<f64>, SolveStatus> {
    match opts.encoding {
        MacEncoding::GeoMean => {
            let (p, vars) = subproblem(h, omega, snr, state, opts, None);
            let sol = backend.solve(&p);
            if !sol.status.has_solution() {
                return Err(sol.status);
            }
            vars.beams(&sol.x, omega.streams())
                .map_err(|e| SolveStatus::Failed(e.to_string()))
        }
        MacEncoding::Bisection => {
            // r̃ = 2^{current rate} is feasible by tangency.
            let mut lo = state.objective().exp2();
            let min_gain = omega
                .users
                .iter()
                .map(|&k| h.h(k).norm_sqr())
                .fold(f64::INFINITY, f64::min);
            let mut hi = (1.0 + snr * min_gain / opts.n0).max(lo);
            let mut best: Option<BeamformerSet<f64>> = None;
            while hi - lo > opts.bisection_tol * lo {
                let mid = 0.5 * (lo + hi);
                let (p, vars) = subproblem(h, omega, snr, state, opts, Some(mid));
                let sol = backend.solve(&p);
                match (sol.status.has_solution(), vars.beams(&sol.x, omega.streams())) {
                    (true, Ok(b)) => {
                        lo = mid;
                        best = Some(b);
                    }
                    _ => hi = mid,
                }
            }
            Ok(best.unwrap_or_else(|| state.beams.clone()))
        }
    }
}

struct Run {
    state: ScaState,
    trace: Vec<TraceRecord>,
    failed: bool,
}

fn run_once(
    h: &ChannelMatrix<f64>,
    omega: &OmegaSets,
    snr: f64,
    init: BeamformerSet<f64>,
    run: usize,
    opts: &ScaOptions,
    backend: &dyn SolverBackend,
) -> Result<Run> {
    let mut state = ScaState::new(h, omega, fill_budget(init, snr), opts.n0)?;
    let mut trace = vec![TraceRecord {
        run,
        iteration: 0,
        objective: state.objective(),
        status: "init".into(),
    }];
    for it in 1..=opts.max_iter {
        let candidate = match step(h, omega, snr, &state, opts, backend) {
            Ok(b) => fill_budget(b, snr),
            Err(status) => {
                trace.push(TraceRecord {
                    run,
                    iteration: it,
                    objective: state.objective(),
                    status: format!("{status:?}"),
                });
                return Ok(Run {
                    state,
                    trace,
                    failed: true,
                });
            }
        };
        let eval = evaluate_mac(h, &candidate, omega, opts.n0)?;
        let old = state.objective();
        let new = eval.bottleneck;
        let accepted = new >= old;
        trace.push(TraceRecord {
            run,
            iteration: it,
            objective: new,
            status: if accepted { "accepted" } else { "rejected" }.into(),
        });
        if !accepted {
            break;
        }
        state.beams = candidate;
        state.gammas = eval.sinrs;
        state.iteration = it;
        state.history.push(new);
        if new - old <= opts.rel_tol * old.abs().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    Ok(Run {
        state,
        trace,
        failed: false,
    })
}

/// Max-min MAC-rate beamformers for one transmission.
///
/// Runs SCA from `opts.init`; if a subproblem fails, retries from up to
/// `opts.restarts` seeded random starts and returns the best iterate seen.
pub fn sca_maxmin_mac(
    h: &ChannelMatrix<f64>,
    omega: &OmegaSets,
    snr: f64,
    opts: &ScaOptions,
    backend: &dyn SolverBackend,
) -> Result<ScaOutcome> {
    if !(snr > 0.0) || !snr.is_finite() {
        return Err(Error::Parameter(format!("SNR must be positive, got {snr}")));
    }
    if omega.streams() == 0 {
        return Err(Error::Parameter("transmission has no streams".into()));
    }
    let mut best: Option<Run> = None;
    let mut trace = Vec::new();
    let mut restarts = 0;
    for run in 0..=opts.restarts {
        let init = if run == 0 {
            initial_beams(h, omega, snr, opts, backend)?
        } else {
            restarts += 1;
            random_start(h.antennas(), omega.streams(), snr, opts.seed ^ (run as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))?
        };
        let init = if opts.zero_forcing {
            project_zf(h, omega, init)?
        } else {
            init
        };
        let r = run_once(h, omega, snr, init, run, opts, backend)?;
        trace.extend(r.trace.iter().cloned());
        let failed = r.failed;
        if best
            .as_ref()
            .is_none_or(|b| r.state.objective() > b.state.objective())
        {
            best = Some(r);
        }
        if !failed {
            break;
        }
    }
    let best = best.ok_or(Error::InfeasibleDesign)?;
    let rate = best.state.objective();
    Ok(ScaOutcome {
        beams: best.state.beams,
        rate,
        history: best.state.history,
        trace,
        restarts,
    })
}
