//! [`SolverBackend`] on top of the Clarabel interior-point solver.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettings, DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};

use super::conic::{
    AffineExpr, Capabilities, ConicProblem, ConicSolution, Constraint, SolveStatus, SolverBackend,
};

/// Clarabel with configurable tolerances. Geometric-mean cones are lowered
/// to second-order cones unless `native_geomean` is set, in which case they
/// map onto Clarabel's generalized power cone.
#[derive(Clone, Debug)]
pub struct ClarabelBackend {
    pub tol_gap: f64,
    pub tol_feas: f64,
    pub max_iter: u32,
    pub native_geomean: bool,
}

impl Default for ClarabelBackend {
    fn default() -> Self {
        Self {
            tol_gap: 1e-9,
            tol_feas: 1e-9,
            max_iter: 200,
            native_geomean: false,
        }
    }
}

impl ClarabelBackend {
    pub fn with_native_geomean() -> Self {
        Self {
            native_geomean: true,
            ..Self::default()
        }
    }

    fn settings(&self) -> DefaultSettings<f64> {
        DefaultSettingsBuilder::default()
            .verbose(false)
            .max_iter(self.max_iter)
            .tol_gap_abs(self.tol_gap)
            .tol_gap_rel(self.tol_gap)
            .tol_feas(self.tol_feas)
            .build()
            .expect("valid clarabel settings")
    }
}

/// Row builder for `A x + s = b, s ∈ K`. A cone row holding expression `e`
/// needs `s = e(x)`, i.e. `A = −coef` and `b = constant`.
#[derive(Default)]
struct Rows {
    i: Vec<usize>,
    j: Vec<usize>,
    v: Vec<f64>,
    b: Vec<f64>,
}

impl Rows {
    fn push(&mut self, e: &AffineExpr) {
        let row = self.b.len();
        for &(col, coef) in &e.terms {
            if coef != 0.0 {
                self.i.push(row);
                self.j.push(col);
                self.v.push(-coef);
            }
        }
        self.b.push(e.constant);
    }
}

impl SolverBackend for ClarabelBackend {
    fn capabilities(&self) -> Capabilities {
        Capabilities {
            soc: true,
            geomean: self.native_geomean,
        }
    }

    fn solve_native(&self, problem: &ConicProblem) -> ConicSolution {
        let n = problem.num_vars;
        let mut rows = Rows::default();
        let mut cones = Vec::new();

        // Clarabel wants cones of one kind grouped; emit zero and
        // nonnegative rows first, then the rest in order.
        let eqs: Vec<&AffineExpr> = problem
            .constraints
            .iter()
            .filter_map(|c| match &c.constraint {
                Constraint::Equality(e) => Some(e),
                _ => None,
            })
            .collect();
        if !eqs.is_empty() {
            eqs.iter().for_each(|e| rows.push(e));
            cones.push(SupportedConeT::ZeroConeT(eqs.len()));
        }
        let nonneg: Vec<&AffineExpr> = problem
            .constraints
            .iter()
            .filter_map(|c| match &c.constraint {
                Constraint::NonNeg(e) => Some(e),
                _ => None,
            })
            .collect();
        if !nonneg.is_empty() {
            nonneg.iter().for_each(|e| rows.push(e));
            cones.push(SupportedConeT::NonnegativeConeT(nonneg.len()));
        }
        for c in &problem.constraints {
            match &c.constraint {
                Constraint::SecondOrder { t, x } => {
                    rows.push(t);
                    x.iter().for_each(|e| rows.push(e));
                    cones.push(SupportedConeT::SecondOrderConeT(x.len() + 1));
                }
                Constraint::GeoMean { t, x } => {
                    if !self.native_geomean {
                        return ConicSolution {
                            status: SolveStatus::Failed("geometric-mean cone not supported".into()),
                            x: vec![0.0; n],
                            objective: f64::NAN,
                        };
                    }
                    // Π x_i^{1/n} ≥ |t|
                    x.iter().for_each(|e| rows.push(e));
                    rows.push(t);
                    let w = 1.0 / x.len() as f64;
                    cones.push(SupportedConeT::GenPowerConeT(vec![w; x.len()], 1));
                }
                _ => {}
            }
        }

        let m = rows.b.len();
        let a = CscMatrix::new_from_triplets(m, n, rows.i, rows.j, rows.v);
        let p = CscMatrix::zeros((n, n));
        let mut q = vec![0.0; n];
        for &(i, c) in &problem.objective.terms {
            q[i] -= c;
        }

        let mut solver = match DefaultSolver::new(&p, &q, &a, &rows.b, &cones, self.settings()) {
            Ok(s) => s,
            Err(e) => {
                return ConicSolution {
                    status: SolveStatus::Failed(format!("setup: {e}")),
                    x: vec![0.0; n],
                    objective: f64::NAN,
                }
            }
        };
        solver.solve();
        let sol = &solver.solution;
        let status = match sol.status {
            SolverStatus::Solved => SolveStatus::Optimal,
            SolverStatus::AlmostSolved => SolveStatus::Inaccurate,
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
                SolveStatus::Infeasible
            }
            other => SolveStatus::Failed(format!("{other:?}")),
        };
        let objective = problem.objective.eval(&sol.x);
        ConicSolution {
            status,
            x: sol.x.clone(),
            objective,
        }
    }
}
