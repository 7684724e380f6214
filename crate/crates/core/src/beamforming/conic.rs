//! Solver-neutral conic problems: affine expressions over real variables,
//! constraints tagged with the role they play, and the rewrite of
//! geometric-mean cones into second-order cones for backends that lack them.

use serde::Serialize;

/// Sparse affine expression `constant + Σ coef·x[var]`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AffineExpr {
    pub constant: f64,
    pub terms: Vec<(usize, f64)>,
}

impl AffineExpr {
    pub fn constant(c: f64) -> Self {
        Self {
            constant: c,
            terms: Vec::new(),
        }
    }

    pub fn var(i: usize) -> Self {
        Self::term(i, 1.0)
    }

    pub fn term(i: usize, coef: f64) -> Self {
        Self {
            constant: 0.0,
            terms: vec![(i, coef)],
        }
    }

    pub fn is_constant(&self) -> bool {
        self.terms.iter().all(|&(_, c)| c == 0.0)
    }

    pub fn add_term(&mut self, i: usize, coef: f64) -> &mut Self {
        self.terms.push((i, coef));
        self
    }

    pub fn add_constant(&mut self, c: f64) -> &mut Self {
        self.constant += c;
        self
    }

    pub fn plus(mut self, other: &AffineExpr) -> Self {
        self.constant += other.constant;
        self.terms.extend_from_slice(&other.terms);
        self
    }

    pub fn minus(self, other: &AffineExpr) -> Self {
        self.plus(&other.scaled(-1.0))
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            constant: self.constant * s,
            terms: self.terms.iter().map(|&(i, c)| (i, c * s)).collect(),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(i, c)| c * x[i]).sum::<f64>()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Constraint {
    /// `e = 0`.
    Equality(AffineExpr),
    /// `e ≥ 0`.
    NonNeg(AffineExpr),
    /// `‖x‖₂ ≤ t`.
    SecondOrder { t: AffineExpr, x: Vec<AffineExpr> },
    /// `t ≤ (Π x_i)^(1/n)` with every `x_i ≥ 0`.
    GeoMean { t: AffineExpr, x: Vec<AffineExpr> },
}

impl Constraint {
    /// Rotated cone `z² ≤ a·b`, `a, b ≥ 0`, written `‖(2z, a−b)‖ ≤ a+b`.
    pub fn rotated(z: &AffineExpr, a: &AffineExpr, b: &AffineExpr) -> Self {
        Self::rotated_vec(std::slice::from_ref(z), a, b)
    }

    /// `‖z‖² ≤ a·b`, `a, b ≥ 0`.
    pub fn rotated_vec(z: &[AffineExpr], a: &AffineExpr, b: &AffineExpr) -> Self {
        let mut x: Vec<AffineExpr> = z.iter().map(|e| e.scaled(2.0)).collect();
        x.push(a.clone().minus(b));
        Constraint::SecondOrder {
            t: a.clone().plus(b),
            x,
        }
    }

    /// Violation at `x` (zero when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        match self {
            Constraint::Equality(e) => e.eval(x).abs(),
            Constraint::NonNeg(e) => (-e.eval(x)).max(0.0),
            Constraint::SecondOrder { t, x: v } => {
                let n = v.iter().map(|e| e.eval(x).powi(2)).sum::<f64>().sqrt();
                (n - t.eval(x)).max(0.0)
            }
            Constraint::GeoMean { t, x: v } => {
                let vals: Vec<f64> = v.iter().map(|e| e.eval(x)).collect();
                let neg = vals.iter().map(|&a| (-a).max(0.0)).fold(0.0, f64::max);
                let gm = vals
                    .iter()
                    .map(|a| a.max(0.0).ln())
                    .sum::<f64>()
                    / vals.len() as f64;
                neg.max((t.eval(x) - gm.exp()).max(0.0))
            }
        }
    }
}

/// What a constraint encodes, so problems can be inspected and counted.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Role {
    /// `r̃^{|B|} ≤ 1 + Σ_{T∈B} γ` for one user and one stream subset.
    MacBound { user: usize, size: usize },
    /// Linearized SINR constraint of one user and one desired stream.
    Sinr { user: usize, stream: usize },
    Power,
    ZeroForcing,
    /// Variable bounds and cone-lowering helpers.
    Aux,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaggedConstraint {
    pub constraint: Constraint,
    pub role: Role,
}

/// `maximize objective` subject to the tagged constraints.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConicProblem {
    pub num_vars: usize,
    pub objective: AffineExpr,
    pub constraints: Vec<TaggedConstraint>,
}

impl ConicProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self) -> usize {
        self.num_vars += 1;
        self.num_vars - 1
    }

    pub fn add_vars(&mut self, n: usize) -> std::ops::Range<usize> {
        let start = self.num_vars;
        self.num_vars += n;
        start..self.num_vars
    }

    pub fn push(&mut self, constraint: Constraint, role: Role) {
        self.constraints.push(TaggedConstraint { constraint, role });
    }

    pub fn count(&self, pred: impl Fn(&Role) -> bool) -> usize {
        self.constraints.iter().filter(|c| pred(&c.role)).count()
    }

    pub fn has_geomean(&self) -> bool {
        self.constraints
            .iter()
            .any(|c| matches!(c.constraint, Constraint::GeoMean { .. }))
    }

    /// Largest constraint violation at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        self.constraints
            .iter()
            .map(|c| c.constraint.violation(x))
            .fold(0.0, f64::max)
    }

    /// Equivalent problem with every geometric-mean cone replaced by a
    /// binary tree of rotated second-order cones. Extra variables are
    /// appended after the original ones, which keep their indices.
    pub fn lower_geomean(&self) -> ConicProblem {
        let mut out = ConicProblem {
            num_vars: self.num_vars,
            objective: self.objective.clone(),
            constraints: Vec::with_capacity(self.constraints.len()),
        };
        for c in &self.constraints {
            match &c.constraint {
                Constraint::GeoMean { t, x } => lower_one(&mut out, t, x, c.role),
                other => out.push(other.clone(), c.role),
            }
        }
        out
    }
}

/// `t ≤ (Π x)^(1/n)`: pad the leaves to `2^m` with copies of `t` (giving
/// `t^{2^m} ≤ Π x · t^{2^m−n}`), then fold pairs with `z ≤ √(a·b)` up to the
/// root, which is `t` itself. Pairs of constants fold into a constant.
fn lower_one(out: &mut ConicProblem, t: &AffineExpr, x: &[AffineExpr], role: Role) {
    for e in x {
        out.push(Constraint::NonNeg(e.clone()), role);
    }
    if x.len() == 1 {
        out.push(Constraint::NonNeg(x[0].clone().minus(t)), role);
        return;
    }
    let width = x.len().next_power_of_two();
    let mut level: Vec<AffineExpr> = x.to_vec();
    level.resize(width, t.clone());
    while level.len() > 2 {
        level = level
            .chunks(2)
            .map(|pair| {
                let (a, b) = (&pair[0], &pair[1]);
                if a.is_constant() && b.is_constant() {
                    AffineExpr::constant((a.constant * b.constant).sqrt())
                } else {
                    let z = AffineExpr::var(out.add_var());
                    out.push(Constraint::rotated(&z, a, b), role);
                    z
                }
            })
            .collect();
    }
    let (a, b) = (&level[0], &level[1]);
    if a.is_constant() && b.is_constant() {
        let c = (a.constant * b.constant).sqrt();
        out.push(Constraint::NonNeg(AffineExpr::constant(c).minus(t)), role);
    } else {
        out.push(Constraint::rotated(t, a, b), role);
    }
}

/// What kinds of cones a backend accepts natively.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Capabilities {
    pub soc: bool,
    pub geomean: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum SolveStatus {
    Optimal,
    /// Solved to reduced accuracy.
    Inaccurate,
    Infeasible,
    Failed(String),
}

impl SolveStatus {
    pub fn has_solution(&self) -> bool {
        matches!(self, SolveStatus::Optimal | SolveStatus::Inaccurate)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConicSolution {
    pub status: SolveStatus,
    /// Primal point (original variables first).
    pub x: Vec<f64>,
    pub objective: f64,
}

/// A conic optimizer.
pub trait SolverBackend: Send + Sync {
    fn capabilities(&self) -> Capabilities;

    /// Solves a problem whose cones are all within the backend's
    /// capabilities.
    fn solve_native(&self, problem: &ConicProblem) -> ConicSolution;

    /// Solves any problem, lowering geometric-mean cones first if needed.
    /// Only the original variables are returned.
    fn solve(&self, problem: &ConicProblem) -> ConicSolution {
        if problem.has_geomean() && !self.capabilities().geomean {
            let mut sol = self.solve_native(&problem.lower_geomean());
            sol.x.truncate(problem.num_vars);
            sol
        } else {
            self.solve_native(problem)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_eval() {
        let mut e = AffineExpr::constant(1.0);
        e.add_term(0, 2.0).add_term(1, -1.0).add_term(0, 1.0);
        assert_eq!(e.eval(&[1.0, 5.0]), -1.0);
        assert_eq!(e.scaled(2.0).eval(&[1.0, 5.0]), -2.0);
        assert!(AffineExpr::constant(3.0).is_constant());
        assert!(!AffineExpr::var(0).is_constant());
    }

    #[test]
    fn rotated_cone_matches_product() {
        let c = Constraint::rotated(&AffineExpr::var(0), &AffineExpr::var(1), &AffineExpr::var(2));
        assert_eq!(c.violation(&[2.0, 1.0, 4.0]), 0.0);
        assert!(c.violation(&[2.1, 1.0, 4.0]) > 0.0);
        assert!(c.violation(&[0.0, -1.0, 4.0]) > 0.0);
    }

    /// Feasibility of `t ≤ geomean(x)` after lowering, found by completing the
    /// auxiliary variables with their tightest values bottom-up.
    fn lowered_feasible(xs: &[f64], t: f64) -> bool {
        let mut p = ConicProblem::new();
        let vars: Vec<usize> = (0..=xs.len()).map(|_| p.add_var()).collect();
        p.push(
            Constraint::GeoMean {
                t: AffineExpr::var(vars[0]),
                x: vars[1..].iter().map(|&v| AffineExpr::var(v)).collect(),
            },
            Role::Aux,
        );
        let low = p.lower_geomean();
        let mut x = vec![0.0; low.num_vars];
        x[0] = t;
        x[1..=xs.len()].copy_from_slice(xs);
        // aux vars are created bottom-up, each from two earlier values
        for c in &low.constraints {
            if let Constraint::SecondOrder { t: sum, x: parts } = &c.constraint {
                let two_z = &parts[0];
                let (i, _) = two_z.terms[0];
                if i >= p.num_vars {
                    let diff = parts[1].eval(&x);
                    let s = sum.eval(&x);
                    let (a, b) = ((s + diff) / 2.0, (s - diff) / 2.0);
                    x[i] = (a * b).max(0.0).sqrt();
                }
            }
        }
        low.max_violation(&x) <= 1e-12
    }

    #[test]
    fn lowering_preserves_geomean_sets() {
        for xs in [vec![2.0, 8.0], vec![1.0, 2.0, 4.0], vec![3.0, 1.0, 1.0, 1.0, 1.0]] {
            let gm = xs.iter().map(|v: &f64| v.ln()).sum::<f64>() / xs.len() as f64;
            let gm = gm.exp();
            assert!(lowered_feasible(&xs, gm * (1.0 - 1e-9)), "{xs:?}");
            assert!(!lowered_feasible(&xs, gm * (1.0 + 1e-6)), "{xs:?}");
        }
    }

    #[test]
    fn constant_leaves_collapse() {
        // t ≤ (s·1·1·1)^(1/4): the three ones fold without extra variables
        // except where they meet s or t.
        let mut p = ConicProblem::new();
        let t = p.add_var();
        let s = p.add_var();
        let mut x = vec![AffineExpr::var(s)];
        x.extend(std::iter::repeat_n(AffineExpr::constant(1.0), 3));
        p.push(
            Constraint::GeoMean {
                t: AffineExpr::var(t),
                x,
            },
            Role::MacBound { user: 0, size: 4 },
        );
        let low = p.lower_geomean();
        assert_eq!(low.num_vars, 3);
        assert!(!low.has_geomean());
        assert!(low
            .constraints
            .iter()
            .all(|c| c.role == Role::MacBound { user: 0, size: 4 }));
    }
}
