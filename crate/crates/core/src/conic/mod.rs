//! Conic programs with a linear objective and affine constraints into the
//! zero, nonnegative, second-order and PSD cones.
//!
//! Two methods share the problem description:
//!
//! * [`Method::InteriorPoint`]: primal-dual path following with
//!   Nesterov-Todd scaling and Mehrotra correction. Accurate to ~1e-9 in a
//!   few dozen iterations, including degenerate optima.
//! * [`Method::Admm`]: operator splitting with Ruiz equilibration, adaptive
//!   step size and infeasibility detection from iterate differences. Cheap
//!   iterations, slow on degenerate problems.
//!
//! Whichever method runs, the returned point is re-checked against every
//! constraint; `Feasible` means the worst relative violation is at most
//! `tol_feas`.

use std::fmt::Write as _;
use std::time::Duration;

use nalgebra::{DMatrix, DVector};

mod admm;
mod ipm;

/// Scalar affine function `constant + sum coef * x[var]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn constant(c: f64) -> Self {
        Self {
            terms: Vec::new(),
            constant: c,
        }
    }

    pub fn var(v: usize) -> Self {
        Self {
            terms: vec![(v, 1.0)],
            constant: 0.0,
        }
    }

    pub fn term(mut self, var: usize, coef: f64) -> Self {
        self.terms.push((var, coef));
        self
    }

    pub fn plus(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }

    pub fn scaled(mut self, f: f64) -> Self {
        for t in &mut self.terms {
            t.1 *= f;
        }
        self.constant *= f;
        self
    }

    /// `sum coef_k x[vars_k]` for a dense coefficient vector.
    pub fn dot(vars: &[usize], coefs: &[f64]) -> Self {
        Self {
            terms: vars.iter().copied().zip(coefs.iter().copied()).collect(),
            constant: 0.0,
        }
    }

    /// `|constant| + sum |coef * x|`.
    pub fn magnitude(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .fold(self.constant.abs(), |m, &(v, c)| m + (c * x[v]).abs())
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(v, c)| c * x[v]).sum::<f64>()
    }
}

/// Coefficient matrix of one variable inside a symmetric affine matrix:
/// sparse `entries` on the lower triangle (`(i, j)` with `i >= j` also sets
/// `(j, i)`) plus symmetric rank-two pieces `a b^T + b a^T`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SymTerm {
    pub var: usize,
    pub entries: Vec<(usize, usize, f64)>,
    pub outer: Vec<(DVector<f64>, DVector<f64>)>,
}

impl SymTerm {
    pub fn sparse(var: usize, entries: Vec<(usize, usize, f64)>) -> Self {
        Self {
            var,
            entries,
            outer: Vec::new(),
        }
    }

    /// The term `x[var] (a b^T + b a^T)`.
    pub fn outer(var: usize, a: DVector<f64>, b: DVector<f64>) -> Self {
        Self {
            var,
            entries: Vec::new(),
            outer: vec![(a, b)],
        }
    }

    /// Dense coefficient matrix.
    pub fn matrix(&self, dim: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(dim, dim);
        for &(i, j, c) in &self.entries {
            m[(i, j)] += c;
            if i != j {
                m[(j, i)] += c;
            }
        }
        for (a, b) in &self.outer {
            m += a * b.transpose() + b * a.transpose();
        }
        m
    }
}

/// Symmetric affine matrix `constant + sum_k x[var_k] M_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymExpr {
    pub constant: DMatrix<f64>,
    pub terms: Vec<SymTerm>,
}

impl SymExpr {
    pub fn dim(&self) -> usize {
        self.constant.nrows()
    }

    pub fn eval(&self, x: &[f64]) -> DMatrix<f64> {
        let mut m = self.constant.clone();
        for t in &self.terms {
            let xv = x[t.var];
            for &(i, j, c) in &t.entries {
                m[(i, j)] += c * xv;
                if i != j {
                    m[(j, i)] += c * xv;
                }
            }
            for (a, b) in &t.outer {
                m.ger(xv, a, b, 1.0);
                m.ger(xv, b, a, 1.0);
            }
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Constraint {
    /// Each expression `>= 0`.
    Nonneg(Vec<LinExpr>),
    /// Each expression `= 0`.
    LinearEq(Vec<LinExpr>),
    /// `head >= ||tail||_2`.
    SecondOrder { head: LinExpr, tail: Vec<LinExpr> },
    /// `bound >= ||factor * x[vars]||_2^2`.
    QuadUpper {
        bound: LinExpr,
        factor: DMatrix<f64>,
        vars: Vec<usize>,
    },
    /// Matrix `⪰ 0`.
    Psd(SymExpr),
}

impl Constraint {
    /// Largest constant term.
    fn constant_scale(&self) -> f64 {
        match self {
            Self::Nonneg(es) | Self::LinearEq(es) => {
                es.iter().fold(0.0_f64, |m, e| m.max(e.constant.abs()))
            }
            Self::SecondOrder { head, tail } => tail
                .iter()
                .fold(head.constant.abs(), |m, e| m.max(e.constant.abs())),
            Self::QuadUpper { bound, .. } => bound.constant.abs(),
            Self::Psd(s) => s.constant.amax(),
        }
    }

    /// Size of the summed terms at `x`, the floating-point scale of the residual.
    fn scale(&self, x: &[f64]) -> f64 {
        let lin =
            |es: &mut dyn Iterator<Item = &LinExpr>| es.fold(0.0_f64, |m, e| m.max(e.magnitude(x)));
        match self {
            Self::Nonneg(es) | Self::LinearEq(es) => lin(&mut es.iter()),
            Self::SecondOrder { head, tail } => lin(&mut std::iter::once(head).chain(tail)),
            Self::QuadUpper {
                bound,
                factor,
                vars,
            } => {
                let v = DVector::from_iterator(vars.len(), vars.iter().map(|&k| x[k].abs()));
                bound.magnitude(x).max((factor.abs() * v).norm_squared())
            }
            Self::Psd(s) => {
                let dim = s.dim();
                s.terms.iter().fold(s.constant.amax(), |acc, t| {
                    acc + x[t.var].abs() * t.matrix(dim).amax()
                })
            }
        }
    }

    /// Absolute violation at `x`.
    pub fn violation(&self, x: &[f64]) -> f64 {
        match self {
            Self::Nonneg(es) => es.iter().fold(0.0_f64, |m, e| m.max(-e.eval(x))),
            Self::LinearEq(es) => es.iter().fold(0.0_f64, |m, e| m.max(e.eval(x).abs())),
            Self::SecondOrder { head, tail } => {
                let norm = tail.iter().map(|e| e.eval(x).powi(2)).sum::<f64>().sqrt();
                (norm - head.eval(x)).max(0.0)
            }
            Self::QuadUpper {
                bound,
                factor,
                vars,
            } => {
                let v = DVector::from_iterator(vars.len(), vars.iter().map(|&k| x[k]));
                ((factor * v).norm_squared() - bound.eval(x)).max(0.0)
            }
            Self::Psd(s) => (-crate::spectral::min_eigenvalue(&s.eval(x))).max(0.0),
        }
    }

    /// Violation divided by `1 +` the largest term magnitude at `x`.
    pub fn relative_violation(&self, x: &[f64]) -> f64 {
        self.violation(x) / (1.0 + self.scale(x))
    }

    fn kind(&self) -> &'static str {
        match self {
            Self::Nonneg(_) => "nonneg",
            Self::LinearEq(_) => "eq",
            Self::SecondOrder { .. } => "soc",
            Self::QuadUpper { .. } => "quad",
            Self::Psd(_) => "psd",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConicProblem {
    pub num_vars: usize,
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
}

impl ConicProblem {
    pub fn new(num_vars: usize) -> Self {
        Self {
            num_vars,
            objective: vec![0.0; num_vars],
            constraints: Vec::new(),
        }
    }

    pub fn minimize(mut self, objective: Vec<f64>) -> Self {
        assert_eq!(objective.len(), self.num_vars);
        self.objective = objective;
        self
    }

    pub fn push(&mut self, c: Constraint) {
        self.constraints.push(c);
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Largest relative violation over all constraints.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        self.constraints
            .iter()
            .fold(0.0_f64, |m, c| m.max(c.relative_violation(x)))
    }

    /// Human-readable listing of the program.
    pub fn describe(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "variables: {}", self.num_vars);
        let obj: Vec<String> = self
            .objective
            .iter()
            .enumerate()
            .filter(|(_, &c)| c != 0.0)
            .map(|(i, c)| format!("{c:+}*x{i}"))
            .collect();
        let _ = writeln!(out, "minimize {}", obj.join(" "));
        for (k, c) in self.constraints.iter().enumerate() {
            let detail = match c {
                Constraint::Nonneg(es) | Constraint::LinearEq(es) => format!("{} rows", es.len()),
                Constraint::SecondOrder { tail, .. } => format!("cone dim {}", tail.len() + 1),
                Constraint::QuadUpper { factor, vars, .. } => {
                    format!(
                        "factor {}x{} over {} vars",
                        factor.nrows(),
                        factor.ncols(),
                        vars.len()
                    )
                }
                Constraint::Psd(s) => format!("{0}x{0} matrix, {1} terms", s.dim(), s.terms.len()),
            };
            let _ = writeln!(out, "c{k}: {} {detail}", c.kind());
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Method {
    #[default]
    InteriorPoint,
    Admm,
}

#[derive(Debug, Clone)]
pub struct SolverSettings {
    pub method: Method,
    /// Relative violation accepted for a `Feasible` outcome.
    pub tol_feas: f64,
    /// Interior point: iteration cap.
    pub ipm_max_iters: usize,
    /// Interior point: residual tolerance relative to the data norms.
    pub ipm_feas_tol: f64,
    /// Interior point: duality gap tolerance relative to the objective.
    pub ipm_gap_tol: f64,
    /// ADMM: absolute and relative residual tolerances.
    pub eps_abs: f64,
    pub eps_rel: f64,
    /// Threshold for the infeasibility certificates.
    pub eps_infeas: f64,
    /// ADMM iteration cap.
    pub max_iters: usize,
    pub rho: f64,
    pub sigma: f64,
    /// Over-relaxation factor in `(0, 2)`.
    pub alpha: f64,
    pub adaptive_rho: bool,
    pub check_every: usize,
    pub scaling_iters: usize,
    pub time_limit: Option<Duration>,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            method: Method::InteriorPoint,
            tol_feas: 1e-6,
            ipm_max_iters: 100,
            ipm_feas_tol: 1e-8,
            ipm_gap_tol: 1e-8,
            eps_abs: 1e-7,
            eps_rel: 1e-6,
            eps_infeas: 1e-6,
            max_iters: 50_000,
            rho: 0.1,
            sigma: 1e-6,
            alpha: 1.6,
            adaptive_rho: true,
            check_every: 10,
            scaling_iters: 10,
            time_limit: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Feasible,
    Infeasible,
    Unbounded,
    IterLimit,
}

/// Final iterate of an ADMM solve, reused as a starting point. The interior
/// point method ignores it.
#[derive(Debug, Clone, Default)]
pub struct WarmStart {
    pub x: Vec<f64>,
    pub s: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub status: SolveStatus,
    pub point: Vec<f64>,
    pub max_violation: f64,
    pub objective_value: f64,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// Explanation attached to `Infeasible` and `Unbounded`.
    pub certificate: Option<String>,
    /// Running best objective over feasible iterates, one entry per improvement.
    pub best_feasible_trace: Vec<f64>,
    pub warm: WarmStart,
}

impl SolveOutcome {
    pub fn is_feasible(&self) -> bool {
        self.status == SolveStatus::Feasible
    }
}

/// Solves `p`, optionally warm-started from a previous solve.
pub fn solve_warm(
    p: &ConicProblem,
    cfg: &SolverSettings,
    warm: Option<&WarmStart>,
) -> SolveOutcome {
    match cfg.method {
        Method::InteriorPoint => ipm::solve(p, cfg),
        Method::Admm => admm::solve(p, cfg, warm),
    }
}

pub fn solve(p: &ConicProblem, cfg: &SolverSettings) -> SolveOutcome {
    solve_warm(p, cfg, None)
}

/// Picks the returned point among the last iterate and the best feasible one.
fn finish(
    p: &ConicProblem,
    cfg: &SolverSettings,
    converged: bool,
    last: Vec<f64>,
    best: Option<(f64, Vec<f64>)>,
) -> (Vec<f64>, SolveStatus) {
    let mut chosen =
        (p.max_violation(&last) <= cfg.tol_feas).then(|| (p.objective_value(&last), last.clone()));
    if let Some((obj, xb)) = best {
        if chosen.as_ref().is_none_or(|(o, _)| obj < *o) && p.max_violation(&xb) <= cfg.tol_feas {
            chosen = Some((obj, xb));
        }
    }
    match chosen {
        Some((_, x)) if converged => (x, SolveStatus::Feasible),
        Some((_, x)) => (x, SolveStatus::IterLimit),
        None => (last, SolveStatus::IterLimit),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const METHODS: [Method; 2] = [Method::InteriorPoint, Method::Admm];

    fn cfg(method: Method) -> SolverSettings {
        SolverSettings {
            method,
            ..SolverSettings::default()
        }
    }

    #[test]
    fn scalar_lower_bound() {
        for method in METHODS {
            // min x s.t. x - 3 >= 0
            let mut p = ConicProblem::new(1).minimize(vec![1.0]);
            p.push(Constraint::Nonneg(vec![LinExpr::var(0).plus(-3.0)]));
            let out = solve(&p, &cfg(method));
            assert_eq!(out.status, SolveStatus::Feasible, "{method:?}");
            assert!((out.point[0] - 3.0).abs() < 1e-6, "{:?}", out.point);
        }
    }

    #[test]
    fn quadratic_upper_bound_with_fixed_point() {
        for method in METHODS {
            // min phi s.t. phi >= ||mu||^2, mu = (1, 2)
            let mut p = ConicProblem::new(3).minimize(vec![0.0, 0.0, 1.0]);
            p.push(Constraint::LinearEq(vec![
                LinExpr::var(0).plus(-1.0),
                LinExpr::var(1).plus(-2.0),
            ]));
            p.push(Constraint::QuadUpper {
                bound: LinExpr::var(2),
                factor: DMatrix::identity(2, 2),
                vars: vec![0, 1],
            });
            let out = solve(&p, &cfg(method));
            assert_eq!(out.status, SolveStatus::Feasible, "{method:?}");
            assert!((out.point[2] - 5.0).abs() < 1e-5, "{:?}", out.point);
        }
    }

    #[test]
    fn diagonal_lmi() {
        for method in METHODS {
            // min a0 + a1 s.t. diag(a) - diag(2, -1) ⪰ 0
            let mut p = ConicProblem::new(2).minimize(vec![1.0, 1.0]);
            p.push(Constraint::Psd(SymExpr {
                constant: DMatrix::from_diagonal(&DVector::from_column_slice(&[-2.0, 1.0])),
                terms: vec![
                    SymTerm::sparse(0, vec![(0, 0, 1.0)]),
                    SymTerm::sparse(1, vec![(1, 1, 1.0)]),
                ],
            }));
            let out = solve(&p, &cfg(method));
            assert_eq!(out.status, SolveStatus::Feasible, "{method:?}");
            assert!(
                (out.point[0] - 2.0).abs() < 1e-5 && (out.point[1] + 1.0).abs() < 1e-5,
                "{:?}",
                out.point
            );
            assert!((out.objective_value - 1.0).abs() <= 1e-4);
        }
    }

    #[test]
    fn dense_lmi_matches_eigenvalue() {
        for method in METHODS {
            // min t s.t. t I - M ⪰ 0 has optimum lambda_max(M)
            let m = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 4.0]);
            let mut p = ConicProblem::new(1).minimize(vec![1.0]);
            p.push(Constraint::Psd(SymExpr {
                constant: -m.clone(),
                terms: vec![SymTerm::sparse(
                    0,
                    vec![(0, 0, 1.0), (1, 1, 1.0), (2, 2, 1.0)],
                )],
            }));
            let out = solve(&p, &cfg(method));
            let lmax = m.symmetric_eigenvalues().max();
            assert_eq!(out.status, SolveStatus::Feasible, "{method:?}");
            assert!((out.point[0] - lmax).abs() <= 1e-4 * lmax);
        }
    }

    #[test]
    fn single_ball_soc() {
        for method in METHODS {
            // min x0 + x1 s.t. 1 >= ||(x0, x1)||: optimum -sqrt(2)
            let mut p = ConicProblem::new(2).minimize(vec![1.0, 1.0]);
            p.push(Constraint::SecondOrder {
                head: LinExpr::constant(1.0),
                tail: vec![LinExpr::var(0), LinExpr::var(1)],
            });
            let out = solve(&p, &cfg(method));
            assert_eq!(out.status, SolveStatus::Feasible, "{method:?}");
            assert!((out.objective_value + 2f64.sqrt()).abs() <= 1e-4 * 2f64.sqrt());
        }
    }

    #[test]
    fn detects_infeasibility() {
        for method in METHODS {
            // x >= 1 and -x >= 0
            let mut p = ConicProblem::new(1).minimize(vec![1.0]);
            p.push(Constraint::Nonneg(vec![
                LinExpr::var(0).plus(-1.0),
                LinExpr::var(0).scaled(-1.0),
            ]));
            let out = solve(&p, &cfg(method));
            assert_eq!(out.status, SolveStatus::Infeasible, "{method:?}");
            assert!(out.certificate.is_some());

            // -x >= ||(1)|| with x >= 0
            let mut p = ConicProblem::new(1).minimize(vec![0.0]);
            p.push(Constraint::Nonneg(vec![LinExpr::var(0)]));
            p.push(Constraint::SecondOrder {
                head: LinExpr::var(0).scaled(-1.0),
                tail: vec![LinExpr::constant(1.0)],
            });
            assert_eq!(
                solve(&p, &cfg(method)).status,
                SolveStatus::Infeasible,
                "{method:?}"
            );
        }
    }

    #[test]
    fn detects_unboundedness() {
        for method in METHODS {
            let mut p = ConicProblem::new(1).minimize(vec![1.0]);
            p.push(Constraint::Nonneg(vec![LinExpr::var(0).scaled(-1.0)]));
            assert_eq!(
                solve(&p, &cfg(method)).status,
                SolveStatus::Unbounded,
                "{method:?}"
            );
        }
    }

    #[test]
    fn feasible_points_reverify_and_trace_is_monotone() {
        for method in METHODS {
            let m = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 2.0, 1.0, 0.0, 0.5, 2.0, 0.5, 0.0]);
            let mut p = ConicProblem::new(4).minimize(vec![1.0, 1.0, 1.0, 1.0]);
            p.push(Constraint::Psd(SymExpr {
                constant: -m,
                terms: (0..3)
                    .map(|i| SymTerm::sparse(i, vec![(i, i, 1.0)]))
                    .collect(),
            }));
            p.push(Constraint::QuadUpper {
                bound: LinExpr::var(3),
                factor: DMatrix::identity(1, 1),
                vars: vec![0],
            });
            let out = solve(&p, &cfg(method));
            assert_eq!(out.status, SolveStatus::Feasible, "{method:?}");
            for c in &p.constraints {
                assert!(c.relative_violation(&out.point) <= 1e-6);
            }
            assert!(out.best_feasible_trace.windows(2).all(|w| w[1] <= w[0]));
            assert!(p.describe().contains("psd 3x3"));
        }
    }
}
