//! Lower bound for the connecting tree problem and its maximization.
//!
//! For a diagonal perturbation `alpha` and a monotone weight sequence
//! `mu >= 0` with `diag(alpha) + mu mu^T - A ⪰ 0`, every tree `T` satisfies
//!
//! ```text
//! tr D(T) A >= c sum_ij A_ij - (c sum_i alpha_i + mu^T P(H(mu)) mu),   c = (n - 1) / 2,
//! ```
//!
//! where `H(mu)` is the Huffman tree of `mu`. [`maximize_lb`] searches for
//! good parameters by constraint generation over Huffman trees, alternating a
//! linearized SDP step with an exact `mu` adjustment on the hyperboloid.
//!
//! Every iterate is repaired before it is scored (clamped, made monotone,
//! `alpha` shifted until the matrix inequality holds in floating point), so
//! the reported bound never depends on the accuracy of the conic solver.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::conic::{
    self, ConicProblem, Constraint, LinExpr, SolveOutcome, SolveStatus, SolverSettings, SymExpr,
    SymTerm, WarmStart,
};
use crate::error::{Error, Result};
use crate::graph::{p_matrix, p_quadratic_form, DegreeSequence, FlowMatrix, LabeledTree};
use crate::huffman::{greedy_tree, huffman_tree, is_monotone, TieBreakPolicy};
use crate::spectral::{self, psd_sqrt};

/// Relative tolerance on `lambda_min(diag(alpha) + mu mu^T - A)` accepted by [`lb_value`].
pub const BMI_TOL_REL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LBParams {
    pub alpha: Vec<f64>,
    pub mu: Vec<f64>,
    pub phi: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Relative improvement below which the alternation stops.
    pub delta: f64,
    pub max_cg_rounds: usize,
    pub max_mmad_rounds: usize,
    /// Relative slack in the constraint-generation stopping test.
    pub cg_slack: f64,
    /// Eigenvalues of `A - diag(alpha)` below this fraction of the spectral
    /// radius are treated as zero in the `mu` adjustment.
    pub zero_eig_rel: f64,
    #[serde(skip)]
    pub backend: SolverSettings,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            delta: 1e-6,
            max_cg_rounds: 50,
            max_mmad_rounds: 100,
            cg_slack: 1e-9,
            zero_eig_rel: 1e-8,
            backend: SolverSettings::default(),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = self.delta > 0.0
            && self.cg_slack > 0.0
            && self.zero_eig_rel > 0.0
            && self.backend.tol_feas > 0.0
            && self.max_cg_rounds > 0
            && self.max_mmad_rounds > 0
            && self.backend.max_iters > 0;
        if positive {
            Ok(())
        } else {
            Err(Error::Solver("solver settings must be positive".into()))
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Counters {
    /// Constraint-generation rounds (calls to the relaxed solver).
    pub cg_rounds: usize,
    /// Linearize/adjust rounds summed over all relaxed solves.
    pub mmad_rounds: usize,
    /// Conic solver iterations summed over all subproblems.
    pub backend_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    /// `lambda_min(diag(alpha) + mu mu^T - A)`.
    pub bmi_min_eigenvalue: f64,
    pub min_mu: f64,
    pub monotone: bool,
    /// `phi - max_H mu^T P(H) mu` over the generated trees.
    pub phi_slack: f64,
    /// `mu^T P(H) mu - phi` for the Huffman tree of `mu`; positive means a cut was still violated.
    pub separation_gap: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LBCertificate {
    pub n: usize,
    pub degrees: DegreeSequence,
    pub params: LBParams,
    pub lb: f64,
    pub huffman_set: Vec<LabeledTree>,
    pub iterations: Counters,
    pub feasibility: FeasibilityReport,
    /// False when a round limit, solver failure or inconsistent step ended the search.
    pub converged: bool,
    pub notes: Vec<String>,
    pub seconds: f64,
}

impl LBCertificate {
    /// Recomputes the bound from `params` alone, checking feasibility.
    pub fn recompute(&self, a: &FlowMatrix) -> Result<f64> {
        lb_value(&self.params.alpha, &self.params.mu, a, &self.degrees)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

fn check_dims(a: &FlowMatrix, d: &DegreeSequence, len: usize) -> Result<()> {
    if a.n() != d.len() {
        return Err(Error::DimensionMismatch {
            expected: d.len(),
            found: a.n(),
        });
    }
    if len != d.len() {
        return Err(Error::DimensionMismatch {
            expected: d.len(),
            found: len,
        });
    }
    Ok(())
}

fn half_n_minus_one(n: usize) -> f64 {
    (n as f64 - 1.0) / 2.0
}

fn bmi_matrix(alpha: &[f64], mu: &[f64], a: &FlowMatrix) -> DMatrix<f64> {
    let n = a.n();
    let m = DVector::from_column_slice(mu);
    let mut out = &m * m.transpose() - a.matrix();
    for i in 0..n {
        out[(i, i)] += alpha[i];
    }
    out
}

fn bmi_scale(a: &FlowMatrix) -> f64 {
    1.0 + a.matrix().norm()
}

/// The bound formula without feasibility checks. Only a lower bound when the
/// parameters are feasible; see [`lb_value`].
pub fn lb_value_unchecked(
    alpha: &[f64],
    mu: &[f64],
    a: &FlowMatrix,
    d: &DegreeSequence,
) -> Result<f64> {
    check_dims(a, d, alpha.len())?;
    check_dims(a, d, mu.len())?;
    let c = half_n_minus_one(d.len());
    let h = huffman_tree(mu, d, &TieBreakPolicy::LowestIndex)?;
    let quad = p_quadratic_form(mu, &h)?;
    Ok(c * a.total() - (c * alpha.iter().sum::<f64>() + quad))
}

/// Bound value after checking `mu >= 0`, monotonicity and the matrix inequality.
pub fn lb_value(alpha: &[f64], mu: &[f64], a: &FlowMatrix, d: &DegreeSequence) -> Result<f64> {
    check_dims(a, d, alpha.len())?;
    check_dims(a, d, mu.len())?;
    if alpha.iter().chain(mu).any(|v| !v.is_finite()) {
        return Err(Error::InfeasibleParams("non-finite parameter".into()));
    }
    if let Some(v) = mu.iter().find(|&&v| v < 0.0) {
        return Err(Error::InfeasibleParams(format!("negative weight {v}")));
    }
    if !is_monotone(mu, d)? {
        return Err(Error::InfeasibleParams(
            "weights are not monotone in the degrees".into(),
        ));
    }
    let lmin = spectral::min_eigenvalue(&bmi_matrix(alpha, mu, a));
    if lmin < -BMI_TOL_REL * bmi_scale(a) {
        return Err(Error::InfeasibleParams(format!(
            "diag(alpha) + mu mu^T - A has eigenvalue {lmin:e}"
        )));
    }
    lb_value_unchecked(alpha, mu, a, d)
}

/// A Huffman tree with the square-root factor of its `P` matrix.
#[derive(Debug, Clone)]
struct Cut {
    tree: LabeledTree,
    factor: DMatrix<f64>,
}

impl Cut {
    fn new(tree: LabeledTree) -> Result<Self> {
        let factor = psd_sqrt(&p_matrix(&tree))?;
        Ok(Self { tree, factor })
    }
}

/// Shared data of one instance.
struct Instance<'a> {
    a: &'a FlowMatrix,
    d: &'a DegreeSequence,
    c: f64,
    classes: Vec<(usize, Vec<usize>)>,
}

impl<'a> Instance<'a> {
    fn new(a: &'a FlowMatrix, d: &'a DegreeSequence) -> Result<Self> {
        check_dims(a, d, d.len())?;
        Ok(Self {
            a,
            d,
            c: half_n_minus_one(d.len()),
            classes: d.internal_classes(),
        })
    }

    fn n(&self) -> usize {
        self.d.len()
    }

    /// Number of auxiliary variables separating consecutive degree classes.
    fn aux_count(&self) -> usize {
        self.classes.len().saturating_sub(1)
    }

    /// `mu >= 0` and `mu_i <= t_k <= mu_j` for `i` in class `k`, `j` in class `k + 1`.
    fn mu_constraints(&self, p: &mut ConicProblem, mu_off: usize, aux_off: usize) {
        let n = self.n();
        p.push(Constraint::Nonneg(
            (0..n).map(|i| LinExpr::var(mu_off + i)).collect(),
        ));
        let mut rows = Vec::new();
        for (k, pair) in self.classes.windows(2).enumerate() {
            let t = aux_off + k;
            for &i in &pair[0].1 {
                rows.push(LinExpr::var(t).term(mu_off + i, -1.0));
            }
            for &j in &pair[1].1 {
                rows.push(LinExpr::var(mu_off + j).term(t, -1.0));
            }
        }
        if !rows.is_empty() {
            p.push(Constraint::Nonneg(rows));
        }
    }

    fn cut_constraints(&self, p: &mut ConicProblem, cuts: &[Cut], mu_off: usize, phi: usize) {
        let vars: Vec<usize> = (mu_off..mu_off + self.n()).collect();
        for cut in cuts {
            p.push(Constraint::QuadUpper {
                bound: LinExpr::var(phi),
                factor: cut.factor.clone(),
                vars: vars.clone(),
            });
        }
    }

    fn objective(&self, params: &LBParams) -> f64 {
        self.c * params.alpha.iter().sum::<f64>() + params.phi
    }

    fn max_cut_value(&self, mu: &[f64], cuts: &[Cut]) -> f64 {
        cuts.iter()
            .map(|cut| p_quadratic_form(mu, &cut.tree).expect("dimensions checked"))
            .fold(0.0_f64, f64::max)
    }

    /// Projects onto `mu >= 0` and monotone weights, shifts `alpha` until the
    /// matrix inequality holds, and sets `phi` to the largest cut value.
    fn repair(&self, mut alpha: Vec<f64>, mut mu: Vec<f64>, cuts: &[Cut]) -> LBParams {
        for m in &mut mu {
            if !(*m > 0.0) {
                *m = 0.0;
            }
        }
        let mut floor = 0.0_f64;
        for (_, members) in &self.classes {
            let mut top = floor;
            for &v in members {
                mu[v] = mu[v].max(floor);
                top = top.max(mu[v]);
            }
            floor = top;
        }
        let m = bmi_matrix(&alpha, &mu, self.a);
        let lmin = spectral::min_eigenvalue(&m);
        let margin = 1e-12 * (1.0 + m.amax()) * self.n() as f64;
        if lmin < margin {
            let shift = margin - lmin;
            alpha.iter_mut().for_each(|x| *x += shift);
        }
        let phi = self.max_cut_value(&mu, cuts);
        LBParams { alpha, mu, phi }
    }

    fn lb_of(&self, params: &LBParams) -> Result<f64> {
        lb_value(&params.alpha, &params.mu, self.a, self.d)
    }
}

struct StepResult {
    params: LBParams,
    outcome: SolveOutcome,
}

fn accept(outcome: &SolveOutcome, cfg: &SolverConfig) -> bool {
    match outcome.status {
        SolveStatus::Feasible => true,
        SolveStatus::IterLimit => outcome.max_violation <= cfg.backend.tol_feas,
        SolveStatus::Infeasible | SolveStatus::Unbounded => false,
    }
}

/// Linearized step: minimize `phi + c sum alpha` over
/// `diag(alpha) + mu nu^T + nu mu^T - nu nu^T - A ⪰ 0` with the weight and cut constraints.
fn linearized_step(
    inst: &Instance<'_>,
    cuts: &[Cut],
    nu: &[f64],
    cfg: &SolverConfig,
    warm: Option<&WarmStart>,
) -> Result<StepResult> {
    let n = inst.n();
    let (alpha_off, mu_off, phi, aux_off) = (0, n, 2 * n, 2 * n + 1);
    let num_vars = aux_off + inst.aux_count();
    let mut objective = vec![0.0; num_vars];
    objective[alpha_off..alpha_off + n]
        .iter_mut()
        .for_each(|x| *x = inst.c);
    objective[phi] = 1.0;
    let mut p = ConicProblem::new(num_vars).minimize(objective);

    let nu_v = DVector::from_column_slice(nu);
    let constant = -(&nu_v * nu_v.transpose()) - inst.a.matrix();
    let mut terms = Vec::with_capacity(2 * n);
    for i in 0..n {
        terms.push(SymTerm::sparse(alpha_off + i, vec![(i, i, 1.0)]));
    }
    for k in 0..n {
        // e_k nu^T + nu e_k^T
        let mut e = DVector::zeros(n);
        e[k] = 1.0;
        terms.push(SymTerm::outer(mu_off + k, e, nu_v.clone()));
    }
    p.push(Constraint::Psd(SymExpr { constant, terms }));
    inst.mu_constraints(&mut p, mu_off, aux_off);
    inst.cut_constraints(&mut p, cuts, mu_off, phi);

    let outcome = conic::solve_warm(&p, &cfg.backend, warm);
    if !accept(&outcome, cfg) {
        return Err(Error::Solver(format!(
            "linearized step ended with {:?}{}",
            outcome.status,
            outcome
                .certificate
                .as_deref()
                .map(|c| format!(": {c}"))
                .unwrap_or_default()
        )));
    }
    let x = &outcome.point;
    let params = inst.repair(
        x[alpha_off..alpha_off + n].to_vec(),
        x[mu_off..mu_off + n].to_vec(),
        cuts,
    );
    Ok(StepResult { params, outcome })
}

/// `mu` adjustment at fixed `alpha`: minimize `phi` over the hyperboloid
/// `mu mu^T - (A - diag(alpha)) ⪰ 0`, one program per sheet.
fn adjust_step(
    inst: &Instance<'_>,
    cuts: &[Cut],
    alpha: &[f64],
    cfg: &SolverConfig,
    warm: Option<&WarmStart>,
) -> Result<(Vec<f64>, f64, Option<SolveOutcome>)> {
    let n = inst.n();
    let mut a_alpha = inst.a.matrix().clone();
    for i in 0..n {
        a_alpha[(i, i)] -= alpha[i];
    }
    let eig = spectral::sym_eig(&a_alpha)?;
    let tol = cfg.zero_eig_rel * eig.norm();
    if n > 1 && eig.lambda(1) > tol {
        return Err(Error::InfeasibleParams(format!(
            "second eigenvalue {:e} of A - diag(alpha) is positive",
            eig.lambda(1)
        )));
    }
    if eig.lambda(0) <= tol {
        // every mu is admissible; mu = 0 minimizes phi
        return Ok((vec![0.0; n], 0.0, None));
    }
    let lead: Vec<f64> = eig
        .vector(0)
        .iter()
        .map(|v| v / eig.lambda(0).sqrt())
        .collect();
    let mut rows = Vec::new();
    let mut null = Vec::new();
    for i in 1..n {
        let l = eig.lambda(i);
        if l.abs() <= tol {
            null.push(eig.vector(i));
        } else {
            rows.push(eig.vector(i) / (-l).sqrt());
        }
    }

    let (mu_off, phi, aux_off) = (0, n, n + 1);
    let num_vars = aux_off + inst.aux_count();
    let mut objective = vec![0.0; num_vars];
    objective[phi] = 1.0;
    let vars: Vec<usize> = (mu_off..mu_off + n).collect();

    let mut best: Option<(Vec<f64>, f64, SolveOutcome)> = None;
    for sign in [1.0, -1.0] {
        // with mu >= 0 a sheet is unreachable when sign * lead has no positive entry
        if !lead.iter().any(|&v| sign * v > 0.0) {
            continue;
        }
        let mut p = ConicProblem::new(num_vars).minimize(objective.clone());
        let head_coefs: Vec<f64> = lead.iter().map(|v| sign * v).collect();
        let mut tail = vec![LinExpr::constant(1.0)];
        tail.extend(rows.iter().map(|r| LinExpr::dot(&vars, r.as_slice())));
        p.push(Constraint::SecondOrder {
            head: LinExpr::dot(&vars, &head_coefs),
            tail,
        });
        if !null.is_empty() {
            p.push(Constraint::LinearEq(
                null.iter()
                    .map(|u| LinExpr::dot(&vars, u.as_slice()))
                    .collect(),
            ));
        }
        inst.mu_constraints(&mut p, mu_off, aux_off);
        inst.cut_constraints(&mut p, cuts, mu_off, phi);
        let outcome = conic::solve_warm(&p, &cfg.backend, warm);
        if !accept(&outcome, cfg) {
            log::debug!(
                "adjustment sheet {sign}: {:?} after {} iterations ({} rows, {} null directions){}",
                outcome.status,
                outcome.iterations,
                rows.len(),
                null.len(),
                outcome
                    .certificate
                    .as_deref()
                    .map(|c| format!(": {c}"))
                    .unwrap_or_default()
            );
            continue;
        }
        let mu = outcome.point[mu_off..mu_off + n].to_vec();
        let value = outcome.point[phi];
        if best.as_ref().is_none_or(|(_, v, _)| value < *v) {
            best = Some((mu, value, outcome));
        }
    }
    match best {
        Some((mu, value, outcome)) => Ok((mu, value, Some(outcome))),
        None => Err(Error::BothInfeasible),
    }
}

fn trees_to_cuts(h_set: &[LabeledTree], d: &DegreeSequence) -> Result<Vec<Cut>> {
    if h_set.is_empty() {
        return Err(Error::InvalidTree("the tree set must be nonempty".into()));
    }
    h_set
        .iter()
        .map(|t| {
            if !t.matches(d) {
                return Err(Error::InvalidTree(
                    "tree degrees differ from the sequence".into(),
                ));
            }
            Cut::new(t.clone())
        })
        .collect()
}

/// One linearized SDP step at `nu`; the result is repaired and satisfies the
/// original matrix inequality.
pub fn solve_linearized(
    h_set: &[LabeledTree],
    nu: &[f64],
    a: &FlowMatrix,
    d: &DegreeSequence,
    cfg: &SolverConfig,
) -> Result<LBParams> {
    let inst = Instance::new(a, d)?;
    check_dims(a, d, nu.len())?;
    let cuts = trees_to_cuts(h_set, d)?;
    Ok(linearized_step(&inst, &cuts, nu, cfg, None)?.params)
}

/// Best `(mu, phi)` for fixed `alpha`. Errors with `InfeasibleParams` when
/// `A - diag(alpha)` has two positive eigenvalues and `BothInfeasible` when
/// neither sheet yields a solution.
pub fn adjust_mu(
    h_set: &[LabeledTree],
    alpha: &[f64],
    a: &FlowMatrix,
    d: &DegreeSequence,
    cfg: &SolverConfig,
) -> Result<(Vec<f64>, f64)> {
    let inst = Instance::new(a, d)?;
    check_dims(a, d, alpha.len())?;
    let cuts = trees_to_cuts(h_set, d)?;
    let (mu, phi, _) = adjust_step(&inst, &cuts, alpha, cfg, None)?;
    Ok((mu, phi))
}

#[derive(Debug, Clone)]
pub struct RelaxedSolution {
    pub params: LBParams,
    /// `phi + c sum alpha` at `params`.
    pub objective: f64,
    /// Objective after every step, in order.
    pub objectives: Vec<f64>,
    pub rounds: usize,
    pub converged: bool,
    pub notes: Vec<String>,
}

/// Best lower bound seen so far.
struct Incumbent {
    lb: f64,
    params: Option<LBParams>,
}

impl Incumbent {
    fn offer(&mut self, inst: &Instance<'_>, params: &LBParams) {
        if let Ok(lb) = inst.lb_of(params) {
            if self.params.is_none() || lb > self.lb {
                self.lb = lb;
                self.params = Some(params.clone());
            }
        }
    }
}

struct RelaxedRun {
    solution: RelaxedSolution,
    backend_iterations: usize,
    mm_warm: Option<WarmStart>,
}

fn relaxed(
    inst: &Instance<'_>,
    cuts: &[Cut],
    cfg: &SolverConfig,
    mm_warm: Option<WarmStart>,
    incumbent: &mut Incumbent,
) -> Result<RelaxedRun> {
    let (_, mu0) = spectral::initial_point(inst.a);
    let mut nu: Vec<f64> = mu0.iter().copied().collect();
    let mut best: Option<(f64, LBParams)> = None;
    let mut objectives = Vec::new();
    let mut notes = Vec::new();
    let mut backend_iterations = 0;
    let mut converged = false;
    let mut rounds = 0;
    let mut prev = f64::INFINITY;
    let mut mm_warm = mm_warm;
    let mut ad_warm: Option<WarmStart> = None;

    let record =
        |params: &LBParams, objectives: &mut Vec<f64>, best: &mut Option<(f64, LBParams)>| {
            let obj = inst.objective(params);
            objectives.push(obj);
            if best.as_ref().is_none_or(|(b, _)| obj < *b) {
                *best = Some((obj, params.clone()));
            }
            obj
        };

    for round in 1..=cfg.max_mmad_rounds {
        rounds = round;
        let step = match linearized_step(inst, cuts, &nu, cfg, mm_warm.as_ref()) {
            Ok(step) => step,
            Err(e) if best.is_some() => {
                notes.push(format!("round {round}: {e}"));
                break;
            }
            Err(e) => return Err(e),
        };
        backend_iterations += step.outcome.iterations;
        mm_warm = Some(step.outcome.warm.clone());
        if step.outcome.status != SolveStatus::Feasible {
            notes.push(format!(
                "round {round}: linearized step hit the iteration limit"
            ));
        }
        record(&step.params, &mut objectives, &mut best);
        incumbent.offer(inst, &step.params);

        let adjusted = match adjust_step(inst, cuts, &step.params.alpha, cfg, ad_warm.as_ref()) {
            Ok(r) => r,
            Err(e) => {
                notes.push(format!("round {round}: adjustment failed: {e}"));
                break;
            }
        };
        let (mu, _, outcome) = adjusted;
        if let Some(o) = outcome {
            backend_iterations += o.iterations;
            ad_warm = Some(o.warm);
        }
        let params = inst.repair(step.params.alpha.clone(), mu, cuts);
        let obj = record(&params, &mut objectives, &mut best);
        incumbent.offer(inst, &params);
        nu = params.mu.clone();

        if prev.is_finite() && prev - obj <= cfg.delta * prev.abs() {
            converged = true;
            break;
        }
        prev = obj;
    }
    let (objective, params) = best.expect("at least one step succeeded");
    Ok(RelaxedRun {
        solution: RelaxedSolution {
            params,
            objective,
            objectives,
            rounds,
            converged,
            notes,
        },
        backend_iterations,
        mm_warm,
    })
}

/// Alternates linearized and adjustment steps for a fixed tree set, starting
/// from the spectral initial point.
pub fn solve_relaxed(
    h_set: &[LabeledTree],
    a: &FlowMatrix,
    d: &DegreeSequence,
    cfg: &SolverConfig,
) -> Result<RelaxedSolution> {
    cfg.validate()?;
    let inst = Instance::new(a, d)?;
    let cuts = trees_to_cuts(h_set, d)?;
    let mut incumbent = Incumbent {
        lb: f64::NEG_INFINITY,
        params: None,
    };
    Ok(relaxed(&inst, &cuts, cfg, None, &mut incumbent)?.solution)
}

/// Maximizes the lower bound by constraint generation over Huffman trees.
pub fn maximize_lb(
    a: &FlowMatrix,
    d: &DegreeSequence,
    cfg: &SolverConfig,
) -> Result<LBCertificate> {
    cfg.validate()?;
    let start = Instant::now();
    let inst = Instance::new(a, d)?;
    let mut cuts = vec![Cut::new(greedy_tree(d))?];
    let mut incumbent = Incumbent {
        lb: f64::NEG_INFINITY,
        params: None,
    };
    let mut counters = Counters::default();
    let mut notes = Vec::new();
    let mut converged = false;
    let mut mm_warm = None;

    for round in 1..=cfg.max_cg_rounds {
        counters.cg_rounds = round;
        let run = match relaxed(&inst, &cuts, cfg, mm_warm.take(), &mut incumbent) {
            Ok(run) => run,
            Err(e) if incumbent.params.is_some() => {
                notes.push(format!("constraint round {round}: {e}"));
                break;
            }
            Err(e) => return Err(e),
        };
        counters.mmad_rounds += run.solution.rounds;
        counters.backend_iterations += run.backend_iterations;
        mm_warm = run.mm_warm;
        notes.extend(
            run.solution
                .notes
                .iter()
                .map(|s| format!("constraint round {round}: {s}")),
        );
        let relaxed_converged = run.solution.converged;

        let params = run.solution.params;
        let h = huffman_tree(&params.mu, d, &TieBreakPolicy::LowestIndex)?;
        let value = p_quadratic_form(&params.mu, &h)?;
        if params.phi >= value - cfg.cg_slack * params.phi.abs().max(1.0) {
            converged = relaxed_converged;
            break;
        }
        if cuts.iter().any(|c| c.tree == h) {
            notes.push(format!(
                "constraint round {round}: separation returned a known tree"
            ));
            converged = relaxed_converged;
            break;
        }
        cuts.push(Cut::new(h)?);
        if round == cfg.max_cg_rounds {
            notes.push("constraint-generation round limit reached".into());
        }
    }

    let params = match incumbent.params {
        Some(p) => p,
        None => {
            // no solver iterate survived: fall back to the trivially feasible point
            notes.push("no solver iterate was usable; using the initial point".into());
            converged = false;
            let (alpha0, mu0) = spectral::initial_point(a);
            inst.repair(
                alpha0.iter().copied().collect(),
                mu0.iter().copied().collect(),
                &cuts,
            )
        }
    };
    let lb = inst.lb_of(&params)?;
    let h = huffman_tree(&params.mu, d, &TieBreakPolicy::LowestIndex)?;
    let feasibility = FeasibilityReport {
        bmi_min_eigenvalue: spectral::min_eigenvalue(&bmi_matrix(&params.alpha, &params.mu, a)),
        min_mu: params.mu.iter().copied().fold(f64::INFINITY, f64::min),
        monotone: is_monotone(&params.mu, d)?,
        phi_slack: params.phi - inst.max_cut_value(&params.mu, &cuts),
        separation_gap: p_quadratic_form(&params.mu, &h)? - params.phi,
    };
    Ok(LBCertificate {
        n: d.len(),
        degrees: d.clone(),
        params,
        lb,
        huffman_set: cuts.into_iter().map(|c| c.tree).collect(),
        iterations: counters,
        feasibility,
        converged,
        notes,
        seconds: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::{gen_degree_sequence, gen_rank_one};
    use crate::graph::tree_cost;
    use crate::huffman::huffman_tree;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ds(v: &[usize]) -> DegreeSequence {
        DegreeSequence::new(v.to_vec()).unwrap()
    }

    fn ones_minus_identity(n: usize) -> FlowMatrix {
        FlowMatrix::from_lower(n, |_, _| 1.0).unwrap()
    }

    #[test]
    fn star_example_value() {
        let a = ones_minus_identity(4);
        let d = ds(&[3, 1, 1, 1]);
        let lb = lb_value(&[-1.0; 4], &[1.0; 4], &a, &d).unwrap();
        assert!((lb - 18.0).abs() < 1e-12);
        let star = LabeledTree::from_edges(4, &[(0, 1), (0, 2), (0, 3)]).unwrap();
        assert_eq!(tree_cost(&a, &star).unwrap(), 18.0);
    }

    #[test]
    fn zero_flow_value() {
        let a = FlowMatrix::zeros(5);
        let d = ds(&[2, 2, 2, 1, 1]);
        assert_eq!(lb_value(&[0.0; 5], &[0.0; 5], &a, &d).unwrap(), 0.0);
    }

    #[test]
    fn infeasible_parameters_are_rejected() {
        let a = ones_minus_identity(4);
        let d = ds(&[3, 1, 1, 1]);
        assert!(matches!(
            lb_value(&[-2.0; 4], &[1.0; 4], &a, &d),
            Err(Error::InfeasibleParams(_))
        ));
        assert!(matches!(
            lb_value(&[5.0; 4], &[1.0, -0.1, 1.0, 1.0], &a, &d),
            Err(Error::InfeasibleParams(_))
        ));
        let d = ds(&[3, 2, 1, 1, 1]);
        let a = ones_minus_identity(5);
        // degree-3 vertex lighter than the degree-2 vertex
        assert!(matches!(
            lb_value(&[10.0; 5], &[1.0, 2.0, 1.0, 1.0, 1.0], &a, &d),
            Err(Error::InfeasibleParams(_))
        ));
    }

    #[test]
    fn rank_one_parameters_are_tight() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let d = gen_degree_sequence(25, &mut rng);
            let (a, nu) = gen_rank_one(&d, 1.0, &mut rng).unwrap();
            let alpha: Vec<f64> = nu.iter().map(|v| -v * v).collect();
            let lb = lb_value(&alpha, &nu, &a, &d).unwrap();
            let h = huffman_tree(&nu, &d, &TieBreakPolicy::LowestIndex).unwrap();
            let cost = tree_cost(&a, &h).unwrap();
            assert!((lb - cost).abs() <= 1e-9 * cost, "{lb} vs {cost}");
        }
    }

    #[test]
    fn repair_produces_valid_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = gen_degree_sequence(12, &mut rng);
        let a = crate::generate::gen_random_flow(12, 1.0, 1.0, &mut rng).unwrap();
        let inst = Instance::new(&a, &d).unwrap();
        let cuts = vec![Cut::new(greedy_tree(&d)).unwrap()];
        let mu: Vec<f64> = (0..12).map(|i| (i as f64 - 3.0) * 0.3).collect();
        let params = inst.repair(vec![0.0; 12], mu, &cuts);
        let lb = inst.lb_of(&params).unwrap();
        for _ in 0..50 {
            let t = crate::graph::random_tree(&d, &mut rng);
            assert!(lb <= tree_cost(&a, &t).unwrap() + 1e-9);
        }
    }

    #[test]
    fn two_vertices() {
        let a = FlowMatrix::from_lower(2, |_, _| 3.0).unwrap();
        let d = ds(&[1, 1]);
        let cert = maximize_lb(&a, &d, &SolverConfig::default()).unwrap();
        // the only tree costs 2 * 3
        assert!(cert.lb <= 6.0 + 1e-9);
        assert!(cert.feasibility.bmi_min_eigenvalue >= -1e-9);
        assert!((cert.lb - 6.0).abs() <= 1e-3 * 6.0, "lb {}", cert.lb);
    }

    #[test]
    fn unit_flows_give_exact_bound() {
        let a = ones_minus_identity(8);
        let d = ds(&[3, 3, 2, 1, 1, 1, 1, 2]);
        let cert = maximize_lb(&a, &d, &SolverConfig::default()).unwrap();
        let cost = tree_cost(&a, &greedy_tree(&d)).unwrap();
        assert!(cert.lb <= cost + 1e-9);
        assert!(
            (cost - cert.lb) / cost <= 1e-3,
            "lb {} cost {}",
            cert.lb,
            cost
        );
        let mean = cert.params.mu.iter().sum::<f64>() / 8.0;
        assert!(cert
            .params
            .mu
            .iter()
            .all(|m| (m - mean).abs() <= 1e-2 * mean));
        let back = LBCertificate::from_json(&cert.to_json().unwrap()).unwrap();
        assert_eq!(back.lb, cert.lb);
        assert!((back.recompute(&a).unwrap() - cert.lb).abs() <= 1e-9 * cert.lb.abs());
    }

    #[test]
    fn rank_one_bound_is_tight() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let d = gen_degree_sequence(15, &mut rng);
        let (a, nu) = gen_rank_one(&d, 1.0, &mut rng).unwrap();
        let cert = maximize_lb(&a, &d, &SolverConfig::default()).unwrap();
        let cost = tree_cost(
            &a,
            &huffman_tree(&nu, &d, &TieBreakPolicy::LowestIndex).unwrap(),
        )
        .unwrap();
        assert!(cert.lb <= cost * (1.0 + 1e-9));
        assert!(
            (cost - cert.lb) / cost <= 1e-3,
            "lb {} cost {} {:?}",
            cert.lb,
            cost,
            cert.notes
        );
    }
}
