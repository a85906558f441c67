//! Operator splitting on `A x + s = b, s in K`: one solve with the cached
//! factor of `sigma I + A^T R A` and one cone projection per iteration.
//! PSD blocks are stored in scaled lower-triangular (svec) form.

use std::time::Instant;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::{
    ConicProblem, Constraint, LinExpr, SolveOutcome, SolveStatus, SolverSettings, WarmStart,
};

#[derive(Debug, Clone, Copy, PartialEq)]
enum Cone {
    Zero(usize),
    Nonneg(usize),
    Soc(usize),
    /// Matrix dimension; the block holds `dim (dim + 1) / 2` rows.
    Psd(usize),
}

impl Cone {
    fn rows(&self) -> usize {
        match *self {
            Cone::Zero(k) | Cone::Nonneg(k) | Cone::Soc(k) => k,
            Cone::Psd(d) => d * (d + 1) / 2,
        }
    }

    fn separable(&self) -> bool {
        matches!(self, Cone::Zero(_) | Cone::Nonneg(_))
    }
}

/// Row-compressed sparse matrix.
#[derive(Debug, Clone)]
struct Csr {
    ncols: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl Csr {
    fn from_rows(rows: Vec<Vec<(usize, f64)>>, ncols: usize) -> Self {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut r in rows {
            r.sort_unstable_by_key(|&(c, _)| c);
            let mut last: Option<usize> = None;
            for (c, v) in r {
                if last == Some(c) {
                    *vals.last_mut().expect("entry present") += v;
                } else {
                    cols.push(c);
                    vals.push(v);
                    last = Some(c);
                }
            }
            row_ptr.push(cols.len());
        }
        Self {
            ncols,
            row_ptr,
            cols,
            vals,
        }
    }

    fn nrows(&self) -> usize {
        self.row_ptr.len() - 1
    }

    fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.cols[span.clone()]
            .iter()
            .copied()
            .zip(self.vals[span].iter().copied())
    }

    fn mul(&self, x: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate() {
            *o = self.row(r).map(|(c, v)| v * x[c]).sum();
        }
    }

    fn tmul(&self, y: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (r, &yr) in y.iter().enumerate() {
            if yr != 0.0 {
                for (c, v) in self.row(r) {
                    out[c] += v * yr;
                }
            }
        }
    }

    fn scale(&mut self, row: &[f64], col: &[f64]) {
        for r in 0..self.nrows() {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                self.vals[k] *= row[r] * col[self.cols[k]];
            }
        }
    }

    fn row_inf_norms(&self) -> Vec<f64> {
        (0..self.nrows())
            .map(|r| self.row(r).fold(0.0_f64, |m, (_, v)| m.max(v.abs())))
            .collect()
    }

    fn col_inf_norms(&self) -> Vec<f64> {
        let mut out = vec![0.0_f64; self.ncols];
        for (c, v) in self.cols.iter().zip(&self.vals) {
            out[*c] = out[*c].max(v.abs());
        }
        out
    }

    /// `sigma I + A^T diag(rho) A`, dense.
    fn gram(&self, rho: &[f64], sigma: f64) -> DMatrix<f64> {
        let n = self.ncols;
        let mut k = DMatrix::from_diagonal_element(n, n, sigma);
        for r in 0..self.nrows() {
            let span = self.row_ptr[r]..self.row_ptr[r + 1];
            let cols = &self.cols[span.clone()];
            let vals = &self.vals[span];
            for (a, (&ca, &va)) in cols.iter().zip(vals).enumerate() {
                let w = rho[r] * va;
                for (&cb, &vb) in cols[..=a].iter().zip(&vals[..=a]) {
                    k[(ca, cb)] += w * vb;
                }
            }
        }
        // only the lower triangle was filled
        k.fill_upper_triangle_with_lower_triangle();
        k
    }
}

/// The compiled standard form.
struct StandardForm {
    a: Csr,
    b: Vec<f64>,
    c: Vec<f64>,
    cones: Vec<Cone>,
}

const SQRT2: f64 = std::f64::consts::SQRT_2;

fn push_lin(rows: &mut Vec<Vec<(usize, f64)>>, b: &mut Vec<f64>, e: &LinExpr, factor: f64) {
    // expression = b - A x  with  A = -factor * coefs
    rows.push(e.terms.iter().map(|&(v, c)| (v, -factor * c)).collect());
    b.push(factor * e.constant);
}

fn compile(p: &ConicProblem) -> StandardForm {
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut b = Vec::new();
    let mut cones = Vec::new();
    // zero and nonnegative cones first, then the blocks
    for c in &p.constraints {
        if let Constraint::LinearEq(es) = c {
            es.iter().for_each(|e| push_lin(&mut rows, &mut b, e, 1.0));
            cones.push(Cone::Zero(es.len()));
        }
    }
    for c in &p.constraints {
        if let Constraint::Nonneg(es) = c {
            es.iter().for_each(|e| push_lin(&mut rows, &mut b, e, 1.0));
            cones.push(Cone::Nonneg(es.len()));
        }
    }
    for c in &p.constraints {
        match c {
            Constraint::SecondOrder { head, tail } => {
                push_lin(&mut rows, &mut b, head, 1.0);
                tail.iter()
                    .for_each(|e| push_lin(&mut rows, &mut b, e, 1.0));
                cones.push(Cone::Soc(tail.len() + 1));
            }
            Constraint::QuadUpper {
                bound,
                factor,
                vars,
            } => {
                // t >= ||w||^2  <=>  ||(t - 1, 2 w)|| <= t + 1
                push_lin(&mut rows, &mut b, &bound.clone().plus(1.0), 1.0);
                push_lin(&mut rows, &mut b, &bound.clone().plus(-1.0), 1.0);
                for r in 0..factor.nrows() {
                    let coefs: Vec<f64> = factor.row(r).iter().copied().collect();
                    push_lin(&mut rows, &mut b, &LinExpr::dot(vars, &coefs), 2.0);
                }
                cones.push(Cone::Soc(factor.nrows() + 2));
            }
            Constraint::Psd(s) => {
                let d = s.dim();
                let base = rows.len();
                let mut block: Vec<Vec<(usize, f64)>> = vec![Vec::new(); d * (d + 1) / 2];
                let mut bb = vec![0.0; d * (d + 1) / 2];
                for j in 0..d {
                    for i in j..d {
                        let f = if i == j { 1.0 } else { SQRT2 };
                        bb[svec_index(d, i, j)] = f * s.constant[(i, j)];
                    }
                }
                for t in &s.terms {
                    for &(i, j, c) in &t.entries {
                        let (i, j) = if i >= j { (i, j) } else { (j, i) };
                        let f = if i == j { 1.0 } else { SQRT2 };
                        block[svec_index(d, i, j)].push((t.var, -f * c));
                    }
                    for (u, v) in &t.outer {
                        for j in 0..d {
                            for i in j..d {
                                let c = u[i] * v[j] + v[i] * u[j];
                                if c != 0.0 {
                                    let f = if i == j { 1.0 } else { SQRT2 };
                                    block[svec_index(d, i, j)].push((t.var, -f * c));
                                }
                            }
                        }
                    }
                }
                rows.extend(block);
                b.extend(bb);
                debug_assert_eq!(rows.len(), base + d * (d + 1) / 2);
                cones.push(Cone::Psd(d));
            }
            _ => {}
        }
    }
    StandardForm {
        a: Csr::from_rows(rows, p.num_vars),
        b,
        c: p.objective.clone(),
        cones,
    }
}

/// Position of `(i, j)`, `i >= j`, in the column-major packed lower triangle.
fn svec_index(d: usize, i: usize, j: usize) -> usize {
    j * d - j * (j + 1) / 2 + i
}

fn project_soc(v: &mut [f64]) {
    let t = v[0];
    let norm = v[1..].iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm <= t {
        return;
    }
    if norm <= -t {
        v.iter_mut().for_each(|x| *x = 0.0);
        return;
    }
    let head = 0.5 * (t + norm);
    v[0] = head;
    let f = head / norm;
    v[1..].iter_mut().for_each(|x| *x *= f);
}

fn project_psd(v: &mut [f64], d: usize) {
    let mut m = DMatrix::zeros(d, d);
    for j in 0..d {
        for i in j..d {
            let val = v[svec_index(d, i, j)];
            if i == j {
                m[(i, i)] = val;
            } else {
                m[(i, j)] = val / SQRT2;
                m[(j, i)] = val / SQRT2;
            }
        }
    }
    let eig = m.clone().symmetric_eigen();
    let positive = eig.eigenvalues.iter().filter(|&&l| l > 0.0).count();
    if positive == d {
        return;
    }
    let mut out = if positive * 2 <= d {
        DMatrix::zeros(d, d)
    } else {
        m
    };
    let keep_positive = positive * 2 <= d;
    for (k, &l) in eig.eigenvalues.iter().enumerate() {
        if (keep_positive && l > 0.0) || (!keep_positive && l < 0.0) {
            let u = eig.eigenvectors.column(k);
            let w = if keep_positive { l } else { -l };
            out.ger(w, &u, &u, 1.0);
        }
    }
    for j in 0..d {
        for i in j..d {
            let f = if i == j { 1.0 } else { SQRT2 };
            v[svec_index(d, i, j)] = f * 0.5 * (out[(i, j)] + out[(j, i)]);
        }
    }
}

fn project_cones(v: &mut [f64], cones: &[Cone]) {
    let mut off = 0;
    for cone in cones {
        let len = cone.rows();
        let block = &mut v[off..off + len];
        match *cone {
            Cone::Zero(_) => block.iter_mut().for_each(|x| *x = 0.0),
            Cone::Nonneg(_) => block.iter_mut().for_each(|x| *x = x.max(0.0)),
            Cone::Soc(_) => project_soc(block),
            Cone::Psd(d) => project_psd(block, d),
        }
        off += len;
    }
}

/// Projection onto the dual cone `K*` (the zero cone's dual is everything).
fn project_dual_cones(v: &mut [f64], cones: &[Cone]) {
    let mut off = 0;
    for cone in cones {
        let len = cone.rows();
        let block = &mut v[off..off + len];
        match *cone {
            Cone::Zero(_) => {}
            Cone::Nonneg(_) => block.iter_mut().for_each(|x| *x = x.max(0.0)),
            Cone::Soc(_) => project_soc(block),
            Cone::Psd(d) => project_psd(block, d),
        }
        off += len;
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Scaling {
    /// Row scaling `D`.
    d: Vec<f64>,
    /// Column scaling `E`.
    e: Vec<f64>,
    /// Objective scaling.
    c: f64,
}

/// Ruiz equilibration; rows of one SOC or PSD block share a factor.
fn equilibrate(sf: &mut StandardForm, iters: usize) -> Scaling {
    let m = sf.a.nrows();
    let n = sf.a.ncols;
    let mut d = vec![1.0; m];
    let mut e = vec![1.0; n];
    let clamp = |x: f64| if x < 1e-4 { 1.0 } else { x.min(1e4) };
    for _ in 0..iters {
        let col = sf.a.col_inf_norms();
        let row = sf.a.row_inf_norms();
        let de: Vec<f64> = col.iter().map(|&c| 1.0 / clamp(c).sqrt()).collect();
        let mut dd: Vec<f64> = row.iter().map(|&r| 1.0 / clamp(r).sqrt()).collect();
        let mut off = 0;
        for cone in &sf.cones {
            let len = cone.rows();
            if !cone.separable() && len > 0 {
                let mean = dd[off..off + len].iter().sum::<f64>() / len as f64;
                dd[off..off + len].iter_mut().for_each(|x| *x = mean);
            }
            off += len;
        }
        sf.a.scale(&dd, &de);
        d.iter_mut().zip(&dd).for_each(|(a, b)| *a *= b);
        e.iter_mut().zip(&de).for_each(|(a, b)| *a *= b);
    }
    sf.b.iter_mut().zip(&d).for_each(|(b, s)| *b *= s);
    sf.c.iter_mut().zip(&e).for_each(|(c, s)| *c *= s);
    let cnorm = inf_norm(&sf.c);
    let cs = 1.0 / clamp(cnorm.max(1e-4));
    sf.c.iter_mut().for_each(|c| *c *= cs);
    Scaling { d, e, c: cs }
}

struct Workspace {
    rho: Vec<f64>,
    factor: Cholesky<f64, Dyn>,
}

fn rho_vector(cones: &[Cone], rho: f64) -> Vec<f64> {
    let mut out = Vec::new();
    for cone in cones {
        let r = if matches!(cone, Cone::Zero(_)) {
            1e3 * rho
        } else {
            rho
        };
        out.extend(std::iter::repeat(r).take(cone.rows()));
    }
    out
}

fn factorize(a: &Csr, rho: &[f64], sigma: f64) -> Cholesky<f64, Dyn> {
    let k = a.gram(rho, sigma);
    Cholesky::new(k).expect("sigma I + A^T R A is positive definite")
}

pub(super) fn solve(
    p: &ConicProblem,
    cfg: &SolverSettings,
    warm: Option<&WarmStart>,
) -> SolveOutcome {
    let start = Instant::now();
    let mut sf = compile(p);
    let m = sf.a.nrows();
    let n = p.num_vars;
    let sc = equilibrate(&mut sf, cfg.scaling_iters);

    let mut x = vec![0.0; n];
    let mut s = vec![0.0; m];
    let mut y = vec![0.0; m];
    if let Some(w) = warm.filter(|w| w.x.len() == n) {
        for j in 0..n {
            x[j] = w.x[j] / sc.e[j];
        }
        if w.s.len() == m && w.y.len() == m {
            for i in 0..m {
                s[i] = w.s[i] * sc.d[i];
                y[i] = w.y[i] * sc.c / sc.d[i];
            }
        } else {
            // rows changed: start the slack at the projected residual of x
            sf.a.mul(&x, &mut s);
            for i in 0..m {
                s[i] = sf.b[i] - s[i];
            }
            project_cones(&mut s, &sf.cones);
        }
    }

    let mut rho_scalar = cfg.rho;
    let mut ws = Workspace {
        rho: rho_vector(&sf.cones, rho_scalar),
        factor: factorize(&sf.a, &rho_vector(&sf.cones, rho_scalar), cfg.sigma),
    };

    let mut ax = vec![0.0; m];
    let mut aty = vec![0.0; n];
    let mut tmp_m = vec![0.0; m];
    let mut rhs = vec![0.0; n];
    let mut w = vec![0.0; m];
    let mut y_prev = y.clone();
    let mut x_prev = x.clone();

    let unscale_x = |x: &[f64]| -> Vec<f64> { x.iter().zip(&sc.e).map(|(v, e)| v * e).collect() };
    let unscale_rows =
        |v: &[f64]| -> Vec<f64> { v.iter().zip(&sc.d).map(|(v, d)| v / d).collect() };

    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut trace = Vec::new();
    let mut status = SolveStatus::IterLimit;
    let mut certificate = None;
    let mut iterations = 0;
    let mut last_pres = f64::INFINITY;
    let mut last_dres = f64::INFINITY;
    let constraint_scales: Vec<(usize, usize, f64)> = row_block_scales(p, &sf);

    for k in 1..=cfg.max_iters {
        iterations = k;
        // x-update: (sigma I + A^T R A) xt = sigma x - c + A^T (R (b - s) + y)
        for i in 0..m {
            tmp_m[i] = ws.rho[i] * (sf.b[i] - s[i]) + y[i];
        }
        sf.a.tmul(&tmp_m, &mut rhs);
        for j in 0..n {
            rhs[j] += cfg.sigma * x[j] - sf.c[j];
        }
        let xt = ws.factor.solve(&DVector::from_column_slice(&rhs));
        sf.a.mul(xt.as_slice(), &mut ax);
        for j in 0..n {
            x[j] = cfg.alpha * xt[j] + (1.0 - cfg.alpha) * x[j];
        }
        for i in 0..m {
            let st = sf.b[i] - ax[i];
            w[i] = cfg.alpha * st + (1.0 - cfg.alpha) * s[i] + y[i] / ws.rho[i];
        }
        s.copy_from_slice(&w);
        project_cones(&mut s, &sf.cones);
        for i in 0..m {
            y[i] = ws.rho[i] * (w[i] - s[i]);
        }

        if k % cfg.check_every != 0 && k != cfg.max_iters {
            continue;
        }

        // residuals in the scaled space, norms measured after unscaling
        sf.a.mul(&x, &mut ax);
        let rp: Vec<f64> = (0..m).map(|i| ax[i] + s[i] - sf.b[i]).collect();
        sf.a.tmul(&y, &mut aty);
        let rd: Vec<f64> = (0..n).map(|j| sf.c[j] - aty[j]).collect();
        let rp_u: Vec<f64> = unscale_rows(&rp);
        let rd_u: Vec<f64> = rd.iter().zip(&sc.e).map(|(v, e)| v / e / sc.c).collect();
        let ax_u = unscale_rows(&ax);
        let s_u = unscale_rows(&s);
        let b_u = unscale_rows(&sf.b);
        let aty_u: Vec<f64> = aty.iter().zip(&sc.e).map(|(v, e)| v / e / sc.c).collect();
        let c_u = &p.objective;
        let pres = inf_norm(&rp_u);
        let dres = inf_norm(&rd_u);
        last_pres = pres;
        last_dres = dres;
        log::trace!(
            "iter {k}: pres {pres:.3e} dres {dres:.3e} rho {rho_scalar:.3e} obj {:.9e}",
            p.objective_value(&unscale_x(&x))
        );
        let p_scale = inf_norm(&ax_u).max(inf_norm(&s_u)).max(inf_norm(&b_u));
        let d_scale = inf_norm(&aty_u).max(inf_norm(c_u));

        // s is in K, so a small residual per block suggests a feasible x
        let xu = unscale_x(&x);
        let feasible_bound = constraint_scales.iter().all(|&(lo, hi, scale)| {
            rp_u[lo..hi].iter().map(|v| v * v).sum::<f64>().sqrt()
                <= 10.0 * cfg.tol_feas * (1.0 + scale)
        });
        // the residual bound is a cheap filter; the exact check decides
        let feasible = feasible_bound && p.max_violation(&xu) <= cfg.tol_feas;
        if feasible {
            let obj = p.objective_value(&xu);
            if best.as_ref().is_none_or(|(b, _)| obj < *b) {
                trace.push(obj);
                best = Some((obj, xu.clone()));
            }
        }

        if pres <= cfg.eps_abs + cfg.eps_rel * p_scale
            && dres <= cfg.eps_abs + cfg.eps_rel * d_scale
            && feasible
        {
            status = SolveStatus::Feasible;
            break;
        }

        // infeasibility certificates from successive differences
        let dy: Vec<f64> = y.iter().zip(&y_prev).map(|(a, b)| a - b).collect();
        let dy_u: Vec<f64> = dy.iter().zip(&sc.d).map(|(v, d)| v * d / sc.c).collect();
        let dy_norm = inf_norm(&dy_u);
        if dy_norm > 1e-12 {
            let mut atdy = vec![0.0; n];
            sf.a.tmul(&dy, &mut atdy);
            let atdy_u: Vec<f64> = atdy.iter().zip(&sc.e).map(|(v, e)| v / e / sc.c).collect();
            let bdy = dot(&b_u, &dy_u);
            // -dy must lie in K*: project and compare
            let mut neg: Vec<f64> = dy.iter().map(|v| -v).collect();
            let before = neg.clone();
            project_dual_cones(&mut neg, &sf.cones);
            let cone_gap = inf_norm(
                &neg.iter()
                    .zip(&before)
                    .map(|(a, b)| a - b)
                    .collect::<Vec<_>>(),
            );
            if inf_norm(&atdy_u) <= cfg.eps_infeas * dy_norm
                && bdy > cfg.eps_infeas * dy_norm
                && cone_gap <= 1e-3 * inf_norm(&dy)
            {
                status = SolveStatus::Infeasible;
                certificate = Some(format!(
                    "dual ray y with ||A^T y|| = {:.2e}, b^T y = {:.3e} (normalized by ||y|| = {:.2e})",
                    inf_norm(&atdy_u) / dy_norm,
                    -bdy / dy_norm,
                    dy_norm
                ));
                break;
            }
        }
        let dx: Vec<f64> = x.iter().zip(&x_prev).map(|(a, b)| a - b).collect();
        let dx_u = unscale_x(&dx);
        let dx_norm = inf_norm(&dx_u);
        if dx_norm > 1e-12 {
            let cdx = dot(c_u, &dx_u);
            let mut adx = vec![0.0; m];
            sf.a.mul(&dx, &mut adx);
            let mut neg: Vec<f64> = adx.iter().map(|v| -v).collect();
            let before = neg.clone();
            project_cones(&mut neg, &sf.cones);
            let gap = inf_norm(&unscale_rows(
                &neg.iter()
                    .zip(&before)
                    .map(|(a, b)| a - b)
                    .collect::<Vec<_>>(),
            ));
            if cdx < -cfg.eps_infeas * dx_norm && gap <= cfg.eps_infeas * dx_norm {
                status = SolveStatus::Unbounded;
                certificate = Some(format!(
                    "primal ray with c^T dx = {:.3e} (normalized)",
                    cdx / dx_norm
                ));
                break;
            }
        }
        y_prev.copy_from_slice(&y);
        x_prev.copy_from_slice(&x);

        if let Some(limit) = cfg.time_limit {
            if start.elapsed() > limit {
                break;
            }
        }

        if cfg.adaptive_rho {
            let pr = pres / (p_scale + 1e-10);
            let dr = dres / (d_scale + 1e-10);
            let ratio = (pr / (dr + 1e-30)).sqrt();
            let proposed = (rho_scalar * ratio).clamp(1e-6, 1e6);
            if proposed > 5.0 * rho_scalar || proposed < rho_scalar / 5.0 {
                rho_scalar = proposed;
                ws.rho = rho_vector(&sf.cones, rho_scalar);
                ws.factor = factorize(&sf.a, &ws.rho, cfg.sigma);
            }
        }
    }

    let last_x = unscale_x(&x);
    let warm = WarmStart {
        x: last_x.clone(),
        s: unscale_rows(&s),
        y: y.iter().zip(&sc.d).map(|(v, d)| v * d / sc.c).collect(),
    };

    let (point, status) = match status {
        SolveStatus::Infeasible | SolveStatus::Unbounded => (last_x, status),
        _ => super::finish(p, cfg, status == SolveStatus::Feasible, last_x, best),
    };
    SolveOutcome {
        max_violation: p.max_violation(&point),
        objective_value: p.objective_value(&point),
        point,
        status,
        iterations,
        primal_residual: last_pres,
        dual_residual: last_dres,
        certificate,
        best_feasible_trace: trace,
        warm,
    }
}

/// Row ranges of each compiled constraint with the scale used for relative violations.
fn row_block_scales(p: &ConicProblem, sf: &StandardForm) -> Vec<(usize, usize, f64)> {
    // same order as compile()
    let mut out = Vec::new();
    let mut off = 0;
    let mut ordered: Vec<&Constraint> = Vec::new();
    ordered.extend(
        p.constraints
            .iter()
            .filter(|c| matches!(c, Constraint::LinearEq(_))),
    );
    ordered.extend(
        p.constraints
            .iter()
            .filter(|c| matches!(c, Constraint::Nonneg(_))),
    );
    ordered.extend(p.constraints.iter().filter(|c| {
        matches!(
            c,
            Constraint::SecondOrder { .. } | Constraint::QuadUpper { .. } | Constraint::Psd(_)
        )
    }));
    for (c, cone) in ordered.into_iter().zip(&sf.cones) {
        let len = cone.rows();
        // the rotated cone doubles and shifts the bound
        let scale = match c {
            Constraint::QuadUpper { bound, .. } => bound.constant.abs() + 1.0,
            other => other.constant_scale(),
        };
        out.push((off, off + len, scale));
        off += len;
    }
    out
}
