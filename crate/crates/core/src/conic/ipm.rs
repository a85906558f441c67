//! Primal-dual path following for
//!
//! ```text
//! minimize c^T x   subject to   G x + s = h,  s in K,   A x = b
//! ```
//!
//! with Nesterov-Todd scaling and a Mehrotra predictor-corrector step. The
//! start is infeasible: residuals shrink with the duality gap. Cone vectors
//! are stored flat; a PSD block of dimension `d` occupies `d * d` entries in
//! column-major order, so the flat inner product is the trace inner product.
//!
//! PSD coefficient matrices are kept as sums of `a b^T + b a^T` pieces. With
//! the scaling `W^{-T}(M) = R^{-1} M R^{-T}` every piece stays rank two, so the
//! Schur complement costs `O(d^2 p + p^2 d)` for `p` pieces.

use nalgebra::{Cholesky, DMatrix, DVector};

use super::{
    ConicProblem, Constraint, LinExpr, SolveOutcome, SolveStatus, SolverSettings, WarmStart,
};

/// Rows of `G` restricted to the columns they touch, with `h`.
struct Dense {
    cols: Vec<usize>,
    g: DMatrix<f64>,
    h: DVector<f64>,
}

impl Dense {
    fn from_exprs(exprs: &[LinExpr], factor: &[f64]) -> Self {
        let mut cols: Vec<usize> = exprs
            .iter()
            .flat_map(|e| e.terms.iter().map(|t| t.0))
            .collect();
        cols.sort_unstable();
        cols.dedup();
        let mut g = DMatrix::zeros(exprs.len(), cols.len());
        let mut h = DVector::zeros(exprs.len());
        for (r, e) in exprs.iter().enumerate() {
            h[r] = factor[r] * e.constant;
            for &(v, c) in &e.terms {
                let k = cols.binary_search(&v).expect("column collected");
                // s = e(x) = constant + coef x  =>  G = -coef
                g[(r, k)] -= factor[r] * c;
            }
        }
        Self { cols, g, h }
    }

    fn rows(&self) -> usize {
        self.g.nrows()
    }

    fn gather(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.cols.len(), self.cols.iter().map(|&c| x[c]))
    }

    fn scatter_add(&self, v: &DVector<f64>, out: &mut [f64]) {
        for (k, &c) in self.cols.iter().enumerate() {
            out[c] += v[k];
        }
    }
}

/// `s = C + sum_p x[var_p] (a_p b_p^T + b_p a_p^T)`, so `G x = -sum ...` and `h = C`.
struct PsdBlock {
    dim: usize,
    h: DMatrix<f64>,
    vars: Vec<usize>,
    a: DMatrix<f64>,
    b: DMatrix<f64>,
}

enum Block {
    Nonneg(Dense),
    Soc(Dense),
    Psd(PsdBlock),
}

impl Block {
    fn len(&self) -> usize {
        match self {
            Block::Nonneg(d) | Block::Soc(d) => d.rows(),
            Block::Psd(p) => p.dim * p.dim,
        }
    }

    fn degree(&self) -> usize {
        match self {
            Block::Nonneg(d) => d.rows(),
            Block::Soc(_) => 1,
            Block::Psd(p) => p.dim,
        }
    }
}

struct Model {
    n: usize,
    c: DVector<f64>,
    blocks: Vec<Block>,
    offsets: Vec<usize>,
    m: usize,
    a: DMatrix<f64>,
    b: DVector<f64>,
}

fn psd_block(expr: &super::SymExpr) -> PsdBlock {
    let dim = expr.dim();
    let mut vars = Vec::new();
    let mut cols_a: Vec<DVector<f64>> = Vec::new();
    let mut cols_b: Vec<DVector<f64>> = Vec::new();
    let unit = |i: usize, s: f64| {
        let mut v = DVector::zeros(dim);
        v[i] = s;
        v
    };
    for t in &expr.terms {
        for &(i, j, c) in &t.entries {
            vars.push(t.var);
            if i == j {
                cols_a.push(unit(i, 0.5 * c));
                cols_b.push(unit(i, 1.0));
            } else {
                cols_a.push(unit(i, c));
                cols_b.push(unit(j, 1.0));
            }
        }
        for (u, v) in &t.outer {
            vars.push(t.var);
            cols_a.push(u.clone());
            cols_b.push(v.clone());
        }
    }
    let pieces = vars.len();
    let a = DMatrix::from_fn(dim, pieces, |i, p| cols_a[p][i]);
    let b = DMatrix::from_fn(dim, pieces, |i, p| cols_b[p][i]);
    PsdBlock {
        dim,
        h: expr.constant.clone(),
        vars,
        a,
        b,
    }
}

impl Model {
    fn new(p: &ConicProblem) -> Self {
        let mut blocks = Vec::new();
        let mut eq_rows: Vec<&LinExpr> = Vec::new();
        for c in &p.constraints {
            match c {
                Constraint::Nonneg(es) if !es.is_empty() => {
                    blocks.push(Block::Nonneg(Dense::from_exprs(es, &vec![1.0; es.len()])));
                }
                Constraint::LinearEq(es) => eq_rows.extend(es.iter()),
                Constraint::SecondOrder { head, tail } => {
                    let mut rows = vec![head.clone()];
                    rows.extend(tail.iter().cloned());
                    blocks.push(Block::Soc(Dense::from_exprs(&rows, &vec![1.0; rows.len()])));
                }
                Constraint::QuadUpper {
                    bound,
                    factor,
                    vars,
                } => {
                    // t >= ||w||^2  <=>  ||(t - 1, 2 w)|| <= t + 1
                    let mut rows = vec![bound.clone().plus(1.0), bound.clone().plus(-1.0)];
                    for r in 0..factor.nrows() {
                        let coefs: Vec<f64> = factor.row(r).iter().copied().collect();
                        rows.push(LinExpr::dot(vars, &coefs).scaled(2.0));
                    }
                    blocks.push(Block::Soc(Dense::from_exprs(&rows, &vec![1.0; rows.len()])));
                }
                Constraint::Psd(expr) if expr.dim() > 0 => blocks.push(Block::Psd(psd_block(expr))),
                _ => {}
            }
        }
        let mut offsets = Vec::with_capacity(blocks.len());
        let mut m = 0;
        for blk in &blocks {
            offsets.push(m);
            m += blk.len();
        }
        let n = p.num_vars;
        let mut a = DMatrix::zeros(eq_rows.len(), n);
        let mut b = DVector::zeros(eq_rows.len());
        for (r, e) in eq_rows.iter().enumerate() {
            for &(v, c) in &e.terms {
                a[(r, v)] += c;
            }
            b[r] = -e.constant;
        }
        Self {
            n,
            c: DVector::from_column_slice(&p.objective),
            blocks,
            offsets,
            m,
            a,
            b,
        }
    }

    fn degree(&self) -> usize {
        self.blocks.iter().map(Block::degree).sum()
    }

    fn slice<'v>(&self, k: usize, v: &'v [f64]) -> &'v [f64] {
        &v[self.offsets[k]..self.offsets[k] + self.blocks[k].len()]
    }

    fn slice_mut<'v>(&self, k: usize, v: &'v mut [f64]) -> &'v mut [f64] {
        let off = self.offsets[k];
        &mut v[off..off + self.blocks[k].len()]
    }

    fn h(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.m];
        for (k, blk) in self.blocks.iter().enumerate() {
            let dst = self.slice_mut(k, &mut out);
            match blk {
                Block::Nonneg(d) | Block::Soc(d) => dst.copy_from_slice(d.h.as_slice()),
                Block::Psd(p) => dst.copy_from_slice(p.h.as_slice()),
            }
        }
        out
    }

    fn g_mul(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.m];
        for (k, blk) in self.blocks.iter().enumerate() {
            let dst = self.slice_mut(k, &mut out);
            match blk {
                Block::Nonneg(d) | Block::Soc(d) => {
                    dst.copy_from_slice((&d.g * d.gather(x)).as_slice());
                }
                Block::Psd(p) => {
                    let mut ax = p.a.clone();
                    for (col, &v) in p.vars.iter().enumerate() {
                        ax.column_mut(col).scale_mut(x[v]);
                    }
                    let half = &ax * p.b.transpose();
                    let full = -(&half + half.transpose());
                    dst.copy_from_slice(full.as_slice());
                }
            }
        }
        out
    }

    fn gt_mul(&self, z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (k, blk) in self.blocks.iter().enumerate() {
            let src = self.slice(k, z);
            match blk {
                Block::Nonneg(d) | Block::Soc(d) => {
                    let v = d.g.tr_mul(&DVector::from_column_slice(src));
                    d.scatter_add(&v, &mut out);
                }
                Block::Psd(p) => {
                    let zm = DMatrix::from_column_slice(p.dim, p.dim, src);
                    let zb = &zm * &p.b;
                    for (col, &v) in p.vars.iter().enumerate() {
                        out[v] -= 2.0 * p.a.column(col).dot(&zb.column(col));
                    }
                }
            }
        }
        out
    }
}

/// Nesterov-Todd scaling of one block.
enum Scale {
    /// `W = diag(d)`.
    Nonneg(DVector<f64>),
    /// `W = beta (2 v v^T - J)`.
    Soc { beta: f64, v: DVector<f64> },
    /// `W(U) = r^T U r`.
    Psd { r: DMatrix<f64>, rinv: DMatrix<f64> },
}

fn soc_j(u: &[f64]) -> DVector<f64> {
    let mut out = DVector::from_column_slice(u);
    for x in out.iter_mut().skip(1) {
        *x = -*x;
    }
    out
}

fn soc_jnorm(u: &[f64]) -> f64 {
    let t = u[0] * u[0] - u[1..].iter().map(|x| x * x).sum::<f64>();
    if t > 0.0 && u[0] > 0.0 {
        t.sqrt()
    } else {
        f64::NAN
    }
}

impl Scale {
    fn identity(blk: &Block) -> Self {
        match blk {
            Block::Nonneg(d) => Scale::Nonneg(DVector::from_element(d.rows(), 1.0)),
            Block::Soc(d) => {
                let mut v = DVector::zeros(d.rows());
                v[0] = 1.0;
                Scale::Soc { beta: 1.0, v }
            }
            Block::Psd(p) => Scale::Psd {
                r: DMatrix::identity(p.dim, p.dim),
                rinv: DMatrix::identity(p.dim, p.dim),
            },
        }
    }

    /// Scaling with `W z = W^{-T} s = lambda`; `None` if `s` or `z` is not interior.
    fn compute(blk: &Block, s: &[f64], z: &[f64], lambda: &mut [f64]) -> Option<Self> {
        match blk {
            Block::Nonneg(_) => {
                if s.iter().chain(z).any(|&v| !(v > 0.0)) {
                    return None;
                }
                let d =
                    DVector::from_iterator(s.len(), s.iter().zip(z).map(|(a, b)| (a / b).sqrt()));
                for ((l, a), b) in lambda.iter_mut().zip(s).zip(z) {
                    *l = (a * b).sqrt();
                }
                Some(Scale::Nonneg(d))
            }
            Block::Soc(_) => {
                let sn = soc_jnorm(s);
                let zn = soc_jnorm(z);
                if !(sn > 0.0 && zn > 0.0) {
                    return None;
                }
                let sb = DVector::from_column_slice(s) / sn;
                let zb = DVector::from_column_slice(z) / zn;
                let gamma = ((1.0 + sb.dot(&zb)) / 2.0).sqrt();
                let mut wb = (&sb + soc_j(zb.as_slice())) / (2.0 * gamma);
                wb[0] += 1.0;
                let v = &wb / (2.0 * wb[0]).sqrt();
                let beta = (sn / zn).sqrt();
                let scale = Scale::Soc { beta, v };
                let l = scale.w(z);
                lambda.copy_from_slice(l.as_slice());
                Some(scale)
            }
            Block::Psd(p) => {
                let d = p.dim;
                let sm = DMatrix::from_column_slice(d, d, s);
                let zm = DMatrix::from_column_slice(d, d, z);
                let ls = Cholesky::new(sm)?.unpack();
                let lz = Cholesky::new(zm)?.unpack();
                let svd = (lz.transpose() * &ls).svd(true, true);
                let u = svd.u?;
                let vt = svd.v_t?;
                let sv = svd.singular_values;
                if sv.iter().any(|&x| !(x > 0.0)) {
                    return None;
                }
                let inv_sqrt = DMatrix::from_diagonal(&sv.map(|x| 1.0 / x.sqrt()));
                let r = &ls * vt.transpose() * &inv_sqrt;
                let rinv = &inv_sqrt * u.transpose() * lz.transpose();
                lambda.iter_mut().for_each(|x| *x = 0.0);
                for i in 0..d {
                    lambda[i * d + i] = sv[i];
                }
                Some(Scale::Psd { r, rinv })
            }
        }
    }

    fn w(&self, u: &[f64]) -> DVector<f64> {
        match self {
            Scale::Nonneg(d) => d.component_mul(&DVector::from_column_slice(u)),
            Scale::Soc { beta, v } => {
                let uv = DVector::from_column_slice(u);
                (v * (2.0 * v.dot(&uv)) - soc_j(u)) * *beta
            }
            Scale::Psd { r, .. } => {
                let d = r.nrows();
                let um = DMatrix::from_column_slice(d, d, u);
                let out = r.transpose() * um * r;
                DVector::from_column_slice(out.as_slice())
            }
        }
    }

    fn wt(&self, u: &[f64]) -> DVector<f64> {
        match self {
            Scale::Psd { r, .. } => {
                let d = r.nrows();
                let um = DMatrix::from_column_slice(d, d, u);
                let out = r * um * r.transpose();
                DVector::from_column_slice(out.as_slice())
            }
            _ => self.w(u),
        }
    }

    fn winv(&self, u: &[f64]) -> DVector<f64> {
        match self {
            Scale::Nonneg(d) => DVector::from_column_slice(u).component_div(d),
            Scale::Soc { beta, v } => {
                let jv = soc_j(v.as_slice());
                let uv = DVector::from_column_slice(u);
                (&jv * (2.0 * jv.dot(&uv)) - soc_j(u)) / *beta
            }
            Scale::Psd { rinv, .. } => {
                let d = rinv.nrows();
                let um = DMatrix::from_column_slice(d, d, u);
                let out = rinv.transpose() * um * rinv;
                DVector::from_column_slice(out.as_slice())
            }
        }
    }

    fn wtinv(&self, u: &[f64]) -> DVector<f64> {
        match self {
            Scale::Psd { rinv, .. } => {
                let d = rinv.nrows();
                let um = DMatrix::from_column_slice(d, d, u);
                let out = rinv * um * rinv.transpose();
                DVector::from_column_slice(out.as_slice())
            }
            _ => self.winv(u),
        }
    }
}

struct Scaling {
    blocks: Vec<Scale>,
    lambda: Vec<f64>,
}

impl Scaling {
    fn identity(model: &Model) -> Self {
        let blocks = model.blocks.iter().map(Scale::identity).collect();
        let mut lambda = vec![0.0; model.m];
        for (k, blk) in model.blocks.iter().enumerate() {
            let l = model.slice_mut(k, &mut lambda);
            identity_into(blk, l);
        }
        Self { blocks, lambda }
    }

    fn compute(model: &Model, s: &[f64], z: &[f64]) -> Option<Self> {
        let mut lambda = vec![0.0; model.m];
        let mut blocks = Vec::with_capacity(model.blocks.len());
        for (k, blk) in model.blocks.iter().enumerate() {
            let l = model.slice_mut(k, &mut lambda);
            blocks.push(Scale::compute(
                blk,
                model.slice(k, s),
                model.slice(k, z),
                l,
            )?);
        }
        Some(Self { blocks, lambda })
    }

    fn apply(
        &self,
        model: &Model,
        u: &[f64],
        f: impl Fn(&Scale, &[f64]) -> DVector<f64>,
    ) -> Vec<f64> {
        let mut out = vec![0.0; model.m];
        for (k, sc) in self.blocks.iter().enumerate() {
            let v = f(sc, model.slice(k, u));
            model.slice_mut(k, &mut out).copy_from_slice(v.as_slice());
        }
        out
    }
}

fn identity_into(blk: &Block, out: &mut [f64]) {
    out.iter_mut().for_each(|x| *x = 0.0);
    match blk {
        Block::Nonneg(_) => out.iter_mut().for_each(|x| *x = 1.0),
        Block::Soc(_) => out[0] = 1.0,
        Block::Psd(p) => {
            for i in 0..p.dim {
                out[i * p.dim + i] = 1.0;
            }
        }
    }
}

/// Jordan product `u ∘ v`.
fn jordan(model: &Model, u: &[f64], v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; model.m];
    for (k, blk) in model.blocks.iter().enumerate() {
        let (a, b) = (model.slice(k, u), model.slice(k, v));
        let dst = model.slice_mut(k, &mut out);
        match blk {
            Block::Nonneg(_) => {
                for i in 0..a.len() {
                    dst[i] = a[i] * b[i];
                }
            }
            Block::Soc(_) => {
                dst[0] = a.iter().zip(b).map(|(x, y)| x * y).sum();
                for i in 1..a.len() {
                    dst[i] = a[0] * b[i] + b[0] * a[i];
                }
            }
            Block::Psd(p) => {
                let d = p.dim;
                let am = DMatrix::from_column_slice(d, d, a);
                let bm = DMatrix::from_column_slice(d, d, b);
                let prod = &am * &bm;
                let sym = (&prod + prod.transpose()) * 0.5;
                dst.copy_from_slice(sym.as_slice());
            }
        }
    }
    out
}

/// Solves `lambda ∘ x = r` for the scaled point `lambda` (diagonal in PSD blocks).
fn jordan_solve(model: &Model, lambda: &[f64], r: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; model.m];
    for (k, blk) in model.blocks.iter().enumerate() {
        let (l, rr) = (model.slice(k, lambda), model.slice(k, r));
        let dst = model.slice_mut(k, &mut out);
        match blk {
            Block::Nonneg(_) => {
                for i in 0..l.len() {
                    dst[i] = rr[i] / l[i];
                }
            }
            Block::Soc(_) => {
                let l1r1: f64 = l[1..].iter().zip(&rr[1..]).map(|(x, y)| x * y).sum();
                let det = l[0] * l[0] - l[1..].iter().map(|x| x * x).sum::<f64>();
                let x0 = (l[0] * rr[0] - l1r1) / det;
                dst[0] = x0;
                for i in 1..l.len() {
                    dst[i] = (rr[i] - x0 * l[i]) / l[0];
                }
            }
            Block::Psd(p) => {
                let d = p.dim;
                for j in 0..d {
                    for i in 0..d {
                        dst[j * d + i] = 2.0 * rr[j * d + i] / (l[i * d + i] + l[j * d + j]);
                    }
                }
            }
        }
    }
    out
}

/// Largest `t` with `u + t d` in the cone, for `u` interior.
fn max_step_soc(u: &[f64], d: &[f64]) -> f64 {
    let a = d[0] * d[0] - d[1..].iter().map(|x| x * x).sum::<f64>();
    let b = u[0] * d[0] - u[1..].iter().zip(&d[1..]).map(|(x, y)| x * y).sum::<f64>();
    let c = u[0] * u[0] - u[1..].iter().map(|x| x * x).sum::<f64>();
    // f(t) = a t^2 + 2 b t + c, f(0) = c > 0
    let mut best = f64::INFINITY;
    if a.abs() <= 1e-300 {
        if b < 0.0 {
            best = -c / (2.0 * b);
        }
    } else {
        let disc = b * b - a * c;
        if disc >= 0.0 {
            let q = -(b + b.signum() * disc.sqrt());
            for root in [q / a, if q != 0.0 { c / q } else { f64::INFINITY }] {
                if root > 0.0 && root < best {
                    best = root;
                }
            }
        }
    }
    // the head must stay positive as well
    if d[0] < 0.0 {
        best = best.min(-u[0] / d[0]);
    }
    best
}

fn max_step(model: &Model, lambda: &[f64], dir: &[f64]) -> f64 {
    let mut best = f64::INFINITY;
    for (k, blk) in model.blocks.iter().enumerate() {
        let (l, d) = (model.slice(k, lambda), model.slice(k, dir));
        let t = match blk {
            Block::Nonneg(_) => l
                .iter()
                .zip(d)
                .filter(|(_, &di)| di < 0.0)
                .map(|(li, di)| -li / di)
                .fold(f64::INFINITY, f64::min),
            Block::Soc(_) => max_step_soc(l, d),
            Block::Psd(p) => {
                let n = p.dim;
                let inv: Vec<f64> = (0..n).map(|i| 1.0 / l[i * n + i].sqrt()).collect();
                let m = DMatrix::from_fn(n, n, |i, j| {
                    0.5 * (d[j * n + i] + d[i * n + j]) * inv[i] * inv[j]
                });
                let lmin = m.symmetric_eigenvalues().min();
                if lmin < 0.0 {
                    -1.0 / lmin
                } else {
                    f64::INFINITY
                }
            }
        };
        best = best.min(t);
    }
    best
}

/// Smallest `t` such that `u + t e` lies in the cone.
fn interior_shift(model: &Model, u: &[f64]) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    for (k, blk) in model.blocks.iter().enumerate() {
        let v = model.slice(k, u);
        let t = match blk {
            Block::Nonneg(_) => v.iter().map(|x| -x).fold(f64::NEG_INFINITY, f64::max),
            Block::Soc(_) => v[1..].iter().map(|x| x * x).sum::<f64>().sqrt() - v[0],
            Block::Psd(p) => {
                let m = DMatrix::from_column_slice(p.dim, p.dim, v);
                -(&m + m.transpose())
                    .scale(0.5)
                    .symmetric_eigenvalues()
                    .min()
            }
        };
        worst = worst.max(t);
    }
    worst
}

fn add_identity(model: &Model, u: &mut [f64], t: f64) {
    let mut e = vec![0.0; model.m];
    for (k, blk) in model.blocks.iter().enumerate() {
        identity_into(blk, model.slice_mut(k, &mut e));
    }
    u.iter_mut().zip(&e).for_each(|(x, ei)| *x += t * ei);
}

/// Factored Newton system `[[H, A^T], [A, 0]]`.
struct Kkt {
    chol: Cholesky<f64, nalgebra::Dyn>,
    /// Factor of `A K^{-1} A^T` when there are equality rows.
    schur: Option<(Cholesky<f64, nalgebra::Dyn>, DMatrix<f64>)>,
}

fn schur_complement(model: &Model, scaling: &Scaling) -> DMatrix<f64> {
    let n = model.n;
    let mut h = DMatrix::zeros(n, n);
    for (blk, sc) in model.blocks.iter().zip(&scaling.blocks) {
        match (blk, sc) {
            (Block::Nonneg(d), Scale::Nonneg(w)) => {
                let mut bm = d.g.clone();
                for (r, wr) in w.iter().enumerate() {
                    bm.row_mut(r).scale_mut(1.0 / wr);
                }
                add_gram(&mut h, &d.cols, &bm);
            }
            (Block::Soc(d), Scale::Soc { beta, v }) => {
                // W^{-1} G = (2 (Jv)((Jv)^T G) - J G) / beta
                let jv = soc_j(v.as_slice());
                let proj = d.g.tr_mul(&jv);
                // -J G flips the head row only
                let mut bm = d.g.clone();
                bm.row_mut(0).neg_mut();
                bm.ger(2.0, &jv, &proj, 1.0);
                bm /= *beta;
                add_gram(&mut h, &d.cols, &bm);
            }
            (Block::Psd(p), Scale::Psd { rinv, .. }) => {
                let pa = rinv * &p.a;
                let pb = rinv * &p.b;
                let aa = pa.tr_mul(&pa);
                let bb = pb.tr_mul(&pb);
                let ab = pa.tr_mul(&pb);
                let pieces = p.vars.len();
                for j in 0..pieces {
                    for i in 0..pieces {
                        let val = 2.0 * (aa[(i, j)] * bb[(i, j)] + ab[(i, j)] * ab[(j, i)]);
                        h[(p.vars[i], p.vars[j])] += val;
                    }
                }
            }
            _ => unreachable!("scaling matches block kinds"),
        }
    }
    h
}

fn add_gram(h: &mut DMatrix<f64>, cols: &[usize], bm: &DMatrix<f64>) {
    let g = bm.tr_mul(bm);
    for (j, &cj) in cols.iter().enumerate() {
        for (i, &ci) in cols.iter().enumerate() {
            h[(ci, cj)] += g[(i, j)];
        }
    }
}

fn cholesky_regularized(mut k: DMatrix<f64>) -> Option<Cholesky<f64, nalgebra::Dyn>> {
    let scale = k.diagonal().amax().max(1e-300);
    let mut reg = 0.0;
    for _ in 0..8 {
        if let Some(c) = Cholesky::new(k.clone()) {
            return Some(c);
        }
        let next = if reg == 0.0 {
            1e-14 * scale
        } else {
            reg * 100.0
        };
        for i in 0..k.nrows() {
            k[(i, i)] += next - reg;
        }
        reg = next;
    }
    None
}

impl Kkt {
    fn factor(model: &Model, scaling: &Scaling) -> Option<Self> {
        let mut k = schur_complement(model, scaling);
        if model.a.nrows() > 0 {
            k += model.a.tr_mul(&model.a);
        }
        let chol = cholesky_regularized(k)?;
        let schur = if model.a.nrows() > 0 {
            let kinv_at = chol.solve(&model.a.transpose());
            let s = &model.a * &kinv_at;
            Some((cholesky_regularized(s)?, kinv_at))
        } else {
            None
        };
        Some(Self { chol, schur })
    }

    /// Solves `K dx + A^T dy = rx + A^T ry`, `A dx = ry` with `K = H + A^T A`.
    fn solve(
        &self,
        model: &Model,
        rx: &DVector<f64>,
        ry: &DVector<f64>,
    ) -> (DVector<f64>, DVector<f64>) {
        match &self.schur {
            None => (self.chol.solve(rx), DVector::zeros(0)),
            Some((s, kinv_at)) => {
                let r = rx + model.a.tr_mul(ry);
                let kinv_r = self.chol.solve(&r);
                let dy = s.solve(&(&model.a * &kinv_r - ry));
                let dx = kinv_r - kinv_at * &dy;
                (dx, dy)
            }
        }
    }
}

struct Direction {
    dx: DVector<f64>,
    dy: DVector<f64>,
    /// Scaled directions `W^{-T} ds` and `W dz`.
    ds: Vec<f64>,
    dz: Vec<f64>,
}

/// Newton step for
/// `A^T dy + G^T dz = bx`, `A dx = by`, `G dx + ds = bz`, `W dz + W^{-T} ds = t`,
/// with two rounds of iterative refinement against the unreduced equations.
fn newton(
    model: &Model,
    scaling: &Scaling,
    kkt: &Kkt,
    bx: &[f64],
    by: &[f64],
    bz: &[f64],
    t: &[f64],
) -> Direction {
    let mut dir = newton_reduced(model, scaling, kkt, bx, by, bz, t);
    let scale = norm2(bx)
        .max(norm2(by))
        .max(norm2(bz))
        .max(norm2(t))
        .max(1e-300);
    for _ in 0..2 {
        let dz = scaling.apply(model, &dir.dz, Scale::winv);
        let ds = scaling.apply(model, &dir.ds, Scale::wt);
        let gtz = model.gt_mul(&dz);
        let aty = model.a.tr_mul(&dir.dy);
        let gdx = model.g_mul(dir.dx.as_slice());
        let adx = &model.a * &dir.dx;
        let ex: Vec<f64> = (0..model.n).map(|j| bx[j] - aty[j] - gtz[j]).collect();
        let ey: Vec<f64> = (0..by.len()).map(|i| by[i] - adx[i]).collect();
        let ez: Vec<f64> = (0..model.m).map(|i| bz[i] - gdx[i] - ds[i]).collect();
        let et: Vec<f64> = (0..model.m).map(|i| t[i] - dir.ds[i] - dir.dz[i]).collect();
        let err = norm2(&ex).max(norm2(&ey)).max(norm2(&ez)).max(norm2(&et));
        if err <= 1e-15 * scale {
            break;
        }
        let corr = newton_reduced(model, scaling, kkt, &ex, &ey, &ez, &et);
        dir.dx += corr.dx;
        dir.dy += corr.dy;
        dir.ds.iter_mut().zip(&corr.ds).for_each(|(a, b)| *a += b);
        dir.dz.iter_mut().zip(&corr.dz).for_each(|(a, b)| *a += b);
    }
    dir
}

fn newton_reduced(
    model: &Model,
    scaling: &Scaling,
    kkt: &Kkt,
    bx: &[f64],
    by: &[f64],
    bz: &[f64],
    t: &[f64],
) -> Direction {
    let wtinv_bz = scaling.apply(model, bz, Scale::wtinv);
    let diff: Vec<f64> = t.iter().zip(&wtinv_bz).map(|(a, b)| a - b).collect();
    let winv_diff = scaling.apply(model, &diff, Scale::winv);
    let gt = model.gt_mul(&winv_diff);
    let rx = DVector::from_iterator(model.n, bx.iter().zip(&gt).map(|(a, b)| a - b));
    let ry = DVector::from_column_slice(by);
    let (dx, dy) = kkt.solve(model, &rx, &ry);
    let dy = if dy.len() == by.len() {
        dy
    } else {
        DVector::zeros(by.len())
    };
    let gdx = model.g_mul(dx.as_slice());
    let resid: Vec<f64> = gdx.iter().zip(bz).map(|(a, b)| a - b).collect();
    let mut dz = scaling.apply(model, &resid, Scale::wtinv);
    dz.iter_mut().zip(t).for_each(|(a, b)| *a += b);
    let ds: Vec<f64> = t.iter().zip(&dz).map(|(a, b)| a - b).collect();
    Direction { dx, dy, ds, dz }
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn symmetrize(model: &Model, u: &mut [f64]) {
    for (k, blk) in model.blocks.iter().enumerate() {
        if let Block::Psd(p) = blk {
            let d = p.dim;
            let v = model.slice_mut(k, u);
            for j in 0..d {
                for i in (j + 1)..d {
                    let avg = 0.5 * (v[j * d + i] + v[i * d + j]);
                    v[j * d + i] = avg;
                    v[i * d + j] = avg;
                }
            }
        }
    }
}

pub(super) fn solve(p: &ConicProblem, cfg: &SolverSettings) -> SolveOutcome {
    let model = Model::new(p);
    let n = model.n;
    let h = model.h();
    let b = model.b.as_slice().to_vec();
    let c = model.c.as_slice().to_vec();
    let nh = norm2(&h).max(1.0);
    let nb = norm2(&b).max(1.0);
    let nc = norm2(&c).max(1.0);
    let degree = model.degree().max(1) as f64;

    let fail =
        |x: Vec<f64>, iterations: usize, msg: Option<String>, status: SolveStatus| SolveOutcome {
            max_violation: p.max_violation(&x),
            objective_value: p.objective_value(&x),
            point: x,
            status,
            iterations,
            primal_residual: f64::NAN,
            dual_residual: f64::NAN,
            certificate: msg,
            best_feasible_trace: Vec::new(),
            warm: WarmStart::default(),
        };

    // starting point from the two least-squares problems with W = I
    let ident = Scaling::identity(&model);
    let Some(kkt) = Kkt::factor(&model, &ident) else {
        return fail(
            vec![0.0; n],
            0,
            Some("singular constraint system".into()),
            SolveStatus::IterLimit,
        );
    };
    let zeros_m = vec![0.0; model.m];
    let primal = newton(&model, &ident, &kkt, &vec![0.0; n], &b, &h, &zeros_m);
    let mut x: Vec<f64> = primal.dx.as_slice().to_vec();
    let mut s = primal.ds.clone();
    let neg_c: Vec<f64> = c.iter().map(|v| -v).collect();
    let dual = newton(
        &model,
        &ident,
        &kkt,
        &neg_c,
        &vec![0.0; b.len()],
        &zeros_m,
        &zeros_m,
    );
    let mut y: Vec<f64> = dual.dy.as_slice().to_vec();
    if y.len() != b.len() {
        y = vec![0.0; b.len()];
    }
    let mut z = dual.dz.clone();
    for u in [&mut s, &mut z] {
        let t = interior_shift(&model, u);
        if t >= -1e-8 {
            add_identity(&model, u, 1.0 + t.max(0.0));
        }
    }

    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut pres = f64::INFINITY;
    let mut dres = f64::INFINITY;
    let mut note = None;
    let mut near = false;

    for k in 0..=cfg.ipm_max_iters {
        iterations = k;
        let gx = model.g_mul(&x);
        let gtz = model.gt_mul(&z);
        let aty = if b.is_empty() {
            vec![0.0; n]
        } else {
            model
                .a
                .tr_mul(&DVector::from_column_slice(&y))
                .as_slice()
                .to_vec()
        };
        let ax = if b.is_empty() {
            Vec::new()
        } else {
            (&model.a * DVector::from_column_slice(&x))
                .as_slice()
                .to_vec()
        };
        let rx: Vec<f64> = (0..n).map(|j| c[j] + aty[j] + gtz[j]).collect();
        let ry: Vec<f64> = ax.iter().zip(&b).map(|(a, bb)| a - bb).collect();
        let rz: Vec<f64> = (0..model.m).map(|i| gx[i] + s[i] - h[i]).collect();
        let gap = dot(&s, &z);
        let pcost = dot(&c, &x);
        let dcost = -dot(&b, &y) - dot(&h, &z);
        pres = (norm2(&ry) / nb).max(norm2(&rz) / nh);
        dres = norm2(&rx) / nc;
        log::trace!("ipm {k}: pcost {pcost:.9e} dcost {dcost:.9e} gap {gap:.2e} pres {pres:.2e} dres {dres:.2e}");

        if p.max_violation(&x) <= cfg.tol_feas && best.as_ref().is_none_or(|(bv, _)| pcost < *bv) {
            trace.push(pcost);
            best = Some((pcost, x.clone()));
        }
        let within = |f: f64| {
            let gap_tol = f * cfg.ipm_gap_tol;
            let gap_ok = gap <= gap_tol * pcost.abs().min(dcost.abs()).max(1.0)
                || (pcost - dcost).abs() <= gap_tol * pcost.abs().max(1.0);
            pres <= f * cfg.ipm_feas_tol && dres <= f * cfg.ipm_feas_tol && gap_ok
        };
        if within(1.0) {
            converged = true;
            break;
        }
        // a stall within 100x of the tolerances still counts as converged
        near = within(100.0);
        if k == cfg.ipm_max_iters {
            break;
        }

        let Some(scaling) = Scaling::compute(&model, &s, &z) else {
            note = Some("iterate left the cone interior".to_string());
            break;
        };
        let Some(kkt) = Kkt::factor(&model, &scaling) else {
            note = Some("Newton system could not be factored".to_string());
            break;
        };
        let lambda = &scaling.lambda;
        let neg_rx: Vec<f64> = rx.iter().map(|v| -v).collect();
        let neg_ry: Vec<f64> = ry.iter().map(|v| -v).collect();
        let neg_rz: Vec<f64> = rz.iter().map(|v| -v).collect();

        // predictor
        let t_aff: Vec<f64> = lambda.iter().map(|v| -v).collect();
        let aff = newton(&model, &scaling, &kkt, &neg_rx, &neg_ry, &neg_rz, &t_aff);
        let step_aff = max_step(&model, lambda, &aff.ds)
            .min(max_step(&model, lambda, &aff.dz))
            .min(1.0);
        let sigma = (1.0 - step_aff).powi(3);
        let mu = gap / degree;

        // corrector
        let ll = jordan(&model, lambda, lambda);
        let cross = jordan(&model, &aff.ds, &aff.dz);
        let mut e = vec![0.0; model.m];
        for (kb, blk) in model.blocks.iter().enumerate() {
            identity_into(blk, model.slice_mut(kb, &mut e));
        }
        let bc: Vec<f64> = (0..model.m)
            .map(|i| -ll[i] - cross[i] + sigma * mu * e[i])
            .collect();
        let t = jordan_solve(&model, lambda, &bc);
        let dir = newton(&model, &scaling, &kkt, &neg_rx, &neg_ry, &neg_rz, &t);
        let alpha_max = max_step(&model, lambda, &dir.ds).min(max_step(&model, lambda, &dir.dz));
        let step = (0.99 * alpha_max).min(1.0);
        if !(step > 1e-14) {
            note = Some("step length collapsed".to_string());
            break;
        }

        let ds = scaling.apply(&model, &dir.ds, Scale::wt);
        let dz = scaling.apply(&model, &dir.dz, Scale::winv);
        x.iter_mut()
            .zip(dir.dx.iter())
            .for_each(|(a, d)| *a += step * d);
        y.iter_mut()
            .zip(dir.dy.iter())
            .for_each(|(a, d)| *a += step * d);
        s.iter_mut().zip(&ds).for_each(|(a, d)| *a += step * d);
        z.iter_mut().zip(&dz).for_each(|(a, d)| *a += step * d);
        symmetrize(&model, &mut s);
        symmetrize(&model, &mut z);
    }

    let mut status_note = note;
    if !converged && near {
        converged = true;
        log::debug!("ipm stalled near the tolerances after {iterations} iterations");
    }
    if !converged {
        // a diverging dual or primal iterate may certify infeasibility
        let gtz = model.gt_mul(&z);
        let aty = if b.is_empty() {
            vec![0.0; n]
        } else {
            model
                .a
                .tr_mul(&DVector::from_column_slice(&y))
                .as_slice()
                .to_vec()
        };
        let td = -(dot(&b, &y) + dot(&h, &z));
        if td > 0.0 {
            let ray: Vec<f64> = (0..n).map(|j| (aty[j] + gtz[j]) / td).collect();
            if norm2(&ray) <= cfg.eps_infeas * nc {
                return SolveOutcome {
                    certificate: Some(format!(
                        "dual ray (y, z) with b^T y + h^T z = -1 and ||A^T y + G^T z|| = {:.2e}",
                        norm2(&ray)
                    )),
                    ..fail(x, iterations, None, SolveStatus::Infeasible)
                };
            }
        }
        let tp = -dot(&c, &x);
        if tp > 0.0 {
            let gx = model.g_mul(&x);
            let ray: Vec<f64> = (0..model.m).map(|i| (gx[i] + s[i]) / tp).collect();
            let ax = if b.is_empty() {
                0.0
            } else {
                (&model.a * DVector::from_column_slice(&x)).norm() / tp
            };
            if norm2(&ray).max(ax) <= cfg.eps_infeas * nh {
                return SolveOutcome {
                    certificate: Some(format!(
                        "primal ray x with c^T x = -1 and ||G x + s|| = {:.2e}",
                        norm2(&ray)
                    )),
                    ..fail(x, iterations, None, SolveStatus::Unbounded)
                };
            }
        }
        if status_note.is_none() {
            status_note = Some("iteration limit reached".into());
        }
    }

    // a converged iterate beats earlier, cheaper points that only meet the looser tol_feas
    let (point, status) = if converged && p.max_violation(&x) <= cfg.tol_feas {
        (x, SolveStatus::Feasible)
    } else {
        super::finish(p, cfg, converged, x, best)
    };
    SolveOutcome {
        max_violation: p.max_violation(&point),
        objective_value: p.objective_value(&point),
        point,
        status,
        iterations,
        primal_residual: pres,
        dual_residual: dres,
        certificate: status_note.filter(|_| status != SolveStatus::Feasible),
        best_feasible_trace: trace,
        warm: WarmStart::default(),
    }
}
