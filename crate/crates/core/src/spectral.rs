//! Symmetric eigendecompositions and the geometry of `X_A = {x : x x^T - A ⪰ 0}`.
//!
//! `X_A` is empty when `lambda_2(A) > 0`, the whole space when `lambda_1(A) <= 0`,
//! and otherwise the closed region beyond both sheets of the hyperboloid
//! `sum_i (x^T u_i)^2 / lambda_i = 1`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graph::FlowMatrix;

/// Eigenvalues with `|lambda| <= ZERO_EIGENVALUE_REL * max |lambda|` count as zero.
pub const ZERO_EIGENVALUE_REL: f64 = 1e-9;

const SYMMETRY_TOL: f64 = 1e-10;

/// Eigenvalues in descending order with matching unit eigenvectors as columns.
///
/// Each eigenvector is signed so that its entries sum to a nonnegative value;
/// when the sum vanishes the first nonzero entry is positive.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl EigenDecomposition {
    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn lambda(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn vector(&self, i: usize) -> DVector<f64> {
        self.vectors.column(i).into_owned()
    }

    /// Spectral norm of the decomposed matrix.
    pub fn norm(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn zero_tol(&self) -> f64 {
        ZERO_EIGENVALUE_REL * self.norm()
    }

    pub fn is_zero(&self, i: usize) -> bool {
        self.values[i].abs() <= self.zero_tol()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.values[self.n() - 1]
    }

    pub fn feasibility_class(&self) -> FeasibilityClass {
        let tol = self.zero_tol();
        if self.n() > 1 && self.values[1] > tol {
            FeasibilityClass::Empty
        } else if self.values[0] <= tol {
            FeasibilityClass::All
        } else {
            FeasibilityClass::TwoSheetHyperboloid
        }
    }
}

/// Shape of `X_A`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeasibilityClass {
    Empty,
    All,
    TwoSheetHyperboloid,
}

fn asymmetry(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in 0..i {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst
}

fn check_symmetric(a: &DMatrix<f64>) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            found: a.ncols(),
        });
    }
    let asym = asymmetry(a);
    if asym > SYMMETRY_TOL * a.amax().max(1.0) {
        return Err(Error::NotSymmetric(asym));
    }
    Ok(())
}

fn normalize_sign(v: &mut DVector<f64>) {
    let sum = v.sum();
    let flip = if sum.abs() > 1e-12 {
        sum < 0.0
    } else {
        v.iter().find(|x| x.abs() > 1e-12).is_some_and(|&x| x < 0.0)
    };
    if flip {
        v.neg_mut();
    }
}

/// Full decomposition of a symmetric matrix, eigenvalues descending.
pub fn sym_eig(a: &DMatrix<f64>) -> Result<EigenDecomposition> {
    check_symmetric(a)?;
    Ok(sym_eig_unchecked(a))
}

pub(crate) fn sym_eig_unchecked(a: &DMatrix<f64>) -> EigenDecomposition {
    let n = a.nrows();
    let sym = (a + a.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        let mut v = eig.eigenvectors.column(i).into_owned();
        normalize_sign(&mut v);
        vectors.set_column(k, &v);
    }
    EigenDecomposition { values, vectors }
}

/// Smallest eigenvalue of a symmetric matrix (values only).
pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    let sym = (a + a.transpose()) * 0.5;
    sym.symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

pub fn classify_xa(a: &DMatrix<f64>) -> Result<FeasibilityClass> {
    Ok(sym_eig(a)?.feasibility_class())
}

/// Membership by the definition: `lambda_min(x x^T - A) >= -1e-9 (1 + ||A||_F)`.
pub fn in_xa_direct(x: &DVector<f64>, a: &DMatrix<f64>) -> Result<bool> {
    check_symmetric(a)?;
    if x.len() != a.nrows() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            found: x.len(),
        });
    }
    let m = x * x.transpose() - a;
    Ok(min_eigenvalue(&m) >= -1e-9 * (1.0 + a.norm()))
}

/// `sum_i (x^T u_i)^2 / lambda_i` over the nonzero eigenvalues, together with the
/// largest `|x^T u_i|` over the zero eigenvalues.
pub fn hyperboloid_value(x: &DVector<f64>, eig: &EigenDecomposition) -> (f64, f64) {
    let mut value = 0.0;
    let mut null_residual = 0.0_f64;
    for i in 0..eig.n() {
        let proj = eig.vectors.column(i).dot(x);
        if eig.is_zero(i) {
            null_residual = null_residual.max(proj.abs());
        } else {
            value += proj * proj / eig.lambda(i);
        }
    }
    (value, null_residual)
}

/// Membership through the closed-form hyperboloid inequality. Zero eigenvalues
/// drop out of the sum and impose `x^T u_i = 0` instead.
pub fn in_xa_hyperboloid(x: &DVector<f64>, a: &DMatrix<f64>) -> Result<bool> {
    let eig = sym_eig(a)?;
    if eig.feasibility_class() != FeasibilityClass::TwoSheetHyperboloid {
        return Err(Error::WrongClass);
    }
    if x.len() != eig.n() {
        return Err(Error::DimensionMismatch {
            expected: eig.n(),
            found: x.len(),
        });
    }
    let (value, null_residual) = hyperboloid_value(x, &eig);
    Ok(value >= 1.0 - 1e-12 && null_residual <= 1e-9 * (1.0 + x.norm()))
}

/// Second-order cone description of `X_A`:
/// `±lead^T mu >= ||(1, rows^T mu)||_2` together with `null^T mu = 0`.
#[derive(Debug, Clone)]
pub struct ConicData {
    /// `u_1 / sqrt(lambda_1)`.
    pub lead: DVector<f64>,
    /// `u_i / sqrt(|lambda_i|)` for the negative eigenvalues.
    pub rows: Vec<DVector<f64>>,
    /// Eigenvectors of the zero eigenvalues (other than the first).
    pub null: Vec<DVector<f64>>,
}

impl ConicData {
    pub fn lead_value(&self, mu: &DVector<f64>) -> f64 {
        self.lead.dot(mu)
    }

    /// `z = (1, rows^T mu)`.
    pub fn z(&self, mu: &DVector<f64>) -> DVector<f64> {
        let mut z = DVector::zeros(self.rows.len() + 1);
        z[0] = 1.0;
        for (k, r) in self.rows.iter().enumerate() {
            z[k + 1] = r.dot(mu);
        }
        z
    }

    /// Whether `mu` lies on the `+` (`positive = true`) or `-` sheet.
    pub fn holds(&self, mu: &DVector<f64>, positive: bool) -> bool {
        let sign = if positive { 1.0 } else { -1.0 };
        let lhs = sign * self.lead_value(mu);
        let scale = 1.0 + mu.norm();
        lhs >= self.z(mu).norm() - 1e-12 * scale
            && self.null.iter().all(|u| u.dot(mu).abs() <= 1e-9 * scale)
    }
}

pub fn conic_data(a_alpha: &DMatrix<f64>) -> Result<ConicData> {
    conic_data_from_eig(&sym_eig(a_alpha)?)
}

pub fn conic_data_from_eig(eig: &EigenDecomposition) -> Result<ConicData> {
    if eig.feasibility_class() != FeasibilityClass::TwoSheetHyperboloid {
        return Err(Error::WrongClass);
    }
    let lead = eig.vector(0) / eig.lambda(0).sqrt();
    let mut rows = Vec::new();
    let mut null = Vec::new();
    for i in 1..eig.n() {
        if eig.is_zero(i) {
            null.push(eig.vector(i));
        } else {
            rows.push(eig.vector(i) / eig.lambda(i).abs().sqrt());
        }
    }
    Ok(ConicData { lead, rows, null })
}

/// Starting point `alpha = lambda_2(A) 1`, `mu = sqrt(lambda_1 - lambda_2) u_1(A)`.
pub fn initial_point(a: &FlowMatrix) -> (DVector<f64>, DVector<f64>) {
    let n = a.n();
    let eig = sym_eig_unchecked(a.matrix());
    let l2 = if n > 1 { eig.lambda(1) } else { 0.0 };
    let scale = (eig.lambda(0) - l2).max(0.0).sqrt();
    (DVector::from_element(n, l2), eig.vector(0) * scale)
}

/// Factor `L` with `L^T L = P`; negative eigenvalues down to
/// `-1e-8 max(1, ||P||)` are clamped to zero and zero rows are dropped.
pub fn psd_sqrt(p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = sym_eig(p)?;
    let tol = 1e-8 * eig.norm().max(1.0);
    if eig.min_eigenvalue() < -tol {
        return Err(Error::NotPsd(eig.min_eigenvalue()));
    }
    let keep: Vec<usize> = (0..eig.n()).filter(|&i| eig.lambda(i) > 0.0).collect();
    let mut l = DMatrix::zeros(keep.len(), eig.n());
    for (r, &i) in keep.iter().enumerate() {
        let s = eig.lambda(i).sqrt();
        for j in 0..eig.n() {
            l[(r, j)] = s * eig.vectors[(j, i)];
        }
    }
    Ok(l)
}
