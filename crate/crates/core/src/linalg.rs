//! Small dense helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{arg_err, Error, Result};

/// Relative eigenvalue floor used for positive-definiteness checks.
pub(crate) const PD_REL_TOL: f64 = 1e-12;

pub(crate) fn quad_form(m: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    v.dot(&(m * v))
}

pub(crate) fn check_symmetric(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if !m.is_square() {
        return Err(Error::Validation(format!("{what} must be square")));
    }
    let scale = m.amax().max(f64::MIN_POSITIVE);
    let asym = (m - m.transpose()).amax();
    if asym > 1e-12 * scale {
        return Err(Error::Validation(format!(
            "{what} is not symmetric (max |m - m'| = {asym:e})"
        )));
    }
    Ok(())
}

/// Symmetric eigenvalues in ascending order.
pub(crate) fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let mut eig: Vec<f64> = sym.symmetric_eigen().eigenvalues.iter().copied().collect();
    eig.sort_by(f64::total_cmp);
    eig
}

/// Checks `m` is symmetric positive definite with a scale-free eigenvalue floor.
pub(crate) fn check_positive_definite(m: &DMatrix<f64>, what: &str) -> Result<()> {
    check_symmetric(m, what)?;
    let eig = sym_eigenvalues(m);
    let largest = *eig.last().unwrap_or(&0.0);
    for (i, &ev) in eig.iter().enumerate() {
        if !(largest > 0.0 && ev > PD_REL_TOL * largest) {
            return Err(Error::Validation(format!(
                "{what} is not positive definite: eigenvalue #{i} = {ev:e} (largest {largest:e})"
            )));
        }
    }
    Ok(())
}

/// Largest generalized eigenvalue of the symmetric pencil `(m, p)` with `p` positive definite.
///
/// Reduces to a standard symmetric problem `L^{-1} m L^{-T}` through the Cholesky factor
/// `p = L L'`.
pub(crate) fn max_generalized_eigenvalue(m: &DMatrix<f64>, p: &DMatrix<f64>) -> Result<f64> {
    let chol = p
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Validation("Cholesky factorization of P failed".into()))?;
    let l = chol.l();
    let sym_m = (m + m.transpose()) * 0.5;
    let x = l
        .solve_lower_triangular(&sym_m)
        .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
    let w = l
        .solve_lower_triangular(&x.transpose())
        .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
    let eig = sym_eigenvalues(&w);
    Ok(*eig.last().unwrap_or(&0.0))
}

/// Solves the discrete Lyapunov equation `X - A' X A = Q` for symmetric `X`.
///
/// `A` must be Schur stable for the solution to be positive definite when `Q` is.
/// Uses the Kronecker form, which is fine for the small state dimensions handled here.
pub fn discrete_lyapunov(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if !a.is_square() || q.shape() != (n, n) {
        return arg_err("discrete_lyapunov: A and Q must be square of equal size");
    }
    // vec(A' X A) = (A' ⊗ A') vec(X) in column-major vec.
    let at = a.transpose();
    let kron = at.kronecker(&at);
    let lhs = DMatrix::<f64>::identity(n * n, n * n) - kron;
    let rhs = DVector::from_column_slice(q.as_slice());
    let sol = lhs
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numerical("discrete Lyapunov equation is singular".into()))?;
    let x = DMatrix::from_column_slice(n, n, sol.as_slice());
    Ok((&x + x.transpose()) * 0.5)
}

/// Gain `k` placing the eigenvalues of `A + B k'` at the given real poles (Ackermann's formula).
pub fn ackermann_gain(a: &DMatrix<f64>, b: &DVector<f64>, poles: &[f64]) -> Result<DVector<f64>> {
    let n = a.nrows();
    if !a.is_square() || b.len() != n || poles.len() != n {
        return arg_err("ackermann_gain: need square A, len(B) = n and n poles");
    }
    let mut ctrb = DMatrix::<f64>::zeros(n, n);
    let mut col = b.clone();
    for j in 0..n {
        ctrb.set_column(j, &col);
        col = a * col;
    }
    let mut char_poly = DMatrix::<f64>::identity(n, n);
    for &pole in poles {
        char_poly = char_poly * (a - DMatrix::<f64>::identity(n, n) * pole);
    }
    let inv = ctrb
        .try_inverse()
        .ok_or_else(|| Error::Numerical("pair (A, B) is not controllable".into()))?;
    let last_row = inv.row(n - 1);
    // Ackermann gives K with eig(A - B K) = poles; our convention is u = k'x.
    Ok(-(last_row * char_poly).transpose())
}
