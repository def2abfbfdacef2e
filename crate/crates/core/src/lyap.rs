//! Quadratic Lyapunov candidates from the linearization at the origin.

use nalgebra::{DMatrix, DVector};

use crate::poly::{DynamicalSystem, Monomial, Polynomial};

/// Largest real part of `A`'s spectrum still treated as stable.
const HURWITZ_MARGIN: f64 = -1e-9;
const RESIDUAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LyapError {
    #[error("linearization is not Hurwitz (max real eigenvalue {max_real_part})")]
    NotHurwitz { max_real_part: f64 },
    #[error("matrix dimensions do not agree")]
    DimensionMismatch,
    #[error("Q must be symmetric positive definite")]
    QNotPositiveDefinite,
    #[error("Lyapunov solve failed: residual {residual:e}, min eigenvalue of P {min_eigenvalue:e}")]
    SolveFailed { residual: f64, min_eigenvalue: f64 },
}

/// Jacobian of the vector field at the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedSystem {
    pub a: DMatrix<f64>,
}

pub fn linearize(sys: &DynamicalSystem) -> LinearizedSystem {
    let n = sys.nvars();
    let a = DMatrix::from_fn(n, n, |k, j| sys.field()[k].coeff(&Monomial::var(n, j)));
    LinearizedSystem { a }
}

pub fn max_real_eigenvalue(a: &DMatrix<f64>) -> f64 {
    a.complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

fn sym_index(n: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * n - i * (i + 1) / 2 + j
}

/// Solves `A^T P + P A = -Q` for symmetric `P`.
pub fn solve_lyapunov(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>, LyapError> {
    let n = a.nrows();
    if a.ncols() != n || q.shape() != (n, n) {
        return Err(LyapError::DimensionMismatch);
    }
    if (q - q.transpose()).amax() > 1e-12 * q.amax().max(1.0)
        || q.clone().symmetric_eigenvalues().min() <= 0.0
    {
        return Err(LyapError::QNotPositiveDefinite);
    }
    let max_real_part = max_real_eigenvalue(a);
    if max_real_part > HURWITZ_MARGIN {
        return Err(LyapError::NotHurwitz { max_real_part });
    }

    // (A^T P + P A)_ij = sum_k A_ki P_kj + P_ik A_kj, one equation per i <= j
    let m = n * (n + 1) / 2;
    let mut lhs = DMatrix::<f64>::zeros(m, m);
    let mut rhs = DVector::<f64>::zeros(m);
    for i in 0..n {
        for j in i..n {
            let row = sym_index(n, i, j);
            for k in 0..n {
                lhs[(row, sym_index(n, k, j))] += a[(k, i)];
                lhs[(row, sym_index(n, i, k))] += a[(k, j)];
            }
            rhs[row] = -q[(i, j)];
        }
    }
    let lu = lhs.clone().lu();
    let mut sol = lu.solve(&rhs).ok_or(LyapError::SolveFailed {
        residual: f64::INFINITY,
        min_eigenvalue: f64::NAN,
    })?;
    let r = &rhs - &lhs * &sol;
    if let Some(d) = lu.solve(&r) {
        sol += d;
    }
    let p = DMatrix::from_fn(n, n, |i, j| sol[sym_index(n, i, j)]);
    let residual = (a.transpose() * &p + &p * a + q).amax();
    let min_eigenvalue = p.clone().symmetric_eigenvalues().min();
    if residual > RESIDUAL_TOL || min_eigenvalue <= 0.0 {
        return Err(LyapError::SolveFailed {
            residual,
            min_eigenvalue,
        });
    }
    Ok(p)
}

/// `V0 = x^T P x` with `P` from the Lyapunov equation of the linearization.
pub fn initial_candidate(sys: &DynamicalSystem, q: &DMatrix<f64>) -> Result<Polynomial, LyapError> {
    let lin = linearize(sys);
    let p = solve_lyapunov(&lin.a, q)?;
    let n = p.nrows();
    let rowmajor: Vec<f64> = (0..n * n).map(|k| p[(k / n, k % n)]).collect();
    Ok(Polynomial::quadratic_form(&rowmajor, &vec![0.0; n]))
}
