//! Dense solver for continuous Lyapunov equations `AᵀX + XA + Q = 0`.

use nalgebra::{DMatrix, DVector, Schur};

use crate::error::{GridError, Result};

/// Solves `AᵀX + XA + Q = 0` for symmetric `Q` by the Bartels–Stewart method on
/// the real Schur form of `A`. `A` must have no eigenvalue pair summing to zero.
pub fn solve_lyapunov(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n || q.nrows() != n || q.ncols() != n {
        return Err(GridError::Numerical("Lyapunov operands must be square and conformal".into()));
    }
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let schur = Schur::try_new(a.clone(), f64::EPSILON, 100_000)
        .ok_or_else(|| GridError::Numerical("real Schur decomposition did not converge".into()))?;
    let (u, s) = schur.unpack();
    let c = -(u.transpose() * q * &u);

    let mut blocks = Vec::new();
    let mut i = 0;
    while i < n {
        if i + 1 < n && s[(i + 1, i)] != 0.0 {
            blocks.push((i, 2));
            i += 2;
        } else {
            blocks.push((i, 1));
            i += 1;
        }
    }

    // Sᵀ Y + Y S = C with S upper quasi-triangular; solve block (i, j) once all
    // blocks above and to the left are known.
    let mut y = DMatrix::<f64>::zeros(n, n);
    for &(cj, qj) in &blocks {
        for &(ri, pi) in &blocks {
            let mut rhs = c.view((ri, cj), (pi, qj)).into_owned();
            for r in 0..pi {
                for col in 0..qj {
                    let mut acc = 0.0;
                    for k in 0..ri {
                        acc += s[(k, ri + r)] * y[(k, cj + col)];
                    }
                    for l in 0..cj {
                        acc += y[(ri + r, l)] * s[(l, cj + col)];
                    }
                    rhs[(r, col)] -= acc;
                }
            }
            let sii = s.view((ri, ri), (pi, pi));
            let sjj = s.view((cj, cj), (qj, qj));
            // vec(SiiᵀY + YSjj) = (I ⊗ Siiᵀ + Sjjᵀ ⊗ I) vec(Y), column-major.
            let dim = pi * qj;
            let mut kron = DMatrix::<f64>::zeros(dim, dim);
            for col in 0..qj {
                for r in 0..pi {
                    let row = col * pi + r;
                    for k in 0..pi {
                        kron[(row, col * pi + k)] += sii[(k, r)];
                    }
                    for l in 0..qj {
                        kron[(row, l * pi + r)] += sjj[(l, col)];
                    }
                }
            }
            let b = DVector::from_column_slice(rhs.as_slice());
            let sol = kron
                .lu()
                .solve(&b)
                .ok_or_else(|| GridError::Numerical("Lyapunov operator is singular".into()))?;
            for col in 0..qj {
                for r in 0..pi {
                    y[(ri + r, cj + col)] = sol[col * pi + r];
                }
            }
        }
    }
    let x = &u * y * u.transpose();
    let x = (&x + x.transpose()) * 0.5;
    let residual = lyapunov_residual(a, &x, q);
    if !residual.is_finite() || residual > 1e-8 * q.amax().max(f64::MIN_POSITIVE) {
        return Err(GridError::Numerical(format!(
            "Lyapunov residual {residual:.3e} exceeds tolerance"
        )));
    }
    Ok(x)
}

/// `‖AᵀX + XA + Q‖_max`.
pub fn lyapunov_residual(a: &DMatrix<f64>, x: &DMatrix<f64>, q: &DMatrix<f64>) -> f64 {
    (a.transpose() * x + x * a + q).amax()
}
