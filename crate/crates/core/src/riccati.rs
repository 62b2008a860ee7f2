//! Continuous algebraic Riccati equation
//!
//! ```text
//! A^T P + P A - P B R^-1 B^T P + Q = 0
//! ```
//!
//! solved with the matrix sign function of the Hamiltonian, then polished by
//! Newton-Kleinman iterations. A warm start from a nearby stabilizing
//! solution skips the sign iteration.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

const SIGN_MAX_ITERS: usize = 100;
const NEWTON_MAX_ITERS: usize = 30;

pub fn care_residual(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> Result<f64> {
    let r_inv = r
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Riccati("R is singular".into()))?;
    let res = p * a + a.transpose() * p - p * b * &r_inv * b.transpose() * p + q;
    Ok(res.amax())
}

fn check_dims(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<()> {
    let n = a.nrows();
    let ok = a.is_square()
        && b.nrows() == n
        && q.shape() == (n, n)
        && r.is_square()
        && r.nrows() == b.ncols();
    if ok {
        Ok(())
    } else {
        Err(Error::Riccati("inconsistent matrix dimensions".into()))
    }
}

/// Stabilizing solution of the CARE.
pub fn solve_care(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    check_dims(a, b, q, r)?;
    let p0 = sign_function_solution(a, b, q, r)?;
    let p = newton_kleinman(a, b, q, r, p0)?;
    let a_cl = a - b * invert(r, "R")? * b.transpose() * &p;
    if !is_hurwitz(&a_cl) {
        return Err(Error::NotStabilizable("solution does not stabilize the closed loop".into()));
    }
    Ok(p)
}

/// Like [`solve_care`], starting Newton from `guess` when it stabilizes the
/// closed loop.
pub fn solve_care_warm(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    guess: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    check_dims(a, b, q, r)?;
    let r_inv = invert(r, "R")?;
    let a_cl = a - b * &r_inv * b.transpose() * guess;
    if is_hurwitz(&a_cl) {
        if let Ok(p) = newton_kleinman(a, b, q, r, guess.clone()) {
            return Ok(p);
        }
    }
    solve_care(a, b, q, r)
}

fn invert(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    m.clone()
        .try_inverse()
        .ok_or_else(|| Error::Riccati(format!("{what} is singular")))
}

fn is_hurwitz(m: &DMatrix<f64>) -> bool {
    m.complex_eigenvalues().iter().all(|l| l.re < 0.0)
}

fn sign_function_solution(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let g = b * invert(r, "R")? * b.transpose();

    let mut z = DMatrix::<f64>::zeros(2 * n, 2 * n);
    z.view_mut((0, 0), (n, n)).copy_from(a);
    z.view_mut((0, n), (n, n)).copy_from(&(-&g));
    z.view_mut((n, 0), (n, n)).copy_from(&(-q));
    z.view_mut((n, n), (n, n)).copy_from(&(-a.transpose()));

    let mut converged = false;
    for _ in 0..SIGN_MAX_ITERS {
        let det = z.determinant();
        if det == 0.0 || !det.is_finite() {
            return Err(Error::NotStabilizable(
                "Hamiltonian has eigenvalues on the imaginary axis".into(),
            ));
        }
        let c = det.abs().powf(1.0 / (2 * n) as f64);
        let z_inv = invert(&z, "Hamiltonian iterate")?;
        let next = (&z / c + z_inv * c) * 0.5;
        let delta = (&next - &z).norm();
        let scale = next.norm();
        z = next;
        if delta <= 1e-13 * scale {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Riccati("sign iteration did not converge".into()));
    }

    let eye = DMatrix::<f64>::identity(n, n);
    let mut lhs = DMatrix::<f64>::zeros(2 * n, n);
    lhs.view_mut((0, 0), (n, n)).copy_from(&z.view((0, n), (n, n)));
    lhs.view_mut((n, 0), (n, n)).copy_from(&(z.view((n, n), (n, n)) + &eye));
    let mut rhs = DMatrix::<f64>::zeros(2 * n, n);
    rhs.view_mut((0, 0), (n, n)).copy_from(&(-(z.view((0, 0), (n, n)) + &eye)));
    rhs.view_mut((n, 0), (n, n)).copy_from(&(-z.view((n, 0), (n, n))));

    let p = lhs
        .svd(true, true)
        .solve(&rhs, 1e-14)
        .map_err(|e| Error::Riccati(e.to_string()))?;
    Ok((&p + p.transpose()) * 0.5)
}

/// Solves `M^T X + X M = -C` through the Kronecker form.
fn lyapunov(m: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    let mt = m.transpose();
    let eye = DMatrix::<f64>::identity(n, n);
    let op = eye.kronecker(&mt) + mt.kronecker(&eye);
    let rhs = -DMatrix::from_column_slice(n * n, 1, c.as_slice());
    let x = op
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Riccati("singular Lyapunov operator".into()))?;
    let x = DMatrix::from_column_slice(n, n, x.as_slice());
    Ok((&x + x.transpose()) * 0.5)
}

fn newton_kleinman(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    mut p: DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let r_inv = invert(r, "R")?;
    let scale = 1.0 + q.amax();
    for _ in 0..NEWTON_MAX_ITERS {
        if care_residual(a, b, q, r, &p)? <= 1e-13 * scale {
            return Ok(p);
        }
        let k = &r_inv * b.transpose() * &p;
        let a_cl = a - b * &k;
        let c = q + k.transpose() * r * &k;
        let next = lyapunov(&a_cl, &c)?;
        let step = (&next - &p).amax();
        p = next;
        if step <= 1e-15 * (1.0 + p.amax()) {
            break;
        }
    }
    if care_residual(a, b, q, r, &p)? <= 1e-9 * scale {
        Ok(p)
    } else {
        Err(Error::Riccati("Newton refinement did not converge".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_care_matches_closed_form() {
        // a p + p a - p^2 b^2 / r + q = 0  =>  p = r (a + sqrt(a^2 + b^2 q / r)) / b^2
        let (a, b, q, r) = (0.7, 2.0, 3.0, 0.5);
        let p = solve_care(
            &DMatrix::from_element(1, 1, a),
            &DMatrix::from_element(1, 1, b),
            &DMatrix::from_element(1, 1, q),
            &DMatrix::from_element(1, 1, r),
        )
        .unwrap();
        let expected = r * (a + (a * a + b * b * q / r).sqrt()) / (b * b);
        assert!((p[(0, 0)] - expected).abs() < 1e-12);
    }

    #[test]
    fn double_integrator() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let q = DMatrix::identity(2, 2);
        let r = DMatrix::identity(1, 1);
        let p = solve_care(&a, &b, &q, &r).unwrap();
        assert!(care_residual(&a, &b, &q, &r, &p).unwrap() < 1e-12);
        // p12 = 1, p22 = sqrt(3), p11 = sqrt(3)
        assert!((p[(0, 1)] - 1.0).abs() < 1e-12);
        assert!((p[(1, 1)] - 3f64.sqrt()).abs() < 1e-12);
        assert!((p[(0, 0)] - 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn warm_start_reaches_same_solution() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 20.0, 0.0, 0.0]);
        let a2 = DMatrix::from_row_slice(2, 2, &[0.0, 20.5, 0.0, 0.0]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let q = DMatrix::identity(2, 2);
        let r = DMatrix::identity(1, 1);
        let p = solve_care(&a, &b, &q, &r).unwrap();
        let cold = solve_care(&a2, &b, &q, &r).unwrap();
        let warm = solve_care_warm(&a2, &b, &q, &r, &p).unwrap();
        assert!((cold - warm).amax() < 1e-10);
    }

    #[test]
    fn uncontrollable_unstable_mode_fails() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let q = DMatrix::zeros(2, 2);
        let r = DMatrix::identity(1, 1);
        assert!(solve_care(&a, &b, &q, &r).is_err());
    }
}
