use serde::Serialize;

use crate::dense::dot;
use crate::error::{Error, Result};
use crate::real::Real;

#[derive(Clone, Debug, Default, Serialize)]
pub struct KrylovStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Preconditioned conjugate gradients for a symmetric positive (semi)definite operator.
///
/// `x` holds the initial guess and receives the solution. Convergence is declared when
/// ‖b - Ax‖ ≤ tol ‖b‖.
pub fn pcg<T: Real>(
    mut apply_a: impl FnMut(&[T], &mut [T]),
    mut apply_m: impl FnMut(&[T], &mut [T]),
    b: &[T],
    x: &mut [T],
    tol: T,
    max_iter: usize,
) -> Result<KrylovStats> {
    let n = b.len();
    let bnorm = dot(b, b).sqrt();
    if bnorm == T::zero() {
        x.iter_mut().for_each(|v| *v = T::zero());
        return Ok(KrylovStats { iterations: 0, relative_residual: 0.0 });
    }
    let mut r = vec![T::zero(); n];
    apply_a(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut z = vec![T::zero(); n];
    apply_m(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![T::zero(); n];
    let mut rel = (dot(&r, &r).sqrt() / bnorm).to_f64_();
    for it in 0..max_iter {
        if rel <= tol.to_f64_() {
            return Ok(KrylovStats { iterations: it, relative_residual: rel });
        }
        apply_a(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > T::zero()) {
            return Err(Error::SolverBreakdown {
                iterations: it,
                reason: format!("non-positive curvature pᵀAp = {:e}", pap.to_f64_()),
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] = x[i] + alpha * p[i];
            r[i] = r[i] - alpha * ap[i];
        }
        apply_m(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        rel = (dot(&r, &r).sqrt() / bnorm).to_f64_();
    }
    if rel <= tol.to_f64_() {
        return Ok(KrylovStats { iterations: max_iter, relative_residual: rel });
    }
    Err(Error::ToleranceNotReached { iterations: max_iter, residual: rel })
}

/// Preconditioned MINRES for a symmetric (possibly indefinite) operator with a
/// symmetric positive definite preconditioner.
///
/// The stopping test uses the preconditioned residual norm; the returned statistics
/// report the true Euclidean relative residual.
pub fn minres<T: Real>(
    mut apply_a: impl FnMut(&[T], &mut [T]),
    mut apply_m: impl FnMut(&[T], &mut [T]),
    b: &[T],
    x: &mut [T],
    tol: T,
    max_iter: usize,
) -> Result<KrylovStats> {
    let n = b.len();
    let bnorm = dot(b, b).sqrt();
    if bnorm == T::zero() {
        x.iter_mut().for_each(|v| *v = T::zero());
        return Ok(KrylovStats { iterations: 0, relative_residual: 0.0 });
    }
    let mut v = vec![T::zero(); n];
    apply_a(x, &mut v);
    for i in 0..n {
        v[i] = b[i] - v[i];
    }
    let mut v_old = vec![T::zero(); n];
    let mut z = vec![T::zero(); n];
    apply_m(&v, &mut z);
    let mut gamma = dot(&z, &v).sqrt();
    let gamma1 = gamma;
    let mut gamma_old = T::one();
    let mut eta = gamma;
    let (mut s0, mut s1) = (T::zero(), T::zero());
    let (mut c0, mut c1) = (T::one(), T::one());
    let mut w_old = vec![T::zero(); n];
    let mut w = vec![T::zero(); n];
    let mut az = vec![T::zero(); n];
    let mut v_new = vec![T::zero(); n];
    let mut z_new = vec![T::zero(); n];
    let mut iterations = 0;
    while iterations < max_iter {
        if gamma == T::zero() || eta.abs() <= tol * gamma1 {
            break;
        }
        iterations += 1;
        z.iter_mut().for_each(|zi| *zi = *zi / gamma);
        apply_a(&z, &mut az);
        let delta = dot(&az, &z);
        for i in 0..n {
            v_new[i] = az[i] - (delta / gamma) * v[i] - (gamma / gamma_old) * v_old[i];
        }
        apply_m(&v_new, &mut z_new);
        let gamma_new_sq = dot(&z_new, &v_new);
        if gamma_new_sq < T::zero() {
            return Err(Error::SolverBreakdown {
                iterations,
                reason: "preconditioner is not positive definite".into(),
            });
        }
        let gamma_new = gamma_new_sq.sqrt();
        let a0 = c1 * delta - c0 * s1 * gamma;
        let a1 = (a0 * a0 + gamma_new * gamma_new).sqrt();
        let a2 = s1 * delta + c0 * c1 * gamma;
        let a3 = s0 * gamma;
        if a1 == T::zero() {
            return Err(Error::SolverBreakdown { iterations, reason: "singular Lanczos step".into() });
        }
        c0 = c1;
        c1 = a0 / a1;
        s0 = s1;
        s1 = gamma_new / a1;
        for i in 0..n {
            let wn = (z[i] - a3 * w_old[i] - a2 * w[i]) / a1;
            w_old[i] = w[i];
            w[i] = wn;
            x[i] = x[i] + c1 * eta * wn;
        }
        eta = -s1 * eta;
        std::mem::swap(&mut v_old, &mut v);
        std::mem::swap(&mut v, &mut v_new);
        std::mem::swap(&mut z, &mut z_new);
        gamma_old = gamma;
        gamma = gamma_new;
    }
    let mut r = vec![T::zero(); n];
    apply_a(x, &mut r);
    let res = (0..n).fold(T::zero(), |acc, i| acc + (b[i] - r[i]) * (b[i] - r[i])).sqrt();
    let rel = (res / bnorm).to_f64_();
    if eta.abs() <= tol * gamma1 || gamma == T::zero() {
        Ok(KrylovStats { iterations, relative_residual: rel })
    } else {
        Err(Error::ToleranceNotReached { iterations, residual: rel })
    }
}
