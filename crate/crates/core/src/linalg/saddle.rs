use serde::{Deserialize, Serialize};

use super::krylov::{minres, pcg, KrylovStats};
use super::sparse::{Cholesky, Csr};
use crate::dense::{dot, Mat};
use crate::error::{Error, Result};
use crate::real::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SaddleMethod {
    /// Conjugate gradients on the pressure Schur complement B K⁻¹ Bᵀ.
    #[default]
    SchurCg,
    /// MINRES on the full system with a block-diagonal preconditioner.
    Minres,
}

#[derive(Clone, Debug)]
pub struct SaddleSolution<T> {
    pub velocity: Vec<T>,
    pub pressure: Vec<T>,
    pub stats: KrylovStats,
}

/// Solver for [K Bᵀ; B 0] [u; p] = [f; g] with K symmetric positive definite.
pub struct SaddleSolver<T: Real> {
    k: Csr<T>,
    b: Csr<T>,
    chol: Cholesky<T>,
    /// Inverse pressure-mass blocks (block size × block size each).
    prec_blocks: Vec<Mat<T>>,
    block: usize,
    nullspace: Option<Vec<T>>,
    gauge: Option<Vec<T>>,
    pub method: SaddleMethod,
    pub tol: T,
    pub max_iter: usize,
}

impl<T: Real> SaddleSolver<T> {
    /// `mass_blocks` are the diagonal blocks of the pressure mass matrix.
    pub fn new(k: Csr<T>, b: Csr<T>, mass_blocks: Vec<Mat<T>>) -> Result<Self> {
        if b.ncols != k.nrows {
            return Err(Error::Incompatible("B and K sizes differ".into()));
        }
        let block = mass_blocks.first().map(|m| m.rows).unwrap_or(1);
        if mass_blocks.len() * block != b.nrows {
            return Err(Error::Incompatible("pressure mass blocks do not cover the pressure space".into()));
        }
        let prec_blocks = mass_blocks
            .iter()
            .map(|m| m.inverse().ok_or_else(|| Error::Factorization("singular pressure mass block".into())))
            .collect::<Result<Vec<_>>>()?;
        let chol = Cholesky::new(&k)?;
        Ok(SaddleSolver {
            k,
            b,
            chol,
            prec_blocks,
            block,
            nullspace: None,
            gauge: None,
            method: SaddleMethod::SchurCg,
            tol: T::lit(1e-11),
            max_iter: 5000,
        })
    }

    /// Declare a pressure null vector `e` (Bᵀe = 0) and the weights `w` used to fix wᵀp = 0.
    pub fn with_nullspace(mut self, e: Vec<T>, w: Vec<T>) -> Self {
        self.nullspace = Some(e);
        self.gauge = Some(w);
        self
    }

    pub fn velocity_dim(&self) -> usize {
        self.k.nrows
    }

    pub fn pressure_dim(&self) -> usize {
        self.b.nrows
    }

    fn apply_prec(&self, r: &[T], z: &mut [T]) {
        let bs = self.block;
        for (kb, m) in self.prec_blocks.iter().enumerate() {
            for i in 0..bs {
                let mut s = T::zero();
                for j in 0..bs {
                    s = s + m[(i, j)] * r[kb * bs + j];
                }
                z[kb * bs + i] = s;
            }
        }
    }

    fn project(&self, v: &mut [T]) {
        if let Some(e) = &self.nullspace {
            let a = dot(v, e) / dot(e, e);
            for (vi, ei) in v.iter_mut().zip(e) {
                *vi = *vi - a * *ei;
            }
        }
    }

    fn fix_gauge(&self, p: &mut [T]) {
        if let (Some(e), Some(w)) = (&self.nullspace, &self.gauge) {
            let a = dot(p, w) / dot(e, w);
            for (pi, ei) in p.iter_mut().zip(e) {
                *pi = *pi - a * *ei;
            }
        }
    }

    pub fn solve(&self, f: &[T], g: &[T]) -> Result<SaddleSolution<T>> {
        let (mut u, mut p, iterations) = match self.method {
            SaddleMethod::SchurCg => self.solve_schur(f, g)?,
            SaddleMethod::Minres => self.solve_minres(f, g)?,
        };
        self.fix_gauge(&mut p);
        if self.nullspace.is_some() {
            // the gauge shift changes Bᵀp only by round-off; recompute u for consistency
            let mut rhs = vec![T::zero(); self.k.nrows];
            self.b.tmul_vec(&p, &mut rhs);
            for i in 0..rhs.len() {
                rhs[i] = f[i] - rhs[i];
            }
            self.chol.solve_in_place(&mut rhs);
            u = rhs;
        }
        let rel = self.relative_residual(f, g, &u, &p);
        if !(rel <= 100.0 * self.tol.to_f64_()) {
            return Err(Error::ToleranceNotReached { iterations, residual: rel });
        }
        Ok(SaddleSolution { velocity: u, pressure: p, stats: KrylovStats { iterations, relative_residual: rel } })
    }

    fn solve_schur(&self, f: &[T], g: &[T]) -> Result<(Vec<T>, Vec<T>, usize)> {
        let nu = self.k.nrows;
        let np = self.b.nrows;
        let mut kf = f.to_vec();
        self.chol.solve_in_place(&mut kf);
        let mut rhs = vec![T::zero(); np];
        self.b.mul_vec(&kf, &mut rhs);
        for i in 0..np {
            rhs[i] = rhs[i] - g[i];
        }
        self.project(&mut rhs);
        let mut p = vec![T::zero(); np];
        let mut tmp = vec![T::zero(); nu];
        let stats = pcg(
            |x: &[T], y: &mut [T]| {
                self.b.tmul_vec(x, &mut tmp);
                self.chol.solve_in_place(&mut tmp);
                self.b.mul_vec(&tmp, y);
            },
            |r: &[T], z: &mut [T]| self.apply_prec(r, z),
            &rhs,
            &mut p,
            self.tol,
            self.max_iter,
        )?;
        let mut u = vec![T::zero(); nu];
        self.b.tmul_vec(&p, &mut u);
        for i in 0..nu {
            u[i] = f[i] - u[i];
        }
        self.chol.solve_in_place(&mut u);
        Ok((u, p, stats.iterations))
    }

    fn solve_minres(&self, f: &[T], g: &[T]) -> Result<(Vec<T>, Vec<T>, usize)> {
        let nu = self.k.nrows;
        let np = self.b.nrows;
        let mut rhs = f.to_vec();
        rhs.extend_from_slice(g);
        let mut x = vec![T::zero(); nu + np];
        let mut tmp = vec![T::zero(); nu];
        let stats = minres(
            |x: &[T], y: &mut [T]| {
                let (xu, xp) = x.split_at(nu);
                let (yu, yp) = y.split_at_mut(nu);
                self.k.mul_vec(xu, yu);
                self.b.tmul_vec(xp, &mut tmp);
                for i in 0..nu {
                    yu[i] = yu[i] + tmp[i];
                }
                self.b.mul_vec(xu, yp);
            },
            |r: &[T], z: &mut [T]| {
                let (ru, rp) = r.split_at(nu);
                let (zu, zp) = z.split_at_mut(nu);
                zu.copy_from_slice(ru);
                self.chol.solve_in_place(zu);
                self.apply_prec(rp, zp);
            },
            &rhs,
            &mut x,
            self.tol,
            self.max_iter,
        )?;
        let p = x.split_off(nu);
        Ok((x, p, stats.iterations))
    }

    pub fn relative_residual(&self, f: &[T], g: &[T], u: &[T], p: &[T]) -> f64 {
        let nu = self.k.nrows;
        let np = self.b.nrows;
        let mut r1 = vec![T::zero(); nu];
        let mut t = vec![T::zero(); nu];
        self.k.mul_vec(u, &mut r1);
        self.b.tmul_vec(p, &mut t);
        let mut num = T::zero();
        for i in 0..nu {
            let r = r1[i] + t[i] - f[i];
            num = num + r * r;
        }
        let mut r2 = vec![T::zero(); np];
        self.b.mul_vec(u, &mut r2);
        for i in 0..np {
            let r = r2[i] - g[i];
            num = num + r * r;
        }
        let den = dot(f, f) + dot(g, g);
        if den == T::zero() {
            return num.sqrt().to_f64_();
        }
        (num / den).sqrt().to_f64_()
    }

    pub fn stiffness(&self) -> &Csr<T> {
        &self.k
    }

    pub fn divergence(&self) -> &Csr<T> {
        &self.b
    }
}
