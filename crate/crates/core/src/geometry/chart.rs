use serde::{Deserialize, Serialize};

use crate::dense::{dot, norm, Mat};
use crate::error::{Error, Result};
use crate::real::Real;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChartKind<T> {
    /// φ(x) = (x₁, x₂, 0) with ν = e₃.
    Plane,
    /// φ(x) = (a x₁, b x₂, 0) with ν = e₃.
    StretchedPlane { a: T, b: T },
    /// φ(x) = (R cos x₁, R sin x₁, x₂), outward normal.
    Cylinder { radius: T },
    /// φ(x) = R (sin x₁ cos x₂, sin x₁ sin x₂, cos x₁), outward normal.
    SpherePatch { radius: T },
    /// φ(x) = R (cos 2πx/P, sin 2πx/P) in the plane; `inward` flips ν to point at the centre.
    Circle { radius: T, period: T, inward: bool },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SurfacePatch<T> {
    pub chart: ChartKind<T>,
    pub param_lo: Vec<T>,
    pub param_hi: Vec<T>,
    pub tube_halfwidth: T,
    pub patch_id: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellCoefficients<T> {
    pub b_matrix: Mat<T>,
    pub a_matrix: Mat<T>,
    pub base_point: Vec<T>,
}

impl<T: Real> SurfacePatch<T> {
    pub fn new(chart: ChartKind<T>, param_lo: Vec<T>, param_hi: Vec<T>, tube_halfwidth: T, patch_id: usize) -> Self {
        SurfacePatch { chart, param_lo, param_hi, tube_halfwidth, patch_id }
    }

    pub fn dim(&self) -> usize {
        match self.chart {
            ChartKind::Circle { .. } => 2,
            _ => 3,
        }
    }

    pub fn point(&self, x: &[T]) -> Vec<T> {
        match &self.chart {
            ChartKind::Plane => vec![x[0], x[1], T::zero()],
            ChartKind::StretchedPlane { a, b } => vec![*a * x[0], *b * x[1], T::zero()],
            ChartKind::Cylinder { radius } => vec![*radius * x[0].cos(), *radius * x[0].sin(), x[1]],
            ChartKind::SpherePatch { radius } => vec![
                *radius * x[0].sin() * x[1].cos(),
                *radius * x[0].sin() * x[1].sin(),
                *radius * x[0].cos(),
            ],
            ChartKind::Circle { radius, period, .. } => {
                let th = T::TAU() * x[0] / *period;
                vec![*radius * th.cos(), *radius * th.sin()]
            }
        }
    }

    /// Columns are the partial derivatives ∂φ/∂x̃_j.
    pub fn jacobian(&self, x: &[T]) -> Mat<T> {
        let z = T::zero();
        match &self.chart {
            ChartKind::Plane => Mat::from_columns(&[vec![T::one(), z, z], vec![z, T::one(), z]]),
            ChartKind::StretchedPlane { a, b } => Mat::from_columns(&[vec![*a, z, z], vec![z, *b, z]]),
            ChartKind::Cylinder { radius } => Mat::from_columns(&[
                vec![-*radius * x[0].sin(), *radius * x[0].cos(), z],
                vec![z, z, T::one()],
            ]),
            ChartKind::SpherePatch { radius } => {
                let r = *radius;
                Mat::from_columns(&[
                    vec![r * x[0].cos() * x[1].cos(), r * x[0].cos() * x[1].sin(), -r * x[0].sin()],
                    vec![-r * x[0].sin() * x[1].sin(), r * x[0].sin() * x[1].cos(), z],
                ])
            }
            ChartKind::Circle { radius, period, .. } => {
                let w = T::TAU() / *period;
                let th = w * x[0];
                Mat::from_columns(&[vec![-*radius * w * th.sin(), *radius * w * th.cos()]])
            }
        }
    }

    pub fn normal(&self, x: &[T]) -> Vec<T> {
        let z = T::zero();
        match &self.chart {
            ChartKind::Plane | ChartKind::StretchedPlane { .. } => vec![z, z, T::one()],
            ChartKind::Cylinder { .. } => vec![x[0].cos(), x[0].sin(), z],
            ChartKind::SpherePatch { .. } => vec![x[0].sin() * x[1].cos(), x[0].sin() * x[1].sin(), x[0].cos()],
            ChartKind::Circle { period, inward, .. } => {
                let th = T::TAU() * x[0] / *period;
                let s = if *inward { -T::one() } else { T::one() };
                vec![s * th.cos(), s * th.sin()]
            }
        }
    }

    /// Orthonormal tangent frame from Gram-Schmidt on the chart tangents.
    pub fn tangent_frame(&self, x: &[T]) -> Vec<Vec<T>> {
        let j = self.jacobian(x);
        let mut frame: Vec<Vec<T>> = Vec::new();
        for c in 0..j.cols {
            let mut v = j.column(c);
            for f in &frame {
                let p = dot(&v, f);
                for (vi, fi) in v.iter_mut().zip(f) {
                    *vi = *vi - p * *fi;
                }
            }
            let n = norm(&v);
            frame.push(v.into_iter().map(|vi| vi / n).collect());
        }
        frame
    }

    pub fn contains(&self, x: &[T]) -> bool {
        x.iter().zip(self.param_lo.iter().zip(&self.param_hi)).all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }
}

/// B = (Dφ, ν)^{-T} and A = BᵀB at the base point.
pub fn metric_matrices<T: Real>(patch: &SurfacePatch<T>, base_point: &[T]) -> Result<CellCoefficients<T>> {
    if !patch.contains(base_point) {
        return Err(Error::DegenerateChart(format!("base point {:?} outside the parameter box", to_f64(base_point))));
    }
    let d = patch.dim();
    let mut cols: Vec<Vec<T>> = (0..d - 1).map(|c| patch.jacobian(base_point).column(c)).collect();
    cols.push(patch.normal(base_point));
    let frame = Mat::from_columns(&cols);
    let inv = frame
        .inverse()
        .ok_or_else(|| Error::DegenerateChart(format!("singular frame at {:?}", to_f64(base_point))))?;
    let b = inv.transpose();
    let mut a = b.transpose().mul(&b);
    // the last row and column are exactly e_d for a unit normal orthogonal to the tangents
    for j in 0..d - 1 {
        a[(d - 1, j)] = T::zero();
        a[(j, d - 1)] = T::zero();
    }
    a[(d - 1, d - 1)] = T::one();
    for i in 0..d {
        for j in 0..i {
            let s = (a[(i, j)] + a[(j, i)]) / T::lit(2.0);
            a[(i, j)] = s;
            a[(j, i)] = s;
        }
    }
    let coeffs = CellCoefficients { b_matrix: b, a_matrix: a, base_point: base_point.to_vec() };
    let gap = coeffs.b_matrix.transpose().mul(&coeffs.b_matrix).sub(&coeffs.a_matrix).max_abs();
    if gap > T::lit(1e-10) * (T::one() + coeffs.a_matrix.max_abs()) {
        return Err(Error::DegenerateChart(format!(
            "normal not orthogonal to the tangents (|BᵀB - A| = {:e})",
            gap.to_f64_()
        )));
    }
    Ok(coeffs)
}

pub fn tube_point<T: Real>(patch: &SurfacePatch<T>, x: &[T], t: T) -> Result<Vec<T>> {
    if t.abs() >= patch.tube_halfwidth {
        return Err(Error::OutOfTube { t: t.abs().to_f64_(), delta: patch.tube_halfwidth.to_f64_() });
    }
    let p = patch.point(x);
    let n = patch.normal(x);
    Ok(p.iter().zip(&n).map(|(pi, ni)| *pi + t * *ni).collect())
}

/// α = π √λ_min of the tangential block of A.
pub fn decay_rate_bound<T: Real>(coeffs: &CellCoefficients<T>) -> Result<T> {
    let d = coeffs.a_matrix.rows;
    let block = coeffs.a_matrix.block(d - 1, d - 1);
    if !block.is_symmetric(T::lit(1e-10)) {
        return Err(Error::InvalidCoefficients("tangential block of A is not symmetric".into()));
    }
    let lmin = block.sym_eigenvalues()[0];
    if !(lmin > T::zero()) {
        return Err(Error::InvalidCoefficients(format!("λ_min = {:e} is not positive", lmin.to_f64_())));
    }
    Ok(T::PI() * lmin.sqrt())
}

impl<T: Real> CellCoefficients<T> {
    pub fn dim(&self) -> usize {
        self.a_matrix.rows
    }

    /// Coefficients given directly by B (A = BᵀB).
    pub fn from_b(b: Mat<T>) -> Result<Self> {
        let a = b.transpose().mul(&b);
        let d = a.rows;
        let tol = T::lit(1e-12) * (T::one() + a.max_abs());
        for j in 0..d - 1 {
            if a[(d - 1, j)].abs() > tol {
                return Err(Error::InvalidCoefficients("last row of A is not e_d".into()));
            }
        }
        if (a[(d - 1, d - 1)] - T::one()).abs() > tol {
            return Err(Error::InvalidCoefficients("a_dd differs from 1".into()));
        }
        Ok(CellCoefficients { b_matrix: b, a_matrix: a, base_point: Vec::new() })
    }

    pub fn identity(d: usize) -> Self {
        CellCoefficients { b_matrix: Mat::identity(d), a_matrix: Mat::identity(d), base_point: Vec::new() }
    }

    /// Unit normal ν = B e_d.
    pub fn normal(&self) -> Vec<T> {
        self.b_matrix.column(self.dim() - 1)
    }

    /// ξ_m = Σ a_jl m_j m_l for a lateral integer mode.
    pub fn xi(&self, m: &[i64]) -> T {
        let mut s = T::zero();
        for (j, mj) in m.iter().enumerate() {
            for (l, ml) in m.iter().enumerate() {
                s = s + self.a_matrix[(j, l)] * T::lit((*mj * *ml) as f64);
            }
        }
        s
    }
}

fn to_f64<T: Real>(v: &[T]) -> Vec<f64> {
    v.iter().map(|x| x.to_f64_()).collect()
}
