use serde::Serialize;

use super::solve::{CellSolution, CellSystem};
use super::CellProblemSpec;
use crate::dense::{dot, norm, Mat};
use crate::error::{Error, Result};
use crate::real::Real;

/// c^bl read on the interface S. The deep average `sol.deep_constant` is the independent check.
pub fn boundary_layer_constant<T: Real>(sol: &CellSolution<T>) -> Vec<T> {
    sol.bl_constant.clone()
}

#[derive(Clone, Debug)]
pub struct SlipMatrixResult<T: Real> {
    /// c_lk = c^bl(λ^(l)) · λ^(k).
    pub matrix: Mat<T>,
    pub eigenvalues: Vec<T>,
    /// |c_lk − c_kl| / ‖C‖ (max entry).
    pub asymmetry: T,
    pub solutions: Vec<CellSolution<T>>,
}

/// Solves the cell problem for each tangent λ^(l) on one factorization and assembles C̄^bl.
pub fn slip_matrix<T: Real>(spec: &CellProblemSpec<T>, tangents: &[Vec<T>]) -> Result<SlipMatrixResult<T>> {
    let d = spec.coeffs.dim();
    if tangents.len() != d - 1 || tangents.iter().any(|t| t.len() != d) {
        return Err(Error::Incompatible(format!("need {} tangents of length {d}", d - 1)));
    }
    let nu = spec.coeffs.normal();
    let tol = T::lit(1e-10);
    for (l, a) in tangents.iter().enumerate() {
        if (norm(a) - T::one()).abs() > tol || dot(a, &nu).abs() > tol {
            return Err(Error::Incompatible(format!("tangent {l} is not a unit vector orthogonal to ν")));
        }
        for b in &tangents[..l] {
            if dot(a, b).abs() > tol {
                return Err(Error::Incompatible("tangent frame is not orthogonal".into()));
            }
        }
    }
    let system = CellSystem::assemble(spec)?;
    let solutions = tangents.iter().map(|t| system.solve(t)).collect::<Result<Vec<_>>>()?;
    let n = d - 1;
    let matrix = Mat::from_fn(n, n, |l, k| dot(&solutions[l].bl_constant, &tangents[k]));
    Ok(finish(matrix, solutions))
}

fn finish<T: Real>(matrix: Mat<T>, solutions: Vec<CellSolution<T>>) -> SlipMatrixResult<T> {
    let n = matrix.rows;
    let scale = matrix.max_abs();
    let mut gap = T::zero();
    for i in 0..n {
        for j in 0..n {
            gap = gap.max((matrix[(i, j)] - matrix[(j, i)]).abs());
        }
    }
    let asymmetry = if scale > T::zero() { gap / scale } else { gap };
    let sym = Mat::from_fn(n, n, |i, j| (matrix[(i, j)] + matrix[(j, i)]) / T::lit(2.0));
    SlipMatrixResult { eigenvalues: sym.sym_eigenvalues(), matrix, asymmetry, solutions }
}

/// −(B∇β^k, B∇β^l) by the discrete Dirichlet form of the solver grid.
pub fn energy_matrix<T: Real>(solutions: &[CellSolution<T>]) -> Result<Mat<T>> {
    let Some(first) = solutions.first() else {
        return Err(Error::Incompatible("no solutions".into()));
    };
    if solutions.iter().any(|s| !first.same_problem(s)) {
        return Err(Error::Incompatible("solutions come from different cell problems".into()));
    }
    let n = solutions.len();
    let g = &*first.grid;
    let mut m = Mat::zeros(n, n);
    g.for_each_edge(|c, a, b, w| {
        for k in 0..n {
            let dk = solutions[k].velocity[c][a] - b.map_or(T::zero(), |b| solutions[k].velocity[c][b]);
            for l in k..n {
                let dl = solutions[l].velocity[c][a] - b.map_or(T::zero(), |b| solutions[l].velocity[c][b]);
                m[(k, l)] = m[(k, l)] - w * dk * dl;
            }
        }
    });
    for k in 0..n {
        for l in 0..k {
            m[(k, l)] = m[(l, k)];
        }
    }
    Ok(m)
}

#[derive(Clone, Debug, Serialize)]
pub struct DecayFit {
    /// Fitted rate r in ‖β − c^bl‖ ≈ C e^{r y_d}; `None` when the fluctuation is below noise everywhere.
    pub rate: Option<f64>,
    pub intercept: f64,
    pub samples_used: usize,
}

impl DecayFit {
    pub fn has_signal(&self) -> bool {
        self.rate.is_some()
    }

    /// Least squares fit of ln(norm) against y over samples with norm above `floor`.
    pub fn from_samples<T: Real>(samples: &[(T, T)], floor: f64) -> Self {
        let floor = floor.max(1e-12);
        let pts: Vec<(f64, f64)> = samples
            .iter()
            .map(|(y, v)| (y.to_f64_(), v.to_f64_()))
            .filter(|(_, v)| *v > floor)
            .map(|(y, v)| (y, v.ln()))
            .collect();
        if pts.len() < 2 {
            return DecayFit { rate: None, intercept: 0.0, samples_used: pts.len() };
        }
        let n = pts.len() as f64;
        let my = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let ml = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = pts.iter().map(|p| (p.0 - my).powi(2)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 - my) * (p.1 - ml)).sum();
        if sxx <= 0.0 {
            return DecayFit { rate: None, intercept: 0.0, samples_used: pts.len() };
        }
        let rate = sxy / sxx;
        DecayFit { rate: Some(rate), intercept: ml - rate * my, samples_used: pts.len() }
    }
}

/// Fit over the samples that stand above the solver noise, taken as 1e-9 (|c^bl| + |λ|)
/// and never below 1e-12.
pub fn decay_fit<T: Real>(sol: &CellSolution<T>) -> DecayFit {
    let scale = norm(&sol.bl_constant) + norm(&sol.jump_vector);
    DecayFit::from_samples(&sol.decay_samples, 1e-9 * scale.to_f64_())
}

pub fn jump_residual<T: Real>(sol: &CellSolution<T>, jump_vector: &[T]) -> T {
    jump_residual_at(sol, T::zero(), jump_vector)
}

/// ‖[∂β/∂y_d − ων]_{y_d=b} − λ‖_{L²} with two-point one-sided slopes from the two
/// nearest node rows on each side of the plane. Lateral positions whose rows are not
/// all in the fluid are skipped.
pub fn jump_residual_at<T: Real>(sol: &CellSolution<T>, b: T, jump_vector: &[T]) -> T {
    let g = &*sol.grid;
    let d = g.dim;
    let lc = g.lateral_count;
    let lam = g.frame.to_frame(jump_vector);
    let bracket = |heights: &[T]| -> Option<[usize; 4]> {
        let below: Vec<usize> = (0..heights.len()).filter(|k| heights[*k] < b).collect();
        let above: Vec<usize> = (0..heights.len()).filter(|k| heights[*k] > b).collect();
        if below.len() < 2 || above.len() < 2 {
            return None;
        }
        Some([below[below.len() - 2], below[below.len() - 1], above[0], above[1]])
    };
    let mut total = T::zero();
    for c in 0..d {
        let heights: Vec<T> = (0..g.rows).map(|k| g.node_height(c, k)).collect();
        let Some([b0, b1, a0, a1]) = bracket(&heights) else {
            continue;
        };
        for lat in 0..lc {
            if ![b0, b1, a0, a1].iter().all(|k| g.is_active(c, lat, *k)) {
                continue;
            }
            let slope = |k0: usize, k1: usize| (sol.node(c, lat, k1) - sol.node(c, lat, k0)) / (heights[k1] - heights[k0]);
            let mut jump = slope(a0, a1) - slope(b0, b1) - lam[c];
            if g.is_normal(c) {
                let below = (0..g.nz()).filter(|j| g.zc[*j] < b).last();
                let above = (0..g.nz()).find(|j| g.zc[*j] > b);
                match (below, above) {
                    (Some(jb), Some(ja)) if g.fluid(lat, ja) => {
                        let wb = sol.pressure[lat + lc * jb];
                        let wa = sol.pressure[lat + lc * ja];
                        jump = jump - (wa - wb);
                    }
                    _ => continue,
                }
            }
            total = total + jump * jump;
        }
    }
    (total * g.h.powi((d - 1) as i32)).sqrt()
}

/// Solution of the problem whose interface is moved to y_d = b < 0:
/// β + λ y_d on (b, 0], β + bλ below b, unchanged above S.
pub fn shift_solution<T: Real>(sol: &CellSolution<T>, b: T) -> Result<CellSolution<T>> {
    let g = &*sol.grid;
    if !(b < T::zero() && b > -g.depth) {
        return Err(Error::OutOfRange(format!("shift {b} must lie in (-L, 0)")));
    }
    let lam = g.frame.to_frame(&sol.jump_vector);
    let lc = g.lateral_count;
    let mut out = sol.clone();
    for c in 0..g.dim {
        for k in 0..g.rows {
            let t = g.node_height(c, k);
            let add = if t <= b {
                lam[c] * b
            } else if t <= T::zero() {
                lam[c] * t
            } else {
                continue;
            };
            for lat in 0..lc {
                if g.is_active(c, lat, k) {
                    out.velocity[c][lat + lc * k] = out.velocity[c][lat + lc * k] + add;
                }
            }
        }
    }
    for (i, v) in out.bl_constant.iter_mut().enumerate() {
        *v = *v + b * sol.jump_vector[i];
    }
    for (i, v) in out.deep_constant.iter_mut().enumerate() {
        *v = *v + b * sol.jump_vector[i];
    }
    let c_frame = g.frame.to_frame(&out.bl_constant);
    out.decay_samples = super::solve::fluctuation_samples(g, &out.velocity, &c_frame);
    out.residuals.jump = jump_residual_at(&out, b, &sol.jump_vector).to_f64_();
    Ok(out)
}
