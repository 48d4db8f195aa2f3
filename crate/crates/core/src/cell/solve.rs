use std::sync::Arc;

use serde::Serialize;

use super::grid::CellGrid;
use super::{default_depth, CellProblemSpec};
use crate::dense::Mat;
use crate::error::{Error, Result};
use crate::geometry::{decay_rate_bound, CellCoefficients, RoughnessProfile};
use crate::linalg::{SaddleSolver, Triplets};
use crate::real::Real;

const INACTIVE: usize = usize::MAX;

#[derive(Clone, Debug, Default, Serialize)]
pub struct CellResiduals {
    /// ‖[∂β/∂y_d − ων]_S − λ‖ over S from one-sided differences.
    pub jump: f64,
    /// Largest |div(Bᵀβ)| per unit cross-section over fluid cells.
    pub divergence: f64,
    /// Relative residual of the saddle-point system.
    pub momentum: f64,
    /// Largest |∫ β·ν dy'| over levels y_d ≤ 0.
    pub normal_flux: f64,
    pub iterations: usize,
}

/// Assembled and factorized cell system; one factorization serves every jump vector.
pub struct CellSystem<T: Real> {
    pub grid: Arc<CellGrid<T>>,
    pub coeffs: CellCoefficients<T>,
    pub profile: RoughnessProfile<T>,
    pub alpha: T,
    velocity_index: Vec<Vec<usize>>,
    pressure_index: Vec<usize>,
    velocity_dofs: usize,
    solver: SaddleSolver<T>,
}

#[derive(Clone, Debug)]
pub struct CellSolution<T: Real> {
    pub grid: Arc<CellGrid<T>>,
    pub coeffs: CellCoefficients<T>,
    pub profile: RoughnessProfile<T>,
    /// λ in physical components.
    pub jump_vector: Vec<T>,
    /// Frame components β̂_c = (Qᵀβ)_c on the staggered nodes, zero at inactive nodes.
    pub velocity: Vec<Vec<T>>,
    /// ω per cell (zero in solid cells).
    pub pressure: Vec<T>,
    /// c^bl in physical components, read on S.
    pub bl_constant: Vec<T>,
    /// Row average at the bottom cut, physical components.
    pub deep_constant: Vec<T>,
    pub decay_samples: Vec<(T, T)>,
    pub alpha: T,
    pub residuals: CellResiduals,
}

pub fn solve_cell<T: Real>(spec: &CellProblemSpec<T>) -> Result<CellSolution<T>> {
    CellSystem::assemble(spec)?.solve(&spec.jump_vector)
}

impl<T: Real> CellSystem<T> {
    pub fn assemble(spec: &CellProblemSpec<T>) -> Result<Self> {
        spec.profile.validate()?;
        let alpha = decay_rate_bound(&spec.coeffs)?;
        let depth = spec.truncation_depth.unwrap_or_else(|| default_depth(alpha));
        let grid = CellGrid::new(&spec.coeffs, &spec.profile, spec.resolution.lateral, spec.resolution.depth, depth)?;
        let d = grid.dim;
        let lc = grid.lateral_count;

        let mut velocity_index = vec![vec![INACTIVE; grid.node_count()]; d];
        let mut nu = 0;
        for c in 0..d {
            for (i, a) in grid.active[c].iter().enumerate() {
                if *a {
                    velocity_index[c][i] = nu;
                    nu += 1;
                }
            }
        }
        let mut pressure_index = vec![INACTIVE; grid.cell_fluid.len()];
        let mut np = 0;
        let mut mass = Vec::new();
        for j in 0..grid.nz() {
            for lat in 0..lc {
                if grid.fluid(lat, j) {
                    pressure_index[lat + lc * j] = np;
                    np += 1;
                    mass.push(Mat::diag(&[grid.cell_volume(j)]));
                }
            }
        }
        if nu == 0 || np == 0 {
            return Err(Error::Geometry("cell has no fluid region".into()));
        }

        let mut kt = Triplets::new(nu, nu);
        grid.for_each_edge(|c, a, b, w| {
            let ia = velocity_index[c][a];
            kt.push(ia, ia, w);
            if let Some(b) = b {
                let ib = velocity_index[c][b];
                kt.push(ib, ib, w);
                kt.push(ia, ib, -w);
                kt.push(ib, ia, -w);
            }
        });
        let mut bt = Triplets::new(np, nu);
        for j in 0..grid.nz() {
            for lat in 0..lc {
                let row = pressure_index[lat + lc * j];
                if row == INACTIVE {
                    continue;
                }
                for (c, node, v) in grid.divergence_stencil(lat, j) {
                    let col = velocity_index[c][node];
                    if col != INACTIVE {
                        bt.push(row, col, v);
                    }
                }
            }
        }
        let mut solver = SaddleSolver::new(kt.to_csr(), bt.to_csr(), mass)?;
        solver.tol = spec.tol;
        solver.method = spec.method;
        Ok(CellSystem {
            grid: Arc::new(grid),
            coeffs: spec.coeffs.clone(),
            profile: spec.profile.clone(),
            alpha,
            velocity_index,
            pressure_index,
            velocity_dofs: nu,
            solver,
        })
    }

    pub fn velocity_dofs(&self) -> usize {
        self.velocity_dofs
    }

    pub fn pressure_dofs(&self) -> usize {
        self.solver.pressure_dim()
    }

    pub fn solve(&self, jump_vector: &[T]) -> Result<CellSolution<T>> {
        let g = &*self.grid;
        let d = g.dim;
        let lc = g.lateral_count;
        if jump_vector.len() != d {
            return Err(Error::Incompatible(format!("jump vector has {} components, cell has {d}", jump_vector.len())));
        }
        let lam = g.frame.to_frame(jump_vector);
        let area = g.h.powi((d - 1) as i32);
        let mut f = vec![T::zero(); self.velocity_dofs];
        for c in 0..d {
            // tangential S row and the normal face on S share the node row index js
            for lat in 0..lc {
                let i = self.velocity_index[c][lat + lc * g.js];
                if i != INACTIVE {
                    f[i] = -lam[c] * area;
                }
            }
        }
        let gdiv = vec![T::zero(); self.solver.pressure_dim()];
        let sol = if f.iter().all(|v| *v == T::zero()) {
            crate::linalg::SaddleSolution {
                velocity: vec![T::zero(); self.velocity_dofs],
                pressure: gdiv.clone(),
                stats: Default::default(),
            }
        } else {
            self.solver.solve(&f, &gdiv).map_err(|e| match e {
                Error::ToleranceNotReached { .. } | Error::SolverBreakdown { .. } => e,
                other => Error::SolverBreakdown { iterations: 0, reason: other.to_string() },
            })?
        };

        let mut velocity = vec![vec![T::zero(); g.node_count()]; d];
        for c in 0..d {
            for (node, idx) in self.velocity_index[c].iter().enumerate() {
                if *idx != INACTIVE {
                    velocity[c][node] = sol.velocity[*idx];
                }
            }
        }
        let pressure: Vec<T> = self
            .pressure_index
            .iter()
            .map(|i| if *i == INACTIVE { T::zero() } else { -sol.pressure[*i] })
            .collect();

        let row_mean = |c: usize, k: usize| -> T {
            let s = velocity[c][lc * k..lc * (k + 1)].iter().fold(T::zero(), |a, b| a + *b);
            s / T::from_usize_(lc)
        };
        let c_frame: Vec<T> = (0..d).map(|c| row_mean(c, g.js)).collect();
        let deep_frame: Vec<T> = (0..d).map(|c| row_mean(c, 0)).collect();
        let bl_constant = g.frame.to_physical(&c_frame);
        let deep_constant = g.frame.to_physical(&deep_frame);

        let decay_samples = fluctuation_samples(g, &velocity, &c_frame);

        let mut bu = vec![T::zero(); self.solver.pressure_dim()];
        self.solver.divergence().mul_vec(&sol.velocity, &mut bu);
        let divergence = bu.iter().fold(0.0f64, |m, v| m.max(v.to_f64_().abs())) / area.to_f64_();
        let normal_flux = (0..=g.js).fold(0.0f64, |m, k| m.max(row_mean(d - 1, k).to_f64_().abs()));

        let mut out = CellSolution {
            grid: self.grid.clone(),
            coeffs: self.coeffs.clone(),
            profile: self.profile.clone(),
            jump_vector: jump_vector.to_vec(),
            velocity,
            pressure,
            bl_constant,
            deep_constant,
            decay_samples,
            alpha: self.alpha,
            residuals: CellResiduals {
                jump: 0.0,
                divergence,
                momentum: sol.stats.relative_residual,
                normal_flux,
                iterations: sol.stats.iterations,
            },
        };
        out.residuals.jump = super::analysis::jump_residual(&out, jump_vector).to_f64_();
        Ok(out)
    }
}

impl<T: Real> CellSolution<T> {
    pub fn dim(&self) -> usize {
        self.grid.dim
    }

    /// c^bl in frame components.
    pub fn bl_constant_frame(&self) -> Vec<T> {
        self.grid.frame.to_frame(&self.bl_constant)
    }

    pub fn same_problem(&self, other: &CellSolution<T>) -> bool {
        self.coeffs == other.coeffs
            && self.profile == other.profile
            && self.grid.n == other.grid.n
            && self.grid.z == other.grid.z
    }

    /// β̂_c at node (lat, k).
    pub fn node(&self, c: usize, lat: usize, k: usize) -> T {
        self.velocity[c][lat + self.grid.lateral_count * k]
    }

    /// Physical velocity β(y', y_d) by multilinear interpolation of the staggered nodes;
    /// the field is periodic in y' and equal to c^bl below the cut.
    pub fn evaluate(&self, y_lat: &[T], y_d: T) -> Vec<T> {
        let g = &*self.grid;
        let d = g.dim;
        if y_d <= g.z[0] {
            return self.bl_constant.clone();
        }
        if y_d >= g.z[g.nz()] {
            return vec![T::zero(); d];
        }
        let mut frame = vec![T::zero(); d];
        for c in 0..d {
            frame[c] = self.interpolate_component(c, y_lat, y_d);
        }
        g.frame.to_physical(&frame)
    }

    /// Like [`evaluate`](Self::evaluate) but in frame components (Qᵀβ).
    pub fn evaluate_frame(&self, y_lat: &[T], y_d: T) -> Vec<T> {
        let g = &*self.grid;
        if y_d <= g.z[0] {
            return self.bl_constant_frame();
        }
        if y_d >= g.z[g.nz()] {
            return vec![T::zero(); g.dim];
        }
        (0..g.dim).map(|c| self.interpolate_component(c, y_lat, y_d)).collect()
    }

    fn interpolate_component(&self, c: usize, y_lat: &[T], y_d: T) -> T {
        let g = &*self.grid;
        let d = g.dim;
        let rows: Vec<T> = (0..g.rows).map(|k| g.node_height(c, k)).collect();
        // vertical bracket
        let (k0, wz) = if y_d <= rows[0] {
            (0, T::zero())
        } else {
            let mut k = 0;
            while k + 1 < rows.len() && rows[k + 1] < y_d {
                k += 1;
            }
            if k + 1 >= rows.len() {
                (k, T::zero())
            } else {
                (k, (y_d - rows[k]) / (rows[k + 1] - rows[k]))
            }
        };
        // lateral brackets
        let mut idx0 = Vec::with_capacity(d - 1);
        let mut wl = Vec::with_capacity(d - 1);
        for dir in 0..d - 1 {
            let offset = if dir == c { T::zero() } else { T::lit(0.5) };
            let s = y_lat[dir] / g.h - offset;
            let fl = s.floor();
            let frac = s - fl;
            let n = g.n as i64;
            let i = (fl.to_f64_() as i64).rem_euclid(n) as usize;
            idx0.push(i);
            wl.push(frac);
        }
        let mut acc = T::zero();
        for corner in 0..(1usize << (d - 1)) {
            let mut lat = 0;
            let mut w = T::one();
            let mut stride = 1;
            for dir in 0..d - 1 {
                let up = (corner >> dir) & 1 == 1;
                let i = if up { (idx0[dir] + 1) % g.n } else { idx0[dir] };
                w = w * if up { wl[dir] } else { T::one() - wl[dir] };
                lat += i * stride;
                stride *= g.n;
            }
            if w == T::zero() {
                continue;
            }
            let lo = self.node(c, lat, k0);
            let hi = if k0 + 1 < g.rows { self.node(c, lat, k0 + 1) } else { T::zero() };
            acc = acc + w * ((T::one() - wz) * lo + wz * hi);
        }
        acc
    }
}

/// (y_d, ‖β − c^bl‖_{L²(Z')}) at every cell row below S.
pub(crate) fn fluctuation_samples<T: Real>(g: &CellGrid<T>, velocity: &[Vec<T>], c_frame: &[T]) -> Vec<(T, T)> {
    let lc = g.lateral_count;
    let area = g.h.powi((g.dim - 1) as i32);
    (0..g.js)
        .map(|j| {
            let mut s = T::zero();
            for lat in 0..lc {
                for c in 0..g.dim {
                    let v = if g.is_normal(c) {
                        (velocity[c][lat + lc * j] + velocity[c][lat + lc * (j + 1)]) / T::lit(2.0)
                    } else {
                        velocity[c][lat + lc * j]
                    };
                    let e = v - c_frame[c];
                    s = s + e * e;
                }
            }
            (g.zc[j], (s * area).sqrt())
        })
        .collect()
}
