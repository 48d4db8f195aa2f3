use crate::dense::Mat;
use crate::error::{Error, Result};
use crate::geometry::{CellCoefficients, RoughnessProfile};
use crate::real::Real;

/// Orthogonal decomposition B = Q diag(D) of the cell coefficient matrix.
///
/// The staggered discretization works with frame components β̂ = Qᵀβ, for which the
/// operator has diagonal coefficients A = diag(D²) and the constraint is div(D β̂) = 0.
#[derive(Clone, Debug)]
pub struct Frame<T> {
    pub q: Mat<T>,
    pub scale: Vec<T>,
}

impl<T: Real> Frame<T> {
    pub fn from_coefficients(coeffs: &CellCoefficients<T>) -> Result<Self> {
        let b = &coeffs.b_matrix;
        let d = b.rows;
        let scale: Vec<T> = (0..d).map(|c| crate::dense::norm(&b.column(c))).collect();
        if scale.iter().any(|s| !(*s > T::zero())) {
            return Err(Error::InvalidCoefficients("B has a zero column".into()));
        }
        let q = Mat::from_fn(d, d, |i, j| b[(i, j)] / scale[j]);
        let gap = q.transpose().mul(&q).sub(&Mat::identity(d)).max_abs();
        if gap > T::lit(1e-10) {
            return Err(Error::InvalidCoefficients(format!(
                "chart tangents are not orthogonal (|QᵀQ - I| = {:e}); the staggered cell solver needs an orthogonal chart",
                gap.to_f64_()
            )));
        }
        if (scale[d - 1] - T::one()).abs() > T::lit(1e-10) {
            return Err(Error::InvalidCoefficients("normal column of B is not a unit vector".into()));
        }
        Ok(Frame { q, scale })
    }

    pub fn to_frame(&self, v: &[T]) -> Vec<T> {
        self.q.transpose().mul_vec(v)
    }

    pub fn to_physical(&self, v: &[T]) -> Vec<T> {
        self.q.mul_vec(v)
    }
}

/// Staggered grid on [0,1)^{d-1} × [-L, top].
///
/// Every velocity component has `rows = nz + 1` node rows over `lateral_count` lateral
/// positions. Tangential components sit at cell-centre heights plus one extra row on S
/// (row `js`), which carries the interface load. The normal component sits on the
/// horizontal faces z_0..z_nz.
#[derive(Clone, Debug)]
pub struct CellGrid<T> {
    pub dim: usize,
    pub n: usize,
    pub h: T,
    pub z: Vec<T>,
    pub zc: Vec<T>,
    pub hz: Vec<T>,
    pub js: usize,
    pub depth: T,
    pub frame: Frame<T>,
    pub lateral_count: usize,
    pub rows: usize,
    /// Heights of the node rows of a tangential component.
    pub t_rows: Vec<T>,
    pub cell_fluid: Vec<bool>,
    /// γ at each component's lateral node positions.
    pub gamma: Vec<Vec<T>>,
    pub gamma_center: Vec<T>,
    pub active: Vec<Vec<bool>>,
}

impl<T: Real> CellGrid<T> {
    pub fn new(
        coeffs: &CellCoefficients<T>,
        profile: &RoughnessProfile<T>,
        lateral: usize,
        depth_cells: usize,
        depth: T,
    ) -> Result<Self> {
        let dim = coeffs.dim();
        if !(dim == 2 || dim == 3) {
            return Err(Error::InvalidCoefficients(format!("dimension {dim} not supported")));
        }
        if lateral < 4 || depth_cells < 8 {
            return Err(Error::Resolution(format!("cell grid {lateral}×{depth_cells} is too coarse")));
        }
        if !(depth > T::zero()) {
            return Err(Error::OutOfRange("truncation depth must be positive".into()));
        }
        let frame = Frame::from_coefficients(coeffs)?;
        let n = lateral;
        let h = T::one() / T::from_usize_(n);
        let lateral_count = n.pow((dim - 1) as u32);
        let bp = &coeffs.base_point;
        let gam = |y: &[T]| profile.height(bp, y);

        let center_pos = |lat: usize| -> Vec<T> {
            let mut p = Vec::with_capacity(dim - 1);
            let mut r = lat;
            for _ in 0..dim - 1 {
                p.push((T::from_usize_(r % n) + T::lit(0.5)) * h);
                r /= n;
            }
            p
        };
        let gamma_center: Vec<T> = (0..lateral_count).map(|l| gam(&center_pos(l))).collect();
        let mut gamma: Vec<Vec<T>> = Vec::with_capacity(dim);
        for c in 0..dim {
            gamma.push(
                (0..lateral_count)
                    .map(|l| {
                        let mut p = center_pos(l);
                        if c < dim - 1 {
                            p[c] = p[c] - T::lit(0.5) * h;
                        }
                        gam(&p)
                    })
                    .collect(),
            );
        }
        let top = gamma_center
            .iter()
            .chain(gamma.iter().flatten())
            .fold(T::zero(), |m, g| m.max(*g));
        let (_, sampled_max) = profile.range(bp, dim - 1);
        let top = top.max(sampled_max);

        // vertical faces: uniform above S, graded below
        let n_top = if top > T::zero() { (depth_cells / 4).max(2) } else { 0 };
        let n_below = depth_cells - n_top;
        let hv = if n_top > 0 {
            top / T::from_usize_(n_top)
        } else {
            (depth / T::from_usize_(n_below)).min(T::lit(0.05))
        };
        let below = graded_spacing(hv, depth, n_below);
        let mut z = Vec::with_capacity(depth_cells + 1);
        let mut acc = -depth;
        z.push(acc);
        for s in below.iter().rev() {
            acc = acc + *s;
            z.push(acc);
        }
        let js = z.len() - 1;
        z[js] = T::zero();
        for k in 1..=n_top {
            z.push(top * T::from_usize_(k) / T::from_usize_(n_top));
        }
        let nz = z.len() - 1;
        let zc: Vec<T> = (0..nz).map(|j| (z[j] + z[j + 1]) / T::lit(2.0)).collect();
        let hz: Vec<T> = (0..nz).map(|j| z[j + 1] - z[j]).collect();
        let rows = nz + 1;
        let t_rows: Vec<T> = (0..rows)
            .map(|k| if k < js { zc[k] } else if k == js { T::zero() } else { zc[k - 1] })
            .collect();

        let mut cell_fluid = vec![false; lateral_count * nz];
        for j in 0..nz {
            for l in 0..lateral_count {
                cell_fluid[l + lateral_count * j] = zc[j] < gamma_center[l];
            }
        }
        let mut grid = CellGrid {
            dim,
            n,
            h,
            z,
            zc,
            hz,
            js,
            depth,
            frame,
            lateral_count,
            rows,
            t_rows,
            cell_fluid,
            gamma,
            gamma_center,
            active: Vec::new(),
        };
        grid.active = (0..dim).map(|c| grid.compute_active(c)).collect();
        Ok(grid)
    }

    pub fn nz(&self) -> usize {
        self.zc.len()
    }

    pub fn node_count(&self) -> usize {
        self.lateral_count * self.rows
    }

    pub fn is_normal(&self, c: usize) -> bool {
        c == self.dim - 1
    }

    /// Lateral neighbour in direction `dir`, shifted by ±1 with periodic wrap.
    pub fn shift(&self, lat: usize, dir: usize, forward: bool) -> usize {
        let stride = self.n.pow(dir as u32);
        let i = (lat / stride) % self.n;
        let ni = if forward { (i + 1) % self.n } else { (i + self.n - 1) % self.n };
        lat - i * stride + ni * stride
    }

    pub fn fluid(&self, lat: usize, j: usize) -> bool {
        self.cell_fluid[lat + self.lateral_count * j]
    }

    /// Cell row of a tangential node row (None for the S row).
    pub fn cell_row(&self, k: usize) -> Option<usize> {
        if k < self.js {
            Some(k)
        } else if k == self.js {
            None
        } else {
            Some(k - 1)
        }
    }

    /// Node row of a tangential component lying in cell row j.
    pub fn tangential_row(&self, j: usize) -> usize {
        if j < self.js {
            j
        } else {
            j + 1
        }
    }

    pub fn node_height(&self, c: usize, k: usize) -> T {
        if self.is_normal(c) {
            self.z[k]
        } else {
            self.t_rows[k]
        }
    }

    /// Lateral coordinates of node `lat` of component c.
    pub fn node_lateral(&self, c: usize, lat: usize) -> Vec<T> {
        let mut p = Vec::with_capacity(self.dim - 1);
        let mut r = lat;
        for dir in 0..self.dim - 1 {
            let i = T::from_usize_(r % self.n);
            p.push(if dir == c { i * self.h } else { (i + T::lit(0.5)) * self.h });
            r /= self.n;
        }
        p
    }

    /// Control height of a node row (zero on the S row of tangential components).
    pub fn control_height(&self, c: usize, k: usize) -> T {
        if self.is_normal(c) {
            let nz = self.nz();
            if k == 0 {
                self.hz[0] / T::lit(2.0)
            } else if k == nz {
                self.hz[nz - 1] / T::lit(2.0)
            } else {
                (self.hz[k - 1] + self.hz[k]) / T::lit(2.0)
            }
        } else {
            match self.cell_row(k) {
                Some(j) => self.hz[j],
                None => T::zero(),
            }
        }
    }

    fn compute_active(&self, c: usize) -> Vec<bool> {
        let nz = self.nz();
        let mut act = vec![false; self.node_count()];
        for k in 0..self.rows {
            for lat in 0..self.lateral_count {
                let a = if self.is_normal(c) {
                    if k == 0 {
                        self.fluid(lat, 0)
                    } else if k == nz {
                        false
                    } else {
                        self.fluid(lat, k - 1) && self.fluid(lat, k)
                    }
                } else {
                    let g = self.gamma[c][lat];
                    match self.cell_row(k) {
                        None => g > T::zero(),
                        Some(j) => {
                            let left = self.shift(lat, c, false);
                            self.fluid(lat, j) && self.fluid(left, j) && self.t_rows[k] < g
                        }
                    }
                };
                act[lat + self.lateral_count * k] = a;
            }
        }
        act
    }

    pub fn is_active(&self, c: usize, lat: usize, k: usize) -> bool {
        self.active[c][lat + self.lateral_count * k]
    }

    /// Visits every term of the discrete Dirichlet form Σ w (u_a - u_b)²; `b = None`
    /// marks a wall term w u_a².
    pub fn for_each_edge(&self, mut visit: impl FnMut(usize, usize, Option<usize>, T)) {
        let d = self.dim;
        let lc = self.lateral_count;
        let h = self.h;
        let area_lat = h.powi((d - 2) as i32);
        let area_vert = h.powi((d - 1) as i32);
        for c in 0..d {
            for k in 0..self.rows {
                let ch = self.control_height(c, k);
                for lat in 0..lc {
                    let idx = lat + lc * k;
                    let me = self.active[c][idx];
                    // lateral edges
                    if ch > T::zero() {
                        for dir in 0..d - 1 {
                            let w = self.frame.scale[dir] * self.frame.scale[dir] * area_lat * ch / h;
                            let nb = self.shift(lat, dir, true) + lc * k;
                            let other = self.active[c][nb];
                            match (me, other) {
                                (true, true) => visit(c, idx, Some(nb), w),
                                (true, false) => visit(c, idx, None, w),
                                (false, true) => visit(c, nb, None, w),
                                _ => {}
                            }
                        }
                    }
                    if !me {
                        continue;
                    }
                    // vertical edge to the row above
                    if self.is_normal(c) {
                        let w = area_vert / self.hz[k];
                        let up = idx + lc;
                        if self.active[c][up] {
                            visit(c, idx, Some(up), w);
                        } else {
                            visit(c, idx, None, w);
                        }
                    } else {
                        let t = self.t_rows[k];
                        let (gap, up_active) = if k + 1 < self.rows {
                            (self.t_rows[k + 1] - t, self.active[c][idx + lc])
                        } else {
                            (self.z[self.nz()] - t, false)
                        };
                        if up_active {
                            visit(c, idx, Some(idx + lc), area_vert / gap);
                        } else {
                            let g = self.gamma[c][lat];
                            let delta = (g - t).max(gap / T::lit(4.0)).min(gap);
                            visit(c, idx, None, area_vert / delta);
                        }
                    }
                }
            }
        }
    }

    /// Weighted divergence Σ_faces D_c area (outflow) of cell (lat, j) as (component, node, coefficient).
    pub fn divergence_stencil(&self, lat: usize, j: usize) -> Vec<(usize, usize, T)> {
        let d = self.dim;
        let lc = self.lateral_count;
        let h = self.h;
        let mut out = Vec::with_capacity(2 * d);
        let k = self.tangential_row(j);
        for c in 0..d - 1 {
            let a = self.frame.scale[c] * h.powi((d - 2) as i32) * self.hz[j];
            out.push((c, self.shift(lat, c, true) + lc * k, a));
            out.push((c, lat + lc * k, -a));
        }
        let a = h.powi((d - 1) as i32);
        out.push((d - 1, lat + lc * (j + 1), a));
        out.push((d - 1, lat + lc * j, -a));
        out
    }

    pub fn cell_volume(&self, j: usize) -> T {
        self.h.powi((self.dim - 1) as i32) * self.hz[j]
    }
}

/// n spacings starting at `first` next to S and growing geometrically to cover `length`.
fn graded_spacing<T: Real>(first: T, length: T, n: usize) -> Vec<T> {
    let nf = T::from_usize_(n);
    if first * nf >= length {
        return vec![length / nf; n];
    }
    let total = |q: T| -> T {
        let mut s = T::zero();
        let mut hh = first;
        for _ in 0..n {
            s = s + hh;
            hh = hh * q;
        }
        s
    };
    let mut lo = T::one();
    let mut hi = T::lit(2.0);
    while total(hi) < length {
        hi = hi * T::lit(2.0);
    }
    for _ in 0..200 {
        let mid = (lo + hi) / T::lit(2.0);
        if total(mid) < length {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let q = (lo + hi) / T::lit(2.0);
    let mut out = Vec::with_capacity(n);
    let mut hh = first;
    for _ in 0..n {
        out.push(hh);
        hh = hh * q;
    }
    let s = out.iter().fold(T::zero(), |a, b| a + *b);
    out.iter().map(|v| *v * length / s).collect()
}
