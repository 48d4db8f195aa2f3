//! Q2–P1disc Stokes elements on boundary-fitted annulus sectors.
//!
//! Velocity degrees of freedom are nodal polar components (u_r, u_θ), which makes the
//! rotation-periodic identification of the two sector edges a plain node identification.

use std::sync::Arc;

use crate::dense::Mat;
use crate::error::{Error, Result};
use crate::geometry::RoughAnnulus;
use crate::linalg::{KrylovStats, SaddleMethod, SaddleSolver, Triplets};
use crate::real::Real;

/// Gauss–Legendre points and weights on [-1, 1].
pub fn gauss<T: Real>(n: usize) -> Vec<(T, T)> {
    let raw: &[(f64, f64)] = match n {
        2 => &[(-0.577_350_269_189_625_8, 1.0), (0.577_350_269_189_625_8, 1.0)],
        3 => &[(-0.774_596_669_241_483_4, 5.0 / 9.0), (0.0, 8.0 / 9.0), (0.774_596_669_241_483_4, 5.0 / 9.0)],
        4 => &[
            (-0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
            (-0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
            (0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
            (0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
        ],
        _ => panic!("no {n}-point Gauss rule"),
    };
    raw.iter().map(|(x, w)| (T::lit(*x), T::lit(*w))).collect()
}

fn q2_1d<T: Real>(x: T) -> ([T; 3], [T; 3]) {
    let h = T::lit(0.5);
    (
        [h * x * (x - T::one()), T::one() - x * x, h * x * (x + T::one())],
        [x - h, -T::lit(2.0) * x, x + h],
    )
}

/// Q2 shape functions and reference derivatives; node (a, b) has index a + 3b.
pub fn q2_shape<T: Real>(xi: T, eta: T) -> ([T; 9], [[T; 2]; 9]) {
    let (nx, dx) = q2_1d(xi);
    let (ny, dy) = q2_1d(eta);
    let mut n = [T::zero(); 9];
    let mut d = [[T::zero(); 2]; 9];
    for b in 0..3 {
        for a in 0..3 {
            n[a + 3 * b] = nx[a] * ny[b];
            d[a + 3 * b] = [dx[a] * ny[b], nx[a] * dy[b]];
        }
    }
    (n, d)
}

#[derive(Clone, Debug)]
pub struct Element<T> {
    pub col: usize,
    /// Radial ring; negative rings lie in the rough layer, ring 0 touches Γ from Ω.
    pub ring: isize,
    pub nodes: [usize; 9],
    pub xy: [[T; 2]; 9],
    /// Polar angle of each local node (unwrapped across the sector).
    pub theta: [T; 9],
}

/// Geometry and shape data at one point of an element.
pub struct PointData<T> {
    pub xy: [T; 2],
    pub n: [T; 9],
    /// Physical gradients of the shape functions.
    pub grad: [[T; 2]; 9],
    /// |det J|; the (θ, r) ordering makes the signed determinant negative.
    pub det: T,
    pub orientation: T,
}

impl<T: Real> Element<T> {
    pub fn point(&self, xi: T, eta: T) -> PointData<T> {
        let (n, d) = q2_shape(xi, eta);
        let mut xy = [T::zero(); 2];
        let mut j = [[T::zero(); 2]; 2];
        for a in 0..9 {
            for c in 0..2 {
                xy[c] = xy[c] + n[a] * self.xy[a][c];
                for r in 0..2 {
                    j[c][r] = j[c][r] + self.xy[a][c] * d[a][r];
                }
            }
        }
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        let inv = [[j[1][1] / det, -j[0][1] / det], [-j[1][0] / det, j[0][0] / det]];
        let mut grad = [[T::zero(); 2]; 9];
        for a in 0..9 {
            for c in 0..2 {
                grad[a][c] = d[a][0] * inv[0][c] + d[a][1] * inv[1][c];
            }
        }
        PointData { xy, n, grad, det: det.abs(), orientation: det }
    }

    pub fn area(&self) -> T {
        let g = gauss::<T>(3);
        let mut a = T::zero();
        for (x, wx) in &g {
            for (y, wy) in &g {
                a = a + *wx * *wy * self.point(*x, *y).det;
            }
        }
        a
    }

    pub fn centroid(&self) -> [T; 2] {
        let g = gauss::<T>(3);
        let mut c = [T::zero(); 2];
        let mut a = T::zero();
        for (x, wx) in &g {
            for (y, wy) in &g {
                let p = self.point(*x, *y);
                let w = *wx * *wy * p.det;
                a = a + w;
                c[0] = c[0] + w * p.xy[0];
                c[1] = c[1] + w * p.xy[1];
            }
        }
        [c[0] / a, c[1] / a]
    }
}

/// Unit polar vectors (e_r, e_θ) at angle θ.
pub fn polar<T: Real>(theta: T) -> ([T; 2], [T; 2]) {
    let (s, c) = theta.sin_cos();
    ([c, s], [-s, c])
}

/// Mesh of one rotation-periodic sector of the annulus (or the whole annulus).
#[derive(Clone, Debug)]
pub struct AnnulusMesh<T> {
    pub annulus: RoughAnnulus<T>,
    pub with_layer: bool,
    pub elements: Vec<Element<T>>,
    pub node_count: usize,
    /// Nodes on the innermost row: the rough wall, or Γ when the layer is absent.
    pub inner_nodes: Vec<usize>,
    pub gamma_nodes: Vec<usize>,
    pub outer_nodes: Vec<usize>,
    pub node_xy: Vec<[T; 2]>,
    pub node_theta: Vec<T>,
    pub layer_rings: usize,
    pub theta_elems: usize,
}

impl<T: Real> AnnulusMesh<T> {
    /// Ω^ε when `with_layer`, otherwise the smooth part Ω; the Ω elements coincide.
    pub fn new(annulus: &RoughAnnulus<T>, with_layer: bool) -> Result<Self> {
        let layer = if with_layer && !annulus.is_smooth() { annulus.layer_elems } else { 0 };
        let ne = annulus.theta_elems;
        let ncols = 2 * ne;
        let omega = &annulus.omega_radii;
        let n_omega = omega.len() - 1;
        let nrows = 2 * layer + 2 * n_omega + 1;
        let s_of = |col: usize| annulus.sector_span * T::from_usize_(col) / T::from_usize_(ncols);
        let radius = |row: usize, col: usize| -> T {
            if row < 2 * layer {
                let s = s_of(col);
                let rw = annulus.wall_radius(s);
                rw + (annulus.inner_radius - rw) * T::from_usize_(row) / T::from_usize_(2 * layer)
            } else {
                let k = row - 2 * layer;
                let m = k / 2;
                if k % 2 == 0 {
                    omega[m]
                } else {
                    (omega[m] + omega[m + 1]) / T::lit(2.0)
                }
            }
        };
        let xy_of = |row: usize, col: usize| -> ([T; 2], T) {
            let th = T::TAU() * s_of(col);
            let r = radius(row, col);
            ([r * th.cos(), r * th.sin()], th)
        };
        let node = |row: usize, col: usize| row * ncols + (col % ncols);
        let mut node_xy = vec![[T::zero(); 2]; nrows * ncols];
        let mut node_theta = vec![T::zero(); nrows * ncols];
        for row in 0..nrows {
            for col in 0..ncols {
                let (p, th) = xy_of(row, col);
                node_xy[node(row, col)] = p;
                node_theta[node(row, col)] = th;
            }
        }
        let mut elements = Vec::with_capacity(ne * (layer + n_omega));
        for ring in 0..(layer + n_omega) {
            for c in 0..ne {
                let mut nodes = [0usize; 9];
                let mut xy = [[T::zero(); 2]; 9];
                let mut theta = [T::zero(); 9];
                for b in 0..3 {
                    for a in 0..3 {
                        let row = 2 * ring + b;
                        let col = 2 * c + a;
                        nodes[a + 3 * b] = node(row, col);
                        let (p, th) = xy_of(row, col);
                        xy[a + 3 * b] = p;
                        theta[a + 3 * b] = th;
                    }
                }
                let el = Element { col: c, ring: ring as isize - layer as isize, nodes, xy, theta };
                let bad = [-T::one(), T::zero(), T::one()]
                    .iter()
                    .flat_map(|x| [-T::one(), T::zero(), T::one()].map(|y| (*x, y)))
                    .any(|(x, y)| !(el.point(x, y).orientation < T::zero()));
                if bad {
                    return Err(Error::Geometry(format!("inverted element at ring {ring}, column {c}")));
                }
                elements.push(el);
            }
        }
        let row_nodes = |row: usize| (0..ncols).map(|c| node(row, c)).collect::<Vec<_>>();
        Ok(AnnulusMesh {
            annulus: annulus.clone(),
            with_layer: layer > 0,
            elements,
            node_count: nrows * ncols,
            inner_nodes: row_nodes(0),
            gamma_nodes: row_nodes(2 * layer),
            outer_nodes: row_nodes(nrows - 1),
            node_xy,
            node_theta,
            layer_rings: layer,
            theta_elems: ne,
        })
    }

    /// Index of the element at (column, ring), if present.
    pub fn element_at(&self, col: usize, ring: isize) -> Option<usize> {
        let r = ring + self.layer_rings as isize;
        if r < 0 || col >= self.theta_elems {
            return None;
        }
        let idx = r as usize * self.theta_elems + col;
        (idx < self.elements.len()).then_some(idx)
    }

    pub fn velocity_dofs(&self) -> usize {
        2 * self.node_count
    }

    pub fn pressure_dofs(&self) -> usize {
        3 * self.elements.len()
    }
}

/// Inner boundary condition of a macro Stokes problem.
#[derive(Clone, Debug)]
pub enum InnerCondition<T> {
    /// u = 0 on the innermost row.
    NoSlip,
    /// u_r = 0 and u_θ = g(s) on Γ.
    Tangential(Vec<T>),
    /// u_r = 0 and u_θ = ε c(s) ∂u_θ/∂ν weakly; `coefficient[q]` is 1/(ε|c|) at the q-th
    /// Gauss point of each Γ edge (three per element column), `None` entries mean c = 0.
    Navier(Vec<Option<T>>),
}

/// Body force as a function of position.
pub type ForceFn<'a, T> = &'a (dyn Fn([T; 2]) -> [T; 2] + Sync);

#[derive(Clone, Debug)]
pub struct FeSolution<T: Real> {
    pub mesh: Arc<AnnulusMesh<T>>,
    /// (u_r, u_θ) per node.
    pub velocity: Vec<T>,
    /// P1 coefficients per element.
    pub pressure: Vec<T>,
    pub stats: KrylovStats,
    pub divergence_residual: f64,
}

struct PressureBasis<T> {
    center: [T; 2],
    scale: T,
}

impl<T: Real> PressureBasis<T> {
    fn of(el: &Element<T>) -> Self {
        PressureBasis { center: el.centroid(), scale: el.area().sqrt() }
    }

    fn eval(&self, xy: [T; 2]) -> [T; 3] {
        [T::one(), (xy[0] - self.center[0]) / self.scale, (xy[1] - self.center[1]) / self.scale]
    }
}

fn frame_dot<T: Real>(ta: T, alpha: usize, tb: T, beta: usize) -> T {
    let d = ta - tb;
    match (alpha, beta) {
        (0, 0) | (1, 1) => d.cos(),
        (0, 1) => d.sin(),
        _ => -d.sin(),
    }
}

fn basis_vector<T: Real>(theta: T, alpha: usize) -> [T; 2] {
    let (er, et) = polar(theta);
    if alpha == 0 {
        er
    } else {
        et
    }
}

/// Assembles and solves the Stokes problem −Δu + ∇p = f, div u = 0 on the mesh with
/// u = outer_speed e_θ on the outer circle and the given inner condition.
pub fn solve_stokes<T: Real>(
    mesh: &Arc<AnnulusMesh<T>>,
    inner: &InnerCondition<T>,
    outer_speed: T,
    outer_normal: T,
    force: Option<ForceFn<'_, T>>,
    method: SaddleMethod,
    tol: T,
) -> Result<FeSolution<T>> {
    let nv = mesh.velocity_dofs();
    let np = mesh.pressure_dofs();
    let g3 = gauss::<T>(3);
    let mut kt = Triplets::new(nv, nv);
    let mut bt = Triplets::new(np, nv);
    let mut f = vec![T::zero(); nv];
    let mut mass = Vec::with_capacity(mesh.elements.len());
    for (e, el) in mesh.elements.iter().enumerate() {
        let pb = PressureBasis::of(el);
        let mut kl = [[T::zero(); 9]; 9];
        let mut bl = [[[T::zero(); 2]; 9]; 3];
        let mut fl = [[T::zero(); 2]; 9];
        let mut ml = Mat::zeros(3, 3);
        for (x, wx) in &g3 {
            for (y, wy) in &g3 {
                let p = el.point(*x, *y);
                let w = *wx * *wy * p.det;
                for a in 0..9 {
                    for b in 0..9 {
                        kl[a][b] = kl[a][b] + w * (p.grad[a][0] * p.grad[b][0] + p.grad[a][1] * p.grad[b][1]);
                    }
                }
                let q = pb.eval(p.xy);
                for i in 0..3 {
                    for a in 0..9 {
                        for alpha in 0..2 {
                            let ev = basis_vector(el.theta[a], alpha);
                            bl[i][a][alpha] = bl[i][a][alpha] + w * q[i] * (p.grad[a][0] * ev[0] + p.grad[a][1] * ev[1]);
                        }
                    }
                    for j in 0..3 {
                        ml[(i, j)] = ml[(i, j)] + w * q[i] * q[j];
                    }
                }
                if let Some(force) = force {
                    let fv = force(p.xy);
                    for a in 0..9 {
                        for alpha in 0..2 {
                            let ev = basis_vector(el.theta[a], alpha);
                            fl[a][alpha] = fl[a][alpha] + w * p.n[a] * (fv[0] * ev[0] + fv[1] * ev[1]);
                        }
                    }
                }
            }
        }
        for a in 0..9 {
            for alpha in 0..2 {
                let ia = 2 * el.nodes[a] + alpha;
                f[ia] = f[ia] + fl[a][alpha];
                for b in 0..9 {
                    for beta in 0..2 {
                        let ib = 2 * el.nodes[b] + beta;
                        kt.push(ia, ib, kl[a][b] * frame_dot(el.theta[a], alpha, el.theta[b], beta));
                    }
                }
                for i in 0..3 {
                    // Bu = −∫ q div u so that the pressure enters as +Bᵀp
                    bt.push(3 * e + i, ia, -bl[i][a][alpha]);
                }
            }
        }
        mass.push(ml);
    }

    // Robin term on Γ for the Navier condition
    if let InnerCondition::Navier(coef) = inner {
        if mesh.with_layer {
            return Err(Error::Incompatible("the Navier condition is posed on the smooth domain".into()));
        }
        for el in mesh.elements.iter().filter(|e| e.ring == 0) {
            for (qi, (x, wx)) in g3.iter().enumerate() {
                let Some(w_robin) = coef[3 * el.col + qi] else { continue };
                let (n, d) = q2_shape(*x, -T::one());
                // edge length element |∂x/∂ξ|
                let mut t = [T::zero(); 2];
                let mut xy = [T::zero(); 2];
                for a in 0..9 {
                    for c in 0..2 {
                        t[c] = t[c] + el.xy[a][c] * d[a][0];
                        xy[c] = xy[c] + el.xy[a][c] * n[a];
                    }
                }
                let ds = (t[0] * t[0] + t[1] * t[1]).sqrt();
                let thq = xy[1].atan2(xy[0]);
                let (_, tau) = polar(thq);
                let w = *wx * ds * w_robin;
                for a in 0..3 {
                    for alpha in 0..2 {
                        let ea = basis_vector(el.theta[a], alpha);
                        let ta = n[a] * (ea[0] * tau[0] + ea[1] * tau[1]);
                        for b in 0..3 {
                            for beta in 0..2 {
                                let eb = basis_vector(el.theta[b], beta);
                                let tb = n[b] * (eb[0] * tau[0] + eb[1] * tau[1]);
                                kt.push(2 * el.nodes[a] + alpha, 2 * el.nodes[b] + beta, w * ta * tb);
                            }
                        }
                    }
                }
            }
        }
    }

    // constrained values
    let mut fixed: Vec<Option<T>> = vec![None; nv];
    for n in &mesh.outer_nodes {
        fixed[2 * n] = Some(outer_normal);
        fixed[2 * n + 1] = Some(outer_speed);
    }
    let inner_nodes = if mesh.with_layer { &mesh.inner_nodes } else { &mesh.gamma_nodes };
    match inner {
        InnerCondition::NoSlip => {
            for n in inner_nodes {
                fixed[2 * n] = Some(T::zero());
                fixed[2 * n + 1] = Some(T::zero());
            }
        }
        InnerCondition::Tangential(g) => {
            if g.len() != inner_nodes.len() {
                return Err(Error::Incompatible("tangential data must have one value per Γ node".into()));
            }
            for (k, n) in inner_nodes.iter().enumerate() {
                fixed[2 * n] = Some(T::zero());
                fixed[2 * n + 1] = Some(g[k]);
            }
        }
        InnerCondition::Navier(coef) => {
            for n in inner_nodes {
                fixed[2 * n] = Some(T::zero());
            }
            // c = 0 degenerates to no-slip
            for col in 0..mesh.theta_elems {
                if (0..3).all(|q| coef[3 * col + q].is_none()) {
                    for a in 0..3 {
                        let n = inner_nodes[(2 * col + a) % inner_nodes.len()];
                        fixed[2 * n + 1] = Some(T::zero());
                    }
                }
            }
        }
    }

    let mut free_index = vec![usize::MAX; nv];
    let mut nf = 0;
    for i in 0..nv {
        if fixed[i].is_none() {
            free_index[i] = nf;
            nf += 1;
        }
    }
    let k = kt.to_csr();
    let b = bt.to_csr();
    let uc: Vec<T> = fixed.iter().map(|v| v.unwrap_or(T::zero())).collect();
    let mut kuc = vec![T::zero(); nv];
    k.mul_vec(&uc, &mut kuc);
    let mut g = vec![T::zero(); np];
    b.mul_vec(&uc, &mut g);
    for v in g.iter_mut() {
        *v = -*v;
    }
    let mut ff = vec![T::zero(); nf];
    let mut kf = Triplets::new(nf, nf);
    let mut bf = Triplets::new(np, nf);
    for i in 0..nv {
        let fi = free_index[i];
        if fi == usize::MAX {
            continue;
        }
        ff[fi] = f[i] - kuc[i];
        for p in k.indptr[i]..k.indptr[i + 1] {
            let j = free_index[k.indices[p]];
            if j != usize::MAX {
                kf.push(fi, j, k.values[p]);
            }
        }
    }
    for i in 0..np {
        for p in b.indptr[i]..b.indptr[i + 1] {
            let j = free_index[b.indices[p]];
            if j != usize::MAX {
                bf.push(i, j, b.values[p]);
            }
        }
    }
    // constant pressure is in the kernel of Bᵀ; gauge ∫ p = 0
    let ne = mesh.elements.len();
    let mut e = vec![T::zero(); np];
    let mut w = vec![T::zero(); np];
    for (i, el) in mesh.elements.iter().enumerate() {
        e[3 * i] = T::one();
        w[3 * i] = el.area();
    }
    let _ = ne;
    let mut solver = SaddleSolver::new(kf.to_csr(), bf.to_csr(), mass)?.with_nullspace(e, w);
    solver.method = method;
    solver.tol = tol;
    let sol = if ff.iter().all(|v| *v == T::zero()) && g.iter().all(|v| *v == T::zero()) {
        crate::linalg::SaddleSolution { velocity: vec![T::zero(); nf], pressure: vec![T::zero(); np], stats: Default::default() }
    } else {
        solver.solve(&ff, &g)?
    };
    let mut velocity = uc;
    for i in 0..nv {
        if free_index[i] != usize::MAX {
            velocity[i] = sol.velocity[free_index[i]];
        }
    }
    let mut div = vec![T::zero(); np];
    b.mul_vec(&velocity, &mut div);
    let mut worst = 0.0f64;
    for (i, el) in mesh.elements.iter().enumerate() {
        worst = worst.max(div[3 * i].to_f64_().abs() / el.area().to_f64_());
    }
    Ok(FeSolution { mesh: mesh.clone(), velocity, pressure: sol.pressure, stats: sol.stats, divergence_residual: worst })
}

impl<T: Real> FeSolution<T> {
    /// Cartesian velocity and its gradient (∂u_i/∂x_j) at reference point (ξ, η) of element e.
    pub fn eval(&self, e: usize, xi: T, eta: T) -> ([T; 2], [T; 2], [[T; 2]; 2]) {
        let el = &self.mesh.elements[e];
        let p = el.point(xi, eta);
        let mut u = [T::zero(); 2];
        let mut g = [[T::zero(); 2]; 2];
        for a in 0..9 {
            let (er, et) = polar(el.theta[a]);
            let ur = self.velocity[2 * el.nodes[a]];
            let ut = self.velocity[2 * el.nodes[a] + 1];
            let v = [ur * er[0] + ut * et[0], ur * er[1] + ut * et[1]];
            for i in 0..2 {
                u[i] = u[i] + p.n[a] * v[i];
                for j in 0..2 {
                    g[i][j] = g[i][j] + v[i] * p.grad[a][j];
                }
            }
        }
        (p.xy, u, g)
    }

    pub fn pressure_at(&self, e: usize, xy: [T; 2]) -> T {
        let pb = PressureBasis::of(&self.mesh.elements[e]);
        let q = pb.eval(xy);
        (0..3).fold(T::zero(), |a, i| a + q[i] * self.pressure[3 * e + i])
    }

    /// (u_r, u_θ) at a node.
    pub fn nodal(&self, node: usize) -> [T; 2] {
        [self.velocity[2 * node], self.velocity[2 * node + 1]]
    }
}
