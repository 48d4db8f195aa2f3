//! Divergence problem div u = f, u|∂G = 0 on unions of overlapping rectangles.
//!
//! Everything lives on one uniform lattice of square cells. Sources are cell averages,
//! velocities are MAC face values, and a piece is the set of cells whose centres lie in
//! its rectangle.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dense::Mat;
use crate::error::{Error, Result};
use crate::linalg::{SaddleSolver, Triplets};
use crate::real::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lattice<T> {
    pub nx: usize,
    pub ny: usize,
    pub h: T,
}

impl<T: Real> Lattice<T> {
    pub fn cells(&self) -> usize {
        self.nx * self.ny
    }

    pub fn cell(&self, i: usize, j: usize) -> usize {
        i + self.nx * j
    }

    pub fn center(&self, c: usize) -> [T; 2] {
        let half = T::lit(0.5);
        [
            (T::from_usize_(c % self.nx) + half) * self.h,
            (T::from_usize_(c / self.nx) + half) * self.h,
        ]
    }

    /// Faces normal to x: (nx+1)·ny, then faces normal to y: nx·(ny+1).
    pub fn faces(&self) -> usize {
        (self.nx + 1) * self.ny + self.nx * (self.ny + 1)
    }

    fn xface(&self, i: usize, j: usize) -> usize {
        i + (self.nx + 1) * j
    }

    fn yface(&self, i: usize, j: usize) -> usize {
        (self.nx + 1) * self.ny + i + self.nx * j
    }
}

/// Axis-aligned rectangle [x0, x1] × [y0, y1].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect<T> {
    pub x0: T,
    pub y0: T,
    pub x1: T,
    pub y1: T,
}

impl<T: Real> Rect<T> {
    pub fn contains(&self, p: [T; 2]) -> bool {
        p[0] > self.x0 && p[0] < self.x1 && p[1] > self.y0 && p[1] < self.y1
    }

    pub fn area(&self) -> T {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }

    pub fn diameter(&self) -> T {
        let (a, b) = (self.x1 - self.x0, self.y1 - self.y0);
        (a * a + b * b).sqrt()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Piece<T> {
    pub rect: Rect<T>,
    /// Ball B(center, radius) the piece is star-shaped with respect to.
    pub center: [T; 2],
    pub radius: T,
}

impl<T: Real> Piece<T> {
    /// Largest inscribed ball of the rectangle.
    pub fn from_rect(rect: Rect<T>) -> Self {
        let half = T::lit(0.5);
        let center = [(rect.x0 + rect.x1) * half, (rect.y0 + rect.y1) * half];
        let radius = (rect.x1 - rect.x0).min(rect.y1 - rect.y0) * half;
        Piece { rect, center, radius }
    }

    /// Ray sampling: segments from points of the ball to boundary points stay inside.
    pub fn is_star_shaped(&self, samples: usize) -> bool {
        let r = &self.rect;
        let eps = T::lit(1e-12) * r.diameter();
        let inside = |p: [T; 2]| p[0] >= r.x0 - eps && p[0] <= r.x1 + eps && p[1] >= r.y0 - eps && p[1] <= r.y1 + eps;
        let ball_ok = inside([self.center[0] - self.radius, self.center[1]])
            && inside([self.center[0] + self.radius, self.center[1]])
            && inside([self.center[0], self.center[1] - self.radius])
            && inside([self.center[0], self.center[1] + self.radius]);
        if !ball_ok {
            return false;
        }
        let n = samples.max(4);
        for k in 0..n {
            let phi = T::TAU() * T::from_usize_(k) / T::from_usize_(n);
            let b = [self.center[0] + self.radius * phi.cos(), self.center[1] + self.radius * phi.sin()];
            for e in 0..n {
                let t = T::from_usize_(e) / T::from_usize_(n);
                let edge = [
                    [r.x0 + (r.x1 - r.x0) * t, r.y0],
                    [r.x1, r.y0 + (r.y1 - r.y0) * t],
                    [r.x1 - (r.x1 - r.x0) * t, r.y1],
                    [r.x0, r.y1 - (r.y1 - r.y0) * t],
                ];
                for x in edge {
                    for m in 1..8 {
                        let s = T::from_usize_(m) / T::lit(8.0);
                        if !inside([b[0] + (x[0] - b[0]) * s, b[1] + (x[1] - b[1]) * s]) {
                            return false;
                        }
                    }
                }
            }
        }
        true
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecompositionShape {
    /// Piece 0 is the macro piece G₀; the others are pairwise disjoint and overlap G₀.
    Star,
    /// Consecutive pieces overlap.
    Chain,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StarDecomposition<T> {
    pub lattice: Lattice<T>,
    pub pieces: Vec<Piece<T>>,
    pub shape: DecompositionShape,
    /// l bounding diam/R of every piece and |G_k|/|G_k ∩ G₀| (|G_j ∩ G_{j+1}| for chains).
    pub shape_constant: T,
}

/// Per-piece sources with their diagnostics.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SplitSource<T> {
    /// Lattice-length arrays, zero outside the piece.
    pub pieces: Vec<Vec<T>>,
    pub means: Vec<f64>,
    /// ‖f_k‖_q / ‖f‖_q.
    pub norm_ratios: Vec<f64>,
    pub q: f64,
}

impl<T: Real> StarDecomposition<T> {
    pub fn new(lattice: Lattice<T>, rects: Vec<Rect<T>>, shape: DecompositionShape) -> Result<Self> {
        let pieces: Vec<Piece<T>> = rects.into_iter().map(Piece::from_rect).collect();
        let mut d = StarDecomposition { lattice, pieces, shape, shape_constant: T::zero() };
        d.shape_constant = d.measure_shape()?;
        Ok(d)
    }

    pub fn mask(&self, k: usize) -> Vec<bool> {
        let r = self.pieces[k].rect;
        (0..self.lattice.cells()).map(|c| r.contains(self.lattice.center(c))).collect()
    }

    /// Cells of G = ⋃ G_k.
    pub fn union_mask(&self) -> Vec<bool> {
        let masks: Vec<Vec<bool>> = (0..self.pieces.len()).map(|k| self.mask(k)).collect();
        (0..self.lattice.cells()).map(|c| masks.iter().any(|m| m[c])).collect()
    }

    fn measure(&self, mask: &[bool]) -> T {
        let a = self.lattice.h * self.lattice.h;
        T::from_usize_(mask.iter().filter(|m| **m).count()) * a
    }

    fn measure_shape(&self) -> Result<T> {
        if self.pieces.is_empty() {
            return Err(Error::Decomposition("no pieces".into()));
        }
        let masks: Vec<Vec<bool>> = (0..self.pieces.len()).map(|k| self.mask(k)).collect();
        let mut l = T::zero();
        for (k, p) in self.pieces.iter().enumerate() {
            if !p.is_star_shaped(16) {
                return Err(Error::Decomposition(format!("piece {k} is not star-shaped about its ball")));
            }
            if masks[k].iter().all(|m| !m) {
                return Err(Error::Decomposition(format!("piece {k} covers no lattice cell")));
            }
            l = l.max(p.rect.diameter() / p.radius);
        }
        let both = |a: &[bool], b: &[bool]| a.iter().zip(b).map(|(x, y)| *x && *y).collect::<Vec<_>>();
        match self.shape {
            DecompositionShape::Star => {
                for k in 1..self.pieces.len() {
                    let ov = self.measure(&both(&masks[0], &masks[k]));
                    if ov == T::zero() {
                        return Err(Error::Decomposition(format!("piece {k} does not overlap G₀")));
                    }
                    l = l.max(self.measure(&masks[k]) / ov);
                    for j in (k + 1)..self.pieces.len() {
                        if self.measure(&both(&masks[j], &masks[k])) > T::zero() {
                            return Err(Error::Decomposition(format!("micro pieces {j} and {k} intersect")));
                        }
                    }
                }
            }
            DecompositionShape::Chain => {
                for j in 0..self.pieces.len().saturating_sub(1) {
                    let ov = self.measure(&both(&masks[j], &masks[j + 1]));
                    if ov == T::zero() {
                        return Err(Error::Decomposition(format!("chain pieces {j} and {} do not overlap", j + 1)));
                    }
                    l = l.max(self.measure(&masks[j]) / ov);
                }
            }
        }
        Ok(l)
    }
}

fn lq_norm<T: Real>(f: &[T], mask: Option<&[bool]>, h: T, q: f64) -> f64 {
    let a = (h * h).to_f64_();
    let s: f64 = f
        .iter()
        .enumerate()
        .filter(|(c, _)| mask.map_or(true, |m| m[*c]))
        .map(|(_, v)| v.to_f64_().abs().powf(q))
        .sum();
    (s * a).powf(1.0 / q)
}

fn check_mean_zero<T: Real>(f: &[T], h: T) -> Result<()> {
    let a = h * h;
    let total: T = f.iter().fold(T::zero(), |s, v| s + *v * a);
    let scale: T = f.iter().fold(T::zero(), |s, v| s + v.abs() * a);
    if total.abs() > T::lit(1e-12) * (scale + T::min_positive_value()) {
        return Err(Error::Compatibility(format!("source mean {:e} is not zero", total.to_f64_())));
    }
    Ok(())
}

fn diagnostics<T: Real>(d: &StarDecomposition<T>, f: &[T], pieces: Vec<Vec<T>>, q: f64) -> SplitSource<T> {
    let h = d.lattice.h;
    let a = h * h;
    let total = lq_norm(f, None, h, q);
    let means = pieces.iter().map(|p| p.iter().fold(T::zero(), |s, v| s + *v * a).to_f64_()).collect();
    let norm_ratios = pieces
        .iter()
        .map(|p| if total > 0.0 { lq_norm(p, None, h, q) / total } else { 0.0 })
        .collect();
    SplitSource { pieces, means, norm_ratios, q }
}

/// Splits a mean-zero source over a star decomposition: f_k = f on G_k ∖ G₀ and
/// f − a_k on G_k ∩ G₀ with a_k = ∫_{G_k} f / |G_k ∩ G₀|, and f₀ = f − Σ f_k.
pub fn split_source_star<T: Real>(d: &StarDecomposition<T>, f: &[T], q: f64) -> Result<SplitSource<T>> {
    if d.shape != DecompositionShape::Star {
        return Err(Error::Decomposition("star split needs a star decomposition".into()));
    }
    if f.len() != d.lattice.cells() {
        return Err(Error::Incompatible("source length differs from the lattice".into()));
    }
    check_mean_zero(f, d.lattice.h)?;
    let a = d.lattice.h * d.lattice.h;
    let g0 = d.mask(0);
    let mut pieces = vec![vec![T::zero(); f.len()]; d.pieces.len()];
    for k in 1..d.pieces.len() {
        let gk = d.mask(k);
        let integral = (0..f.len()).filter(|c| gk[*c]).fold(T::zero(), |s, c| s + f[c] * a);
        let overlap = T::from_usize_((0..f.len()).filter(|c| gk[*c] && g0[*c]).count()) * a;
        if overlap == T::zero() {
            return Err(Error::Decomposition(format!("piece {k} does not overlap G₀")));
        }
        let ak = integral / overlap;
        for c in 0..f.len() {
            if gk[c] {
                pieces[k][c] = if g0[c] { f[c] - ak } else { f[c] };
            }
        }
    }
    for c in 0..f.len() {
        let rest = (1..d.pieces.len()).fold(T::zero(), |s, k| s + pieces[k][c]);
        pieces[0][c] = f[c] - rest;
    }
    Ok(diagnostics(d, f, pieces, q))
}

/// Recursive chain split with a_j = ∫_{G⁽¹⁾∪…∪G⁽ʲ⁾} f / |(G⁽ʲ⁾ ∩ G⁽ʲ⁺¹⁾) ∖ ⋃_{i<j} G⁽ⁱ⁾|.
pub fn split_source_chain<T: Real>(d: &StarDecomposition<T>, f: &[T], q: f64) -> Result<SplitSource<T>> {
    if d.shape != DecompositionShape::Chain {
        return Err(Error::Decomposition("chain split needs a chain decomposition".into()));
    }
    if f.len() != d.lattice.cells() {
        return Err(Error::Incompatible("source length differs from the lattice".into()));
    }
    check_mean_zero(f, d.lattice.h)?;
    let n = d.pieces.len();
    let cells = f.len();
    let a = d.lattice.h * d.lattice.h;
    let masks: Vec<Vec<bool>> = (0..n).map(|k| d.mask(k)).collect();
    // first[c]: index of the first piece containing c
    let first: Vec<Option<usize>> = (0..cells).map(|c| (0..n).find(|k| masks[*k][c])).collect();
    let mut coeff = vec![T::zero(); n];
    for j in 0..n.saturating_sub(1) {
        let integral = (0..cells).filter(|c| first[*c].is_some_and(|k| k <= j)).fold(T::zero(), |s, c| s + f[c] * a);
        let fresh = (0..cells).filter(|c| masks[j][*c] && masks[j + 1][*c] && first[*c] == Some(j)).count();
        if fresh == 0 {
            return Err(Error::Decomposition(format!("overlap of chain pieces {j} and {} is empty", j + 1)));
        }
        coeff[j] = integral / (T::from_usize_(fresh) * a);
    }
    let mut pieces = vec![vec![T::zero(); cells]; n];
    for j in 0..n {
        for c in 0..cells {
            if !masks[j][c] {
                continue;
            }
            let earliest = first[c].unwrap();
            pieces[j][c] = if j >= 2 && earliest + 2 <= j {
                T::zero()
            } else if j >= 1 && earliest == j - 1 {
                coeff[j - 1]
            } else if j + 1 < n && masks[j + 1][c] {
                f[c] - coeff[j]
            } else {
                f[c]
            };
        }
    }
    Ok(diagnostics(d, f, pieces, q))
}

/// MAC solution of div u = f on a cell set with u = 0 on its boundary.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DivergenceSolution<T> {
    /// Face values on the whole lattice (zero off the cell set).
    pub velocity: Vec<T>,
    pub grad_norm: f64,
    pub source_norm: f64,
    /// ‖∇u‖₂ / ‖f‖₂ (0 for a zero source).
    pub ratio: f64,
    pub divergence_residual: f64,
    pub iterations: usize,
}

/// Interior faces of a cell set and the Dirichlet energy Σ |Δu|² on it.
struct FaceSystem {
    index: Vec<usize>,
    faces: Vec<usize>,
}

fn face_system<T: Real>(lat: &Lattice<T>, mask: &[bool]) -> FaceSystem {
    let active = |i: isize, j: isize| {
        i >= 0 && j >= 0 && (i as usize) < lat.nx && (j as usize) < lat.ny && mask[lat.cell(i as usize, j as usize)]
    };
    let mut index = vec![usize::MAX; lat.faces()];
    let mut faces = Vec::new();
    for j in 0..lat.ny {
        for i in 1..lat.nx {
            if active(i as isize - 1, j as isize) && active(i as isize, j as isize) {
                index[lat.xface(i, j)] = faces.len();
                faces.push(lat.xface(i, j));
            }
        }
    }
    for j in 1..lat.ny {
        for i in 0..lat.nx {
            if active(i as isize, j as isize - 1) && active(i as isize, j as isize) {
                index[lat.yface(i, j)] = faces.len();
                faces.push(lat.yface(i, j));
            }
        }
    }
    FaceSystem { index, faces }
}

/// Edge pairs of the face-velocity energy: (a, Some(b), 1) between unknowns, (a, None, w)
/// towards a wall value 0 at distance h (w = 1) or h/2 (w = 2).
fn energy_edges<T: Real>(lat: &Lattice<T>, mask: &[bool], fs: &FaceSystem) -> Vec<(usize, Option<usize>, f64)> {
    let active = |i: isize, j: isize| {
        i >= 0 && j >= 0 && (i as usize) < lat.nx && (j as usize) < lat.ny && mask[lat.cell(i as usize, j as usize)]
    };
    let mut edges = Vec::new();
    let nx = lat.nx as isize;
    let ny = lat.ny as isize;
    for (a, &f) in fs.faces.iter().enumerate() {
        let xnormal = f < (lat.nx + 1) * lat.ny;
        let (i, j) = if xnormal {
            ((f % (lat.nx + 1)) as isize, (f / (lat.nx + 1)) as isize)
        } else {
            let g = f - (lat.nx + 1) * lat.ny;
            ((g % lat.nx) as isize, (g / lat.nx) as isize)
        };
        // neighbours along the four lattice directions; each pair visited once from the lower index
        for (di, dj) in [(1isize, 0isize), (-1, 0), (0, 1), (0, -1)] {
            let (ni, nj) = (i + di, j + dj);
            let along = if xnormal { di != 0 } else { dj != 0 };
            let inside_lattice = if xnormal {
                ni >= 0 && ni <= nx && nj >= 0 && nj < ny
            } else {
                ni >= 0 && ni < nx && nj >= 0 && nj <= ny
            };
            let neighbour = if inside_lattice {
                let g = if xnormal { lat.xface(ni as usize, nj as usize) } else { lat.yface(ni as usize, nj as usize) };
                fs.index[g]
            } else {
                usize::MAX
            };
            if neighbour != usize::MAX {
                if neighbour > a {
                    edges.push((a, Some(neighbour), 1.0));
                }
                continue;
            }
            if along {
                // the next face in the normal direction is a boundary face with u = 0
                edges.push((a, None, 1.0));
            } else {
                // cells on both sides of the neighbouring face row
                let (c1, c2) = if xnormal { ((ni - 1, nj), (ni, nj)) } else { ((ni, nj - 1), (ni, nj)) };
                let n_active = active(c1.0, c1.1) as usize + active(c2.0, c2.1) as usize;
                edges.push((a, None, if n_active == 0 { 2.0 } else { 1.0 }));
            }
        }
    }
    edges
}

fn divergence_rows<T: Real>(lat: &Lattice<T>, mask: &[bool], fs: &FaceSystem, cells: &[usize]) -> Triplets<T> {
    let _ = mask;
    let h = lat.h;
    let mut b = Triplets::new(cells.len(), fs.faces.len());
    for (row, &c) in cells.iter().enumerate() {
        let (i, j) = (c % lat.nx, c / lat.nx);
        for (g, s) in [
            (lat.xface(i + 1, j), T::one()),
            (lat.xface(i, j), -T::one()),
            (lat.yface(i, j + 1), T::one()),
            (lat.yface(i, j), -T::one()),
        ] {
            let k = fs.index[g];
            if k != usize::MAX {
                b.push(row, k, s * h);
            }
        }
    }
    b
}

/// Dirichlet energy ‖∇u‖₂² of a lattice face field restricted to a cell set.
pub fn grad_norm_sq<T: Real>(lat: &Lattice<T>, mask: &[bool], velocity: &[T]) -> f64 {
    let fs = face_system(lat, mask);
    let mut s = 0.0;
    for (a, b, w) in energy_edges(lat, mask, &fs) {
        let ua = velocity[fs.faces[a]].to_f64_();
        let ub = b.map_or(0.0, |b| velocity[fs.faces[b]].to_f64_());
        s += w * (ua - ub) * (ua - ub);
    }
    s
}

/// Largest |div u − f| over a cell set.
pub fn divergence_error<T: Real>(lat: &Lattice<T>, mask: &[bool], velocity: &[T], f: &[T]) -> f64 {
    let h = lat.h;
    let mut worst = 0.0f64;
    for c in 0..lat.cells() {
        if !mask[c] {
            continue;
        }
        let (i, j) = (c % lat.nx, c / lat.nx);
        let div = (velocity[lat.xface(i + 1, j)] - velocity[lat.xface(i, j)] + velocity[lat.yface(i, j + 1)]
            - velocity[lat.yface(i, j)])
            / h;
        worst = worst.max((div - f[c]).abs().to_f64_());
    }
    worst
}

/// Minimal-energy solution of div u = f on the cell set, u = 0 on its boundary.
pub fn divergence_solve<T: Real>(lat: &Lattice<T>, mask: &[bool], f: &[T]) -> Result<DivergenceSolution<T>> {
    let cells: Vec<usize> = (0..lat.cells()).filter(|c| mask[*c]).collect();
    if f.iter().enumerate().any(|(c, v)| !mask[c] && *v != T::zero()) {
        return Err(Error::Incompatible("source is supported outside the piece".into()));
    }
    let local: Vec<T> = cells.iter().map(|c| f[*c]).collect();
    check_mean_zero(&local, lat.h)?;
    let source_norm = lq_norm(f, Some(mask), lat.h, 2.0);
    if local.iter().all(|v| *v == T::zero()) {
        return Ok(DivergenceSolution {
            velocity: vec![T::zero(); lat.faces()],
            grad_norm: 0.0,
            source_norm,
            ratio: 0.0,
            divergence_residual: 0.0,
            iterations: 0,
        });
    }
    let fs = face_system(lat, mask);
    let mut k = Triplets::new(fs.faces.len(), fs.faces.len());
    for (a, b, w) in energy_edges(lat, mask, &fs) {
        let w = T::lit(w);
        k.push(a, a, w);
        if let Some(b) = b {
            k.push(b, b, w);
            k.push(a, b, -w);
            k.push(b, a, -w);
        }
    }
    let b = divergence_rows(lat, mask, &fs, &cells);
    let area = lat.h * lat.h;
    let g: Vec<T> = local.iter().map(|v| *v * area).collect();
    let mass = vec![Mat::diag(&[area]); cells.len()];
    let solver = SaddleSolver::new(k.to_csr(), b.to_csr(), mass)?.with_nullspace(vec![T::one(); cells.len()], vec![area; cells.len()]);
    let mut solver = solver;
    solver.tol = T::lit(1e-13);
    let sol = solver.solve(&vec![T::zero(); fs.faces.len()], &g)?;
    let mut velocity = vec![T::zero(); lat.faces()];
    for (a, face) in fs.faces.iter().enumerate() {
        velocity[*face] = sol.velocity[a];
    }
    let grad_norm = grad_norm_sq(lat, mask, &velocity).sqrt();
    Ok(DivergenceSolution {
        divergence_residual: divergence_error(lat, mask, &velocity, f),
        ratio: if source_norm > 0.0 { grad_norm / source_norm } else { 0.0 },
        velocity,
        grad_norm,
        source_norm,
        iterations: sol.stats.iterations,
    })
}

/// Unit square G₀ with m = 1/(2ε) micro squares of side ε on its top edge, each
/// sunk ε/3 into G₀, on a lattice of spacing h (ε/6 must be a multiple of h).
pub fn comb_decomposition<T: Real>(eps: T, h: T) -> Result<StarDecomposition<T>> {
    let per = (T::one() / (T::lit(2.0) * eps)).round();
    if (per * T::lit(2.0) * eps - T::one()).abs() > T::lit(1e-9) {
        return Err(Error::Decomposition("1/(2ε) must be an integer".into()));
    }
    let steps = eps / (T::lit(6.0) * h);
    if (steps - steps.round()).abs() > T::lit(1e-9) {
        return Err(Error::Decomposition("ε/6 must be a multiple of the lattice spacing".into()));
    }
    let m = per.to_usize().unwrap_or(0);
    let top = T::one() + T::lit(2.0) * eps / T::lit(3.0);
    let lattice = Lattice {
        nx: (T::one() / h).round().to_usize().unwrap_or(0),
        ny: (top / h).round().to_usize().unwrap_or(0),
        h,
    };
    let mut rects = vec![Rect { x0: T::zero(), y0: T::zero(), x1: T::one(), y1: T::one() }];
    for k in 0..m {
        let x0 = (T::lit(2.0) * T::from_usize_(k) + T::lit(0.5)) * eps;
        rects.push(Rect { x0, y0: T::one() - eps / T::lit(3.0), x1: x0 + eps, y1: top });
    }
    StarDecomposition::new(lattice, rects, DecompositionShape::Star)
}

/// Mean-zero random source on the cells of G: uniform cell noise plus a few random modes.
pub fn random_source<T: Real>(d: &StarDecomposition<T>, seed: u64) -> Vec<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = d.union_mask();
    let modes: Vec<(f64, f64, f64, f64)> = (0..6)
        .map(|_| (rng.random_range(-1.0..1.0), rng.random_range(1.0..6.0), rng.random_range(1.0..6.0), rng.random_range(0.0..6.3)))
        .collect();
    let mut f: Vec<T> = (0..d.lattice.cells())
        .map(|c| {
            if !g[c] {
                return T::zero();
            }
            let p = d.lattice.center(c);
            let (x, y) = (p[0].to_f64_(), p[1].to_f64_());
            let smooth: f64 = modes.iter().map(|(a, kx, ky, ph)| a * (kx * x + ky * y + ph).sin()).sum();
            T::lit(smooth + rng.random_range(-1.0..1.0))
        })
        .collect();
    let n = g.iter().filter(|v| **v).count();
    let mean = f.iter().fold(T::zero(), |s, v| s + *v) / T::from_usize_(n);
    for c in 0..f.len() {
        if g[c] {
            f[c] = f[c] - mean;
        }
    }
    f
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StudyRow {
    pub eps: f64,
    pub m: usize,
    pub pieces: usize,
    pub shape_constant: f64,
    pub global_ratio: f64,
    pub max_piece_ratio: f64,
    /// c₀ (2c̄(1 + c̄ + l^{q−1}))^{1/q} with c₀ the largest measured piece ratio and c̄ = 2^{q−1}.
    pub bound_envelope: f64,
    pub max_split_mean: f64,
    pub norm_bound_ok: bool,
    pub divergence_residual: f64,
}

/// c̄(q) = 2^{q−1} in (a + b)^q ≤ c̄(q)(a^q + b^q).
pub fn power_mean_constant(q: f64) -> f64 {
    2f64.powf(q - 1.0)
}

/// Global constant ‖∇u‖₂/‖f‖₂ of the assembled solution u = Σ u_k across an ε sweep.
pub fn constant_study<T: Real>(eps_values: &[T], seed: u64, q: f64) -> Result<Vec<StudyRow>> {
    let eps_min = eps_values.iter().fold(T::infinity(), |m, e| m.min(*e));
    if eps_values.is_empty() || !(eps_min > T::zero()) {
        return Err(Error::OutOfRange("ε values must be positive".into()));
    }
    let h = eps_min / T::lit(6.0);
    eps_values
        .iter()
        .enumerate()
        .map(|(i, eps)| {
            let d = comb_decomposition(*eps, h)?;
            let f = random_source(&d, seed.wrapping_add(i as u64));
            let split = split_source_star(&d, &f, q)?;
            let solves = (0..d.pieces.len())
                .into_par_iter()
                .map(|k| divergence_solve(&d.lattice, &d.mask(k), &split.pieces[k]))
                .collect::<Result<Vec<_>>>()?;
            let mut u = vec![T::zero(); d.lattice.faces()];
            for s in &solves {
                for (a, v) in u.iter_mut().zip(&s.velocity) {
                    *a = *a + *v;
                }
            }
            let g = d.union_mask();
            let grad = grad_norm_sq(&d.lattice, &g, &u).sqrt();
            let fnorm = lq_norm(&f, Some(&g), h, 2.0);
            let cbar = power_mean_constant(q);
            let l = d.shape_constant.to_f64_();
            let total_q = lq_norm(&f, None, h, q).powf(q);
            let norm_bound_ok = (1..d.pieces.len()).all(|k| {
                let mk = d.mask(k);
                let fk = lq_norm(&split.pieces[k], None, h, q).powf(q);
                let local = lq_norm(&f, Some(&mk), h, q).powf(q);
                fk <= cbar * (1.0 + l.powf(q - 1.0)) * local * (1.0 + 1e-12) + 1e-300 * total_q
            });
            let max_piece = solves.iter().map(|s| s.ratio).fold(0.0, f64::max);
            Ok(StudyRow {
                eps: eps.to_f64_(),
                m: d.pieces.len() - 1,
                pieces: d.pieces.len(),
                shape_constant: l,
                global_ratio: grad / fnorm,
                max_piece_ratio: max_piece,
                bound_envelope: max_piece * (2.0 * cbar * (1.0 + cbar + l.powf(q - 1.0))).powf(1.0 / q),
                max_split_mean: split.means.iter().map(|v| v.abs()).fold(0.0, f64::max),
                norm_bound_ok,
                divergence_residual: divergence_error(&d.lattice, &g, &u, &f),
            })
        })
        .collect()
}
