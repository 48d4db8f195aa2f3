//! Macro-scale Stokes problems on the rough annulus 1 − εγ < r < 2 and its smooth part.
//!
//! Γ is the circle r = inner_radius. The tangent is τ = e_θ and the cell normal is
//! ν = −e_r, pointing from Ω into the roughness.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cell::{CellProblemSpec, CellResolution, CellSolution, CellSystem};
use crate::error::{Error, Result};
use crate::fem::{gauss, polar, solve_stokes, AnnulusMesh, FeSolution, InnerCondition};
use crate::geometry::{build_rough_annulus, metric_matrices, AnnulusResolution, ChartKind, RoughAnnulus, RoughnessProfile, SurfacePatch};
use crate::linalg::SaddleMethod;
use crate::real::Real;
use crate::slip::SlipField;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Rough,
    Dirichlet,
    Navier,
    Corrector,
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rough" => Ok(Variant::Rough),
            "dirichlet" => Ok(Variant::Dirichlet),
            "navier" => Ok(Variant::Navier),
            "corrector" => Ok(Variant::Corrector),
            _ => Err(Error::Config(format!("unknown variant '{s}'"))),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Variant::Rough => "rough",
            Variant::Dirichlet => "dirichlet",
            Variant::Navier => "navier",
            Variant::Corrector => "corrector",
        };
        f.write_str(name)
    }
}

/// Rotation-invariant body forces (required by the sector reduction).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BodyForce<T> {
    None,
    /// f = amplitude · e_θ.
    Swirl { amplitude: T },
}

/// Velocity ψ on the outer circle Γ₁ in polar components.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OuterData<T> {
    pub tangential: T,
    pub normal: T,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MacroProblemSpec<T> {
    pub inner_radius: T,
    pub outer_radius: T,
    pub eps: T,
    pub profile: RoughnessProfile<T>,
    pub resolution: AnnulusResolution<T>,
    pub body_force: BodyForce<T>,
    pub boundary: OuterData<T>,
    pub variant: Variant,
    /// Cell grid used by the corrector variant.
    pub cell_resolution: CellResolution,
    pub method: SaddleMethod,
    pub tol: T,
}

impl<T: Real> MacroProblemSpec<T> {
    /// Unit annulus 1 < r < 2 with the outer wall turning at unit speed.
    pub fn new(eps: T, profile: RoughnessProfile<T>, variant: Variant) -> Self {
        MacroProblemSpec {
            inner_radius: T::one(),
            outer_radius: T::lit(2.0),
            eps,
            profile,
            resolution: AnnulusResolution::default(),
            body_force: BodyForce::None,
            boundary: OuterData { tangential: T::one(), normal: T::zero() },
            variant,
            cell_resolution: CellResolution::new(32, 64),
            method: SaddleMethod::SchurCg,
            tol: T::lit(1e-12),
        }
    }

    pub fn with_variant(&self, variant: Variant) -> Self {
        MacroProblemSpec { variant, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        // ∫_{Γ₁} ψ·ν = 2πR ψ_r
        if self.boundary.normal != T::zero() {
            return Err(Error::Compatibility(format!(
                "outer data carries net flux 2πR·{:e}",
                self.boundary.normal.to_f64_()
            )));
        }
        if self.profile.depends_on_base_point() && self.eps > T::zero() && self.resolution.sector_periods != 0 {
            return Err(Error::Incompatible(
                "a modulated profile breaks rotation symmetry; set sector_periods = 0".into(),
            ));
        }
        self.profile.validate()
    }

    pub fn annulus(&self) -> Result<RoughAnnulus<T>> {
        build_rough_annulus(self.inner_radius, self.outer_radius, self.eps, &self.profile, &self.resolution)
    }

    /// Chart of Γ with the cell normal pointing into the roughness.
    pub fn gamma_patch(&self) -> SurfacePatch<T> {
        SurfacePatch::new(
            ChartKind::Circle { radius: self.inner_radius, period: T::one(), inward: true },
            vec![T::zero()],
            vec![T::one()],
            self.inner_radius / T::lit(2.0),
            0,
        )
    }

    fn force(&self) -> Option<Box<dyn Fn([T; 2]) -> [T; 2] + Sync>> {
        match self.body_force {
            BodyForce::None => None,
            BodyForce::Swirl { amplitude } => Some(Box::new(move |x: [T; 2]| {
                let (_, et) = polar(x[1].atan2(x[0]));
                [amplitude * et[0], amplitude * et[1]]
            })),
        }
    }
}

/// Exact azimuthal Couette speed between a fixed inner and a turning outer circle.
pub fn couette_profile<T: Real>(r: T, inner: T, outer: T, speed: T) -> T {
    let a = speed * outer / (outer * outer - inner * inner);
    a * (r - inner * inner / r)
}

/// Traces of the Dirichlet solution on Γ at the Γ nodes of one sector.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TractionData<T> {
    pub s: Vec<T>,
    /// χ₁ = ∂u_τ/∂ν.
    pub shear: Vec<T>,
    /// χ₂ = −p.
    pub pressure: Vec<T>,
    pub span: T,
}

impl<T: Real> TractionData<T> {
    fn interpolate(&self, values: &[T], s: T) -> T {
        let n = values.len();
        let ne = n / 2;
        let h = self.span / T::from_usize_(ne);
        let t = (s / self.span - (s / self.span).floor()) * self.span / h;
        let col = (t.floor().to_usize().unwrap_or(0)).min(ne - 1);
        let xi = T::lit(2.0) * (t - T::from_usize_(col)) - T::one();
        let half = T::lit(0.5);
        let w = [half * xi * (xi - T::one()), T::one() - xi * xi, half * xi * (xi + T::one())];
        (0..3).fold(T::zero(), |acc, a| acc + w[a] * values[(2 * col + a) % n])
    }

    /// Constant extension along the normal: the value at the angle of x.
    pub fn at(&self, s: T) -> [T; 2] {
        [self.interpolate(&self.shear, s), self.interpolate(&self.pressure, s)]
    }
}

/// Correctors built from the Dirichlet solution and the cell solutions.
#[derive(Clone, Debug)]
pub struct CorrectorBundle<T: Real> {
    pub eps: T,
    pub inner_radius: T,
    pub traction: TractionData<T>,
    /// Cell solutions for λ = τ and λ = ν at the base point s = 0.
    pub tangential: Arc<CellSolution<T>>,
    pub normal: Arc<CellSolution<T>>,
    /// c^bl_ττ.
    pub slip: T,
    /// η from the auxiliary smooth problem (η̄^ε = εη on Ω).
    pub auxiliary: FeSolution<T>,
    pub geometry: Arc<AnnulusMesh<T>>,
    /// Base-point frame (τ₀, ν₀) used by the cell solves.
    base_frame: [[T; 2]; 2],
}

fn dot2<T: Real>(a: [T; 2], b: [T; 2]) -> T {
    a[0] * b[0] + a[1] * b[1]
}

impl<T: Real> CorrectorBundle<T> {
    fn angle_s(xy: [T; 2]) -> T {
        xy[1].atan2(xy[0]) / T::TAU()
    }

    /// β̄ = β − c^bl for λ = τ and λ = ν, as physical vectors at x.
    fn fluctuations(&self, xy: [T; 2]) -> [[T; 2]; 2] {
        let r = (xy[0] * xy[0] + xy[1] * xy[1]).sqrt();
        let theta = xy[1].atan2(xy[0]);
        let s = theta / T::TAU();
        let y_lat = [s / self.eps];
        let y_d = (self.inner_radius - r) / self.eps;
        let (er, et) = polar(theta);
        let mut out = [[T::zero(); 2]; 2];
        for (l, sol) in [&self.tangential, &self.normal].into_iter().enumerate() {
            let v = sol.evaluate(&y_lat, y_d);
            let c = &sol.bl_constant;
            let b = [v[0] - c[0], v[1] - c[1]];
            let bt = dot2(b, self.base_frame[0]);
            let bn = dot2(b, self.base_frame[1]);
            out[l] = [bt * et[0] - bn * er[0], bt * et[1] - bn * er[1]];
        }
        out
    }

    /// Oscillating corrector η^ε(x) = ε Σ_l β̄^l χ_l.
    pub fn oscillating(&self, xy: [T; 2]) -> [T; 2] {
        if self.eps == T::zero() {
            return [T::zero(); 2];
        }
        let chi = self.traction.at(Self::angle_s(xy));
        let b = self.fluctuations(xy);
        [
            self.eps * (b[0][0] * chi[0] + b[1][0] * chi[1]),
            self.eps * (b[0][1] * chi[0] + b[1][1] * chi[1]),
        ]
    }

    /// ∇η^ε by central differences in x.
    pub fn oscillating_grad(&self, xy: [T; 2]) -> [[T; 2]; 2] {
        let d = self.eps * T::lit(1e-5);
        let mut g = [[T::zero(); 2]; 2];
        for j in 0..2 {
            let mut a = xy;
            let mut b = xy;
            a[j] = a[j] + d;
            b[j] = b[j] - d;
            let (fa, fb) = (self.oscillating(a), self.oscillating(b));
            for i in 0..2 {
                g[i][j] = (fa[i] - fb[i]) / (d + d);
            }
        }
        g
    }

    /// η̄^ε: εη on Ω and ε c χ₁ τ in the rough layer.
    pub fn non_oscillating(&self, col: usize, ring: isize, xi: T, eta: T) -> ([T; 2], [[T; 2]; 2]) {
        if ring >= 0 {
            let e = self.auxiliary.mesh.element_at(col, ring).expect("matching element");
            let (_, u, g) = self.auxiliary.eval(e, xi, eta);
            return (scale(u, self.eps), scale2(g, self.eps));
        }
        let e = self.geometry.element_at(col, ring).expect("layer element");
        let xy = self.geometry.elements[e].point(xi, eta).xy;
        let f = |p: [T; 2]| {
            let th = p[1].atan2(p[0]);
            let (_, et) = polar(th);
            let v = self.eps * self.slip * self.traction.at(th / T::TAU())[0];
            [v * et[0], v * et[1]]
        };
        let d = self.eps * T::lit(1e-5);
        let mut g = [[T::zero(); 2]; 2];
        for j in 0..2 {
            let (mut a, mut b) = (xy, xy);
            a[j] = a[j] + d;
            b[j] = b[j] - d;
            let (fa, fb) = (f(a), f(b));
            for i in 0..2 {
                g[i][j] = (fa[i] - fb[i]) / (d + d);
            }
        }
        (f(xy), g)
    }
}

fn scale<T: Real>(u: [T; 2], s: T) -> [T; 2] {
    [u[0] * s, u[1] * s]
}

fn scale2<T: Real>(g: [[T; 2]; 2], s: T) -> [[T; 2]; 2] {
    [scale(g[0], s), scale(g[1], s)]
}

#[derive(Clone, Debug)]
pub struct MacroSolution<T: Real> {
    pub variant: Variant,
    pub eps: T,
    pub annulus: RoughAnnulus<T>,
    /// Ω^ε layout; its Ω elements coincide with those of every smooth mesh.
    pub geometry: Arc<AnnulusMesh<T>>,
    /// The variant's own solve (the Dirichlet solve for the corrector variant).
    pub fe: FeSolution<T>,
    pub correctors: Option<CorrectorBundle<T>>,
    pub divergence_residual: f64,
    pub wall_time: f64,
}

/// Where a field is defined.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Omega,
    OmegaEps,
}

/// A velocity field that can be sampled on the shared annulus layout.
pub trait MacroField<T: Real>: Sync {
    fn geometry(&self) -> &Arc<AnnulusMesh<T>>;
    fn region(&self) -> Region;
    /// Velocity and gradient at reference point (ξ, η) of element (col, ring).
    fn sample(&self, col: usize, ring: isize, xi: T, eta: T) -> Option<([T; 2], [[T; 2]; 2])>;
}

impl<T: Real> MacroField<T> for MacroSolution<T> {
    fn geometry(&self) -> &Arc<AnnulusMesh<T>> {
        &self.geometry
    }

    fn region(&self) -> Region {
        match self.variant {
            Variant::Navier => Region::Omega,
            _ => Region::OmegaEps,
        }
    }

    fn sample(&self, col: usize, ring: isize, xi: T, eta: T) -> Option<([T; 2], [[T; 2]; 2])> {
        let mut out = match self.fe.mesh.element_at(col, ring) {
            Some(e) => {
                let (_, u, g) = self.fe.eval(e, xi, eta);
                (u, g)
            }
            // the Dirichlet approximation ũ vanishes in the layer
            None if ring < 0 && matches!(self.variant, Variant::Dirichlet | Variant::Corrector) => {
                ([T::zero(); 2], [[T::zero(); 2]; 2])
            }
            None => return None,
        };
        if let Some(c) = &self.correctors {
            let (u, g) = c.non_oscillating(col, ring, xi, eta);
            let e = self.geometry.element_at(col, ring)?;
            let xy = self.geometry.elements[e].point(xi, eta).xy;
            let v = c.oscillating(xy);
            let gv = c.oscillating_grad(xy);
            for i in 0..2 {
                out.0[i] = out.0[i] + u[i] + v[i];
                for j in 0..2 {
                    out.1[i][j] = out.1[i][j] + g[i][j] + gv[i][j];
                }
            }
        }
        Some(out)
    }
}

/// Which part of a corrector bundle to expose as a field.
pub enum CorrectorPart<'a, T: Real> {
    Oscillating(&'a CorrectorBundle<T>),
    NonOscillating(&'a CorrectorBundle<T>),
}

impl<T: Real> MacroField<T> for CorrectorPart<'_, T> {
    fn geometry(&self) -> &Arc<AnnulusMesh<T>> {
        match self {
            CorrectorPart::Oscillating(c) | CorrectorPart::NonOscillating(c) => &c.geometry,
        }
    }

    fn region(&self) -> Region {
        Region::OmegaEps
    }

    fn sample(&self, col: usize, ring: isize, xi: T, eta: T) -> Option<([T; 2], [[T; 2]; 2])> {
        match self {
            CorrectorPart::Oscillating(c) => {
                let e = c.geometry.element_at(col, ring)?;
                let xy = c.geometry.elements[e].point(xi, eta).xy;
                Some((c.oscillating(xy), c.oscillating_grad(xy)))
            }
            CorrectorPart::NonOscillating(c) => Some(c.non_oscillating(col, ring, xi, eta)),
        }
    }
}

/// The zero field on a given layout.
pub struct ZeroField<T: Real>(pub Arc<AnnulusMesh<T>>);

impl<T: Real> MacroField<T> for ZeroField<T> {
    fn geometry(&self) -> &Arc<AnnulusMesh<T>> {
        &self.0
    }

    fn region(&self) -> Region {
        Region::OmegaEps
    }

    fn sample(&self, _: usize, _: isize, _: T, _: T) -> Option<([T; 2], [[T; 2]; 2])> {
        Some(([T::zero(); 2], [[T::zero(); 2]; 2]))
    }
}

/// Exact Couette flow u = v(r) e_θ sampled on a layout, for ε = 0 convergence checks.
pub struct CouetteField<T: Real> {
    pub mesh: Arc<AnnulusMesh<T>>,
    pub inner: T,
    pub outer: T,
    pub speed: T,
}

impl<T: Real> MacroField<T> for CouetteField<T> {
    fn geometry(&self) -> &Arc<AnnulusMesh<T>> {
        &self.mesh
    }

    fn region(&self) -> Region {
        Region::Omega
    }

    fn sample(&self, col: usize, ring: isize, xi: T, eta: T) -> Option<([T; 2], [[T; 2]; 2])> {
        let e = self.mesh.element_at(col, ring)?;
        let [x, y] = self.mesh.elements[e].point(xi, eta).xy;
        let r2 = x * x + y * y;
        let r = r2.sqrt();
        // u = g(r)(−y, x) with g = v/r
        let a = self.speed * self.outer / (self.outer * self.outer - self.inner * self.inner);
        let g = a * (T::one() - self.inner * self.inner / r2);
        let dg = T::lit(2.0) * a * self.inner * self.inner / (r2 * r);
        let dr = [x / r, y / r];
        let grad = [
            [-y * dg * dr[0], -y * dg * dr[1] - g],
            [x * dg * dr[0] + g, x * dg * dr[1]],
        ];
        Some(([-g * y, g * x], grad))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorNorms {
    pub l2: f64,
    pub h1_semi: f64,
    pub l1: f64,
    pub grad_l1: f64,
    /// ‖·‖_{L¹} + ‖∇·‖_{L¹}.
    pub w11: f64,
}

fn same_layout<T: Real>(a: &AnnulusMesh<T>, b: &AnnulusMesh<T>) -> bool {
    a.annulus.eps == b.annulus.eps
        && a.theta_elems == b.theta_elems
        && a.annulus.sector_span == b.annulus.sector_span
        && a.annulus.omega_radii == b.annulus.omega_radii
}

/// Norms of a − b over the region, with 4×4 Gauss quadrature on the shared layout and the
/// sector integrals scaled to the whole annulus.
pub fn error_norms<T: Real>(a: &dyn MacroField<T>, b: &dyn MacroField<T>, region: Region) -> Result<ErrorNorms> {
    let covers = |f: &dyn MacroField<T>| region == Region::Omega || f.region() == Region::OmegaEps;
    if !covers(a) || !covers(b) {
        return Err(Error::Incompatible("a field is not defined on the requested region".into()));
    }
    if !same_layout(a.geometry(), b.geometry()) {
        return Err(Error::Incompatible("fields live on different annulus layouts".into()));
    }
    let mesh = if a.geometry().layer_rings >= b.geometry().layer_rings { a.geometry() } else { b.geometry() };
    let g4 = gauss::<T>(4);
    let (mut l2, mut h1, mut l1, mut gl1) = (0.0, 0.0, 0.0, 0.0);
    for el in &mesh.elements {
        if region == Region::Omega && el.ring < 0 {
            continue;
        }
        for (x, wx) in &g4 {
            for (y, wy) in &g4 {
                let p = el.point(*x, *y);
                let w = (*wx * *wy * p.det).to_f64_();
                let missing = || Error::Incompatible(format!("no sample at element ({}, {})", el.col, el.ring));
                let (ua, ga) = a.sample(el.col, el.ring, *x, *y).ok_or_else(missing)?;
                let (ub, gb) = b.sample(el.col, el.ring, *x, *y).ok_or_else(missing)?;
                let du: Vec<f64> = (0..2).map(|i| (ua[i] - ub[i]).to_f64_()).collect();
                let dg: Vec<f64> = (0..4).map(|k| (ga[k / 2][k % 2] - gb[k / 2][k % 2]).to_f64_()).collect();
                let u2: f64 = du.iter().map(|v| v * v).sum();
                let g2: f64 = dg.iter().map(|v| v * v).sum();
                l2 += w * u2;
                h1 += w * g2;
                l1 += w * u2.sqrt();
                gl1 += w * g2.sqrt();
            }
        }
    }
    let k = mesh.annulus.sectors as f64;
    let n = ErrorNorms {
        l2: (k * l2).sqrt(),
        h1_semi: (k * h1).sqrt(),
        l1: k * l1,
        grad_l1: k * gl1,
        w11: k * (l1 + gl1),
    };
    Ok(n)
}

fn robin_coefficients<T: Real>(mesh: &AnnulusMesh<T>, slip: &SlipField<T>, eps: T) -> Result<Vec<Option<T>>> {
    if slip.dim() != 2 {
        return Err(Error::Incompatible("the macro problem needs a 2D slip field".into()));
    }
    let ne = mesh.theta_elems;
    let span = mesh.annulus.sector_span;
    let g3 = gauss::<T>(3);
    let mut out = Vec::with_capacity(3 * ne);
    for col in 0..ne {
        for (x, _) in &g3 {
            let s = span * (T::from_usize_(col) + (*x + T::one()) / T::lit(2.0)) / T::from_usize_(ne);
            let (_, tau) = polar(T::TAU() * s);
            let c = slip.tensor_at(s);
            let ctt = tau[0] * (c[(0, 0)] * tau[0] + c[(0, 1)] * tau[1]) + tau[1] * (c[(1, 0)] * tau[0] + c[(1, 1)] * tau[1]);
            if ctt == T::zero() || eps == T::zero() {
                out.push(None);
            } else if ctt < T::zero() {
                out.push(Some(T::one() / (eps * ctt.abs())));
            } else {
                return Err(Error::IllPosed(format!(
                    "slip coefficient {:e} at s = {} is not negative",
                    ctt.to_f64_(),
                    s.to_f64_()
                )));
            }
        }
    }
    Ok(out)
}

/// Solves one macro variant. `slip` is required for the Navier variant.
pub fn solve_macro<T: Real>(spec: &MacroProblemSpec<T>, slip: Option<&SlipField<T>>) -> Result<MacroSolution<T>> {
    spec.validate()?;
    let start = Instant::now();
    let annulus = spec.annulus()?;
    let geometry = Arc::new(AnnulusMesh::new(&annulus, true)?);
    let smooth = || -> Result<Arc<AnnulusMesh<T>>> { Ok(Arc::new(AnnulusMesh::new(&annulus, false)?)) };
    let force = spec.force();
    let force_ref = force.as_deref().map(|f| f as &(dyn Fn([T; 2]) -> [T; 2] + Sync));
    let solve = |mesh: &Arc<AnnulusMesh<T>>, inner: &InnerCondition<T>| {
        solve_stokes(mesh, inner, spec.boundary.tangential, spec.boundary.normal, force_ref, spec.method, spec.tol)
    };
    let (fe, correctors) = match spec.variant {
        Variant::Rough => (solve(&geometry, &InnerCondition::NoSlip)?, None),
        Variant::Dirichlet => (solve(&smooth()?, &InnerCondition::NoSlip)?, None),
        Variant::Navier => {
            let slip = slip.ok_or_else(|| Error::Incompatible("the Navier variant needs a slip field".into()))?;
            let mesh = smooth()?;
            let coef = robin_coefficients(&mesh, slip, spec.eps)?;
            (solve(&mesh, &InnerCondition::Navier(coef))?, None)
        }
        Variant::Corrector => {
            let fe = solve(&smooth()?, &InnerCondition::NoSlip)?;
            let bundle = build_correctors(spec, &fe, &geometry)?;
            (fe, Some(bundle))
        }
    };
    let divergence_residual = fe.divergence_residual;
    Ok(MacroSolution {
        variant: spec.variant,
        eps: spec.eps,
        annulus,
        geometry,
        fe,
        correctors,
        divergence_residual,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// Γ traces of a Dirichlet solution at the Γ nodes: (∂u_τ/∂ν, −p).
pub fn traction_data<T: Real>(fe: &FeSolution<T>) -> Result<TractionData<T>> {
    let mesh = &fe.mesh;
    let ne = mesh.theta_elems;
    let n = 2 * ne;
    let mut shear = vec![T::zero(); n];
    let mut pressure = vec![T::zero(); n];
    let mut count = vec![0usize; n];
    for col in 0..ne {
        let e = mesh.element_at(col, 0).ok_or_else(|| Error::Resolution("no element touches Γ".into()))?;
        for a in 0..3 {
            let xi = T::from_usize_(a) - T::one();
            let (xy, _, g) = fe.eval(e, xi, -T::one());
            let (er, et) = polar(mesh.elements[e].theta[a]);
            // ∂u_τ/∂ν with ν = −e_r
            let dr = (0..2).fold(T::zero(), |acc, i| acc + et[i] * (g[i][0] * er[0] + g[i][1] * er[1]));
            let k = (2 * col + a) % n;
            shear[k] = shear[k] - dr;
            pressure[k] = pressure[k] - fe.pressure_at(e, xy);
            count[k] += 1;
        }
    }
    for k in 0..n {
        let c = T::from_usize_(count[k]);
        shear[k] = shear[k] / c;
        pressure[k] = pressure[k] / c;
    }
    if shear.iter().chain(&pressure).any(|v| !v.is_finite()) {
        return Err(Error::Resolution("non-finite traction on Γ".into()));
    }
    let span = mesh.annulus.sector_span;
    let s = (0..n).map(|k| span * T::from_usize_(k) / T::from_usize_(n)).collect();
    Ok(TractionData { s, shear, pressure, span })
}

/// Builds η^ε and η̄^ε from a Dirichlet solution on Ω.
pub fn build_correctors<T: Real>(
    spec: &MacroProblemSpec<T>,
    dirichlet: &FeSolution<T>,
    geometry: &Arc<AnnulusMesh<T>>,
) -> Result<CorrectorBundle<T>> {
    if dirichlet.mesh.with_layer {
        return Err(Error::Incompatible("correctors start from a solve on the smooth domain".into()));
    }
    let traction = traction_data(dirichlet)?;
    let patch = spec.gamma_patch();
    let coeffs = metric_matrices(&patch, &[T::zero()])?;
    let frame = patch.tangent_frame(&[T::zero()]);
    let tau = [frame[0][0], frame[0][1]];
    let normal = patch.normal(&[T::zero()]);
    let nu = [normal[0], normal[1]];
    let mut cell = CellProblemSpec::new(coeffs, spec.profile.clone(), tau.to_vec(), spec.cell_resolution);
    cell.tol = T::lit(1e-11);
    let system = CellSystem::assemble(&cell)?;
    let tangential = Arc::new(system.solve(&tau)?);
    let normal = Arc::new(system.solve(&nu)?);
    let slip = dot2([tangential.bl_constant[0], tangential.bl_constant[1]], tau);

    // η_τ = c^bl ∂u_τ/∂ν on Γ, η = 0 on Γ₁
    let mesh = dirichlet.mesh.clone();
    let g: Vec<T> = traction.shear.iter().map(|v| slip * *v).collect();
    let auxiliary = solve_stokes(&mesh, &InnerCondition::Tangential(g), T::zero(), T::zero(), None, spec.method, spec.tol)?;
    Ok(CorrectorBundle {
        eps: spec.eps,
        inner_radius: spec.inner_radius,
        traction,
        tangential,
        normal,
        slip,
        auxiliary,
        geometry: geometry.clone(),
        base_frame: [tau, nu],
    })
}

impl<T: Real> MacroSolution<T> {
    /// Largest nodal deviation of u_θ from the Couette profile, and of u_r from zero.
    pub fn couette_nodal_error(&self, speed: T) -> f64 {
        let a = &self.annulus;
        let mut worst = 0.0f64;
        for n in 0..self.fe.mesh.node_count {
            let xy = self.fe.mesh.node_xy[n];
            let r = (xy[0] * xy[0] + xy[1] * xy[1]).sqrt();
            let exact = couette_profile(r, a.inner_radius, a.outer_radius, speed);
            let u = self.fe.nodal(n);
            worst = worst.max((u[1] - exact).abs().to_f64_()).max(u[0].abs().to_f64_());
        }
        worst
    }

    /// Element centres with (x, y, u_x, u_y, p).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y,u,v,p\n");
        for (e, _) in self.fe.mesh.elements.iter().enumerate() {
            let (xy, u, _) = self.fe.eval(e, T::zero(), T::zero());
            let p = self.fe.pressure_at(e, xy);
            out.push_str(&format!(
                "{:.10e},{:.10e},{:.10e},{:.10e},{:.10e}\n",
                xy[0].to_f64_(),
                xy[1].to_f64_(),
                u[0].to_f64_(),
                u[1].to_f64_(),
                p.to_f64_()
            ));
        }
        out
    }

    pub fn summary(&self) -> MacroSummary {
        MacroSummary {
            variant: self.variant,
            eps: self.eps.to_f64_(),
            sectors: self.annulus.sectors,
            elements: self.fe.mesh.elements.len(),
            velocity_dofs: self.fe.mesh.velocity_dofs(),
            iterations: self.fe.stats.iterations,
            divergence_residual: self.divergence_residual,
            wall_time: self.wall_time,
            slip: self.correctors.as_ref().map(|c| c.slip.to_f64_()),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MacroSummary {
    pub variant: Variant,
    pub eps: f64,
    pub sectors: usize,
    pub elements: usize,
    pub velocity_dofs: usize,
    pub iterations: usize,
    pub divergence_residual: f64,
    pub wall_time: f64,
    pub slip: Option<f64>,
}
