//! Experiment configuration, ε-sweeps, rate fits and report output.

use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cell::{decay_fit, CellSolution, jump_residual, oracle_comparison, slip_matrix, solve_cell, CellProblemSpec, CellResolution};
use crate::divergence::{constant_study, StudyRow};
use crate::error::{Error, Result};
use crate::geometry::{decay_rate_bound, metric_matrices, AnnulusResolution, ChartKind, ProfileKind, RoughnessProfile, SurfacePatch};
use crate::macro_solver::{
    error_norms, solve_macro, BodyForce, CorrectorPart, ErrorNorms, MacroProblemSpec, MacroSolution, MacroSummary, OuterData,
    Region, Variant, ZeroField,
};
use crate::slip::{assemble_slip_field, CoverPatch, GammaCurve, SlipField, SlipFieldConfig};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChartConfig {
    /// plane | stretched_plane | cylinder | sphere_patch | circle
    pub kind: String,
    /// stretched_plane: [a, b]; cylinder, sphere_patch: [R]; circle: [R] or [R, period].
    #[serde(default)]
    pub params: Vec<f64>,
    #[serde(default)]
    pub base_point: Option<Vec<f64>>,
    /// Circle only: the cell normal points at the centre (roughness inside the circle).
    #[serde(default = "yes")]
    pub inward: bool,
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoughnessConfig {
    /// constant | cosine | two-scale
    pub kind: String,
    pub amplitude: f64,
    #[serde(rename = "bound_M")]
    pub bound_m: f64,
    #[serde(default)]
    pub offset: f64,
    #[serde(default = "default_wave")]
    pub wave: Vec<i64>,
    #[serde(default = "default_harmonic")]
    pub harmonic: i64,
    #[serde(default = "default_ratio")]
    pub ratio: f64,
    #[serde(default)]
    pub modulation: f64,
}

fn default_wave() -> Vec<i64> {
    vec![1]
}

fn default_harmonic() -> i64 {
    3
}

fn default_ratio() -> f64 {
    0.5
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellConfig {
    #[serde(default = "default_lateral")]
    pub lateral: usize,
    #[serde(default = "default_depth_cells")]
    pub depth: usize,
    #[serde(default)]
    pub truncation_depth: Option<f64>,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

fn default_lateral() -> usize {
    64
}

fn default_depth_cells() -> usize {
    128
}

fn default_tol() -> f64 {
    1e-11
}

impl Default for CellConfig {
    fn default() -> Self {
        CellConfig { lateral: 64, depth: 128, truncation_depth: None, tol: default_tol() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlipConfig {
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_order")]
    pub interpolation_order: usize,
}

fn default_samples() -> usize {
    16
}

fn default_order() -> usize {
    3
}

impl Default for SlipConfig {
    fn default() -> Self {
        SlipConfig { samples: 16, interpolation_order: 3 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MacroConfig {
    #[serde(default = "default_eps")]
    pub eps: Vec<f64>,
    #[serde(default = "default_outer")]
    pub outer_radius: f64,
    #[serde(default = "default_speed")]
    pub outer_speed: f64,
    #[serde(default)]
    pub swirl: f64,
    /// Elements per roughness period; at least 8.
    #[serde(default = "default_per_period")]
    pub elems_per_period: usize,
    /// Uniform refinement factor applied to every macro length scale.
    #[serde(default = "default_refine")]
    pub refine: usize,
    #[serde(default = "default_variants")]
    pub variants: Vec<Variant>,
    #[serde(default = "default_macro_tol")]
    pub tol: f64,
}

fn default_eps() -> Vec<f64> {
    vec![1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0]
}

fn default_outer() -> f64 {
    2.0
}

fn default_speed() -> f64 {
    1.0
}

fn default_per_period() -> usize {
    8
}

fn default_refine() -> usize {
    1
}

fn default_variants() -> Vec<Variant> {
    vec![Variant::Rough, Variant::Dirichlet, Variant::Navier, Variant::Corrector]
}

fn default_macro_tol() -> f64 {
    1e-12
}

impl Default for MacroConfig {
    fn default() -> Self {
        MacroConfig {
            eps: default_eps(),
            outer_radius: 2.0,
            outer_speed: 1.0,
            swirl: 0.0,
            elems_per_period: 8,
            refine: 1,
            variants: default_variants(),
            tol: default_macro_tol(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DivergenceConfig {
    #[serde(default = "default_div_eps")]
    pub eps: Vec<f64>,
    #[serde(default = "default_q")]
    pub q: f64,
}

fn default_div_eps() -> Vec<f64> {
    vec![1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0]
}

fn default_q() -> f64 {
    2.0
}

impl Default for DivergenceConfig {
    fn default() -> Self {
        DivergenceConfig { eps: default_div_eps(), q: 2.0 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub chart: ChartConfig,
    pub roughness: RoughnessConfig,
    #[serde(default)]
    pub cell: CellConfig,
    #[serde(default)]
    pub slip: SlipConfig,
    #[serde(rename = "macro", default)]
    pub macro_: MacroConfig,
    #[serde(default)]
    pub divergence: DivergenceConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub svg: bool,
}

impl Default for ExperimentConfig {
    /// Riblet annulus: Γ the unit circle, γ = 0.05 + 0.1(1 + cos 2πy'), outer wall turning.
    fn default() -> Self {
        ExperimentConfig {
            chart: ChartConfig { kind: "circle".into(), params: vec![1.0], base_point: None, inward: true },
            roughness: RoughnessConfig {
                kind: "cosine".into(),
                amplitude: 0.1,
                bound_m: 0.25,
                offset: 0.05,
                wave: vec![1],
                harmonic: 3,
                ratio: 0.5,
                modulation: 0.0,
            },
            cell: CellConfig::default(),
            slip: SlipConfig::default(),
            macro_: MacroConfig::default(),
            divergence: DivergenceConfig::default(),
            seed: 0,
            svg: false,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.profile()?;
        self.patch()?;
        if self.macro_.elems_per_period < 8 {
            return Err(Error::Config(format!(
                "macro.elems_per_period = {} is below 8 cells per roughness period",
                self.macro_.elems_per_period
            )));
        }
        if self.macro_.refine == 0 {
            return Err(Error::Config("macro.refine must be positive".into()));
        }
        Ok(())
    }

    /// ε list strictly decreasing by factors of two.
    pub fn validate_sweep(eps: &[f64]) -> Result<()> {
        if eps.iter().any(|e| !(*e > 0.0)) {
            return Err(Error::Config("ε values must be positive".into()));
        }
        for w in eps.windows(2) {
            if ((w[0] / w[1]) - 2.0).abs() > 1e-9 {
                return Err(Error::Config(format!("ε list must halve at each step ({} → {})", w[0], w[1])));
            }
        }
        Ok(())
    }

    pub fn profile(&self) -> Result<RoughnessProfile<f64>> {
        let r = &self.roughness;
        let kind = match r.kind.as_str() {
            "constant" => ProfileKind::Constant { height: r.offset + r.amplitude },
            "cosine" => ProfileKind::Cosine { offset: r.offset, amplitude: r.amplitude, wave: r.wave.clone() },
            "two-scale" | "two_scale" => ProfileKind::TwoScale {
                offset: r.offset,
                amplitude: r.amplitude,
                harmonic: r.harmonic,
                ratio: r.ratio,
            },
            other => return Err(Error::Config(format!("unknown roughness.kind '{other}'"))),
        };
        RoughnessProfile::with_modulation(kind, r.bound_m, r.modulation)
    }

    fn param(&self, i: usize, name: &str) -> Result<f64> {
        self.chart
            .params
            .get(i)
            .copied()
            .ok_or_else(|| Error::Config(format!("chart.params needs {name} at position {i}")))
    }

    pub fn patch(&self) -> Result<SurfacePatch<f64>> {
        use std::f64::consts::PI;
        let (chart, lo, hi, delta) = match self.chart.kind.as_str() {
            "plane" => (ChartKind::Plane, vec![0.0, 0.0], vec![1.0, 1.0], 1.0),
            "stretched_plane" => {
                let (a, b) = (self.param(0, "a")?, self.param(1, "b")?);
                (ChartKind::StretchedPlane { a, b }, vec![0.0, 0.0], vec![1.0, 1.0], 1.0)
            }
            "cylinder" => {
                let r = self.param(0, "radius")?;
                (ChartKind::Cylinder { radius: r }, vec![0.0, 0.0], vec![2.0 * PI, 1.0], r / 2.0)
            }
            "sphere_patch" => {
                let r = self.param(0, "radius")?;
                (ChartKind::SpherePatch { radius: r }, vec![0.1, 0.0], vec![PI - 0.1, 2.0 * PI], r / 2.0)
            }
            "circle" => {
                let r = self.param(0, "radius")?;
                let period = self.chart.params.get(1).copied().unwrap_or(1.0);
                (ChartKind::Circle { radius: r, period, inward: self.chart.inward }, vec![0.0], vec![period], r / 2.0)
            }
            other => return Err(Error::Config(format!("unknown chart.kind '{other}'"))),
        };
        Ok(SurfacePatch::new(chart, lo, hi, delta, 0))
    }

    pub fn base_point(&self) -> Result<Vec<f64>> {
        if let Some(b) = &self.chart.base_point {
            return Ok(b.clone());
        }
        let p = self.patch()?;
        Ok(match p.chart {
            ChartKind::Circle { .. } => vec![0.0],
            ChartKind::SpherePatch { .. } => vec![std::f64::consts::FRAC_PI_2, 0.0],
            ChartKind::Cylinder { .. } => vec![0.0, 0.5],
            _ => vec![0.5, 0.5],
        })
    }

    pub fn cell_resolution(&self) -> CellResolution {
        CellResolution::new(self.cell.lateral, self.cell.depth)
    }

    pub fn cell_spec(&self, lambda: Vec<f64>) -> Result<CellProblemSpec<f64>> {
        let coeffs = metric_matrices(&self.patch()?, &self.base_point()?)?;
        let mut spec = CellProblemSpec::new(coeffs, self.profile()?, lambda, self.cell_resolution());
        spec.truncation_depth = self.cell.truncation_depth;
        spec.tol = self.cell.tol;
        Ok(spec)
    }

    fn circle_radius(&self) -> Result<f64> {
        match self.patch()?.chart {
            ChartKind::Circle { radius, period, inward } if inward && period == 1.0 => Ok(radius),
            _ => Err(Error::Config("macro experiments need chart.kind = \"circle\" with period 1 and inward = true".into())),
        }
    }

    pub fn macro_spec(&self, eps: f64, variant: Variant) -> Result<MacroProblemSpec<f64>> {
        let inner = self.circle_radius()?;
        let m = &self.macro_;
        let base = AnnulusResolution { elems_per_period: m.elems_per_period, ..AnnulusResolution::default() };
        let mut spec = MacroProblemSpec::new(eps, self.profile()?, variant);
        spec.inner_radius = inner;
        spec.outer_radius = m.outer_radius;
        spec.resolution = base.refined(m.refine);
        spec.body_force = if m.swirl == 0.0 { BodyForce::None } else { BodyForce::Swirl { amplitude: m.swirl } };
        spec.boundary = OuterData { tangential: m.outer_speed, normal: 0.0 };
        spec.cell_resolution = self.cell_resolution();
        spec.tol = m.tol;
        Ok(spec)
    }

    pub fn slip_curve(&self) -> Result<GammaCurve<f64>> {
        let patch = self.patch()?;
        let (lo, hi) = (patch.param_lo[0], patch.param_hi[0]);
        let periodic = matches!(patch.chart, ChartKind::Circle { .. } | ChartKind::Cylinder { .. });
        let anchor = self.base_point()?[1..].to_vec();
        Ok(GammaCurve::single(CoverPatch { patch, profile: self.profile()?, s_lo: lo, s_hi: hi }, periodic, anchor))
    }

    pub fn slip_config(&self, samples: Option<usize>) -> SlipFieldConfig<f64> {
        let mut cfg = SlipFieldConfig::new(samples.unwrap_or(self.slip.samples), self.cell_resolution());
        cfg.interpolation_order = self.slip.interpolation_order;
        cfg.truncation_depth = self.cell.truncation_depth;
        cfg.tol = self.cell.tol;
        cfg
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    /// Root-mean-square residual of the log-log fit.
    pub residual: f64,
    /// Half-width of the 95% confidence interval of the slope (None for two points).
    pub ci95: Option<f64>,
    pub points_used: usize,
    /// Points dropped because the error was not positive (solver floor reached).
    pub floor_excluded: usize,
}

/// Least-squares slope of log(error) against log(ε).
pub fn fit_rate(pairs: &[(f64, f64)]) -> Result<RateFit> {
    let usable: Vec<(f64, f64)> = pairs
        .iter()
        .filter(|(e, v)| *e > 0.0 && *v > 0.0 && v.is_finite())
        .map(|(e, v)| (e.ln(), v.ln()))
        .collect();
    let floor_excluded = pairs.len() - usable.len();
    if usable.len() < 2 {
        return Err(Error::OutOfRange(format!("{} usable points, at least 2 needed", usable.len())));
    }
    let n = usable.len() as f64;
    let mx = usable.iter().map(|p| p.0).sum::<f64>() / n;
    let my = usable.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = usable.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = usable.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::OutOfRange("all ε values coincide".into()));
    }
    let slope = sxy / sxx;
    let sse: f64 = usable.iter().map(|p| (p.1 - my - slope * (p.0 - mx)).powi(2)).sum();
    let ci95 = if usable.len() > 2 {
        let dof = n - 2.0;
        // two-sided Student t quantiles for small dof
        let t = match usable.len() - 2 {
            1 => 12.706,
            2 => 4.303,
            3 => 3.182,
            4 => 2.776,
            5 => 2.571,
            _ => 2.0,
        };
        Some(t * (sse / dof / sxx).sqrt())
    } else {
        None
    };
    Ok(RateFit { slope, residual: (sse / n).sqrt(), ci95, points_used: usable.len(), floor_excluded })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub target: f64,
    pub band: f64,
    pub fit: Option<RateFit>,
    /// "pass", "fail" or "degenerate: skipped".
    pub status: String,
}

impl Verdict {
    pub fn passed(&self) -> bool {
        self.status == "pass"
    }

    fn judge(name: &str, target: f64, band: f64, pairs: &[(f64, f64)]) -> Self {
        let fit = fit_rate(pairs).ok();
        let status = match &fit {
            Some(f) if f.points_used >= 3 => {
                if (f.slope - target).abs() <= band {
                    "pass"
                } else {
                    "fail"
                }
            }
            _ => "degenerate: skipped",
        };
        Verdict { name: name.into(), target, band, fit, status: status.into() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepRow {
    pub eps: f64,
    /// u^ε − ũ on Ω^ε.
    pub dirichlet: Option<ErrorNorms>,
    /// u^ε − u^eff on Ω.
    pub navier: Option<ErrorNorms>,
    /// u^ε − (ũ + η̄^ε + η^ε) on Ω^ε.
    pub corrector: Option<ErrorNorms>,
    /// η^ε on Ω.
    pub oscillating: Option<ErrorNorms>,
    pub slip: Option<f64>,
    pub solves: Vec<MacroSummary>,
    pub wall_time: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub rows: Vec<SweepRow>,
    pub verdicts: Vec<Verdict>,
    /// Corrector-augmented L² error below the plain Dirichlet L² error at every ε.
    pub corrector_improves: Option<bool>,
    pub slip_coefficient: Option<f64>,
    pub wall_time: f64,
}

impl ConvergenceReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        for r in &self.rows {
            out.push_str(&csv_row(r));
        }
        out
    }

    pub fn verdict(&self, name: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.name == name)
    }
}

const CSV_HEADER: &str = "eps,dirichlet_energy,dirichlet_l2,navier_l2,navier_w11,corrector_l2,eta_l2,eta_grad_l1,wall_time\n";

fn csv_row(r: &SweepRow) -> String {
    let f = |v: Option<f64>| v.map_or(String::from("nan"), |x| format!("{x:.10e}"));
    format!(
        "{:.10e},{},{},{},{},{},{},{},{:.3}\n",
        r.eps,
        f(r.dirichlet.map(|n| n.h1_semi)),
        f(r.dirichlet.map(|n| n.l2)),
        f(r.navier.map(|n| n.l2)),
        f(r.navier.map(|n| n.w11)),
        f(r.corrector.map(|n| n.l2)),
        f(r.oscillating.map(|n| n.l2)),
        f(r.oscillating.map(|n| n.grad_l1)),
        r.wall_time
    )
}

fn stage<R>(name: &str, r: Result<R>) -> Result<R> {
    r.map_err(|e| e.at_stage(name))
}

/// Builds the slip field along Γ from cell solves.
pub fn build_slip_field(cfg: &ExperimentConfig, samples: Option<usize>) -> Result<SlipField<f64>> {
    assemble_slip_field(&cfg.slip_curve()?, &cfg.slip_config(samples))
}

fn sweep_point(cfg: &ExperimentConfig, eps: f64, slip: Option<&SlipField<f64>>) -> Result<SweepRow> {
    let start = Instant::now();
    let tag = |s: &str| format!("{s} (eps = {eps})");
    let wants = |v: Variant| cfg.macro_.variants.contains(&v);
    let rough = stage(&tag("rough"), solve_macro(&cfg.macro_spec(eps, Variant::Rough)?, None))?;
    let run = |v: Variant| -> Result<Option<MacroSolution<f64>>> {
        if !wants(v) {
            return Ok(None);
        }
        let s = if v == Variant::Navier { slip } else { None };
        stage(&tag(&v.to_string()), solve_macro(&cfg.macro_spec(eps, v)?, s)).map(Some)
    };
    let dirichlet = run(Variant::Dirichlet)?;
    let navier = run(Variant::Navier)?;
    let corrector = run(Variant::Corrector)?;
    let norms = |a: &MacroSolution<f64>, region| stage(&tag("norms"), error_norms(&rough, a, region));
    let osc = match &corrector {
        Some(c) => {
            let b = c.correctors.as_ref().expect("corrector variant carries its bundle");
            let z = ZeroField(rough.geometry.clone());
            Some(stage(&tag("norms"), error_norms(&CorrectorPart::Oscillating(b), &z, Region::Omega))?)
        }
        None => None,
    };
    let mut solves = vec![rough.summary()];
    solves.extend([&dirichlet, &navier, &corrector].into_iter().flatten().map(|s| s.summary()));
    Ok(SweepRow {
        eps,
        dirichlet: dirichlet.as_ref().map(|d| norms(d, Region::OmegaEps)).transpose()?,
        navier: navier.as_ref().map(|n| norms(n, Region::Omega)).transpose()?,
        corrector: corrector.as_ref().map(|c| norms(c, Region::OmegaEps)).transpose()?,
        oscillating: osc,
        slip: corrector.as_ref().and_then(|c| c.correctors.as_ref().map(|b| b.slip)),
        solves,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// Cell solves → slip field → per-ε macro solves → error norms → rate verdicts.
///
/// With `out` set, CSV rows are flushed to `out/convergence.csv` as each ε finishes.
pub fn run_pipeline(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<ConvergenceReport> {
    let start = Instant::now();
    cfg.validate()?;
    let eps = &cfg.macro_.eps;
    ExperimentConfig::validate_sweep(eps)?;
    let slip = if cfg.macro_.variants.contains(&Variant::Navier) {
        Some(stage("slip field", build_slip_field(cfg, None))?)
    } else {
        None
    };
    let mut csv = match out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            let mut f = fs::File::create(dir.join("convergence.csv"))?;
            f.write_all(CSV_HEADER.as_bytes())?;
            Some(f)
        }
        None => None,
    };
    // ε points are independent; results are collected in input order
    let results: Vec<Result<SweepRow>> = eps.par_iter().map(|e| sweep_point(cfg, *e, slip.as_ref())).collect();
    let mut rows = Vec::with_capacity(eps.len());
    for r in results {
        let row = r?;
        if let Some(f) = csv.as_mut() {
            f.write_all(csv_row(&row).as_bytes())?;
            f.flush()?;
        }
        rows.push(row);
    }

    let series = |get: &dyn Fn(&SweepRow) -> Option<f64>| -> Vec<(f64, f64)> {
        rows.iter().filter_map(|r| get(r).map(|v| (r.eps, v))).collect()
    };
    let mut verdicts = Vec::new();
    let mut add = |name: &str, target: f64, band: f64, pts: Vec<(f64, f64)>| {
        if !pts.is_empty() {
            verdicts.push(Verdict::judge(name, target, band, &pts));
        }
    };
    add("dirichlet_energy", 0.5, 0.15, series(&|r| r.dirichlet.map(|n| n.h1_semi)));
    add("dirichlet_l2", 1.0, 0.25, series(&|r| r.dirichlet.map(|n| n.l2)));
    add("navier_l2", 1.5, 0.25, series(&|r| r.navier.map(|n| n.l2)));
    add("navier_w11", 1.0, 0.25, series(&|r| r.navier.map(|n| n.w11)));
    add("corrector_l2", 1.5, 0.25, series(&|r| r.corrector.map(|n| n.l2)));
    add("eta_l2", 1.5, 0.25, series(&|r| r.oscillating.map(|n| n.l2)));
    add("eta_grad_l1", 1.0, 0.25, series(&|r| r.oscillating.map(|n| n.grad_l1)));
    let corrector_improves = if rows.iter().all(|r| r.corrector.is_some() && r.dirichlet.is_some()) && !rows.is_empty() {
        Some(rows.iter().all(|r| r.corrector.unwrap().l2 < r.dirichlet.unwrap().l2))
    } else {
        None
    };
    let report = ConvergenceReport {
        slip_coefficient: slip.as_ref().map(|s| s.samples[0].matrix[(0, 0)]),
        rows,
        verdicts,
        corrector_improves,
        wall_time: start.elapsed().as_secs_f64(),
    };
    if let Some(dir) = out {
        write_json(&dir.join("convergence.json"), &report)?;
        if cfg.svg {
            let names = ["dirichlet_energy", "dirichlet_l2", "navier_l2", "navier_w11", "corrector_l2"];
            let getters: [&dyn Fn(&SweepRow) -> Option<f64>; 5] = [
                &|r| r.dirichlet.map(|n| n.h1_semi),
                &|r| r.dirichlet.map(|n| n.l2),
                &|r| r.navier.map(|n| n.l2),
                &|r| r.navier.map(|n| n.w11),
                &|r| r.corrector.map(|n| n.l2),
            ];
            let curves: Vec<(String, Vec<(f64, f64)>)> = names
                .iter()
                .zip(getters)
                .map(|(n, g)| (n.to_string(), report.rows.iter().filter_map(|r| g(r).map(|v| (r.eps, v))).collect()))
                .collect();
            fs::write(dir.join("convergence.svg"), svg_loglog("error against ε", &curves))?;
        }
    }
    Ok(report)
}

#[derive(Clone, Debug, Serialize)]
pub struct CellReport {
    pub jump_vector: Vec<f64>,
    pub c_bl: Vec<f64>,
    pub slip_matrix: Option<Vec<Vec<f64>>>,
    pub alpha_bound: f64,
    pub measured_decay: Option<f64>,
    pub truncation_depth: f64,
    pub jump_residual: f64,
    pub residuals: crate::cell::CellResiduals,
    pub decay_profile: Vec<(f64, f64)>,
    pub wall_time: f64,
}

impl CellReport {
    pub fn decay_csv(&self) -> String {
        let mut s = String::from("y_d,fluctuation\n");
        for (y, v) in &self.decay_profile {
            s.push_str(&format!("{y:.10e},{v:.10e}\n"));
        }
        s
    }
}

/// One cell solve for jump vector λ (default: the first chart tangent), plus the full slip matrix.
pub fn run_cell(cfg: &ExperimentConfig, lambda: Option<Vec<f64>>) -> Result<(CellSolution<f64>, CellReport)> {
    let start = Instant::now();
    let patch = cfg.patch()?;
    let bp = cfg.base_point()?;
    let tangents = patch.tangent_frame(&bp);
    let lambda = lambda.unwrap_or_else(|| tangents[0].clone());
    let spec = cfg.cell_spec(lambda.clone())?;
    let sol = solve_cell(&spec)?;
    let fit = decay_fit(&sol);
    let matrix = slip_matrix(&spec, &tangents).ok().map(|m| {
        let d = m.matrix.rows;
        (0..d).map(|i| (0..d).map(|j| m.matrix[(i, j)]).collect()).collect()
    });
    let report = CellReport {
        jump_vector: lambda.clone(),
        c_bl: sol.bl_constant.clone(),
        slip_matrix: matrix,
        alpha_bound: decay_rate_bound(&spec.coeffs)?,
        measured_decay: fit.rate,
        truncation_depth: sol.grid.depth,
        jump_residual: jump_residual(&sol, &lambda),
        residuals: sol.residuals.clone(),
        decay_profile: sol.decay_samples.clone(),
        wall_time: start.elapsed().as_secs_f64(),
    };
    Ok((sol, report))
}

/// Components of β along the vertical line through lateral position `y_lat`.
pub fn field_slice_csv(sol: &CellSolution<f64>, y_lat: &[f64], top: f64, points: usize) -> String {
    let d = sol.dim();
    let mut s = String::from("y_d");
    for c in 0..d {
        s.push_str(&format!(",beta{}", c + 1));
    }
    s.push('\n');
    let bottom = -sol.grid.depth;
    for k in 0..points {
        let y = bottom + (top - bottom) * k as f64 / (points - 1).max(1) as f64;
        s.push_str(&format!("{y:.10e}"));
        for v in sol.evaluate(y_lat, y) {
            s.push_str(&format!(",{v:.10e}"));
        }
        s.push('\n');
    }
    s
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MacroReport {
    pub summary: MacroSummary,
    /// Difference to the rough solution (absent for the rough variant).
    pub norms_vs_rough: Option<ErrorNorms>,
    pub region: Option<Region>,
}

/// Single macro solve; a Navier solve reuses `slip` when given and otherwise builds the field.
pub fn run_macro(
    cfg: &ExperimentConfig,
    variant: Variant,
    eps: f64,
    slip: Option<SlipField<f64>>,
) -> Result<(MacroSolution<f64>, MacroReport)> {
    let slip = match (variant, slip) {
        (Variant::Navier, Some(s)) => Some(s),
        (Variant::Navier, None) => Some(stage("slip field", build_slip_field(cfg, None))?),
        _ => None,
    };
    let sol = stage(&variant.to_string(), solve_macro(&cfg.macro_spec(eps, variant)?, slip.as_ref()))?;
    let (norms, region) = if variant == Variant::Rough {
        (None, None)
    } else {
        let rough = stage("rough", solve_macro(&cfg.macro_spec(eps, Variant::Rough)?, None))?;
        let region = if variant == Variant::Navier { Region::Omega } else { Region::OmegaEps };
        (Some(error_norms(&rough, &sol, region)?), Some(region))
    };
    let summary = sol.summary();
    Ok((sol, MacroReport { summary, norms_vs_rough: norms, region }))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DivergenceReport {
    pub rows: Vec<StudyRow>,
    /// max/min of the global ratio across the sweep.
    pub spread: f64,
    pub m_growth: f64,
    pub verdict: String,
}

impl DivergenceReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("eps,m,pieces,global_ratio,max_piece_ratio,bound_envelope\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{:.10e},{},{},{:.10e},{:.10e},{:.10e}\n",
                r.eps, r.m, r.pieces, r.global_ratio, r.max_piece_ratio, r.bound_envelope
            ));
        }
        s
    }
}

pub fn run_divbench(eps: &[f64], seed: u64, q: f64) -> Result<DivergenceReport> {
    if (q - 2.0).abs() > 1e-12 {
        return Err(Error::Config("the divergence solves measure the q = 2 constant only".into()));
    }
    let rows = constant_study(eps, seed, q)?;
    let max = rows.iter().map(|r| r.global_ratio).fold(0.0, f64::max);
    let min = rows.iter().map(|r| r.global_ratio).fold(f64::INFINITY, f64::min);
    let m_max = rows.iter().map(|r| r.m).max().unwrap_or(0) as f64;
    let m_min = rows.iter().map(|r| r.m).min().unwrap_or(0).max(1) as f64;
    let spread = max / min;
    let ok = spread <= 2.0 && rows.iter().all(|r| r.norm_bound_ok && r.max_split_mean <= 1e-12);
    Ok(DivergenceReport { rows, spread, m_growth: m_max / m_min, verdict: if ok { "pass".into() } else { "fail".into() } })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OracleRow {
    pub lateral: usize,
    pub depth_cells: usize,
    pub relative_error: f64,
    pub absolute_error: f64,
}

/// Mode-oracle comparison at y_d = −1 for the configured cell at several lateral resolutions.
pub fn run_oracle_check(cfg: &ExperimentConfig, laterals: &[usize]) -> Result<Vec<OracleRow>> {
    let patch = cfg.patch()?;
    let lambda = patch.tangent_frame(&cfg.base_point()?)[0].clone();
    laterals
        .iter()
        .map(|n| {
            let mut spec = cfg.cell_spec(lambda.clone())?;
            spec.resolution = CellResolution::new(*n, 2 * n);
            let sol = solve_cell(&spec)?;
            let cmp = oracle_comparison(&sol, -1.0)?;
            Ok(OracleRow { lateral: *n, depth_cells: 2 * n, relative_error: cmp.relative_error, absolute_error: cmp.absolute_error })
        })
        .collect()
}

/// Sets the size of the global worker pool; only the first call takes effect.
pub fn configure_threads(n: usize) -> Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(e.to_string()))
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(path, text)?;
    Ok(())
}

/// Log-log line plot as a standalone SVG document.
pub fn svg_loglog(title: &str, curves: &[(String, Vec<(f64, f64)>)]) -> String {
    let (w, h, pad) = (640.0, 440.0, 60.0);
    let pts: Vec<(f64, f64)> = curves
        .iter()
        .flat_map(|(_, c)| c.iter().filter(|(x, y)| *x > 0.0 && *y > 0.0).map(|(x, y)| (x.log10(), y.log10())))
        .collect();
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
         <rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">{title}</text>\n",
        w / 2.0
    );
    if pts.is_empty() {
        svg.push_str("</svg>\n");
        return svg;
    }
    let (x0, x1) = pts.iter().fold((f64::MAX, f64::MIN), |(a, b), p| (a.min(p.0), b.max(p.0)));
    let (y0, y1) = pts.iter().fold((f64::MAX, f64::MIN), |(a, b), p| (a.min(p.1), b.max(p.1)));
    let (x0, x1) = (x0.floor(), x1.ceil().max(x0.floor() + 1.0));
    let (y0, y1) = (y0.floor(), y1.ceil().max(y0.floor() + 1.0));
    let sx = |x: f64| pad + (x - x0) / (x1 - x0) * (w - 2.0 * pad);
    let sy = |y: f64| h - pad - (y - y0) / (y1 - y0) * (h - 2.0 * pad);
    svg.push_str(&format!(
        "<rect x=\"{pad}\" y=\"{pad}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>\n",
        w - 2.0 * pad,
        h - 2.0 * pad
    ));
    for d in (x0 as i64)..=(x1 as i64) {
        let x = sx(d as f64);
        svg.push_str(&format!(
            "<text x=\"{x:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">1e{d}</text>\n",
            h - pad + 16.0
        ));
    }
    for d in (y0 as i64)..=(y1 as i64) {
        let y = sy(d as f64);
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">1e{d}</text>\n",
            pad - 6.0,
            y + 4.0
        ));
    }
    let colours = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"];
    for (k, (name, c)) in curves.iter().enumerate() {
        let col = colours[k % colours.len()];
        let path: Vec<String> = c
            .iter()
            .filter(|(x, y)| *x > 0.0 && *y > 0.0)
            .map(|(x, y)| format!("{:.1},{:.1}", sx(x.log10()), sy(y.log10())))
            .collect();
        svg.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{col}\" stroke-width=\"1.5\"/>\n",
            path.join(" ")
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" fill=\"{col}\">{name}</text>\n",
            pad + 8.0,
            pad + 16.0 + 14.0 * k as f64
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

/// Parses "1/8,1/16,0.03125" style lists.
pub fn parse_eps_list(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|t| {
            let t = t.trim();
            let v = match t.split_once('/') {
                Some((a, b)) => a.trim().parse::<f64>().ok().zip(b.trim().parse::<f64>().ok()).map(|(a, b)| a / b),
                None => t.parse::<f64>().ok(),
            };
            v.filter(|x| x.is_finite() && *x > 0.0).ok_or_else(|| Error::Config(format!("bad ε value '{t}'")))
        })
        .collect()
}
