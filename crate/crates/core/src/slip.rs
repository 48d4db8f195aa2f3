//! Slip-coefficient field along the fictitious boundary from per-point cell solves.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cell::{slip_matrix, CellProblemSpec, CellResolution};
use crate::dense::{dot, Mat};
use crate::error::{Error, Result};
use crate::geometry::{metric_matrices, RoughnessProfile, SurfacePatch};
use crate::linalg::SaddleMethod;
use crate::real::Real;

/// A chart together with the stretch of the sampled curve it covers.
///
/// The curve runs along the first chart coordinate s ∈ [s_lo, s_hi]; the remaining chart
/// coordinates are held at `anchor`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoverPatch<T> {
    pub patch: SurfacePatch<T>,
    pub profile: RoughnessProfile<T>,
    pub s_lo: T,
    pub s_hi: T,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GammaCurve<T> {
    pub patches: Vec<CoverPatch<T>>,
    pub s_lo: T,
    pub s_hi: T,
    pub periodic: bool,
    pub anchor: Vec<T>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SlipFieldConfig<T> {
    pub samples: usize,
    pub interpolation_order: usize,
    pub resolution: CellResolution,
    pub truncation_depth: Option<T>,
    pub tol: T,
}

impl<T: Real> SlipFieldConfig<T> {
    pub fn new(samples: usize, resolution: CellResolution) -> Self {
        SlipFieldConfig { samples, interpolation_order: 3, resolution, truncation_depth: None, tol: T::lit(1e-11) }
    }
}

/// One patch's cell-problem result at a sample point.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Contribution<T> {
    pub patch_id: usize,
    pub weight: T,
    pub spec: CellProblemSpec<T>,
    /// Orthonormal tangents λ^(1..d-1) of this patch.
    pub tangents: Vec<Vec<T>>,
    pub matrix: Mat<T>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SlipSample<T> {
    pub s: T,
    pub surface_point: Vec<T>,
    /// λ^(1), …, λ^(d-1), ν.
    pub tangent_frame: Vec<Vec<T>>,
    /// c_lk in `tangent_frame`.
    pub matrix: Mat<T>,
    pub patch_id: usize,
    pub contributions: Vec<Contribution<T>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SlipField<T> {
    pub curve: GammaCurve<T>,
    pub samples: Vec<SlipSample<T>>,
    pub interpolation_order: usize,
    pub cell_solves: usize,
}

/// Polynomial bump (1 − r²)² on the patch stretch, r ∈ [−1, 1].
fn bump<T: Real>(s: T, lo: T, hi: T) -> T {
    let r = (T::lit(2.0) * s - lo - hi) / (hi - lo);
    if r.abs() >= T::one() {
        T::zero()
    } else {
        let q = T::one() - r * r;
        q * q
    }
}

impl<T: Real> GammaCurve<T> {
    pub fn single(patch: CoverPatch<T>, periodic: bool, anchor: Vec<T>) -> Self {
        GammaCurve { s_lo: patch.s_lo, s_hi: patch.s_hi, patches: vec![patch], periodic, anchor }
    }

    fn wrap(&self, s: T) -> T {
        if !self.periodic {
            return s;
        }
        let len = self.s_hi - self.s_lo;
        self.s_lo + (s - self.s_lo) - ((s - self.s_lo) / len).floor() * len
    }

    /// Partition-of-unity weights ψ_i(s), normalized to sum to one.
    pub fn cutoffs(&self, s: T) -> Vec<T> {
        let s = self.wrap(s);
        let raw: Vec<T> = self
            .patches
            .iter()
            .map(|p| {
                if self.patches.len() == 1 {
                    // a lone patch carries the whole curve
                    if s >= p.s_lo && s <= p.s_hi {
                        T::one()
                    } else {
                        T::zero()
                    }
                } else {
                    bump(s, p.s_lo, p.s_hi)
                }
            })
            .collect();
        let total = raw.iter().fold(T::zero(), |a, b| a + *b);
        if total > T::zero() {
            raw.iter().map(|w| *w / total).collect()
        } else {
            raw
        }
    }

    fn chart_point(&self, s: T) -> Vec<T> {
        let mut x = vec![self.wrap(s)];
        x.extend_from_slice(&self.anchor);
        x
    }

    pub fn sample_positions(&self, count: usize) -> Vec<T> {
        let len = self.s_hi - self.s_lo;
        let n = T::from_usize_(count);
        (0..count)
            .map(|i| {
                let i = T::from_usize_(i);
                if self.periodic {
                    self.s_lo + len * i / n
                } else {
                    self.s_lo + len * i / (n - T::one())
                }
            })
            .collect()
    }
}

fn tensor<T: Real>(matrix: &Mat<T>, tangents: &[Vec<T>]) -> Mat<T> {
    let d = tangents[0].len();
    let n = tangents.len();
    Mat::from_fn(d, d, |i, j| {
        let mut s = T::zero();
        for l in 0..n {
            for k in 0..n {
                s = s + matrix[(l, k)] * tangents[l][i] * tangents[k][j];
            }
        }
        s
    })
}

fn in_frame<T: Real>(tensor: &Mat<T>, tangents: &[Vec<T>]) -> Mat<T> {
    let n = tangents.len();
    Mat::from_fn(n, n, |l, k| dot(&tangents[l], &tensor.mul_vec(&tangents[k])))
}

fn key<T: Real>(spec: &CellProblemSpec<T>) -> String {
    // the frame-component problem depends on B only through the column norms
    let d = spec.coeffs.dim();
    let scales: Vec<String> =
        (0..d).map(|c| format!("{:.10e}", crate::dense::norm(&spec.coeffs.b_matrix.column(c)).to_f64_())).collect();
    let mut profile = spec.profile.clone();
    if !profile.depends_on_base_point() {
        profile.modulation = T::zero();
    }
    let base: Vec<String> = if spec.profile.depends_on_base_point() {
        spec.coeffs.base_point.iter().map(|v| format!("{:.10e}", v.to_f64_())).collect()
    } else {
        Vec::new()
    };
    format!("{scales:?}|{:?}|{base:?}", profile.kind)
}

struct Job<T> {
    sample: usize,
    patch: usize,
    weight: T,
    spec: CellProblemSpec<T>,
    tangents: Vec<Vec<T>>,
}

fn cell_spec<T: Real>(cp: &CoverPatch<T>, x: &[T], cfg: &SlipFieldConfig<T>) -> Result<(CellProblemSpec<T>, Vec<Vec<T>>)> {
    let coeffs = metric_matrices(&cp.patch, x)?;
    let d = coeffs.dim();
    let tangents = cp.patch.tangent_frame(x);
    let mut spec = CellProblemSpec::new(coeffs, cp.profile.clone(), tangents[0].clone(), cfg.resolution);
    spec.truncation_depth = cfg.truncation_depth;
    spec.tol = cfg.tol;
    spec.method = SaddleMethod::SchurCg;
    debug_assert_eq!(tangents.len(), d - 1);
    Ok((spec, tangents))
}

/// Frame-component slip matrix ĉ for tangents that are the normalized chart tangents.
fn solve_frame_matrix<T: Real>(spec: &CellProblemSpec<T>, tangents: &[Vec<T>]) -> Result<Mat<T>> {
    Ok(slip_matrix(spec, tangents)?.matrix)
}

/// Runs the cell solves at every sample, blends overlapping patches with ψ_i and returns
/// a queryable field. Samples whose frame-component cell problem coincides share one solve.
pub fn assemble_slip_field<T: Real>(curve: &GammaCurve<T>, cfg: &SlipFieldConfig<T>) -> Result<SlipField<T>> {
    if cfg.samples < 2 {
        return Err(Error::OutOfRange("at least two samples are needed".into()));
    }
    if !(cfg.interpolation_order == 1 || cfg.interpolation_order == 3) {
        return Err(Error::OutOfRange("interpolation order must be 1 or 3".into()));
    }
    if curve.patches.is_empty() {
        return Err(Error::Geometry("no patches".into()));
    }
    let positions = curve.sample_positions(cfg.samples);
    let mut jobs = Vec::new();
    for (i, s) in positions.iter().enumerate() {
        let psi = curve.cutoffs(*s);
        if psi.iter().all(|w| *w == T::zero()) {
            return Err(Error::SlipAssembly { index: i, location: s.to_f64_(), reason: "no patch covers the sample".into() });
        }
        let x = curve.chart_point(*s);
        for (p, w) in psi.iter().enumerate() {
            if *w > T::zero() {
                let (spec, tangents) = cell_spec(&curve.patches[p], &x, cfg)
                    .map_err(|e| Error::SlipAssembly { index: i, location: s.to_f64_(), reason: e.to_string() })?;
                jobs.push(Job { sample: i, patch: p, weight: *w, spec, tangents });
            }
        }
    }
    // one solve per distinct frame-component problem
    let mut unique: HashMap<String, usize> = HashMap::new();
    let mut reps = Vec::new();
    let job_key: Vec<usize> = jobs
        .iter()
        .enumerate()
        .map(|(j, job)| {
            let k = key(&job.spec);
            *unique.entry(k).or_insert_with(|| {
                reps.push(j);
                reps.len() - 1
            })
        })
        .collect();
    let frame_mats: Vec<Result<Mat<T>>> = reps
        .par_iter()
        .map(|j| {
            let job = &jobs[*j];
            let d = job.spec.coeffs.dim();
            // solve in frame directions: the orthonormal tangents of this chart
            let frame = crate::cell::Frame::from_coefficients(&job.spec.coeffs)?;
            let own: Vec<Vec<T>> = (0..d - 1).map(|c| frame.q.column(c)).collect();
            let m = solve_frame_matrix(&job.spec, &own)?;
            Ok(m)
        })
        .collect();
    let mut frame_mats_ok = Vec::with_capacity(frame_mats.len());
    for (r, m) in frame_mats.into_iter().enumerate() {
        let job = &jobs[reps[r]];
        frame_mats_ok.push(m.map_err(|e| Error::SlipAssembly {
            index: job.sample,
            location: positions[job.sample].to_f64_(),
            reason: e.to_string(),
        })?);
    }

    let mut per_sample: Vec<Vec<Contribution<T>>> = vec![Vec::new(); positions.len()];
    for (j, job) in jobs.into_iter().enumerate() {
        let d = job.spec.coeffs.dim();
        let frame = crate::cell::Frame::from_coefficients(&job.spec.coeffs)?;
        let own: Vec<Vec<T>> = (0..d - 1).map(|c| frame.q.column(c)).collect();
        let t = tensor(&frame_mats_ok[job_key[j]], &own);
        let matrix = in_frame(&t, &job.tangents);
        per_sample[job.sample].push(Contribution {
            patch_id: curve.patches[job.patch].patch.patch_id,
            weight: job.weight,
            spec: job.spec,
            tangents: job.tangents,
            matrix,
        });
    }

    let mut samples = Vec::with_capacity(positions.len());
    for (i, contributions) in per_sample.into_iter().enumerate() {
        samples.push(blend(curve, positions[i], contributions));
    }
    let field = SlipField { curve: curve.clone(), samples, interpolation_order: cfg.interpolation_order, cell_solves: reps.len() };
    for (i, smp) in field.samples.iter().enumerate() {
        let ev = symmetric_part(&smp.matrix).sym_eigenvalues();
        if !(ev.last().copied().unwrap_or(T::zero()) < T::zero()) {
            return Err(Error::SlipAssembly {
                index: i,
                location: smp.s.to_f64_(),
                reason: format!("sample matrix is not negative definite (eigenvalues {ev:?})"),
            });
        }
    }
    Ok(field)
}

fn symmetric_part<T: Real>(m: &Mat<T>) -> Mat<T> {
    Mat::from_fn(m.rows, m.cols, |i, j| (m[(i, j)] + m[(j, i)]) / T::lit(2.0))
}

fn blend<T: Real>(curve: &GammaCurve<T>, s: T, contributions: Vec<Contribution<T>>) -> SlipSample<T> {
    let lead = contributions
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.weight.partial_cmp(&b.1.weight).unwrap())
        .map(|(i, _)| i)
        .unwrap_or(0);
    let d = contributions[lead].tangents[0].len();
    let mut acc = Mat::zeros(d, d);
    for c in &contributions {
        let t = tensor(&c.matrix, &c.tangents);
        for i in 0..d {
            for j in 0..d {
                acc[(i, j)] = acc[(i, j)] + c.weight * t[(i, j)];
            }
        }
    }
    let tangents = contributions[lead].tangents.clone();
    let mut frame = tangents.clone();
    frame.push(contributions[lead].spec.coeffs.normal());
    let cp = curve.patches.iter().find(|p| p.patch.patch_id == contributions[lead].patch_id).unwrap();
    let x = curve.chart_point(s);
    SlipSample {
        s,
        surface_point: cp.patch.point(&x),
        matrix: in_frame(&acc, &tangents),
        tangent_frame: frame,
        patch_id: contributions[lead].patch_id,
        contributions,
    }
}

impl<T: Real> SlipSample<T> {
    pub fn tangents(&self) -> &[Vec<T>] {
        &self.tangent_frame[..self.tangent_frame.len() - 1]
    }

    /// Physical slip tensor Σ c_lk λ^(l) ⊗ λ^(k).
    pub fn tensor(&self) -> Mat<T> {
        tensor(&self.matrix, self.tangents())
    }
}

impl<T: Real> SlipField<T> {
    pub fn dim(&self) -> usize {
        self.samples[0].surface_point.len()
    }

    fn dominant_patch(&self, s: T) -> usize {
        let psi = self.curve.cutoffs(s);
        psi.iter().enumerate().max_by(|a, b| a.1.partial_cmp(b.1).unwrap()).map(|(i, _)| i).unwrap_or(0)
    }

    /// Orthonormal tangents at s from the dominant patch.
    pub fn tangents_at(&self, s: T) -> Vec<Vec<T>> {
        self.curve.patches[self.dominant_patch(s)].patch.tangent_frame(&self.curve.chart_point(s))
    }

    /// c_lk at s in the dominant patch's frame. Each stencil sample is first expressed in
    /// that chart's frame at its own position, so interpolation acts on smooth components.
    pub fn matrix_at(&self, s: T) -> Mat<T> {
        let n = self.samples.len();
        let patch = &self.curve.patches[self.dominant_patch(s)].patch;
        let first = self.samples[0].s;
        let spacing = self.samples[1].s - first;
        let s = self.curve.wrap(s);
        let u = (s - first) / spacing;
        let last = if self.curve.periodic { n as i64 } else { n as i64 - 1 };
        let i0 = (u.floor().to_f64_() as i64).clamp(0, (last - 1).max(0));
        let frac = u - T::lit(i0 as f64);
        let (stencil, weights): (Vec<i64>, Vec<T>) = if self.interpolation_order == 1 {
            (vec![i0, i0 + 1], vec![T::one() - frac, frac])
        } else {
            // four-point Lagrange, shifted inwards at the ends of an open curve
            let mut start = i0 - 1;
            if !self.curve.periodic {
                start = start.clamp(0, (n as i64 - 4).max(0));
            }
            let nodes: Vec<i64> = (start..start + 4).collect();
            let w = nodes
                .iter()
                .map(|a| {
                    nodes.iter().filter(|b| *b != a).fold(T::one(), |acc, b| {
                        acc * (u - T::lit(*b as f64)) / T::lit((*a - *b) as f64)
                    })
                })
                .collect();
            (nodes, w)
        };
        let m = self.samples[0].matrix.rows;
        let mut out = Mat::zeros(m, m);
        for (k, w) in stencil.iter().zip(&weights) {
            let i = if self.curve.periodic {
                k.rem_euclid(n as i64) as usize
            } else if *k >= 0 && *k < n as i64 {
                *k as usize
            } else {
                continue;
            };
            if *w == T::zero() {
                continue;
            }
            let smp = &self.samples[i];
            let frame = patch.tangent_frame(&self.curve.chart_point(smp.s));
            let local = in_frame(&smp.tensor(), &frame);
            for a in 0..m {
                for b in 0..m {
                    out[(a, b)] = out[(a, b)] + *w * local[(a, b)];
                }
            }
        }
        out
    }

    /// Physical tensor Σ c_lk λ^(l) ⊗ λ^(k) at s.
    pub fn tensor_at(&self, s: T) -> Mat<T> {
        tensor(&self.matrix_at(s), &self.tangents_at(s))
    }

    pub fn to_json(&self) -> Result<String>
    where
        T: Serialize,
    {
        serde_json::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self>
    where
        T: for<'de> Deserialize<'de>,
    {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Rows: s, chart point, c11, c12, c21, c22 (or c11 in 2D), eigmin, eigmax.
    pub fn to_csv(&self) -> String {
        let n = self.samples[0].matrix.rows;
        let mut out = String::from("s,x,y,z");
        for l in 0..n {
            for k in 0..n {
                out.push_str(&format!(",c{}{}", l + 1, k + 1));
            }
        }
        out.push_str(",eigmin,eigmax\n");
        for smp in &self.samples {
            let p = &smp.surface_point;
            let z = p.get(2).map(|v| v.to_f64_()).unwrap_or(0.0);
            out.push_str(&format!("{:.12e},{:.12e},{:.12e},{:.12e}", smp.s.to_f64_(), p[0].to_f64_(), p[1].to_f64_(), z));
            for l in 0..n {
                for k in 0..n {
                    out.push_str(&format!(",{:.12e}", smp.matrix[(l, k)].to_f64_()));
                }
            }
            let ev = symmetric_part(&smp.matrix).sym_eigenvalues();
            out.push_str(&format!(",{:.12e},{:.12e}\n", ev[0].to_f64_(), ev[ev.len() - 1].to_f64_()));
        }
        out
    }
}

/// Re-solves every contribution with its tangents rotated by `angles[i]` and compares the
/// physical slip action on a fixed tangent test vector. Returns the largest relative discrepancy.
pub fn rotate_frame_check<T: Real>(field: &SlipField<T>, angles: &[T]) -> Result<T> {
    if angles.len() != field.samples.len() {
        return Err(Error::Incompatible("one rotation angle per sample is required".into()));
    }
    let worst: Vec<Result<T>> = field
        .samples
        .par_iter()
        .zip(angles.par_iter())
        .map(|(smp, angle)| {
            let tangents = smp.tangents();
            let g: Vec<T> = if tangents.len() == 1 {
                tangents[0].clone()
            } else {
                (0..tangents[0].len()).map(|i| tangents[0][i] + T::lit(0.5) * tangents[1][i]).collect()
            };
            let mut rotated_tensor = Mat::zeros(g.len(), g.len());
            for c in &smp.contributions {
                let rot = rotate(&c.tangents, *angle);
                let m = if *angle == T::zero() { c.matrix.clone() } else { slip_matrix(&c.spec, &rot)?.matrix };
                let t = tensor(&m, &rot);
                for i in 0..g.len() {
                    for j in 0..g.len() {
                        rotated_tensor[(i, j)] = rotated_tensor[(i, j)] + c.weight * t[(i, j)];
                    }
                }
            }
            let a = smp.tensor().mul_vec(&g);
            let b = rotated_tensor.mul_vec(&g);
            let diff = crate::dense::norm(&a.iter().zip(&b).map(|(x, y)| *x - *y).collect::<Vec<_>>());
            let scale = crate::dense::norm(&a);
            Ok(if scale > T::zero() { diff / scale } else { diff })
        })
        .collect();
    let mut out = T::zero();
    for w in worst {
        out = out.max(w?);
    }
    Ok(out)
}

/// Rotation Λ = N Ξ in the tangent plane; in 2D the tangent line only admits the sign flip
/// (applied when cos(angle) < 0).
fn rotate<T: Real>(tangents: &[Vec<T>], angle: T) -> Vec<Vec<T>> {
    if tangents.len() == 1 {
        let s = if angle.cos() < T::zero() { -T::one() } else { T::one() };
        return vec![tangents[0].iter().map(|v| *v * s).collect()];
    }
    let (c, s) = (angle.cos(), angle.sin());
    let a = &tangents[0];
    let b = &tangents[1];
    vec![
        a.iter().zip(b).map(|(x, y)| c * *x + s * *y).collect(),
        a.iter().zip(b).map(|(x, y)| -s * *x + c * *y).collect(),
    ]
}

/// min over `query_count` equally spaced curve positions of −(largest eigenvalue).
pub fn negdef_scan<T: Real>(field: &SlipField<T>, query_count: usize) -> Result<T> {
    let positions = field.curve.sample_positions(query_count.max(2));
    let mut margin = T::infinity();
    for s in positions {
        let m = field.matrix_at(s);
        let scale = m.max_abs();
        for i in 0..m.rows {
            for j in 0..i {
                if (m[(i, j)] - m[(j, i)]).abs() > T::lit(1e-8) * scale {
                    return Err(Error::FieldCorrupt(format!("interpolated matrix not symmetric at s = {}", s.to_f64_())));
                }
            }
        }
        let ev = symmetric_part(&m).sym_eigenvalues();
        margin = margin.min(-ev[ev.len() - 1]);
    }
    Ok(margin)
}
