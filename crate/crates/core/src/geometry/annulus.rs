use serde::{Deserialize, Serialize};

use super::RoughnessProfile;
use crate::error::{Error, Result};
use crate::real::Real;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AnnulusResolution<T> {
    /// Angular elements per roughness period.
    pub elems_per_period: usize,
    /// Radial elements across the rough layer between the wall and Γ.
    pub layer_elems: usize,
    /// Radial elements per ε inside the uniform band next to Γ.
    pub wall_elems_per_eps: usize,
    /// Thickness of the uniform band, in units of ε.
    pub wall_band: T,
    /// Largest ratio between neighbouring radial elements outside the band.
    pub growth: T,
    /// Largest radial element size.
    pub max_radial_size: T,
    /// Roughness periods per computational sector; 0 means the full annulus.
    pub sector_periods: usize,
    /// Used only when ε = 0: angular elements per sector, uniform radial elements, sectors per turn.
    pub smooth_theta_elems: usize,
    pub smooth_radial_elems: usize,
    pub smooth_sectors: usize,
}

impl<T: Real> Default for AnnulusResolution<T> {
    fn default() -> Self {
        AnnulusResolution {
            elems_per_period: 8,
            layer_elems: 3,
            wall_elems_per_eps: 6,
            wall_band: T::lit(6.0),
            growth: T::lit(1.15),
            max_radial_size: T::lit(0.04),
            sector_periods: 1,
            smooth_theta_elems: 8,
            smooth_radial_elems: 16,
            smooth_sectors: 16,
        }
    }
}

impl<T: Real> AnnulusResolution<T> {
    /// Every length scale divided by `factor`.
    pub fn refined(&self, factor: usize) -> Self {
        let f = T::from_usize_(factor);
        AnnulusResolution {
            elems_per_period: self.elems_per_period * factor,
            layer_elems: self.layer_elems * factor,
            wall_elems_per_eps: self.wall_elems_per_eps * factor,
            wall_band: self.wall_band,
            growth: self.growth.powf(T::one() / f),
            max_radial_size: self.max_radial_size / f,
            sector_periods: self.sector_periods,
            smooth_theta_elems: self.smooth_theta_elems * factor,
            smooth_radial_elems: self.smooth_radial_elems * factor,
            smooth_sectors: self.smooth_sectors,
        }
    }
}

/// Boundary-fitted layout of the rough annulus Ω^ε ⊃ Ω.
///
/// Angular position is described by s = θ/2π ∈ [0, 1); the roughness is γ(s, s/ε).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RoughAnnulus<T> {
    pub inner_radius: T,
    pub outer_radius: T,
    pub eps: T,
    pub profile: RoughnessProfile<T>,
    /// Number of roughness periods around the circle (1/ε), 0 when ε = 0.
    pub periods: usize,
    /// Angular extent of the computational sector in s units.
    pub sector_span: T,
    pub sectors: usize,
    pub theta_elems: usize,
    /// Element boundaries r₀ = inner_radius < … < outer_radius of the smooth part Ω.
    pub omega_radii: Vec<T>,
    pub layer_elems: usize,
}

pub fn build_rough_annulus<T: Real>(
    inner_radius: T,
    outer_radius: T,
    eps: T,
    profile: &RoughnessProfile<T>,
    res: &AnnulusResolution<T>,
) -> Result<RoughAnnulus<T>> {
    if !(inner_radius > T::zero() && outer_radius > inner_radius) {
        return Err(Error::Geometry("radii must satisfy 0 < inner < outer".into()));
    }
    if eps < T::zero() {
        return Err(Error::Geometry("ε must be non-negative".into()));
    }
    if eps == T::zero() {
        if res.smooth_sectors == 0 || res.smooth_theta_elems == 0 || res.smooth_radial_elems == 0 {
            return Err(Error::Resolution("smooth annulus needs positive element counts".into()));
        }
        let n = res.smooth_radial_elems;
        let omega_radii = (0..=n)
            .map(|k| inner_radius + (outer_radius - inner_radius) * T::from_usize_(k) / T::from_usize_(n))
            .collect();
        return Ok(RoughAnnulus {
            inner_radius,
            outer_radius,
            eps,
            profile: profile.clone(),
            periods: 0,
            sector_span: T::one() / T::from_usize_(res.smooth_sectors),
            sectors: res.smooth_sectors,
            theta_elems: res.smooth_theta_elems,
            omega_radii,
            layer_elems: 0,
        });
    }
    let periods_f = (T::one() / eps).round();
    if (periods_f * eps - T::one()).abs() > T::lit(1e-9) {
        return Err(Error::Geometry(format!("1/ε = {} is not an integer number of periods", (T::one() / eps).to_f64_())));
    }
    let periods = periods_f.to_usize().unwrap_or(0);
    if eps * profile.bound >= inner_radius || eps * profile.bound >= outer_radius - inner_radius {
        return Err(Error::Geometry(format!(
            "rough layer εM = {:e} does not fit inside the annulus",
            (eps * profile.bound).to_f64_()
        )));
    }
    if res.elems_per_period < 8 {
        return Err(Error::Resolution(format!(
            "{} cells per roughness period, at least 8 required",
            res.elems_per_period
        )));
    }
    if res.layer_elems == 0 || res.wall_elems_per_eps == 0 {
        return Err(Error::Resolution("layer and wall element counts must be positive".into()));
    }
    let sector_periods = if res.sector_periods == 0 { periods } else { res.sector_periods };
    if periods % sector_periods != 0 {
        return Err(Error::Geometry(format!("{sector_periods} periods per sector do not divide {periods}")));
    }
    let sectors = periods / sector_periods;
    // sample the wall for self-intersection (r must stay positive and single valued)
    let samples = 64 * periods;
    for k in 0..samples {
        let s = T::from_usize_(k) / T::from_usize_(samples);
        let g = profile.height(&[s], &[s / eps]);
        if !(g >= T::zero()) || inner_radius - eps * g <= T::zero() {
            return Err(Error::Geometry(format!("rough wall degenerates at s = {}", s.to_f64_())));
        }
    }
    let omega_radii = radial_layout(inner_radius, outer_radius, eps, res);
    Ok(RoughAnnulus {
        inner_radius,
        outer_radius,
        eps,
        profile: profile.clone(),
        periods,
        sector_span: T::from_usize_(sector_periods) / T::from_usize_(periods),
        sectors,
        theta_elems: res.elems_per_period * sector_periods,
        omega_radii,
        layer_elems: res.layer_elems,
    })
}

fn radial_layout<T: Real>(r0: T, r1: T, eps: T, res: &AnnulusResolution<T>) -> Vec<T> {
    let h0 = eps / T::from_usize_(res.wall_elems_per_eps);
    let band = (eps * res.wall_band).min((r1 - r0) / T::lit(2.0));
    let nband = (band / h0).round().to_usize().unwrap_or(1).max(1);
    let mut radii = vec![r0];
    for k in 1..=nband {
        radii.push(r0 + h0 * T::from_usize_(k));
    }
    let start = *radii.last().unwrap();
    let mut sizes = Vec::new();
    let mut h = h0;
    let mut total = T::zero();
    while total < r1 - start {
        h = (h * res.growth).min(res.max_radial_size);
        sizes.push(h);
        total = total + h;
    }
    // rescale the graded part to land on the outer radius
    let scale = (r1 - start) / total;
    let mut r = start;
    for s in sizes {
        r = r + s * scale;
        radii.push(r);
    }
    *radii.last_mut().unwrap() = r1;
    radii
}

impl<T: Real> RoughAnnulus<T> {
    /// Radius of the rough wall at angular coordinate s.
    pub fn wall_radius(&self, s: T) -> T {
        if self.eps == T::zero() {
            return self.inner_radius;
        }
        self.inner_radius - self.eps * self.profile.height(&[s], &[s / self.eps])
    }

    pub fn is_smooth(&self) -> bool {
        self.eps == T::zero()
    }

    /// Angular element boundaries of the sector in s units.
    pub fn theta_nodes(&self) -> Vec<T> {
        (0..=self.theta_elems)
            .map(|k| self.sector_span * T::from_usize_(k) / T::from_usize_(self.theta_elems))
            .collect()
    }
}
