use num_complex::Complex;
use rustfft::FftPlanner;
use serde::Serialize;

use super::solve::CellSolution;
use crate::error::{Error, Result};
use crate::geometry::CellCoefficients;
use crate::real::Real;

/// Fourier coefficient c_m^0 of the interface trace β(·, 0), physical components.
#[derive(Clone, Debug)]
pub struct ModeCoefficient<T> {
    pub mode: Vec<i64>,
    pub coefficient: Vec<Complex<T>>,
}

/// Closed-form field below S generated by a set of interface modes.
#[derive(Clone, Debug)]
pub struct ModePrediction<T> {
    pub modes: Vec<PredictedMode<T>>,
    /// Mode-zero value, the far-field constant.
    pub constant: Vec<T>,
}

#[derive(Clone, Debug)]
pub struct PredictedMode<T> {
    pub mode: Vec<i64>,
    pub c0: Vec<Complex<T>>,
    /// d̃ = c_m^0 · B(im/√ξ, 1).
    pub d_tilde: Complex<T>,
    pub v: Vec<Complex<T>>,
    /// 2π√ξ_m.
    pub rate: T,
}

impl<T: Real> PredictedMode<T> {
    /// (c_m(y_d), d_m(y_d)).
    pub fn at(&self, y_d: T) -> (Vec<Complex<T>>, Complex<T>) {
        let e = (self.rate * y_d).exp();
        let s = self.d_tilde * Complex::new(self.rate * y_d, T::zero());
        let c = self.c0.iter().zip(&self.v).map(|(c0, v)| (*c0 - s * *v) * e).collect();
        let d = self.d_tilde * Complex::new(-T::lit(2.0) * self.rate * e, T::zero());
        (c, d)
    }
}

impl<T: Real> ModePrediction<T> {
    fn phase(mode: &[i64], y_lat: &[T]) -> Complex<T> {
        let arg = mode.iter().zip(y_lat).fold(T::zero(), |a, (m, y)| a + T::lit(*m as f64) * *y) * T::TAU();
        Complex::new(arg.cos(), arg.sin())
    }

    /// Velocity fluctuation β − c^bl (physical components) at (y', y_d), y_d ≤ 0.
    pub fn fluctuation(&self, y_lat: &[T], y_d: T) -> Vec<T> {
        let d = self.constant.len();
        let mut out = vec![T::zero(); d];
        for m in &self.modes {
            let (c, _) = m.at(y_d);
            let ph = Self::phase(&m.mode, y_lat);
            for i in 0..d {
                out[i] = out[i] + (c[i] * ph).re;
            }
        }
        out
    }

    pub fn velocity(&self, y_lat: &[T], y_d: T) -> Vec<T> {
        let f = self.fluctuation(y_lat, y_d);
        f.iter().zip(&self.constant).map(|(a, b)| *a + *b).collect()
    }

    pub fn pressure(&self, y_lat: &[T], y_d: T) -> T {
        self.modes.iter().fold(T::zero(), |acc, m| acc + (m.at(y_d).1 * Self::phase(&m.mode, y_lat)).re)
    }
}

/// Exponential-mode reconstruction of β, ω below S from the interface trace.
pub fn mode_oracle<T: Real>(coeffs: &CellCoefficients<T>, trace: &[ModeCoefficient<T>], constant: &[T]) -> Result<ModePrediction<T>> {
    let d = coeffs.dim();
    let b = &coeffs.b_matrix;
    let mut modes = Vec::new();
    for t in trace {
        if t.mode.iter().all(|m| *m == 0) {
            continue;
        }
        if t.mode.len() != d - 1 || t.coefficient.len() != d {
            return Err(Error::Incompatible("mode coefficient has the wrong dimension".into()));
        }
        let xi = coeffs.xi(&t.mode);
        if !(xi > T::zero()) {
            return Err(Error::InvalidCoefficients(format!("ξ_m = {xi} is not positive for mode {:?}", t.mode)));
        }
        let sq = xi.sqrt();
        let mut w = vec![Complex::new(T::zero(), T::zero()); d];
        for (j, m) in t.mode.iter().enumerate() {
            w[j] = Complex::new(T::zero(), T::lit(*m as f64) / sq);
        }
        w[d - 1] = Complex::new(T::one(), T::zero());
        let v: Vec<Complex<T>> = (0..d)
            .map(|i| (0..d).fold(Complex::new(T::zero(), T::zero()), |a, j| a + w[j] * b[(i, j)]))
            .collect();
        let d_tilde = t.coefficient.iter().zip(&v).fold(Complex::new(T::zero(), T::zero()), |a, (c, v)| a + *c * *v);
        modes.push(PredictedMode { mode: t.mode.clone(), c0: t.coefficient.clone(), d_tilde, v, rate: T::TAU() * sq });
    }
    Ok(ModePrediction { modes, constant: constant.to_vec() })
}

/// Fourier coefficients of the discrete trace on S, Nyquist modes dropped.
pub fn interface_trace<T: Real>(sol: &CellSolution<T>) -> Vec<ModeCoefficient<T>> {
    let g = &*sol.grid;
    let d = g.dim;
    let n = g.n;
    let lc = g.lateral_count;
    let mut planner = FftPlanner::<T>::new();
    let fft = planner.plan_fft_forward(n);
    let mut spectra: Vec<Vec<Complex<T>>> = Vec::with_capacity(d);
    for c in 0..d {
        let mut data: Vec<Complex<T>> = (0..lc).map(|l| Complex::new(sol.node(c, l, g.js), T::zero())).collect();
        // separable multi-dimensional transform, one lateral direction at a time
        for dir in 0..d - 1 {
            let stride = n.pow(dir as u32);
            let mut line = vec![Complex::new(T::zero(), T::zero()); n];
            for start in 0..lc {
                if (start / stride) % n != 0 {
                    continue;
                }
                for i in 0..n {
                    line[i] = data[start + i * stride];
                }
                fft.process(&mut line);
                for i in 0..n {
                    data[start + i * stride] = line[i];
                }
            }
        }
        spectra.push(data);
    }
    let scale = T::one() / T::from_usize_(lc);
    let mut out = Vec::new();
    for idx in 0..lc {
        let mut mode = Vec::with_capacity(d - 1);
        let mut r = idx;
        let mut nyquist = false;
        for _ in 0..d - 1 {
            let k = r % n;
            r /= n;
            if 2 * k == n {
                nyquist = true;
            }
            mode.push(if 2 * k > n { k as i64 - n as i64 } else { k as i64 });
        }
        if nyquist {
            continue;
        }
        let mut frame = Vec::with_capacity(d);
        for c in 0..d {
            // sample positions (i + o) h; undo the offset phase
            let arg = (0..d - 1).fold(T::zero(), |a, dir| {
                let o = if dir == c { T::zero() } else { T::lit(0.5) };
                a + T::lit(mode[dir] as f64) * o * g.h
            }) * T::TAU();
            let shift = Complex::new(arg.cos(), -arg.sin());
            frame.push(spectra[c][idx] * shift * scale);
        }
        let q = &g.frame.q;
        let phys = (0..d)
            .map(|i| (0..d).fold(Complex::new(T::zero(), T::zero()), |a, j| a + frame[j] * q[(i, j)]))
            .collect();
        out.push(ModeCoefficient { mode, coefficient: phys });
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct OracleComparison {
    pub depth: f64,
    pub absolute_error: f64,
    pub fluctuation_norm: f64,
    /// absolute_error / fluctuation_norm.
    pub relative_error: f64,
}

/// Compares the solver field near depth `y_d` (< 0) with the reconstruction from its own trace.
/// Each component is compared on its own node row nearest to `y_d`.
pub fn oracle_comparison<T: Real>(sol: &CellSolution<T>, y_d: T) -> Result<OracleComparison> {
    let g = &*sol.grid;
    if !(y_d < T::zero() && y_d > -g.depth) {
        return Err(Error::OutOfRange(format!("comparison depth {y_d} must lie in (-L, 0)")));
    }
    let d = g.dim;
    let lc = g.lateral_count;
    let prediction = mode_oracle(&sol.coeffs, &interface_trace(sol), &sol.bl_constant)?;
    let c_frame = sol.bl_constant_frame();
    let mut err = T::zero();
    let mut fl = T::zero();
    for c in 0..d {
        let k = (0..g.js)
            .min_by(|a, b| {
                let da = (g.node_height(c, *a) - y_d).abs();
                let db = (g.node_height(c, *b) - y_d).abs();
                da.partial_cmp(&db).unwrap()
            })
            .unwrap_or(0);
        let y = g.node_height(c, k);
        for lat in 0..lc {
            let pos = g.node_lateral(c, lat);
            let predicted = g.frame.to_frame(&prediction.fluctuation(&pos, y))[c];
            let numeric = sol.node(c, lat, k) - c_frame[c];
            err = err + (numeric - predicted).powi(2);
            fl = fl + numeric * numeric;
        }
    }
    let area = g.h.powi((d - 1) as i32);
    let abs = (err * area).sqrt().to_f64_();
    let fln = (fl * area).sqrt().to_f64_();
    Ok(OracleComparison {
        depth: y_d.to_f64_(),
        absolute_error: abs,
        fluctuation_norm: fln,
        relative_error: if fln > 0.0 { abs / fln } else { abs },
    })
}
