use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProfileKind<T> {
    /// γ ≡ height.
    Constant { height: T },
    /// γ = offset + amplitude (1 + cos 2π k·y').
    Cosine { offset: T, amplitude: T, wave: Vec<i64> },
    /// γ = offset + amplitude [(1 + cos 2πy₁) + ratio (1 + cos 2π n y₁)].
    TwoScale { offset: T, amplitude: T, harmonic: i64, ratio: T },
}

/// Single-valued periodic roughness height γ(x̃', y'), scaled by (1 + μ sin 2πx̃₁).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoughnessProfile<T> {
    pub kind: ProfileKind<T>,
    pub bound: T,
    pub modulation: T,
}

impl<T: Real> RoughnessProfile<T> {
    pub fn new(kind: ProfileKind<T>, bound: T) -> Result<Self> {
        Self::with_modulation(kind, bound, T::zero())
    }

    pub fn with_modulation(kind: ProfileKind<T>, bound: T, modulation: T) -> Result<Self> {
        let p = RoughnessProfile { kind, bound, modulation };
        p.validate()?;
        Ok(p)
    }

    pub fn constant(height: T) -> Self {
        RoughnessProfile { kind: ProfileKind::Constant { height }, bound: height, modulation: T::zero() }
    }

    /// offset + amplitude (1 + cos 2πy₁), bound set to its maximum.
    pub fn cosine(offset: T, amplitude: T) -> Self {
        RoughnessProfile {
            kind: ProfileKind::Cosine { offset, amplitude, wave: vec![1] },
            bound: offset + T::lit(2.0) * amplitude.abs(),
            modulation: T::zero(),
        }
    }

    fn base(&self, y: &[T]) -> T {
        let tau = T::TAU();
        match &self.kind {
            ProfileKind::Constant { height } => *height,
            ProfileKind::Cosine { offset, amplitude, wave } => {
                let phase = wave.iter().zip(y).fold(T::zero(), |acc, (k, yi)| acc + T::lit(*k as f64) * *yi);
                *offset + *amplitude * (T::one() + (tau * phase).cos())
            }
            ProfileKind::TwoScale { offset, amplitude, harmonic, ratio } => {
                let y1 = y[0];
                *offset
                    + *amplitude
                        * ((T::one() + (tau * y1).cos())
                            + *ratio * (T::one() + (tau * T::lit(*harmonic as f64) * y1).cos()))
            }
        }
    }

    pub fn height(&self, base_point: &[T], y: &[T]) -> T {
        let m = if self.modulation == T::zero() || base_point.is_empty() {
            T::one()
        } else {
            T::one() + self.modulation * (T::TAU() * base_point[0]).sin()
        };
        self.base(y) * m
    }

    pub fn depends_on_base_point(&self) -> bool {
        self.modulation != T::zero()
    }

    pub fn is_flat(&self) -> bool {
        match &self.kind {
            ProfileKind::Constant { .. } => true,
            ProfileKind::Cosine { amplitude, .. } => *amplitude == T::zero(),
            ProfileKind::TwoScale { amplitude, .. } => *amplitude == T::zero(),
        }
    }

    /// Sampled (min, max) of γ over one period for a fixed base point.
    pub fn range(&self, base_point: &[T], lateral_dim: usize) -> (T, T) {
        let n = 256usize;
        let mut lo = T::infinity();
        let mut hi = T::neg_infinity();
        let count = if lateral_dim == 1 { n } else { n * n };
        for k in 0..count {
            let y: Vec<T> = if lateral_dim == 1 {
                vec![T::from_usize_(k) / T::from_usize_(n)]
            } else {
                vec![T::from_usize_(k % n) / T::from_usize_(n), T::from_usize_(k / n) / T::from_usize_(n)]
            };
            let h = self.height(base_point, &y);
            lo = lo.min(h);
            hi = hi.max(h);
        }
        (lo, hi)
    }

    pub fn validate(&self) -> Result<()> {
        if let ProfileKind::Cosine { wave, .. } = &self.kind {
            if wave.is_empty() || wave.len() > 2 || wave.iter().all(|k| *k == 0) {
                return Err(Error::InvalidProfile("cosine wave vector must be a nonzero integer vector".into()));
            }
        }
        if self.modulation.abs() >= T::one() {
            return Err(Error::InvalidProfile("modulation must lie in (-1, 1)".into()));
        }
        let lateral = match &self.kind {
            ProfileKind::Cosine { wave, .. } => wave.len(),
            _ => 1,
        };
        let extremes = [vec![T::zero()], vec![T::lit(0.25)], vec![T::lit(0.75)]];
        for bp in &extremes {
            let (lo, hi) = self.range(bp, lateral);
            if lo < T::zero() {
                return Err(Error::InvalidProfile(format!("height goes negative ({:e})", lo.to_f64_())));
            }
            if hi > self.bound * (T::one() + T::lit(1e-12)) {
                return Err(Error::InvalidProfile(format!(
                    "height {:e} exceeds the bound M = {:e}",
                    hi.to_f64_(),
                    self.bound.to_f64_()
                )));
            }
        }
        Ok(())
    }
}
