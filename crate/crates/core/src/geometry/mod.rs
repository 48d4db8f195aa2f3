mod annulus;
mod chart;
mod roughness;

pub use annulus::{build_rough_annulus, AnnulusResolution, RoughAnnulus};
pub use chart::{decay_rate_bound, metric_matrices, tube_point, CellCoefficients, ChartKind, SurfacePatch};
pub use roughness::{ProfileKind, RoughnessProfile};
