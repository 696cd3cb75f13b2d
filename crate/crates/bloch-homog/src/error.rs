use thiserror::Error;

/// Everything that can go wrong in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("coefficient field rejected: symmetry defect {defect:.3e} exceeds {tol:.1e}")]
    CoefficientCheck { defect: f64, tol: f64 },

    #[error("coefficient grid {grid} cannot resolve cutoff K={k} without aliasing (need >= {need})")]
    AliasingBudget { grid: usize, k: usize, need: usize },

    #[error("spectral parameter too close to the spectrum: distance {distance:.3e}")]
    NearSpectrum { distance: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("no admissible contour: {0}")]
    Contour(String),

    #[error("compatibility violated: residual {residual:.3e}")]
    Compatibility { residual: f64 },

    #[error("format error: {0}")]
    Format(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
