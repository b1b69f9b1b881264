use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failures raised anywhere in the model, geometry, flow or diagnostics layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("time coordinate {tau} outside the model interval [{a}, 0)")]
    Domain { tau: f64, a: f64 },

    #[error("spatial metric is not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("principal curvatures {kappa:?} lie outside the positive cone")]
    OutsideCone { kappa: Vec<f64> },

    #[error("shape operator is not self-adjoint with respect to the metric (residual {residual:e})")]
    NonSymmetric { residual: f64 },

    #[error("graph is not spacelike at grid point {index}: |Du|^2 = {norm_sq}")]
    NotSpacelike { index: usize, norm_sq: f64 },

    #[error("graph is not strictly convex at grid point {index}: smallest principal curvature {kappa_min:e}")]
    NotConvex { index: usize, kappa_min: f64 },

    #[error("shape operator has a complex spectrum (imaginary residual {residual:e})")]
    ComplexSpectrum { residual: f64 },

    #[error("induced metric inverse residual {residual:e} at grid point {index}")]
    MetricInverse { index: usize, residual: f64 },

    #[error("flow is not future directed at grid point {index}: du/dt = {rate:e}")]
    NotMonotone { index: usize, rate: f64 },

    #[error("step rejected after {halvings} halvings at t = {t}: {cause}")]
    Stiffness { t: f64, halvings: u32, cause: String },

    #[error("coordinate slice at tau = {tau} left the positive cone")]
    ConvexityLost { tau: f64 },

    #[error("series value {value:e} at t = {t} is not positive")]
    NonPositiveSeries { t: f64, value: f64 },

    #[error("fit window holds {found} samples, at least {needed} are required")]
    InsufficientSamples { found: usize, needed: usize },

    #[error("insufficient range: {0}")]
    InsufficientRange(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Process exit code for the `ifcf` binary.
    ///
    /// | code | meaning |
    /// |------|---------|
    /// | 2 | configuration |
    /// | 3 | not spacelike |
    /// | 4 | not convex / outside the positive cone |
    /// | 5 | stiffness (step rejected too often) |
    /// | 6 | i/o |
    /// | 7 | model domain (time outside `[a,0)`, indefinite metric) |
    /// | 8 | numerical consistency (complex spectrum, asymmetry, metric inverse, monotonicity) |
    /// | 9 | diagnostics (rate fits, transition range) |
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::NotSpacelike { .. } => 3,
            Error::NotConvex { .. } | Error::OutsideCone { .. } | Error::ConvexityLost { .. } => 4,
            Error::Stiffness { .. } => 5,
            Error::Io(_) => 6,
            Error::Domain { .. } | Error::NotPositiveDefinite { .. } => 7,
            Error::ComplexSpectrum { .. }
            | Error::NonSymmetric { .. }
            | Error::MetricInverse { .. }
            | Error::NotMonotone { .. } => 8,
            Error::NonPositiveSeries { .. }
            | Error::InsufficientSamples { .. }
            | Error::InsufficientRange(_) => 9,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}
