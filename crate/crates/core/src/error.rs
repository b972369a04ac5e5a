use thiserror::Error;

/// Errors raised by the toolkit.
///
/// Variants split into two families: input problems (bad parameters, violated
/// preconditions) and numerical failures (non-convergence, degeneracy met
/// during a computation). [`Error::is_validation`] tells them apart.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("expression parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },

    #[error("f(r0^2) = {value:e} does not vanish; the background r0 is not a constant solution")]
    BackgroundNotStationary { value: f64 },

    #[error("f'(r0^2) = {f_prime:e} > 0: imaginary sound speed (defocusing assumption violated)")]
    ImaginarySoundSpeed { f_prime: f64 },

    #[error("f'(r0^2) = 0: degenerate sound speed c_s = 0")]
    DegenerateSoundSpeed,

    #[error("hypothesis failed: {0}")]
    Hypothesis(String),

    #[error("no nontrivial traveling wave at speed c = {c} (c_s = {c_s})")]
    NoTravelingWave { c: f64, c_s: f64 },

    #[error("speed c = {c} exceeds the near-sonic limit {limit} (= {fraction} c_s)")]
    NearSonic { c: f64, limit: f64, fraction: f64 },

    #[error("potential has a root structure outside the dark/black family: {0}")]
    UnsupportedStructure(String),

    #[error("quadrature did not converge on [{a}, {b}]: error estimate {error:e}")]
    Quadrature { a: f64, b: f64, error: f64 },

    #[error("root finding failed: {0}")]
    RootNotFound(String),

    #[error("field vanishes (min |v| = {min_modulus:e}); use the untwisted momentum")]
    VanishingField { min_modulus: f64 },

    #[error("endpoint modulus {modulus:e} below r0/2; argument ill-defined")]
    EndpointModulus { modulus: f64 },

    #[error("phase under-resolved near x = {x}: jump {jump} between adjacent samples")]
    Resolution { x: f64, jump: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("degenerate dispersion at x = {x}: nu = {nu} below floor {floor}")]
    DegenerateDispersion { x: f64, nu: f64, floor: f64 },

    #[error("iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("non-finite value produced: {0}")]
    NonFinite(String),

    #[error("capture radius exceeded: distance {distance} > {radius}")]
    CaptureRadius { distance: f64, radius: f64 },
}

impl Error {
    /// True for errors caused by the caller's input rather than by a
    /// numerical breakdown.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidInput(_)
                | Error::Parse { .. }
                | Error::BackgroundNotStationary { .. }
                | Error::ImaginarySoundSpeed { .. }
                | Error::DegenerateSoundSpeed
                | Error::Hypothesis(_)
                | Error::NoTravelingWave { .. }
                | Error::NearSonic { .. }
                | Error::UnsupportedStructure(_)
                | Error::VanishingField { .. }
                | Error::EndpointModulus { .. }
                | Error::GridMismatch(_)
        )
    }

    /// Short machine-readable tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid_input",
            Error::Parse { .. } => "parse",
            Error::BackgroundNotStationary { .. } => "background_not_stationary",
            Error::ImaginarySoundSpeed { .. } => "imaginary_sound_speed",
            Error::DegenerateSoundSpeed => "degenerate_sound_speed",
            Error::Hypothesis(_) => "hypothesis",
            Error::NoTravelingWave { .. } => "no_traveling_wave",
            Error::NearSonic { .. } => "near_sonic",
            Error::UnsupportedStructure(_) => "unsupported_structure",
            Error::Quadrature { .. } => "quadrature",
            Error::RootNotFound(_) => "root_not_found",
            Error::VanishingField { .. } => "vanishing_field",
            Error::EndpointModulus { .. } => "endpoint_modulus",
            Error::Resolution { .. } => "resolution",
            Error::GridMismatch(_) => "grid_mismatch",
            Error::DegenerateDispersion { .. } => "degenerate_dispersion",
            Error::NonConvergence { .. } => "non_convergence",
            Error::NonFinite(_) => "non_finite",
            Error::CaptureRadius { .. } => "capture_radius",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
