use thiserror::Error;

/// Unified error type for the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("model spec parse error: {0}")]
    Parse(String),

    #[error("term {index}: n*beta = {n_beta} violates the admissibility condition n*beta > -1")]
    Admissibility { index: usize, n_beta: f64 },

    #[error("scaling radius R_a is required when scaled-radial terms are present")]
    MissingScalingRadius,

    #[error("domain error: {0}")]
    Domain(String),

    #[error(
        "boundary condition violated for term {term}: d^{order} coeff / d psi^{order} \
         does not vanish at psi = 0"
    )]
    BoundaryCondition { term: usize, order: usize },

    #[error(
        "term {term} does not decay at large potential (every atom must carry exp(-k x) \
         with k > 0), so the tail integral diverges"
    )]
    Divergence { term: usize },

    #[error("quadrature failed to converge: achieved {achieved:.3e}, requested {requested:.3e}")]
    QuadratureNonConvergence { achieved: f64, requested: f64 },

    #[error("unsupported parameters: {0}")]
    UnsupportedParameters(String),

    #[error(
        "tabulated coefficient derivative of order {order}: estimated error {estimate:.3e} \
         exceeds the budget {budget:.3e}"
    )]
    TabulatedDerivative {
        order: usize,
        estimate: f64,
        budget: f64,
    },

    #[error(
        "moments are undefined where the density vanishes (potential = {potential}, R = {radius})"
    )]
    UndefinedMoment { potential: f64, radius: f64 },

    #[error("variant {variant} is incompatible with the {convention} potential convention")]
    VariantConvention {
        variant: &'static str,
        convention: &'static str,
    },

    #[error("synthesis error: {0}")]
    Synthesis(String),
}

pub type Result<T> = std::result::Result<T, Error>;
