use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BdfError {
    #[error("invalid lattice: {0}")]
    InvalidLattice(String),
    #[error("non-finite input: {0}")]
    NonFinite(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("lattice mismatch: {0}")]
    LatticeMismatch(String),
    #[error("quadrature did not converge on [{a}, {b}]: estimate {value} with error {error}")]
    Quadrature {
        a: f64,
        b: f64,
        value: f64,
        error: f64,
    },
    #[error("eigenvalue {eigenvalue} lies within {tolerance} of the Fermi level {mu}")]
    FermiDegeneracy {
        mu: f64,
        eigenvalue: f64,
        tolerance: f64,
    },
    #[error("no eigenvalue in the window ({lower}, {upper})")]
    NoEigenvalue { lower: f64, upper: f64 },
    #[error("{count} separate eigenvalue clusters in the window ({lower}, {upper})")]
    MultipleEigenvalues {
        lower: f64,
        upper: f64,
        count: usize,
    },
    #[error("no sign change on [{lower}, {upper}] (values {f_lower}, {f_upper})")]
    NoSignChange {
        lower: f64,
        upper: f64,
        f_lower: f64,
        f_upper: f64,
    },
    #[error("density of a non-Hermitian operator: imaginary residue {0}")]
    NonHermitian(f64),
    #[error("eigendecomposition failed: {0}")]
    Eigen(String),
    #[error("scf iteration {iteration}: {source}")]
    Scf {
        iteration: usize,
        source: Box<BdfError>,
    },
    #[error("i/o: {0}")]
    Io(String),
    #[error("malformed file: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, BdfError>;

impl From<std::io::Error> for BdfError {
    fn from(e: std::io::Error) -> Self {
        BdfError::Io(e.to_string())
    }
}
