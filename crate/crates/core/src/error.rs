use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid lattice: {0}")]
    InvalidLattice(String),
    #[error("spectral gap {gap:.3e} below tolerance {tol:.1e}")]
    GapClosed { gap: f64, tol: f64 },
    #[error("operator not invertible: smallest singular value {smin:.3e} < {tol:.1e}")]
    NotInvertible { smin: f64, tol: f64 },
    #[error("eigenvalue {re:.3e}{im:+.3e}i too close to the branch cut (-inf, 0]")]
    BranchCutHit { re: f64, im: f64 },
    #[error("dimension {0} is odd, an even dimension is required")]
    OddDimension(usize),
    #[error("dimension {0} is even, an odd dimension is required")]
    EvenDimension(usize),
    #[error("fiber {fiber} incompatible with class {class}: must be a multiple of {need}")]
    FiberParity { class: String, fiber: usize, need: usize },
    #[error("operator is not chiral: residual {0:.3e}")]
    NotChiral(f64),
    #[error("operator is not flat: residual {0:.3e}")]
    NotFlat(f64),
    #[error("class {0} has no residual characterization")]
    UnsupportedClass(String),
    #[error("not converged: {0}")]
    NotConverged(String),
    #[error("precondition bound violated at pair {k}: {norm:.3e} > {bound:.3e}")]
    PreconditionBound { k: usize, norm: f64, bound: f64 },
    #[error("insufficient volume: {found} islands fit, {wanted} requested")]
    InsufficientVolume { found: usize, wanted: usize },
    #[error("matching failed: {0} sites unmatched")]
    MatchingFailed(usize),
    #[error("path became singular at t = {t}: smallest singular value {smin:.3e}")]
    SingularPath { t: f64, smin: f64 },
    #[error("split failed: {0}")]
    SplitFailed(String),
    #[error("isometry mismatch: residual {0:.3e}")]
    IsometryMismatch(f64),
    #[error("collinearity failure at site {site}: |eta| = {eta:.3e} < {bound:.3e}")]
    CollinearityFailure { site: usize, eta: f64, bound: f64 },
    #[error("site set is not a union of dimers: {0}")]
    NotDimerClosed(String),
    #[error("invalid coset representatives: {0}")]
    InvalidCosets(String),
    #[error("lattice or fiber mismatch: {0}")]
    LatticeMismatch(String),
    #[error("momentum grid too coarse: rounding residual {0:.3e}")]
    GridTooCoarse(f64),
    #[error("unsupported Clifford signature ({0},{1})")]
    UnsupportedSignature(usize, usize),
    #[error("cannot certify proper set: {0}")]
    CannotCertify(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
