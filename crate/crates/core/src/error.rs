use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("extent mismatch on paired axes: {left} vs {right}")]
    ExtentMismatch { left: usize, right: usize },
    #[error("axis {axis} out of range for rank-{rank} tensor")]
    AxisOutOfRange { axis: usize, rank: usize },
    #[error("axis {0} paired more than once")]
    RepeatedAxis(usize),
    #[error("expected rank {expected}, found rank {found}")]
    Rank { expected: usize, found: usize },
    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch { expected: Vec<usize>, found: Vec<usize> },
    #[error("shape {shape:?} does not hold {len} elements")]
    ElementCount { shape: Vec<usize>, len: usize },
    #[error("zero extent in shape {0:?}")]
    ZeroExtent(Vec<usize>),
    #[error("matrix with shape {0:?} is not square")]
    NotSquare(Vec<usize>),
    #[error("matrix dimension {dim} exceeds the supported maximum {max}")]
    TooLarge { dim: usize, max: usize },
    #[error("max_rank must be positive")]
    ZeroRank,
    #[error("weight tolerance must be nonnegative, got {0}")]
    NegativeTolerance(f64),
    #[error(
        "SVD did not converge on a {rows}x{cols} matrix (frobenius norm {frobenius:e}, \
         max |entry| {max_abs:e}, {nonfinite} non-finite entries)"
    )]
    SvdNoConvergence { rows: usize, cols: usize, frobenius: f64, max_abs: f64, nonfinite: usize },
    #[error("matrix exponential overflowed at scale {scale}")]
    ExpOverflow { scale: f64 },
    #[error("complex residue {residue:e} where a real value was required")]
    ComplexResidue { residue: f64 },
    #[error("LAPACK failure: {0}")]
    Lapack(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BasisError {
    #[error("no operator basis for local dimension {0} (supported: 2, 3, 4)")]
    UnsupportedDimension(usize),
    #[error("local dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("operator is {rows}x{cols}, expected {d}x{d}")]
    OperatorShape { rows: usize, cols: usize, d: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SuperOpError {
    #[error(transparent)]
    Basis(#[from] BasisError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("{map} requires a {required} basis")]
    WrongBasisKind { map: &'static str, required: &'static str },
    #[error("block entry ({row}, {col}) of bond/site {location} has imaginary part {residue:e}")]
    ComplexEntry { location: usize, row: usize, col: usize, residue: f64 },
    #[error("generator block at {location} is not antisymmetric (residue {residue:e})")]
    Asymmetric { location: usize, residue: f64 },
    #[error("term on site {site} outside a chain of {n} sites")]
    SiteOutOfRange { site: usize, n: usize },
    #[error("bond {bond} outside a chain of {n} sites")]
    BondOutOfRange { bond: usize, n: usize },
    #[error("Hamiltonian term is not hermitian (residue {residue:e})")]
    NonHermitian { residue: f64 },
    #[error("term has shape {found:?}, expected {expected:?}")]
    TermShape { expected: Vec<usize>, found: Vec<usize> },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MpsError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Basis(#[from] BasisError),
    #[error("basis mismatch: {0} vs {1}; transform one state first")]
    BasisMismatch(String, String),
    #[error("chain length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("site {site} outside a chain of {n} sites")]
    SiteOutOfRange { site: usize, n: usize },
    #[error("site {0} listed twice")]
    DuplicateSite(usize),
    #[error("bond {bond} outside a chain of {n} sites")]
    BondOutOfRange { bond: usize, n: usize },
    #[error("gate has shape {found:?}, expected {expected:?}")]
    GateShape { expected: Vec<usize>, found: Vec<usize> },
    #[error("invalid state: {0}")]
    Invalid(String),
    #[error("chain must have at least one site")]
    Empty,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error(transparent)]
    Mps(#[from] MpsError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("generator has a two-site block on bond {0} of a chain too short for it")]
    NonNearestNeighbor(usize),
    #[error("{direction} evolution needs a {required} generator")]
    WrongGenerator { direction: &'static str, required: &'static str },
    #[error("step must be nonnegative and finite, got {0}")]
    BadStep(f64),
    #[error("Trotter order must be 1 or 2, got {0}")]
    BadOrder(u8),
    #[error("snapshot points must be strictly increasing")]
    UnsortedSnapshots,
    #[error("snapshot point {point} is not a multiple of step {step}")]
    SnapshotOffGrid { point: f64, step: f64 },
    #[error("snapshot point {point} outside [0, {total}]")]
    SnapshotOutOfRange { point: f64, total: f64 },
    #[error("initial state basis {state} does not match generator basis {generator}")]
    BasisMismatch { state: String, generator: String },
    #[error("chain of {state} sites but generator built for {generator}")]
    LengthMismatch { state: usize, generator: usize },
    #[error("real arithmetic lost at stamp {0}")]
    RealityLost(f64),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("chain needs at least {min} sites, got {n}")]
    TooShort { n: usize, min: usize },
    #[error("impurity chain needs an even number of sites, got {0}")]
    OddLength(usize),
    #[error("expected {expected} hopping amplitudes, got {found}")]
    HoppingLength { expected: usize, found: usize },
    #[error("junction hopping must be zero, got {0}")]
    JunctionHopping(f64),
    #[error("hybridization hoppings differ: {0} vs {1}")]
    HybridizationAsymmetry(f64, f64),
    #[error("bond {bond} outside a chain of {n} sites")]
    BondOutOfRange { bond: usize, n: usize },
    #[error(transparent)]
    Mps(#[from] MpsError),
    #[error(transparent)]
    SuperOp(#[from] SuperOpError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObservableError {
    #[error(transparent)]
    Mps(#[from] MpsError),
    #[error("thermal denominator vanished or went negative ({0:e})")]
    VanishingDenominator(f64),
    #[error("time stamps of correlator series do not align")]
    StampMismatch,
    #[error("no snapshots supplied")]
    EmptySnapshots,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("dense oracle limited to {cap} sites, requested {n}")]
    CapExceeded { n: usize, cap: usize },
    #[error("operator dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("eigendecomposition residual {0:e} above 1e-10")]
    EigenResidual(f64),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Basis(#[from] BasisError),
}
