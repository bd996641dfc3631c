//! Brute-force dense reference for small chains.
//!
//! Everything here works with full `dⁿ × dⁿ` matrices and full eigensystems,
//! so it is only usable up to [`ORACLE_MAX_SITES`] sites. It exists to check
//! the matrix product code, and is shipped so that custom models can be
//! validated the same way.

use ndarray::{Array1, Array2, ArrayD, IxDyn};

use crate::basis::LocalBasis;
use crate::error::OracleError;
use crate::superop::{HamiltonianTerms, MultSide, SuperMap, SuperMpo};
use crate::tensor::{eigh_hermitian, full_svd, C64};

/// Largest chain the oracle accepts.
pub const ORACLE_MAX_SITES: usize = 8;
/// Largest chain for which operator-space matrices (`d^{2n}` square) are built.
pub const SUPEROP_MAX_DIM: usize = 4096;
const EIGEN_RESIDUAL_TOL: f64 = 1e-10;

/// A dense operator on `n` sites of local dimension `d`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseOperator {
    pub n: usize,
    pub d: usize,
    pub matrix: Array2<C64>,
}

impl DenseOperator {
    pub fn new(n: usize, d: usize, matrix: Array2<C64>) -> Result<Self, OracleError> {
        check_cap(n)?;
        let dim = d.pow(n as u32);
        if matrix.dim() != (dim, dim) {
            return Err(OracleError::DimensionMismatch(matrix.nrows(), dim));
        }
        Ok(Self { n, d, matrix })
    }

    pub fn identity(n: usize, d: usize) -> Result<Self, OracleError> {
        check_cap(n)?;
        Ok(Self { n, d, matrix: Array2::eye(d.pow(n as u32)) })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// `⟪self|other⟫ = D⁻¹ tr(self† other)`.
    pub fn inner(&self, other: &DenseOperator) -> C64 {
        let s: C64 = self.matrix.iter().zip(other.matrix.iter()).map(|(a, b)| a.conj() * b).sum();
        s / self.dim() as f64
    }

    pub fn hermiticity_residual(&self) -> f64 {
        let m = &self.matrix;
        m.indexed_iter().map(|((i, j), z)| (z - m[[j, i]].conj()).norm()).fold(0.0, f64::max)
    }

    pub fn dot(&self, other: &DenseOperator) -> DenseOperator {
        DenseOperator { n: self.n, d: self.d, matrix: self.matrix.dot(&other.matrix) }
    }
}

fn check_cap(n: usize) -> Result<(), OracleError> {
    if n > ORACLE_MAX_SITES {
        return Err(OracleError::CapExceeded { n, cap: ORACLE_MAX_SITES });
    }
    Ok(())
}

fn kron_any(a: &Array2<C64>, b: &Array2<C64>) -> Array2<C64> {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    Array2::from_shape_fn((ar * br, ac * bc), |(i, j)| a[[i / br, j / bc]] * b[[i % br, j % bc]])
}

/// `I_{before} ⊗ op ⊗ I_{after}` where `op` spans `span` sites starting at `site`.
pub fn embed(op: &Array2<C64>, site: usize, span: usize, d: usize, n: usize) -> Array2<C64> {
    let before = Array2::<C64>::eye(d.pow(site as u32));
    let after = Array2::<C64>::eye(d.pow((n - site - span) as u32));
    kron_any(&kron_any(&before, op), &after)
}

/// Reassembles `H` from its local terms.
pub fn dense_hamiltonian(h: &HamiltonianTerms) -> Result<DenseOperator, OracleError> {
    check_cap(h.n)?;
    let (n, d) = (h.n, h.d);
    let dim = d.pow(n as u32);
    let mut m = Array2::<C64>::zeros((dim, dim));
    for (site, op) in &h.one_site {
        if op.dim() != (d, d) {
            return Err(OracleError::DimensionMismatch(op.nrows(), d));
        }
        m += &embed(op, *site, 1, d, n);
    }
    for (bond, op) in &h.two_site {
        if op.dim() != (d * d, d * d) {
            return Err(OracleError::DimensionMismatch(op.nrows(), d * d));
        }
        m += &embed(op, *bond, 2, d, n);
    }
    Ok(DenseOperator { n, d, matrix: m })
}

/// Full eigensystem `H = V Λ V†`.
#[derive(Clone, Debug)]
pub struct EigenSystem {
    pub n: usize,
    pub d: usize,
    pub values: Vec<f64>,
    pub vectors: Array2<C64>,
}

impl EigenSystem {
    /// Diagonalizes and asserts `‖HV − VΛ‖ < 1e-10`.
    pub fn new(h: &DenseOperator) -> Result<Self, OracleError> {
        let (values, vectors) = eigh_hermitian(&h.matrix)?;
        let lam = Array2::from_diag(&Array1::from_iter(values.iter().map(|&v| C64::new(v, 0.0))));
        let residual = (h.matrix.dot(&vectors) - vectors.dot(&lam)).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if residual > EIGEN_RESIDUAL_TOL * h.matrix.iter().map(|z| z.norm()).fold(1.0, f64::max) {
            return Err(OracleError::EigenResidual(residual));
        }
        Ok(Self { n: h.n, d: h.d, values, vectors })
    }

    /// `V† a V`.
    pub fn to_eigenbasis(&self, a: &Array2<C64>) -> Array2<C64> {
        let vh = self.vectors.t().mapv(|z| z.conj());
        vh.dot(a).dot(&self.vectors)
    }

    pub fn from_eigenbasis(&self, a: &Array2<C64>) -> Array2<C64> {
        let vh = self.vectors.t().mapv(|z| z.conj());
        self.vectors.dot(a).dot(&vh)
    }

    /// `e^{−βH}`, unnormalized.
    pub fn thermal_operator(&self, beta: f64) -> DenseOperator {
        let diag = Array1::from_iter(self.values.iter().map(|&e| C64::new((-beta * e).exp(), 0.0)));
        DenseOperator { n: self.n, d: self.d, matrix: self.from_eigenbasis(&Array2::from_diag(&diag)) }
    }

    /// `e^{iHt} a e^{−iHt}`.
    pub fn heisenberg(&self, a: &DenseOperator, t: f64) -> DenseOperator {
        let mut at = self.to_eigenbasis(&a.matrix);
        for ((m, k), z) in at.indexed_iter_mut() {
            *z *= C64::from_polar(1.0, t * (self.values[m] - self.values[k]));
        }
        DenseOperator { n: self.n, d: self.d, matrix: self.from_eigenbasis(&at) }
    }
}

/// `tr(e^{−βH} b a(t)) / tr(e^{−βH})` (or `a(t) b` for [`MultSide::Right`])
/// evaluated in the eigenbasis; reusable over many `(β, t)`.
#[derive(Clone, Debug)]
pub struct ExactCorrelator {
    values: Vec<f64>,
    a: Array2<C64>,
    b: Array2<C64>,
    side: MultSide,
}

impl ExactCorrelator {
    pub fn new(eig: &EigenSystem, a: &DenseOperator, b: Option<&DenseOperator>, side: MultSide) -> Result<Self, OracleError> {
        let dim = eig.values.len();
        if a.dim() != dim {
            return Err(OracleError::DimensionMismatch(a.dim(), dim));
        }
        let b = match b {
            Some(b) if b.dim() != dim => return Err(OracleError::DimensionMismatch(b.dim(), dim)),
            Some(b) => eig.to_eigenbasis(&b.matrix),
            None => Array2::eye(dim),
        };
        Ok(Self { values: eig.values.clone(), a: eig.to_eigenbasis(&a.matrix), b, side })
    }

    pub fn eval(&self, beta: f64, t: f64) -> C64 {
        let e0 = self.values.iter().copied().fold(f64::INFINITY, f64::min);
        let w: Vec<f64> = self.values.iter().map(|&e| (-beta * (e - e0)).exp()).collect();
        let z: f64 = w.iter().sum();
        let dim = w.len();
        let mut acc = C64::new(0.0, 0.0);
        for m in 0..dim {
            for k in 0..dim {
                // a(t)_{mk} = a_{mk} e^{it(E_m − E_k)}
                let term = match self.side {
                    // Σ w_m b_{mk} a(t)_{km}
                    MultSide::Left => {
                        self.b[[m, k]] * self.a[[k, m]] * C64::from_polar(w[m], t * (self.values[k] - self.values[m]))
                    }
                    // Σ w_m a(t)_{mk} b_{km}
                    MultSide::Right => {
                        self.a[[m, k]] * self.b[[k, m]] * C64::from_polar(w[m], t * (self.values[m] - self.values[k]))
                    }
                };
                acc += term;
            }
        }
        acc / z
    }
}

/// One-shot form of [`ExactCorrelator`] with `b` multiplied from the left.
pub fn exact_thermal_expectation(
    h: &DenseOperator,
    a: &DenseOperator,
    b: Option<&DenseOperator>,
    beta: f64,
    t: f64,
) -> Result<C64, OracleError> {
    let eig = EigenSystem::new(h)?;
    Ok(ExactCorrelator::new(&eig, a, b, MultSide::Left)?.eval(beta, t))
}

/// Operator-space entanglement entropy in bits across `cut` (sites `[0, cut)`
/// against `[cut, n)`). Local bases are unitarily related, so the matrix-unit
/// basis gives the same Schmidt values as any orthonormal operator basis.
pub fn exact_osee(x: &DenseOperator, cut: usize) -> Result<f64, OracleError> {
    let (n, d) = (x.n, x.d);
    if cut == 0 || cut >= n {
        return Ok(0.0);
    }
    let dl = d.pow(cut as u32);
    let dr = d.pow((n - cut) as u32);
    // x[(il, ir), (jl, jr)] → M[(il, jl), (ir, jr)]
    let m = Array2::from_shape_fn((dl * dl, dr * dr), |(l, r)| {
        let (il, jl) = (l / dl, l % dl);
        let (ir, jr) = (r / dr, r % dr);
        x.matrix[[il * dr + ir, jl * dr + jr]]
    });
    let (_, s, _) = full_svd(m.view())?;
    let total: f64 = s.iter().map(|v| v * v).sum();
    if total == 0.0 {
        return Ok(0.0);
    }
    Ok(s.iter()
        .map(|v| v * v / total)
        .filter(|&w| w > 0.0)
        .map(|w| -w * w.log2())
        .sum::<f64>()
        .max(0.0))
}

/// `Σ_ν c_ν P_ν` for coefficients ordered first site major.
pub fn operator_from_coefficients(coefficients: &Array1<C64>, n: usize, basis: &LocalBasis) -> Result<DenseOperator, OracleError> {
    check_cap(n)?;
    let d = basis.d();
    let p = d * d;
    if coefficients.len() != p.pow(n as u32) {
        return Err(OracleError::DimensionMismatch(coefficients.len(), p.pow(n as u32)));
    }
    // replace each ν_k by (i_k, j_k), then reorder to (i_1..i_n, j_1..j_n)
    let mut current = coefficients.to_vec();
    let mut done = 1usize;
    for k in 0..n {
        let rest = p.pow((n - k - 1) as u32);
        let mut next = vec![C64::new(0.0, 0.0); done * d * d * rest];
        for head in 0..done {
            for nu in 0..p {
                let el = basis.element(nu);
                for tail in 0..rest {
                    let c = current[(head * p + nu) * rest + tail];
                    if c == C64::new(0.0, 0.0) {
                        continue;
                    }
                    for i in 0..d {
                        for j in 0..d {
                            next[((head * d + i) * d + j) * rest + tail] += c * el[[i, j]];
                        }
                    }
                }
            }
        }
        current = next;
        done *= d * d;
    }
    let mut shape = Vec::with_capacity(2 * n);
    for _ in 0..n {
        shape.push(d);
        shape.push(d);
    }
    let t = ArrayD::from_shape_vec(IxDyn(&shape), current).expect("product of extents");
    let mut order: Vec<usize> = (0..n).map(|k| 2 * k).collect();
    order.extend((0..n).map(|k| 2 * k + 1));
    let dim = d.pow(n as u32);
    let t = t.permuted_axes(IxDyn(&order)).as_standard_layout().into_owned();
    let m = t.into_shape_with_order((dim, dim)).expect("square");
    Ok(DenseOperator { n, d, matrix: m })
}

/// Coefficients `c_ν = ⟪P_ν|x⟫`, first site major.
pub fn coefficients_from_operator(x: &DenseOperator, basis: &LocalBasis) -> Result<Array1<C64>, OracleError> {
    let (n, d) = (x.n, x.d);
    if basis.d() != d {
        return Err(OracleError::DimensionMismatch(basis.d(), d));
    }
    let p = d * d;
    let mut shape = vec![d; 2 * n];
    shape.shrink_to_fit();
    let t = x.matrix.clone().into_shape_with_order(IxDyn(&shape)).expect("square");
    // (i_1..i_n, j_1..j_n) → (i_1 j_1, i_2 j_2, ..)
    let order: Vec<usize> = (0..n).flat_map(|k| [k, n + k]).collect();
    let mut current = t.permuted_axes(IxDyn(&order)).as_standard_layout().into_owned().into_raw_vec_and_offset().0;
    let mut done = 1usize;
    for k in 0..n {
        let rest = (d * d).pow((n - k - 1) as u32);
        let mut next = vec![C64::new(0.0, 0.0); done * p * rest];
        for head in 0..done {
            for nu in 0..p {
                let el = basis.element(nu);
                for tail in 0..rest {
                    let mut acc = C64::new(0.0, 0.0);
                    for i in 0..d {
                        for j in 0..d {
                            acc += el[[i, j]].conj() * current[((head * d + i) * d + j) * rest + tail];
                        }
                    }
                    next[(head * p + nu) * rest + tail] = acc / d as f64;
                }
            }
        }
        current = next;
        done *= p;
    }
    Ok(Array1::from(current))
}

fn check_superop_dim(p: usize, n: usize) -> Result<usize, OracleError> {
    let dim = p.pow(n as u32);
    if dim > SUPEROP_MAX_DIM {
        return Err(OracleError::CapExceeded { n, cap: ORACLE_MAX_SITES });
    }
    Ok(dim)
}

fn embed_block(block: &Array2<C64>, site: usize, span: usize, p: usize, n: usize) -> Array2<C64> {
    embed(block, site, span, p, n)
}

/// Full operator-space matrix of a map from its local blocks.
pub fn dense_supermap(map: &SuperMap) -> Result<Array2<C64>, OracleError> {
    let p = map.d * map.d;
    let dim = check_superop_dim(p, map.n)?;
    let mut m = Array2::<C64>::zeros((dim, dim));
    for (site, b) in &map.one_site_blocks {
        m += &embed_block(&b.to_complex_matrix()?, *site, 1, p, map.n);
    }
    for (bond, b) in &map.two_site_blocks {
        m += &embed_block(&b.to_complex_matrix()?, *bond, 2, p, map.n);
    }
    Ok(m)
}

/// Full operator-space matrix of an MPO.
pub fn dense_mpo(mpo: &SuperMpo) -> Result<Array2<C64>, OracleError> {
    let n = mpo.n();
    let p = mpo.basis.phys_dim();
    let dim = check_superop_dim(p, n)?;
    let mut acc = ndarray::Array3::<C64>::from_elem((1, 1, 1), C64::new(1.0, 0.0)); // (out, in, w)
    for t in &mpo.tensors {
        let w: ndarray::Array4<C64> = t.clone().into_complex().into_dimensionality().expect("rank 4");
        let (_, _, _, wr) = w.dim();
        let (ro, ri, _) = acc.dim();
        let next = ndarray::Array3::from_shape_fn((ro * p, ri * p, wr), |(o, i, r)| {
            let (o0, o1) = (o / p, o % p);
            let (i0, i1) = (i / p, i % p);
            (0..acc.dim().2).map(|l| acc[[o0, i0, l]] * w[[l, o1, i1, r]]).sum()
        });
        acc = next;
    }
    let m = acc.index_axis(ndarray::Axis(2), 0).to_owned();
    debug_assert_eq!(m.nrows(), dim);
    Ok(m)
}
