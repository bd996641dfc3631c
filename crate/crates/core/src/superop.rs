//! Maps over operator space built from a local decomposition of `H`.
//!
//! With a product basis `P_ν = p_{ν_1} ⊗ .. ⊗ p_{ν_n}`, a map `X ↦ f(X)` has
//! matrix elements `[f]_μν = D⁻¹ tr(P_μ† f(P_ν))`. For `f` built from a sum of
//! nearest-neighbour terms the matrix inherits that locality, so only
//! `d² × d²` (one site) and `d⁴ × d⁴` (one bond) blocks are ever stored.
//!
//! * `χ̂ : X ↦ H X` drives thermal evolution; it is real in a real basis.
//! * `Ĥ : X ↦ [X, H] = X H − H X` drives Heisenberg evolution,
//!   `|a(t)⟫ = e^{−itĤ}|a⟫`. In a hermitian basis `Ĥ` is imaginary and
//!   antisymmetric, so we store the real antisymmetric generator `G = −iĤ`
//!   and evolve with `e^{tG}`.
//! * `B̂ : X ↦ b X` (or `X b`) for a product operator `b` is a bond-dimension-1
//!   matrix product operator.
//!
//! Two-site block rows and columns are indexed `μ₁·d² + μ₂`.

use ndarray::{Array2, Array4};

use crate::basis::{kron, BasisKind, BasisTag, LocalBasis};
use crate::error::SuperOpError;
use crate::tensor::{DenseTensor, C64};

/// Imaginary residue allowed in a block declared real.
pub const REALITY_TOL: f64 = 1e-13;
/// Antisymmetry residue allowed in a commutator generator block.
pub const SKEW_TOL: f64 = 1e-12;

/// `H = Σ one-site terms + Σ nearest-neighbour two-site terms`.
#[derive(Clone, Debug, PartialEq)]
pub struct HamiltonianTerms {
    pub n: usize,
    pub d: usize,
    /// (site, d×d operator)
    pub one_site: Vec<(usize, Array2<C64>)>,
    /// (bond j acting on sites j, j+1; d²×d² operator, row index i₁·d + i₂)
    pub two_site: Vec<(usize, Array2<C64>)>,
}

impl HamiltonianTerms {
    pub fn new(n: usize, d: usize) -> Self {
        Self { n, d, one_site: Vec::new(), two_site: Vec::new() }
    }

    pub fn push_one_site(&mut self, site: usize, op: Array2<C64>) -> &mut Self {
        self.one_site.push((site, op));
        self
    }

    pub fn push_two_site(&mut self, bond: usize, op: Array2<C64>) -> &mut Self {
        self.two_site.push((bond, op));
        self
    }

    /// Checks index ranges, term shapes and hermiticity of every term.
    pub fn validate(&self) -> Result<(), SuperOpError> {
        let d = self.d;
        for (site, op) in &self.one_site {
            if *site >= self.n {
                return Err(SuperOpError::SiteOutOfRange { site: *site, n: self.n });
            }
            check_term(op, d)?;
        }
        for (bond, op) in &self.two_site {
            if *bond + 1 >= self.n {
                return Err(SuperOpError::BondOutOfRange { bond: *bond, n: self.n });
            }
            check_term(op, d * d)?;
        }
        Ok(())
    }

    /// Number of product-operator terms before any regrouping.
    pub fn term_count(&self) -> usize {
        self.one_site.len() + self.two_site.len()
    }
}

fn check_term(op: &Array2<C64>, dim: usize) -> Result<(), SuperOpError> {
    if op.dim() != (dim, dim) {
        return Err(SuperOpError::TermShape { expected: vec![dim, dim], found: vec![op.nrows(), op.ncols()] });
    }
    let scale = op.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let residue = op
        .indexed_iter()
        .map(|((i, j), z)| (z - op[[j, i]].conj()).norm())
        .fold(0.0, f64::max);
    if residue > 1e-12 * scale {
        return Err(SuperOpError::NonHermitian { residue });
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MapKind {
    /// `χ̂ : X ↦ H X`.
    LeftMultiplication,
    /// `G = −iĤ` with `Ĥ : X ↦ [X, H]`.
    CommutatorGenerator,
}

/// Local blocks of a map over operator space.
#[derive(Clone, Debug, PartialEq)]
pub struct SuperMap {
    pub n: usize,
    pub d: usize,
    pub kind: MapKind,
    pub basis: BasisTag,
    /// (site, d²×d²)
    pub one_site_blocks: Vec<(usize, DenseTensor)>,
    /// (bond, d⁴×d⁴), one per Hamiltonian bond term.
    pub two_site_blocks: Vec<(usize, DenseTensor)>,
    /// Product terms the map expands into: equal to the Hamiltonian term
    /// count for `χ̂`, twice it for the commutator.
    pub product_terms: usize,
}

impl SuperMap {
    /// True when every stored block is real.
    pub fn is_real(&self) -> bool {
        self.one_site_blocks.iter().chain(&self.two_site_blocks).all(|(_, b)| b.is_real())
    }
}

/// `[f]_μν = D⁻¹ tr(P_μ† f(P_ν))` over the `sites`-fold product basis.
pub fn superop_matrix<F>(basis: &LocalBasis, sites: usize, f: F) -> Array2<C64>
where
    F: Fn(&Array2<C64>) -> Array2<C64>,
{
    let products = product_basis(basis, sites);
    let dim = products[0].nrows() as f64;
    let m = products.len();
    let mut out = Array2::zeros((m, m));
    for (nu, p_nu) in products.iter().enumerate() {
        let image = f(p_nu);
        for (mu, p_mu) in products.iter().enumerate() {
            let mut acc = C64::new(0.0, 0.0);
            for (x, y) in p_mu.iter().zip(image.iter()) {
                acc += x.conj() * y;
            }
            out[[mu, nu]] = acc / dim;
        }
    }
    out
}

/// All `sites`-fold Kronecker products of basis elements, first site major.
pub fn product_basis(basis: &LocalBasis, sites: usize) -> Vec<Array2<C64>> {
    let mut out: Vec<Array2<C64>> = vec![Array2::eye(1)];
    for _ in 0..sites {
        out = out.iter().flat_map(|a| basis.elements().iter().map(move |p| kron(a, p))).collect();
    }
    out
}

fn require_kind(basis: &LocalBasis, kind: BasisKind, map: &'static str) -> Result<(), SuperOpError> {
    if basis.kind() != kind {
        return Err(SuperOpError::WrongBasisKind { map, required: kind.as_str() });
    }
    Ok(())
}

fn realify(block: Array2<C64>, location: usize) -> Result<DenseTensor, SuperOpError> {
    for ((row, col), z) in block.indexed_iter() {
        if z.im.abs() > REALITY_TOL {
            return Err(SuperOpError::ComplexEntry { location, row, col, residue: z.im.abs() });
        }
    }
    Ok(DenseTensor::from_matrix(block.mapv(|z| z.re)))
}

/// Builds `χ̂ : X ↦ H X` in a real basis.
pub fn build_chi(h: &HamiltonianTerms, basis: &LocalBasis) -> Result<SuperMap, SuperOpError> {
    require_kind(basis, BasisKind::Real, "left multiplication map")?;
    if basis.d() != h.d {
        return Err(crate::error::BasisError::DimensionMismatch(basis.d(), h.d).into());
    }
    h.validate()?;
    let mut one_site_blocks = Vec::with_capacity(h.one_site.len());
    for (site, op) in &h.one_site {
        let block = superop_matrix(basis, 1, |x| op.dot(x));
        one_site_blocks.push((*site, realify(block, *site)?));
    }
    let mut two_site_blocks = Vec::with_capacity(h.two_site.len());
    for (bond, op) in &h.two_site {
        let block = superop_matrix(basis, 2, |x| op.dot(x));
        two_site_blocks.push((*bond, realify(block, *bond)?));
    }
    Ok(SuperMap {
        n: h.n,
        d: h.d,
        kind: MapKind::LeftMultiplication,
        basis: basis.tag(),
        one_site_blocks,
        two_site_blocks,
        product_terms: h.term_count(),
    })
}

/// Builds the real generator `G = −iĤ` of Heisenberg evolution in a
/// hermitian basis, `Ĥ X = X H − H X`.
pub fn build_commutator_generator(h: &HamiltonianTerms, basis: &LocalBasis) -> Result<SuperMap, SuperOpError> {
    require_kind(basis, BasisKind::Hermitian, "commutator map")?;
    if basis.d() != h.d {
        return Err(crate::error::BasisError::DimensionMismatch(basis.d(), h.d).into());
    }
    h.validate()?;
    let minus_i = C64::new(0.0, -1.0);
    let generator = |op: &Array2<C64>, sites: usize, location: usize| -> Result<DenseTensor, SuperOpError> {
        let right = superop_matrix(basis, sites, |x| x.dot(op));
        let left = superop_matrix(basis, sites, |x| op.dot(x));
        let g = (right - left).mapv(|z| z * minus_i);
        let scale = g.iter().map(|z| z.norm()).fold(1.0, f64::max);
        let residue = g.indexed_iter().map(|((i, j), z)| (z + g[[j, i]]).norm()).fold(0.0, f64::max);
        if residue > SKEW_TOL * scale {
            return Err(SuperOpError::Asymmetric { location, residue });
        }
        realify(g, location)
    };
    let mut one_site_blocks = Vec::with_capacity(h.one_site.len());
    for (site, op) in &h.one_site {
        one_site_blocks.push((*site, generator(op, 1, *site)?));
    }
    let mut two_site_blocks = Vec::with_capacity(h.two_site.len());
    for (bond, op) in &h.two_site {
        two_site_blocks.push((*bond, generator(op, 2, *bond)?));
    }
    Ok(SuperMap {
        n: h.n,
        d: h.d,
        kind: MapKind::CommutatorGenerator,
        basis: basis.tag(),
        one_site_blocks,
        two_site_blocks,
        product_terms: 2 * h.term_count(),
    })
}

/// Which side a multiplication map acts from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MultSide {
    /// `X ↦ b X`
    Left,
    /// `X ↦ X b`
    Right,
}

/// A matrix product operator over operator space.
///
/// Site tensors have axes `(left bond, out, in, right bond)` with `out`/`in`
/// running over the `d²` local basis labels.
#[derive(Clone, Debug, PartialEq)]
pub struct SuperMpo {
    pub basis: BasisTag,
    pub tensors: Vec<DenseTensor>,
}

/// A product of single-site operators times a scalar.
#[derive(Clone, Debug, PartialEq)]
pub struct ProductTerm {
    pub coefficient: C64,
    pub factors: Vec<(usize, Array2<C64>)>,
}

impl ProductTerm {
    pub fn new(coefficient: C64, factors: Vec<(usize, Array2<C64>)>) -> Self {
        Self { coefficient, factors }
    }
}

fn mult_block(op: &Array2<C64>, side: MultSide, basis: &LocalBasis) -> Array2<C64> {
    match side {
        MultSide::Left => superop_matrix(basis, 1, |x| op.dot(x)),
        MultSide::Right => superop_matrix(basis, 1, |x| x.dot(op)),
    }
}

fn as_tensor(block: Array4<C64>) -> DenseTensor {
    let real = block.iter().all(|z| z.im == 0.0);
    if real {
        DenseTensor::Real(block.mapv(|z| z.re).into_dyn())
    } else {
        DenseTensor::Complex(block.into_dyn())
    }
}

/// Multiplication map for a product operator `b = Π_j b_j` (identity on
/// unlisted sites), as a bond-dimension-1 MPO.
pub fn build_mult_mpo(
    n: usize,
    factors: &[(usize, Array2<C64>)],
    side: MultSide,
    basis: &LocalBasis,
) -> Result<SuperMpo, SuperOpError> {
    build_product_mpo(n, &ProductTerm::new(C64::new(1.0, 0.0), factors.to_vec()), side, basis)
}

pub fn build_product_mpo(
    n: usize,
    term: &ProductTerm,
    side: MultSide,
    basis: &LocalBasis,
) -> Result<SuperMpo, SuperOpError> {
    let d = basis.d();
    let p = d * d;
    let mut site_ops: Vec<Array2<C64>> = vec![Array2::eye(d); n];
    for (site, op) in &term.factors {
        if *site >= n {
            return Err(SuperOpError::SiteOutOfRange { site: *site, n });
        }
        if op.dim() != (d, d) {
            return Err(SuperOpError::TermShape { expected: vec![d, d], found: vec![op.nrows(), op.ncols()] });
        }
        site_ops[*site] = site_ops[*site].dot(op);
    }
    let tensors = site_ops
        .iter()
        .enumerate()
        .map(|(j, op)| {
            let mut block = mult_block(op, side, basis);
            if j == 0 {
                block.mapv_inplace(|z| z * term.coefficient);
            }
            let w = Array4::from_shape_fn((1, p, p, 1), |(_, o, i, _)| block[[o, i]]);
            as_tensor(w)
        })
        .collect();
    Ok(SuperMpo { basis: basis.tag(), tensors })
}

/// Multiplication map for `Σ_{bond ∈ bonds} Σ_k c_k A_k(bond) B_k(bond+1)`,
/// built as a finite-state MPO of bond dimension `k + 2`.
pub fn nearest_neighbor_sum_mpo(
    n: usize,
    pairs: &[(C64, Array2<C64>, Array2<C64>)],
    bonds: std::ops::Range<usize>,
    side: MultSide,
    basis: &LocalBasis,
) -> Result<SuperMpo, SuperOpError> {
    if bonds.end > n.saturating_sub(1) {
        return Err(SuperOpError::BondOutOfRange { bond: bonds.end.saturating_sub(1), n });
    }
    let d = basis.d();
    let p = d * d;
    let k = pairs.len();
    let w = k + 2;
    let done = k + 1;
    let ident = mult_block(&Array2::eye(d), side, basis);
    let firsts: Vec<Array2<C64>> = pairs.iter().map(|(c, a, _)| mult_block(a, side, basis).mapv(|z| z * c)).collect();
    let seconds: Vec<Array2<C64>> = pairs.iter().map(|(_, _, b)| mult_block(b, side, basis)).collect();
    let mut tensors = Vec::with_capacity(n);
    for j in 0..n {
        let mut full = Array4::<C64>::zeros((w, p, p, w));
        let mut put = |l: usize, r: usize, block: &Array2<C64>| {
            for o in 0..p {
                for i in 0..p {
                    full[[l, o, i, r]] += block[[o, i]];
                }
            }
        };
        put(0, 0, &ident);
        put(done, done, &ident);
        if bonds.contains(&j) {
            for (q, f) in firsts.iter().enumerate() {
                put(0, q + 1, f);
            }
        }
        if j > 0 && bonds.contains(&(j - 1)) {
            for (q, s) in seconds.iter().enumerate() {
                put(q + 1, done, s);
            }
        }
        let rows: Vec<usize> = if j == 0 { vec![0] } else { (0..w).collect() };
        let cols: Vec<usize> = if j == n - 1 { vec![done] } else { (0..w).collect() };
        let trimmed = Array4::from_shape_fn((rows.len(), p, p, cols.len()), |(l, o, i, r)| full[[rows[l], o, i, cols[r]]]);
        tensors.push(as_tensor(trimmed));
    }
    Ok(SuperMpo { basis: basis.tag(), tensors })
}

impl SuperMpo {
    pub fn n(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_real(&self) -> bool {
        self.tensors.iter().all(|t| t.is_real())
    }

    pub fn bond_dims(&self) -> Vec<usize> {
        let mut dims: Vec<usize> = self.tensors.iter().map(|t| t.shape()[0]).collect();
        dims.push(self.tensors.last().map(|t| t.shape()[3]).unwrap_or(1));
        dims
    }

    /// Identity map.
    pub fn identity(n: usize, basis: &LocalBasis) -> Self {
        build_mult_mpo(n, &[], MultSide::Left, basis).expect("no factors")
    }

    /// Sum of two maps via block-diagonal bond concatenation.
    pub fn add(&self, other: &SuperMpo) -> Result<SuperMpo, SuperOpError> {
        if self.basis != other.basis {
            return Err(crate::error::BasisError::DimensionMismatch(self.basis.d, other.basis.d).into());
        }
        if self.n() != other.n() {
            return Err(SuperOpError::SiteOutOfRange { site: other.n(), n: self.n() });
        }
        let n = self.n();
        let tensors = (0..n)
            .map(|j| {
                let a = self.tensors[j].clone().into_complex().into_dimensionality::<ndarray::Ix4>().expect("rank 4");
                let b = other.tensors[j].clone().into_complex().into_dimensionality::<ndarray::Ix4>().expect("rank 4");
                let (al, p, _, ar) = a.dim();
                let (bl, _, _, br) = b.dim();
                let (ls, rs) = (if j == 0 { (1, 0) } else { (al + bl, al) }, if j == n - 1 { (1, 0) } else { (ar + br, ar) });
                let (lw, loff) = ls;
                let (rw, roff) = rs;
                let mut out = Array4::<C64>::zeros((lw, p, p, rw));
                for ((l, o, i, r), z) in a.indexed_iter() {
                    out[[l, o, i, r]] += *z;
                }
                for ((l, o, i, r), z) in b.indexed_iter() {
                    out[[l + loff, o, i, r + roff]] += *z;
                }
                as_tensor(out)
            })
            .collect();
        Ok(SuperMpo { basis: self.basis, tensors })
    }

    pub fn scaled(&self, factor: C64) -> SuperMpo {
        let mut out = self.clone();
        if let Some(first) = out.tensors.first_mut() {
            let t = first.clone().into_complex().mapv(|z| z * factor);
            let real = t.iter().all(|z| z.im == 0.0);
            *first = if real { DenseTensor::Real(t.mapv(|z| z.re)) } else { DenseTensor::Complex(t) };
        }
        out
    }
}
