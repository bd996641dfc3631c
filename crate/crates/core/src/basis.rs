//! Orthonormal local operator bases.
//!
//! A local basis is a set of `d²` operators `p_ν` acting on one site, with
//! `d⁻¹ tr(p_μ† p_ν) = δ_μν` and `p_0 = 1`. Two flavours exist for every `d`:
//!
//! * `Hermitian`: Pauli matrices (`d = 2`), Gell-Mann matrices rescaled to the
//!   `1/d` trace normalization (`d = 3`) and products `σ^a ⊗ σ^b` (`d = 4`).
//!   The commutator map is a purely imaginary antisymmetric matrix in this basis.
//! * `Real`: the hermitian set with every imaginary antisymmetric element `g`
//!   replaced by `-i·g`. Left multiplication by a real-representable `H` is a
//!   real matrix in this basis.
//!
//! Element order is fixed: identity first, then `σ¹, σ², σ³` for `d = 2`,
//! `λ₁ .. λ₈` for `d = 3`, and `σ^a ⊗ σ^b` at index `4a + b` for `d = 4`.

use std::fmt;

use ndarray::{Array1, Array2};

use crate::error::BasisError;
use crate::tensor::C64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BasisKind {
    Hermitian,
    Real,
}

impl BasisKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Hermitian => "hermitian",
            Self::Real => "real",
        }
    }
}

/// Identifies a local basis without carrying its matrices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BasisTag {
    pub d: usize,
    pub kind: BasisKind,
}

impl BasisTag {
    pub fn new(d: usize, kind: BasisKind) -> Self {
        Self { d, kind }
    }

    pub fn phys_dim(&self) -> usize {
        self.d * self.d
    }

    pub fn basis(&self) -> Result<LocalBasis, BasisError> {
        make_basis(self.d, self.kind)
    }
}

impl fmt::Display for BasisTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "d{}-{}", self.d, self.kind.as_str())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocalBasis {
    tag: BasisTag,
    elements: Vec<Array2<C64>>,
}

impl LocalBasis {
    pub fn d(&self) -> usize {
        self.tag.d
    }

    pub fn kind(&self) -> BasisKind {
        self.tag.kind
    }

    pub fn tag(&self) -> BasisTag {
        self.tag
    }

    /// Number of basis operators, `d²`.
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[Array2<C64>] {
        &self.elements
    }

    pub fn element(&self, index: usize) -> &Array2<C64> {
        &self.elements[index]
    }

    /// `Σ c_ν p_ν`.
    pub fn reconstruct(&self, coefficients: &[C64]) -> Array2<C64> {
        let d = self.d();
        let mut out = Array2::zeros((d, d));
        for (c, p) in coefficients.iter().zip(&self.elements) {
            out.scaled_add(*c, p);
        }
        out
    }
}

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Pauli matrices `σ⁰ .. σ³`.
pub fn pauli(k: usize) -> Array2<C64> {
    let z = c(0.0, 0.0);
    let one = c(1.0, 0.0);
    let i = c(0.0, 1.0);
    let rows = match k {
        0 => [[one, z], [z, one]],
        1 => [[z, one], [one, z]],
        2 => [[z, -i], [i, z]],
        3 => [[one, z], [z, -one]],
        _ => panic!("Pauli index {k} out of range"),
    };
    ndarray::arr2(&rows)
}

/// `σ⁺ = (σˣ + iσʸ)/2`.
pub fn sigma_plus() -> Array2<C64> {
    ndarray::arr2(&[[c(0.0, 0.0), c(1.0, 0.0)], [c(0.0, 0.0), c(0.0, 0.0)]])
}

/// `σ⁻ = (σˣ − iσʸ)/2`.
pub fn sigma_minus() -> Array2<C64> {
    ndarray::arr2(&[[c(0.0, 0.0), c(0.0, 0.0)], [c(1.0, 0.0), c(0.0, 0.0)]])
}

pub fn kron(a: &Array2<C64>, b: &Array2<C64>) -> Array2<C64> {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    Array2::from_shape_fn((ar * br, ac * bc), |(i, j)| a[[i / br, j / bc]] * b[[i % br, j % bc]])
}

fn gell_mann() -> Vec<Array2<C64>> {
    let mut out = vec![Array2::eye(3)];
    let unit = |i: usize, j: usize, v: C64| {
        let mut m = Array2::zeros((3, 3));
        m[[i, j]] = v;
        m
    };
    let sym = |i, j| unit(i, j, c(1.0, 0.0)) + unit(j, i, c(1.0, 0.0));
    let asym = |i, j| unit(i, j, c(0.0, -1.0)) + unit(j, i, c(0.0, 1.0));
    out.push(sym(0, 1));
    out.push(asym(0, 1));
    out.push(unit(0, 0, c(1.0, 0.0)) + unit(1, 1, c(-1.0, 0.0)));
    out.push(sym(0, 2));
    out.push(asym(0, 2));
    out.push(sym(1, 2));
    out.push(asym(1, 2));
    let r3 = 1.0 / 3f64.sqrt();
    out.push(unit(0, 0, c(r3, 0.0)) + unit(1, 1, c(r3, 0.0)) + unit(2, 2, c(-2.0 * r3, 0.0)));
    // tr(λ²) = 2 → rescale to d⁻¹tr(λ²) = 1
    let factor = c((3.0f64 / 2.0).sqrt(), 0.0);
    for m in out.iter_mut().skip(1) {
        m.mapv_inplace(|x| x * factor);
    }
    out
}

fn hermitian_elements(d: usize) -> Result<Vec<Array2<C64>>, BasisError> {
    match d {
        2 => Ok((0..4).map(pauli).collect()),
        3 => Ok(gell_mann()),
        4 => Ok((0..16).map(|k| kron(&pauli(k / 4), &pauli(k % 4))).collect()),
        _ => Err(BasisError::UnsupportedDimension(d)),
    }
}

/// Builds the local basis of the given dimension and kind.
pub fn make_basis(d: usize, kind: BasisKind) -> Result<LocalBasis, BasisError> {
    let mut elements = hermitian_elements(d)?;
    if kind == BasisKind::Real {
        for m in elements.iter_mut() {
            let imaginary = m.iter().all(|z| z.re.abs() < 1e-15);
            let nonzero = m.iter().any(|z| z.im.abs() > 0.0);
            if imaginary && nonzero {
                // −i·(i·b) = b
                *m = m.mapv(|z| C64::new(z.im, 0.0));
            }
        }
    }
    Ok(LocalBasis { tag: BasisTag::new(d, kind), elements })
}

/// `d⁻¹ tr(a† b)`.
pub fn trace_inner(a: &Array2<C64>, b: &Array2<C64>) -> C64 {
    let d = a.nrows() as f64;
    let mut acc = C64::new(0.0, 0.0);
    for ((i, j), x) in a.indexed_iter() {
        acc += x.conj() * b[[i, j]];
    }
    acc / d
}

/// Coefficients of `op` in `basis`: `c_ν = d⁻¹ tr(p_ν† op)`.
pub fn expand_local(op: &Array2<C64>, basis: &LocalBasis) -> Result<Array1<C64>, BasisError> {
    let d = basis.d();
    if op.dim() != (d, d) {
        return Err(BasisError::OperatorShape { rows: op.nrows(), cols: op.ncols(), d });
    }
    Ok(basis.elements.iter().map(|p| trace_inner(p, op)).collect())
}

/// Coefficient map between two local bases of equal `d`.
#[derive(Clone, Debug, PartialEq)]
pub struct BasisTransform {
    pub from: BasisTag,
    pub to: BasisTag,
    /// `T_μν = d⁻¹ tr(q_μ† p_ν)`: coefficients in `from` → coefficients in `to`.
    pub matrix: Array2<C64>,
}

impl BasisTransform {
    pub fn apply(&self, coefficients: &Array1<C64>) -> Array1<C64> {
        self.matrix.dot(coefficients)
    }

    /// True when every entry is real.
    pub fn is_real(&self) -> bool {
        self.matrix.iter().all(|z| z.im == 0.0)
    }
}

pub fn change_of_basis(from: &LocalBasis, to: &LocalBasis) -> Result<BasisTransform, BasisError> {
    if from.d() != to.d() {
        return Err(BasisError::DimensionMismatch(from.d(), to.d()));
    }
    let n = from.len();
    let matrix = Array2::from_shape_fn((n, n), |(mu, nu)| trace_inner(&to.elements[mu], &from.elements[nu]));
    Ok(BasisTransform { from: from.tag(), to: to.tag(), matrix })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const ALL: [(usize, BasisKind); 6] = [
        (2, BasisKind::Hermitian),
        (2, BasisKind::Real),
        (3, BasisKind::Hermitian),
        (3, BasisKind::Real),
        (4, BasisKind::Hermitian),
        (4, BasisKind::Real),
    ];

    #[test]
    fn every_basis_is_orthonormal() {
        for (d, kind) in ALL {
            let b = make_basis(d, kind).unwrap();
            assert_eq!(b.len(), d * d);
            for i in 0..b.len() {
                for j in 0..b.len() {
                    let g = trace_inner(b.element(i), b.element(j));
                    let target = if i == j { 1.0 } else { 0.0 };
                    assert!((g - C64::new(target, 0.0)).norm() < 1e-12, "d={d} {kind:?} ({i},{j}) {g}");
                }
            }
            assert_eq!(b.element(0), &Array2::<C64>::eye(d));
        }
    }

    #[test]
    fn kinds_have_their_defining_property() {
        for (d, kind) in ALL {
            let b = make_basis(d, kind).unwrap();
            for p in b.elements() {
                match kind {
                    BasisKind::Hermitian => {
                        let ph = p.t().mapv(|z| z.conj());
                        assert!((&ph - p).iter().all(|z| z.norm() < 1e-15));
                    }
                    BasisKind::Real => assert!(p.iter().all(|z| z.im == 0.0)),
                }
            }
        }
    }

    #[test]
    fn pauli_bases() {
        let h = make_basis(2, BasisKind::Hermitian).unwrap();
        for k in 0..4 {
            assert_eq!(h.element(k), &pauli(k));
        }
        let r = make_basis(2, BasisKind::Real).unwrap();
        assert_eq!(r.element(1), &pauli(1));
        assert_eq!(r.element(3), &pauli(3));
        let minus_i_sigma_y = pauli(2).mapv(|z| z * C64::new(0.0, -1.0));
        assert_eq!(r.element(2), &minus_i_sigma_y);
        assert_eq!(r.element(2)[[0, 1]], C64::new(-1.0, 0.0));
    }

    #[test]
    fn spin_three_halves_basis_is_pauli_products() {
        let b = make_basis(4, BasisKind::Hermitian).unwrap();
        assert_eq!(b.element(4 * 2 + 3), &kron(&pauli(2), &pauli(3)));
    }

    #[test]
    fn unsupported_dimension() {
        assert_eq!(make_basis(5, BasisKind::Real), Err(BasisError::UnsupportedDimension(5)));
    }

    #[test]
    fn identity_transform() {
        let b = make_basis(3, BasisKind::Hermitian).unwrap();
        let t = change_of_basis(&b, &b).unwrap();
        let id = Array2::<C64>::eye(9);
        assert!((&t.matrix - &id).iter().all(|z| z.norm() < 1e-12));
    }

    #[test]
    fn real_to_hermitian_maps_minus_i_sigma_y() {
        let r = make_basis(2, BasisKind::Real).unwrap();
        let h = make_basis(2, BasisKind::Hermitian).unwrap();
        let t = change_of_basis(&r, &h).unwrap();
        // d⁻¹tr(σʸ† (−iσʸ)) = −i
        assert!((t.matrix[[2, 2]] - C64::new(0.0, -1.0)).norm() < 1e-15);
        for k in [0, 1, 3] {
            assert_eq!(t.matrix[[2, k]].norm(), 0.0);
            assert_eq!(t.matrix[[k, 2]].norm(), 0.0);
        }
    }

    #[test]
    fn transforms_are_unitary_and_mutually_inverse() {
        for d in [2, 3, 4] {
            let r = make_basis(d, BasisKind::Real).unwrap();
            let h = make_basis(d, BasisKind::Hermitian).unwrap();
            let rh = change_of_basis(&r, &h).unwrap();
            let hr = change_of_basis(&h, &r).unwrap();
            let n = d * d;
            let id = Array2::<C64>::eye(n);
            let tt = rh.matrix.t().mapv(|z| z.conj()).dot(&rh.matrix);
            assert!((&tt - &id).iter().all(|z| z.norm() < 1e-12));
            let round = hr.matrix.dot(&rh.matrix);
            assert!((&round - &id).iter().all(|z| z.norm() < 1e-12));
        }
    }

    #[test]
    fn expansion_examples() {
        let h = make_basis(2, BasisKind::Hermitian).unwrap();
        let e = expand_local(&Array2::eye(2), &h).unwrap();
        assert_eq!(e.to_vec(), vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0)]);
        let sp = expand_local(&sigma_plus(), &h).unwrap();
        let want = [C64::new(0.0, 0.0), C64::new(0.5, 0.0), C64::new(0.0, 0.5), C64::new(0.0, 0.0)];
        for (a, b) in sp.iter().zip(want) {
            assert!((a - b).norm() < 1e-15);
        }
        let r = make_basis(2, BasisKind::Real).unwrap();
        let z = expand_local(&pauli(3), &r).unwrap();
        assert!((z[3] - C64::new(1.0, 0.0)).norm() < 1e-15);
        assert!(z.iter().take(3).all(|x| x.norm() < 1e-15));
    }

    #[test]
    fn expand_rejects_wrong_shape() {
        let h = make_basis(2, BasisKind::Hermitian).unwrap();
        assert!(expand_local(&Array2::eye(3), &h).is_err());
    }

    fn arb_op(d: usize) -> impl Strategy<Value = Array2<C64>> {
        proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), d * d)
            .prop_map(move |v| Array2::from_shape_fn((d, d), |(i, j)| C64::new(v[i * d + j].0, v[i * d + j].1)))
    }

    proptest! {
        #[test]
        fn expansion_reconstructs(op in arb_op(3), real in any::<bool>()) {
            let kind = if real { BasisKind::Real } else { BasisKind::Hermitian };
            let b = make_basis(3, kind).unwrap();
            let coeffs = expand_local(&op, &b).unwrap();
            let back = b.reconstruct(coeffs.as_slice().unwrap());
            prop_assert!((&back - &op).iter().all(|z| z.norm() < 1e-12));
        }

        #[test]
        fn change_of_basis_matches_direct_expansion(op in arb_op(2)) {
            // hermitian test operator
            let herm = (&op + &op.t().mapv(|z| z.conj())).mapv(|z| z * 0.5);
            let r = make_basis(2, BasisKind::Real).unwrap();
            let h = make_basis(2, BasisKind::Hermitian).unwrap();
            let t = change_of_basis(&r, &h).unwrap();
            let via = t.apply(&expand_local(&herm, &r).unwrap());
            let direct = expand_local(&herm, &h).unwrap();
            prop_assert!((&via - &direct).iter().all(|z| z.norm() < 1e-12));
        }
    }
}
