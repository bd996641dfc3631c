//! Concrete spin-½ chains and the operators measured on them.
//!
//! Conventions: `σ^± = (σ^x ± iσ^y)/2`, `n = σ⁻σ⁺` (the projector on spin
//! down), and `f_j = (∏_{i<j} σᶻ_i) σ⁺_j`, so that `n_j = f_j† f_j` and the
//! spin hopping `σ⁺_j σ⁻_{j+1} + h.c.` is the fermion hopping
//! `f_{j+1}† f_j + h.c.`.

use ndarray::{Array2, Array3};

use crate::basis::{expand_local, kron, pauli, sigma_minus, sigma_plus, LocalBasis};
use crate::error::ModelError;
use crate::mps::OperatorMps;
use crate::superop::{build_product_mpo, nearest_neighbor_sum_mpo, HamiltonianTerms, MultSide, ProductTerm, SuperMpo};
use crate::tensor::{DenseTensor, C64};

/// Discarded weight that only removes rounding noise.
const ROUNDING_WEIGHT: f64 = 1e-26;

fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}

fn scaled(op: &Array2<C64>, c: f64) -> Array2<C64> {
    op.mapv(|z| z * c)
}

/// `H = Σ_j σˣ_jσˣ_{j+1} + σʸ_jσʸ_{j+1} + Δ σᶻ_jσᶻ_{j+1}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct XxzModel {
    pub n: usize,
    pub delta: f64,
}

impl XxzModel {
    pub fn new(n: usize, delta: f64) -> Result<Self, ModelError> {
        if n < 2 {
            return Err(ModelError::TooShort { n, min: 2 });
        }
        Ok(Self { n, delta })
    }

    pub fn bond_term(&self) -> Array2<C64> {
        kron(&pauli(1), &pauli(1)) + kron(&pauli(2), &pauli(2)) + scaled(&kron(&pauli(3), &pauli(3)), self.delta)
    }

    /// Bond carrying the current measured in the middle of the chain.
    pub fn central_bond(&self) -> usize {
        self.n / 2 - 1
    }
}

pub fn xxz_terms(model: &XxzModel) -> HamiltonianTerms {
    let mut h = HamiltonianTerms::new(model.n, 2);
    let bond = model.bond_term();
    for j in 0..model.n - 1 {
        h.push_two_site(j, bond.clone());
    }
    h
}

/// The single-impurity Anderson model unfolded onto one chain: spin-up
/// orbitals on sites `0..n/2` with the impurity at `n/2 − 1`, spin-down
/// orbitals on `n/2..n` with the impurity at `n/2`. Only the interaction
/// couples the two halves.
#[derive(Clone, Debug, PartialEq)]
pub struct SiamChain {
    n: usize,
    taus: Vec<f64>,
    u: f64,
    eps_f: f64,
}

impl SiamChain {
    /// `taus[j]` is the hopping on bond `j`; the junction entry must be zero
    /// and the two bonds next to it must agree.
    pub fn new(n: usize, taus: Vec<f64>, u: f64, eps_f: f64) -> Result<Self, ModelError> {
        if n < 4 {
            return Err(ModelError::TooShort { n, min: 4 });
        }
        if !n.is_multiple_of(2) {
            return Err(ModelError::OddLength(n));
        }
        if taus.len() != n - 1 {
            return Err(ModelError::HoppingLength { expected: n - 1, found: taus.len() });
        }
        let junction = n / 2 - 1;
        if taus[junction] != 0.0 {
            return Err(ModelError::JunctionHopping(taus[junction]));
        }
        let (left, right) = (taus[junction - 1], taus[junction + 1]);
        if left != right {
            return Err(ModelError::HybridizationAsymmetry(left, right));
        }
        Ok(Self { n, taus, u, eps_f })
    }

    /// Every bond hops with `tau` except the junction.
    pub fn uniform(n: usize, tau: f64, u: f64, eps_f: f64) -> Result<Self, ModelError> {
        let taus = (0..n.saturating_sub(1)).map(|j| if j + 1 == n / 2 { 0.0 } else { tau }).collect();
        Self::new(n, taus, u, eps_f)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn taus(&self) -> &[f64] {
        &self.taus
    }

    pub fn u(&self) -> f64 {
        self.u
    }

    pub fn eps_f(&self) -> f64 {
        self.eps_f
    }

    pub fn up_impurity(&self) -> usize {
        self.n / 2 - 1
    }

    pub fn down_impurity(&self) -> usize {
        self.n / 2
    }

    pub fn junction_bond(&self) -> usize {
        self.n / 2 - 1
    }
}

/// `n = σ⁻σ⁺`.
pub fn occupation() -> Array2<C64> {
    sigma_minus().dot(&sigma_plus())
}

pub fn siam_terms(model: &SiamChain) -> HamiltonianTerms {
    let n = model.n;
    let mut h = HamiltonianTerms::new(n, 2);
    let hop = kron(&sigma_plus(), &sigma_minus()) + kron(&sigma_minus(), &sigma_plus());
    for (j, &tau) in model.taus.iter().enumerate() {
        if j != model.junction_bond() && tau != 0.0 {
            h.push_two_site(j, scaled(&hop, tau));
        }
    }
    let occ = occupation();
    if model.u != 0.0 {
        h.push_two_site(model.junction_bond(), scaled(&kron(&occ, &occ), model.u));
    }
    if model.eps_f != 0.0 {
        h.push_one_site(model.up_impurity(), scaled(&occ, model.eps_f));
        h.push_one_site(model.down_impurity(), scaled(&occ, model.eps_f));
    }
    h
}

/// Real-coefficient expansion of `j_m = i(σ⁺_mσ⁻_{m+1} − σ⁻_mσ⁺_{m+1})
/// = ½(σˣ_mσʸ_{m+1} − σʸ_mσˣ_{m+1})` as `(c, A, B)` pairs.
pub fn current_pairs() -> Vec<(C64, Array2<C64>, Array2<C64>)> {
    vec![(re(0.5), pauli(1), pauli(2)), (re(-0.5), pauli(2), pauli(1))]
}

/// `j_m` as a two-site operator (row index `i_m·2 + i_{m+1}`).
pub fn current_operator() -> Array2<C64> {
    current_pairs().iter().map(|(c, a, b)| kron(a, b).mapv(|z| z * c)).fold(Array2::zeros((4, 4)), |acc, t| acc + t)
}

fn check_bond(bond: usize, n: usize) -> Result<(), ModelError> {
    if n < 2 || bond + 1 >= n {
        return Err(ModelError::BondOutOfRange { bond, n });
    }
    Ok(())
}

/// `|j_m⟫` as the sum of its two product terms.
pub fn spin_current_state(m: usize, n: usize, basis: &LocalBasis) -> Result<OperatorMps, ModelError> {
    check_bond(m, n)?;
    let mut terms = current_pairs().into_iter().map(|(c, a, b)| {
        OperatorMps::product_operator_state(n, basis, &[(m, a.mapv(|z| z * c)), (m + 1, b)], None)
    });
    let first = terms.next().expect("two terms")?;
    let mut sum = terms.try_fold(first, |acc, t| OperatorMps::mps_add(&acc, &t?))?;
    sum.compress(usize::MAX, ROUNDING_WEIGHT)?;
    Ok(sum)
}

/// `B̂` for multiplication by the total current `Σ_m j_m`.
pub fn total_current_mpo(n: usize, side: MultSide, basis: &LocalBasis) -> Result<SuperMpo, ModelError> {
    check_bond(0, n)?;
    Ok(nearest_neighbor_sum_mpo(n, &current_pairs(), 0..n - 1, side, basis)?)
}

/// `B̂` for multiplication by the single bond current `j_m`.
pub fn local_current_mpo(m: usize, n: usize, side: MultSide, basis: &LocalBasis) -> Result<SuperMpo, ModelError> {
    check_bond(m, n)?;
    Ok(nearest_neighbor_sum_mpo(n, &current_pairs(), m..m + 1, side, basis)?)
}

/// The Majorana pair `w = f + f†`, `w′ = i(f − f†)` of the fermion on `impurity`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MajoranaPair {
    pub impurity: usize,
}

impl MajoranaPair {
    /// `w = (∏_{j<imp} σᶻ_j) σˣ_imp` as (string site factors, impurity factor).
    fn factors(&self, primed: bool) -> Vec<(usize, Array2<C64>)> {
        let mut f: Vec<(usize, Array2<C64>)> = (0..self.impurity).map(|j| (j, pauli(3))).collect();
        let local = if primed { scaled(&pauli(2), -1.0) } else { pauli(1) };
        f.push((self.impurity, local));
        f
    }

    /// Dense factor list for `w` (`primed = false`) or `w′`.
    pub fn operator_factors(&self, primed: bool) -> Vec<(usize, Array2<C64>)> {
        self.factors(primed)
    }

    pub fn mult_mpo(&self, n: usize, primed: bool, side: MultSide, basis: &LocalBasis) -> Result<SuperMpo, ModelError> {
        if self.impurity >= n {
            return Err(ModelError::BondOutOfRange { bond: self.impurity, n });
        }
        Ok(build_product_mpo(n, &ProductTerm::new(re(1.0), self.factors(primed)), side, basis)?)
    }
}

pub fn majorana_states(pair: &MajoranaPair, n: usize, basis: &LocalBasis) -> Result<(OperatorMps, OperatorMps), ModelError> {
    if pair.impurity >= n {
        return Err(ModelError::BondOutOfRange { bond: pair.impurity, n });
    }
    let string = Some((0..pair.impurity, pauli(3)));
    let w = OperatorMps::product_operator_state(n, basis, &[(pair.impurity, pauli(1))], string.clone())?;
    let wp = OperatorMps::product_operator_state(n, basis, &[(pair.impurity, scaled(&pauli(2), -1.0))], string)?;
    Ok((w, wp))
}

/// `|H⟫` assembled term by term. Each two-site term becomes an exact bond of
/// dimension `d²`; the sum is compressed without loss.
pub fn hamiltonian_state(h: &HamiltonianTerms, basis: &LocalBasis) -> Result<OperatorMps, ModelError> {
    h.validate()?;
    let n = h.n;
    let d = basis.d();
    let p = d * d;
    let identity = expand_local(&Array2::eye(d), basis).map_err(crate::error::SuperOpError::from)?;
    let mut total: Option<OperatorMps> = None;
    let mut add = |term: OperatorMps| -> Result<(), ModelError> {
        total = Some(match total.take() {
            None => term,
            Some(acc) => {
                let mut s = OperatorMps::mps_add(&acc, &term)?;
                s.compress(usize::MAX, ROUNDING_WEIGHT)?;
                s
            }
        });
        Ok(())
    };
    for (site, op) in &h.one_site {
        add(OperatorMps::product_operator_state(n, basis, &[(*site, op.clone())], None)?)?;
    }
    for (bond, op) in &h.two_site {
        // c[μ₁, μ₂] = ⟪p_μ₁ ⊗ p_μ₂ | op⟫
        let pair_basis = crate::superop::product_basis(basis, 2);
        let coeffs: Vec<C64> = pair_basis.iter().map(|b| crate::basis::trace_inner(b, op)).collect();
        let mut tensors = Vec::with_capacity(n);
        for j in 0..n {
            let t = if j == *bond {
                Array3::from_shape_fn((1, p, p), |(_, mu, k)| coeffs[mu * p + k])
            } else if j == *bond + 1 {
                Array3::from_shape_fn((p, p, 1), |(k, mu, _)| if k == mu { re(1.0) } else { re(0.0) })
            } else {
                Array3::from_shape_fn((1, p, 1), |(_, mu, _)| identity[mu])
            };
            let t = if t.iter().all(|z| z.im == 0.0) {
                DenseTensor::Real(t.mapv(|z| z.re).into_dyn())
            } else {
                DenseTensor::Complex(t.into_dyn())
            };
            tensors.push(t);
        }
        add(OperatorMps::from_parts(tensors, None, 0.0, basis.tag())?)?;
    }
    match total {
        Some(t) => Ok(t),
        None => Ok(OperatorMps::identity_state(n, basis)?.scaled(0.0)),
    }
}
