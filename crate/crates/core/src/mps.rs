//! Operator-space matrix product states.
//!
//! An operator `a = Σ_ν c_ν P_ν` is stored through its coefficients
//! `c_{ν_1..ν_n} = e^{log_scale} · A^{[1]ν_1} ⋯ A^{[n]ν_n}` with open
//! boundaries. Site tensors have axes `(left bond, physical, right bond)` and
//! the physical index runs over the `d²` elements of one [`LocalBasis`].
//!
//! A state is either entirely real or entirely complex; real states stay real
//! under real gates, real transforms and real maps. Magnitudes are kept in
//! `log_scale` so that `e^{−βχ̂}` can run to large `β` without overflow.

use ndarray::{s, Array1, Array2, Array3, ArrayView2};
use num_traits::Zero;

use crate::basis::{expand_local, BasisTag, BasisTransform, LocalBasis};
use crate::error::MpsError;
use crate::superop::SuperMpo;
use crate::tensor::{lq_positive, qr_positive, svd_parts, DenseTensor, Element, C64};

/// Largest chain that [`OperatorMps::to_coefficients`] will expand.
pub const MAX_DENSE_SITES: usize = 8;

/// A complex number stored as `mantissa · e^{log}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogScalar {
    pub mantissa: C64,
    pub log: f64,
}

impl LogScalar {
    pub fn value(&self) -> C64 {
        if self.mantissa == C64::zero() {
            return C64::zero();
        }
        self.mantissa * self.log.exp()
    }

    /// `self / other` with the exponents subtracted before exponentiation.
    pub fn ratio(&self, other: &LogScalar) -> C64 {
        self.mantissa / other.mantissa * (self.log - other.log).exp()
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Sites {
    Real(Vec<Array3<f64>>),
    Complex(Vec<Array3<C64>>),
}

impl Sites {
    fn len(&self) -> usize {
        match self {
            Sites::Real(v) => v.len(),
            Sites::Complex(v) => v.len(),
        }
    }

    fn dims(&self, j: usize) -> (usize, usize, usize) {
        match self {
            Sites::Real(v) => v[j].dim(),
            Sites::Complex(v) => v[j].dim(),
        }
    }

    fn into_complex(self) -> Vec<Array3<C64>> {
        match self {
            Sites::Real(v) => v.into_iter().map(|a| a.mapv(|x| C64::new(x, 0.0))).collect(),
            Sites::Complex(v) => v,
        }
    }

    fn to_complex(&self) -> Vec<Array3<C64>> {
        self.clone().into_complex()
    }

    fn promote(&mut self) {
        if let Sites::Real(_) = self {
            let taken = std::mem::replace(self, Sites::Complex(Vec::new()));
            *self = Sites::Complex(taken.into_complex());
        }
    }
}

/// Direction a gate sweep is travelling; the orthogonality centre is left on
/// the site the sweep moves towards.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sweep {
    LeftToRight,
    RightToLeft,
}

/// Normalized Schmidt coefficients across one cut.
#[derive(Clone, Debug, PartialEq)]
pub struct SchmidtSpectrum {
    /// Cut index: sites `[0, cut)` against `[cut, n)`.
    pub cut: usize,
    /// Nonincreasing, `Σ λ² = 1`.
    pub values: Vec<f64>,
}

impl SchmidtSpectrum {
    /// `−Σ λ² log₂ λ²` in bits.
    pub fn entropy_bits(&self) -> f64 {
        self.values
            .iter()
            .map(|l| l * l)
            .filter(|&w| w > 0.0)
            .map(|w| -w * w.log2())
            .sum::<f64>()
            .max(0.0)
    }
}

/// An element of operator space in matrix product form.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorMps {
    sites: Sites,
    center: Option<usize>,
    log_scale: f64,
    basis: BasisTag,
}

/// Row-major matrix view of a standard-layout rank-3 tensor.
fn mat<T>(a: &Array3<T>, rows: usize, cols: usize) -> ArrayView2<'_, T> {
    a.view().into_shape_with_order((rows, cols)).expect("site tensors are standard layout")
}

fn to3<T: Clone>(a: Array2<T>, dims: (usize, usize, usize)) -> Array3<T> {
    let a = if a.is_standard_layout() { a } else { a.as_standard_layout().into_owned() };
    a.into_shape_with_order(dims).expect("element count preserved")
}

fn frob<T: Element>(a: &Array3<T>) -> f64 {
    a.iter().map(|x| x.to_c64().norm_sqr()).sum::<f64>().sqrt()
}

fn shift_right<T: Element>(sites: &mut [Array3<T>], c: usize) -> Result<(), MpsError> {
    let (dl, p, dr) = sites[c].dim();
    let (q, r) = qr_positive(mat(&sites[c], dl * p, dr))?;
    let k = q.ncols();
    sites[c] = to3(q, (dl, p, k));
    let (_, p2, dr2) = sites[c + 1].dim();
    let next = r.dot(&mat(&sites[c + 1], dr, p2 * dr2));
    sites[c + 1] = to3(next, (k, p2, dr2));
    Ok(())
}

fn shift_left<T: Element>(sites: &mut [Array3<T>], c: usize) -> Result<(), MpsError> {
    let (dl, p, dr) = sites[c].dim();
    let (l, q) = lq_positive(mat(&sites[c], dl, p * dr))?;
    let k = q.nrows();
    sites[c] = to3(q, (k, p, dr));
    let (dl0, p0, _) = sites[c - 1].dim();
    let prev = mat(&sites[c - 1], dl0 * p0, dl).dot(&l);
    sites[c - 1] = to3(prev, (dl0, p0, k));
    Ok(())
}

/// Moves (or establishes) the orthogonality centre; returns the new centre.
fn move_center<T: Element>(sites: &mut [Array3<T>], current: Option<usize>, target: usize) -> Result<(), MpsError> {
    let n = sites.len();
    match current {
        Some(c) => {
            for j in c..target {
                shift_right(sites, j)?;
            }
            for j in (target + 1..=c).rev() {
                shift_left(sites, j)?;
            }
        }
        None => {
            for j in 0..target {
                shift_right(sites, j)?;
            }
            for j in (target + 1..n).rev() {
                shift_left(sites, j)?;
            }
        }
    }
    Ok(())
}

/// Divides the centre tensor by its norm and returns `ln(norm)` (0 for a zero state).
fn normalize_center<T: Element>(sites: &mut [Array3<T>], c: usize) -> f64 {
    let norm = frob(&sites[c]);
    if norm > 0.0 && norm.is_finite() {
        let inv = T::from_real(1.0 / norm);
        sites[c].mapv_inplace(|x| x * inv);
        norm.ln()
    } else {
        0.0
    }
}

fn apply_gate_typed<T: Element>(
    sites: &mut [Array3<T>],
    bond: usize,
    gate: &Array2<T>,
    max_rank: usize,
    weight_tol: f64,
    sweep: Sweep,
) -> Result<(f64, f64), MpsError> {
    let (l, r) = (bond, bond + 1);
    let (dl, p, k) = sites[l].dim();
    let (_, p2, dr) = sites[r].dim();
    let theta = mat(&sites[l], dl * p, k).dot(&mat(&sites[r], k, p2 * dr));
    // (a, s1, s2, b) → (s1 s2, a b)
    let t4 = theta.into_shape_with_order((dl, p, p2, dr)).expect("theta shape");
    let grouped = t4.permuted_axes([1, 2, 0, 3]).as_standard_layout().into_owned();
    let grouped = grouped.into_shape_with_order((p * p2, dl * dr)).expect("grouped shape");
    let updated = gate.dot(&grouped);
    let back = updated.into_shape_with_order((p, p2, dl, dr)).expect("updated shape");
    let back = back.permuted_axes([2, 0, 1, 3]).as_standard_layout().into_owned();
    let back = back.into_shape_with_order((dl * p, p2 * dr)).expect("split shape");

    let parts = svd_parts(back.view(), max_rank, weight_tol)?;
    let kept = parts.s.len();
    let norm = parts.s.iter().map(|x| x * x).sum::<f64>().sqrt();
    let (scale, log_gain) = if norm > 0.0 { (1.0 / norm, norm.ln()) } else { (1.0, 0.0) };
    let s: Vec<T> = parts.s.iter().map(|&x| T::from_real(x * scale)).collect();
    match sweep {
        Sweep::LeftToRight => {
            let mut vt = parts.vt;
            for (i, mut row) in vt.rows_mut().into_iter().enumerate() {
                row.mapv_inplace(|x| x * s[i]);
            }
            sites[l] = to3(parts.u, (dl, p, kept));
            sites[r] = to3(vt, (kept, p2, dr));
        }
        Sweep::RightToLeft => {
            let mut u = parts.u;
            for (i, mut col) in u.columns_mut().into_iter().enumerate() {
                col.mapv_inplace(|x| x * s[i]);
            }
            sites[l] = to3(u, (dl, p, kept));
            sites[r] = to3(parts.vt, (kept, p2, dr));
        }
    }
    Ok((parts.discarded_weight, log_gain))
}

/// `⟪x|y⟫` without scale factors, as (mantissa, log).
fn overlap_typed<T: Element>(x: &[Array3<T>], y: &[Array3<T>]) -> (C64, f64) {
    let mut env = Array2::<T>::from_elem((1, 1), T::one());
    let mut log = 0.0;
    for (a, b) in x.iter().zip(y) {
        let (ax, p, bx) = a.dim();
        let (ay, _, by) = b.dim();
        let t1 = env.dot(&mat(b, ay, p * by));
        let t1 = t1.into_shape_with_order((ax * p, by)).expect("env shape");
        let ah = mat(a, ax * p, bx).mapv(|v| v.conj());
        env = ah.t().dot(&t1);
        let scale = env.iter().map(|v| v.to_c64().norm()).fold(0.0, f64::max);
        if scale > 0.0 && scale.is_finite() {
            let inv = T::from_real(1.0 / scale);
            env.mapv_inplace(|v| v * inv);
            log += scale.ln();
        }
    }
    (env[[0, 0]].to_c64(), log)
}

fn sandwich_complex(x: &[Array3<C64>], mpo: &[ndarray::Array4<C64>], y: &[Array3<C64>]) -> (C64, f64) {
    // env[ax, w, ay]
    let mut env = Array3::<C64>::from_elem((1, 1, 1), C64::new(1.0, 0.0));
    let mut log = 0.0;
    for ((a, w), b) in x.iter().zip(mpo).zip(y) {
        let (ax, p, bx) = a.dim();
        let (ay, _, by) = b.dim();
        let (wl, _, _, wr) = w.dim();
        // t1[ax, w, t, by]
        let t1 = mat(&env, ax * wl, ay).dot(&mat(b, ay, p * by));
        let t1 = t1.into_shape_with_order((ax, wl, p, by)).expect("t1");
        // → [ax, by, w, t]
        let t1 = t1.permuted_axes([0, 3, 1, 2]).as_standard_layout().into_owned();
        let t1 = t1.into_shape_with_order((ax * by, wl * p)).expect("t1 matrix");
        // w[w, s, t, w'] → [w, t, s, w']
        let wm = w.view().permuted_axes([0, 2, 1, 3]).as_standard_layout().into_owned();
        let wm = wm.into_shape_with_order((wl * p, p * wr)).expect("w matrix");
        let t2 = t1.dot(&wm).into_shape_with_order((ax, by, p, wr)).expect("t2");
        // → [ax, s, w', by]
        let t2 = t2.permuted_axes([0, 2, 3, 1]).as_standard_layout().into_owned();
        let t2 = t2.into_shape_with_order((ax * p, wr * by)).expect("t2 matrix");
        let ah = mat(a, ax * p, bx).mapv(|v| v.conj());
        let next = ah.t().dot(&t2);
        env = next.into_shape_with_order((bx, wr, by)).expect("env");
        let scale = env.iter().map(|v| v.norm()).fold(0.0, f64::max);
        if scale > 0.0 && scale.is_finite() {
            env.mapv_inplace(|v| v / scale);
            log += scale.ln();
        }
    }
    (env[[0, 0, 0]], log)
}

fn compress_typed<T: Element>(
    sites: &mut [Array3<T>],
    center: Option<usize>,
    max_rank: usize,
    weight_tol: f64,
) -> Result<(f64, f64), MpsError> {
    let n = sites.len();
    move_center(sites, center, n - 1)?;
    let mut log = normalize_center(sites, n - 1);
    let mut discarded = 0.0;
    for c in (1..n).rev() {
        let (dl, p, dr) = sites[c].dim();
        let parts = svd_parts(mat(&sites[c], dl, p * dr), max_rank, weight_tol)?;
        let k = parts.s.len();
        discarded += parts.discarded_weight;
        let mut us = parts.u;
        for (i, mut col) in us.columns_mut().into_iter().enumerate() {
            let sv = T::from_real(parts.s[i]);
            col.mapv_inplace(|x| x * sv);
        }
        sites[c] = to3(parts.vt, (k, p, dr));
        let (dl0, p0, _) = sites[c - 1].dim();
        let prev = mat(&sites[c - 1], dl0 * p0, dl).dot(&us);
        sites[c - 1] = to3(prev, (dl0, p0, k));
    }
    log += normalize_center(sites, 0);
    Ok((discarded, log))
}

fn spectrum_typed<T: Element>(sites: &mut [Array3<T>], center: Option<usize>, cut: usize) -> Result<Vec<f64>, MpsError> {
    move_center(sites, center, cut)?;
    let (dl, p, dr) = sites[cut].dim();
    let (_, s, _) = crate::tensor::full_svd(mat(&sites[cut], dl, p * dr))?;
    Ok(s)
}

macro_rules! on_sites {
    ($sites:expr, $v:ident => $body:expr) => {
        match $sites {
            Sites::Real($v) => $body,
            Sites::Complex($v) => $body,
        }
    };
}

impl OperatorMps {
    fn from_sites(sites: Sites, center: Option<usize>, log_scale: f64, basis: BasisTag) -> Self {
        Self { sites, center, log_scale, basis }
    }

    /// Assembles a state from raw site tensors, checking every invariant.
    pub fn from_parts(
        tensors: Vec<DenseTensor>,
        center: Option<usize>,
        log_scale: f64,
        basis: BasisTag,
    ) -> Result<Self, MpsError> {
        if tensors.is_empty() {
            return Err(MpsError::Empty);
        }
        if !log_scale.is_finite() {
            return Err(MpsError::Invalid(format!("non-finite log scale {log_scale}")));
        }
        let n = tensors.len();
        if let Some(c) = center {
            if c >= n {
                return Err(MpsError::SiteOutOfRange { site: c, n });
            }
        }
        let p = basis.phys_dim();
        let mut prev_right = 1;
        for (j, t) in tensors.iter().enumerate() {
            let shape = t.shape();
            if shape.len() != 3 || shape[1] != p || shape[0] != prev_right {
                return Err(MpsError::Invalid(format!("site {j} has shape {shape:?}")));
            }
            prev_right = shape[2];
        }
        if prev_right != 1 {
            return Err(MpsError::Invalid("right boundary bond must be 1".into()));
        }
        let all_real = tensors.iter().all(|t| t.is_real());
        let sites = if all_real {
            Sites::Real(
                tensors
                    .into_iter()
                    .map(|t| f64::cast(t).map(|a| a.into_dimensionality().expect("rank 3")))
                    .collect::<Result<_, _>>()?,
            )
        } else {
            Sites::Complex(
                tensors.into_iter().map(|t| t.into_complex().into_dimensionality().expect("rank 3")).collect(),
            )
        };
        Ok(Self::from_sites(sites, center, log_scale, basis))
    }

    /// `|e⟫`: the identity operator with unit coefficient.
    pub fn identity_state(n: usize, basis: &LocalBasis) -> Result<Self, MpsError> {
        if n == 0 {
            return Err(MpsError::Empty);
        }
        let p = basis.len();
        let mut site = Array3::<f64>::zeros((1, p, 1));
        site[[0, 0, 0]] = 1.0;
        Ok(Self::from_sites(Sites::Real(vec![site; n]), Some(0), 0.0, basis.tag()))
    }

    /// A product operator `Π_j o_j`: listed factors on their sites, the
    /// string operator on every site of `string.0` (multiplied from the left
    /// onto any factor there), identity elsewhere.
    pub fn product_operator_state(
        n: usize,
        basis: &LocalBasis,
        factors: &[(usize, Array2<C64>)],
        string: Option<(std::ops::Range<usize>, Array2<C64>)>,
    ) -> Result<Self, MpsError> {
        if n == 0 {
            return Err(MpsError::Empty);
        }
        let d = basis.d();
        let mut ops: Vec<Option<Array2<C64>>> = vec![None; n];
        for (site, op) in factors {
            if *site >= n {
                return Err(MpsError::SiteOutOfRange { site: *site, n });
            }
            if ops[*site].is_some() {
                return Err(MpsError::DuplicateSite(*site));
            }
            ops[*site] = Some(op.clone());
        }
        if let Some((range, op)) = &string {
            if range.end > n {
                return Err(MpsError::SiteOutOfRange { site: range.end - 1, n });
            }
            for j in range.clone() {
                ops[j] = Some(match ops[j].take() {
                    Some(f) => op.dot(&f),
                    None => op.clone(),
                });
            }
        }
        let mut log = 0.0;
        let mut coeffs = Vec::with_capacity(n);
        for op in ops {
            let op = op.unwrap_or_else(|| Array2::eye(d));
            let c = expand_local(&op, basis)?;
            let norm = stable_norm(c.iter().map(|z| z.norm()));
            if norm > 0.0 {
                log += norm.ln();
                coeffs.push(c.mapv(|z| z / norm));
            } else {
                coeffs.push(c);
            }
        }
        Ok(Self::from_site_vectors(coeffs, log, basis.tag()))
    }

    /// Bond-dimension-1 state from per-site coefficient vectors.
    pub fn from_site_vectors(coeffs: Vec<Array1<C64>>, log_scale: f64, basis: BasisTag) -> Self {
        let real = coeffs.iter().all(|c| c.iter().all(|z| z.im == 0.0));
        let sites = if real {
            Sites::Real(coeffs.iter().map(|c| to3(c.mapv(|z| z.re).insert_axis(ndarray::Axis(0)), (1, c.len(), 1))).collect())
        } else {
            Sites::Complex(coeffs.iter().map(|c| to3(c.clone().insert_axis(ndarray::Axis(0)), (1, c.len(), 1))).collect())
        };
        Self::from_sites(sites, None, log_scale, basis)
    }

    /// Exact MPS of a dense coefficient vector (first site major) by successive
    /// SVDs, truncated with the given parameters.
    pub fn from_coefficients(
        coefficients: &Array1<C64>,
        n: usize,
        basis: BasisTag,
        max_rank: usize,
        weight_tol: f64,
    ) -> Result<Self, MpsError> {
        let p = basis.phys_dim();
        if n == 0 {
            return Err(MpsError::Empty);
        }
        if coefficients.len() != p.pow(n as u32) {
            return Err(MpsError::Invalid(format!("{} coefficients for {n} sites", coefficients.len())));
        }
        let real = coefficients.iter().all(|z| z.im == 0.0);
        fn cascade<T: Element>(data: Vec<T>, n: usize, p: usize, max_rank: usize, tol: f64) -> Result<Vec<Array3<T>>, MpsError> {
            let mut rest = Array2::from_shape_vec((1, data.len()), data).expect("shape");
            let mut sites = Vec::with_capacity(n);
            for _ in 0..n - 1 {
                let dl = rest.nrows();
                let cols = rest.ncols() / p;
                let m = rest.into_shape_with_order((dl * p, cols)).expect("cascade shape");
                let parts = svd_parts(m.view(), max_rank, tol)?;
                let k = parts.s.len();
                sites.push(to3(parts.u, (dl, p, k)));
                let mut vt = parts.vt;
                for (i, mut row) in vt.rows_mut().into_iter().enumerate() {
                    let sv = T::from_real(parts.s[i]);
                    row.mapv_inplace(|x| x * sv);
                }
                rest = vt;
            }
            let dl = rest.nrows();
            sites.push(to3(rest, (dl, p, 1)));
            Ok(sites)
        }
        let mut out = if real {
            let data = coefficients.iter().map(|z| z.re).collect();
            Self::from_sites(Sites::Real(cascade(data, n, p, max_rank, weight_tol)?), Some(n - 1), 0.0, basis)
        } else {
            let data = coefficients.to_vec();
            Self::from_sites(Sites::Complex(cascade(data, n, p, max_rank, weight_tol)?), Some(n - 1), 0.0, basis)
        };
        let gain = on_sites!(&mut out.sites, v => normalize_center(v, n - 1));
        out.log_scale += gain;
        Ok(out)
    }

    pub fn n(&self) -> usize {
        self.sites.len()
    }

    pub fn phys_dim(&self) -> usize {
        self.basis.phys_dim()
    }

    pub fn basis(&self) -> BasisTag {
        self.basis
    }

    pub fn center(&self) -> Option<usize> {
        self.center
    }

    pub fn log_scale(&self) -> f64 {
        self.log_scale
    }

    /// True when all site tensors are real.
    pub fn is_real(&self) -> bool {
        matches!(self.sites, Sites::Real(_))
    }

    /// Bond extents including the two boundary bonds of extent 1.
    pub fn bond_dims(&self) -> Vec<usize> {
        let mut dims: Vec<usize> = (0..self.n()).map(|j| self.sites.dims(j).0).collect();
        dims.push(self.sites.dims(self.n() - 1).2);
        dims
    }

    pub fn max_bond(&self) -> usize {
        self.bond_dims().into_iter().max().unwrap_or(1)
    }

    pub fn site_tensor(&self, j: usize) -> DenseTensor {
        match &self.sites {
            Sites::Real(v) => DenseTensor::Real(v[j].clone().into_dyn()),
            Sites::Complex(v) => DenseTensor::Complex(v[j].clone().into_dyn()),
        }
    }

    pub fn site_tensors(&self) -> Vec<DenseTensor> {
        (0..self.n()).map(|j| self.site_tensor(j)).collect()
    }

    /// Row-major site data as reals (`None` for complex states).
    pub fn real_site_data(&self, j: usize) -> Option<&[f64]> {
        match &self.sites {
            Sites::Real(v) => v[j].as_slice(),
            Sites::Complex(_) => None,
        }
    }

    pub fn complex_site_data(&self, j: usize) -> Option<&[C64]> {
        match &self.sites {
            Sites::Complex(v) => v[j].as_slice(),
            Sites::Real(_) => None,
        }
    }

    /// Multiplies the represented operator by a real factor.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        if factor == 0.0 {
            on_sites!(&mut out.sites, v => v[0].fill(Zero::zero()));
            return out;
        }
        out.log_scale += factor.abs().ln();
        if factor < 0.0 {
            on_sites!(&mut out.sites, v => v[0].mapv_inplace(|x| -x));
        }
        out
    }

    fn check_compatible(&self, other: &Self) -> Result<(), MpsError> {
        if self.basis != other.basis {
            return Err(MpsError::BasisMismatch(self.basis.to_string(), other.basis.to_string()));
        }
        if self.n() != other.n() {
            return Err(MpsError::LengthMismatch(self.n(), other.n()));
        }
        Ok(())
    }

    /// `⟪self|other⟫` as mantissa and exponent.
    pub fn inner_log(&self, other: &Self) -> Result<LogScalar, MpsError> {
        self.check_compatible(other)?;
        let (m, log) = match (&self.sites, &other.sites) {
            (Sites::Real(x), Sites::Real(y)) => overlap_typed(x, y),
            _ => overlap_typed(&self.sites.to_complex(), &other.sites.to_complex()),
        };
        Ok(LogScalar { mantissa: m, log: log + self.log_scale + other.log_scale })
    }

    /// `⟪self|other⟫ = D⁻¹ tr(self† other)`.
    pub fn inner(&self, other: &Self) -> Result<C64, MpsError> {
        Ok(self.inner_log(other)?.value())
    }

    pub fn norm_sqr(&self) -> f64 {
        self.inner(self).map(|z| z.re).unwrap_or(0.0)
    }

    /// `⟪self|B̂|other⟫`.
    pub fn sandwich_log(&self, mpo: &SuperMpo, other: &Self) -> Result<LogScalar, MpsError> {
        self.check_compatible(other)?;
        if mpo.basis != self.basis {
            return Err(MpsError::BasisMismatch(mpo.basis.to_string(), self.basis.to_string()));
        }
        if mpo.n() != self.n() {
            return Err(MpsError::LengthMismatch(mpo.n(), self.n()));
        }
        let w: Vec<ndarray::Array4<C64>> = mpo
            .tensors
            .iter()
            .map(|t| t.clone().into_complex().into_dimensionality().expect("rank 4"))
            .collect();
        let (m, log) = sandwich_complex(&self.sites.to_complex(), &w, &other.sites.to_complex());
        Ok(LogScalar { mantissa: m, log: log + self.log_scale + other.log_scale })
    }

    /// Moves the orthogonality centre to `center` in place and factors the
    /// centre norm into `log_scale`.
    pub fn canonicalize_in_place(&mut self, center: usize) -> Result<(), MpsError> {
        let n = self.n();
        if center >= n {
            return Err(MpsError::SiteOutOfRange { site: center, n });
        }
        let current = self.center;
        let gain = on_sites!(&mut self.sites, v => {
            move_center(v, current, center)?;
            normalize_center(v, center)
        });
        self.log_scale += gain;
        self.center = Some(center);
        Ok(())
    }

    pub fn canonicalize(&self, center: usize) -> Result<Self, MpsError> {
        let mut out = self.clone();
        out.canonicalize_in_place(center)?;
        Ok(out)
    }

    /// Applies a `p² × p²` gate to sites `(bond, bond + 1)` and re-splits with
    /// a truncated SVD. Returns the discarded weight.
    pub fn apply_two_site_gate(
        &mut self,
        bond: usize,
        gate: &DenseTensor,
        max_rank: usize,
        weight_tol: f64,
    ) -> Result<f64, MpsError> {
        self.apply_two_site_gate_sweep(bond, gate, max_rank, weight_tol, Sweep::LeftToRight)
    }

    pub fn apply_two_site_gate_sweep(
        &mut self,
        bond: usize,
        gate: &DenseTensor,
        max_rank: usize,
        weight_tol: f64,
        sweep: Sweep,
    ) -> Result<f64, MpsError> {
        let n = self.n();
        if bond + 1 >= n {
            return Err(MpsError::BondOutOfRange { bond, n });
        }
        let p = self.phys_dim();
        if gate.shape() != [p * p, p * p] {
            return Err(MpsError::GateShape { expected: vec![p * p, p * p], found: gate.shape().to_vec() });
        }
        let target = match self.center {
            Some(c) if c > bond => bond + 1,
            _ => bond,
        };
        let current = self.center;
        on_sites!(&mut self.sites, v => move_center(v, current, target))?;
        if !gate.is_real() {
            self.sites.promote();
        }
        let (discarded, gain) = match (&mut self.sites, gate) {
            (Sites::Real(v), DenseTensor::Real(g)) => {
                let g = g.view().into_dimensionality().expect("rank 2").to_owned();
                apply_gate_typed(v, bond, &g, max_rank, weight_tol, sweep)?
            }
            (Sites::Complex(v), g) => {
                let g = g.clone().into_complex().into_dimensionality().expect("rank 2");
                apply_gate_typed(v, bond, &g, max_rank, weight_tol, sweep)?
            }
            (Sites::Real(_), DenseTensor::Complex(_)) => unreachable!("promoted above"),
        };
        self.log_scale += gain;
        self.center = Some(match sweep {
            Sweep::LeftToRight => bond + 1,
            Sweep::RightToLeft => bond,
        });
        Ok(discarded)
    }

    /// Normalized Schmidt spectrum across `cut` (sites `[0, cut)` vs `[cut, n)`).
    /// The caller's state is not modified.
    pub fn schmidt_spectrum(&self, cut: usize) -> Result<SchmidtSpectrum, MpsError> {
        let n = self.n();
        if cut > n {
            return Err(MpsError::BondOutOfRange { bond: cut, n });
        }
        if cut == 0 || cut == n {
            return Ok(SchmidtSpectrum { cut, values: vec![1.0] });
        }
        let mut copy = self.sites.clone();
        let mut s = on_sites!(&mut copy, v => spectrum_typed(v, self.center, cut))?;
        let norm = s.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            s.iter_mut().for_each(|x| *x /= norm);
        }
        Ok(SchmidtSpectrum { cut, values: s })
    }

    /// Operator-space entanglement entropy in bits across `cut`.
    pub fn osee(&self, cut: usize) -> Result<f64, MpsError> {
        Ok(self.schmidt_spectrum(cut)?.entropy_bits())
    }

    /// Re-expresses the physical index in the transform's target basis.
    pub fn transform_basis(&self, transform: &BasisTransform) -> Result<Self, MpsError> {
        if transform.from != self.basis {
            return Err(MpsError::BasisMismatch(transform.from.to_string(), self.basis.to_string()));
        }
        fn per_site<T: Element>(v: &[Array3<T>], t: &Array2<T>) -> Vec<Array3<T>> {
            v.iter()
                .map(|a| {
                    let (dl, p, dr) = a.dim();
                    let mut out = Array3::<T>::zeros((dl, p, dr));
                    for l in 0..dl {
                        let block = a.slice(s![l, .., ..]);
                        out.slice_mut(s![l, .., ..]).assign(&t.dot(&block));
                    }
                    out
                })
                .collect()
        }
        let sites = match &self.sites {
            Sites::Real(v) if transform.is_real() => {
                let t = transform.matrix.mapv(|z| z.re);
                Sites::Real(per_site(v, &t))
            }
            other => Sites::Complex(per_site(&other.to_complex(), &transform.matrix)),
        };
        Ok(Self::from_sites(sites, self.center, self.log_scale, transform.to))
    }

    /// `B̂|self⟫` with bond dimensions multiplied by the MPO's.
    pub fn apply_mpo(&self, mpo: &SuperMpo) -> Result<Self, MpsError> {
        if mpo.basis != self.basis {
            return Err(MpsError::BasisMismatch(mpo.basis.to_string(), self.basis.to_string()));
        }
        if mpo.n() != self.n() {
            return Err(MpsError::LengthMismatch(mpo.n(), self.n()));
        }
        fn per_site<T: Element>(a: &Array3<T>, w: &ndarray::Array4<T>) -> Array3<T> {
            let (dl, p, dr) = a.dim();
            let (wl, _, _, wr) = w.dim();
            // out[(wl, dl), o, (wr, dr)] = Σ_i w[wl, o, i, wr] a[dl, i, dr]
            let wm = w.view().permuted_axes([0, 1, 3, 2]).as_standard_layout().into_owned();
            let wm = wm.into_shape_with_order((wl * p * wr, p)).expect("w");
            let am = a.view().permuted_axes([1, 0, 2]).as_standard_layout().into_owned();
            let am = am.into_shape_with_order((p, dl * dr)).expect("a");
            let prod = wm.dot(&am).into_shape_with_order((wl, p, wr, dl, dr)).expect("prod");
            let prod = prod.permuted_axes([0, 3, 1, 2, 4]).as_standard_layout().into_owned();
            prod.into_shape_with_order((wl * dl, p, wr * dr)).expect("site")
        }
        let sites = if self.is_real() && mpo.is_real() {
            let Sites::Real(v) = &self.sites else { unreachable!() };
            Sites::Real(
                v.iter()
                    .zip(&mpo.tensors)
                    .map(|(a, w)| per_site(a, &w.as_real().expect("real mpo").clone().into_dimensionality().expect("rank 4")))
                    .collect(),
            )
        } else {
            let v = self.sites.to_complex();
            Sites::Complex(
                v.iter()
                    .zip(&mpo.tensors)
                    .map(|(a, w)| per_site(a, &w.clone().into_complex().into_dimensionality().expect("rank 4")))
                    .collect(),
            )
        };
        Ok(Self::from_sites(sites, None, self.log_scale, self.basis))
    }

    /// `|x⟫ + |y⟫` by block-diagonal bond concatenation.
    pub fn mps_add(x: &Self, y: &Self) -> Result<Self, MpsError> {
        x.check_compatible(y)?;
        let lm = x.log_scale.max(y.log_scale);
        let fx = (x.log_scale - lm).exp();
        let fy = (y.log_scale - lm).exp();
        fn concat<T: Element>(x: &[Array3<T>], y: &[Array3<T>], fx: f64, fy: f64) -> Vec<Array3<T>> {
            let n = x.len();
            (0..n)
                .map(|j| {
                    let a = &x[j];
                    let b = &y[j];
                    let (al, p, ar) = a.dim();
                    let (bl, _, br) = b.dim();
                    let (lw, loff) = if j == 0 { (1, 0) } else { (al + bl, al) };
                    let (rw, roff) = if j == n - 1 { (1, 0) } else { (ar + br, ar) };
                    let mut out = Array3::<T>::zeros((lw, p, rw));
                    let (sa, sb) = if j == 0 { (T::from_real(fx), T::from_real(fy)) } else { (T::one(), T::one()) };
                    for ((l, s, r), v) in a.indexed_iter() {
                        out[[l, s, r]] += *v * sa;
                    }
                    for ((l, s, r), v) in b.indexed_iter() {
                        out[[l + loff, s, r + roff]] += *v * sb;
                    }
                    out
                })
                .collect()
        }
        let sites = match (&x.sites, &y.sites) {
            (Sites::Real(a), Sites::Real(b)) => Sites::Real(concat(a, b, fx, fy)),
            _ => Sites::Complex(concat(&x.sites.to_complex(), &y.sites.to_complex(), fx, fy)),
        };
        Ok(Self::from_sites(sites, None, lm, x.basis))
    }

    /// One SVD sweep bringing every bond down to what the tolerance and cap
    /// allow. Returns the summed discarded weight; the centre ends on site 0.
    pub fn compress(&mut self, max_rank: usize, weight_tol: f64) -> Result<f64, MpsError> {
        let center = self.center;
        let (discarded, gain) = on_sites!(&mut self.sites, v => compress_typed(v, center, max_rank, weight_tol))?;
        self.log_scale += gain;
        self.center = Some(0);
        Ok(discarded)
    }

    /// Dense coefficient vector (first site major), including the scale.
    pub fn to_coefficients(&self) -> Result<Array1<C64>, MpsError> {
        if self.n() > MAX_DENSE_SITES {
            return Err(MpsError::Invalid(format!("{} sites exceed the dense cap {MAX_DENSE_SITES}", self.n())));
        }
        let sites = self.sites.to_complex();
        let mut acc = Array2::<C64>::from_elem((1, 1), C64::new(1.0, 0.0));
        for a in &sites {
            let (dl, p, dr) = a.dim();
            let rows = acc.nrows();
            acc = acc.dot(&mat(a, dl, p * dr));
            acc = acc.into_shape_with_order((rows * p, dr)).expect("coefficient shape");
        }
        let scale = self.log_scale.exp();
        Ok(acc.column(0).mapv(|z| z * scale))
    }

    /// Checks the orthonormality conditions implied by the recorded centre.
    /// Returns the largest deviation from the identity.
    pub fn canonical_residual(&self) -> f64 {
        let Some(c) = self.center else { return f64::INFINITY };
        let sites = self.sites.to_complex();
        let mut worst: f64 = 0.0;
        for (j, a) in sites.iter().enumerate() {
            let (dl, p, dr) = a.dim();
            if j < c {
                let m = mat(a, dl * p, dr);
                let g = m.t().mapv(|z| z.conj()).dot(&m);
                worst = worst.max(identity_residual(&g));
            } else if j > c {
                let m = mat(a, dl, p * dr);
                let g = m.dot(&m.t().mapv(|z| z.conj()));
                worst = worst.max(identity_residual(&g));
            }
        }
        worst
    }
}

/// Euclidean norm that does not overflow for entries near `f64::MAX`.
fn stable_norm(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let peak = values.clone().fold(0.0, f64::max);
    if peak == 0.0 || !peak.is_finite() {
        return peak;
    }
    peak * values.map(|v| (v / peak).powi(2)).sum::<f64>().sqrt()
}

fn identity_residual(g: &Array2<C64>) -> f64 {
    g.indexed_iter()
        .map(|((i, j), z)| (z - if i == j { C64::new(1.0, 0.0) } else { C64::zero() }).norm())
        .fold(0.0, f64::max)
}
