//! Dense real/complex tensor kernels.
//!
//! Every tensor is stored row-major (C order): for extents `(n_0, .., n_{r-1})`
//! the element at `(i_0, .., i_{r-1})` sits at offset
//! `((i_0 * n_1 + i_1) * n_2 + ..) * n_{r-1} + i_{r-1}`. Snapshot files rely on
//! this order.
//!
//! Real and complex tensors are distinct variants. Operations that mix them
//! promote the real operand; nothing ever demotes silently.

use ndarray::{Array2, ArrayD, ArrayView2, IxDyn, ShapeBuilder};
use ndarray_linalg::{Eigh, JobSvd, Lapack, Scalar, SVDDC, SVD, UPLO, QR, Inverse};
use num_complex::Complex64;
use num_traits::{One, Zero};

use crate::error::TensorError;

pub type C64 = Complex64;

/// Singular values closer than this (relative to the largest) are treated as
/// one degenerate multiplet when truncating.
pub const DEGENERACY_TOL: f64 = 1e-14;

/// Largest square matrix accepted by [`matrix_exp`].
pub const MAX_EXP_DIM: usize = 256;

/// Scalar types the kernels are generic over (`f64` and `C64`).
pub trait Element: Scalar<Real = f64> + Lapack + Zero + One + Copy + Send + Sync + 'static {
    const IS_COMPLEX: bool;
    fn wrap(a: ArrayD<Self>) -> DenseTensor;
    fn to_c64(self) -> C64;
    /// `None` when the tensor has the other variant and cannot be borrowed as `Self`.
    fn view_of(t: &DenseTensor) -> Option<&ArrayD<Self>>;
    /// Converts a tensor into this element type. Fails only when demoting a
    /// complex tensor with nonzero imaginary parts.
    fn cast(t: DenseTensor) -> Result<ArrayD<Self>, TensorError>;
}

impl Element for f64 {
    const IS_COMPLEX: bool = false;
    fn wrap(a: ArrayD<Self>) -> DenseTensor {
        DenseTensor::Real(a)
    }
    fn to_c64(self) -> C64 {
        C64::new(self, 0.0)
    }
    fn view_of(t: &DenseTensor) -> Option<&ArrayD<Self>> {
        match t {
            DenseTensor::Real(a) => Some(a),
            DenseTensor::Complex(_) => None,
        }
    }
    fn cast(t: DenseTensor) -> Result<ArrayD<Self>, TensorError> {
        match t {
            DenseTensor::Real(a) => Ok(a),
            DenseTensor::Complex(a) => {
                let worst = a.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
                if worst > 0.0 {
                    Err(TensorError::ComplexResidue { residue: worst })
                } else {
                    Ok(a.mapv(|z| z.re))
                }
            }
        }
    }
}

impl Element for C64 {
    const IS_COMPLEX: bool = true;
    fn wrap(a: ArrayD<Self>) -> DenseTensor {
        DenseTensor::Complex(a)
    }
    fn to_c64(self) -> C64 {
        self
    }
    fn view_of(t: &DenseTensor) -> Option<&ArrayD<Self>> {
        match t {
            DenseTensor::Complex(a) => Some(a),
            DenseTensor::Real(_) => None,
        }
    }
    fn cast(t: DenseTensor) -> Result<ArrayD<Self>, TensorError> {
        Ok(t.into_complex())
    }
}

/// A dense rank-r tensor of 64-bit reals or complex numbers.
#[derive(Clone, Debug, PartialEq)]
pub enum DenseTensor {
    Real(ArrayD<f64>),
    Complex(ArrayD<C64>),
}

impl DenseTensor {
    pub fn zeros_real(shape: &[usize]) -> Self {
        Self::Real(ArrayD::zeros(IxDyn(shape)))
    }

    pub fn zeros_complex(shape: &[usize]) -> Self {
        Self::Complex(ArrayD::zeros(IxDyn(shape)))
    }

    /// Builds a tensor from row-major data. Fails when the element count does
    /// not match the product of extents or an extent is zero.
    pub fn from_real_vec(shape: &[usize], data: Vec<f64>) -> Result<Self, TensorError> {
        check_shape(shape, data.len())?;
        Ok(Self::Real(ArrayD::from_shape_vec(IxDyn(shape), data).expect("checked shape")))
    }

    pub fn from_complex_vec(shape: &[usize], data: Vec<C64>) -> Result<Self, TensorError> {
        check_shape(shape, data.len())?;
        Ok(Self::Complex(ArrayD::from_shape_vec(IxDyn(shape), data).expect("checked shape")))
    }

    pub fn from_matrix<T: Element>(m: Array2<T>) -> Self {
        T::wrap(m.into_dyn())
    }

    pub fn identity(n: usize) -> Self {
        Self::from_matrix(Array2::<f64>::eye(n))
    }

    pub fn shape(&self) -> &[usize] {
        match self {
            Self::Real(a) => a.shape(),
            Self::Complex(a) => a.shape(),
        }
    }

    pub fn rank(&self) -> usize {
        self.shape().len()
    }

    pub fn len(&self) -> usize {
        self.shape().iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_real(&self) -> bool {
        matches!(self, Self::Real(_))
    }

    /// Element at a multi-index, promoted to complex.
    pub fn get(&self, index: &[usize]) -> Option<C64> {
        match self {
            Self::Real(a) => a.get(IxDyn(index)).map(|&x| C64::new(x, 0.0)),
            Self::Complex(a) => a.get(IxDyn(index)).copied(),
        }
    }

    pub fn as_real(&self) -> Option<&ArrayD<f64>> {
        match self {
            Self::Real(a) => Some(a),
            Self::Complex(_) => None,
        }
    }

    pub fn as_complex(&self) -> Option<&ArrayD<C64>> {
        match self {
            Self::Complex(a) => Some(a),
            Self::Real(_) => None,
        }
    }

    pub fn into_complex(self) -> ArrayD<C64> {
        match self {
            Self::Real(a) => a.mapv(|x| C64::new(x, 0.0)),
            Self::Complex(a) => a,
        }
    }

    pub fn to_complex(&self) -> DenseTensor {
        Self::Complex(self.clone().into_complex())
    }

    /// Largest absolute imaginary part; zero for the real variant.
    pub fn imag_residue(&self) -> f64 {
        match self {
            Self::Real(_) => 0.0,
            Self::Complex(a) => a.iter().map(|z| z.im.abs()).fold(0.0, f64::max),
        }
    }

    /// Drops the imaginary part if every entry is within `tol` of the real axis.
    pub fn try_into_real(self, tol: f64) -> Result<DenseTensor, TensorError> {
        let residue = self.imag_residue();
        if residue > tol {
            return Err(TensorError::ComplexResidue { residue });
        }
        Ok(match self {
            Self::Complex(a) => Self::Real(a.mapv(|z| z.re)),
            r => r,
        })
    }

    pub fn conj(&self) -> DenseTensor {
        match self {
            Self::Real(a) => Self::Real(a.clone()),
            Self::Complex(a) => Self::Complex(a.mapv(|z| z.conj())),
        }
    }

    pub fn scale(&self, factor: f64) -> DenseTensor {
        match self {
            Self::Real(a) => Self::Real(a * factor),
            Self::Complex(a) => Self::Complex(a.mapv(|z| z * factor)),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        match self {
            Self::Real(a) => a.iter().map(|x| x * x).sum::<f64>().sqrt(),
            Self::Complex(a) => a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt(),
        }
    }

    /// Frobenius norm of `self - other` (promoting as needed).
    pub fn distance(&self, other: &DenseTensor) -> Result<f64, TensorError> {
        if self.shape() != other.shape() {
            return Err(TensorError::ShapeMismatch {
                expected: self.shape().to_vec(),
                found: other.shape().to_vec(),
            });
        }
        Ok(match (self, other) {
            (Self::Real(a), Self::Real(b)) => {
                a.iter().zip(b.iter()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
            }
            _ => {
                let a = self.clone().into_complex();
                let b = other.clone().into_complex();
                a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt()
            }
        })
    }

    /// Reshape keeping the row-major order.
    pub fn reshape(&self, shape: &[usize]) -> Result<DenseTensor, TensorError> {
        check_shape(shape, self.len())?;
        Ok(match self {
            Self::Real(a) => Self::Real(reshape_dyn(a, shape)),
            Self::Complex(a) => Self::Complex(reshape_dyn(a, shape)),
        })
    }

    /// Rank-2 view as an owned complex matrix.
    pub fn to_complex_matrix(&self) -> Result<Array2<C64>, TensorError> {
        require_rank(self, 2)?;
        Ok(self.clone().into_complex().into_dimensionality().expect("rank checked"))
    }

    /// Row-major element dump, promoted to complex.
    pub fn to_complex_vec(&self) -> Vec<C64> {
        match self {
            Self::Real(a) => a.iter().map(|&x| C64::new(x, 0.0)).collect(),
            Self::Complex(a) => a.iter().copied().collect(),
        }
    }
}

fn check_shape(shape: &[usize], len: usize) -> Result<(), TensorError> {
    if shape.contains(&0) {
        return Err(TensorError::ZeroExtent(shape.to_vec()));
    }
    let count: usize = shape.iter().product();
    if count != len {
        return Err(TensorError::ElementCount { shape: shape.to_vec(), len });
    }
    Ok(())
}

fn require_rank(t: &DenseTensor, rank: usize) -> Result<(), TensorError> {
    if t.rank() != rank {
        return Err(TensorError::Rank { expected: rank, found: t.rank() });
    }
    Ok(())
}

pub(crate) fn reshape_dyn<T: Clone>(a: &ArrayD<T>, shape: &[usize]) -> ArrayD<T> {
    let data: Vec<T> = a.iter().cloned().collect();
    ArrayD::from_shape_vec(IxDyn(shape), data).expect("element count preserved")
}

/// Tensor contraction over `paired_axes` (axis of `a`, axis of `b`).
///
/// The result carries the unpaired axes of `a` followed by the unpaired axes
/// of `b`, each in their original order.
pub fn contract(
    a: &DenseTensor,
    b: &DenseTensor,
    paired_axes: &[(usize, usize)],
) -> Result<DenseTensor, TensorError> {
    for &(ia, ib) in paired_axes {
        if ia >= a.rank() {
            return Err(TensorError::AxisOutOfRange { axis: ia, rank: a.rank() });
        }
        if ib >= b.rank() {
            return Err(TensorError::AxisOutOfRange { axis: ib, rank: b.rank() });
        }
        if a.shape()[ia] != b.shape()[ib] {
            return Err(TensorError::ExtentMismatch {
                left: a.shape()[ia],
                right: b.shape()[ib],
            });
        }
    }
    let mut seen_a = vec![false; a.rank()];
    let mut seen_b = vec![false; b.rank()];
    for &(ia, ib) in paired_axes {
        if std::mem::replace(&mut seen_a[ia], true) {
            return Err(TensorError::RepeatedAxis(ia));
        }
        if std::mem::replace(&mut seen_b[ib], true) {
            return Err(TensorError::RepeatedAxis(ib));
        }
    }
    Ok(match (a, b) {
        (DenseTensor::Real(x), DenseTensor::Real(y)) => {
            DenseTensor::Real(contract_arrays(x, y, paired_axes))
        }
        _ => {
            let x = a.clone().into_complex();
            let y = b.clone().into_complex();
            DenseTensor::Complex(contract_arrays(&x, &y, paired_axes))
        }
    })
}

fn contract_arrays<T: Element>(a: &ArrayD<T>, b: &ArrayD<T>, pairs: &[(usize, usize)]) -> ArrayD<T> {
    let free_a: Vec<usize> = (0..a.ndim()).filter(|i| !pairs.iter().any(|p| p.0 == *i)).collect();
    let free_b: Vec<usize> = (0..b.ndim()).filter(|i| !pairs.iter().any(|p| p.1 == *i)).collect();
    let mut perm_a = free_a.clone();
    perm_a.extend(pairs.iter().map(|p| p.0));
    let mut perm_b: Vec<usize> = pairs.iter().map(|p| p.1).collect();
    perm_b.extend(free_b.iter().copied());

    let rows: usize = free_a.iter().map(|&i| a.shape()[i]).product();
    let inner: usize = pairs.iter().map(|p| a.shape()[p.0]).product();
    let cols: usize = free_b.iter().map(|&i| b.shape()[i]).product();

    let am = as_matrix(a.view().permuted_axes(perm_a), rows, inner);
    let bm = as_matrix(b.view().permuted_axes(perm_b), inner, cols);
    let c = am.dot(&bm);

    let mut shape: Vec<usize> = free_a.iter().map(|&i| a.shape()[i]).collect();
    shape.extend(free_b.iter().map(|&i| b.shape()[i]));
    if shape.is_empty() {
        return ArrayD::from_elem(IxDyn(&[]), c[[0, 0]]);
    }
    c.into_shape_with_order(IxDyn(&shape)).expect("product of extents")
}

fn as_matrix<T: Clone>(v: ndarray::ArrayViewD<'_, T>, rows: usize, cols: usize) -> Array2<T> {
    let data: Vec<T> = v.iter().cloned().collect();
    Array2::from_shape_vec((rows, cols), data).expect("product of extents")
}

/// Rank-truncated SVD `m ≈ left · diag(singular_values) · right`.
#[derive(Clone, Debug)]
pub struct TruncatedFactorization {
    /// Orthonormal columns.
    pub left_factor: DenseTensor,
    /// Sorted nonincreasing, nonnegative.
    pub singular_values: Vec<f64>,
    /// Orthonormal rows.
    pub right_factor: DenseTensor,
    /// Σ discarded s² / Σ all s².
    pub discarded_weight: f64,
}

impl TruncatedFactorization {
    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }

    /// `left · diag(s) · right`.
    pub fn reconstruct(&self) -> DenseTensor {
        let k = self.rank();
        match (&self.left_factor, &self.right_factor) {
            (DenseTensor::Real(u), DenseTensor::Real(v)) => {
                let u = u.view().into_dimensionality::<ndarray::Ix2>().expect("rank 2");
                let v = v.view().into_dimensionality::<ndarray::Ix2>().expect("rank 2");
                let mut us = u.to_owned();
                for j in 0..k {
                    us.column_mut(j).mapv_inplace(|x| x * self.singular_values[j]);
                }
                DenseTensor::from_matrix(us.dot(&v))
            }
            _ => {
                let u: Array2<C64> = self.left_factor.to_complex_matrix().expect("rank 2");
                let v: Array2<C64> = self.right_factor.to_complex_matrix().expect("rank 2");
                let mut us = u;
                for j in 0..k {
                    let s = self.singular_values[j];
                    us.column_mut(j).mapv_inplace(|x| x * s);
                }
                DenseTensor::from_matrix(us.dot(&v))
            }
        }
    }
}

/// Generic truncated SVD on a matrix of either element type.
#[derive(Clone, Debug)]
pub(crate) struct SvdParts<T> {
    pub u: Array2<T>,
    pub s: Vec<f64>,
    pub vt: Array2<T>,
    pub discarded_weight: f64,
}

/// Number of singular values to keep.
///
/// Tolerance first (smallest `k` whose discarded tail weight is within
/// `weight_tol`), then the `max_rank` cap, then the cut is widened so that a
/// degenerate multiplet is never split. The result may exceed `max_rank` by
/// the width of that multiplet.
pub fn truncation_rank(s: &[f64], max_rank: usize, weight_tol: f64) -> usize {
    if s.is_empty() {
        return 0;
    }
    let total: f64 = s.iter().map(|x| x * x).sum();
    if total == 0.0 {
        return 1;
    }
    // tail[k] = Σ_{i>=k} s_i², accumulated from the small end.
    let mut tail = vec![0.0; s.len() + 1];
    for i in (0..s.len()).rev() {
        tail[i] = tail[i + 1] + s[i] * s[i];
    }
    let mut keep = (1..=s.len()).find(|&k| tail[k] / total <= weight_tol).unwrap_or(s.len());
    keep = keep.min(max_rank.max(1));
    let floor = DEGENERACY_TOL * s[0];
    while keep < s.len() && s[keep - 1] > floor && s[keep - 1] - s[keep] <= floor {
        keep += 1;
    }
    keep
}

pub(crate) fn svd_parts<T: Element>(
    m: ArrayView2<'_, T>,
    max_rank: usize,
    weight_tol: f64,
) -> Result<SvdParts<T>, TensorError> {
    let (u, s, vt) = full_svd(m)?;
    let keep = truncation_rank(s.as_slice(), max_rank, weight_tol);
    let total: f64 = s.iter().map(|x| x * x).sum();
    let discarded: f64 = s[keep..].iter().rev().map(|x| x * x).sum();
    let discarded_weight = if total > 0.0 { (discarded / total).clamp(0.0, 1.0) } else { 0.0 };
    Ok(SvdParts {
        u: u.slice(ndarray::s![.., ..keep]).to_owned(),
        s: s[..keep].to_vec(),
        vt: vt.slice(ndarray::s![..keep, ..]).to_owned(),
        discarded_weight,
    })
}

/// Thin SVD, divide-and-conquer with a QR-iteration fallback.
pub(crate) fn full_svd<T: Element>(
    m: ArrayView2<'_, T>,
) -> Result<(Array2<T>, Vec<f64>, Array2<T>), TensorError> {
    let owned = m.as_standard_layout().to_owned();
    let attempt = owned
        .svddc(JobSvd::Some)
        .ok()
        .or_else(|| owned.svd(true, true).ok());
    let Some((Some(u), s, Some(vt))) = attempt else {
        return Err(svd_failure(owned.view()));
    };
    let k = s.len();
    // gesvd returns full U/Vᵀ; trim to the thin shape.
    let u = if u.ncols() > k { u.slice(ndarray::s![.., ..k]).to_owned() } else { u };
    let vt = if vt.nrows() > k { vt.slice(ndarray::s![..k, ..]).to_owned() } else { vt };
    Ok((u, s.to_vec(), vt))
}

fn svd_failure<T: Element>(m: ArrayView2<'_, T>) -> TensorError {
    let nonfinite = m.iter().filter(|x| !x.to_c64().is_finite()).count();
    let frobenius = m.iter().map(|x| x.to_c64().norm_sqr()).sum::<f64>().sqrt();
    let max_abs = m.iter().map(|x| x.to_c64().norm()).fold(0.0, f64::max);
    TensorError::SvdNoConvergence {
        rows: m.nrows(),
        cols: m.ncols(),
        frobenius,
        max_abs,
        nonfinite,
    }
}

/// Truncated SVD of a rank-2 tensor.
pub fn svd_truncate(
    m: &DenseTensor,
    max_rank: usize,
    weight_tol: f64,
) -> Result<TruncatedFactorization, TensorError> {
    require_rank(m, 2)?;
    if max_rank == 0 {
        return Err(TensorError::ZeroRank);
    }
    if !(weight_tol >= 0.0) {
        return Err(TensorError::NegativeTolerance(weight_tol));
    }
    Ok(match m {
        DenseTensor::Real(a) => {
            let a = a.view().into_dimensionality().expect("rank 2");
            factorization(svd_parts::<f64>(a, max_rank, weight_tol)?)
        }
        DenseTensor::Complex(a) => {
            let a = a.view().into_dimensionality().expect("rank 2");
            factorization(svd_parts::<C64>(a, max_rank, weight_tol)?)
        }
    })
}

fn factorization<T: Element>(p: SvdParts<T>) -> TruncatedFactorization {
    TruncatedFactorization {
        left_factor: DenseTensor::from_matrix(p.u),
        singular_values: p.s,
        right_factor: DenseTensor::from_matrix(p.vt),
        discarded_weight: p.discarded_weight,
    }
}

/// Which side the orthonormal factor sits on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    /// `m = Q · R`, Q with orthonormal columns.
    Left,
    /// `m = L · Q`, Q with orthonormal rows.
    Right,
}

/// Reduced QR (left) or LQ (right) with a nonnegative real diagonal on the
/// triangular part. Returns `(orthonormal factor, remainder)`.
pub(crate) fn qr_positive<T: Element>(m: ArrayView2<'_, T>) -> Result<(Array2<T>, Array2<T>), TensorError> {
    let (mut q, mut r) = m
        .as_standard_layout()
        .qr()
        .map_err(|e| TensorError::Lapack(e.to_string()))?;
    for i in 0..r.nrows().min(r.ncols()) {
        let d = r[[i, i]];
        let mag = d.abs();
        if mag > 0.0 {
            let phase = d / T::from_real(mag);
            let inv = phase.conj();
            r.row_mut(i).mapv_inplace(|x| x * inv);
            q.column_mut(i).mapv_inplace(|x| x * phase);
        }
    }
    Ok((q, r))
}

pub(crate) fn lq_positive<T: Element>(m: ArrayView2<'_, T>) -> Result<(Array2<T>, Array2<T>), TensorError> {
    let mh = m.t().mapv(|x| x.conj());
    let (q, r) = qr_positive(mh.view())?;
    Ok((r.t().mapv(|x| x.conj()), q.t().mapv(|x| x.conj())))
}

/// Orthogonal factorization of a rank-2 tensor.
///
/// `Side::Left` gives `m = factor · remainder`; `Side::Right` gives
/// `m = remainder · factor`.
pub fn orthogonal_factor(m: &DenseTensor, side: Side) -> Result<(DenseTensor, DenseTensor), TensorError> {
    require_rank(m, 2)?;
    fn run<T: Element>(a: &ArrayD<T>, side: Side) -> Result<(DenseTensor, DenseTensor), TensorError> {
        let a = a.view().into_dimensionality::<ndarray::Ix2>().expect("rank 2");
        Ok(match side {
            Side::Left => {
                let (q, r) = qr_positive(a)?;
                (DenseTensor::from_matrix(q), DenseTensor::from_matrix(r))
            }
            Side::Right => {
                let (l, q) = lq_positive(a)?;
                (DenseTensor::from_matrix(q), DenseTensor::from_matrix(l))
            }
        })
    }
    match m {
        DenseTensor::Real(a) => run(a, side),
        DenseTensor::Complex(a) => run(a, side),
    }
}

/// `exp(scale · g)` for a square matrix of dimension at most [`MAX_EXP_DIM`].
///
/// Real symmetric and complex hermitian generators go through a symmetric
/// eigendecomposition, real antisymmetric ones through the hermitian matrix
/// `i·g`; anything else uses scaling and squaring with a [13/13] Padé
/// approximant.
pub fn matrix_exp(g: &DenseTensor, scale: f64) -> Result<DenseTensor, TensorError> {
    require_rank(g, 2)?;
    let n = g.shape()[0];
    if g.shape()[1] != n {
        return Err(TensorError::NotSquare(g.shape().to_vec()));
    }
    if n > MAX_EXP_DIM {
        return Err(TensorError::TooLarge { dim: n, max: MAX_EXP_DIM });
    }
    if scale == 0.0 {
        return Ok(match g {
            DenseTensor::Real(_) => DenseTensor::identity(n),
            DenseTensor::Complex(_) => DenseTensor::Complex(Array2::<C64>::eye(n).into_dyn()),
        });
    }
    let out = match g {
        DenseTensor::Real(a) => {
            let a: Array2<f64> = a.clone().into_dimensionality().expect("rank 2");
            let norm = a.iter().map(|x| x.abs()).fold(0.0, f64::max);
            let tol = 1e-14 * norm.max(1.0);
            if is_symmetric(&a, tol, 1.0) {
                DenseTensor::from_matrix(exp_hermitian(&a, scale)?)
            } else if is_symmetric(&a, tol, -1.0) {
                let k = a.mapv(|x| C64::new(0.0, x));
                let e = exp_hermitian_phase(&k, -scale)?;
                DenseTensor::from_matrix(e.mapv(|z| z.re))
            } else {
                DenseTensor::from_matrix(exp_pade(&(a * scale))?)
            }
        }
        DenseTensor::Complex(a) => {
            let a: Array2<C64> = a.clone().into_dimensionality().expect("rank 2");
            let norm = a.iter().map(|x| x.norm()).fold(0.0, f64::max);
            let tol = 1e-14 * norm.max(1.0);
            let hermitian = a.indexed_iter().all(|((i, j), x)| (x - a[[j, i]].conj()).norm() <= tol);
            if hermitian {
                DenseTensor::from_matrix(exp_hermitian(&a, scale)?)
            } else {
                DenseTensor::from_matrix(exp_pade(&a.mapv(|z| z * scale))?)
            }
        }
    };
    let finite = match &out {
        DenseTensor::Real(a) => a.iter().all(|x| x.is_finite()),
        DenseTensor::Complex(a) => a.iter().all(|x| x.is_finite()),
    };
    if !finite {
        return Err(TensorError::ExpOverflow { scale });
    }
    Ok(out)
}

fn is_symmetric(a: &Array2<f64>, tol: f64, sign: f64) -> bool {
    a.indexed_iter().all(|((i, j), &x)| (x - sign * a[[j, i]]).abs() <= tol)
}

/// Eigen-decomposition of a hermitian matrix. The input is copied into
/// column-major order: LAPACK would otherwise see the transpose, which for a
/// complex hermitian matrix is its conjugate.
pub(crate) fn eigh_hermitian<T: Element>(a: &Array2<T>) -> Result<(Vec<f64>, Array2<T>), TensorError> {
    let mut f = Array2::<T>::zeros(a.raw_dim().f());
    f.assign(a);
    let (vals, vecs) = f.eigh(UPLO::Lower).map_err(|e| TensorError::Lapack(e.to_string()))?;
    Ok((vals.to_vec(), vecs))
}

/// `V diag(exp(scale λ)) V†` for hermitian `a`.
fn exp_hermitian<T: Element>(a: &Array2<T>, scale: f64) -> Result<Array2<T>, TensorError> {
    let (vals, vecs) = eigh_hermitian(a)?;
    let mut scaled = vecs.clone();
    for (j, &lam) in vals.iter().enumerate() {
        let f = T::from_real((scale * lam).exp());
        scaled.column_mut(j).mapv_inplace(|x| x * f);
    }
    let vh = vecs.t().mapv(|x| x.conj());
    Ok(scaled.dot(&vh))
}

/// `V diag(exp(i·scale·λ)) V†` for hermitian `k`.
fn exp_hermitian_phase(k: &Array2<C64>, scale: f64) -> Result<Array2<C64>, TensorError> {
    let (vals, vecs) = eigh_hermitian(k)?;
    let mut scaled = vecs.clone();
    for (j, &lam) in vals.iter().enumerate() {
        let f = C64::from_polar(1.0, scale * lam);
        scaled.column_mut(j).mapv_inplace(|x| x * f);
    }
    let vh = vecs.t().mapv(|x| x.conj());
    Ok(scaled.dot(&vh))
}

/// Scaling and squaring with the degree-13 Padé approximant.
fn exp_pade<T: Element>(a: &Array2<T>) -> Result<Array2<T>, TensorError> {
    const B: [f64; 14] = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ];
    const THETA13: f64 = 5.371920351148152;
    let n = a.nrows();
    let norm1 = (0..n)
        .map(|j| a.column(j).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let squarings = if norm1 > THETA13 { (norm1 / THETA13).log2().ceil() as i32 } else { 0 };
    let scaled = a.mapv(|x| x * T::from_real(2f64.powi(-squarings)));
    let id = Array2::<T>::eye(n);
    let a2 = scaled.dot(&scaled);
    let a4 = a2.dot(&a2);
    let a6 = a4.dot(&a2);
    let c = |k: usize| T::from_real(B[k]);
    let inner_u = a6.mapv(|x| x * c(13)) + a4.mapv(|x| x * c(11)) + a2.mapv(|x| x * c(9));
    let u = scaled.dot(
        &(a6.dot(&inner_u) + a6.mapv(|x| x * c(7)) + a4.mapv(|x| x * c(5)) + a2.mapv(|x| x * c(3)) + id.mapv(|x| x * c(1))),
    );
    let inner_v = a6.mapv(|x| x * c(12)) + a4.mapv(|x| x * c(10)) + a2.mapv(|x| x * c(8));
    let v = a6.dot(&inner_v) + a6.mapv(|x| x * c(6)) + a4.mapv(|x| x * c(4)) + a2.mapv(|x| x * c(2)) + id.mapv(|x| x * c(0));
    let p = &v + &u;
    let q = &v - &u;
    let qinv = q.inv().map_err(|e| TensorError::Lapack(e.to_string()))?;
    let mut r = qinv.dot(&p);
    for _ in 0..squarings {
        r = r.dot(&r);
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array1;
    use approx::assert_abs_diff_eq;

    fn pauli(k: usize) -> DenseTensor {
        let z = C64::new(0.0, 0.0);
        let o = C64::new(1.0, 0.0);
        let i = C64::new(0.0, 1.0);
        let data = match k {
            1 => vec![z, o, o, z],
            2 => vec![z, -i, i, z],
            3 => vec![o, z, z, -o],
            _ => vec![o, z, z, o],
        };
        DenseTensor::from_complex_vec(&[2, 2], data).unwrap()
    }

    fn pseudo_random(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        Array2::from_shape_fn((rows, cols), |_| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        })
    }

    #[test]
    fn identity_contracts_to_identity() {
        let id = DenseTensor::identity(2);
        let out = contract(&id, &id, &[(1, 0)]).unwrap();
        assert_eq!(out, id);
    }

    #[test]
    fn pauli_product_is_i_sigma_z() {
        let out = contract(&pauli(1), &pauli(2), &[(1, 0)]).unwrap();
        let expected = pauli(3).to_complex_matrix().unwrap().mapv(|z| z * C64::i());
        let got = out.to_complex_matrix().unwrap();
        for (a, b) in got.iter().zip(expected.iter()) {
            assert_abs_diff_eq!((a - b).norm(), 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn gram_matrix_of_site_tensor_is_psd() {
        let data = pseudo_random(4, 3, 7).into_raw_vec_and_offset().0;
        let a = DenseTensor::from_real_vec(&[1, 4, 3], data).unwrap();
        let gram = contract(&a.conj(), &a, &[(0, 0), (1, 1)]).unwrap();
        assert_eq!(gram.shape(), &[3, 3]);
        let g = gram.to_complex_matrix().unwrap();
        // direct dense computation
        let raw = a.as_real().unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let direct: f64 = (0..4).map(|s| raw[[0, s, i]] * raw[[0, s, j]]).sum();
                assert_abs_diff_eq!(g[[i, j]].re, direct, epsilon = 1e-14);
                assert_abs_diff_eq!(g[[i, j]].re, g[[j, i]].re, epsilon = 1e-15);
            }
        }
        let (vals, _) = g.eigh(UPLO::Lower).unwrap();
        assert!(vals.iter().all(|&v| v > -1e-12));
    }

    #[test]
    fn contract_rejects_bad_axes() {
        let a = DenseTensor::identity(2);
        let b = DenseTensor::identity(3);
        assert!(matches!(contract(&a, &b, &[(1, 0)]), Err(TensorError::ExtentMismatch { .. })));
        assert!(matches!(contract(&a, &a, &[(2, 0)]), Err(TensorError::AxisOutOfRange { .. })));
    }

    #[test]
    fn contract_promotes_mixed_variants() {
        let out = contract(&DenseTensor::identity(2), &pauli(2), &[(1, 0)]).unwrap();
        assert!(!out.is_real());
    }

    #[test]
    fn svd_of_identity_keeps_everything() {
        let f = svd_truncate(&DenseTensor::identity(4), 4, 0.0).unwrap();
        assert_eq!(f.singular_values.len(), 4);
        for s in &f.singular_values {
            assert_abs_diff_eq!(*s, 1.0, epsilon = 1e-14);
        }
        assert_eq!(f.discarded_weight, 0.0);
    }

    #[test]
    fn svd_of_rank_one_matrix() {
        let u = Array1::from(vec![1.0, 2.0, -1.0]);
        let v = Array1::from(vec![0.5, -1.0, 3.0, 1.0]);
        let m = Array2::from_shape_fn((3, 4), |(i, j)| u[i] * v[j]);
        let f = svd_truncate(&DenseTensor::from_matrix(m), 1, 0.0).unwrap();
        assert_eq!(f.rank(), 1);
        assert!(f.discarded_weight < 1e-28);
        let left = f.left_factor.as_real().unwrap();
        let unorm = u.dot(&u).sqrt();
        let overlap: f64 = (0..3).map(|i| left[[i, 0]] * u[i] / unorm).sum();
        assert_abs_diff_eq!(overlap.abs(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn svd_discarded_weight_matches_full_spectrum() {
        let m = pseudo_random(8, 8, 42);
        let (_, s_full, _) = full_svd(m.view()).unwrap();
        let total: f64 = s_full.iter().map(|x| x * x).sum();
        let tail: f64 = s_full[3..].iter().map(|x| x * x).sum();
        let f = svd_truncate(&DenseTensor::from_matrix(m.clone()), 3, 0.0).unwrap();
        assert_eq!(f.rank(), 3);
        assert_abs_diff_eq!(f.discarded_weight, tail / total, epsilon = 1e-14);
        let err = f.reconstruct().distance(&DenseTensor::from_matrix(m)).unwrap();
        assert_abs_diff_eq!(err * err / total, f.discarded_weight, epsilon = 1e-12);
    }

    #[test]
    fn svd_keeps_degenerate_multiplets_together() {
        let m = Array2::from_diag(&Array1::from(vec![3.0, 2.0, 2.0, 2.0, 1.0]));
        let f = svd_truncate(&DenseTensor::from_matrix(m), 2, 0.0).unwrap();
        assert_eq!(f.rank(), 4);
    }

    #[test]
    fn svd_respects_weight_tolerance() {
        let m = Array2::from_diag(&Array1::from(vec![1.0, 0.1, 1e-4, 1e-7]));
        let f = svd_truncate(&DenseTensor::from_matrix(m), 10, 1e-6).unwrap();
        assert_eq!(f.rank(), 2);
        assert!(f.discarded_weight <= 1e-6);
    }

    #[test]
    fn qr_of_orthogonal_input_is_trivial() {
        let (c, s) = (0.3f64.cos(), 0.3f64.sin());
        let m = DenseTensor::from_matrix(ndarray::arr2(&[[c, -s], [s, c]]));
        let (q, r) = orthogonal_factor(&m, Side::Left).unwrap();
        assert!(q.distance(&m).unwrap() < 1e-14);
        assert!(r.distance(&DenseTensor::identity(2)).unwrap() < 1e-14);
    }

    #[test]
    fn qr_of_scaled_identity_has_diagonal_two() {
        let m = DenseTensor::identity(3).scale(2.0);
        let (_, r) = orthogonal_factor(&m, Side::Left).unwrap();
        for i in 0..3 {
            assert_abs_diff_eq!(r.get(&[i, i]).unwrap().re, 2.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn orthogonal_factor_random_both_sides() {
        let m = pseudo_random(6, 4, 3);
        let t = DenseTensor::from_matrix(m.clone());
        let (q, r) = orthogonal_factor(&t, Side::Left).unwrap();
        let q = q.as_real().unwrap().clone().into_dimensionality::<ndarray::Ix2>().unwrap();
        let r = r.as_real().unwrap().clone().into_dimensionality::<ndarray::Ix2>().unwrap();
        let qtq = q.t().dot(&q);
        assert!((&qtq - &Array2::<f64>::eye(4)).iter().all(|x| x.abs() < 1e-12));
        assert!((&q.dot(&r) - &m).iter().all(|x| x.abs() < 1e-12));

        let (qr, l) = orthogonal_factor(&DenseTensor::from_matrix(m.t().to_owned()), Side::Right).unwrap();
        let qr = qr.as_real().unwrap().clone().into_dimensionality::<ndarray::Ix2>().unwrap();
        let l = l.as_real().unwrap().clone().into_dimensionality::<ndarray::Ix2>().unwrap();
        assert!((&qr.dot(&qr.t()) - &Array2::<f64>::eye(4)).iter().all(|x| x.abs() < 1e-12));
        assert!((&l.dot(&qr) - &m.t()).iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn exp_of_zero_is_identity() {
        let g = DenseTensor::from_matrix(pseudo_random(5, 5, 9));
        let e = matrix_exp(&g, 0.0).unwrap();
        assert!(e.distance(&DenseTensor::identity(5)).unwrap() < 1e-14);
    }

    #[test]
    fn exp_of_antisymmetric_is_rotation() {
        let theta = 0.7;
        let g = DenseTensor::from_matrix(ndarray::arr2(&[[0.0, -1.0], [1.0, 0.0]]));
        let e = matrix_exp(&g, theta).unwrap();
        assert!(e.is_real());
        let expected = ndarray::arr2(&[[theta.cos(), -theta.sin()], [theta.sin(), theta.cos()]]);
        let err = e.distance(&DenseTensor::from_matrix(expected)).unwrap();
        assert!(err < 1e-14, "{err:e} {e:?}");
    }

    #[test]
    fn exp_of_diagonal() {
        let g = DenseTensor::from_matrix(Array2::from_diag(&Array1::from(vec![-1.0, -2.0])));
        let e = matrix_exp(&g, 0.5).unwrap();
        assert_abs_diff_eq!(e.get(&[0, 0]).unwrap().re, (-0.5f64).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(e.get(&[1, 1]).unwrap().re, (-1.0f64).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(e.get(&[0, 1]).unwrap().norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn pade_path_agrees_with_eigen_path() {
        // non-normal matrix: compare with a Taylor series evaluated by brute force
        let g = pseudo_random(6, 6, 11) * 0.8;
        let e = matrix_exp(&DenseTensor::from_matrix(g.clone()), 1.3).unwrap();
        let a = &g * 1.3;
        let mut term = Array2::<f64>::eye(6);
        let mut sum = term.clone();
        for k in 1..60 {
            term = term.dot(&a) / k as f64;
            sum += &term;
        }
        assert!(e.distance(&DenseTensor::from_matrix(sum)).unwrap() < 1e-12);
    }

    #[test]
    fn exp_rejects_oversized() {
        let g = DenseTensor::identity(MAX_EXP_DIM + 1);
        assert!(matches!(matrix_exp(&g, 1.0), Err(TensorError::TooLarge { .. })));
    }

    #[test]
    fn exp_reports_overflow() {
        let g = DenseTensor::identity(2);
        assert!(matches!(matrix_exp(&g, 1e4), Err(TensorError::ExpOverflow { .. })));
    }
}
