//! Expectation values assembled from thermal and Heisenberg snapshots.
//!
//! `⟨b a(t)⟩_β = ⟪ρ(β)|B̂|a(t)⟫ / ⟪ρ(β)|e⟫` where `B̂` multiplies by `b` from
//! the left (or from the right for `⟨a(t) b⟩_β`). Thermal states live in the
//! real basis and are re-expressed in the basis of `a` before contracting.

use ndarray::Array2;
use rayon::prelude::*;

use crate::basis::change_of_basis;
use crate::engine::Snapshot;
use crate::error::{MpsError, ObservableError};
use crate::mps::{LogScalar, OperatorMps};
use crate::superop::SuperMpo;
use crate::tensor::C64;

/// Relative slack when matching stamps of different series.
const STAMP_TOL: f64 = 1e-12;

fn in_basis_of(x: &OperatorMps, target: &OperatorMps) -> Result<OperatorMps, ObservableError> {
    if x.basis() == target.basis() {
        return Ok(x.clone());
    }
    let from = x.basis().basis().map_err(MpsError::from)?;
    let to = target.basis().basis().map_err(MpsError::from)?;
    let t = change_of_basis(&from, &to).map_err(MpsError::from)?;
    Ok(x.transform_basis(&t)?)
}

/// `⟪ρ|e⟫`, required to be positive.
pub fn partition_overlap(rho: &OperatorMps, e: &OperatorMps) -> Result<LogScalar, ObservableError> {
    let e = in_basis_of(e, rho)?;
    let z = rho.inner_log(&e)?;
    if !(z.mantissa.re > 0.0) {
        return Err(ObservableError::VanishingDenominator(z.mantissa.re));
    }
    Ok(z)
}

/// `⟨a⟩_β = ⟪ρ|a⟫ / ⟪ρ|e⟫`.
pub fn thermal_expectation(rho: &OperatorMps, a: &OperatorMps, e: &OperatorMps) -> Result<C64, ObservableError> {
    let z = partition_overlap(rho, e)?;
    let rho_a = in_basis_of(rho, a)?;
    Ok(rho_a.inner_log(a)?.ratio(&z))
}

/// `⟪ρ|B̂|a_t⟫ / ⟪ρ|e⟫`.
pub fn time_correlation(rho: &OperatorMps, b_map: &SuperMpo, a_t: &OperatorMps, e: &OperatorMps) -> Result<C64, ObservableError> {
    let z = partition_overlap(rho, e)?;
    let rho_a = in_basis_of(rho, a_t)?;
    Ok(rho_a.sandwich_log(b_map, a_t)?.ratio(&z))
}

/// A thermal state prepared for repeated contraction.
struct ThermalRow {
    beta: f64,
    rho: OperatorMps,
    denom: LogScalar,
    trunc: f64,
}

fn prepare_rows(thermal: &[Snapshot], target: &OperatorMps, e: &OperatorMps) -> Result<Vec<ThermalRow>, ObservableError> {
    thermal
        .par_iter()
        .map(|s| {
            let denom = partition_overlap(&s.state, e)?;
            Ok(ThermalRow { beta: s.stamp, rho: in_basis_of(&s.state, target)?, denom, trunc: s.cum_discarded })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CellMeta {
    pub denom_log: f64,
    pub trunc_weight_thermal: f64,
    pub trunc_weight_real: f64,
}

/// Values `⟨b a(t)⟩_β` on the product of the snapshot stamps.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpectationGrid {
    pub label: String,
    pub beta_axis: Vec<f64>,
    pub t_axis: Vec<f64>,
    /// Indexed `[β, t]`.
    pub values: Array2<C64>,
    pub meta: Array2<CellMeta>,
}

impl ExpectationGrid {
    pub fn get(&self, beta_index: usize, t_index: usize) -> C64 {
        self.values[[beta_index, t_index]]
    }
}

/// Evaluates every `(β, t)` cell; without `b_map` the grid holds `⟨a(t)⟩_β`.
/// The thermal snapshots are read once per `β`, cells run in parallel.
pub fn evaluate_grid(
    label: &str,
    thermal: &[Snapshot],
    heisenberg: &[Snapshot],
    b_map: Option<&SuperMpo>,
    e: &OperatorMps,
) -> Result<ExpectationGrid, ObservableError> {
    let (Some(first_a), false) = (heisenberg.first(), thermal.is_empty()) else {
        return Err(ObservableError::EmptySnapshots);
    };
    let rows = prepare_rows(thermal, &first_a.state, e)?;
    let nb = rows.len();
    let nt = heisenberg.len();
    let cells: Vec<(C64, CellMeta)> = (0..nb * nt)
        .into_par_iter()
        .map(|k| {
            let row = &rows[k / nt];
            let col = &heisenberg[k % nt];
            let num = match b_map {
                Some(b) => row.rho.sandwich_log(b, &col.state)?,
                None => row.rho.inner_log(&col.state)?,
            };
            let meta = CellMeta {
                denom_log: row.denom.log + row.denom.mantissa.re.ln(),
                trunc_weight_thermal: row.trunc,
                trunc_weight_real: col.cum_discarded,
            };
            Ok((num.ratio(&row.denom), meta))
        })
        .collect::<Result<_, ObservableError>>()?;
    let values = Array2::from_shape_fn((nb, nt), |(i, j)| cells[i * nt + j].0);
    let meta = Array2::from_shape_fn((nb, nt), |(i, j)| cells[i * nt + j].1);
    Ok(ExpectationGrid {
        label: label.to_string(),
        beta_axis: rows.iter().map(|r| r.beta).collect(),
        t_axis: heisenberg.iter().map(|s| s.stamp).collect(),
        values,
        meta,
    })
}

/// Left and right multiplication maps of one operator.
#[derive(Clone, Debug, PartialEq)]
pub struct SideMaps {
    pub left: SuperMpo,
    pub right: SuperMpo,
}

/// `G(t) = −i⟨{f†, f(t)}⟩_β` at one temperature, with the four Majorana
/// anticommutator series it was assembled from.
#[derive(Clone, Debug, PartialEq)]
pub struct GreenFunctionSeries {
    pub beta: f64,
    pub t_axis: Vec<f64>,
    pub values: Vec<C64>,
    /// `⟨{w, w(t)}⟩`
    pub ww: Vec<C64>,
    /// `⟨{w′, w′(t)}⟩`
    pub wpwp: Vec<C64>,
    /// `⟨{w, w′(t)}⟩`
    pub wwp: Vec<C64>,
    /// `⟨{w′, w(t)}⟩`
    pub wpw: Vec<C64>,
}

impl GreenFunctionSeries {
    /// `|G(0) + i|` when the series starts at `t = 0`.
    pub fn initial_deviation(&self) -> Option<f64> {
        (self.t_axis.first() == Some(&0.0)).then(|| (self.values[0] - C64::new(0.0, -1.0)).norm())
    }
}

/// With `f = (w − iw′)/2`,
/// `G = −(i/4)[⟨{w,w(t)}⟩ + ⟨{w′,w′(t)}⟩] − (1/4)[⟨{w,w′(t)}⟩ − ⟨{w′,w(t)}⟩]`.
pub fn greens_function(
    rho: &Snapshot,
    w_t: &[Snapshot],
    wp_t: &[Snapshot],
    w_maps: &SideMaps,
    wp_maps: &SideMaps,
    e: &OperatorMps,
) -> Result<GreenFunctionSeries, ObservableError> {
    if w_t.is_empty() {
        return Err(ObservableError::EmptySnapshots);
    }
    if w_t.len() != wp_t.len() || w_t.iter().zip(wp_t).any(|(a, b)| (a.stamp - b.stamp).abs() > STAMP_TOL * a.stamp.abs().max(1.0)) {
        return Err(ObservableError::StampMismatch);
    }
    let row = prepare_rows(std::slice::from_ref(rho), &w_t[0].state, e)?.remove(0);
    let anti = |maps: &SideMaps, y: &OperatorMps| -> Result<C64, ObservableError> {
        let l = row.rho.sandwich_log(&maps.left, y)?.ratio(&row.denom);
        let r = row.rho.sandwich_log(&maps.right, y)?.ratio(&row.denom);
        Ok(l + r)
    };
    let cols: Vec<[C64; 4]> = w_t
        .par_iter()
        .zip(wp_t)
        .map(|(w, wp)| Ok([anti(w_maps, &w.state)?, anti(wp_maps, &wp.state)?, anti(w_maps, &wp.state)?, anti(wp_maps, &w.state)?]))
        .collect::<Result<_, ObservableError>>()?;
    let i = C64::new(0.0, 1.0);
    let values = cols.iter().map(|c| -i * 0.25 * (c[0] + c[1]) - 0.25 * (c[2] - c[3])).collect();
    Ok(GreenFunctionSeries {
        beta: rho.stamp,
        t_axis: w_t.iter().map(|s| s.stamp).collect(),
        values,
        ww: cols.iter().map(|c| c[0]).collect(),
        wpwp: cols.iter().map(|c| c[1]).collect(),
        wwp: cols.iter().map(|c| c[2]).collect(),
        wpw: cols.iter().map(|c| c[3]).collect(),
    })
}

/// `(stamp, OSEE in bits)` across `cut` for every snapshot.
pub fn osee_series(snapshots: &[Snapshot], cut: usize) -> Result<Vec<(f64, f64)>, ObservableError> {
    snapshots.par_iter().map(|s| Ok((s.stamp, s.state.osee(cut)?))).collect()
}
