//! Trotterized evolution of operator-space states.
//!
//! Imaginary-time runs apply `e^{−step·χ̂}` to build thermal states, real-time
//! runs apply `e^{step·G}` with the real antisymmetric generator `G = −iĤ`.
//! One-site blocks are folded into the neighbouring bond blocks so every gate
//! acts on exactly one bond.

use ndarray::Array2;

use crate::basis::BasisTag;
use crate::error::EngineError;
use crate::mps::{OperatorMps, Sweep};
use crate::superop::{MapKind, SuperMap};
use crate::tensor::{matrix_exp, DenseTensor};

/// Relative slack when matching stamps to the step grid.
pub const GRID_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    /// `e^{−βχ̂}`
    Imaginary,
    /// `e^{tG}`
    Real,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Imaginary => "imaginary",
            Direction::Real => "real",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BondGate {
    pub bond: usize,
    pub full: DenseTensor,
    pub half: DenseTensor,
}

/// Gates for one Trotter step. With order 2 a step is a half step on `odd`,
/// a full step on `even`, and another half step on `odd`; with order 1 it is
/// a full step on `even` followed by one on `odd`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrotterSchedule {
    pub order: u8,
    pub step: f64,
    pub direction: Direction,
    pub n: usize,
    pub basis: BasisTag,
    /// Bonds 0, 2, 4, ..
    pub even: Vec<BondGate>,
    /// Bonds 1, 3, 5, ..
    pub odd: Vec<BondGate>,
}

impl TrotterSchedule {
    /// True when every gate is real.
    pub fn is_real(&self) -> bool {
        self.even.iter().chain(&self.odd).all(|g| g.full.is_real() && g.half.is_real())
    }
}

fn kron_real(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    Array2::from_shape_fn((ar * br, ac * bc), |(i, j)| a[[i / br, j / bc]] * b[[i % br, j % bc]])
}

/// Sums each bond's two-site blocks with its share of one-site blocks.
fn bond_blocks(map: &SuperMap) -> Result<Vec<Array2<f64>>, EngineError> {
    let n = map.n;
    let p = map.d * map.d;
    if n < 2 {
        return Err(EngineError::NonNearestNeighbor(0));
    }
    let as_real = |b: &DenseTensor| -> Result<Array2<f64>, EngineError> {
        let real = b.clone().try_into_real(0.0).map_err(|_| EngineError::WrongGenerator {
            direction: "operator-space",
            required: "real",
        })?;
        let m = real.as_real().expect("real").clone();
        Ok(m.into_dimensionality().expect("rank 2"))
    };
    let mut blocks = vec![Array2::<f64>::zeros((p * p, p * p)); n - 1];
    for (bond, b) in &map.two_site_blocks {
        if *bond + 1 >= n || b.shape() != [p * p, p * p] {
            return Err(EngineError::NonNearestNeighbor(*bond));
        }
        blocks[*bond] += &as_real(b)?;
    }
    let eye = Array2::<f64>::eye(p);
    for (site, b) in &map.one_site_blocks {
        if *site >= n || b.shape() != [p, p] {
            return Err(EngineError::NonNearestNeighbor(*site));
        }
        let b = as_real(b)?;
        let left = *site > 0;
        let right = *site + 1 < n;
        let share = if left && right { 0.5 } else { 1.0 };
        if right {
            blocks[*site] += &(kron_real(&b, &eye) * share);
        }
        if left {
            blocks[*site - 1] += &(kron_real(&eye, &b) * share);
        }
    }
    Ok(blocks)
}

/// Exponentiates every bond block, sharing work between identical blocks.
pub fn build_schedule(map: &SuperMap, step: f64, order: u8, direction: Direction) -> Result<TrotterSchedule, EngineError> {
    if !(step >= 0.0 && step.is_finite()) {
        return Err(EngineError::BadStep(step));
    }
    if order != 1 && order != 2 {
        return Err(EngineError::BadOrder(order));
    }
    let sign = match (direction, map.kind) {
        (Direction::Imaginary, MapKind::LeftMultiplication) => -1.0,
        (Direction::Real, MapKind::CommutatorGenerator) => 1.0,
        (Direction::Imaginary, _) => {
            return Err(EngineError::WrongGenerator { direction: "imaginary", required: "left multiplication" })
        }
        (Direction::Real, _) => {
            return Err(EngineError::WrongGenerator { direction: "real", required: "commutator" })
        }
    };
    let blocks = bond_blocks(map)?;
    let mut cache: Vec<(usize, DenseTensor, DenseTensor)> = Vec::new();
    let mut gates = Vec::with_capacity(blocks.len());
    for (bond, block) in blocks.iter().enumerate() {
        let hit = cache.iter().find(|(src, _, _)| blocks[*src] == *block);
        let (full, half) = match hit {
            Some((_, f, h)) => (f.clone(), h.clone()),
            None => {
                let t = DenseTensor::from_matrix(block.clone());
                let full = matrix_exp(&t, sign * step)?;
                let half = matrix_exp(&t, sign * step / 2.0)?;
                cache.push((bond, full.clone(), half.clone()));
                (full, half)
            }
        };
        gates.push(BondGate { bond, full, half });
    }
    let (even, odd): (Vec<_>, Vec<_>) = gates.into_iter().partition(|g| g.bond % 2 == 0);
    Ok(TrotterSchedule { order, step, direction, n: map.n, basis: map.basis, even, odd })
}

/// Knobs of one evolution run.
#[derive(Clone, Debug, PartialEq)]
pub struct EvolutionConfig {
    /// Bond dimension cap `D`.
    pub max_rank: usize,
    /// Discarded weight allowed per SVD, relative to the squared norm.
    pub weight_tol: f64,
    /// Final `β` or `t`.
    pub total: f64,
    /// Stamps at which copies of the state are kept, sorted.
    pub snapshot_points: Vec<f64>,
    /// Cut for the logged entanglement entropy (sites `[0, cut)` vs the rest).
    pub osee_cut: usize,
    /// Steps between log records; records are also written at snapshots.
    pub log_every: usize,
    /// Stop when the cap forces a truncation above `weight_tol`.
    pub abort_on_cap: bool,
}

impl EvolutionConfig {
    pub fn new(max_rank: usize, weight_tol: f64, total: f64, snapshot_points: Vec<f64>, osee_cut: usize) -> Self {
        Self { max_rank, weight_tol, total, snapshot_points, osee_cut, log_every: 1, abort_on_cap: false }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogRecord {
    pub stamp: f64,
    pub max_bond: usize,
    pub cum_discarded: f64,
    pub osee_bits: f64,
    pub log_norm: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub stamp: f64,
    pub state: OperatorMps,
    pub cum_discarded: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum EvolutionStatus {
    Completed,
    /// The cap forced a truncation above tolerance; snapshots up to `stamp`
    /// are valid.
    Aborted { stamp: f64, bond: usize, discarded: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evolution {
    pub direction: Direction,
    pub snapshots: Vec<Snapshot>,
    pub log: Vec<LogRecord>,
    pub status: EvolutionStatus,
    /// Every intermediate state stayed in real arithmetic.
    pub real_arithmetic: bool,
}

impl Evolution {
    pub fn is_complete(&self) -> bool {
        self.status == EvolutionStatus::Completed
    }
}

/// Index of `point` on the grid `k·step`, if it lies on it.
pub fn grid_index(point: f64, step: f64) -> Option<usize> {
    if step <= 0.0 || point < 0.0 || !point.is_finite() {
        return None;
    }
    let k = (point / step).round();
    ((k * step - point).abs() <= GRID_TOL * point.abs().max(1.0)).then_some(k as usize)
}

struct Runner<'a> {
    state: OperatorMps,
    config: &'a EvolutionConfig,
    forward: bool,
    cum_discarded: f64,
    cap_hit: Option<(usize, f64)>,
}

impl Runner<'_> {
    fn group(&mut self, gates: &[BondGate], half: bool) -> Result<(), EngineError> {
        let ordered: Vec<&BondGate> = if self.forward { gates.iter().collect() } else { gates.iter().rev().collect() };
        let sweep = if self.forward { Sweep::LeftToRight } else { Sweep::RightToLeft };
        for g in ordered {
            let gate = if half { &g.half } else { &g.full };
            let dw = self.state.apply_two_site_gate_sweep(g.bond, gate, self.config.max_rank, self.config.weight_tol, sweep)?;
            self.cum_discarded += dw;
            if dw > self.config.weight_tol * (1.0 + 1e-9) && self.cap_hit.is_none() {
                self.cap_hit = Some((g.bond, dw));
            }
        }
        if !gates.is_empty() {
            self.forward = !self.forward;
        }
        Ok(())
    }

    fn record(&self, stamp: f64) -> Result<LogRecord, EngineError> {
        let n = self.state.n();
        let cut = self.config.osee_cut.min(n);
        let center = self.state.canonicalize(cut.min(n - 1))?;
        Ok(LogRecord {
            stamp,
            max_bond: self.state.max_bond(),
            cum_discarded: self.cum_discarded,
            osee_bits: center.osee(cut)?,
            log_norm: center.log_scale(),
        })
    }
}

/// Runs the schedule from `initial`, keeping copies at the snapshot points.
pub fn evolve(initial: OperatorMps, schedule: &TrotterSchedule, config: &EvolutionConfig) -> Result<Evolution, EngineError> {
    if initial.basis() != schedule.basis {
        return Err(EngineError::BasisMismatch { state: initial.basis().to_string(), generator: schedule.basis.to_string() });
    }
    if initial.n() != schedule.n {
        return Err(EngineError::LengthMismatch { state: initial.n(), generator: schedule.n });
    }
    if config.max_rank == 0 {
        return Err(EngineError::Tensor(crate::error::TensorError::ZeroRank));
    }
    let step = schedule.step;
    let steps = if config.total == 0.0 {
        0
    } else {
        grid_index(config.total, step).ok_or(EngineError::SnapshotOffGrid { point: config.total, step })?
    };
    let mut snap_steps = Vec::with_capacity(config.snapshot_points.len());
    for &point in &config.snapshot_points {
        if !(0.0..=config.total * (1.0 + GRID_TOL)).contains(&point) {
            return Err(EngineError::SnapshotOutOfRange { point, total: config.total });
        }
        let k = if point == 0.0 { 0 } else { grid_index(point, step).ok_or(EngineError::SnapshotOffGrid { point, step })? };
        snap_steps.push((k, point));
    }
    if snap_steps.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(EngineError::UnsortedSnapshots);
    }
    let log_every = config.log_every.max(1);
    let start_real = initial.is_real();
    let mut runner =
        Runner { state: initial, config, forward: true, cum_discarded: 0.0, cap_hit: None };
    let mut snapshots = Vec::new();
    let mut log = vec![runner.record(0.0)?];
    let mut real_arithmetic = start_real;
    let mut next_snap = snap_steps.iter().peekable();
    while let Some(&&(0, point)) = next_snap.peek() {
        snapshots.push(Snapshot { stamp: point, state: runner.state.clone(), cum_discarded: 0.0 });
        next_snap.next();
    }
    let mut pending_half = false;
    for k in 1..=steps {
        match schedule.order {
            1 => {
                runner.group(&schedule.even, false)?;
                runner.group(&schedule.odd, false)?;
            }
            _ => {
                // consecutive trailing and leading half steps merge into one full step
                runner.group(&schedule.odd, !pending_half)?;
                runner.group(&schedule.even, false)?;
                pending_half = true;
            }
        }
        let is_snap = next_snap.peek().is_some_and(|&&(s, _)| s == k);
        let is_log = k % log_every == 0 || k == steps;
        let aborting = config.abort_on_cap && runner.cap_hit.is_some();
        if pending_half && (is_snap || is_log || aborting) {
            runner.group(&schedule.odd, true)?;
            pending_half = false;
        }
        if start_real && schedule.is_real() && !runner.state.is_real() {
            return Err(EngineError::RealityLost(k as f64 * step));
        }
        real_arithmetic &= runner.state.is_real();
        let stamp = k as f64 * step;
        if is_log || is_snap || aborting {
            log.push(runner.record(stamp)?);
        }
        if let (true, Some((bond, discarded))) = (config.abort_on_cap, runner.cap_hit) {
            return Ok(Evolution {
                direction: schedule.direction,
                snapshots,
                log,
                status: EvolutionStatus::Aborted { stamp, bond, discarded },
                real_arithmetic,
            });
        }
        while let Some(&&(s, point)) = next_snap.peek() {
            if s != k {
                break;
            }
            snapshots.push(Snapshot { stamp: point, state: runner.state.clone(), cum_discarded: runner.cum_discarded });
            next_snap.next();
        }
    }
    Ok(Evolution { direction: schedule.direction, snapshots, log, status: EvolutionStatus::Completed, real_arithmetic })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{kron, make_basis, pauli, BasisKind, LocalBasis};
    use crate::mps::OperatorMps;
    use crate::oracle::dense_supermap;
    use crate::superop::{build_chi, build_commutator_generator, HamiltonianTerms};
    use crate::tensor::C64;
    use ndarray::Array1;

    fn real_basis() -> LocalBasis {
        make_basis(2, BasisKind::Real).unwrap()
    }

    fn herm_basis() -> LocalBasis {
        make_basis(2, BasisKind::Hermitian).unwrap()
    }

    fn xxz(n: usize, delta: f64) -> HamiltonianTerms {
        let bond = kron(&pauli(1), &pauli(1)) + kron(&pauli(2), &pauli(2)) + kron(&pauli(3), &pauli(3)).mapv(|z| z * delta);
        let mut h = HamiltonianTerms::new(n, 2);
        for j in 0..n - 1 {
            h.push_two_site(j, bond.clone());
        }
        h
    }

    fn with_field(mut h: HamiltonianTerms, field: f64) -> HamiltonianTerms {
        for j in 0..h.n {
            h.push_one_site(j, pauli(3).mapv(|z| z * field * (1.0 + j as f64 * 0.3)));
        }
        h
    }

    fn dense_gate_product(schedule: &TrotterSchedule, dim_sites: usize) -> Array2<C64> {
        let p = 4usize;
        let dim = p.pow(dim_sites as u32);
        let apply = |m: Array2<C64>, g: &BondGate, half: bool| {
            let t = if half { &g.half } else { &g.full };
            let e = crate::oracle::embed(&t.to_complex_matrix().unwrap(), g.bond, 2, p, dim_sites);
            e.dot(&m)
        };
        let mut m = Array2::<C64>::eye(dim);
        for g in &schedule.odd {
            m = apply(m, g, true);
        }
        for g in &schedule.even {
            m = apply(m, g, false);
        }
        for g in &schedule.odd {
            m = apply(m, g, true);
        }
        m
    }

    fn exact_propagator(map: &SuperMap, scale: f64) -> Array2<C64> {
        let dense = dense_supermap(map).unwrap();
        let t = DenseTensor::from_matrix(dense);
        matrix_exp(&t, scale).unwrap().to_complex_matrix().unwrap()
    }

    #[test]
    fn zero_step_gates_are_identity() {
        let map = build_chi(&xxz(3, 1.0), &real_basis()).unwrap();
        let s = build_schedule(&map, 0.0, 2, Direction::Imaginary).unwrap();
        for g in s.even.iter().chain(&s.odd) {
            assert!(g.full.distance(&DenseTensor::identity(16)).unwrap() < 1e-15);
        }
    }

    #[test]
    fn real_time_gates_are_orthogonal() {
        let map = build_commutator_generator(&with_field(xxz(4, 0.7), 0.4), &herm_basis()).unwrap();
        let s = build_schedule(&map, 0.1, 2, Direction::Real).unwrap();
        assert!(s.is_real());
        for g in s.even.iter().chain(&s.odd) {
            let m: Array2<f64> = g.full.as_real().unwrap().clone().into_dimensionality().unwrap();
            let r = m.t().dot(&m) - Array2::<f64>::eye(16);
            assert!(r.iter().all(|x| x.abs() < 1e-10));
        }
    }

    #[test]
    fn schedule_rejects_wrong_map() {
        let chi = build_chi(&xxz(3, 1.0), &real_basis()).unwrap();
        assert!(matches!(build_schedule(&chi, 0.1, 2, Direction::Real), Err(EngineError::WrongGenerator { .. })));
        assert!(matches!(build_schedule(&chi, -0.1, 2, Direction::Imaginary), Err(EngineError::BadStep(_))));
        assert!(matches!(build_schedule(&chi, 0.1, 3, Direction::Imaginary), Err(EngineError::BadOrder(3))));
    }

    #[test]
    fn second_order_local_error_is_cubic() {
        let map = build_commutator_generator(&with_field(xxz(3, 0.6), 0.5), &herm_basis()).unwrap();
        let steps = [0.1, 0.05, 0.025];
        let errs: Vec<f64> = steps
            .iter()
            .map(|&dt| {
                let s = build_schedule(&map, dt, 2, Direction::Real).unwrap();
                let approx = dense_gate_product(&s, 3);
                let exact = exact_propagator(&map, dt);
                (approx - exact).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
            })
            .collect();
        let slope = ((errs[0] / errs[2]).ln()) / ((steps[0] / steps[2]).ln());
        assert!((slope - 3.0).abs() < 0.2, "slope {slope}, errors {errs:?}");
    }

    #[test]
    fn single_site_partition_function() {
        // H = σᶻ on site 0 of 2: ⟪ρ(β)|e⟫ = cosh β
        let mut h = HamiltonianTerms::new(2, 2);
        h.push_one_site(0, pauli(3));
        let basis = real_basis();
        let map = build_chi(&h, &basis).unwrap();
        let s = build_schedule(&map, 0.01, 2, Direction::Imaginary).unwrap();
        let e = OperatorMps::identity_state(2, &basis).unwrap();
        let cfg = EvolutionConfig::new(64, 0.0, 1.0, vec![0.5, 1.0], 1);
        let run = evolve(e.clone(), &s, &cfg).unwrap();
        assert!(run.is_complete());
        assert!(run.real_arithmetic);
        let rho = &run.snapshots[1].state;
        let z = rho.inner(&e).unwrap();
        assert!((z.re - 1.0f64.cosh()).abs() < 1e-8, "{z}");
        assert_eq!(run.snapshots[0].stamp, 0.5);
    }

    #[test]
    fn identity_is_stationary_in_real_time() {
        let basis = herm_basis();
        let map = build_commutator_generator(&xxz(4, 1.0), &basis).unwrap();
        let s = build_schedule(&map, 0.05, 2, Direction::Real).unwrap();
        let e = OperatorMps::identity_state(4, &basis).unwrap();
        let cfg = EvolutionConfig::new(16, 0.0, 1.0, vec![0.0, 0.5, 1.0], 2);
        let run = evolve(e.clone(), &s, &cfg).unwrap();
        for snap in &run.snapshots {
            assert!((snap.state.inner(&e).unwrap() - C64::new(1.0, 0.0)).norm() < 1e-12);
            assert_eq!(snap.state.max_bond(), 1);
        }
    }

    #[test]
    fn real_time_matches_dense_propagation() {
        let basis = herm_basis();
        let h = with_field(xxz(3, 0.8), 0.3);
        let map = build_commutator_generator(&h, &basis).unwrap();
        let dt = 0.01;
        let s = build_schedule(&map, dt, 2, Direction::Real).unwrap();
        let a = OperatorMps::product_operator_state(3, &basis, &[(0, pauli(1))], None).unwrap();
        let cfg = EvolutionConfig::new(64, 0.0, 0.5, vec![0.5], 1);
        let run = evolve(a.clone(), &s, &cfg).unwrap();
        let got = run.snapshots[0].state.to_coefficients().unwrap();
        let exact = exact_propagator(&map, 0.5).dot(&a.to_coefficients().unwrap());
        let err = (&got - &exact).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(err < 1e-4, "{err}");
        assert!(run.real_arithmetic);
        assert!(run.snapshots[0].state.is_real());
    }

    #[test]
    fn merged_half_steps_match_unmerged() {
        let basis = herm_basis();
        let map = build_commutator_generator(&xxz(4, 0.5), &basis).unwrap();
        let s = build_schedule(&map, 0.05, 2, Direction::Real).unwrap();
        let a = OperatorMps::product_operator_state(4, &basis, &[(1, pauli(3))], None).unwrap();
        let mut every = EvolutionConfig::new(256, 0.0, 1.0, vec![1.0], 2);
        let mut sparse = every.clone();
        sparse.log_every = 10;
        every.log_every = 1;
        let x = evolve(a.clone(), &s, &every).unwrap().snapshots.remove(0).state;
        let y = evolve(a, &s, &sparse).unwrap().snapshots.remove(0).state;
        let d = (&x.to_coefficients().unwrap() - &y.to_coefficients().unwrap()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(d < 1e-12, "{d}");
    }

    #[test]
    fn norm_is_conserved_without_truncation() {
        let basis = herm_basis();
        let map = build_commutator_generator(&xxz(5, 1.2), &basis).unwrap();
        let s = build_schedule(&map, 0.05, 2, Direction::Real).unwrap();
        let a = OperatorMps::product_operator_state(5, &basis, &[(2, pauli(1))], None).unwrap();
        let cfg = EvolutionConfig::new(usize::MAX, 0.0, 1.0, vec![0.25, 0.5, 0.75, 1.0], 2);
        let run = evolve(a, &s, &cfg).unwrap();
        for snap in &run.snapshots {
            assert!((snap.state.norm_sqr() - 1.0).abs() < 1e-10);
        }
        assert!(run.log.windows(2).all(|w| w[1].stamp > w[0].stamp));
    }

    #[test]
    fn thermal_positivity_and_monotone_log() {
        let basis = real_basis();
        let map = build_chi(&xxz(4, 1.0), &basis).unwrap();
        let s = build_schedule(&map, 0.05, 2, Direction::Imaginary).unwrap();
        let e = OperatorMps::identity_state(4, &basis).unwrap();
        let points: Vec<f64> = (1..=8).map(|k| k as f64 * 0.25).collect();
        let run = evolve(e.clone(), &s, &EvolutionConfig::new(64, 1e-14, 2.0, points, 2)).unwrap();
        for snap in &run.snapshots {
            assert!(snap.state.inner(&e).unwrap().re > 0.0);
            assert!(snap.state.is_real());
        }
    }

    #[test]
    fn abort_when_cap_forces_truncation() {
        let basis = herm_basis();
        let map = build_commutator_generator(&xxz(6, 1.0), &basis).unwrap();
        let s = build_schedule(&map, 0.1, 2, Direction::Real).unwrap();
        let a = OperatorMps::product_operator_state(6, &basis, &[(2, pauli(1))], None).unwrap();
        let mut cfg = EvolutionConfig::new(2, 1e-12, 2.0, vec![0.1, 2.0], 3);
        cfg.abort_on_cap = true;
        let run = evolve(a, &s, &cfg).unwrap();
        assert!(matches!(run.status, EvolutionStatus::Aborted { .. }));
        assert!(run.snapshots.len() < 2);
    }

    #[test]
    fn off_grid_snapshot_is_rejected() {
        let basis = herm_basis();
        let map = build_commutator_generator(&xxz(2, 1.0), &basis).unwrap();
        let s = build_schedule(&map, 0.1, 2, Direction::Real).unwrap();
        let a = OperatorMps::identity_state(2, &basis).unwrap();
        let cfg = EvolutionConfig::new(4, 0.0, 1.0, vec![0.55], 1);
        assert!(matches!(evolve(a.clone(), &s, &cfg), Err(EngineError::SnapshotOffGrid { .. })));
        let cfg = EvolutionConfig::new(4, 0.0, 1.0, vec![1.5], 1);
        assert!(matches!(evolve(a.clone(), &s, &cfg), Err(EngineError::SnapshotOutOfRange { .. })));
        let r = OperatorMps::identity_state(2, &real_basis()).unwrap();
        assert!(matches!(evolve(r, &s, &EvolutionConfig::new(4, 0.0, 1.0, vec![], 1)), Err(EngineError::BasisMismatch { .. })));
    }

    #[test]
    fn evolution_is_deterministic() {
        let basis = real_basis();
        let map = build_chi(&xxz(5, 0.5), &basis).unwrap();
        let s = build_schedule(&map, 0.05, 2, Direction::Imaginary).unwrap();
        let e = OperatorMps::identity_state(5, &basis).unwrap();
        let cfg = EvolutionConfig::new(8, 1e-10, 1.0, vec![1.0], 2);
        let a = evolve(e.clone(), &s, &cfg).unwrap();
        let b = evolve(e, &s, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn first_order_schedule_converges() {
        let basis = herm_basis();
        let map = build_commutator_generator(&xxz(3, 1.0), &basis).unwrap();
        let a = OperatorMps::product_operator_state(3, &basis, &[(0, pauli(3))], None).unwrap();
        let exact = exact_propagator(&map, 0.4).dot(&a.to_coefficients().unwrap());
        let err = |dt: f64| {
            let s = build_schedule(&map, dt, 1, Direction::Real).unwrap();
            let run = evolve(a.clone(), &s, &EvolutionConfig::new(64, 0.0, 0.4, vec![0.4], 1)).unwrap();
            let got: Array1<C64> = run.snapshots[0].state.to_coefficients().unwrap();
            (&got - &exact).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
        };
        let ratio = err(0.02) / err(0.01);
        assert!((ratio - 2.0).abs() < 0.3, "{ratio}");
    }
}
