//! Finite-temperature real-time dynamics of one-dimensional lattice models
//! with matrix product states in operator space.
//!
//! Thermal states `ρ(β) = e^{−βχ̂}|e⟫` are built by imaginary-time evolution in
//! a real operator basis, Heisenberg operators `a(t) = e^{−itĤ}|a⟫` by
//! real-time evolution in a hermitian basis, and correlators follow from
//! `⟪ρ|B̂|a(t)⟫ / ⟪ρ|e⟫`.

pub mod basis;
pub mod engine;
pub mod error;
pub mod models;
pub mod mps;
pub mod observables;
pub mod oracle;
pub mod superop;
pub mod tensor;

pub use basis::{BasisKind, BasisTag, LocalBasis};
pub use error::*;
pub use engine::{build_schedule, evolve, Direction, Evolution, EvolutionConfig, TrotterSchedule};
pub use mps::{LogScalar, OperatorMps, Sweep};
pub use superop::{HamiltonianTerms, MapKind, MultSide, SuperMap, SuperMpo};
pub use tensor::{DenseTensor, C64};
