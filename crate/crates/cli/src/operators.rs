//! Operator specs resolved to initial states, multiplication maps and dense
//! matrices.

use osmps::basis::LocalBasis;
use osmps::models::{
    current_operator, hamiltonian_state, local_current_mpo, majorana_states, spin_current_state, total_current_mpo,
    MajoranaPair,
};
use osmps::oracle::{dense_hamiltonian, embed, DenseOperator, ORACLE_MAX_SITES};
use osmps::superop::build_mult_mpo;
use osmps::{MultSide, OperatorMps, SuperMpo};

use crate::config::{Model, OperatorKind, OperatorSpec};
use crate::error::CliError;

fn evo<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Evolution(e.to_string())
}

fn pair(model: &Model) -> Result<MajoranaPair, CliError> {
    let chain = model.siam().ok_or_else(|| CliError::Config(crate::config::ConfigError("Majorana operators need the siam model".into())))?;
    Ok(MajoranaPair { impurity: chain.up_impurity() })
}

/// `|a⟫` in the hermitian basis.
pub fn initial_state(spec: &OperatorSpec, model: &Model, herm: &LocalBasis) -> Result<OperatorMps, CliError> {
    let n = model.n();
    match spec.kind {
        OperatorKind::Identity => OperatorMps::identity_state(n, herm).map_err(evo),
        OperatorKind::Current => spin_current_state(spec.bond.unwrap_or(0), n, herm).map_err(evo),
        OperatorKind::MajoranaW => Ok(majorana_states(&pair(model)?, n, herm).map_err(evo)?.0),
        OperatorKind::MajoranaWp => Ok(majorana_states(&pair(model)?, n, herm).map_err(evo)?.1),
        OperatorKind::Hamiltonian => hamiltonian_state(&model.terms(), herm).map_err(evo),
        OperatorKind::Product => OperatorMps::product_operator_state(n, herm, &spec.factor_matrices()?, None).map_err(evo),
        OperatorKind::TotalCurrent => Err(CliError::Config(crate::config::ConfigError("total_current is not an initial operator".into()))),
    }
}

/// Multiplication map `X ↦ bX` or `X ↦ Xb`.
pub fn mult_map(spec: &OperatorSpec, model: &Model, side: MultSide, herm: &LocalBasis) -> Result<SuperMpo, CliError> {
    let n = model.n();
    match spec.kind {
        OperatorKind::Identity => Ok(SuperMpo::identity(n, herm)),
        OperatorKind::Current => local_current_mpo(spec.bond.unwrap_or(0), n, side, herm).map_err(evo),
        OperatorKind::TotalCurrent => total_current_mpo(n, side, herm).map_err(evo),
        OperatorKind::MajoranaW => pair(model)?.mult_mpo(n, false, side, herm).map_err(evo),
        OperatorKind::MajoranaWp => pair(model)?.mult_mpo(n, true, side, herm).map_err(evo),
        OperatorKind::Product => build_mult_mpo(n, &spec.factor_matrices()?, side, herm).map_err(evo),
        OperatorKind::Hamiltonian => Err(CliError::Config(crate::config::ConfigError("hamiltonian cannot be used as b".into()))),
    }
}

/// Dense matrix of the operator for the exact oracle.
pub fn dense_operator(spec: &OperatorSpec, model: &Model) -> Result<DenseOperator, CliError> {
    let n = model.n();
    if n > ORACLE_MAX_SITES {
        return Err(CliError::OracleCap(format!("dense operators limited to {ORACLE_MAX_SITES} sites, model has {n}")));
    }
    let dense = |m| DenseOperator::new(n, 2, m).map_err(|e| CliError::OracleCap(e.to_string()));
    let product = |factors: Vec<(usize, ndarray::Array2<osmps::C64>)>| {
        let mut acc = DenseOperator::identity(n, 2).map_err(|e| CliError::OracleCap(e.to_string()))?;
        for (site, m) in factors {
            acc = acc.dot(&dense(embed(&m, site, 1, 2, n))?);
        }
        Ok::<_, CliError>(acc)
    };
    match spec.kind {
        OperatorKind::Identity => DenseOperator::identity(n, 2).map_err(|e| CliError::OracleCap(e.to_string())),
        OperatorKind::Current => dense(embed(&current_operator(), spec.bond.unwrap_or(0), 2, 2, n)),
        OperatorKind::TotalCurrent => {
            let mut m = embed(&current_operator(), 0, 2, 2, n);
            for b in 1..n - 1 {
                m = m + embed(&current_operator(), b, 2, 2, n);
            }
            dense(m)
        }
        OperatorKind::MajoranaW => product(pair(model)?.operator_factors(false)),
        OperatorKind::MajoranaWp => product(pair(model)?.operator_factors(true)),
        OperatorKind::Hamiltonian => dense_hamiltonian(&model.terms()).map_err(|e| CliError::OracleCap(e.to_string())),
        OperatorKind::Product => product(spec.factor_matrices()?),
    }
}
