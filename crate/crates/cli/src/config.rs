//! Run configuration, read from TOML.
//!
//! ```toml
//! [model]
//! kind = "xxz"          # or "siam" with taus | tau, u, eps_f
//! n = 6
//! delta = 1.0
//!
//! [truncation]
//! max_rank = 256
//! weight_tol = 1e-12
//!
//! [thermal]
//! step = 0.005
//! max = 1.0            # defaults to the last snapshot
//! snapshots = [0.0, 0.5, 1.0]
//!
//! [heisenberg]
//! step = 0.005
//! max = 2.0
//! snapshots = [0.0, 1.0, 2.0]
//! operators = [{ kind = "current", bond = 2 }]
//!
//! [observable]
//! kind = "plain"        # plain | anticommutator | greens
//! b = { kind = "current", bond = 2 }
//! ```

use std::collections::BTreeSet;
use std::path::PathBuf;

use ndarray::Array2;
use osmps::basis::{pauli, sigma_minus, sigma_plus};
use osmps::engine::grid_index;
use osmps::models::{siam_terms, xxz_terms, SiamChain, XxzModel};
use osmps::{HamiltonianTerms, MultSide, C64};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{0}")]
pub struct ConfigError(pub String);

fn bad<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    #[serde(default)]
    pub basis: BasisConfig,
    #[serde(default)]
    pub truncation: TruncationConfig,
    pub thermal: Option<LegConfig>,
    pub heisenberg: Option<LegConfig>,
    pub observable: Option<ObservableConfig>,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub validate: ValidateConfig,
    /// When set, outputs carry no wall-clock data and reruns are
    /// byte-identical.
    #[serde(default = "yes")]
    pub deterministic: bool,
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub n: usize,
    pub delta: Option<f64>,
    pub taus: Option<Vec<f64>>,
    pub tau: Option<f64>,
    pub u: Option<f64>,
    pub eps_f: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Xxz,
    Siam,
}

/// Local bases of the two legs. Only the pair that keeps both evolutions in
/// real arithmetic is accepted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisConfig {
    #[serde(default = "real_str")]
    pub thermal: String,
    #[serde(default = "hermitian_str")]
    pub heisenberg: String,
}

fn real_str() -> String {
    "real".into()
}

fn hermitian_str() -> String {
    "hermitian".into()
}

impl Default for BasisConfig {
    fn default() -> Self {
        Self { thermal: real_str(), heisenberg: hermitian_str() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncationConfig {
    #[serde(default = "default_rank")]
    pub max_rank: usize,
    #[serde(default = "default_tol")]
    pub weight_tol: f64,
    /// Stop a leg when the cap forces a truncation above `weight_tol`.
    #[serde(default)]
    pub abort_on_cap: bool,
}

fn default_rank() -> usize {
    256
}

fn default_tol() -> f64 {
    1e-12
}

impl Default for TruncationConfig {
    fn default() -> Self {
        Self { max_rank: default_rank(), weight_tol: default_tol(), abort_on_cap: false }
    }
}

/// One evolution leg; `operators` is only read for the Heisenberg leg.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LegConfig {
    #[serde(default = "default_step")]
    pub step: f64,
    /// Final `β` or `t`; defaults to the last snapshot.
    pub max: Option<f64>,
    pub snapshots: Vec<f64>,
    #[serde(default = "default_order")]
    pub order: u8,
    #[serde(default = "one")]
    pub log_every: usize,
    /// Entanglement cut for the log; defaults to `n/2`.
    pub osee_cut: Option<usize>,
    #[serde(default)]
    pub operators: Vec<OperatorSpec>,
}

fn default_step() -> f64 {
    0.01
}

fn default_order() -> u8 {
    2
}

fn one() -> usize {
    1
}

impl LegConfig {
    pub fn total(&self) -> f64 {
        self.max.unwrap_or_else(|| self.snapshots.last().copied().unwrap_or(0.0))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    Identity,
    /// `j_m` on bond `bond`.
    Current,
    /// `Σ_m j_m`; usable as `b` only.
    TotalCurrent,
    MajoranaW,
    MajoranaWp,
    Hamiltonian,
    Product,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorSpec {
    pub kind: OperatorKind,
    pub bond: Option<usize>,
    #[serde(default)]
    pub factors: Vec<FactorSpec>,
    pub label: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorSpec {
    pub site: usize,
    /// One of `id`, `x`, `y`, `z`, `plus`, `minus`.
    pub op: String,
}

impl OperatorSpec {
    pub fn of(kind: OperatorKind) -> Self {
        Self { kind, bond: None, factors: Vec::new(), label: None }
    }

    pub fn label(&self) -> String {
        if let Some(l) = &self.label {
            return l.clone();
        }
        match self.kind {
            OperatorKind::Identity => "identity".into(),
            OperatorKind::Current => format!("j{}", self.bond.unwrap_or(0)),
            OperatorKind::TotalCurrent => "jtot".into(),
            OperatorKind::MajoranaW => "w".into(),
            OperatorKind::MajoranaWp => "wp".into(),
            OperatorKind::Hamiltonian => "h".into(),
            OperatorKind::Product => "product".into(),
        }
    }

    /// Product factors as matrices.
    pub fn factor_matrices(&self) -> Result<Vec<(usize, Array2<C64>)>, ConfigError> {
        self.factors
            .iter()
            .map(|f| {
                let m = match f.op.as_str() {
                    "id" => pauli(0),
                    "x" => pauli(1),
                    "y" => pauli(2),
                    "z" => pauli(3),
                    "plus" => sigma_plus(),
                    "minus" => sigma_minus(),
                    other => return bad(format!("unknown factor operator {other:?}")),
                };
                Ok((f.site, m))
            })
            .collect()
    }

    fn check(&self, model: &Model, as_initial: bool) -> Result<(), ConfigError> {
        let n = model.n();
        if let Some(l) = &self.label {
            if l.is_empty() || !l.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
                return bad(format!("label {l:?} must be non-empty [A-Za-z0-9_-]"));
            }
        }
        if self.kind != OperatorKind::Current && self.bond.is_some() {
            return bad(format!("{:?} takes no bond", self.kind));
        }
        if self.kind != OperatorKind::Product && !self.factors.is_empty() {
            return bad(format!("{:?} takes no factors", self.kind));
        }
        match self.kind {
            OperatorKind::Current => match self.bond {
                Some(b) if b + 1 < n => {}
                Some(b) => return bad(format!("current bond {b} outside a chain of {n} sites")),
                None => return bad("current operator needs a bond"),
            },
            OperatorKind::TotalCurrent if as_initial => return bad("total_current can only be used as b"),
            OperatorKind::Hamiltonian if !as_initial => return bad("hamiltonian cannot be used as b"),
            OperatorKind::MajoranaW | OperatorKind::MajoranaWp if model.siam().is_none() => {
                return bad("Majorana operators need the siam model")
            }
            OperatorKind::Product => {
                if self.factors.is_empty() {
                    return bad("product operator needs factors");
                }
                let mut seen = BTreeSet::new();
                for f in &self.factors {
                    if f.site >= n {
                        return bad(format!("factor site {} outside a chain of {n} sites", f.site));
                    }
                    if !seen.insert(f.site) {
                        return bad(format!("site {} appears twice in a product", f.site));
                    }
                    if as_initial && (f.op == "plus" || f.op == "minus") {
                        return bad("initial Heisenberg operators must be hermitian; use x, y, z or id factors");
                    }
                }
                self.factor_matrices()?;
            }
            _ => {}
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelatorKind {
    /// `⟨b a(t)⟩` or `⟨a(t) b⟩` by `side`.
    Plain,
    /// `⟨{b, a(t)}⟩`
    Anticommutator,
    /// Impurity Green's function from the two Majorana legs.
    Greens,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SideConfig {
    Left,
    Right,
}

impl From<SideConfig> for MultSide {
    fn from(s: SideConfig) -> Self {
        match s {
            SideConfig::Left => MultSide::Left,
            SideConfig::Right => MultSide::Right,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservableConfig {
    pub kind: CorrelatorKind,
    /// Label of the Heisenberg operator; defaults to the first one.
    pub a: Option<String>,
    /// Left factor; without it the grid holds `⟨a(t)⟩_β`.
    pub b: Option<OperatorSpec>,
    #[serde(default = "left")]
    pub side: SideConfig,
}

fn left() -> SideConfig {
    SideConfig::Left
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
}

fn default_dir() -> PathBuf {
    PathBuf::from("osmps-out")
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: default_dir() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateConfig {
    #[serde(default = "default_validate_tol")]
    pub tolerance: f64,
}

fn default_validate_tol() -> f64 {
    1e-4
}

impl Default for ValidateConfig {
    fn default() -> Self {
        Self { tolerance: default_validate_tol() }
    }
}

/// The resolved Hamiltonian.
#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    Xxz(XxzModel),
    Siam(SiamChain),
}

impl Model {
    pub fn n(&self) -> usize {
        match self {
            Self::Xxz(m) => m.n,
            Self::Siam(m) => m.n(),
        }
    }

    pub fn terms(&self) -> HamiltonianTerms {
        match self {
            Self::Xxz(m) => xxz_terms(m),
            Self::Siam(m) => siam_terms(m),
        }
    }

    pub fn siam(&self) -> Option<&SiamChain> {
        match self {
            Self::Siam(m) => Some(m),
            Self::Xxz(_) => None,
        }
    }

    /// Canonical text identifying the Hamiltonian; both legs must agree on it.
    pub fn fingerprint(&self) -> String {
        let text = match self {
            Self::Xxz(m) => format!("xxz n={} delta={:e}", m.n, m.delta),
            Self::Siam(m) => {
                let taus: Vec<String> = m.taus().iter().map(|t| format!("{t:e}")).collect();
                format!("siam n={} taus=[{}] u={:e} eps_f={:e}", m.n(), taus.join(","), m.u(), m.eps_f())
            }
        };
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn model(&self) -> Result<Model, ConfigError> {
        let m = &self.model;
        let wrap = |e: osmps::ModelError| ConfigError(e.to_string());
        match m.kind {
            ModelKind::Xxz => {
                if m.taus.is_some() || m.tau.is_some() || m.u.is_some() || m.eps_f.is_some() {
                    return bad("xxz model takes only n and delta");
                }
                let delta = m.delta.ok_or_else(|| ConfigError("xxz model needs delta".into()))?;
                finite("delta", delta)?;
                Ok(Model::Xxz(XxzModel::new(m.n, delta).map_err(wrap)?))
            }
            ModelKind::Siam => {
                if m.delta.is_some() {
                    return bad("siam model takes no delta");
                }
                let u = m.u.ok_or_else(|| ConfigError("siam model needs u".into()))?;
                let eps_f = m.eps_f.ok_or_else(|| ConfigError("siam model needs eps_f".into()))?;
                finite("u", u)?;
                finite("eps_f", eps_f)?;
                let chain = match (&m.taus, m.tau) {
                    (Some(t), None) => {
                        t.iter().try_for_each(|x| finite("taus", *x))?;
                        SiamChain::new(m.n, t.clone(), u, eps_f)
                    }
                    (None, Some(t)) => {
                        finite("tau", t)?;
                        SiamChain::uniform(m.n, t, u, eps_f)
                    }
                    _ => return bad("siam model needs exactly one of taus or tau"),
                };
                Ok(Model::Siam(chain.map_err(wrap)?))
            }
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let model = self.model()?;
        let n = model.n();
        if self.basis.thermal != "real" || self.basis.heisenberg != "hermitian" {
            return bad(format!(
                "unsupported basis pair thermal={:?} heisenberg={:?}; only real/hermitian keeps both legs real",
                self.basis.thermal, self.basis.heisenberg
            ));
        }
        let t = &self.truncation;
        if t.max_rank == 0 {
            return bad("max_rank must be positive");
        }
        if !(t.weight_tol >= 0.0 && t.weight_tol.is_finite()) {
            return bad("weight_tol must be nonnegative and finite");
        }
        if let Some(leg) = &self.thermal {
            check_leg("thermal", leg, n)?;
            if !leg.operators.is_empty() {
                return bad("thermal leg takes no operators");
            }
        }
        if let Some(leg) = &self.heisenberg {
            check_leg("heisenberg", leg, n)?;
            if leg.operators.is_empty() {
                return bad("heisenberg leg needs at least one operator");
            }
            let mut labels = BTreeSet::new();
            for op in &leg.operators {
                op.check(&model, true)?;
                if !labels.insert(op.label()) {
                    return bad(format!("duplicate operator label {:?}", op.label()));
                }
            }
        }
        if let Some(obs) = &self.observable {
            if let Some(b) = &obs.b {
                b.check(&model, false)?;
            }
            let labels: Vec<String> = self.heisenberg.iter().flat_map(|h| h.operators.iter().map(|o| o.label())).collect();
            match obs.kind {
                CorrelatorKind::Greens => {
                    if model.siam().is_none() {
                        return bad("greens observable needs the siam model");
                    }
                    if obs.b.is_some() || obs.a.is_some() {
                        return bad("greens observable takes no a or b");
                    }
                    for k in [OperatorKind::MajoranaW, OperatorKind::MajoranaWp] {
                        let ok = self.heisenberg.iter().flat_map(|h| &h.operators).any(|o| o.kind == k);
                        if !ok {
                            return bad(format!("greens observable needs a {k:?} heisenberg operator"));
                        }
                    }
                }
                CorrelatorKind::Plain | CorrelatorKind::Anticommutator => {
                    if let Some(a) = &obs.a {
                        if !labels.contains(a) {
                            return bad(format!("observable refers to unknown operator {a:?}"));
                        }
                    }
                    if obs.kind == CorrelatorKind::Anticommutator && obs.b.is_none() {
                        return bad("anticommutator observable needs b");
                    }
                }
            }
        }
        if !(self.validate.tolerance > 0.0 && self.validate.tolerance.is_finite()) {
            return bad("validate tolerance must be positive");
        }
        Ok(())
    }

    /// The Heisenberg operator an observable reads.
    pub fn observable_operator(&self) -> Option<&OperatorSpec> {
        let ops = &self.heisenberg.as_ref()?.operators;
        match self.observable.as_ref().and_then(|o| o.a.as_ref()) {
            Some(a) => ops.iter().find(|o| &o.label() == a),
            None => ops.first(),
        }
    }

    pub fn operator_of_kind(&self, kind: OperatorKind) -> Option<&OperatorSpec> {
        self.heisenberg.as_ref()?.operators.iter().find(|o| o.kind == kind)
    }

    pub fn osee_cut(&self, leg: &LegConfig) -> usize {
        leg.osee_cut.unwrap_or(self.model.n / 2)
    }
}

fn finite(name: &str, x: f64) -> Result<(), ConfigError> {
    if x.is_finite() {
        Ok(())
    } else {
        bad(format!("{name} must be finite"))
    }
}

fn check_leg(name: &str, leg: &LegConfig, n: usize) -> Result<(), ConfigError> {
    if !(leg.step > 0.0 && leg.step.is_finite()) {
        return bad(format!("{name}.step must be positive and finite"));
    }
    if leg.order != 1 && leg.order != 2 {
        return bad(format!("{name}.order must be 1 or 2"));
    }
    if leg.log_every == 0 {
        return bad(format!("{name}.log_every must be positive"));
    }
    if leg.snapshots.is_empty() {
        return bad(format!("{name}.snapshots must not be empty"));
    }
    let total = leg.total();
    if !(total >= 0.0 && total.is_finite()) || grid_index(total, leg.step).is_none() {
        return bad(format!("{name}.max {total} is not a multiple of step {}", leg.step));
    }
    for w in leg.snapshots.windows(2) {
        if w[1] <= w[0] {
            return bad(format!("{name}.snapshots must be strictly increasing"));
        }
    }
    for &p in &leg.snapshots {
        if !(0.0..=total * (1.0 + 1e-12)).contains(&p) {
            return bad(format!("{name} snapshot {p} outside [0, {total}]"));
        }
        if grid_index(p, leg.step).is_none() {
            return bad(format!("{name} snapshot {p} is not a multiple of step {}", leg.step));
        }
    }
    if let Some(c) = leg.osee_cut {
        if c == 0 || c >= n {
            return bad(format!("{name}.osee_cut must lie in 1..{n}"));
        }
    }
    Ok(())
}
