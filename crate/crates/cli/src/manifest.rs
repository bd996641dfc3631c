//! Per-leg `manifest.toml`: which snapshot files exist, their hashes and the
//! truncation they carry.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.toml";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ManifestError {
    #[error("manifest does not parse: {0}")]
    Parse(String),
    #[error("unsupported manifest version {0}")]
    UnsupportedVersion(u32),
    #[error("invalid manifest: {0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LegKind {
    Thermal,
    Heisenberg,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format_version: u32,
    pub kind: LegKind,
    /// Operator label for Heisenberg legs, `rho` for the thermal leg.
    pub label: String,
    pub n: usize,
    pub phys_dim: usize,
    pub basis: String,
    /// SHA-256 of the canonical model description.
    pub model_sha256: String,
    pub step: f64,
    pub order: u8,
    pub max_rank: usize,
    pub weight_tol: f64,
    /// Every requested snapshot was written.
    pub complete: bool,
    /// Every intermediate state stayed real.
    pub real_arithmetic: bool,
    /// Present when the leg stopped early: stamp, bond and discarded weight.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aborted: Option<AbortInfo>,
    /// Seconds since the Unix epoch; only written for non-deterministic runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_unix: Option<u64>,
    #[serde(default)]
    pub snapshots: Vec<SnapshotEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AbortInfo {
    pub stamp: f64,
    pub bond: usize,
    pub discarded: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotEntry {
    pub stamp: f64,
    pub file: String,
    pub sha256: String,
    pub cum_discarded: f64,
    pub log_norm: f64,
    pub max_bond: usize,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Manifest {
    pub fn parse(text: &str) -> Result<Self, ManifestError> {
        let m: Manifest = toml::from_str(text).map_err(|e| ManifestError::Parse(e.to_string()))?;
        if m.format_version != MANIFEST_VERSION {
            return Err(ManifestError::UnsupportedVersion(m.format_version));
        }
        m.check()?;
        Ok(m)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }

    fn check(&self) -> Result<(), ManifestError> {
        let invalid = |s: String| Err(ManifestError::Invalid(s));
        if self.n == 0 {
            return invalid("n must be positive".into());
        }
        let numbers = [self.step, self.weight_tol].into_iter().chain(self.aborted.iter().flat_map(|a| [a.stamp, a.discarded]));
        let numbers = numbers.chain(self.snapshots.iter().flat_map(|s| [s.cum_discarded, s.log_norm]));
        if numbers.into_iter().any(|x| !x.is_finite()) {
            return invalid("non-finite number".into());
        }
        for w in self.snapshots.windows(2) {
            if !(w[1].stamp > w[0].stamp) {
                return invalid("snapshot stamps must increase".into());
            }
        }
        for s in &self.snapshots {
            if !s.stamp.is_finite() || s.stamp < 0.0 {
                return invalid(format!("stamp {}", s.stamp));
            }
            let plain = !s.file.is_empty()
                && s.file.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
                && !s.file.starts_with('.');
            if !plain {
                return invalid(format!("snapshot file name {:?}", s.file));
            }
            if s.sha256.len() != 64 || !s.sha256.bytes().all(|b| b.is_ascii_hexdigit()) {
                return invalid(format!("hash {:?}", s.sha256));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> Manifest {
        Manifest {
            format_version: MANIFEST_VERSION,
            kind: LegKind::Heisenberg,
            label: "j2".into(),
            n: 6,
            phys_dim: 4,
            basis: "d2-hermitian".into(),
            model_sha256: sha256_hex(b"model"),
            step: 0.005,
            order: 2,
            max_rank: 256,
            weight_tol: 1e-12,
            complete: true,
            real_arithmetic: true,
            aborted: None,
            created_unix: None,
            snapshots: vec![
                SnapshotEntry { stamp: 0.0, file: "t_0000.omps".into(), sha256: sha256_hex(b"a"), cum_discarded: 0.0, log_norm: 0.0, max_bond: 1 },
                SnapshotEntry { stamp: 0.5, file: "t_0001.omps".into(), sha256: sha256_hex(b"b"), cum_discarded: 1e-13, log_norm: -0.1, max_bond: 16 },
            ],
        }
    }

    #[test]
    fn round_trip() {
        let m = sample();
        assert_eq!(Manifest::parse(&m.to_toml()).unwrap(), m);
    }

    #[test]
    fn rejects_version_paths_and_order() {
        let mut m = sample();
        m.format_version = 9;
        assert_eq!(Manifest::parse(&m.to_toml()), Err(ManifestError::UnsupportedVersion(9)));
        let mut m = sample();
        m.snapshots[0].file = "../escape".into();
        assert!(Manifest::parse(&m.to_toml()).is_err());
        let mut m = sample();
        m.snapshots.swap(0, 1);
        assert!(Manifest::parse(&m.to_toml()).is_err());
    }

    proptest! {
        #[test]
        fn parse_never_panics(text in "\\PC{0,200}") {
            let _ = Manifest::parse(&text);
        }
    }
}
