//! Binary snapshot files.
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic     "OMPS"
//! version   u32
//! n         u32
//! phys_dim  u32            d² of the local operator basis
//! flags     u8 arithmetic  0 real, 1 complex
//!           u8 basis kind  0 hermitian, 1 real
//!           u8 stamp kind  0 β, 1 t
//!           u8 has center
//! center    u32
//! stamp     f64
//! log_scale f64
//! bonds     (n + 1) × u32
//! tensors   site by site, row-major (left, phys, right); complex as (re, im)
//! ```

use osmps::engine::{Direction, Snapshot};
use osmps::{BasisKind, BasisTag, DenseTensor, OperatorMps, C64};
use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"OMPS";
pub const FORMAT_VERSION: u32 = 1;

/// Decoder limits; anything larger is rejected before allocation.
pub const MAX_SITES: usize = 4096;
pub const MAX_BOND: usize = 1 << 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SnapshotError {
    #[error("not a snapshot file (bad magic)")]
    BadMagic,
    #[error("unsupported snapshot format version {0}")]
    UnsupportedVersion(u32),
    #[error("snapshot truncated at byte {0}")]
    Truncated(usize),
    #[error("{0} trailing bytes after snapshot body")]
    TrailingBytes(usize),
    #[error("invalid snapshot header: {0}")]
    Header(String),
    #[error("invalid snapshot body: {0}")]
    Body(String),
}

/// A decoded snapshot file.
#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotFile {
    pub direction: Direction,
    pub stamp: f64,
    pub state: OperatorMps,
}

impl SnapshotFile {
    pub fn from_snapshot(direction: Direction, s: &Snapshot) -> Self {
        Self { direction, stamp: s.stamp, state: s.state.clone() }
    }

    pub fn encode(&self) -> Vec<u8> {
        let st = &self.state;
        let n = st.n();
        let tag = st.basis();
        let bonds = st.bond_dims();
        let mut out = Vec::with_capacity(64 + 8 * bonds.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(n as u32).to_le_bytes());
        out.extend_from_slice(&(tag.phys_dim() as u32).to_le_bytes());
        out.push(if st.is_real() { 0 } else { 1 });
        out.push(match tag.kind {
            BasisKind::Hermitian => 0,
            BasisKind::Real => 1,
        });
        out.push(match self.direction {
            Direction::Imaginary => 0,
            Direction::Real => 1,
        });
        out.push(st.center().is_some() as u8);
        out.extend_from_slice(&(st.center().unwrap_or(0) as u32).to_le_bytes());
        out.extend_from_slice(&self.stamp.to_le_bytes());
        out.extend_from_slice(&st.log_scale().to_le_bytes());
        for b in &bonds {
            out.extend_from_slice(&(*b as u32).to_le_bytes());
        }
        for t in st.site_tensors() {
            match t {
                DenseTensor::Real(a) => a.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
                DenseTensor::Complex(a) => a.iter().for_each(|z| {
                    out.extend_from_slice(&z.re.to_le_bytes());
                    out.extend_from_slice(&z.im.to_le_bytes());
                }),
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, SnapshotError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(SnapshotError::BadMagic);
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(SnapshotError::UnsupportedVersion(version));
        }
        let n = r.u32()? as usize;
        if n == 0 || n > MAX_SITES {
            return Err(SnapshotError::Header(format!("site count {n}")));
        }
        let phys = r.u32()? as usize;
        let d = (1..=4).find(|d| d * d == phys).filter(|&d| d >= 2);
        let Some(d) = d else {
            return Err(SnapshotError::Header(format!("physical dimension {phys}")));
        };
        let complex = match r.u8()? {
            0 => false,
            1 => true,
            x => return Err(SnapshotError::Header(format!("arithmetic flag {x}"))),
        };
        let kind = match r.u8()? {
            0 => BasisKind::Hermitian,
            1 => BasisKind::Real,
            x => return Err(SnapshotError::Header(format!("basis kind {x}"))),
        };
        let direction = match r.u8()? {
            0 => Direction::Imaginary,
            1 => Direction::Real,
            x => return Err(SnapshotError::Header(format!("stamp kind {x}"))),
        };
        let has_center = match r.u8()? {
            0 => false,
            1 => true,
            x => return Err(SnapshotError::Header(format!("center flag {x}"))),
        };
        let center_raw = r.u32()? as usize;
        let center = if has_center {
            if center_raw >= n {
                return Err(SnapshotError::Header(format!("center {center_raw} outside {n} sites")));
            }
            Some(center_raw)
        } else if center_raw != 0 {
            return Err(SnapshotError::Header("center set without flag".into()));
        } else {
            None
        };
        let stamp = r.f64()?;
        if !stamp.is_finite() || stamp < 0.0 {
            return Err(SnapshotError::Header(format!("stamp {stamp}")));
        }
        let log_scale = r.f64()?;
        if !log_scale.is_finite() {
            return Err(SnapshotError::Header(format!("log scale {log_scale}")));
        }
        let mut bonds = Vec::with_capacity(n + 1);
        for _ in 0..=n {
            let b = r.u32()? as usize;
            if b == 0 || b > MAX_BOND {
                return Err(SnapshotError::Header(format!("bond dimension {b}")));
            }
            bonds.push(b);
        }
        if bonds[0] != 1 || bonds[n] != 1 {
            return Err(SnapshotError::Header("boundary bonds must be 1".into()));
        }
        let width = if complex { 16 } else { 8 };
        let mut body = 0usize;
        for j in 0..n {
            let count = bonds[j].checked_mul(phys).and_then(|x| x.checked_mul(bonds[j + 1]));
            body = count
                .and_then(|c| c.checked_mul(width))
                .and_then(|c| body.checked_add(c))
                .ok_or_else(|| SnapshotError::Header("body size overflows".into()))?;
        }
        let remaining = bytes.len() - r.pos;
        if body > remaining {
            return Err(SnapshotError::Truncated(bytes.len()));
        }
        if body < remaining {
            return Err(SnapshotError::TrailingBytes(remaining - body));
        }
        let mut tensors = Vec::with_capacity(n);
        for j in 0..n {
            let shape = [bonds[j], phys, bonds[j + 1]];
            let count = shape.iter().product::<usize>();
            let t = if complex {
                let mut v = Vec::with_capacity(count);
                for _ in 0..count {
                    v.push(C64::new(r.finite()?, r.finite()?));
                }
                DenseTensor::from_complex_vec(&shape, v)
            } else {
                let mut v = Vec::with_capacity(count);
                for _ in 0..count {
                    v.push(r.finite()?);
                }
                DenseTensor::from_real_vec(&shape, v)
            };
            tensors.push(t.map_err(|e| SnapshotError::Body(e.to_string()))?);
        }
        let state = OperatorMps::from_parts(tensors, center, log_scale, BasisTag::new(d, kind))
            .map_err(|e| SnapshotError::Body(e.to_string()))?;
        Ok(Self { direction, stamp, state })
    }

    pub fn into_snapshot(self, cum_discarded: f64) -> Snapshot {
        Snapshot { stamp: self.stamp, state: self.state, cum_discarded }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, k: usize) -> Result<&'a [u8], SnapshotError> {
        let end = self.pos.checked_add(k).filter(|&e| e <= self.bytes.len()).ok_or(SnapshotError::Truncated(self.pos))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, SnapshotError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, SnapshotError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64, SnapshotError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn finite(&mut self) -> Result<f64, SnapshotError> {
        let x = self.f64()?;
        if x.is_finite() {
            Ok(x)
        } else {
            Err(SnapshotError::Body(format!("non-finite entry at byte {}", self.pos - 8)))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use osmps::basis::make_basis;
    use proptest::prelude::*;

    fn sample(n: usize, complex: bool) -> SnapshotFile {
        let basis = make_basis(2, BasisKind::Real).unwrap();
        let mut state = OperatorMps::identity_state(n, &basis).unwrap();
        let v = ndarray::Array1::from_iter((0..4usize.pow(n as u32)).map(|k| {
            let x = ((k * 7919) % 97) as f64 / 97.0 - 0.5;
            C64::new(x, if complex { 0.25 * x } else { 0.0 })
        }));
        if n <= 4 {
            state = OperatorMps::from_coefficients(&v, n, basis.tag(), 64, 0.0).unwrap();
        }
        SnapshotFile { direction: Direction::Imaginary, stamp: 0.75, state }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        for complex in [false, true] {
            let f = sample(4, complex);
            let bytes = f.encode();
            let g = SnapshotFile::decode(&bytes).unwrap();
            assert_eq!(g, f);
            assert_eq!(g.encode(), bytes);
            assert_eq!(g.state.is_real(), !complex);
        }
    }

    #[test]
    fn rejects_unknown_version() {
        let mut bytes = sample(3, false).encode();
        bytes[4..8].copy_from_slice(&2u32.to_le_bytes());
        assert_eq!(SnapshotFile::decode(&bytes), Err(SnapshotError::UnsupportedVersion(2)));
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let bytes = sample(3, false).encode();
        assert_eq!(SnapshotFile::decode(b"OMPX"), Err(SnapshotError::BadMagic));
        assert!(matches!(SnapshotFile::decode(&bytes[..bytes.len() - 1]), Err(SnapshotError::Truncated(_))));
        let mut long = bytes.clone();
        long.push(0);
        assert_eq!(SnapshotFile::decode(&long), Err(SnapshotError::TrailingBytes(1)));
    }

    #[test]
    fn rejects_non_finite_entries() {
        let mut bytes = sample(2, false).encode();
        let k = bytes.len() - 8;
        bytes[k..].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(matches!(SnapshotFile::decode(&bytes), Err(SnapshotError::Body(_))));
    }

    proptest! {
        #[test]
        fn decode_never_panics(data in proptest::collection::vec(any::<u8>(), 0..256)) {
            let _ = SnapshotFile::decode(&data);
        }

        #[test]
        fn header_mutations_never_panic(pos in 0usize..48, byte in any::<u8>()) {
            let mut bytes = sample(3, true).encode();
            bytes[pos] = byte;
            if let Ok(f) = SnapshotFile::decode(&bytes) {
                prop_assert_eq!(f.encode(), bytes);
            }
        }
    }
}
