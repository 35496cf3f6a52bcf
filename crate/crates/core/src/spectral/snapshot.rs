use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::{ComplexField, GridSpec, Role, FOURIER_CONVENTION};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotHeader {
    pub box_length: f64,
    pub points: usize,
    pub role: Role,
    pub fourier_convention: String,
    pub layout: String,
}

fn sidecar(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Writes `path` (raw little-endian `(re, im)` pairs, row-major `(x, y, z)`)
/// and a JSON sidecar next to it.
pub fn write_snapshot(path: &Path, f: &ComplexField) -> Result<()> {
    let mut bytes = Vec::with_capacity(f.values().len() * 16);
    for v in f.values() {
        bytes.extend_from_slice(&v.re.to_le_bytes());
        bytes.extend_from_slice(&v.im.to_le_bytes());
    }
    fs::File::create(path)?.write_all(&bytes)?;
    let header = SnapshotHeader {
        box_length: f.grid().box_length,
        points: f.grid().points,
        role: f.role(),
        fourier_convention: FOURIER_CONVENTION.to_string(),
        layout: "f64 little-endian (re, im) pairs, row-major over (x, y, z)".to_string(),
    };
    fs::write(sidecar(path), serde_json::to_string_pretty(&header)?)?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<ComplexField> {
    let header: SnapshotHeader = serde_json::from_str(&fs::read_to_string(sidecar(path))?)?;
    let grid = GridSpec::new(header.box_length, header.points)?;
    let bytes = fs::read(path)?;
    if bytes.len() != grid.len() * 16 {
        return Err(Error::Snapshot(format!(
            "{} holds {} bytes, expected {}",
            path.display(),
            bytes.len(),
            grid.len() * 16
        )));
    }
    let values = bytes
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().unwrap());
            let im = f64::from_le_bytes(c[8..].try_into().unwrap());
            Complex64::new(re, im)
        })
        .collect();
    Ok(ComplexField::from_values(grid, header.role, values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::testing::random_field;

    #[test]
    fn snapshot_roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("phi.bin");
        let f = random_field(GridSpec::new(5.0, 8).unwrap(), 2).with_role(Role::Phonon);
        write_snapshot(&p, &f).unwrap();
        let g = read_snapshot(&p).unwrap();
        assert_eq!(g.role(), Role::Phonon);
        assert_eq!(g.grid(), f.grid());
        assert!(g.values().iter().zip(f.values()).all(|(a, b)| a == b));
        fs::write(&p, [0u8; 10]).unwrap();
        assert!(read_snapshot(&p).is_err());
    }
}
