//! Field and grid export formats.
//!
//! Binary field layout (all little-endian): magic `SFB1`, format version
//! `u32`, scheme tag `u8` (0 = HEALPix, 1 = icosphere), resolution `u32`,
//! seed `u64`, pixel count `u64`, then the field values as 64-bit reals.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::sphere::{FieldSample, GridScheme, SphereGrid};

const MAGIC: &[u8; 4] = b"SFB1";
const FORMAT_VERSION: u32 = 1;

/// Header of a binary field file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FieldFileHeader {
    pub scheme_tag: u8,
    pub resolution: u32,
    pub seed: u64,
    pub n_pixels: u64,
}

fn scheme_tag(scheme: GridScheme) -> u8 {
    match scheme {
        GridScheme::Healpix { .. } => 0,
        GridScheme::Icosphere { .. } => 1,
    }
}

/// Write a field in the flat binary format.
pub fn write_field_binary(path: &Path, field: &FieldSample, grid: &SphereGrid) -> Result<()> {
    if field.values.len() != grid.n_pixels() {
        return Err(Error::argument("field length does not match grid"));
    }
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(MAGIC)?;
    f.write_all(&FORMAT_VERSION.to_le_bytes())?;
    f.write_all(&[scheme_tag(grid.scheme)])?;
    f.write_all(&grid.resolution().to_le_bytes())?;
    f.write_all(&field.seed.to_le_bytes())?;
    f.write_all(&(field.values.len() as u64).to_le_bytes())?;
    for v in &field.values {
        f.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Read a binary field file back.
pub fn read_field_binary(path: &Path) -> Result<(FieldFileHeader, Vec<f64>)> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    f.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::argument("not a field file (bad magic)"));
    }
    let mut b4 = [0u8; 4];
    f.read_exact(&mut b4)?;
    let version = u32::from_le_bytes(b4);
    if version != FORMAT_VERSION {
        return Err(Error::argument(format!(
            "unsupported field file version {version}"
        )));
    }
    let mut b1 = [0u8; 1];
    f.read_exact(&mut b1)?;
    f.read_exact(&mut b4)?;
    let resolution = u32::from_le_bytes(b4);
    let mut b8 = [0u8; 8];
    f.read_exact(&mut b8)?;
    let seed = u64::from_le_bytes(b8);
    f.read_exact(&mut b8)?;
    let n = u64::from_le_bytes(b8);
    let mut values = Vec::with_capacity(n as usize);
    for _ in 0..n {
        f.read_exact(&mut b8)?;
        values.push(f64::from_le_bytes(b8));
    }
    Ok((
        FieldFileHeader {
            scheme_tag: b1[0],
            resolution,
            seed,
            n_pixels: n,
        },
        values,
    ))
}

/// Write a field as `pixel,value` CSV.
pub fn write_field_csv(path: &Path, field: &FieldSample) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "pixel,value")?;
    for (p, v) in field.values.iter().enumerate() {
        writeln!(f, "{p},{v:?}")?;
    }
    Ok(())
}

/// Write the grid adjacency as `pixel,neighbor` CSV for external inspection.
pub fn write_adjacency_csv(path: &Path, grid: &SphereGrid) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "pixel,neighbor")?;
    for p in 0..grid.n_pixels() {
        for &q in grid.neighbors(p) {
            writeln!(f, "{p},{q}")?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::AngularSpectrum;
    use crate::sphere::{build_grid, FieldSource};

    #[test]
    fn binary_roundtrip() {
        let grid = build_grid(GridScheme::Healpix { nside: 2 }).unwrap();
        let field = FieldSample {
            values: (0..grid.n_pixels()).map(|i| (i as f64).sin()).collect(),
            source: FieldSource::Spectral(AngularSpectrum {
                lmax: 0,
                chat: vec![1.0],
            }),
            seed: 1234,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("field.sfb");
        write_field_binary(&path, &field, &grid).unwrap();
        let (hdr, values) = read_field_binary(&path).unwrap();
        assert_eq!(hdr.scheme_tag, 0);
        assert_eq!(hdr.resolution, 1);
        assert_eq!(hdr.seed, 1234);
        assert_eq!(hdr.n_pixels as usize, grid.n_pixels());
        assert!(values
            .iter()
            .zip(&field.values)
            .all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn csv_outputs_exist() {
        let grid = build_grid(GridScheme::Icosphere { subdivisions: 0 }).unwrap();
        let field = FieldSample {
            values: vec![0.5; grid.n_pixels()],
            source: FieldSource::Spectral(AngularSpectrum {
                lmax: 0,
                chat: vec![1.0],
            }),
            seed: 0,
        };
        let dir = tempfile::tempdir().unwrap();
        let fp = dir.path().join("f.csv");
        let ap = dir.path().join("adj.csv");
        write_field_csv(&fp, &field).unwrap();
        write_adjacency_csv(&ap, &grid).unwrap();
        let text = std::fs::read_to_string(&ap).unwrap();
        // 12 vertices of valence 5 plus the header line
        assert_eq!(text.lines().count(), 1 + 60);
    }
}
