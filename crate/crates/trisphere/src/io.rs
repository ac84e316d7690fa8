//! Field file format: a flat little-endian `f64` binary in row-major
//! node order, with a JSON sidecar carrying dims, spacing, origin, the
//! run-length-encoded mask and the solve metadata. Trivially parseable
//! from any language for cross-checking.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::barrier::BarrierSpec;
use crate::geometry::{Grid, GridField, GridSpec, KAnnulus, NodeKind, MAX_DIM};
use crate::{Error, Result};

/// Solve metadata embedded in the sidecar so a field file is
/// self-describing for verification.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FieldMeta {
    pub annulus: KAnnulus,
    pub p: f64,
    /// Human-readable boundary-data selector.
    pub boundary: String,
    /// Barrier parameters the boundary data was derived from, if any.
    pub barrier: Option<BarrierSpec>,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    dims: Vec<usize>,
    spacing: Vec<f64>,
    origin: Vec<f64>,
    /// `(kind, run_length)` pairs over row-major node order;
    /// kind: 0 = interior, 1 = boundary, 2 = outside.
    mask_rle: Vec<(u8, u64)>,
    meta: FieldMeta,
}

fn encode_mask(mask: &[NodeKind]) -> Vec<(u8, u64)> {
    let mut out = Vec::new();
    for &k in mask {
        let v = k as u8;
        match out.last_mut() {
            Some((kind, run)) if *kind == v => *run += 1,
            _ => out.push((v, 1)),
        }
    }
    out
}

fn decode_mask(rle: &[(u8, u64)], expected: usize) -> Result<Vec<NodeKind>> {
    let mut out = Vec::with_capacity(expected);
    for &(kind, run) in rle {
        let k = match kind {
            0 => NodeKind::Interior,
            1 => NodeKind::Boundary,
            2 => NodeKind::Outside,
            other => return Err(Error::domain(format!("unknown mask kind {other}"))),
        };
        out.resize(out.len() + run as usize, k);
    }
    if out.len() != expected {
        return Err(Error::domain(format!(
            "mask length {} does not match grid ({expected} nodes)",
            out.len()
        )));
    }
    Ok(out)
}

/// Writes the field binary and its JSON sidecar.
pub fn write_field(
    bin_path: &Path,
    sidecar_path: &Path,
    field: &GridField,
    meta: &FieldMeta,
) -> Result<()> {
    let spec = &field.grid.spec;
    let n = spec.n;
    let mut bytes = Vec::with_capacity(field.values.len() * 8);
    for v in &field.values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(bin_path, bytes)?;

    let sidecar = Sidecar {
        dims: spec.dims[..n].to_vec(),
        spacing: spec.spacing[..n].to_vec(),
        origin: spec.origin[..n].to_vec(),
        mask_rle: encode_mask(&field.grid.mask),
        meta: meta.clone(),
    };
    let json = serde_json::to_vec_pretty(&sidecar)?;
    fs::write(sidecar_path, json)?;
    Ok(())
}

/// Reads a field binary plus sidecar back into a grid field.
pub fn read_field(bin_path: &Path, sidecar_path: &Path) -> Result<(GridField, FieldMeta)> {
    let sidecar: Sidecar = serde_json::from_slice(&fs::read(sidecar_path)?)?;
    let n = sidecar.dims.len();
    if n < 2 || n > MAX_DIM || sidecar.spacing.len() != n || sidecar.origin.len() != n {
        return Err(Error::domain("sidecar dims/spacing/origin are inconsistent".to_string()));
    }
    let mut dims = [1usize; MAX_DIM];
    let mut spacing = [1.0f64; MAX_DIM];
    let mut origin = [0.0f64; MAX_DIM];
    dims[..n].copy_from_slice(&sidecar.dims);
    spacing[..n].copy_from_slice(&sidecar.spacing);
    origin[..n].copy_from_slice(&sidecar.origin);
    let spec = GridSpec::new(n, dims, spacing, origin)?;

    let mask = decode_mask(&sidecar.mask_rle, spec.node_count())?;
    let grid = Arc::new(Grid::from_mask(spec, mask));

    let bytes = fs::read(bin_path)?;
    if bytes.len() != grid.spec.node_count() * 8 {
        return Err(Error::domain(format!(
            "field binary holds {} bytes, expected {}",
            bytes.len(),
            grid.spec.node_count() * 8
        )));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((GridField { grid, values }, sidecar.meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_grid;

    #[test]
    fn round_trip_is_bit_identical() {
        let ann = KAnnulus::new(2, 2, 1.0, 2.0).unwrap();
        let grid = build_grid(&ann, 24).unwrap();
        let field = GridField::from_fn(grid, |p| (p[0] * 13.7).sin() * p[1].exp());
        let meta = FieldMeta {
            annulus: ann,
            p: 2.5,
            boundary: "barrier".to_string(),
            barrier: Some(BarrierSpec::new(1.0, 2.0, 2, 2, 2.5).unwrap()),
        };
        let dir = tempfile::tempdir().unwrap();
        let bin = dir.path().join("field.bin");
        let side = dir.path().join("field.json");
        write_field(&bin, &side, &field, &meta).unwrap();
        let (back, meta2) = read_field(&bin, &side).unwrap();
        assert_eq!(field.values.len(), back.values.len());
        for (a, b) in field.values.iter().zip(&back.values) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(field.grid.mask, back.grid.mask);
        assert_eq!(field.grid.interior, back.grid.interior);
        assert_eq!(meta2.p, 2.5);

        // a second write of the round-tripped field is byte-identical
        let bin2 = dir.path().join("field2.bin");
        let side2 = dir.path().join("field2.json");
        write_field(&bin2, &side2, &back, &meta2).unwrap();
        assert_eq!(std::fs::read(&bin).unwrap(), std::fs::read(&bin2).unwrap());
        assert_eq!(std::fs::read(&side).unwrap(), std::fs::read(&side2).unwrap());
    }

    #[test]
    fn truncated_binary_is_rejected() {
        let ann = KAnnulus::new(2, 2, 1.0, 2.0).unwrap();
        let grid = build_grid(&ann, 16).unwrap();
        let field = GridField::constant(grid, 1.0);
        let meta = FieldMeta { annulus: ann, p: 2.0, boundary: "constant:1".into(), barrier: None };
        let dir = tempfile::tempdir().unwrap();
        let bin = dir.path().join("f.bin");
        let side = dir.path().join("f.json");
        write_field(&bin, &side, &field, &meta).unwrap();
        let mut bytes = std::fs::read(&bin).unwrap();
        bytes.truncate(bytes.len() - 8);
        std::fs::write(&bin, bytes).unwrap();
        assert!(read_field(&bin, &side).is_err());
    }
}
