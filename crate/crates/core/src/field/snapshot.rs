//! Binary snapshot format.
//!
//! ```text
//! offset  size  field
//!      0     4  magic "WMAP"
//!      4     4  version (u32 LE)
//!      8     4  nx (u32 LE)
//!     12     4  ny (u32 LE)
//!     16     4  N, components per node (u32 LE)
//!     20     4  equivariance degree, 0 = periodic 2D (u32 LE)
//!     24     8  h (f64 LE)
//!     32     8  t (f64 LE)
//!     40    16  origin x, y (f64 LE)
//!     56     8  reserved, zero
//!     64     …  phi values then dphi values, row-major f64 LE
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{FieldError, GridField, MapState, Topology};

pub const SNAPSHOT_MAGIC: &[u8; 4] = b"WMAP";
pub const SNAPSHOT_VERSION: u32 = 1;
const HEADER_LEN: usize = 64;

/// Canonical file name for a snapshot at time `t`.
pub fn snapshot_file_name(t: f64) -> String {
    format!("snap_{t:.9}.bin")
}

pub fn write_snapshot(path: &Path, state: &MapState) -> Result<(), FieldError> {
    let phi = &state.phi;
    let mut header = [0u8; HEADER_LEN];
    header[0..4].copy_from_slice(SNAPSHOT_MAGIC);
    header[4..8].copy_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
    header[8..12].copy_from_slice(&(phi.nx as u32).to_le_bytes());
    header[12..16].copy_from_slice(&(phi.ny as u32).to_le_bytes());
    header[16..20].copy_from_slice(&(phi.ncomp as u32).to_le_bytes());
    header[20..24].copy_from_slice(&phi.topology.degree().to_le_bytes());
    header[24..32].copy_from_slice(&phi.h.to_le_bytes());
    header[32..40].copy_from_slice(&state.t.to_le_bytes());
    header[40..48].copy_from_slice(&phi.origin[0].to_le_bytes());
    header[48..56].copy_from_slice(&phi.origin[1].to_le_bytes());
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&header)?;
    for v in phi.values.iter().chain(&state.dphi.values) {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<MapState, FieldError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut header = [0u8; HEADER_LEN];
    r.read_exact(&mut header)?;
    if &header[0..4] != SNAPSHOT_MAGIC {
        return Err(FieldError::BadSnapshot(format!(
            "{}: bad magic",
            path.display()
        )));
    }
    let u32_at = |o: usize| u32::from_le_bytes(header[o..o + 4].try_into().unwrap());
    let f64_at = |o: usize| f64::from_le_bytes(header[o..o + 8].try_into().unwrap());
    let version = u32_at(4);
    if version != SNAPSHOT_VERSION {
        return Err(FieldError::BadSnapshot(format!(
            "{}: unsupported version {version}",
            path.display()
        )));
    }
    let (nx, ny, nc) = (u32_at(8) as usize, u32_at(12) as usize, u32_at(16) as usize);
    let topology = Topology::from_degree(u32_at(20));
    let (h, t) = (f64_at(24), f64_at(32));
    let origin = [f64_at(40), f64_at(48)];
    let len = nx * ny * nc;
    let mut bytes = vec![0u8; 2 * len * 8];
    r.read_exact(&mut bytes)?;
    let mut vals = bytes
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()));
    let grid = |values: Vec<f64>| GridField {
        nx,
        ny,
        ncomp: nc,
        h,
        origin,
        topology,
        values,
    };
    let phi = grid(vals.by_ref().take(len).collect());
    let dphi = grid(vals.collect());
    Ok(MapState { phi, dphi, t })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_is_64_bytes_and_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let phi = GridField::zeros_square(16, 1.5, 3).from_fn(|p, v| {
            v[0] = p[0].sin() * 1e-300;
            v[1] = p[1] / 3.0;
            v[2] = f64::MIN_POSITIVE;
        });
        let dphi = phi.zeros_like(3).from_fn(|p, v| v[1] = -p[0] * 0.1);
        let s = MapState::new(phi, dphi, 0.123456789012345);
        let path = dir.path().join(snapshot_file_name(s.t));
        write_snapshot(&path, &s).unwrap();
        let len = std::fs::metadata(&path).unwrap().len() as usize;
        assert_eq!(len, 64 + 2 * 16 * 16 * 3 * 8);
        let back = read_snapshot(&path).unwrap();
        assert_eq!(back.t.to_bits(), s.t.to_bits());
        for (a, b) in back.phi.values.iter().zip(&s.phi.values) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(back, s);
    }

    #[test]
    fn radial_snapshots_keep_their_degree() {
        let dir = tempfile::tempdir().unwrap();
        let phi = GridField::zeros_radial(32, 0.25, 2).from_fn(|p, v| v[0] = p[0].atan());
        let s = MapState::new(phi.clone(), phi.zeros_like(1), 2.0);
        let path = dir.path().join("r.bin");
        write_snapshot(&path, &s).unwrap();
        assert_eq!(read_snapshot(&path).unwrap(), s);
    }

    #[test]
    fn bad_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.bin");
        std::fs::write(&path, vec![0u8; 128]).unwrap();
        assert!(matches!(read_snapshot(&path), Err(FieldError::BadSnapshot(_))));
    }
}
