//! Flat file layouts for fields and trajectories.
//!
//! Binary field record (little endian):
//!
//! ```text
//! magic "PPF1" | nx: u64 | ny: u64 | hx: f64 | hy: f64 | ox: f64 | oy: f64 | nx*ny f64 (row-major)
//! ```
//!
//! CSV field: a header line `nx,ny,hx,hy,origin_x,origin_y`, one line with
//! those values, then `ny` lines of `nx` comma-separated values. Floats are
//! written in shortest round-trip form, so both layouts are lossless.
//!
//! Trajectory: magic `"PPT1"`, slice count `u64`, then per slice its time
//! (`f64`) followed by a binary field record.

use std::io::{BufRead, Read, Write};

use crate::error::{Error, Result};
use crate::grid::{Grid2D, ScalarField};

const FIELD_MAGIC: &[u8; 4] = b"PPF1";
const TRAJ_MAGIC: &[u8; 4] = b"PPT1";

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn grid_from_header(nx: usize, ny: usize, hx: f64, hy: f64, ox: f64, oy: f64) -> Result<Grid2D> {
    let grid = Grid2D {
        nx,
        ny,
        hx,
        hy,
        origin: [ox, oy],
        extent: [ox + (nx.saturating_sub(1)) as f64 * hx, oy + (ny.saturating_sub(1)) as f64 * hy],
    };
    grid.validate()?;
    Ok(grid)
}

pub fn write_field_binary(w: &mut impl Write, field: &ScalarField) -> Result<()> {
    let g = &field.grid;
    w.write_all(FIELD_MAGIC)?;
    w.write_all(&(g.nx as u64).to_le_bytes())?;
    w.write_all(&(g.ny as u64).to_le_bytes())?;
    for v in [g.hx, g.hy, g.origin[0], g.origin[1]] {
        w.write_all(&v.to_le_bytes())?;
    }
    for v in &field.data {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_field_binary(r: &mut impl Read) -> Result<ScalarField> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != FIELD_MAGIC {
        return Err(Error::Format("not a binary field record".into()));
    }
    let nx = read_u64(r)? as usize;
    let ny = read_u64(r)? as usize;
    let hx = read_f64(r)?;
    let hy = read_f64(r)?;
    let ox = read_f64(r)?;
    let oy = read_f64(r)?;
    let grid = grid_from_header(nx, ny, hx, hy, ox, oy)?;
    let mut data = Vec::with_capacity(grid.len());
    for _ in 0..grid.len() {
        data.push(read_f64(r)?);
    }
    ScalarField::from_vec(grid, data)
}

pub fn write_field_csv(w: &mut impl Write, field: &ScalarField) -> Result<()> {
    let g = &field.grid;
    writeln!(w, "nx,ny,hx,hy,origin_x,origin_y")?;
    writeln!(w, "{},{},{},{},{},{}", g.nx, g.ny, g.hx, g.hy, g.origin[0], g.origin[1])?;
    for row in field.data.chunks(g.nx) {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}

pub fn read_field_csv(r: impl BufRead) -> Result<ScalarField> {
    let mut lines = r.lines();
    let mut next = || -> Result<String> {
        lines
            .next()
            .ok_or_else(|| Error::Format("unexpected end of CSV".into()))?
            .map_err(Error::from)
    };
    let header = next()?;
    if header.trim() != "nx,ny,hx,hy,origin_x,origin_y" {
        return Err(Error::Format(format!("unexpected CSV header {header:?}")));
    }
    let meta = next()?;
    let parts: Vec<&str> = meta.trim().split(',').collect();
    if parts.len() != 6 {
        return Err(Error::Format("field header needs six entries".into()));
    }
    let int = |s: &str| {
        s.parse::<usize>()
            .map_err(|e| Error::Format(format!("bad integer {s:?}: {e}")))
    };
    let float = |s: &str| {
        s.parse::<f64>()
            .map_err(|e| Error::Format(format!("bad number {s:?}: {e}")))
    };
    let grid = grid_from_header(
        int(parts[0])?,
        int(parts[1])?,
        float(parts[2])?,
        float(parts[3])?,
        float(parts[4])?,
        float(parts[5])?,
    )?;
    let mut data = Vec::with_capacity(grid.len());
    for _ in 0..grid.ny {
        let line = next()?;
        let before = data.len();
        for tok in line.trim().split(',') {
            data.push(float(tok)?);
        }
        if data.len() - before != grid.nx {
            return Err(Error::Format(format!(
                "row has {} values, expected {}",
                data.len() - before,
                grid.nx
            )));
        }
    }
    ScalarField::from_vec(grid, data)
}

pub fn write_trajectory(w: &mut impl Write, times: &[f64], slices: &[ScalarField]) -> Result<()> {
    if times.len() != slices.len() {
        return Err(Error::Format("times and slices differ in length".into()));
    }
    w.write_all(TRAJ_MAGIC)?;
    w.write_all(&(times.len() as u64).to_le_bytes())?;
    for (t, s) in times.iter().zip(slices) {
        w.write_all(&t.to_le_bytes())?;
        write_field_binary(w, s)?;
    }
    Ok(())
}

pub fn read_trajectory(r: &mut impl Read) -> Result<(Vec<f64>, Vec<ScalarField>)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != TRAJ_MAGIC {
        return Err(Error::Format("not a trajectory file".into()));
    }
    let n = read_u64(r)? as usize;
    let mut times = Vec::with_capacity(n);
    let mut slices = Vec::with_capacity(n);
    for _ in 0..n {
        times.push(read_f64(r)?);
        slices.push(read_field_binary(r)?);
    }
    Ok((times, slices))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn field(nx: usize, ny: usize, values: &[f64]) -> ScalarField {
        let g = Grid2D::new(nx, ny, [-0.3, 1.7], [0.1, 0.9]).unwrap();
        ScalarField::from_vec(g, values[..nx * ny].to_vec()).unwrap()
    }

    proptest! {
        #[test]
        fn csv_and_binary_round_trip(
            nx in 3usize..7,
            ny in 3usize..7,
            values in proptest::collection::vec(-1e6f64..1e6, 49),
        ) {
            let f = field(nx, ny, &values);
            let mut bin = Vec::new();
            write_field_binary(&mut bin, &f).unwrap();
            let back = read_field_binary(&mut bin.as_slice()).unwrap();
            prop_assert_eq!(&back.data, &f.data);
            prop_assert_eq!(back.grid.hx.to_bits(), f.grid.hx.to_bits());

            let mut csv = Vec::new();
            write_field_csv(&mut csv, &f).unwrap();
            let back = read_field_csv(csv.as_slice()).unwrap();
            prop_assert_eq!(&back.data, &f.data);
            prop_assert_eq!(back.grid.origin, f.grid.origin);
        }
    }

    #[test]
    fn trajectory_round_trip() {
        let f = field(3, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0]);
        let g = f.map(|v| -v);
        let mut buf = Vec::new();
        write_trajectory(&mut buf, &[0.0, 0.5], &[f.clone(), g.clone()]).unwrap();
        let (t, s) = read_trajectory(&mut buf.as_slice()).unwrap();
        assert_eq!(t, vec![0.0, 0.5]);
        assert_eq!(s, vec![f, g]);
    }

    #[test]
    fn rejects_garbage() {
        assert!(read_field_binary(&mut &b"XXXX"[..]).is_err());
        assert!(read_field_csv(&b"a,b\n"[..]).is_err());
        let bad = "nx,ny,hx,hy,origin_x,origin_y\n3,3,1,1,0,0\n1,2\n";
        assert!(read_field_csv(bad.as_bytes()).is_err());
    }
}
