//! On-disk formats for reference states and field trajectories.
//!
//! `refstates-v1` (all integers and floats little-endian):
//!
//! ```text
//! magic   "refstates-v1\n"                 13 bytes
//! count   u32
//! record  * count:
//!   length   f64
//!   lambda   f64
//!   n        u32
//!   name_len u8, name bytes (utf-8, e.g. "u1")
//!   n_coeffs u32, then n_coeffs * (re f64, im f64)
//!   d0_bar   f64 (NaN when not calibrated)
//! ```
//!
//! `traj-v1` dense trajectory:
//!
//! ```text
//! magic "traj-v1\n" 8 bytes
//! t_count u64, n u64, length f64
//! times  t_count * f64
//! values t_count * n * f64, row-major (one snapshot per row)
//! ```

use std::fs;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rustfft::num_complex::Complex64;

use super::field::SpectralField;
use super::steady::{ReferenceName, ReferenceState};

pub const REFSTATES_MAGIC: &[u8] = b"refstates-v1\n";
pub const TRAJ_MAGIC: &[u8] = b"traj-v1\n";

/// One cached reference state with the parameters it was computed for.
#[derive(Debug, Clone, PartialEq)]
pub struct RefStateRecord {
    pub length: f64,
    pub lambda: f64,
    pub state: ReferenceState,
}

fn bad(msg: impl Into<String>) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.into())
}

fn read_array<const N: usize>(r: &mut impl Read) -> io::Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)?;
    Ok(b)
}

fn read_f64(r: &mut impl Read) -> io::Result<f64> {
    Ok(f64::from_le_bytes(read_array(r)?))
}

fn read_u32(r: &mut impl Read) -> io::Result<u32> {
    Ok(u32::from_le_bytes(read_array(r)?))
}

fn read_u64(r: &mut impl Read) -> io::Result<u64> {
    Ok(u64::from_le_bytes(read_array(r)?))
}

pub fn write_refstates(w: &mut impl Write, records: &[RefStateRecord]) -> io::Result<()> {
    w.write_all(REFSTATES_MAGIC)?;
    w.write_all(&(records.len() as u32).to_le_bytes())?;
    for rec in records {
        let name = rec.state.name.as_str().as_bytes();
        w.write_all(&rec.length.to_le_bytes())?;
        w.write_all(&rec.lambda.to_le_bytes())?;
        w.write_all(&(rec.state.profile.n() as u32).to_le_bytes())?;
        w.write_all(&[name.len() as u8])?;
        w.write_all(name)?;
        let coeffs = rec.state.profile.coeffs();
        w.write_all(&(coeffs.len() as u32).to_le_bytes())?;
        for c in coeffs {
            w.write_all(&c.re.to_le_bytes())?;
            w.write_all(&c.im.to_le_bytes())?;
        }
        w.write_all(&rec.state.d0_bar.unwrap_or(f64::NAN).to_le_bytes())?;
    }
    Ok(())
}

pub fn read_refstates(r: &mut impl Read) -> io::Result<Vec<RefStateRecord>> {
    let magic: [u8; 13] = read_array(r)?;
    if magic != REFSTATES_MAGIC {
        return Err(bad("not a refstates-v1 file"));
    }
    let count = read_u32(r)?;
    let mut out = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let length = read_f64(r)?;
        let lambda = read_f64(r)?;
        let n = read_u32(r)? as usize;
        let [name_len] = read_array::<1>(r)?;
        let mut name = vec![0u8; name_len as usize];
        r.read_exact(&mut name)?;
        let name = std::str::from_utf8(&name)
            .ok()
            .and_then(ReferenceName::parse)
            .ok_or_else(|| bad("unknown reference name"))?;
        let n_coeffs = read_u32(r)? as usize;
        if n_coeffs != n / 2 + 1 {
            return Err(bad(format!("{n_coeffs} coefficients for a {n}-point grid")));
        }
        let mut coeffs = Vec::with_capacity(n_coeffs);
        for _ in 0..n_coeffs {
            let re = read_f64(r)?;
            let im = read_f64(r)?;
            coeffs.push(Complex64::new(re, im));
        }
        let d0 = read_f64(r)?;
        out.push(RefStateRecord {
            length,
            lambda,
            state: ReferenceState {
                name,
                profile: SpectralField::from_coeffs(coeffs, n, length),
                d0_bar: (!d0.is_nan()).then_some(d0),
            },
        });
    }
    Ok(out)
}

pub fn save_refstates(path: &Path, records: &[RefStateRecord]) -> io::Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut w = BufWriter::new(fs::File::create(&tmp)?);
        write_refstates(&mut w, records)?;
        w.flush()?;
    }
    fs::rename(tmp, path)
}

pub fn load_refstates(path: &Path) -> io::Result<Vec<RefStateRecord>> {
    read_refstates(&mut BufReader::new(fs::File::open(path)?))
}

/// Field snapshots on a fixed grid, one per recorded time.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub length: f64,
    pub n: usize,
    pub times: Vec<f64>,
    /// Row-major `times.len() x n`.
    pub values: Vec<f64>,
}

impl Trajectory {
    pub fn new(length: f64, n: usize) -> Self {
        Self { length, n, times: Vec::new(), values: Vec::new() }
    }

    pub fn push(&mut self, t: f64, snapshot: &[f64]) {
        assert_eq!(snapshot.len(), self.n);
        self.times.push(t);
        self.values.extend_from_slice(snapshot);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn snapshot(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn snapshots(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.n)
    }

    /// Subtracts `profile` from every snapshot.
    pub fn deviation_from(&self, profile: &[f64]) -> Trajectory {
        let mut out = Trajectory::new(self.length, self.n);
        for (t, s) in self.times.iter().zip(self.snapshots()) {
            let d: Vec<f64> = s.iter().zip(profile).map(|(u, r)| u - r).collect();
            out.push(*t, &d);
        }
        out
    }

    pub fn write_csv(&self, w: &mut impl Write) -> io::Result<()> {
        writeln!(w, "t,x_index,u")?;
        for (t, s) in self.times.iter().zip(self.snapshots()) {
            for (j, u) in s.iter().enumerate() {
                writeln!(w, "{t},{j},{u}")?;
            }
        }
        Ok(())
    }

    /// Reads the CSV layout back. The domain length is not stored in CSV and
    /// must be supplied.
    pub fn read_csv(r: impl Read, length: f64) -> io::Result<Self> {
        let mut lines = BufReader::new(r).lines();
        match lines.next() {
            Some(Ok(h)) if h.trim() == "t,x_index,u" => {}
            _ => return Err(bad("missing `t,x_index,u` header")),
        }
        let mut rows: Vec<(f64, usize, f64)> = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols.len() < 3 {
                return Err(bad("short row"));
            }
            let t: f64 = cols[0].parse().map_err(|_| bad("bad t"))?;
            let j: usize = cols[1].parse().map_err(|_| bad("bad x_index"))?;
            let u: f64 = cols[2].parse().map_err(|_| bad("bad u"))?;
            rows.push((t, j, u));
        }
        let n = rows.iter().map(|r| r.1).max().map_or(0, |m| m + 1);
        let mut traj = Trajectory::new(length, n);
        for chunk in rows.chunks(n.max(1)) {
            if chunk.len() != n || chunk.iter().enumerate().any(|(j, r)| r.1 != j) {
                return Err(bad("rows are not complete snapshots in x_index order"));
            }
            let snap: Vec<f64> = chunk.iter().map(|r| r.2).collect();
            traj.push(chunk[0].0, &snap);
        }
        Ok(traj)
    }

    pub fn write_binary(&self, w: &mut impl Write) -> io::Result<()> {
        w.write_all(TRAJ_MAGIC)?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        w.write_all(&(self.n as u64).to_le_bytes())?;
        w.write_all(&self.length.to_le_bytes())?;
        for t in &self.times {
            w.write_all(&t.to_le_bytes())?;
        }
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary(r: &mut impl Read) -> io::Result<Self> {
        let magic: [u8; 8] = read_array(r)?;
        if magic != TRAJ_MAGIC {
            return Err(bad("not a traj-v1 file"));
        }
        let count = read_u64(r)? as usize;
        let n = read_u64(r)? as usize;
        let length = read_f64(r)?;
        let mut times = Vec::with_capacity(count);
        for _ in 0..count {
            times.push(read_f64(r)?);
        }
        let mut values = Vec::with_capacity(count * n);
        for _ in 0..count * n {
            values.push(read_f64(r)?);
        }
        Ok(Self { length, n, times, values })
    }

    /// Loads either layout, chosen by file extension (`.csv` or binary).
    pub fn load(path: &Path, length: f64) -> io::Result<Self> {
        let file = fs::File::open(path)?;
        if path.extension().is_some_and(|e| e == "csv") {
            Self::read_csv(file, length)
        } else {
            Self::read_binary(&mut BufReader::new(file))
        }
    }
}
