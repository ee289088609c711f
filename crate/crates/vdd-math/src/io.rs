//! Exact binary serialization of named f64 arrays (little-endian), used by
//! checkpoints. Round-trips are bitwise.

use std::collections::BTreeMap;
use std::io::{self, Read, Write};

use ndarray::{ArrayD, IxDyn};

pub fn write_array<W: Write>(w: &mut W, a: &ArrayD<f64>) -> io::Result<()> {
    w.write_all(&(a.ndim() as u32).to_le_bytes())?;
    for d in a.shape() {
        w.write_all(&(*d as u64).to_le_bytes())?;
    }
    let std = a.as_standard_layout();
    for v in std.iter() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_array<R: Read>(r: &mut R) -> io::Result<ArrayD<f64>> {
    let ndim = read_u32(r)? as usize;
    let mut shape = Vec::with_capacity(ndim);
    for _ in 0..ndim {
        shape.push(read_u64(r)? as usize);
    }
    let n: usize = shape.iter().product();
    let mut data = vec![0f64; n];
    let mut buf = [0u8; 8];
    for v in data.iter_mut() {
        r.read_exact(&mut buf)?;
        *v = f64::from_le_bytes(buf);
    }
    ArrayD::from_shape_vec(IxDyn(&shape), data)
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
}

pub fn write_named_arrays<W: Write>(
    w: &mut W,
    entries: impl Iterator<Item = (String, ArrayD<f64>)>,
    count: usize,
) -> io::Result<()> {
    w.write_all(&(count as u64).to_le_bytes())?;
    let mut written = 0usize;
    for (name, arr) in entries {
        write_str(w, &name)?;
        write_array(w, &arr)?;
        written += 1;
    }
    assert_eq!(written, count, "write_named_arrays count mismatch");
    Ok(())
}

pub fn read_named_arrays<R: Read>(r: &mut R) -> io::Result<BTreeMap<String, ArrayD<f64>>> {
    let count = read_u64(r)? as usize;
    let mut out = BTreeMap::new();
    for _ in 0..count {
        let name = read_str(r)?;
        out.insert(name, read_array(r)?);
    }
    Ok(out)
}

pub fn write_str<W: Write>(w: &mut W, s: &str) -> io::Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())
}

pub fn read_str<R: Read>(r: &mut R) -> io::Result<String> {
    let len = read_u32(r)? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
}

pub fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_u64<R: Read>(r: &mut R) -> io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}
