//! Flat binary parameter checkpoints.
//!
//! Layout: the 8-byte magic "GELENET1", then one record per parameter:
//! name length (u32 LE), UTF-8 name bytes, shape as four u32 LE
//! (n, c, h, w), then n*c*h*w values as f64 LE. Records run to end of file.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::optim::Parameter;
use crate::tensor::Shape;

pub const MAGIC: &[u8; 8] = b"GELENET1";

pub fn save(path: &Path, params: &[&Parameter]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    for p in params {
        let name = p.name.as_bytes();
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name)?;
        let s = p.shape();
        for dim in [s.n, s.c, s.h, s.w] {
            w.write_all(&(dim as u32).to_le_bytes())?;
        }
        let data = p.value.data();
        for v in data.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub struct Record {
    pub name: String,
    pub shape: Shape,
    pub values: Vec<f64>,
}

pub fn read_records(path: &Path) -> Result<Vec<Record>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Checkpoint(format!("{}: file too short", path.display())))?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint(format!(
            "{}: bad magic header",
            path.display()
        )));
    }
    let mut records = Vec::new();
    loop {
        let mut len_buf = [0u8; 4];
        match r.read_exact(&mut len_buf) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(e.into()),
        }
        let name_len = u32::from_le_bytes(len_buf) as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name)
            .map_err(|_| Error::Checkpoint("parameter name is not UTF-8".into()))?;
        let mut dims = [0usize; 4];
        for d in dims.iter_mut() {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)?;
            *d = u32::from_le_bytes(b) as usize;
        }
        let shape = Shape::new(dims[0], dims[1], dims[2], dims[3]);
        let mut values = vec![0.0f64; shape.numel()];
        let mut b = [0u8; 8];
        for v in values.iter_mut() {
            r.read_exact(&mut b)?;
            *v = f64::from_le_bytes(b);
        }
        records.push(Record { name, shape, values });
    }
    Ok(records)
}

/// Copy checkpoint values into matching parameters. Every parameter must be
/// present in the file with an identical shape, and vice versa.
pub fn load(path: &Path, params: &mut [&mut Parameter]) -> Result<()> {
    let records = read_records(path)?;
    if records.len() != params.len() {
        return Err(Error::Checkpoint(format!(
            "checkpoint has {} parameters, model expects {}",
            records.len(),
            params.len()
        )));
    }
    for (rec, p) in records.iter().zip(params.iter_mut()) {
        if rec.name != p.name {
            return Err(Error::Checkpoint(format!(
                "parameter order mismatch: checkpoint has '{}', model expects '{}'",
                rec.name, p.name
            )));
        }
        if rec.shape != p.shape() {
            return Err(Error::Checkpoint(format!(
                "shape mismatch for '{}': checkpoint {} vs model {}",
                rec.name,
                rec.shape,
                p.shape()
            )));
        }
        p.value.set_data(rec.values.clone())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn roundtrip_preserves_values_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.gnt");
        let a = Parameter::new("a/w", Tensor::from_fn(Shape::new(2, 3, 1, 1), |i| i as f64 * 0.1));
        let b = Parameter::new("b/bias", Tensor::from_fn(Shape::new(1, 4, 1, 1), |i| -(i as f64)));
        save(&path, &[&a, &b]).unwrap();

        let mut a2 = Parameter::new("a/w", Tensor::zeros(Shape::new(2, 3, 1, 1)));
        let mut b2 = Parameter::new("b/bias", Tensor::zeros(Shape::new(1, 4, 1, 1)));
        load(&path, &mut [&mut a2, &mut b2]).unwrap();
        assert_eq!(a2.value.to_vec(), a.value.to_vec());
        assert_eq!(b2.value.to_vec(), b.value.to_vec());
    }

    #[test]
    fn bad_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.gnt");
        std::fs::write(&path, b"NOTMAGIC").unwrap();
        assert!(read_records(&path).is_err());
    }

    #[test]
    fn shape_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.gnt");
        let a = Parameter::new("a/w", Tensor::zeros(Shape::new(2, 3, 1, 1)));
        save(&path, &[&a]).unwrap();
        let mut wrong = Parameter::new("a/w", Tensor::zeros(Shape::new(3, 2, 1, 1)));
        assert!(load(&path, &mut [&mut wrong]).is_err());
    }
}
