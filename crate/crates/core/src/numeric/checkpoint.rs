//! Binary checkpoint format:
//!
//! ```text
//! magic   b"KBDG"
//! version u32 LE
//! repeated until EOF:
//!   name_len u32 LE, name (UTF-8), rank u32 LE, dims (u64 LE each),
//!   payload (f64 LE, row-major)
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::Path;

use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"KBDG";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn write_checkpoint_to<W: Write>(store: &ParamStore, mut w: W) -> std::io::Result<()> {
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    for (name, t) in store.named_values() {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(t.rank() as u32).to_le_bytes())?;
        for &d in t.shape() {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for x in t.data() {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    w.flush()
}

pub fn write_checkpoint(store: &ParamStore, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_checkpoint_to(store, BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

fn read_exact_or<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        ErrorKind::UnexpectedEof => Error::Checkpoint(format!("truncated file while reading {what}")),
        _ => Error::Checkpoint(e.to_string()),
    })
}

fn read_u32<R: Read>(r: &mut R, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact_or(r, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}

/// Reads all `(name, tensor)` records.
pub fn read_checkpoint_from<R: Read>(mut r: R) -> Result<Vec<(String, Tensor)>> {
    let mut magic = [0u8; 4];
    read_exact_or(&mut r, &mut magic, "magic")?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint(format!("bad magic {magic:?}")));
    }
    let version = read_u32(&mut r, "version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let mut out = Vec::new();
    loop {
        let mut len = [0u8; 4];
        // a clean EOF is only legal at a record boundary
        match r.read(&mut len[..1]) {
            Ok(0) => break,
            Ok(_) => read_exact_or(&mut r, &mut len[1..], "record header")?,
            Err(e) => return Err(Error::Checkpoint(e.to_string())),
        }
        let name_len = u32::from_le_bytes(len) as usize;
        let mut name = vec![0u8; name_len];
        read_exact_or(&mut r, &mut name, "tensor name")?;
        let name = String::from_utf8(name).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let rank = read_u32(&mut r, "rank")? as usize;
        if rank > 3 {
            return Err(Error::Checkpoint(format!("`{name}` has rank {rank}")));
        }
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            let mut b = [0u8; 8];
            read_exact_or(&mut r, &mut b, "dims")?;
            dims.push(u64::from_le_bytes(b) as usize);
        }
        let n: usize = dims.iter().product();
        let mut payload = vec![0u8; n * 8];
        read_exact_or(&mut r, &mut payload, "payload")?;
        let data = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        out.push((name, Tensor::from_vec(&dims, data)?));
    }
    Ok(out)
}

pub fn read_checkpoint(path: &Path) -> Result<Vec<(String, Tensor)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint_from(BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_store() -> ParamStore {
        let mut s = ParamStore::new();
        s.add("emb", Tensor::matrix(2, 3, vec![0.1, -0.0, f64::MIN_POSITIVE, 1e300, -2.5, 3.0]))
            .unwrap();
        s.add("bias", Tensor::vector(vec![1.0 / 3.0])).unwrap();
        s.add("scalar", Tensor::scalar(-7.25)).unwrap();
        s
    }

    fn bytes(store: &ParamStore) -> Vec<u8> {
        let mut buf = Vec::new();
        write_checkpoint_to(store, &mut buf).unwrap();
        buf
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let store = sample_store();
        let records = read_checkpoint_from(bytes(&store).as_slice()).unwrap();
        let mut loaded = sample_store();
        loaded.value_mut(loaded.id("bias").unwrap()).data_mut()[0] = 0.0;
        loaded.load_values(records).unwrap();
        for ((n1, a), (n2, b)) in store.named_values().zip(loaded.named_values()) {
            assert_eq!(n1, n2);
            let a: Vec<u64> = a.data().iter().map(|x| x.to_bits()).collect();
            let b: Vec<u64> = b.data().iter().map(|x| x.to_bits()).collect();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn layout_is_fixed() {
        let mut s = ParamStore::new();
        s.add("w", Tensor::vector(vec![1.0])).unwrap();
        let mut expected = b"KBDG".to_vec();
        expected.extend(1u32.to_le_bytes());
        expected.extend(1u32.to_le_bytes());
        expected.push(b'w');
        expected.extend(1u32.to_le_bytes());
        expected.extend(1u64.to_le_bytes());
        expected.extend(1.0f64.to_le_bytes());
        assert_eq!(bytes(&s), expected);
    }

    #[test]
    fn corrupted_magic_is_rejected() {
        let mut b = bytes(&sample_store());
        b[0] = b'X';
        assert!(matches!(read_checkpoint_from(b.as_slice()), Err(Error::Checkpoint(m)) if m.contains("magic")));
    }

    #[test]
    fn wrong_version_is_rejected() {
        let mut b = bytes(&sample_store());
        b[4] = 9;
        assert!(matches!(read_checkpoint_from(b.as_slice()), Err(Error::Checkpoint(m)) if m.contains("version")));
    }

    #[test]
    fn truncation_anywhere_is_detected() {
        let b = bytes(&sample_store());
        for cut in 1..b.len() {
            // cuts that land on a record boundary are indistinguishable from a
            // shorter store, so only count the rest
            let res = read_checkpoint_from(&b[..cut]);
            if let Ok(records) = res {
                let full = read_checkpoint_from(b.as_slice()).unwrap();
                assert!(records.len() < full.len());
            }
        }
        assert!(read_checkpoint_from(&b[..b.len() - 1]).is_err());
    }
}
