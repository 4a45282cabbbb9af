//! `ckpt-v1` container.
//!
//! ```text
//! magic      b"ckpt-v1\n"
//! u64 LE     header length in bytes
//! header     UTF-8 JSON: {"format", "meta", "stores": [{"name", "entries":
//!            [{"name", "shape", "trainable", "step"}]}]}
//! payload    for each store, for each entry in header order:
//!            values, m, v as little-endian f64
//! ```
//!
//! Entry order, moments and step counters survive a round trip bit for bit.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::{Entry, ParamStore};
use super::NnError;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"ckpt-v1\n";

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    /// Free-form metadata (network specs, RNG state, counters).
    pub meta: serde_json::Value,
    pub stores: Vec<(String, ParamStore)>,
}

#[derive(Serialize, Deserialize)]
struct EntryHeader {
    name: String,
    shape: Vec<usize>,
    trainable: bool,
    step: u64,
}

#[derive(Serialize, Deserialize)]
struct StoreHeader {
    name: String,
    entries: Vec<EntryHeader>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    meta: serde_json::Value,
    stores: Vec<StoreHeader>,
}

fn write_f64s<W: Write>(w: &mut W, xs: &[f64]) -> std::io::Result<()> {
    let mut buf = Vec::with_capacity(xs.len() * 8);
    for x in xs {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    w.write_all(&buf)
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>, NnError> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf).map_err(|e| NnError::Format(format!("truncated payload: {e}")))?;
    Ok(buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect())
}

impl Checkpoint {
    pub fn new(meta: serde_json::Value) -> Self {
        Self { meta, stores: Vec::new() }
    }

    pub fn with_store(mut self, name: impl Into<String>, store: ParamStore) -> Self {
        self.stores.push((name.into(), store));
        self
    }

    pub fn store(&self, name: &str) -> Option<&ParamStore> {
        self.stores.iter().find(|(n, _)| n == name).map(|(_, s)| s)
    }

    pub fn take_store(&mut self, name: &str) -> Option<ParamStore> {
        let i = self.stores.iter().position(|(n, _)| n == name)?;
        Some(self.stores.remove(i).1)
    }

    pub fn write<W: Write>(&self, w: &mut W) -> Result<(), NnError> {
        let header = Header {
            format: "ckpt-v1".into(),
            meta: self.meta.clone(),
            stores: self
                .stores
                .iter()
                .map(|(name, s)| StoreHeader {
                    name: name.clone(),
                    entries: s
                        .iter()
                        .map(|(n, e)| EntryHeader {
                            name: n.clone(),
                            shape: e.shape.clone(),
                            trainable: e.trainable,
                            step: e.step,
                        })
                        .collect(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| NnError::Format(e.to_string()))?;
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        for (_, s) in &self.stores {
            for (_, e) in s.iter() {
                write_f64s(w, &e.values)?;
                write_f64s(w, &e.m)?;
                write_f64s(w, &e.v)?;
            }
        }
        Ok(())
    }

    pub fn read<R: Read>(r: &mut R) -> Result<Self, NnError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| NnError::Format("file too short".into()))?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(NnError::Format("bad magic".into()));
        }
        let mut len = [0u8; 8];
        r.read_exact(&mut len).map_err(|_| NnError::Format("missing header length".into()))?;
        let len = u64::from_le_bytes(len) as usize;
        if len > 1 << 30 {
            return Err(NnError::Format(format!("implausible header length {len}")));
        }
        let mut json = vec![0u8; len];
        r.read_exact(&mut json).map_err(|_| NnError::Format("truncated header".into()))?;
        let header: Header = serde_json::from_slice(&json).map_err(|e| NnError::Format(e.to_string()))?;
        if header.format != "ckpt-v1" {
            return Err(NnError::Format(format!("unsupported format `{}`", header.format)));
        }
        let mut stores = Vec::with_capacity(header.stores.len());
        for sh in header.stores {
            let mut store = ParamStore::new();
            for eh in sh.entries {
                let n: usize = eh.shape.iter().product();
                let values = read_f64s(r, n)?;
                let m = read_f64s(r, n)?;
                let v = read_f64s(r, n)?;
                store
                    .insert(eh.name, Entry { shape: eh.shape, values, trainable: eh.trainable, m, v, step: eh.step })?;
            }
            stores.push((sh.name, store));
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(NnError::Format("trailing bytes after payload".into()));
        }
        Ok(Self { meta: header.meta, stores })
    }

    /// Writes to a sibling temporary file and renames it into place.
    pub fn save(&self, path: &Path) -> Result<(), NnError> {
        let tmp = path.with_extension("ckpt.tmp");
        {
            let mut f = std::io::BufWriter::new(fs::File::create(&tmp)?);
            self.write(&mut f)?;
            f.flush()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, NnError> {
        let mut f = std::io::BufReader::new(fs::File::open(path)?);
        Self::read(&mut f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn store_from(vals: &[(Vec<f64>, bool, u64)]) -> ParamStore {
        let mut s = ParamStore::new();
        for (i, (v, t, step)) in vals.iter().enumerate() {
            let mut e = Entry::new(vec![v.len()], v.clone(), *t);
            e.m = v.iter().map(|x| x * 0.5).collect();
            e.v = v.iter().map(|x| x * x).collect();
            e.step = *step;
            s.insert(format!("p{i}"), e).unwrap();
        }
        s
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            vals in prop::collection::vec(
                (prop::collection::vec(prop::num::f64::ANY, 1..6), any::<bool>(), any::<u64>()),
                0..5,
            )
        ) {
            let ck = Checkpoint::new(serde_json::json!({"k": 1}))
                .with_store("a", store_from(&vals))
                .with_store("b", ParamStore::new());
            let mut bytes = Vec::new();
            ck.write(&mut bytes).unwrap();
            let back = Checkpoint::read(&mut bytes.as_slice()).unwrap();
            prop_assert_eq!(back.meta, ck.meta.clone());
            prop_assert_eq!(back.stores.len(), 2);
            let (sa, sb) = (&back.stores[0].1, ck.store("a").unwrap());
            for ((na, ea), (nb, eb)) in sa.iter().zip(sb.iter()) {
                prop_assert_eq!(na, nb);
                prop_assert_eq!(&ea.shape, &eb.shape);
                prop_assert_eq!(ea.trainable, eb.trainable);
                prop_assert_eq!(ea.step, eb.step);
                let bits = |x: &[f64]| x.iter().map(|f| f.to_bits()).collect::<Vec<_>>();
                prop_assert_eq!(bits(&ea.values), bits(&eb.values));
                prop_assert_eq!(bits(&ea.m), bits(&eb.m));
                prop_assert_eq!(bits(&ea.v), bits(&eb.v));
            }
        }
    }

    #[test]
    fn corrupted_inputs_are_rejected() {
        let ck = Checkpoint::new(serde_json::Value::Null).with_store("a", store_from(&[(vec![1.0, 2.0], true, 3)]));
        let mut bytes = Vec::new();
        ck.write(&mut bytes).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'x';
        assert!(Checkpoint::read(&mut bad.as_slice()).is_err());
        let short = &bytes[..bytes.len() - 4];
        assert!(Checkpoint::read(&mut &short[..]).is_err());
        let mut long = bytes.clone();
        long.push(0);
        assert!(Checkpoint::read(&mut long.as_slice()).is_err());
    }

    #[test]
    fn save_and_load_through_a_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.ckpt");
        let ck = Checkpoint::new(serde_json::json!({"n": 2})).with_store("s", store_from(&[(vec![0.25], false, 7)]));
        ck.save(&path).unwrap();
        assert_eq!(Checkpoint::load(&path).unwrap(), ck);
    }
}
