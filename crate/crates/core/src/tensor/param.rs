//! Named parameters and the flat binary checkpoint format.
//!
//! Layout, all integers and floats little-endian 64-bit:
//!
//! ```text
//! "WEMF0001"
//! repeat, sorted by name:
//!     name_len: u64, name: [u8; name_len] (UTF-8),
//!     rank: u64, extents: [u64; rank],
//!     data: [f64; product(extents)]
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use super::{numel, Tensor};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"WEMF0001";

/// Plain storage for one parameter; lives outside any graph.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamValue {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl ParamValue {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Self {
        assert_eq!(numel(shape), data.len());
        ParamValue { shape: shape.to_vec(), data }
    }
}

/// All trainable state of a model, keyed by stable dotted names.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: BTreeMap<String, ParamValue>,
}

/// A parameter bound into a graph as a gradient-tracking leaf.
#[derive(Clone, Debug)]
pub struct Parameter {
    pub name: String,
    pub tensor: Tensor,
}

/// The leaves for one forward pass.
#[derive(Clone, Debug, Default)]
pub struct Bindings {
    params: BTreeMap<String, Parameter>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Insert a parameter. Names must be unique.
    pub fn insert(&mut self, name: impl Into<String>, value: ParamValue) {
        let name = name.into();
        let prev = self.params.insert(name.clone(), value);
        assert!(prev.is_none(), "duplicate parameter name `{name}`");
    }

    pub fn get(&self, name: &str) -> Option<&ParamValue> {
        self.params.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut ParamValue> {
        self.params.get_mut(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ParamValue)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut ParamValue)> {
        self.params.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    /// Total scalar count.
    pub fn count(&self) -> usize {
        self.params.values().map(|p| p.data.len()).sum()
    }

    /// Fresh leaves for a forward pass.
    pub fn bind(&self, requires_grad: bool) -> Result<Bindings> {
        let params = self
            .params
            .iter()
            .map(|(name, v)| {
                let tensor = if requires_grad {
                    Tensor::variable(&v.shape, v.data.clone())?
                } else {
                    Tensor::new(&v.shape, v.data.clone())?
                };
                Ok((name.clone(), Parameter { name: name.clone(), tensor }))
            })
            .collect::<Result<_>>()?;
        Ok(Bindings { params })
    }

    /// Check that `other` has exactly the same names and shapes.
    pub fn check_compatible(&self, other: &ParamStore) -> Result<()> {
        for (name, v) in &self.params {
            match other.params.get(name) {
                None => return Err(Error::MissingParameter(name.clone())),
                Some(o) if o.shape != v.shape => {
                    return Err(Error::Config(format!(
                        "parameter `{name}` has shape {:?}, expected {:?}",
                        o.shape, v.shape
                    )))
                }
                _ => {}
            }
        }
        if let Some(extra) = other.params.keys().find(|k| !self.params.contains_key(*k)) {
            return Err(Error::Config(format!("unexpected parameter `{extra}`")));
        }
        Ok(())
    }
}

impl Bindings {
    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.params
            .get(name)
            .map(|p| &p.tensor)
            .ok_or_else(|| Error::MissingParameter(name.to_string()))
    }

    /// Replace one leaf, e.g. to differentiate with respect to it alone.
    pub fn set(&mut self, name: &str, tensor: Tensor) {
        self.params.insert(
            name.to_string(),
            Parameter {
                name: name.to_string(),
                tensor,
            },
        );
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.values()
    }

    /// Accumulated gradients keyed by name; zeros where none reached a leaf.
    pub fn grads(&self) -> BTreeMap<String, Vec<f64>> {
        self.params
            .iter()
            .map(|(k, p)| (k.clone(), p.tensor.grad().unwrap_or_else(|| vec![0.0; p.tensor.numel()])))
            .collect()
    }
}

fn put_u64(w: &mut impl Write, v: u64) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

pub fn encode_checkpoint(store: &ParamStore) -> Vec<u8> {
    let mut buf = Vec::with_capacity(8 + store.count() * 8);
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    for (name, v) in &store.params {
        put_u64(&mut buf, name.len() as u64).unwrap();
        buf.extend_from_slice(name.as_bytes());
        put_u64(&mut buf, v.shape.len() as u64).unwrap();
        for &d in &v.shape {
            put_u64(&mut buf, d as u64).unwrap();
        }
        for x in &v.data {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    buf
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<ParamStore> {
    let bad = |m: &str| Error::Checkpoint(m.to_string());
    let mut r = bytes;
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(bad("bad magic"));
    }
    let take_u64 = |r: &mut &[u8]| -> Result<u64> {
        let mut b = [0u8; 8];
        r.read_exact(&mut b).map_err(|_| bad("truncated record"))?;
        Ok(u64::from_le_bytes(b))
    };
    let mut store = ParamStore::new();
    let mut last: Option<String> = None;
    while !r.is_empty() {
        let len = take_u64(&mut r)? as usize;
        if len > r.len() {
            return Err(bad("name length past end of file"));
        }
        let name = std::str::from_utf8(&r[..len]).map_err(|_| bad("name is not UTF-8"))?.to_string();
        r = &r[len..];
        let rank = take_u64(&mut r)? as usize;
        if rank > 16 {
            return Err(bad("implausible rank"));
        }
        let shape = (0..rank).map(|_| take_u64(&mut r).map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
        let n = numel(&shape);
        if n.checked_mul(8).map_or(true, |b| b > r.len()) {
            return Err(bad("data past end of file"));
        }
        let data = r[..n * 8]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        r = &r[n * 8..];
        if last.as_deref().is_some_and(|l| l >= name.as_str()) {
            return Err(bad("records not sorted by name"));
        }
        last = Some(name.clone());
        store.insert(name, ParamValue { shape, data });
    }
    Ok(store)
}

pub fn write_checkpoint(store: &ParamStore, path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&encode_checkpoint(store)).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<ParamStore> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}
