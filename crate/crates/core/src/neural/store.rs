//! Versioned binary parameter store: named shape-checked f64 tensors with a
//! JSON manifest written alongside by the callers that know the metadata.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"DSCMPS1\n";

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!(
                "tensor shape {shape:?} holds {n} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    pub tensors: BTreeMap<String, Tensor>,
}

impl ParamStore {
    pub fn insert(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<f64>) -> Result<()> {
        self.tensors.insert(name.into(), Tensor::new(shape, data)?);
        Ok(())
    }

    pub fn get(&self, name: &str, expect_shape: &[usize]) -> Result<&Tensor> {
        let t = self
            .tensors
            .get(name)
            .ok_or_else(|| Error::Shape(format!("missing tensor '{name}'")))?;
        if t.shape != expect_shape {
            return Err(Error::Shape(format!(
                "tensor '{name}' has shape {:?}, expected {:?}",
                t.shape, expect_shape
            )));
        }
        Ok(t)
    }
}

pub fn write_param_store(path: &Path, store: &ParamStore) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(store.tensors.len() as u32).to_le_bytes());
    for (name, t) in &store.tensors {
        let nb = name.as_bytes();
        buf.extend_from_slice(&(nb.len() as u16).to_le_bytes());
        buf.extend_from_slice(nb);
        buf.push(t.shape.len() as u8);
        for &d in &t.shape {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in &t.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::File::create(path)?.write_all(&buf)?;
    Ok(())
}

pub fn read_param_store(path: &Path) -> Result<ParamStore> {
    let mut raw = Vec::new();
    fs::File::open(path)?.read_to_end(&mut raw)?;
    let mut pos = 0usize;
    let mut take = |n: usize| -> Result<&[u8]> {
        if pos + n > raw.len() {
            return Err(Error::Shape("truncated parameter store".into()));
        }
        let s = &raw[pos..pos + n];
        pos += n;
        Ok(s)
    };
    if take(8)? != MAGIC {
        return Err(Error::Shape("bad parameter store magic".into()));
    }
    let count = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    let mut store = ParamStore::default();
    for _ in 0..count {
        let name_len = u16::from_le_bytes(take(2)?.try_into().unwrap()) as usize;
        let name = String::from_utf8(take(name_len)?.to_vec())
            .map_err(|_| Error::Shape("non-utf8 tensor name".into()))?;
        let ndim = take(1)?[0] as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize);
        }
        let n: usize = shape.iter().product();
        let bytes = take(8 * n)?;
        let data = bytes
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        store.tensors.insert(name, Tensor { shape, data });
    }
    Ok(store)
}
