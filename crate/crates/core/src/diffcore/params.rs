use std::collections::HashMap;

use crate::error::{Error, Result};

/// Handle to an entry of a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// One named flat array with its gradient and Adam state.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamEntry {
    pub(crate) name: String,
    pub(crate) values: Vec<f64>,
    pub(crate) grads: Vec<f64>,
    pub(crate) m: Vec<f64>,
    pub(crate) v: Vec<f64>,
    pub(crate) step: u64,
}

impl ParamEntry {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn grads(&self) -> &[f64] {
        &self.grads
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.m
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.v
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Where a row of a resized entry comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RowPlan {
    /// Row of the current entry whose values are copied.
    pub source: usize,
    /// Start the row with zeroed optimizer moments instead of inheriting them.
    pub fresh_state: bool,
}

/// Registry of trainable arrays. Insertion order is preserved and is the
/// serialization order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    entries: Vec<ParamEntry>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, values: Vec<f64>) -> Result<ParamId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::DuplicateEntry(name));
        }
        let n = values.len();
        let id = self.entries.len();
        self.index.insert(name.clone(), id);
        self.entries.push(ParamEntry {
            name,
            values,
            grads: vec![0.0; n],
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        });
        Ok(ParamId(id))
    }

    pub(crate) fn insert_entry(&mut self, entry: ParamEntry) -> Result<ParamId> {
        let n = entry.values.len();
        if entry.m.len() != n || entry.v.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "entry `{}` has mismatched moment lengths",
                entry.name
            )));
        }
        if self.index.contains_key(&entry.name) {
            return Err(Error::DuplicateEntry(entry.name));
        }
        let id = self.entries.len();
        self.index.insert(entry.name.clone(), id);
        self.entries.push(ParamEntry {
            grads: vec![0.0; n],
            ..entry
        });
        Ok(ParamId(id))
    }

    pub fn id(&self, name: &str) -> Result<ParamId> {
        self.index
            .get(name)
            .map(|&i| ParamId(i))
            .ok_or_else(|| Error::UnknownEntry(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry(&self, id: ParamId) -> &ParamEntry {
        &self.entries[id.0]
    }

    pub fn entries(&self) -> impl Iterator<Item = (ParamId, &ParamEntry)> {
        self.entries.iter().enumerate().map(|(i, e)| (ParamId(i), e))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn values(&self, id: ParamId) -> &[f64] {
        &self.entries[id.0].values
    }

    pub fn values_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.entries[id.0].values
    }

    pub fn grads(&self, id: ParamId) -> &[f64] {
        &self.entries[id.0].grads
    }

    pub fn grads_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.entries[id.0].grads
    }

    /// Values read-only and gradients writable for the same entry.
    pub fn split_mut(&mut self, id: ParamId) -> (&[f64], &mut [f64]) {
        let e = &mut self.entries[id.0];
        (&e.values, &mut e.grads)
    }

    pub fn total_values(&self) -> usize {
        self.entries.iter().map(|e| e.values.len()).sum()
    }

    pub fn zero_grads(&mut self) {
        for e in &mut self.entries {
            e.grads.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    /// Rebuild an entry as `plan.len()` rows of width `stride`.
    pub fn reshape_rows(&mut self, id: ParamId, stride: usize, plan: &[RowPlan]) -> Result<()> {
        let e = &mut self.entries[id.0];
        if stride == 0 || e.values.len() % stride != 0 {
            return Err(Error::ShapeMismatch(format!(
                "entry `{}` of length {} is not divisible into rows of {}",
                e.name,
                e.values.len(),
                stride
            )));
        }
        let rows = e.values.len() / stride;
        if let Some(bad) = plan.iter().find(|p| p.source >= rows) {
            return Err(Error::ShapeMismatch(format!(
                "row {} out of range for `{}` with {} rows",
                bad.source, e.name, rows
            )));
        }
        let n = plan.len() * stride;
        let mut values = Vec::with_capacity(n);
        let mut m = Vec::with_capacity(n);
        let mut v = Vec::with_capacity(n);
        for p in plan {
            let r = p.source * stride..(p.source + 1) * stride;
            values.extend_from_slice(&e.values[r.clone()]);
            if p.fresh_state {
                m.extend(std::iter::repeat_n(0.0, stride));
                v.extend(std::iter::repeat_n(0.0, stride));
            } else {
                m.extend_from_slice(&e.m[r.clone()]);
                v.extend_from_slice(&e.v[r]);
            }
        }
        e.values = values;
        e.m = m;
        e.v = v;
        e.grads = vec![0.0; n];
        Ok(())
    }

    /// Order-sensitive digest of all values, used to assert freeze contracts.
    pub fn digest(&self, ids: &[ParamId]) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for &id in ids {
            let e = &self.entries[id.0];
            h.update(e.name.as_bytes());
            for v in &e.values {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    pub(crate) fn entries_mut(&mut self) -> &mut [ParamEntry] {
        &mut self.entries
    }
}
