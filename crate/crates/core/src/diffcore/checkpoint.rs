use std::path::Path;

use serde::{Deserialize, Serialize};

use super::hexfloat;
use super::params::{ParamEntry, ParamStore};
use crate::error::{Error, Result};

const FORMAT_TAG: &str = "splat4d-checkpoint";
const FORMAT_VERSION: u32 = 1;

/// A parameter store plus free-form metadata, stored as JSON with every
/// float written in hexadecimal so that reloading is bit-exact.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub meta: serde_json::Value,
    pub store: ParamStore,
}

#[derive(Serialize, Deserialize)]
struct EntryDoc {
    name: String,
    step: u64,
    values: Vec<String>,
    m: Vec<String>,
    v: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointDoc {
    format: String,
    version: u32,
    meta: serde_json::Value,
    entries: Vec<EntryDoc>,
}

fn encode(xs: &[f64]) -> Vec<String> {
    xs.iter().map(|&x| hexfloat::format(x)).collect()
}

fn decode(xs: &[String]) -> Result<Vec<f64>> {
    xs.iter().map(|s| hexfloat::parse(s)).collect()
}

impl Checkpoint {
    pub fn new(meta: serde_json::Value, store: ParamStore) -> Self {
        Self { meta, store }
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = CheckpointDoc {
            format: FORMAT_TAG.into(),
            version: FORMAT_VERSION,
            meta: self.meta.clone(),
            entries: self
                .store
                .entries()
                .map(|(_, e)| EntryDoc {
                    name: e.name.clone(),
                    step: e.step,
                    values: encode(&e.values),
                    m: encode(&e.m),
                    v: encode(&e.v),
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: CheckpointDoc = serde_json::from_str(text)?;
        if doc.format != FORMAT_TAG || doc.version != FORMAT_VERSION {
            return Err(Error::format(
                "checkpoint",
                format!("unsupported format {} v{}", doc.format, doc.version),
            ));
        }
        let mut store = ParamStore::new();
        for e in doc.entries {
            store.insert_entry(ParamEntry {
                values: decode(&e.values)?,
                m: decode(&e.m)?,
                v: decode(&e.v)?,
                grads: Vec::new(),
                step: e.step,
                name: e.name,
            })?;
        }
        Ok(Self {
            meta: doc.meta,
            store,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
