//! Class registry: the label space (base, novel and synthetic proxy classes)
//! together with each class's text embedding, plus its JSON file format.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embedding::{check_finite, l2_norm, l2_normalize, Embedding, UNIT_TOL};
use crate::error::{Error, Result};
use crate::jsonfmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    Base,
    Novel,
    Proxy,
}

impl Group {
    pub fn as_str(self) -> &'static str {
        match self {
            Group::Base => "base",
            Group::Novel => "novel",
            Group::Proxy => "proxy",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassRecord {
    pub id: u32,
    pub name: String,
    pub group: Group,
    pub text_embedding: Embedding,
}

/// An immutable, validated set of classes sharing one embedding dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassRegistry {
    dimension: usize,
    records: Vec<ClassRecord>,
    index: HashMap<u32, usize>,
}

impl ClassRegistry {
    pub fn new(dimension: usize, records: Vec<ClassRecord>) -> Result<Self> {
        if dimension < 2 {
            return Err(Error::Schema(format!("dimension must be >= 2, got {dimension}")));
        }
        let mut index = HashMap::with_capacity(records.len());
        for (pos, rec) in records.iter().enumerate() {
            if rec.text_embedding.dim() != dimension {
                return Err(Error::Schema(format!(
                    "class {} has embedding length {}, registry dimension is {dimension}",
                    rec.id,
                    rec.text_embedding.dim()
                )));
            }
            if !rec.text_embedding.is_normalized() {
                return Err(Error::Schema(format!(
                    "class {} text embedding is not normalized",
                    rec.id
                )));
            }
            if index.insert(rec.id, pos).is_some() {
                return Err(Error::Schema(format!("duplicate class id {}", rec.id)));
            }
        }
        Ok(Self {
            dimension,
            records,
            index,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn records(&self) -> &[ClassRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: u32) -> Option<&ClassRecord> {
        self.index.get(&id).map(|&p| &self.records[p])
    }

    /// Row index of `id` in the classifier matrix.
    pub fn position(&self, id: u32) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn text(&self, id: u32) -> Result<&Embedding> {
        self.get(id)
            .map(|r| &r.text_embedding)
            .ok_or(Error::UnknownClass(id))
    }

    pub fn in_group(&self, group: Group) -> impl Iterator<Item = &ClassRecord> + '_ {
        self.records.iter().filter(move |r| r.group == group)
    }

    pub fn ids_in_group(&self, group: Group) -> Vec<u32> {
        self.in_group(group).map(|r| r.id).collect()
    }

    /// Registry restricted to one group, preserving order.
    pub fn subset(&self, group: Group) -> ClassRegistry {
        let records: Vec<_> = self.in_group(group).cloned().collect();
        ClassRegistry::new(self.dimension, records).expect("subset of a valid registry")
    }

    /// Classifier weight rows, one unit-norm row per record.
    pub fn classifier_rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.records.iter().map(|r| r.text_embedding.as_slice())
    }

    pub fn to_json(&self) -> String {
        let mut out = String::new();
        let _ = write!(out, "{{\"dimension\":{},\"classes\":[", self.dimension);
        for (k, rec) in self.records.iter().enumerate() {
            if k > 0 {
                out.push(',');
            }
            let _ = write!(
                out,
                "\n{{\"id\":{},\"name\":{},\"group\":\"{}\",\"embedding\":{}}}",
                rec.id,
                jsonfmt::string(&rec.name),
                rec.group.as_str(),
                jsonfmt::array(&rec.text_embedding)
            );
        }
        out.push_str("\n]}\n");
        out
    }

    /// Parses the registry JSON format. Embeddings that are not unit length
    /// are normalized; the number of such rows is returned alongside.
    pub fn from_json(text: &str) -> Result<(ClassRegistry, usize)> {
        let file: RegistryFile =
            serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        let mut renormalized = 0;
        let mut records = Vec::with_capacity(file.classes.len());
        for entry in file.classes {
            if entry.embedding.len() != file.dimension {
                return Err(Error::Schema(format!(
                    "class {} has embedding length {}, registry dimension is {}",
                    entry.id,
                    entry.embedding.len(),
                    file.dimension
                )));
            }
            check_finite(&entry.embedding, "registry embedding")
                .map_err(|e| Error::Schema(e.to_string()))?;
            let text_embedding = if (l2_norm(&entry.embedding) - 1.0).abs() <= UNIT_TOL {
                Embedding::unit(entry.embedding)?
            } else {
                renormalized += 1;
                l2_normalize(&entry.embedding).map_err(|e| {
                    Error::Schema(format!("class {}: {e}", entry.id))
                })?
            };
            records.push(ClassRecord {
                id: entry.id,
                name: entry.name,
                group: entry.group,
                text_embedding,
            });
        }
        Ok((ClassRegistry::new(file.dimension, records)?, renormalized))
    }
}

#[derive(Deserialize)]
struct RegistryFile {
    dimension: usize,
    classes: Vec<ClassEntry>,
}

#[derive(Deserialize)]
struct ClassEntry {
    id: u32,
    name: String,
    group: Group,
    embedding: Vec<f64>,
}

pub fn load_registry(path: impl AsRef<Path>) -> Result<ClassRegistry> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let (registry, renormalized) = ClassRegistry::from_json(&text)?;
    if renormalized > 0 {
        log::warn!(
            "{}: normalized {renormalized} embedding(s) that were not unit length",
            path.display()
        );
    }
    Ok(registry)
}

pub fn save_registry(registry: &ClassRegistry, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, registry.to_json()).map_err(|e| Error::io(path, e))
}
