//! Initial dense features for literal nodes and the initialization policy
//! for ID-like entity nodes.
//!
//! The default embedder hashes character trigrams of the normalized literal
//! text into seeded basis vectors; a loader accepts externally produced
//! vectors instead (one line per node: node-id followed by the components).

use crate::error::{KgError, Result};
use crate::kg::{KnowledgeGraph, NodeId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;
use std::path::Path;

pub const DEFAULT_FEATURE_DIM: usize = 100;

/// node -> dense real vector of fixed dimension.
#[derive(Debug, Clone)]
pub struct FeatureTable {
    pub dim: usize,
    vectors: HashMap<NodeId, Vec<f64>>,
}

impl FeatureTable {
    pub fn new(dim: usize) -> Self {
        FeatureTable {
            dim,
            vectors: HashMap::new(),
        }
    }

    pub fn insert(&mut self, id: NodeId, v: Vec<f64>) -> Result<()> {
        if v.len() != self.dim {
            return Err(KgError::Shape(format!(
                "feature vector for node {id} has length {}, expected {}",
                v.len(),
                self.dim
            )));
        }
        self.vectors.insert(id, v);
        Ok(())
    }

    pub fn get(&self, id: NodeId) -> Option<&[f64]> {
        self.vectors.get(&id).map(|v| v.as_slice())
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

/// 64-bit FNV-1a. Stable across platforms so embeddings are reproducible.
fn fnv1a(bytes: &[u8], seed: u64) -> u64 {
    let mut h = 0xcbf29ce484222325u64 ^ seed.wrapping_mul(0x9e3779b97f4a7c15);
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

fn trigram_basis(trigram: &[char], dim: usize, seed: u64) -> Vec<f64> {
    let s: String = trigram.iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(s.as_bytes(), seed));
    (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// L2-normalized mean of hashed character-trigram basis vectors.
/// Deterministic in `(text, dim, seed)`; empty text maps to the zero vector.
pub fn hash_embed(text: &str, dim: usize, seed: u64) -> Vec<f64> {
    let chars: Vec<char> = text.chars().collect();
    if chars.is_empty() {
        return vec![0.0; dim];
    }
    let mut acc = vec![0.0; dim];
    let mut count = 0usize;
    if chars.len() < 3 {
        let basis = trigram_basis(&chars, dim, seed);
        for (a, b) in acc.iter_mut().zip(&basis) {
            *a += b;
        }
        count = 1;
    } else {
        for w in chars.windows(3) {
            let basis = trigram_basis(w, dim, seed);
            for (a, b) in acc.iter_mut().zip(&basis) {
                *a += b;
            }
            count += 1;
        }
    }
    for a in acc.iter_mut() {
        *a /= count as f64;
    }
    let norm = acc.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for a in acc.iter_mut() {
            *a /= norm;
        }
    }
    acc
}

/// Builds the layer-0 feature table for a graph: literal nodes take their
/// embedded text, alignment-target entity nodes get zero placeholders so
/// that nothing leaks from their randomly assigned identifiers.
pub fn init_features(kg: &KnowledgeGraph, dim: usize, seed: u64) -> FeatureTable {
    let mut table = FeatureTable::new(dim);
    for id in kg.node_ids() {
        let v = match kg.literal_text(id) {
            Some(text) => hash_embed(text, dim, seed),
            None => vec![0.0; dim],
        };
        table.vectors.insert(id, v);
    }
    table
}

/// Loads pretrained vectors (`node-id c0 c1 ... c{dim-1}` per line) and
/// fills entity placeholders with zeros. Errors if any literal node of the
/// graph is missing from the file.
pub fn load_pretrained(kg: &KnowledgeGraph, path: &Path, dim: usize) -> Result<FeatureTable> {
    let text =
        std::fs::read_to_string(path).map_err(|e| KgError::io(path.display().to_string(), e))?;
    let mut table = FeatureTable::new(dim);
    for (lineno, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let name = fields.next().ok_or_else(|| KgError::Parse {
            path: path.display().to_string(),
            line: lineno + 1,
            msg: "empty record".into(),
        })?;
        let values: Vec<f64> = fields
            .map(|f| {
                f.parse::<f64>().map_err(|e| KgError::Parse {
                    path: path.display().to_string(),
                    line: lineno + 1,
                    msg: format!("bad float `{f}`: {e}"),
                })
            })
            .collect::<Result<_>>()?;
        if values.len() != dim {
            return Err(KgError::Parse {
                path: path.display().to_string(),
                line: lineno + 1,
                msg: format!("expected {dim} components, got {}", values.len()),
            });
        }
        if let Some(id) = kg.lookup(name) {
            table.insert(id, values)?;
        }
    }
    let mut missing = Vec::new();
    for id in kg.literal_nodes() {
        if table.get(id).is_none() {
            missing.push(kg.node_name(id).to_string());
        }
    }
    if !missing.is_empty() {
        return Err(KgError::Coverage(missing.join(", ")));
    }
    for id in kg.entity_nodes() {
        if table.get(id).is_none() {
            table.vectors.insert(id, vec![0.0; dim]);
        }
    }
    Ok(table)
}
