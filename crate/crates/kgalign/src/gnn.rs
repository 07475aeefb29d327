//! Relation-aware GNN building blocks: learnable parameters, cosine node
//! attention, partitioned relation attention, the pair classifier, and the
//! traditional-attention ablation. The per-graph layer sweep lives in
//! [`crate::forward`].

use crate::error::{KgError, Result};
use crate::kg::RelationPartition;
use crate::tape::{Tape, Var};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::path::Path;

pub const N_LAYERS: usize = 2;
pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Clone, Debug)]
pub struct ModelConfig {
    pub feature_dim: usize,
    pub model_dim: usize,
    pub epsilon: f64,
    /// divide the aggregation mean by |R| instead of the present count
    pub strict_mean_denominator: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            feature_dim: 100,
            model_dim: 64,
            epsilon: 0.3,
            strict_mean_denominator: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LayerParams {
    /// neighbor transform per relation, d x d
    pub w_rel: Vec<Array2<f64>>,
    /// self transform per node type, d x d
    pub w_type: BTreeMap<String, Array2<f64>>,
    /// output projection mapping the concatenation back to width d, d x 2d
    pub w_out: Array2<f64>,
    /// traditional-attention vectors per relation, 2d x 1 (ablation only)
    pub w_attn: Vec<Array2<f64>>,
}

#[derive(Clone, Debug)]
pub struct ClassifierParams {
    pub w1: Array2<f64>,
    pub b1: Array2<f64>,
    pub w2: Array2<f64>,
    pub b2: Array2<f64>,
}

/// All learnable tensors. `W_r` and `W_t` are shared across the two KGs of
/// a pair since both are aligned to one schema.
#[derive(Debug, Clone)]
pub struct ModelParams {
    pub relations: Vec<String>,
    pub types: Vec<String>,
    pub config: ModelConfig,
    /// aggregation transform per relation, d x feature_dim
    pub agg_w: Vec<Array2<f64>>,
    /// literal input projection, d x feature_dim
    pub input_proj: Array2<f64>,
    pub layers: Vec<LayerParams>,
    pub classifier: ClassifierParams,
}

/// Init gain of the attribute-aggregation transforms. The candidate
/// correspondence softmax and the consistency gates compare squared
/// distances between aggregated representations; at plain fan-in scale those
/// distances are so small that the gates stay pinned near 1 and the
/// correspondence stays near-uniform, which silently disables masking.
pub const AGG_INIT_GAIN: f64 = 8.0;

/// Init gain of the GNN-layer transforms. Two ReLU layers at plain fan-in
/// scale shrink embeddings to the point where the classifier's bias terms
/// dominate its weight gradients and training collapses to the base rate.
pub const HIDDEN_INIT_GAIN: f64 = 4.0;

fn uniform_fan_in(rng: &mut ChaCha8Rng, rows: usize, cols: usize, gain: f64) -> Array2<f64> {
    let bound = gain / (cols as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-bound..bound))
}

impl ModelParams {
    /// Fresh parameters, uniform scaled by fan-in, deterministic in `seed`.
    pub fn init(
        schema: &RelationPartition,
        types: &[String],
        config: ModelConfig,
        seed: u64,
    ) -> Result<Self> {
        schema.validate_epsilon(config.epsilon)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.model_dim;
        let f = config.feature_dim;
        let n_rel = schema.len();
        let mut sorted_types: Vec<String> = types.to_vec();
        sorted_types.sort();
        sorted_types.dedup();
        let agg_w = (0..n_rel)
            .map(|_| uniform_fan_in(&mut rng, d, f, AGG_INIT_GAIN))
            .collect();
        let input_proj = uniform_fan_in(&mut rng, d, f, HIDDEN_INIT_GAIN);
        let layers = (0..N_LAYERS)
            .map(|_| LayerParams {
                w_rel: (0..n_rel)
                    .map(|_| uniform_fan_in(&mut rng, d, d, HIDDEN_INIT_GAIN))
                    .collect(),
                w_type: sorted_types
                    .iter()
                    .map(|t| (t.clone(), uniform_fan_in(&mut rng, d, d, HIDDEN_INIT_GAIN)))
                    .collect(),
                w_out: uniform_fan_in(&mut rng, d, 2 * d, HIDDEN_INIT_GAIN),
                w_attn: (0..n_rel)
                    .map(|_| uniform_fan_in(&mut rng, 2 * d, 1, 1.0))
                    .collect(),
            })
            .collect();
        let classifier = ClassifierParams {
            w1: uniform_fan_in(&mut rng, d, d, 1.0),
            // small positive bias keeps fresh ReLU units off the kink
            b1: Array2::from_elem((d, 1), 0.01),
            w2: uniform_fan_in(&mut rng, 1, d, 1.0),
            b2: Array2::zeros((1, 1)),
        };
        Ok(ModelParams {
            relations: schema.names().to_vec(),
            types: sorted_types,
            config,
            agg_w,
            input_proj,
            layers,
            classifier,
        })
    }

    /// Named views of every tensor, in a stable order.
    pub fn tensors(&self) -> Vec<(String, &Array2<f64>)> {
        let mut out = Vec::new();
        for (r, w) in self.agg_w.iter().enumerate() {
            out.push((format!("agg_w.{}", self.relations[r]), w));
        }
        out.push(("input_proj".to_string(), &self.input_proj));
        for (l, layer) in self.layers.iter().enumerate() {
            for (r, w) in layer.w_rel.iter().enumerate() {
                out.push((format!("layer{l}.w_rel.{}", self.relations[r]), w));
            }
            for (t, w) in &layer.w_type {
                out.push((format!("layer{l}.w_type.{t}"), w));
            }
            out.push((format!("layer{l}.w_out"), &layer.w_out));
            for (r, w) in layer.w_attn.iter().enumerate() {
                out.push((format!("layer{l}.w_attn.{}", self.relations[r]), w));
            }
        }
        out.push(("clf.w1".to_string(), &self.classifier.w1));
        out.push(("clf.b1".to_string(), &self.classifier.b1));
        out.push(("clf.w2".to_string(), &self.classifier.w2));
        out.push(("clf.b2".to_string(), &self.classifier.b2));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Array2<f64>)> {
        let mut out: Vec<(String, &mut Array2<f64>)> = Vec::new();
        let relations = self.relations.clone();
        for (r, w) in self.agg_w.iter_mut().enumerate() {
            out.push((format!("agg_w.{}", relations[r]), w));
        }
        out.push(("input_proj".to_string(), &mut self.input_proj));
        for (l, layer) in self.layers.iter_mut().enumerate() {
            for (r, w) in layer.w_rel.iter_mut().enumerate() {
                out.push((format!("layer{l}.w_rel.{}", relations[r]), w));
            }
            for (t, w) in layer.w_type.iter_mut() {
                out.push((format!("layer{l}.w_type.{t}"), w));
            }
            out.push((format!("layer{l}.w_out"), &mut layer.w_out));
            for (r, w) in layer.w_attn.iter_mut().enumerate() {
                out.push((format!("layer{l}.w_attn.{}", relations[r]), w));
            }
        }
        out.push(("clf.w1".to_string(), &mut self.classifier.w1));
        out.push(("clf.b1".to_string(), &mut self.classifier.b1));
        out.push(("clf.w2".to_string(), &mut self.classifier.w2));
        out.push(("clf.b2".to_string(), &mut self.classifier.b2));
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// Writes a versioned textual checkpoint. Values are stored as IEEE 754
    /// bit patterns so save/load round-trips bitwise.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        out.push_str("kgalign-checkpoint v1\n");
        out.push_str(&format!("relations {}\n", self.relations.join(",")));
        out.push_str(&format!("types {}\n", self.types.join(",")));
        out.push_str(&format!(
            "dims feature={} model={}\n",
            self.config.feature_dim, self.config.model_dim
        ));
        out.push_str(&format!(
            "epsilon {:016x}\n",
            self.config.epsilon.to_bits()
        ));
        out.push_str(&format!(
            "strict_mean {}\n",
            self.config.strict_mean_denominator
        ));
        for (name, tensor) in self.tensors() {
            out.push_str(&format!(
                "tensor {name} {} {}\n",
                tensor.nrows(),
                tensor.ncols()
            ));
            for row in tensor.rows() {
                let cells: Vec<String> =
                    row.iter().map(|v| format!("{:016x}", v.to_bits())).collect();
                out.push_str(&cells.join(" "));
                out.push('\n');
            }
        }
        std::fs::write(path, out).map_err(|e| KgError::io(path.display().to_string(), e))
    }

    pub fn load(path: &Path, schema: &RelationPartition) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| KgError::io(path.display().to_string(), e))?;
        let mut lines = text.lines();
        let header = lines.next().unwrap_or("");
        if header != "kgalign-checkpoint v1" {
            return Err(KgError::Checkpoint(format!(
                "unsupported checkpoint header `{header}`"
            )));
        }
        let mut relations = Vec::new();
        let mut types = Vec::new();
        let mut config = ModelConfig::default();
        for line in lines.by_ref() {
            if line.starts_with("tensor ") {
                // rewind handled below by collecting remaining lines
                return Self::load_body(line, lines, relations, types, config, schema);
            }
            let mut parts = line.splitn(2, ' ');
            let key = parts.next().unwrap_or("");
            let value = parts.next().unwrap_or("");
            match key {
                "relations" => {
                    relations = value.split(',').map(str::to_string).collect();
                    if relations != schema.names() {
                        return Err(KgError::Checkpoint(format!(
                            "relation sets differ: checkpoint has {:?}, schema has {:?}",
                            relations,
                            schema.names()
                        )));
                    }
                }
                "types" => types = value.split(',').map(str::to_string).collect(),
                "dims" => {
                    for field in value.split_whitespace() {
                        if let Some(v) = field.strip_prefix("feature=") {
                            config.feature_dim = v.parse().map_err(|_| {
                                KgError::Checkpoint(format!("bad feature dim `{v}`"))
                            })?;
                        } else if let Some(v) = field.strip_prefix("model=") {
                            config.model_dim = v.parse().map_err(|_| {
                                KgError::Checkpoint(format!("bad model dim `{v}`"))
                            })?;
                        }
                    }
                }
                "epsilon" => {
                    let bits = u64::from_str_radix(value, 16)
                        .map_err(|_| KgError::Checkpoint(format!("bad epsilon `{value}`")))?;
                    config.epsilon = f64::from_bits(bits);
                }
                "strict_mean" => {
                    config.strict_mean_denominator = value == "true";
                }
                _ => {
                    return Err(KgError::Checkpoint(format!("unknown header line `{line}`")))
                }
            }
        }
        Err(KgError::Checkpoint("checkpoint holds no tensors".into()))
    }

    fn load_body<'a>(
        first_tensor_line: &'a str,
        lines: impl Iterator<Item = &'a str>,
        relations: Vec<String>,
        types: Vec<String>,
        config: ModelConfig,
        schema: &RelationPartition,
    ) -> Result<Self> {
        let mut params = ModelParams::init(schema, &types, config, 0)?;
        if params.relations != relations {
            return Err(KgError::Checkpoint("relation order mismatch".into()));
        }
        let mut tensors: BTreeMap<String, Array2<f64>> = BTreeMap::new();
        let parse_header = |line: &str| -> Result<(String, usize, usize)> {
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 4 {
                return Err(KgError::Checkpoint(format!("bad tensor header `{line}`")));
            }
            let rows = fields[2]
                .parse()
                .map_err(|_| KgError::Checkpoint(format!("bad rows in `{line}`")))?;
            let cols = fields[3]
                .parse()
                .map_err(|_| KgError::Checkpoint(format!("bad cols in `{line}`")))?;
            Ok((fields[1].to_string(), rows, cols))
        };
        let finish = |tensors: &mut BTreeMap<String, Array2<f64>>,
                      cur: (String, usize, usize, Vec<f64>)|
         -> Result<()> {
            let (name, rows, cols, data) = cur;
            if data.len() != rows * cols {
                return Err(KgError::Checkpoint(format!(
                    "tensor {name}: expected {} values, got {}",
                    rows * cols,
                    data.len()
                )));
            }
            tensors.insert(
                name,
                Array2::from_shape_vec((rows, cols), data)
                    .map_err(|e| KgError::Checkpoint(e.to_string()))?,
            );
            Ok(())
        };
        let (name, rows, cols) = parse_header(first_tensor_line)?;
        let mut current: Option<(String, usize, usize, Vec<f64>)> =
            Some((name, rows, cols, Vec::new()));
        for line in lines {
            if line.is_empty() {
                continue;
            }
            if line.starts_with("tensor ") {
                if let Some(cur) = current.take() {
                    finish(&mut tensors, cur)?;
                }
                let (name, rows, cols) = parse_header(line)?;
                current = Some((name, rows, cols, Vec::new()));
            } else if let Some((_, _, _, data)) = current.as_mut() {
                for cell in line.split_whitespace() {
                    let bits = u64::from_str_radix(cell, 16)
                        .map_err(|_| KgError::Checkpoint(format!("bad value `{cell}`")))?;
                    data.push(f64::from_bits(bits));
                }
            }
        }
        if let Some(cur) = current.take() {
            finish(&mut tensors, cur)?;
        }
        for (name, slot) in params.tensors_mut() {
            let tensor = tensors.remove(&name).ok_or_else(|| {
                KgError::Checkpoint(format!("checkpoint missing tensor {name}"))
            })?;
            if tensor.raw_dim() != slot.raw_dim() {
                return Err(KgError::Checkpoint(format!(
                    "tensor {name}: shape {:?} differs from expected {:?}",
                    tensor.shape(),
                    slot.shape()
                )));
            }
            *slot = tensor;
        }
        if let Some(extra) = tensors.keys().next() {
            return Err(KgError::Checkpoint(format!("unexpected tensor {extra}")));
        }
        Ok(params)
    }
}

/// Tape handles for every parameter tensor, in `tensors()` order.
pub struct ParamVars {
    pub agg_w: Vec<Var>,
    pub input_proj: Var,
    pub layers: Vec<LayerVars>,
    pub clf_w1: Var,
    pub clf_b1: Var,
    pub clf_w2: Var,
    pub clf_b2: Var,
}

pub struct LayerVars {
    pub w_rel: Vec<Var>,
    pub w_type: BTreeMap<String, Var>,
    pub w_out: Var,
    pub w_attn: Vec<Var>,
}

impl ParamVars {
    pub fn insert(tape: &mut Tape, params: &ModelParams) -> Self {
        ParamVars {
            agg_w: params.agg_w.iter().map(|w| tape.leaf(w.clone())).collect(),
            input_proj: tape.leaf(params.input_proj.clone()),
            layers: params
                .layers
                .iter()
                .map(|l| LayerVars {
                    w_rel: l.w_rel.iter().map(|w| tape.leaf(w.clone())).collect(),
                    w_type: l
                        .w_type
                        .iter()
                        .map(|(t, w)| (t.clone(), tape.leaf(w.clone())))
                        .collect(),
                    w_out: tape.leaf(l.w_out.clone()),
                    w_attn: l.w_attn.iter().map(|w| tape.leaf(w.clone())).collect(),
                })
                .collect(),
            clf_w1: tape.leaf(params.classifier.w1.clone()),
            clf_b1: tape.leaf(params.classifier.b1.clone()),
            clf_w2: tape.leaf(params.classifier.w2.clone()),
            clf_b2: tape.leaf(params.classifier.b2.clone()),
        }
    }

    /// Vars in the same order as `ModelParams::tensors()`.
    pub fn ordered(&self, params: &ModelParams) -> Vec<Var> {
        let mut out = Vec::new();
        out.extend(self.agg_w.iter().copied());
        out.push(self.input_proj);
        for layer in &self.layers {
            out.extend(layer.w_rel.iter().copied());
            out.extend(layer.w_type.values().copied());
            out.push(layer.w_out);
            out.extend(layer.w_attn.iter().copied());
        }
        out.push(self.clf_w1);
        out.push(self.clf_b1);
        out.push(self.clf_w2);
        out.push(self.clf_b2);
        debug_assert_eq!(out.len(), params.tensors().len());
        out
    }
}

/// Node-level attention: cosine similarity between the transformed self
/// and neighbor vectors. Zero when either transformed vector vanishes.
pub fn node_attention(tape: &mut Tape, h_i: Var, h_j: Var, w_t: Var, w_r: Var) -> Var {
    let ti = tape.matmul(w_t, h_i);
    let tj = tape.matmul(w_r, h_j);
    tape.cosine(ti, tj)
}

/// Relation-level attention: a softmax within each relation group (profiling
/// vs non-profiling), scaled by `1/2 + delta` so the groups receive total
/// masses `rho + epsilon` and `1 - rho - epsilon`.
///
/// `s_means` holds the mean node-attention per relation for relations with a
/// non-empty neighborhood. Relations absent from `s_means` get no weight;
/// when an entity lacks one whole group the remaining group keeps its own
/// mass without renormalization.
pub fn partitioned_attention(
    tape: &mut Tape,
    partition: &RelationPartition,
    s_means: &BTreeMap<usize, Var>,
    epsilon: f64,
) -> Result<BTreeMap<usize, Var>> {
    partition.validate_epsilon(epsilon)?;
    let rho = partition.rho();
    let mut betas = BTreeMap::new();
    for profiling_group in [true, false] {
        let members: Vec<usize> = s_means
            .keys()
            .copied()
            .filter(|&r| partition.is_profiling(r) == profiling_group)
            .collect();
        if members.is_empty() {
            continue;
        }
        let delta = if profiling_group {
            rho + epsilon - 0.5
        } else {
            -rho - epsilon + 0.5
        };
        let scores: Vec<Var> = members.iter().map(|r| s_means[r]).collect();
        let gathered = tape.gather(&scores);
        let soft = tape.softmax(gathered);
        for (k, &r) in members.iter().enumerate() {
            let row = tape.row(soft, k);
            betas.insert(r, tape.scale_const(row, 0.5 + delta));
        }
    }
    Ok(betas)
}

/// Two-layer MLP over the elementwise absolute embedding discrepancy;
/// output is a probability in (0, 1), symmetric in its arguments.
pub fn classifier_forward(tape: &mut Tape, h_src: Var, h_tgt: Var, params: &ParamVars) -> Var {
    let diff = tape.sub(h_src, h_tgt);
    let disc = tape.abs(diff);
    let z1 = tape.matmul(params.clf_w1, disc);
    let z1 = tape.add(z1, params.clf_b1);
    let z1 = tape.relu(z1);
    let logit = tape.matmul(params.clf_w2, z1);
    let logit = tape.add(logit, params.clf_b2);
    tape.sigmoid(logit)
}

/// Traditional attention ablation: one softmax over every `(relation,
/// neighbor)` message of an entity, scored by
/// `leaky_relu(w_r^T [h_i || W_r h_j])`.
/// `messages[k] = (relation, transformed neighbor message)`.
pub fn traditional_attention(
    tape: &mut Tape,
    h_i: Var,
    messages: &[(usize, Var)],
    w_attn: &[Var],
) -> Vec<Var> {
    let mut scores = Vec::with_capacity(messages.len());
    for &(r, msg) in messages {
        let cat = tape.concat_rows(h_i, msg);
        // w_attn is a column; the scalar product is sum(w ⊙ cat)
        let prod = tape.mul_elem(w_attn[r], cat);
        let s = tape.sum(prod);
        scores.push(tape.leaky_relu(s, LEAKY_SLOPE));
    }
    let gathered = tape.gather(&scores);
    let soft = tape.softmax(gathered);
    (0..messages.len()).map(|k| tape.row(soft, k)).collect()
}
