//! End-to-end differentiable forward pass over a graph pair: layer-0
//! initialization (masked attribute aggregation for entities, projected
//! text features for literals), the two relation-aware GNN layers, and the
//! batched classification loss. Every run builds a fresh tape.

use crate::aggregation::{
    build_entity_stack, candidate_correspondence, mask_gate, masked_entity_repr, EntityStack,
    MaskMode,
};
use crate::error::{KgError, Result};
use crate::features::FeatureTable;
use crate::gnn::{
    classifier_forward, partitioned_attention, traditional_attention, LayerVars, ModelParams,
    ParamVars,
};
use crate::kg::{AlignmentPair, KGPair, KnowledgeGraph, NodeId, Side};
use crate::tape::{Tape, Var};
use std::collections::HashMap;

/// How relation-level weights are formed inside a GNN layer.
#[derive(Copy, Clone, Eq, PartialEq, Debug)]
pub enum AttentionKind {
    /// group-constrained softmax over relations (the full model)
    Partitioned,
    /// ablation: one flat softmax over every (relation, neighbor) message
    Traditional,
}

#[derive(Copy, Clone, Debug)]
pub struct ForwardOptions {
    pub mask_mode: MaskMode,
    pub attention: AttentionKind,
    /// when false, entities start from zero vectors instead of the
    /// aggregated attribute representation
    pub use_aggregation: bool,
    pub epsilon: f64,
    pub strict_mean_denominator: bool,
}

impl ForwardOptions {
    pub fn full(epsilon: f64) -> Self {
        ForwardOptions {
            mask_mode: MaskMode::Masked,
            attention: AttentionKind::Partitioned,
            use_aggregation: true,
            epsilon,
            strict_mean_denominator: false,
        }
    }
}

/// Layer-0 representations for one graph side, keyed by node.
pub type NodeVars = HashMap<NodeId, Var>;

fn entity_stacks(
    tape: &mut Tape,
    pair: &KGPair,
    side: Side,
    vars: &ParamVars,
    features: &FeatureTable,
    model_dim: usize,
) -> HashMap<NodeId, EntityStack> {
    let kg = pair.graph(side);
    let mut stacks = HashMap::new();
    for i in kg.entity_nodes() {
        let stack = build_entity_stack(tape, pair, side, i, &vars.agg_w, features, model_dim);
        stacks.insert(i, stack);
    }
    stacks
}

fn aggregate_side(
    tape: &mut Tape,
    pair: &KGPair,
    side: Side,
    own_stacks: &HashMap<NodeId, EntityStack>,
    other_stacks: &HashMap<NodeId, EntityStack>,
    opts: &ForwardOptions,
    model_dim: usize,
) -> NodeVars {
    let kg = pair.graph(side);
    let n_rel = pair.schema().len();
    let mut h0 = HashMap::new();
    for i in kg.entity_nodes() {
        let stack = &own_stacks[&i];
        let gates: Vec<Option<Var>> = match opts.mask_mode {
            MaskMode::Mean => vec![None; n_rel],
            MaskMode::Masked => {
                let candidates = pair.candidate_set(side, i);
                let cand_stacks: Vec<&EntityStack> =
                    candidates.iter().map(|c| &other_stacks[c]).collect();
                match candidate_correspondence(tape, stack, &cand_stacks) {
                    None => vec![None; n_rel],
                    Some(correspondence) => (0..n_rel)
                        .map(|r| {
                            if !stack.present[r] {
                                return None;
                            }
                            let cand_phis: Vec<Var> =
                                cand_stacks.iter().map(|s| s.phis[r]).collect();
                            Some(mask_gate(tape, stack.phis[r], &cand_phis, &correspondence))
                        })
                        .collect(),
                }
            }
        };
        let h = masked_entity_repr(tape, stack, &gates, opts.strict_mean_denominator, model_dim);
        h0.insert(i, h);
    }
    h0
}

/// Layer-0 representations for both sides. Entities take the (optionally
/// masked) aggregated attribute representation; literals take the projected
/// text feature.
pub fn layer0(
    tape: &mut Tape,
    pair: &KGPair,
    feats_src: &FeatureTable,
    feats_tgt: &FeatureTable,
    params: &ModelParams,
    vars: &ParamVars,
    opts: &ForwardOptions,
) -> Result<(NodeVars, NodeVars)> {
    let d = params.config.model_dim;
    let mut h_src: NodeVars;
    let mut h_tgt: NodeVars;
    if opts.use_aggregation {
        let stacks_src = entity_stacks(tape, pair, Side::Source, vars, feats_src, d);
        let stacks_tgt = entity_stacks(tape, pair, Side::Target, vars, feats_tgt, d);
        h_src = aggregate_side(tape, pair, Side::Source, &stacks_src, &stacks_tgt, opts, d);
        h_tgt = aggregate_side(tape, pair, Side::Target, &stacks_tgt, &stacks_src, opts, d);
    } else {
        h_src = HashMap::new();
        h_tgt = HashMap::new();
        for i in pair.source.entity_nodes() {
            let z = tape.zeros(d, 1);
            h_src.insert(i, z);
        }
        for i in pair.target.entity_nodes() {
            let z = tape.zeros(d, 1);
            h_tgt.insert(i, z);
        }
    }
    for (kg, feats, h) in [
        (&pair.source, feats_src, &mut h_src),
        (&pair.target, feats_tgt, &mut h_tgt),
    ] {
        for j in kg.literal_nodes() {
            let feature = feats.get(j).ok_or_else(|| {
                KgError::Coverage(format!("node {} lacks a feature vector", kg.node_name(j)))
            })?;
            let leaf = tape.leaf_col(feature);
            let proj = tape.matmul(vars.input_proj, leaf);
            h.insert(j, proj);
        }
    }
    Ok((h_src, h_tgt))
}

/// Undirected typed neighborhood of a node: `(relation, neighbor)` pairs
/// from both edge directions, deduplicated, in first-occurrence order.
fn neighborhood(kg: &KnowledgeGraph, i: NodeId) -> Vec<(usize, NodeId)> {
    let mut seen = Vec::new();
    for &(r, j) in kg.out_edges(i).iter().chain(kg.in_edges(i)) {
        if !seen.contains(&(r, j)) {
            seen.push((r, j));
        }
    }
    seen
}

/// One GNN layer over one graph: `h'_i = relu(W_o [W_t h_i || z_i])` where
/// `z_i` combines transformed neighbor messages under the configured
/// attention. Nodes without neighbors receive a zero message.
pub fn layer_sweep(
    tape: &mut Tape,
    kg: &KnowledgeGraph,
    h: &NodeVars,
    layer: &LayerVars,
    opts: &ForwardOptions,
) -> Result<NodeVars> {
    let d = tape.value(layer.w_out).nrows();
    let mut messages: HashMap<(usize, NodeId), Var> = HashMap::new();
    let mut next = HashMap::new();
    for i in kg.node_ids() {
        let type_name = kg.node_type(i);
        let w_type = *layer.w_type.get(type_name).ok_or_else(|| {
            KgError::Config(format!("no self-transform for node type `{type_name}`"))
        })?;
        let t_self = tape.matmul(w_type, h[&i]);
        let nbrs = neighborhood(kg, i);
        let z = if nbrs.is_empty() {
            tape.zeros(d, 1)
        } else {
            let msgs: Vec<(usize, Var)> = nbrs
                .iter()
                .map(|&(r, j)| {
                    let m = match messages.get(&(r, j)) {
                        Some(&m) => m,
                        None => {
                            let m = tape.matmul(layer.w_rel[r], h[&j]);
                            messages.insert((r, j), m);
                            m
                        }
                    };
                    (r, m)
                })
                .collect();
            match opts.attention {
                AttentionKind::Partitioned => {
                    let mut per_rel: std::collections::BTreeMap<usize, Vec<Var>> =
                        std::collections::BTreeMap::new();
                    let mut sims = Vec::with_capacity(msgs.len());
                    for &(r, m) in &msgs {
                        let s = tape.cosine(t_self, m);
                        per_rel.entry(r).or_default().push(s);
                        sims.push(s);
                    }
                    let mut s_means = std::collections::BTreeMap::new();
                    for (&r, group) in &per_rel {
                        s_means.insert(r, tape.mean_of(group));
                    }
                    let betas =
                        partitioned_attention(tape, kg.schema(), &s_means, opts.epsilon)?;
                    let terms: Vec<(Var, Var)> = msgs
                        .iter()
                        .zip(&sims)
                        .map(|(&(r, m), &s)| {
                            let w = tape.mul_elem(betas[&r], s);
                            (w, m)
                        })
                        .collect();
                    tape.scaled_sum(&terms)
                }
                AttentionKind::Traditional => {
                    let weights = traditional_attention(tape, h[&i], &msgs, &layer.w_attn);
                    let terms: Vec<(Var, Var)> = weights
                        .iter()
                        .zip(&msgs)
                        .map(|(&w, &(_, m))| (w, m))
                        .collect();
                    tape.scaled_sum(&terms)
                }
            }
        };
        let cat = tape.concat_rows(t_self, z);
        let pre = tape.matmul(layer.w_out, cat);
        next.insert(i, tape.relu(pre));
    }
    Ok(next)
}

/// Final node embeddings of both graphs after the full stack.
pub fn embed_pair(
    tape: &mut Tape,
    pair: &KGPair,
    feats_src: &FeatureTable,
    feats_tgt: &FeatureTable,
    params: &ModelParams,
    vars: &ParamVars,
    opts: &ForwardOptions,
) -> Result<(NodeVars, NodeVars)> {
    let (mut h_src, mut h_tgt) = layer0(tape, pair, feats_src, feats_tgt, params, vars, opts)?;
    for layer in &vars.layers {
        h_src = layer_sweep(tape, &pair.source, &h_src, layer, opts)?;
        h_tgt = layer_sweep(tape, &pair.target, &h_tgt, layer, opts)?;
    }
    Ok((h_src, h_tgt))
}

pub struct BatchForward {
    pub preds: Vec<Var>,
    pub loss: Var,
}

/// Predictions and mean BCE loss for a batch of labeled pairs.
#[allow(clippy::too_many_arguments)]
pub fn forward_loss(
    tape: &mut Tape,
    pair: &KGPair,
    feats_src: &FeatureTable,
    feats_tgt: &FeatureTable,
    params: &ModelParams,
    vars: &ParamVars,
    opts: &ForwardOptions,
    batch: &[AlignmentPair],
) -> Result<BatchForward> {
    if batch.is_empty() {
        return Err(KgError::Config("empty batch".into()));
    }
    let (h_src, h_tgt) = embed_pair(tape, pair, feats_src, feats_tgt, params, vars, opts)?;
    let mut preds = Vec::with_capacity(batch.len());
    let mut labels = Vec::with_capacity(batch.len());
    for p in batch {
        preds.push(classifier_forward(tape, h_src[&p.src], h_tgt[&p.tgt], vars));
        labels.push(if p.positive { 1.0 } else { 0.0 });
    }
    let loss = tape.bce_mean(&preds, &labels);
    Ok(BatchForward { preds, loss })
}

/// Inference-only scores (probability of alignment) for a list of pairs.
pub fn score_pairs(
    pair: &KGPair,
    feats_src: &FeatureTable,
    feats_tgt: &FeatureTable,
    params: &ModelParams,
    opts: &ForwardOptions,
    pairs: &[AlignmentPair],
) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let vars = ParamVars::insert(&mut tape, params);
    let (h_src, h_tgt) = embed_pair(
        &mut tape, pair, feats_src, feats_tgt, params, &vars, opts,
    )?;
    Ok(pairs
        .iter()
        .map(|p| {
            let pred = classifier_forward(&mut tape, h_src[&p.src], h_tgt[&p.tgt], &vars);
            tape.scalar(pred)
        })
        .collect())
}
