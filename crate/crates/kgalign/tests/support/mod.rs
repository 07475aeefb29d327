//! Shared helpers for the integration tests: a random small-fixture
//! generator and a naive, loop-based transcription of the full forward pass
//! that serves as an independent oracle for the tape implementation.

#![allow(dead_code)]

use kgalign::features::FeatureTable;
use kgalign::gnn::ModelParams;
use kgalign::kg::{KGPair, KnowledgeGraph, NodeId, NodeKind, RelationPartition, Side};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Small mixed schema: two profiling relations out of five.
pub fn small_schema() -> RelationPartition {
    RelationPartition::new(vec![
        ("hasVendor".into(), true),
        ("hasProduct".into(), true),
        ("hasImpact".into(), false),
        ("hasCweId".into(), false),
        ("hasScore".into(), false),
    ])
    .unwrap()
}

/// Random paired fixture with at most `max_nodes` nodes per graph. Literal
/// texts are drawn from a tiny shared vocabulary so candidate sets and
/// shared literals actually occur.
pub fn random_pair(rng: &mut ChaCha8Rng, max_nodes: usize) -> KGPair {
    let schema = small_schema();
    let n_rel = schema.len();
    let vocab = 4usize;
    let build_side = |rng: &mut ChaCha8Rng, prefix: &str| {
        let mut b = KnowledgeGraph::builder(small_schema());
        let n_entities = rng.gen_range(1..=3usize);
        for e in 0..n_entities {
            b.add_node(&format!("{prefix}{e}"), "vulnerability", NodeKind::Entity, None)
                .unwrap();
        }
        let mut nodes = n_entities;
        let mut added: Vec<String> = Vec::new();
        for e in 0..n_entities {
            let n_attrs = rng.gen_range(0..=3usize);
            for _ in 0..n_attrs {
                if nodes >= max_nodes {
                    break;
                }
                let r = rng.gen_range(0..n_rel);
                let tok = format!("v{r}t{}", rng.gen_range(0..vocab));
                if !added.contains(&tok) {
                    let lit_type = schema.name(r).trim_start_matches("has").to_lowercase();
                    b.add_node(&tok, &lit_type, NodeKind::Literal, Some(&tok)).unwrap();
                    added.push(tok.clone());
                    nodes += 1;
                }
                b.add_triple(&format!("{prefix}{e}"), schema.name(r), &tok).unwrap();
            }
        }
        b.build().unwrap()
    };
    let source = build_side(rng, "s");
    let target = build_side(rng, "t");
    KGPair::new(source, target).unwrap()
}

pub fn random_features(rng: &mut ChaCha8Rng, kg: &KnowledgeGraph, dim: usize) -> FeatureTable {
    let mut table = FeatureTable::new(dim);
    for id in kg.node_ids() {
        let v: Vec<f64> = if kg.is_entity(id) {
            vec![0.0; dim]
        } else {
            (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()
        };
        table.insert(id, v).unwrap();
    }
    table
}

// ---------------------------------------------------------------------------
// Naive oracle: plain nested loops over Vec<f64>, no shared code with the
// tape beyond the parameter structs.
// ---------------------------------------------------------------------------

pub mod naive {
    use super::*;
    use ndarray::Array2;
    use std::collections::HashMap;

    fn matvec(w: &Array2<f64>, x: &[f64]) -> Vec<f64> {
        let (rows, cols) = w.dim();
        assert_eq!(cols, x.len());
        let mut out = vec![0.0; rows];
        for i in 0..rows {
            for j in 0..cols {
                out[i] += w[(i, j)] * x[j];
            }
        }
        out
    }

    fn softmax(xs: &[f64]) -> Vec<f64> {
        let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = xs.iter().map(|&x| (x - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        exps.iter().map(|&e| e / total).collect()
    }

    fn cosine(a: &[f64], b: &[f64]) -> f64 {
        let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            return 0.0;
        }
        a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb)
    }

    struct Stack {
        phis: Vec<Vec<f64>>,
        present: Vec<bool>,
    }

    /// Stage 1: one representation per relation from the importance-weighted
    /// literal neighbors.
    fn entity_stack(
        pair: &KGPair,
        side: Side,
        i: NodeId,
        params: &ModelParams,
        feats: &FeatureTable,
    ) -> Stack {
        let kg = pair.graph(side);
        let n_rel = pair.schema().len();
        let d = params.config.model_dim;
        let mut phis = Vec::new();
        let mut present = Vec::new();
        for r in 0..n_rel {
            let mut neighbors: Vec<NodeId> = Vec::new();
            for &(rel, tail) in kg.out_edges(i) {
                if rel == r && !neighbors.contains(&tail) {
                    neighbors.push(tail);
                }
            }
            if neighbors.is_empty() {
                phis.push(vec![0.0; d]);
                present.push(false);
                continue;
            }
            let logits: Vec<f64> = neighbors
                .iter()
                .map(|&j| {
                    let (dj, djp) = pair.cross_degree(side, j).unwrap();
                    if dj + djp == 0 {
                        0.0
                    } else {
                        -(dj as f64) / ((dj + djp) as f64)
                    }
                })
                .collect();
            let alphas = softmax(&logits);
            let mut weighted = vec![0.0; feats.dim];
            for (&j, &a) in neighbors.iter().zip(&alphas) {
                for (acc, x) in weighted.iter_mut().zip(feats.get(j).unwrap()) {
                    *acc += a * x;
                }
            }
            phis.push(matvec(&params.agg_w[r], &weighted));
            present.push(true);
        }
        Stack { phis, present }
    }

    /// Stage 2: correspondence-weighted consistency gates and the mean over
    /// present relations.
    fn entity_h0(
        pair: &KGPair,
        side: Side,
        i: NodeId,
        own: &HashMap<NodeId, Stack>,
        other: &HashMap<NodeId, Stack>,
        params: &ModelParams,
    ) -> Vec<f64> {
        let d = params.config.model_dim;
        let stack = &own[&i];
        let n_present = stack.present.iter().filter(|&&p| p).count();
        if n_present == 0 {
            return vec![0.0; d];
        }
        let candidates = pair.candidate_set(side, i);
        let correspondence: Option<Vec<f64>> = if candidates.is_empty() {
            None
        } else {
            let neg_dists: Vec<f64> = candidates
                .iter()
                .map(|c| {
                    let mut sq = 0.0;
                    for (a, b) in stack.phis.iter().zip(&other[c].phis) {
                        for (x, y) in a.iter().zip(b) {
                            sq += (x - y) * (x - y);
                        }
                    }
                    -((sq + 1e-30).sqrt())
                })
                .collect();
            Some(softmax(&neg_dists))
        };
        let mut sum = vec![0.0; d];
        for r in 0..stack.phis.len() {
            if !stack.present[r] {
                continue;
            }
            let gate: Vec<f64> = match &correspondence {
                None => vec![1.0; d],
                Some(cs) => (0..d)
                    .map(|t| {
                        let mut acc = 0.0;
                        for (c, cand) in cs.iter().zip(&candidates) {
                            let diff = stack.phis[r][t] - other[cand].phis[r][t];
                            acc += c * diff * diff;
                        }
                        (-acc).exp()
                    })
                    .collect(),
            };
            for t in 0..d {
                sum[t] += gate[t] * stack.phis[r][t];
            }
        }
        let denom = if params.config.strict_mean_denominator {
            stack.phis.len() as f64
        } else {
            n_present as f64
        };
        sum.iter().map(|x| x / denom).collect()
    }

    fn layer(
        kg: &KnowledgeGraph,
        h: &HashMap<NodeId, Vec<f64>>,
        params: &ModelParams,
        l: usize,
    ) -> HashMap<NodeId, Vec<f64>> {
        let schema = kg.schema();
        let lp = &params.layers[l];
        let d = params.config.model_dim;
        let rho = schema.rho();
        let epsilon = params.config.epsilon;
        let mut next = HashMap::new();
        for i in kg.node_ids() {
            let t_self = matvec(&lp.w_type[kg.node_type(i)], &h[&i]);
            // undirected typed neighborhood, deduplicated, first-occurrence
            let mut nbrs: Vec<(usize, NodeId)> = Vec::new();
            for &(r, j) in kg.out_edges(i).iter().chain(kg.in_edges(i)) {
                if !nbrs.contains(&(r, j)) {
                    nbrs.push((r, j));
                }
            }
            let mut z = vec![0.0; d];
            if !nbrs.is_empty() {
                let msgs: Vec<(usize, Vec<f64>)> = nbrs
                    .iter()
                    .map(|&(r, j)| (r, matvec(&lp.w_rel[r], &h[&j])))
                    .collect();
                let sims: Vec<f64> = msgs.iter().map(|(_, m)| cosine(&t_self, m)).collect();
                // mean similarity per relation, relations in ascending order
                let mut rels: Vec<usize> = msgs.iter().map(|&(r, _)| r).collect();
                rels.sort_unstable();
                rels.dedup();
                let s_mean: HashMap<usize, f64> = rels
                    .iter()
                    .map(|&r| {
                        let group: Vec<f64> = msgs
                            .iter()
                            .zip(&sims)
                            .filter(|((rr, _), _)| *rr == r)
                            .map(|(_, &s)| s)
                            .collect();
                        (r, group.iter().sum::<f64>() / group.len() as f64)
                    })
                    .collect();
                // group-constrained softmax over relation means
                let mut beta: HashMap<usize, f64> = HashMap::new();
                for profiling in [true, false] {
                    let members: Vec<usize> = rels
                        .iter()
                        .copied()
                        .filter(|&r| schema.is_profiling(r) == profiling)
                        .collect();
                    if members.is_empty() {
                        continue;
                    }
                    let mass = if profiling {
                        rho + epsilon
                    } else {
                        1.0 - rho - epsilon
                    };
                    let scores: Vec<f64> = members.iter().map(|r| s_mean[r]).collect();
                    let soft = softmax(&scores);
                    for (&r, &s) in members.iter().zip(&soft) {
                        beta.insert(r, mass * s);
                    }
                }
                for ((r, m), &s) in msgs.iter().zip(&sims) {
                    let w = beta[r] * s;
                    for t in 0..d {
                        z[t] += w * m[t];
                    }
                }
            }
            let mut cat = t_self.clone();
            cat.extend_from_slice(&z);
            let pre = matvec(&lp.w_out, &cat);
            next.insert(i, pre.iter().map(|&x| x.max(0.0)).collect());
        }
        next
    }

    /// Final embeddings of every node on one side after aggregation plus the
    /// full layer stack.
    pub fn embed_side(
        pair: &KGPair,
        side: Side,
        feats_own: &FeatureTable,
        feats_other: &FeatureTable,
        params: &ModelParams,
    ) -> HashMap<NodeId, Vec<f64>> {
        let kg = pair.graph(side);
        let stacks_own: HashMap<NodeId, Stack> = kg
            .entity_nodes()
            .map(|i| (i, entity_stack(pair, side, i, params, feats_own)))
            .collect();
        let stacks_other: HashMap<NodeId, Stack> = pair
            .graph(side.flip())
            .entity_nodes()
            .map(|i| (i, entity_stack(pair, side.flip(), i, params, feats_other)))
            .collect();
        let mut h: HashMap<NodeId, Vec<f64>> = kg
            .entity_nodes()
            .map(|i| (i, entity_h0(pair, side, i, &stacks_own, &stacks_other, params)))
            .collect();
        for j in kg.literal_nodes() {
            h.insert(j, matvec(&params.input_proj, feats_own.get(j).unwrap()));
        }
        for l in 0..params.layers.len() {
            h = layer(kg, &h, params, l);
        }
        h
    }

    /// Alignment probability of one (source, target) entity pair.
    pub fn classify(h_src: &[f64], h_tgt: &[f64], params: &ModelParams) -> f64 {
        let disc: Vec<f64> = h_src
            .iter()
            .zip(h_tgt)
            .map(|(a, b)| (a - b).abs())
            .collect();
        let clf = &params.classifier;
        let z1 = matvec(&clf.w1, &disc);
        let z1: Vec<f64> = z1
            .iter()
            .enumerate()
            .map(|(t, &x)| (x + clf.b1[(t, 0)]).max(0.0))
            .collect();
        let logit: f64 = matvec(&clf.w2, &z1)[0] + clf.b2[(0, 0)];
        1.0 / (1.0 + (-logit).exp())
    }
}
