//! Two-stage masked attribute aggregation.
//!
//! Stage 1 turns the literal neighborhood of an entity into one
//! representation per relation, weighting each neighbor by its relative
//! cross-KG co-occurrence rate. Stage 2 compares the stacked relation
//! representations against cross-KG candidates, derives a diagonal mask
//! gate per relation from the attribute-level consistency, and aggregates
//! the masked relation representations into the layer-0 entity embedding.
//!
//! All stage-2 quantities live on the tape: the masks are recomputed inside
//! every forward pass and gradients flow through the exp and softmax terms.

use crate::kg::{KGPair, NodeId, Side};
use crate::tape::{Tape, Var};
use std::collections::HashMap;

/// Numeric guard under the Frobenius-norm square root; keeps the
/// correspondence softmax differentiable when two stacks coincide.
pub const FROB_EPS: f64 = 1e-30;

/// Importance weights of the neighbors `N_{i,r}`: softmax over
/// `-d_j / (d_j + d_j')` where the degrees count distinct entities adjacent
/// to the literal on each graph. Returns `None` when the neighbor set is
/// empty (the caller records the relation as absent).
pub fn neighbor_importance(
    pair: &KGPair,
    side: Side,
    i: NodeId,
    r: usize,
) -> Option<Vec<(NodeId, f64)>> {
    let own = pair.graph(side);
    let mut neighbors: Vec<NodeId> = Vec::new();
    for &(rel, tail) in own.out_edges(i) {
        if rel == r && !neighbors.contains(&tail) {
            neighbors.push(tail);
        }
    }
    if neighbors.is_empty() {
        return None;
    }
    let logits: Vec<f64> = neighbors
        .iter()
        .map(|&j| {
            let (d, dp) = pair
                .cross_degree(side, j)
                .expect("neighbor is in the graph");
            if d + dp == 0 {
                // isolated literal: co-occurrence rate undefined, treat as 0
                0.0
            } else {
                -(d as f64) / ((d + dp) as f64)
            }
        })
        .collect();
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Some(
        neighbors
            .iter()
            .zip(&exps)
            .map(|(&j, &e)| (j, e / total))
            .collect(),
    )
}

/// Relation representations of one entity: row `r` of the conceptual stack,
/// plus a presence flag per relation (absent relations hold a zero vector).
pub struct EntityStack {
    pub phis: Vec<Var>,
    pub present: Vec<bool>,
}

impl EntityStack {
    pub fn present_count(&self) -> usize {
        self.present.iter().filter(|&&p| p).count()
    }
}

/// Builds `phi_i(r) = sum_j alpha_irj * W_r * h_j` for every relation of the
/// schema. Feature vectors are constants, so the weighted neighbor sum is
/// folded into a single leaf before the `W_r` product.
pub fn build_entity_stack(
    tape: &mut Tape,
    pair: &KGPair,
    side: Side,
    i: NodeId,
    agg_w: &[Var],
    features: &crate::features::FeatureTable,
    model_dim: usize,
) -> EntityStack {
    let n_rel = pair.schema().len();
    let mut phis = Vec::with_capacity(n_rel);
    let mut present = Vec::with_capacity(n_rel);
    for (r, &w_r) in agg_w.iter().enumerate().take(n_rel) {
        match neighbor_importance(pair, side, i, r) {
            Some(weights) => {
                let mut acc = vec![0.0; features.dim];
                for (j, w) in weights {
                    let h = features.get(j).expect("feature table covers the graph");
                    for (a, x) in acc.iter_mut().zip(h) {
                        *a += w * x;
                    }
                }
                let weighted = tape.leaf_col(&acc);
                phis.push(tape.matmul(w_r, weighted));
                present.push(true);
            }
            None => {
                phis.push(tape.zeros(model_dim, 1));
                present.push(false);
            }
        }
    }
    EntityStack { phis, present }
}

/// Correspondence of each candidate to the entity: softmax over candidates
/// of the negated Frobenius distance between the stacked representations.
/// Empty candidate list signals "no candidates" with `None`.
pub fn candidate_correspondence(
    tape: &mut Tape,
    stack_i: &EntityStack,
    candidates: &[&EntityStack],
) -> Option<Vec<Var>> {
    if candidates.is_empty() {
        return None;
    }
    let mut neg_dists = Vec::with_capacity(candidates.len());
    for cand in candidates {
        let pairs: Vec<(Var, Var)> = stack_i
            .phis
            .iter()
            .zip(&cand.phis)
            .map(|(&a, &b)| (a, b))
            .collect();
        let sq = tape.sq_dist_accum(&pairs);
        let dist = tape.sqrt_guard(sq, FROB_EPS);
        neg_dists.push(tape.scale_const(dist, -1.0));
    }
    let gathered = tape.gather(&neg_dists);
    let soft = tape.softmax(gathered);
    Some((0..candidates.len()).map(|k| tape.row(soft, k)).collect())
}

/// Diagonal mask gate for one relation:
/// `diag_t = exp(-sum_k c_k (phi_i^t - phi_k^t)^2)`, elementwise in (0, 1].
pub fn mask_gate(
    tape: &mut Tape,
    phi_i: Var,
    candidate_phis: &[Var],
    correspondence: &[Var],
) -> Var {
    debug_assert_eq!(candidate_phis.len(), correspondence.len());
    let terms: Vec<(Var, Var, Var)> = candidate_phis
        .iter()
        .zip(correspondence)
        .map(|(&phi_c, &c)| (phi_i, phi_c, c))
        .collect();
    let weighted = tape.mask_sq_accum(&terms);
    let neg = tape.scale_const(weighted, -1.0);
    tape.exp(neg)
}

/// How stage 2 treats the mask.
#[derive(Copy, Clone, Eq, PartialEq, Debug)]
pub enum MaskMode {
    /// gates from candidate consistency (identity when no candidates)
    Masked,
    /// ablation: all gates forced to identity
    Mean,
}

/// Aggregated layer-0 entity representation: mean over relations of the
/// gated relation representations. The denominator counts present relations
/// unless `strict_denominator` forces the full relation count.
pub fn masked_entity_repr(
    tape: &mut Tape,
    stack: &EntityStack,
    gates: &[Option<Var>],
    strict_denominator: bool,
    model_dim: usize,
) -> Var {
    let present = stack.present_count();
    if present == 0 {
        return tape.zeros(model_dim, 1);
    }
    let mut terms: Vec<Var> = Vec::with_capacity(present);
    for (r, &phi) in stack.phis.iter().enumerate() {
        if !stack.present[r] {
            continue;
        }
        let term = match gates[r] {
            Some(gate) => tape.mul_elem(gate, phi),
            None => phi,
        };
        terms.push(term);
    }
    let mut acc = terms[0];
    for &t in &terms[1..] {
        acc = tape.add(acc, t);
    }
    let denom = if strict_denominator {
        stack.phis.len()
    } else {
        present
    };
    tape.scale_const(acc, 1.0 / denom as f64)
}

/// Per-entity stage-2 state produced during a forward pass, kept for
/// diagnostics and for the oracle tests.
pub struct AggregationTrace {
    pub h0: HashMap<NodeId, Var>,
    pub stacks: HashMap<NodeId, EntityStack>,
    /// entities with no present relation at all
    pub isolated: Vec<NodeId>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureTable;
    use crate::kg::{KnowledgeGraph, NodeKind, RelationPartition};
    use ndarray::Array2;

    fn schema() -> RelationPartition {
        RelationPartition::new(vec![
            ("hasVendor".into(), true),
            ("hasImpact".into(), false),
        ])
        .unwrap()
    }

    /// source entity `i` with vendor neighbors of controllable cross-degrees
    fn degree_pair(src_counts: &[(usize, usize)]) -> (KGPair, NodeId) {
        // neighbor k gets src_counts[k].0 extra source entities and
        // src_counts[k].1 target entities attached
        let mut bs = KnowledgeGraph::builder(schema());
        bs.add_node("i", "vulnerability", NodeKind::Entity, None).unwrap();
        let mut bt = KnowledgeGraph::builder(schema());
        for (k, &(d, dp)) in src_counts.iter().enumerate() {
            let lit = format!("lit{k}");
            bs.add_node(&lit, "vendor", NodeKind::Literal, Some(&lit)).unwrap();
            bs.add_triple("i", "hasVendor", &lit).unwrap();
            for e in 1..d {
                let name = format!("s{k}_{e}");
                bs.add_node(&name, "vulnerability", NodeKind::Entity, None).unwrap();
                bs.add_triple(&name, "hasVendor", &lit).unwrap();
            }
            bt.add_node(&lit, "vendor", NodeKind::Literal, Some(&lit)).unwrap();
            for e in 0..dp {
                let name = format!("t{k}_{e}");
                bt.add_node(&name, "vulnerability", NodeKind::Entity, None).unwrap();
                bt.add_triple(&name, "hasVendor", &lit).unwrap();
            }
        }
        let pair = KGPair::new(bs.build().unwrap(), bt.build().unwrap()).unwrap();
        let i = pair.source.lookup("i").unwrap();
        (pair, i)
    }

    #[test]
    fn importance_symmetric_neighbors_split_evenly() {
        let (pair, i) = degree_pair(&[(2, 2), (2, 2)]);
        let w = neighbor_importance(&pair, Side::Source, i, 0).unwrap();
        assert_eq!(w.len(), 2);
        for (_, weight) in w {
            assert!((weight - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn importance_single_neighbor_is_one() {
        let (pair, i) = degree_pair(&[(1, 3)]);
        let w = neighbor_importance(&pair, Side::Source, i, 0).unwrap();
        assert_eq!(w.len(), 1);
        assert!((w[0].1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn importance_hand_softmax() {
        // ratios d/(d+d') of 0.5 and 0.75 -> softmax over {-0.5, -0.75}
        let (pair, i) = degree_pair(&[(2, 2), (3, 1)]);
        let w = neighbor_importance(&pair, Side::Source, i, 0).unwrap();
        assert!((w[0].1 - 0.5622).abs() < 1e-4);
        assert!((w[1].1 - 0.4378).abs() < 1e-4);
        let total: f64 = w.iter().map(|&(_, x)| x).sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn importance_empty_relation_signals_absence() {
        let (pair, i) = degree_pair(&[(1, 1)]);
        assert!(neighbor_importance(&pair, Side::Source, i, 1).is_none());
    }

    fn features_for(pair: &KGPair, dim: usize, assign: &[(&str, Vec<f64>)]) -> FeatureTable {
        let mut table = FeatureTable::new(dim);
        for id in pair.source.node_ids() {
            table.insert(id, vec![0.0; dim]).unwrap();
        }
        for (name, v) in assign {
            let id = pair.source.lookup(name).unwrap();
            table.insert(id, v.clone()).unwrap();
        }
        table
    }

    #[test]
    fn stack_identity_transform_single_neighbor() {
        let (pair, i) = degree_pair(&[(1, 1)]);
        let features = features_for(&pair, 2, &[("lit0", vec![0.3, -0.7])]);
        let mut tape = Tape::new();
        let eye = tape.leaf(Array2::eye(2));
        let stack =
            build_entity_stack(&mut tape, &pair, Side::Source, i, &[eye, eye], &features, 2);
        assert!(stack.present[0]);
        assert!(!stack.present[1]);
        let phi = tape.value(stack.phis[0]);
        assert!((phi[(0, 0)] - 0.3).abs() < 1e-12);
        assert!((phi[(1, 0)] + 0.7).abs() < 1e-12);
        assert_eq!(tape.value(stack.phis[1]), &Array2::zeros((2, 1)));
    }

    #[test]
    fn stack_equal_weights_hand_sum() {
        let (pair, i) = degree_pair(&[(2, 2), (2, 2)]);
        // both neighbors live under hasVendor with weight 0.5 each
        let features = features_for(
            &pair,
            2,
            &[("lit0", vec![1.0, 0.0]), ("lit1", vec![0.0, 1.0])],
        );
        let mut tape = Tape::new();
        let eye = tape.leaf(Array2::eye(2));
        let stack =
            build_entity_stack(&mut tape, &pair, Side::Source, i, &[eye, eye], &features, 2);
        let phi = tape.value(stack.phis[0]);
        assert!((phi[(0, 0)] - 0.5).abs() < 1e-12);
        assert!((phi[(1, 0)] - 0.5).abs() < 1e-12);
    }

    fn leaf_stack(tape: &mut Tape, rows: &[Vec<f64>]) -> EntityStack {
        EntityStack {
            phis: rows.iter().map(|r| tape.leaf_col(r)).collect(),
            present: vec![true; rows.len()],
        }
    }

    #[test]
    fn correspondence_singleton_is_one() {
        let mut tape = Tape::new();
        let a = leaf_stack(&mut tape, &[vec![1.0, 2.0]]);
        let b = leaf_stack(&mut tape, &[vec![0.0, 0.0]]);
        let c = candidate_correspondence(&mut tape, &a, &[&b]).unwrap();
        assert!((tape.scalar(c[0]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn correspondence_equal_distances_split() {
        let mut tape = Tape::new();
        let a = leaf_stack(&mut tape, &[vec![0.0, 0.0]]);
        let b = leaf_stack(&mut tape, &[vec![1.0, 0.0]]);
        let c = leaf_stack(&mut tape, &[vec![0.0, 1.0]]);
        let cs = candidate_correspondence(&mut tape, &a, &[&b, &c]).unwrap();
        assert!((tape.scalar(cs[0]) - 0.5).abs() < 1e-12);
        assert!((tape.scalar(cs[1]) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn correspondence_hand_softmax() {
        // distances 0 and 1 -> softmax over {0, -1}
        let mut tape = Tape::new();
        let a = leaf_stack(&mut tape, &[vec![0.0]]);
        let b = leaf_stack(&mut tape, &[vec![0.0]]);
        let c = leaf_stack(&mut tape, &[vec![1.0]]);
        let cs = candidate_correspondence(&mut tape, &a, &[&b, &c]).unwrap();
        assert!((tape.scalar(cs[0]) - 0.7311).abs() < 1e-4);
        assert!((tape.scalar(cs[1]) - 0.2689).abs() < 1e-4);
    }

    #[test]
    fn correspondence_empty_is_none() {
        let mut tape = Tape::new();
        let a = leaf_stack(&mut tape, &[vec![1.0]]);
        assert!(candidate_correspondence(&mut tape, &a, &[]).is_none());
    }

    #[test]
    fn gate_identity_for_identical_candidate() {
        let mut tape = Tape::new();
        let phi = tape.leaf_col(&[0.4, -0.2]);
        let c = tape.leaf_scalar(1.0);
        let gate = mask_gate(&mut tape, phi, &[phi], &[c]);
        let g = tape.value(gate);
        assert!((g[(0, 0)] - 1.0).abs() < 1e-12);
        assert!((g[(1, 0)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gate_hand_value() {
        // difference (1, 0), c = 1 -> diag (e^-1, 1)
        let mut tape = Tape::new();
        let phi = tape.leaf_col(&[1.0, 0.5]);
        let cand = tape.leaf_col(&[0.0, 0.5]);
        let c = tape.leaf_scalar(1.0);
        let gate = mask_gate(&mut tape, phi, &[cand], &[c]);
        let g = tape.value(gate);
        assert!((g[(0, 0)] - 0.3679).abs() < 1e-4);
        assert!((g[(1, 0)] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn gate_in_unit_interval_and_monotone() {
        let mut tape = Tape::new();
        let phi = tape.leaf_col(&[2.0]);
        let near = tape.leaf_col(&[1.5]);
        let far = tape.leaf_col(&[0.0]);
        let c = tape.leaf_scalar(1.0);
        let g_near = mask_gate(&mut tape, phi, &[near], &[c]);
        let g_far = mask_gate(&mut tape, phi, &[far], &[c]);
        let gn = tape.scalar(g_near);
        let gf = tape.scalar(g_far);
        assert!(gn > 0.0 && gn <= 1.0);
        assert!(gf > 0.0 && gf <= 1.0);
        assert!(gf < gn);
    }

    #[test]
    fn masked_repr_passthrough_and_mean() {
        let mut tape = Tape::new();
        // one relation, identity mask -> h = phi
        let stack = leaf_stack(&mut tape, &[vec![0.7, -0.1]]);
        let h = masked_entity_repr(&mut tape, &stack, &[None], false, 2);
        assert_eq!(tape.value(h), tape.value(stack.phis[0]));
        // two present relations, identity masks
        let stack2 = leaf_stack(&mut tape, &[vec![1.0, 1.0], vec![0.0, 0.0]]);
        let h2 = masked_entity_repr(&mut tape, &stack2, &[None, None], false, 2);
        let v = tape.value(h2);
        assert!((v[(0, 0)] - 0.5).abs() < 1e-12);
        assert!((v[(1, 0)] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn masked_repr_elementwise_gate() {
        let mut tape = Tape::new();
        let stack = leaf_stack(&mut tape, &[vec![2.0, 2.0]]);
        let gate = tape.leaf_col(&[0.5, 1.0]);
        let h = masked_entity_repr(&mut tape, &stack, &[Some(gate)], false, 2);
        let v = tape.value(h);
        assert!((v[(0, 0)] - 1.0).abs() < 1e-12);
        assert!((v[(1, 0)] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn masked_repr_absent_relations() {
        let mut tape = Tape::new();
        // phi1 = (1,0) present, phi2 = (0,1) present -> mean (0.5, 0.5)
        let stack = leaf_stack(&mut tape, &[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let h = masked_entity_repr(&mut tape, &stack, &[None, None], false, 2);
        let v = tape.value(h);
        assert!((v[(0, 0)] - 0.5).abs() < 1e-12);
        // no present relation -> zero vector
        let empty = EntityStack {
            phis: vec![tape.zeros(2, 1)],
            present: vec![false],
        };
        let hz = masked_entity_repr(&mut tape, &empty, &[None], false, 2);
        assert_eq!(tape.value(hz), &Array2::zeros((2, 1)));
    }

    #[test]
    fn strict_denominator_shrinks_sparse_entities() {
        let mut tape = Tape::new();
        let stack = EntityStack {
            phis: vec![tape.leaf_col(&[2.0]), tape.zeros(1, 1)],
            present: vec![true, false],
        };
        let lenient = masked_entity_repr(&mut tape, &stack, &[None, None], false, 1);
        let strict = masked_entity_repr(&mut tape, &stack, &[None, None], true, 1);
        assert!((tape.scalar(lenient) - 2.0).abs() < 1e-12);
        assert!((tape.scalar(strict) - 1.0).abs() < 1e-12);
    }
}
