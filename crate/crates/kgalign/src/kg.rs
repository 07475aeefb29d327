//! Typed heterogeneous graph model: loaders, cross-KG degree statistics,
//! shared-literal matching and candidate-set construction.
//!
//! A graph is a set of `(head, relation, tail)` triples over typed nodes.
//! Nodes are either entities or literals; literals never appear as the head
//! of a triple. Relation names are drawn from a schema shared by both graphs
//! of a [`KGPair`].

use crate::error::{KgError, Result};
use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::Path;

/// Index of a node within one graph. Ids are not comparable across graphs.
#[derive(Copy, Clone, Eq, PartialEq, Ord, PartialOrd, Hash, Debug)]
pub struct NodeId(pub u32);

impl NodeId {
    #[inline]
    pub fn idx(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Copy, Clone, Eq, PartialEq, Debug)]
pub enum NodeKind {
    Entity,
    Literal,
}

/// Normalization applied to every literal text: lowercase, trim, collapse
/// internal whitespace. Idempotent.
pub fn normalize_literal(text: &str) -> String {
    text.to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// Ordered relation set with a profiling flag per relation.
#[derive(Clone, Debug)]
pub struct RelationPartition {
    relations: Vec<String>,
    profiling: Vec<bool>,
    index: HashMap<String, usize>,
}

impl RelationPartition {
    pub fn new(relations: Vec<(String, bool)>) -> Result<Self> {
        let mut index = HashMap::new();
        let mut names = Vec::with_capacity(relations.len());
        let mut flags = Vec::with_capacity(relations.len());
        for (name, profiling) in relations {
            if index.insert(name.clone(), names.len()).is_some() {
                return Err(KgError::Config(format!("duplicate relation '{name}'")));
            }
            names.push(name);
            flags.push(profiling);
        }
        if names.is_empty() {
            return Err(KgError::Config("schema lists no relations".into()));
        }
        Ok(RelationPartition {
            relations: names,
            profiling: flags,
            index,
        })
    }

    /// Parses a line-oriented schema config: `relation <name> profiling=<bool>`.
    pub fn parse(config: &str) -> Result<Self> {
        let mut rels = Vec::new();
        for (lineno, line) in config.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 3 || fields[0] != "relation" {
                return Err(KgError::Config(format!(
                    "line {}: expected `relation <name> profiling=<bool>`, got `{line}`",
                    lineno + 1
                )));
            }
            let flag = match fields[2] {
                "profiling=true" => true,
                "profiling=false" => false,
                other => {
                    return Err(KgError::Config(format!(
                        "line {}: bad profiling flag `{other}`",
                        lineno + 1
                    )))
                }
            };
            rels.push((fields[1].to_string(), flag));
        }
        RelationPartition::new(rels)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| KgError::io(path.display().to_string(), e))?;
        RelationPartition::parse(&text)
    }

    pub fn to_config_string(&self) -> String {
        let mut out = String::new();
        for (name, &flag) in self.relations.iter().zip(&self.profiling) {
            out.push_str(&format!("relation {name} profiling={flag}\n"));
        }
        out
    }

    /// Default schema derived from the common artifacts of CERT-style and
    /// NVD-style vulnerability reports.
    pub fn default_schema() -> Self {
        RelationPartition::new(vec![
            ("hasWeakness".into(), true),
            ("hasVendor".into(), true),
            ("hasProduct".into(), true),
            ("hasImpact".into(), true),
            ("hasDiscoverer".into(), true),
            ("hasCweId".into(), false),
            ("hasCvssV2Vector".into(), false),
            ("hasCvssV3Vector".into(), false),
            ("hasCvssV2Score".into(), false),
            ("hasCvssV3Score".into(), false),
            ("hasAffectedVersion".into(), false),
        ])
        .expect("default schema is well-formed")
    }

    pub fn len(&self) -> usize {
        self.relations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relations.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.relations
    }

    pub fn name(&self, rel: usize) -> &str {
        &self.relations[rel]
    }

    pub fn rel_id(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn is_profiling(&self, rel: usize) -> bool {
        self.profiling[rel]
    }

    pub fn profiling_count(&self) -> usize {
        self.profiling.iter().filter(|&&p| p).count()
    }

    /// ratio of profiling relations among all relations.
    pub fn rho(&self) -> f64 {
        self.profiling_count() as f64 / self.len() as f64
    }

    /// The partisan hyper-parameter must satisfy `0 < epsilon < 1 - rho`.
    pub fn validate_epsilon(&self, epsilon: f64) -> Result<()> {
        let bound = 1.0 - self.rho();
        if epsilon <= 0.0 || epsilon >= bound {
            return Err(KgError::Config(format!(
                "epsilon {epsilon} outside (0, {bound}) for rho {}",
                self.rho()
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
struct Node {
    name: String,
    type_name: String,
    kind: NodeKind,
    text: Option<String>,
}

/// Immutable typed heterogeneous multigraph of entity and literal nodes.
#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    nodes: Vec<Node>,
    by_name: HashMap<String, NodeId>,
    triples: Vec<(NodeId, usize, NodeId)>,
    /// outgoing edges per node: (relation, tail)
    out: Vec<Vec<(usize, NodeId)>>,
    /// incoming edges per node: (relation, head)
    inc: Vec<Vec<(usize, NodeId)>>,
    /// distinct entity neighbors per node (either direction)
    entity_degree: Vec<usize>,
    schema: RelationPartition,
}

impl KnowledgeGraph {
    pub fn builder(schema: RelationPartition) -> KgBuilder {
        KgBuilder {
            schema,
            nodes: Vec::new(),
            by_name: HashMap::new(),
            triples: Vec::new(),
        }
    }

    /// Loads a graph from a node declaration file and a triple file.
    ///
    /// Node file: `node-id \t type \t kind \t text`, triple file:
    /// `head-id \t relation \t tail-id`, one record per line, UTF-8.
    pub fn load(nodes_path: &Path, triples_path: &Path, schema: RelationPartition) -> Result<Self> {
        let mut builder = KnowledgeGraph::builder(schema);
        let node_text = std::fs::read_to_string(nodes_path)
            .map_err(|e| KgError::io(nodes_path.display().to_string(), e))?;
        for (lineno, line) in node_text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 4 {
                return Err(KgError::Parse {
                    path: nodes_path.display().to_string(),
                    line: lineno + 1,
                    msg: format!("expected 4 tab-separated fields, got {}", fields.len()),
                });
            }
            let kind = match fields[2] {
                "entity" => NodeKind::Entity,
                "literal" => NodeKind::Literal,
                other => {
                    return Err(KgError::Parse {
                        path: nodes_path.display().to_string(),
                        line: lineno + 1,
                        msg: format!("unknown node kind `{other}`"),
                    })
                }
            };
            let text = if kind == NodeKind::Literal {
                Some(fields[3])
            } else {
                None
            };
            builder.add_node(fields[0], fields[1], kind, text)?;
        }
        let triple_text = std::fs::read_to_string(triples_path)
            .map_err(|e| KgError::io(triples_path.display().to_string(), e))?;
        for (lineno, line) in triple_text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(KgError::Parse {
                    path: triples_path.display().to_string(),
                    line: lineno + 1,
                    msg: format!("expected 3 tab-separated fields, got {}", fields.len()),
                });
            }
            builder.add_triple(fields[0], fields[1], fields[2])?;
        }
        builder.build()
    }

    pub fn write_nodes(&self) -> String {
        let mut out = String::new();
        for node in &self.nodes {
            let text = node.text.as_deref().unwrap_or("-");
            let kind = match node.kind {
                NodeKind::Entity => "entity",
                NodeKind::Literal => "literal",
            };
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                node.name, node.type_name, kind, text
            ));
        }
        out
    }

    pub fn write_triples(&self) -> String {
        let mut out = String::new();
        for &(h, r, t) in &self.triples {
            out.push_str(&format!(
                "{}\t{}\t{}\n",
                self.nodes[h.idx()].name,
                self.schema.name(r),
                self.nodes[t.idx()].name
            ));
        }
        out
    }

    pub fn schema(&self) -> &RelationPartition {
        &self.schema
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn triple_count(&self) -> usize {
        self.triples.len()
    }

    pub fn triples(&self) -> &[(NodeId, usize, NodeId)] {
        &self.triples
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> {
        (0..self.nodes.len() as u32).map(NodeId)
    }

    pub fn node_name(&self, id: NodeId) -> &str {
        &self.nodes[id.idx()].name
    }

    pub fn node_type(&self, id: NodeId) -> &str {
        &self.nodes[id.idx()].type_name
    }

    pub fn node_kind(&self, id: NodeId) -> NodeKind {
        self.nodes[id.idx()].kind
    }

    pub fn is_entity(&self, id: NodeId) -> bool {
        self.nodes[id.idx()].kind == NodeKind::Entity
    }

    pub fn literal_text(&self, id: NodeId) -> Option<&str> {
        self.nodes[id.idx()].text.as_deref()
    }

    pub fn lookup(&self, name: &str) -> Option<NodeId> {
        self.by_name.get(name).copied()
    }

    /// Outgoing (relation, tail) edges of a node.
    pub fn out_edges(&self, id: NodeId) -> &[(usize, NodeId)] {
        &self.out[id.idx()]
    }

    /// Incoming (relation, head) edges of a node.
    pub fn in_edges(&self, id: NodeId) -> &[(usize, NodeId)] {
        &self.inc[id.idx()]
    }

    /// Tails connected to `head` by `rel`, in triple-insertion order.
    pub fn neighbors(&self, head: NodeId, rel: usize) -> Vec<NodeId> {
        self.out[head.idx()]
            .iter()
            .filter(|&&(r, _)| r == rel)
            .map(|&(_, t)| t)
            .collect()
    }

    /// Number of distinct entity nodes adjacent to `id` in either direction.
    pub fn entity_degree(&self, id: NodeId) -> usize {
        self.entity_degree[id.idx()]
    }

    pub fn entities_of_type<'a>(&'a self, type_name: &'a str) -> impl Iterator<Item = NodeId> + 'a {
        self.node_ids()
            .filter(move |&id| self.is_entity(id) && self.node_type(id) == type_name)
    }

    pub fn entity_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.node_ids().filter(move |&id| self.is_entity(id))
    }

    pub fn literal_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.node_ids().filter(move |&id| !self.is_entity(id))
    }
}

pub struct KgBuilder {
    schema: RelationPartition,
    nodes: Vec<Node>,
    by_name: HashMap<String, NodeId>,
    triples: Vec<(NodeId, usize, NodeId)>,
}

impl KgBuilder {
    pub fn add_node(
        &mut self,
        name: &str,
        type_name: &str,
        kind: NodeKind,
        text: Option<&str>,
    ) -> Result<NodeId> {
        if let Some(&id) = self.by_name.get(name) {
            return Ok(id);
        }
        let id = NodeId(self.nodes.len() as u32);
        let text = match (kind, text) {
            (NodeKind::Literal, Some(t)) => Some(normalize_literal(t)),
            (NodeKind::Literal, None) => {
                return Err(KgError::Schema(format!("literal node `{name}` lacks text")))
            }
            (NodeKind::Entity, _) => None,
        };
        self.nodes.push(Node {
            name: name.to_string(),
            type_name: type_name.to_string(),
            kind,
            text,
        });
        self.by_name.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn add_triple(&mut self, head: &str, relation: &str, tail: &str) -> Result<()> {
        let rel = self
            .schema
            .rel_id(relation)
            .ok_or_else(|| KgError::Schema(format!("unknown relation `{relation}`")))?;
        let h = *self
            .by_name
            .get(head)
            .ok_or_else(|| KgError::Schema(format!("undeclared head node `{head}`")))?;
        let t = *self
            .by_name
            .get(tail)
            .ok_or_else(|| KgError::Schema(format!("undeclared tail node `{tail}`")))?;
        if self.nodes[h.idx()].kind == NodeKind::Literal {
            return Err(KgError::Schema(format!(
                "literal node `{head}` may not head a triple"
            )));
        }
        self.triples.push((h, rel, t));
        Ok(())
    }

    pub fn build(self) -> Result<KnowledgeGraph> {
        let n = self.nodes.len();
        let mut out = vec![Vec::new(); n];
        let mut inc = vec![Vec::new(); n];
        for &(h, r, t) in &self.triples {
            out[h.idx()].push((r, t));
            inc[t.idx()].push((r, h));
        }
        let mut entity_degree = vec![0usize; n];
        for id in 0..n {
            let mut seen = HashSet::new();
            for &(_, other) in out[id].iter().chain(inc[id].iter()) {
                if self.nodes[other.idx()].kind == NodeKind::Entity {
                    seen.insert(other);
                }
            }
            entity_degree[id] = seen.len();
        }
        Ok(KnowledgeGraph {
            nodes: self.nodes,
            by_name: self.by_name,
            triples: self.triples,
            out,
            inc,
            entity_degree,
            schema: self.schema,
        })
    }
}

/// Which graph of a pair plays the role of `G` in a computation.
#[derive(Copy, Clone, Eq, PartialEq, Debug)]
pub enum Side {
    Source,
    Target,
}

impl Side {
    pub fn flip(self) -> Side {
        match self {
            Side::Source => Side::Target,
            Side::Target => Side::Source,
        }
    }
}

/// A source/target graph pair sharing one schema, with the cross-KG
/// literal correspondence precomputed.
pub struct KGPair {
    pub source: KnowledgeGraph,
    pub target: KnowledgeGraph,
    /// normalized literal text -> (source node, target node)
    shared_literals: BTreeMap<String, (NodeId, NodeId)>,
    /// per source literal node: its target counterpart
    src_counterpart: HashMap<NodeId, NodeId>,
    /// per target literal node: its source counterpart
    tgt_counterpart: HashMap<NodeId, NodeId>,
}

impl KGPair {
    pub fn new(source: KnowledgeGraph, target: KnowledgeGraph) -> Result<Self> {
        if source.schema.names() != target.schema.names() {
            return Err(KgError::Schema(format!(
                "relation sets differ: source {:?} vs target {:?}",
                source.schema.names(),
                target.schema.names()
            )));
        }
        let mut src_by_text: BTreeMap<&str, NodeId> = BTreeMap::new();
        for id in source.literal_nodes() {
            if let Some(text) = source.literal_text(id) {
                src_by_text.entry(text).or_insert(id);
            }
        }
        let mut shared = BTreeMap::new();
        let mut src_counterpart = HashMap::new();
        let mut tgt_counterpart = HashMap::new();
        for id in target.literal_nodes() {
            if let Some(text) = target.literal_text(id) {
                if let Some(&src_id) = src_by_text.get(text) {
                    if !shared.contains_key(text) {
                        shared.insert(text.to_string(), (src_id, id));
                        src_counterpart.insert(src_id, id);
                        tgt_counterpart.insert(id, src_id);
                    }
                }
            }
        }
        Ok(KGPair {
            source,
            target,
            shared_literals: shared,
            src_counterpart,
            tgt_counterpart,
        })
    }

    pub fn graph(&self, side: Side) -> &KnowledgeGraph {
        match side {
            Side::Source => &self.source,
            Side::Target => &self.target,
        }
    }

    pub fn schema(&self) -> &RelationPartition {
        self.source.schema()
    }

    pub fn shared_literals(&self) -> &BTreeMap<String, (NodeId, NodeId)> {
        &self.shared_literals
    }

    /// Counterpart of literal `j` on the other graph, if the literal text
    /// is shared.
    pub fn counterpart(&self, side: Side, j: NodeId) -> Option<NodeId> {
        match side {
            Side::Source => self.src_counterpart.get(&j).copied(),
            Side::Target => self.tgt_counterpart.get(&j).copied(),
        }
    }

    /// Cross-KG degree of literal `j` living on `side`: the number of
    /// distinct entities adjacent to `j` on its own graph, and to its
    /// counterpart on the other graph (0 when there is no counterpart).
    pub fn cross_degree(&self, side: Side, j: NodeId) -> Result<(usize, usize)> {
        let own = self.graph(side);
        if j.idx() >= own.node_count() {
            return Err(KgError::Lookup(format!("node {j} not in graph")));
        }
        let d = own.entity_degree(j);
        let d_prime = match self.counterpart(side, j) {
            Some(cp) => self.graph(side.flip()).entity_degree(cp),
            None => 0,
        };
        Ok((d, d_prime))
    }

    /// Candidate set of entity `i` on `side`: entities on the other graph
    /// reachable through a shared literal under the same relation.
    pub fn candidate_set(&self, side: Side, i: NodeId) -> Vec<NodeId> {
        let own = self.graph(side);
        let other = self.graph(side.flip());
        let mut found: HashSet<NodeId> = HashSet::new();
        for &(r, j) in own.out_edges(i) {
            if own.is_entity(j) {
                continue;
            }
            if let Some(jp) = self.counterpart(side, j) {
                for &(r2, head) in other.in_edges(jp) {
                    if r2 == r {
                        found.insert(head);
                    }
                }
            }
        }
        let mut out: Vec<NodeId> = found.into_iter().collect();
        out.sort();
        out
    }
}

/// A labeled cross-KG entity pair.
#[derive(Copy, Clone, Eq, PartialEq, Debug)]
pub struct AlignmentPair {
    pub src: NodeId,
    pub tgt: NodeId,
    pub positive: bool,
}

/// Labeled cross-KG entity pairs. Split assignment lives in the training
/// module so that all ablation variants can share one membership.
#[derive(Debug, Clone, Default)]
pub struct AlignmentDataset {
    pub pairs: Vec<AlignmentPair>,
}

impl AlignmentDataset {
    pub fn positives(&self) -> impl Iterator<Item = &AlignmentPair> {
        self.pairs.iter().filter(|p| p.positive)
    }

    pub fn write(&self, pair: &KGPair) -> String {
        let mut out = String::new();
        for p in &self.pairs {
            out.push_str(&format!(
                "{}\t{}\t{}\n",
                pair.source.node_name(p.src),
                pair.target.node_name(p.tgt),
                if p.positive { 1 } else { 0 }
            ));
        }
        out
    }

    pub fn load(path: &Path, pair: &KGPair) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| KgError::io(path.display().to_string(), e))?;
        let mut pairs = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(KgError::Parse {
                    path: path.display().to_string(),
                    line: lineno + 1,
                    msg: format!("expected 3 tab-separated fields, got {}", fields.len()),
                });
            }
            let src = pair.source.lookup(fields[0]).ok_or_else(|| {
                KgError::Lookup(format!("pair source entity `{}` not in graph", fields[0]))
            })?;
            let tgt = pair.target.lookup(fields[1]).ok_or_else(|| {
                KgError::Lookup(format!("pair target entity `{}` not in graph", fields[1]))
            })?;
            let positive = match fields[2] {
                "1" => true,
                "0" => false,
                other => {
                    return Err(KgError::Parse {
                        path: path.display().to_string(),
                        line: lineno + 1,
                        msg: format!("bad label `{other}`"),
                    })
                }
            };
            pairs.push(AlignmentPair {
                src,
                tgt,
                positive,
            });
        }
        Ok(AlignmentDataset { pairs })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn two_rel_schema() -> RelationPartition {
        RelationPartition::new(vec![
            ("hasVendor".into(), true),
            ("hasImpact".into(), false),
        ])
        .unwrap()
    }

    fn write_temp(dir: &tempfile::TempDir, name: &str, content: &str) -> std::path::PathBuf {
        let path = dir.path().join(name);
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(content.as_bytes()).unwrap();
        path
    }

    #[test]
    fn load_small_graph() {
        let dir = tempfile::tempdir().unwrap();
        let nodes = write_temp(
            &dir,
            "nodes.tsv",
            "v1\tvulnerability\tentity\t-\nl1\tvendor\tliteral\tSiemens\nl2\timpact\tliteral\tdenial of service\n",
        );
        let triples = write_temp(&dir, "triples.tsv", "v1\thasVendor\tl1\nv1\thasImpact\tl2\n");
        let kg = KnowledgeGraph::load(&nodes, &triples, two_rel_schema()).unwrap();
        assert_eq!(kg.node_count(), 3);
        assert_eq!(kg.triple_count(), 2);
        // literal text is normalized on load
        let l1 = kg.lookup("l1").unwrap();
        assert_eq!(kg.literal_text(l1), Some("siemens"));
    }

    #[test]
    fn load_empty_files() {
        let dir = tempfile::tempdir().unwrap();
        let nodes = write_temp(&dir, "nodes.tsv", "");
        let triples = write_temp(&dir, "triples.tsv", "");
        let kg = KnowledgeGraph::load(&nodes, &triples, two_rel_schema()).unwrap();
        assert_eq!(kg.node_count(), 0);
        assert_eq!(kg.triple_count(), 0);
    }

    #[test]
    fn malformed_triple_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let nodes = write_temp(&dir, "nodes.tsv", "v1\tvulnerability\tentity\t-\n");
        let triples = write_temp(&dir, "triples.tsv", "v1\thasVendor\n");
        let err = KnowledgeGraph::load(&nodes, &triples, two_rel_schema()).unwrap_err();
        match err {
            KgError::Parse { line, .. } => assert_eq!(line, 1),
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn unknown_relation_is_schema_error() {
        let dir = tempfile::tempdir().unwrap();
        let nodes = write_temp(
            &dir,
            "nodes.tsv",
            "v1\tvulnerability\tentity\t-\nl1\tvendor\tliteral\tabb\n",
        );
        let triples = write_temp(&dir, "triples.tsv", "v1\thasBogus\tl1\n");
        let err = KnowledgeGraph::load(&nodes, &triples, two_rel_schema()).unwrap_err();
        assert!(matches!(err, KgError::Schema(_)));
    }

    #[test]
    fn literal_head_rejected() {
        let mut b = KnowledgeGraph::builder(two_rel_schema());
        b.add_node("v1", "vulnerability", NodeKind::Entity, None).unwrap();
        b.add_node("l1", "vendor", NodeKind::Literal, Some("abb")).unwrap();
        let err = b.add_triple("l1", "hasVendor", "v1").unwrap_err();
        assert!(matches!(err, KgError::Schema(_)));
    }

    #[test]
    fn round_trip_preserves_triples() {
        let dir = tempfile::tempdir().unwrap();
        let nodes = write_temp(
            &dir,
            "nodes.tsv",
            "v1\tvulnerability\tentity\t-\nl1\tvendor\tliteral\tsiemens\nl2\timpact\tliteral\tdos\n",
        );
        let triples = write_temp(&dir, "triples.tsv", "v1\thasVendor\tl1\nv1\thasImpact\tl2\n");
        let kg = KnowledgeGraph::load(&nodes, &triples, two_rel_schema()).unwrap();
        let nodes2 = write_temp(&dir, "nodes2.tsv", &kg.write_nodes());
        let triples2 = write_temp(&dir, "triples2.tsv", &kg.write_triples());
        let kg2 = KnowledgeGraph::load(&nodes2, &triples2, two_rel_schema()).unwrap();
        assert_eq!(kg.write_triples(), kg2.write_triples());
        assert_eq!(kg.write_nodes(), kg2.write_nodes());
    }

    #[test]
    fn partition_rho() {
        let p = RelationPartition::parse(
            "relation a profiling=true\nrelation b profiling=true\nrelation c profiling=true\n\
             relation d profiling=true\nrelation e profiling=true\nrelation f profiling=false\n\
             relation g profiling=false\nrelation h profiling=false\nrelation i profiling=false\n\
             relation j profiling=false\n",
        )
        .unwrap();
        assert_eq!(p.rho(), 0.5);
        assert_eq!(p.len(), 10);
    }

    #[test]
    fn default_schema_profiling_set() {
        let p = RelationPartition::default_schema();
        for name in [
            "hasWeakness",
            "hasVendor",
            "hasProduct",
            "hasImpact",
            "hasDiscoverer",
        ] {
            let id = p.rel_id(name).unwrap();
            assert!(p.is_profiling(id), "{name} should be profiling");
        }
        assert_eq!(p.profiling_count(), 5);
        assert!((p.rho() - 5.0 / 11.0).abs() < 1e-12);
    }

    #[test]
    fn all_profiling_rejects_any_epsilon() {
        let p = RelationPartition::parse("relation a profiling=true\nrelation b profiling=true\n")
            .unwrap();
        assert_eq!(p.rho(), 1.0);
        assert!(p.validate_epsilon(0.01).is_err());
    }

    #[test]
    fn duplicate_relation_is_config_error() {
        let err =
            RelationPartition::parse("relation a profiling=true\nrelation a profiling=false\n")
                .unwrap_err();
        assert!(matches!(err, KgError::Config(_)));
    }

    fn build_pair() -> KGPair {
        // 12-entity fixture: literal "scada" linked to 5 source entities and
        // 7 target entities.
        let schema = two_rel_schema();
        let mut bs = KnowledgeGraph::builder(schema.clone());
        bs.add_node("shared", "vendor", NodeKind::Literal, Some("SCADA")).unwrap();
        for i in 0..5 {
            let name = format!("s{i}");
            bs.add_node(&name, "vulnerability", NodeKind::Entity, None).unwrap();
            bs.add_triple(&name, "hasVendor", "shared").unwrap();
        }
        bs.add_node("only_src", "impact", NodeKind::Literal, Some("dos")).unwrap();
        bs.add_triple("s0", "hasImpact", "only_src").unwrap();
        let mut bt = KnowledgeGraph::builder(schema);
        bt.add_node("shared", "vendor", NodeKind::Literal, Some("scada")).unwrap();
        for i in 0..7 {
            let name = format!("t{i}");
            bt.add_node(&name, "vulnerability", NodeKind::Entity, None).unwrap();
            bt.add_triple(&name, "hasVendor", "shared").unwrap();
        }
        KGPair::new(bs.build().unwrap(), bt.build().unwrap()).unwrap()
    }

    #[test]
    fn cross_degree_counts_entities() {
        let pair = build_pair();
        let j = pair.source.lookup("shared").unwrap();
        assert_eq!(pair.cross_degree(Side::Source, j).unwrap(), (5, 7));
    }

    #[test]
    fn cross_degree_no_counterpart() {
        let pair = build_pair();
        let j = pair.source.lookup("only_src").unwrap();
        assert_eq!(pair.cross_degree(Side::Source, j).unwrap(), (1, 0));
    }

    #[test]
    fn cross_degree_symmetric_under_role_swap() {
        let pair = build_pair();
        let j = pair.source.lookup("shared").unwrap();
        let (d, dp) = pair.cross_degree(Side::Source, j).unwrap();
        let swapped = KGPair::new(pair.target.clone(), pair.source.clone()).unwrap();
        let j2 = swapped.source.lookup("shared").unwrap();
        let (e, ep) = swapped.cross_degree(Side::Source, j2).unwrap();
        assert_eq!((d, dp), (ep, e));
    }

    #[test]
    fn candidate_set_same_relation_only() {
        // i has vendor "siemens" shared by exactly targets {a, b} via
        // hasVendor; a third target touches the literal through a different
        // relation and must not qualify.
        let schema = two_rel_schema();
        let mut bs = KnowledgeGraph::builder(schema.clone());
        bs.add_node("i", "vulnerability", NodeKind::Entity, None).unwrap();
        bs.add_node("lv", "vendor", NodeKind::Literal, Some("siemens")).unwrap();
        bs.add_triple("i", "hasVendor", "lv").unwrap();
        let mut bt = KnowledgeGraph::builder(schema);
        bt.add_node("lv", "vendor", NodeKind::Literal, Some("siemens")).unwrap();
        for name in ["a", "b", "c"] {
            bt.add_node(name, "vulnerability", NodeKind::Entity, None).unwrap();
        }
        bt.add_triple("a", "hasVendor", "lv").unwrap();
        bt.add_triple("b", "hasVendor", "lv").unwrap();
        bt.add_triple("c", "hasImpact", "lv").unwrap();
        let pair = KGPair::new(bs.build().unwrap(), bt.build().unwrap()).unwrap();
        let i = pair.source.lookup("i").unwrap();
        let c = pair.candidate_set(Side::Source, i);
        let names: Vec<&str> = c.iter().map(|&id| pair.target.node_name(id)).collect();
        assert_eq!(names, vec!["a", "b"]);
    }

    #[test]
    fn candidate_set_empty_without_overlap() {
        let schema = two_rel_schema();
        let mut bs = KnowledgeGraph::builder(schema.clone());
        bs.add_node("i", "vulnerability", NodeKind::Entity, None).unwrap();
        bs.add_node("lv", "vendor", NodeKind::Literal, Some("abb")).unwrap();
        bs.add_triple("i", "hasVendor", "lv").unwrap();
        let mut bt = KnowledgeGraph::builder(schema);
        bt.add_node("lv", "vendor", NodeKind::Literal, Some("siemens")).unwrap();
        bt.add_node("a", "vulnerability", NodeKind::Entity, None).unwrap();
        bt.add_triple("a", "hasVendor", "lv").unwrap();
        let pair = KGPair::new(bs.build().unwrap(), bt.build().unwrap()).unwrap();
        let i = pair.source.lookup("i").unwrap();
        assert!(pair.candidate_set(Side::Source, i).is_empty());
    }

    #[test]
    fn candidate_set_identity_on_copy() {
        let schema = two_rel_schema();
        let build = || {
            let mut b = KnowledgeGraph::builder(schema.clone());
            b.add_node("i", "vulnerability", NodeKind::Entity, None).unwrap();
            b.add_node("lv", "vendor", NodeKind::Literal, Some("siemens")).unwrap();
            b.add_triple("i", "hasVendor", "lv").unwrap();
            b.build().unwrap()
        };
        let pair = KGPair::new(build(), build()).unwrap();
        let i = pair.source.lookup("i").unwrap();
        let c = pair.candidate_set(Side::Source, i);
        assert_eq!(c.len(), 1);
        assert_eq!(pair.target.node_name(c[0]), "i");
    }

    #[test]
    fn normalization_idempotent_and_collapsing() {
        assert_eq!(normalize_literal("  SINEMA   Remote "), "sinema remote");
        let once = normalize_literal("Denial Of  Service");
        assert_eq!(normalize_literal(&once), once);
    }
}
