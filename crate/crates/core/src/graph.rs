//! Provenance-tracked typed graphs of domain entities.
//!
//! A [`TypedGraph`] is built from a JSON declaration, several graphs can be
//! merged along overlap hints with union-find, and free-text names can be
//! aligned against the graph's entities by fuzzy name matching.

use std::collections::{BTreeMap, HashMap, HashSet};

use petgraph::unionfind::UnionFind;
use serde::{Deserialize, Serialize};

pub const DEFAULT_THETA_LINK: f64 = 0.85;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SourceRef {
    pub source_id: String,
    pub locator: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entity {
    pub id: String,
    pub name: String,
    pub kind: String,
    /// Attribute name to value type (`"integer"`, `"string"`, ...).
    #[serde(default)]
    pub attributes: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cardinality {
    pub min: u32,
    /// `None` is unbounded.
    pub max: Option<u32>,
}

impl Cardinality {
    pub const ANY: Cardinality = Cardinality { min: 0, max: None };

    pub fn admits(&self, n: usize) -> bool {
        n >= self.min as usize && self.max.is_none_or(|m| n <= m as usize)
    }
}

impl Default for Cardinality {
    fn default() -> Self {
        Cardinality::ANY
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Relation {
    pub id: String,
    pub src: String,
    pub dst: String,
    pub kind: String,
    #[serde(default)]
    pub cardinality: Cardinality,
}

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("graph declaration does not parse: {0}")]
    Parse(String),
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("edge {edge:?} references undeclared node {endpoint:?}")]
    DanglingEndpoint { edge: String, endpoint: String },
}

/// On-disk form of a graph.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphDeclaration {
    /// Name recorded as the provenance source of every element.
    #[serde(default)]
    pub source: Option<String>,
    #[serde(default)]
    pub nodes: Vec<Entity>,
    #[serde(default)]
    pub edges: Vec<EdgeDeclaration>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeDeclaration {
    /// Defaults to `src-kind->dst`.
    #[serde(default)]
    pub id: Option<String>,
    pub src: String,
    pub dst: String,
    pub kind: String,
    #[serde(default)]
    pub cardinality: Cardinality,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TypedGraph {
    nodes: Vec<Entity>,
    edges: Vec<Relation>,
    node_index: HashMap<String, usize>,
    edge_index: HashMap<String, usize>,
    provenance: HashMap<String, Vec<SourceRef>>,
}

impl TypedGraph {
    pub fn from_json(text: &str) -> Result<TypedGraph, GraphError> {
        let decl: GraphDeclaration =
            serde_json::from_str(text).map_err(|e| GraphError::Parse(e.to_string()))?;
        TypedGraph::build(decl)
    }

    /// Build a graph; every element gets a provenance entry pointing back
    /// at the declaration.
    pub fn build(decl: GraphDeclaration) -> Result<TypedGraph, GraphError> {
        let source = decl.source.unwrap_or_else(|| "declaration".to_owned());
        let mut g = TypedGraph::default();
        for (i, node) in decl.nodes.into_iter().enumerate() {
            let prov = SourceRef {
                source_id: source.clone(),
                locator: format!("nodes[{i}]"),
            };
            g.insert_node(node, vec![prov])?;
        }
        for (i, e) in decl.edges.into_iter().enumerate() {
            let id = e
                .id
                .unwrap_or_else(|| format!("{}-{}->{}", e.src, e.kind, e.dst));
            let prov = SourceRef {
                source_id: source.clone(),
                locator: format!("edges[{i}]"),
            };
            let rel = Relation {
                id,
                src: e.src,
                dst: e.dst,
                kind: e.kind,
                cardinality: e.cardinality,
            };
            g.insert_edge(rel, vec![prov])?;
        }
        Ok(g)
    }

    fn insert_node(&mut self, node: Entity, prov: Vec<SourceRef>) -> Result<(), GraphError> {
        if self.node_index.contains_key(&node.id) || self.edge_index.contains_key(&node.id) {
            return Err(GraphError::DuplicateId(node.id));
        }
        self.node_index.insert(node.id.clone(), self.nodes.len());
        self.provenance.insert(node.id.clone(), prov);
        self.nodes.push(node);
        Ok(())
    }

    fn insert_edge(&mut self, rel: Relation, prov: Vec<SourceRef>) -> Result<(), GraphError> {
        if self.node_index.contains_key(&rel.id) || self.edge_index.contains_key(&rel.id) {
            return Err(GraphError::DuplicateId(rel.id));
        }
        for endpoint in [&rel.src, &rel.dst] {
            if !self.node_index.contains_key(endpoint) {
                return Err(GraphError::DanglingEndpoint {
                    edge: rel.id.clone(),
                    endpoint: endpoint.clone(),
                });
            }
        }
        self.edge_index.insert(rel.id.clone(), self.edges.len());
        self.provenance.insert(rel.id.clone(), prov);
        self.edges.push(rel);
        Ok(())
    }

    pub fn nodes(&self) -> &[Entity] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Relation] {
        &self.edges
    }

    pub fn node(&self, id: &str) -> Option<&Entity> {
        self.node_index.get(id).map(|&i| &self.nodes[i])
    }

    pub fn edge(&self, id: &str) -> Option<&Relation> {
        self.edge_index.get(id).map(|&i| &self.edges[i])
    }

    /// Sort label of a node or edge: its kind.
    pub fn sort_of(&self, id: &str) -> Option<&str> {
        self.node(id)
            .map(|n| n.kind.as_str())
            .or_else(|| self.edge(id).map(|e| e.kind.as_str()))
    }

    pub fn provenance(&self, id: &str) -> &[SourceRef] {
        self.provenance.get(id).map_or(&[], Vec::as_slice)
    }

    pub fn nodes_of_kind<'a>(&'a self, kind: &'a str) -> impl Iterator<Item = &'a Entity> + 'a {
        self.nodes.iter().filter(move |n| n.kind == kind)
    }

    pub fn has_kind(&self, kind: &str) -> bool {
        self.nodes.iter().any(|n| n.kind == kind)
    }

    pub fn outgoing<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a Relation> + 'a {
        self.edges.iter().filter(move |e| e.src == id)
    }

    pub fn to_declaration(&self) -> GraphDeclaration {
        GraphDeclaration {
            source: None,
            nodes: self.nodes.clone(),
            edges: self
                .edges
                .iter()
                .map(|e| EdgeDeclaration {
                    id: Some(e.id.clone()),
                    src: e.src.clone(),
                    dst: e.dst.clone(),
                    kind: e.kind.clone(),
                    cardinality: e.cardinality,
                })
                .collect(),
        }
    }
}

/// A node of one of the graphs passed to [`merge_graphs`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NodeRef {
    pub graph: usize,
    pub node: String,
}

impl NodeRef {
    pub fn new(graph: usize, node: impl Into<String>) -> Self {
        NodeRef {
            graph,
            node: node.into(),
        }
    }
}

/// A proposed identification of two nodes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverlapHint {
    pub a: NodeRef,
    pub b: NodeRef,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RejectedHint {
    pub hint: OverlapHint,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct MergeOptions {
    /// Also identify nodes of equal kind whose canonical names are equal.
    pub auto_hints: bool,
}

#[derive(Debug, Clone)]
pub struct MergeOutcome {
    pub graph: TypedGraph,
    pub unions: usize,
    pub rejected: Vec<RejectedHint>,
}

/// Merge graphs by identifying the nodes named in `hints`.
///
/// A merged node takes its id, name and kind from the member in the
/// lowest-indexed graph; attributes and provenance are unioned. Node ids
/// that would collide between unrelated classes get a `#g<index>` suffix.
/// Edges that become identical after identification are merged.
pub fn merge_graphs(graphs: &[TypedGraph], hints: &[OverlapHint], opts: MergeOptions) -> MergeOutcome {
    let mut offsets = Vec::with_capacity(graphs.len());
    let mut total = 0;
    for g in graphs {
        offsets.push(total);
        total += g.nodes.len();
    }
    let locate = |graph: usize, i: usize| -> &Entity { &graphs[graph].nodes[i] };
    let mut owner = Vec::with_capacity(total);
    for (gi, g) in graphs.iter().enumerate() {
        for i in 0..g.nodes.len() {
            owner.push((gi, i));
        }
    }

    let mut uf = UnionFind::<usize>::new(total);
    let mut unions = 0;
    let mut rejected = Vec::new();
    let global = |r: &NodeRef| -> Option<usize> {
        graphs
            .get(r.graph)
            .and_then(|g| g.node_index.get(&r.node))
            .map(|&i| offsets[r.graph] + i)
    };
    for hint in hints {
        let (Some(a), Some(b)) = (global(&hint.a), global(&hint.b)) else {
            log::warn!("overlap hint names an unknown node: {hint:?}");
            rejected.push(RejectedHint {
                hint: hint.clone(),
                reason: "unknown node".into(),
            });
            continue;
        };
        let (ka, kb) = (&locate(owner[a].0, owner[a].1).kind, &locate(owner[b].0, owner[b].1).kind);
        if ka != kb {
            log::warn!("overlap hint joins kind {ka:?} with {kb:?}; rejected");
            rejected.push(RejectedHint {
                hint: hint.clone(),
                reason: format!("kind mismatch: {ka} vs {kb}"),
            });
            continue;
        }
        if uf.union(a, b) {
            unions += 1;
        }
    }
    if opts.auto_hints {
        let mut first: HashMap<(String, &str), usize> = HashMap::new();
        for (x, &(gi, i)) in owner.iter().enumerate() {
            let n = locate(gi, i);
            match first.get(&(canonical_name(&n.name), n.kind.as_str())) {
                Some(&y) => {
                    if uf.union(x, y) {
                        unions += 1;
                    }
                }
                None => {
                    first.insert((canonical_name(&n.name), n.kind.as_str()), x);
                }
            }
        }
    }

    // Representative of each class: the member with the smallest global index.
    let mut rep = vec![usize::MAX; total];
    for x in 0..total {
        let root = uf.find(x);
        if rep[root] == usize::MAX {
            rep[root] = x;
        }
    }
    let class_rep = |x: usize| rep[uf.find(x)];

    // Choose ids: first claimant of an id keeps it.
    let mut taken: HashSet<String> = HashSet::new();
    let mut merged_id: HashMap<usize, String> = HashMap::new();
    for x in 0..total {
        if class_rep(x) != x {
            continue;
        }
        let (gi, i) = owner[x];
        let base = &locate(gi, i).id;
        let mut id = base.clone();
        if taken.contains(&id) {
            id = format!("{base}#g{gi}");
            let mut k = 1;
            while taken.contains(&id) {
                id = format!("{base}#g{gi}.{k}");
                k += 1;
            }
        }
        taken.insert(id.clone());
        merged_id.insert(x, id);
    }

    let mut out = TypedGraph::default();
    let mut slot: HashMap<usize, usize> = HashMap::new();
    for x in 0..total {
        let r = class_rep(x);
        let (gi, i) = owner[x];
        let n = locate(gi, i);
        let prov = graphs[gi].provenance(&n.id);
        match slot.get(&r) {
            None => {
                let id = merged_id[&r].clone();
                let entity = Entity {
                    id: id.clone(),
                    ..n.clone()
                };
                slot.insert(r, out.nodes.len());
                out.node_index.insert(id.clone(), out.nodes.len());
                out.provenance.insert(id, prov.to_vec());
                out.nodes.push(entity);
            }
            Some(&s) => {
                let target = &mut out.nodes[s];
                for (k, v) in &n.attributes {
                    target.attributes.entry(k.clone()).or_insert_with(|| v.clone());
                }
                let p = out.provenance.get_mut(&target.id).expect("node has provenance");
                for s in prov {
                    if !p.contains(s) {
                        p.push(s.clone());
                    }
                }
            }
        }
    }

    let mut edge_key: HashMap<(String, String, String), usize> = HashMap::new();
    for (gi, g) in graphs.iter().enumerate() {
        let map = |id: &str| merged_id[&class_rep(offsets[gi] + g.node_index[id])].clone();
        for e in &g.edges {
            let (src, dst) = (map(&e.src), map(&e.dst));
            let prov = g.provenance(&e.id);
            let key = (src.clone(), e.kind.clone(), dst.clone());
            if let Some(&k) = edge_key.get(&key) {
                let id = out.edges[k].id.clone();
                let p = out.provenance.get_mut(&id).expect("edge has provenance");
                for s in prov {
                    if !p.contains(s) {
                        p.push(s.clone());
                    }
                }
                continue;
            }
            let mut id = e.id.clone();
            if taken.contains(&id) {
                id = format!("{}#g{gi}", e.id);
                let mut k = 1;
                while taken.contains(&id) {
                    id = format!("{}#g{gi}.{k}", e.id);
                    k += 1;
                }
            }
            taken.insert(id.clone());
            edge_key.insert(key, out.edges.len());
            out.edge_index.insert(id.clone(), out.edges.len());
            out.provenance.insert(id.clone(), prov.to_vec());
            out.edges.push(Relation {
                id,
                src,
                dst,
                kind: e.kind.clone(),
                cardinality: e.cardinality,
            });
        }
    }

    MergeOutcome {
        graph: out,
        unions,
        rejected,
    }
}

/// Lowercased alphanumeric words of `name`, split at case changes and at
/// non-alphanumeric characters, concatenated.
pub fn canonical_name(name: &str) -> String {
    canonical_words(name).concat()
}

pub fn canonical_words(name: &str) -> Vec<String> {
    let chars: Vec<char> = name.chars().collect();
    let mut words = Vec::new();
    let mut cur = String::new();
    for (i, &c) in chars.iter().enumerate() {
        if !c.is_alphanumeric() {
            if !cur.is_empty() {
                words.push(std::mem::take(&mut cur));
            }
            continue;
        }
        let boundary = c.is_uppercase()
            && i > 0
            && (chars[i - 1].is_lowercase()
                || chars[i - 1].is_ascii_digit()
                || (chars[i - 1].is_uppercase() && chars.get(i + 1).is_some_and(|n| n.is_lowercase())));
        if boundary && !cur.is_empty() {
            words.push(std::mem::take(&mut cur));
        }
        cur.extend(c.to_lowercase());
    }
    if !cur.is_empty() {
        words.push(cur);
    }
    words
}

/// `1 - levenshtein / max_len` over canonical names; 1.0 when both are empty.
pub fn name_similarity(a: &str, b: &str) -> f64 {
    strsim::normalized_levenshtein(&canonical_name(a), &canonical_name(b))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Disposition {
    Aligned,
    NewNode,
    Quarantined,
}

/// What to do with a candidate whose best match is below threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MissPolicy {
    #[default]
    Quarantine,
    NewNode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentResult {
    pub candidate_id: String,
    pub matched: Option<String>,
    /// Best similarity found (0 for an empty graph).
    pub score: f64,
    pub disposition: Disposition,
}

/// Match a candidate name to the most similar node. Ties go to the node
/// declared first.
pub fn align_candidate(
    candidate_id: &str,
    name: &str,
    graph: &TypedGraph,
    theta_link: f64,
    miss: MissPolicy,
) -> AlignmentResult {
    let canon = canonical_name(name);
    let mut best: Option<(&Entity, f64)> = None;
    for n in &graph.nodes {
        let s = strsim::normalized_levenshtein(&canon, &canonical_name(&n.name));
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((n, s));
        }
    }
    match best {
        Some((n, s)) if s >= theta_link => AlignmentResult {
            candidate_id: candidate_id.to_owned(),
            matched: Some(n.id.clone()),
            score: s,
            disposition: Disposition::Aligned,
        },
        other => AlignmentResult {
            candidate_id: candidate_id.to_owned(),
            matched: None,
            score: other.map_or(0.0, |(_, s)| s),
            disposition: match miss {
                MissPolicy::Quarantine => Disposition::Quarantined,
                MissPolicy::NewNode => Disposition::NewNode,
            },
        },
    }
}
