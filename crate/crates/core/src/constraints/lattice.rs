//! Dependency order over constraint records.
//!
//! Layers are ordered structural, semantic, logic. Within a family, `a`
//! precedes `b` when `b` reads a symbol that `a` defines.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use serde::{Deserialize, Serialize};

use super::{ConstraintError, ConstraintRecord, Layer};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DependencyLattice {
    layers: BTreeMap<String, Layer>,
    /// Direct same-family edges `(before, after)`.
    edges: BTreeSet<(String, String)>,
}

impl DependencyLattice {
    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.layers.keys().map(String::as_str)
    }

    pub fn layer(&self, id: &str) -> Option<Layer> {
        self.layers.get(id).copied()
    }

    pub fn edges(&self) -> impl Iterator<Item = (&str, &str)> {
        self.edges.iter().map(|(a, b)| (a.as_str(), b.as_str()))
    }

    /// Strict order: `a` must hold (or be repaired) before `b`.
    pub fn precedes(&self, a: &str, b: &str) -> bool {
        if a == b {
            return false;
        }
        match (self.layer(a), self.layer(b)) {
            (Some(la), Some(lb)) if la != lb => la < lb,
            (Some(_), Some(_)) => self.reaches(a, b),
            _ => false,
        }
    }

    fn reaches(&self, a: &str, b: &str) -> bool {
        let mut stack = vec![a];
        let mut seen = BTreeSet::new();
        while let Some(x) = stack.pop() {
            for (s, t) in &self.edges {
                if s == x && seen.insert(t.as_str()) {
                    if t == b {
                        return true;
                    }
                    stack.push(t);
                }
            }
        }
        false
    }

    /// A linear extension: by layer, then dependency order, ties by id.
    pub fn linear_order(&self) -> Vec<String> {
        let mut indeg: HashMap<&str, usize> = self.layers.keys().map(|k| (k.as_str(), 0)).collect();
        for (_, b) in &self.edges {
            *indeg.get_mut(b.as_str()).expect("edge endpoints are records") += 1;
        }
        let mut out = Vec::with_capacity(self.layers.len());
        let mut ready: BTreeSet<(Layer, &str)> = indeg
            .iter()
            .filter(|(_, &d)| d == 0)
            .map(|(k, _)| (self.layers[*k], *k))
            .collect();
        while let Some(first) = ready.iter().next().copied() {
            ready.remove(&first);
            out.push(first.1.to_owned());
            for (a, b) in &self.edges {
                if a == first.1 {
                    let d = indeg.get_mut(b.as_str()).expect("known");
                    *d -= 1;
                    if *d == 0 {
                        ready.insert((self.layers[b], b.as_str()));
                    }
                }
            }
        }
        out
    }
}

pub fn build_dependency_lattice(records: &[ConstraintRecord]) -> Result<DependencyLattice, ConstraintError> {
    let mut lattice = DependencyLattice::default();
    for r in records {
        lattice.layers.insert(r.id.clone(), r.layer);
    }
    let refs: Vec<Vec<String>> = records.iter().map(|r| r.body.references()).collect();
    for (i, a) in records.iter().enumerate() {
        if a.defines.is_empty() {
            continue;
        }
        for (j, b) in records.iter().enumerate() {
            if i != j && a.family == b.family && refs[j].iter().any(|s| a.defines.contains(s)) {
                lattice.edges.insert((a.id.clone(), b.id.clone()));
            }
        }
    }

    let mut g = DiGraph::<&str, ()>::new();
    let nodes: HashMap<&str, _> = lattice.layers.keys().map(|k| (k.as_str(), g.add_node(k.as_str()))).collect();
    for (a, b) in &lattice.edges {
        g.add_edge(nodes[a.as_str()], nodes[b.as_str()], ());
    }
    for scc in tarjan_scc(&g) {
        if scc.len() > 1 {
            let mut cycle: Vec<String> = scc.iter().map(|n| g[*n].to_owned()).collect();
            cycle.sort();
            let first = cycle[0].clone();
            cycle.push(first);
            return Err(ConstraintError::DependencyCycle(cycle));
        }
    }
    Ok(lattice)
}
