use std::collections::{BTreeMap, HashMap};

use serde::Serialize;

use super::{EntityRef, MultiKgStore};

/// Disjoint sets with union by size and path halving.
#[derive(Clone, Debug)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        true
    }

    /// Members grouped by component; groups ordered by smallest member.
    pub fn groups(&mut self) -> Vec<Vec<usize>> {
        let mut by_root: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        let mut first_of_root: HashMap<usize, usize> = HashMap::new();
        for x in 0..self.parent.len() {
            let r = self.find(x);
            let key = *first_of_root.entry(r).or_insert(x);
            by_root.entry(key).or_default().push(x);
        }
        by_root.into_values().collect()
    }
}

/// Interns every entity mentioned by an alignment and returns the connected
/// components of the alignment graph, each sorted, ordered by first member.
pub fn alignment_components(store: &MultiKgStore) -> Vec<Vec<EntityRef>> {
    let mut ids: BTreeMap<EntityRef, usize> = BTreeMap::new();
    for a in &store.alignments {
        ids.entry(a.left()).or_insert(0);
        ids.entry(a.right()).or_insert(0);
    }
    let entities: Vec<EntityRef> = ids.keys().copied().collect();
    for (i, v) in ids.values_mut().enumerate() {
        *v = i;
    }
    let mut uf = UnionFind::new(entities.len());
    for a in &store.alignments {
        uf.union(ids[&a.left()], ids[&a.right()]);
    }
    uf.groups()
        .into_iter()
        .map(|g| g.into_iter().map(|i| entities[i]).collect())
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComponentReport {
    /// Component size -> number of components of that size.
    pub histogram: BTreeMap<usize, usize>,
    pub threshold: usize,
    /// Components strictly larger than `threshold`.
    pub flagged: Vec<Vec<EntityRef>>,
}

impl ComponentReport {
    pub fn num_entities(&self) -> usize {
        self.histogram.iter().map(|(s, c)| s * c).sum()
    }

    pub fn largest(&self) -> usize {
        self.histogram.keys().next_back().copied().unwrap_or(0)
    }
}

/// Connected-component audit of the alignment graph.
pub fn alignment_component_report(store: &MultiKgStore, threshold: usize) -> ComponentReport {
    let mut histogram = BTreeMap::new();
    let mut flagged = Vec::new();
    for comp in alignment_components(store) {
        *histogram.entry(comp.len()).or_insert(0) += 1;
        if comp.len() > threshold {
            flagged.push(comp);
        }
    }
    ComponentReport {
        histogram,
        threshold,
        flagged,
    }
}
