//! Message-passing adjacency built from training triples.

use crate::kg::{FusedKg, LocalTriple};

/// Edges of one message direction, in insertion order.
///
/// `norm[e]` is `1 / (number of edges of this direction entering dst[e])`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DirectedEdges {
    pub src: Vec<usize>,
    pub rel: Vec<usize>,
    pub dst: Vec<usize>,
    pub norm: Vec<f64>,
}

impl DirectedEdges {
    fn push(&mut self, src: usize, rel: usize, dst: usize) {
        self.src.push(src);
        self.rel.push(rel);
        self.dst.push(dst);
    }

    fn finish(&mut self, n_nodes: usize) {
        let mut indeg = vec![0usize; n_nodes];
        for &d in &self.dst {
            indeg[d] += 1;
        }
        self.norm = self.dst.iter().map(|&d| 1.0 / indeg[d] as f64).collect();
    }

    pub fn len(&self) -> usize {
        self.src.len()
    }

    pub fn is_empty(&self) -> bool {
        self.src.is_empty()
    }
}

/// Adjacency of one encoded graph.
///
/// A triple `(h, r, t)` yields an `out` edge `h -> t` carrying relation `r`
/// and an `in` edge `t -> h` carrying the inverse relation `n_relations + r`.
/// Alignment pairs yield one `align` edge in each direction.
#[derive(Clone, Debug, PartialEq)]
pub struct Adjacency {
    pub n_entities: usize,
    pub n_relations: usize,
    pub out_edges: DirectedEdges,
    pub in_edges: DirectedEdges,
    /// `None` for individual KGs; `Some` (possibly empty) for the fused graph.
    pub align_edges: Option<DirectedEdges>,
}

impl Adjacency {
    pub fn from_triples(n_entities: usize, n_relations: usize, triples: &[LocalTriple]) -> Self {
        let mut out_edges = DirectedEdges::default();
        let mut in_edges = DirectedEdges::default();
        for t in triples {
            let (h, r, tl) = (t.head as usize, t.relation as usize, t.tail as usize);
            out_edges.push(h, r, tl);
            in_edges.push(tl, n_relations + r, h);
        }
        out_edges.finish(n_entities);
        in_edges.finish(n_entities);
        Self {
            n_entities,
            n_relations,
            out_edges,
            in_edges,
            align_edges: None,
        }
    }

    /// Fused-graph adjacency: all training triples plus alignment edges.
    pub fn from_fused(fused: &FusedKg) -> Self {
        let mut adj = Self::from_triples(fused.num_entities(), fused.num_relations(), &fused.triples);
        let align_rel = fused.align_relation() as usize;
        let mut align = DirectedEdges::default();
        for &(a, b) in &fused.align_edges {
            align.push(a as usize, align_rel, b as usize);
            align.push(b as usize, align_rel, a as usize);
        }
        align.finish(adj.n_entities);
        adj.align_edges = Some(align);
        adj
    }

    pub fn max_in_degree(&self) -> usize {
        let mut deg = vec![0usize; self.n_entities];
        for &d in self
            .out_edges
            .dst
            .iter()
            .chain(&self.in_edges.dst)
            .chain(self.align_edges.iter().flat_map(|a| &a.dst))
        {
            deg[d] += 1;
        }
        deg.into_iter().max().unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn directions_and_normalization() {
        let triples = [
            LocalTriple::new(0, 0, 2),
            LocalTriple::new(1, 1, 2),
            LocalTriple::new(2, 0, 0),
        ];
        let adj = Adjacency::from_triples(3, 2, &triples);
        assert_eq!(adj.out_edges.dst, vec![2, 2, 0]);
        assert_eq!(adj.out_edges.norm, vec![0.5, 0.5, 1.0]);
        assert_eq!(adj.in_edges.rel, vec![2, 3, 2]);
        assert_eq!(adj.in_edges.dst, vec![0, 1, 2]);
        assert_eq!(adj.in_edges.norm, vec![1.0, 1.0, 1.0]);
        assert!(adj.align_edges.is_none());
        assert_eq!(adj.max_in_degree(), 3);
    }
}
