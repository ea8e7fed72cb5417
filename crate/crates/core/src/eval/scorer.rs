//! Goodness providers for ranking, all in one KG's local id space.

use crate::kg::{FusedKg, KgId, RelationRef};
use crate::model::EncodedGraph;

/// Scores every entity of one KG as the missing element of a query.
pub trait Scorer: Sync {
    fn num_candidates(&self) -> usize;
    /// Goodness of `(h, r, c)` for `c = 0..num_candidates()`.
    fn tail_scores(&self, h: u32, r: u32) -> Vec<f64>;
    /// Goodness of `(c, r, t)` for `c = 0..num_candidates()`.
    fn head_scores(&self, r: u32, t: u32) -> Vec<f64>;
}

/// An individual model scoring its own KG.
pub struct LocalScorer<'a> {
    pub enc: &'a EncodedGraph,
}

impl Scorer for LocalScorer<'_> {
    fn num_candidates(&self) -> usize {
        self.enc.num_entities()
    }

    fn tail_scores(&self, h: u32, r: u32) -> Vec<f64> {
        (0..self.num_candidates() as u32)
            .map(|c| self.enc.score_triple(h, r, c))
            .collect()
    }

    fn head_scores(&self, r: u32, t: u32) -> Vec<f64> {
        (0..self.num_candidates() as u32)
            .map(|c| self.enc.score_triple(c, r, t))
            .collect()
    }
}

/// The fused model restricted to the entities of one KG.
pub struct FusedScorer<'a> {
    pub enc: &'a EncodedGraph,
    pub fused: &'a FusedKg,
    pub kg: KgId,
}

impl FusedScorer<'_> {
    fn offset(&self) -> u32 {
        self.fused.entity_range(self.kg).start
    }

    fn rel(&self, r: u32) -> u32 {
        self.fused.relation_to_global(RelationRef::new(self.kg, r))
    }
}

impl Scorer for FusedScorer<'_> {
    fn num_candidates(&self) -> usize {
        self.fused.entity_range(self.kg).len()
    }

    fn tail_scores(&self, h: u32, r: u32) -> Vec<f64> {
        let (o, rg) = (self.offset(), self.rel(r));
        self.fused
            .entity_range(self.kg)
            .map(|c| self.enc.score_triple(o + h, rg, c))
            .collect()
    }

    fn head_scores(&self, r: u32, t: u32) -> Vec<f64> {
        let (o, rg) = (self.offset(), self.rel(r));
        self.fused
            .entity_range(self.kg)
            .map(|c| self.enc.score_triple(c, rg, o + t))
            .collect()
    }
}

/// Sum of two scorers' goodness over the same candidates.
pub struct EnsembleScorer<A, B> {
    pub a: A,
    pub b: B,
}

impl<A: Scorer, B: Scorer> Scorer for EnsembleScorer<A, B> {
    fn num_candidates(&self) -> usize {
        assert_eq!(
            self.a.num_candidates(),
            self.b.num_candidates(),
            "ensemble over different candidate sets"
        );
        self.a.num_candidates()
    }

    fn tail_scores(&self, h: u32, r: u32) -> Vec<f64> {
        let mut s = self.a.tail_scores(h, r);
        for (x, y) in s.iter_mut().zip(self.b.tail_scores(h, r)) {
            *x += y;
        }
        s
    }

    fn head_scores(&self, r: u32, t: u32) -> Vec<f64> {
        let mut s = self.a.head_scores(r, t);
        for (x, y) in s.iter_mut().zip(self.b.head_scores(r, t)) {
            *x += y;
        }
        s
    }
}

/// `goodness_i(t) + goodness_f(map(t))` for triples of KG `kg`.
pub fn ensemble_scorer<'a>(
    individual: &'a EncodedGraph,
    fused_model: &'a EncodedGraph,
    fused: &'a FusedKg,
    kg: KgId,
) -> EnsembleScorer<LocalScorer<'a>, FusedScorer<'a>> {
    EnsembleScorer {
        a: LocalScorer { enc: individual },
        b: FusedScorer {
            enc: fused_model,
            fused,
            kg,
        },
    }
}
