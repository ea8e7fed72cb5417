//! Triple decoders on the goodness scale (higher is better).

use super::encoder::{EncodedGraph, EncodedVars};
use super::params::ScoreFn;
use super::tape::{Tape, Var};

impl ScoreFn {
    /// TransE: `-‖h + r - t‖`; DistMult: `Σ h_k r_k t_k`.
    pub fn goodness(self, h: &[f64], r: &[f64], t: &[f64]) -> f64 {
        debug_assert!(h.len() == r.len() && r.len() == t.len());
        match self {
            ScoreFn::TransEL1 => {
                let d: f64 = h.iter().zip(r).zip(t).map(|((a, b), c)| ((a + b) - c).abs()).sum();
                -d
            }
            ScoreFn::TransEL2 => {
                let d: f64 = h
                    .iter()
                    .zip(r)
                    .zip(t)
                    .map(|((a, b), c)| {
                        let x = (a + b) - c;
                        x * x
                    })
                    .sum();
                -d.sqrt()
            }
            ScoreFn::DistMult => h.iter().zip(r).zip(t).map(|((a, b), c)| (a * b) * c).sum(),
        }
    }
}

/// Goodness of one triple given raw vectors.
pub fn score(score_fn: ScoreFn, h: &[f64], r: &[f64], t: &[f64]) -> f64 {
    score_fn.goodness(h, r, t)
}

impl EncodedGraph {
    pub fn score_triple(&self, h: u32, r: u32, t: u32) -> f64 {
        self.score_fn.goodness(
            self.entity_out.row(h as usize),
            self.relation_out.row(r as usize),
            self.entity_out.row(t as usize),
        )
    }

    /// Goodness of `(h, r, c)` for every candidate tail `c`.
    pub fn score_tails(&self, h: u32, r: u32, candidates: &[u32]) -> Vec<f64> {
        candidates.iter().map(|&c| self.score_triple(h, r, c)).collect()
    }

    /// Goodness of `(c, r, t)` for every candidate head `c`.
    pub fn score_heads(&self, r: u32, t: u32, candidates: &[u32]) -> Vec<f64> {
        candidates.iter().map(|&c| self.score_triple(c, r, t)).collect()
    }

    /// Goodness of `(h, c, t)` for every candidate relation `c`.
    pub fn score_relations(&self, h: u32, t: u32, candidates: &[u32]) -> Vec<f64> {
        candidates.iter().map(|&c| self.score_triple(h, c, t)).collect()
    }
}

/// Differentiable goodness of the triples `(heads[i], rels[i], tails[i])`,
/// as an `n x 1` column. Matches [`ScoreFn::goodness`] bit for bit.
pub fn score_on_tape(
    tape: &mut Tape,
    enc: EncodedVars,
    score_fn: ScoreFn,
    heads: Vec<usize>,
    rels: Vec<usize>,
    tails: Vec<usize>,
) -> Var {
    let h = tape.gather(enc.entities, heads);
    let r = tape.gather(enc.relations, rels);
    let t = tape.gather(enc.entities, tails);
    match score_fn {
        ScoreFn::TransEL1 => {
            let hr = tape.add(h, r);
            let d = tape.sub(hr, t);
            let n = tape.row_abs_sum(d);
            tape.scale(n, -1.0)
        }
        ScoreFn::TransEL2 => {
            let hr = tape.add(h, r);
            let d = tape.sub(hr, t);
            let n = tape.row_norm2(d);
            tape.scale(n, -1.0)
        }
        ScoreFn::DistMult => {
            let hr = tape.mul(h, r);
            let p = tape.mul(hr, t);
            tape.row_sum(p)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tensor::Matrix;

    #[test]
    fn hand_values() {
        assert_eq!(score(ScoreFn::TransEL1, &[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0]), 0.0);
        assert_eq!(score(ScoreFn::TransEL2, &[0.5, 2.0], &[0.5, -1.0], &[1.0, 1.0]), 0.0);
        assert_eq!(score(ScoreFn::TransEL1, &[1.0, 0.0], &[0.0, 1.0], &[0.0, 0.0]), -2.0);
        assert_eq!(score(ScoreFn::TransEL2, &[3.0, 0.0], &[0.0, 4.0], &[0.0, 0.0]), -5.0);
        assert_eq!(score(ScoreFn::DistMult, &[1.0, 2.0], &[2.0, 1.0], &[1.0, 1.0]), 4.0);
    }

    fn toy() -> EncodedGraph {
        let e: Vec<f64> = (0..15).map(|i| ((i * 7 % 11) as f64 - 5.0) / 3.0).collect();
        let r: Vec<f64> = (0..6).map(|i| (i as f64 - 2.5) / 2.0).collect();
        EncodedGraph {
            entity_out: Matrix::from_vec(5, 3, e),
            relation_out: Matrix::from_vec(2, 3, r),
            score_fn: ScoreFn::TransEL1,
        }
    }

    #[test]
    fn batch_matches_single_calls() {
        for sf in [ScoreFn::TransEL1, ScoreFn::TransEL2, ScoreFn::DistMult] {
            let mut g = toy();
            g.score_fn = sf;
            let all: Vec<u32> = (0..5).collect();
            let tails = g.score_tails(2, 0, &all);
            let heads = g.score_heads(0, 3, &all);
            for c in 0..5u32 {
                assert_eq!(tails[c as usize], g.score_triple(2, 0, c));
                assert_eq!(heads[c as usize], g.score_triple(c, 0, 3));
            }
            assert_eq!(g.score_tails(1, 0, &[4]), vec![g.score_triple(1, 0, 4)]);
            let prefix = g.score_tails(1, 0, &[4, 2]);
            assert_eq!(&g.score_tails(1, 0, &[4, 2, 0])[..2], &prefix[..]);
        }
    }

    #[test]
    fn tape_scores_match_exactly() {
        for sf in [ScoreFn::TransEL1, ScoreFn::TransEL2, ScoreFn::DistMult] {
            let g = toy();
            let mut tape = Tape::new();
            let enc = EncodedVars {
                entities: tape.leaf(g.entity_out.clone()),
                relations: tape.leaf(g.relation_out.clone()),
            };
            let v = score_on_tape(&mut tape, enc, sf, vec![0, 3, 4], vec![1, 0, 1], vec![2, 2, 0]);
            let mut gg = g.clone();
            gg.score_fn = sf;
            let expect = [
                gg.score_triple(0, 1, 2),
                gg.score_triple(3, 0, 2),
                gg.score_triple(4, 1, 0),
            ];
            assert_eq!(tape.value(v).data(), &expect);
        }
    }
}
