use std::collections::{BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::kg::{EntityRef, KgData, LocalTriple, MultiKgStore, SeedAlignment};
use crate::{Error, Result};

/// Parameters of [`make_synthetic_complementary`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_entities: usize,
    pub n_relations: usize,
    pub n_triples: usize,
    pub n_kgs: usize,
    /// Fraction of entities aligned across every pair of views.
    pub overlap_fraction: f64,
    /// Fraction of ground-truth triples held out of each view.
    pub removal_fraction: f64,
    pub seed: u64,
}

/// Tails are drawn among this many entities nearest to the translated head.
const NEIGHBOURHOOD: usize = 5;

/// Complementary views of one latent ground-truth KG.
///
/// Every entity has a latent position in the unit square and every relation
/// a latent translation; a ground-truth triple `(h, r, t)` picks `t` uniformly
/// among the [`NEIGHBOURHOOD`] entities nearest to `pos(h) + shift(r)`. Each of
/// the `n_kgs` views drops its own disjoint slice of `removal_fraction` of the
/// ground truth (those triples become the view's valid/test halves), so a
/// triple missing from one view is a training triple of every other view.
/// Entity `j` of every view corresponds to latent entity `j`, and a random
/// `overlap_fraction` of them is aligned across all views. The views share one
/// relation schema.
pub fn make_synthetic_complementary(spec: &SyntheticSpec) -> Result<MultiKgStore> {
    let SyntheticSpec {
        n_entities,
        n_relations,
        n_triples,
        n_kgs,
        overlap_fraction,
        removal_fraction,
        seed,
    } = *spec;
    if n_entities < 2 || n_relations == 0 || n_triples == 0 || n_kgs == 0 {
        return Err(Error::Config(
            "synthetic generator needs >= 2 entities and positive relation, triple and KG counts".into(),
        ));
    }
    if !(overlap_fraction > 0.0 && overlap_fraction <= 1.0) {
        return Err(Error::Config(format!(
            "overlap_fraction must lie in (0, 1], got {overlap_fraction}"
        )));
    }
    if !(0.0..1.0).contains(&removal_fraction) || removal_fraction * n_kgs as f64 > 1.0 {
        return Err(Error::Config(format!(
            "removal_fraction {removal_fraction} must lie in [0, 1) with n_kgs * removal_fraction <= 1"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pos: Vec<[f64; 2]> = (0..n_entities).map(|_| [rng.gen(), rng.gen()]).collect();
    let shift: Vec<[f64; 2]> = (0..n_relations)
        .map(|_| [rng.gen_range(-0.35..0.35), rng.gen_range(-0.35..0.35)])
        .collect();
    let m = NEIGHBOURHOOD.min(n_entities - 1);
    // Candidate tails of every (head, relation) pair, nearest first.
    let neighbours = |h: usize, r: usize| -> Vec<u32> {
        let p = [pos[h][0] + shift[r][0], pos[h][1] + shift[r][1]];
        let d2 = |e: usize| (pos[e][0] - p[0]).powi(2) + (pos[e][1] - p[1]).powi(2);
        let mut c: Vec<usize> = (0..n_entities).filter(|&e| e != h).collect();
        c.sort_by(|&a, &b| d2(a).total_cmp(&d2(b)).then(a.cmp(&b)));
        c.truncate(m);
        c.into_iter().map(|e| e as u32).collect()
    };

    let mut seen = HashSet::with_capacity(n_triples);
    let mut truth = Vec::with_capacity(n_triples);
    let mut attempts = 0usize;
    while truth.len() < n_triples {
        attempts += 1;
        if attempts > 100 * n_triples + 10_000 {
            return Err(Error::Config(format!(
                "could not draw {n_triples} distinct triples over {n_entities} entities"
            )));
        }
        let h = rng.gen_range(0..n_entities);
        let r = rng.gen_range(0..n_relations);
        let pool = neighbours(h, r);
        let t = pool[rng.gen_range(0..pool.len())];
        let triple = LocalTriple::new(h as u32, r as u32, t);
        if seen.insert(triple) {
            truth.push(triple);
        }
    }

    let mut perm: Vec<usize> = (0..n_triples).collect();
    perm.shuffle(&mut rng);
    let per_view = (removal_fraction * n_triples as f64).round() as usize;
    let relations: Vec<String> = (0..n_relations).map(|r| format!("r{r}")).collect();
    let mut kgs = Vec::with_capacity(n_kgs);
    for v in 0..n_kgs {
        let held: Vec<usize> = perm[v * per_view..(v + 1) * per_view].to_vec();
        let held_set: HashSet<usize> = held.iter().copied().collect();
        let train = (0..n_triples)
            .filter(|i| !held_set.contains(i))
            .map(|i| truth[i])
            .collect();
        let half = held.len() / 2;
        kgs.push(KgData {
            name: format!("kg{v}"),
            entities: (0..n_entities).map(|e| format!("kg{v}:e{e}")).collect(),
            relations: relations.clone(),
            train,
            valid: held[..half].iter().map(|&i| truth[i]).collect(),
            test: held[half..].iter().map(|&i| truth[i]).collect(),
        });
    }

    let n_aligned = ((overlap_fraction * n_entities as f64).round() as usize).min(n_entities);
    let aligned = rand::seq::index::sample(&mut rng, n_entities, n_aligned).into_vec();
    let mut alignments = Vec::new();
    for a in 0..n_kgs {
        for b in a + 1..n_kgs {
            for &e in &aligned {
                alignments.push(SeedAlignment::new(
                    EntityRef::new(a as u16, e as u32),
                    EntityRef::new(b as u16, e as u32),
                )?);
            }
        }
    }

    let mut store = MultiKgStore {
        name: format!("synthetic-{n_entities}e-{n_relations}r-{n_triples}t-{n_kgs}kg-s{seed}"),
        kgs,
        alignments: Vec::new(),
        shared_relation_schema: true,
        removed_entities: BTreeSet::new(),
        dangling_entities: BTreeSet::new(),
        warnings: Vec::new(),
    };
    store.set_alignments(alignments);
    store.validate()?;
    Ok(store)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(removal: f64) -> SyntheticSpec {
        SyntheticSpec {
            n_entities: 60,
            n_relations: 5,
            n_triples: 300,
            n_kgs: 2,
            overlap_fraction: 0.5,
            removal_fraction: removal,
            seed: 9,
        }
    }

    #[test]
    fn zero_removal_gives_identical_views() {
        let s = make_synthetic_complementary(&spec(0.0)).unwrap();
        assert_eq!(s.kgs[0].train, s.kgs[1].train);
        assert_eq!(s.kgs[0].train.len(), 300);
        assert!(s.kgs[0].valid.is_empty() && s.kgs[0].test.is_empty());
    }

    #[test]
    fn held_out_triples_are_trained_in_the_other_view() {
        let s = make_synthetic_complementary(&spec(0.3)).unwrap();
        let other: HashSet<_> = s.kgs[1].train.iter().collect();
        for t in s.kgs[0].valid.iter().chain(&s.kgs[0].test) {
            assert!(other.contains(t));
        }
        assert_eq!(s.alignments.len(), 30);
        assert_eq!(s.kgs[0].valid.len() + s.kgs[0].test.len(), 90);
    }

    #[test]
    fn rejects_out_of_range_fractions() {
        let mut bad = spec(0.6);
        assert!(make_synthetic_complementary(&bad).is_err());
        bad = spec(0.3);
        bad.overlap_fraction = 0.0;
        assert!(make_synthetic_complementary(&bad).is_err());
    }
}
