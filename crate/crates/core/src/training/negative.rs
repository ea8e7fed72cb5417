//! Corruption-based negative sampling.

use std::collections::HashSet;
use std::ops::Range;

use rand::Rng;

use crate::kg::LocalTriple;

pub const RESAMPLE_ATTEMPTS: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Slot {
    Head,
    Tail,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NegativeSample {
    pub original: LocalTriple,
    pub corrupted: LocalTriple,
    pub slot: Slot,
}

/// Draws corruptions of training triples from one entity range, avoiding
/// known positives.
pub struct NegativeSampler<'a> {
    pub positives: &'a HashSet<LocalTriple>,
    /// Number of samples accepted after the resample budget ran out.
    pub exhausted: usize,
}

impl<'a> NegativeSampler<'a> {
    pub fn new(positives: &'a HashSet<LocalTriple>) -> Self {
        Self {
            positives,
            exhausted: 0,
        }
    }

    /// `n` corruptions of `triple` with replacements drawn from `entities`.
    pub fn sample(
        &mut self,
        triple: LocalTriple,
        entities: Range<u32>,
        rng: &mut impl Rng,
        n: usize,
    ) -> Vec<NegativeSample> {
        assert!(entities.len() >= 2, "negative sampling needs at least two entities");
        (0..n)
            .map(|_| {
                let slot = if rng.gen_bool(0.5) { Slot::Head } else { Slot::Tail };
                let mut corrupted = triple;
                for attempt in 0..RESAMPLE_ATTEMPTS {
                    let e = rng.gen_range(entities.clone());
                    corrupted = match slot {
                        Slot::Head => LocalTriple { head: e, ..triple },
                        Slot::Tail => LocalTriple { tail: e, ..triple },
                    };
                    if !self.positives.contains(&corrupted) {
                        break;
                    }
                    if attempt + 1 == RESAMPLE_ATTEMPTS {
                        self.exhausted += 1;
                    }
                }
                NegativeSample {
                    original: triple,
                    corrupted,
                    slot,
                }
            })
            .collect()
    }
}

/// Convenience wrapper around [`NegativeSampler::sample`].
pub fn sample_negatives(
    triple: LocalTriple,
    entities: Range<u32>,
    positives: &HashSet<LocalTriple>,
    rng: &mut impl Rng,
    n: usize,
) -> Vec<NegativeSample> {
    NegativeSampler::new(positives).sample(triple, entities, rng, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn two_entity_kg_is_forced() {
        let t = LocalTriple::new(0, 0, 1);
        let pos: HashSet<_> = [t].into();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = sample_negatives(t, 0..2, &pos, &mut rng, 50);
        assert_eq!(s.len(), 50);
        for n in s {
            match n.slot {
                Slot::Tail => assert_eq!(n.corrupted, LocalTriple::new(0, 0, 0)),
                Slot::Head => assert_eq!(n.corrupted, LocalTriple::new(1, 0, 1)),
            }
        }
    }

    #[test]
    fn exhaustion_is_counted() {
        let pos: HashSet<_> = (0..2)
            .flat_map(|h| (0..2).map(move |t| LocalTriple::new(h, 0, t)))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut s = NegativeSampler::new(&pos);
        let out = s.sample(LocalTriple::new(0, 0, 1), 0..2, &mut rng, 5);
        assert_eq!(out.len(), 5);
        assert_eq!(s.exhausted, 5);
    }
}
