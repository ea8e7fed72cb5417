//! Alignment-informed meta-paths.
//!
//! Parameter swapping: `a ~ b`, `(b, r, c)`, `c ~ d` implies `(a, r, d)`.
//! Alignment transitivity: `a ~ b`, `b ~ c` implies `a ~ c`.
//! Both are applied once per call; callers iterate for a fixed point.

use std::collections::{BTreeSet, HashMap, HashSet};

use super::components::alignment_components;
use super::{EntityRef, KgId, MultiKgStore, SeedAlignment, Triple};
use crate::{Error, Result};

/// New triples obtained by replacing both endpoints of a training triple with
/// their aligned counterparts in another KG.
///
/// For every training triple of KG `a` and every other KG `b`, each endpoint
/// resolves to its direct counterparts in `b`; one triple is emitted per
/// combination. Triples already present in any training set are skipped.
pub fn parameter_swap_triples(store: &MultiKgStore) -> Result<BTreeSet<Triple>> {
    if !store.shared_relation_schema {
        return Err(Error::Schema(format!(
            "dataset `{}` does not declare a shared relation schema; parameter swapping needs one",
            store.name
        )));
    }
    let mut counterparts: HashMap<(EntityRef, KgId), Vec<EntityRef>> = HashMap::new();
    for a in &store.alignments {
        counterparts
            .entry((a.left(), a.right().kg))
            .or_default()
            .push(a.right());
        counterparts.entry((a.right(), a.left().kg)).or_default().push(a.left());
    }
    let existing = store.training_triples();
    let mut out = BTreeSet::new();
    for (src, kg) in store.kgs.iter().enumerate() {
        let src = src as KgId;
        for t in &kg.train {
            let t = t.in_kg(src);
            for target in 0..store.kgs.len() as KgId {
                if target == src {
                    continue;
                }
                let (Some(heads), Some(tails)) =
                    (counterparts.get(&(t.head, target)), counterparts.get(&(t.tail, target)))
                else {
                    continue;
                };
                for &h in heads {
                    for &tl in tails {
                        let new = Triple {
                            head: h,
                            relation: super::RelationRef::new(target, t.relation.local),
                            tail: tl,
                        };
                        if !existing.contains(&new) {
                            out.insert(new);
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Cross-KG alignments implied by transitivity that are not yet present.
pub fn alignment_closure(store: &MultiKgStore) -> BTreeSet<SeedAlignment> {
    let present: HashSet<&SeedAlignment> = store.alignments.iter().collect();
    let mut out = BTreeSet::new();
    for comp in alignment_components(store) {
        for (i, &x) in comp.iter().enumerate() {
            for &y in &comp[i + 1..] {
                if x.kg == y.kg {
                    continue;
                }
                let a = SeedAlignment::new(x, y).expect("distinct KGs");
                if !present.contains(&a) {
                    out.insert(a);
                }
            }
        }
    }
    out
}
