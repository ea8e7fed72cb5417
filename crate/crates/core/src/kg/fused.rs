use serde::{Deserialize, Serialize};

use super::{EntityRef, KgId, LocalTriple, MultiKgStore, RelationRef};
use crate::{Error, Result};

/// The union of all KGs with seed alignments as edges of a reserved relation.
///
/// Entity ids are laid out KG by KG: KG `i` occupies
/// `entity_offset[i]..entity_offset[i + 1]`. Relation ids follow the same
/// scheme when schemas are disjoint; with a shared schema every KG maps onto
/// the same block. The last relation id is the reserved alignment relation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusedKg {
    entity_offset: Vec<u32>,
    relation_offset: Vec<u32>,
    num_relations: u32,
    shared_relations: bool,
    /// Training triples of every KG in global ids, KG by KG in store order.
    pub triples: Vec<LocalTriple>,
    triple_offset: Vec<usize>,
    /// One global-id edge per seed alignment, `(left, right)`.
    pub align_edges: Vec<(u32, u32)>,
}

impl FusedKg {
    pub fn num_kgs(&self) -> usize {
        self.entity_offset.len() - 1
    }

    pub fn num_entities(&self) -> usize {
        *self.entity_offset.last().unwrap() as usize
    }

    /// Includes the reserved alignment relation.
    pub fn num_relations(&self) -> usize {
        self.num_relations as usize
    }

    pub fn align_relation(&self) -> u32 {
        self.num_relations - 1
    }

    pub fn shared_relations(&self) -> bool {
        self.shared_relations
    }

    pub fn entity_range(&self, kg: KgId) -> std::ops::Range<u32> {
        self.entity_offset[kg as usize]..self.entity_offset[kg as usize + 1]
    }

    pub fn to_global(&self, e: EntityRef) -> u32 {
        self.entity_offset[e.kg as usize] + e.local
    }

    pub fn to_local(&self, global: u32) -> EntityRef {
        // Last offset <= global; empty KGs share offsets with their successor.
        let kg = self.entity_offset.partition_point(|&o| o <= global) - 1;
        EntityRef::new(kg as KgId, global - self.entity_offset[kg])
    }

    pub fn relation_to_global(&self, r: RelationRef) -> u32 {
        self.relation_offset[r.kg as usize] + r.local
    }

    /// Maps a fused relation id back to `kg`'s local id space.
    pub fn relation_to_local(&self, global: u32, kg: KgId) -> Option<RelationRef> {
        let start = self.relation_offset[kg as usize];
        let end = if self.shared_relations {
            self.align_relation()
        } else {
            self.relation_offset[kg as usize + 1]
        };
        (start..end)
            .contains(&global)
            .then(|| RelationRef::new(kg, global - start))
    }

    /// Training triples of KG `kg`, in global ids.
    pub fn kg_triples(&self, kg: KgId) -> &[LocalTriple] {
        &self.triples[self.triple_offset[kg as usize]..self.triple_offset[kg as usize + 1]]
    }

    /// The KG that contributed fused triple number `index`.
    pub fn triple_source(&self, index: usize) -> KgId {
        (self.triple_offset.partition_point(|&o| o <= index) - 1) as KgId
    }
}

/// Builds the fused graph over the training triples of every KG.
pub fn build_fused_kg(store: &MultiKgStore) -> Result<FusedKg> {
    let m = store.kgs.len();
    if m < 2 {
        return Err(Error::Precondition(format!(
            "a fused graph needs at least 2 KGs, store `{}` has {m}",
            store.name
        )));
    }
    for a in &store.alignments {
        for e in [a.left(), a.right()] {
            if !store.entity_in_range(e) {
                return Err(Error::Integrity(format!(
                    "alignment {a:?} references entity {e:?} outside its KG"
                )));
            }
        }
    }

    let mut entity_offset = Vec::with_capacity(m + 1);
    let mut relation_offset = Vec::with_capacity(m + 1);
    let mut triple_offset = Vec::with_capacity(m + 1);
    let (mut ne, mut nr, mut nt) = (0u32, 0u32, 0usize);
    for kg in &store.kgs {
        entity_offset.push(ne);
        relation_offset.push(if store.shared_relation_schema { 0 } else { nr });
        triple_offset.push(nt);
        ne += kg.num_entities() as u32;
        if !store.shared_relation_schema {
            nr += kg.num_relations() as u32;
        }
        nt += kg.train.len();
    }
    if store.shared_relation_schema {
        nr = store.kgs[0].num_relations() as u32;
    }
    entity_offset.push(ne);
    relation_offset.push(nr);
    triple_offset.push(nt);

    let mut triples = Vec::with_capacity(nt);
    for (i, kg) in store.kgs.iter().enumerate() {
        let (eo, ro) = (entity_offset[i], relation_offset[i]);
        triples.extend(
            kg.train
                .iter()
                .map(|t| LocalTriple::new(t.head + eo, t.relation + ro, t.tail + eo)),
        );
    }
    let align_edges = store
        .alignments
        .iter()
        .map(|a| {
            (
                entity_offset[a.left().kg as usize] + a.left().local,
                entity_offset[a.right().kg as usize] + a.right().local,
            )
        })
        .collect();

    Ok(FusedKg {
        entity_offset,
        relation_offset,
        num_relations: nr + 1,
        shared_relations: store.shared_relation_schema,
        triples,
        triple_offset,
        align_edges,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::testutil::store_from_counts;
    use crate::kg::SeedAlignment;

    fn two_kg_store() -> MultiKgStore {
        let mut s = store_from_counts(&[3, 4], &[2, 3], false);
        for i in 0..5u32 {
            s.kgs[0].train.push(LocalTriple::new(i % 3, i % 2, (i + 1) % 3));
        }
        for i in 0..6u32 {
            s.kgs[1].train.push(LocalTriple::new(i % 4, i % 3, (i + 2) % 4));
        }
        s.kgs[0].test.push(LocalTriple::new(2, 1, 2));
        s.set_alignments(vec![
            SeedAlignment::new(EntityRef::new(0, 0), EntityRef::new(1, 3)).unwrap(),
            SeedAlignment::new(EntityRef::new(0, 2), EntityRef::new(1, 1)).unwrap(),
        ]);
        s
    }

    #[test]
    fn counts_follow_the_union() {
        let f = build_fused_kg(&two_kg_store()).unwrap();
        assert_eq!(f.num_entities(), 7);
        assert_eq!(f.triples.len(), 11);
        assert_eq!(f.align_edges.len(), 2);
        assert_eq!(f.num_relations(), 2 + 3 + 1);
        assert_eq!(f.kg_triples(1).len(), 6);
        assert_eq!(f.triple_source(4), 0);
        assert_eq!(f.triple_source(5), 1);
    }

    #[test]
    fn single_kg_is_rejected() {
        let s = store_from_counts(&[3], &[1], false);
        assert!(matches!(build_fused_kg(&s), Err(Error::Precondition(_))));
    }

    #[test]
    fn bad_alignment_is_an_integrity_error() {
        let mut s = two_kg_store();
        s.alignments
            .push(SeedAlignment::new(EntityRef::new(0, 1), EntityRef::new(1, 9)).unwrap());
        assert!(matches!(build_fused_kg(&s), Err(Error::Integrity(_))));
    }

    #[test]
    fn global_ids_round_trip() {
        let mut s = store_from_counts(&[3, 0, 4, 1], &[1, 1, 1, 1], false);
        s.kgs[0].train.push(LocalTriple::new(0, 0, 1));
        let f = build_fused_kg(&s).unwrap();
        for g in 0..f.num_entities() as u32 {
            assert_eq!(f.to_global(f.to_local(g)), g);
        }
        assert_eq!(f.to_local(3), EntityRef::new(2, 0));
    }

    #[test]
    fn shared_schema_maps_relations_onto_one_block() {
        let mut s = two_kg_store();
        s.kgs[1].relations = s.kgs[0].relations.clone();
        for t in &mut s.kgs[1].train {
            t.relation %= 2;
        }
        s.shared_relation_schema = true;
        let f = build_fused_kg(&s).unwrap();
        assert_eq!(f.num_relations(), 3);
        assert_eq!(f.relation_to_global(RelationRef::new(1, 1)), 1);
        assert_eq!(f.relation_to_local(1, 0), Some(RelationRef::new(0, 1)));
        assert_eq!(f.relation_to_local(f.align_relation(), 0), None);
    }
}
