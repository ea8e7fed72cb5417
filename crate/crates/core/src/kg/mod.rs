//! Multi-KG domain types.
//!
//! Every knowledge graph owns a dense entity id space and a dense relation id
//! space. Triples are stored per KG in local ids; cross-KG references use
//! [`EntityRef`], which pairs a KG index with a local id.

mod components;
mod fused;
mod metapath;

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use components::{alignment_component_report, alignment_components, ComponentReport, UnionFind};
pub use fused::{build_fused_kg, FusedKg};
pub use metapath::{alignment_closure, parameter_swap_triples};

/// Index of a knowledge graph inside a [`MultiKgStore`].
pub type KgId = u16;

/// Reserved KG index used by relation references into the fused graph.
pub const FUSED_KG: KgId = KgId::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntityRef {
    pub kg: KgId,
    pub local: u32,
}

impl EntityRef {
    pub fn new(kg: KgId, local: u32) -> Self {
        Self { kg, local }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RelationRef {
    pub kg: KgId,
    pub local: u32,
}

impl RelationRef {
    pub fn new(kg: KgId, local: u32) -> Self {
        Self { kg, local }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub head: EntityRef,
    pub relation: RelationRef,
    pub tail: EntityRef,
}

/// A triple expressed in the local id spaces of one KG.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LocalTriple {
    pub head: u32,
    pub relation: u32,
    pub tail: u32,
}

impl LocalTriple {
    pub fn new(head: u32, relation: u32, tail: u32) -> Self {
        Self { head, relation, tail }
    }

    pub fn in_kg(self, kg: KgId) -> Triple {
        Triple {
            head: EntityRef::new(kg, self.head),
            relation: RelationRef::new(kg, self.relation),
            tail: EntityRef::new(kg, self.tail),
        }
    }
}

/// An equivalence between entities of two different KGs, kept in canonical
/// order (smaller KG index on the left).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SeedAlignment {
    left: EntityRef,
    right: EntityRef,
}

impl SeedAlignment {
    pub fn new(a: EntityRef, b: EntityRef) -> Result<Self> {
        match a.kg.cmp(&b.kg) {
            std::cmp::Ordering::Less => Ok(Self { left: a, right: b }),
            std::cmp::Ordering::Greater => Ok(Self { left: b, right: a }),
            std::cmp::Ordering::Equal => Err(Error::Integrity(format!(
                "alignment {a:?} ~ {b:?} joins two entities of the same KG"
            ))),
        }
    }

    pub fn left(&self) -> EntityRef {
        self.left
    }

    pub fn right(&self) -> EntityRef {
        self.right
    }

    /// The endpoint opposite to `e`, if `e` is one of the endpoints.
    pub fn other(&self, e: EntityRef) -> Option<EntityRef> {
        if self.left == e {
            Some(self.right)
        } else if self.right == e {
            Some(self.left)
        } else {
            None
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "valid" | "validation" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split `{other}`"))),
        }
    }
}

/// One knowledge graph: vocabularies plus its three triple splits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KgData {
    pub name: String,
    pub entities: Vec<String>,
    pub relations: Vec<String>,
    pub train: Vec<LocalTriple>,
    pub valid: Vec<LocalTriple>,
    pub test: Vec<LocalTriple>,
}

impl KgData {
    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn split(&self, split: Split) -> &[LocalTriple] {
        match split {
            Split::Train => &self.train,
            Split::Valid => &self.valid,
            Split::Test => &self.test,
        }
    }

    pub fn split_mut(&mut self, split: Split) -> &mut Vec<LocalTriple> {
        match split {
            Split::Train => &mut self.train,
            Split::Valid => &mut self.valid,
            Split::Test => &mut self.test,
        }
    }

    /// Entities that occur in at least one training triple.
    pub fn trained_entities(&self) -> Vec<bool> {
        let mut seen = vec![false; self.entities.len()];
        for t in &self.train {
            seen[t.head as usize] = true;
            seen[t.tail as usize] = true;
        }
        seen
    }
}

/// `m` knowledge graphs and the seed alignments between them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiKgStore {
    pub name: String,
    pub kgs: Vec<KgData>,
    /// Sorted, duplicate-free.
    pub alignments: Vec<SeedAlignment>,
    /// When set, all KGs share one relation vocabulary (identical local ids).
    pub shared_relation_schema: bool,
    /// Entities whose triples were excluded by dangling-entity sampling.
    #[serde(default)]
    pub removed_entities: BTreeSet<EntityRef>,
    /// Entities that lost every alignment during dangling-entity sampling.
    #[serde(default)]
    pub dangling_entities: BTreeSet<EntityRef>,
    /// Non-fatal ingest findings, e.g. held-out entities absent from training.
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl MultiKgStore {
    pub fn num_kgs(&self) -> usize {
        self.kgs.len()
    }

    pub fn kg_index(&self, name: &str) -> Option<KgId> {
        self.kgs.iter().position(|k| k.name == name).map(|i| i as KgId)
    }

    pub fn kg(&self, id: KgId) -> &KgData {
        &self.kgs[id as usize]
    }

    /// Replaces the alignment list with its sorted, deduplicated form.
    pub fn set_alignments(&mut self, mut alignments: Vec<SeedAlignment>) {
        alignments.sort_unstable();
        alignments.dedup();
        self.alignments = alignments;
    }

    pub fn entity_in_range(&self, e: EntityRef) -> bool {
        self.kgs
            .get(e.kg as usize)
            .is_some_and(|k| (e.local as usize) < k.entities.len())
    }

    /// Checks every store invariant: id ranges, canonical alignments, and
    /// pairwise-disjoint splits.
    pub fn validate(&self) -> Result<()> {
        if self.kgs.len() > FUSED_KG as usize {
            return Err(Error::Integrity("too many knowledge graphs".into()));
        }
        if self.shared_relation_schema {
            if let Some(first) = self.kgs.first() {
                if let Some(k) = self.kgs.iter().find(|k| k.relations != first.relations) {
                    return Err(Error::Schema(format!(
                        "KG `{}` does not carry the shared relation vocabulary",
                        k.name
                    )));
                }
            }
        }
        for kg in &self.kgs {
            let (ne, nr) = (kg.entities.len() as u32, kg.relations.len() as u32);
            for split in Split::ALL {
                for t in kg.split(split) {
                    if t.head >= ne || t.tail >= ne || t.relation >= nr {
                        return Err(Error::Integrity(format!(
                            "KG `{}` {} triple {:?} is out of range ({} entities, {} relations)",
                            kg.name,
                            split.name(),
                            t,
                            ne,
                            nr
                        )));
                    }
                }
            }
            let train: HashSet<_> = kg.train.iter().collect();
            let valid: HashSet<_> = kg.valid.iter().collect();
            for t in &kg.valid {
                if train.contains(t) {
                    return Err(Error::Integrity(format!(
                        "KG `{}`: triple {:?} is in both train and valid",
                        kg.name, t
                    )));
                }
            }
            for t in &kg.test {
                if train.contains(t) || valid.contains(t) {
                    return Err(Error::Integrity(format!(
                        "KG `{}`: test triple {:?} also appears in train or valid",
                        kg.name, t
                    )));
                }
            }
        }
        let mut prev: Option<&SeedAlignment> = None;
        for a in &self.alignments {
            if a.left.kg >= a.right.kg {
                return Err(Error::Integrity(format!("alignment {a:?} is not in canonical order")));
            }
            if !self.entity_in_range(a.left) || !self.entity_in_range(a.right) {
                return Err(Error::Integrity(format!(
                    "alignment {a:?} references an unknown entity"
                )));
            }
            if prev.is_some_and(|p| p >= a) {
                return Err(Error::Integrity(
                    "alignment list is not sorted and duplicate-free".into(),
                ));
            }
            prev = Some(a);
        }
        Ok(())
    }

    /// All training triples of every KG, as global [`Triple`]s.
    pub fn training_triples(&self) -> HashSet<Triple> {
        self.kgs
            .iter()
            .enumerate()
            .flat_map(|(i, kg)| kg.train.iter().map(move |t| t.in_kg(i as KgId)))
            .collect()
    }

    /// Display name of an entity, `kg:name`.
    pub fn entity_label(&self, e: EntityRef) -> String {
        let kg = self.kg(e.kg);
        format!("{}:{}", kg.name, kg.entities[e.local as usize])
    }
}
