#![allow(dead_code)]

use std::collections::HashSet;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use mkgc::kg::{KgData, LocalTriple, MultiKgStore};
use mkgc::model::{Activation, Composition, ModelShape, ScoreFn};

pub fn empty_kg(name: &str, n_entities: usize, n_relations: usize) -> KgData {
    KgData {
        name: name.to_string(),
        entities: (0..n_entities).map(|j| format!("e{j}")).collect(),
        relations: (0..n_relations).map(|j| format!("r{j}")).collect(),
        train: Vec::new(),
        valid: Vec::new(),
        test: Vec::new(),
    }
}

pub fn store_of(kgs: Vec<KgData>, shared: bool) -> MultiKgStore {
    MultiKgStore {
        name: "t".into(),
        kgs,
        alignments: Vec::new(),
        shared_relation_schema: shared,
        removed_entities: Default::default(),
        dangling_entities: Default::default(),
        warnings: Vec::new(),
    }
}

pub fn distinct_triples(rng: &mut ChaCha8Rng, n_e: usize, n_r: usize, n: usize) -> Vec<LocalTriple> {
    let n = n.min(n_e * n_e * n_r / 2);
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    while out.len() < n {
        let t = LocalTriple::new(
            rng.gen_range(0..n_e as u32),
            rng.gen_range(0..n_r as u32),
            rng.gen_range(0..n_e as u32),
        );
        if seen.insert(t) {
            out.push(t);
        }
    }
    out
}

/// Random triples split 70/15/15.
pub fn random_kg(rng: &mut ChaCha8Rng, name: &str, n_e: usize, n_r: usize, n_triples: usize) -> KgData {
    let mut kg = empty_kg(name, n_e, n_r);
    let triples = distinct_triples(rng, n_e, n_r, n_triples);
    let n_held = (triples.len() * 15 / 100).max(1);
    kg.valid = triples[..n_held].to_vec();
    kg.test = triples[n_held..2 * n_held].to_vec();
    kg.train = triples[2 * n_held..].to_vec();
    kg
}

pub fn shape(n_entities: usize, n_relations: usize, dim: usize, fused: bool) -> ModelShape {
    ModelShape {
        n_entities,
        n_relations,
        dim,
        layers: 1,
        fused,
        composition: Composition::Sub,
        activation: Activation::Tanh,
        score_fn: ScoreFn::TransEL1,
    }
}
