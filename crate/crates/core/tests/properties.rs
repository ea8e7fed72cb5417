mod common;

use std::collections::{BTreeSet, HashSet};

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{random_kg, shape, store_of};
use mkgc::eval::{rank_from_scores, EnsembleScorer, LocalScorer, Scorer};
use mkgc::ingest::{sample_dangling, DanglingSide, SamplingSpec};
use mkgc::kg::{
    alignment_components, build_fused_kg, parameter_swap_triples, EntityRef, LocalTriple, MultiKgStore, SeedAlignment,
    Split,
};
use mkgc::model::{encode, Adjacency, Matrix, ModelParams};
use mkgc::training::{margin_loss, topk_candidates};

/// 2 or 3 random KGs with random (possibly many-to-many) alignments.
fn aligned_store(seed: u64, shared: bool) -> MultiKgStore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_kgs = rng.gen_range(2..=3);
    let n_r = rng.gen_range(1..=3);
    let kgs = (0..n_kgs)
        .map(|k| {
            let n_e = rng.gen_range(2..=12);
            let n_t = rng.gen_range(4..=30);
            random_kg(&mut rng, &format!("kg{k}"), n_e, n_r, n_t)
        })
        .collect::<Vec<_>>();
    let mut store = store_of(kgs, shared);
    let mut aligns = Vec::new();
    for _ in 0..rng.gen_range(1..=12) {
        let a = rng.gen_range(0..n_kgs);
        let b = (a + rng.gen_range(1..n_kgs)) % n_kgs;
        let ea = EntityRef::new(a as u16, rng.gen_range(0..store.kgs[a].entities.len() as u32));
        let eb = EntityRef::new(b as u16, rng.gen_range(0..store.kgs[b].entities.len() as u32));
        aligns.push(SeedAlignment::new(ea, eb).unwrap());
    }
    store.set_alignments(aligns);
    store.validate().unwrap();
    store
}

fn small_model(seed: u64, bound: f64) -> (ModelParams, Vec<LocalTriple>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n_e, n_r, d) = (rng.gen_range(2..=8), rng.gen_range(1..=3), rng.gen_range(1..=5));
    let mut params = ModelParams::init(shape(n_e, n_r, d, false), &mut rng);
    for m in params.tensors_mut() {
        for v in m.data_mut() {
            *v = rng.gen_range(-bound..=bound);
        }
    }
    let n_t = rng.gen_range(0..=20);
    let triples = common::distinct_triples(&mut rng, n_e, n_r, n_t);
    (params, triples)
}

fn encoded(params: &ModelParams, triples: &[LocalTriple]) -> mkgc::model::EncodedGraph {
    let adj = Adjacency::from_triples(params.shape.n_entities, params.shape.n_relations, triples);
    encode(params, &adj).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn margin_loss_falls_as_positives_improve(
        pairs in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..20),
        bump in 0.0f64..3.0,
        gamma in 0.0f64..2.0,
        hinge in any::<bool>(),
    ) {
        let (pos, neg): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let base = margin_loss(&pos, &neg, gamma, hinge);
        let better: Vec<f64> = pos.iter().map(|p| p + bump).collect();
        prop_assert!(margin_loss(&better, &neg, gamma, hinge) <= base + 1e-12);
        prop_assert!(margin_loss(&pos, &neg, gamma + bump, hinge) >= base - 1e-12);
        if hinge {
            prop_assert!(base >= 0.0);
        }
    }

    #[test]
    fn ranks_survive_monotone_transforms(
        scores in prop::collection::vec(-6i32..=6, 1..40),
        truth_pick in any::<prop::sample::Index>(),
        excluded in prop::collection::hash_set(0u32..40, 0..10),
    ) {
        let truth = truth_pick.index(scores.len()) as u32;
        let base: Vec<f64> = scores.iter().map(|&s| s as f64).collect();
        let affine: Vec<f64> = base.iter().map(|s| 2.0 * s + 3.0).collect();
        let cubic: Vec<f64> = base.iter().map(|s| s * s * s).collect();
        let r = rank_from_scores(&base, truth, Some(&excluded));
        prop_assert_eq!(rank_from_scores(&affine, truth, Some(&excluded)), r);
        prop_assert_eq!(rank_from_scores(&cubic, truth, Some(&excluded)), r);
        prop_assert!(r >= 1 && r <= scores.len());
    }

    #[test]
    fn topk_matches_sorted_order(
        (scores, k) in prop::collection::vec(-3i32..=3, 1..30)
            .prop_flat_map(|s| { let n = s.len(); (Just(s), 0..=n) }),
    ) {
        let s: Vec<f64> = scores.iter().map(|&v| v as f64 * 0.5).collect();
        let mut order: Vec<usize> = (0..s.len()).collect();
        order.sort_by(|&a, &b| s[b].partial_cmp(&s[a]).unwrap().then(a.cmp(&b)));
        order.truncate(k);
        prop_assert_eq!(topk_candidates(&s, k), order);
    }

    #[test]
    fn fused_ids_are_a_bijection(seed in any::<u64>(), shared in any::<bool>()) {
        let store = aligned_store(seed, shared);
        let fused = build_fused_kg(&store).unwrap();
        let total: usize = store.kgs.iter().map(|k| k.entities.len()).sum();
        prop_assert_eq!(fused.num_entities(), total);
        let mut seen = HashSet::new();
        for (k, kg) in store.kgs.iter().enumerate() {
            for j in 0..kg.entities.len() as u32 {
                let e = EntityRef::new(k as u16, j);
                let g = fused.to_global(e);
                prop_assert!(seen.insert(g));
                prop_assert_eq!(fused.to_local(g), e);
            }
        }
        prop_assert_eq!(fused.align_edges.len(), store.alignments.len());
    }

    #[test]
    fn encoder_commutes_with_entity_relabelling(seed in any::<u64>()) {
        let (params, triples) = small_model(seed, 1.0);
        let n = params.shape.n_entities;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let mut perm: Vec<usize> = (0..n).collect();
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);

        let mut permuted = params.clone();
        for (j, &p) in perm.iter().enumerate() {
            permuted.entity_emb.row_mut(p).copy_from_slice(params.entity_emb.row(j));
        }
        let moved: Vec<LocalTriple> = triples
            .iter()
            .map(|t| LocalTriple::new(perm[t.head as usize] as u32, t.relation, perm[t.tail as usize] as u32))
            .collect();

        let a = encoded(&params, &triples);
        let b = encoded(&permuted, &moved);
        for (j, &p) in perm.iter().enumerate() {
            for (x, y) in a.entity_out.row(j).iter().zip(b.entity_out.row(p)) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }
        prop_assert_eq!(a.relation_out, b.relation_out);
    }

    #[test]
    fn zero_weights_give_zero_output(seed in any::<u64>()) {
        let (mut params, triples) = small_model(seed, 3.0);
        for l in &mut params.layers {
            for w in [&mut l.w_in, &mut l.w_out, &mut l.w_loop, &mut l.w_rel] {
                w.fill(0.0);
            }
        }
        let enc = encoded(&params, &triples);
        prop_assert!(enc.entity_out.data().iter().all(|&v| v == 0.0));
        prop_assert!(enc.relation_out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bounded_inputs_give_finite_outputs(seed in any::<u64>()) {
        let (params, triples) = small_model(seed, 10.0);
        let enc = encoded(&params, &triples);
        prop_assert!(enc.entity_out.is_finite());
        prop_assert!(enc.relation_out.is_finite());
        let n = params.shape.n_entities as u32;
        for h in 0..n {
            prop_assert!(enc.score_tails(h, 0, &(0..n).collect::<Vec<_>>()).iter().all(|s| s.is_finite()));
        }
    }

    #[test]
    fn zero_partner_leaves_ensemble_ranks_alone(seed in any::<u64>()) {
        let (params, triples) = small_model(seed, 1.0);
        let enc = encoded(&params, &triples);
        let mut silent = enc.clone();
        silent.entity_out = Matrix::zeros(enc.entity_out.rows(), enc.entity_out.cols());
        silent.relation_out = Matrix::zeros(enc.relation_out.rows(), enc.relation_out.cols());
        let alone = LocalScorer { enc: &enc };
        let both = EnsembleScorer { a: LocalScorer { enc: &enc }, b: LocalScorer { enc: &silent } };
        let n = enc.num_entities() as u32;
        for h in 0..n {
            for r in 0..enc.num_relations() as u32 {
                let (s1, s2) = (alone.tail_scores(h, r), both.tail_scores(h, r));
                let (t1, t2) = (alone.head_scores(r, h), both.head_scores(r, h));
                for truth in 0..n {
                    prop_assert_eq!(rank_from_scores(&s1, truth, None), rank_from_scores(&s2, truth, None));
                    prop_assert_eq!(rank_from_scores(&t1, truth, None), rank_from_scores(&t2, truth, None));
                }
            }
        }
    }

    #[test]
    fn swapped_triples_are_new(seed in any::<u64>()) {
        let store = aligned_store(seed, true);
        let existing = store.training_triples();
        for t in parameter_swap_triples(&store).unwrap() {
            prop_assert!(!existing.contains(&t));
            prop_assert!(store.entity_in_range(t.head) && store.entity_in_range(t.tail));
            prop_assert!(t.head.kg == t.tail.kg && t.head.kg == t.relation.kg);
        }
    }

    #[test]
    fn components_partition_aligned_entities(seed in any::<u64>()) {
        let store = aligned_store(seed, false);
        let aligned: BTreeSet<EntityRef> = store.alignments.iter().flat_map(|a| [a.left(), a.right()]).collect();
        let comps = alignment_components(&store);
        prop_assert_eq!(comps.iter().map(Vec::len).sum::<usize>(), aligned.len());
        let flat: BTreeSet<EntityRef> = comps.iter().flatten().copied().collect();
        prop_assert_eq!(flat, aligned);
        prop_assert!(comps.iter().all(|c| c.len() >= 2));
    }

    #[test]
    fn dangling_sampling_keeps_store_consistent(
        seed in any::<u64>(),
        keep in 0.05f64..=1.0,
        left in any::<bool>(),
    ) {
        let store = aligned_store(seed, false);
        let spec = SamplingSpec {
            alignment_keep_fraction: keep,
            seed,
            side: if left { DanglingSide::Left } else { DanglingSide::Right },
        };
        let out = sample_dangling(&store, &spec).unwrap();
        out.validate().unwrap();
        prop_assert!(out.alignments.iter().all(|a| store.alignments.contains(a)));
        for a in &out.alignments {
            prop_assert!(!out.removed_entities.contains(&a.left()));
            prop_assert!(!out.removed_entities.contains(&a.right()));
        }
        for (k, kg) in out.kgs.iter().enumerate() {
            let mut seen = HashSet::new();
            for split in Split::ALL {
                for t in kg.split(split) {
                    prop_assert!(seen.insert(*t), "triple in two splits");
                    for e in [t.head, t.tail] {
                        prop_assert!(!out.removed_entities.contains(&EntityRef::new(k as u16, e)));
                    }
                }
            }
        }
    }
}
