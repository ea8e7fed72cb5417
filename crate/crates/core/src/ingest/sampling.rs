use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::kg::{EntityRef, MultiKgStore, SeedAlignment, Split};
use crate::{Error, Result};

/// Which endpoint of a dropped alignment loses its triples.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DanglingSide {
    Left,
    #[default]
    Right,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingSpec {
    /// Fraction of alignments kept, in (0, 1].
    pub alignment_keep_fraction: f64,
    pub seed: u64,
    #[serde(default)]
    pub side: DanglingSide,
}

/// Creates dangling entities by dropping alignments.
///
/// A uniform sample of `round(keep * |S|)` alignments survives. For every
/// dropped alignment the endpoint on `spec.side` is removed (all its triples
/// are excluded from every split) unless a kept alignment still references
/// it. The opposite endpoints that end up with no alignment are recorded as
/// dangling.
pub fn sample_dangling(store: &MultiKgStore, spec: &SamplingSpec) -> Result<MultiKgStore> {
    if store.alignments.is_empty() {
        return Err(Error::Precondition(
            "dangling-entity sampling needs a non-empty alignment set".into(),
        ));
    }
    let keep = spec.alignment_keep_fraction;
    if !(keep > 0.0 && keep <= 1.0) {
        return Err(Error::Config(format!(
            "alignment_keep_fraction must lie in (0, 1], got {keep}"
        )));
    }
    let n = store.alignments.len();
    let n_keep = ((keep * n as f64).round() as usize).clamp(1, n);
    if n_keep == n {
        return Ok(store.clone());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut kept_idx = rand::seq::index::sample(&mut rng, n, n_keep).into_vec();
    kept_idx.sort_unstable();
    let mut is_kept = vec![false; n];
    for &i in &kept_idx {
        is_kept[i] = true;
    }

    let side = |a: &SeedAlignment| match spec.side {
        DanglingSide::Left => a.left(),
        DanglingSide::Right => a.right(),
    };
    let still_aligned: BTreeSet<EntityRef> = kept_idx
        .iter()
        .flat_map(|&i| [store.alignments[i].left(), store.alignments[i].right()])
        .collect();
    let removed: BTreeSet<EntityRef> = store
        .alignments
        .iter()
        .enumerate()
        .filter(|(i, _)| !is_kept[*i])
        .map(|(_, a)| side(a))
        .filter(|e| !still_aligned.contains(e))
        .collect();

    let mut out = store.clone();
    out.set_alignments(kept_idx.iter().map(|&i| store.alignments[i]).collect());
    for (k, kg) in out.kgs.iter_mut().enumerate() {
        let gone = |e: u32| removed.contains(&EntityRef::new(k as u16, e));
        for split in Split::ALL {
            kg.split_mut(split).retain(|t| !gone(t.head) && !gone(t.tail));
        }
    }
    let aligned_after: BTreeSet<EntityRef> = out.alignments.iter().flat_map(|a| [a.left(), a.right()]).collect();
    for a in store
        .alignments
        .iter()
        .enumerate()
        .filter(|(i, _)| !is_kept[*i])
        .map(|(_, a)| a)
    {
        for e in [a.left(), a.right()] {
            if !removed.contains(&e) && !aligned_after.contains(&e) {
                out.dangling_entities.insert(e);
            }
        }
    }
    out.removed_entities.extend(removed);
    Ok(out)
}
