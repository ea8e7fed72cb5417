//! Split-level evaluation and report serialization.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::rank::{rank_query, FilterMode, PositivesIndex, Query, TaskSet};
use super::Scorer;
use crate::kg::{KgData, MultiKgStore, Split};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KgMetrics {
    pub kg: String,
    pub mrr: f64,
    pub hits1: f64,
    pub hits10: f64,
    pub n_queries: usize,
    /// Queries whose answer never occurs in a training triple of the KG.
    pub n_unseen_answer: usize,
}

impl KgMetrics {
    /// Aggregates ranks by summation in the given order.
    pub fn from_ranks(kg: &str, ranks: &[usize], n_unseen_answer: usize) -> Self {
        let n = ranks.len();
        let (mut rr, mut h1, mut h10) = (0.0, 0usize, 0usize);
        for &r in ranks {
            rr += 1.0 / r as f64;
            h1 += usize::from(r <= 1);
            h10 += usize::from(r <= 10);
        }
        let frac = |x: f64| if n == 0 { 0.0 } else { x / n as f64 };
        Self {
            kg: kg.to_string(),
            mrr: frac(rr),
            hits1: frac(h1 as f64),
            hits10: frac(h10 as f64),
            n_queries: n,
            n_unseen_answer,
        }
    }
}

/// Per-KG ranking metrics of one model family, stamped with the protocol.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankingReport {
    pub model: String,
    pub split: Split,
    pub filter_mode: FilterMode,
    pub task_set: TaskSet,
    pub per_kg: Vec<KgMetrics>,
}

pub const REPORT_TSV_HEADER: &str = "model\tkg\tsplit\tfilter\ttasks\tmrr\thits1\thits10\tn_queries\tn_unseen_answer";

impl RankingReport {
    /// Unweighted mean of the per-KG MRRs.
    pub fn mean_mrr(&self) -> f64 {
        if self.per_kg.is_empty() {
            return 0.0;
        }
        self.per_kg.iter().map(|m| m.mrr).sum::<f64>() / self.per_kg.len() as f64
    }

    /// TSV rows without header, one per KG.
    pub fn tsv_rows(&self) -> String {
        let mut out = String::new();
        for m in &self.per_kg {
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{}\t{}",
                self.model,
                m.kg,
                self.split.name(),
                self.filter_mode.name(),
                self.task_set.name(),
                m.mrr,
                m.hits1,
                m.hits10,
                m.n_queries,
                m.n_unseen_answer
            )
            .unwrap();
        }
        out
    }
}

/// TSV document (with header) for several reports.
pub fn reports_tsv(reports: &[RankingReport]) -> String {
    let mut out = format!("{REPORT_TSV_HEADER}\n");
    for r in reports {
        out.push_str(&r.tsv_rows());
    }
    out
}

/// Queries of a split: per triple in file order, head query before tail query.
pub fn split_queries(kg: &KgData, split: Split, tasks: TaskSet) -> Vec<Query> {
    kg.split(split)
        .iter()
        .flat_map(|t| {
            tasks.kinds().iter().map(move |&kind| Query {
                kind,
                head: t.head,
                relation: t.relation,
                tail: t.tail,
            })
        })
        .collect()
}

/// Ranks in query order; scoring fans out over the rayon pool.
pub fn rank_queries(
    scorer: &dyn Scorer,
    queries: &[Query],
    filter: FilterMode,
    positives: &PositivesIndex,
) -> Vec<usize> {
    queries
        .par_iter()
        .map(|q| rank_query(scorer, q, filter, positives))
        .collect()
}

/// Metrics of one KG plus the per-query ranks they were computed from.
pub fn evaluate_kg(
    scorer: &dyn Scorer,
    kg: &KgData,
    positives: &PositivesIndex,
    split: Split,
    filter: FilterMode,
    tasks: TaskSet,
) -> (KgMetrics, Vec<(Query, usize)>) {
    let queries = split_queries(kg, split, tasks);
    let ranks = rank_queries(scorer, &queries, filter, positives);
    let trained = kg.trained_entities();
    let unseen = queries.iter().filter(|q| !trained[q.truth() as usize]).count();
    let metrics = KgMetrics::from_ranks(&kg.name, &ranks, unseen);
    (metrics, queries.into_iter().zip(ranks).collect())
}

/// Ranks every query of `split` for all KGs; `scorers[i]` scores KG `i`.
pub fn evaluate(
    model: &str,
    scorers: &[&dyn Scorer],
    store: &MultiKgStore,
    positives: &[PositivesIndex],
    split: Split,
    filter: FilterMode,
    tasks: TaskSet,
) -> RankingReport {
    assert_eq!(scorers.len(), store.num_kgs());
    let per_kg = store
        .kgs
        .iter()
        .zip(scorers)
        .zip(positives)
        .map(|((kg, s), p)| evaluate_kg(*s, kg, p, split, filter, tasks).0)
        .collect();
    RankingReport {
        model: model.to_string(),
        split,
        filter_mode: filter,
        task_set: tasks,
        per_kg,
    }
}

pub fn positives_for(store: &MultiKgStore) -> Vec<PositivesIndex> {
    store.kgs.iter().map(PositivesIndex::new).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metric_arithmetic() {
        let m = KgMetrics::from_ranks("a", &[1, 4], 0);
        assert_eq!(m.mrr, 0.625);
        assert_eq!(m.hits1, 0.5);
        assert_eq!(m.hits10, 1.0);
        let all_first = KgMetrics::from_ranks("a", &[1, 1, 1], 0);
        assert_eq!((all_first.mrr, all_first.hits1), (1.0, 1.0));
    }
}
