//! Filtered ranking of single link-prediction queries.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::kg::KgData;
use crate::{Error, Result};

/// Which known positives are removed from the candidate list.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterMode {
    /// Train, valid and test positives.
    TraditionalFiltered,
    /// Train positives only.
    TrainOnlyFiltered,
    Raw,
}

impl FilterMode {
    pub const ALL: [FilterMode; 3] = [
        FilterMode::TraditionalFiltered,
        FilterMode::TrainOnlyFiltered,
        FilterMode::Raw,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FilterMode::TraditionalFiltered => "traditional",
            FilterMode::TrainOnlyFiltered => "train-only",
            FilterMode::Raw => "raw",
        }
    }
}

impl std::str::FromStr for FilterMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "traditional" => Ok(FilterMode::TraditionalFiltered),
            "train-only" => Ok(FilterMode::TrainOnlyFiltered),
            "raw" => Ok(FilterMode::Raw),
            _ => Err(Error::Config(format!(
                "unknown filter mode `{s}` (expected traditional, train-only or raw)"
            ))),
        }
    }
}

/// `Tail` ranks `(h, r, ?)` only; `HeadTail` also ranks `(?, r, t)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskSet {
    Tail,
    HeadTail,
}

impl TaskSet {
    pub const ALL: [TaskSet; 2] = [TaskSet::Tail, TaskSet::HeadTail];

    pub fn name(self) -> &'static str {
        match self {
            TaskSet::Tail => "tail",
            TaskSet::HeadTail => "head,tail",
        }
    }

    pub fn kinds(self) -> &'static [QueryKind] {
        match self {
            TaskSet::Tail => &[QueryKind::Tail],
            TaskSet::HeadTail => &[QueryKind::Head, QueryKind::Tail],
        }
    }
}

impl std::str::FromStr for TaskSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut parts: Vec<&str> = s.split(',').map(str::trim).collect();
        parts.sort_unstable();
        parts.dedup();
        match parts.as_slice() {
            ["tail"] => Ok(TaskSet::Tail),
            ["head", "tail"] => Ok(TaskSet::HeadTail),
            _ => Err(Error::Config(format!(
                "unknown task set `{s}` (expected tail or head,tail)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QueryKind {
    /// `(?, r, t)`
    Head,
    /// `(h, r, ?)`
    Tail,
}

#[derive(Default)]
struct Answers {
    train: HashSet<u32>,
    all: HashSet<u32>,
}

/// Known answers of every `(h, r, ?)` and `(?, r, t)` query of one KG.
#[derive(Default)]
pub struct PositivesIndex {
    tails: HashMap<(u32, u32), Answers>,
    heads: HashMap<(u32, u32), Answers>,
}

impl PositivesIndex {
    pub fn new(kg: &KgData) -> Self {
        let mut idx = Self::default();
        for (split, triples) in [(true, &kg.train), (false, &kg.valid), (false, &kg.test)] {
            for t in triples {
                let a = idx.tails.entry((t.head, t.relation)).or_default();
                a.all.insert(t.tail);
                if split {
                    a.train.insert(t.tail);
                }
                let a = idx.heads.entry((t.relation, t.tail)).or_default();
                a.all.insert(t.head);
                if split {
                    a.train.insert(t.head);
                }
            }
        }
        idx
    }

    /// Candidates to drop for a query; `None` when nothing is filtered.
    /// `anchor` is the head of a tail query or the tail of a head query.
    pub fn excluded(&self, kind: QueryKind, anchor: u32, relation: u32, filter: FilterMode) -> Option<&HashSet<u32>> {
        let answers = match kind {
            QueryKind::Tail => self.tails.get(&(anchor, relation)),
            QueryKind::Head => self.heads.get(&(relation, anchor)),
        }?;
        match filter {
            FilterMode::TraditionalFiltered => Some(&answers.all),
            FilterMode::TrainOnlyFiltered => Some(&answers.train),
            FilterMode::Raw => None,
        }
    }
}

/// `1 + #{c ≠ truth kept: s_c > s_truth} + #{c < truth kept: s_c = s_truth}`.
///
/// `excluded` never removes the truth itself.
pub fn rank_from_scores(scores: &[f64], truth: u32, excluded: Option<&HashSet<u32>>) -> usize {
    let t = truth as usize;
    let ts = scores[t];
    let mut rank = 1;
    for (c, &s) in scores.iter().enumerate() {
        if c == t || !(s > ts || (s == ts && c < t)) {
            continue;
        }
        if excluded.is_some_and(|ex| ex.contains(&(c as u32))) {
            continue;
        }
        rank += 1;
    }
    rank
}

/// A link-prediction query on one KG, in that KG's local ids.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub kind: QueryKind,
    pub head: u32,
    pub relation: u32,
    pub tail: u32,
}

impl Query {
    pub fn truth(&self) -> u32 {
        match self.kind {
            QueryKind::Head => self.head,
            QueryKind::Tail => self.tail,
        }
    }

    pub fn anchor(&self) -> u32 {
        match self.kind {
            QueryKind::Head => self.tail,
            QueryKind::Tail => self.head,
        }
    }
}

/// Rank of the query's answer among all entities of the KG.
pub fn rank_query(scorer: &dyn super::Scorer, query: &Query, filter: FilterMode, positives: &PositivesIndex) -> usize {
    let scores = match query.kind {
        QueryKind::Tail => scorer.tail_scores(query.head, query.relation),
        QueryKind::Head => scorer.head_scores(query.relation, query.tail),
    };
    let excluded = positives.excluded(query.kind, query.anchor(), query.relation, filter);
    rank_from_scores(&scores, query.truth(), excluded)
}
