//! Margin ranking loss, top-k teacher sampling and KL distillation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::kg::LocalTriple;
use crate::model::tape::{kl_divergence, softmax};
use crate::model::{score_on_tape, EncodedVars, Matrix, ScoreFn, Tape, Var};

/// `mean_j max(0, neg_j - pos_j + gamma)`; `hinge = false` drops the `max`.
pub fn margin_loss(goodness_pos: &[f64], goodness_neg: &[f64], gamma: f64, hinge: bool) -> f64 {
    assert_eq!(goodness_pos.len(), goodness_neg.len());
    if goodness_pos.is_empty() {
        return 0.0;
    }
    let total: f64 = goodness_pos
        .iter()
        .zip(goodness_neg)
        .map(|(p, n)| {
            let v = n - p + gamma;
            if hinge {
                v.max(0.0)
            } else {
                v
            }
        })
        .sum();
    total / goodness_pos.len() as f64
}

/// Tape version of [`margin_loss`]; `neg` has `pos.rows() * per_pos` rows,
/// the negatives of positive `i` at rows `i*per_pos..(i+1)*per_pos`.
pub fn margin_loss_on_tape(tape: &mut Tape, pos: Var, neg: Var, per_pos: usize, gamma: f64, hinge: bool) -> Var {
    let n = tape.value(pos).rows();
    let pos_rep = tape.gather(pos, (0..n * per_pos).map(|j| j / per_pos).collect());
    let d = tape.sub(neg, pos_rep);
    let v = tape.add_scalar(d, gamma);
    let v = if hinge { tape.relu(v) } else { v };
    tape.mean(v)
}

/// Prediction task a distribution is taken over.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Head,
    Tail,
    Relation,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::Head, Task::Tail, Task::Relation];
}

/// Indices of the `k` largest values, largest first; ties go to the lower index.
pub fn topk_candidates(scores: &[f64], k: usize) -> Vec<usize> {
    assert!(k <= scores.len(), "k = {k} exceeds {} candidates", scores.len());
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    // `+ 0.0` maps -0.0 to 0.0 so signed zeros tie.
    let cmp = |a: &usize, b: &usize| (scores[*b] + 0.0).total_cmp(&(scores[*a] + 0.0)).then(a.cmp(b));
    if k < idx.len() && k > 0 {
        idx.select_nth_unstable_by(k - 1, cmp);
        idx.truncate(k);
    }
    idx.sort_unstable_by(cmp);
    idx.truncate(k);
    idx
}

/// Teacher and student distributions over the teacher's top-k candidates
/// for one triple and task.
#[derive(Clone, Debug, PartialEq)]
pub struct DistillationBatch {
    pub task: Task,
    pub triple: LocalTriple,
    pub candidate_ids: Vec<u32>,
    pub teacher_probs: Vec<f64>,
    pub student_probs: Vec<f64>,
}

impl DistillationBatch {
    /// Takes the teacher's top-k over all candidates and softmaxes both
    /// models' goodness restricted to those ids.
    pub fn from_scores(task: Task, triple: LocalTriple, teacher: &[f64], student: &[f64], k: usize) -> Self {
        assert_eq!(teacher.len(), student.len());
        let top = topk_candidates(teacher, k);
        let t: Vec<f64> = top.iter().map(|&i| teacher[i]).collect();
        let s: Vec<f64> = top.iter().map(|&i| student[i]).collect();
        Self {
            task,
            triple,
            candidate_ids: top.iter().map(|&i| i as u32).collect(),
            teacher_probs: softmax(&t),
            student_probs: softmax(&s),
        }
    }
}

/// `KL(teacher || student)` of one batch, student probabilities floored at 1e-12.
pub fn kd_loss(batch: &DistillationBatch) -> f64 {
    kl_divergence(&batch.teacher_probs, &batch.student_probs)
}

/// Candidate lists and teacher probabilities for one task over a batch of
/// triples; row `i` belongs to triple `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct TeacherTargets {
    pub task: Task,
    pub candidates: Vec<Vec<u32>>,
    pub probs: Matrix,
}

impl TeacherTargets {
    /// `scores(i)` gives the teacher's goodness over every candidate of
    /// triple `i`; rows are scored in parallel and kept in order.
    pub fn from_teacher(task: Task, n: usize, k: usize, scores: impl Fn(usize) -> Vec<f64> + Sync) -> Self {
        let rows: Vec<(Vec<u32>, Vec<f64>)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let s = scores(i);
                let top = topk_candidates(&s, k);
                let t: Vec<f64> = top.iter().map(|&c| s[c]).collect();
                (top.into_iter().map(|c| c as u32).collect(), softmax(&t))
            })
            .collect();
        let mut candidates = Vec::with_capacity(n);
        let mut probs = Vec::with_capacity(n * k);
        for (c, p) in rows {
            candidates.push(c);
            probs.extend(p);
        }
        Self {
            task,
            candidates,
            probs: Matrix::from_vec(n, k, probs),
        }
    }

    pub fn k(&self) -> usize {
        self.probs.cols()
    }
}

/// Mean over triples of `KL(teacher || softmax(student goodness on the
/// teacher's candidates))`, recorded on the student's tape.
///
/// `triples` and candidate ids are in the student's index space.
pub fn kd_on_tape(
    tape: &mut Tape,
    enc: EncodedVars,
    score_fn: ScoreFn,
    triples: &[LocalTriple],
    targets: &TeacherTargets,
) -> Var {
    let k = targets.k();
    let n = triples.len();
    let (mut hs, mut rs, mut ts) = (
        Vec::with_capacity(n * k),
        Vec::with_capacity(n * k),
        Vec::with_capacity(n * k),
    );
    for (t, cands) in triples.iter().zip(&targets.candidates) {
        for &c in cands {
            let (h, r, tl) = match targets.task {
                Task::Head => (c, t.relation, t.tail),
                Task::Tail => (t.head, t.relation, c),
                Task::Relation => (t.head, c, t.tail),
            };
            hs.push(h as usize);
            rs.push(r as usize);
            ts.push(tl as usize);
        }
    }
    let g = score_on_tape(tape, enc, score_fn, hs, rs, ts);
    let logits = tape.reshape(g, n, k);
    let kl = tape.kl_rows(logits, targets.probs.clone());
    tape.mean(kl)
}
