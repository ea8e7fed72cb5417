//! The two-stage schedule: independent training, then mutual distillation.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::TrainConfig;
use super::gate::{update_gate, GateState};
use super::loss::{kd_on_tape, margin_loss_on_tape, Task, TeacherTargets};
use super::negative::NegativeSampler;
use super::optim::{grad_step, AdamState};
use crate::eval::{evaluate_kg, FilterMode, FusedScorer, LocalScorer, PositivesIndex, Scorer, TaskSet};
use crate::kg::{build_fused_kg, EntityRef, FusedKg, KgId, LocalTriple, MultiKgStore, RelationRef, Split};
use crate::model::{
    encode_any, encode_on_tape, score_on_tape, Adjacency, EncodedGraph, EncodedVars, ModelParams, ParamVars, Tape, Var,
};
use crate::Result;

const STREAM_INIT: u64 = 1;
const STREAM_STAGE1: u64 = 2;
const STREAM_STAGE2: u64 = 3;

/// A reproducible random stream for one purpose and model.
pub fn rng_stream(seed: u64, purpose: u64, model: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((purpose << 32) | model);
    rng
}

/// Everything training derives from a store once.
pub struct TrainData<'a> {
    pub store: &'a MultiKgStore,
    pub fused: FusedKg,
    pub adjacency: Vec<Adjacency>,
    pub fused_adjacency: Adjacency,
    pub train_sets: Vec<HashSet<LocalTriple>>,
    pub fused_train_set: HashSet<LocalTriple>,
    pub positives: Vec<PositivesIndex>,
}

impl<'a> TrainData<'a> {
    pub fn new(store: &'a MultiKgStore) -> Result<Self> {
        let fused = build_fused_kg(store)?;
        let adjacency = store
            .kgs
            .iter()
            .map(|k| Adjacency::from_triples(k.num_entities(), k.num_relations(), &k.train))
            .collect();
        Ok(Self {
            store,
            fused_adjacency: Adjacency::from_fused(&fused),
            train_sets: store.kgs.iter().map(|k| k.train.iter().copied().collect()).collect(),
            fused_train_set: fused.triples.iter().copied().collect(),
            positives: store.kgs.iter().map(PositivesIndex::new).collect(),
            adjacency,
            fused,
        })
    }

    pub fn num_kgs(&self) -> usize {
        self.store.num_kgs()
    }

    /// Validation MRR (traditional filter, head and tail queries) of any
    /// scorer on KG `kg`.
    pub fn val_mrr_with(&self, kg: usize, scorer: &dyn Scorer) -> f64 {
        evaluate_kg(
            scorer,
            &self.store.kgs[kg],
            &self.positives[kg],
            Split::Valid,
            FilterMode::TraditionalFiltered,
            TaskSet::HeadTail,
        )
        .0
        .mrr
    }

    pub fn val_mrr_individual(&self, kg: usize, enc: &EncodedGraph) -> f64 {
        self.val_mrr_with(kg, &LocalScorer { enc })
    }

    /// Validation MRR of the fused model on each KG's queries.
    pub fn val_mrr_fused(&self, enc: &EncodedGraph) -> Vec<f64> {
        (0..self.num_kgs())
            .map(|kg| {
                let s = FusedScorer {
                    enc,
                    fused: &self.fused,
                    kg: kg as KgId,
                };
                self.val_mrr_with(kg, &s)
            })
            .collect()
    }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// One model per KG plus the fused model.
#[derive(Clone, Debug, PartialEq)]
pub struct Models {
    pub individual: Vec<ModelParams>,
    pub fused: ModelParams,
}

pub fn init_models(data: &TrainData, config: &TrainConfig) -> Models {
    let m = data.num_kgs();
    let individual = data
        .store
        .kgs
        .iter()
        .enumerate()
        .map(|(i, k)| {
            let shape = config.shape(k.num_entities(), k.num_relations(), false);
            ModelParams::init(shape, &mut rng_stream(config.seed, STREAM_INIT, i as u64))
        })
        .collect();
    let shape = config.shape(data.fused.num_entities(), data.fused.num_relations(), true);
    let fused = ModelParams::init(shape, &mut rng_stream(config.seed, STREAM_INIT, m as u64));
    Models { individual, fused }
}

/// One line of `metrics.tsv`.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub epoch: usize,
    pub model: String,
    pub loss_t: f64,
    /// Unweighted distillation loss received by this model (0 in stage 1).
    pub loss_d: f64,
    pub val_mrr: Option<f64>,
}

pub const METRICS_HEADER: &str = "epoch\tmodel\tloss_T\tloss_D\tval_mrr";

impl MetricsRow {
    pub fn tsv(&self) -> String {
        let mrr = self.val_mrr.map_or_else(|| "NA".to_string(), |v| format!("{v:.6}"));
        format!(
            "{}\t{}\t{:.6}\t{:.6}\t{}",
            self.epoch, self.model, self.loss_t, self.loss_d, mrr
        )
    }
}

/// Per-KG distillation bookkeeping of one stage-2 epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct DistillRow {
    pub epoch: usize,
    pub kg: String,
    /// Gate inputs and flags in force during the epoch.
    pub gate: GateState,
    /// Mean per-step distillation loss received by the individual model
    /// from the fused teacher (0 when gated off).
    pub kd_f_to_i: f64,
    /// Mean per-step distillation loss received by the fused model from the
    /// individual teacher (0 when gated off).
    pub kd_i_to_f: f64,
}

pub const DISTILL_HEADER: &str =
    "epoch\tkg\tmrr_individual\tmrr_fused\tteach_i_to_f\tteach_f_to_i\tkd_f_to_i\tkd_i_to_f";

impl DistillRow {
    pub fn tsv(&self) -> String {
        format!(
            "{}\t{}\t{:.6}\t{:.6}\t{}\t{}\t{:.6}\t{:.6}",
            self.epoch,
            self.kg,
            self.gate.mrr_individual,
            self.gate.mrr_fused_on_kg,
            self.gate.teach_i_to_f,
            self.gate.teach_f_to_i,
            self.kd_f_to_i,
            self.kd_i_to_f
        )
    }
}

pub fn model_label(stage: u8, data: &TrainData, model: Option<usize>) -> String {
    match model {
        Some(i) => format!("stage{stage}/kg:{}", data.store.kgs[i].name),
        None => format!("stage{stage}/fused"),
    }
}

/// Training triples a model learns from, the corruption range of each, and
/// the known positives.
struct ModelView<'d> {
    adj: &'d Adjacency,
    triples: &'d [LocalTriple],
    positives: &'d HashSet<LocalTriple>,
    fused: Option<&'d FusedKg>,
    n_entities: u32,
}

impl<'d> ModelView<'d> {
    fn new(data: &'d TrainData, model: Option<usize>) -> Self {
        match model {
            Some(i) => Self {
                adj: &data.adjacency[i],
                triples: &data.store.kgs[i].train,
                positives: &data.train_sets[i],
                fused: None,
                n_entities: data.store.kgs[i].num_entities() as u32,
            },
            None => Self {
                adj: &data.fused_adjacency,
                triples: &data.fused.triples,
                positives: &data.fused_train_set,
                fused: Some(&data.fused),
                n_entities: data.fused.num_entities() as u32,
            },
        }
    }

    /// Fused negatives stay within the source KG of the triple.
    fn entity_range(&self, index: usize) -> std::ops::Range<u32> {
        match self.fused {
            Some(f) => f.entity_range(f.triple_source(index)),
            None => 0..self.n_entities,
        }
    }
}

/// Tape holding one model's forward pass over a batch.
struct Forward {
    tape: Tape,
    vars: ParamVars,
    enc: EncodedVars,
    loss_t: Var,
}

fn forward_kge(
    params: &ModelParams,
    view: &ModelView,
    batch: &[usize],
    rng: &mut ChaCha8Rng,
    config: &TrainConfig,
    sampler: &mut NegativeSampler,
) -> Result<Forward> {
    let mut tape = Tape::new();
    let vars = ParamVars::register(&mut tape, params);
    let enc = encode_on_tape(&mut tape, &vars, params, view.adj)?;
    let k = config.neg_samples;
    let n = batch.len();
    let (mut ph, mut pr, mut pt) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    let (mut nh, mut nr, mut nt) = (
        Vec::with_capacity(n * k),
        Vec::with_capacity(n * k),
        Vec::with_capacity(n * k),
    );
    for &idx in batch {
        let t = view.triples[idx];
        ph.push(t.head as usize);
        pr.push(t.relation as usize);
        pt.push(t.tail as usize);
        for neg in sampler.sample(t, view.entity_range(idx), rng, k) {
            nh.push(neg.corrupted.head as usize);
            nr.push(neg.corrupted.relation as usize);
            nt.push(neg.corrupted.tail as usize);
        }
    }
    let sf = params.shape.score_fn;
    let pos = score_on_tape(&mut tape, enc, sf, ph, pr, pt);
    let neg = score_on_tape(&mut tape, enc, sf, nh, nr, nt);
    let loss_t = margin_loss_on_tape(&mut tape, pos, neg, k, config.gamma, config.hinge);
    Ok(Forward {
        tape,
        vars,
        enc,
        loss_t,
    })
}

fn backward_step(fwd: &Forward, loss: Var, params: &mut ModelParams, adam: &mut AdamState, lr: f64) -> Result<()> {
    let mut grads = fwd.tape.backward(loss);
    let g = fwd.vars.collect(&mut grads, params);
    grad_step(params, &g, lr, adam)
}

fn shuffled(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut v: Vec<usize> = (0..n).collect();
    v.shuffle(rng);
    v
}

fn val_mrr(data: &TrainData, model: Option<usize>, params: &ModelParams) -> Result<f64> {
    let view = ModelView::new(data, model);
    let enc = encode_any(params, view.adj)?;
    Ok(match model {
        Some(i) => data.val_mrr_individual(i, &enc),
        None => mean(&data.val_mrr_fused(&enc)),
    })
}

pub struct Stage1Output {
    pub models: Models,
    pub rows: Vec<MetricsRow>,
    /// Best validation MRR of each individual model, then the fused model.
    pub best_val_mrr: Vec<f64>,
    pub exhausted_negatives: usize,
}

struct SingleRun {
    params: ModelParams,
    rows: Vec<MetricsRow>,
    best: f64,
    exhausted: usize,
}

fn train_single(data: &TrainData, model: Option<usize>, init: ModelParams, config: &TrainConfig) -> Result<SingleRun> {
    let id = model.unwrap_or(data.num_kgs()) as u64;
    let mut rng = rng_stream(config.seed, STREAM_STAGE1, id);
    let view = ModelView::new(data, model);
    let mut sampler = NegativeSampler::new(view.positives);
    let mut params = init;
    let mut adam = AdamState::new(&params);
    let mut best = (params.clone(), val_mrr(data, model, &params)?);
    let mut stale = 0;
    let mut rows = Vec::new();
    let label = model_label(1, data, model);
    for epoch in 1..=config.epochs_stage1 {
        let order = shuffled(view.triples.len(), &mut rng);
        let mut losses = Vec::new();
        for batch in order.chunks(config.batch_size) {
            let fwd = forward_kge(&params, &view, batch, &mut rng, config, &mut sampler)?;
            losses.push(fwd.tape.scalar(fwd.loss_t));
            backward_step(&fwd, fwd.loss_t, &mut params, &mut adam, config.lr)?;
        }
        let evaluate = epoch % config.eval_every == 0 || epoch == config.epochs_stage1;
        let mrr = if evaluate {
            Some(val_mrr(data, model, &params)?)
        } else {
            None
        };
        rows.push(MetricsRow {
            epoch,
            model: label.clone(),
            loss_t: mean(&losses),
            loss_d: 0.0,
            val_mrr: mrr,
        });
        if let Some(m) = mrr {
            if m > best.1 {
                best = (params.clone(), m);
                stale = 0;
            } else {
                stale += 1;
                if stale >= config.patience {
                    log::info!("{label}: early stop after epoch {epoch} (best val MRR {:.4})", best.1);
                    break;
                }
            }
        }
    }
    Ok(SingleRun {
        params: best.0,
        rows,
        best: best.1,
        exhausted: sampler.exhausted,
    })
}

/// Trains every model independently on its margin loss, keeping the
/// snapshot with the best validation MRR. Models run in parallel.
pub fn train_stage1(data: &TrainData, init: Models, config: &TrainConfig) -> Result<Stage1Output> {
    let m = data.num_kgs();
    let jobs: Vec<(Option<usize>, ModelParams)> = init
        .individual
        .into_iter()
        .enumerate()
        .map(|(i, p)| (Some(i), p))
        .chain(std::iter::once((None, init.fused)))
        .collect();
    let runs: Vec<SingleRun> = jobs
        .into_par_iter()
        .map(|(model, p)| train_single(data, model, p, config))
        .collect::<Result<_>>()?;
    let mut rows: Vec<MetricsRow> = Vec::new();
    let max_epoch = runs.iter().map(|r| r.rows.len()).max().unwrap_or(0);
    for e in 0..max_epoch {
        rows.extend(runs.iter().filter_map(|r| r.rows.get(e).cloned()));
    }
    let best_val_mrr = runs.iter().map(|r| r.best).collect();
    let exhausted_negatives = runs.iter().map(|r| r.exhausted).sum();
    let mut params: Vec<ModelParams> = runs.into_iter().map(|r| r.params).collect();
    let fused = params.pop().expect("fused model");
    debug_assert_eq!(params.len(), m);
    Ok(Stage1Output {
        models: Models {
            individual: params,
            fused,
        },
        rows,
        best_val_mrr,
        exhausted_negatives,
    })
}

pub struct Stage2Output {
    /// Each model's best snapshot by its own validation MRR.
    pub models: Models,
    pub rows: Vec<MetricsRow>,
    pub distill: Vec<DistillRow>,
    pub exhausted_negatives: usize,
}

/// Local ids of KG `kg` to fused-graph ids.
struct Mapping<'d> {
    fused: &'d FusedKg,
    kg: KgId,
}

impl Mapping<'_> {
    fn ent(&self, local: u32) -> u32 {
        self.fused.to_global(EntityRef::new(self.kg, local))
    }

    fn rel(&self, local: u32) -> u32 {
        self.fused.relation_to_global(RelationRef::new(self.kg, local))
    }

    fn triple(&self, t: LocalTriple) -> LocalTriple {
        LocalTriple::new(self.ent(t.head), self.rel(t.relation), self.ent(t.tail))
    }
}

fn n_candidates(task: Task, n_entities: usize, n_relations: usize) -> usize {
    match task {
        Task::Head | Task::Tail => n_entities,
        Task::Relation => n_relations,
    }
}

/// Teacher goodness of every candidate of `task` for local triple `t`;
/// `map` translates local ids into the teacher's id space.
fn teacher_scores(
    teacher: &EncodedGraph,
    task: Task,
    t: LocalTriple,
    n: usize,
    map_ent: &dyn Fn(u32) -> u32,
    map_rel: &dyn Fn(u32) -> u32,
) -> Vec<f64> {
    let (h, r, tl) = (map_ent(t.head), map_rel(t.relation), map_ent(t.tail));
    (0..n as u32)
        .map(|c| match task {
            Task::Head => teacher.score_triple(map_ent(c), r, tl),
            Task::Tail => teacher.score_triple(h, r, map_ent(c)),
            Task::Relation => teacher.score_triple(h, map_rel(c), tl),
        })
        .collect()
}

/// Top-k teacher targets for the local triples of KG `kg`, in local ids.
pub(crate) fn local_targets(
    teacher: &EncodedGraph,
    triples: &[LocalTriple],
    n_entities: usize,
    n_relations: usize,
    top_k: usize,
    map_ent: &(dyn Fn(u32) -> u32 + Sync),
    map_rel: &(dyn Fn(u32) -> u32 + Sync),
) -> Vec<TeacherTargets> {
    Task::ALL
        .iter()
        .map(|&task| {
            let n = n_candidates(task, n_entities, n_relations);
            let k = top_k.min(n);
            TeacherTargets::from_teacher(task, triples.len(), k, |i| {
                teacher_scores(teacher, task, triples[i], n, map_ent, map_rel)
            })
        })
        .collect()
}

/// Sum over tasks of the mean KD loss, on the student's tape.
fn kd_all_tasks(
    tape: &mut Tape,
    enc: EncodedVars,
    params: &ModelParams,
    triples: &[LocalTriple],
    targets: &[TeacherTargets],
) -> Var {
    let mut total: Option<Var> = None;
    for t in targets {
        let v = kd_on_tape(tape, enc, params.shape.score_fn, triples, t);
        total = Some(match total {
            Some(acc) => tape.add(acc, v),
            None => v,
        });
    }
    total.expect("three tasks")
}

/// Individual → fused targets: candidate ids translated to global ids.
fn to_global_targets(targets: Vec<TeacherTargets>, map: &Mapping) -> Vec<TeacherTargets> {
    targets
        .into_iter()
        .map(|mut t| {
            for row in &mut t.candidates {
                for c in row.iter_mut() {
                    *c = match t.task {
                        Task::Head | Task::Tail => map.ent(*c),
                        Task::Relation => map.rel(*c),
                    };
                }
            }
            t
        })
        .collect()
}

/// Mutual distillation following the two-level loop: per outer step the
/// fused model's margin loss is recorded, then each individual model is
/// trained on its margin loss plus gated distillation from the fused model,
/// while the fused model accumulates gated distillation from each individual
/// model; the fused model is updated once at the end of the step.
///
/// Each model's returned snapshot is its best by validation MRR over the
/// stage-2 evaluations (the starting point is not a candidate).
pub fn train_stage2(data: &TrainData, start: Models, config: &TrainConfig) -> Result<Stage2Output> {
    let m = data.num_kgs();
    let mut models = start;
    if config.epochs_stage2 == 0 {
        return Ok(Stage2Output {
            models,
            rows: Vec::new(),
            distill: Vec::new(),
            exhausted_negatives: 0,
        });
    }
    let mut rng_f = rng_stream(config.seed, STREAM_STAGE2, m as u64);
    let mut rngs: Vec<ChaCha8Rng> = (0..m)
        .map(|i| rng_stream(config.seed, STREAM_STAGE2, i as u64))
        .collect();
    let mut adam_f = AdamState::new(&models.fused);
    let mut adams: Vec<AdamState> = models.individual.iter().map(AdamState::new).collect();
    let view_f = ModelView::new(data, None);
    let views: Vec<ModelView> = (0..m).map(|i| ModelView::new(data, Some(i))).collect();
    let mut sampler_f = NegativeSampler::new(view_f.positives);
    let mut samplers: Vec<NegativeSampler> = views.iter().map(|v| NegativeSampler::new(v.positives)).collect();
    let maps: Vec<Mapping> = (0..m)
        .map(|i| Mapping {
            fused: &data.fused,
            kg: i as KgId,
        })
        .collect();
    let alphas: Vec<f64> = data.store.kgs.iter().map(|k| config.alpha_for(&k.name)).collect();

    let refresh = |models: &Models| -> Result<(Vec<f64>, Vec<f64>)> {
        let ind = (0..m)
            .map(|i| val_mrr(data, Some(i), &models.individual[i]))
            .collect::<Result<Vec<_>>>()?;
        let enc_f = encode_any(&models.fused, &data.fused_adjacency)?;
        Ok((ind, data.val_mrr_fused(&enc_f)))
    };
    let gates_from = |ind: &[f64], fus: &[f64]| -> Vec<GateState> {
        (0..m)
            .map(|i| update_gate(GateState::new(ind[i], fus[i]), config.theta))
            .collect()
    };
    let (ind, fus) = refresh(&models)?;
    let mut gates = gates_from(&ind, &fus);

    let mut best_ind: Vec<Option<(ModelParams, f64)>> = vec![None; m];
    let mut best_f: Option<(ModelParams, f64)> = None;
    let mut rows = Vec::new();
    let mut distill = Vec::new();

    let n_f = view_f.triples.len();
    let steps = n_f.div_ceil(config.batch_size).max(1);
    for epoch in 1..=config.epochs_stage2 {
        let order_f = shuffled(n_f, &mut rng_f);
        let orders: Vec<Vec<usize>> = (0..m).map(|i| shuffled(views[i].triples.len(), &mut rngs[i])).collect();
        let per_kg: Vec<usize> = views.iter().map(|v| v.triples.len().div_ceil(steps)).collect();
        let mut lt_f = Vec::with_capacity(steps);
        let mut ld_f = Vec::with_capacity(steps);
        let mut lt_i = vec![Vec::with_capacity(steps); m];
        let mut kd_fi = vec![Vec::with_capacity(steps); m];
        let mut kd_if = vec![Vec::with_capacity(steps); m];

        for s in 0..steps {
            let fb = &order_f[(s * config.batch_size).min(n_f)..((s + 1) * config.batch_size).min(n_f)];
            let mut fwd_f = forward_kge(&models.fused, &view_f, fb, &mut rng_f, config, &mut sampler_f)?;
            lt_f.push(fwd_f.tape.scalar(fwd_f.loss_t));
            let teacher_f = EncodedGraph::from_tape(&fwd_f.tape, fwd_f.enc, models.fused.shape.score_fn);
            let mut loss_f = fwd_f.loss_t;
            let mut ld_f_step = 0.0;

            for i in 0..m {
                let len = views[i].triples.len();
                let batch = &orders[i][(s * per_kg[i]).min(len)..((s + 1) * per_kg[i]).min(len)];
                if batch.is_empty() {
                    continue;
                }
                let kg = &data.store.kgs[i];
                let triples: Vec<LocalTriple> = batch.iter().map(|&j| views[i].triples[j]).collect();
                let mut fwd = forward_kge(
                    &models.individual[i],
                    &views[i],
                    batch,
                    &mut rngs[i],
                    config,
                    &mut samplers[i],
                )?;
                lt_i[i].push(fwd.tape.scalar(fwd.loss_t));
                let teacher_i = EncodedGraph::from_tape(&fwd.tape, fwd.enc, models.individual[i].shape.score_fn);

                // Fused model teaches the individual model.
                let mut loss = fwd.loss_t;
                if gates[i].teach_f_to_i {
                    let map = &maps[i];
                    let targets = local_targets(
                        &teacher_f,
                        &triples,
                        kg.num_entities(),
                        kg.num_relations(),
                        config.top_k,
                        &|e| map.ent(e),
                        &|r| map.rel(r),
                    );
                    let kd = kd_all_tasks(&mut fwd.tape, fwd.enc, &models.individual[i], &triples, &targets);
                    kd_fi[i].push(fwd.tape.scalar(kd));
                    let w = fwd.tape.scale(kd, alphas[i]);
                    loss = fwd.tape.add(loss, w);
                } else {
                    kd_fi[i].push(0.0);
                }
                backward_step(&fwd, loss, &mut models.individual[i], &mut adams[i], config.lr)?;

                // Individual model (pre-update values) teaches the fused model.
                if gates[i].teach_i_to_f {
                    let map = &maps[i];
                    let targets = local_targets(
                        &teacher_i,
                        &triples,
                        kg.num_entities(),
                        kg.num_relations(),
                        config.top_k,
                        &|e| e,
                        &|r| r,
                    );
                    let targets = to_global_targets(targets, map);
                    let global: Vec<LocalTriple> = triples.iter().map(|&t| map.triple(t)).collect();
                    let kd = kd_all_tasks(&mut fwd_f.tape, fwd_f.enc, &models.fused, &global, &targets);
                    let v = fwd_f.tape.scalar(kd);
                    kd_if[i].push(v);
                    ld_f_step += v;
                    let w = fwd_f.tape.scale(kd, alphas[i]);
                    loss_f = fwd_f.tape.add(loss_f, w);
                } else {
                    kd_if[i].push(0.0);
                }
            }
            ld_f.push(ld_f_step);
            backward_step(&fwd_f, loss_f, &mut models.fused, &mut adam_f, config.lr)?;
        }

        for (i, kg) in data.store.kgs.iter().enumerate() {
            distill.push(DistillRow {
                epoch,
                kg: kg.name.clone(),
                gate: gates[i],
                kd_f_to_i: mean(&kd_fi[i]),
                kd_i_to_f: mean(&kd_if[i]),
            });
        }
        let evaluate = epoch % config.eval_every == 0 || epoch == config.epochs_stage2;
        let mrrs = if evaluate {
            let (ind, fus) = refresh(&models)?;
            gates = gates_from(&ind, &fus);
            for i in 0..m {
                if best_ind[i].as_ref().is_none_or(|b| ind[i] > b.1) {
                    best_ind[i] = Some((models.individual[i].clone(), ind[i]));
                }
            }
            let mf = mean(&fus);
            if best_f.as_ref().is_none_or(|b| mf > b.1) {
                best_f = Some((models.fused.clone(), mf));
            }
            Some((ind, mf))
        } else {
            None
        };
        for i in 0..m {
            rows.push(MetricsRow {
                epoch,
                model: model_label(2, data, Some(i)),
                loss_t: mean(&lt_i[i]),
                loss_d: mean(&kd_fi[i]),
                val_mrr: mrrs.as_ref().map(|(ind, _)| ind[i]),
            });
        }
        rows.push(MetricsRow {
            epoch,
            model: model_label(2, data, None),
            loss_t: mean(&lt_f),
            loss_d: mean(&ld_f),
            val_mrr: mrrs.as_ref().map(|(_, f)| *f),
        });
    }

    let exhausted_negatives = sampler_f.exhausted + samplers.iter().map(|s| s.exhausted).sum::<usize>();
    let individual = best_ind
        .into_iter()
        .map(|b| b.expect("final epoch always evaluates").0)
        .collect();
    let fused = best_f.expect("final epoch always evaluates").0;
    Ok(Stage2Output {
        models: Models { individual, fused },
        rows,
        distill,
        exhausted_negatives,
    })
}
