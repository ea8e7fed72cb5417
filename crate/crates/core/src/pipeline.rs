//! End-to-end runs: train both stages, write checkpoints, logs and reports.
//!
//! A run directory holds
//!
//! ```text
//! config.toml             resolved training configuration
//! manifest.toml           dataset manifest with absolute paths (when trained from a manifest)
//! metrics.tsv             epoch, model, loss_T, loss_D, val_mrr
//! distill.tsv             per stage-2 epoch and KG: gate inputs, flags and both distillation terms
//! checkpoints/<set>/kg-<name>.ckpt, fused.ckpt   set = stage1, stage2
//! report.tsv, report.json valid and test rankings of every model family
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::eval::{
    ensemble_scorer, evaluate, evaluate_kg, FilterMode, FusedScorer, LocalScorer, Query, RankingReport, Scorer, TaskSet,
};
use crate::kg::{KgId, MultiKgStore, Split};
use crate::model::{encode_any, load_checkpoint, save_checkpoint, vocab_digest, EncodedGraph};
use crate::training::{
    init_models, train_stage1, train_stage2, DistillRow, MetricsRow, Models, TrainConfig, TrainData, DISTILL_HEADER,
    METRICS_HEADER,
};
use crate::{Error, Result};

/// Model families of the ablation, in report order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Family {
    /// Stage-1 individual models.
    #[serde(rename = "KGC-I")]
    KgcI,
    /// Stage-1 fused model.
    #[serde(rename = "KGC-A")]
    KgcA,
    /// Stage-2 individual models.
    #[serde(rename = "KGC-I-D")]
    KgcID,
    /// Stage-2 fused model.
    #[serde(rename = "KGC-A-D")]
    KgcAD,
    /// Ensemble of the stage-2 individual and fused models.
    #[serde(rename = "CKGC-CKD")]
    Ckgc,
}

impl Family {
    pub const ALL: [Family; 5] = [Family::KgcI, Family::KgcA, Family::KgcID, Family::KgcAD, Family::Ckgc];

    pub fn name(self) -> &'static str {
        match self {
            Family::KgcI => "KGC-I",
            Family::KgcA => "KGC-A",
            Family::KgcID => "KGC-I-D",
            Family::KgcAD => "KGC-A-D",
            Family::Ckgc => "CKGC-CKD",
        }
    }

    pub fn model_set(self) -> ModelSet {
        match self {
            Family::KgcI | Family::KgcA => ModelSet::Stage1,
            _ => ModelSet::Stage2,
        }
    }
}

/// A saved set of models (one per KG plus the fused model).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelSet {
    Stage1,
    Stage2,
}

impl ModelSet {
    pub const ALL: [ModelSet; 2] = [ModelSet::Stage1, ModelSet::Stage2];

    pub fn dir_name(self) -> &'static str {
        match self {
            ModelSet::Stage1 => "stage1",
            ModelSet::Stage2 => "stage2",
        }
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown model family `{s}` (expected KGC-I, KGC-A, KGC-I-D, KGC-A-D or CKGC-CKD)"
                ))
            })
    }
}

/// Encoded graphs of one model set, ready for scoring.
pub struct EncodedModels {
    pub individual: Vec<EncodedGraph>,
    pub fused: EncodedGraph,
}

impl EncodedModels {
    pub fn new(data: &TrainData, models: &Models) -> Result<Self> {
        Ok(Self {
            individual: models
                .individual
                .iter()
                .zip(&data.adjacency)
                .map(|(p, a)| encode_any(p, a))
                .collect::<Result<_>>()?,
            fused: encode_any(&models.fused, &data.fused_adjacency)?,
        })
    }
}

/// One scorer per KG for the model family `family` drawn from `enc`.
pub fn family_scorers<'a>(data: &'a TrainData, enc: &'a EncodedModels, family: Family) -> Vec<Box<dyn Scorer + 'a>> {
    (0..data.num_kgs())
        .map(|i| -> Box<dyn Scorer + 'a> {
            let kg = i as KgId;
            match family {
                Family::KgcI | Family::KgcID => Box::new(LocalScorer {
                    enc: &enc.individual[i],
                }),
                Family::KgcA | Family::KgcAD => Box::new(FusedScorer {
                    enc: &enc.fused,
                    fused: &data.fused,
                    kg,
                }),
                Family::Ckgc => Box::new(ensemble_scorer(&enc.individual[i], &enc.fused, &data.fused, kg)),
            }
        })
        .collect()
}

/// Ranks `split` with the model family `family` drawn from `enc`.
pub fn family_report(
    data: &TrainData,
    enc: &EncodedModels,
    family: Family,
    split: Split,
    filter: FilterMode,
    tasks: TaskSet,
) -> RankingReport {
    let scorers = family_scorers(data, enc, family);
    let refs: Vec<&dyn Scorer> = scorers.iter().map(|b| b.as_ref()).collect();
    evaluate(family.name(), &refs, data.store, &data.positives, split, filter, tasks)
}

/// Like [`family_report`], also returning every query with its rank, per KG.
pub fn family_ranks(
    data: &TrainData,
    enc: &EncodedModels,
    family: Family,
    split: Split,
    filter: FilterMode,
    tasks: TaskSet,
) -> (RankingReport, Vec<Vec<(Query, usize)>>) {
    let scorers = family_scorers(data, enc, family);
    let mut per_kg = Vec::new();
    let mut ranks = Vec::new();
    for ((kg, s), p) in data.store.kgs.iter().zip(&scorers).zip(&data.positives) {
        let (m, r) = evaluate_kg(s.as_ref(), kg, p, split, filter, tasks);
        per_kg.push(m);
        ranks.push(r);
    }
    let report = RankingReport {
        model: family.name().to_string(),
        split,
        filter_mode: filter,
        task_set: tasks,
        per_kg,
    };
    (report, ranks)
}

/// Result of [`train_models`].
pub struct TrainRun {
    pub stage1: Models,
    pub stage2: Option<Models>,
    pub metrics: Vec<MetricsRow>,
    pub distill: Vec<DistillRow>,
    pub exhausted_negatives: usize,
}

impl TrainRun {
    pub fn models(&self, family: Family) -> Option<&Models> {
        self.model_set(family.model_set())
    }

    pub fn model_set(&self, set: ModelSet) -> Option<&Models> {
        match set {
            ModelSet::Stage1 => Some(&self.stage1),
            ModelSet::Stage2 => self.stage2.as_ref(),
        }
    }

    pub fn metrics_tsv(&self) -> String {
        let mut out = format!("{METRICS_HEADER}\n");
        for r in &self.metrics {
            out.push_str(&r.tsv());
            out.push('\n');
        }
        out
    }

    pub fn distill_tsv(&self) -> String {
        let mut out = format!("{DISTILL_HEADER}\n");
        for r in &self.distill {
            out.push_str(&r.tsv());
            out.push('\n');
        }
        out
    }
}

/// Runs stage 1 and (unless `stage1_only`) stage 2 in memory.
pub fn train_models(data: &TrainData, config: &TrainConfig, stage1_only: bool) -> Result<TrainRun> {
    config.validate()?;
    config.check_against(data.store)?;
    let init = init_models(data, config);
    let s1 = train_stage1(data, init, config)?;
    let mut run = TrainRun {
        stage1: s1.models,
        stage2: None,
        metrics: s1.rows,
        distill: Vec::new(),
        exhausted_negatives: s1.exhausted_negatives,
    };
    if !stage1_only {
        let s2 = train_stage2(data, run.stage1.clone(), config)?;
        run.metrics.extend(s2.rows);
        run.distill = s2.distill;
        run.exhausted_negatives += s2.exhausted_negatives;
        run.stage2 = Some(s2.models);
    }
    if run.exhausted_negatives > 0 {
        log::warn!(
            "{} negative samples were accepted after exhausting the resample budget",
            run.exhausted_negatives
        );
    }
    Ok(run)
}

/// Validation and test reports of every family the run produced.
pub fn all_reports(data: &TrainData, run: &TrainRun, filter: FilterMode, tasks: TaskSet) -> Result<Vec<RankingReport>> {
    let mut encoded = Vec::new();
    for set in ModelSet::ALL {
        encoded.push(run.model_set(set).map(|m| EncodedModels::new(data, m)).transpose()?);
    }
    let mut out = Vec::new();
    for split in [Split::Valid, Split::Test] {
        for family in Family::ALL {
            let idx = ModelSet::ALL.iter().position(|&s| s == family.model_set()).unwrap();
            if let Some(enc) = &encoded[idx] {
                out.push(family_report(data, enc, family, split, filter, tasks));
            }
        }
    }
    Ok(out)
}

pub fn individual_digest(store: &MultiKgStore, kg: usize) -> String {
    let k = &store.kgs[kg];
    vocab_digest(
        k.entities.iter().map(String::as_str),
        k.relations.iter().map(String::as_str),
    )
}

pub fn fused_digest(store: &MultiKgStore) -> String {
    let ents: Vec<String> = store
        .kgs
        .iter()
        .flat_map(|k| k.entities.iter().map(move |e| format!("{}\t{e}", k.name)))
        .collect();
    let rels: Vec<String> = store
        .kgs
        .iter()
        .flat_map(|k| k.relations.iter().map(move |r| format!("{}\t{r}", k.name)))
        .collect();
    vocab_digest(ents.iter().map(String::as_str), rels.iter().map(String::as_str))
}

pub fn checkpoint_path(run_dir: &Path, set: ModelSet, store: &MultiKgStore, model: Option<usize>) -> PathBuf {
    let name = match model {
        Some(i) => format!("kg-{}.ckpt", store.kgs[i].name),
        None => "fused.ckpt".to_string(),
    };
    run_dir.join("checkpoints").join(set.dir_name()).join(name)
}

pub fn save_models(run_dir: &Path, set: ModelSet, store: &MultiKgStore, models: &Models) -> Result<()> {
    for (i, p) in models.individual.iter().enumerate() {
        save_checkpoint(
            &checkpoint_path(run_dir, set, store, Some(i)),
            p,
            &individual_digest(store, i),
        )?;
    }
    save_checkpoint(
        &checkpoint_path(run_dir, set, store, None),
        &models.fused,
        &fused_digest(store),
    )
}

/// Loads one checkpoint set, checking it against the store's vocabularies.
pub fn load_models(run_dir: &Path, set: ModelSet, store: &MultiKgStore) -> Result<Models> {
    let load = |model: Option<usize>, digest: String| -> Result<_> {
        let path = checkpoint_path(run_dir, set, store, model);
        let (params, header) = load_checkpoint(&path)?;
        if header.vocab_digest != digest {
            return Err(Error::Checkpoint(format!(
                "{} was trained on a different vocabulary than the dataset",
                path.display()
            )));
        }
        Ok(params)
    };
    let individual = (0..store.num_kgs())
        .map(|i| load(Some(i), individual_digest(store, i)))
        .collect::<Result<_>>()?;
    let fused = load(None, fused_digest(store))?;
    Ok(Models { individual, fused })
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_reports(dir: &Path, stem: &str, reports: &[RankingReport]) -> Result<()> {
    write(&dir.join(format!("{stem}.tsv")), &crate::eval::reports_tsv(reports))?;
    let json = serde_json::to_string_pretty(reports).expect("reports serialize");
    write(&dir.join(format!("{stem}.json")), &(json + "\n"))
}

/// Options of [`run_train`].
#[derive(Clone, Debug)]
pub struct RunOptions {
    pub stage1_only: bool,
    pub filter: FilterMode,
    pub tasks: TaskSet,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            stage1_only: false,
            filter: FilterMode::TraditionalFiltered,
            tasks: TaskSet::HeadTail,
        }
    }
}

/// Trains on `store` and writes the full run directory.
pub fn run_train(store: &MultiKgStore, config: &TrainConfig, out: &Path, opts: &RunOptions) -> Result<TrainRun> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write(&out.join("config.toml"), &config.to_toml())?;
    let data = TrainData::new(store)?;
    let run = train_models(&data, config, opts.stage1_only)?;
    write(&out.join("metrics.tsv"), &run.metrics_tsv())?;
    write(&out.join("distill.tsv"), &run.distill_tsv())?;
    for set in ModelSet::ALL {
        if let Some(m) = run.model_set(set) {
            save_models(out, set, store, m)?;
        }
    }
    let reports = all_reports(&data, &run, opts.filter, opts.tasks)?;
    write_reports(out, "report", &reports)?;
    Ok(run)
}
