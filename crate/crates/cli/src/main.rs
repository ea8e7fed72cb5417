//! `mkgc`: train, evaluate and inspect multi-KG completion models.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mkgc::eval::{relation_correlation, write_correlation_csv, FilterMode, QueryKind, TaskSet};
use mkgc::ingest::{load_dataset, write_dataset, DatasetManifest};
use mkgc::kg::{
    alignment_closure, alignment_component_report, parameter_swap_triples, LocalTriple, MultiKgStore, Split,
};
use mkgc::pipeline::{
    family_ranks, load_models, run_train, write_reports, EncodedModels, Family, ModelSet, RunOptions,
};
use mkgc::training::{TrainConfig, TrainData};
use mkgc::{Error, Result};

const FILE_FORMATS: &str = "\
File formats:
  manifest      TOML: `name`, `shared_relation_schema`, one [[kg]] table per KG with
                `name`, `train`, `valid`, `test` paths, and [[alignment]] tables with
                `kgs = [left, right]` and `path`. Relative paths resolve against the
                manifest's directory.
  triples       TSV, no header: head<TAB>relation<TAB>tail
  alignments    TSV, no header: left_entity<TAB>right_entity
  train config  TOML; every key is optional (see README for defaults)

Exit codes: 0 success, 1 usage or configuration, 2 data integrity, 3 numeric failure.";

#[derive(Parser, Debug)]
#[command(name = "mkgc", version, about = "Multi-KG completion with fused encoders and mutual distillation", after_help = FILE_FORMATS)]
struct Cli {
    /// Worker threads for training and evaluation [default: available parallelism].
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run both training stages and write a run directory.
    Train(TrainArgs),
    /// Rank a split with a saved model family.
    Evaluate(EvaluateArgs),
    /// Write parameter-swap triples and transitive alignments as a new dataset.
    Augment(AugmentArgs),
    /// Report connected components of the alignment graph.
    Diagnose(DiagnoseArgs),
    /// Write the relation-embedding correlation matrix of a saved model.
    ExportCorr(ExportCorrArgs),
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Dataset manifest (TOML).
    #[arg(long)]
    manifest: PathBuf,
    /// Training configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Run directory; created if absent.
    #[arg(long)]
    out: PathBuf,
    /// Skip stage 2 (no distillation).
    #[arg(long)]
    stage1_only: bool,
    /// Filter mode of the final reports: traditional, train-only or raw.
    #[arg(long, default_value = "traditional")]
    filter: FilterMode,
    /// Query directions of the final reports: `tail` or `head,tail`.
    #[arg(long, default_value = "head,tail")]
    tasks: TaskSet,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Run directory written by `train`.
    #[arg(long)]
    run: PathBuf,
    /// KGC-I, KGC-A, KGC-I-D, KGC-A-D or CKGC-CKD.
    #[arg(long, default_value = "CKGC-CKD")]
    family: Family,
    /// train, valid or test.
    #[arg(long, default_value = "test")]
    split: Split,
    /// traditional, train-only or raw.
    #[arg(long, default_value = "traditional")]
    filter: FilterMode,
    /// `tail` or `head,tail`.
    #[arg(long, default_value = "head,tail")]
    tasks: TaskSet,
    /// Write the report as `<stem>.tsv` and `<stem>.json` under this directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write every query with its rank to this TSV file.
    #[arg(long, value_name = "FILE")]
    dump_ranks: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AugmentArgs {
    /// Dataset manifest; must declare a shared relation schema.
    #[arg(long)]
    manifest: PathBuf,
    /// Output directory for the augmented dataset; must be empty or absent.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct DiagnoseArgs {
    /// Dataset manifest (TOML).
    #[arg(long)]
    manifest: PathBuf,
    /// Components with more entities than this are flagged.
    #[arg(long, default_value_t = 50)]
    threshold: usize,
    /// CSV with one row per aligned entity: component, size, flagged, kg, entity.
    #[arg(long, value_name = "FILE")]
    csv: PathBuf,
}

#[derive(Args, Debug)]
struct ExportCorrArgs {
    /// Run directory written by `train`.
    #[arg(long)]
    run: PathBuf,
    /// A KG name for its individual model, or `fused`.
    #[arg(long)]
    model: String,
    /// Checkpoint set: stage1 or stage2.
    #[arg(long, default_value = "stage2")]
    set: String,
    /// Output CSV [default: <run>/correlation-<set>-<model>.csv].
    #[arg(long)]
    out: Option<PathBuf>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Precondition(_) => 1,
        Error::Parse { .. } | Error::Io { .. } | Error::Integrity(_) | Error::Schema(_) | Error::Checkpoint(_) => 2,
        Error::Numeric(_) => 3,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if let Err(e) = configure_threads(cli.threads).and_then(|()| dispatch(cli.command)) {
        eprintln!("error: {e}");
        return ExitCode::from(exit_code(&e));
    }
    ExitCode::SUCCESS
}

fn configure_threads(threads: Option<usize>) -> Result<()> {
    let Some(n) = threads else { return Ok(()) };
    if n == 0 {
        return Err(Error::Config("--threads must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("cannot configure thread pool: {e}")))
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Train(a) => cmd_train(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Augment(a) => cmd_augment(a),
        Command::Diagnose(a) => cmd_diagnose(a),
        Command::ExportCorr(a) => cmd_export_corr(a),
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn load(manifest: &Path) -> Result<(DatasetManifest, MultiKgStore)> {
    let m = DatasetManifest::from_path(manifest)?;
    let store = load_dataset(&m)?;
    Ok((m, store))
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let (manifest, store) = load(&a.manifest)?;
    let config = TrainConfig::from_path(&a.config)?;
    config.check_against(&store)?;
    fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    write(&a.out.join("manifest.toml"), &manifest.absolutized()?.to_toml())?;
    let opts = RunOptions {
        stage1_only: a.stage1_only,
        filter: a.filter,
        tasks: a.tasks,
    };
    run_train(&store, &config, &a.out, &opts)?;
    log::info!("run written to {}", a.out.display());
    let report = fs::read_to_string(a.out.join("report.tsv")).map_err(|e| Error::io(a.out.join("report.tsv"), e))?;
    print!("{report}");
    Ok(())
}

/// Store and training view of a run directory.
fn load_run(run: &Path) -> Result<MultiKgStore> {
    let path = run.join("manifest.toml");
    if !path.exists() {
        return Err(Error::Config(format!(
            "{} is missing; is {} a run directory?",
            path.display(),
            run.display()
        )));
    }
    Ok(load(&path)?.1)
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<()> {
    let store = load_run(&a.run)?;
    let data = TrainData::new(&store)?;
    let models = load_models(&a.run, a.family.model_set(), &store)?;
    let enc = EncodedModels::new(&data, &models)?;
    let (report, ranks) = family_ranks(&data, &enc, a.family, a.split, a.filter, a.tasks);
    let reports = [report];
    if let Some(dir) = &a.out {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let stem = format!(
            "eval-{}-{}-{}-{}",
            a.family.name(),
            a.split.name(),
            a.filter.name(),
            a.tasks.name().replace(',', "+")
        );
        write_reports(dir, &stem, &reports)?;
    }
    if let Some(path) = &a.dump_ranks {
        let mut out = String::from("kg\tquery\thead\trelation\ttail\trank\n");
        for (kg, list) in store.kgs.iter().zip(&ranks) {
            for (q, rank) in list {
                let kind = match q.kind {
                    QueryKind::Head => "head",
                    QueryKind::Tail => "tail",
                };
                out.push_str(&format!(
                    "{}\t{kind}\t{}\t{}\t{}\t{rank}\n",
                    kg.name,
                    kg.entities[q.head as usize],
                    kg.relations[q.relation as usize],
                    kg.entities[q.tail as usize]
                ));
            }
        }
        write(path, &out)?;
    }
    print!("{}", mkgc::eval::reports_tsv(&reports));
    Ok(())
}

fn cmd_augment(a: AugmentArgs) -> Result<()> {
    let (_, store) = load(&a.manifest)?;
    if a.out.exists() {
        let mut entries = fs::read_dir(&a.out).map_err(|e| Error::io(&a.out, e))?;
        if entries.next().is_some() {
            return Err(Error::Config(format!(
                "output directory {} is not empty; augment never overwrites files",
                a.out.display()
            )));
        }
    }
    let swapped = parameter_swap_triples(&store)?;
    let closure = alignment_closure(&store);

    let mut augmented = store.clone();
    let mut held_out_collisions = 0usize;
    let mut swapped_tsv = String::from("kg\thead\trelation\ttail\n");
    for t in &swapped {
        let kg = &store.kgs[t.head.kg as usize];
        swapped_tsv.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            kg.name,
            kg.entities[t.head.local as usize],
            kg.relations[t.relation.local as usize],
            kg.entities[t.tail.local as usize]
        ));
        let local = LocalTriple::new(t.head.local, t.relation.local, t.tail.local);
        let target = &mut augmented.kgs[t.head.kg as usize];
        if target.valid.contains(&local) || target.test.contains(&local) {
            held_out_collisions += 1;
        } else {
            target.train.push(local);
        }
    }
    let mut closure_tsv = String::from("left_kg\tleft\tright_kg\tright\n");
    for al in &closure {
        let (l, r) = (al.left(), al.right());
        closure_tsv.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            store.kg(l.kg).name,
            store.kg(l.kg).entities[l.local as usize],
            store.kg(r.kg).name,
            store.kg(r.kg).entities[r.local as usize]
        ));
    }
    let mut alignments = store.alignments.clone();
    alignments.extend(closure.iter().copied());
    augmented.set_alignments(alignments);

    write_dataset(&augmented, &a.out)?;
    write(&a.out.join("swapped_triples.tsv"), &swapped_tsv)?;
    write(&a.out.join("closure_alignments.tsv"), &closure_tsv)?;
    let summary = format!(
        "key\tvalue\nswapped_triples\t{}\nswapped_held_out_collisions\t{held_out_collisions}\nswapped_added_to_train\t{}\nclosure_alignments\t{}\n",
        swapped.len(),
        swapped.len() - held_out_collisions,
        closure.len()
    );
    write(&a.out.join("summary.tsv"), &summary)?;
    print!("{summary}");
    Ok(())
}

fn cmd_diagnose(a: DiagnoseArgs) -> Result<()> {
    let (_, store) = load(&a.manifest)?;
    let report = alignment_component_report(&store, a.threshold);
    println!("size\tcomponents");
    for (size, count) in &report.histogram {
        println!("{size}\t{count}");
    }
    println!(
        "{} flagged component(s) larger than {}; largest has {} entities",
        report.flagged.len(),
        report.threshold,
        report.largest()
    );
    for (i, comp) in report.flagged.iter().enumerate() {
        let sample: Vec<String> = comp.iter().take(5).map(|&e| store.entity_label(e)).collect();
        println!("  #{i}: {} entities, e.g. {}", comp.len(), sample.join(", "));
    }

    let mut w = csv::Writer::from_path(&a.csv).map_err(|e| csv_error(&a.csv, e))?;
    w.write_record(["component", "size", "flagged", "kg", "entity"])
        .map_err(|e| csv_error(&a.csv, e))?;
    for (i, comp) in mkgc::kg::alignment_components(&store).iter().enumerate() {
        let flagged = comp.len() > a.threshold;
        for &e in comp {
            let kg = store.kg(e.kg);
            w.write_record([
                i.to_string(),
                comp.len().to_string(),
                flagged.to_string(),
                kg.name.clone(),
                kg.entities[e.local as usize].clone(),
            ])
            .map_err(|e| csv_error(&a.csv, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(&a.csv, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e))
}

/// Display names of the relation rows of a fused model.
fn fused_relation_names(store: &MultiKgStore, data: &TrainData) -> Vec<String> {
    let fused = &data.fused;
    (0..fused.num_relations() as u32)
        .map(|g| {
            if g == fused.align_relation() {
                return "ALIGN".to_string();
            }
            if fused.shared_relations() {
                return store.kgs[0].relations[g as usize].clone();
            }
            (0..store.num_kgs() as u16)
                .find_map(|k| fused.relation_to_local(g, k))
                .map(|r| format!("{}:{}", store.kg(r.kg).name, store.kg(r.kg).relations[r.local as usize]))
                .expect("every fused relation belongs to a KG")
        })
        .collect()
}

fn cmd_export_corr(a: ExportCorrArgs) -> Result<()> {
    let set = match a.set.as_str() {
        "stage1" => ModelSet::Stage1,
        "stage2" => ModelSet::Stage2,
        other => {
            return Err(Error::Config(format!(
                "unknown checkpoint set `{other}` (expected stage1 or stage2)"
            )))
        }
    };
    let store = load_run(&a.run)?;
    let data = TrainData::new(&store)?;
    let models = load_models(&a.run, set, &store)?;
    let (params, names) = if a.model == "fused" {
        (&models.fused, fused_relation_names(&store, &data))
    } else {
        let i = store
            .kg_index(&a.model)
            .ok_or_else(|| Error::Config(format!("no KG named `{}` in this run", a.model)))?;
        (&models.individual[i as usize], store.kgs[i as usize].relations.clone())
    };
    let corr = relation_correlation(params);
    let out = a
        .out
        .unwrap_or_else(|| a.run.join(format!("correlation-{}-{}.csv", set.dir_name(), a.model)));
    write_correlation_csv(&out, &names, &corr)?;
    println!("{}", out.display());
    Ok(())
}
