//! Dataset ingest: TSV loading, export, dangling-entity sampling and the
//! synthetic complementary-KG generator.

mod manifest;
mod sampling;
mod synthetic;

use std::collections::{BTreeSet, HashMap};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::kg::{EntityRef, KgData, KgId, LocalTriple, MultiKgStore, SeedAlignment, Split};
use crate::{Error, Result};

pub use manifest::{AlignmentEntry, DatasetManifest, KgEntry};
pub use sampling::{sample_dangling, DanglingSide, SamplingSpec};
pub use synthetic::{make_synthetic_complementary, SyntheticSpec};

/// Reads a TSV file with exactly `columns` tab-separated fields per line.
/// Blank lines are skipped.
pub fn read_tsv(path: &Path, columns: usize) -> Result<Vec<Vec<String>>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<String> = line.split('\t').map(str::to_owned).collect();
        if fields.len() != columns {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: format!("expected {columns} tab-separated columns, found {}", fields.len()),
            });
        }
        rows.push(fields);
    }
    Ok(rows)
}

#[derive(Default)]
struct Interner {
    ids: HashMap<String, u32>,
    names: Vec<String>,
}

impl Interner {
    fn intern(&mut self, name: &str) -> u32 {
        if let Some(&id) = self.ids.get(name) {
            return id;
        }
        let id = self.names.len() as u32;
        self.ids.insert(name.to_owned(), id);
        self.names.push(name.to_owned());
        id
    }
}

/// Loads every KG and alignment file listed in `manifest`.
///
/// Entities and relations receive dense ids in order of first appearance
/// (train, then valid, then test, then alignment files). With a shared
/// relation schema one relation vocabulary is interned across all KGs.
pub fn load_dataset(manifest: &DatasetManifest) -> Result<MultiKgStore> {
    let triple_files: Vec<PathBuf> = manifest
        .kgs
        .iter()
        .flat_map(|k| [&k.train, &k.valid, &k.test])
        .map(|p| manifest.resolve(p))
        .collect();
    let align_files: Vec<PathBuf> = manifest.alignments.iter().map(|a| manifest.resolve(&a.path)).collect();

    let parsed_triples: Vec<Vec<Vec<String>>> =
        triple_files.par_iter().map(|p| read_tsv(p, 3)).collect::<Result<_>>()?;
    let parsed_aligns: Vec<Vec<Vec<String>>> = align_files.par_iter().map(|p| read_tsv(p, 2)).collect::<Result<_>>()?;

    let mut shared_relations = Interner::default();
    let mut entity_interners: Vec<Interner> = Vec::with_capacity(manifest.kgs.len());
    let mut kgs = Vec::with_capacity(manifest.kgs.len());
    let mut warnings = Vec::new();

    for (k, entry) in manifest.kgs.iter().enumerate() {
        let mut entities = Interner::default();
        let mut own_relations = Interner::default();
        let mut splits: [Vec<LocalTriple>; 3] = Default::default();
        for (s, split) in splits.iter_mut().enumerate() {
            let rows = &parsed_triples[3 * k + s];
            split.reserve(rows.len());
            for row in rows {
                let relations = if manifest.shared_relation_schema {
                    &mut shared_relations
                } else {
                    &mut own_relations
                };
                let h = entities.intern(&row[0]);
                let r = relations.intern(&row[1]);
                let t = entities.intern(&row[2]);
                split.push(LocalTriple::new(h, r, t));
            }
        }
        let [train, valid, test] = splits;
        if let Some(hint) = entry.entity_count_hint {
            if hint != entities.names.len() {
                warnings.push(format!(
                    "KG `{}`: entity_count_hint {hint} but {} entities loaded",
                    entry.name,
                    entities.names.len()
                ));
            }
        }
        kgs.push(KgData {
            name: entry.name.clone(),
            entities: Vec::new(),
            relations: own_relations.names,
            train,
            valid,
            test,
        });
        entity_interners.push(entities);
    }

    let kg_index: HashMap<&str, KgId> = manifest
        .kgs
        .iter()
        .enumerate()
        .map(|(i, k)| (k.name.as_str(), i as KgId))
        .collect();
    let mut alignments = Vec::new();
    let mut added_by_alignment = vec![0usize; kgs.len()];
    for (entry, rows) in manifest.alignments.iter().zip(&parsed_aligns) {
        let (a, b) = (kg_index[entry.kgs[0].as_str()], kg_index[entry.kgs[1].as_str()]);
        for row in rows {
            let mut resolve = |kg: KgId, name: &str| {
                let interner = &mut entity_interners[kg as usize];
                let before = interner.names.len();
                let id = interner.intern(name);
                if interner.names.len() > before {
                    added_by_alignment[kg as usize] += 1;
                }
                EntityRef::new(kg, id)
            };
            let left = resolve(a, &row[0]);
            let right = resolve(b, &row[1]);
            alignments.push(SeedAlignment::new(left, right)?);
        }
    }

    for (k, (kg, interner)) in kgs.iter_mut().zip(entity_interners).enumerate() {
        kg.entities = interner.names;
        if manifest.shared_relation_schema {
            kg.relations = shared_relations.names.clone();
        }
        if added_by_alignment[k] > 0 {
            warnings.push(format!(
                "KG `{}`: {} aligned entities occur in no triple",
                kg.name, added_by_alignment[k]
            ));
        }
        let trained = kg.trained_entities();
        let mut held_out_only = BTreeSet::new();
        for t in kg.valid.iter().chain(&kg.test) {
            for e in [t.head, t.tail] {
                if !trained[e as usize] {
                    held_out_only.insert(e);
                }
            }
        }
        if !held_out_only.is_empty() {
            warnings.push(format!(
                "KG `{}`: {} entities appear only in valid/test; their queries are ranked with untrained embeddings",
                kg.name,
                held_out_only.len()
            ));
        }
    }

    let mut store = MultiKgStore {
        name: manifest.name.clone(),
        kgs,
        alignments: Vec::new(),
        shared_relation_schema: manifest.shared_relation_schema,
        removed_entities: BTreeSet::new(),
        dangling_entities: BTreeSet::new(),
        warnings,
    };
    store.set_alignments(alignments);
    store.validate()?;
    for w in &store.warnings {
        log::warn!("{w}");
    }
    Ok(store)
}

fn create_writer(path: &Path) -> Result<BufWriter<std::fs::File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(BufWriter::new(f))
}

/// Writes triples of `kg` as `head<TAB>relation<TAB>tail` lines.
pub fn write_triples<'a>(path: &Path, kg: &KgData, triples: impl IntoIterator<Item = &'a LocalTriple>) -> Result<()> {
    let mut w = create_writer(path)?;
    for t in triples {
        writeln!(
            w,
            "{}\t{}\t{}",
            kg.entities[t.head as usize], kg.relations[t.relation as usize], kg.entities[t.tail as usize]
        )
        .map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes alignments between two KGs as `left<TAB>right` lines.
pub fn write_alignments<'a>(
    path: &Path,
    store: &MultiKgStore,
    alignments: impl IntoIterator<Item = &'a SeedAlignment>,
) -> Result<()> {
    let mut w = create_writer(path)?;
    for a in alignments {
        let (l, r) = (a.left(), a.right());
        writeln!(
            w,
            "{}\t{}",
            store.kg(l.kg).entities[l.local as usize],
            store.kg(r.kg).entities[r.local as usize]
        )
        .map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes `store` as TSV files plus `manifest.toml` under `dir`.
///
/// Entities that occur in no triple and no alignment are not representable in
/// this format and are dropped on reload.
pub fn write_dataset(store: &MultiKgStore, dir: &Path) -> Result<DatasetManifest> {
    let mut manifest = DatasetManifest {
        name: store.name.clone(),
        shared_relation_schema: store.shared_relation_schema,
        kgs: Vec::new(),
        alignments: Vec::new(),
        base_dir: dir.to_path_buf(),
    };
    for kg in &store.kgs {
        let rel = |s: Split| PathBuf::from(&kg.name).join(format!("{}.tsv", s.name()));
        for s in Split::ALL {
            write_triples(&dir.join(rel(s)), kg, kg.split(s))?;
        }
        manifest.kgs.push(KgEntry {
            name: kg.name.clone(),
            train: rel(Split::Train),
            valid: rel(Split::Valid),
            test: rel(Split::Test),
            entity_count_hint: None,
        });
    }
    let mut by_pair: std::collections::BTreeMap<(KgId, KgId), Vec<&SeedAlignment>> = Default::default();
    for a in &store.alignments {
        by_pair.entry((a.left().kg, a.right().kg)).or_default().push(a);
    }
    for ((l, r), list) in by_pair {
        let (ln, rn) = (&store.kg(l).name, &store.kg(r).name);
        let rel = PathBuf::from("alignments").join(format!("{ln}__{rn}.tsv"));
        write_alignments(&dir.join(&rel), store, list)?;
        manifest.alignments.push(AlignmentEntry {
            kgs: [ln.clone(), rn.clone()],
            path: rel,
        });
    }
    let path = dir.join("manifest.toml");
    std::fs::write(&path, manifest.to_toml()).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}
