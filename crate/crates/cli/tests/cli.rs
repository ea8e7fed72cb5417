use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn mkgc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mkgc"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Two 10-entity KGs with a shared schema; `aligned` pairs `a{i}` with `b{i}`.
/// Relations are translations on a ring; `r0` and `r1` swap offsets between the KGs.
fn write_toy(dir: &Path, aligned: &[usize]) -> PathBuf {
    for kg in ["a", "b"] {
        fs::create_dir_all(dir.join(kg)).unwrap();
        let mut lines = Vec::new();
        for i in 0..10 {
            let steps = if kg == "a" {
                [(0, 1), (1, 3), (2, 7)]
            } else {
                [(0, 3), (1, 1), (2, 7)]
            };
            for (r, step) in steps {
                lines.push(format!("{kg}{i}\tr{r}\t{kg}{}\n", (i + step) % 10));
            }
        }
        // 30 triples: every fifth goes to valid or test.
        let (mut train, mut valid, mut test) = (String::new(), String::new(), String::new());
        for (n, l) in lines.iter().enumerate() {
            match n % 10 {
                4 => valid.push_str(l),
                9 => test.push_str(l),
                _ => train.push_str(l),
            }
        }
        fs::write(dir.join(kg).join("train.tsv"), train).unwrap();
        fs::write(dir.join(kg).join("valid.tsv"), valid).unwrap();
        fs::write(dir.join(kg).join("test.tsv"), test).unwrap();
    }
    let align: String = aligned.iter().map(|i| format!("a{i}\tb{i}\n")).collect();
    fs::write(dir.join("align.tsv"), align).unwrap();
    let manifest = r#"name = "toy"
shared_relation_schema = true

[[kg]]
name = "a"
train = "a/train.tsv"
valid = "a/valid.tsv"
test = "a/test.tsv"

[[kg]]
name = "b"
train = "b/train.tsv"
valid = "b/valid.tsv"
test = "b/test.tsv"

[[alignment]]
kgs = ["a", "b"]
path = "align.tsv"
"#;
    let path = dir.join("manifest.toml");
    fs::write(&path, manifest).unwrap();
    path
}

fn write_config(dir: &Path) -> PathBuf {
    let path = dir.join("train.toml");
    fs::write(
        &path,
        "epochs_stage1 = 3\nepochs_stage2 = 2\ndim = 8\ntop_k = 4\nneg_samples = 4\nbatch_size = 16\nseed = 7\n",
    )
    .unwrap();
    path
}

fn train(dir: &Path, extra: &[&str]) -> (PathBuf, Output) {
    let manifest = write_toy(&dir.join("data"), &[0, 2, 4, 6]);
    let config = write_config(dir);
    let run = dir.join("run");
    let mut args = vec![
        "train",
        "--manifest",
        p(&manifest),
        "--config",
        p(&config),
        "--out",
        p(&run),
    ];
    args.extend_from_slice(extra);
    let out = mkgc(&args);
    (run, out)
}

#[test]
fn train_writes_a_complete_run_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let (run, out) = train(tmp.path(), &["--threads", "1"]);
    assert!(out.status.success(), "{}", stderr(&out));
    for f in [
        "config.toml",
        "manifest.toml",
        "metrics.tsv",
        "distill.tsv",
        "report.tsv",
        "report.json",
    ] {
        assert!(run.join(f).is_file(), "missing {f}");
    }
    for set in ["stage1", "stage2"] {
        for f in ["kg-a.ckpt", "kg-b.ckpt", "fused.ckpt"] {
            assert!(run.join("checkpoints").join(set).join(f).is_file());
        }
    }
    let report = fs::read_to_string(run.join("report.tsv")).unwrap();
    for family in ["KGC-I", "KGC-A", "KGC-I-D", "KGC-A-D", "CKGC-CKD"] {
        assert!(
            report.lines().any(|l| l.starts_with(&format!("{family}\t"))),
            "{family}"
        );
    }
}

#[test]
fn stage1_only_logs_no_distillation() {
    let tmp = tempfile::tempdir().unwrap();
    let (run, out) = train(tmp.path(), &["--stage1-only"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let metrics = fs::read_to_string(run.join("metrics.tsv")).unwrap();
    let mut rows = 0;
    for line in metrics.lines().skip(1) {
        let cols: Vec<&str> = line.split('\t').collect();
        assert!(cols[1].starts_with("stage1/"), "{line}");
        assert_eq!(cols[3].parse::<f64>().unwrap(), 0.0, "{line}");
        rows += 1;
    }
    assert!(rows > 0);
    assert!(!run.join("checkpoints/stage2").exists());
    assert_eq!(fs::read_to_string(run.join("distill.tsv")).unwrap().lines().count(), 1);
}

#[test]
fn missing_manifest_names_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path());
    let missing = tmp.path().join("nowhere.toml");
    let out = mkgc(&[
        "train",
        "--manifest",
        p(&missing),
        "--config",
        p(&config),
        "--out",
        p(&tmp.path().join("r")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("nowhere.toml"));
}

#[test]
fn usage_and_config_errors_exit_1() {
    assert_eq!(mkgc(&["train", "--bogus"]).status.code(), Some(1));
    assert_eq!(
        mkgc(&["evaluate", "--run", "x", "--filter", "weird"]).status.code(),
        Some(1)
    );
    assert!(mkgc(&["--help"]).status.success());

    let tmp = tempfile::tempdir().unwrap();
    let manifest = write_toy(&tmp.path().join("data"), &[]);
    let config = tmp.path().join("bad.toml");
    fs::write(&config, "learning_rate = 0.1\n").unwrap();
    let out = mkgc(&[
        "train",
        "--manifest",
        p(&manifest),
        "--config",
        p(&config),
        "--out",
        p(&tmp.path().join("r")),
    ]);
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
}

#[test]
fn evaluate_is_stamped_and_repeatable() {
    let tmp = tempfile::tempdir().unwrap();
    let (run, out) = train(tmp.path(), &[]);
    assert!(out.status.success(), "{}", stderr(&out));
    let ranks = tmp.path().join("ranks.tsv");
    let args = [
        "evaluate",
        "--run",
        p(&run),
        "--family",
        "CKGC-CKD",
        "--filter",
        "train-only",
        "--tasks",
        "tail",
        "--dump-ranks",
        p(&ranks),
    ];
    let first = mkgc(&args);
    assert!(first.status.success(), "{}", stderr(&first));
    let second = mkgc(&args);
    assert_eq!(stdout(&first), stdout(&second));
    let body = stdout(&first);
    let rows: Vec<&str> = body.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    for r in &rows {
        let cols: Vec<&str> = r.split('\t').collect();
        assert_eq!(&cols[..5], &["CKGC-CKD", cols[1], "test", "train-only", "tail"]);
        assert_eq!(cols[8], "3");
    }
    let dumped = fs::read_to_string(&ranks).unwrap();
    assert_eq!(dumped.lines().count(), 1 + 6);
    assert!(dumped.lines().skip(1).all(|l| l.split('\t').nth(1) == Some("tail")));

    let traditional = mkgc(&[
        "evaluate",
        "--run",
        p(&run),
        "--filter",
        "traditional",
        "--tasks",
        "head,tail",
    ]);
    assert!(stdout(&traditional)
        .lines()
        .nth(1)
        .unwrap()
        .contains("\ttraditional\thead,tail\t"));
}

#[test]
fn evaluate_rejects_a_foreign_vocabulary() {
    let tmp = tempfile::tempdir().unwrap();
    let (run, out) = train(tmp.path(), &[]);
    assert!(out.status.success());
    // Renaming an entity changes the vocabulary digest.
    let train_a = tmp.path().join("data/a/train.tsv");
    let text = fs::read_to_string(&train_a)
        .unwrap()
        .replace("a1\t", "z1\t")
        .replace("\ta1\n", "\tz1\n");
    fs::write(&train_a, text).unwrap();
    let out = mkgc(&["evaluate", "--run", p(&run), "--family", "KGC-I"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("vocabulary"), "{}", stderr(&out));
}

#[test]
fn export_corr_writes_a_square_matrix() {
    let tmp = tempfile::tempdir().unwrap();
    let (run, out) = train(tmp.path(), &["--stage1-only"]);
    assert!(out.status.success());
    let csv = tmp.path().join("corr.csv");
    let out = mkgc(&[
        "export-corr",
        "--run",
        p(&run),
        "--model",
        "a",
        "--set",
        "stage1",
        "--out",
        p(&csv),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 4);
    assert!(text.lines().all(|l| l.split(',').count() == 4));

    let missing = mkgc(&["export-corr", "--run", p(&run), "--model", "a"]);
    assert_eq!(missing.status.code(), Some(2));
}

fn data_lines(path: &Path) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(str::to_string)
        .collect()
}

#[test]
fn augment_without_alignments_adds_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = write_toy(&tmp.path().join("data"), &[]);
    let out_dir = tmp.path().join("aug");
    let out = mkgc(&["augment", "--manifest", p(&manifest), "--out", p(&out_dir)]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(data_lines(&out_dir.join("swapped_triples.tsv")).is_empty());
    assert!(data_lines(&out_dir.join("closure_alignments.tsv")).is_empty());
}

#[test]
fn augment_emits_the_meta_path_set_and_reaches_a_fixed_point() {
    let tmp = tempfile::tempdir().unwrap();
    let aligned = [0, 1, 3, 4];
    let manifest = write_toy(&tmp.path().join("data"), &aligned);
    let before: Vec<String> = ["a", "b"]
        .iter()
        .flat_map(|k| {
            fs::read_to_string(tmp.path().join("data").join(k).join("train.tsv"))
                .unwrap()
                .lines()
                .map(|l| format!("{k}\t{l}"))
                .collect::<Vec<_>>()
        })
        .collect();

    // Oracle: swap a training triple whose both endpoints are aligned into the other KG.
    let mut expected = std::collections::BTreeSet::new();
    for row in &before {
        let c: Vec<&str> = row.split('\t').collect();
        let (kg, h, r, t) = (c[0], c[1], c[2], c[3]);
        let other = if kg == "a" { "b" } else { "a" };
        let (hi, ti): (usize, usize) = (h[1..].parse().unwrap(), t[1..].parse().unwrap());
        if aligned.contains(&hi) && aligned.contains(&ti) {
            let new = format!("{other}\t{other}{hi}\t{r}\t{other}{ti}");
            if !before.contains(&new) {
                expected.insert(new);
            }
        }
    }
    assert!(!expected.is_empty());

    let out_dir = tmp.path().join("aug");
    let out = mkgc(&["augment", "--manifest", p(&manifest), "--out", p(&out_dir)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let emitted: std::collections::BTreeSet<String> =
        data_lines(&out_dir.join("swapped_triples.tsv")).into_iter().collect();
    assert_eq!(emitted, expected);
    let input_after = fs::read_to_string(tmp.path().join("data/a/train.tsv")).unwrap();
    assert_eq!(
        input_after.lines().count(),
        before.iter().filter(|l| l.starts_with("a\t")).count()
    );

    // Held-out collisions are re-emitted each time; everything else is now present.
    let summary = fs::read_to_string(out_dir.join("summary.tsv")).unwrap();
    let collisions: usize = summary
        .lines()
        .find_map(|l| l.strip_prefix("swapped_held_out_collisions\t"))
        .unwrap()
        .parse()
        .unwrap();
    let again = tmp.path().join("aug2");
    let out = mkgc(&[
        "augment",
        "--manifest",
        p(&out_dir.join("manifest.toml")),
        "--out",
        p(&again),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(data_lines(&again.join("swapped_triples.tsv")).len(), collisions);

    let refuse = mkgc(&["augment", "--manifest", p(&manifest), "--out", p(&out_dir)]);
    assert_eq!(refuse.status.code(), Some(1));
}

#[test]
fn augment_requires_a_shared_schema() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = write_toy(&tmp.path().join("data"), &[0]);
    let text = fs::read_to_string(&manifest)
        .unwrap()
        .replace("shared_relation_schema = true", "shared_relation_schema = false");
    fs::write(&manifest, text).unwrap();
    let out = mkgc(&[
        "augment",
        "--manifest",
        p(&manifest),
        "--out",
        p(&tmp.path().join("aug")),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn diagnose_flags_an_injected_component() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = write_toy(&tmp.path().join("data"), &[1, 2]);
    // a0 ~ b0..b4 forms a 6-entity star.
    let mut align = fs::read_to_string(tmp.path().join("data/align.tsv")).unwrap();
    for j in 5..10 {
        align.push_str(&format!("a0\tb{j}\n"));
    }
    fs::write(tmp.path().join("data/align.tsv"), align).unwrap();
    let csv = tmp.path().join("comp.csv");
    let out = mkgc(&[
        "diagnose",
        "--manifest",
        p(&manifest),
        "--threshold",
        "5",
        "--csv",
        p(&csv),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("2\t2\n"), "{text}");
    assert!(text.contains("6\t1\n"), "{text}");
    assert!(text.contains("1 flagged component(s) larger than 5"));
    let rows = data_lines(&csv);
    assert_eq!(rows.len(), 10);
    assert_eq!(rows.iter().filter(|r| r.contains(",true,")).count(), 6);
}
