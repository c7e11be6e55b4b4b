use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hyperforest::contracts::Label;
use hyperforest::dataset::Dataset;
use hyperforest::splitter::{stratified_split, subsample_count};
use hyperforest_cli::commands::{cmd_train, EVALUATION_FILES};
use hyperforest_cli::model_file;
use hyperforest_cli::synth::{self, SynthParams};
use hyperforest_cli::PipelineConfig;
use tempfile::TempDir;

fn hyperforest(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hyperforest")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_config(dir: &Path, extra: &str) -> PathBuf {
    let path = dir.join("config.toml");
    fs::write(&path, format!("seed = 3\nout_dir = \"out\"\n{extra}\n[forest]\nn_trees = 20\n")).unwrap();
    path
}

const HEADER: &str = "buyer_id,supplier_id,government_order,procedure_character,contract_type,procedure_type,supplier_size,start_date,beginning_week,ending_week,spending";

/// Contracts among 4 buyers and 12 suppliers; `bad` rows have a broken date.
fn contracts(n: usize, bad: usize) -> String {
    let mut text = format!("{HEADER}\n");
    for i in 0..n {
        let date = if i < bad { "someday".to_string() } else { format!("2016-{:02}-{:02}", 1 + i % 12, 1 + i % 28) };
        text.push_str(&format!(
            "Buyer {},Supplier-{},APF,N,ADQ,{},MED,{date},{},{},{}\n",
            i % 4,
            i % 12,
            ["AD", "LP", "I3P"][i % 3],
            1 + i % 50,
            2 + i % 50,
            1000 + 37 * i
        ));
    }
    text
}

fn ingest_setup(n: usize, bad: usize) -> (TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("contracts.csv"), contracts(n, bad)).unwrap();
    fs::write(dir.path().join("registry.txt"), "supplier.1\nSUPPLIER-7\n").unwrap();
    let cfg = write_config(
        dir.path(),
        "[input]\ncontracts = \"contracts.csv\"\n[[input.registries]]\npath = \"registry.txt\"\nsource = \"tax-agency\"\n",
    );
    (dir, cfg)
}

#[test]
fn ingest_writes_labeled_table() {
    let (dir, cfg) = ingest_setup(120, 6);
    let out = hyperforest(&["ingest", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let table = fs::read(dir.path().join("out/features.tsv")).unwrap();
    let ds = Dataset::read_tsv(table.as_slice()).unwrap().unwrap();
    assert_eq!(ds.n_rows(), 114);
    // Suppliers 1 and 7 each hold every 12th contract.
    assert_eq!(ds.class_counts()[Label::C.index()], 19);
    let report = fs::read_to_string(dir.path().join("out/curation.tsv")).unwrap();
    assert!(report.contains("114"), "{report}");
}

#[test]
fn ingest_rejects_too_many_bad_rows() {
    let (dir, cfg) = ingest_setup(100, 30);
    let out = hyperforest(&["ingest", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(dir.path().join("out/curation.tsv").is_file());
    assert!(!dir.path().join("out/features.tsv").exists());
}

#[test]
fn ingest_missing_registry_is_a_data_error() {
    let (dir, cfg) = ingest_setup(50, 0);
    fs::remove_file(dir.path().join("registry.txt")).unwrap();
    let out = hyperforest(&["ingest", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("registry.txt"));
}

#[test]
fn usage_and_config_errors_exit_one() {
    assert_eq!(code(&hyperforest(&["train"])), 1);
    assert_eq!(code(&hyperforest(&["frobnicate"])), 1);
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "seed = 1\nout_dir = \"x\"\nn_trees = 4\n").unwrap();
    assert_eq!(code(&hyperforest(&["train", "--config", cfg.to_str().unwrap()])), 1);
    let missing = dir.path().join("absent.toml");
    assert_eq!(code(&hyperforest(&["train", "--config", missing.to_str().unwrap()])), 1);
}

fn synth_setup(params: &str) -> (TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out = hyperforest(
        &[&["synth", "--config", cfg.to_str().unwrap()], params.split_whitespace().collect::<Vec<_>>().as_slice()]
            .concat(),
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    (dir, cfg)
}

#[test]
fn synth_is_deterministic_and_seeded() {
    let (a, cfg_a) = synth_setup("--rows 300 --ratio 5");
    let (b, _) = synth_setup("--rows 300 --ratio 5");
    let read = |d: &TempDir| fs::read(d.path().join("out/features.tsv")).unwrap();
    assert_eq!(read(&a), read(&b));
    let other = a.path().join("other.tsv");
    let out = hyperforest(&[
        "synth",
        "--config",
        cfg_a.to_str().unwrap(),
        "--rows",
        "300",
        "--ratio",
        "5",
        "--seed",
        "4",
        "--out",
        other.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    assert_ne!(fs::read(other).unwrap(), read(&a));
}

#[test]
fn train_uses_one_forest_per_subsample_and_is_reproducible() {
    let (dir, cfg) = synth_setup("--rows 700 --ratio 6");
    let config = PipelineConfig::load(&cfg).unwrap();
    let first = cmd_train(&config, None, Some(&dir.path().join("a.json"))).unwrap();
    let second = cmd_train(&config, None, Some(&dir.path().join("b.json"))).unwrap();
    assert_eq!(first.checksum, second.checksum);
    assert_eq!(fs::read(&first.model).unwrap(), fs::read(&second.model).unwrap());

    let ds = Dataset::read_tsv(fs::read(config.dataset_path()).unwrap().as_slice()).unwrap().unwrap();
    let labels: Vec<Label> = (0..ds.n_rows()).map(|r| ds.known_label(r)).collect();
    let split = stratified_split(&labels, &config.split, config.seed).unwrap();
    let c = split.train.iter().filter(|&&r| labels[r] == Label::C).count();
    assert_eq!(first.n_forests, subsample_count(c, split.train.len() - c));
    let body = model_file::load(&first.model).unwrap();
    assert_eq!(body.model.n_forests(), first.n_forests);
    assert!(body.model.threshold().is_some());
    assert!(dir.path().join("out/roc.tsv").is_file());
}

#[test]
fn train_rejects_single_class_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let ds = synth::generate(&SynthParams { n_rows: 200, ratio: 4.0, n_informative: 2, n_noise: 1 }, 1).unwrap();
    let keep: Vec<usize> = (0..ds.n_rows()).filter(|&r| ds.known_label(r) == Label::NC).collect();
    fs::create_dir_all(dir.path().join("out")).unwrap();
    ds.select_rows(&keep).write_tsv(fs::File::create(dir.path().join("out/features.tsv")).unwrap()).unwrap();
    let out = hyperforest(&["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
}

#[test]
fn evaluate_writes_every_file_and_detects_tampering() {
    let (dir, cfg) = synth_setup("--rows 700 --ratio 6");
    let cfg = cfg.to_str().unwrap();
    assert_eq!(code(&hyperforest(&["train", "--config", cfg])), 0);
    let out = hyperforest(&["evaluate", "--config", cfg, "--split", "test"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for name in EVALUATION_FILES {
        assert!(dir.path().join("out/evaluation").join(name).is_file(), "{name}");
    }
    let metrics = fs::read_to_string(dir.path().join("out/evaluation/metrics.tsv")).unwrap();
    assert!(metrics.contains("balanced_accuracy"));

    let model = dir.path().join("out/model.json");
    let text = fs::read_to_string(&model).unwrap();
    fs::write(&model, text.replacen("\"n_trees\":20", "\"n_trees\":21", 1)).unwrap();
    let out = hyperforest(&["evaluate", "--config", cfg]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("checksum"), "{}", stderr(&out));
}

#[test]
fn evaluate_needs_split_all_for_foreign_data() {
    let (dir, cfg) = synth_setup("--rows 700 --ratio 6");
    let cfg = cfg.to_str().unwrap();
    assert_eq!(code(&hyperforest(&["train", "--config", cfg])), 0);
    let other = dir.path().join("other.tsv");
    hyperforest(&[
        "synth",
        "--config",
        cfg,
        "--rows",
        "400",
        "--ratio",
        "6",
        "--seed",
        "9",
        "--out",
        other.to_str().unwrap(),
    ]);
    let out = hyperforest(&["evaluate", "--config", cfg, "--input", other.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    let out = hyperforest(&["evaluate", "--config", cfg, "--input", other.to_str().unwrap(), "--split", "all"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(!dir.path().join("out/evaluation/importance.tsv").exists());
}

#[test]
fn rfe_writes_trace_and_forward_table() {
    let (dir, cfg) = synth_setup("--rows 500 --ratio 4 --informative 2 --noise 2");
    let out = hyperforest(&["rfe", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let trace = fs::read_to_string(dir.path().join("out/rfe_trace.tsv")).unwrap();
    assert_eq!(trace.lines().count(), 1 + 4);
    let table = fs::read_to_string(dir.path().join("out/rfe.tsv")).unwrap();
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows.len(), 1 + 1 + 4);
    assert!(rows[1].starts_with("Random\t"));
    assert!(model_file::load(&dir.path().join("out/rfe_model.json")).is_ok());
}

#[test]
fn rfe_with_one_feature() {
    let (dir, cfg) = synth_setup("--rows 300 --ratio 4 --informative 1 --noise 0");
    let out = hyperforest(&["rfe", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let trace = fs::read_to_string(dir.path().join("out/rfe_trace.tsv")).unwrap();
    assert_eq!(trace.lines().count(), 2);
}

#[test]
fn predict_handles_empty_input_and_unseen_levels() {
    let (dir, cfg) = synth_setup("--rows 500 --ratio 4 --informative 2 --noise 2");
    let cfg = cfg.to_str().unwrap();
    assert_eq!(code(&hyperforest(&["train", "--config", cfg])), 0);

    let empty = dir.path().join("empty.tsv");
    fs::write(&empty, "").unwrap();
    let preds = dir.path().join("empty_preds.tsv");
    let out = hyperforest(&[
        "predict",
        "--config",
        cfg,
        "--input",
        empty.to_str().unwrap(),
        "--out",
        preds.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(fs::read(&preds).unwrap().len(), 0);

    // The GO column is categorical; give every row a level the model never saw.
    let table = fs::read_to_string(dir.path().join("out/features.tsv")).unwrap();
    let mut lines = table.lines();
    let header = lines.next().unwrap();
    let go = header.split('\t').position(|h| h.starts_with("GO:")).unwrap();
    let mut text = format!("{header}\n");
    for line in lines.take(25) {
        let mut cells: Vec<&str> = line.split('\t').collect();
        cells[0] = "";
        cells[go] = "ZZ";
        text.push_str(&cells.join("\t"));
        text.push('\n');
    }
    let input = dir.path().join("unseen.tsv");
    fs::write(&input, text).unwrap();
    let preds = dir.path().join("preds.tsv");
    let out = hyperforest(&[
        "predict",
        "--config",
        cfg,
        "--input",
        input.to_str().unwrap(),
        "--out",
        preds.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let written = fs::read_to_string(&preds).unwrap();
    let rows: Vec<&str> = written.lines().collect();
    assert_eq!(rows[0], "row\tp_nc\tnc_votes\tlabel");
    assert_eq!(rows.len(), 26);
    for row in &rows[1..] {
        let p: f64 = row.split('\t').nth(1).unwrap().parse().unwrap();
        assert!((0.0..=1.0).contains(&p));
    }
}

#[test]
fn predict_raw_contracts() {
    let (dir, cfg) = ingest_setup(120, 0);
    let cfg = cfg.to_str().unwrap();
    assert_eq!(code(&hyperforest(&["ingest", "--config", cfg])), 0);
    assert_eq!(code(&hyperforest(&["train", "--config", cfg])), 0);
    let input = dir.path().join("new.csv");
    let mut text = contracts(30, 0);
    text.push_str("Buyer 0,Supplier-1,APF,N,ADQ,AD,MED,not a date,1,2,10\n");
    fs::write(&input, text).unwrap();
    let preds = dir.path().join("raw_preds.tsv");
    let out = hyperforest(&[
        "predict",
        "--config",
        cfg,
        "--raw",
        "--input",
        input.to_str().unwrap(),
        "--out",
        preds.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let written = fs::read_to_string(&preds).unwrap();
    assert!(written.starts_with("line\tbuyer_id\tsupplier_id\tp_nc\tnc_votes\tlabel\n"));
    assert_eq!(written.lines().count(), 31);
    assert!(String::from_utf8_lossy(&out.stdout).contains("1 skipped"));
}
