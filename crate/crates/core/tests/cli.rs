use std::path::{Path, PathBuf};
use std::process::Command;

use sclab::cli::{render_csv, run_experiment, ExperimentConfig, REGISTRY};

fn configs() -> Vec<PathBuf> {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut out = Vec::new();
    for dir in [root.clone(), root.join("extra")] {
        for e in std::fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.extension().is_some_and(|x| x == "toml") {
                out.push(p);
            }
        }
    }
    out.sort();
    out
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sclab"))
}

#[test]
fn every_checked_in_config_validates_and_kinds_are_covered() {
    let mut kinds = std::collections::BTreeSet::new();
    for p in configs() {
        let cfg = ExperimentConfig::load(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        kinds.insert(cfg.experiment.kind());
    }
    for k in REGISTRY {
        assert!(kinds.contains(k.kind), "no config exercises `{}`", k.kind);
    }
    assert!(REGISTRY.len() >= 16);
}

#[test]
fn every_kind_rejects_a_missing_seed() {
    for p in configs() {
        let text = std::fs::read_to_string(&p).unwrap();
        let stripped: String = text.lines().filter(|l| !l.starts_with("seed")).map(|l| format!("{l}\n")).collect();
        let err = ExperimentConfig::from_toml(&stripped).unwrap_err().to_string();
        assert!(err.contains("seed"), "{}: {err}", p.display());
    }
}

#[test]
fn unknown_fields_and_schema_versions_are_rejected() {
    let base = "schema_version = 1\nseed = 1\n[experiment]\nkind = \"goe_edge\"\nn = 10\ndraws = 3\n";
    assert!(ExperimentConfig::from_toml(base).is_ok());
    assert!(ExperimentConfig::from_toml(&format!("{base}bogus = 2\n")).is_err());
    assert!(ExperimentConfig::from_toml(&base.replace("schema_version = 1", "schema_version = 2")).is_err());
    assert!(ExperimentConfig::from_toml(&base.replace("goe_edge", "no_such_kind")).is_err());
}

#[test]
fn hash_ignores_output_location_but_not_seed() {
    let base = "schema_version = 1\nseed = 1\n[experiment]\nkind = \"goe_edge\"\nn = 10\ndraws = 3\n";
    let a = ExperimentConfig::from_toml(base).unwrap();
    let b = ExperimentConfig::from_toml(&base.replace("seed = 1", "seed = 1\noutput = \"elsewhere\"")).unwrap();
    let c = ExperimentConfig::from_toml(&base.replace("seed = 1", "seed = 2")).unwrap();
    assert_eq!(a.hash(), b.hash());
    assert_ne!(a.hash(), c.hash());
    assert_eq!(a.hash().len(), 16);
}

#[test]
fn every_row_carries_hash_and_seed() {
    let cfg = ExperimentConfig::from_toml("schema_version = 1\nseed = 9\n[experiment]\nkind = \"goe_edge\"\nn = 30\ndraws = 4\n").unwrap();
    let out = run_experiment(&cfg).unwrap();
    let csv = String::from_utf8(render_csv(&out).unwrap()).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "draw,lambda_max,config_hash,seed");
    let rows: Vec<_> = lines.collect();
    assert_eq!(rows.len(), 4);
    for r in rows {
        assert!(r.ends_with(&format!(",{},9", cfg.hash())), "{r}");
    }
}

#[test]
fn sbm_and_needle_examples() {
    let sbm = ExperimentConfig::from_toml(
        "schema_version = 1\nseed = 3\n[experiment]\nkind = \"sbm_ldlr\"\nn_grid = [50]\nk = 2\ndegree = 4\nd = 3.0\nd_eta2_grid = [0.5, 1.5]\nmc_budget = 200\n",
    )
    .unwrap();
    let out = run_experiment(&sbm).unwrap();
    for c in ["n", "D", "d", "eta", "bound", "stderr"] {
        assert!(out.table.columns.iter().any(|x| x == c), "missing column {c}");
    }
    assert_eq!(out.table.rows.len(), 2);
    let needle = ExperimentConfig::from_toml("schema_version = 1\nseed = 4\n[experiment]\nkind = \"needle\"\nn = 8\nlambda_grid = [0.5, 1.0, 2.0]\ndraws = 20\n").unwrap();
    let out = run_experiment(&needle).unwrap();
    assert_eq!(out.table.f64s("free_energy").len(), 3);
}

fn run_cli(args: &[&str], dir: &Path) -> (i32, String) {
    let o = bin().args(args).current_dir(dir).env_remove("SCLAB_THREADS").output().unwrap();
    (o.status.code().unwrap(), String::from_utf8_lossy(&o.stdout).into_owned() + &String::from_utf8_lossy(&o.stderr))
}

#[test]
fn binary_exit_codes_and_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let (code, text) = run_cli(&["list"], d);
    assert_eq!(code, 0);
    for k in REGISTRY {
        assert!(text.contains(k.kind));
    }

    std::fs::write(d.join("ok.toml"), "schema_version = 1\nseed = 5\nname = \"edge\"\n[experiment]\nkind = \"goe_edge\"\nn = 20\ndraws = 3\n").unwrap();
    assert_eq!(run_cli(&["validate", "ok.toml"], d).0, 0);
    assert_eq!(run_cli(&["run", "ok.toml", "--out", "a"], d).0, 0);
    assert_eq!(run_cli(&["run", "ok.toml", "--out", "b", "--threads", "3"], d).0, 0);
    for ext in ["csv", "json"] {
        let a = std::fs::read(d.join(format!("a/edge.{ext}"))).unwrap();
        let b = std::fs::read(d.join(format!("b/edge.{ext}"))).unwrap();
        assert_eq!(a, b, "{ext} differs between runs");
    }
    assert!(d.join("a/edge.timing.json").exists());
    assert_eq!(run_cli(&["run", "ok.toml", "--out", "c", "--seed-override", "6"], d).0, 0);
    assert_ne!(std::fs::read(d.join("a/edge.csv")).unwrap(), std::fs::read(d.join("c/edge.csv")).unwrap());

    std::fs::write(d.join("noseed.toml"), "schema_version = 1\n[experiment]\nkind = \"goe_edge\"\nn = 20\ndraws = 3\n").unwrap();
    assert_eq!(run_cli(&["validate", "noseed.toml"], d).0, 2);
    // a module precondition: the needle enumeration budget
    std::fs::write(d.join("big.toml"), "schema_version = 1\nseed = 1\n[experiment]\nkind = \"needle\"\nn = 40\nlambda_grid = [1.0]\ndraws = 2\n").unwrap();
    assert_eq!(run_cli(&["run", "big.toml", "--out", "x"], d).0, 3);
    std::fs::write(d.join("neg.toml"), "schema_version = 1\nseed = 1\n[experiment]\nkind = \"needle\"\nn = 4\nlambda_grid = [-1.0]\ndraws = 2\n").unwrap();
    let (code, text) = run_cli(&["run", "neg.toml", "--out", "x"], d);
    assert_eq!(code, 2);
    assert!(text.contains("lambda"), "{text}");
}
