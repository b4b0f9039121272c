//! Drives the `intdecomp` binary end to end.

use std::path::Path;
use std::process::{Command, Output};

use intdecomp::bench::record_path;
use intdecomp::decomposition::Instance;
use intdecomp::engine::{Algorithm, RunRecord};
use intdecomp::ising::SolverKind;

fn intdecomp(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_intdecomp"))
        .args(args)
        .current_dir(cwd)
        .env_remove("INTDECOMP_WORKERS")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], cwd: &Path) -> Output {
    let out = intdecomp(args, cwd);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

#[test]
fn gen_is_deterministic_and_shaped() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(&["gen", "--n", "6", "--d", "20", "--k", "2", "--seed", "7", "--out", "a.json"], p);
    ok(&["gen", "--n", "6", "--d", "20", "--k", "2", "--seed", "7", "--out", "b.json"], p);
    let a = std::fs::read(p.join("a.json")).unwrap();
    assert_eq!(a, std::fs::read(p.join("b.json")).unwrap());
    assert_eq!(Instance::load(p.join("a.json")).unwrap().spin_len(), 12);

    let out = ok(&["gen", "--n", "8", "--d", "100", "--k", "3", "--seed", "1"], p);
    let inst = Instance::from_json(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!((inst.n_rows(), inst.n_cols(), inst.spin_len()), (8, 100, 24));
}

#[test]
fn gen_rejects_bad_dims() {
    let dir = tempfile::tempdir().unwrap();
    assert!(!intdecomp(&["gen", "--n", "2", "--d", "5", "--k", "3"], dir.path()).status.success());
    assert!(!intdecomp(&["gen", "--n", "0", "--d", "5", "--k", "1"], dir.path()).status.success());
}

#[test]
fn gen_shrinks_a_source_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let rows: Vec<Vec<f64>> = (0..5).map(|i| (0..7).map(|j| ((i * 7 + j) as f64).sin()).collect()).collect();
    std::fs::write(p.join("src.json"), serde_json::to_string(&rows).unwrap()).unwrap();
    ok(
        &["gen", "--n", "3", "--d", "4", "--k", "2", "--source", "src.json", "--rows", "0,2,4", "--svs", "0,1", "--out", "s.json"],
        p,
    );
    let inst = Instance::load(p.join("s.json")).unwrap();
    assert_eq!((inst.n_rows(), inst.n_cols(), inst.k()), (3, 4, 2));
}

#[test]
fn run_applies_default_hyperparameters_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(&["gen", "--n", "3", "--d", "6", "--k", "2", "--seed", "1", "--out", "i.json"], p);

    ok(&["run", "--instance", "i.json", "--algo", "nbocs", "--solver", "sa", "--sigma2", "0.1", "--iters", "3", "--out", "n.jsonl"], p);
    let rec = RunRecord::load(p.join("n.jsonl")).unwrap();
    assert_eq!(rec.algo.algorithm, Algorithm::Nbocs);
    assert_eq!(rec.algo.hyper.sigma2, 0.1);
    assert_eq!(rec.algo.solver.kind, SolverKind::Sa);
    assert_eq!(rec.evaluations(), 6 + 3);

    ok(&["run", "--instance", "i.json", "--algo", "gbocs", "--iters", "2", "--init", "4", "--out", "g.jsonl"], p);
    let rec = RunRecord::load(p.join("g.jsonl")).unwrap();
    assert_eq!(rec.algo.hyper.beta, 0.001);
    assert_eq!(rec.evaluations(), 4 + 2);

    ok(&["run", "--instance", "i.json", "--algo", "fmqa08", "--kfm", "3", "--solver", "sq", "--augment", "--iters", "2", "--out", "f.jsonl"], p);
    let rec = RunRecord::load(p.join("f.jsonl")).unwrap();
    assert_eq!(rec.algo.name(), "fmqa03-aug");
    assert_eq!(rec.algo.solver.kind, SolverKind::Sq);
    assert!(rec.dataset_rows > rec.evaluations());

    ok(&["run", "--instance", "i.json", "--algo", "rs", "--runs", "3", "--iters", "2", "--out", "many"], p);
    assert!((0..3).all(|r| p.join(format!("many/run-{r:03}.jsonl")).exists()));
}

#[test]
fn run_defaults_to_two_n_squared_iterations() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(&["gen", "--n", "8", "--d", "100", "--k", "3", "--seed", "1", "--out", "i.json"], p);
    ok(&["run", "--instance", "i.json", "--algo", "rs", "--out", "r.jsonl"], p);
    let rec = RunRecord::load(p.join("r.jsonl")).unwrap();
    assert_eq!(rec.evaluations(), 24 + 1152);
}

#[test]
fn run_rejects_unknown_names() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(&["gen", "--n", "3", "--d", "4", "--k", "1", "--out", "i.json"], p);
    let bad_algo = intdecomp(&["run", "--instance", "i.json", "--algo", "tabu"], p);
    assert!(!bad_algo.status.success());
    assert!(String::from_utf8_lossy(&bad_algo.stderr).contains("unknown algorithm"));
    assert!(!intdecomp(&["run", "--instance", "i.json", "--solver", "qa"], p).status.success());
}

#[test]
fn brute_enumerates_and_caches() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(&["gen", "--n", "3", "--d", "5", "--k", "2", "--seed", "2", "--out", "t.json"], p);
    let first = ok(&["brute", "--instance", "t.json", "--out", "o.json"], p);
    assert!(String::from_utf8_lossy(&first.stdout).contains("states=64"));
    assert!(p.join("o.json").exists());
    let second = ok(&["brute", "--instance", "t.json"], p);
    assert!(String::from_utf8_lossy(&second.stderr).contains("cache hit"));

    ok(&["gen", "--n", "9", "--d", "4", "--k", "3", "--out", "big.json"], p);
    let too_big = intdecomp(&["brute", "--instance", "big.json"], p);
    assert!(!too_big.status.success());
}

#[test]
fn bench_writes_the_result_tree_and_flags_failures() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let config = r#"{
        "schema_version": 1,
        "instances": [{"generate": {"n_rows": 3, "n_cols": 6, "k": 2, "seed": 3, "label": "tiny"}}],
        "algorithms": ["rs", "nbocs"],
        "runs_per_cell": 5,
        "rs_runs": 5,
        "base_seed": 9,
        "output_dir": "out",
        "iters": 6
    }"#;
    std::fs::write(p.join("bench.json"), config).unwrap();
    ok(&["bench", "bench.json", "--workers", "2"], p);
    let out = p.join("out");
    for algo in ["rs", "nbocs"] {
        assert!((0..5).all(|r| record_path(&out, "tiny", algo, r).exists()));
    }
    let counts = std::fs::read_to_string(out.join("analysis/counts.csv")).unwrap();
    assert!(counts.starts_with("instance,rs,nbocs\n"));
    assert!(counts.contains("\nTotal,"));

    let failing = config.replace(
        r#""algorithms": ["rs", "nbocs"]"#,
        r#""algorithms": ["rs", {"algorithm": "fmqa", "solver": {"kind": "sa", "sweeps": 10, "restarts": 1, "beta_schedule": null, "constant_temperature": 0.1, "seed": 0, "random_order": false}, "hyper": {"sigma2": 0.1, "beta": 0.001, "gibbs_steps": 1, "fm": {"k_fm": 2, "epochs": 1, "learning_rate": -1.0}}, "augment": false, "n_init": null, "n_iter": null}]"#,
    );
    std::fs::write(p.join("failing.json"), failing).unwrap();
    let res = intdecomp(&["bench", "failing.json"], p);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stdout).contains("FAILED tiny fmqa02"));
}

#[test]
fn gridsearch_reports_each_grid_point() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(&["gen", "--n", "3", "--d", "5", "--k", "2", "--out", "i.json"], p);
    ok(&["gridsearch", "--instance", "i.json", "--param", "sigma2", "--runs", "1", "--iters", "2", "--out", "g.json"], p);
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(p.join("g.json")).unwrap()).unwrap();
    let points = report["points"].as_array().unwrap();
    assert_eq!(points.len(), 6);
    let means: Vec<f64> = points.iter().map(|v| v["mean_final_cost"].as_f64().unwrap()).collect();
    assert!(means.windows(2).all(|w| w[0] <= w[1]));

    let bad = intdecomp(&["gridsearch", "--instance", "i.json", "--param", "gamma"], p);
    assert!(!bad.status.success());
}

#[test]
fn greedy_prints_a_decomposition() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(&["gen", "--n", "4", "--d", "6", "--k", "2", "--out", "i.json"], p);
    let out = ok(&["greedy", "--instance", "i.json"], p);
    assert!(String::from_utf8_lossy(&out.stdout).contains("greedy cost="));
}
