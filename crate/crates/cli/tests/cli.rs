use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use brl_core::format::write_prior;
use brl_core::mdp::{CostSet, Prior, TabularMdp};

fn brl(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_brl"))
        .args(args)
        .current_dir(dir)
        .env_remove("BRL_SEED")
        .env_remove("BRL_CONFIG")
        .env_remove("BRL_OUT")
        .env_remove("BRL_WORKERS")
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn summary_value(dir: &Path, key: &str) -> String {
    let text = fs::read_to_string(dir.join("summary.csv")).unwrap();
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key},")).map(str::to_string))
        .unwrap_or_else(|| panic!("{key} missing from summary"))
}

/// Two states; state 0 costs 1 under either action and leads to state 1,
/// where action 0 is free and stays put.
fn chain_prior() -> Prior {
    let costs = CostSet::binary();
    let m = TabularMdp::deterministic(
        vec![1.0, 0.0],
        vec![vec![1, 1], vec![0, 1]],
        vec![vec![vec![0.0, 1.0], vec![0.0, 1.0]], vec![vec![0.0, 1.0], vec![0.0, 1.0]]],
        2,
        &costs,
    )
    .unwrap();
    Prior::uniform(vec![m], costs).unwrap()
}

#[test]
fn solve_on_a_known_chain() {
    let dir = tempfile::tempdir().unwrap();
    write_prior(&chain_prior(), &dir.path().join("chain.toml")).unwrap();
    fs::write(dir.path().join("run.toml"), "horizon = 2\n[prior]\nsource = \"file\"\npath = \"chain.toml\"\n").unwrap();
    let o = brl(&["solve", "--config", "run.toml", "--out", "out"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let values = fs::read_to_string(dir.path().join("out/values.csv")).unwrap();
    let root: f64 = values.lines().nth(1).unwrap().split(',').nth(2).unwrap().parse().unwrap();
    assert_eq!(root, 1.0);
    assert_eq!(summary_value(&dir.path().join("out"), "histories"), "7");
    let policy = fs::read_to_string(dir.path().join("out/policy.csv")).unwrap();
    assert_eq!(policy.lines().next().unwrap(), "node,t,parent,action,cost,state,p0,p1");
    assert!(policy.lines().nth(2).unwrap().ends_with(",1.0000000000000000e0,0.0000000000000000e0"));
}

#[test]
fn convergence_pipeline_passes() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), "lambda = 0.5\n[convergence]\niterations = 500\n").unwrap();
    let o = brl(&["convergence", "--config", "run.toml", "--out", "out", "--seed", "3"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let out = dir.path().join("out");
    for check in ["monotone_descent", "fundamental", "rate", "quadratic_growth"] {
        assert_eq!(summary_value(&out, &format!("check:{check}")), "pass");
    }
    let trace = fs::read_to_string(out.join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 502);
}

#[test]
fn unknown_key_exits_two_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), "[sweep]\nlamdas = [0.1]\n").unwrap();
    let o = brl(&["sweep", "--config", "run.toml"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert_eq!(err.lines().count(), 1);
    assert!(err.starts_with("error kind=config code=2 reason="));
    assert!(err.contains("lamdas"));
}

#[test]
fn capacity_and_range_errors() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("cap.toml"), "max_nodes = 4\n").unwrap();
    let o = brl(&["solve", "--config", "cap.toml"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).starts_with("error kind=capacity"));
    let o = brl(&["stability"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    fs::write(dir.path().join("missing.toml"), "[prior]\nsource = \"file\"\npath = \"nowhere.toml\"\n").unwrap();
    let o = brl(&["solve", "--config", "missing.toml"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nowhere.toml"));
    let o = brl(&["solve", "--workers", "0"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn print_config_reflects_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_brl"))
        .args(["bounds", "--print-config"])
        .env("BRL_SEED", "99")
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let cfg = brl_cli::config::RunConfig::parse(&text).unwrap();
    assert_eq!(cfg.seed, 99);
    assert_eq!(cfg, brl_cli::config::RunConfig { seed: 99, ..Default::default() });
    assert!(!dir.path().join("out").exists());
}

fn tree_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("run.toml"),
        "lambda = 0.5\nformat = \"both\"\ndump_histories = true\n\
         [sweep]\nn_seeds = 3\n[lowerbound]\nidentifier_length = 3\nn_seeds = 10\n\
         [convergence]\niterations = 50\ngrowth_starts = 5\n",
    )
    .unwrap();
    for cmd in ["solve", "erm", "stability", "sweep", "lowerbound", "convergence", "bounds"] {
        let a = brl(&[cmd, "--config", "run.toml", "--seed", "17", "--out", "a", "--workers", "1"], dir.path());
        let b = brl(&[cmd, "--config", "run.toml", "--seed", "17", "--out", "b", "--workers", "4"], dir.path());
        assert!(a.status.success() && b.status.success(), "{cmd}: {}{}", stderr(&a), stderr(&b));
        let (ta, tb) = (tree_bytes(&dir.path().join("a")), tree_bytes(&dir.path().join("b")));
        assert!(!ta.is_empty());
        assert_eq!(ta, tb, "{cmd}");
        fs::remove_dir_all(dir.path().join("a")).unwrap();
        fs::remove_dir_all(dir.path().join("b")).unwrap();
    }
}

#[test]
fn seeds_change_the_draws() {
    let dir = tempfile::tempdir().unwrap();
    assert!(brl(&["erm", "--seed", "1", "--out", "a"], dir.path()).status.success());
    assert!(brl(&["erm", "--seed", "2", "--out", "b"], dir.path()).status.success());
    assert_ne!(fs::read(dir.path().join("a/values.csv")).unwrap(), fs::read(dir.path().join("b/values.csv")).unwrap());
}
