use std::path::Path;
use std::process::{Command, Output};

fn cellhom(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cellhom")).current_dir(dir).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) {
    std::fs::write(dir.join(name), text).unwrap();
}

fn read(path: impl AsRef<Path>) -> String {
    std::fs::read_to_string(path).unwrap()
}

const SMALL: &str = r#"
seed = 5

[xi]
kind = "list"
points = [[0.0, 0.0, 0.0, 0.0], [0.1, 0.2, 0.0, -0.1], [-1.5, 0.0, 0.0, 0.0]]

[homog]
k_list = [1, 2]
n_list = [4, 4]
levels = 3
"#;

#[test]
fn verify_default_config_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = cellhom(dir.path(), &["verify", "--out", "o"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let csv = read(dir.path().join("o/verify.csv"));
    assert!(csv.starts_with("# schema: cellhom.check.v1\nname,passed,value,detail\n"));
    assert!(!csv.contains(",false,"));
}

#[test]
fn eval_at_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = cellhom(dir.path(), &["eval", "--out", "o"]);
    assert!(out.status.success());
    let csv = read(dir.path().join("o/eval.csv"));
    assert_eq!(csv.lines().nth(2).unwrap(), "0.0,0.0,0.0,0.0,0.0,0.0,1.0,1.0,0.0,1.0,ok");
}

#[test]
fn infeasible_rows_are_marked_and_the_run_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "c.toml", SMALL);
    let out = cellhom(dir.path(), &["homogenize", "--config", "c.toml", "--out", "o"]);
    assert!(out.status.success());
    let csv = read(dir.path().join("o/homogenize.csv"));
    let rows: Vec<&str> = csv.lines().skip(2).collect();
    assert_eq!(rows.len(), 5);
    assert!(rows[4].starts_with("-1.5,") && rows[4].ends_with(",infeasible"));
    let jsonl = read(dir.path().join("o/homogenize.jsonl"));
    let last: serde_json::Value = serde_json::from_str(jsonl.lines().last().unwrap()).unwrap();
    assert_eq!(last["status"], "infeasible");
}

#[test]
fn second_run_is_a_cache_hit() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "c.toml", SMALL);
    let first = cellhom(dir.path(), &["radial", "--config", "c.toml", "--out", "o"]);
    let before = read(dir.path().join("o/radial.csv"));
    let second = cellhom(dir.path(), &["radial", "--config", "c.toml", "--out", "o"]);
    assert!(!String::from_utf8_lossy(&first.stdout).contains("cached"));
    assert!(String::from_utf8_lossy(&second.stdout).contains("cached"));
    assert_eq!(read(dir.path().join("o/radial.csv")), before);
    let fresh = cellhom(dir.path(), &["radial", "--config", "c.toml", "--out", "o", "--no-cache"]);
    assert!(!String::from_utf8_lossy(&fresh.stdout).contains("cached"));
    let index: serde_json::Value = serde_json::from_str(&read(dir.path().join("o/store/index.json"))).unwrap();
    assert_eq!(index.as_object().unwrap().len(), 1);
}

#[test]
fn seed_flag_changes_the_key() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "c.toml", SMALL);
    cellhom(dir.path(), &["cell", "--config", "c.toml", "--out", "o"]);
    let out = cellhom(dir.path(), &["cell", "--config", "c.toml", "--out", "o", "--seed", "9"]);
    assert!(!String::from_utf8_lossy(&out.stdout).contains("cached"));
}

#[test]
fn thread_count_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "c.toml", SMALL);
    cellhom(dir.path(), &["homogenize", "--config", "c.toml", "--out", "a", "--jobs", "1"]);
    cellhom(dir.path(), &["homogenize", "--config", "c.toml", "--out", "b", "--jobs", "4"]);
    assert_eq!(read(dir.path().join("a/homogenize.csv")), read(dir.path().join("b/homogenize.csv")));
    assert_eq!(read(dir.path().join("a/homogenize.jsonl")), read(dir.path().join("b/homogenize.jsonl")));
}

#[test]
fn bad_config_exits_nonzero_with_a_location() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "bad.toml", "seed = 1\n[solver]\nmax_iter = 3\n");
    let out = cellhom(dir.path(), &["cell", "--config", "bad.toml"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3") && err.contains("max_iter"), "{err}");

    write(dir.path(), "bad2.toml", "[cell]\nk = 0\n");
    let out = cellhom(dir.path(), &["cell", "--config", "bad2.toml"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("at cell:"));

    let out = cellhom(dir.path(), &["cell", "--config", "missing.toml"]);
    assert!(!out.status.success());
}

#[test]
fn qcx_and_gamma_rows() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "c.toml",
        "[xi]\nkind = \"list\"\npoints = [[0.0, 0.0, 0.0, 0.0], [0.0, 3.0, 0.0, 0.0]]\n\n[homog]\nk_list = [1]\nn_list = [4]\nlevels = 2\n\n[harness]\nn = 4\neps_inv = [1, 2]\n",
    );
    let out = cellhom(dir.path(), &["qcx", "--config", "c.toml", "--out", "o"]);
    assert!(out.status.success());
    let csv = read(dir.path().join("o/qcx.csv"));
    assert!(csv.lines().nth(1).unwrap().ends_with("f,Qf,status"));
    assert!(csv.lines().nth(3).unwrap().ends_with(",,infeasible"));

    let out = cellhom(dir.path(), &["gamma", "--config", "c.toml", "--out", "o"]);
    assert!(out.status.success());
    let csv = read(dir.path().join("o/gamma.csv"));
    assert_eq!(csv.lines().filter(|l| l.ends_with(",ok")).count(), 2);
    assert_eq!(csv.lines().filter(|l| l.ends_with(",infeasible")).count(), 1);
}
