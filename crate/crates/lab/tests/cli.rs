use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn lab(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lab"))
        .args(args)
        .current_dir(dir)
        .env_remove("LAB_THREADS")
        .output()
        .expect("lab runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited")
}

const EIGENFLOW: &str = r#"
scenario = "hyperns-eigenflow"
output_dir = "out"

[grid]
n = 16
length = 6.283185307179586

[model]
nu = 1.0

[initial]
kind = "eigenflow"
modes = 1

[integrator]
dt0 = 0.01
t_end = 0.2
record_every = 2
"#;

const SWEEP: &str = r#"
[[axes]]
param = "initial.amplitude"
values = [0.5, 1.0, 2.0]

[base]
scenario = "hyperns-decay"
seed = 11

[base.grid]
n = 16
length = 6.283185307179586

[base.model]
nu = 0.5

[base.initial]
kind = "random"
amplitude = 1.0
modes = 3

[base.integrator]
dt0 = 0.01
t_end = 0.2
"#;

#[test]
fn run_then_report() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("ok.toml"), EIGENFLOW).unwrap();
    let o = lab(&["run", "ok.toml"], tmp.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = tmp.path().join("out");
    for f in ["manifest.json", "series.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let header = fs::read_to_string(out.join("series.csv")).unwrap();
    assert!(header.starts_with("run,t,l2,h1,dt"), "{header}");
    let o = lab(&["report", "out", "--out", "rep"], tmp.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(tmp.path().join("rep/report.md").exists());
}

#[test]
fn config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("bad.toml"), "scenario = \"no-such-thing\"\n").unwrap();
    fs::write(tmp.path().join("neg.toml"), EIGENFLOW.replace("n = 16", "n = -4")).unwrap();
    for args in [
        &["run", "bad.toml"][..],
        &["run", "neg.toml"],
        &["run", "absent.toml"],
        &["sweep", "absent.toml"],
        &["accept", "--only", "99"],
        &["frobnicate"],
    ] {
        assert_eq!(code(&lab(args, tmp.path())), 2, "{args:?}");
    }
}

#[test]
fn report_on_missing_run_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    fs::create_dir(tmp.path().join("empty")).unwrap();
    assert_eq!(code(&lab(&["report", "empty"], tmp.path())), 3);
}

#[test]
fn sweep_results_do_not_depend_on_threads() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("s.toml"), SWEEP).unwrap();
    let mut outs = Vec::new();
    for threads in ["1", "3"] {
        let dir = format!("t{threads}");
        let o = Command::new(env!("CARGO_BIN_EXE_lab"))
            .args(["sweep", "s.toml", "--out", &dir])
            .current_dir(tmp.path())
            .env("LAB_THREADS", threads)
            .output()
            .unwrap();
        assert!(code(&o) <= 1, "{}", String::from_utf8_lossy(&o.stderr));
        let cells: Vec<Vec<u8>> = (0..3)
            .map(|i| fs::read(tmp.path().join(&dir).join(format!("cell-{i:05}/series.csv"))).unwrap())
            .collect();
        outs.push(cells);
    }
    assert_eq!(outs[0], outs[1]);
}

#[test]
fn constants_prints_a_table() {
    let tmp = tempfile::tempdir().unwrap();
    let o = lab(&["constants"], tmp.path());
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("| modulation C |"));
}
