use std::process::Command;

fn dmbsim() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dmbsim"))
}

fn write_config(dir: &std::path::Path, text: &str) -> std::path::PathBuf {
    let p = dir.join("scenario.toml");
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn run_writes_the_tables_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "protocol = \"admb\"\nm = 2000\n[topology]\nkind = \"path\"\nnodes = 3\n",
    );
    let out = dir.path().join("out");
    let status = dmbsim()
        .args(["run", "--config"])
        .arg(&cfg)
        .args(["--seed", "3", "--trace", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    for f in ["regret.csv", "updates.csv", "periods.csv", "summary.csv", "trace.log"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let first = std::fs::read(out.join("regret.csv")).unwrap();
    let again = dir.path().join("again");
    assert!(dmbsim()
        .args(["run", "--config"])
        .arg(&cfg)
        .args(["--seed", "3", "--out"])
        .arg(&again)
        .status()
        .unwrap()
        .success());
    assert_eq!(first, std::fs::read(again.join("regret.csv")).unwrap());
}

#[test]
fn invalid_configs_exit_nonzero_with_every_violation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "protocol = \"admb\"\nrho = 0.5\nsend_period = 0.0\n");
    let out = dmbsim().args(["describe", "--config"]).arg(&cfg).output().unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("rho") && err.contains("send period"), "{err}");
}

#[test]
fn describe_prints_bounds_without_simulating() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "protocol = \"admb\"\nm = 100000\n[topology]\nkind = \"path\"\nnodes = 4\n",
    );
    let out = dmbsim().args(["describe", "--config"]).arg(&cfg).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("good period examples b+2(t+2)d'M 176"), "{text}");
    assert!(text.contains("propagation time (t+2)d' 9"), "{text}");
}

#[test]
fn sweep_runs_the_grid_and_merges_summaries() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "protocol = \"dmb-sync\"\nm = 1000\n");
    let out = dir.path().join("sweep");
    let status = dmbsim()
        .args(["sweep", "--config"])
        .arg(&cfg)
        .args(["--sweep", "seed=0..3", "--sweep", "b=8,16", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let merged = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert!(merged.starts_with("# dmbsim-sweep v1\nscenario,seed,b,name,value,bound,status\n"));
    for s in 0..3 {
        for b in [8, 16] {
            let label = format!("seed={s}_b={b}");
            assert!(out.join(&label).join("summary.csv").exists());
            assert!(merged.contains(&format!("{label},{s},{b},regret,")));
        }
    }
}

#[test]
fn compare_writes_a_ratio_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "protocol = \"dmb-sync\"\nm = 10000\n");
    let out = dir.path().join("cmp");
    let status = dmbsim()
        .args(["compare", "--config"])
        .arg(&cfg)
        .args(["--seeds", "0,1", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let t = std::fs::read_to_string(out.join("compare.csv")).unwrap();
    assert_eq!(t.lines().count(), 2 + 2 * 2);
}
