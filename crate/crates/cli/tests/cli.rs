use std::process::{Command, Output};

fn matlift(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_matlift")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn prop_compare_default_battery_exits_zero() {
    let o = matlift(&["prop-compare"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 7);
    assert!(text.lines().skip(1).all(|l| l.ends_with(",true,ok")));
}

#[test]
fn missing_base_is_config_error() {
    assert_eq!(matlift(&["mc-norm"]).status.code(), Some(1));
    assert_eq!(matlift(&["clique-scaling", "--trials", "0"]).status.code(), Some(1));
    assert_eq!(matlift(&["no-such-command"]).status.code(), Some(1));
}

#[test]
fn unwritable_output_is_io_error() {
    let o = matlift(&["bounds", "--out", "/nonexistent-dir/b.csv"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn failed_gate_exits_two() {
    // every clique has 3 vertices on this grid, so the (ln n)^{1/4} ratio falls
    let o = matlift(&["clique-scaling", "--n-grid", "64,256", "--trials", "5"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stdout(&o).lines().count(), 3, "table is still written");
}

#[test]
fn config_file_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.cfg");
    std::fs::write(&cfg, "experiment = klift_sweep\nbase = petersen\nk = 2\ntrials = 10\n[constants]\nC = 1\n")
        .unwrap();
    let out = dir.path().join("out.csv");
    let records = dir.path().join("records.csv");
    let o = matlift(&[
        "klift-sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--trials",
        "12",
        "--out",
        out.to_str().unwrap(),
        "--records",
        records.to_str().unwrap(),
        "--threads",
        "1",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let table = std::fs::read_to_string(&out).unwrap();
    assert!(table.starts_with("k,n,Delta,trials,mean,stderr,bound_C1,"));
    assert!(table.lines().nth(1).unwrap().starts_with("2,10,3,12,"));
    assert_eq!(std::fs::read_to_string(&records).unwrap().lines().count(), 13);

    let o = matlift(&["mc-norm", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "config names a different experiment");
}

#[test]
fn same_seed_gives_identical_output() {
    let args = ["klift-sweep", "--base", "petersen", "--k", "2,3", "--trials", "25", "--seed", "42", "--threads", "1"];
    let a = matlift(&args);
    let b = matlift(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn lift_dump_feeds_norm() {
    let dir = tempfile::tempdir().unwrap();
    let dump = dir.path().join("lift.txt");
    let o = matlift(&[
        "lift",
        "--base",
        "petersen",
        "--dist",
        "centered_permutation(3)",
        "--seed",
        "5",
        "--out",
        dump.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(std::fs::read_to_string(&dump).unwrap().starts_with("lift 10 3"));
    let norm = |method: &str| {
        let o = matlift(&["norm", "--input", dump.to_str().unwrap(), "--method", method]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        let line = stdout(&o).lines().nth(1).unwrap().to_string();
        line.split(',').nth(2).unwrap().parse::<f64>().unwrap()
    };
    let dense = norm("dense");
    assert!((norm("lanczos") - dense).abs() <= 1e-8 * dense);
    assert!((norm("power") - dense).abs() <= 1e-6 * dense);
}

#[test]
fn bounds_from_base() {
    let o = matlift(&["bounds", "--base", "complete(4)", "--k", "2", "--eps", "0.5"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.starts_with("bound_name,value,sigma,sigma_star,n,k,eps,C\n"));
    let bvh = text.lines().find(|l| l.starts_with("bvh,")).unwrap();
    let v: f64 = bvh.split(',').nth(1).unwrap().parse().unwrap();
    assert!((v - (3f64.sqrt() + 4f64.ln().sqrt())).abs() < 1e-12);
    assert_eq!(matlift(&["bounds", "--eps", "0.7"]).status.code(), Some(1));
}
