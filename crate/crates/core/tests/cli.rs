use std::path::Path;
use std::process::Command;

fn hps(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_hps")).args(args).output().unwrap()
}

fn data_rows(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn convergence_csv_has_hash_and_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("conv.csv");
    let gp = dir.path().join("conv.gp");
    let o = hps(&[
        "convergence",
        "--levels",
        "2:4",
        "--nc",
        "8",
        "--kappa",
        "2",
        "--out",
        out.to_str().unwrap(),
        "--gnuplot",
        gp.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = data_rows(&out);
    assert_eq!(rows.len(), 3);
    let hash = &rows[0][0];
    assert_eq!(hash.len(), 16);
    assert!(rows.iter().all(|r| &r[0] == hash));
    assert!(std::fs::read_to_string(&gp).unwrap().contains("conv.csv"));
    assert!(String::from_utf8_lossy(&o.stderr).contains(hash.as_str()));
}

#[test]
fn calibrate_then_plan_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("cal.txt");
    let o = hps(&[
        "--calibrate",
        "--levels",
        "4",
        "--nc",
        "8",
        "--threads",
        "2",
        "--calibration-ms",
        "1",
        "--calibration-reps",
        "1",
        "--out",
        table.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&table).unwrap();
    assert!(text.lines().any(|l| l.starts_with("build 0 inversion")));

    for plan in [
        format!("--plan=file={}", table.display()),
        format!("--plan-from={}", table.display()),
    ] {
        let o = hps(&[
            "convergence",
            "--levels",
            "4",
            "--nc",
            "8",
            "--kappa",
            "2",
            "--threads",
            "2",
            &plan,
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn speedup_and_scaling_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sp.csv");
    let o = hps(&[
        "speedup",
        "--levels",
        "3",
        "--nc",
        "8",
        "--kappa",
        "2",
        "--threads",
        "2",
        "--plan",
        "auto",
        "--calibration-ms",
        "1",
        "--calibration-reps",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = data_rows(&out);
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[0][1], "1");
    assert_eq!(rows[0][4], "1.0000");

    let out = dir.path().join("sc.csv");
    let o = hps(&[
        "scaling",
        "--levels",
        "2:5",
        "--nc",
        "8",
        "--kappa",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("build slope"));
    assert_eq!(data_rows(&out).len(), 4);
    assert!(dir.path().join("sc.csv.levels.csv").exists());
}

#[test]
fn solve_once_and_tree() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("u.csv");
    let ck = dir.path().join("ops.bin");
    let args = [
        "solve-once",
        "--levels",
        "3",
        "--nc",
        "8",
        "--kappa",
        "1",
        "--checkpoint",
        ck.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    let first = hps(&args);
    assert!(first.status.success());
    assert!(String::from_utf8_lossy(&first.stderr).contains("built"));
    let second = hps(&args);
    assert!(String::from_utf8_lossy(&second.stderr).contains("loaded checkpoint"));
    assert!(!data_rows(&out).is_empty());

    let o = hps(&["tree", "--levels", "3", "--nc", "6"]);
    assert!(o.status.success());
    assert_eq!(
        String::from_utf8_lossy(&o.stdout)
            .lines()
            .filter(|l| l.contains("leaf"))
            .count(),
        4
    );
}

#[test]
fn invalid_input_is_rejected() {
    for args in [
        &["convergence", "--levels", "5:2"][..],
        &["convergence", "--nc", "3"],
        &["convergence", "--kappa", "0"],
        &["convergence", "--plan", "sometimes"],
        &["convergence", "--levels", "40", "--nc", "16"],
    ] {
        let o = hps(args);
        assert!(!o.status.success(), "{args:?} should fail");
    }
}
