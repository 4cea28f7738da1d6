use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_carnot-sf"))
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let head = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(|s| s.parse().unwrap()).collect())
        .collect();
    (head, rows)
}

#[test]
fn extremal_command_writes_csvs_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(bin().args([
        "extremal", "--group", "heisenberg:1", "--norm", "lp:4", "--a0", "1,0", "--b", "1", "-T", "2", "--dt", "1e-3", "-o",
    ])
    .arg(dir.path()));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let (head, rows) = csv_rows(&dir.path().join("trajectory.csv"));
    assert_eq!(head, ["t", "x_1", "x_2", "z_1"]);
    assert_eq!(rows.len(), 2001);
    assert_eq!(rows[0], [0.0, 0.0, 0.0, 0.0]);
    let (head, rows) = csv_rows(&dir.path().join("control.csv"));
    assert_eq!(head, ["t", "u_1", "u_2"]);
    assert_eq!(rows.len(), 2000);
    // a0 = e1 has unit lp:4 dual norm, so the first control is e1
    assert!((rows[0][1] - 1.0).abs() < 1e-12 && rows[0][2].abs() < 1e-12);
    let (head, _) = csv_rows(&dir.path().join("states.csv"));
    assert_eq!(head, ["t", "a_1", "a_2", "b_1"]);

    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["tool"], "carnot-sf");
    assert_eq!(report["spec"]["kind"], "extremal");
    assert_eq!(report["passed"], true);
    assert!(report["tolerances"].as_object().is_some_and(|t| !t.is_empty()));
}

#[test]
fn negative_covector_components_parse() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(bin()
        .args(["extremal", "--a0", "-0.6,0.8", "--b", "-1.5", "-T", "1", "--dt", "0.01", "-o"])
        .arg(dir.path()));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (_, rows) = csv_rows(&dir.path().join("states.csv"));
    assert_eq!(rows[0], [0.0, -0.6, 0.8, -1.5]);
}

#[test]
fn run_decay_spec() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("decay.json");
    fs::write(
        &spec,
        r#"{"kind": "decay", "group": "heisenberg:1", "norm": {"kind": "lp", "p": 3},
            "a0": [0.3, -1.0], "b": [1.2], "dt": 0.001, "t_ladder": [1, 2, 4, 8]}"#,
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = run(bin().arg("run").arg(&spec).arg("-o").arg(&out_dir));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (head, rows) = csv_rows(&out_dir.join("decay.csv"));
    assert_eq!(head, ["T", "value", "bound"]);
    assert_eq!(rows.len(), 4);
    for r in rows {
        assert_eq!(r[2], 2.0 / r[0]);
        assert!(r[1] <= 2.1 / r[0]);
    }
}

#[test]
fn corrupted_group_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let group = dir.path().join("bad.json");
    // [X_1, X_1] ≠ 0 is not antisymmetric
    fs::write(&group, r#"{"rank": 2, "vdim": 1, "brackets": [{"i": 1, "j": 1, "k": 1, "coeff": 1.0}]}"#).unwrap();
    let spec = dir.path().join("spec.json");
    fs::write(
        &spec,
        format!(
            r#"{{"kind": "extremal", "group": {:?}, "a0": [1, 0], "b": [1], "T": 1, "dt": 0.01}}"#,
            group.to_str().unwrap()
        ),
    )
    .unwrap();
    let out = run(bin().arg("run").arg(&spec));
    assert_eq!(out.status.code(), Some(2));
    assert!(!String::from_utf8_lossy(&out.stderr).trim().is_empty());
}

#[test]
fn reports_do_not_depend_on_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("submetry.json");
    fs::write(
        &spec,
        r#"{"kind": "submetry", "group": "heisenberg:1", "norm": "euclidean", "samples": 3, "seed": 5,
            "oracle": {"n_steps": 16, "restarts": 3}}"#,
    )
    .unwrap();
    let mut reports = Vec::new();
    for threads in ["1", "3"] {
        // the spec, output path included, is embedded in the report
        let cwd = dir.path().join(format!("t{threads}"));
        fs::create_dir_all(&cwd).unwrap();
        let out = run(bin()
            .current_dir(&cwd)
            .env("CARNOT_SF_THREADS", threads)
            .arg("run")
            .arg(&spec)
            .args(["-o", "out"]));
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        reports.push(fs::read_to_string(cwd.join("out/report.json")).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
}
