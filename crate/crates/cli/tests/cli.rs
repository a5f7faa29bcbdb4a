use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn mreval(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mreval")).args(args).output().expect("binary runs")
}

fn bundled_spec() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("specs/phantom_small.json")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Relative path to file bytes for every file below `dir`.
fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn phantom(dir: &Path) -> PathBuf {
    let data = dir.join("data");
    let o = mreval(&["phantom", "--spec", s(&bundled_spec()), "--out", s(&data)]);
    assert!(o.status.success(), "{}", stderr(&o));
    data.join("manifest.json")
}

fn csv_column(path: &Path, column: &str) -> Vec<String> {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    let idx = rdr.headers().unwrap().iter().position(|h| h == column).unwrap();
    rdr.records().map(|r| r.unwrap()[idx].to_string()).collect()
}

#[test]
fn phantom_dataset_evaluates_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = phantom(dir.path());
    let inputs = snapshot(&dir.path().join("data"));
    let out = dir.path().join("report");
    let o = mreval(&["evaluate", "--manifest", s(&manifest), "--out", s(&out), "--iterations", "100"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let files: Vec<PathBuf> = snapshot(&out).into_keys().collect();
    assert_eq!(files.len(), 11, "{files:?}");
    // the spec shrinks each successive algorithm's spheres
    assert_eq!(csv_column(&out.join("ranking.csv"), "algorithm"), ["alpha", "beta", "gamma"]);
    assert_eq!(csv_column(&out.join("ranking.csv"), "composite"), ["1", "2", "3"]);
    assert_eq!(snapshot(&dir.path().join("data")), inputs, "inputs were modified");

    let meta: serde_json::Value = serde_json::from_slice(&fs::read(out.join("run_meta.json")).unwrap()).unwrap();
    assert_eq!(meta["config"]["iterations"], 100);
    assert_eq!(meta["cases_evaluated"], 6);
    assert_eq!(meta["manifest_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn rerun_and_parallel_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = phantom(dir.path());
    let run = |name: &str, extra: &[&str]| {
        let out = dir.path().join(name);
        let mut args = vec!["evaluate", "--manifest", s(&manifest), "--out", s(&out), "--iterations", "60", "--seed", "4"];
        args.extend_from_slice(extra);
        let o = mreval(&args);
        assert!(o.status.success(), "{}", stderr(&o));
        out
    };
    let first = run("a", &[]);
    let a = snapshot(&first);
    run("a", &[]);
    assert_eq!(snapshot(&first), a);
    let mut b = snapshot(&run("b", &["--parallel-cases", "3"]));
    // the worker count is echoed in run_meta
    let meta_a = a.get(Path::new("run_meta.json")).unwrap().clone();
    let meta_b = b.remove(Path::new("run_meta.json")).unwrap();
    let mut a = a;
    a.remove(Path::new("run_meta.json"));
    assert_eq!(a, b);
    assert_ne!(meta_a, meta_b);
}

#[test]
fn phantom_generation_is_deterministic() {
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    phantom(d1.path());
    phantom(d2.path());
    assert_eq!(snapshot(&d1.path().join("data")), snapshot(&d2.path().join("data")));
}

#[test]
fn overlapping_phantom_spec_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec: serde_json::Value = serde_json::from_slice(&fs::read(bundled_spec()).unwrap()).unwrap();
    spec["spheres"][1]["center"] = serde_json::json!([18.0, 14.0, 12.0]);
    let path = dir.path().join("bad.json");
    fs::write(&path, serde_json::to_vec(&spec).unwrap()).unwrap();
    let o = mreval(&["phantom", "--spec", s(&path), "--out", s(&dir.path().join("x"))]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("overlap"));
}

#[test]
fn corrupt_volume_exits_2_unless_skipped() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = phantom(dir.path());
    let victim = dir.path().join("data/case_002/beta.nii.gz");
    fs::write(&victim, b"not a volume").unwrap();
    let out = dir.path().join("report");
    let o = mreval(&["evaluate", "--manifest", s(&manifest), "--out", s(&out), "--iterations", "10"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("case_002/beta.nii.gz"), "{}", stderr(&o));

    let o = mreval(&["evaluate", "--manifest", s(&manifest), "--out", s(&out), "--iterations", "10", "--skip-bad-cases"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let meta: serde_json::Value = serde_json::from_slice(&fs::read(out.join("run_meta.json")).unwrap()).unwrap();
    assert_eq!(meta["skipped_cases"][0]["case_id"], "case_002");
    assert!(!csv_column(&out.join("cases.csv"), "case_id").contains(&"case_002".to_string()));
}

#[test]
fn group_filter_restricts_cases() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = phantom(dir.path());
    let out = dir.path().join("report");
    let o = mreval(&["evaluate", "--manifest", s(&manifest), "--out", s(&out), "--group", "C", "--iterations", "10"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let ids = csv_column(&out.join("cases.csv"), "case_id");
    assert_eq!(ids, ["case_003", "case_003", "case_003", "case_006", "case_006", "case_006"]);
    assert!(csv_column(&out.join("cases.csv"), "group").iter().all(|g| g == "C"));
    assert_eq!(csv_column(&out.join("groups.csv"), "group"), ["C", "C", "C", "overall", "overall", "overall"]);
}

#[test]
fn literal_bin_weights_flag_and_alias_agree() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = phantom(dir.path());
    let ece = |flag: Option<&str>, name: &str| {
        let out = dir.path().join(name);
        let mut args = vec!["evaluate", "--manifest", s(&manifest), "--out", s(&out), "--iterations", "5"];
        args.extend(flag);
        let o = mreval(&args);
        assert!(o.status.success(), "{}", stderr(&o));
        csv_column(&out.join("cases.csv"), "ece_e3")
    };
    let literal = ece(Some("--ece-literal-weights"), "a");
    assert_eq!(literal, ece(Some("--eq2-literal"), "b"));
    assert_ne!(literal, ece(None, "c"));
}

#[test]
fn invalid_flags_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = phantom(dir.path());
    let out = dir.path().join("r");
    for extra in [["--threshold", "1.5"], ["--ece-bins", "1"], ["--iterations", "0"], ["--classes", "spleen"]] {
        let mut args = vec!["evaluate", "--manifest", s(&manifest), "--out", s(&out)];
        args.extend_from_slice(&extra);
        let o = mreval(&args);
        assert_eq!(o.status.code(), Some(1), "{extra:?}: {}", stderr(&o));
    }
    assert!(!out.exists());
}

#[test]
fn validate_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = phantom(dir.path());
    let o = mreval(&["validate", "--manifest", s(&manifest)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("6 cases, 3 raters, 3 algorithms"));
    fs::remove_file(dir.path().join("data/case_004/rater_2.nii.gz")).unwrap();
    let o = mreval(&["validate", "--manifest", s(&manifest)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("rater_2.nii.gz"));
}

fn rank_table(rows: &str) -> (Output, Vec<csv::StringRecord>) {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("in.csv");
    fs::write(&path, rows).unwrap();
    let out = dir.path().join("out");
    let o = mreval(&["rank-table", s(&path), "--out", s(&out)]);
    let records = if o.status.success() {
        csv::Reader::from_path(out.join("ranking.csv")).unwrap().records().map(Result::unwrap).collect()
    } else {
        vec![]
    };
    (o, records)
}

#[test]
fn rank_table_single_row() {
    let (o, rows) = rank_table("algorithm,dsc,confidence,ece,crps\nsolo,0.9,0.95,0.002,8.0\n");
    assert!(o.status.success());
    assert_eq!(rows[0].iter().collect::<Vec<_>>(), ["solo", "0.9", "1", "0.95", "1", "0.002", "1", "8", "1", "1", "1"]);
}

#[test]
fn rank_table_identical_rows_tie() {
    let (o, rows) = rank_table("algorithm,dsc,confidence,ece,crps\nzeta,0.9,0.95,0.002,8.0\neta,0.9,0.95,0.002,8.0\n");
    assert!(o.status.success());
    for r in &rows {
        for k in [2, 4, 6, 8, 9] {
            assert_eq!(&r[k], "1.5");
        }
    }
    // equal on every rank; the name decides
    assert_eq!((&rows[0][0], &rows[0][10]), ("eta", "1"));
    assert_eq!((&rows[1][0], &rows[1][10]), ("zeta", "2"));
}

#[test]
fn rank_table_missing_column_exits_1() {
    let (o, _) = rank_table("algorithm,dsc,confidence,ece\na,0.9,0.9,0.1\n");
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("crps"), "{}", stderr(&o));
}
