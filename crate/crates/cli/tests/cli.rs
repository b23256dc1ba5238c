use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn ipg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ipg")).args(args).output().expect("binary runs")
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|x| x.unwrap().iter().map(String::from).collect()).collect()
}

/// Drops Time, Time-1st (and Bound, which reports a solver float).
fn stable(row: &[String]) -> Vec<String> {
    row.iter()
        .enumerate()
        .filter(|(k, _)| ![7, 8].contains(k))
        .map(|(_, v)| v.clone())
        .collect()
}

#[test]
fn example1_select_row() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("runs.csv");
    let out = ipg(&["solve", fixture("example1.json").to_str().unwrap(), "--csv", csv.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["status"], "PNE_FOUND");
    assert_eq!(report["pos"], "8/5");
    assert_eq!(report["pnes"][0]["welfare"], "5");
    let rows = csv_rows(&csv);
    assert_eq!(rows.len(), 1);
    let row = &rows[0];
    assert_eq!(row[0], "example1");
    assert_eq!(row[2], "1.600000");
    assert_eq!(row[6], "2");
    // the incumbent ((1,0),(0,1)) leaves both players with regret 1
    let ei: usize = row[3].parse().unwrap();
    let ei_d: usize = row[5].parse().unwrap();
    assert_eq!(ei + ei_d, 3);
}

#[test]
fn example2_enumeration() {
    let out = ipg(&["enumerate", fixture("example2.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let pnes = report["pnes"].as_array().unwrap();
    let welfare: Vec<&str> = pnes.iter().map(|p| p["welfare"].as_str().unwrap()).collect();
    assert_eq!(welfare, ["18", "16", "16"]);
    assert_eq!(report["osw"], "20");
    assert_eq!(report["pos"], "10/9");
    assert_eq!(report["poa"], "5/4");

    let out = ipg(&["oracle", fixture("example2.json").to_str().unwrap()]);
    let all: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(all["pnes"].as_array().unwrap().len(), 3);
}

#[test]
fn malformed_input_exits_one_without_row() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{\"p\": [[1]],").unwrap();
    let csv = dir.path().join("runs.csv");
    let out = ipg(&["solve", bad.to_str().unwrap(), "--csv", csv.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line"));
    assert!(!csv.exists());
}

#[test]
fn time_limit_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("big.json");
    let gen = ipg(&["gen", "kpg", "--n", "3", "--m", "60", "--dist", "C", "--seed", "1", "--out", inst.to_str().unwrap()]);
    assert!(gen.status.success());
    let out = ipg(&["solve", inst.to_str().unwrap(), "--time-limit", "0.02"]);
    assert_eq!(out.status.code(), Some(2));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["status"], "TIME_LIMIT");
}

#[test]
fn epsilon_on_example1() {
    let out = ipg(&["epsilon", fixture("example1.json").to_str().unwrap(), "--epsilon", "1"]);
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["epsilon"], "1");
    assert_eq!(report["pnes"][0]["welfare"], "8");
}

#[test]
fn generation_is_deterministic() {
    for family in [
        vec!["gen", "kpg", "--m", "8", "--seed", "4"],
        vec!["gen", "nfg", "--v", "50", "--seed", "4"],
        vec!["gen", "qipg", "--seed", "4"],
        vec!["gen", "cfld", "--seed", "4"],
    ] {
        let a = ipg(&family);
        let b = ipg(&family);
        assert!(a.status.success());
        assert_eq!(a.stdout, b.stdout);
    }
    let out = ipg(&["gen", "qipg", "--n", "9"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn reduce_bkp_emits_a_knapsack_game() {
    let dir = tempfile::tempdir().unwrap();
    let bkp = dir.path().join("bkp.json");
    fs::write(&bkp, r#"{"a": [2, 3], "b": [1, 2], "A": 3, "B": 2}"#).unwrap();
    let kpg = dir.path().join("kpg.json");
    let out = ipg(&["reduce", "bkp", bkp.to_str().unwrap(), "--out", kpg.to_str().unwrap()]);
    assert!(out.status.success());
    let game: serde_json::Value = serde_json::from_str(&fs::read_to_string(&kpg).unwrap()).unwrap();
    assert_eq!(game["m"], 3);
    let solved = ipg(&["solve", kpg.to_str().unwrap()]);
    assert!(solved.status.success());
}

#[test]
fn batch_groups_and_repeats() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("inst");
    fs::create_dir(&inst).unwrap();
    for (k, tenths) in ["2", "5", "8"].iter().enumerate() {
        let path = inst.join(format!("kpg{k}.json"));
        let out = ipg(&["gen", "kpg", "--m", "10", "--dist", "C", "--tenths", tenths, "--seed", "11", "--out", path.to_str().unwrap()]);
        assert!(out.status.success());
    }
    fs::write(inst.join("broken.json"), "[]").unwrap();
    let mut runs = Vec::new();
    for round in 0..2 {
        let csv = dir.path().join(format!("rows{round}.csv"));
        let summary = dir.path().join(format!("summary{round}.csv"));
        let out = ipg(&[
            "batch",
            inst.to_str().unwrap(),
            "--jobs",
            "2",
            "--csv",
            csv.to_str().unwrap(),
            "--summary",
            summary.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0));
        let rows = csv_rows(&csv);
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[0][1], "ERROR");
        let groups = csv_rows(&summary);
        let kpg = groups.iter().find(|g| g[0] == "(2, 10, C)").unwrap();
        assert_eq!(kpg[1], "3");
        assert_eq!(kpg[9], "0/3");
        runs.push(rows.iter().map(|r| stable(r)).collect::<Vec<_>>());
    }
    assert_eq!(runs[0], runs[1]);
}

#[test]
fn batch_on_empty_directory() {
    let dir = tempfile::tempdir().unwrap();
    let out = ipg(&["batch", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 1);
}
