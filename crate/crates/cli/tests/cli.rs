use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rii::region::{RegionSpec, ResidualIntervalSet};
use rii::synth::{sample_dataset, GroundTruth, NoiseSpec};

fn rii(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rii"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_dataset(dir: &Path, rows: usize) -> PathBuf {
    let truth = GroundTruth::new(vec![1.0, -2.0, 0.5], 0.0, NoiseSpec::additive()).unwrap();
    let data = sample_dataset(&truth, rows, 4).unwrap();
    let path = dir.join("data.csv");
    std::fs::write(&path, data.to_csv()).unwrap();
    path
}

/// Region on the line with intervals [0, 2], [1, 3], [1.5, 4] at x = 1 and
/// k = 2, i.e. the set [1, 3].
fn write_toy_region(dir: &Path, lo: [f64; 3], hi: [f64; 3], k: usize) -> PathBuf {
    let iv = ResidualIntervalSet::from_parts(1, vec![1.0; 3], lo.to_vec(), hi.to_vec()).unwrap();
    let region = RegionSpec::new(iv, k, 0.1, 0.5, 50.0).unwrap();
    let path = dir.join("toy.json");
    std::fs::write(&path, region.to_json().unwrap()).unwrap();
    path
}

#[test]
fn region_uses_k_alpha_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_dataset(dir.path(), 99);
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for out in [&a, &b] {
        let res = rii(&[
            "region",
            "--data",
            p(&data),
            "--out",
            p(out),
            "--n-te",
            "39",
            "--alpha",
            "0.1",
            "--b",
            "0.5",
            "--seed",
            "7",
        ]);
        assert_eq!(code(&res), 0, "{}", stderr(&res));
        assert_eq!(stdout(&res), "guaranteed_coverage=0.9002045665\n");
    }
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    let region = RegionSpec::from_json(&text).unwrap();
    assert_eq!((region.k(), region.n_te(), region.dim()), (16, 39, 3));
}

#[test]
fn region_without_a_valid_threshold_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_dataset(dir.path(), 20);
    let out = dir.path().join("r.json");
    let res = rii(&[
        "region",
        "--data",
        p(&data),
        "--out",
        p(&out),
        "--n-te",
        "1",
        "--alpha",
        "0.01",
    ]);
    assert_eq!(code(&res), 3);
    let err = stderr(&res);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("infeasible config:"));
    assert!(!out.exists());
}

#[test]
fn malformed_csv_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("bad.csv");
    std::fs::write(&data, "x1,y\n1.0,2.0\n1.0\n").unwrap();
    let res = rii(&[
        "region",
        "--data",
        p(&data),
        "--out",
        p(&dir.path().join("r.json")),
        "--n-te",
        "1",
    ]);
    assert_eq!(code(&res), 2);
    assert!(stderr(&res).starts_with("input error:"));
    std::fs::write(&data, "1.0,2.0\n3.0,4.0\n").unwrap();
    let res = rii(&[
        "region",
        "--data",
        p(&data),
        "--out",
        p(&dir.path().join("r.json")),
        "--n-te",
        "1",
    ]);
    assert_eq!(code(&res), 2);
}

#[test]
fn member_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let region = write_toy_region(dir.path(), [0.0, 1.0, 1.5], [2.0, 3.0, 4.0], 2);
    let inside = rii(&["member", "--region", p(&region), "--theta", "1.5"]);
    assert_eq!(code(&inside), 0);
    assert_eq!(stdout(&inside), "hits=3 k=2 member=true\n");
    let outside = rii(&["member", "--region", p(&region), "--theta", "-10"]);
    assert_eq!(code(&outside), 1);
    assert_eq!(stdout(&outside), "hits=0 k=2 member=false\n");
    let wrong = rii(&["member", "--region", p(&region), "--theta", "1,2"]);
    assert_eq!(code(&wrong), 2);
}

#[test]
fn intervals_of_a_toy_region() {
    let dir = tempfile::tempdir().unwrap();
    let region = write_toy_region(dir.path(), [0.0, 1.0, 1.5], [2.0, 3.0, 4.0], 2);
    let out = dir.path().join("iv.csv");
    let res = rii(&["intervals", "--region", p(&region), "--out", p(&out)]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    assert_eq!(
        std::fs::read_to_string(&out).unwrap(),
        "coord,lower,upper\n0,1,3\n"
    );
}

#[test]
fn empty_region_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let region = write_toy_region(dir.path(), [0.0, 5.0, 10.0], [1.0, 6.0, 11.0], 2);
    for sub in ["intervals", "test"] {
        let res = rii(&[sub, "--region", p(&region)]);
        assert_eq!(code(&res), 4, "{sub}");
        let err = stderr(&res);
        assert_eq!(
            err.lines().last().unwrap(),
            "region empty: null hypothesis rejected at alpha=0.1"
        );
    }
}

#[test]
fn fewer_hits_than_dimensions_gives_infinite_bounds() {
    let dir = tempfile::tempdir().unwrap();
    let iv = ResidualIntervalSet::from_parts(
        2,
        vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0],
        vec![0.0; 3],
        vec![1.0; 3],
    )
    .unwrap();
    let region = RegionSpec::new(iv, 1, 0.1, 0.5, 50.0).unwrap();
    let path = dir.path().join("r.json");
    std::fs::write(&path, region.to_json().unwrap()).unwrap();
    let res = rii(&["intervals", "--region", p(&path)]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    assert_eq!(stdout(&res), "coord,lower,upper\n0,-inf,inf\n1,-inf,inf\n");
}

#[test]
fn node_limit_exits_5_with_partial_output() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_dataset(dir.path(), 99);
    let region = dir.path().join("r.json");
    assert_eq!(
        code(&rii(&["region", "--data", p(&data), "--out", p(&region)])),
        0
    );
    let out = dir.path().join("iv.csv");
    let res = rii(&[
        "intervals",
        "--region",
        p(&region),
        "--node-limit",
        "3",
        "--out",
        p(&out),
    ]);
    assert_eq!(code(&res), 5, "{}", stderr(&res));
    assert!(stderr(&res)
        .lines()
        .last()
        .unwrap()
        .starts_with("resource limit:"));
    let body = std::fs::read_to_string(&out).unwrap();
    assert!(body.starts_with("coord,lower,upper\n"));
    assert!(body.ends_with("# incomplete\n"));
}

#[test]
fn test_command_reports_a_witness() {
    let dir = tempfile::tempdir().unwrap();
    let region = write_toy_region(dir.path(), [0.0, 1.0, 1.5], [2.0, 3.0, 4.0], 3);
    let res = rii(&["test", "--region", p(&region)]);
    assert_eq!(code(&res), 0);
    let verdict: serde_json::Value = serde_json::from_str(&stdout(&res)).unwrap();
    assert_eq!(verdict["rejected"], false);
    assert_eq!(verdict["witness_verified"], true);
    let theta = verdict["witness"][0].as_f64().unwrap();
    assert!((1.5..=2.0).contains(&theta), "witness {theta}");
}

#[test]
fn coverage_curve_output() {
    let res = rii(&[
        "coverage-curve",
        "--n-te",
        "30",
        "--k",
        "4,16",
        "--points",
        "3",
    ]);
    assert_eq!(code(&res), 0);
    let text = stdout(&res);
    assert_eq!(text.lines().count(), 7);
    assert!(text.starts_with("k,b,coverage\n4,0,0\n"));
}

#[test]
fn experiment_writes_a_run_directory() {
    let dir = tempfile::tempdir().unwrap();
    let res = rii(&[
        "experiment",
        "--experiment",
        "coverage",
        "--trials",
        "20",
        "--seed",
        "2",
        "--out-dir",
        p(dir.path()),
    ]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let run = dir.path().join("coverage_seed2");
    assert_eq!(stdout(&res).trim_end(), p(&run));
    assert!(run.join("summary.json").exists() && run.join("trials.csv").exists());

    let bad = rii(&[
        "experiment",
        "--experiment",
        "coverage",
        "--k",
        "17",
        "--out-dir",
        p(dir.path()),
    ]);
    assert_eq!(code(&bad), 3);
    let unknown = rii(&[
        "experiment",
        "--experiment",
        "plot",
        "--out-dir",
        p(dir.path()),
    ]);
    assert_eq!(code(&unknown), 2);
}
