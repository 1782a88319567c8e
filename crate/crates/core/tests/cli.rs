use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use clap::CommandFactory;
use hipnet::cli::{Cli, RunManifest};
use hipnet::evalmesh::{Mesh, MetricReport};
use hipnet::synthdata::{Dataset, Split};

fn hipnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hipnet"))
        .args(args)
        .env("HIPNET_THREADS", "1")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = hipnet(args);
    assert!(
        out.status.success(),
        "hipnet {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn gen(dir: &Path, subjects: u32, sequences: u32, frames: u32, points: u32, seed: u64) {
    ok(&[
        "gen-data",
        "--subjects",
        &subjects.to_string(),
        "--sequences",
        &sequences.to_string(),
        "--frames",
        &frames.to_string(),
        "--points",
        &points.to_string(),
        "--seed",
        &seed.to_string(),
        "--out",
        s(dir),
    ]);
}

/// Every file under `dir` except run manifests, which hold timestamps.
fn contents(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if !p.to_string_lossy().ends_with("run.json") {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

const TINY: &str = r#"{
    "epochs": 1,
    "lr": 0.002,
    "lambda_normal": 0.25,
    "surface_points": 200,
    "eikonal_points": 200,
    "chunk_rows": 200,
    "model": {"hidden": 16, "depth": 4, "skip_at": 2, "encoder_hidden": 16, "d_phi": 6, "d_beta": 4}
}"#;

struct Fixture {
    _tmp: tempfile::TempDir,
    data: PathBuf,
    config: PathBuf,
    run: PathBuf,
}

/// A 2-subject dataset and a tiny model trained on it for one epoch.
fn fixture() -> &'static Fixture {
    static CELL: OnceLock<Fixture> = OnceLock::new();
    CELL.get_or_init(|| {
        let tmp = tempfile::tempdir().unwrap();
        let data = tmp.path().join("data");
        gen(&data, 2, 2, 3, 400, 7);
        let config = tmp.path().join("tiny.json");
        std::fs::write(&config, TINY).unwrap();
        let run = tmp.path().join("run");
        ok(&["train", "--data", s(&data), "--config", s(&config), "--out", s(&run), "--seed", "4"]);
        Fixture {
            _tmp: tmp,
            data,
            config,
            run,
        }
    })
}

#[test]
fn command_definition_is_consistent() {
    Cli::command().debug_assert();
}

#[test]
fn gen_data_writes_one_record_per_frame() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("d");
    gen(&dir, 4, 8, 10, 300, 1);
    let frames = std::fs::read_dir(dir.join("frames")).unwrap().count();
    assert_eq!(frames, 320);
    let ds = Dataset::open(&dir).unwrap();
    assert_eq!(ds.frames(Split::Train).len(), 4 * 6 * 10);
    assert_eq!(ds.frames(Split::Test).len(), 4 * 2 * 10);
    assert!(dir.join("run.json").exists());
}

#[test]
fn gen_data_is_byte_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    gen(&a, 2, 2, 2, 200, 5);
    gen(&b, 2, 2, 2, 200, 5);
    gen(&c, 2, 2, 2, 200, 6);
    let (ca, cb) = (contents(&a), contents(&b));
    assert!(!ca.is_empty());
    assert_eq!(ca, cb);
    assert_ne!(ca, contents(&c));
}

#[test]
fn usage_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = hipnet(&[
        "gen-data",
        "--subjects",
        "1",
        "--sequences",
        "1",
        "--frames",
        "1",
        "--points",
        "0",
        "--out",
        s(&tmp.path().join("x")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!tmp.path().join("x").exists());
    assert_eq!(hipnet(&["no-such-command"]).status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let out = hipnet(&["assign", "--data", s(&tmp.path().join("missing"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
}

#[test]
fn train_manifest_echoes_the_config() {
    let f = fixture();
    let text = std::fs::read_to_string(f.run.join("run.json")).unwrap();
    let m: RunManifest = serde_json::from_str(&text).unwrap();
    assert_eq!(m.command, "train");
    assert_eq!(m.config["lambda_eikonal"], 0.1);
    assert_eq!(m.config["lambda_normal"], 0.25);
    assert_eq!(m.config["lr"], 0.002);
    assert_eq!(m.config["model"]["hidden"], 16);
    assert_eq!(m.seed, Some(4));
    assert_eq!(m.config_path.as_deref(), Some(f.config.as_path()));
    assert_eq!(m.checkpoint_sha256.unwrap().len(), 64);
    let losses = std::fs::read_to_string(f.run.join("losses.csv")).unwrap();
    // one epoch over 2 subjects, 1 training sequence each, 3 frames each
    assert_eq!(losses.lines().count(), 1 + 6);
}

fn eval(args: &[&str], out: &Path) -> MetricReport {
    let mut v = vec!["eval"];
    v.extend_from_slice(args);
    v.extend_from_slice(&["--samples", "2000", "--resolution", "32", "--out", s(out)]);
    ok(&v);
    serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap()
}

#[test]
fn oracle_eval_is_perfect() {
    let f = fixture();
    let tmp = tempfile::tempdir().unwrap();
    let r = eval(&["--data", s(&f.data), "--oracle"], &tmp.path().join("o.json"));
    assert_eq!(r.uniform_miou, 100.0);
    assert_eq!(r.near_surface_miou, 100.0);
    assert!(r.chamfer_l1 < 1e-2, "{}", r.chamfer_l1);
}

#[test]
fn model_eval_is_deterministic() {
    let f = fixture();
    let tmp = tempfile::tempdir().unwrap();
    let args = ["--data", s(&f.data), "--checkpoint", s(&f.run)];
    let a = std::fs::read(tmp.path().join("a.json")).ok();
    assert!(a.is_none());
    eval(&args, &tmp.path().join("a.json"));
    eval(&args, &tmp.path().join("b.json"));
    let a = std::fs::read(tmp.path().join("a.json")).unwrap();
    let b = std::fs::read(tmp.path().join("b.json")).unwrap();
    assert_eq!(a, b);
    let r: MetricReport = serde_json::from_slice(&a).unwrap();
    assert_eq!(r.frames.len(), 2 * 3);
    assert!((0.0..=100.0).contains(&r.uniform_miou));
}

#[test]
fn mesh_writes_an_obj() {
    let f = fixture();
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("m.obj");
    ok(&[
        "mesh",
        "--data",
        s(&f.data),
        "--checkpoint",
        s(&f.run),
        "--subject",
        "1",
        "--sequence",
        "1",
        "--frame",
        "2",
        "--resolution",
        "24",
        "--out",
        s(&out),
    ]);
    Mesh::read_obj(&out).unwrap();
    assert!(tmp.path().join("m.obj.run.json").exists());
}

#[test]
fn retarget_writes_one_mesh_per_frame() {
    let f = fixture();
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("rt");
    ok(&[
        "retarget",
        "--data",
        s(&f.data),
        "--checkpoint",
        s(&f.run),
        "--subject",
        "0",
        "--poses-from",
        "1",
        "--sequence",
        "0",
        "--resolution",
        "16",
        "--out",
        s(&out),
    ]);
    let objs = std::fs::read_dir(&out)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "obj"))
        .count();
    assert_eq!(objs, 3);
}

#[test]
fn unknown_subject_lists_the_known_ones() {
    let f = fixture();
    let tmp = tempfile::tempdir().unwrap();
    let out = hipnet(&[
        "retarget",
        "--data",
        s(&f.data),
        "--checkpoint",
        s(&f.run),
        "--subject",
        "9",
        "--poses-from",
        "0",
        "--sequence",
        "0",
        "--out",
        s(&tmp.path().join("rt")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains('9') && err.contains("[0, 1]"), "{err}");
}

#[test]
fn sample_is_reproducible_per_seed() {
    let f = fixture();
    let tmp = tempfile::tempdir().unwrap();
    let code = |name: &str, seed: &str| {
        let out = tmp.path().join(name);
        ok(&[
            "sample",
            "--data",
            s(&f.data),
            "--checkpoint",
            s(&f.run),
            "--seed",
            seed,
            "--resolution",
            "16",
            "--out",
            s(&out),
        ]);
        assert!(tmp.path().join(format!("{}.obj", name.trim_end_matches(".json"))).exists());
        std::fs::read(&out).unwrap()
    };
    let (a, b, c) = (code("a.json", "3"), code("b.json", "3"), code("c.json", "4"));
    assert_eq!(a, b);
    assert_ne!(a, c);
    let v: Vec<f64> = serde_json::from_slice(&a).unwrap();
    assert_eq!(v.len(), 4);
}

#[test]
fn fit_accepts_a_front_only_cloud() {
    let f = fixture();
    let tmp = tempfile::tempdir().unwrap();
    let ds = Dataset::open(&f.data).unwrap();
    let frame = &ds.frames(Split::Test)[0];
    let out = tmp.path().join("fit.json");
    let stdout = ok(&[
        "fit",
        "--data",
        s(&f.data),
        "--checkpoint",
        s(&f.run),
        "--points-file",
        s(&frame.path),
        "--front-only",
        "--iterations",
        "5",
        "--samples",
        "2000",
        "--resolution",
        "16",
        "--out",
        s(&out),
    ]);
    assert!(stdout.contains("uniform mIoU"), "{stdout}");
    let v: Vec<f64> = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    assert_eq!(v.len(), 4);
    assert!(v.iter().all(|x| x.is_finite()));
}

#[test]
fn assign_rewrites_labels_in_place() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("d");
    gen(&dir, 1, 2, 2, 200, 3);
    let before = contents(&dir);
    ok(&["assign", "--data", s(&dir)]);
    // same neighbour count as generation, so nothing changes
    assert_eq!(before, contents(&dir));
    ok(&["assign", "--data", s(&dir), "--neighbors", "3"]);
    assert_eq!(before.len(), contents(&dir).len());
}

#[test]
fn training_resumes_from_a_checkpoint() {
    let f = fixture();
    let tmp = tempfile::tempdir().unwrap();
    let (half, rest, full) = (tmp.path().join("half"), tmp.path().join("rest"), tmp.path().join("full"));
    let base = ["train", "--data", s(&f.data), "--config", s(&f.config), "--seed", "4", "--epochs", "2"];
    let with = |extra: &[&str]| {
        let mut v = base.to_vec();
        v.extend_from_slice(extra);
        ok(&v);
    };
    with(&["--out", s(&full)]);
    with(&["--out", s(&half), "--max-steps", "5"]);
    with(&["--out", s(&rest), "--checkpoint", s(&half)]);
    assert_eq!(std::fs::read(full.join("model.hipw")).unwrap(), std::fs::read(rest.join("model.hipw")).unwrap());
}
