use std::path::Path;
use std::process::{Command, Output};

use dnt_core::stats::{sample, DistributionSpec};

fn dnt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dnt")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const SMALL_TRAIN: &str = "n = 30\nh0_pool = 400\nh0_keep_fraction = 0.1\nh1_count = 60\nh1_dist = t(5)\nd = 20\nk = 5\nmax_iters = 20\nmaster_seed = 3\n";

fn write_sample(path: &Path, values: &[f64]) {
    let text: String = values.iter().map(|v| format!("{v}\n")).collect();
    std::fs::write(path, text).unwrap();
}

#[test]
fn render_writes_a_pgm() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("laplace.pgm");
    let res = dnt(&["render", "--dist", "laplace", "--n", "100", "--seed", "4", "--out", p(&out)]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let bytes = std::fs::read(&out).unwrap();
    let header = b"P5\n128 128\n255\n";
    assert!(bytes.starts_with(header));
    assert_eq!(bytes.len(), header.len() + 128 * 128);

    let again = dir.path().join("again.pgm");
    dnt(&["render", "--dist", "laplace", "--n", "100", "--seed", "4", "--out", p(&again)]);
    assert_eq!(bytes, std::fs::read(&again).unwrap());
}

#[test]
fn render_rejects_unknown_distribution() {
    let dir = tempfile::tempdir().unwrap();
    let res = dnt(&["render", "--dist", "cauchy", "--out", p(&dir.path().join("x.pgm"))]);
    assert_eq!(code(&res), 2);
}

#[test]
fn power_with_unknown_method_lists_valid_names() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "methods = KS, Lilliefors\nreps = 50\n").unwrap();
    let res = dnt(&["power", "--config", p(&cfg), "--out", p(&dir.path().join("t.csv"))]);
    assert_eq!(code(&res), 2);
    let msg = stderr(&res);
    assert!(msg.contains("Lilliefors"));
    for name in ["DNT-raw", "DNT-image", "KS", "AD", "JB", "GLB", "GG", "BS", "PSNR", "SSIM"] {
        assert!(msg.contains(name), "{msg}");
    }
}

#[test]
fn power_writes_csv_and_markdown() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, r#"{"methods": ["KS", "JB"], "reps": 50, "calibration_reps": 300}"#).unwrap();
    let csv = dir.path().join("power.csv");
    let md = dir.path().join("power.md");
    let res = dnt(&["power", "--config", p(&cfg), "--out", p(&csv), "--markdown", p(&md)]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 17);
    assert!(text.starts_with("case,label,KS,JB\n"));
    assert!(std::fs::read_to_string(&md).unwrap().contains("| Case | Distribution | KS | JB |"));

    let csv2 = dir.path().join("power2.csv");
    dnt(&["power", "--config", p(&cfg), "--out", p(&csv2)]);
    assert_eq!(text, std::fs::read_to_string(&csv2).unwrap());
}

#[test]
fn config_typos_are_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "methods = KS\nrepz = 50\n").unwrap();
    let res = dnt(&["power", "--config", p(&cfg), "--out", p(&dir.path().join("t.csv"))]);
    assert_eq!(code(&res), 2);
    assert!(stderr(&res).contains("repz"));

    std::fs::write(&cfg, "methods = KS\nreps = fifty\n").unwrap();
    let res = dnt(&["power", "--config", p(&cfg), "--out", p(&dir.path().join("t.csv"))]);
    assert_eq!(code(&res), 4);
}

#[test]
fn train_then_test() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("train.cfg");
    std::fs::write(&cfg, SMALL_TRAIN).unwrap();
    let model = dir.path().join("model.json");
    let res = dnt(&["train", "--config", p(&cfg), "--out", p(&model)]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    assert!(model.exists());

    let normal = sample(&DistributionSpec::standard_normal(), 30, 9).unwrap();
    let data = dir.path().join("normal.txt");
    write_sample(&data, normal.as_ref());
    let res = dnt(&["test", "--model", p(&model), "--data", p(&data)]);
    assert!(matches!(code(&res), 0 | 1), "{}", stderr(&res));
    assert!(String::from_utf8_lossy(&res.stdout).contains("decision="));

    let skewed: Vec<f64> = normal.as_ref().iter().map(|z| (3.0 * z).exp()).collect();
    write_sample(&data, &skewed);
    let res = dnt(&["test", "--model", p(&model), "--data", p(&data)]);
    assert_eq!(code(&res), 1);
    assert!(String::from_utf8_lossy(&res.stdout).contains("decision=reject"));

    write_sample(&data, &normal.as_ref()[..29]);
    assert_eq!(code(&dnt(&["test", "--model", p(&model), "--data", p(&data)])), 5);

    std::fs::write(&data, "1.0\n2.0\nnot-a-number\n").unwrap();
    let res = dnt(&["test", "--model", p(&model), "--data", p(&data)]);
    assert_eq!(code(&res), 4);
    assert!(stderr(&res).contains("line 3"));

    let text = std::fs::read_to_string(&model).unwrap();
    std::fs::write(&model, &text[..text.len() / 3]).unwrap();
    write_sample(&data, normal.as_ref());
    assert_eq!(code(&dnt(&["test", "--model", p(&model), "--data", p(&data)])), 4);
}

#[test]
fn missing_files_exit_with_io_code() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    let data = dir.path().join("x.txt");
    write_sample(&data, &[1.0, 2.0, 3.0]);
    let res = dnt(&["test", "--model", p(&missing), "--data", p(&data)]);
    assert_eq!(code(&res), 3);
    assert!(stderr(&res).contains("nope.json"));
    let res = dnt(&["train", "--config", p(&missing), "--out", p(&dir.path().join("m.json"))]);
    assert_eq!(code(&res), 3);
}

#[test]
fn calibrate_prints_a_cutoff() {
    let res = dnt(&["calibrate", "--stat", "ks", "--n", "50", "--reps", "400"]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let out = String::from_utf8_lossy(&res.stdout).into_owned();
    let cutoff: f64 = out.trim().rsplit("cutoff=").next().unwrap().parse().unwrap();
    assert!(cutoff > 0.05 && cutoff < 0.2, "{out}");

    assert_eq!(code(&dnt(&["calibrate", "--stat", "DNT-raw"])), 2);
    assert_eq!(code(&dnt(&["calibrate", "--stat", "KS", "--reps", "10"])), 2);
    assert_eq!(code(&dnt(&["calibrate"])), 2);
}
