use std::path::Path;
use std::process::{Command, Output};

fn lomae(cfg: &Path, out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lomae"))
        .arg("--config")
        .arg(cfg)
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("spawn lomae")
}

fn ok(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const TINY: &str = "\
input_size = 16
embed_dim = 8
depths = 2
heads = 2
window_size = 4
n_patients = 5
slices_per_patient = 2
n_views = 30
labeled_patients = 1
max_iterations = 3
";

#[test]
fn simulate_pretrain_finetune_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.cfg");
    std::fs::write(&cfg, TINY).unwrap();
    let out = dir.path().join("out");

    let s = ok(&lomae(&cfg, &out, &["simulate", "--doses", "250000"]));
    assert!(s.contains("10 slices"), "{s}");
    let manifest = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.is_dir())
        .unwrap()
        .join("manifest.csv");
    let m = manifest.to_str().unwrap();

    let s = ok(&lomae(&cfg, &out, &["pretrain", "--data", m]));
    assert!(s.contains("clean reads: 0"), "{s}");
    let pre = out.join("pretrained");
    ok(&lomae(&cfg, &out, &["finetune", "--data", m, "--checkpoint", pre.to_str().unwrap()]));
    let fine = out.join("finetuned");
    assert!(fine.join("manifest.json").exists());
    let s = ok(&lomae(&cfg, &out, &["evaluate", "--data", m, "--checkpoint", fine.to_str().unwrap()]));
    assert!(s.contains("SSIM"), "{s}");
    assert!(out.join("eval.csv").exists());
}

#[test]
fn errors_exit_nonzero_with_category() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "no_such_key = 1\n").unwrap();
    let o = lomae(&cfg, dir.path(), &["simulate"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("error[config]"));
}
