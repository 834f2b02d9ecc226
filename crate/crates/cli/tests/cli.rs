use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn forge(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_forge"));
    cmd.args(args).env_remove("FORGE_SEED").env_remove("FORGE_THREADS").env("RUST_LOG", "warn");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("forge runs")
}

fn ok(args: &[&str]) -> String {
    let out = forge(args, &[]);
    assert!(
        out.status.success(),
        "forge {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

const TINY: &str = r#"{
  "schema_version": 1,
  "seed": 5,
  "deterministic": true,
  "dataset": {"n_train": 3, "n_test": 1, "n_surface": 3000, "n_interior": 1000},
  "label": {"n": 1500},
  "decoder": {"latent_dim": 4, "hidden_layers": 2, "width": 16, "dropout": 0.0},
  "train": {"epochs": 3, "batch_size": 1024},
  "infer": {"steps": 5},
  "mesh": {"resolution": 16},
  "eval": {"surface": {"kind": "sampled", "n": 2000, "seed": 0}},
  "latent": {"n_samples": 2, "interp_steps": 3, "traverse_coords": [-1.0, 1.0]},
  "cond": {"model": {"epochs": 20, "hidden": 8}}
}"#;

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("run.json");
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn config_prints_defaults() {
    let text = ok(&["config"]);
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["decoder"]["latent_dim"], 256);
    assert_eq!(v["dataset"]["n_train"], 222);
}

#[test]
fn validation_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad_delta = write_config(dir.path(), r#"{"label":{"delta":-0.1},"train":{"delta":-0.1},"infer":{"delta":-0.1}}"#);
    let out = forge(&["--config", &bad_delta, "run", "--exp-root", dir.path().to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(2));
    let unknown = write_config(dir.path(), r#"{"schema_version":1,"colour":"blue"}"#);
    assert_eq!(forge(&["--config", &unknown, "config"], &[]).status.code(), Some(2));
    assert_eq!(forge(&["run", "--skip", "nonsense"], &[]).status.code(), Some(2));
}

#[test]
fn stage_failure_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let text = TINY.replace(r#""n_samples": 2"#, r#""n_samples": 2, "traverse_axis": 40"#);
    let cfg = write_config(dir.path(), &text);
    let out = forge(&["--config", &cfg, "run", "--exp-root", dir.path().join("exp").to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sample-interp"));
}

#[test]
fn run_is_resumable_and_seed_env_changes_experiment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let exp = dir.path().join("exp");
    let exp = exp.to_str().unwrap();
    let first = ok(&["--config", &cfg, "run", "--exp-root", exp]);
    assert!(first.contains("ran      gen-cond"));
    let second = ok(&["--config", &cfg, "run", "--exp-root", exp]);
    assert!(!second.contains("ran "));
    assert!(second.contains("skipped  train"));

    let out = forge(&["--config", &cfg, "run", "--exp-root", exp, "--skip", "train,infer-latent"], &[("FORGE_SEED", "6"), ("FORGE_THREADS", "1")]);
    // A new seed means a new experiment directory whose later stages need the skipped training.
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(fs::read_dir(exp).unwrap().count(), 2);
}

#[test]
fn subcommands_chain_by_hand() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name).to_string_lossy().into_owned();
    let cfg = write_config(dir.path(), TINY);
    let c = ["--config", cfg.as_str()];
    let run = |rest: &[&str]| {
        let args: Vec<&str> = c.iter().copied().chain(rest.iter().copied()).collect();
        ok(&args)
    };

    run(&["gen-dataset", "--out", &p("data")]);
    run(&["label", "--dataset", &p("data"), "--out", &p("sdf")]);
    let trained = run(&["train", "--dataset", &p("data"), "--sdf", &p("sdf"), "--out", &p("ckpt"), "--epochs", "2"]);
    assert!(trained.contains("over 2 epochs"));
    run(&["infer-latent", "--checkpoint", &p("ckpt"), "--sdf", &p("sdf"), "--dataset", &p("data"), "--out", &p("test.csv")]);
    assert!(fs::read_to_string(p("test.csv")).unwrap().contains("0003"));

    let single = run(&["extract", "--checkpoint", &p("ckpt"), "--id", "0001", "--out", &p("one.stl")]);
    assert!(single.starts_with("0001:"));
    let stl = fs::read(p("one.stl")).unwrap();
    let n = u32::from_le_bytes(stl[80..84].try_into().unwrap()) as usize;
    assert_eq!(stl.len(), 84 + 50 * n);
    run(&["extract", "--checkpoint", &p("ckpt"), "--out", &p("meshes")]);
    let eval = run(&["eval-dist", "--dataset", &p("data"), "--meshes", &p("meshes"), "--out", &p("dist.csv")]);
    assert!(eval.starts_with("3 designs"));

    let pca = run(&["pca", "--latents", &p("ckpt/latents.csv"), "--out", &p("pca")]);
    assert!(pca.contains("PC1"));
    run(&["traverse", "--checkpoint", &p("ckpt"), "--pca", &p("pca"), "--coords", "-1,1", "--out", &p("trav")]);
    assert!(Path::new(&p("trav/traverse_01.obj")).is_file());
    run(&["interp", "--checkpoint", &p("ckpt"), "--from", "0000", "--to", "0002", "--out", &p("interp")]);
    assert!(Path::new(&p("interp/interp_02.obj")).is_file());
    run(&["sample", "--checkpoint", &p("ckpt"), "--n", "2", "--out", &p("samples")]);
    assert!(Path::new(&p("samples/sample_01.obj")).is_file());

    let nrmse = run(&["eval-nrmse", "--truth", &p("ckpt/latents.csv"), "--pred", &p("ckpt/latents.csv")]);
    let report: serde_json::Value = serde_json::from_str(&nrmse).unwrap();
    assert_eq!(report["mean"], 0.0);

    run(&["surrogate-strains", "--dataset", &p("data"), "--out", &p("strains.csv")]);
    let cmap = run(&["train-cmap", "--strains", &p("strains.csv"), "--latents", &p("ckpt/latents.csv"), "--out", &p("cmap")]);
    assert!(cmap.contains("fitted 3 pairs"));
    let first_strain = fs::read_to_string(p("strains.csv")).unwrap().lines().nth(1).unwrap().to_string();
    let eps: Vec<&str> = first_strain.split(',').skip(1).collect();
    let out = forge(&["--config", &cfg, "gen-cond", "--cmap", &p("cmap"), "--checkpoint", &p("ckpt"), "--eps", &eps.join(","), "--out", &p("cond.obj")], &[]);
    // A barely trained decoder may decode to nothing; both outcomes must be reported cleanly.
    match out.status.code() {
        Some(0) => assert!(Path::new(&p("cond.obj")).is_file()),
        Some(3) => assert!(String::from_utf8_lossy(&out.stderr).contains("conditioning left manifold")),
        other => panic!("unexpected exit {other:?}"),
    }
    assert_eq!(forge(&["gen-cond", "--cmap", &p("cmap"), "--checkpoint", &p("ckpt"), "--eps", "1,2", "--out", &p("x.obj")], &[]).status.code(), Some(2));
}
