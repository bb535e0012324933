use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use mdlm_core::rl::BaselineMode;
use mdlm_lab::{compare_report, AblationAxis, Lab, ReportError, RunConfig};

fn tiny() -> RunConfig {
    let mut cfg = RunConfig::default().with_gen_len(32);
    cfg.model.d_model = 16;
    cfg.model.d_ff = 32;
    cfg.model.n_heads = 2;
    cfg.model.max_len = 56;
    cfg.data.corpus_size = 100;
    cfg.data.eval_size = 12;
    cfg.data.rl_questions = 20;
    cfg.pretrain.steps = 12;
    cfg.pretrain.batch_size = 4;
    cfg.sft.steps = 4;
    cfg.sft.batch_size = 4;
    cfg.rl.outer_steps = 4;
    cfg.rl.batch_size = 2;
    cfg.rl.grad_accum = 1;
    cfg.rl.grpo_iters = 2;
    cfg.rl.group_size = 3;
    cfg.heatmap.rollouts = 6;
    cfg.checkpoint_every = 4;
    cfg.task.countdown = 1.0;
    cfg.task.sudoku = 0.0;
    cfg
}

fn bytes(dir: &Path, name: &str) -> Vec<u8> {
    fs::read(dir.join(name)).unwrap_or_else(|e| panic!("{}: {e}", dir.join(name).display()))
}

#[test]
fn resumed_run_matches_uninterrupted() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let mut cfg = tiny();
    cfg.rl.outer_steps = 5;
    cfg.checkpoint_every = 2;

    let full = Lab::new(cfg.clone(), &a).unwrap();
    full.pretrain().unwrap();
    full.rl().unwrap();

    // Interrupt mid-interval so the resume discards a logged step.
    let err = Lab::new(cfg.clone(), &b).unwrap().with_step_limit(7).pretrain().unwrap_err();
    assert!(format!("{err:#}").contains("stopped"), "{err:#}");
    let log: Vec<String> = fs::read_to_string(b.join("pretrain_log.jsonl")).unwrap().lines().map(String::from).collect();
    assert_eq!(log.len(), 8);
    let resumed = Lab::new(cfg.clone(), &b).unwrap();
    let s = resumed.pretrain().unwrap();
    assert_eq!(s.ran, 6);
    let err = Lab::new(cfg.clone(), &b).unwrap().with_step_limit(3).rl().unwrap_err();
    assert!(format!("{err:#}").contains("stopped"));
    let r = Lab::new(cfg, &b).unwrap().rl().unwrap();
    assert_eq!(r.ran, 3);

    for f in ["pretrain.ckpt", "pretrain_log.jsonl", "rl.ckpt", "rl_ref.ckpt", "rl_log.jsonl", "rl_summary.json"] {
        assert!(bytes(&a, f) == bytes(&b, f), "{f} differs after resume");
    }
}

#[test]
fn run_logs_embed_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny();
    let lab = Lab::new(cfg.clone(), tmp.path()).unwrap();
    lab.pretrain().unwrap();
    let text = fs::read_to_string(tmp.path().join("pretrain_log.jsonl")).unwrap();
    let header: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(header["config_hash"], cfg.hash());
    assert_eq!(header["config"]["seed"], 0);
    assert_eq!(text.lines().count(), 1 + cfg.pretrain.steps);
    let back = RunConfig::load(&tmp.path().join("config.toml")).unwrap();
    assert_eq!(back, cfg);
}

#[test]
fn untrained_eval_near_floor() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = tiny();
    cfg.pretrain.steps = 0;
    cfg.data.eval_size = 40;
    let lab = Lab::new(cfg, tmp.path()).unwrap();
    lab.pretrain().unwrap();
    let report = lab.eval().unwrap();
    assert!(report.overall.accuracy < 0.05);
    assert!(report.per_task.contains_key("countdown"));
    // ASS at L = 32 spends 5 forward passes per question.
    assert_eq!(report.forward_passes_per_question, 5.0);
    assert!(tmp.path().join("eval.json").exists());
}

#[test]
fn heatmap_and_ablation_shapes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny();
    let lab = Lab::new(cfg.clone(), tmp.path()).unwrap();
    lab.pretrain().unwrap();
    let variants = lab.heatmap().unwrap();
    assert_eq!(variants.len(), 2);
    let s = cfg.heatmap.decode.steps;
    for name in ["plain", "eoser"] {
        let csv = fs::read_to_string(tmp.path().join(format!("heatmap_{name}.csv"))).unwrap();
        assert_eq!(csv.lines().count(), s * 32 + 1);
        assert_eq!(csv.lines().next().unwrap(), "step,position,eos_freq,mean_conf");
    }
    let table = lab.ablate().unwrap();
    assert_eq!(table.columns, ["S=1", "S=2", "S=4", "S=8", "S=16"]);
    let rows: Vec<&str> = table.rows.iter().map(|r| r.0.as_str()).collect();
    assert_eq!(rows, ["semi_ar", "full_diffusion", "full_diffusion+eoser"]);
    // Two semi-AR blocks cannot share one step.
    assert_eq!(table.get("semi_ar", "S=1"), Some("-"));
    let csv = fs::read_to_string(tmp.path().join("ablate.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn ablation_cap_enforced() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = tiny();
    cfg.ablate.cap = 4;
    let err = Lab::new(cfg, tmp.path()).unwrap().ablate().unwrap_err();
    assert!(format!("{err:#}").contains("ablate.cap"));
}

#[test]
fn baseline_ablation_runs_each_mode() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = tiny();
    cfg.rl.outer_steps = 2;
    cfg.ablate.axis = AblationAxis::Baseline {
        values: vec![BaselineMode::Cj, BaselineMode::IcjOneStep],
    };
    let lab = Lab::new(cfg, tmp.path()).unwrap();
    lab.pretrain().unwrap();
    let table = lab.ablate().unwrap();
    assert_eq!(table.rows.len(), 2);
    assert!(tmp.path().join("ablate/cj/rl_log.jsonl").exists());
    assert!(tmp.path().join("ablate/icj_one_step/rl_log.jsonl").exists());
}

fn rl_run(root: &Path, pre: &Path, name: &str, seed: u64, mode: BaselineMode) -> PathBuf {
    let mut cfg = tiny();
    cfg.seed = seed;
    cfg.rl.baseline = mode;
    cfg.rl.outer_steps = 2;
    cfg.init_checkpoint = Some(pre.to_path_buf());
    let dir = root.join(name);
    Lab::new(cfg, &dir).unwrap().rl().unwrap();
    dir
}

#[test]
fn compare_report_tallies_seeds() {
    let tmp = tempfile::tempdir().unwrap();
    let base = tmp.path().join("base");
    Lab::new(tiny(), &base).unwrap().pretrain().unwrap();
    let pre = base.join("pretrain.ckpt");
    let mut dirs = Vec::new();
    for seed in 0..3 {
        dirs.push(rl_run(tmp.path(), &pre, &format!("cj{seed}"), seed, BaselineMode::Cj));
        dirs.push(rl_run(tmp.path(), &pre, &format!("o{seed}"), seed, BaselineMode::IcjOneStep));
    }

    let two = compare_report(&dirs[..2]).unwrap();
    assert_eq!(two.table().rows.len(), 2);
    assert!(two.to_markdown().contains("final_reward"));

    let same = compare_report(&[dirs[0].clone(), dirs[0].clone()]).unwrap();
    let t = same.table();
    assert_eq!(t.rows[0].1, t.rows[1].1);

    let r = compare_report(&dirs).unwrap();
    assert_eq!(r.tallies.len(), 1);
    let tally = &r.tallies[0];
    assert_eq!((tally.a.as_str(), tally.b.as_str()), ("cj", "icj_one_step"));
    assert_eq!(tally.wins + tally.losses + tally.ties, 3);
    let mut expect = (0, 0, 0);
    for pair in r.runs.chunks(2) {
        match pair[0].final_reward.total_cmp(&pair[1].final_reward) {
            std::cmp::Ordering::Greater => expect.0 += 1,
            std::cmp::Ordering::Less => expect.1 += 1,
            std::cmp::Ordering::Equal => expect.2 += 1,
        }
    }
    assert_eq!((tally.wins, tally.losses, tally.ties), expect);
    assert!(r.unshared_seeds.is_empty());

    dirs.push(rl_run(tmp.path(), &pre, "cj9", 9, BaselineMode::Cj));
    let r = compare_report(&dirs).unwrap();
    assert_eq!(r.unshared_seeds, [9]);
    assert!(r.to_markdown().contains("seeds not shared"));
}

#[test]
fn compare_report_rejects_mismatched_tasks() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let mut cfg = tiny();
    cfg.pretrain.steps = 0;
    let lab = Lab::new(cfg.clone(), &a).unwrap();
    lab.pretrain().unwrap();
    lab.eval().unwrap();
    cfg.task.countdown = 0.5;
    cfg.task.sudoku = 0.5;
    let lab = Lab::new(cfg, &b).unwrap();
    lab.pretrain().unwrap();
    lab.eval().unwrap();
    assert!(matches!(compare_report(&[a.clone(), b]), Err(ReportError::TaskMismatch { .. })));
    assert!(matches!(compare_report(&[a]), Err(ReportError::TooFewRuns(1))));
}

fn mdlmlab(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_mdlmlab"))
        .args(args)
        .env_remove("MDLMLAB_SEED")
        .env("RUST_BACKTRACE", "0")
        .output()
        .unwrap()
}

#[test]
fn cli_rejects_invalid_field() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    let o = mdlmlab(&["rl", "--out", out, "--set", "rl.group_size=1"]);
    assert!(!o.status.success());
    let stderr = String::from_utf8_lossy(&o.stderr);
    assert!(stderr.contains("invalid field `rl`"), "{stderr}");
    let o = mdlmlab(&["eval", "--out", out, "--set", "decode.steps=5"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("invalid field `decode`"));
}

#[test]
fn cli_flags_and_env_override_file() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("run.toml");
    fs::write(&path, tiny().to_toml()).unwrap();
    let p = path.to_str().unwrap();
    let o = mdlmlab(&["config", "--config", p, "--seed", "42", "--set", "rl.outer_steps=7"]);
    assert!(o.status.success());
    let cfg = RunConfig::from_toml(&String::from_utf8(o.stdout).unwrap()).unwrap();
    assert_eq!((cfg.seed, cfg.rl.outer_steps, cfg.model.d_model), (42, 7, 16));

    let o = Command::new(env!("CARGO_BIN_EXE_mdlmlab"))
        .args(["config", "--config", p])
        .env("MDLMLAB_SEED", "5")
        .output()
        .unwrap();
    let cfg = RunConfig::from_toml(&String::from_utf8(o.stdout).unwrap()).unwrap();
    assert_eq!(cfg.seed, 5);
}
