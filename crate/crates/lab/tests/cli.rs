use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ganmpc::env::{PhysicalParams, Task};
use ganmpc::ganmpc::{Algorithm, TrainState};
use ganmpc_lab::config::ExperimentConfig;
use ganmpc_lab::formats::{read_json, read_trajectories, Checkpoint, CheckpointDoc, Role};
use ganmpc_lab::run::{checkpoint_dir, read_manifest, run_dir, RunStatus, METRICS_HEADER};

const STEPS: usize = 30;

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn small_config(task: Task, out: &Path) -> ExperimentConfig {
    let mut c = ExperimentConfig::defaults(task);
    c.output_dir = out.to_path_buf();
    c.n_demos = 4;
    c.eval_episodes = 3;
    c.env.max_steps = STEPS;
    c.hyper.n_mpc = 2;
    c.hyper.batch_size = 8;
    c.hyper.rollout_len = 4;
    c.mpc.horizon = 4;
    c.mpc.max_ilqr_iters = 3;
    let m = &mut c.models;
    (m.dynamics_layers, m.dynamics_hidden, m.bc_layers, m.bc_hidden) = (3, 16, 3, 16);
    (m.predictor_layers, m.predictor_hidden, m.disc_hidden) = (3, 16, 8);
    (m.cost.layers, m.cost.hidden) = (3, 8);
    (m.aux.epochs, m.aux.batch_size, m.dynamics_batch_size) = (5, 32, 32);
    c
}

fn write_config(cfg: &ExperimentConfig, dir: &Path) -> PathBuf {
    let path = dir.join("experiment.toml");
    std::fs::write(&path, cfg.to_toml()).unwrap();
    path
}

fn ganmpc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ganmpc"))
        .args(args)
        .env_remove("GANMPC_OUT")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn shipped_configs_are_the_defaults() {
    for (file, task) in [("pendulum.toml", Task::PendulumSwingup), ("cartpole.toml", Task::CartpoleBalance)] {
        let path = repo_root().join("configs").join(file);
        let cfg = ExperimentConfig::load_with_out(&path, None).unwrap();
        let mut expected = ExperimentConfig::defaults(task);
        expected.output_dir = cfg.output_dir.clone();
        assert_eq!(cfg, expected, "{file}");
        assert!(cfg.output_dir.ends_with("configs/../out"));
        let elsewhere = ExperimentConfig::load_with_out(&path, Some("/tmp/x".into())).unwrap();
        assert_eq!(elsewhere.output_dir, PathBuf::from("/tmp/x"));
        assert_eq!(elsewhere.hash(), cfg.hash());
    }
}

#[test]
fn relative_paths_resolve_against_the_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = small_config(Task::PendulumSwingup, Path::new("results"));
    cfg.demo_file = Some("data/demos.ndjson".into());
    let path = write_config(&cfg, tmp.path());
    let loaded = ExperimentConfig::load_with_out(&path, None).unwrap();
    assert_eq!(loaded.output_dir, tmp.path().join("results"));
    assert_eq!(loaded.demo_path(), tmp.path().join("data/demos.ndjson"));
}

#[test]
fn demo_collection_is_structural_and_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::defaults(Task::PendulumSwingup);
    cfg.output_dir = tmp.path().join("out");
    let path = write_config(&cfg, tmp.path());
    let o = ganmpc(&["demo-collect", "--config", p(&path)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let demo = cfg.demo_path();
    let first = std::fs::read(&demo).unwrap();
    let (file, _) = read_trajectories(&demo).unwrap();
    assert_eq!(file.records.len(), 50);
    assert_eq!(String::from_utf8_lossy(&first).lines().count(), 51);
    for (i, r) in file.records.iter().enumerate() {
        assert_eq!((r.states.len(), r.actions.len()), (501, 500));
        assert_eq!(r.seed, i as u64);
        let total: f64 = r.rewards.iter().sum();
        assert!((0.0..=500.0).contains(&total));
    }
    assert_eq!(code(&ganmpc(&["demo-collect", "--config", p(&path)])), 0);
    assert_eq!(std::fs::read(&demo).unwrap(), first);
}

#[test]
fn an_underperforming_expert_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = small_config(Task::PendulumSwingup, &tmp.path().join("out"));
    cfg.env.action_bound = 0.05;
    let path = write_config(&cfg, tmp.path());
    let o = ganmpc(&["demo-collect", "--config", p(&path)]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("underperforms"));
    assert!(!cfg.demo_path().exists());
}

#[test]
fn usage_and_inner_errors_have_distinct_exit_codes() {
    assert_eq!(code(&ganmpc(&["train", "--config", "x.toml"])), 1);
    assert_eq!(code(&ganmpc(&["--help"])), 0);
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(Task::CartpoleBalance, &tmp.path().join("out"));
    let path = write_config(&cfg, tmp.path());
    // no demonstrations yet
    let o = ganmpc(&["train", "--config", p(&path), "--algorithm", "bc", "--imitator", "1", "--seed", "0"]);
    assert_eq!(code(&o), 3);
    let o = ganmpc(&["train", "--config", p(&path), "--algorithm", "sac", "--imitator", "1", "--seed", "0"]);
    assert_eq!(code(&o), 3);
    assert_eq!(code(&ganmpc(&["report", "--runs", p(&tmp.path().join("none/*"))])), 3);
}

struct Pipeline {
    out: PathBuf,
    gan: PathBuf,
    bc: PathBuf,
    report: PathBuf,
}

fn pipeline(root: &Path, out_via_env: bool) -> Pipeline {
    let out = root.join("out");
    let cfg = small_config(Task::CartpoleBalance, Path::new("ignored"));
    let path = write_config(&cfg, root);
    let run = |args: &[&str]| {
        let mut c = Command::new(env!("CARGO_BIN_EXE_ganmpc"));
        c.args(args);
        if out_via_env {
            c.env("GANMPC_OUT", &out);
        } else {
            c.env_remove("GANMPC_OUT");
        }
        let o = c.output().unwrap();
        assert_eq!(code(&o), 0, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        o
    };
    let mut cfg = cfg;
    cfg.output_dir = if out_via_env { out.clone() } else { root.join("ignored") };
    run(&["demo-collect", "--config", p(&path)]);
    let gan = PathBuf::from(stdout(&run(&["train", "--config", p(&path), "--algorithm", "gan_mpc", "--imitator", "2", "--seed", "1"])).trim());
    let bc = PathBuf::from(stdout(&run(&["train", "--config", p(&path), "--algorithm", "bc", "--imitator", "2,1,1", "--seed", "1"])).trim());
    assert_eq!(gan, run_dir(&cfg, Algorithm::GanMpc, &PhysicalParams::pole_mass(2.0).unwrap(), 1));
    run(&["eval", "--run", p(&gan)]);
    run(&["eval", "--run", p(&bc)]);
    let report = root.join("report");
    run(&["report", "--runs", &format!("{}/runs/*", cfg.output_dir.display()), "--out", p(&report), "--check"]);
    Pipeline {
        out: cfg.output_dir,
        gan,
        bc,
        report,
    }
}

#[test]
fn end_to_end_runs_are_complete_and_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let x = pipeline(a.path(), true);
    let y = pipeline(b.path(), false);
    assert!(x.out.starts_with(a.path().join("out")));

    let m = read_manifest(&x.gan).unwrap();
    assert_eq!(m.status, RunStatus::Completed);
    assert_eq!((m.iterations, m.interaction_steps, m.expected_interaction_steps), (2, 2 * STEPS as u64, 2 * STEPS as u64));
    assert_eq!(m.demo_hash.len(), 40);
    let m_bc = read_manifest(&x.bc).unwrap();
    assert_eq!((m_bc.iterations, m_bc.interaction_steps, m_bc.expected_interaction_steps), (0, 0, 0));
    assert_eq!(m.eval_seeds, m_bc.eval_seeds);
    assert!(m.training_seeds.first > m.demo_seeds.first + m.demo_seeds.count);
    assert!(m.eval_seeds.first > m.training_seeds.first + m.training_seeds.count);

    let csv = std::fs::read_to_string(x.gan.join("metrics.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], METRICS_HEADER);
    assert_eq!(lines.len(), 3);
    assert!(lines[2].starts_with("2,") && lines[2].ends_with(&format!(",{},0", 2 * STEPS)));
    assert_eq!(std::fs::read_to_string(x.bc.join("metrics.csv")).unwrap(), format!("{METRICS_HEADER}\n"));
    for it in 0..=2 {
        assert!(checkpoint_dir(&x.gan, it).join("discriminator.json").is_file());
    }
    assert!(!checkpoint_dir(&x.bc, 0).join("discriminator.json").exists());

    for (u, v) in [(&x.gan, &y.gan), (&x.bc, &y.bc)] {
        for f in ["metrics.csv", "eval.json", "manifest.json"] {
            let (l, r) = (std::fs::read(u.join(f)).unwrap(), std::fs::read(v.join(f)).unwrap());
            if f == "manifest.json" {
                // only the absolute demo path differs
                let strip = |b: &[u8]| {
                    let mut m: serde_json::Value = serde_json::from_slice(b).unwrap();
                    m["demo_file"] = serde_json::Value::Null;
                    m
                };
                assert_eq!(strip(&l), strip(&r));
            } else {
                assert_eq!(l, r, "{f} differs between repeats");
            }
        }
    }
    for f in ["report.csv", "report.txt", "bars-cartpole_balance.csv"] {
        assert_eq!(std::fs::read(x.report.join(f)).unwrap(), std::fs::read(y.report.join(f)).unwrap(), "{f}");
    }
    let table = std::fs::read_to_string(x.report.join("report.csv")).unwrap();
    assert_eq!(table.lines().count(), 3);
    assert!(table.lines().nth(1).unwrap().starts_with("cartpole_balance,p2c1d1,2,1,1,gan_mpc,1,3,"));
}

#[test]
fn checkpoints_restore_the_trained_models_bit_for_bit() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(Task::CartpoleBalance, &tmp.path().join("out"));
    ganmpc_lab::demos::collect_demos(&cfg).unwrap();
    let imitator = PhysicalParams::new(3.0, 1.0, 1.0).unwrap();
    let dir = ganmpc_lab::run::run_training(&cfg, Algorithm::GanMpc, imitator, 0).unwrap();
    let state: TrainState = read_json(&dir.join("state.json")).unwrap();
    let m = read_manifest(&dir).unwrap();
    let ckpt = Checkpoint::load(&checkpoint_dir(&dir, 2), Task::CartpoleBalance, &cfg.models, &m.env_spec_hash).unwrap();
    let live = Checkpoint::from_state(&state);
    let json = |c: &Checkpoint| c.docs(&m.env_spec_hash).unwrap();
    assert_eq!(json(&ckpt), json(&live));
    assert_eq!(ckpt.cost_deployed.gen_params(), state.cost_deployed.gen_params());
    let s = [0.05, 0.99, 0.1, -0.2, 0.3];
    assert_eq!(ckpt.dynamics.predict(&s, &[1.5]).unwrap(), state.dynamics.predict(&s, &[1.5]).unwrap());

    let doc: CheckpointDoc = read_json(&checkpoint_dir(&dir, 2).join(Role::Dynamics.file_name())).unwrap();
    assert_eq!(doc.role, Role::Dynamics);
    assert_eq!(doc.normalizer.as_ref().unwrap().output_scale.len(), 5);
    assert!(Checkpoint::load(&checkpoint_dir(&dir, 2), Task::CartpoleBalance, &cfg.models, "other").is_err());

    // a second run reuses the cached initialization and must match a fresh one
    let again = ganmpc_lab::run::run_training(&cfg, Algorithm::GanMpc, imitator, 0).unwrap();
    let state2: TrainState = read_json(&again.join("state.json")).unwrap();
    assert_eq!(serde_json::to_string(&state).unwrap(), serde_json::to_string(&state2).unwrap());
}

#[test]
fn evaluation_rejects_tampered_checkpoints_and_dumps_traces() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(Task::CartpoleBalance, &tmp.path().join("out"));
    ganmpc_lab::demos::collect_demos(&cfg).unwrap();
    let dir = ganmpc_lab::run::run_training(&cfg, Algorithm::L2MpcS, PhysicalParams::DEMONSTRATOR, 3).unwrap();
    let trace = tmp.path().join("trace.json");
    let o = ganmpc(&["eval", "--run", p(&dir), "--dump-ilqr-trace", p(&trace), "--trace-steps", "3"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let t: serde_json::Value = read_json(&trace).unwrap();
    assert_eq!(t["format"], "ganmpc-ilqr-trace");
    let steps = t["steps"].as_array().unwrap();
    assert_eq!(steps.len(), 3);
    assert!(steps[0]["solution"]["cost_trace"].as_array().unwrap().len() >= 1);
    assert_eq!(steps[0]["solution"]["actions"].as_array().unwrap().len(), cfg.mpc.horizon - 1);

    let path = checkpoint_dir(&dir, 2).join(Role::CostDeployed.file_name());
    let mut doc: CheckpointDoc = read_json(&path).unwrap();
    doc.env_spec_hash = "0".repeat(64);
    std::fs::write(&path, serde_json::to_vec(&doc).unwrap()).unwrap();
    let o = ganmpc(&["eval", "--run", p(&dir)]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("trained for environment"));
}

#[test]
fn report_flags_missing_evaluations() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(Task::CartpoleBalance, &tmp.path().join("out"));
    ganmpc_lab::demos::collect_demos(&cfg).unwrap();
    ganmpc_lab::run::run_training(&cfg, Algorithm::Bc, PhysicalParams::DEMONSTRATOR, 0).unwrap();
    let out = tmp.path().join("rep");
    let o = ganmpc(&["report", "--runs", &format!("{}/runs/*", cfg.output_dir.display()), "--out", p(&out)]);
    assert_eq!(code(&o), 2);
    assert!(std::fs::read_to_string(out.join("report.csv")).unwrap().contains(",absent"));
}
