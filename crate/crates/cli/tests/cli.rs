use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_qnd-sim"));
    c.env("QND_SIM_THREADS", "2");
    c
}

fn run(args: &[&str], dir: &Path) -> Output {
    bin().args(args).current_dir(dir).output().expect("binary runs")
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("run.cfg");
    std::fs::write(&p, body).unwrap();
    p
}

#[test]
fn dump_manifold_lists_levels() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["dump-manifold", "--ion", "ba137"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let doc: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let levels = doc["levels"].as_array().unwrap();
    assert_eq!(levels.len(), 8);
    for l in levels {
        for key in ["F", "mF", "energy_rad_s", "b"] {
            assert!(l[key].is_number(), "{l}");
        }
    }
    assert_eq!(levels[0]["F"], 2.0);
    assert_eq!(levels[0]["mF"], -2.0);
    assert!(doc["ion"].is_object());
}

#[test]
fn unknown_preset_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["dump-manifold", "--ion", "ca40"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn plan_output_simulates_unmodified() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["plan", "--ion", "ba137", "-o", "plan.json"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let cfg = write_config(
        dir.path(),
        r#"
[run]
protocol = "plan.json"
output = "out/plan.csv"
trials = 20
backend = "closed_form"

[ion]
preset = "ba137"

[sweep]
axis = "shelving_ratio"
values = [1.0]
"#,
    );
    let o = run(&["simulate", cfg.to_str().unwrap()], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("out/plan.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("sweep_value,vote_order,mean_error,std_error,aborts,trials,verify")
    );
    assert_eq!(lines.next(), Some("1.0,1,0.0,0.0,0,20,false"));
    assert!(!csv.contains('\r'));
    assert!(dir.path().join("out/plan.json").exists());
}

#[test]
fn yb_plan_has_depth_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["plan", "--ion", "yb171"], dir.path());
    assert!(o.status.success());
    let tree: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    fn depth(v: &serde_json::Value) -> usize {
        if v.get("leaf").is_some() {
            0
        } else {
            1 + depth(&v["child0"]).max(depth(&v["child1"]))
        }
    }
    assert_eq!(depth(&tree), 2);
}

#[test]
fn flat_grid_is_unsplittable() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["plan", "--ion", "yb171", "--dtheta", "0", "--phi", "0"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unsplittable"), "{}", stderr(&o));
}

#[test]
fn empty_sweep_is_line_numbered_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[run]\nprotocol = \"yb171_init\"\n\n[sweep]\naxis = \"zeeman_shift\"\nvalues = []\n",
    );
    let o = run(&["simulate", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("run.cfg:6:"), "{}", stderr(&o));
}

#[test]
fn unknown_key_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[run]\nprotocol = \"yb171_init\"\n\n[sweep]\naxis = \"zeeman_shift\"\nvalues = [1.0]\nsteps = 3\n",
    );
    let o = run(&["simulate", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("run.cfg:7:"), "{}", stderr(&o));
}

#[test]
fn abort_threshold_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"
[run]
protocol = "yb171_init"
trials = 50
backend = "closed_form"
shelving_retries = 1
max_abort_fraction = 0.1

[sweep]
axis = "shelving_ratio"
values = [0.0]
verify = [true]
"#,
    );
    let o = run(&["simulate", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(dir.path().join("run.csv").exists());
}

#[test]
fn figure_configs_parse_and_run() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["fig3a.cfg", "fig3b.cfg", "fig4.cfg"] {
        let out = dir.path().join(name).with_extension("csv");
        let o = run(
            &[
                "simulate",
                configs().join(name).to_str().unwrap(),
                "--trials",
                "4",
                "-o",
                out.to_str().unwrap(),
            ],
            dir.path(),
        );
        assert!(o.status.success(), "{name}: {}", stderr(&o));
        let csv = std::fs::read_to_string(&out).unwrap();
        assert!(csv.lines().count() > 1);
    }
}

#[test]
fn simulate_is_byte_reproducible_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("fig4.cfg");
    let mut outputs = Vec::new();
    for threads in ["1", "3"] {
        let out = dir.path().join(format!("t{threads}.csv"));
        let o = bin()
            .env("QND_SIM_THREADS", threads)
            .args(["simulate", cfg.to_str().unwrap(), "--trials", "300", "-o", out.to_str().unwrap()])
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", stderr(&o));
        outputs.push(std::fs::read(&out).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn validate_passes_and_detects_misconfiguration() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["validate"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let text = String::from_utf8_lossy(&o.stdout).into_owned();
    assert!(text.lines().all(|l| l.starts_with("[PASS]")), "{text}");

    let o = run(&["validate", "--fock-cutoff", "1"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let text = String::from_utf8_lossy(&o.stdout).into_owned();
    assert!(text.contains("[FAIL] closed_form_vs_integrated_gate"), "{text}");

    let o = run(&["validate", "--detuning-scale", "1.01"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let text = String::from_utf8_lossy(&o.stdout).into_owned();
    assert!(text.contains("[FAIL] gate_closure_consistency"), "{text}");
}

#[test]
fn bad_thread_env_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin()
        .env("QND_SIM_THREADS", "many")
        .args(["simulate", configs().join("fig4.cfg").to_str().unwrap()])
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}
