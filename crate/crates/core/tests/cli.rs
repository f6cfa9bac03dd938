use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_dmc-prune");

fn run(args: &[&str], threads: usize) -> Output {
    Command::new(BIN)
        .args(args)
        .env("DMC_PRUNE_THREADS", threads.to_string())
        .output()
        .expect("binary runs")
}

fn stdout(args: &[&str]) -> String {
    let out = run(args, 1);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn write_bsc(dir: &Path) -> String {
    let p = dir.join("bsc01.json");
    std::fs::write(&p, r#"{"num_inputs": 2, "num_outputs": 2, "rows": [[0.9, 0.1], [0.1, 0.9]]}"#).unwrap();
    p.to_str().unwrap().to_string()
}

fn write_gen(dir: &Path) -> String {
    let p = dir.join("ch.json");
    let p = p.to_str().unwrap().to_string();
    stdout(&["gen", "--nx", "10", "--ny", "8", "--k0", "3", "--seed", "4", "--out", &p]);
    p
}

#[test]
fn bsc_capacity_in_bits_and_nats() {
    let dir = tempfile::tempdir().unwrap();
    let ch = write_bsc(dir.path());
    assert!(stdout(&["capacity", &ch]).starts_with("capacity: 0.531004 bits\n"));
    assert!(stdout(&["capacity", &ch, "--bits"]).starts_with("capacity: 0.531004 bits\n"));
    assert!(stdout(&["capacity", &ch, "--nats"]).starts_with("capacity: 0.368064 nats\n"));
    let js: serde_json::Value = serde_json::from_str(&stdout(&["--json", "capacity", &ch])).unwrap();
    assert!((js["capacity"].as_f64().unwrap() - 0.531_004_406_410_718_5).abs() < 1e-6);
}

#[test]
fn check_submodularity_passes() {
    let out = stdout(&["check-submodularity"]);
    assert!(out.contains("margin: "));
    assert!(out.trim_end().ends_with("PASS"));
}

#[test]
fn select_all_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("ch.json");
    let p = p.to_str().unwrap();
    stdout(&["gen", "--nx", "30", "--ny", "30", "--seed", "1", "--out", p]);
    let out = stdout(&["select", p, "--k", "30"]);
    let all: Vec<String> = (0..30).map(|i| i.to_string()).collect();
    assert!(out.contains(&format!("subset: {}\n", all.join(","))));
}

#[test]
fn gen_echoes_config() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_gen(dir.path());
    let js: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&p).unwrap()).unwrap();
    assert_eq!(js["num_inputs"], 10);
    assert_eq!(js["generator"]["num_prototypes"], 3);
    assert_eq!(js["generator"]["seed"], 4);
    assert_eq!(stdout(&["gen", "--nx", "10", "--ny", "8", "--k0", "3", "--seed", "4"]), std::fs::read_to_string(&p).unwrap());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let ch = write_gen(dir.path());
    let code = |args: &[&str]| run(args, 1).status.code().unwrap();
    assert_eq!(code(&["select", &ch, "--k", "3"]), 0);
    assert_eq!(code(&["select", &ch, "--k", "11"]), 1);
    assert_eq!(code(&["capacity", "/nonexistent/channel.json"]), 1);
    assert_eq!(code(&["hull", &ch, "--subset", "0,1", "--x", "10"]), 1);
    assert_eq!(code(&["gen", "--nx", "3", "--k0", "3"]), 1);
    assert_eq!(code(&["select", &ch]), 2);
    assert_eq!(code(&["select", &ch, "--k", "3", "--method", "kmeans"]), 2);
    assert_eq!(code(&["bound", &ch, "--subset", "0,x"]), 2);
    assert_eq!(code(&["frobnicate"]), 2);
    let bad = Command::new(BIN)
        .args(["check-submodularity"])
        .env("DMC_PRUNE_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn bound_and_hull_report() {
    let dir = tempfile::tempdir().unwrap();
    let ch = write_gen(dir.path());
    let out = stdout(&["bound", &ch, "--subset", "0,1,2"]);
    assert!(out.contains("pruned capacity: "));
    assert!(out.contains("bound: "));
    let js: serde_json::Value = serde_json::from_str(&stdout(&["--json", "hull", &ch, "--subset", "0,1,2", "--x", "3"])).unwrap();
    assert!(js["distance_chi2"].as_f64().unwrap() >= 0.0);
    assert_eq!(js["weights"].as_array().unwrap().len(), 3);
}

fn all_commands(dir: &Path, threads: usize) -> Vec<Vec<u8>> {
    let ch = write_gen(dir);
    let bsc = write_bsc(dir);
    let cfg = dir.join("sweep.json");
    std::fs::write(
        &cfg,
        r#"{"generator": {"num_inputs": 8, "num_outputs": 6, "num_prototypes": 3, "seed": 9},
            "k_values": [2, 3, 4], "num_channels": 4,
            "methods": ["CLUSTERING", "EXHAUSTIVE", "GREEDY", "RANDOM"]}"#,
    )
    .unwrap();
    let sweep_dir = dir.join(format!("sweep{threads}"));
    let commands: Vec<Vec<&str>> = vec![
        vec!["capacity", &bsc],
        vec!["capacity", &ch, "--nats"],
        vec!["--json", "capacity", &ch],
        vec!["pseudo", &ch, "--eta", "0.05"],
        vec!["select", &ch, "--k", "4", "--bound"],
        vec!["select", &ch, "--k", "3", "--method", "exhaustive", "--bound", "--mode", "exact"],
        vec!["select", &ch, "--k", "3", "--method", "greedy"],
        vec!["select", &ch, "--k", "3", "--method", "random", "--seed", "5"],
        vec!["--json", "bound", &ch, "--subset", "0,1,2"],
        vec!["hull", &ch, "--subset", "0,1,2", "--x", "5"],
        vec!["prune", &ch],
        vec!["gen", "--nx", "6", "--ny", "4", "--k0", "2", "--seed", "2"],
        vec!["check-submodularity"],
        vec!["sweep", "--config", cfg.to_str().unwrap(), "--out", sweep_dir.to_str().unwrap()],
    ];
    let mut outputs = Vec::new();
    for args in commands {
        let out = run(&args, threads);
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        let text = String::from_utf8(out.stdout).unwrap();
        outputs.push(text.replace(&format!("sweep{threads}"), "sweep").into_bytes());
    }
    outputs.push(std::fs::read(sweep_dir.join("results.csv")).unwrap());
    outputs.push(std::fs::read(sweep_dir.join("summary.csv")).unwrap());
    outputs
}

#[test]
fn outputs_are_identical_across_runs_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    let one = all_commands(dir.path(), 1);
    assert_eq!(one, all_commands(dir.path(), 1));
    assert_eq!(one, all_commands(dir.path(), 8));
}
