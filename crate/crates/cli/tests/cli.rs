use std::path::Path;
use std::process::{Command, Output};

fn mb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mergebench"))
        .args(args)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

fn ok(args: &[&str]) -> String {
    let o = mb(args);
    assert_eq!(code(&o), 0, "{args:?}\n{}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn help_lists_subcommands() {
    let out = ok(&["--help"]);
    for sub in ["gen", "fit-gmm", "train", "run", "report"] {
        assert!(out.contains(sub), "{sub}");
    }
}

#[test]
fn gen_then_fit_gmm() {
    let dir = tempfile::tempdir().unwrap();
    let scenes = dir.path().join("scenes");
    ok(&["gen", "--count", "30", "--seed", "3", "--out", p(&scenes)]);
    let files: Vec<_> = std::fs::read_dir(&scenes).unwrap().collect();
    assert_eq!(files.len(), 90);
    for f in ["highly_0000.json", "medium_0029.json", "lower_0010.json"] {
        assert!(scenes.join(f).exists(), "{f}");
    }

    let model = dir.path().join("gmm.json");
    let out = ok(&["fit-gmm", "--input", p(&scenes), "--out", p(&model)]);
    assert!(out.contains("fitted 3 components"));
    let m = json(&model);
    assert_eq!(m["k"], 3);
    assert_eq!(m["means"].as_array().unwrap().len(), 3);

    // a run can replay the generated files
    let run = dir.path().join("run");
    ok(&["run", "--scenarios", p(&scenes), "--episodes", "4", "--no-logs", "--out", p(&run)]);
    assert_eq!(json(&run.join("report.json"))["n_episodes"], 4);
}

#[test]
fn train_smoke_and_neural_env() {
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path().join("w.b4mw");
    let out = ok(&[
        "train", "--scenes", "2", "--samples", "8", "--steps", "200", "--epochs", "1000", "--batch", "8", "--lr", "5e-3",
        "--d-model", "16", "--layers", "1", "--heads", "2", "--out", p(&w),
    ]);
    assert!(out.contains("for 200 steps"), "{out}");
    let curve: Vec<f64> = serde_json::from_value(json(&w.with_extension("curve.json"))).unwrap();
    assert_eq!(curve.len(), 200);
    assert!(curve[curve.len() - 1] < 0.5 * curve[0], "{} -> {}", curve[0], curve[curve.len() - 1]);

    let run = dir.path().join("run");
    ok(&[
        "run", "--env-policy", "neural", "--weights", p(&w), "--episodes", "2", "--timeout-ticks", "40", "--no-logs",
        "--out", p(&run),
    ]);
    assert_eq!(json(&run.join("report.json"))["n_episodes"], 2);
}

#[test]
fn run_is_deterministic_and_tabulated() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        ok(&["run", "--episodes", "6", "--seed", "9", "--workers", "2", "--out", p(d)]);
    }
    for f in ["report.json", "episodes.json", "episodes.csv", "table.md", "logs/episode_0003.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let table = std::fs::read_to_string(a.join("table.md")).unwrap();
    for row in ["| Highly Dense | 2 |", "| Medium Dense | 2 |", "| Lower Dense | 2 |", "| All | 6 |"] {
        assert!(table.contains(row), "{row}\n{table}");
    }
}

#[test]
fn report_merges_planners() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, out) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("merged"));
    ok(&["run", "--episodes", "3", "--no-logs", "--out", p(&a)]);
    ok(&["run", "--episodes", "3", "--planner", "scripted", "--timeout-ticks", "50", "--no-logs", "--out", p(&b)]);
    let input = format!("{},{}", p(&a), p(&b));
    let text = ok(&["report", "--input", &input, "--out", p(&out)]);
    let rows: Vec<&str> = text.lines().skip(2).collect();
    assert_eq!(rows.len(), 2, "{text}");
    assert_eq!(std::fs::read_to_string(out.join("planners.md")).unwrap(), text);
    let merged = json(&out.join("planners.json"));
    let total: u64 = merged.as_array().unwrap().iter().map(|r| r[1]["n_episodes"].as_u64().unwrap()).sum();
    assert_eq!(total, 6);
}

#[test]
fn report_rejects_empty_input() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("episodes.json");
    std::fs::write(&f, "[]").unwrap();
    assert_eq!(code(&mb(&["report", "--input", p(&f)])), 2);
    assert_eq!(code(&mb(&["report", "--input", p(&dir.path().join("missing"))])), 2);
}

#[test]
fn config_file_supplies_flags() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("run.conf");
    std::fs::write(&conf, "# smoke\nepisodes = 2\ndensity = lower\nno-logs = true\nseed = 4\n").unwrap();
    let out = dir.path().join("out");
    ok(&["run", "--config", p(&conf), "--out", p(&out)]);
    let r = json(&out.join("report.json"));
    assert_eq!(r["n_episodes"], 2);
    assert!(!out.join("logs").exists());
    // explicit flags win
    let out2 = dir.path().join("out2");
    ok(&["run", "--config", p(&conf), "--episodes", "3", "--out", p(&out2)]);
    assert_eq!(json(&out2.join("report.json"))["n_episodes"], 3);

    std::fs::write(&conf, "episodes 2\n").unwrap();
    assert_eq!(code(&mb(&["run", "--config", p(&conf), "--out", p(&out)])), 2);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = p(dir.path());
    assert_eq!(code(&mb(&["run", "--episodes", "0", "--out", out])), 2);
    assert_eq!(code(&mb(&["run", "--bogus", "--out", out])), 2);
    assert_eq!(code(&mb(&["run", "--env-policy", "neural", "--out", out])), 2);
    assert_eq!(code(&mb(&["run", "--weights-missing"])), 2);
    let llm = ["--llm-url", "http://127.0.0.1:9/v1", "--llm-timeout", "0.5", "--llm-retries", "0", "--no-logs"];
    let mut args = vec!["run", "--episodes", "1", "--evaluator", "llm", "--out", out];
    args.extend(llm);
    assert_eq!(code(&mb(&args)), 4);
    args[4] = "llm-rubric";
    assert_eq!(code(&mb(&args)), 0);
    let mut args = vec!["run", "--episodes", "1", "--evaluator", "llm", "--token-env", "MB_UNSET_TOKEN_VAR", "--out", out];
    args.extend(llm);
    assert_eq!(code(&mb(&args)), 2);
}
