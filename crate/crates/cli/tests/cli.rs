use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const DATA: &str = "45 8 22 91 15 82 53 7 44 99\n";

fn qtopk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qtopk"))
        .args(args)
        .output()
        .expect("spawn qtopk")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn noisy_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/noisy.toml")
}

fn config_text(graph: &str, noise: &str) -> String {
    format!(
        r#"
[graph]
{graph}

[data]
values = [45, 8, 22, 91, 15, 82, 53, 7, 44, 99]

[target]
k = 1

[schedule]
alpha0 = 80.0
beta0 = "auto"
tau1 = 1.0
tau2 = 0.505

[noise]
{noise}

[run]
iterations = 500
replications = 4
seed = 3
"#
    )
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn run_short(config: &str, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "run",
        "--config",
        config,
        "--output",
        out.to_str().unwrap(),
        "--iterations",
        "2000",
        "--replications",
        "8",
    ];
    args.extend_from_slice(extra);
    qtopk(&args)
}

#[test]
fn quantile_k3() {
    let dir = tempfile::tempdir().unwrap();
    let data = write(dir.path(), "data.txt", DATA);
    let o = qtopk(&["quantile", "--data", &data, "--k", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("theta_p = 82\n"), "{text}");
    assert!(text.contains("p_interval = (0.7, 0.8)\n"), "{text}");
    assert!(text.contains("topk_agents = [4, 6, 10]\n"), "{text}");
}

#[test]
fn quantile_rejects_integer_np() {
    let dir = tempfile::tempdir().unwrap();
    let data = write(dir.path(), "data.txt", DATA);
    let o = qtopk(&["quantile", "--data", &data, "--p", "0.5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("0.5"), "{}", stderr(&o));
}

#[test]
fn quantile_single_value() {
    let dir = tempfile::tempdir().unwrap();
    let data = write(dir.path(), "one.txt", "5\n");
    let o = qtopk(&["quantile", "--data", &data, "--k", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("theta_p = 5\n"));
}

#[test]
fn quantile_rejects_k_and_p_together() {
    let o = qtopk(&["quantile", "--data", "x", "--k", "1", "--p", "0.95"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_tau2_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let text =
        config_text("type = \"ring\"\nn = 10", "type = \"none\"").replace("tau2 = 0.505\n", "");
    let cfg = write(dir.path(), "bad.toml", &text);
    let o = qtopk(&[
        "run",
        "--config",
        &cfg,
        "--output",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("tau2"), "{}", stderr(&o));
}

#[test]
fn schedule_violation_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let text = config_text("type = \"ring\"\nn = 10", "type = \"none\"")
        .replace("tau2 = 0.505", "tau2 = 0.4");
    let cfg = write(dir.path(), "bad.toml", &text);
    let out = dir.path().join("out");
    let o = qtopk(&["run", "--config", &cfg, "--output", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let o = qtopk(&[
        "run",
        "--config",
        &cfg,
        "--output",
        out.to_str().unwrap(),
        "--allow-unsafe-schedule",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn divergence_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let text = config_text(
        "type = \"ring\"\nn = 10",
        "type = \"gaussian\"\nsigma2 = 1.0",
    )
    .replace("alpha0 = 80.0", "alpha0 = 1.0")
    .replace("beta0 = \"auto\"", "beta0 = 3.0")
    .replace("tau1 = 1.0", "tau1 = 0.0")
    .replace("tau2 = 0.505", "tau2 = 0.0");
    let cfg = write(dir.path(), "diverge.toml", &text);
    let out = dir.path().join("out");
    let o = qtopk(&[
        "run",
        "--config",
        &cfg,
        "--output",
        out.to_str().unwrap(),
        "--allow-unsafe-schedule",
    ]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    assert!(out.join("manifest.toml").exists());
}

#[test]
fn unwritable_output_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = write(dir.path(), "file", "");
    let out = Path::new(&blocker).join("sub");
    let o = run_short(noisy_config().to_str().unwrap(), &out, &[]);
    assert_eq!(o.status.code(), Some(5), "{}", stderr(&o));
}

#[test]
fn run_writes_traces_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = run_short(noisy_config().to_str().unwrap(), &out, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(out.join("replication_0007.csv").exists());
    let agg = std::fs::read_to_string(out.join("aggregate.csv")).unwrap();
    assert_eq!(
        agg.lines().next(),
        Some("t,consensus_error,mean_error,max_error,topk_count,frac_topk_correct")
    );
    let rep = std::fs::read_to_string(out.join("replication_0000.csv")).unwrap();
    assert!(rep.starts_with("replication,t,consensus_error,"));
    let manifest = std::fs::read_to_string(out.join("manifest.toml")).unwrap();
    assert!(manifest.contains("theta_p = 99.0"), "{manifest}");
    assert!(manifest.contains("true_topk = [10]"), "{manifest}");
    assert!(manifest.contains("config_format = \"toml\""));
    assert!(manifest.contains("lambdaN = "));
    assert!(manifest.contains("software_version = "));
}

#[test]
fn manifest_round_trip_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let o = run_short(noisy_config().to_str().unwrap(), &first, &["--seed", "17"]);
    assert!(o.status.success(), "{}", stderr(&o));

    let second = dir.path().join("second");
    let manifest = first.join("manifest.toml");
    let o = qtopk(&[
        "run",
        "--config",
        manifest.to_str().unwrap(),
        "--output",
        second.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        std::fs::read(first.join("aggregate.csv")).unwrap(),
        std::fs::read(second.join("aggregate.csv")).unwrap()
    );
}

#[test]
fn seed_override_changes_traces_not_theta() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let config = noisy_config();
    assert!(run_short(config.to_str().unwrap(), &a, &["--seed", "1"])
        .status
        .success());
    assert!(run_short(config.to_str().unwrap(), &b, &["--seed", "2"])
        .status
        .success());
    assert_ne!(
        std::fs::read(a.join("aggregate.csv")).unwrap(),
        std::fs::read(b.join("aggregate.csv")).unwrap()
    );
    let theta = |dir: &Path| {
        let text = std::fs::read_to_string(dir.join("manifest.toml")).unwrap();
        text.lines()
            .find(|l| l.starts_with("theta_p"))
            .unwrap()
            .to_string()
    };
    assert_eq!(theta(&a), theta(&b));
}

#[test]
fn baseline_complete_graph() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.toml",
        &config_text("type = \"complete\"\nn = 10", "type = \"none\""),
    );
    let o = qtopk(&["baseline", "--config", &cfg, "--k", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("rounds_to_converge = 1\n"), "{text}");
    assert!(text.contains("topk_agents = [4, 6, 10]\n"), "{text}");
    assert!(text.contains("memory_slots_per_agent"), "{text}");
}

#[test]
fn baseline_path_max_at_endpoint() {
    let dir = tempfile::tempdir().unwrap();
    let text = config_text("type = \"path\"\nn = 10", "type = \"none\"").replace(
        "[45, 8, 22, 91, 15, 82, 53, 7, 44, 99]",
        "[1, 2, 3, 4, 5, 6, 7, 8, 9, 10]",
    );
    let cfg = write(dir.path(), "p.toml", &text);
    let o = qtopk(&["baseline", "--config", &cfg]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(
        stdout(&o).contains("rounds_to_converge = 9\n"),
        "{}",
        stdout(&o)
    );
}

#[test]
fn baseline_refuses_noise() {
    let o = qtopk(&["baseline", "--config", noisy_config().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("noiseless"), "{}", stderr(&o));
    let o = qtopk(&[
        "baseline",
        "--config",
        noisy_config().to_str().unwrap(),
        "--sigma2",
        "0",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
}
