use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn run(dir: &Path, name: &str, config: &str, extra: &[&str]) -> (Output, PathBuf) {
    let cfg = dir.join(format!("{name}.toml"));
    fs::write(&cfg, config).unwrap();
    let out = dir.join(format!("out_{name}"));
    let output = Command::new(env!("CARGO_BIN_EXE_vlimit"))
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .args(extra)
        .output()
        .unwrap();
    (output, out)
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|x| x.unwrap().iter().map(String::from).collect()).collect()
}

fn summary_row(out: &Path, check: &str) -> Option<Vec<String>> {
    csv_rows(&out.join("summary.csv")).into_iter().find(|r| r[0] == check)
}

const RIEMANN: &str = r#"
command = "riemann"
[system]
name = "burgers"
params = { u1 = 1.0, delta = 4.0 }
[data]
u_left = [2.0]
u_right = [0.0]
"#;

#[test]
fn burgers_riemann_has_one_shock_row() {
    let dir = TempDir::new().unwrap();
    let (o, out) = run(dir.path(), "r", RIEMANN, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&out.join("pattern.csv"));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][1], "shock");
    let speed: f64 = rows[0][3].parse().unwrap();
    assert!((speed - 1.0).abs() < 1e-8);
    let header = fs::read_to_string(out.join("solution.csv")).unwrap();
    assert!(header.starts_with("x,u_1\n"));
}

#[test]
fn identical_configs_give_identical_bytes() {
    let dir = TempDir::new().unwrap();
    let (_, a) = run(dir.path(), "a", RIEMANN, &[]);
    let (_, b) = run(dir.path(), "b", RIEMANN, &[]);
    for f in ["pattern.csv", "solution.csv", "summary.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn verify_ex_travelling_across_zero_exits_two() {
    let dir = TempDir::new().unwrap();
    let cfg = r#"
command = "verify"
[system]
name = "ex_travelling"
params = { u1 = 0.0, delta = 1.0 }
[data]
states = [[-0.5, 0.0, 0.0], [0.0, 0.0, 0.0], [0.5, 0.0, 0.0]]
"#;
    let (o, out) = run(dir.path(), "v", cfg, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(summary_row(&out, "block_linear_degeneracy").unwrap()[1], "fail");
    assert_eq!(summary_row(&out, "strict_hyperbolicity").unwrap()[1], "pass");
    let scheduled = summary_row(&out, "scheduled").unwrap();
    for c in ["strict_hyperbolicity", "block_linear_degeneracy", "kawashima", "beta_transversality"] {
        assert!(scheduled[3].contains(c));
    }
}

#[test]
fn verify_one_sided_samples_pass() {
    let dir = TempDir::new().unwrap();
    let cfg = r#"
[system]
name = "ex_travelling"
params = { u1 = 0.5, delta = 0.3 }
[data]
states = [[0.3, 0.0, 0.0], [0.5, 0.0, 0.0], [0.7, 0.0, 0.0]]
[numerics]
random_states = 3
"#;
    let (o, out) = run(dir.path(), "v", cfg, &["verify", "--seed", "7"]);
    assert_eq!(o.status.code(), Some(0), "{}", fs::read_to_string(out.join("summary.csv")).unwrap());
    assert_eq!(csv_rows(&out.join("states.csv")).len(), 6);
}

#[test]
fn counterexample_kernel_writes_profile_and_sup_error() {
    let dir = TempDir::new().unwrap();
    let cfg = r#"
command = "counterexample"
[data]
example = "ex_kernel"
u10 = 1.0
[numerics]
nu = [1e-3, 1e-4]
"#;
    let (o, out) = run(dir.path(), "c", cfg, &[]);
    assert_eq!(o.status.code(), Some(0));
    let text = fs::read_to_string(out.join("profile.csv")).unwrap();
    assert!(text.starts_with("nu,x,u_1,limit\n"));
    let row = summary_row(&out, "sup_error[nu=1.0000000000000000e-4]").unwrap();
    assert!(row[2].parse::<f64>().unwrap() <= 0.02);
    assert_eq!(summary_row(&out, "nu_monotonicity").unwrap()[1], "pass");
}

#[test]
fn boundary_riemann_burgers_trace() {
    let dir = TempDir::new().unwrap();
    let cfg = r#"
command = "boundary-riemann"
[system]
name = "burgers"
[data]
u0 = [-2.0]
datum = [1.0]
"#;
    let (o, out) = run(dir.path(), "b", cfg, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&out.join("trace.csv"));
    let trace: f64 = rows[0][2].parse().unwrap();
    let bv: f64 = rows[0][3].parse().unwrap();
    assert!((trace + 2.0).abs() < 1e-6);
    assert!((bv - 1.0).abs() < 1e-6);
    let kinds: Vec<String> = csv_rows(&out.join("pattern.csv")).into_iter().map(|r| r[1].clone()).collect();
    assert_eq!(kinds[0], "boundary_layer");
}

#[test]
fn outside_ball_is_a_numerical_failure() {
    let dir = TempDir::new().unwrap();
    let cfg = r#"
command = "boundary-riemann"
[system]
name = "burgers"
params = { delta = 1.0 }
[data]
u0 = [1.0]
datum = [5.0]
"#;
    let (o, out) = run(dir.path(), "b", cfg, &[]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(summary_row(&out, "boundary-riemann").unwrap()[1], "error");
}

#[test]
fn layer_profile_csv() {
    let dir = TempDir::new().unwrap();
    let cfg = r#"
command = "layer"
[system]
name = "burgers"
[data]
u0 = [0.5]
u_bar = [-1.0]
[numerics]
x_max = 20.0
samples = 201
"#;
    let (o, out) = run(dir.path(), "l", cfg, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&out.join("profile.csv"));
    assert_eq!(rows.len(), 201);
    let x: f64 = rows[100][0].parse().unwrap();
    let u: f64 = rows[100][1].parse().unwrap();
    assert!((u + ((x - 3f64.ln()) / 2.0).tanh()).abs() < 1e-6);
}

#[test]
fn simulate_writes_sweep() {
    let dir = TempDir::new().unwrap();
    let cfg = r#"
command = "simulate"
[system]
name = "burgers"
[data]
u0 = [1.0]
datum = [2.0]
[numerics]
eps = [0.04, 0.02]
domain_length = 2.0
cells = 400
t_final = 0.5
trace_k = 2.0
snapshots = 2
"#;
    let (o, out) = run(dir.path(), "s", cfg, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&out.join("sweep.csv"));
    assert_eq!(rows.len(), 2);
    assert!(rows[0][2].is_empty() && !rows[1][2].is_empty());
    let header = fs::read_to_string(out.join("solution.csv")).unwrap();
    assert!(header.starts_with("eps,t,x,u_1\n"));
}

#[test]
fn envelope_and_analyze() {
    let dir = TempDir::new().unwrap();
    let values: Vec<String> = (0..65).map(|j| format!("{}", (j as f64 / 64.0 * 6.0).sin())).collect();
    let cfg = format!("command = \"envelope\"\n[data]\ns = 6.0\nkind = \"concave\"\nvalues = [{}]\n", values.join(", "));
    let (o, out) = run(dir.path(), "e", &cfg, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(csv_rows(&out.join("envelope.csv")).len(), 65);
    assert!(summary_row(&out, "gaps").is_some());

    let cfg = "command = \"analyze\"\n[system]\nname = \"p_system\"\n";
    let (o, out) = run(dir.path(), "a", cfg, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let kinds: Vec<String> = csv_rows(&out.join("spectrum.csv")).into_iter().map(|r| r[0].clone()).collect();
    assert_eq!(kinds.iter().filter(|k| *k == "ea").count(), 2);
}

#[test]
fn config_errors_exit_one_with_position() {
    let dir = TempDir::new().unwrap();
    let cfg = format!("{RIEMANN}[numerics]\neps = -0.01\n");
    let (o, _) = run(dir.path(), "neg", &cfg, &[]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("numerics.eps") && err.contains(":10:7:"), "{err}");

    let cfg = format!("{RIEMANN}[numerics]\nbogus = 1\n");
    let (o, _) = run(dir.path(), "strict", &cfg, &["--strict"]);
    assert_eq!(o.status.code(), Some(1));
    let (o, _) = run(dir.path(), "lax", &cfg, &[]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stderr).contains("warning"));
}
