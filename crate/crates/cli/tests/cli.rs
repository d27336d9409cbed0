use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn neohook(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_neohook"))
        .args(args)
        .env("NEOHOOK_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn run_scenario(file: &Path, out: &Path) -> Output {
    neohook(&["run", file.to_str().unwrap(), "--out", out.to_str().unwrap()])
}

fn write_scenario(dir: &Path, name: &str, body: &str) -> PathBuf {
    let defaults = scenarios().join("defaults.toml");
    let text = format!("extends = {:?}\nname = {name:?}\n{body}", defaults.to_str().unwrap());
    let p = dir.join(format!("{name}.toml"));
    fs::write(&p, text).unwrap();
    p
}

fn csv_column(path: &Path, name: &str) -> Vec<f64> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let j = header.iter().position(|h| *h == name).unwrap();
    lines.map(|l| l.split(',').nth(j).unwrap().parse().unwrap()).collect()
}

#[test]
fn zero_scenario_gives_zero_diagnostics() {
    let out = tempfile::tempdir().unwrap();
    let o = run_scenario(&scenarios().join("zero.toml"), out.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out.path().join("diagnostics.csv")).unwrap();
    let mut rows = 0;
    for line in text.lines().skip(1) {
        for v in line.split(',').skip(1) {
            assert_eq!(v.parse::<f64>().unwrap(), 0.0);
        }
        rows += 1;
    }
    assert_eq!(rows, 11);
    assert!(out.path().join("diagnostics.schema.json").exists());
    assert!(out.path().join("final.nhsp").exists());
}

#[test]
fn taylor_green_energy_is_constant() {
    let out = tempfile::tempdir().unwrap();
    let o = run_scenario(&scenarios().join("taylor-green-2d.toml"), out.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let e = csv_column(&out.path().join("diagnostics.csv"), "energy");
    let e0 = e[0];
    assert!(e0 > 0.0);
    for x in &e {
        assert!(((x - e0) / e0).abs() < 1e-8, "{x} vs {e0}");
    }
}

#[test]
fn same_seed_gives_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write_scenario(
        dir.path(),
        "random",
        r#"
[initial]
kind = "random"
seed = 9
v_rms = 0.3
u_rms = 0.1
spectrum = { slope = 2.5, k_min = 1.0, k_max = 6.0 }
[evolution]
t_end = 0.02
diagnostics_every = 5
"#,
    );
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(run_scenario(&sc, &a).status.code(), Some(0));
    let o = Command::new(env!("CARGO_BIN_EXE_neohook"))
        .args(["run", sc.to_str().unwrap(), "--out", b.to_str().unwrap()])
        .env("NEOHOOK_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(fs::read(a.join("diagnostics.csv")).unwrap(), fs::read(b.join("diagnostics.csv")).unwrap());
    assert_eq!(fs::read(a.join("final.nhsp")).unwrap(), fs::read(b.join("final.nhsp")).unwrap());
}

#[test]
fn parse_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write_scenario(dir.path(), "typo", "[evolution]\nd_t = 0.1\n");
    assert_eq!(run_scenario(&sc, &dir.path().join("o")).status.code(), Some(2));
    let p = dir.path().join("broken.toml");
    fs::write(&p, "name = ").unwrap();
    assert_eq!(run_scenario(&p, &dir.path().join("o")).status.code(), Some(2));
    let o = Command::new(env!("CARGO_BIN_EXE_neohook"))
        .args(["run", scenarios().join("zero.toml").to_str().unwrap()])
        .env("NEOHOOK_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn inadmissible_parameters_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write_scenario(dir.path(), "odd", "[grid]\nn = 15\n");
    assert_eq!(run_scenario(&sc, &dir.path().join("o")).status.code(), Some(3));
    let sc = write_scenario(dir.path(), "window", "[apriori]\nr = 0.5\np = inf\n");
    let o = run_scenario(&sc, &dir.path().join("o"));
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("θ"));
    let o = neohook(&["eps-family", scenarios().join("zero.toml").to_str().unwrap(), "--eps", "0.5,0.25"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn blowup_exits_four_with_partial_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write_scenario(dir.path(), "blowup", "[initial]\nkind = \"taylor-green\"\namplitude = 5e6\n");
    let out = dir.path().join("o");
    let o = run_scenario(&sc, &out);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("partial.nhsp").exists());
    let csv = fs::read_to_string(out.join("diagnostics.csv")).unwrap();
    assert!(csv.lines().count() >= 2);
}

#[test]
fn inspect_prints_header() {
    let out = tempfile::tempdir().unwrap();
    assert_eq!(run_scenario(&scenarios().join("zero.toml"), out.path()).status.code(), Some(0));
    let o = neohook(&["inspect", out.path().join("final.nhsp").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let s = String::from_utf8_lossy(&o.stdout);
    assert!(s.contains("NHSP v1") && s.contains("components 6"), "{s}");
    let o = neohook(&["inspect", out.path().join("diagnostics.csv").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn eps_family_with_band_limited_data_has_zero_differences() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write_scenario(
        dir.path(),
        "band",
        r#"
[initial]
kind = "random"
seed = 2
v_rms = 0.2
u_rms = 0.05
spectrum = { slope = 2.0, k_min = 1.0, k_max = 3.0 }
[evolution]
t_end = 0.02
diagnostics_every = 5
"#,
    );
    let out = dir.path().join("o");
    // 1/ε beyond the dealiased band for every member.
    let o = neohook(&["eps-family", sc.to_str().unwrap(), "--eps", "0.05,0.04,0.03", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for v in csv_column(&out.join("eps_family.csv"), "sup_diff") {
        assert_eq!(v, 0.0);
    }
    assert!(out.join("eps_family.schema.json").exists());
}

#[test]
fn lab_case_set_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let set = dir.path().join("set.toml");
    fs::write(
        &set,
        r#"
name = "mini"
[output]
dir = "unused"
[[case]]
check = "kato-ponce"
id = "kp"
dim = 2
n = 32
period = 6.283185307179586
theta = 1.0
kind = "homogeneous"
refine = false
corpus = { size = 3, seed = 1, spectrum = { slope = 2.5, k_min = 1.0, k_max = 5.0 } }
"#,
    )
    .unwrap();
    let out = dir.path().join("o");
    let o = neohook(&["lab", set.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("kp.json")).unwrap()).unwrap();
    assert_eq!(v["samples"].as_array().unwrap().len(), 3);
    assert!(v["max_ratio"].as_f64().unwrap().is_finite());
    assert!(out.join("schema.json").exists());

    fs::write(&set, fs::read_to_string(&set).unwrap().replace("theta = 1.0", "theta = -1.0")).unwrap();
    assert_eq!(neohook(&["lab", set.to_str().unwrap(), "--out", out.to_str().unwrap()]).status.code(), Some(3));
}
