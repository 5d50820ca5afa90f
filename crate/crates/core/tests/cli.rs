//! Command-line contract: subcommands, outputs and exit codes.

use std::path::Path;
use std::process::Command;

fn hopskit(dir: &Path, args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_hopskit"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .env("HOPSKIT_THREADS", "1")
        .output()
        .unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn write(dir: &Path, name: &str, text: &str) {
    std::fs::write(dir.join(name), text).unwrap();
}

#[test]
fn unknown_key_is_a_config_error() {
    let d = tempfile::tempdir().unwrap();
    write(d.path(), "bad.toml", "[bath]\nalpah = 0.1\n");
    let (code, _, err) = hopskit(d.path(), &["run", "--config", "bad.toml"]);
    assert_eq!(code, 4, "{err}");
    assert!(err.contains("alpah"));
    let (code, _, _) = hopskit(d.path(), &["run", "--named", "no-such-label"]);
    assert_eq!(code, 4);
}

#[test]
fn single_exponential_fit_succeeds_and_impossible_tolerance_fails() {
    let d = tempfile::tempdir().unwrap();
    // s = 1 with tiny tau0 is close to a single decaying mode; the
    // sub-Ohmic target with 2 terms cannot reach 1e-12
    write(
        d.path(),
        "hard.toml",
        "[fit]\nn_terms = 2\ntau0 = 15.0\nrestarts = 4\nmax_rel_error = 1e-12\n[output]\nlabel = \"hard\"\n",
    );
    let (code, out, err) = hopskit(d.path(), &["fit", "--config", "hard.toml", "--out", "o"]);
    assert_eq!(code, 2, "{out}{err}");
    assert!(d.path().join("o/hard.fit").exists());

    write(
        d.path(),
        "one.toml",
        "[fit]\nn_terms = 1\ntau0 = 0.5\nrestarts = 4\nmax_rel_error = 0.5\n[output]\nlabel = \"one\"\n",
    );
    let (code, out, err) = hopskit(d.path(), &["fit", "--config", "one.toml", "--out", "o"]);
    assert_eq!(code, 0, "{out}{err}");
}

#[test]
fn run_writes_csv_and_sidecar_with_unit_trace() {
    let d = tempfile::tempdir().unwrap();
    write(
        d.path(),
        "small.toml",
        "[bath]\ns = 1.0\nomega_c = 5.0\nalpha = 0.02\n\
         [fit]\ng = [[0.2, -0.1], [0.05, 0.0]]\nw = [[5.0, 0.5], [1.0, 0.0]]\n\
         [hierarchy]\nk_max = 2\n[ensemble]\nn_samples = 8\nt_max = 2.0\n\
         [output]\nlabel = \"small\"\ndir = \"res\"\n",
    );
    let (code, out, err) = hopskit(d.path(), &["run", "--config", "small.toml", "--seed", "5"]);
    assert_eq!(code, 0, "{out}{err}");
    let csv = std::fs::read_to_string(d.path().join("res/small.csv")).unwrap();
    let mut lines = csv.lines();
    let head: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(head.len(), 1 + 8 + 8);
    for line in lines {
        let f: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        assert!((f[1] + f[7] - 1.0).abs() < 1e-14);
    }
    let side: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.path().join("res/small.json")).unwrap()).unwrap();
    assert_eq!(side["config"]["master_seed"], 5);
    assert_eq!(side["n_samples"], 8);
    assert_eq!(side["config_hash"].as_str().unwrap().len(), 64);

    // identical invocation reproduces the file bit for bit
    std::fs::rename(d.path().join("res/small.csv"), d.path().join("first.csv")).unwrap();
    let (code, _, _) = hopskit(d.path(), &["run", "--config", "small.toml", "--seed", "5"]);
    assert_eq!(code, 0);
    assert_eq!(
        std::fs::read(d.path().join("first.csv")).unwrap(),
        std::fs::read(d.path().join("res/small.csv")).unwrap()
    );
    let (code, out, _) = hopskit(d.path(), &["compare", "first.csv", "res/small.csv", "--tol", "1e-12"]);
    assert_eq!(code, 0, "{out}");
    assert!(out.contains("max deviation 0.0000e0"));
}

#[test]
fn master_equation_divergence_guard() {
    let d = tempfile::tempdir().unwrap();
    let (code, _, err) = hopskit(d.path(), &["me", "--named", "fig4-eps1-T1", "--out", "o"]);
    assert_eq!(code, 4, "{err}");
    assert!(err.contains("divergent"));
    let (code, _, _) = hopskit(d.path(), &["me", "--named", "fig4-eps1-T1", "--out", "o", "--skip-omega0"]);
    assert_eq!(code, 0);
    let (code, _, _) = hopskit(d.path(), &["me", "--named", "fig4-eps1-T1", "--out", "o", "--variant", "extended"]);
    assert_eq!(code, 0);
    let (code, out, _) = hopskit(
        d.path(),
        &["compare", "o/fig4-eps1-T1-me-constant.csv", "o/fig4-eps1-T1-me-extended.csv", "--tol", "0.05"],
    );
    assert_eq!(code, 1, "{out}");
}

#[test]
fn compare_rejects_disjoint_ranges() {
    let d = tempfile::tempdir().unwrap();
    write(d.path(), "a.csv", "t,sigma_z\n0,1\n1,0.5\n");
    write(d.path(), "b.csv", "t,sigma_z\n2,1\n3,0.5\n");
    let (code, _, err) = hopskit(d.path(), &["compare", "a.csv", "b.csv"]);
    assert_eq!(code, 1);
    assert!(err.contains("overlap"));
}

#[test]
fn list_emits_loadable_configs() {
    let d = tempfile::tempdir().unwrap();
    let (code, out, _) = hopskit(d.path(), &["list", "--emit", "cfg"]);
    assert_eq!(code, 0);
    assert!(out.contains("fig10-alpha020-T0"));
    let text = std::fs::read_to_string(d.path().join("cfg/fig10-alpha020-T0.toml")).unwrap();
    let cfg = hopskit::config::CliConfig::parse(&text).unwrap();
    assert_eq!(cfg.hierarchy.k_max, 9);
}
