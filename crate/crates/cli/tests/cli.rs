use std::path::Path;
use std::process::Command;

use glrom_core::harness::{ExperimentSpec, GridSpec};

fn glrom() -> Command {
    Command::new(env!("CARGO_BIN_EXE_glrom"))
}

fn write_config(dir: &Path, online: Vec<f64>) -> std::path::PathBuf {
    let mut s = ExperimentSpec::example(1).unwrap();
    s.grid = GridSpec { fine: [20, 20], coarse: [4, 4] };
    s.permeability.eta = 1e4;
    s.time.t_final = 0.3;
    s.offline.mu_values = vec![2.0];
    s.online.mu_values = online;
    let path = dir.join("small.toml");
    std::fs::write(&path, s.to_toml().unwrap()).unwrap();
    path
}

fn header(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn offline_then_online() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), vec![2.5]);
    let art = dir.path().join("art");
    let st = glrom().args(["offline", "--config"]).arg(&cfg).arg("--artifacts").arg(&art).status().unwrap();
    assert!(st.success());
    for f in ["config.toml", "rom_psi.csv", "global_deim_indices.csv", "mesh_nodes.csv", "permeability.csv"] {
        assert!(art.join(f).exists(), "missing {f}");
    }
    let out = dir.path().join("online.csv");
    let st = glrom()
        .args(["online", "--config"])
        .arg(&cfg)
        .arg("--artifacts")
        .arg(&art)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(st.success());
    assert!(header(&out).starts_with("online_mu,time,newton_iterations,fine_norm,alpha0"));
    assert_eq!(std::fs::read_to_string(&out).unwrap().lines().count(), 1 + 7);
}

#[test]
fn compare_writes_rows_and_series() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), vec![2.5]);
    let out = dir.path().join("cmp.csv");
    let st = glrom().args(["compare", "--config"]).arg(&cfg).arg("--out").arg(&out).status().unwrap();
    assert_eq!(st.code(), Some(0));
    assert!(header(&out).starts_with("example,label,offline_mu,online_mu"));
    assert_eq!(header(&out.with_extension("errors.csv")), "label,online_mu,time,energy_error");
}

#[test]
fn failed_row_gives_exit_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), vec![2.5, 1e5]);
    let out = dir.path().join("cmp.csv");
    let st = glrom().args(["compare", "--config"]).arg(&cfg).arg("--out").arg(&out).status().unwrap();
    assert_eq!(st.code(), Some(2));
    let text = std::fs::read_to_string(&out).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].ends_with(",ok"));
    assert!(!rows[1].ends_with(",ok"));
}

#[test]
fn bad_inputs_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "grid = 3\n").unwrap();
    let st = glrom().args(["compare", "--config"]).arg(&bad).status().unwrap();
    assert_eq!(st.code(), Some(1));
    let st = glrom().args(["sweep", "--example", "9"]).output().unwrap();
    assert!(!st.status.success());
    let st = glrom().args(["online", "--config"]).arg(&bad).arg("--artifacts").arg(dir.path()).status().unwrap();
    assert_eq!(st.code(), Some(1));
}
