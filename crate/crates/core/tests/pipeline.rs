use glrom_core::artifacts;
use glrom_core::harness::{build_online, harvest, offline_stage, ExperimentSpec, GridSpec, Problem, Runner, Variant};
use glrom_core::model::ParameterSet;
use glrom_core::rom::solve_rom;

fn small() -> ExperimentSpec {
    let mut s = ExperimentSpec::example(1).unwrap();
    s.grid = GridSpec { fine: [20, 20], coarse: [4, 4] };
    s.permeability.eta = 1e4;
    s.time.t_final = 0.5;
    s.offline.mu_values = vec![2.0];
    s.online.mu_values = vec![2.5];
    s
}

#[test]
fn config_survives_toml_roundtrip() {
    for id in 1..=5 {
        let spec = ExperimentSpec::example(id).unwrap();
        let back = ExperimentSpec::from_toml(&spec.to_toml().unwrap()).unwrap();
        assert_eq!(back, spec);
    }
}

#[test]
fn unknown_keys_are_rejected() {
    let mut text = small().to_toml().unwrap();
    text.push_str("\nbogus = 1\n");
    assert!(ExperimentSpec::from_toml(&text).is_err());
}

#[test]
fn compare_row_is_finite_and_bounded() {
    let spec = small();
    let rows = Runner::new(&spec).unwrap().run(&[Variant::base("small")]).unwrap();
    assert_eq!(rows.len(), 1);
    let r = &rows[0];
    assert!(r.ok(), "{:?}", r.failure);
    assert_eq!(r.errors.len(), spec.time.steps());
    assert!(r.errors.iter().all(|e| e.is_finite() && *e >= 0.0));
    assert!(r.steady_error() < 1.0);
}

#[test]
fn artifacts_reproduce_the_online_run() {
    let spec = small();
    let problem = Problem::new(&spec).unwrap();
    let stage = offline_stage(&problem, &spec.offline, &spec.gmsfem, &spec.time).unwrap();
    let h = harvest(&problem, &stage, &spec.time, spec.reduction.local_points).unwrap();
    let (n_r, l_g) = spec.reduction.totals(1);
    let rom = build_online(&problem, &stage, &h, n_r, l_g).unwrap();

    let dir = tempfile::tempdir().unwrap();
    artifacts::save_offline(dir.path(), &spec, &problem, &stage, &h, &rom).unwrap();
    assert_eq!(artifacts::load_config(dir.path()).unwrap(), spec);
    let loaded = artifacts::load_rom(dir.path()).unwrap();

    let theta = ParameterSet { mu_values: vec![2.5], ..spec.online.clone() };
    let p = &problem;
    let a = solve_rom(&rom, &p.mesh, &p.kappa, &p.ops, &theta, &spec.time).unwrap().remove(0);
    let b = solve_rom(&loaded, &p.mesh, &p.kappa, &p.ops, &theta, &spec.time).unwrap().remove(0);
    for (x, y) in a.states.iter().zip(&b.states) {
        assert!((x - y).amax() <= 1e-10 * x.amax().max(1e-300));
    }
}
