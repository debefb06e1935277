use qcc::experiments::{preflight, run_scenario, CheckKind, Scenario, SweepReport};
use qcc::experiments::scenario::HARMONIC_SANITY;
use qcc::Error;

#[test]
fn bundled_scenarios_parse_and_validate() {
    let dir: std::path::PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "scenarios"].iter().collect();
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let s = Scenario::load(&path).unwrap();
        s.validate().unwrap();
        assert_eq!(Scenario::from_toml(&s.to_toml().unwrap()).unwrap(), s, "{}", path.display());
        seen += 1;
    }
    assert!(seen >= 6);
    let sanity: std::path::PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "scenarios", "harmonic-sanity.toml"].iter().collect();
    assert_eq!(Scenario::load(&sanity).unwrap(), Scenario::from_toml(HARMONIC_SANITY).unwrap());
}

#[test]
fn config_errors_name_the_line() {
    let bad = HARMONIC_SANITY.replace("plots = false", "plots = false\ncolour = \"red\"");
    let line = bad.lines().position(|l| l.starts_with("colour")).unwrap() + 1;
    match Scenario::from_toml(&bad) {
        Err(Error::Config(m)) => assert!(m.contains(&format!("line {line}")) && m.contains("colour"), "{m}"),
        other => panic!("{other:?}"),
    }
    let negative = HARMONIC_SANITY.replace("hbar_list = [0.1, 0.05]", "hbar_list = [0.1, -0.05]");
    assert!(matches!(Scenario::from_toml(&negative), Err(Error::Config(_))));
    let coarse = format!("{HARMONIC_SANITY}spacing = 0.8\n");
    assert!(matches!(Scenario::from_toml(&coarse), Err(Error::Config(_))));
}

const FREE_LINEAR: &str = r#"name = "free-linear"
check = "operator_egorov"
T_list = [0.0, 1.0]
hbar_list = [0.1]
seed = 1

[model]
name = "free"

[initial]
kind = "coherent"
center = [0.0, 0.0]

[options]
observable = "x"
plots = false
compression = { kind = "coherent", x_cut = 1.0, p_cut = 1.0 }
"#;

#[test]
fn egorov_is_exact_for_linear_symbols_under_free_flow() {
    let s = Scenario::from_toml(FREE_LINEAR).unwrap();
    let (r, _) = run_scenario(&s).unwrap();
    for row in &r.rows {
        assert!(row.measured <= 1e-8, "T={}: {}", row.t, row.measured);
    }
    let periodic = FREE_LINEAR.replace("[options]", "[grid]\nperiodic = true\nn_x = 128\n\n[options]");
    match Scenario::from_toml(&periodic) {
        Err(Error::Config(m)) => assert!(m.contains("non-periodic"), "{m}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn harmonic_sanity_is_deterministic() {
    let s = Scenario::harmonic_sanity();
    assert_eq!(s.check, CheckKind::Meanfield);
    let checks = preflight(&s).unwrap();
    assert_eq!(checks.len(), 2);
    assert!(checks.iter().all(|c| c.boundary_mass < 1e-6 && (c.husimi_mass.unwrap() - 1.0).abs() < 1e-6));
    let (a, _) = run_scenario(&s).unwrap();
    let (b, _) = run_scenario(&s).unwrap();
    assert!(a.pass);
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    // T = 0 rows: the mixture's Husimi against its own atoms, within the explicit constant
    for row in a.rows.iter().filter(|r| r.t == 0.0) {
        assert!(row.measured <= row.bound.unwrap());
    }
    let back = SweepReport::from_json(&a.to_json().unwrap()).unwrap();
    assert_eq!(back, a);
}
