use hocbf_cli::scenario::{load_scenario, ScenarioConfig, ScenarioError, Scenario, UNICYCLE7};

#[test]
fn unicycle_builtin_loads() {
    let sc = load_scenario("unicycle7").unwrap();
    assert_eq!(sc.system.n(), 4);
    assert_eq!(sc.system.m(), 2);
    let names: Vec<_> = sc.candidates.iter().map(|c| c.name.as_str()).collect();
    assert_eq!(names, ["c1", "c2", "c3", "w1", "w2", "w3", "w4"]);
    assert!(sc.candidates.iter().all(|c| c.r == 2));
    assert_eq!(sc.clifs.len(), 3);
    assert_eq!(sc.input_box, vec![(-1.0, 1.0), (-2.0, 2.0)]);
    assert_eq!(sc.state_box[0], (0.0, 50.0));
    assert_eq!(sc.state_box[2], (0.0, 2.0));

    // c1 is the disc of radius 7 around (35, 25)
    let b = &sc.candidates[0].b;
    assert_eq!(b.eval(&[35.0, 25.0, 1.0, 0.3, 0.0, 0.0]).unwrap(), -49.0);
    assert_eq!(b.eval(&[42.0, 25.0, 1.0, 0.3, 0.0, 0.0]).unwrap(), 0.0);
}

#[test]
fn double_integrator_builtin_loads() {
    let sc = load_scenario("double_integrator").unwrap();
    assert_eq!(sc.system.n(), 2);
    assert_eq!(sc.candidates.len(), 1);
    assert!(sc.config.goal.is_some());
}

#[test]
fn empty_and_malformed_files_fail() {
    assert!(matches!(ScenarioConfig::from_toml(""), Err(ScenarioError::Toml(_))));
    assert!(matches!(ScenarioConfig::from_toml("name = 3"), Err(ScenarioError::Toml(_))));
    let extra = format!("{UNICYCLE7}\nbogus = 1\n");
    assert!(matches!(ScenarioConfig::from_toml(&extra), Err(ScenarioError::Toml(_))));
    assert!(matches!(load_scenario("/definitely/not/here.toml"), Err(ScenarioError::Io { .. })));
}

#[test]
fn bad_expressions_name_the_field() {
    let mut cfg = ScenarioConfig::from_toml(UNICYCLE7).unwrap();
    cfg.candidates[1].b = "(x - 41)^2 + q".into();
    let err = Scenario::build(cfg).unwrap_err();
    assert!(matches!(err, ScenarioError::Expr { .. }));
    assert!(err.to_string().contains("candidate"), "{err}");

    let mut cfg = ScenarioConfig::from_toml(UNICYCLE7).unwrap();
    cfg.sets.input_box.pop();
    assert!(matches!(Scenario::build(cfg), Err(ScenarioError::Invalid(_))));

    let mut cfg = ScenarioConfig::from_toml(UNICYCLE7).unwrap();
    cfg.candidates[0].b = "x + u1".into();
    assert!(matches!(Scenario::build(cfg), Err(ScenarioError::Invalid(_))));
}

#[test]
fn save_and_reload_is_identity() {
    for text in [UNICYCLE7, hocbf_cli::scenario::DOUBLE_INTEGRATOR] {
        let cfg = ScenarioConfig::from_toml(text).unwrap();
        let again = ScenarioConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again);
        let a = Scenario::build(cfg).unwrap();
        let b = Scenario::build(again).unwrap();
        assert_eq!(a.system, b.system);
        assert_eq!(a.candidates.len(), b.candidates.len());
    }
}

#[test]
fn files_on_disk_load_like_builtins() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("u.toml");
    std::fs::write(&path, UNICYCLE7).unwrap();
    let sc = load_scenario(path.to_str().unwrap()).unwrap();
    assert_eq!(sc.config, load_scenario("unicycle7").unwrap().config);
}
