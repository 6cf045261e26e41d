use osclab::corpus;
use osclab::scene::{load_scene, parse_scene, SceneError};

fn pointer(text: &str) -> String {
    match parse_scene(text, "t") {
        Err(SceneError::Schema { pointer, .. }) | Err(SceneError::Expr { pointer, .. }) => pointer,
        other => panic!("expected a located error, got {other:?}"),
    }
}

const HP: &str = r#"{
  "manifold": {"type": "graph", "chart_vars": ["x", "y"], "domain": [[-3, 3], [-3, 3]], "ambient_dim": 3, "height": ["x*y"]},
  "family": {"k": 1, "fields": [["1", "0", "y"]]}
}"#;

#[test]
fn hyperbolic_paraboloid_file_loads() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("hp.json");
    std::fs::write(&path, HP).unwrap();
    let scene = load_scene(&path).unwrap();
    assert_eq!(scene.name, "hp");
    assert_eq!((scene.manifold.dim(), scene.manifold.ambient_dim()), (2, 3));
    assert_eq!(scene.family.unwrap().k(), Some(1));
}

#[test]
fn schema_errors_point_at_the_culprit() {
    assert_eq!(pointer(&HP.replace(r#"["1", "0", "y"]"#, r#"["1", "y"]"#)), "/family/fields/0");
    assert_eq!(pointer(r#"{"family": {"k": 1, "fields": [["1"]]}}"#), "/manifold");
    assert_eq!(pointer(&HP.replace("\"k\": 1", "\"k\": 2")), "/family/fields");
    assert_eq!(pointer(&HP.replace("x*y", "x*q")), "/manifold/height/0");
    assert_eq!(pointer(&HP.replace("x*y", "x*(y")), "/manifold/height/0");
    assert_eq!(pointer(&HP.replace("[-3, 3], [-3, 3]", "[-3, 3]")), "/manifold/domain");
    assert_eq!(pointer(&HP.replace("\"graph\"", "\"mesh\"")), "/manifold/type");
    assert_eq!(pointer(&HP.replace("\"ambient_dim\": 3", "\"ambient_dim\": 4")), "/manifold/height");
    assert_eq!(pointer(&HP.replace("\"family\"", "\"famly\"")), "/famly");
    let with_cutoff = HP.replace("\n}", ",\n  \"cutoff\": {\"inner\": 2, \"outer\": 1}\n}");
    assert_eq!(pointer(&with_cutoff), "/cutoff");
    let with_params = HP.replace("\n}", ",\n  \"params\": {\"t_grid\": {\"t0\": -1, \"n\": 4}}\n}");
    assert_eq!(pointer(&with_params), "/params/t_grid/t0");
}

#[test]
fn parse_errors_report_offsets() {
    let err = parse_scene(&HP.replace("x*y", "x*(y"), "t").unwrap_err();
    assert!(err.to_string().contains("offset"), "{err}");
    assert!(matches!(parse_scene("{", "t"), Err(SceneError::Json(_))));
    assert!(matches!(load_scene(std::path::Path::new("/no/such/scene.json")), Err(SceneError::Io { .. })));
}

#[test]
fn params_override_defaults() {
    let text = HP.replace(
        "\n}",
        r#",
  "params": {"t_grid": {"t0": 0.1, "n": 5}, "quad_order": 6, "seed": 9, "point": [0.5, 0.5],
             "tolerances": {"containment": 1e-7}}
}"#,
    );
    let scene = parse_scene(&text, "hp").unwrap();
    let cfg = scene.config();
    assert_eq!(cfg.t_grid.len(), 5);
    assert_eq!(cfg.t_grid[0], 0.1);
    assert_eq!((cfg.quad.order, cfg.seed), (6, 9));
    assert_eq!(cfg.tolerances.containment, 1e-7);
    assert_eq!(cfg.tolerances.vanishing, 1e-9);
}

#[test]
fn corpus_scenes_all_parse() {
    let suite = corpus::suite().unwrap();
    assert_eq!(suite.len(), 9);
    for scene in &suite {
        assert!(scene.family.is_some(), "{}", scene.name);
    }
    for name in corpus::EXTRAS {
        corpus::scene(name).unwrap().unwrap();
    }
    assert!(corpus::scene("torus").is_none());
}
