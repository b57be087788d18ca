mod common;

use common::{box_scene, graspkit, s, write_model, SMALL_CONFIG};
use graspkit::io::{bank, gann};

#[test]
fn full_pipeline_runs_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let scene = box_scene(d);
    let cfg = d.join("small.toml");
    let out = d.join("out");

    let run = graspkit(&["scene", s(&scene), "--output", s(&out), "--config", s(&cfg)]);
    assert_eq!(run.code, 0, "{}", run.stdout);
    assert!(run.summary["positives"].as_u64().unwrap() > 0);
    for f in ["scene.gann", "graspness.pgm", "object_mask.pgm", "view_graspness.csv", "cloud.ply", "ground_truth.csv", "depth.bin"] {
        assert!(out.join(f).exists(), "{f}");
    }

    let run = graspkit(&["eval", s(&out.join("ground_truth.csv")), "--scene", s(&scene), "--output", s(&d.join("gt.json"))]);
    assert_eq!(run.code, 0, "{}", run.stdout);
    assert_eq!(run.summary["AP"].as_f64(), Some(1.0), "{}", run.stdout);

    let run = graspkit(&["simplify", s(&out.join("scene.gann")), "--output", s(&d.join("simple.gann")), "--config", s(&cfg)]);
    assert_eq!(run.code, 0, "{}", run.stdout);
    assert!(matches!(gann::read_file(&d.join("simple.gann")).unwrap(), gann::Gann::Simplified(_)));

    let run = graspkit(&["corrupt", s(&out.join("depth.bin")), "--output", s(&d.join("real.bin")), "--config", s(&cfg)]);
    assert_eq!(run.code, 0, "{}", run.stdout);
    let run = graspkit(&[
        "repair", s(&d.join("real.bin")), "--output", s(&d.join("fixed.bin")),
        "--predictor", "oracle", "--sim", s(&out.join("depth.bin")),
    ]);
    assert_eq!(run.code, 0, "{}", run.stdout);
    assert_eq!(run.summary["rmse_mm"].as_f64(), Some(0.0));

    let run = graspkit(&["bank", s(&out.join("cloud.ply")), "--output", s(&d.join("bank.bin")), "--config", s(&cfg)]);
    assert_eq!(run.code, 0, "{}", run.stdout);
    assert_eq!(bank::read_file(&d.join("bank.bin")).unwrap().k(), 4);

    let run = graspkit(&[
        "propose", s(&out.join("cloud.ply")), "--output", s(&d.join("pred.csv")), "--scene-id", "box_scene",
        "--bank", s(&d.join("bank.bin")), "--config", s(&cfg),
    ]);
    assert_eq!(run.code, 0, "{}", run.stdout);
    assert!(run.summary["predictions"].as_u64().unwrap() > 0, "{}", run.stdout);
    let run = graspkit(&["eval", s(&d.join("pred.csv")), "--scene", s(&scene), "--output", s(&d.join("rep.json"))]);
    assert_eq!(run.code, 0, "{}", run.stdout);
    let ap = run.summary["AP"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&ap));
    assert!(d.join("rep.csv").exists());
}

#[test]
fn missing_inputs_exit_with_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let run = graspkit(&["annotate", s(&d.join("nope.ply")), "--output", s(&d.join("x.gann"))]);
    assert_eq!(run.code, 2);
    assert_eq!(run.summary["status"], "error");
    assert!(run.summary["error_code"].is_string());

    std::fs::write(d.join("scene.json"), r#"{"scene_id":"s","objects":[{"id":"a","model":"a.ply","annotation":"a.gann","rotation":[1,0,0,0,1,0,0,0,1],"translation":[0,0,0]}],"camera":{"intrinsics":{"fx":10,"fy":10,"cx":1,"cy":1,"width":2,"height":2},"eye":[0,0,1],"target":[0,0,0],"up":[0,1,0]}}"#).unwrap();
    let run = graspkit(&["scene", s(&d.join("scene.json")), "--output", s(&d.join("o"))]);
    assert_eq!(run.code, 2, "{}", run.stdout);
}

#[test]
fn corrupted_container_is_an_invariant_violation_or_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("bad.gann"), b"GANNv1\0\nxx").unwrap();
    let run = graspkit(&["simplify", s(&d.join("bad.gann")), "--output", s(&d.join("o.gann"))]);
    assert_eq!(run.code, 2);
}

#[test]
fn emitted_config_reloads_equal() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = d.join("in.toml");
    std::fs::write(&cfg, SMALL_CONFIG).unwrap();
    let (model, _) = write_model(d, &common::small_box());
    let first = d.join("eff.toml");
    let run = graspkit(&[
        "annotate", s(&model), "--output", s(&d.join("a.gann")), "--config", s(&cfg),
        "--views", "1", "--angles", "1", "--depths", "1", "--emit-config", s(&first),
    ]);
    assert_eq!(run.code, 0, "{}", run.stdout);
    assert_eq!(run.summary["candidates_per_point"], 1);
    let a = graspkit::config::PipelineConfig::load(&first).unwrap();
    let second = d.join("eff2.toml");
    let run = graspkit(&["simplify", "--config", s(&first), "--emit-config", s(&second), "missing.gann", "--output", s(&d.join("z"))]);
    assert_eq!(run.code, 2);
    assert_eq!(graspkit::config::PipelineConfig::load(&second).unwrap(), a);
    assert_eq!(a.annotation.views, 1);
}

#[test]
fn empty_scene_yields_an_empty_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let scene = serde_json::json!({
        "scene_id": "empty",
        "table": {"half_extent": 0.2, "height": 0.0, "spacing": 0.01},
        "camera": {"intrinsics": common::intrinsics(), "eye": [0.0, 0.0, 0.4], "target": [0.0, 0.0, 0.0], "up": [0.0, 1.0, 0.0]},
    });
    std::fs::write(d.join("scene.json"), serde_json::to_vec(&scene).unwrap()).unwrap();
    let out = d.join("out");
    let run = graspkit(&["scene", s(&d.join("scene.json")), "--output", s(&out)]);
    assert_eq!(run.code, 0, "{}", run.stdout);
    assert_eq!(run.summary["positives"], 0);
    match gann::read_file(&out.join("scene.gann")).unwrap() {
        gann::Gann::Scene(c) => assert!(c.is_empty()),
        other => panic!("unexpected {:?}", other.kind()),
    }
    let run = graspkit(&["simplify", s(&out.join("scene.gann")), "--output", s(&d.join("simple.gann"))]);
    assert_eq!(run.code, 0, "{}", run.stdout);
}

#[test]
fn simplify_summary_matches_library_stats() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let scene = box_scene(d);
    let cfg = d.join("small.toml");
    let out = d.join("out");
    assert_eq!(graspkit(&["scene", s(&scene), "--output", s(&out), "--config", s(&cfg)]).code, 0);
    let run = graspkit(&["simplify", s(&out.join("scene.gann")), "--output", s(&d.join("simple.gann")), "--keep", "3"]);
    assert_eq!(run.code, 0, "{}", run.stdout);
    let gann::Gann::Scene(c) = gann::read_file(&out.join("scene.gann")).unwrap() else { panic!() };
    let simplified = graspkit::simplify::simplify_with(&c, 3).unwrap();
    let stats = graspkit::simplify::compression_stats(&c, &simplified).unwrap();
    assert_eq!(run.summary["candidate_reduction"].as_f64(), Some(stats.candidate_reduction));
    assert_eq!(run.summary["storage_reduction"].as_f64(), Some(stats.storage_reduction));
    assert_eq!(gann::read_file(&d.join("simple.gann")).unwrap(), gann::Gann::Simplified(simplified));
}
