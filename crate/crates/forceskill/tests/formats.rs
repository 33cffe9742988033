use std::path::Path;

use forceskill::archive::{ModelArchive, FORMAT_VERSION};
use forceskill::demo_io::{load_demo_file, parse_demos, save_demo_file, write_demos};
use forceskill::exec_log::{parse_log, write_log};
use forceskill::IoError;
use forceskill_core::demo::Demonstration;
use forceskill_core::execution::{run_episode, DisturbanceScript, ExecutionConfig, Goal, PlantState};
use forceskill_core::manifold::Pose;
use forceskill_core::scenario::{press_demos, press_environment, DemoNoise, PressParams};
use forceskill_core::skill::{train, TrainingConfig};
use nalgebra::Vector3;

fn poses() -> (Pose, Pose) {
    (Pose::from_position(Vector3::new(0.3, 0.0, 0.15)), Pose::from_position(Vector3::new(0.5, 0.0, 0.0)))
}

fn demos(count: usize, noise: f64) -> Vec<Demonstration> {
    let (start, object) = poses();
    let noise = DemoNoise { position_std: noise, wrench_std: 10.0 * noise };
    press_demos(&PressParams::default(), start, object, 0.05, count, 0.01, noise, 3)
        .unwrap()
        .into_iter()
        .map(|d| d.demo)
        .collect()
}

fn archive(components: usize) -> ModelArchive {
    let cfg = TrainingConfig { components, ..TrainingConfig::default() };
    let (skill, _) = train(&demos(3, 0.0), &cfg).unwrap();
    ModelArchive::new("press", cfg, skill)
}

#[test]
fn demonstrations_round_trip_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("noisy.demo");
    let original = demos(2, 1e-3);
    save_demo_file(&path, &original).unwrap();
    let loaded = load_demo_file(&path).unwrap();
    assert_eq!(loaded, original);
}

#[test]
fn missing_accelerations_are_recomputed() {
    let text = "\
# demo: ramp
0 0 0 0 1 0 0 0  0 0 0 0 0 0  0 0 0 0 0 0  0 0 0 1 0 0 0
0.5 0 0 0 1 0 0 0  1 0 0 0 0 0  0 0 0 0 0 0  0 0 0 1 0 0 0
1.0 0.5 0 0 1 0 0 0  2 0 0 0 0 0  0 0 0 0 0 0  0 0 0 1 0 0 0
";
    let d = parse_demos(text, "unused", Path::new("ramp.demo")).unwrap();
    assert_eq!(d.len(), 1);
    assert_eq!(d[0].id, "ramp");
    for p in &d[0].points {
        assert!((p.accel[0] - 2.0).abs() < 1e-12, "{}", p.accel);
    }
}

#[test]
fn several_demonstrations_per_file() {
    let all = demos(3, 0.0);
    let text = write_demos(&all);
    let back = parse_demos(&text, "x", Path::new("all.demo")).unwrap();
    assert_eq!(back.iter().map(|d| d.id.as_str()).collect::<Vec<_>>(), ["press_00", "press_01", "press_02"]);
    assert_eq!(back, all);
}

#[test]
fn archive_save_load_save_is_identical() {
    let a = archive(6);
    let first = a.to_json();
    let loaded = ModelArchive::from_json(&first).unwrap();
    assert_eq!(loaded, a);
    assert_eq!(loaded.to_json(), first);
}

#[test]
fn archive_with_twenty_two_components() {
    let a = archive(22);
    assert_eq!(a.skill.model.components.len(), 22);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    a.save(&path).unwrap();
    let loaded = ModelArchive::load(&path).unwrap();
    assert_eq!(loaded, a);
    assert_eq!(loaded.to_json().as_bytes(), std::fs::read(&path).unwrap());
}

#[test]
fn truncated_archive_is_corrupt() {
    let text = archive(2).to_json();
    let cut = &text[..text.len() / 2];
    assert!(matches!(ModelArchive::from_json(cut), Err(IoError::Corrupt(_))));
    assert!(matches!(ModelArchive::from_json("{}"), Err(IoError::Corrupt(_))));
}

#[test]
fn future_archive_version_is_rejected() {
    let text = archive(2).to_json();
    let newer = text.replacen(&format!("\"format_version\": {FORMAT_VERSION}"), "\"format_version\": 99", 1);
    assert_ne!(newer, text);
    match ModelArchive::from_json(&newer) {
        Err(IoError::Version { found: 99, expected }) => assert_eq!(expected, FORMAT_VERSION),
        other => panic!("{other:?}"),
    }
}

#[test]
fn execution_log_parses_back() {
    let a = archive(6);
    let (start, object) = poses();
    let skill = &a.skill;
    let scene = skill.scene(&start, &object).unwrap();
    let geometry = skill.model.geometry;
    let state = PlantState::at_rest(&geometry, start.to_point());
    let log = run_episode(
        skill,
        &scene,
        &state,
        &Goal::Model,
        &DisturbanceScript::default(),
        &press_environment(&object).unwrap(),
        &ExecutionConfig::default(),
    )
    .unwrap();
    let text = write_log(&log);
    let parsed = parse_log(&text, Path::new("run.log")).unwrap();
    assert_eq!(parsed.outcome, "goal_reached");
    assert_eq!(parsed.rows.len(), log.ticks.len());
    for (row, tick) in parsed.rows.iter().zip(&log.ticks) {
        assert_eq!(row.time, tick.time);
        assert_eq!(row.pose.position, Pose::from_point(&tick.pose).position);
        assert_eq!(row.component, Some(tick.component).filter(|c| *c != usize::MAX));
    }
}
