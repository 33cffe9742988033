use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use forceskill::cli::{run, EXIT_INPUT, EXIT_OK};

struct Output {
    code: i32,
    out: String,
    err: String,
}

fn forceskill(args: &[&str]) -> Output {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = run(std::iter::once("forceskill").chain(args.iter().copied()), &mut out, &mut err);
    Output { code, out: String::from_utf8(out).unwrap(), err: String::from_utf8(err).unwrap() }
}

fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

/// Generated demos, a trained model and one disturbed execution, shared by all tests.
fn workspace() -> &'static Path {
    static DIR: OnceLock<PathBuf> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap().keep();
        let demos = dir.join("demos");
        let r = forceskill(&["generate", "--seed", "4", "--count", "2", "--out", s(&demos)]);
        assert_eq!(r.code, EXIT_OK, "{}", r.err);
        let model = dir.join("model.json");
        let r = forceskill(&["train", "--seed", "4", "--demos", s(&demos), "--out", s(&model)]);
        assert_eq!(r.code, EXIT_OK, "{}", r.err);
        let script = dir.join("script.toml");
        std::fs::write(
            &script,
            "[[events]]\nkind = \"position_pulse\"\nstart = 1.5\nduration = 0.2\naxis = 1\nmagnitude = 0.04\n",
        )
        .unwrap();
        let r = forceskill(&[
            "reproduce",
            "--model",
            s(&model),
            "--scene",
            s(&demos.join("scene.toml")),
            "--script",
            s(&script),
            "--out",
            s(&dir.join("run.log")),
        ]);
        assert_eq!(r.code, EXIT_OK, "{}{}", r.out, r.err);
        dir
    })
}

#[test]
fn training_reports_em_and_stiffness() {
    let dir = workspace();
    let r = forceskill(&["train", "--demos", s(&dir.join("demos")), "--out", s(&dir.join("again.json"))]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    assert!(r.out.contains("EM:"), "{}", r.out);
    assert!(r.out.contains("monotone true"), "{}", r.out);
    assert!(r.out.contains("stiffness"), "{}", r.out);
}

#[test]
fn disturbed_reproduction_replans() {
    let log = std::fs::read_to_string(workspace().join("run.log")).unwrap();
    assert!(log.contains("# outcome: goal_reached"));
    assert!(log.lines().any(|l| l.starts_with("# replan:")), "no replanning logged");
}

#[test]
fn inspect_summarizes_model_and_demos() {
    let dir = workspace();
    let r = forceskill(&["inspect", "--model", s(&dir.join("model.json"))]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    assert!(r.out.contains("components"), "{}", r.out);
    let r = forceskill(&["inspect", "--demos", s(&dir.join("demos"))]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    assert!(r.out.contains("press_00"), "{}", r.out);
}

#[test]
fn missing_demo_directory() {
    let dir = tempfile::tempdir().unwrap();
    let r = forceskill(&["train", "--demos", s(&dir.path().join("nothing")), "--out", s(&dir.path().join("m.json"))]);
    assert_eq!(r.code, EXIT_INPUT);
    let empty = dir.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    let r = forceskill(&["train", "--demos", s(&empty), "--out", s(&dir.path().join("m.json"))]);
    assert_eq!(r.code, EXIT_INPUT);
    assert!(r.err.contains("no demonstrations"), "{}", r.err);
}

#[test]
fn scene_without_a_model_frame() {
    let dir = workspace();
    let scene = tempfile::NamedTempFile::new().unwrap();
    std::fs::write(
        scene.path(),
        "[start]\nposition = [0.3, 0.0, 0.15]\n\n[object]\nposition = [0.5, 0.0, 0.0]\n\n[frames.robot]\nposition = [0.3, 0.0, 0.15]\n",
    )
    .unwrap();
    let r = forceskill(&[
        "reproduce",
        "--model",
        s(&dir.join("model.json")),
        "--scene",
        s(scene.path()),
        "--out",
        s(&dir.join("unused.log")),
    ]);
    assert_eq!(r.code, EXIT_INPUT);
    assert!(r.err.contains("`object`"), "{}", r.err);
}

#[test]
fn bad_arguments_are_input_errors() {
    assert_eq!(forceskill(&["plot", "--kind", "histogram", "--out", "x.svg"]).code, EXIT_INPUT);
    assert_eq!(forceskill(&["frobnicate"]).code, EXIT_INPUT);
    let r = forceskill(&["plot", "--kind", "adaptation", "--out", "x.svg"]);
    assert_eq!(r.code, EXIT_INPUT);
    assert!(r.err.contains("--log"), "{}", r.err);
}

#[test]
fn corrupt_model_is_an_input_error() {
    let f = tempfile::NamedTempFile::new().unwrap();
    std::fs::write(f.path(), "{\"format\": \"forceskill-model\"").unwrap();
    let r = forceskill(&["inspect", "--model", s(f.path())]);
    assert_eq!(r.code, EXIT_INPUT);
    assert!(r.err.contains("corrupt"), "{}", r.err);
}

fn golden(kind: &str, extra: &[&str]) {
    let dir = workspace();
    let out = dir.join(format!("{kind}.svg"));
    let mut args = vec!["plot", "--kind", kind, "--out", s(&out)];
    args.extend_from_slice(extra);
    let r = forceskill(&args);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    let svg = std::fs::read_to_string(&out).unwrap();
    assert!(svg.starts_with("<svg") || svg.starts_with("<?xml"));
    assert!(dir.join(format!("{kind}.csv")).exists());
    let again = dir.join(format!("{kind}_again.svg"));
    args[4] = s(&again);
    assert_eq!(forceskill(&args).code, EXIT_OK);
    assert_eq!(std::fs::read_to_string(&again).unwrap(), svg, "plots are not deterministic");

    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(format!("{kind}.svg"));
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, &svg).unwrap();
    }
    let expected = std::fs::read_to_string(&path).expect("golden file missing; run with UPDATE_GOLDEN=1");
    assert!(expected == svg, "{kind} plot differs from {}", path.display());
}

#[test]
fn trajectory_plot_matches_golden() {
    let dir = workspace();
    golden(
        "trajectory",
        &["--model", s(&dir.join("model.json")), "--demos", s(&dir.join("demos/press_00.demo")), "--log", s(&dir.join("run.log"))],
    );
}

#[test]
fn stiffness_plot_matches_golden() {
    golden("stiffness", &["--model", s(&workspace().join("model.json"))]);
}

#[test]
fn adaptation_plot_matches_golden() {
    golden("adaptation", &["--log", s(&workspace().join("run.log"))]);
}
