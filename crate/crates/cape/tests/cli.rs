//! Command-line contract tests: exit codes, flag defaults, refusal
//! behaviors, and error messages.

use std::path::Path;
use std::process::{Command, Output};

fn cape(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cape"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).to_string()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).to_string()
}

#[test]
fn gen_data_refuses_overwrite_without_force_and_rejects_zero_count() {
    let dir = tempfile::tempdir().unwrap();
    let out = cape(dir.path(), &["gen-data", "--out", "d.capeset", "--count", "20", "--seed", "1"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("40 trajectories"), "default augmentation doubles the count");

    let again = cape(dir.path(), &["gen-data", "--out", "d.capeset", "--count", "20"]);
    assert_eq!(again.status.code(), Some(1));
    assert!(stderr(&again).contains("--force"));

    let forced =
        cape(dir.path(), &["gen-data", "--out", "d.capeset", "--count", "20", "--seed", "1", "--force"]);
    assert!(forced.status.success());

    let zero = cape(dir.path(), &["gen-data", "--out", "z.capeset", "--count", "0"]);
    assert_eq!(zero.status.code(), Some(1));
}

#[test]
fn gen_data_is_seed_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = cape(dir.path(), &["gen-data", "--out", name, "--count", "15", "--seed", "7"]);
        assert!(out.status.success(), "{}", stderr(&out));
        std::fs::read(dir.path().join(name)).unwrap()
    };
    assert_eq!(run("a.capeset"), run("b.capeset"));
}

#[test]
fn train_requires_data_and_honors_quick() {
    let dir = tempfile::tempdir().unwrap();
    let missing = cape(dir.path(), &["train", "--data", "nope.capeset", "--out", "m.ckpt"]);
    assert_eq!(missing.status.code(), Some(1));

    let out = cape(dir.path(), &["gen-data", "--out", "d.capeset", "--count", "30", "--seed", "3"]);
    assert!(out.status.success());
    let trained = cape(
        dir.path(),
        &["train", "--data", "d.capeset", "--out", "m.ckpt", "--quick", "--seed", "1"],
    );
    assert!(trained.status.success(), "{}", stderr(&trained));
    assert!(stdout(&trained).contains("trained 15 epochs"), "quick drops to 15 epochs");

    let epochs_zero =
        cape(dir.path(), &["train", "--data", "d.capeset", "--out", "m.ckpt", "--epochs", "0"]);
    assert_eq!(epochs_zero.status.code(), Some(1));
}

#[test]
fn train_same_seed_gives_identical_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    assert!(cape(dir.path(), &["gen-data", "--out", "d.capeset", "--count", "25", "--seed", "3"])
        .status
        .success());
    let run = |name: &str| {
        let out = cape(
            dir.path(),
            &["train", "--data", "d.capeset", "--out", name, "--epochs", "3", "--seed", "11"],
        );
        assert!(out.status.success(), "{}", stderr(&out));
        std::fs::read(dir.path().join(name)).unwrap()
    };
    assert_eq!(run("a.ckpt"), run("b.ckpt"));
}

fn train_tiny_model(dir: &Path) {
    assert!(cape(dir, &["gen-data", "--out", "d.capeset", "--count", "60", "--seed", "3"])
        .status
        .success());
    assert!(cape(
        dir,
        &["train", "--data", "d.capeset", "--out", "m.ckpt", "--epochs", "8", "--seed", "1"]
    )
    .status
    .success());
}

#[test]
fn plan_exit_codes_track_outcomes() {
    let dir = tempfile::tempdir().unwrap();
    train_tiny_model(dir.path());

    // Empty scene: success -> 0.
    assert!(cape(dir.path(), &["gen-scene", "--out", "empty.txt", "--difficulty", "empty", "--seed", "2"])
        .status
        .success());
    let ok = cape(
        dir.path(),
        &["plan", "--ckpt", "m.ckpt", "--scene", "empty.txt", "--controller", "cape", "--seed", "4"],
    );
    assert_eq!(ok.status.code(), Some(0), "{}", stderr(&ok));
    assert!(stdout(&ok).contains("outcome: success"));

    // A wall of obstacles: collision or non-completion -> 2 or 3.
    let scene = "capescene v1\nd 2\ndifficulty hard\nseed 0\nbounds_lo 0.0000000000000000e0 0.0000000000000000e0\nbounds_hi 2.0000000000000000e0 2.0000000000000000e0\nstart 1.0000000000000000e0 2.0000000000000000e-1\ngoal 1.0000000000000000e0 1.8000000000000000e0\nobstacles 11\n".to_string()
        + &(0..11)
            .map(|i| format!("{:.16e} 1.0000000000000000e0 1.2000000000000000e-1\n", 0.2 * i as f64))
            .collect::<String>();
    std::fs::write(dir.path().join("wall.txt"), scene).unwrap();
    let blocked = cape(
        dir.path(),
        &["plan", "--ckpt", "m.ckpt", "--scene", "wall.txt", "--controller", "cape", "--seed", "4"],
    );
    let code = blocked.status.code();
    assert!(code == Some(2) || code == Some(3), "got {code:?}: {}", stderr(&blocked));
}

#[test]
fn plan_rejects_unknown_controllers_listing_valid_names() {
    let dir = tempfile::tempdir().unwrap();
    train_tiny_model(dir.path());
    assert!(cape(dir.path(), &["gen-scene", "--out", "s.txt", "--difficulty", "empty", "--seed", "2"])
        .status
        .success());
    let out = cape(
        dir.path(),
        &["plan", "--ckpt", "m.ckpt", "--scene", "s.txt", "--controller", "dp-guidance"],
    );
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.contains("dp-guidance"), "{err}");
    assert!(err.contains("cape") && err.contains("mpd-refine"), "{err}");
}

#[test]
fn plan_dump_writes_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    train_tiny_model(dir.path());
    assert!(cape(dir.path(), &["gen-scene", "--out", "s.txt", "--difficulty", "empty", "--seed", "2"])
        .status
        .success());
    let out = cape(
        dir.path(),
        &[
            "plan", "--ckpt", "m.ckpt", "--scene", "s.txt", "--controller", "cape", "--seed", "4",
            "--dump-plans", "plans.jsonl", "--plot", "episode.svg",
        ],
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = std::fs::read_to_string(dir.path().join("plans.jsonl")).unwrap();
    let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(first["iteration"], 1);
    assert!(first["waypoints"].as_array().unwrap().len() >= 2);
    assert!(dir.path().join("episode.svg").exists());
}

#[test]
fn malformed_config_errors_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "[guidance]\nlamda = 0.2\n").unwrap();
    let out = cape(
        dir.path(),
        &["gen-data", "--out", "d.capeset", "--count", "5", "--config", "bad.toml"],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("lamda"), "{}", stderr(&out));
}

#[test]
fn bench_quick_writes_artifacts_and_respects_out_root() {
    let dir = tempfile::tempdir().unwrap();
    train_tiny_model(dir.path());
    let out = Command::new(env!("CARGO_BIN_EXE_cape"))
        .args([
            "bench", "--ckpt", "m.ckpt", "--difficulty", "easy", "--scenes", "2", "--poses", "1",
            "--seed", "9",
        ])
        .env("CAPE_OUT_ROOT", dir.path().join("custom-root"))
        .current_dir(dir.path())
        .output()
        .expect("binary runs");
    assert!(out.status.success(), "{}", stderr(&out));
    let bench_dir = dir.path().join("custom-root/bench-easy-full");
    for artifact in ["results.csv", "verdict.json", "resolved.toml"] {
        assert!(bench_dir.join(artifact).exists(), "missing {artifact}");
    }
    let csv = std::fs::read_to_string(bench_dir.join("results.csv")).unwrap();
    assert!(csv.starts_with("controller,difficulty,obs_mode,sr,cr,ncr,"));
    assert_eq!(csv.lines().count(), 4, "header plus one row per controller");
    let resolved = std::fs::read_to_string(bench_dir.join("resolved.toml")).unwrap();
    assert!(resolved.contains("difficulty = \"easy\""));
}

#[test]
fn sweep_produces_resumable_csv_and_curves() {
    let dir = tempfile::tempdir().unwrap();
    train_tiny_model(dir.path());
    let run = || {
        cape(
            dir.path(),
            &[
                "sweep", "--ckpt", "m.ckpt", "--out-dir", "sweep", "--param", "lambda=0.1,0.4",
                "--controllers", "cape", "--difficulty", "easy", "--scenes", "2", "--poses", "1",
                "--seed", "3",
            ],
        )
    };
    let first = run();
    assert!(first.status.success(), "{}", stderr(&first));
    let csv_path = dir.path().join("sweep/results.csv");
    let full = std::fs::read_to_string(&csv_path).unwrap();
    assert_eq!(full.lines().count(), 3);
    assert!(dir.path().join("sweep/plots/sr_vs_lambda.svg").exists());

    // Truncate to one completed row and re-run: the sweep resumes.
    let prefix: String = full.lines().take(2).map(|l| format!("{l}\n")).collect();
    std::fs::write(&csv_path, prefix).unwrap();
    let second = run();
    assert!(second.status.success(), "{}", stderr(&second));
    assert_eq!(std::fs::read_to_string(&csv_path).unwrap(), full);
}

#[test]
fn sweep_rejects_duplicate_grid_values() {
    let dir = tempfile::tempdir().unwrap();
    train_tiny_model(dir.path());
    let out = cape(
        dir.path(),
        &[
            "sweep", "--ckpt", "m.ckpt", "--out-dir", "s", "--param", "lambda=0.1,0.1",
            "--controllers", "cape", "--difficulty", "easy", "--scenes", "1", "--poses", "1",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("duplicate"), "{}", stderr(&out));
}
