use std::path::Path;
use std::process::{Command, Output};

use moma::odometry::AgentPhase;
use moma::scenario::{two_robot_caterpillar, CaterpillarOptions};

fn moma(args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_moma")).args(args).output().expect("binary runs");
    assert!(
        out.status.success(),
        "moma {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap()
}

#[test]
fn simulate_is_byte_identical_across_invocations() {
    let a = moma(&["simulate", "--seed", "11"]).stdout;
    let b = moma(&["simulate", "--seed", "11"]).stdout;
    assert!(!a.is_empty());
    assert_eq!(a, b);
    let c = moma(&["simulate", "--seed", "12"]).stdout;
    assert_ne!(a, c);
}

#[test]
fn trajectory_header_has_the_documented_columns() {
    let out = moma(&["simulate", "--scenario", "caterpillar"]).stdout;
    let text = String::from_utf8(out).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "trial,t,agent,truth_x,truth_y,truth_z,truth_qw,truth_qx,truth_qy,truth_qz,\
         est_x,est_y,est_z,est_qw,est_qx,est_qy,est_qz,method,cycle_index,phase"
    );
}

#[test]
fn montecarlo_output_does_not_depend_on_worker_count() {
    let d1 = tempfile::tempdir().unwrap();
    let d3 = tempfile::tempdir().unwrap();
    let common = ["montecarlo", "--scenario", "caterpillar", "-n", "12", "--seed", "5"];
    let run = |dir: &Path, workers: &str| {
        let mut args = common.to_vec();
        args.extend(["-w", workers, "-o", dir.to_str().unwrap()]);
        moma(&args);
    };
    run(d1.path(), "1");
    run(d3.path(), "3");
    for file in ["metrics.csv", "keypoints.csv"] {
        assert_eq!(read(d1.path(), file), read(d3.path(), file), "{file} differs");
    }
    let metrics = String::from_utf8(read(d1.path(), "metrics.csv")).unwrap();
    assert_eq!(
        metrics.lines().next().unwrap(),
        "trial,method,ME,E_f,path_length,percent_final_error,switches,tracking_lost"
    );
    // 12 trials of two methods plus mean and std rows per method.
    assert_eq!(metrics.lines().count(), 1 + 24 + 4);
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        "seed = 3\ntrials = 4\n[scenario]\nname = \"caterpillar\"\n[noise]\npixel_sigma = 0.0\n[vo]\nenabled = false\n",
    )
    .unwrap();
    let cfg = cfg.to_str().unwrap();
    let from_file = String::from_utf8(moma(&["montecarlo", "-c", cfg]).stdout).unwrap();
    assert_eq!(from_file.lines().count(), 1 + 4 + 2);
    assert!(from_file.lines().all(|l| !l.contains(",vo,")));
    let overridden = String::from_utf8(moma(&["montecarlo", "-c", cfg, "-n", "2", "--pixel-sigma", "1"]).stdout).unwrap();
    assert_eq!(overridden.lines().count(), 1 + 2 + 2);
    assert_ne!(from_file.lines().nth(1), overridden.lines().nth(1));
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "seeds = 3\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_moma"))
        .args(["simulate", "-c", cfg.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(!out.status.success());
}

#[test]
fn validate_accepts_generated_and_rejects_illegal_files() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.toml");
    moma(&["validate", "--scenario", "square", "--write", good.to_str().unwrap()]);
    moma(&["validate", good.to_str().unwrap()]);

    let mut script = two_robot_caterpillar(0.5, 2, &CaterpillarOptions::default()).unwrap();
    assert!(script.schedule[..2].iter().all(|r| r.phase == AgentPhase::Mobile));
    script.schedule[1].start = script.schedule[0].start;
    let bad = dir.path().join("bad.toml");
    script.save(&bad).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_moma"))
        .args(["validate", bad.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
}

#[test]
fn compare_reports_pair_wins() {
    let out = String::from_utf8(moma(&["compare", "-n", "3", "--scenario", "caterpillar"]).stdout).unwrap();
    assert!(out.starts_with("method,ME_f"));
    assert!(out.contains("\nmoma,") && out.contains("\nvo,"));
    assert!(out.contains("pairs"));
}

#[test]
fn sweep_writes_one_row_per_grid_point_and_method() {
    let out = moma(&[
        "sweep",
        "--scenario",
        "caterpillar",
        "-n",
        "2",
        "--pixel-sigmas",
        "0.25,0.5",
        "--depth-sigmas",
        "0.01,0.02,0.04",
    ])
    .stdout;
    let text = String::from_utf8(out).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 * 3 * 2);
}
