mod common;

use aisc::dataio::{save_detection_log, save_png_rgb, DetectionLog, ImageBuffer};
use common::*;
use tempfile::tempdir;

fn stdout(o: &std::process::Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &std::process::Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn deepfake_score_matches_reference_row() {
    let o = run_cli(&[
        "score",
        "deepfake",
        "--precision5",
        "0.9820",
        "--auc",
        "0.9944",
        "--subjective",
        "1",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!((v["score"].as_f64().unwrap() - 0.98752).abs() < 5e-5);
}

#[test]
fn out_of_range_input_is_exit_one() {
    let o = run_cli(&[
        "score",
        "deepfake",
        "--precision5",
        "1.2",
        "--auc",
        "0.9",
        "--subjective",
        "1",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error:"));
}

#[test]
fn usage_errors_are_exit_one() {
    assert_eq!(run_cli(&["score"]).status.code(), Some(1));
    assert_eq!(run_cli(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(run_cli(&["--help"]).status.code(), Some(0));
}

#[test]
fn missing_file_names_the_path() {
    let o = run_cli(&[
        "anomaly",
        "--probe",
        "/nonexistent/probe.jsonl",
        "--gallery",
        "/nonexistent/g.jsonl",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(
        stderr(&o).contains("/nonexistent/probe.jsonl"),
        "{}",
        stderr(&o)
    );
}

#[test]
fn six_region_driving_patch_is_void() {
    let dir = tempdir().unwrap();
    let log = dir.path().join("log.jsonl");
    save_detection_log(&DetectionLog::from_fn(|_, _, f| (f % 2) as u32), &log).unwrap();
    let mut img = ImageBuffer::filled(2790, 1260, [0, 0, 0]).unwrap();
    for k in 0..6 {
        for y in 100..140 {
            for x in (100 + k * 300)..(140 + k * 300) {
                img.set_pixel(x, y, [200, 10, 10]);
            }
        }
    }
    let patch = dir.path().join("patch.png");
    save_png_rgb(&img, &patch).unwrap();
    let args = [
        "score",
        "driving",
        "--log",
        log.to_str().unwrap(),
        "--patch",
        patch.to_str().unwrap(),
    ];
    let o = run_cli(&args);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    // Joining two blocks leaves five regions, which scores normally.
    for x in 140..400 {
        img.set_pixel(x, 120, [200, 10, 10]);
    }
    save_png_rgb(&img, &patch).unwrap();
    let o = run_cli(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["components"]["evasion"].as_f64().unwrap(), 0.5);
    assert_eq!(v["components"]["regions"].as_f64().unwrap(), 5.0);
}

#[test]
fn face_patch_validation_exit_codes() {
    let dir = tempdir().unwrap();
    let orig = ImageBuffer::filled(112, 112, [90, 90, 90]).unwrap();
    let mut adv = orig.clone();
    for y in 0..30 {
        for x in 0..30 {
            adv.set_pixel(x, y, [10, 200, 10]);
        }
    }
    let (o_path, a_path) = (dir.path().join("o.png"), dir.path().join("a.png"));
    save_png_rgb(&orig, &o_path).unwrap();
    save_png_rgb(&adv, &a_path).unwrap();
    let args = [
        "validate-patch",
        "--adv",
        a_path.to_str().unwrap(),
        "--orig",
        o_path.to_str().unwrap(),
    ];
    assert_eq!(run_cli(&args).status.code(), Some(0));
    for y in 0..36 {
        for x in 0..36 {
            adv.set_pixel(x, y, [10, 200, 10]);
        }
    }
    save_png_rgb(&adv, &a_path).unwrap();
    let o = run_cli(&args);
    assert_eq!(o.status.code(), Some(2));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["total_area"].as_u64(), Some(1296));
}

#[test]
fn optimize_rejects_zero_iterations() {
    let dir = tempdir().unwrap();
    let cfg = write_optimize_config(dir.path(), 0);
    let o = run_cli(&[
        "optimize",
        "--config",
        &cfg,
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempdir().unwrap();
    let cfg = dir.path().join("a.json");
    std::fs::write(&cfg, r#"{"K": 3, "bogus": 1}"#).unwrap();
    let (p, g) = write_blob_files(dir.path());
    let o = run_cli(&[
        "anomaly",
        "--config",
        cfg.to_str().unwrap(),
        "--probe",
        &p,
        "--gallery",
        &g,
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("bogus"));
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let dir = tempdir().unwrap();
    let (p, g) = write_blob_files(dir.path());
    let a1 = run_cli(&["--threads", "1", "anomaly", "--probe", &p, "--gallery", &g]);
    let a8 = run_cli(&["--threads", "8", "anomaly", "--probe", &p, "--gallery", &g]);
    assert!(a1.status.success(), "{}", stderr(&a1));
    assert_eq!(a1.stdout, a8.stdout);

    let cfg = write_optimize_config(dir.path(), 5);
    let run = |threads: &str| {
        let out = dir.path().join(format!("opt-t{threads}"));
        let o = run_cli(&[
            "--threads",
            threads,
            "optimize",
            "--config",
            &cfg,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        (
            o.stdout,
            std::fs::read(out.join("patch.png")).unwrap(),
            std::fs::read(out.join("trace.csv")).unwrap(),
        )
    };
    assert_eq!(run("1"), run("8"));
}
