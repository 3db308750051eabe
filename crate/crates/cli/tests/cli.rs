mod pipeline;

use pipeline::{fullhead, ok, outputs, run_all, steps};

#[test]
fn pipeline_runs_and_writes_expected_files() {
    let dir = tempfile::tempdir().unwrap();
    let st = steps(dir.path());
    let stdout = run_all(&st);
    let root = dir.path();
    for f in ["asset/head.hmm", "render/image.png", "render/manifest.json", "crops/crop_2.png", "fit/report.json",
        "fit/trajectory.csv", "fit/params_p1_s1.json", "refit/params.obj", "eval/eval_report.json", "eval/curve.csv",
        "transfer/out.obj"]
    {
        assert!(root.join(f).is_file(), "{f} missing");
    }
    for s in &st {
        assert!(s.out_dir.join("run.json").is_file(), "{} wrote no run.json", s.name);
    }
    let csv = std::fs::read_to_string(root.join("fit/trajectory.csv")).unwrap();
    assert!(csv.starts_with("iteration,term,value\n"));
    assert!(stdout[7].trim().parse::<f64>().is_ok(), "{}", stdout[7]);
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(root.join("fit/report.json")).unwrap()).unwrap();
    assert!(report["shape"].is_array());
    assert!(report.get("wall_clock_s").is_none());
}

#[test]
fn replaying_run_json_is_bitwise_identical() {
    let dir = tempfile::tempdir().unwrap();
    let st = steps(dir.path());
    let first = run_all(&st);
    for (s, out) in st.iter().zip(&first) {
        let before = outputs(&s.out_dir);
        let cfg = s.out_dir.join("run.json");
        let again = ok(&s.cwd, &["--config", cfg.to_str().unwrap()]);
        assert_eq!(&again, out, "{} stdout differs", s.name);
        assert_eq!(outputs(&s.out_dir), before, "{} outputs differ", s.name);
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let code = |args: &[&str]| fullhead(d, args).status.code();
    assert_eq!(code(&["--help"]), Some(0));
    assert_eq!(code(&[]), Some(1));
    assert_eq!(code(&["no-such-command"]), Some(1));
    assert_eq!(code(&["render", "--params", "p.json"]), Some(1), "no asset anywhere");
    assert_eq!(code(&["dice", "missing_a.png", "missing_b.png"]), Some(2));
    std::fs::write(d.join("bad.hmm"), b"HMM1 but truncated").unwrap();
    std::fs::write(d.join("mesh.obj"), "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n").unwrap();
    assert_eq!(code(&["refit-mesh", "--mesh", "mesh.obj", "--asset", "bad.hmm", "--out", "o.json"]), Some(2));
    ok(d, &["synth-model", "--vertices", "162", "--out", "m.hmm"]);
    // wrong topology is a contract violation
    assert_eq!(code(&["refit-mesh", "--mesh", "mesh.obj", "--asset", "m.hmm", "--out", "o.json"]), Some(1));
    assert_eq!(code(&["refit-mesh", "--mesh", "mesh.obj", "--asset", "m.hmm", "--lambda", "-1", "--out", "o.json"]), Some(1));
    let err = String::from_utf8(fullhead(d, &["dice", "missing_a.png", "b.png"]).stderr).unwrap();
    assert!(err.starts_with("error:"), "{err}");
}

#[test]
fn env_defaults_are_recorded_in_run_json() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth-model", "--vertices", "162", "--out", "m.hmm"]);
    let p = fullhead_core::model::HeadParams {
        cam: [1.0 / 130.0, 0.0, 0.0],
        ..fullhead_core::model::HeadParams::zeros(Default::default())
    };
    fullhead_core::io::save_params(&d.join("p.json"), &p).unwrap();
    std::fs::create_dir(d.join("out")).unwrap();
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_fullhead"))
        .args(["render", "--params", "p.json", "--width", "16"])
        .current_dir(d)
        .env("FULLHEAD_ASSET", d.join("m.hmm"))
        .env("FULLHEAD_OUT_DIR", d.join("out"))
        .output()
        .unwrap();
    assert!(out.status.success());
    let run: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("out/run.json")).unwrap()).unwrap();
    let text = run.to_string();
    assert!(text.contains("m.hmm") && text.contains("out"), "{text}");
    assert!(d.join("out/image.png").is_file());
}
