use std::path::Path;
use std::process::{Command, Output};

fn latefuse(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_latefuse"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("LATEFUSE_OUT")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

const SMALL: [&str; 6] = ["--objects", "8", "--duration", "1s", "--seed", "3"];

#[test]
fn synth_is_deterministic_and_refuses_to_overwrite() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let mut args = vec!["synth"];
    args.extend(SMALL);
    assert_eq!(code(&latefuse(&args, &a)), 0);
    assert_eq!(code(&latefuse(&args, &b)), 0);
    let read = |d: &Path| std::fs::read(d.join("scene.jsonl")).unwrap();
    assert_eq!(read(&a), read(&b));

    let again = latefuse(&args, &a);
    assert_eq!(code(&again), 2);
    assert!(String::from_utf8_lossy(&again.stderr).contains("--force"));
    args.push("--force");
    assert_eq!(code(&latefuse(&args, &a)), 0);
}

#[test]
fn fuse_then_eval_matches_bench() {
    let dir = tempfile::tempdir().unwrap();
    let run = |cmd: &str, out: &str| {
        let mut args = vec![cmd, "--methods", "unikf,nms-std", "--noise", "noise2", "--trials", "2"];
        args.extend(SMALL);
        let o = latefuse(&args, &dir.path().join(out));
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    };
    run("fuse", "fused");
    run("bench", "bench");

    let fused = dir.path().join("fused");
    let scene = fused.join("scene.jsonl");
    let files = [fused.join("fused/noise2/unikf.jsonl"), fused.join("fused/noise2/nms-std.jsonl")];
    let mut args = vec!["eval", "--scene", scene.to_str().unwrap(), "--fused"];
    args.extend(files.iter().map(|f| f.to_str().unwrap()));
    let o = latefuse(&args, &dir.path().join("eval"));
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let summary = |d: &str| std::fs::read_to_string(dir.path().join(d).join("summary.csv")).unwrap();
    assert_eq!(summary("eval"), summary("bench"));
}

#[test]
fn eval_rejects_detections_from_another_scene() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["fuse", "--methods", "wls", "--trials", "1"];
    args.extend(SMALL);
    assert_eq!(code(&latefuse(&args, &dir.path().join("f"))), 0);
    let other = dir.path().join("other");
    assert_eq!(
        code(&latefuse(&["synth", "--objects", "8", "--duration", "1s", "--seed", "4"], &other)),
        0
    );

    let fused = dir.path().join("f/fused/noise1/wls.jsonl");
    let scene = other.join("scene.jsonl");
    let o = latefuse(
        &["eval", "--scene", scene.to_str().unwrap(), "--fused", fused.to_str().unwrap()],
        &dir.path().join("e"),
    );
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("different scene"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");

    let o = latefuse(&["bench", "--methods", "kalman"], &out);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("unikf"));

    assert_eq!(code(&latefuse(&["frobnicate"], &out)), 1);

    let missing = dir.path().join("missing.jsonl");
    let o = latefuse(
        &["eval", "--scene", missing.to_str().unwrap(), "--fused", missing.to_str().unwrap()],
        &out,
    );
    assert_eq!(code(&o), 3);

    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "seed = 1\nspeed = 3\n").unwrap();
    let o = latefuse(&["bench", "--config", cfg.to_str().unwrap()], &out);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));

    let bad_scene = dir.path().join("bad.jsonl");
    std::fs::write(&bad_scene, "{\"scene_id\":\"s\",\"t_us\":0}\n").unwrap();
    let o = latefuse(
        &["eval", "--scene", bad_scene.to_str().unwrap(), "--fused", missing.to_str().unwrap()],
        &out,
    );
    assert_eq!(code(&o), 2);
}

#[test]
fn config_file_drives_bench_and_report_reads_it_back() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let cfg = dir.path().join("exp.cfg");
    std::fs::write(
        &cfg,
        format!(
            "seed = 5\ntrials = 2\nobjects = 6\nduration = 1s\nnoise = noise1, noise1+noise3\nmethods = unikf, none\nout = {}\n",
            out.display()
        ),
    )
    .unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_latefuse"))
        .args(["bench", "--config", cfg.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let csv = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 2);

    let o = Command::new(env!("CARGO_BIN_EXE_latefuse"))
        .args(["report", out.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("noise1+noise3") && text.contains("unikf"), "{text}");
}
