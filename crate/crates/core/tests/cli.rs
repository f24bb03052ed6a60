//! End-to-end CLI tests: pretrain -> run -> plot, determinism, config-file
//! overrides and the seed-offset env var.

use std::fs;
use std::path::Path;
use std::process::Command;

use switchrl::harness::{rows_from_csv, rows_from_json, CSV_HEADER};

const BIN: &str = env!("CARGO_BIN_EXE_switchrl");

const ENV_SPEC: &str = "max_steps = 20\nS...\n...G\n";

fn cli() -> Command {
    let mut c = Command::new(BIN);
    c.env_remove("SWITCHRL_SEED_OFFSET");
    c
}

fn pretrain(dir: &Path, ckpt: &Path) {
    let env_path = dir.join("tiny.env");
    fs::write(&env_path, ENV_SPEC).unwrap();
    let out = cli()
        .args(["pretrain", "--env"])
        .arg(&env_path)
        .args(["--tier", "medium", "--out"])
        .arg(ckpt)
        .args([
            "--dataset-size",
            "1500",
            "--offline-iters",
            "4000",
            "--discount",
            "0.95",
        ])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "pretrain failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn run_controller(ckpt: &Path, out_dir: &Path, controller: &str, extra: &[&str]) {
    let out = cli()
        .args(["run", "--ckpt"])
        .arg(ckpt)
        .args(["--controller", controller, "--seeds", "0..1", "--out"])
        .arg(out_dir)
        .args([
            "--online-steps",
            "2000",
            "--eval-interval",
            "500",
            "--eval-episodes",
            "4",
            "--initial-collection-steps",
            "100",
            "--gamma",
            "0.95",
        ])
        .args(extra)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "run failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn pretrain_run_plot_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("ckpt.bin");
    pretrain(dir.path(), &ckpt);
    assert!(ckpt.exists());
    assert!(dir.path().join("ckpt.bin.json").exists());

    let run_dir = dir.path().join("runs");
    run_controller(&ckpt, &run_dir, "nonmono", &[]);
    run_controller(&ckpt, &run_dir, "pex", &[]);

    let csv = fs::read_to_string(run_dir.join("nonmono.csv")).unwrap();
    assert!(csv.starts_with(CSV_HEADER));
    let rows = rows_from_csv(&csv).unwrap();
    // 2 seeds x 4 eval points.
    assert_eq!(rows.len(), 8);
    for row in &rows {
        assert_eq!(row.offline_count + row.online_count, row.step);
    }

    // JSON keeps full float precision; CSV rounds to 6 decimals.
    let json_rows =
        rows_from_json(&fs::read_to_string(run_dir.join("nonmono.json")).unwrap()).unwrap();
    assert_eq!(json_rows.len(), rows.len());
    for (j, c) in json_rows.iter().zip(&rows) {
        assert_eq!(
            (j.step, j.seed, j.offline_count, j.online_count),
            (c.step, c.seed, c.offline_count, c.online_count)
        );
        assert!((j.return_norm - c.return_norm).abs() < 1e-6);
        assert!((j.entropy_on - c.entropy_on).abs() < 1e-6);
    }

    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run_dir.join("nonmono.meta.json")).unwrap())
            .unwrap();
    let digest = meta["ckpt_digest"].as_str().unwrap().to_string();
    let pex_meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run_dir.join("pex.meta.json")).unwrap()).unwrap();
    // Both controllers consumed the identical pretrained checkpoint.
    assert_eq!(pex_meta["ckpt_digest"].as_str().unwrap(), digest);

    let svg_path = dir.path().join("fig.svg");
    let out = cli()
        .args(["plot", "--in"])
        .arg(&run_dir)
        .arg("--out")
        .arg(&svg_path)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "plot failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let svg = fs::read_to_string(&svg_path).unwrap();
    assert!(svg.starts_with("<svg"));
    assert!(svg.contains(">OurModel</text>"));
    assert!(svg.contains(">PEX_Online</text>"));
}

#[test]
fn identical_invocations_write_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("ckpt.bin");
    pretrain(dir.path(), &ckpt);

    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run_controller(&ckpt, &a, "buffer", &[]);
    run_controller(&ckpt, &b, "buffer", &[]);
    assert_eq!(
        fs::read(a.join("buffer.csv")).unwrap(),
        fs::read(b.join("buffer.csv")).unwrap()
    );
    assert_eq!(
        fs::read(a.join("buffer.json")).unwrap(),
        fs::read(b.join("buffer.json")).unwrap()
    );
}

#[test]
fn config_file_overrides_flags() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("ckpt.bin");
    pretrain(dir.path(), &ckpt);

    let cfg_path = dir.path().join("run.cfg");
    fs::write(
        &cfg_path,
        "# run overrides\nrho = 0.5\nupdate_timestep = 7\n",
    )
    .unwrap();
    let run_dir = dir.path().join("runs");
    run_controller(
        &ckpt,
        &run_dir,
        "nonmono",
        &["--rho", "0.2", "--config", cfg_path.to_str().unwrap()],
    );
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run_dir.join("nonmono.meta.json")).unwrap())
            .unwrap();
    assert_eq!(meta["controller_cfg"]["rho"].as_f64().unwrap(), 0.5);
    assert_eq!(
        meta["controller_cfg"]["update_timestep"].as_u64().unwrap(),
        7
    );

    let bad_cfg = dir.path().join("bad.cfg");
    fs::write(&bad_cfg, "no_such_knob = 1\n").unwrap();
    let out = cli()
        .args(["run", "--ckpt"])
        .arg(&ckpt)
        .args(["--controller", "nonmono", "--out"])
        .arg(dir.path().join("x"))
        .args(["--config", bad_cfg.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(!out.status.success());
}

#[test]
fn seed_offset_env_shifts_all_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("ckpt.bin");
    pretrain(dir.path(), &ckpt);

    let run_dir = dir.path().join("shifted");
    let out = cli()
        .args(["run", "--ckpt"])
        .arg(&ckpt)
        .args(["--controller", "offline", "--seeds", "0..1", "--out"])
        .arg(&run_dir)
        .args([
            "--online-steps",
            "1000",
            "--eval-interval",
            "500",
            "--eval-episodes",
            "2",
        ])
        .env("SWITCHRL_SEED_OFFSET", "100")
        .output()
        .unwrap();
    assert!(out.status.success());
    let rows = rows_from_csv(&fs::read_to_string(run_dir.join("offline.csv")).unwrap()).unwrap();
    let mut seeds: Vec<u64> = rows.iter().map(|r| r.seed).collect();
    seeds.sort_unstable();
    seeds.dedup();
    assert_eq!(seeds, vec![100, 101]);
}

#[test]
fn rejects_unknown_controller_and_tier() {
    let dir = tempfile::tempdir().unwrap();
    let env_path = dir.path().join("tiny.env");
    fs::write(&env_path, ENV_SPEC).unwrap();
    let out = cli()
        .args(["pretrain", "--env"])
        .arg(&env_path)
        .args(["--tier", "expert", "--out"])
        .arg(dir.path().join("c.bin"))
        .output()
        .unwrap();
    assert!(!out.status.success());

    let ckpt = dir.path().join("ckpt.bin");
    pretrain(dir.path(), &ckpt);
    let out = cli()
        .args(["run", "--ckpt"])
        .arg(&ckpt)
        .args(["--controller", "sac", "--out"])
        .arg(dir.path().join("x"))
        .output()
        .unwrap();
    assert!(!out.status.success());
}
