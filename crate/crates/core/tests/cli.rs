use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn dhflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dhflow"))
        .args(args)
        .output()
        .expect("binary runs")
}

struct Run {
    dir: TempDir,
}

impl Run {
    fn new() -> Self {
        Run {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn config(&self, name: &str, value: &Value) -> PathBuf {
        let p = self.path(name);
        fs::write(&p, serde_json::to_string_pretty(value).unwrap()).unwrap();
        p
    }

    /// Runs `command` quietly and returns the exit code and output directory.
    fn exec(
        &self,
        command: &str,
        config: &Path,
        out: &str,
        extra: &[&str],
    ) -> (i32, PathBuf, String) {
        let out = self.path(out);
        let mut args = vec![
            command,
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--quiet",
        ];
        args.extend_from_slice(extra);
        let o = dhflow(&args);
        (
            o.status.code().unwrap(),
            out,
            String::from_utf8_lossy(&o.stderr).into_owned(),
        )
    }
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn circle_flow(t_max: f64) -> Value {
    json!({
        "domain": {"n1": 8, "n2": 8},
        "target": {"kind": "sphere", "dim": 1, "radius": 1.0},
        "flow": {"alpha": 1.1, "dt": 0.05, "t_max": t_max},
        "initial": {"kind": "perturbed", "base": {"kind": "constant"}, "amplitude": 0.3},
        "seed": 5
    })
}

fn csv_rows(p: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(p).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines
        .map(|l| l.split(',').map(String::from).collect())
        .collect();
    (header, rows)
}

#[test]
fn spectrum_reports_kernel_dimensions() {
    let run = Run::new();
    let c = run.config(
        "s.json",
        &json!({"domain": {"n1": 8, "n2": 8}, "target": {"kind": "sphere", "dim": 2, "radius": 1.0}}),
    );
    let (code, out, _) = run.exec("spectrum", &c, "s", &[]);
    assert_eq!(code, 0);
    let report = read_json(&out.join("spectrum.json"));
    assert_eq!(report["kernel_dim"], 4);
    assert_eq!(report["dimension"], 384);
    assert!((report["gap"].as_f64().unwrap() - 1.0).abs() < 1e-10);
    for f in ["FORMAT", "manifest.json", "resolved_config.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    assert_eq!(
        fs::read_to_string(out.join("FORMAT")).unwrap().trim(),
        "dhflow-output/1"
    );

    let c = run.config(
        "a.json",
        &json!({
            "domain": {"n1": 8, "n2": 8, "spin": ["antiperiodic", "periodic"]},
            "target": {"kind": "sphere", "dim": 2, "radius": 1.0}
        }),
    );
    let (code, out, _) = run.exec("spectrum", &c, "a", &[]);
    assert_eq!(code, 0);
    let report = read_json(&out.join("spectrum.json"));
    assert_eq!(report["kernel_dim"], 0);
    assert!((report["gap"].as_f64().unwrap() - 0.5).abs() < 1e-10);
}

#[test]
fn configuration_errors_exit_with_two() {
    let run = Run::new();
    let bad = run.path("bad.json");
    fs::write(
        &bad,
        r#"{"domain": {"n1": 8, "n2": 8, "bogus": 1}, "target": {"kind": "sphere", "dim": 2, "radius": 1.0}}"#,
    )
    .unwrap();
    let (code, _, stderr) = run.exec("flow", &bad, "o", &[]);
    assert_eq!(code, 2);
    let err: Value = serde_json::from_str(stderr.trim()).unwrap();
    assert_eq!(err["error"], "config");
    assert_eq!(err["line"], 1);
    assert!(err["column"].as_u64().unwrap() > 0);
    assert!(err["message"].as_str().unwrap().contains("bogus"));

    fs::write(&bad, "{\"domain\": {\"n1\": 8,\n").unwrap();
    let (code, _, stderr) = run.exec("spectrum", &bad, "o", &[]);
    assert_eq!(code, 2);
    assert_eq!(
        serde_json::from_str::<Value>(stderr.trim()).unwrap()["line"],
        2
    );

    let mut cfg = circle_flow(1.0);
    cfg["flow"]["alpha"] = json!(0.5);
    let c = run.config("alpha.json", &cfg);
    assert_eq!(run.exec("flow", &c, "o", &[]).0, 2);
}

#[test]
fn stationary_flow_exits_cleanly() {
    let run = Run::new();
    let c = run.config(
        "w.json",
        &json!({
            "domain": {"n1": 8, "n2": 8},
            "target": {"kind": "sphere", "dim": 1, "radius": 1.0},
            "flow": {"alpha": 1.0, "dt": 0.05, "t_max": 50.0, "spinor": "disabled"},
            "initial": {"kind": "perturbed", "base": {"kind": "winding", "k1": 1, "k2": 0}, "amplitude": 0.1},
            "seed": 3
        }),
    );
    let (code, out, _) = run.exec("flow", &c, "w", &[]);
    assert_eq!(code, 0);
    assert_eq!(read_json(&out.join("events.json"))["outcome"], "Stationary");
}

#[test]
fn flow_output_is_reproducible_and_monotone() {
    let run = Run::new();
    let mut cfg = circle_flow(1.0);
    cfg["output"] = json!({"checkpoint_stride": 10});
    cfg["flow"]["dense_limit"] = json!(2000);
    let c = run.config("f.json", &cfg);
    let (code, a, _) = run.exec("flow", &c, "a", &[]);
    assert_eq!(code, 0);
    let (code, b, _) = run.exec("flow", &c, "b", &[]);
    assert_eq!(code, 0);
    let series = fs::read(a.join("series.csv")).unwrap();
    assert_eq!(series, fs::read(b.join("series.csv")).unwrap());
    assert_eq!(
        fs::read(a.join("final.ckpt")).unwrap(),
        fs::read(b.join("final.ckpt")).unwrap()
    );
    assert_eq!(
        read_json(&a.join("manifest.json"))["config_hash"],
        read_json(&b.join("manifest.json"))["config_hash"]
    );

    let (header, rows) = csv_rows(&a.join("series.csv"));
    assert_eq!(
        header,
        [
            "t",
            "E_alpha",
            "E_dirichlet",
            "dissipation",
            "gap_lambda",
            "kernel_dim",
            "psi_l2",
            "map_residual",
            "spinor_residual",
            "event"
        ]
    );
    assert_eq!(rows.len(), 21);
    let energy: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    for w in energy.windows(2) {
        assert!(w[1] <= w[0] + 1e-10 * energy[0]);
    }
    for r in &rows {
        let psi: f64 = r[6].parse().unwrap();
        assert!((psi - 1.0).abs() < 1e-12);
        // 17 significant digits in scientific notation.
        assert_eq!(
            r[1].split('e')
                .next()
                .unwrap()
                .replace(['-', '.'], "")
                .len(),
            17
        );
    }

    // The resolved configuration reproduces the run.
    let (code, c2, _) = run.exec("flow", &a.join("resolved_config.json"), "c", &[]);
    assert_eq!(code, 0);
    assert_eq!(series, fs::read(c2.join("series.csv")).unwrap());
    assert_eq!(
        read_json(&a.join("manifest.json"))["config_hash"],
        read_json(&c2.join("manifest.json"))["config_hash"]
    );

    // Resuming from the step-10 checkpoint continues bit for bit.
    let mut resume = cfg.clone();
    resume["initial"] =
        json!({"kind": "checkpoint", "path": a.join("checkpoints/step_00000010.ckpt")});
    let r = run.config("r.json", &resume);
    let (code, d, _) = run.exec("flow", &r, "d", &[]);
    assert_eq!(code, 0);
    let (_, resumed) = csv_rows(&d.join("series.csv"));
    assert_eq!(resumed[1..], rows[11..]);
    assert_eq!(
        fs::read(a.join("final.ckpt")).unwrap(),
        fs::read(d.join("final.ckpt")).unwrap()
    );
}

#[test]
fn seed_flag_overrides_the_config() {
    let run = Run::new();
    let c = run.config("f.json", &circle_flow(0.2));
    let (_, a, _) = run.exec("flow", &c, "a", &["--seed", "9"]);
    let (_, b, _) = run.exec("flow", &c, "b", &[]);
    assert_eq!(read_json(&a.join("resolved_config.json"))["seed"], 9);
    assert_ne!(
        fs::read(a.join("series.csv")).unwrap(),
        fs::read(b.join("series.csv")).unwrap()
    );
}

#[test]
fn continuation_with_one_stage_is_a_flow() {
    let run = Run::new();
    let mut cfg = circle_flow(0.5);
    cfg["continuation"] = json!({"schedule": [1.1]});
    let c = run.config("c.json", &cfg);
    let (code, cont, _) = run.exec("continue", &c, "cont", &[]);
    assert_eq!(code, 0);
    let (code, flow, _) = run.exec("flow", &c, "flow", &[]);
    assert_eq!(code, 0);
    assert_eq!(
        fs::read(cont.join("stage_00/series.csv")).unwrap(),
        fs::read(flow.join("series.csv")).unwrap()
    );
    let report = read_json(&cont.join("continuation.json"));
    assert_eq!(report["completed"], true);
    assert_eq!(report["stages"].as_array().unwrap().len(), 1);

    for bad in [
        json!([1.1, 1.2]),
        json!([1.1, 1.1]),
        json!([]),
        json!([0.9]),
    ] {
        cfg["continuation"]["schedule"] = bad;
        let c = run.config("bad.json", &cfg);
        let (code, _, stderr) = run.exec("continue", &c, "bad", &[]);
        assert_eq!(code, 2, "{stderr}");
    }
}

#[test]
fn continuation_runs_every_stage() {
    let run = Run::new();
    let mut cfg = circle_flow(0.5);
    cfg["flow"]["alpha"] = json!(1.2);
    cfg["continuation"] = json!({"schedule": [1.2, 1.1, 1.05]});
    let c = run.config("c.json", &cfg);
    let (code, out, _) = run.exec("continue", &c, "cont", &[]);
    assert_eq!(code, 0);
    let report = read_json(&out.join("continuation.json"));
    let stages = report["stages"].as_array().unwrap();
    assert_eq!(stages.len(), 3);
    for (k, stage) in stages.iter().enumerate() {
        assert!(out.join(format!("stage_{k:02}/series.csv")).exists());
        assert!((stage["psi_l2"].as_f64().unwrap() - 1.0).abs() < 1e-12);
        assert!(stage["concentration"]["flagged"]
            .as_array()
            .unwrap()
            .is_empty());
    }
}

fn validate_config(tolerances: Value) -> Value {
    json!({
        "domain": {"n1": 16, "n2": 16},
        "target": {"kind": "sphere", "dim": 2, "radius": 1.0},
        "validate": {"maps": 2, "distance_pairs": 500, "transport_pairs": 100, "tolerances": tolerances}
    })
}

#[test]
fn validation_passes_and_reports_failures_by_name() {
    let run = Run::new();
    let c = run.config("v.json", &validate_config(json!({})));
    let (code, a, stderr) = run.exec("validate", &c, "a", &[]);
    assert_eq!(code, 0, "{stderr}");
    let report = read_json(&a.join("validation.json"));
    assert_eq!(report["passed"], true);
    let checks = report["checks"].as_array().unwrap();
    assert!(checks.len() >= 8);
    for check in checks {
        assert_ne!(check["status"], "fail", "{check}");
    }

    let c = run.config(
        "broken.json",
        &validate_config(json!({"hermiticity": 1e-30})),
    );
    let (code, b, _) = run.exec("validate", &c, "b", &[]);
    assert_eq!(code, 1);
    let report = read_json(&b.join("validation.json"));
    assert_eq!(report["passed"], false);
    let failed: Vec<&str> = report["checks"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|c| c["status"] == "fail")
        .map(|c| c["name"].as_str().unwrap())
        .collect();
    assert_eq!(failed, ["hermiticity"]);
}
