//! CLI acceptance: contour output (criterion 8) plus end-to-end behavior of
//! the binary: determinism, exit codes, file-model ingestion.

use std::path::PathBuf;
use std::process::Command;

fn dfforge() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dfforge"))
}

fn temp_path(name: &str) -> PathBuf {
    let mut path = std::env::temp_dir();
    path.push(format!("dfforge-test-{}-{name}", std::process::id()));
    path
}

/// Criterion 8: the contour command emits geometric level sets with
/// successive ratio 0.4 for the three preset axial ratios, and the spherical
/// preset's contours are symmetric in L_z to machine precision.
#[test]
fn criterion_8_contour_output() {
    for &q in &[1.0, 0.9, 0.8] {
        let out = temp_path(&format!("contour-q{q}.json"));
        let status = dfforge()
            .args([
                "contour",
                "--builtin",
                &format!("binney:v0=1,q={q}"),
                "--e-steps",
                "61",
                "--lz-steps",
                "61",
                "--out",
            ])
            .arg(&out)
            .status()
            .expect("run dfforge contour");
        assert!(status.success());
        let data: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
        let levels: Vec<f64> = data["levels"]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_f64().unwrap())
            .collect();
        assert!(levels.len() >= 5, "q={q}: expected a ladder of levels");
        for pair in levels.windows(2) {
            let ratio = pair[1] / pair[0];
            assert!((ratio - 0.4).abs() < 1e-14, "q={q}: level ratio {ratio}");
        }
        assert!(!data["boundary"].as_array().unwrap().is_empty());

        if q == 1.0 {
            // Collect every contour point and demand an exact mirror image.
            let mut points: Vec<(f64, f64)> = Vec::new();
            for level in data["contours"].as_array().unwrap() {
                for line in level["polylines"].as_array().unwrap() {
                    for p in line.as_array().unwrap() {
                        let xy = p.as_array().unwrap();
                        points.push((xy[0].as_f64().unwrap(), xy[1].as_f64().unwrap()));
                    }
                }
            }
            assert!(!points.is_empty());
            for &(e, lz) in &points {
                let mirrored = points
                    .iter()
                    .any(|&(e2, lz2)| (e2 - e).abs() <= 1e-12 && (lz2 + lz).abs() <= 1e-12);
                assert!(mirrored, "no mirror image for contour point ({e}, {lz})");
            }
        }
        std::fs::remove_file(&out).ok();
    }
    println!("[PASS] criterion 8: contour levels descend by exact 0.4 ratios; q=1 output is L_z-symmetric");
}

#[test]
fn eval_grid_is_byte_deterministic() {
    let args = [
        "eval-grid",
        "--builtin",
        "lyndenbell:a=0.5",
        "--e-min",
        "0",
        "--e-max",
        "1",
        "--e-steps",
        "12",
        "--lz-min",
        "-0.5",
        "--lz-max",
        "0.5",
        "--lz-steps",
        "7",
    ];
    let run = || {
        let output = dfforge()
            .args(args)
            .output()
            .expect("run dfforge eval-grid");
        assert!(output.status.success());
        output.stdout
    };
    let first = run();
    let second = run();
    assert_eq!(
        first, second,
        "identical invocations must be byte-identical"
    );
    let text = String::from_utf8(first).unwrap();
    assert!(text.starts_with("energy,Lz,f\n"));
    // Grid rows are energy-major: 12 * 7 rows plus the header.
    assert_eq!(text.lines().count(), 1 + 12 * 7);
}

#[test]
fn eval_grid_values_match_the_closed_form() {
    // The a = 0 finite-mass model has the single closed-form component
    // (2^7 * 3 / 7) (2^(3/2) pi^2)^(-1) eps^(7/2) / (4 pi G); rows at eps = 0
    // are exactly zero.
    let output = dfforge()
        .args([
            "eval-grid",
            "--builtin",
            "lyndenbell:a=0",
            "--e-min",
            "0",
            "--e-max",
            "1",
            "--e-steps",
            "2",
            "--lz-min",
            "0",
            "--lz-max",
            "0.5",
            "--lz-steps",
            "2",
        ])
        .output()
        .unwrap();
    assert!(output.status.success());
    let text = String::from_utf8(output.stdout).unwrap();
    let rows: Vec<Vec<f64>> = text
        .lines()
        .skip(1)
        .map(|line| line.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 4);
    let coeff = 128.0 * 3.0
        / 7.0
        / (2f64.powf(1.5) * std::f64::consts::PI.powi(2))
        / (4.0 * std::f64::consts::PI);
    for row in rows {
        let expected = coeff * row[0].powf(3.5);
        assert!(
            (row[2] - expected).abs() <= 1e-12 * expected.abs().max(1e-300),
            "f({}, {}) = {} vs {expected}",
            row[0],
            row[1],
            row[2]
        );
    }
    // A flattened logarithmic-model grid is finite everywhere.
    let output = dfforge()
        .args([
            "eval-grid",
            "--builtin",
            "binney:v0=1,q=0.9",
            "--e-steps",
            "9",
            "--lz-steps",
            "9",
        ])
        .output()
        .unwrap();
    assert!(output.status.success());
    for line in String::from_utf8(output.stdout).unwrap().lines().skip(1) {
        let f: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!(f.is_finite());
    }
}

#[test]
fn verify_exit_codes_distinguish_failures() {
    // Flattened admissible model: everything passes.
    let ok = dfforge()
        .args(["verify", "--builtin", "binney:v0=1,q=0.8", "--out"])
        .arg(temp_path("verify-ok.json"))
        .status()
        .unwrap();
    assert_eq!(ok.code(), Some(0));
    // Prolate model: round trip fine, positivity violated -> exit 4.
    let prolate = dfforge()
        .args(["verify", "--builtin", "binney:v0=1,q=1.1", "--out"])
        .arg(temp_path("verify-prolate.json"))
        .status()
        .unwrap();
    assert_eq!(prolate.code(), Some(4));
}

#[test]
fn verify_report_schema() {
    let out = temp_path("verify-report.json");
    let status = dfforge()
        .args(["verify", "--builtin", "lyndenbell:a=0.5", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["model"], "lyndenbell:a=0.5");
    assert!(report["round_trip_max_rel_err"].as_f64().unwrap() < 1e-6);
    assert!(report["moments_max_rel_err"].as_f64().unwrap() < 1e-6);
    assert_eq!(report["positivity"]["negative_points"], 0);
    std::fs::remove_file(&out).ok();
}

#[test]
fn file_model_end_to_end() {
    let model_path = temp_path("model.toml");
    std::fs::write(
        &model_path,
        r#"
convention = "relative-bounded"
G = 1.0

[[terms]]
family = "pure-radial"
n = 0
beta = 1.0
coeff = [{ c = 1.0, p = 2.0 }]
"#,
    )
    .unwrap();
    // Synthesize dump mentions the single component.
    let output = dfforge()
        .args(["synthesize", "--model"])
        .arg(&model_path)
        .output()
        .unwrap();
    assert!(output.status.success());
    let dump: serde_json::Value = serde_json::from_slice(&output.stdout).unwrap();
    assert_eq!(dump["components"].as_array().unwrap().len(), 1);
    assert_eq!(dump["variant"], "epsilon");
    // Verify against stations on the psi = 1 surface, where the density
    // recovery of the quadratic coefficient must hold.
    let status = dfforge()
        .args(["verify", "--model"])
        .arg(&model_path)
        .args(["--out"])
        .arg(temp_path("file-verify.json"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    // Unknown fields are parse errors that name the field.
    std::fs::write(&model_path, "convention = \"sideways\"\nterms = []").unwrap();
    let output = dfforge()
        .args(["synthesize", "--model"])
        .arg(&model_path)
        .output()
        .unwrap();
    assert!(!output.status.success());
    assert!(String::from_utf8_lossy(&output.stderr).contains("convention"));
    std::fs::remove_file(&model_path).ok();
}

#[test]
fn quad_tol_env_override_is_accepted() {
    let output = dfforge()
        .env("DFFORGE_QUAD_TOL", "1e-9")
        .args([
            "eval-grid",
            "--builtin",
            "fricke:p=2.5,n=0",
            "--e-steps",
            "3",
            "--lz-steps",
            "3",
            "--e-max",
            "1",
        ])
        .output()
        .unwrap();
    assert!(output.status.success());
    let bad = dfforge()
        .env("DFFORGE_QUAD_TOL", "banana")
        .args(["synthesize", "--builtin", "fricke:p=2.5,n=0"])
        .output()
        .unwrap();
    assert!(!bad.status.success());
}
