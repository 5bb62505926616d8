use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

const SCHEMA: &str = "infowelfare.config/1";

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_infowelfare"))
}

fn write_config(dir: &Path, name: &str, cfg: &Value) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    p
}

fn run(args: &[&str], cfg: &Path) -> Output {
    bin().args(args).arg("--config").arg(cfg).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn report(o: &Output) -> Value {
    assert_eq!(code(o), 0, "stderr: {}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ces(theta: f64, hi: f64) -> Value {
    json!({"type": "constant_elasticity", "theta": theta, "p_hi": hi})
}

fn linear(a: f64, c: f64) -> Value {
    json!({"type": "linear_shift", "a": a, "c": c})
}

fn power(theta: f64) -> Value {
    json!({"type": "power_unit", "theta": theta})
}

fn config(family: Vec<Value>) -> Value {
    json!({"schema": SCHEMA, "family": family})
}

#[test]
fn validate_accepts_regular_ces_triple() {
    let dir = TempDir::new().unwrap();
    let family = [1.5, 1.6, 1.7].iter().map(|t| json!({"type": "constant_elasticity", "theta": t})).collect();
    let o = run(&["validate"], &write_config(dir.path(), "c.json", &config(family)));
    let r = report(&o);
    assert_eq!(r["result"]["passed"], true);
    assert_eq!(r["result"]["inclusion"]["holds"], true);
}

#[test]
fn validate_names_concavity_failure_for_untruncated_ces() {
    let dir = TempDir::new().unwrap();
    let cfg = config(vec![json!({"type": "constant_elasticity", "theta": 1.5, "p_hi": "inf"})]);
    let o = run(&["validate"], &write_config(dir.path(), "c.json", &cfg));
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("revenue is not concave"), "{}", stderr(&o));
    let r: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(r["result"]["types"][0]["concave_revenue"]["passed"], false);
}

#[test]
fn malformed_json_is_a_parse_error() {
    let dir = TempDir::new().unwrap();
    let p = dir.path().join("bad.json");
    std::fs::write(&p, "{\"schema\": \"infowelfare.config/1\",\n \"family\": [\n").unwrap();
    let o = run(&["validate"], &p);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("parse error"), "{}", stderr(&o));
    assert!(stderr(&o).contains("line"));
}

#[test]
fn unknown_field_and_bad_alpha_are_usage_errors() {
    let dir = TempDir::new().unwrap();
    let cfg = config(vec![json!({"type": "power_unit", "theta": 0.5, "thetaa": 1})]);
    let o = run(&["classify"], &write_config(dir.path(), "a.json", &cfg));
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("family[0]"), "{}", stderr(&o));

    let cfg = config(vec![power(0.5), power(0.9)]);
    let p = write_config(dir.path(), "b.json", &cfg);
    assert_eq!(code(&run(&["classify", "--alpha", "1.5"], &p)), 2);
    assert_eq!(code(&bin().arg("classify").output().unwrap()), 2);
    assert_eq!(code(&bin().arg("nonsense").output().unwrap()), 2);
}

#[test]
fn classify_reproduces_example_verdicts() {
    let dir = TempDir::new().unwrap();
    let cases = [
        (vec![linear(1.0, 0.2), linear(1.2, 0.0)], vec!["0.25", "0.5", "1"], "IMG"),
        (vec![linear(1.0, 0.0), linear(1.2, 0.2)], vec!["0.5", "0.75", "1"], "IMB"),
        (vec![ces(2.0, 4.0), ces(1.6, 4.0)], vec!["0.5"], "IMB"),
        (vec![ces(2.15, 4.0), ces(1.6, 4.0)], vec!["0.5"], "NonMonotone"),
    ];
    for (k, (family, alphas, want)) in cases.into_iter().enumerate() {
        let p = write_config(dir.path(), &format!("c{k}.json"), &config(family));
        let mut args = vec!["classify"];
        for a in &alphas {
            args.extend(["--alpha", a]);
        }
        let r = report(&run(&args, &p));
        let verdicts = r["result"]["verdicts"].as_array().unwrap();
        assert_eq!(verdicts.len(), alphas.len());
        for v in verdicts {
            assert_eq!(v["verdict"], want, "case {k}: {v}");
            assert!(!v["diagnostics"]["prices"].as_array().unwrap().is_empty());
        }
    }
}

#[test]
fn classify_reports_spanning_failure() {
    let dir = TempDir::new().unwrap();
    let p = write_config(dir.path(), "c.json", &config(vec![ces(1.5, 4.0), ces(1.7, 4.0), ces(2.0, 4.0)]));
    let r = report(&run(&["classify"], &p));
    let v = &r["result"]["verdicts"][0];
    assert_eq!(v["verdict"], "NonMonotone");
    assert_eq!(v["failed_condition"], "spanning");
    assert_eq!(v["witness"]["type"], "type");
}

#[test]
fn alpha_scan_table_is_ordered() {
    let dir = TempDir::new().unwrap();
    let mut cfg = config(vec![ces(2.0, 4.0), ces(1.6, 4.0)]);
    cfg["alpha_scan"] = json!([0.1, 0.3, 0.5, 0.7, 0.9, 1.0]);
    let r = report(&run(&["classify", "--alpha-scan"], &write_config(dir.path(), "c.json", &cfg)));
    let scan = r["result"]["scan"].as_array().unwrap();
    assert_eq!(scan.len(), 6);
    let imb: Vec<bool> = scan.iter().map(|v| v["verdict"] == "IMB" || v["verdict"] == "Neutral").collect();
    // Once information is bad it stays bad for larger weights.
    assert!(imb.windows(2).all(|w| !w[0] || w[1]), "{imb:?}");
    assert!(imb[2]);
}

#[test]
fn affine_shortcut_reports_threshold() {
    let dir = TempDir::new().unwrap();
    let base = json!({"type": "density_power", "c1": 1.0, "c2": 1.0, "c3": 1.0, "c4": 1.0, "p_lo": 0.2, "p_hi": 4.0});
    let family = vec![
        json!({"type": "affine", "scale": 1.0, "shift": 0.0, "base": base}),
        json!({"type": "affine", "scale": 1.5, "shift": 0.75, "base": base}),
    ];
    let p = write_config(dir.path(), "c.json", &config(family));
    let r = report(&run(&["classify", "--affine", "--alpha", "0.2", "--alpha", "0.5"], &p));
    let rows = r["result"]["affine"].as_array().unwrap();
    assert_eq!(rows[0]["report"]["verdict"], "IMG");
    assert_eq!(rows[1]["report"]["verdict"], "IMB");
    let from = rows[0]["report"]["imb_from"].as_f64().unwrap();
    assert!((from - 1.0 / 3.0).abs() < 0.01, "{from}");

    let p = write_config(dir.path(), "d.json", &config(vec![ces(2.0, 4.0), ces(1.6, 4.0)]));
    assert_eq!(code(&run(&["classify", "--affine"], &p)), 1);
}

#[test]
fn bounds_table_has_one_row_per_variant() {
    let dir = TempDir::new().unwrap();
    let sweep: Vec<Value> = [1.9, 1.8, 1.7, 1.6]
        .iter()
        .map(|t| json!({"label": format!("theta={t}"), "family": [ces(1.5, 4.0), ces(*t, 4.0), ces(2.0, 4.0)]}))
        .collect();
    let mut cfg = config(vec![ces(1.5, 4.0)]);
    cfg["sweep"] = Value::Array(sweep);
    cfg["prior"] = json!([0.3, 0.4, 0.3]);
    let p = write_config(dir.path(), "c.json", &cfg);
    let out = dir.path().join("bounds.json");
    let o = run(&["bounds", "--resolution", "40", "--out", out.to_str().unwrap()], &p);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let rows = r["result"]["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 4);
    for row in rows {
        assert!(row["lower_rate"].as_f64().unwrap() < 0.0);
        assert!(row["upper_rate"].as_f64().unwrap() > 0.0);
        assert!(row["magnitude_lower"].is_number());
    }
    let csv = std::fs::read_to_string(dir.path().join("bounds.lambda.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "variant,alpha,mu_1,mu_2,mu_3,lambda_lo,lambda_hi");
    assert_eq!(lines.count(), 4 * 41 * 42 / 2);
}

#[test]
fn bounds_of_img_family_have_zero_lower_rate() {
    let dir = TempDir::new().unwrap();
    let p = write_config(dir.path(), "c.json", &config(vec![linear(1.0, 0.2), linear(1.2, 0.0)]));
    let r = report(&run(&["bounds", "--alpha", "1"], &p));
    let row = &r["result"]["rows"][0];
    assert!(row["lower_rate"].as_f64().unwrap() >= -1e-6, "{row}");
    assert!(row["magnitude_lower"].is_null());
}

#[test]
fn bounds_reject_families_without_partial_inclusion() {
    let dir = TempDir::new().unwrap();
    let p = write_config(dir.path(), "c.json", &config(vec![linear(1.0, 0.0), linear(3.0, 0.0)]));
    let o = run(&["bounds"], &p);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("partial inclusion"), "{}", stderr(&o));
}

#[test]
fn field_is_bit_exact_across_thread_counts() {
    let dir = TempDir::new().unwrap();
    let mut cfg = config(vec![power(0.9), power(0.01), power(0.3)]);
    cfg["alpha"] = json!(1.0);
    let p = write_config(dir.path(), "c.json", &cfg);
    let a = run(&["field", "--resolution", "40", "--threads", "1"], &p);
    let b = run(&["field", "--resolution", "40", "--threads", "4"], &p);
    assert_eq!(code(&a), 0, "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "mu_1,mu_2,mu_3,vbest_2,vbest_3,vworst_2,vworst_3,lambda_hi,lambda_lo");
    let rows: Vec<Vec<String>> = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
    assert_eq!(rows.len(), 39 * 38 / 2);
    for r in &rows {
        let hi: f64 = r[7].parse().unwrap();
        let lo: f64 = r[8].parse().unwrap();
        assert!(hi >= 0.0 && lo <= 0.0);
        // 17 significant digits in scientific notation.
        assert_eq!(r[0].split('e').next().unwrap().replace(['.', '-'], "").len(), 17, "{}", r[0]);
    }
}

#[test]
fn field_needs_three_types() {
    let dir = TempDir::new().unwrap();
    let p = write_config(dir.path(), "c.json", &config(vec![power(0.5), power(0.9)]));
    let o = run(&["field"], &p);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("three types"));
}

#[test]
fn witness_is_replayable() {
    let dir = TempDir::new().unwrap();
    let mut cfg = config(vec![ces(1.5, 4.0), ces(1.7, 4.0), ces(2.0, 4.0)]);
    let p = write_config(dir.path(), "a.json", &cfg);
    assert_eq!(code(&run(&["witness"], &p)), 2);

    cfg["prior"] = json!([0.3, 0.4, 0.3]);
    cfg["search_trials"] = json!(200);
    let p = write_config(dir.path(), "b.json", &cfg);
    let a = run(&["witness", "--seed", "7"], &p);
    let b = run(&["witness", "--seed", "7", "--threads", "2"], &p);
    assert_eq!(a.stdout, b.stdout);
    let r = report(&a);
    let row = &r["result"][0];
    assert_eq!(row["seed"], 7);
    assert!(row["improving"]["delta"].as_f64().unwrap() > 0.0);
    assert!(row["worsening"]["delta"].as_f64().unwrap() < 0.0);
    assert!(row["worsening"]["segmentation"]["atoms"].is_array());
}

#[test]
fn tabulated_demand_loads_from_csv() {
    let dir = TempDir::new().unwrap();
    let rows: String = (0..=40)
        .map(|k| {
            let p = k as f64 / 40.0;
            format!("{p},{}\n", 1.0 - p)
        })
        .collect();
    std::fs::write(dir.path().join("lin.csv"), format!("price,quantity\n{rows}")).unwrap();
    let cfg = config(vec![json!({"type": "tabulated", "csv": "lin.csv"}), power(1.5)]);
    let r = report(&run(&["validate"], &write_config(dir.path(), "c.json", &cfg)));
    let pstar = r["result"]["types"][0]["monopoly_price"].as_f64().unwrap();
    assert!((pstar - 0.5).abs() < 1e-6, "{pstar}");

    std::fs::write(dir.path().join("bad.csv"), "0,1\n0.5,0.5\n0.5,0.2\n").unwrap();
    let cfg = config(vec![json!({"type": "tabulated", "csv": "bad.csv"})]);
    let o = run(&["validate"], &write_config(dir.path(), "d.json", &cfg));
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("increase strictly"));
}

#[test]
fn reports_echo_hash_and_settings() {
    let dir = TempDir::new().unwrap();
    let p = write_config(dir.path(), "c.json", &config(vec![power(0.5), power(0.9)]));
    let a = report(&run(&["classify"], &p));
    let b = report(&run(&["classify"], &p));
    assert_eq!(a, b);
    let hash = a["config_sha256"].as_str().unwrap();
    assert_eq!(hash.len(), 64);
    assert!(hash.chars().all(|c| c.is_ascii_hexdigit()));
    assert_eq!(a["settings"]["tolerances"]["root"], 1e-10);
    assert_eq!(a["settings"]["base_type"], 1);
    assert_eq!(a["settings"]["alphas"], json!([0.5]));

    let q = write_config(dir.path(), "d.json", &config(vec![power(0.5), power(0.8)]));
    assert_ne!(report(&run(&["classify"], &q))["config_sha256"], a["config_sha256"]);
}

#[test]
fn shipped_configs_load() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let p = entry.unwrap().path();
        if p.extension().is_some_and(|e| e == "json") {
            let o = run(&["classify", "--alpha", "0.5"], &p);
            assert_eq!(code(&o), 0, "{}: {}", p.display(), stderr(&o));
            seen += 1;
        }
    }
    assert!(seen >= 4);
}
