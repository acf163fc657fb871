use std::path::Path;
use std::process::{Command, Output};

fn flatlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flatlab")).args(args).output().unwrap()
}

fn body_without_header(path: &Path) -> String {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# flatlab "));
    lines.collect::<Vec<_>>().join("\n")
}

#[test]
fn estimate_emits_json_lines() {
    let out = flatlab(&["estimate", "--lambda", "-10,10", "--samples", "20000", "--seed", "9"]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(String::from_utf8(out.stdout).unwrap().trim()).unwrap();
    assert_eq!(v["N"], 20000);
    assert_eq!(v["seed"], 9);
    assert_eq!(v["reduction"], "none");
    let (lo, hi) = (v["ci_low"].as_f64().unwrap(), v["ci_high"].as_f64().unwrap());
    let exact = std::f64::consts::FRAC_2_PI * (1.0 / (10.0 * std::f64::consts::SQRT_2)).asin();
    assert!(lo <= exact && exact <= hi);
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(flatlab(&["estimate", "--lambda", "a,b"]).status.code(), Some(2));
    assert_eq!(flatlab(&["compare", "--family", "one-gap", "--n", "3"]).status.code(), Some(2));
    assert_eq!(flatlab(&["compare", "--family", "two-gap", "--n", "3", "--grid", "10"]).status.code(), Some(2));
    assert_eq!(flatlab(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn compare_is_reproducible_apart_from_the_header() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    for p in [&a, &b] {
        let out = flatlab(&[
            "compare", "--family", "one-gap", "--n", "3", "--grid", "10,30", "--samples", "20000", "--budget", "40000",
            "--seed", "4", "--out", p.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let body = body_without_header(&a);
    assert_eq!(body, body_without_header(&b));
    let header = body.lines().next().unwrap();
    for col in ["family", "T", "i_mc", "i_rec", "j_n", "a_n", "ratio_i_a", "flags"] {
        assert!(header.split(',').any(|c| c == col), "missing {col}");
    }
    assert_eq!(body.lines().count(), 3);
}

#[test]
fn lemmas_honours_config_and_reports_hard_failures_separately() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"equimeasurability_cases": 20, "hl_triples": 20, "conv_lists": 5, "pair_cases": 5,
            "one_d_cases": 5, "two_d_cases": 5, "two_d_small_cases": 5}"#,
    )
    .unwrap();
    let csv = dir.path().join("l.csv");
    let out = flatlab(&["lemmas", "--config", cfg.to_str().unwrap(), "--out", csv.to_str().unwrap()]);
    // Fewer cases can only lower the suite maxima, so the baselines hold.
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let body = body_without_header(&csv);
    assert!(body.starts_with("lemma,params,lhs,rhs,ratio,converged,vacuous"));

    std::fs::write(&cfg, r#"{"no_such_field": 1}"#).unwrap();
    assert_eq!(flatlab(&["lemmas", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn period_reports_exact_conjugate_symmetry() {
    let out = flatlab(&["period", "--n", "2", "--grid", "0,5", "--samples", "500", "--lambda", "1,0,-1"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let headers = rdr.headers().unwrap().clone();
    let re = headers.iter().position(|h| h == "conj_re_defect").unwrap();
    let im = headers.iter().position(|h| h == "conj_im_defect").unwrap();
    let rows: Vec<_> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 3);
    for r in rows {
        assert_eq!(r[re].parse::<f64>().unwrap(), 0.0);
        assert_eq!(r[im].parse::<f64>().unwrap(), 0.0);
    }
}
