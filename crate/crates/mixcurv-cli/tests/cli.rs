use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use sha2::{Digest, Sha256};

fn mixcurv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mixcurv")).args(args).output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stderr)))
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../mixcurv/data").join(format!("{name}.spec"))
}

fn scratch(name: &str, text: &str) -> PathBuf {
    let p = std::env::temp_dir().join(format!("mixcurv-cli-{}-{name}", std::process::id()));
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn inspect_reports_vanishing_reeb_ricci_with_spec_hash() {
    let out = mixcurv(&["inspect", "--gallery", "r3_contact", "--points", "(0,0,0)"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert!(v["results"][0]["ric_n"].as_f64().unwrap().abs() < 1e-12);
    assert!((v["results"][0]["tt_tilde"].as_f64().unwrap() - 2.0).abs() < 1e-12);
    let text = std::fs::read_to_string(data("r3_contact")).unwrap();
    let hash: String = Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect();
    assert_eq!(v["config"]["spec_sha256"], hash);
    assert_eq!(v["config"]["seed"], 0);
    assert!(v["pass"].is_null());
}

#[test]
fn flat_product_has_zero_invariants() {
    let out = mixcurv(&["inspect", "--gallery", "euclidean_product", "--random", "3", "--seed", "2"]);
    assert_eq!(out.status.code(), Some(0));
    for r in json(&out)["results"].as_array().unwrap() {
        for k in ["s_mix", "s_ex", "s_ex_tilde", "hh", "hh_tilde", "tt", "tt_tilde", "mean2", "mean2_tilde"] {
            assert_eq!(r[k].as_f64().unwrap(), 0.0, "{k}");
        }
    }
}

#[test]
fn configuration_errors_exit_with_two() {
    let outside = mixcurv(&["inspect", "--gallery", "r3_contact", "--points", "(5,0,0)"]);
    assert_eq!(outside.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&outside.stderr).contains("outside the domain"));
    assert_eq!(mixcurv(&["inspect", "--gallery", "nope"]).status.code(), Some(2));
    assert_eq!(mixcurv(&["inspect"]).status.code(), Some(2));
    let both = ["inspect", "--gallery", "s3_hopf", "--spec", "x.spec"];
    assert_eq!(mixcurv(&both).status.code(), Some(2));
    let wide = mixcurv(&["inspect", "--gallery", "r3_contact", "--box", "[-2,1] x [0,1] x [0,1]"]);
    assert_eq!(wide.status.code(), Some(2));
    let flow = mixcurv(&["verify", "el", "--gallery", "s7_three_sasakian", "--regime", "flow"]);
    assert_eq!(flow.status.code(), Some(2));
}

#[test]
fn gallery_suite_passes_on_flat_product() {
    let out = mixcurv(&["verify", "gallery", "--gallery", "euclidean_product"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["pass"], true);
}

#[test]
fn hopf_is_critical_in_both_restricted_regimes() {
    let out = mixcurv(&["verify", "el", "--gallery", "s3_hopf", "--regime", "bar-g-perp", "--regime", "bar-g-top"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    let checks: Vec<&str> = v["results"].as_array().unwrap().iter().map(|r| r["check"].as_str().unwrap()).collect();
    assert_eq!(checks, ["general_perp", "general_mixed", "general_top"]);
}

#[test]
fn contact_flow_block_is_expected_to_be_noncritical() {
    let out = mixcurv(&["verify", "el", "--gallery", "r3_contact", "--regime", "flow"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["results"][0]["expectation"], "noncritical");
    assert!(v["results"][0]["residual"].as_f64().unwrap() > 1e-5);

    // the same structure from its file has no recorded expectation
    let spec = data("r3_contact");
    let plain = mixcurv(&["verify", "el", "--spec", spec.to_str().unwrap(), "--regime", "flow"]);
    assert_eq!(plain.status.code(), Some(1));
    let told = mixcurv(&["verify", "el", "--spec", spec.to_str().unwrap(), "--regime", "flow", "--noncritical", "flow_perp"]);
    assert_eq!(told.status.code(), Some(0));
}

#[test]
fn identical_runs_give_identical_bytes() {
    let args = ["verify", "identities", "--gallery", "s3_hopf", "--random", "3", "--seed", "11"];
    let (a, b) = (mixcurv(&args), mixcurv(&args));
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(json(&a)["config"]["seed"], 11);
    let other = mixcurv(&["verify", "identities", "--gallery", "s3_hopf", "--random", "3", "--seed", "12"]);
    assert_ne!(a.stdout, other.stdout);
}

#[test]
fn csv_flattens_tensors_with_frame_indices() {
    let out = mixcurv(&["inspect", "--gallery", "s3_hopf", "--random", "2", "--format", "csv"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    let header: Vec<&str> = lines[0].split(',').collect();
    for col in ["r_d.m[0][0]", "r_d.m[2][2]", "point[1]", "s_mix"] {
        assert!(header.contains(&col), "{col}");
    }
    assert_eq!(lines[1].split(',').count(), header.len());
}

#[test]
fn gallery_listing_and_filters() {
    let v = json(&mixcurv(&["gallery"]));
    let names: Vec<&str> = v["results"].as_array().unwrap().iter().map(|r| r["name"].as_str().unwrap()).collect();
    assert!(names.len() >= 8 && names.contains(&"euclidean_product"));

    let r3 = json(&mixcurv(&["gallery", "--gallery", "r3_contact"]));
    let expected = r3["results"][0]["expected"].as_array().unwrap();
    let shape = expected.iter().find(|e| e["quantity"] == "shape_op_d").unwrap();
    assert_eq!(shape["value"]["matrix"], serde_json::json!([[0.0, -1.0], [-1.0, 0.0]]));

    let crit = json(&mixcurv(&["gallery", "--critical", "bar-g-perp"]));
    let names: Vec<&str> = crit["results"].as_array().unwrap().iter().map(|r| r["name"].as_str().unwrap()).collect();
    assert!(names.contains(&"s3_hopf") && !names.contains(&"r3_contact"));
}

#[test]
fn variation_files_are_checked_against_their_class() {
    let good = scratch(
        "good.var",
        "# mixed block only\nclass = g-perp\nbump = cos(x0)^6*cos(x1)^6*cos(x2)^6\nb 0 1 = 1 + x2\n",
    );
    let out = mixcurv(&["verify", "variations", "--gallery", "r3_contact", "--variation", good.to_str().unwrap(), "--random", "2"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert_eq!(v["config"]["class"], "g-perp");
    assert!(v["results"].as_array().unwrap().iter().any(|r| r["check"] == "frame_evolution"));

    let bad = scratch("bad.var", "class = g-top\nb 0 1 = 1\n");
    let out = mixcurv(&["verify", "variations", "--gallery", "r3_contact", "--variation", bad.to_str().unwrap(), "--random", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("declared"));
}

#[test]
fn random_variations_with_integral_checks() {
    let args = ["verify", "variations", "--gallery", "r3_contact", "--class", "g-perp", "--random", "1", "--grid", "8"];
    let out = mixcurv(&args);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    let checks: Vec<&str> = v["results"].as_array().unwrap().iter().map(|r| r["check"].as_str().unwrap()).collect();
    assert!(checks.contains(&"divergence_lemma") && checks.contains(&"rescaled_action_derivative"));
}

#[test]
fn report_goes_to_the_out_file() {
    let path = std::env::temp_dir().join(format!("mixcurv-cli-{}-out.json", std::process::id()));
    let out = mixcurv(&["verify", "identities", "--gallery", "r3_contact", "--random", "1", "--out", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(v["pass"], true);
}
