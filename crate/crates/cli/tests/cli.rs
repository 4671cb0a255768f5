use std::process::Command;

use serde_json::Value;

fn stopcert(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_stopcert"))
        .args(args)
        .env_remove("STOPCERT_SEED")
        .output()
        .unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8(out.stdout).unwrap(),
        String::from_utf8(out.stderr).unwrap(),
    )
}

fn json(args: &[&str]) -> (i32, Value) {
    let mut all = vec!["--json"];
    all.extend_from_slice(args);
    let (code, out, err) = stopcert(&all);
    let v = serde_json::from_str(&out).unwrap_or_else(|e| panic!("{e}: {out} {err}"));
    (code, v)
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(stopcert(&["frobnicate"]).0, 2);
    assert_eq!(stopcert(&["preexp", "no-such-model.json", "--poly", "x"]).0, 2);
    let (code, _, err) = stopcert(&["preexp", "markov", "--poly", "x1 +"]);
    assert_eq!(code, 2);
    assert!(err.starts_with("error:"), "{err}");
    assert_eq!(stopcert(&["past", "nested_inner", "--h", "n - y", "--K", "1", "--eps", "1/20"]).0, 2);
    assert_eq!(stopcert(&["simulate", "hare", "--runs", "0"]).0, 2);
}

#[test]
fn validate_demonic_gives_witness() {
    let (code, v) = json(&["validate", "demonic"]);
    assert_eq!(code, 1);
    let fail = v["locations"].as_array().unwrap().iter().find(|l| l["verdict"] == "fail").unwrap();
    assert!(fail["witness"].is_array());
    assert_eq!(fail["enabled"].as_array().unwrap().len(), 2);
    assert_eq!(json(&["validate", "hare"]).0, 0);
}

#[test]
fn preexp_location_filter() {
    let (code, v) = json(&["preexp", "hare", "--poly", "x2 - k", "--loc", "l0"]);
    assert_eq!(code, 0);
    let pieces = v["pieces"].as_array().unwrap();
    assert_eq!(pieces.len(), 2);
    assert!(pieces.iter().all(|p| p["location"] == "l0"));
    // the loop keeps x2 - k; the exit step only advances k
    assert_eq!(pieces[0]["poly"], "x2 - k");
    assert_eq!(pieces[1]["poly"], "x2 - k - 1");
}

#[test]
fn params_override_model_constants() {
    let (_, v1) = json(&["past", "nested_inner", "--h", "n - y", "--K", "-1/5", "--eps", "1/20"]);
    let (_, v3) = json(&["--param", "n=3", "past", "nested_inner", "--h", "n - y", "--K", "-1/5", "--eps", "1/20"]);
    assert_eq!(v1["bound"], "24");
    assert_eq!(v3["bound"], "64");
}

#[test]
fn past_failure_exits_1() {
    let (code, v) = json(&["past", "nested_inner", "--h", "n - y", "--K", "-1/5", "--eps", "1/10"]);
    assert_eq!(code, 1);
    assert!(v["error"].as_str().unwrap().contains("preE"));
}

#[test]
fn synth_linear_hare_and_betting() {
    let (code, v) = json(&["synth-linear", "hare"]);
    assert_eq!(code, 0);
    assert_eq!(v["invariants"].as_array().unwrap().len(), 2);
    assert_eq!(v["reports"].as_array().unwrap().len(), 2);
    assert_eq!(v["reports"][0]["method"], "linear-PDB");
    assert_eq!(v["reports"][0]["evidence"]["precondition"], "PDB");

    let (code, v) = json(&["synth-linear", "betting"]);
    assert_eq!(code, 0);
    assert_eq!(v["invariants"][0]["pdb"]["verdict"], "unbounded-evidence");
    assert!(v["reports"].as_array().unwrap().is_empty());

    let (code, v) = json(&["synth-linear", "hare", "--past-h", "x2 - x1", "--K", "-9", "--eps", "3/2"]);
    assert_eq!(code, 0);
    assert!(!v["past"]["bound"].is_null());
}

#[test]
fn synthesized_certificate_verifies_and_tampering_is_caught() {
    let dir = tempfile::tempdir().unwrap();
    let cert = dir.path().join("cert.json");
    let sdp = dir.path().join("sdp.json");
    let (code, v) = json(&[
        "synth-sos",
        "markov",
        "--degree",
        "2",
        "--eps",
        "0.2",
        "--homogeneous",
        "--out",
        cert.to_str().unwrap(),
        "--dump-sdp",
        sdp.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    assert_eq!(v["alpha"], "4/5");
    assert_eq!(v["certificate"]["verification"]["passed"], true);
    assert_eq!(v["reports"][0]["correction_factor"], "1/6");
    let dumped: Value = serde_json::from_str(&std::fs::read_to_string(&sdp).unwrap()).unwrap();
    assert_eq!(dumped["format"], "stopcert-sdp/1");

    let (code, v) = json(&["verify-certificate", "markov", cert.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert_eq!(v["passed"], true);

    let mut text: Value = serde_json::from_str(&std::fs::read_to_string(&cert).unwrap()).unwrap();
    text["v"][0]["gram"][0][0] = Value::String("0.6".into());
    std::fs::write(&cert, text.to_string()).unwrap();
    let (code, out, _) = stopcert(&["verify-certificate", "markov", cert.to_str().unwrap()]);
    assert_eq!(code, 1);
    assert!(out.starts_with("REJECTED"), "{out}");
}

#[test]
fn infeasible_synthesis_exits_1() {
    let (code, v) = json(&["synth-sos", "example2", "--degree", "2"]);
    assert_eq!(code, 1);
    assert_eq!(v["feasible"], false);
}

#[test]
fn simulate_is_seeded() {
    let args = ["simulate", "hare", "--runs", "500", "--seed", "7"];
    let (code, a) = json(&args);
    assert_eq!(code, 0);
    assert_eq!(a, json(&args).1);
    assert_eq!(a["runs"], 500);

    let env = Command::new(env!("CARGO_BIN_EXE_stopcert"))
        .args(["--json", "simulate", "hare", "--runs", "500"])
        .env("STOPCERT_SEED", "7")
        .output()
        .unwrap();
    assert_eq!(serde_json::from_slice::<Value>(&env.stdout).unwrap(), a);

    let (code, v) = json(&["simulate", "markov", "--expr", "x1 - x2", "--at", "2", "--runs", "2000", "--exact"]);
    assert_eq!(code, 0);
    let mean = v["mean"].as_f64().unwrap();
    let se = v["stderr"].as_f64().unwrap();
    assert!((mean - 25.0 / 36.0).abs() <= 4.0 * se, "{v}");
}
