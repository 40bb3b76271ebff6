use orbit_core::{GVector, RealSemisimpleAlgebra};
use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn orbit() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_orbit"));
    c.env_remove("ORBIT_TOL");
    c
}

fn run(args: &[&str]) -> Output {
    orbit().args(args).output().unwrap()
}

fn json_ok(args: &[&str]) -> Value {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn error_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(text.lines().last().unwrap()).unwrap()
}

fn csv_table(text: &[u8]) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut r = csv::Reader::from_reader(text);
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(|x| x.parse().unwrap()).collect()).collect();
    (header, rows)
}

fn csv_ok(args: &[&str]) -> (Vec<String>, Vec<Vec<f64>>) {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    csv_table(&out.stdout)
}

fn col(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"))
}

fn write_element(dir: &Path, name: &str, v: &GVector) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string(v).unwrap()).unwrap();
    p
}

fn coords(v: &Value) -> (Vec<f64>, Vec<f64>) {
    let get = |k: &str| v[k].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    (get("re"), get("im"))
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < tol)
}

#[test]
fn algebra_init_writes_valid_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sl2.json");
    let out = run(&["algebra", "init", "--family", "sl", "--n", "2", "--out", path.to_str().unwrap()]);
    assert!(out.status.success());
    let j: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(j["dim"], 3);
    let check = json_ok(&["algebra", "check", "--algebra", path.to_str().unwrap()]);
    assert_eq!(check["result"]["passes"], true);
}

#[test]
fn corrupted_theta_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    let alg = RealSemisimpleAlgebra::sl_n_r(2).unwrap();
    let mut j = alg.to_json();
    j.theta[0][0] = 0.5;
    std::fs::write(&path, serde_json::to_string(&j).unwrap()).unwrap();
    let out = run(&["algebra", "check", "--algebra", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let e = error_json(&out);
    assert_eq!(e["error"]["code"], 2);
    assert_eq!(e["error"]["kind"], "validation");
}

#[test]
fn missing_file_is_an_io_error() {
    let out = run(&["algebra", "inspect", "--algebra", "/nonexistent/algebra.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_json(&out)["error"]["kind"], "io");
}

#[test]
fn inspect_reports_cartan_signature() {
    // sl(3, R) = so(3) + symmetric traceless: B < 0 on the 3-dim k, B > 0 on the 5-dim p.
    let r = json_ok(&["algebra", "inspect", "--algebra", "sl3"]);
    let r = &r["result"];
    assert_eq!(r["dim"], 8);
    assert_eq!(r["dim_k"], 3);
    assert_eq!(r["dim_p"], 5);
    assert_eq!(r["killing_on_k"]["negative"], 3);
    assert_eq!(r["killing_on_p"]["positive"], 5);
    assert_eq!(r["killing_on_k"]["positive"], 0);
}

#[test]
fn core_of_e_is_e() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("core.json");
    let out = run(&["core", "--algebra", "sl2", "--element", "e=1", "--out", out_path.to_str().unwrap()]);
    assert!(out.status.success());
    let j: Value = serde_json::from_str(&std::fs::read_to_string(&out_path).unwrap()).unwrap();
    let r = &j["result"];
    assert!((r["m_norm_sq"].as_f64().unwrap() - 2.0).abs() < 1e-12);
    assert_eq!(r["steps"], 0);
    let (re, im) = coords(&r["core"]);
    assert!(close(&re, &[1.0, 0.0, 0.0], 1e-12) && close(&im, &[0.0; 3], 1e-12));
    let csv = std::fs::read(dir.path().join("core.csv")).unwrap();
    let (header, rows) = csv_table(&csv);
    assert_eq!(&header[..3], &["t", "m_norm_sq", "a"]);
    assert_eq!(rows.len(), 1);
}

#[test]
fn core_of_rotated_seed_is_critical() {
    let alg = RealSemisimpleAlgebra::sl_n_r(3).unwrap();
    let t = orbit_core::sl2kit::sl_partition_triple(3, &[3]).unwrap();
    let mut k = GVector::zeros(8);
    k.re[alg.basis_index("E12").unwrap()] = 0.7;
    k.re[alg.basis_index("E21").unwrap()] = -0.7;
    let mut p = GVector::zeros(8);
    p.re[alg.basis_index("H1").unwrap()] = 0.4;
    p.re[alg.basis_index("E13").unwrap()] = 0.3;
    p.re[alg.basis_index("E31").unwrap()] = 0.3;
    let seed = alg.adjoint_exp(&k, &alg.adjoint_exp(&p, &t.e)).scale(3.0);
    let dir = tempfile::tempdir().unwrap();
    let path = write_element(dir.path(), "seed.json", &seed);
    let r = json_ok(&["core", "--algebra", "sl3", "--element", path.to_str().unwrap()]);
    let r = &r["result"];
    assert!((r["a"].as_f64().unwrap() + 2.0).abs() < 1e-6);
    assert!((r["m_norm_sq"].as_f64().unwrap() - 2.0).abs() < 1e-6);
    assert!(r["nilpotency_residual"].as_f64().unwrap() < 1e-10);
}

#[test]
fn non_nilpotent_seed_is_rejected() {
    let out = run(&["core", "--algebra", "sl2", "--element", "h=1"]);
    assert_eq!(out.status.code(), Some(2));
    let e = error_json(&out);
    assert!(e["error"]["message"].as_str().unwrap().contains("not nilpotent"));
}

#[test]
fn instanton_from_phi0_is_exact() {
    for (alg, e) in [("sl2", "e=1"), ("sl3", "E12=1; E23=1")] {
        let (h, rows) = csv_ok(&["flow", "instanton", "--algebra", alg, "--element", e, "--t1", "50", "--samples", "11"]);
        let (it, inorm, ierr) = (col(&h, "t"), col(&h, "norm"), col(&h, "exact_error"));
        let n0 = rows[0][inorm];
        for r in &rows {
            assert!(r[ierr] < 1e-8, "{alg}: {}", r[ierr]);
            assert!((r[inorm] - n0 / (1.0 + r[it])).abs() < 1e-8);
        }
    }
}

#[test]
fn instanton_blowup_is_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let neg = |v: [f64; 3]| serde_json::json!({ "re": v, "im": [0.0, 0.0, 0.0] });
    let hom = serde_json::json!({ "e": neg([-1.0, 0.0, 0.0]), "f": neg([0.0, -1.0, 0.0]), "h": neg([0.0, 0.0, -1.0]) });
    let path = dir.path().join("neg.json");
    std::fs::write(&path, hom.to_string()).unwrap();
    let out = run(&["flow", "instanton", "--algebra", "sl2", "--element", "e=1", "--hom", path.to_str().unwrap(), "--t1", "2"]);
    assert_eq!(out.status.code(), Some(3));
    let e = error_json(&out);
    assert_eq!(e["error"]["kind"], "numerical");
    assert!(e["error"]["message"].as_str().unwrap().contains("blew up"));
}

#[test]
fn gradient_flow_is_monotone() {
    let (h, rows) = csv_ok(&["flow", "gradient", "--algebra", "sl3", "--element", "E12=1; E23=0.3; E13=2"]);
    let m = col(&h, "m_norm_sq");
    assert!(rows.len() > 2);
    for w in rows.windows(2) {
        assert!(w[1][m] <= w[0][m] + 1e-12);
    }
    assert!((rows.last().unwrap()[m] - 2.0).abs() < 1e-6);
}

#[test]
fn deform_probe_reproduces_family() {
    let (h, rows) = csv_ok(&["flow", "deform", "--algebra", "sl2", "--element", "e=1", "--probe", "--t1", "20", "--samples", "5"]);
    let (it, is, id) = (col(&h, "t"), col(&h, "s"), col(&h, "distance"));
    for r in &rows {
        let (t, s) = (r[it], r[is]);
        assert!((s * (2.0 * s * t).exp() - 1.0).abs() < 1e-12);
        // f_t(nu_t) = ie + s h + i s^2 f
        let want = [("e_re", 0.0), ("e_im", 1.0), ("f_re", 0.0), ("f_im", s * s), ("h_re", s), ("h_im", 0.0)];
        for (name, w) in want {
            assert!((r[col(&h, name)] - w).abs() < 1e-10, "t = {t}: {name}");
        }
    }
    for w in rows.windows(2) {
        assert!(w[1][id] < w[0][id]);
    }
}

#[test]
fn expand_matches_library() {
    let r = json_ok(&["expand", "--algebra", "sl3", "--element", "E12=1; E23=1", "--order", "8"]);
    let r = &r["result"];
    let orders: Vec<u64> = r["normal_orders"].as_array().unwrap().iter().map(|x| x.as_u64().unwrap()).collect();
    assert_eq!(orders, vec![2, 4, 4]);
    assert_eq!(r["slope"]["predicted"].as_f64().unwrap(), -6.5);

    let raw = RealSemisimpleAlgebra::sl_n_r(3).unwrap();
    let t = orbit_core::sl2kit::sl_partition_triple(3, &[3]).unwrap();
    let alg = orbit_core::sl2kit::normalize_for_orbit(&raw, &t).unwrap();
    let ctx = orbit_core::expansion::ExpansionContext::new(&alg, &t.to_hom(&alg)).unwrap();
    let c: Vec<f64> = (0..3).map(|j| 0.1 * (-0.6f64).powi(j)).collect();
    let s = ctx.build(&ctx.free_from_coords(&c), 8).unwrap();
    let lib = orbit_core::expansion::residual_slope(&alg, &s, 1e2, 1e4, 16);
    assert!((r["slope"]["slope"].as_f64().unwrap() - lib.slope).abs() < 1e-6);
}

#[test]
fn sekiguchi_of_ie_in_sl2() {
    let r = json_ok(&["sekiguchi", "--algebra", "sl2", "--element", "e=i"]);
    assert_eq!(r["result"]["direction"], "gr_to_p");
    let (re, im) = coords(&r["result"]["partner"]["point"]);
    assert!(close(&re, &[0.0, 0.0, 0.5], 1e-10));
    assert!(close(&im, &[0.5, 0.5, 0.0], 1e-10));
}

fn strip_timing(mut v: Value) -> Value {
    v["result"]["report"]["wall_time_s"] = Value::Null;
    v
}

#[test]
fn flow_bound_sweep_holds_and_is_deterministic() {
    let args = ["verify", "flow-bound", "--algebra", "sl3", "--samples", "300", "--seed-rng", "17"];
    let one = json_ok(&[&args[..], &["--jobs", "1"]].concat());
    let three = json_ok(&[&args[..], &["--jobs", "3"]].concat());
    assert_eq!(one["result"]["holds"], true);
    assert_eq!(one["result"]["report"]["samples"], 300);
    assert_eq!(one["result"]["orbits"], 2);
    assert_eq!(one["seed_rng"], 17);
    assert_eq!(one["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(strip_timing(one), strip_timing(three));
    let other = json_ok(&["verify", "flow-bound", "--algebra", "sl3", "--samples", "300", "--seed-rng", "18"]);
    assert_ne!(other["result"]["report"]["min_diff"], Value::Null);
}

#[test]
fn chebyshev_sweep_holds() {
    let r = json_ok(&["verify", "chebyshev", "--samples", "2000", "--seed-rng", "5"]);
    assert_eq!(r["result"]["holds"], true);
    assert_eq!(r["result"]["failures"], 0);
    assert_eq!(r["result"]["single_pair_equality"], true);
}

#[test]
fn tolerance_from_environment() {
    let out = orbit().env("ORBIT_TOL", "1e-7").args(["algebra", "inspect", "--algebra", "sl2"]).output().unwrap();
    let j: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(j["tol"].as_f64().unwrap(), 1e-7);
    let out = orbit().env("ORBIT_TOL", "1e-7").args(["--tol", "1e-5", "algebra", "inspect", "--algebra", "sl2"]).output().unwrap();
    let j: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(j["tol"].as_f64().unwrap(), 1e-5);
}

#[test]
fn json_table_output() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("flow.json");
    let out = run(&["flow", "deform", "--algebra", "sl2", "--element", "h=0.5; e=i; f=0.25i", "--t1", "1", "--samples", "3", "--out", path.to_str().unwrap()]);
    assert!(out.status.success());
    let j: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(j["result"]["rows"].as_array().unwrap().len(), 3);
    assert_eq!(j["result"]["columns"][0], "t");
}
