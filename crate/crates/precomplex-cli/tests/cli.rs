use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_precomplex")).args(args).output().expect("binary runs")
}

fn report(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stderr)))
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn algebra_check_passes_and_reports_provenance() {
    let out = run(&["algebra-check", "--d", "3", "--samples", "20", "--tol", "identity=1e-11"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let r = report(&out);
    assert_eq!(r["schema_version"], 1);
    assert_eq!(r["command"], "algebra-check");
    assert_eq!(r["pass"], true);
    let tols = r["tolerances"].as_array().unwrap();
    let find = |n: &str| tols.iter().find(|t| t["name"] == n).unwrap().clone();
    assert_eq!(find("identity")["source"], "override");
    assert_eq!(find("identity")["value"], 1e-11);
    assert_eq!(find("projector_formula")["source"], "default");
    assert!(r["timings"]["total_seconds"].is_number());
}

#[test]
fn symbol_check_verdicts_drive_the_exit_status() {
    let out = run(&["symbol-check", "--chain", "bianchi", "--m", "1", "--level", "0", "--d", "2", "--no-timings"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert_eq!(report(&out)["results"]["verdicts"][0]["verdict"], "elliptic");

    let out = run(&["symbol-check", "--system", "hessian", "--m", "1", "--boundary", "tangential-only", "--no-timings"]);
    assert_eq!(out.status.code(), Some(1));
    let r = report(&out);
    assert_eq!(r["pass"], false);
    assert_eq!(r["results"]["verdicts"][0]["verdict"], "not_elliptic");
    assert_eq!(r["results"]["verdicts"][0]["witness"]["kind"], "boundary");
    assert!(stderr(&out).contains("FAIL"));
}

#[test]
fn cohomology_of_the_calabi_chain() {
    let out = run(&["cohomology", "--chain", "bianchi", "--m", "1", "--chart", "box", "--n", "16", "--metric", "flat", "--expect", "3,0"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let dims = &report(&out)["results"]["runs"][0]["dimensions"];
    assert_eq!(dims[0], serde_json::json!({"kind": "exact", "value": 3}));
    assert_eq!(dims[1], serde_json::json!({"kind": "exact", "value": 0}));
}

#[test]
fn malformed_configs_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("a.toml", "[domain]\nchart = \"box\"\nresolution = 8\n", "domain.resolution"),
        ("b.json", r#"{"chain": {"kind": "de_rham"}, "domain": {"n": "eight"}}"#, "domain.n"),
        ("c.toml", "[chain]\nkind = \"cubical\"\n", "chain.kind"),
        ("d.toml", "[chain]\nkind = \"de_rham\"\n[tolerances]\nnilpotency = 0\n", "tolerances.nilpotency"),
        ("e.toml", "[chain]\nkind = \"de_rham\"\n[tolerances]\nwobble = 1\n", "tolerances.wobble"),
        ("f.toml", "[chain]\nkind = \"bianchi\"\n", "chain.m"),
    ];
    for (name, text, key) in cases {
        let path = dir.path().join(name);
        std::fs::write(&path, text).unwrap();
        let out = run(&["correct", "--config", path.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(2), "{name}: {}", stderr(&out));
        assert!(stderr(&out).contains(&format!("`{key}`")), "{name}: {}", stderr(&out));
    }
    let out = run(&["greens-check"]);
    assert!(stderr(&out).contains("`operator.name`"));
}

#[test]
fn flags_override_config_values() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    std::fs::write(&path, "seed = 3\n[chain]\nkind = \"de_rham\"\n[domain]\nn = 12\n").unwrap();
    let out = run(&["cohomology", "--config", path.to_str().unwrap(), "--n", "8", "--no-timings"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let r = report(&out);
    assert_eq!(r["seed"], 3);
    assert_eq!(r["inputs"]["domain"]["n"], 8);
    assert_eq!(r["results"]["runs"][0]["domain"]["n"], 8);
}

#[test]
fn reports_are_byte_identical_for_a_seed() {
    let args = ["greens-check", "--operator", "d_G", "--source", "0,1", "--restricted", "--sweep", "n=8,16", "--seed", "9"];
    let a = run(&[&args[..], &["--no-timings"]].concat());
    let b = run(&[&args[..], &["--no-timings"]].concat());
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    // with timings, everything but the timings field matches
    let strip = |o: &Output| {
        let mut v = report(o);
        v.as_object_mut().unwrap().remove("timings");
        v
    };
    assert_eq!(strip(&run(&args)), strip(&run(&args)));
    let c = run(&["greens-check", "--operator", "d_G", "--source", "0,1", "--restricted", "--sweep", "n=8,16", "--seed", "10", "--no-timings"]);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn sweep_writes_orders_to_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("g.csv");
    let out = run(&["greens-check", "--operator", "d_G", "--source", "0,1", "--restricted", "--sweep", "n=8,16,32", "--csv", csv.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let mut rdr = csv::Reader::from_path(&csv).unwrap();
    assert_eq!(rdr.headers().unwrap(), vec!["n", "residual", "ratio", "order"]);
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 3);
    let order: f64 = rows[2][3].parse().unwrap();
    assert!((0.5..=1.6).contains(&order), "{order}");
}

#[test]
fn exported_operators_read_back() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["assemble", "--operator", "H", "--source", "0,0", "--n", "8", "--export-ops", dir.path().to_str().unwrap(), "--no-timings"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let r = report(&out);
    let name = r["results"]["exported"][0].as_str().unwrap();
    let m = precomplex::discrete_geometry::read_matrix_market(&dir.path().join(name)).unwrap();
    assert_eq!(m.nrows() as u64, r["results"]["operators"][0]["rows"].as_u64().unwrap());
    assert_eq!(m.nnz() as u64, r["results"]["operators"][0]["nnz"].as_u64().unwrap());
}

fn field_file(path: &Path, descriptor: &Value, values: Vec<f64>) {
    let v = serde_json::json!({ "descriptor": descriptor, "values": values });
    std::fs::write(path, serde_json::to_string(&v).unwrap()).unwrap();
}

#[test]
fn bvp_from_field_files() {
    let dir = tempfile::tempdir().unwrap();
    let sol = dir.path().join("psi.json");
    let base = ["solve-bvp", "--chain", "bianchi", "--m", "0", "--n", "8", "--no-timings"];
    let out = run(&[&base[..], &["--level", "1", "--manufactured", "--solution", sol.to_str().unwrap()]].concat());
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(report(&out)["results"]["recovery_error"].as_f64().unwrap() <= 1e-6);

    // feed a generic level-1 field as ξ at level 2: refused by condition 2
    let written: Value = serde_json::from_str(&std::fs::read_to_string(&sol).unwrap()).unwrap();
    let len = written["descriptor"]["length"].as_u64().unwrap() as usize;
    let xi = dir.path().join("xi.json");
    field_file(&xi, &written["descriptor"], (0..len).map(|i| ((i * 7919) % 13) as f64 - 6.0).collect());
    let out = run(&[&base[..], &["--level", "2", "--xi", xi.to_str().unwrap()]].concat());
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
    let r = report(&out);
    assert_eq!(r["results"]["refused"]["condition"], 2);
    assert!(stderr(&out).contains("FAIL integrability condition 2"));

    // a field file for the wrong level is rejected with the offending descriptor key
    let out = run(&[&base[..], &["--level", "1", "--xi", xi.to_str().unwrap()]].concat());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("descriptor.level"), "{}", stderr(&out));
}

#[test]
fn corrected_chain_is_saved() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["correct", "--chain", "twisted-de-rham", "--twist", "20", "--n", "8", "--save", dir.path().to_str().unwrap(), "--no-timings"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let stored = precomplex::precomplex_engine::load_chain(dir.path()).unwrap();
    assert_eq!(stored.corrected.len(), 2);
    let level = &report(&out)["results"]["runs"][0]["levels"][0];
    assert!(level["uncorrected_nilpotency"].as_f64().unwrap() >= 1e-2);
    assert!(level["nilpotency"].as_f64().unwrap() <= 1e-8);
}
