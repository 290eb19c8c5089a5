use std::path::Path;
use std::process::{Command, Output};

fn radcom(dir: &Path, config: &str, args: &[&str]) -> Output {
    let cfg = dir.join("cfg.json");
    std::fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_radcom"))
        .args(["--config", cfg.to_str().unwrap(), "--out-dir", dir.join("out").to_str().unwrap()])
        .args(args)
        .output()
        .unwrap()
}

fn header(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap().lines().next().unwrap().to_owned()
}

const SMALL: &str = r#"{"n_users": 2, "n_irs": 6}"#;

#[test]
fn solve_case1_writes_trace() {
    let d = tempfile::tempdir().unwrap();
    let trace = d.path().join("t1.csv");
    let out = radcom(d.path(), SMALL, &["solve-case1", "--trace", trace.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(header(&trace), "outer_iter,rho,objective,violation_xi,power_w");
}

#[test]
fn solve_case2_writes_trace_and_dump() {
    let d = tempfile::tempdir().unwrap();
    let trace = d.path().join("t2.csv");
    let dump = d.path().join("conic.txt");
    let out = radcom(
        d.path(),
        SMALL,
        &["solve-case2", "--no-xcorr", "--trace", trace.to_str().unwrap(), "--dump-conic", dump.to_str().unwrap()],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(header(&trace), "ao_iter,power_w,max_rank_ratio,phase_modulus_min");
    assert!(std::fs::read_to_string(&dump).unwrap().starts_with("# conic standard form"));
}

#[test]
fn sweep_and_beampattern_csv_columns() {
    let d = tempfile::tempdir().unwrap();
    let out = radcom(d.path(), SMALL, &["sweep", "--var", "K", "--values", "1,2", "--trials", "2", "--schemes", "penalty_case1"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(header(&d.path().join("out/sweep_K.csv")), "scheme,sweep_var,sweep_value,trial,seed,power_dbm,feasible,iters,wall_ms");
    let rows = std::fs::read_to_string(d.path().join("out/sweep_K.csv")).unwrap();
    assert_eq!(rows.lines().count(), 5);

    let out = radcom(d.path(), SMALL, &["beampattern", "--eps", "inf,1"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let bp = d.path().join("out/beampattern_eps_inf.csv");
    assert_eq!(header(&bp), "theta_deg,power,power_normalized_db");
    assert_eq!(std::fs::read_to_string(&bp).unwrap().lines().count(), 180);
    assert!(d.path().join("out/beampattern.svg").exists());
}

#[test]
fn exit_codes() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(radcom(d.path(), r#"{"n_irs": 0}"#, &["solve-case1"]).status.code(), Some(2));
    assert_eq!(radcom(d.path(), r#"{"no_such_key": 1}"#, &["solve-case1"]).status.code(), Some(2));
    assert_eq!(radcom(d.path(), SMALL, &["sweep", "--schemes", "nope"]).status.code(), Some(2));
    // a single antenna cannot serve two users above 0 dB at once
    let out = radcom(d.path(), r#"{"n_tx": 1, "n_users": 2, "n_irs": 4}"#, &["sweep", "--values", "4", "--trials", "2", "--schemes", "sdr_no_irs"]);
    assert_eq!(out.status.code(), Some(3));
}
