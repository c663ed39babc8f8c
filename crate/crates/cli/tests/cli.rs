use std::path::Path;
use std::process::{Command, Output};

fn beamlab(args: &[&str], dir: &Path, env: &[(&str, &str)]) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_beamlab"));
    c.args(args).current_dir(dir).env_remove("BEAMLAB_THREADS");
    for (k, v) in env {
        c.env(k, v);
    }
    c.output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn residual_example_writes_three_rows_and_a_fit() {
    let dir = tempfile::tempdir().unwrap();
    let o = beamlab(&["residual", "--surface", "flat_cylinder", "--h", "0.125,0.0625,0.03125"], dir.path(), &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("residual.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "h,residual,v_norm");
    assert_eq!(lines.len(), 4);
    let fit: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("residual.json")).unwrap()).unwrap();
    for key in ["model", "params", "r2"] {
        assert!(fit.get(key).is_some(), "missing {key}");
    }
    // One summary line on stdout.
    assert_eq!(String::from_utf8_lossy(&o.stdout).lines().count(), 1);
}

#[test]
fn negative_delta_prime_exits_with_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "[beam]\ndelta_prime = -0.5\n").unwrap();
    let o = beamlab(&["residual", "--config", "bad.toml", "--h", "0.125,0.0625"], dir.path(), &[]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("beam.delta_prime"), "{}", stderr(&o));
}

#[test]
fn every_unknown_key_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), "colour = 1\n[surface]\nradius = 2.0\n[grids]\nhh = [0.1]\n").unwrap();
    let o = beamlab(&["trace", "--config", "c.toml"], dir.path(), &[]);
    assert_eq!(code(&o), 1);
    let e = stderr(&o);
    for key in ["colour", "surface.radius", "grids.hh"] {
        assert!(e.contains(key), "{e}");
    }
}

#[test]
fn rejected_pair_exits_with_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    // ζ1 = ξ0 makes both geodesics coincide.
    let o = beamlab(&["admissible", "--point", "1,0.5", "--xi", "0,1", "--zeta1", "0,1"], dir.path(), &[]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let run = |out: &str, seed: &str, threads: &str| {
        let o = beamlab(
            &["xray", "--random", "6", "--field", "cos_x2:1", "--seed", seed, "--out", out],
            dir.path(),
            &[("BEAMLAB_THREADS", threads)],
        );
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        std::fs::read(dir.path().join(out).join("xray.csv")).unwrap()
    };
    let a = run("a", "11", "1");
    assert_eq!(a, run("b", "11", "1"));
    assert_eq!(a, run("c", "11", "2"));
    assert_ne!(a, run("d", "12", "1"));

    let res = |out: &str| {
        let o = beamlab(&["residual", "--h", "0.125,0.0625", "--out", out], dir.path(), &[]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        std::fs::read(dir.path().join(out).join("residual.csv")).unwrap()
    };
    assert_eq!(res("r1"), res("r2"));
}

#[test]
fn bad_thread_count_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = beamlab(&["trace"], dir.path(), &[("BEAMLAB_THREADS", "zero")]);
    assert_eq!(code(&o), 1);
}

#[test]
fn trace_writes_samples_and_footer() {
    let dir = tempfile::tempdir().unwrap();
    let o = beamlab(&["trace", "--point", "0.5,0.25", "--xi", "0.2,-1"], dir.path(), &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert!(csv.starts_with("t,x1,x2,xi1,xi2\r\n"));
    let foot: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("trace.json")).unwrap()).unwrap();
    for key in ["entry_time", "exit_time", "nontangential", "intersections"] {
        assert!(foot.get(key).is_some(), "missing {key}");
    }
    assert_eq!(foot["nontangential"], true);
    // Every float cell carries 17 significant digits.
    let row = csv.lines().nth(1).unwrap();
    for cell in row.split(',') {
        let mantissa = cell.split('e').next().unwrap().trim_start_matches('-').replace('.', "");
        assert_eq!(mantissa.len(), 17, "{cell}");
    }
}

#[test]
fn admissible_family_report_covers_every_grid_point() {
    let dir = tempfile::tempdir().unwrap();
    let o = beamlab(&["admissible", "--point", "1,0.5", "--xi", "0.6,0.8", "--grid-radius", "0.02", "--grid-n", "2"], dir.path(), &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let js: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("admissible.json")).unwrap()).unwrap();
    assert_eq!(js["members"].as_array().unwrap().len(), 8);
    assert_eq!(js["center"]["passed"], true);
}

#[test]
fn fbi_rejects_unknown_header_and_classifies_a_gaussian() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.csv"), "a,b,c\n0,0,1\n").unwrap();
    let o = beamlab(&["fbi", "--input", "bad.csv", "--alpha-grid", "0,0,1,0", "--h", "0.25,0.125,0.0625,0.03125"], dir.path(), &[]);
    assert_eq!(code(&o), 1);

    let mut s = String::from("x1,x2,value\n");
    let n = 81;
    for i in 0..n {
        for j in 0..n {
            let (x, y) = (-2.0 + 4.0 * i as f64 / (n - 1) as f64, -2.0 + 4.0 * j as f64 / (n - 1) as f64);
            s.push_str(&format!("{x},{y},{}\n", (-x * x - y * y).exp()));
        }
    }
    std::fs::write(dir.path().join("g.csv"), s).unwrap();
    let o = beamlab(
        &["fbi", "--input", "g.csv", "--alpha-grid", "0,0,0,1", "--h", "0.25,0.125,0.0625,0.03125", "--cutoff", "1.0,0.7"],
        dir.path(),
        &[],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("fbi.csv")).unwrap();
    assert!(csv.starts_with("alpha_x1,alpha_x2,alpha_xi1,alpha_xi2,c1,p,r2_exp,r2_pow,class"));
    assert!(csv.lines().nth(1).unwrap().ends_with("analytic_decay"));
}

#[test]
fn calderon_needs_a_config_and_a_field() {
    let dir = tempfile::tempdir().unwrap();
    let o = beamlab(&["calderon"], dir.path(), &[]);
    assert_eq!(code(&o), 1);
    std::fs::write(dir.path().join("c.toml"), "[grids]\nh = [0.25, 0.125, 0.0625, 0.03125]\n[field]\nfile = \"missing.csv\"\n").unwrap();
    let o = beamlab(&["calderon", "--config", "c.toml"], dir.path(), &[]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("missing.csv"), "{}", stderr(&o));
}

#[test]
fn beam_dumps_phase_and_amplitude_tables() {
    let dir = tempfile::tempdir().unwrap();
    let o = beamlab(
        &["beam", "--surface", "sphere_patch", "--point", "0,1.5708", "--xi", "0.4,1", "--dump-phase", "ph.json", "--dump-amp", "amp.csv"],
        dir.path(),
        &[],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let ph: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("ph.json")).unwrap()).unwrap();
    let times = ph["times"].as_array().unwrap().len();
    assert_eq!(ph["m"].as_array().unwrap().len(), times);
    // Im M(t) stays positive along the beam.
    assert!(ph["m"].as_array().unwrap().iter().all(|m| m[1].as_f64().unwrap() > 0.0));
    let amp = std::fs::read_to_string(dir.path().join("amp.csv")).unwrap();
    assert!(amp.starts_with("k,sup_norm,symbol_constant,bound"));
}
