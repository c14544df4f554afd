use std::path::Path;
use std::process::Command;

use nanowire_cli::config::ConfigError;
use nanowire_cli::output::{fmt_f64, split_csv};
use nanowire_cli::{parse_config, RunConfig};

fn parse(text: &str) -> Result<nanowire_cli::LoadedConfig, ConfigError> {
    parse_config(text, Path::new(".").to_path_buf())
}

fn nanowire(args: &[&str], config: &Path, out: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_nanowire"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

const SMALL: &str = r#"
[grid]
n_y = 8
n_z = [9, 9]
n_x = 17
length = 1.0

[kinetic]
etas = [0.5, 0.25, 0.125]

[kinetic.scenario]
cells = 60
momentum_nodes = 24
reference_steps = 200
"#;

#[test]
fn empty_file_gets_defaults_and_a_stable_hash() {
    let a = parse("").unwrap();
    let b = parse("\n# nothing here\n").unwrap();
    assert_eq!(a.config, RunConfig::default());
    assert_eq!(a.hash, b.hash);
    assert_eq!(a.hash.len(), 64);
    let changed = parse("[solver]\ndt = 0.02\n").unwrap();
    assert_ne!(changed.hash, a.hash);
    // Spelling out a default does not change the content.
    assert_eq!(parse("[solver]\ndt = 0.01\n").unwrap().hash, a.hash);
}

#[test]
fn negative_lattice_potential_names_assumption_1_1() {
    let err = parse("[bloch.potential]\nkind = \"cosine\"\nmean = -1.0\namplitude = 0.0\n").unwrap_err();
    assert!(matches!(err, ConfigError::Assumption(_)));
    assert!(err.to_string().contains("violates Assumption 1.1"), "{err}");
}

#[test]
fn inverted_alpha_bounds_name_assumption_2_2() {
    let err = parse("[physics]\nalpha_bounds = [2.0, 1.0]\n").unwrap_err();
    assert!(err.to_string().contains("violates Assumption 2.2"), "{err}");
    let err = parse("[physics]\nalpha = [[1.0, 0.5, 1.0], [0.4, 1.0, 1.0], [1.0, 1.0, 1.0]]\n").unwrap_err();
    assert!(err.to_string().contains("Assumption 2.2"), "{err}");
    let err = parse("[physics]\nalpha_bounds = [0.5, 0.9]\nalpha = [[1.0, 1.0, 1.0], [1.0, 1.0, 1.0], [1.0, 1.0, 1.0]]\n")
        .unwrap_err();
    assert!(err.to_string().contains("outside"), "{err}");
}

#[test]
fn other_assumptions_are_checked_at_load() {
    let err = parse("[physics]\nboundary_density = 0.0\n").unwrap_err();
    assert!(err.to_string().contains("violates Assumption 3.3"), "{err}");
    let err = parse("[physics]\ndiffusion = -1.0\n").unwrap_err();
    assert!(err.to_string().contains("violates Assumption 3.1"), "{err}");
    let err = parse("[physics.initial]\nkind = \"bump\"\ncenter = 0.5\nwidth = 0.1\nheight = -5.0\n").unwrap_err();
    assert!(err.to_string().contains("violates Assumption 3.2"), "{err}");
}

#[test]
fn schema_errors_point_at_the_field() {
    let err = parse("[grid]\nn_x = \"many\"\n").unwrap_err();
    assert!(matches!(err, ConfigError::Schema(_)));
    assert!(err.to_string().contains("n_x"), "{err}");
    let err = parse("[solver]\nunknown_knob = 1\n").unwrap_err();
    assert!(err.to_string().contains("unknown_knob"), "{err}");
}

#[test]
fn numbers_round_trip_with_17_digits() {
    for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0] {
        assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
    }
    assert_eq!(fmt_f64(1.0 / 3.0), "3.3333333333333331e-1");
}

#[test]
fn kinetic_sweep_emits_one_row_per_eta() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("small.toml");
    std::fs::write(&config, SMALL).unwrap();
    let out = dir.path().join("out");
    let run = nanowire(&["kinetic-sweep"], &config, &out);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let text = std::fs::read_to_string(out.join("kinetic_sweep.csv")).unwrap();
    assert!(!text.contains('\r'));
    let (header, body) = split_csv(&text);
    assert_eq!(body.len(), 3);
    let hash = parse(SMALL).unwrap().hash;
    assert!(header.iter().any(|l| l.contains(&hash)));
    assert!(header.iter().any(|l| l.starts_with("# tool: nanowire ")));
    assert!(header.iter().any(|l| l.starts_with("# grid: ")));
    assert_eq!(header.last().unwrap(), &"# columns: eta,error,order,steps,leakage");
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("kinetic_sweep.json")).unwrap()).unwrap();
    assert_eq!(json["header"]["config_sha256"], hash.as_str());
    assert_eq!(json["rows"].as_array().unwrap().len(), 3);
}

#[test]
fn bloch_reproduces_the_free_table() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("free.toml");
    std::fs::write(&config, "[grid]\nn_y = 16\nn_z = [17, 17]\n\n[bloch]\nbands = 3\n").unwrap();
    let out = dir.path().join("out");
    let run = nanowire(&["bloch"], &config, &out);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("bloch.json")).unwrap()).unwrap();
    let energies = json["energies"].as_array().unwrap();
    let discrete = json["discrete_free_energies"].as_array().unwrap();
    for (a, b) in energies.iter().zip(discrete) {
        let (a, b) = (a.as_f64().unwrap(), b.as_f64().unwrap());
        assert!((a - b).abs() <= 1e-8 * b, "{a} vs {b}");
    }
    for e in json["relative_errors"].as_array().unwrap() {
        // Second-order discretization error at h = 1/16.
        assert!(e.as_f64().unwrap() < 0.02);
    }
    assert_eq!(json["masses"][0].as_f64().unwrap(), 1.0);
}

#[test]
fn failures_exit_nonzero_with_error_json() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    std::fs::write(&config, "[physics]\nalpha_bounds = [3.0, 1.0]\n").unwrap();
    let run = nanowire(&["run"], &config, &dir.path().join("out"));
    assert_eq!(run.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&run.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "assumption_violated");
    assert!(err["error"]["message"].as_str().unwrap().contains("Assumption 2.2"));

    let missing = nanowire(&["bloch"], &dir.path().join("absent.toml"), &dir.path().join("out"));
    assert_eq!(missing.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&missing.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "config");
}

#[test]
fn gummel_failure_is_reported_as_such() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("stiff.toml");
    std::fs::write(
        &config,
        "[grid]\nn_y = 8\nn_z = [9, 9]\nn_x = 11\nlength = 1.0\n\n[solver]\ngummel_max_iter = 1\ngummel_tol = 1e-14\nfinal_time = 0.01\n",
    )
    .unwrap();
    let run = nanowire(&["run"], &config, &dir.path().join("out"));
    assert_eq!(run.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&run.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "gummel_not_converged");
}

#[test]
fn run_writes_the_entropy_report() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("small.toml");
    std::fs::write(&config, format!("{SMALL}\n[solver]\ndt = 0.01\nfinal_time = 0.05\n")).unwrap();
    let out = dir.path().join("out");
    let run = nanowire(&["run"], &config, &out);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let text = std::fs::read_to_string(out.join("entropy.csv")).unwrap();
    let (header, body) = split_csv(&text);
    assert_eq!(header.last().unwrap(), &"# columns: t,W,D,mass,gummel_iters,residual");
    assert_eq!(body.len(), 6);
    let w: Vec<f64> = body.iter().map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!(w.windows(2).all(|p| p[1] <= p[0] + 1e-10));
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("run.json")).unwrap()).unwrap();
    assert_eq!(summary["within_envelope"], true);
}
