use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_growcoag");

const CONSTANT: &str = r#"
[kernel]
family = "constant"
params = [1.0]
beta = 0.3

[grid]
vmin = 1e-3
vmax = 1e2
cells = 96

[solver]
n = 20
t_final = 0.3
"#;

const FROTH: &str = r#"
[kernel]
family = "stirred_froth"
params = [0.5]

[growth]
family = "saturating"
params = [0.5, 1.0]
A = 0.6
B = 1.5

[grid]
vmin = 1e-3
vmax = 1e3
cells = 128

[solver]
n = 8
t_final = 0.2
moment_beta = 0.3

[experiment]
n_list = [4, 8, 16, 32]
"#;

struct Case {
    _dir: tempfile::TempDir,
    config: PathBuf,
    out: PathBuf,
}

fn case(config: &str) -> Case {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    fs::write(&path, config).unwrap();
    let out = dir.path().join("out");
    Case { config: path, out, _dir: dir }
}

fn run(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(BIN)
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .env_remove("GROWCOAG_OUT")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn simulate_writes_moments_and_manifest() {
    let c = case(CONSTANT);
    let o = run(&["simulate"], &c.config, &c.out);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let moments = fs::read_to_string(c.out.join("moments.csv")).unwrap();
    assert!(moments.starts_with("time,m_neg2beta,m0,m1,m2,weighted_norm"));
    assert!(moments.lines().count() > 3);
    assert!(c.out.join("moments.gp").exists());
    assert!(c.out.join("states.csv").exists());
    let manifest = fs::read_to_string(c.out.join("manifest.txt")).unwrap();
    for section in ["[hashes]", "[tolerances]", "[resolved]", "[config]", "[result]", "[violations]"] {
        assert!(manifest.contains(section), "{section} missing");
    }
}

#[test]
fn nonconvergence_exits_three_with_partial_output() {
    let c = case(&CONSTANT.replace("t_final = 0.3", "t_final = 0.3\npicard_max_iters = 1"));
    let o = run(&["simulate"], &c.config, &c.out);
    assert_eq!(code(&o), 3);
    assert!(c.out.join("moments.csv").exists());
    let manifest = fs::read_to_string(c.out.join("manifest.txt")).unwrap();
    assert!(manifest.contains("nonconvergence"));
}

#[test]
fn config_errors_map_to_distinct_codes() {
    let c = case(&CONSTANT.replace("n = 20", "n = 2000"));
    let o = run(&["simulate"], &c.config, &c.out);
    assert_eq!(code(&o), 4);
    assert!(String::from_utf8_lossy(&o.stderr).contains("containment"));

    let c = case("[kernel\nfamily = ");
    assert_eq!(code(&run(&["simulate"], &c.config, &c.out)), 5);

    let c = case(CONSTANT);
    let missing = c.config.with_file_name("absent.toml");
    assert_eq!(code(&run(&["simulate"], &missing, &c.out)), 6);

    let o = Command::new(BIN).arg("no-such-command").output().unwrap();
    assert_eq!(code(&o), 1);
}

#[test]
fn converge_writes_one_row_per_pair() {
    let c = case(FROTH);
    let o = run(&["converge"], &c.config, &c.out);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let ladder = fs::read_to_string(c.out.join("ladder.csv")).unwrap();
    assert_eq!(ladder.lines().count(), 4);
}

#[test]
fn verify_reruns_are_bitwise_identical() {
    let c = case(FROTH);
    let second = c.out.with_file_name("again");
    assert_eq!(code(&run(&["depend", "--verify"], &c.config, &c.out)), 0);
    assert_eq!(code(&run(&["depend", "--verify"], &c.config, &second)), 0);
    for name in ["dependence.csv", "manifest.txt"] {
        let a = fs::read(c.out.join(name)).unwrap();
        let b = fs::read(second.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs");
    }
}

#[test]
fn output_directory_from_environment() {
    let c = case(CONSTANT);
    let o = Command::new(BIN)
        .args(["check-kernel", "--config"])
        .arg(&c.config)
        .env("GROWCOAG_OUT", &c.out)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report = fs::read_to_string(c.out.join("envelope.txt")).unwrap();
    assert!(report.contains("ok"));
    assert!(c.out.join("manifest.txt").exists());
}

#[test]
fn check_growth_and_tails_run() {
    let c = case(FROTH);
    let o = run(&["check-growth"], &c.config, &c.out);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(c.out.join("growth.txt").exists());
    let o = run(&["tails"], &c.config, &c.out);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let tails = fs::read_to_string(c.out.join("tails.csv")).unwrap();
    assert!(tails.lines().next().unwrap().starts_with("R,"));
}
