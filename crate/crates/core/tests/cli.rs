//! End-to-end runs of the `riskwild` binary: exit codes, seed precedence and
//! the contents of each report bundle.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_riskwild");

struct Workdir {
    dir: TempDir,
}

impl Workdir {
    fn new() -> Self {
        Workdir {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn file(&self, name: &str, text: &str) -> PathBuf {
        let p = self.path(name);
        fs::write(&p, text).unwrap();
        p
    }

    fn run(&self, args: &[&str], env_seed: Option<&str>) -> Output {
        let mut cmd = Command::new(BIN);
        cmd.current_dir(self.dir.path()).args(args).env_remove("RISKWILD_SEED");
        if let Some(s) = env_seed {
            cmd.env("RISKWILD_SEED", s);
        }
        cmd.output().unwrap()
    }

    fn json(&self, rel: &str) -> Value {
        serde_json::from_str(&fs::read_to_string(self.path(rel)).unwrap()).unwrap()
    }
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("terminated by signal")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Two points, one feature, one outcome. With the unconstrained ridge
/// trainer at `lambda = 0.5` the fit shrinks the outcomes by one half and
/// `||g_tilde||_n = 1`.
fn tiny_problem(w: &Workdir, extra: &str) -> PathBuf {
    w.file("d.csv", "x_1,y_1\n0,1\n1,-1\n");
    w.file(
        "run.toml",
        &format!(
            "[dataset]\npath = \"d.csv\"\n[class]\nkind = \"unconstrained\"\n\
             [trainer]\nlambda = 0.5\n[dims]\nd = 1\n{extra}"
        ),
    )
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn unknown_config_key_is_a_config_error() {
    let w = Workdir::new();
    let cfg = w.file("run.toml", "[experiment]\nrepz = 3\n");
    let o = w.run(&["audit", "--config", arg(&cfg)], None);
    assert_eq!(code(&o), 2);
    assert!(!w.path("riskwild-out").exists());
}

#[test]
fn unknown_loss_name_is_a_config_error() {
    let w = Workdir::new();
    let cfg = w.file("run.toml", "[loss]\nname = \"hinge\"\n");
    assert_eq!(code(&w.run(&["check-loss", "--config", arg(&cfg)], None)), 2);
}

#[test]
fn oracle_mode_on_a_file_dataset_is_rejected() {
    let w = Workdir::new();
    let cfg = tiny_problem(&w, "");
    let o = w.run(&["audit", "--config", arg(&cfg), "--mode", "oracle"], None);
    assert_eq!(code(&o), 2);
    let o = w.run(&["coverage", "--config", arg(&cfg)], None);
    assert_eq!(code(&o), 2);
}

#[test]
fn malformed_env_seed_is_a_config_error() {
    let w = Workdir::new();
    assert_eq!(code(&w.run(&["check-loss"], Some("seven"))), 2);
}

#[test]
fn indefinite_quadratic_form_fails_the_loss_check() {
    let w = Workdir::new();
    let cfg = w.file(
        "run.toml",
        "[loss]\nname = \"quadform\"\na = [[1.0, 0.0], [0.0, -1.0]]\n[check]\ntrials = 50\n",
    );
    let o = w.run(&["check-loss", "--config", arg(&cfg), "--out", "q"], None);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).trim_end().ends_with("FAIL"));
    let report = w.json("q/check_loss.json");
    assert_eq!(report["passed"], false);
    assert_eq!(report["report"]["passed"], false);
}

#[test]
fn builtin_losses_pass_the_loss_check() {
    let w = Workdir::new();
    for (i, loss) in [
        "name = \"squared\"",
        "name = \"expfam\"\nlog_partition = \"softplus-sum\"\nmu = 0.5",
        "name = \"quadform\"\na = [[2.0, 0.5], [0.5, 1.0]]\nb = [0.1, -0.3]",
    ]
    .iter()
    .enumerate()
    {
        let cfg = w.file(&format!("l{i}.toml"), &format!("[loss]\n{loss}\n[check]\ntrials = 200\n"));
        let out = format!("l{i}");
        let o = w.run(&["check-loss", "--config", arg(&cfg), "--out", &out], None);
        assert_eq!(code(&o), 0, "{loss}: {}", stdout(&o));
        let report = w.json(&format!("{out}/check_loss.json"));
        assert!(report["fd_max_error"].as_f64().unwrap() <= 1e-5);
    }
}

#[test]
fn seed_precedence_flag_then_config_then_env() {
    let w = Workdir::new();
    let with_seed = w.file("s.toml", "seed = 5\n[check]\ntrials = 10\n");
    let without = w.file("n.toml", "[check]\ntrials = 10\n");
    let header = |o: &Output| stdout(o).lines().next().unwrap().to_string();

    let o = w.run(&["check-loss", "--config", arg(&with_seed), "--seed", "9"], Some("3"));
    assert!(header(&o).contains("seed 9 from Flag"), "{}", header(&o));
    let o = w.run(&["check-loss", "--config", arg(&with_seed)], Some("3"));
    assert!(header(&o).contains("seed 5 from Config"), "{}", header(&o));
    let o = w.run(&["check-loss", "--config", arg(&without)], Some("3"));
    assert!(header(&o).contains("seed 3 from Env"), "{}", header(&o));
    let o = w.run(&["check-loss", "--config", arg(&without)], None);
    assert!(header(&o).contains("seed 0 from Default"), "{}", header(&o));
    assert_eq!(w.json("riskwild-out/check_loss.json")["seed"], 0);
}

#[test]
fn observable_audit_reports_no_oracle_quantities() {
    let w = Workdir::new();
    let cfg = tiny_problem(&w, "");
    let o = w.run(&["audit", "--config", arg(&cfg), "--out", "a"], None);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    for f in ["audit.json", "d0.csv", "d_diamond.csv", "d_sharp.csv"] {
        assert!(w.path("a").join(f).exists(), "{f} missing");
    }
    let report = w.json("a/audit.json");
    assert_eq!(report["observable_mode"], true);
    assert!(report.get("oracle").is_none());
    let inputs = &report["bound"]["inputs"];
    for key in ["pilot_diamond", "pilot_sharp", "bias_norm"] {
        assert!(inputs.get(key).is_none(), "{key} present");
    }
    assert!(report["bound"].get("pilot_term").is_none());
    assert_eq!(report["lemma1"]["holds"], true);
}

#[test]
fn oracle_audit_includes_the_truth() {
    let w = Workdir::new();
    let cfg = w.file("run.toml", "[dims]\nn = 40\n[experiment]\nmc_samples = 500\n");
    let o = w.run(&["audit", "--config", arg(&cfg), "--out", "a", "--seed", "4"], None);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let report = w.json("a/audit.json");
    assert_eq!(report["observable_mode"], false);
    let oracle = &report["oracle"];
    assert_eq!(oracle["well_specified"], true);
    assert!(oracle["rhat"].as_f64().unwrap() >= 0.0);
    assert!(oracle["bound_thm2"].is_number());
}

#[test]
fn tuned_noise_scale_follows_the_proportional_law() {
    // The refit radius of the shrunken fit is rho * ||g_tilde||_n / 2.
    for (target, rho) in [(0.5, 1.0), (0.25, 0.5)] {
        let w = Workdir::new();
        let cfg = tiny_problem(&w, &format!("[tune]\ntarget = {target}\n"));
        let o = w.run(&["tune-rho", "--config", arg(&cfg), "--out", "t"], None);
        assert_eq!(code(&o), 0, "{}", stdout(&o));
        let report = w.json("t/tune_rho.json");
        for side in ["diamond", "sharp"] {
            let got = report[side]["rho"].as_f64().unwrap();
            assert!((got - rho).abs() <= 1e-6, "{side}: rho {got}, expected {rho}");
            let achieved = report[side]["achieved"].as_f64().unwrap();
            assert!((achieved - target).abs() <= 1e-6);
        }
        let table = fs::read_to_string(w.path("t/tune_rho.csv")).unwrap();
        assert!(table.starts_with("side,step,phase,rho,radius\n"));
    }
}

#[test]
fn unreachable_target_fails_and_keeps_the_table() {
    let w = Workdir::new();
    let cfg = tiny_problem(&w, "[tune]\ntarget = 1e9\n");
    let o = w.run(&["tune-rho", "--config", arg(&cfg), "--out", "t"], None);
    assert_eq!(code(&o), 1);
    let report = w.json("t/tune_rho.json");
    assert_eq!(report["passed"], false);
    assert!(report["diamond"]["rho"].is_null());
    assert!(report["diamond"]["error"].is_string());
    let rows = fs::read_to_string(w.path("t/tune_rho.csv")).unwrap();
    assert!(rows.lines().count() > 2);
}

#[test]
fn fixed_point_radius_of_the_unconstrained_class() {
    let w = Workdir::new();
    let cfg = tiny_problem(&w, "");
    let o = w.run(&["radius", "--config", arg(&cfg), "--out", "r"], None);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let report = w.json("r/radius.json");
    assert!((report["g_tilde_norm"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    // alpha = 2 for the squared loss, so r* = 8 * 1 / 2.
    let r = report["report"]["r_fixed_point"].as_f64().unwrap();
    assert!((r - 4.0).abs() < 1e-6, "r* = {r}");
    assert_eq!(report["report"]["pilots_available"], false);
    assert!(report["report"]["r_theorem2"].is_null());
    assert!(report.get("rhat").is_none());

    // Interpolating fit: zero residual gradient and a zero radius.
    let w = Workdir::new();
    w.file("d.csv", "x_1,y_1\n0,1\n1,-1\n");
    let cfg = w.file(
        "run.toml",
        "[dataset]\npath = \"d.csv\"\n[class]\nkind = \"unconstrained\"\n[dims]\nd = 1\n",
    );
    let o = w.run(&["radius", "--config", arg(&cfg), "--out", "r"], None);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let r = w.json("r/radius.json")["report"]["r_fixed_point"].as_f64().unwrap();
    assert!(r.abs() < 1e-9, "r* = {r}");
}

#[test]
fn single_replication_coverage() {
    let w = Workdir::new();
    let cfg = w.file("run.toml", "[experiment]\nreps = 1\nmc_samples = 200\n");
    let o = w.run(&["coverage", "--config", arg(&cfg), "--out", "c"], None);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let rows = fs::read_to_string(w.path("c/coverage_reps.csv")).unwrap();
    assert_eq!(rows.lines().count(), 2);
    let report = w.json("c/coverage.json");
    assert_eq!(report["reps"], 1);
    assert_eq!(report["below_recommended_reps"], true);
}

#[test]
fn noiseless_coverage_is_complete() {
    let w = Workdir::new();
    let cfg = w.file(
        "run.toml",
        "[noise]\nsigma = 0.0\n[dims]\nn = 30\n[experiment]\nreps = 8\nmc_samples = 100\n",
    );
    let o = w.run(&["coverage", "--config", arg(&cfg), "--out", "c"], None);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let report = w.json("c/coverage.json");
    assert_eq!(report["coverage_thm1"], 1.0);
    assert_eq!(report["coverage_thm2"], 1.0);
    assert_eq!(report["lemma1_pass_rate"], 1.0);
}

#[test]
fn reports_are_reproducible_for_a_fixed_seed() {
    let w = Workdir::new();
    let cfg = w.file("run.toml", "[dims]\nn = 30\n[experiment]\nreps = 4\nmc_samples = 100\n");
    let run = |out: &str| {
        let o = w.run(&["coverage", "--config", arg(&cfg), "--out", out], Some("77"));
        assert_eq!(code(&o), 0);
        (
            fs::read(w.path(out).join("coverage.json")).unwrap(),
            fs::read(w.path(out).join("coverage_reps.csv")).unwrap(),
        )
    };
    assert_eq!(run("a"), run("b"));
    let other = w.run(&["coverage", "--config", arg(&cfg), "--out", "c", "--seed", "78"], None);
    assert_eq!(code(&other), 0);
    assert_ne!(run("a").1, fs::read(w.path("c/coverage_reps.csv")).unwrap());
}
