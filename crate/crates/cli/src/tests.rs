use crate::{commands::Cli, execute, merge_config, run, CliError};

fn argv(rest: &[&str]) -> Vec<String> {
    std::iter::once("sphld").chain(rest.iter().copied()).map(String::from).collect()
}

fn args(out: &std::path::Path, rest: &[&str]) -> Vec<String> {
    let mut v = vec!["sphld".to_string(), "--out-dir".into(), out.display().to_string()];
    v.extend(rest.iter().map(|s| s.to_string()));
    v
}

fn tempdir(tag: &str) -> std::path::PathBuf {
    let d = std::env::temp_dir().join(format!("sphld-test-{tag}-{}", std::process::id()));
    std::fs::create_dir_all(&d).unwrap();
    d
}

#[test]
fn kostka_example() {
    let out = tempdir("kostka");
    let o = run(args(&out, &["kostka", "--lambda", "2,1", "--eta", "1,1,1"])).unwrap();
    assert_eq!(o.report.metrics["kostka"].0, 2.0);
    assert_eq!(o.report.parameters["kostka_exact"], "2");
    assert!(out.join("kostka.json").is_file());
}

#[test]
fn hciz_scalar_example() {
    let out = tempdir("hciz");
    let o = run(args(&out, &["hciz", "exact", "--a", "2", "--b", "3", "--n", "1"])).unwrap();
    assert_eq!(o.report.metrics["log_value"].0, 6.0);
}

#[test]
fn lr_and_schur() {
    let out = tempdir("lr");
    let o = run(args(&out, &["lr", "--lambda", "2,1", "--eta", "2,1", "--kappa", "3,2,1"])).unwrap();
    assert_eq!(o.report.metrics["lr"].0, 2.0);
    // s_(1,1)(1, 2, 3) = e_2 = 11.
    let o = run(args(&out, &["schur", "--lambda", "1,1", "--x", "1,2,3"])).unwrap();
    assert_eq!(o.report.metrics["value"].0, 11.0);
    let o = run(args(&out, &["schur", "--lambda", "1,1", "--y", "0,0.6931471805599453,1.0986122886681098"])).unwrap();
    assert!((o.report.metrics["value"].0 - 11.0).abs() < 1e-9);
}

#[test]
fn unknown_flag_is_usage_error_naming_flag() {
    let out = tempdir("usage");
    let e = run(args(&out, &["kostka", "--lambda", "2,1", "--eta", "1,1,1", "--frobnicate", "1"])).err().unwrap();
    assert!(matches!(e, CliError::Usage(_)));
    assert_eq!(e.exit_code(), 1);
    assert!(e.to_string().contains("--frobnicate"));
    let exit = execute(argv(&["kostka", "--frobnicate"]));
    assert_eq!(exit.code, 1);
    assert!(exit.stderr.contains("--frobnicate"));
}

#[test]
fn help_exits_zero() {
    let exit = execute(argv(&["--help"]));
    assert_eq!(exit.code, 0);
    assert!(exit.stdout.contains("verify"));
}

#[test]
fn report_goes_to_stdout() {
    let out = tempdir("bin");
    let o = execute(argv(&["--out-dir", out.to_str().unwrap(), "kostka", "--lambda", "3,1", "--eta", "2,1,1"]));
    assert_eq!(o.code, 0);
    let v: serde_json::Value = serde_json::from_str(&o.stdout).unwrap();
    assert_eq!(v["metrics"]["kostka"], 2.0);
    assert_eq!(v["command"], "kostka");
    for key in ["parameters", "seed", "artifact_version", "outputs", "wall_time_s"] {
        assert!(v.get(key).is_some(), "{key}");
    }
}

#[test]
fn config_file_sits_beneath_flags() {
    let out = tempdir("config");
    let cfg = out.join("run.cfg");
    std::fs::write(&cfg, "# defaults\neta = 1,1,1\nlambda = 3\n").unwrap();
    let a = args(&out, &["--config", cfg.to_str().unwrap(), "kostka", "--lambda", "2,1"]);
    let merged = merge_config(a.clone()).unwrap();
    assert!(merged.ends_with(&["--eta".to_string(), "1,1,1".to_string()]));
    let o = run(a).unwrap();
    assert_eq!(o.report.metrics["kostka"].0, 2.0);
}

#[test]
fn report_records_output_checksums() {
    let out = tempdir("freeprob");
    let o = run(args(&out, &["freeprob", "convolve", "--mu", "0", "--s", "1", "--points", "81"])).unwrap();
    assert_eq!(o.report.outputs.len(), 1);
    let bytes = std::fs::read(&o.report.outputs[0].path).unwrap();
    assert_eq!(o.report.outputs[0].checksum, crate::report::sha256_hex(&bytes));
    assert!((o.report.metrics["total_mass"].0 - 1.0).abs() < 0.02);
}

#[test]
fn experiment_and_bridge_pipeline() {
    let out = tempdir("bridge");
    let o = run(args(&out, &["experiment", "diag", "--spectrum-b", "-1,1", "--n", "20", "--samples", "10"])).unwrap();
    assert!(o.report.metrics["max_majorization_gap"].0 <= 1e-10);
    let o = run(args(
        &out,
        &["bridge", "simulate", "--spectrum-a", "0", "--spectrum-b", "0", "--n", "32", "--samples", "4"],
    ))
    .unwrap();
    let batch = o.report.outputs[0].path.clone();
    let o = run(args(&out, &["bridge", "field", "--batch", &batch])).unwrap();
    assert_eq!(o.report.metrics["raw_mass_exact"].0, 1.0);
    let text = std::fs::read_to_string(&o.report.outputs[0].path).unwrap();
    assert!(text.starts_with("t,x,rho,u"));
    let o = run(args(&out, &["bridge", "residual", "--batch", &batch])).unwrap();
    assert!(o.report.metrics["combined"].0.is_finite());
}

#[test]
fn rate_writes_nu_star() {
    let out = tempdir("rate");
    let o = run(args(
        &out,
        &["rate", "d", "--mu", "0", "--ref-a", "-1,1", "--nu-grid", "8", "--n-schedule", "4,8", "--max-iter", "5"],
    ))
    .unwrap();
    assert!(o.report.metrics["value"].0.abs() < 1e-3);
    assert!(o.report.outputs.iter().any(|x| x.name == "nu_star"));
}

#[test]
fn verify_subset_is_deterministic() {
    let out = tempdir("verify");
    let a = run(args(&out, &["--seed", "7", "verify", "--suite", "quick", "--criteria", "1,2,4"])).unwrap();
    let b = run(args(&out, &["--seed", "7", "--threads", "1", "verify", "--suite", "quick", "--criteria", "1,2,4"])).unwrap();
    assert!(a.failures.is_empty());
    assert_eq!(a.report.metrics, b.report.metrics);
}

#[test]
fn failed_criterion_exits_two() {
    let out = tempdir("fail");
    let exit = execute(argv(&["--out-dir", out.to_str().unwrap(), "verify", "--criteria", "8"]));
    assert_eq!(exit.code, 2);
    assert!(exit.stdout.contains("relative_discrepancy"));
}

#[test]
fn command_definition_is_consistent() {
    <Cli as clap::CommandFactory>::command().debug_assert();
}
