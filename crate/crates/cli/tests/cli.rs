use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use num_bigint::BigUint;
use relqkd_cli::campaign::{cmd_analyze, cmd_distill, cmd_simulate};
use relqkd_cli::config::CampaignSpec;
use relqkd_cli::verify::{cmd_verify, cmd_verify_with};
use relqkd_core::security::{parity_count, SecurityReport};

fn relqkd(args: &[&str], dir: &Path, threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_relqkd"));
    cmd.args(args).current_dir(dir);
    if let Some(t) = threads {
        cmd.env("RAYON_NUM_THREADS", t);
    }
    cmd.output().unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("campaign.toml");
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

fn column(csv: &str, name: &str) -> Vec<String> {
    let mut lines = csv.lines();
    let idx = lines.next().unwrap().split(',').position(|h| h == name).unwrap();
    lines.map(|l| l.split(',').nth(idx).unwrap().to_string()).collect()
}

#[test]
fn analyze_reports_maximum_eve_success() {
    let spec = CampaignSpec::parse(
        "[campaign]\nseed = 1\n[sweep]\nratio = [0.0, 0.5, 0.9]\nchi_over_l = [0.0]\n",
    )
    .unwrap();
    let csv = cmd_analyze(&spec).unwrap();
    let pr: Vec<f64> = column(&csv, "pr_e_analytic").iter().map(|v| v.parse().unwrap()).collect();
    assert_eq!(pr.len(), 3);
    for (got, want) in pr.iter().zip([0.5, 0.75, 0.95]) {
        assert!((got - want).abs() < 1e-12);
    }
    assert!(column(&csv, "joint_empirical").iter().all(|v| v.is_empty()));
}

#[test]
fn analyze_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[campaign]\nseed = 1\n[sweep]\nratio = [0.0, 0.3]\nchi_over_l = [0.0, 0.2, 0.4]\n",
    );
    let a = relqkd(&["analyze", &cfg], dir.path(), None);
    let b = relqkd(&["analyze", &cfg], dir.path(), None);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn empty_sweep_is_invalid_input() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[campaign]\nseed = 1\n[sweep]\nratio = []\nchi_over_l = [0.0]\n");
    let out = relqkd(&["analyze", &cfg], dir.path(), None);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn zero_trials_is_invalid_input() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[campaign]\nseed = 1\ntrials = 0\n[sweep]\nratio = [0.5]\nchi_over_l = [0.0]\n",
    );
    assert_eq!(relqkd(&["simulate", &cfg], dir.path(), None).status.code(), Some(2));
}

#[test]
fn malformed_config_is_invalid_input() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[campaign\nseed = 1\n");
    assert_eq!(relqkd(&["distill", &cfg, "--out", "o"], dir.path(), None).status.code(), Some(2));
    assert_eq!(relqkd(&["analyze", "missing.toml"], dir.path(), None).status.code(), Some(2));
}

#[test]
fn simulate_matches_eve_success_at_zero_delay() {
    let spec = CampaignSpec::parse(
        "[campaign]\nseed = 9\ntrials = 100000\n[sweep]\nratio = [0.5]\nchi_over_l = [0.0]\n",
    )
    .unwrap();
    let csv = cmd_simulate(&spec).unwrap();
    let pe: f64 = column(&csv, "pr_e_empirical")[0].parse().unwrap();
    let se: f64 = column(&csv, "pr_e_stderr")[0].parse().unwrap();
    assert!((pe - 0.75).abs() <= 3.0 * se, "{pe} +- {se}");
    let z = column(&csv, "zscore");
    assert!(z.iter().all(|v| v.parse::<f64>().is_ok()));
}

#[test]
fn simulate_is_independent_of_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[campaign]\nseed = 4\ntrials = 20000\n[sweep]\nratio = [0.0, 0.5]\nchi_over_l = [0.0, 0.25]\n",
    );
    let one = relqkd(&["simulate", &cfg], dir.path(), Some("1"));
    let four = relqkd(&["simulate", &cfg], dir.path(), Some("4"));
    assert!(one.status.success());
    assert_eq!(one.stdout, four.stdout);
    let other = relqkd(&["simulate", &cfg, "--seed", "5"], dir.path(), Some("4"));
    assert_ne!(one.stdout, other.stdout);
}

#[test]
fn noiseless_distill_gives_identical_key_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[campaign]\nseed = 2\n[geometry]\nchannel_length = 0.5\n");
    let out = relqkd(&["distill", &cfg, "--out", "run"], dir.path(), None);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = dir.path().join("run");
    let a = fs::read_to_string(run.join("key_a.txt")).unwrap();
    let b = fs::read_to_string(run.join("key_b.txt")).unwrap();
    assert_eq!(a.trim().len(), 64);
    assert_eq!(a, b);
    let report = SecurityReport::parse(&fs::read_to_string(run.join("report.txt")).unwrap()).unwrap();
    assert!(!report.session.unwrap().aborted);
    assert!(report.reevaluate().unwrap().criteria_satisfied());
    let transcript = fs::read_to_string(run.join("transcript.txt")).unwrap();
    assert!(transcript.starts_with("# relqkd-transcript/1"));
}

fn binomial_tail(k: u32, p: f64) -> f64 {
    // Direct sum over j > k/2 of C(k, j) p^j (1-p)^(k-j).
    ((k / 2 + 1)..=k)
        .map(|j| {
            let c: f64 = (0..j).map(|i| (k - i) as f64 / (i + 1) as f64).product();
            c * p.powi(j as i32) * (1.0 - p).powi((k - j) as i32)
        })
        .sum()
}

#[test]
fn block_errors_follow_binomial_tail() {
    let spec = CampaignSpec::parse(
        "[campaign]\nseed = 6\n[protocol]\nkey_length = 400\nblock_size = 5\nblocks_per_parity = 20\nhash_rounds = 10\n\
         [noise]\nflip = 0.05\n",
    )
    .unwrap();
    let out = cmd_distill(&spec).unwrap();
    let s = out.report.session.unwrap();
    let oracle = binomial_tail(5, 0.05);
    let sigma = (oracle * (1.0 - oracle) / s.blocks as f64).sqrt();
    assert_eq!(s.blocks, 410 * 20);
    assert!((s.block_error_rate - oracle).abs() <= 3.0 * sigma, "{} vs {oracle}", s.block_error_rate);
}

#[test]
fn eavesdropping_raises_disclosed_mismatch() {
    let base = "[campaign]\nseed = 8\n[geometry]\nchannel_length = 0.3\n\
                [protocol]\nkey_length = 32\nblock_size = 3\nblocks_per_parity = 4\nhash_rounds = 8\n";
    let quiet = cmd_distill(&CampaignSpec::parse(base).unwrap()).unwrap();
    let tapped =
        cmd_distill(&CampaignSpec::parse(&format!("{base}[eve]\nchi_over_l = 0.2\n")).unwrap()).unwrap();
    assert_eq!(quiet.transcript.error_estimate, 0.0);
    assert!(tapped.transcript.error_estimate > quiet.transcript.error_estimate);
    assert!(tapped.transcript.aborted() || !tapped.keys_match() || tapped.transcript.error_estimate > 0.05);
}

#[test]
fn verify_passes_on_a_fresh_build() {
    let summary = cmd_verify(0);
    assert!(summary.all_passed(), "{}", summary.to_text());
    let text = summary.to_text();
    assert!(text.lines().filter(|l| l.contains("tolerance")).count() == summary.checks.len());
}

#[test]
fn verify_flags_a_tampered_parity_counter() {
    let tampered = |n: u32, k: u32| {
        let mut c = parity_count(n, k)?;
        if n * k == 12 {
            c.exact += BigUint::from(1u32);
        }
        Ok(c)
    };
    let summary = cmd_verify_with(&tampered, 0);
    assert!(!summary.all_passed());
    assert!(!summary.checks[0].pass);
    assert!(summary.checks[1..].iter().all(|c| c.pass));
}

#[test]
fn verify_binary_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = relqkd(&["verify"], dir.path(), None);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("checks passed"));
}
