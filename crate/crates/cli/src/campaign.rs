//! The `analyze`, `simulate` and `distill` subcommands.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};

use relqkd_core::adversary::{
    binomial_rate, bob_pass_bound, eve_correct_probability, joint_success, simulate_intercept_resend,
    InterceptModel,
};
use relqkd_core::distill::run_session;
use relqkd_core::rng::derive_seed;
use relqkd_core::security::{SecurityReport, SessionSummary};
use relqkd_core::{EveStrategy, Geometry, Transcript};

use crate::config::{CampaignSpec, Mode};

pub const CSV_HEADER: &str = "ratio,chi_over_L,pr_e_analytic,pr_b_bound,joint_analytic,joint_empirical,stderr,zscore,\
pr_e_empirical,pr_e_stderr,pr_b_empirical,pr_b_stderr";

/// One feasible `(L_ch/L, chi/L)` point of the sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub index: u64,
    pub ratio: f64,
    pub chi_over_l: f64,
}

/// Sweep points in file order. Points with `L_ch + chi > L` leave no room for
/// Eve and are dropped.
pub fn grid(spec: &CampaignSpec) -> Vec<GridPoint> {
    let mut out = Vec::new();
    let mut index = 0;
    for &ratio in &spec.sweep.ratio {
        for &chi_over_l in &spec.sweep.chi_over_l {
            if ratio + chi_over_l <= 1.0 + 1e-12 && ratio < 1.0 {
                out.push(GridPoint { index, ratio, chi_over_l });
            }
            index += 1;
        }
    }
    out
}

struct Analytic {
    pr_e: f64,
    pr_b: f64,
    joint: f64,
}

fn analytic(p: &GridPoint) -> Result<Analytic> {
    Ok(Analytic {
        pr_e: eve_correct_probability(p.chi_over_l, p.ratio, 1.0)?,
        pr_b: bob_pass_bound(p.chi_over_l, 1.0),
        joint: joint_success(p.chi_over_l, p.ratio, 1.0)?,
    })
}

/// Closed forms only; empirical columns are left empty.
pub fn cmd_analyze(spec: &CampaignSpec) -> Result<String> {
    spec.validate(Mode::Analyze)?;
    let mut csv = String::from(CSV_HEADER);
    csv.push('\n');
    for p in grid(spec) {
        let a = analytic(&p)?;
        let _ = writeln!(
            csv,
            "{},{},{},{},{},,,,,,,",
            p.ratio, p.chi_over_l, a.pr_e, a.pr_b, a.joint
        );
    }
    Ok(csv)
}

fn zscore(empirical: f64, analytic: f64, stderr: f64) -> f64 {
    let d = empirical - analytic;
    if stderr > 0.0 {
        d / stderr
    } else if d == 0.0 {
        0.0
    } else {
        d.signum() * f64::INFINITY
    }
}

/// Monte Carlo intercept-resend at every grid point, next to the closed forms.
pub fn cmd_simulate(spec: &CampaignSpec) -> Result<String> {
    spec.validate(Mode::Simulate)?;
    let l = spec.geometry.plateau_length;
    let honest = spec.profile(l)?;
    let resend = spec.resend_policy()?;
    let trials = spec.campaign.trials;
    let mut csv = String::from(CSV_HEADER);
    csv.push('\n');
    for p in grid(spec) {
        let a = analytic(&p)?;
        let g = Geometry::new(l, p.ratio * l)?;
        let strategy = EveStrategy::new(p.chi_over_l * l, &g, resend)?;
        let model = InterceptModel::new(&g, &honest, &strategy)?;
        let c = simulate_intercept_resend(&model, trials, derive_seed(spec.campaign.seed, p.index));
        let (joint, se) = binomial_rate(c.joint, trials);
        let (pe, pe_se) = binomial_rate(c.eve_correct, trials);
        let (pb, pb_se) = binomial_rate(c.bob_pass, trials);
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            p.ratio,
            p.chi_over_l,
            a.pr_e,
            a.pr_b,
            a.joint,
            joint,
            se,
            zscore(joint, a.joint, se),
            pe,
            pe_se,
            pb,
            pb_se
        );
    }
    Ok(csv)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistillOutput {
    pub transcript: Transcript,
    pub report: SecurityReport,
}

impl DistillOutput {
    pub fn keys_match(&self) -> bool {
        !self.transcript.aborted() && self.transcript.key_a == self.transcript.key_b
    }
}

/// One full session plus its security report.
pub fn cmd_distill(spec: &CampaignSpec) -> Result<DistillOutput> {
    spec.validate(Mode::Distill)?;
    let cfg = spec.protocol_config()?;
    let transcript = run_session(&cfg)?;
    let mut report = SecurityReport::evaluate(
        cfg.params,
        cfg.geometry.ratio(),
        spec.security.eps1,
        spec.security.eps2,
    )?;
    report.session = Some(SessionSummary {
        error_estimate: transcript.error_estimate,
        block_error_rate: transcript.block_error_rate()?,
        blocks: transcript.blocks().len(),
        aborted: transcript.aborted(),
        keys_match: !transcript.aborted() && transcript.key_a == transcript.key_b,
    });
    Ok(DistillOutput { transcript, report })
}

fn bits(key: &[u8]) -> String {
    let mut s: String = key.iter().map(|b| if *b == 0 { '0' } else { '1' }).collect();
    s.push('\n');
    s
}

/// Writes `transcript.txt`, `report.txt`, `key_a.txt` and `key_b.txt`.
pub fn write_distill(out: &DistillOutput, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let files = [
        ("transcript.txt", out.transcript.to_text()),
        ("report.txt", out.report.to_text()),
        ("key_a.txt", bits(&out.transcript.key_a)),
        ("key_b.txt", bits(&out.transcript.key_b)),
    ];
    for (name, body) in files {
        let path = dir.join(name);
        fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}
