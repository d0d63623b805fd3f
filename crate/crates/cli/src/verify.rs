//! Built-in self checks run by `relqkd verify`.

use std::fmt::Write as _;

use relqkd_core::adversary::{instrument_contraction_check, joint_success, optimal_delay};
use relqkd_core::distill::simulate_single_discrepancy;
use relqkd_core::rng::session_rng;
use relqkd_core::security::{parity_count, ParityCount};
use relqkd_core::{KrausSet, Result as CoreResult};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub tolerance: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifySummary {
    pub checks: Vec<CheckResult>,
}

impl VerifySummary {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            let _ = writeln!(
                s,
                "{} {} (tolerance {}): {}",
                if c.pass { "PASS" } else { "FAIL" },
                c.name,
                c.tolerance,
                c.detail
            );
        }
        let passed = self.checks.iter().filter(|c| c.pass).count();
        let _ = writeln!(s, "{passed}/{} checks passed", self.checks.len());
        s
    }
}

pub type ParityCounter = dyn Fn(u32, u32) -> CoreResult<ParityCount>;

fn brute_force(n: u32, k: u32) -> u64 {
    let m = n * k;
    (0u64..1 << m).filter(|s| s.count_ones() % k == 0).count() as u64 / 2
}

fn parity_check(counter: &ParityCounter) -> CheckResult {
    let mut pass = true;
    let mut worst: f64 = 0.0;
    let mut first_bad = None;
    for m in 1..=200u32 {
        for k in 1..=m {
            if m % k != 0 {
                continue;
            }
            let n = m / k;
            let c = match counter(n, k) {
                Ok(c) => c,
                Err(e) => {
                    pass = false;
                    first_bad.get_or_insert(format!("n={n} k={k}: {e}"));
                    continue;
                }
            };
            worst = worst.max(c.relative_residual());
            let mut ok = c.agrees() && c.relative_residual() < 1e-6;
            if m <= 20 {
                ok &= u64::try_from(c.exact.clone()).ok() == Some(brute_force(n, k));
            }
            if !ok {
                pass = false;
                first_bad.get_or_insert(format!("n={n} k={k}"));
            }
        }
    }
    CheckResult {
        name: "parity counting identity",
        tolerance: "exact for nk <= 20, 1e-6 relative up to nk = 200".into(),
        pass,
        detail: match first_bad {
            Some(b) => format!("first disagreement at {b}"),
            None => format!("worst residual {worst:.1e}"),
        },
    }
}

fn delay_scan() -> CheckResult {
    let mut pass = true;
    let mut worst: f64 = 0.0;
    for i in 0..20 {
        let ratio = i as f64 / 20.0;
        let opt = match optimal_delay(ratio, 1.0) {
            Ok(o) => o,
            Err(_) => {
                pass = false;
                continue;
            }
        };
        for j in 0..=200 {
            let chi = (1.0 - ratio) * j as f64 / 200.0;
            let v = joint_success(chi, ratio, 1.0).unwrap_or(f64::INFINITY);
            worst = worst.max(v - opt.probability);
            pass &= v <= opt.probability + 1e-9;
        }
    }
    CheckResult {
        name: "delay never beats the zero-delay optimum",
        tolerance: "1e-9".into(),
        pass,
        detail: format!("largest excess {worst:.1e} over 20 ratios x 201 delays"),
    }
}

fn instrument_check(seed: u64) -> CheckResult {
    let mut rng = session_rng(seed);
    let f = 0.6;
    let mut pass = true;
    let mut worst = f64::NEG_INFINITY;
    for i in 0..100 {
        match KrausSet::random(8, 4, 1 + i % 6, &mut rng).and_then(|k| instrument_contraction_check(&k, f)) {
            Ok(c) => {
                worst = worst.max(c.lhs);
                pass &= c.lhs <= f + 1e-9;
            }
            Err(_) => pass = false,
        }
    }
    let inflated = KrausSet::identity(8, 4).map(|k| k.scaled(1.5f64.sqrt()));
    let rejected = inflated.map_or(false, |k| instrument_contraction_check(&k, f).is_err());
    CheckResult {
        name: "random instruments cannot raise detection",
        tolerance: "1e-9".into(),
        pass: pass && rejected,
        detail: format!("largest detection {worst:.6} at f = {f}, inflated set rejected: {rejected}"),
    }
}

fn hash_check(seed: u64) -> CheckResult {
    let trials = 40_000u64;
    let mut pass = true;
    let mut parts = Vec::new();
    for m in [5u32, 8] {
        match simulate_single_discrepancy(16 + m as usize, m, trials, seed ^ m as u64) {
            Ok(hits) => {
                let p = hits as f64 / trials as f64;
                let target = (-(m as f64)).exp2();
                let sigma = (target * (1.0 - target) / trials as f64).sqrt();
                pass &= (p - target).abs() <= 3.0 * sigma;
                parts.push(format!("M={m}: {p:.3e} vs {target:.3e}"));
            }
            Err(e) => {
                pass = false;
                parts.push(format!("M={m}: {e}"));
            }
        }
    }
    CheckResult {
        name: "hash rounds miss a single discrepancy at rate 2^-M",
        tolerance: "3 sigma".into(),
        pass,
        detail: parts.join("; "),
    }
}

/// Runs every check with the given parity counter.
pub fn cmd_verify_with(counter: &ParityCounter, seed: u64) -> VerifySummary {
    VerifySummary {
        checks: vec![parity_check(counter), delay_scan(), instrument_check(seed), hash_check(seed)],
    }
}

pub fn cmd_verify(seed: u64) -> VerifySummary {
    cmd_verify_with(&parity_count, seed)
}
