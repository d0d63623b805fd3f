//! Key-level security bounds and the inverse parameter solver.

use std::f64::consts::LN_2;

use astro_float::{BigFloat, Consts, Radix, RoundingMode};
use std::fmt::Write as _;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};

use crate::error::{invalid, Error, Result};
use crate::infotheory::parity_efficiency;

pub const REPORT_SCHEMA: &str = "relqkd-report/1";

/// Both sides of the parity counting identity.
#[derive(Debug, Clone, PartialEq)]
pub struct ParityCount {
    /// `1/2 * sum_{i=0..n} C(n k, i k)`.
    pub exact: BigUint,
    /// `2^{nk}/(2k) * sum_{l=1..k} cos^{nk}(l pi / k) cos(n l pi)`, rounded to f64.
    pub closed_form: f64,
    /// `|closed_form - exact| / exact`, taken before rounding to f64.
    pub residual: f64,
}

impl ParityCount {
    pub fn relative_residual(&self) -> f64 {
        self.residual
    }

    /// The closed form rounded to the nearest integer equals the exact count.
    pub fn agrees(&self) -> bool {
        self.residual * self.exact.to_f64().unwrap_or(f64::INFINITY) < 0.5
    }
}

fn check_blocks(blocks: u32, block_size: u32) -> Result<()> {
    if blocks == 0 || block_size == 0 {
        return Err(invalid(format!(
            "block count and block size must be positive, got n={blocks}, k={block_size}"
        )));
    }
    Ok(())
}

/// The binomial side alone.
pub fn parity_count_exact(blocks: u32, block_size: u32) -> Result<BigUint> {
    check_blocks(blocks, block_size)?;
    let m = blocks as u64 * block_size as u64;
    let k = block_size as u64;
    // Walk the binomial row C(m, j) and keep the multiples of k.
    let mut sum = BigUint::zero();
    let mut c = BigUint::one();
    for j in 0..=m {
        if j % k == 0 {
            sum += &c;
        }
        if j < m {
            c = c * (m - j) / (j + 1);
        }
    }
    Ok(sum >> 1u32)
}

fn big_to_f64(x: &BigFloat, cc: &mut Consts) -> f64 {
    x.format(Radix::Dec, RoundingMode::ToEven, cc)
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or(f64::NAN)
}

/// Both sides. The cosine series cancels heavily when `k` is large next to
/// `n`, so it is summed with `n k + 128` bits of precision.
pub fn parity_count(blocks: u32, block_size: u32) -> Result<ParityCount> {
    let exact = parity_count_exact(blocks, block_size)?;
    let m = blocks as usize * block_size as usize;
    let k = block_size as usize;
    let p = m + 128;
    let rm = RoundingMode::ToEven;
    let mut cc = Consts::new().map_err(|e| invalid(format!("arbitrary precision setup failed: {e:?}")))?;

    let pi = cc.pi(p, rm);
    let two = BigFloat::from_u8(2, p);
    let mut series = BigFloat::from_u8(0, p);
    for l in 1..=k {
        let angle = pi.mul(&BigFloat::from_u64((l) as u64, p), p, rm).div(&BigFloat::from_u64((k) as u64, p), p, rm);
        let term = angle.cos(p, rm, &mut cc).mul(&two, p, rm).powi(m, p, rm);
        series = if (blocks as usize * l) % 2 == 0 {
            series.add(&term, p, rm)
        } else {
            series.sub(&term, p, rm)
        };
    }
    let closed = series.div(&BigFloat::from_u64((2 * k) as u64, p), p, rm);
    let exact_big = BigFloat::parse(&exact.to_string(), Radix::Dec, p, rm, &mut cc);
    let residual = closed.sub(&exact_big, p, rm).div(&exact_big, p, rm).abs();

    Ok(ParityCount {
        exact,
        closed_form: big_to_f64(&closed, &mut cc),
        residual: big_to_f64(&residual, &mut cc),
    })
}

/// `log2` of an arbitrarily large integer.
pub fn log2_big(x: &BigUint) -> f64 {
    if x.is_zero() {
        return f64::NEG_INFINITY;
    }
    let bits = x.bits();
    if bits <= 1000 {
        return x.to_f64().expect("fits in f64").log2();
    }
    let shift = bits - 64;
    let top = (x >> shift).to_u64().expect("64 bits");
    (top as f64).log2() + shift as f64
}

/// `zeta = [(1 + L_ch/L) / 2]^{eta n k}`.
pub fn zeta(blocks: u32, block_size: u32, ratio: f64, eta: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&ratio) {
        return Err(invalid(format!("channel ratio must lie in [0, 1), got {ratio}")));
    }
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(invalid(format!("eta must lie in (0, 1], got {eta}")));
    }
    let exponent = eta * blocks as f64 * block_size as f64;
    Ok((0.5 * (1.0 + ratio)).powf(exponent))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyProbability {
    pub value: f64,
    /// False when the bound exceeds one and is therefore vacuous.
    pub valid: bool,
}

/// `Pr{s_A = s_E} <= 2^{-N} (1 + 2 zeta)^N`.
pub fn eve_key_probability(key_length: u32, zeta: f64) -> KeyProbability {
    let n = key_length as f64;
    let value = (n * (2.0 * zeta).ln_1p() / LN_2 - n).exp2();
    KeyProbability {
        value,
        valid: value <= 1.0 + 1e-12,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InformationBounds {
    pub alice_bob: f64,
    pub alice_eve: f64,
    /// Upper bound on `I(B;E)`.
    pub bob_eve: f64,
}

pub fn information_bounds(key_length: u32, hash_rounds: u32, zeta: f64) -> InformationBounds {
    let n = key_length as f64;
    let miss = (-(hash_rounds as f64)).exp2();
    InformationBounds {
        alice_bob: n + (-miss).ln_1p() / LN_2,
        alice_eve: n * (2.0 * zeta).ln_1p() / LN_2,
        bob_eve: (2.0 * n * zeta + miss) / LN_2,
    }
}

/// Distillation parameters: key length `N`, block size `k`, blocks per parity
/// bit `n`, hash rounds `M`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KeyParameters {
    pub key_length: u32,
    pub block_size: u32,
    pub blocks_per_parity: u32,
    pub hash_rounds: u32,
}

/// Per-session measurements appended to a report by the distillation driver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SessionSummary {
    pub error_estimate: f64,
    pub block_error_rate: f64,
    pub blocks: usize,
    pub aborted: bool,
    pub keys_match: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SecurityReport {
    pub params: KeyParameters,
    pub ratio: f64,
    pub eta: f64,
    pub zeta: f64,
    pub eve_key_probability: KeyProbability,
    pub mismatch_probability: f64,
    pub info: InformationBounds,
    pub eps1: f64,
    pub eps2: f64,
    /// `Pr{s_A != s_B} <= eps1`.
    pub agreement_ok: bool,
    /// `Pr{s_A = s_E} <= 2^{-N} + eps2`.
    pub guess_ok: bool,
    /// `I(A;E) <= eps2`.
    pub alice_eve_ok: bool,
    /// `I(B;E) <= eps2`.
    pub bob_eve_ok: bool,
    pub session: Option<SessionSummary>,
}

impl SecurityReport {
    pub fn evaluate(params: KeyParameters, ratio: f64, eps1: f64, eps2: f64) -> Result<Self> {
        check_target(eps1, eps2, ratio)?;
        if params.key_length == 0 || params.hash_rounds == 0 {
            return Err(invalid("key length and hash rounds must be positive"));
        }
        let eta = parity_efficiency(params.blocks_per_parity, params.block_size)?;
        let zeta = zeta(params.blocks_per_parity, params.block_size, ratio, eta)?;
        let eve_key_probability = eve_key_probability(params.key_length, zeta);
        let info = information_bounds(params.key_length, params.hash_rounds, zeta);
        let mismatch_probability = (-(params.hash_rounds as f64)).exp2();
        let floor = (-(params.key_length as f64)).exp2();
        Ok(Self {
            params,
            ratio,
            eta,
            zeta,
            eve_key_probability,
            mismatch_probability,
            info,
            eps1,
            eps2,
            agreement_ok: mismatch_probability <= eps1,
            guess_ok: eve_key_probability.valid && eve_key_probability.value <= floor + eps2,
            alice_eve_ok: info.alice_eve <= eps2,
            bob_eve_ok: info.bob_eve <= eps2,
            session: None,
        })
    }

    pub fn criteria_satisfied(&self) -> bool {
        self.agreement_ok && self.guess_ok && self.alice_eve_ok && self.bob_eve_ok
    }

    /// Flat `key=value` text, one field per line.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let p = &self.params;
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k}={v}");
        };
        put("schema", REPORT_SCHEMA.to_string());
        put("key_length", p.key_length.to_string());
        put("blocks_per_parity", p.blocks_per_parity.to_string());
        put("block_size", p.block_size.to_string());
        put("hash_rounds", p.hash_rounds.to_string());
        put("ratio", self.ratio.to_string());
        put("eta", self.eta.to_string());
        put("zeta", self.zeta.to_string());
        put("pr_eve_key", self.eve_key_probability.value.to_string());
        put("pr_eve_key_valid", self.eve_key_probability.valid.to_string());
        put("pr_mismatch", self.mismatch_probability.to_string());
        put("i_ab", self.info.alice_bob.to_string());
        put("i_ae", self.info.alice_eve.to_string());
        put("i_be", self.info.bob_eve.to_string());
        put("eps1", self.eps1.to_string());
        put("eps2", self.eps2.to_string());
        put("agreement_ok", self.agreement_ok.to_string());
        put("guess_ok", self.guess_ok.to_string());
        put("alice_eve_ok", self.alice_eve_ok.to_string());
        put("bob_eve_ok", self.bob_eve_ok.to_string());
        if let Some(sess) = &self.session {
            put("session_error_estimate", sess.error_estimate.to_string());
            put("session_block_error_rate", sess.block_error_rate.to_string());
            put("session_blocks", sess.blocks.to_string());
            put("session_aborted", sess.aborted.to_string());
            put("session_keys_match", sess.keys_match.to_string());
        }
        s
    }

    /// Parses the text form. The stored flags are kept as written; call
    /// [`SecurityReport::reevaluate`] to recompute them.
    pub fn parse(text: &str) -> Result<Self> {
        let mut fields = std::collections::HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                message: format!("expected key=value, got {line:?}"),
            })?;
            fields.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |k: &str| -> Result<&String> {
            fields.get(k).ok_or_else(|| Error::Parse {
                line: 0,
                message: format!("missing field {k}"),
            })
        };
        fn num<T: std::str::FromStr>(k: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::Parse {
                line: 0,
                message: format!("field {k} has unparsable value {v:?}"),
            })
        }
        if get("schema")? != REPORT_SCHEMA {
            return Err(Error::Parse {
                line: 1,
                message: format!("unsupported schema {}", get("schema")?),
            });
        }
        let f = |k: &str| -> Result<f64> { num(k, get(k)?) };
        let u = |k: &str| -> Result<u32> { num(k, get(k)?) };
        let b = |k: &str| -> Result<bool> { num(k, get(k)?) };
        let session = if fields.contains_key("session_blocks") {
            Some(SessionSummary {
                error_estimate: f("session_error_estimate")?,
                block_error_rate: f("session_block_error_rate")?,
                blocks: num("session_blocks", get("session_blocks")?)?,
                aborted: b("session_aborted")?,
                keys_match: b("session_keys_match")?,
            })
        } else {
            None
        };
        Ok(Self {
            params: KeyParameters {
                key_length: u("key_length")?,
                block_size: u("block_size")?,
                blocks_per_parity: u("blocks_per_parity")?,
                hash_rounds: u("hash_rounds")?,
            },
            ratio: f("ratio")?,
            eta: f("eta")?,
            zeta: f("zeta")?,
            eve_key_probability: KeyProbability {
                value: f("pr_eve_key")?,
                valid: b("pr_eve_key_valid")?,
            },
            mismatch_probability: f("pr_mismatch")?,
            info: InformationBounds {
                alice_bob: f("i_ab")?,
                alice_eve: f("i_ae")?,
                bob_eve: f("i_be")?,
            },
            eps1: f("eps1")?,
            eps2: f("eps2")?,
            agreement_ok: b("agreement_ok")?,
            guess_ok: b("guess_ok")?,
            alice_eve_ok: b("alice_eve_ok")?,
            bob_eve_ok: b("bob_eve_ok")?,
            session,
        })
    }

    /// Recomputes every derived quantity from the parameters and targets.
    pub fn reevaluate(&self) -> Result<Self> {
        let mut out = Self::evaluate(self.params, self.ratio, self.eps1, self.eps2)?;
        out.session = self.session;
        Ok(out)
    }
}

fn check_target(eps1: f64, eps2: f64, ratio: f64) -> Result<()> {
    if !(eps1 > 0.0 && eps1 < 1.0) || !(eps2 > 0.0 && eps2 < 1.0) {
        return Err(invalid(format!("eps1 and eps2 must lie in (0, 1), got {eps1}, {eps2}")));
    }
    if !(0.0..1.0).contains(&ratio) {
        return Err(invalid(format!("channel ratio must lie in [0, 1), got {ratio}")));
    }
    Ok(())
}

/// What the solver is asked to achieve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecurityTarget {
    pub eps1: f64,
    pub eps2: f64,
    pub key_length: u32,
    pub ratio: f64,
    /// Smallest block size the caller will accept (rounded up to odd).
    pub min_block_size: u32,
}

impl SecurityTarget {
    pub fn new(eps1: f64, eps2: f64, key_length: u32, ratio: f64) -> Self {
        Self {
            eps1,
            eps2,
            key_length,
            ratio,
            min_block_size: 1,
        }
    }
}

const MAX_SEARCH_PRODUCT: u64 = 1 << 20;

/// Finds the smallest `M` and then the smallest `n k` (ties broken by the
/// smaller odd `k`) meeting both security requirements.
///
/// `M` must satisfy `2^{-M} <= eps1` and leave room for the `I(B;E)` bound,
/// i.e. `2^{-M} / ln 2 < eps2`.
pub fn solve_parameters(target: &SecurityTarget) -> Result<(KeyParameters, SecurityReport)> {
    check_target(target.eps1, target.eps2, target.ratio)?;
    if target.key_length == 0 {
        return Err(invalid("key length must be positive"));
    }
    let n_key = target.key_length as f64;

    let mut m = 1u32;
    while (-(m as f64)).exp2() > target.eps1 || (-(m as f64)).exp2() >= target.eps2 * LN_2 {
        m += 1;
    }
    let miss = (-(m as f64)).exp2();

    // Largest admissible zeta; eta n k <= n k gives a lower bound on n k.
    let zeta_ae = ((target.eps2 / n_key).exp2() - 1.0) / 2.0;
    let zeta_be = (target.eps2 * LN_2 - miss) / (2.0 * n_key);
    let zeta_max = zeta_ae.min(zeta_be);
    let base = 0.5 * (1.0 + target.ratio);
    let lower = if target.ratio == 0.0 && zeta_max >= 0.5 {
        1
    } else {
        (zeta_max.ln() / base.ln()).floor().max(1.0) as u64
    };

    let min_k = (target.min_block_size.max(1) | 1) as u64;
    for product in lower.max(min_k)..=MAX_SEARCH_PRODUCT {
        let mut k = min_k;
        while k <= product {
            // A single block per parity bit reveals that block outright.
            if product % k == 0 && product / k >= 2 {
                let params = KeyParameters {
                    key_length: target.key_length,
                    block_size: k as u32,
                    blocks_per_parity: (product / k) as u32,
                    hash_rounds: m,
                };
                let report = SecurityReport::evaluate(params, target.ratio, target.eps1, target.eps2)?;
                if report.criteria_satisfied() {
                    return Ok((params, report));
                }
            }
            k += 2;
        }
    }
    Err(Error::ResourceExhausted(format!(
        "no parameters with n k <= {MAX_SEARCH_PRODUCT} meet the target"
    )))
}
