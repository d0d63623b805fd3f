//! Eve's delay tradeoff and the noisy-channel instrument bound.

use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::measurement::{
    bob_outcome_distribution, eve_outcome_distribution, BobDistribution, EveDistribution,
    Geometry, PhotonState,
};
use crate::rng::trial_rng;
use crate::wavepacket::{AmplitudeProfile, Interval};

/// What Eve forwards to B after measuring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ResendPolicy {
    /// The honest envelope cut to the part a delayed copy can still place in
    /// B's domain, renormalized. Saturates the delay bound.
    TruncatedRenormalized,
    /// The honest envelope, delayed.
    ShiftedCopy,
    /// Nothing; B sees vacuum.
    NoResend,
}

impl std::str::FromStr for ResendPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "truncated" | "truncated_renormalized" | "TruncatedRenormalized" => {
                Ok(Self::TruncatedRenormalized)
            }
            "shifted" | "shifted_copy" | "ShiftedCopy" => Ok(Self::ShiftedCopy),
            "none" | "no_resend" | "NoResend" => Ok(Self::NoResend),
            other => Err(invalid(format!("unknown resend policy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EveStrategy {
    delay: f64,
    channel_length: f64,
    resend: ResendPolicy,
}

impl EveStrategy {
    pub fn new(delay: f64, geometry: &Geometry, resend: ResendPolicy) -> Result<Self> {
        if !(delay >= 0.0) {
            return Err(invalid(format!("delay must be non-negative, got {delay}")));
        }
        if geometry.channel_length + delay > geometry.plateau_length * (1.0 + 1e-12) {
            return Err(invalid(format!(
                "delay {delay} makes Eve's region longer than the plateau {}",
                geometry.plateau_length
            )));
        }
        Ok(Self {
            delay,
            channel_length: geometry.channel_length,
            resend,
        })
    }

    pub fn delay(&self) -> f64 {
        self.delay
    }

    pub fn channel_length(&self) -> f64 {
        self.channel_length
    }

    pub fn resend(&self) -> ResendPolicy {
        self.resend
    }

    /// Eve's region `Omega_E`, of length `L_ch + chi`.
    pub fn region(&self, geometry: &Geometry) -> Interval {
        geometry.eve_domain(self.delay)
    }

    /// State Eve forwards carrying `bit`, or `None` for no resend.
    pub fn resend_state(&self, honest: &AmplitudeProfile, bit: u8) -> Result<Option<PhotonState>> {
        let profile = match self.resend {
            ResendPolicy::NoResend => return Ok(None),
            ResendPolicy::ShiftedCopy => honest.clone(),
            ResendPolicy::TruncatedRenormalized => {
                if self.delay >= honest.plateau_length() {
                    return Ok(None);
                }
                honest.truncated(Interval::new(self.delay, f64::INFINITY)?)?
            }
        };
        PhotonState::new(bit, profile, 0.0, self.delay, true).map(Some)
    }
}

fn check_delay(chi: f64, channel_length: f64, plateau_length: f64) -> Result<()> {
    if !(plateau_length > 0.0) {
        return Err(invalid("plateau length must be positive"));
    }
    if !(0.0..plateau_length).contains(&channel_length) {
        return Err(invalid(format!("need 0 <= L_ch < L, got L_ch={channel_length}, L={plateau_length}")));
    }
    if !(chi >= 0.0) || chi + channel_length > plateau_length * (1.0 + 1e-12) {
        return Err(invalid(format!(
            "delay must satisfy 0 <= chi <= L - L_ch, got chi={chi}"
        )));
    }
    Ok(())
}

/// `Pr_E(chi) = (1 + (L_ch + chi)/L) / 2`.
pub fn eve_correct_probability(chi: f64, channel_length: f64, plateau_length: f64) -> Result<f64> {
    check_delay(chi, channel_length, plateau_length)?;
    Ok((0.5 * (1.0 + (channel_length + chi) / plateau_length)).min(1.0))
}

/// `Pr_B(chi) <= 1 - chi/L`.
pub fn bob_pass_bound(chi: f64, plateau_length: f64) -> f64 {
    (1.0 - chi / plateau_length).clamp(0.0, 1.0)
}

/// `(1 + (L_ch + chi)/L)(1 - chi/L) / 2`. Accepts `L_ch = L` for the
/// degenerate limit.
pub fn joint_success(chi: f64, channel_length: f64, plateau_length: f64) -> Result<f64> {
    if !(plateau_length > 0.0) || !(0.0..=plateau_length).contains(&channel_length) {
        return Err(invalid(format!("need 0 <= L_ch <= L, got L_ch={channel_length}, L={plateau_length}")));
    }
    if !(chi >= 0.0) || chi + channel_length > plateau_length * (1.0 + 1e-12) {
        return Err(invalid(format!("delay must satisfy 0 <= chi <= L - L_ch, got chi={chi}")));
    }
    Ok(0.5 * (1.0 + (channel_length + chi) / plateau_length) * bob_pass_bound(chi, plateau_length))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimalDelay {
    pub delay: f64,
    pub probability: f64,
}

/// Maximizer of [`joint_success`] over `[0, L - L_ch]`; it sits at zero
/// because the derivative `-(L_ch + 2 chi)/L^2` is never positive.
pub fn optimal_delay(channel_length: f64, plateau_length: f64) -> Result<OptimalDelay> {
    check_delay(0.0, channel_length, plateau_length)?;
    Ok(OptimalDelay {
        delay: 0.0,
        probability: 0.5 * (1.0 + channel_length / plateau_length),
    })
}

/// Exact per-state probabilities for one intercept-resend configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterceptModel {
    pub eve: EveDistribution,
    /// B's pass probability on Eve's substitute.
    pub bob_pass: f64,
}

impl InterceptModel {
    pub fn new(geometry: &Geometry, honest: &AmplitudeProfile, strategy: &EveStrategy) -> Result<Self> {
        let state = PhotonState::honest(0, honest.clone(), 0.0)?;
        let eve = eve_outcome_distribution(
            &state,
            &strategy.region(geometry),
            geometry.eve_time(strategy.delay),
        )?;
        let bob_pass = match strategy.resend_state(honest, 0)? {
            Some(sub) => {
                bob_outcome_distribution(&sub, honest, geometry.bob_time(), &geometry.bob_domain())?.pass()
            }
            None => 0.0,
        };
        Ok(Self { eve, bob_pass })
    }

    fn bob_distribution(&self, bit: u8) -> BobDistribution {
        let p = self.bob_pass;
        if bit == 0 {
            BobDistribution { zero: p, one: 0.0, inconclusive: 1.0 - p }
        } else {
            BobDistribution { zero: 0.0, one: p, inconclusive: 1.0 - p }
        }
    }
}

/// Counts from an intercept-resend Monte Carlo run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct InterceptCounts {
    pub trials: u64,
    pub eve_correct: u64,
    pub bob_pass: u64,
    pub joint: u64,
}

impl InterceptCounts {
    fn merge(self, o: Self) -> Self {
        Self {
            trials: self.trials + o.trials,
            eve_correct: self.eve_correct + o.eve_correct,
            bob_pass: self.bob_pass + o.bob_pass,
            joint: self.joint + o.joint,
        }
    }
}

/// Empirical rate and its binomial standard error.
pub fn binomial_rate(hits: u64, trials: u64) -> (f64, f64) {
    let p = hits as f64 / trials as f64;
    (p, (p * (1.0 - p) / trials as f64).sqrt())
}

/// Simulates `trials` rounds of: A sends a random bit, Eve measures on her
/// region and resends her guess, B runs his test on the substitute.
pub fn simulate_intercept_resend(model: &InterceptModel, trials: u64, seed: u64) -> InterceptCounts {
    (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = trial_rng(seed, i);
            let sent: u8 = rng.random_range(0..=1);
            // Eve's distribution is for bit 0; relabel for bit 1.
            let guess = match model.eve.sample(&mut rng).bit() {
                Some(b) => b ^ sent,
                None => rng.random_range(0..=1),
            };
            let bob = model.bob_distribution(guess).sample(&mut rng);
            let eve_correct = guess == sent;
            let pass = bob.is_conclusive();
            InterceptCounts {
                trials: 1,
                eve_correct: eve_correct as u64,
                bob_pass: pass as u64,
                joint: (eve_correct && pass) as u64,
            }
        })
        .reduce(InterceptCounts::default, InterceptCounts::merge)
}

/// Tolerance for the operator inequalities on a Kraus set.
pub const KRAUS_TOLERANCE: f64 = 1e-9;

pub type C64 = Complex<f64>;

/// Rank-one Kraus operators `S_k = sqrt(lambda_k) |phi_k><varphi_k|` on a
/// `dim`-dimensional truncation whose first `eve_dim` basis vectors span
/// Eve's region.
#[derive(Debug, Clone, PartialEq)]
pub struct KrausSet {
    dim: usize,
    eve_dim: usize,
    terms: Vec<KrausTerm>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KrausTerm {
    pub weight: f64,
    /// Output vector `phi_k`.
    pub output: DVector<C64>,
    /// Input vector `varphi_k`.
    pub input: DVector<C64>,
}

impl KrausSet {
    pub fn new(dim: usize, eve_dim: usize, terms: Vec<KrausTerm>) -> Result<Self> {
        if dim < 2 || eve_dim == 0 || eve_dim >= dim {
            return Err(invalid(format!("need 0 < eve_dim < dim, got eve_dim={eve_dim}, dim={dim}")));
        }
        for (i, t) in terms.iter().enumerate() {
            if t.output.len() != dim || t.input.len() != dim {
                return Err(invalid(format!("term {i} has the wrong dimension")));
            }
            if !(t.weight >= 0.0) {
                return Err(invalid(format!("term {i} has negative weight {}", t.weight)));
            }
            for v in [&t.output, &t.input] {
                if (v.norm() - 1.0).abs() > 1e-9 {
                    return Err(invalid(format!("term {i} has a non-unit vector")));
                }
            }
        }
        Ok(Self { dim, eve_dim, terms })
    }

    /// Basis projectors with unit weight.
    pub fn identity(dim: usize, eve_dim: usize) -> Result<Self> {
        let terms = (0..dim)
            .map(|i| {
                let e = DVector::from_fn(dim, |j, _| if i == j { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) });
                KrausTerm { weight: 1.0, output: e.clone(), input: e }
            })
            .collect();
        Self::new(dim, eve_dim, terms)
    }

    /// Random set with vectors uniform on the unit sphere of one block
    /// (Eve's region or its complement), scaled to be valid.
    pub fn random<R: Rng + ?Sized>(dim: usize, eve_dim: usize, terms: usize, rng: &mut R) -> Result<Self> {
        let mut out = Vec::with_capacity(terms);
        for _ in 0..terms {
            let in_eve = rng.random_bool(eve_dim as f64 / dim as f64);
            let (lo, hi) = if in_eve { (0, eve_dim) } else { (eve_dim, dim) };
            out.push(KrausTerm {
                weight: rng.random::<f64>(),
                output: random_unit(dim, lo, hi, rng),
                input: random_unit(dim, lo, hi, rng),
            });
        }
        // Scale weights so both operator inequalities hold.
        let mut set = Self::new(dim, eve_dim, out)?;
        let s_in = largest_eigenvalue(&set.input_sum());
        let s_out = largest_eigenvalue(&set.output_sum()).sqrt();
        let scale = 1.0 / s_in.max(s_out).max(f64::MIN_POSITIVE);
        for t in &mut set.terms {
            t.weight *= scale * (1.0 - 1e-12);
        }
        Ok(set)
    }

    /// Multiplies every weight by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for t in &mut out.terms {
            t.weight *= factor;
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eve_dim(&self) -> usize {
        self.eve_dim
    }

    pub fn terms(&self) -> &[KrausTerm] {
        &self.terms
    }

    /// `sum_k lambda_k S_k S_k^+ = sum_k lambda_k^2 |phi_k><phi_k|`.
    pub fn output_sum(&self) -> DMatrix<C64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for t in &self.terms {
            m += &t.output * t.output.adjoint() * C64::new(t.weight * t.weight, 0.0);
        }
        m
    }

    /// `sum_k S_k^+ S_k = sum_k lambda_k |varphi_k><varphi_k|`.
    pub fn input_sum(&self) -> DMatrix<C64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for t in &self.terms {
            m += &t.input * t.input.adjoint() * C64::new(t.weight, 0.0);
        }
        m
    }

    fn eve_projector(&self) -> DMatrix<C64> {
        DMatrix::from_fn(self.dim, self.dim, |i, j| {
            if i == j && i < self.eve_dim {
                C64::new(1.0, 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        })
    }

    /// Rejects sets that break the operator inequalities or move amplitude
    /// into Eve's region from outside it.
    pub fn validate(&self) -> Result<()> {
        let out_max = largest_eigenvalue(&self.output_sum());
        if out_max > 1.0 + KRAUS_TOLERANCE {
            return Err(Error::RejectedInstrument(format!(
                "sum of lambda_k S_k S_k^+ has eigenvalue {out_max} > 1"
            )));
        }
        let in_max = largest_eigenvalue(&self.input_sum());
        if in_max > 1.0 + KRAUS_TOLERANCE {
            return Err(Error::RejectedInstrument(format!(
                "sum of S_k^+ S_k has eigenvalue {in_max} > 1"
            )));
        }
        let p = self.eve_projector();
        for (i, t) in self.terms.iter().enumerate() {
            if t.weight == 0.0 {
                continue;
            }
            // Only amplitude already in Eve's region may end up there.
            let leak_out = (&p * &t.output).norm() * (&t.input - &p * &t.input).norm();
            let leak_in = (&t.output - &p * &t.output).norm() * (&p * &t.input).norm();
            if leak_out > KRAUS_TOLERANCE || leak_in > KRAUS_TOLERANCE {
                return Err(Error::RejectedInstrument(format!(
                    "term {i} couples Eve's region with its complement"
                )));
            }
        }
        Ok(())
    }
}

fn random_unit<R: Rng + ?Sized>(dim: usize, lo: usize, hi: usize, rng: &mut R) -> DVector<C64> {
    loop {
        let v = DVector::from_fn(dim, |i, _| {
            if (lo..hi).contains(&i) {
                C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
            } else {
                C64::new(0.0, 0.0)
            }
        });
        let n = v.norm();
        if n > 1e-12 {
            return v / C64::new(n, 0.0);
        }
    }
}

fn largest_eigenvalue(m: &DMatrix<C64>) -> f64 {
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Honest state on the truncation carrying mass `f` in Eve's region, spread
/// evenly over each block.
pub fn truncated_state(dim: usize, eve_dim: usize, f: f64) -> Result<DVector<C64>> {
    if !(0.0..=1.0).contains(&f) {
        return Err(invalid(format!("available fraction must lie in [0, 1], got {f}")));
    }
    if eve_dim == 0 || eve_dim >= dim {
        return Err(invalid("need 0 < eve_dim < dim"));
    }
    let a = (f / eve_dim as f64).sqrt();
    let b = ((1.0 - f) / (dim - eve_dim) as f64).sqrt();
    Ok(DVector::from_fn(dim, |i, _| C64::new(if i < eve_dim { a } else { b }, 0.0)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractionCheck {
    pub bound_holds: bool,
    /// `Tr{ T[|psi><psi|] I(Omega_E, t_E) }`.
    pub lhs: f64,
}

/// Evaluates Eve's detection probability after the noise instrument and
/// compares it with the noiseless value `f`.
pub fn instrument_contraction_check(kraus: &KrausSet, f: f64) -> Result<ContractionCheck> {
    kraus.validate()?;
    let psi = truncated_state(kraus.dim, kraus.eve_dim, f)?;
    let p = kraus.eve_projector();
    let mut lhs = 0.0;
    for t in &kraus.terms {
        // S_k psi = sqrt(lambda) phi <varphi|psi>
        let amp = t.input.dotc(&psi);
        let out = &t.output * (amp * C64::new(t.weight.sqrt(), 0.0));
        lhs += (out.adjoint() * &p * &out)[(0, 0)].re;
    }
    Ok(ContractionCheck {
        bound_holds: lhs <= f + KRAUS_TOLERANCE,
        lhs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::session_rng;

    #[test]
    fn eve_correct_values() {
        assert_eq!(eve_correct_probability(0.0, 0.0, 1.0).unwrap(), 0.5);
        assert_eq!(eve_correct_probability(0.0, 0.5, 1.0).unwrap(), 0.75);
        assert_eq!(eve_correct_probability(0.6, 0.4, 1.0).unwrap(), 1.0);
        assert!(eve_correct_probability(0.7, 0.4, 1.0).is_err());
        assert!(eve_correct_probability(0.0, 1.0, 1.0).is_err());
        assert!(eve_correct_probability(-0.1, 0.4, 1.0).is_err());
    }

    #[test]
    fn bob_bound_values() {
        assert_eq!(bob_pass_bound(0.0, 1.0), 1.0);
        assert_eq!(bob_pass_bound(1.0, 1.0), 0.0);
        assert_eq!(bob_pass_bound(0.25, 1.0), 0.75);
    }

    #[test]
    fn joint_values() {
        assert_eq!(joint_success(0.0, 0.5, 1.0).unwrap(), 0.75);
        assert_eq!(joint_success(0.0, 1.0, 1.0).unwrap(), 1.0);
        assert!((joint_success(0.5, 0.25, 1.0).unwrap() - 0.4375).abs() < 1e-15);
    }

    #[test]
    fn optimum_sits_at_zero_delay() {
        let o = optimal_delay(0.5, 1.0).unwrap();
        assert_eq!((o.delay, o.probability), (0.0, 0.75));
        let o = optimal_delay(0.0, 1.0).unwrap();
        assert_eq!((o.delay, o.probability), (0.0, 0.5));
        let best = joint_success(0.0, 0.3, 1.0).unwrap();
        for i in 1..=1000 {
            let chi = 0.7 * i as f64 / 1000.0;
            assert!(joint_success(chi, 0.3, 1.0).unwrap() < best);
        }
    }

    #[test]
    fn identity_instrument_reproduces_f() {
        let k = KrausSet::identity(8, 4).unwrap();
        let c = instrument_contraction_check(&k, 0.6).unwrap();
        assert!((c.lhs - 0.6).abs() < 1e-12);
        assert!(c.bound_holds);
    }

    #[test]
    fn random_instruments_contract() {
        let mut rng = session_rng(3);
        for _ in 0..100 {
            let k = KrausSet::random(8, 4, 12, &mut rng).unwrap();
            let c = instrument_contraction_check(&k, 0.6).unwrap();
            assert!(c.bound_holds, "lhs = {}", c.lhs);
        }
    }

    #[test]
    fn oversized_instrument_is_rejected() {
        let k = KrausSet::identity(8, 4).unwrap();
        // lambda^2 = 1.5 on every basis projector
        let bad = k.scaled(1.5f64.sqrt());
        assert!(matches!(
            instrument_contraction_check(&bad, 0.6),
            Err(Error::RejectedInstrument(_))
        ));
    }

    #[test]
    fn acausal_instrument_is_rejected() {
        // Moves amplitude from the complement into Eve's region.
        let dim = 8;
        let basis = |i: usize| DVector::from_fn(dim, |j, _| C64::new((i == j) as u8 as f64, 0.0));
        let k = KrausSet::new(dim, 4, vec![KrausTerm { weight: 1.0, output: basis(0), input: basis(6) }]).unwrap();
        assert!(matches!(k.validate(), Err(Error::RejectedInstrument(_))));
    }

    #[test]
    fn intercept_model_matches_closed_forms() {
        let g = Geometry::new(1.0, 0.5).unwrap();
        let honest = AmplitudeProfile::ideal(1.0).unwrap();
        let s = EveStrategy::new(0.25, &g, ResendPolicy::TruncatedRenormalized).unwrap();
        let m = InterceptModel::new(&g, &honest, &s).unwrap();
        assert!((m.eve.fire() - 0.75).abs() < 1e-9);
        assert!((m.bob_pass - 0.75).abs() < 1e-9);
        let s = EveStrategy::new(0.25, &g, ResendPolicy::ShiftedCopy).unwrap();
        let m = InterceptModel::new(&g, &honest, &s).unwrap();
        assert!((m.bob_pass - 0.5625).abs() < 1e-9);
        let s = EveStrategy::new(0.25, &g, ResendPolicy::NoResend).unwrap();
        assert_eq!(InterceptModel::new(&g, &honest, &s).unwrap().bob_pass, 0.0);
    }

    #[test]
    fn simulation_is_deterministic() {
        let g = Geometry::new(1.0, 0.5).unwrap();
        let honest = AmplitudeProfile::ideal(1.0).unwrap();
        let s = EveStrategy::new(0.1, &g, ResendPolicy::TruncatedRenormalized).unwrap();
        let m = InterceptModel::new(&g, &honest, &s).unwrap();
        assert_eq!(simulate_intercept_resend(&m, 5000, 9), simulate_intercept_resend(&m, 5000, 9));
    }
}
