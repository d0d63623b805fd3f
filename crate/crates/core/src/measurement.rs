//! Bob's projective test and Eve's restricted-domain measurement.

use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::wavepacket::{mass_in_interval, overlap, AmplitudeProfile, Interval};

/// Tolerance used when checking that a distribution sums to one.
pub const DISTRIBUTION_TOLERANCE: f64 = 1e-9;

/// Placement of the parties along the line, with `t_A = 0`.
///
/// A's domain is `[0, L]`, the channel `[L, L + L_ch]`, B's domain
/// `[L + L_ch, 2L + L_ch]`. The speed of light is one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Geometry {
    pub plateau_length: f64,
    pub channel_length: f64,
}

impl Geometry {
    pub fn new(plateau_length: f64, channel_length: f64) -> Result<Self> {
        if !(plateau_length > 0.0) {
            return Err(invalid(format!("plateau length must be positive, got {plateau_length}")));
        }
        if !(0.0..plateau_length).contains(&channel_length) {
            return Err(invalid(format!(
                "channel length must satisfy 0 <= L_ch < L, got {channel_length} with L = {plateau_length}"
            )));
        }
        Ok(Self {
            plateau_length,
            channel_length,
        })
    }

    pub fn ratio(&self) -> f64 {
        self.channel_length / self.plateau_length
    }

    pub fn alice_domain(&self) -> Interval {
        Interval::new(0.0, self.plateau_length).expect("positive length")
    }

    pub fn bob_domain(&self) -> Interval {
        Interval::with_length(self.plateau_length + self.channel_length, self.plateau_length)
            .expect("positive length")
    }

    /// Time at which the honest plateau fills B's domain.
    pub fn bob_time(&self) -> f64 {
        self.plateau_length + self.channel_length
    }

    /// Region available to Eve after waiting `delay`: length `L_ch + delay`.
    pub fn eve_domain(&self, delay: f64) -> Interval {
        Interval::with_length(self.plateau_length, self.channel_length + delay.max(0.0))
            .expect("non-negative length")
    }

    pub fn eve_time(&self, delay: f64) -> f64 {
        self.channel_length + delay.max(0.0)
    }
}

/// A carrier in flight.
#[derive(Debug, Clone, PartialEq)]
pub struct PhotonState {
    bit: u8,
    profile: AmplitudeProfile,
    emission_time: f64,
    delay: f64,
    substituted: bool,
}

impl PhotonState {
    /// Honest state prepared by A.
    pub fn honest(bit: u8, profile: AmplitudeProfile, emission_time: f64) -> Result<Self> {
        Self::new(bit, profile, emission_time, 0.0, false)
    }

    pub fn new(
        bit: u8,
        profile: AmplitudeProfile,
        emission_time: f64,
        delay: f64,
        substituted: bool,
    ) -> Result<Self> {
        if bit > 1 {
            return Err(invalid(format!("bit must be 0 or 1, got {bit}")));
        }
        if !(delay >= 0.0) {
            return Err(invalid(format!("delay must be non-negative, got {delay}")));
        }
        if !emission_time.is_finite() {
            return Err(invalid("emission time must be finite"));
        }
        Ok(Self {
            bit,
            profile,
            emission_time,
            delay,
            substituted,
        })
    }

    pub fn bit(&self) -> u8 {
        self.bit
    }

    pub fn profile(&self) -> &AmplitudeProfile {
        &self.profile
    }

    pub fn emission_time(&self) -> f64 {
        self.emission_time
    }

    pub fn delay(&self) -> f64 {
        self.delay
    }

    pub fn is_substituted(&self) -> bool {
        self.substituted
    }

    /// Envelope in the emission frame: the profile lagging by the delay.
    pub fn envelope(&self) -> AmplitudeProfile {
        self.profile.shifted(-self.delay)
    }

    /// Earliest time at which any part of the state can be found in `region`.
    fn earliest_arrival(&self, region: &Interval) -> f64 {
        let at_emission = self.envelope().support(0.0);
        self.emission_time + (region.lo() - at_emission.hi()).max(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BobOutcome {
    Zero,
    One,
    Inconclusive,
}

impl BobOutcome {
    pub fn from_bit(bit: u8) -> Self {
        if bit == 0 {
            Self::Zero
        } else {
            Self::One
        }
    }

    pub fn bit(&self) -> Option<u8> {
        match self {
            Self::Zero => Some(0),
            Self::One => Some(1),
            Self::Inconclusive => None,
        }
    }

    pub fn is_conclusive(&self) -> bool {
        !matches!(self, Self::Inconclusive)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EveOutcome {
    FiredZero,
    FiredOne,
    NoFire,
}

impl EveOutcome {
    pub fn bit(&self) -> Option<u8> {
        match self {
            Self::FiredZero => Some(0),
            Self::FiredOne => Some(1),
            Self::NoFire => None,
        }
    }
}

fn check_distribution(parts: &[f64]) -> Result<()> {
    if parts.iter().any(|p| !(*p >= 0.0)) {
        return Err(invalid(format!("negative probability in {parts:?}")));
    }
    let sum: f64 = parts.iter().sum();
    if (sum - 1.0).abs() > DISTRIBUTION_TOLERANCE {
        return Err(invalid(format!("distribution sums to {sum}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BobDistribution {
    pub zero: f64,
    pub one: f64,
    pub inconclusive: f64,
}

impl BobDistribution {
    pub fn new(zero: f64, one: f64, inconclusive: f64) -> Result<Self> {
        check_distribution(&[zero, one, inconclusive])?;
        Ok(Self {
            zero,
            one,
            inconclusive,
        })
    }

    /// Probability that the outcome is conclusive.
    pub fn pass(&self) -> f64 {
        self.zero + self.one
    }

    pub fn probability(&self, outcome: BobOutcome) -> f64 {
        match outcome {
            BobOutcome::Zero => self.zero,
            BobOutcome::One => self.one,
            BobOutcome::Inconclusive => self.inconclusive,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> BobOutcome {
        let u: f64 = rng.random();
        if u < self.zero {
            BobOutcome::Zero
        } else if u < self.zero + self.one {
            BobOutcome::One
        } else {
            BobOutcome::Inconclusive
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EveDistribution {
    pub fired_zero: f64,
    pub fired_one: f64,
    pub no_fire: f64,
}

impl EveDistribution {
    pub fn new(fired_zero: f64, fired_one: f64, no_fire: f64) -> Result<Self> {
        check_distribution(&[fired_zero, fired_one, no_fire])?;
        Ok(Self {
            fired_zero,
            fired_one,
            no_fire,
        })
    }

    pub fn fire(&self) -> f64 {
        self.fired_zero + self.fired_one
    }

    pub fn probability(&self, outcome: EveOutcome) -> f64 {
        match outcome {
            EveOutcome::FiredZero => self.fired_zero,
            EveOutcome::FiredOne => self.fired_one,
            EveOutcome::NoFire => self.no_fire,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> EveOutcome {
        let u: f64 = rng.random();
        if u < self.fired_zero {
            EveOutcome::FiredZero
        } else if u < self.fired_zero + self.fired_one {
            EveOutcome::FiredOne
        } else {
            EveOutcome::NoFire
        }
    }
}

/// Outcome probabilities of B's test `{P_0(t_B), P_1(t_B), P_perp(t_B)}`.
///
/// The projectors are built from `reference` (the honest envelope) restricted
/// to `omega_b` and normalized there. Orthogonal polarizations make the
/// wrong-bit probability exactly zero.
pub fn bob_outcome_distribution(
    state: &PhotonState,
    reference: &AmplitudeProfile,
    t_b: f64,
    omega_b: &Interval,
) -> Result<BobDistribution> {
    if omega_b.len() < reference.plateau_length() * (1.0 - 1e-12) {
        return Err(invalid(format!(
            "B's domain of length {} is shorter than the plateau {}",
            omega_b.len(),
            reference.plateau_length()
        )));
    }
    let earliest = state.earliest_arrival(omega_b).max(state.emission_time);
    if t_b < earliest {
        return Err(Error::CausalityViolation {
            time: t_b,
            earliest,
        });
    }

    let t = t_b - state.emission_time;
    let norm = mass_in_interval(reference, omega_b, t);
    let pass = if norm > 0.0 {
        let amp = overlap(reference, &state.envelope(), omega_b, t);
        (amp * amp / norm).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (zero, one) = if state.bit == 0 { (pass, 0.0) } else { (0.0, pass) };
    BobDistribution::new(zero, one, 1.0 - pass)
}

/// Outcome probabilities of Eve's measurement `{E_0, E_1, I(complement)}` on `omega_e`.
pub fn eve_outcome_distribution(
    state: &PhotonState,
    omega_e: &Interval,
    t_e: f64,
) -> Result<EveDistribution> {
    let alice = state.profile.plateau_window(0.0).shifted(state.emission_time);
    let earliest = state.emission_time + alice.distance_to(omega_e);
    if t_e < earliest {
        return Err(Error::CausalityViolation {
            time: t_e,
            earliest,
        });
    }
    let f = mass_in_interval(&state.envelope(), omega_e, t_e - state.emission_time);
    let (fired_zero, fired_one) = if state.bit == 0 { (f, 0.0) } else { (0.0, f) };
    EveDistribution::new(fired_zero, fired_one, 1.0 - f)
}

/// Error and success probabilities of Eve's best guess when a fraction `f`
/// of the state lies in her region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GuessStatistics {
    pub error: f64,
    pub correct: f64,
}

pub fn eve_guess_statistics(f: f64) -> Result<GuessStatistics> {
    if !(0.0..=1.0).contains(&f) {
        return Err(invalid(format!("available fraction must lie in [0, 1], got {f}")));
    }
    let error = 0.5 * (1.0 - f);
    Ok(GuessStatistics {
        error,
        correct: 1.0 - error,
    })
}

pub fn sample_bob<R: Rng + ?Sized>(
    state: &PhotonState,
    reference: &AmplitudeProfile,
    t_b: f64,
    omega_b: &Interval,
    rng: &mut R,
) -> Result<BobOutcome> {
    Ok(bob_outcome_distribution(state, reference, t_b, omega_b)?.sample(rng))
}

pub fn sample_eve<R: Rng + ?Sized>(
    state: &PhotonState,
    omega_e: &Interval,
    t_e: f64,
    rng: &mut R,
) -> Result<EveOutcome> {
    Ok(eve_outcome_distribution(state, omega_e, t_e)?.sample(rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::session_rng;
    use crate::wavepacket::make_plateau;

    fn ideal() -> AmplitudeProfile {
        AmplitudeProfile::ideal(1.0).unwrap()
    }

    #[test]
    fn honest_state_passes_with_certainty() {
        let g = Geometry::new(1.0, 0.5).unwrap();
        let s = PhotonState::honest(0, ideal(), 0.0).unwrap();
        let d = bob_outcome_distribution(&s, &ideal(), g.bob_time(), &g.bob_domain()).unwrap();
        assert!((d.zero - 1.0).abs() < 1e-12);
        assert_eq!(d.one, 0.0);
        assert!(d.inconclusive.abs() < 1e-12);
    }

    #[test]
    fn truncated_delayed_state_passes_three_quarters() {
        let g = Geometry::new(1.0, 0.25).unwrap();
        let chi = 0.25;
        let sub = ideal().truncated(Interval::new(chi, 1.0).unwrap()).unwrap();
        let s = PhotonState::new(1, sub, 0.0, chi, true).unwrap();
        let d = bob_outcome_distribution(&s, &ideal(), g.bob_time(), &g.bob_domain()).unwrap();
        assert!((d.one - 0.75).abs() < 1e-9);
        assert_eq!(d.zero, 0.0);
        assert!((d.inconclusive - 0.25).abs() < 1e-9);
    }

    #[test]
    fn tail_mass_shows_up_as_inconclusive() {
        let p = make_plateau(1.0, 0.01, 0.02, 4096.0).unwrap();
        let g = Geometry::new(1.0, 0.3).unwrap();
        let s = PhotonState::honest(1, p.clone(), 0.0).unwrap();
        let d = bob_outcome_distribution(&s, &p, g.bob_time(), &g.bob_domain()).unwrap();
        assert!((d.inconclusive - 0.01).abs() < 1e-6, "{}", d.inconclusive);
    }

    #[test]
    fn bob_rejects_acausal_time() {
        let g = Geometry::new(1.0, 0.5).unwrap();
        let s = PhotonState::honest(0, ideal(), 0.0).unwrap();
        // Front of the state reaches B's domain at t = L_ch = 0.5.
        let err = bob_outcome_distribution(&s, &ideal(), 0.2, &g.bob_domain()).unwrap_err();
        assert!(matches!(err, Error::CausalityViolation { .. }));
        let short = Interval::new(1.5, 2.0).unwrap();
        assert!(bob_outcome_distribution(&s, &ideal(), 1.5, &short).is_err());
    }

    #[test]
    fn eve_fraction_on_region_of_length_point_six() {
        let g = Geometry::new(1.0, 0.6).unwrap();
        let s = PhotonState::honest(0, ideal(), 0.0).unwrap();
        let d = eve_outcome_distribution(&s, &g.eve_domain(0.0), g.eve_time(0.0)).unwrap();
        assert!((d.fired_zero - 0.6).abs() < 1e-12);
        assert_eq!(d.fired_one, 0.0);
        assert!((d.no_fire - 0.4).abs() < 1e-12);
    }

    #[test]
    fn eve_extremes() {
        let s = PhotonState::honest(1, ideal(), 0.0).unwrap();
        let all = Interval::new(0.0, 1.0).unwrap();
        let d = eve_outcome_distribution(&s, &all, 0.0).unwrap();
        assert!((d.fired_one - 1.0).abs() < 1e-12);
        let none = Interval::new(5.0, 6.0).unwrap();
        let d = eve_outcome_distribution(&s, &none, 10.0).unwrap();
        assert_eq!(d.no_fire, 1.0);
        // region 4 units beyond A's domain cannot be reached at t = 1
        assert!(eve_outcome_distribution(&s, &none, 1.0).is_err());
    }

    #[test]
    fn guess_statistics() {
        let g = eve_guess_statistics(0.0).unwrap();
        assert_eq!((g.error, g.correct), (0.5, 0.5));
        let g = eve_guess_statistics(1.0).unwrap();
        assert_eq!((g.error, g.correct), (0.0, 1.0));
        let g = eve_guess_statistics(0.6).unwrap();
        assert!((g.error - 0.2).abs() < 1e-15 && (g.correct - 0.8).abs() < 1e-15);
        assert!(eve_guess_statistics(1.1).is_err());
        assert!(eve_guess_statistics(-0.1).is_err());
    }

    #[test]
    fn degenerate_distribution_always_samples_its_atom() {
        let d = BobDistribution::new(1.0, 0.0, 0.0).unwrap();
        let mut rng = session_rng(1);
        assert!((0..1000).all(|_| d.sample(&mut rng) == BobOutcome::Zero));
    }

    #[test]
    fn eve_sampler_matches_fire_rate() {
        let d = EveDistribution::new(0.6, 0.0, 0.4).unwrap();
        let mut rng = session_rng(7);
        let n = 100_000;
        let fired = (0..n).filter(|_| d.sample(&mut rng) != EveOutcome::NoFire).count();
        let p = fired as f64 / n as f64;
        let sigma = (0.6 * 0.4 / n as f64).sqrt();
        assert!((p - 0.6).abs() < 3.0 * sigma, "{p}");
    }

    #[test]
    fn samplers_are_reproducible() {
        let g = Geometry::new(1.0, 0.4).unwrap();
        let s = PhotonState::honest(0, ideal(), 0.0).unwrap();
        let draw = |seed| {
            let mut rng = session_rng(seed);
            (0..200)
                .map(|_| sample_eve(&s, &g.eve_domain(0.0), g.eve_time(0.0), &mut rng).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(11), draw(11));
    }

    #[test]
    fn malformed_distributions_are_rejected() {
        assert!(BobDistribution::new(0.5, 0.5, 0.5).is_err());
        assert!(EveDistribution::new(-0.1, 0.6, 0.5).is_err());
    }
}
