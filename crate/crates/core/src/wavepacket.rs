//! One-dimensional photon envelopes `F(x - t)` and their integrals.
//!
//! A profile is described in its own *frame* coordinate `u = x - t`. At
//! reference time `t = 0` the plateau window of the honest envelope is
//! `[0, L]`; propagating to time `t` shifts everything by `+t`.
//!
//! The envelope is flat at `1/sqrt(L)` on the plateau interior. Each edge
//! carries a raised-cosine ramp of width `r * L` inside the window, joined
//! continuously to a raised-cosine tail of width `tau` outside it. The edge
//! level `e` and `tau` are solved in closed form so that the total mass is
//! one and the mass outside the plateau window is exactly `delta`.
//!
//! All integrals use a composite trapezoidal rule, split at every
//! breakpoint of the integrand so that each piece is smooth.

use std::f64::consts::PI;

use crate::error::{invalid, Error, Result};

/// Default number of quadrature samples across one plateau length.
pub const DEFAULT_SAMPLES_PER_PLATEAU: f64 = 4096.0;

/// Minimum number of samples that must fall on each ramp or tail.
pub const MIN_SAMPLES_PER_RAMP: f64 = 8.0;

/// Closed interval on the line. Either end may be infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    lo: f64,
    hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return Err(invalid(format!("interval [{lo}, {hi}] is malformed")));
        }
        Ok(Self { lo, hi })
    }

    /// The whole real line.
    pub fn everywhere() -> Self {
        Self {
            lo: f64::NEG_INFINITY,
            hi: f64::INFINITY,
        }
    }

    /// Interval of the given length starting at `lo`.
    pub fn with_length(lo: f64, len: f64) -> Result<Self> {
        Self::new(lo, lo + len)
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn is_empty(&self) -> bool {
        self.hi <= self.lo
    }

    pub fn shifted(&self, by: f64) -> Self {
        Self {
            lo: self.lo + by,
            hi: self.hi + by,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    /// Overlap of two intervals, `None` when they are disjoint or touch in a point.
    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        (lo < hi).then_some(Interval { lo, hi })
    }

    /// Separation between the nearest edges, zero when the intervals meet.
    pub fn distance_to(&self, other: &Interval) -> f64 {
        (other.lo - self.hi).max(self.lo - other.hi).max(0.0)
    }
}

/// Real, non-negative envelope with a flat plateau of length `L`.
#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeProfile {
    plateau_length: f64,
    tail_mass: f64,
    ramp_fraction: f64,
    resolution: f64,
    edge_level: f64,
    tail_width: f64,
    // Frame translation applied on top of the base envelope.
    offset: f64,
    // Frame-coordinate window outside which the envelope is zeroed.
    cut: Option<Interval>,
    scale: f64,
}

/// Builds a normalized plateau profile.
///
/// `resolution` is in samples per unit length.
pub fn make_plateau(
    plateau_length: f64,
    tail_mass: f64,
    ramp_fraction: f64,
    resolution: f64,
) -> Result<AmplitudeProfile> {
    if !(plateau_length > 0.0) || !plateau_length.is_finite() {
        return Err(invalid(format!("plateau length must be positive, got {plateau_length}")));
    }
    if !(0.0..1.0).contains(&tail_mass) {
        return Err(invalid(format!("tail mass must lie in [0, 1), got {tail_mass}")));
    }
    if !(0.0..0.5).contains(&ramp_fraction) {
        return Err(invalid(format!("ramp fraction must lie in [0, 1/2), got {ramp_fraction}")));
    }
    if !(resolution > 0.0) || !resolution.is_finite() {
        return Err(invalid(format!("resolution must be positive, got {resolution}")));
    }

    let (edge_level, tail_width) = if tail_mass == 0.0 {
        (1.0, 0.0)
    } else {
        // Per-edge balance: r (1 - e)(5 + 3e) / 8 = delta / 2.
        let ratio = tail_mass / ramp_fraction;
        if ramp_fraction == 0.0 || ratio >= 1.25 {
            return Err(invalid(format!(
                "tail mass {tail_mass} needs a ramp fraction above {}",
                tail_mass / 1.25
            )));
        }
        let e = (-2.0 + (64.0 - 48.0 * ratio).sqrt()) / 6.0;
        (e, 4.0 * tail_mass * plateau_length / (3.0 * e * e))
    };

    let ramp = ramp_fraction * plateau_length;
    if ramp > 0.0 && ramp * resolution < MIN_SAMPLES_PER_RAMP {
        return Err(invalid(format!(
            "resolution {resolution} puts fewer than {MIN_SAMPLES_PER_RAMP} samples on a ramp of width {ramp}"
        )));
    }
    if tail_width > 0.0 && tail_width * resolution < MIN_SAMPLES_PER_RAMP {
        return Err(invalid(format!(
            "resolution {resolution} puts fewer than {MIN_SAMPLES_PER_RAMP} samples on a tail of width {tail_width}"
        )));
    }

    Ok(AmplitudeProfile {
        plateau_length,
        tail_mass,
        ramp_fraction,
        resolution,
        edge_level,
        tail_width,
        offset: 0.0,
        cut: None,
        scale: 1.0,
    })
}

/// Raised cosine rising from 0 at `s = 0` to 1 at `s = 1`.
fn rise(s: f64) -> f64 {
    0.5 * (1.0 - (PI * s).cos())
}

impl AmplitudeProfile {
    /// Ideal rectangle of length `L` at the default resolution.
    pub fn ideal(plateau_length: f64) -> Result<Self> {
        make_plateau(
            plateau_length,
            0.0,
            0.0,
            DEFAULT_SAMPLES_PER_PLATEAU / plateau_length,
        )
    }

    pub fn plateau_length(&self) -> f64 {
        self.plateau_length
    }

    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    pub fn ramp_fraction(&self) -> f64 {
        self.ramp_fraction
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn tail_width(&self) -> f64 {
        self.tail_width
    }

    /// Value on the plateau interior.
    pub fn flat_value(&self) -> f64 {
        self.scale / self.plateau_length.sqrt()
    }

    fn base(&self, u: f64) -> f64 {
        let l = self.plateau_length;
        let ramp = self.ramp_fraction * l;
        let tau = self.tail_width;
        let e = self.edge_level;
        // Fold the right edge onto the left one.
        let d = if u > 0.5 * l { l - u } else { u };
        let shape = if d < -tau {
            0.0
        } else if d < 0.0 {
            e * (1.0 - rise(-d / tau))
        } else if d < ramp {
            e + (1.0 - e) * rise(d / ramp)
        } else {
            1.0
        };
        shape / l.sqrt()
    }

    /// Envelope value `F(x - t)`.
    pub fn value_at(&self, x: f64, t: f64) -> f64 {
        let u = x - t - self.offset;
        if let Some(cut) = &self.cut {
            if !cut.contains(u) {
                return 0.0;
            }
        }
        self.scale * self.base(u)
    }

    /// Plateau window `[0, L]` propagated to time `t`.
    pub fn plateau_window(&self, t: f64) -> Interval {
        Interval {
            lo: self.offset + t,
            hi: self.offset + t + self.plateau_length,
        }
    }

    /// Region where the envelope can be non-zero at time `t`.
    pub fn support(&self, t: f64) -> Interval {
        let mut frame = Interval {
            lo: -self.tail_width,
            hi: self.plateau_length + self.tail_width,
        };
        if let Some(cut) = &self.cut {
            frame = frame.intersect(cut).unwrap_or(Interval { lo: cut.lo, hi: cut.lo });
        }
        frame.shifted(self.offset + t)
    }

    /// Points where the envelope or its derivative may be discontinuous at time `t`.
    fn breakpoints(&self, t: f64) -> Vec<f64> {
        let l = self.plateau_length;
        let ramp = self.ramp_fraction * l;
        let tau = self.tail_width;
        let mut pts = vec![-tau, 0.0, ramp, l - ramp, l, l + tau, 0.5 * l];
        if let Some(cut) = &self.cut {
            pts.push(cut.lo);
            pts.push(cut.hi);
        }
        pts.into_iter()
            .filter(|p| p.is_finite())
            .map(|p| p + self.offset + t)
            .collect()
    }

    /// Same envelope translated by `by` in the frame (positive moves it forward).
    pub fn shifted(&self, by: f64) -> Self {
        let mut out = self.clone();
        out.offset += by;
        out.cut = self.cut;
        out
    }

    /// Restriction to the frame window `window` (reference time 0), renormalized.
    pub fn truncated(&self, window: Interval) -> Result<Self> {
        let frame_cut = window.shifted(-self.offset);
        let cut = match &self.cut {
            Some(c) => c.intersect(&frame_cut),
            None => Some(frame_cut),
        }
        .ok_or_else(|| Error::InvalidParameter("truncation window misses the profile".into()))?;
        let mut out = self.clone();
        out.cut = Some(cut);
        let mass = mass_in_interval(&out, &Interval::everywhere(), 0.0);
        if !(mass > 0.0) {
            return Err(invalid("truncation window carries no mass"));
        }
        out.scale /= mass.sqrt();
        Ok(out)
    }

    /// Mass outside the plateau window, measured by quadrature.
    pub fn achieved_tail_mass(&self) -> f64 {
        1.0 - mass_in_interval(self, &self.plateau_window(0.0), 0.0)
    }
}

/// Composite trapezoid for `g` over `window`, split at `breaks`.
fn integrate<G: Fn(f64) -> f64>(g: G, window: Interval, breaks: &mut Vec<f64>, resolution: f64) -> f64 {
    breaks.retain(|p| *p > window.lo && *p < window.hi);
    breaks.push(window.lo);
    breaks.push(window.hi);
    breaks.sort_by(|a, b| a.total_cmp(b));
    breaks.dedup();

    let mut total = 0.0;
    for piece in breaks.windows(2) {
        let (a, b) = (piece[0], piece[1]);
        let width = b - a;
        if width <= 0.0 {
            continue;
        }
        let n = (width * resolution).ceil().max(1.0) as usize;
        let h = width / n as f64;
        // Evaluate just inside the piece so one-sided limits are used at jumps.
        let eps = h * 1e-9;
        let mut sum = 0.5 * (g(a + eps) + g(b - eps));
        for i in 1..n {
            sum += g(a + i as f64 * h);
        }
        total += sum * h;
    }
    total
}

/// `∫_window |F(x - t)|^2 dx`.
pub fn mass_in_interval(profile: &AmplitudeProfile, window: &Interval, t: f64) -> f64 {
    let Some(region) = window.intersect(&profile.support(t)) else {
        return 0.0;
    };
    let mut breaks = profile.breakpoints(t);
    let m = integrate(
        |x| {
            let v = profile.value_at(x, t);
            v * v
        },
        region,
        &mut breaks,
        profile.resolution,
    );
    m.clamp(0.0, 1.0)
}

/// `∫_window F_a(x - t) F_b(x - t) dx` for real envelopes.
pub fn overlap(a: &AmplitudeProfile, b: &AmplitudeProfile, window: &Interval, t: f64) -> f64 {
    let Some(region) = window
        .intersect(&a.support(t))
        .and_then(|w| w.intersect(&b.support(t)))
    else {
        return 0.0;
    };
    let mut breaks = a.breakpoints(t);
    breaks.extend(b.breakpoints(t));
    integrate(
        |x| a.value_at(x, t) * b.value_at(x, t),
        region,
        &mut breaks,
        a.resolution.max(b.resolution),
    )
}
