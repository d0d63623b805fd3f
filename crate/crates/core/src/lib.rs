//! Relativistic key distribution with extended orthogonal photon states.
//!
//! The crate covers the wavepacket model, the measurements of both parties
//! and the eavesdropper, adversary bounds, key distillation and the
//! security analysis that ties them together.

pub mod adversary;
pub mod distill;
pub mod error;
pub mod infotheory;
pub mod measurement;
pub mod rng;
pub mod security;
pub mod wavepacket;

pub use adversary::{EveStrategy, InterceptModel, KrausSet, ResendPolicy};
pub use distill::{ChannelNoise, ProtocolConfig, Transcript};
pub use error::{Error, Result};
pub use measurement::{BobOutcome, EveOutcome, Geometry, PhotonState};
pub use security::{KeyParameters, SecurityReport, SecurityTarget};
pub use wavepacket::{AmplitudeProfile, Interval};
