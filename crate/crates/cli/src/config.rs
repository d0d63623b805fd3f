//! Campaign configuration: TOML with one table per concern.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use relqkd_core::distill::ChannelNoise;
use relqkd_core::security::{solve_parameters, KeyParameters, SecurityTarget};
use relqkd_core::wavepacket::{make_plateau, DEFAULT_SAMPLES_PER_PLATEAU};
use relqkd_core::{AmplitudeProfile, EveStrategy, Geometry, ProtocolConfig, ResendPolicy};

use crate::InvalidInput;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Analyze,
    Simulate,
    Distill,
    Verify,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignSection {
    pub mode: Option<Mode>,
    pub seed: u64,
    #[serde(default = "default_trials")]
    pub trials: u64,
    pub out: Option<PathBuf>,
}

fn default_trials() -> u64 {
    100_000
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySection {
    #[serde(default = "one")]
    pub plateau_length: f64,
    #[serde(default)]
    pub channel_length: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for GeometrySection {
    fn default() -> Self {
        Self { plateau_length: 1.0, channel_length: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSection {
    #[serde(default)]
    pub tail_mass: f64,
    #[serde(default = "default_ramp")]
    pub ramp_fraction: f64,
    #[serde(default = "default_samples")]
    pub samples_per_plateau: f64,
}

fn default_ramp() -> f64 {
    0.05
}

fn default_samples() -> f64 {
    DEFAULT_SAMPLES_PER_PLATEAU
}

impl Default for ProfileSection {
    fn default() -> Self {
        Self { tail_mass: 0.0, ramp_fraction: default_ramp(), samples_per_plateau: default_samples() }
    }
}

/// Key parameters. Any of `key_length`..`hash_rounds` left out is filled in
/// by the parameter solver from `[security]`.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSection {
    pub key_length: Option<u32>,
    pub block_size: Option<u32>,
    pub blocks_per_parity: Option<u32>,
    pub hash_rounds: Option<u32>,
    #[serde(default = "default_disclose")]
    pub disclose_fraction: f64,
}

fn default_disclose() -> f64 {
    0.1
}

impl Default for ProtocolSection {
    fn default() -> Self {
        Self {
            key_length: None,
            block_size: None,
            blocks_per_parity: None,
            hash_rounds: None,
            disclose_fraction: default_disclose(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    #[serde(default)]
    pub flip: f64,
    #[serde(default)]
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EveSection {
    #[serde(default)]
    pub chi_over_l: f64,
    #[serde(default = "default_resend")]
    pub resend: String,
}

fn default_resend() -> String {
    "truncated".into()
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default)]
    pub ratio: Vec<f64>,
    #[serde(default)]
    pub chi_over_l: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SecuritySection {
    #[serde(default = "default_eps")]
    pub eps1: f64,
    #[serde(default = "default_eps")]
    pub eps2: f64,
    #[serde(default = "default_key_length")]
    pub key_length: u32,
    #[serde(default)]
    pub min_block_size: u32,
}

fn default_eps() -> f64 {
    1e-3
}

fn default_key_length() -> u32 {
    64
}

impl Default for SecuritySection {
    fn default() -> Self {
        Self { eps1: default_eps(), eps2: default_eps(), key_length: default_key_length(), min_block_size: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignSpec {
    pub campaign: CampaignSection,
    #[serde(default)]
    pub geometry: GeometrySection,
    #[serde(default)]
    pub profile: ProfileSection,
    #[serde(default)]
    pub protocol: ProtocolSection,
    #[serde(default)]
    pub noise: NoiseSection,
    pub eve: Option<EveSection>,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub security: SecuritySection,
}

impl CampaignSpec {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| InvalidInput(format!("config: {e}")).into())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))
            .map_err(|e| InvalidInput(format!("{e:#}")))?;
        Self::parse(&text)
    }

    /// Checks the invariants every mode relies on.
    pub fn validate(&self, mode: Mode) -> Result<()> {
        if let Some(m) = self.campaign.mode {
            if m != mode {
                bail!(InvalidInput(format!("config is for {m:?} but {mode:?} was requested")));
            }
        }
        if self.campaign.trials == 0 {
            bail!(InvalidInput("campaign.trials must be at least 1".into()));
        }
        if matches!(mode, Mode::Analyze | Mode::Simulate)
            && (self.sweep.ratio.is_empty() || self.sweep.chi_over_l.is_empty())
        {
            bail!(InvalidInput("sweep.ratio and sweep.chi_over_l must both be non-empty".into()));
        }
        Ok(())
    }

    pub fn geometry(&self) -> Result<Geometry> {
        Ok(Geometry::new(self.geometry.plateau_length, self.geometry.channel_length)?)
    }

    pub fn profile(&self, plateau_length: f64) -> Result<AmplitudeProfile> {
        let p = &self.profile;
        Ok(make_plateau(
            plateau_length,
            p.tail_mass,
            p.ramp_fraction,
            p.samples_per_plateau / plateau_length,
        )?)
    }

    pub fn resend_policy(&self) -> Result<ResendPolicy> {
        let name = self.eve.as_ref().map_or("truncated", |e| e.resend.as_str());
        Ok(name.parse::<ResendPolicy>()?)
    }

    pub fn noise(&self) -> Result<ChannelNoise> {
        Ok(ChannelNoise::new(self.noise.flip, self.noise.loss)?)
    }

    /// Key parameters from `[protocol]`, solved from `[security]` when
    /// incomplete.
    pub fn key_parameters(&self, ratio: f64) -> Result<KeyParameters> {
        let p = &self.protocol;
        if let (Some(key_length), Some(block_size), Some(blocks_per_parity), Some(hash_rounds)) =
            (p.key_length, p.block_size, p.blocks_per_parity, p.hash_rounds)
        {
            return Ok(KeyParameters { key_length, block_size, blocks_per_parity, hash_rounds });
        }
        let s = &self.security;
        let mut target = SecurityTarget::new(s.eps1, s.eps2, p.key_length.unwrap_or(s.key_length), ratio);
        target.min_block_size = s.min_block_size;
        Ok(solve_parameters(&target)?.0)
    }

    pub fn protocol_config(&self) -> Result<ProtocolConfig> {
        let geometry = self.geometry()?;
        let params = self.key_parameters(geometry.ratio())?;
        let mut cfg = ProtocolConfig::new(params, geometry, self.campaign.seed)?;
        cfg.profile = self.profile(geometry.plateau_length)?;
        cfg.disclose_fraction = self.protocol.disclose_fraction;
        cfg.noise = self.noise()?;
        if let Some(e) = &self.eve {
            cfg.eve = Some(EveStrategy::new(
                e.chi_over_l * geometry.plateau_length,
                &geometry,
                self.resend_policy()?,
            )?);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[campaign]\nseed = 1\n";

    #[test]
    fn defaults_fill_in() {
        let s = CampaignSpec::parse(MINIMAL).unwrap();
        assert_eq!(s.campaign.trials, 100_000);
        assert_eq!(s.geometry.plateau_length, 1.0);
        assert!(s.eve.is_none());
        assert!(s.validate(Mode::Distill).is_ok());
        assert!(s.validate(Mode::Analyze).is_err());
    }

    #[test]
    fn seed_is_required() {
        assert!(CampaignSpec::parse("[campaign]\ntrials = 3\n").is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(CampaignSpec::parse("[campaign]\nseed = 1\nsed = 2\n").is_err());
    }

    #[test]
    fn solver_fills_missing_parameters() {
        let s = CampaignSpec::parse("[campaign]\nseed = 1\n[geometry]\nchannel_length = 0.5\n").unwrap();
        let cfg = s.protocol_config().unwrap();
        assert_eq!(cfg.params.key_length, 64);
        assert_eq!(cfg.params.hash_rounds, 11);
    }

    #[test]
    fn mode_mismatch_is_invalid() {
        let s = CampaignSpec::parse("[campaign]\nseed = 1\nmode = \"verify\"\n").unwrap();
        assert!(s.validate(Mode::Distill).is_err());
        assert!(s.validate(Mode::Verify).is_ok());
    }
}
