//! Fixtures shared by the benchmarks in `benches/`.

use relqkd_core::security::KeyParameters;
use relqkd_core::wavepacket::make_plateau;
use relqkd_core::{AmplitudeProfile, Geometry, ProtocolConfig};

/// Unit plateau with 1% tail mass on 10% ramps.
pub fn smooth_profile(samples_per_plateau: f64) -> AmplitudeProfile {
    make_plateau(1.0, 0.01, 0.1, samples_per_plateau).expect("valid profile")
}

/// Noiseless session at `L_ch/L = 0.5` producing a `key_length`-bit key.
pub fn session_config(key_length: u32, seed: u64) -> ProtocolConfig {
    let params = KeyParameters { key_length, block_size: 3, blocks_per_parity: 8, hash_rounds: 10 };
    ProtocolConfig::new(params, Geometry::new(1.0, 0.5).expect("valid geometry"), seed).expect("valid config")
}
