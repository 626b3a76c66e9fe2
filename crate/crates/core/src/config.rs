//! Structured configuration: tower geometry, sensor response, radiometry,
//! simulation and generator settings.
//!
//! The shipped `config/default.toml` holds every default value. A user file
//! (or `key=value` overrides) is merged over it table by table; any key that
//! is not present in the defaults is rejected with its line number.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// The versioned default configuration.
pub const DEFAULT_CONFIG: &str = include_str!("../../../config/default.toml");

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub schema_version: u32,
    pub tower: TowerSection,
    pub sensor_response: SensorResponseSection,
    pub radiometry: RadiometrySection,
    pub simulation: SimulationSection,
    pub generator: GeneratorSection,
    pub features: FeaturesSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TowerSection {
    pub sample_rate_hz: f64,
    pub samples_per_event: usize,
    pub lenses: BTreeMap<String, LensSection>,
    pub channels: Vec<ChannelSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LensSection {
    pub kind: String,
    pub focal_length_m: f64,
    pub aperture_area_m2: f64,
    pub transmission: f64,
    pub filter_fraction: f64,
    pub mount_x_m: f64,
    pub mount_height_m: f64,
    pub yaw_rad: f64,
    pub lenslet_azimuths_rad: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSection {
    pub name: String,
    pub lens: String,
    pub pixel_width_m: f64,
    pub pixel_height_m: f64,
    pub pixel_gap_m: f64,
    pub vertical_offset_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorResponseSection {
    pub k1_per_s: f64,
    pub k2_per_s: f64,
    pub k3_per_s: f64,
    pub k4_per_s: f64,
    pub gain: f64,
    pub clip_low_v: f64,
    pub clip_high_v: f64,
    pub dc_offset_v: f64,
    pub noise_std_v: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadiometrySection {
    pub atmospheric_transmission: f64,
    pub background_temperature_k: f64,
    pub stefan_boltzmann_w_per_m2_k4: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub grid_resolution_per_m: f64,
    pub oversample: usize,
    pub agc_peak_fraction: f64,
    pub window_center_fraction: f64,
}

/// Closed ranges `[lo, hi]` sampled uniformly by the dataset generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSection {
    pub speed_mps: [f64; 2],
    pub inclination_rad: [f64; 2],
    pub range_m: [f64; 2],
    pub human_height_m: [f64; 2],
    pub human_temperature_k: [f64; 2],
    pub animal_height_m: [f64; 2],
    pub animal_length_ratio: [f64; 2],
    pub animal_temperature_k: [f64; 2],
    pub shrub_count: [usize; 2],
    pub shrub_height_m: [f64; 2],
    pub shrub_width_m: [f64; 2],
    pub shrub_range_m: [f64; 2],
    pub shrub_temperature_k: [f64; 2],
    pub sway_amplitude_m: [f64; 2],
    pub sway_frequency_hz: [f64; 2],
    pub gusts_per_shrub: [usize; 2],
    pub gust_duration_s: [f64; 2],
    pub shrub_placement: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeaturesSection {
    pub chirplets_per_channel: usize,
    pub truth_table_thresholds: Vec<f64>,
    pub threshold_noise_multiple: f64,
    pub idle_calibration_events: usize,
}

impl Default for Config {
    fn default() -> Self {
        Config::from_toml_str("").expect("shipped default config parses")
    }
}

impl Config {
    /// Parse a user config (possibly empty) merged over the defaults.
    pub fn from_toml_str(text: &str) -> Result<Config> {
        Self::with_overrides(text, &[])
    }

    /// Parse a user config plus `dotted.key=value` overrides, both merged
    /// over the defaults.
    pub fn with_overrides(text: &str, overrides: &[String]) -> Result<Config> {
        let mut base: toml::Value = DEFAULT_CONFIG
            .parse()
            .map_err(|e| Error::Config(format!("default config: {e}")))?;
        let user: toml::Value = text.parse().map_err(|e: toml::de::Error| {
            Error::Config(format!("parse error: {}", e.to_string().trim()))
        })?;
        check_known_keys(&base, &user, "", text)?;
        merge(&mut base, user);
        for ov in overrides {
            apply_override(&mut base, ov)?;
        }
        let cfg: Config = base
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string().trim().to_string()))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "key `schema_version`: unsupported version {} (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Config> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::with_overrides(&text, overrides)
            .map_err(|e| Error::Config(format!("{}: {}", path.display(), strip_prefix(&e))))
    }

    /// SHA-256 over the canonical JSON form of the merged configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

fn strip_prefix(e: &Error) -> String {
    match e {
        Error::Config(m) => m.clone(),
        other => other.to_string(),
    }
}

fn check_known_keys(base: &toml::Value, user: &toml::Value, prefix: &str, text: &str) -> Result<()> {
    let (Some(bt), Some(ut)) = (base.as_table(), user.as_table()) else {
        return Ok(());
    };
    for (k, uv) in ut {
        let path = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match bt.get(k) {
            None => {
                let line = find_key_line(text, k)
                    .map(|l| format!(" (line {l})"))
                    .unwrap_or_default();
                return Err(Error::Config(format!("unknown key `{path}`{line}")));
            }
            Some(bv) => check_known_keys(bv, uv, &path, text)?,
        }
    }
    Ok(())
}

fn find_key_line(text: &str, key: &str) -> Option<usize> {
    text.lines().position(|l| {
        let t = l.trim_start();
        let bare = t.trim_start_matches('[').trim_start_matches('[');
        (t.starts_with(key) && t[key.len()..].trim_start().starts_with('='))
            || bare.split(']').next().is_some_and(|s| s.split('.').any(|p| p.trim() == key))
    })
    .map(|i| i + 1)
}

fn merge(base: &mut toml::Value, user: toml::Value) {
    match (base, user) {
        (toml::Value::Table(bt), toml::Value::Table(ut)) => {
            for (k, v) in ut {
                match bt.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        bt.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn apply_override(base: &mut toml::Value, ov: &str) -> Result<()> {
    let (key, raw) = ov
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{ov}` is not key=value")))?;
    let key = key.trim();
    let parsed: toml::Value = format!("v = {}", raw.trim())
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
    let mut cur = base;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, p) in parts.iter().enumerate() {
        let table = cur
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("unknown key `{key}`")))?;
        let slot = table
            .get_mut(*p)
            .ok_or_else(|| Error::Config(format!("unknown key `{key}`")))?;
        if i + 1 == parts.len() {
            *slot = parsed;
            return Ok(());
        }
        cur = slot;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_parse() {
        let cfg = Config::default();
        assert_eq!(cfg.tower.channels.len(), 8);
        assert_eq!(cfg.tower.samples_per_event, 1024);
        assert_eq!(cfg.tower.sample_rate_hz, 20.0);
    }

    #[test]
    fn unknown_key_is_rejected_with_line() {
        let err = Config::from_toml_str("[tower]\nsample_rate_hz = 20.0\nfocal_lenght_m = 1\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("tower.focal_lenght_m"), "{msg}");
        assert!(msg.contains("line 3"), "{msg}");
    }

    #[test]
    fn user_values_override_defaults() {
        let cfg = Config::from_toml_str("[sensor_response]\nnoise_std_v = 0.0\n").unwrap();
        assert_eq!(cfg.sensor_response.noise_std_v, 0.0);
        assert_eq!(cfg.sensor_response.k1_per_s, 1.0);
    }

    #[test]
    fn dotted_override() {
        let cfg = Config::with_overrides("", &["simulation.oversample=3".into()]).unwrap();
        assert_eq!(cfg.simulation.oversample, 3);
        assert!(Config::with_overrides("", &["simulation.nope=3".into()]).is_err());
    }

    #[test]
    fn type_errors_surface() {
        assert!(Config::from_toml_str("[tower]\nsample_rate_hz = \"fast\"\n").is_err());
        assert!(Config::from_toml_str("schema_version = 2\n").is_err());
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = Config::default();
        let b = Config::from_toml_str("[simulation]\noversample = 4\n").unwrap();
        assert_eq!(a.hash(), Config::default().hash());
        assert_ne!(a.hash(), b.hash());
    }
}
