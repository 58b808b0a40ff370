//! Run configuration files (JSON or TOML, chosen by extension).

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::csm::DEFAULT_POLY_ORDER;
use crate::error::{Error, Result};
use crate::geometry::{SamplingScheme, ShotOrdering};
use crate::grid::RngSeed;
use crate::prior::PriorSpec;
use crate::sampler::SamplerConfig;

/// Parameters of a simulated acquisition.
///
/// Required: `height`, `width`, `coils`, `shots`, `accel`, `k_theta`, `k_t`, `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub height: usize,
    pub width: usize,
    pub coils: usize,
    /// Polynomial order of the synthetic ground-truth coil maps (at most 6).
    #[serde(default = "default_csm_order")]
    pub csm_order: usize,
    /// Order used for reconstruction; recorded in the manifest.
    #[serde(default = "default_poly_order")]
    pub poly_order: usize,
    pub shots: usize,
    pub accel: f64,
    #[serde(default = "default_acs")]
    pub acs_lines: usize,
    #[serde(default = "default_scheme")]
    pub scheme: SamplingScheme,
    #[serde(default)]
    pub ordering: ShotOrdering,
    /// Rotation bound in degrees.
    pub k_theta: f64,
    /// Translation bound in pixels.
    pub k_t: f64,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default = "default_phase")]
    pub phase_strength: f64,
    pub seed: RngSeed,
}

fn default_csm_order() -> usize {
    3
}

fn default_poly_order() -> usize {
    DEFAULT_POLY_ORDER
}

fn default_acs() -> usize {
    8
}

fn default_scheme() -> SamplingScheme {
    SamplingScheme::Random
}

fn default_phase() -> f64 {
    1.0
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.height < 16 || self.width < 16 {
            return bad(format!("grid {}x{} is below 16x16", self.height, self.width));
        }
        if self.coils == 0 {
            return bad("coils must be at least 1".into());
        }
        if self.shots == 0 {
            return bad("shots must be at least 1".into());
        }
        if self.csm_order > 6 {
            return bad(format!("csm_order {} exceeds 6", self.csm_order));
        }
        if !(self.accel >= 1.0) {
            return bad(format!("accel must be >= 1, got {}", self.accel));
        }
        if !(self.k_theta >= 0.0 && self.k_t >= 0.0) {
            return bad("k_theta and k_t must be non-negative".into());
        }
        if !(self.noise_sigma >= 0.0) {
            return bad("noise_sigma must be non-negative".into());
        }
        Ok(())
    }
}

/// Sampler settings plus the image prior.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconConfig {
    pub sampler: SamplerConfig,
    pub prior: PriorSpec,
}

fn parse<T: DeserializeOwned>(text: &str, toml_syntax: bool, origin: &str) -> Result<T> {
    if toml_syntax {
        toml::from_str(text).map_err(|e| Error::Config(format!("{origin}: {e}")))
    } else {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("{origin}: {e}")))
    }
}

/// Reads a config file; `.toml` is parsed as TOML, anything else as JSON.
pub fn load_config<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let is_toml = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml"));
    parse(&text, is_toml, &path.display().to_string())
}

pub fn parse_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    parse(text, false, "<json>")
}

pub fn parse_toml<T: DeserializeOwned>(text: &str) -> Result<T> {
    parse(text, true, "<toml>")
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"height": 64, "width": 64, "coils": 4, "shots": 4, "accel": 2,
        "k_theta": 2, "k_t": 3, "seed": 7}"#;

    #[test]
    fn minimal_json_fills_defaults() {
        let c: SimConfig = parse_json(MINIMAL).unwrap();
        assert_eq!(c.poly_order, 15);
        assert_eq!(c.csm_order, 3);
        assert_eq!(c.scheme, SamplingScheme::Random);
        assert_eq!(c.seed, RngSeed(7));
        c.validate().unwrap();
    }

    #[test]
    fn missing_field_is_named() {
        let e = parse_json::<SimConfig>(r#"{"height": 64, "width": 64}"#).unwrap_err();
        assert!(e.to_string().contains("coils"), "{e}");
        let e = parse_json::<SimConfig>(&MINIMAL.replace("\"seed\": 7", "\"sed\": 7")).unwrap_err();
        assert!(e.to_string().contains("sed"), "{e}");
    }

    #[test]
    fn toml_recon_config() {
        let c: ReconConfig = parse_toml(
            "[sampler]\nsteps = 10\ninner_loops = 2\nblock_steps = \"preconditioned\"\n\n[prior]\nkind = \"smoothness\"\nalpha = 30.0\n",
        )
        .unwrap();
        assert_eq!(c.sampler.steps, 10);
        assert_eq!(c.sampler.total_updates(), 20);
        assert_eq!(c.prior, PriorSpec::Smoothness { alpha: 30.0 });
        assert!(parse_toml::<ReconConfig>("[sampler]\nstep = 3\n").is_err());
    }

    #[test]
    fn validation_rejects_bad_values() {
        let mut c: SimConfig = parse_json(MINIMAL).unwrap();
        c.csm_order = 7;
        assert!(c.validate().is_err());
        c.csm_order = 3;
        c.height = 8;
        assert!(c.validate().is_err());
    }
}
