//! Pipeline configuration with defaults matching a 16 kHz setup.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gfvv::GtvvOptions;
use crate::pipeline::EchoMethod;
use crate::rdrir::AdmmConfig;
use crate::spectral::{hop_for, WindowKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// STFT window length in seconds.
    pub window_s: f64,
    pub overlap: f64,
    pub window: WindowKind,
    /// Frames with channel-0 energy above `vad_threshold × median` are active.
    pub vad_threshold: f64,
    pub buffer_s: f64,
    pub stride_s: f64,
    pub min_freq_hz: f64,
    pub max_freq_fraction: f64,
    pub grid_resolution_deg: f64,
    pub refine_max_iter: usize,
    pub refine_tol_deg: f64,
    /// Echo search window (τ_max) in seconds.
    pub j_max_s: f64,
    pub peaks: usize,
    pub min_separation: usize,
    pub admm_mu: Option<f64>,
    pub admm_max_iter: usize,
    pub admm_tol: f64,
    /// Delay matching tolerance in samples.
    pub tolerance: usize,
    pub method: EchoMethod,
    /// Sensor-noise level for simulation; `None` renders noiseless.
    pub snr_db: Option<f64>,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            window_s: 0.128,
            overlap: 0.75,
            window: WindowKind::default(),
            vad_threshold: 1.0,
            buffer_s: 0.5,
            stride_s: 0.25,
            min_freq_hz: 50.0,
            max_freq_fraction: 0.9,
            grid_resolution_deg: 2.0,
            refine_max_iter: 10,
            refine_tol_deg: 1.0,
            j_max_s: 0.05,
            peaks: 15,
            min_separation: 2,
            admm_mu: None,
            admm_max_iter: 100,
            admm_tol: 1e-6,
            tolerance: 2,
            method: EchoMethod::Admm,
            snr_db: None,
            seed: 0,
        }
    }
}

fn bad(msg: String) -> Error {
    Error::Config(msg)
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
        Ok(cfg)
    }

    pub fn window_len(&self, sample_rate: f64) -> usize {
        let n = (self.window_s * sample_rate).round() as usize;
        n + n % 2
    }

    pub fn hop(&self, sample_rate: f64) -> usize {
        hop_for(self.window_len(sample_rate), self.overlap)
    }

    pub fn j_max(&self, sample_rate: f64) -> usize {
        (self.j_max_s * sample_rate).round() as usize
    }

    pub fn gtvv_options(&self, sample_rate: f64) -> GtvvOptions {
        GtvvOptions {
            min_freq_hz: self.min_freq_hz,
            max_freq_fraction: self.max_freq_fraction,
            ..GtvvOptions::from_seconds(self.buffer_s, self.stride_s, self.hop(sample_rate), sample_rate)
        }
    }

    pub fn admm_config(&self) -> AdmmConfig {
        AdmmConfig {
            mu: self.admm_mu,
            max_iter: self.admm_max_iter,
            tol_primal: self.admm_tol,
            tol_dual: self.admm_tol,
            warm_start: None,
        }
    }

    pub fn validate(&self, sample_rate: f64) -> Result<()> {
        if !(sample_rate > 0.0) {
            return Err(bad(format!("sample rate {sample_rate} must be positive")));
        }
        let n = self.window_len(sample_rate);
        if n < 16 {
            return Err(bad(format!("window of {n} samples is too short")));
        }
        if !(0.0..1.0).contains(&self.overlap) {
            return Err(bad(format!("overlap {} outside [0, 1)", self.overlap)));
        }
        if let WindowKind::Tukey { taper } = self.window {
            if !(0.0..=1.0).contains(&taper) {
                return Err(bad(format!("Tukey taper {taper} outside [0, 1]")));
            }
        }
        if !(self.vad_threshold >= 0.0) {
            return Err(bad("VAD threshold must be nonnegative".into()));
        }
        if !(self.buffer_s > 0.0 && self.stride_s > 0.0) {
            return Err(bad("buffer and stride must be positive".into()));
        }
        if !(self.max_freq_fraction > 0.0 && self.max_freq_fraction <= 1.0) {
            return Err(bad("max_freq_fraction must lie in (0, 1]".into()));
        }
        if !(0.5..=30.0).contains(&self.grid_resolution_deg) {
            return Err(bad("grid resolution must lie in [0.5, 30] degrees".into()));
        }
        if self.refine_max_iter == 0 {
            return Err(bad("refine_max_iter must be at least 1".into()));
        }
        if !(self.j_max_s >= 0.0) {
            return Err(bad("j_max_s must be nonnegative".into()));
        }
        let jm = self.j_max(sample_rate);
        if jm >= n / 2 {
            return Err(bad(format!(
                "j_max of {jm} samples must lie in [0, {})",
                n / 2
            )));
        }
        if self.peaks == 0 {
            return Err(bad("peaks must be at least 1".into()));
        }
        if let Some(mu) = self.admm_mu {
            if !(mu > 0.0) {
                return Err(bad("admm_mu must be positive".into()));
            }
        }
        if self.snr_db.is_some_and(|s| !s.is_finite()) {
            return Err(bad("snr_db must be finite".into()));
        }
        if self.admm_max_iter == 0 || !(self.admm_tol > 0.0) {
            return Err(bad("ADMM iteration limit and tolerance must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_at_16k() {
        let c = PipelineConfig::default();
        c.validate(16000.0).unwrap();
        assert_eq!(c.window_len(16000.0), 2048);
        assert_eq!(c.hop(16000.0), 512);
        assert_eq!(c.j_max(16000.0), 800);
        let g = c.gtvv_options(16000.0);
        assert_eq!(g.buffer_frames, 16);
        assert_eq!(g.stride_frames, 8);
    }

    #[test]
    fn partial_json_and_rejections() {
        let c = PipelineConfig::from_json(r#"{"peaks": 6, "j_max_s": 0.04, "method": "cov"}"#).unwrap();
        assert_eq!(c.peaks, 6);
        assert_eq!(c.method, EchoMethod::Cov);
        assert!(PipelineConfig::from_json(r#"{"method": "mclms"}"#).is_err());
        assert_eq!(c.overlap, 0.75);
        assert!(PipelineConfig::from_json(r#"{"peeks": 6}"#).is_err());
        let c = PipelineConfig {
            j_max_s: 0.2,
            ..Default::default()
        };
        assert!(matches!(c.validate(16000.0), Err(Error::Config(_))));
        let c = PipelineConfig {
            overlap: 1.0,
            ..Default::default()
        };
        assert!(c.validate(16000.0).is_err());
    }
}
