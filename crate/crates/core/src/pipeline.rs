//! Recording → GTVV → reference filter / RdRIR → echoes.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::echoes::{extract_echoes, EchoEstimate, ExtractOptions};
use crate::error::{Error, Result};
use crate::gfvv::{estimate_gtvv, refine_doa, GtvvEstimate, RefinedDoa};
use crate::ism::{render_recording, white_noise, IsmScene, NoiseSource, RenderedSignal};
use crate::rdrir::{self, Method, RdRirEstimate};
use crate::sh::{build_grid, omni_beamformer, DirectionGrid};
use crate::signal::AmbisonicSignal;
use crate::spectral::{cross_periodograms_gated, stft, CrossSpectra};

/// Echo estimators: the three RdRIR solvers, the steered GTVV with the
/// corrected direction fit, and the omni-reference GTVV.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EchoMethod {
    Ac,
    Cov,
    Admm,
    Gtvv,
    Tdvv,
}

impl EchoMethod {
    pub const ALL: [EchoMethod; 5] = [
        EchoMethod::Ac,
        EchoMethod::Cov,
        EchoMethod::Admm,
        EchoMethod::Gtvv,
        EchoMethod::Tdvv,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            EchoMethod::Ac => "ac",
            EchoMethod::Cov => "cov",
            EchoMethod::Admm => "admm",
            EchoMethod::Gtvv => "gtvv",
            EchoMethod::Tdvv => "tdvv",
        }
    }

    pub fn solver(&self) -> Option<Method> {
        match self {
            EchoMethod::Ac => Some(Method::Ac),
            EchoMethod::Cov => Some(Method::Cov),
            EchoMethod::Admm => Some(Method::Admm),
            _ => None,
        }
    }
}

impl FromStr for EchoMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        EchoMethod::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown method '{s}'")))
    }
}

/// Analysis state shared by every method on one recording.
pub struct Analysis {
    pub config: PipelineConfig,
    pub cross_spectra: CrossSpectra,
    pub grid: DirectionGrid,
    pub doa: RefinedDoa,
    omni: Option<GtvvEstimate>,
}

#[derive(Debug, Clone)]
pub struct MethodResult {
    pub method: EchoMethod,
    pub echoes: Vec<EchoEstimate>,
    pub rdrir: Option<RdRirEstimate>,
}

impl Analysis {
    pub fn new(signal: &AmbisonicSignal, config: &PipelineConfig) -> Result<Self> {
        let fs = signal.sample_rate;
        config.validate(fs)?;
        let t = stft(
            signal,
            config.window_len(fs),
            config.overlap,
            config.window,
        )?;
        let cs = cross_periodograms_gated(&t, config.vad_threshold);
        let grid = build_grid(config.grid_resolution_deg, signal.order)?;
        let doa = refine_doa(
            &cs,
            &grid,
            &config.gtvv_options(fs),
            config.refine_max_iter,
            config.refine_tol_deg,
        )?;
        // The first refinement step already used the omni reference.
        let omni = if doa.iterations() == 1 {
            Some(doa.estimate.clone())
        } else {
            None
        };
        Ok(Self {
            config: config.clone(),
            cross_spectra: cs,
            grid,
            doa,
            omni,
        })
    }

    pub fn sample_rate(&self) -> f64 {
        self.cross_spectra.stft.sample_rate
    }

    pub fn extract_options(&self) -> ExtractOptions {
        ExtractOptions {
            peaks: self.config.peaks,
            min_separation: self.config.min_separation,
            j_max: self.config.j_max(self.sample_rate()),
            relative_floor: 1e-6,
        }
    }

    /// GTVV with the omni reference, computed on first use.
    pub fn omni_gtvv(&mut self) -> Result<&GtvvEstimate> {
        if self.omni.is_none() {
            let fs = self.sample_rate();
            let est = estimate_gtvv(
                &self.cross_spectra,
                &omni_beamformer(self.grid.order),
                &self.config.gtvv_options(fs),
            )?;
            self.omni = Some(est);
        }
        Ok(self.omni.as_ref().expect("set above"))
    }

    pub fn run(&mut self, method: EchoMethod) -> Result<MethodResult> {
        let opts = self.extract_options();
        match method {
            EchoMethod::Tdvv => {
                let grid = self.grid.clone();
                let m = &self.omni_gtvv()?.matrix;
                Ok(MethodResult {
                    method,
                    echoes: extract_echoes(m, &grid, &opts, None)?,
                    rdrir: None,
                })
            }
            EchoMethod::Gtvv => {
                let est = &self.doa.estimate;
                Ok(MethodResult {
                    method,
                    echoes: extract_echoes(&est.matrix, &self.grid, &opts, Some(&est.beamformer))?,
                    rdrir: None,
                })
            }
            _ => {
                let solver = method.solver().expect("RdRIR method");
                let r = rdrir::solve(&self.doa.estimate.matrix, opts.j_max, solver, &self.config.admm_config())?;
                Ok(MethodResult {
                    method,
                    echoes: extract_echoes(&r.h, &self.grid, &opts, None)?,
                    rdrir: Some(r),
                })
            }
        }
    }
}

/// Renders `scene` excited by white noise, with isotropic sensor noise when
/// `snr_db` is given. The same seed always produces the same recording.
pub fn render_white(
    scene: &IsmScene,
    duration_s: f64,
    snr_db: Option<f64>,
    seed: u64,
) -> Result<RenderedSignal> {
    let len = (duration_s * scene.sample_rate).round() as usize;
    let noise = NoiseSource::Isotropic {
        seed: seed.wrapping_add(0x9e37_79b9_7f4a_7c15),
    };
    render_recording(
        scene,
        &white_noise(len, seed),
        snr_db.unwrap_or(f64::INFINITY),
        &noise,
    )
}

/// Runs the listed methods on one recording.
pub fn analyze(
    signal: &AmbisonicSignal,
    config: &PipelineConfig,
    methods: &[EchoMethod],
) -> Result<(Analysis, Vec<MethodResult>)> {
    let mut a = Analysis::new(signal, config)?;
    let results = methods.iter().map(|&m| a.run(m)).collect::<Result<Vec<_>>>()?;
    Ok((a, results))
}
