//! JSON experiment configuration.
//!
//! Frequencies in the file are ordinary frequencies in Hz; the model types
//! take angular frequencies, so the accessors below convert.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::detection::{DetectionConfig, FilterDesign, FilterShape};
use crate::device::{DeviceParams, GainAnchor, PumpConfig};
use crate::error::{Error, Result};
use crate::gaussian::GaussianState;
use crate::tomography::{BinningSettings, WignerGrid};

pub const SCHEMA: &str = "jpa-tomo/config/1";

/// The shipped default configuration.
pub const REFERENCE_CONFIG: &str = include_str!("../configs/reference.json");

const TWO_PI: f64 = 2.0 * PI;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: String,
    pub device: DeviceSection,
    pub pump: PumpSection,
    pub filter: FilterSection,
    pub detection: DetectionSection,
    pub run: RunSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceSection {
    pub resonance_max_hz: f64,
    pub e_j_max_hz: f64,
    pub kerr_hz: f64,
    pub kappa_hz: f64,
    pub gamma_i_hz: f64,
    pub participation: f64,
    pub gain_bandwidth_const: f64,
    pub gain_anchor: AnchorSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnchorSection {
    pub pump_hz: f64,
    pub power_dbm: f64,
    pub g0: f64,
    pub detuning_width_hz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PumpSection {
    pub frequency_hz: f64,
    pub power_dbm: f64,
    pub critical_frequency_hz: f64,
    pub critical_power_dbm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSection {
    pub offset_hz: f64,
    pub shape: FilterShape,
    pub width_hz: f64,
    pub grid_points: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub half_span_hz: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionSection {
    pub n_noise: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_noise_ch2: Option<f64>,
    pub gain_ch1: f64,
    pub gain_ch2: f64,
    pub sample_period_s: f64,
    pub lo_offset_hz: f64,
}

/// Signal state fed to the simulated detection chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StateSource {
    /// Two-mode squeezed state with added thermal photons.
    Tms { r: f64, n_add: f64 },
    /// Filtered output of the configured amplifier.
    Device { input_thermal: f64 },
    /// Two-mode squeezed vacuum with its diagonal and off-diagonal elements
    /// rescaled; a generic imperfect source.
    Distorted {
        r: f64,
        diagonal_scale: f64,
        off_diagonal_scale: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FluxSweep {
    pub phi_min: f64,
    pub phi_max: f64,
    pub points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReflectionSweep {
    pub span_hz: f64,
    pub points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainMapGrid {
    pub pump_min_hz: f64,
    pub pump_max_hz: f64,
    pub pump_points: usize,
    pub power_min_dbm: f64,
    pub power_max_dbm: f64,
    pub power_points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PsdSweep {
    pub span_hz: f64,
    pub points: usize,
    /// Standard deviation of the additive noise on each PSD sample.
    pub noise_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
    pub n_records: u64,
    pub binning: BinningSettings,
    pub source: StateSource,
    pub wigner: WignerGrid,
    pub flux_sweep: FluxSweep,
    pub reflection: ReflectionSweep,
    pub gain_map: GainMapGrid,
    pub psd: PsdSweep,
}

impl ExperimentConfig {
    pub fn reference() -> Self {
        Self::from_json(REFERENCE_CONFIG).expect("shipped config is valid")
    }

    /// Parses and validates. Parse errors carry line and column.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::invalid(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> std::io::Result<std::result::Result<Self, Error>> {
        let text = std::fs::read_to_string(path)?;
        Ok(Self::from_json(&text))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA {
            return Err(Error::invalid(format!(
                "unsupported schema {:?}; expected {SCHEMA:?}",
                self.schema
            )));
        }
        self.device_params().validate()?;
        self.pump_config().validate()?;
        self.detection_config().validate()?;
        let f = &self.filter;
        if !(f.offset_hz > 0.0 && f.width_hz > 0.0) {
            return Err(Error::invalid("filter offset and width must be positive"));
        }
        let run = &self.run;
        if run.n_records < 2 {
            return Err(Error::invalid("run.n_records must be at least 2"));
        }
        let b = &run.binning;
        if b.bins < 2 || !(b.n_sigma > 0.0) || b.pilot_records < 2 {
            return Err(Error::invalid(
                "run.binning needs bins >= 2, n_sigma > 0, pilot_records >= 2",
            ));
        }
        if run.wigner.points < 2 || !(run.wigner.half_range > 0.0) {
            return Err(Error::invalid(
                "run.wigner needs points >= 2 and half_range > 0",
            ));
        }
        let fs = &run.flux_sweep;
        if fs.points < 2 || !(0.0 <= fs.phi_min && fs.phi_min < fs.phi_max && fs.phi_max < 0.5) {
            return Err(Error::invalid(
                "run.flux_sweep needs points >= 2 and 0 <= phi_min < phi_max < 0.5",
            ));
        }
        if run.reflection.points < 2 || !(run.reflection.span_hz > 0.0) {
            return Err(Error::invalid(
                "run.reflection needs points >= 2 and span_hz > 0",
            ));
        }
        let gm = &run.gain_map;
        if gm.pump_points < 1
            || gm.power_points < 1
            || !(gm.pump_min_hz <= gm.pump_max_hz && gm.power_min_dbm <= gm.power_max_dbm)
        {
            return Err(Error::invalid("run.gain_map ranges are empty"));
        }
        if !(gm.power_max_dbm < self.pump.critical_power_dbm) {
            return Err(Error::invalid(
                "run.gain_map.power_max_dbm must stay below pump.critical_power_dbm",
            ));
        }
        let psd = &run.psd;
        if psd.points < 10 || !(psd.span_hz > 0.0) || !(psd.noise_sigma >= 0.0) {
            return Err(Error::invalid(
                "run.psd needs points >= 10, span_hz > 0 and noise_sigma >= 0",
            ));
        }
        match run.source {
            StateSource::Device { input_thermal } if !(input_thermal >= 0.0) => {
                return Err(Error::invalid("source.input_thermal must be >= 0"))
            }
            StateSource::Tms { r, n_add } if !(r.is_finite() && n_add >= 0.0) => {
                return Err(Error::invalid("source needs finite r and n_add >= 0"))
            }
            StateSource::Distorted { .. } => {
                let s = distorted_state(&run.source)?;
                if !s.is_physical() {
                    return Err(Error::invalid(
                        "distorted source violates the uncertainty relation",
                    ));
                }
            }
            _ => {}
        }
        Ok(())
    }

    pub fn device_params(&self) -> DeviceParams {
        let d = &self.device;
        DeviceParams {
            omega_r_max: TWO_PI * d.resonance_max_hz,
            e_j_max: d.e_j_max_hz,
            kerr_k: TWO_PI * d.kerr_hz,
            kappa: TWO_PI * d.kappa_hz,
            gamma_i: TWO_PI * d.gamma_i_hz,
            participation: d.participation,
            gain_bandwidth_const: d.gain_bandwidth_const,
            gain_anchor: GainAnchor {
                omega_p: TWO_PI * d.gain_anchor.pump_hz,
                power_dbm: d.gain_anchor.power_dbm,
                g0: d.gain_anchor.g0,
                detuning_width: TWO_PI * d.gain_anchor.detuning_width_hz,
            },
        }
    }

    pub fn pump_config(&self) -> PumpConfig {
        let p = &self.pump;
        PumpConfig {
            omega_p: TWO_PI * p.frequency_hz,
            power_dbm: p.power_dbm,
            critical_omega_p: TWO_PI * p.critical_frequency_hz,
            critical_power_dbm: p.critical_power_dbm,
        }
    }

    pub fn filter_design(&self) -> FilterDesign {
        let f = &self.filter;
        FilterDesign {
            offset: TWO_PI * f.offset_hz,
            shape: f.shape,
            width: TWO_PI * f.width_hz,
            grid_points: f.grid_points,
            half_span: f.half_span_hz.map(|h| TWO_PI * h),
        }
    }

    pub fn detection_config(&self) -> DetectionConfig {
        let d = &self.detection;
        DetectionConfig {
            n_noise: d.n_noise,
            n_noise_ch2: d.n_noise_ch2,
            gain_ch1: d.gain_ch1,
            gain_ch2: d.gain_ch2,
            sample_period: d.sample_period_s,
            lo_offset: TWO_PI * d.lo_offset_hz,
        }
    }
}

/// Covariance of a [`StateSource::Distorted`] source.
pub fn distorted_state(source: &StateSource) -> Result<GaussianState> {
    let StateSource::Distorted {
        r,
        diagonal_scale,
        off_diagonal_scale,
    } = *source
    else {
        return Err(Error::invalid("not a distorted source"));
    };
    if !(diagonal_scale > 0.0 && off_diagonal_scale.is_finite()) {
        return Err(Error::invalid(
            "distortion scales must be finite, diagonal > 0",
        ));
    }
    let mut cov = GaussianState::two_mode_squeezed(r, 0.0)?.cov().clone();
    for i in 0..4 {
        for j in 0..4 {
            cov[(i, j)] *= if i == j {
                diagonal_scale
            } else {
                off_diagonal_scale
            };
        }
    }
    GaussianState::centered(cov)
}
