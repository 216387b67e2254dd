//! Experiment configuration. Every key has a default; the defaults are the
//! reference preset, also checked in as `presets/reference.toml`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bell::SConvention;
use crate::device::{balance_from_brightness, DeviceConfig, PumpWeighting, StateParams};
use crate::source::{PumpParams, RingParams, SweepModel};
use crate::tomo::Resampling;

pub const REFERENCE_PRESET: &str = include_str!("../presets/reference.toml");

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("config is not valid TOML: {0}")]
    Syntax(String),
    #[error("bad config key: {0}")]
    Key(String),
    #[error("invalid value: {0}")]
    Invalid(#[from] crate::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourceConfig {
    /// GHz
    pub linewidth_top: f64,
    pub linewidth_bottom: f64,
    pub fsr: f64,
    /// Top-ring detuning used by the overlap experiment (GHz).
    pub detuning: f64,
    pub mu_top: f64,
    pub mu_bottom: f64,
    pub weighting: PumpWeighting,
}

impl Default for SourceConfig {
    fn default() -> Self {
        SourceConfig {
            linewidth_top: 21.0,
            linewidth_bottom: 21.0,
            fsr: 800.0,
            detuning: 0.0,
            mu_top: 0.06,
            mu_bottom: 0.09,
            weighting: PumpWeighting::Quadratic,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PumpConfig {
    pub pulse_duration_ps: f64,
    /// Intensity FWHM (GHz).
    pub linewidth: f64,
    pub rep_rate_mhz: f64,
    pub broadening: f64,
}

impl Default for PumpConfig {
    fn default() -> Self {
        PumpConfig {
            pulse_duration_ps: 10.8,
            linewidth: 40.0,
            rep_rate_mhz: 51.0,
            broadening: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JsaConfig {
    /// Grid half-width in linewidths.
    pub half_width_linewidths: f64,
    pub n_points: usize,
}

impl Default for JsaConfig {
    fn default() -> Self {
        JsaConfig {
            half_width_linewidths: 3.0,
            n_points: 128,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeviceSection {
    pub first_coupler_reflectivity: f64,
    pub analysis_coupler_reflectivities: [f64; 4],
    pub filter_bandwidth: f64,
    pub filter_selectivity_db: f64,
    pub filter_fsr: f64,
    pub per_arm_transmission: f64,
    pub detector_efficiency: f64,
    pub car: f64,
    pub multipair_fraction: f64,
}

impl Default for DeviceSection {
    fn default() -> Self {
        DeviceSection {
            first_coupler_reflectivity: 0.54,
            analysis_coupler_reflectivities: [0.5; 4],
            filter_bandwidth: 35.0,
            filter_selectivity_db: 22.0,
            filter_fsr: 640.0,
            per_arm_transmission: 0.0112,
            detector_efficiency: 0.25,
            car: 10.0,
            multipair_fraction: 0.03,
        }
    }
}

/// The entangled state used by the fringe and CHSH experiments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StateConfig {
    pub beta: f64,
    pub sigma: f64,
    pub theta: f64,
}

impl Default for StateConfig {
    fn default() -> Self {
        StateConfig {
            beta: 0.49,
            sigma: 0.977,
            theta: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub beta: f64,
    pub floor: f64,
    /// Sweep covers `±max_detuning_linewidths·Γ`.
    pub max_detuning_linewidths: f64,
    pub n_detunings: usize,
    pub counts_per_point: f64,
    pub n_phases: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            beta: 0.43,
            floor: 0.37,
            max_detuning_linewidths: 5.0,
            n_detunings: 21,
            counts_per_point: 300.0,
            n_phases: 12,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FringeConfig {
    pub n_phases: usize,
    /// Seconds per phase point.
    pub integration_time: f64,
    pub convention: SConvention,
    pub subtract_accidentals: bool,
}

impl Default for FringeConfig {
    fn default() -> Self {
        FringeConfig {
            n_phases: 24,
            integration_time: 60.0,
            convention: SConvention::Multiplicative,
            subtract_accidentals: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChshConfig {
    /// Seconds per setting.
    pub integration_time: f64,
    pub mc_samples: usize,
}

impl Default for ChshConfig {
    fn default() -> Self {
        ChshConfig {
            integration_time: 300.0,
            mc_samples: 500,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TomoConfig {
    /// Seconds per basis pair.
    pub integration_time: f64,
    pub mc_samples: usize,
    pub resampling: Resampling,
    pub stderr_scale: f64,
    pub subtract_accidentals: bool,
    /// Balance of the non-overlapped configuration.
    pub mixed_beta: f64,
    pub keep_samples: bool,
}

impl Default for TomoConfig {
    fn default() -> Self {
        TomoConfig {
            integration_time: 120.0,
            mc_samples: 500,
            resampling: Resampling::Normal,
            stderr_scale: 1.0,
            subtract_accidentals: true,
            mixed_beta: 0.49,
            keep_samples: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrateConfig {
    pub theta_y0: f64,
    pub kappa_y: f64,
    pub theta_z0: f64,
    pub kappa_z: f64,
    pub mzi_coupler_reflectivity: f64,
    pub v_max: f64,
    pub n_points: usize,
    /// Detected counts at full transmission; sets the Poisson noise.
    pub peak_counts: f64,
}

impl Default for CalibrateConfig {
    fn default() -> Self {
        CalibrateConfig {
            theta_y0: 0.3,
            kappa_y: 0.05,
            theta_z0: -0.8,
            kappa_z: 0.07,
            mzi_coupler_reflectivity: 0.5,
            v_max: 12.0,
            n_points: 16,
            peak_counts: 1e5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BudgetConfig {
    pub target_rate_hz: f64,
}

impl Default for BudgetConfig {
    fn default() -> Self {
        BudgetConfig { target_rate_hz: 30.0 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub source: SourceConfig,
    pub pump: PumpConfig,
    pub jsa: JsaConfig,
    pub device: DeviceSection,
    pub state: StateConfig,
    pub sweep: SweepConfig,
    pub fringe: FringeConfig,
    pub chsh: ChshConfig,
    pub tomo: TomoConfig,
    pub calibrate: CalibrateConfig,
    pub budget: BudgetConfig,
}

impl Config {
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Syntax(e.to_string()))?;
        for item in overrides {
            apply_override(&mut table, item)?;
        }
        let config: Config = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Key(e.message().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads `path`, or starts from the defaults when absent.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, ConfigError> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|source| ConfigError::Io {
                path: p.display().to_string(),
                source,
            })?,
            None => String::new(),
        };
        Config::from_toml(&text, overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn validate(&self) -> crate::Result<()> {
        self.ring_top()?;
        self.ring_bottom()?;
        self.pump()?;
        self.device().validate()?;
        self.sweep_model().map(|_| ())?;
        crate::device::build_state(&self.entangled_state())?;
        let counts = [
            ("jsa.n_points", self.jsa.n_points, 16),
            ("sweep.n_detunings", self.sweep.n_detunings, 5),
            ("sweep.n_phases", self.sweep.n_phases, 5),
            ("fringe.n_phases", self.fringe.n_phases, 5),
            ("chsh.mc_samples", self.chsh.mc_samples, 2),
            ("tomo.mc_samples", self.tomo.mc_samples, 2),
            ("calibrate.n_points", self.calibrate.n_points, 4),
        ];
        for (name, v, min) in counts {
            if v < min {
                return Err(crate::Error::param(name, format!("{v} is below the minimum {min}")));
            }
        }
        let positive = [
            ("jsa.half_width_linewidths", self.jsa.half_width_linewidths),
            ("sweep.max_detuning_linewidths", self.sweep.max_detuning_linewidths),
            ("sweep.counts_per_point", self.sweep.counts_per_point),
            ("fringe.integration_time", self.fringe.integration_time),
            ("chsh.integration_time", self.chsh.integration_time),
            ("tomo.integration_time", self.tomo.integration_time),
            ("tomo.stderr_scale", self.tomo.stderr_scale),
            ("calibrate.v_max", self.calibrate.v_max),
            ("calibrate.peak_counts", self.calibrate.peak_counts),
            ("budget.target_rate_hz", self.budget.target_rate_hz),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(crate::Error::param(name, "must be positive and finite"));
            }
        }
        if !(0.0..=1.0).contains(&self.tomo.mixed_beta) {
            return Err(crate::Error::param("tomo.mixed_beta", "outside [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.calibrate.mzi_coupler_reflectivity) {
            return Err(crate::Error::param("calibrate.mzi_coupler_reflectivity", "outside [0, 1]"));
        }
        Ok(())
    }

    /// Bottom ring at the pump-laser origin.
    pub fn ring_bottom(&self) -> crate::Result<RingParams> {
        RingParams::new(0.0, self.source.linewidth_bottom, self.source.fsr)
    }

    pub fn ring_top(&self) -> crate::Result<RingParams> {
        RingParams::new(0.0, self.source.linewidth_top, self.source.fsr)
    }

    /// Pump whose pair probability is the mean of the two sources.
    pub fn pump(&self) -> crate::Result<PumpParams> {
        let mut pump = PumpParams::new(
            self.pump.pulse_duration_ps,
            self.pump.linewidth,
            self.pump.rep_rate_mhz,
            0.5 * (self.source.mu_top + self.source.mu_bottom),
        )?;
        pump.broadening = self.pump.broadening;
        pump.validate()?;
        Ok(pump)
    }

    pub fn device(&self) -> DeviceConfig {
        let d = &self.device;
        DeviceConfig {
            first_coupler_reflectivity: d.first_coupler_reflectivity,
            analysis_coupler_reflectivities: d.analysis_coupler_reflectivities,
            filter_bandwidth: d.filter_bandwidth,
            filter_selectivity_db: d.filter_selectivity_db,
            filter_fsr: d.filter_fsr,
            per_arm_transmission: d.per_arm_transmission,
            detector_efficiency: d.detector_efficiency,
            rep_rate_mhz: self.pump.rep_rate_mhz,
            car: d.car,
            multipair_fraction: d.multipair_fraction,
        }
    }

    /// Balance predicted from the brightness figures and the first coupler.
    pub fn predicted_balance(&self) -> crate::Result<f64> {
        balance_from_brightness(
            self.source.mu_top,
            self.source.mu_bottom,
            self.device.first_coupler_reflectivity,
            self.source.weighting,
        )
    }

    pub fn entangled_state(&self) -> StateParams {
        StateParams::new(self.state.beta, self.state.sigma, self.state.theta)
    }

    pub fn sweep_model(&self) -> crate::Result<SweepModel> {
        let model = SweepModel {
            beta: self.sweep.beta,
            multipair_fraction: self.device.multipair_fraction,
            background_floor: self.sweep.floor,
            ..SweepModel::default()
        };
        if !(0.0..=1.0).contains(&model.beta) {
            return Err(crate::Error::param("sweep.beta", "outside [0, 1]"));
        }
        if !(0.0..=1.0).contains(&model.background_floor) {
            return Err(crate::Error::param("sweep.floor", "outside [0, 1]"));
        }
        Ok(model)
    }

    /// Detunings evenly spread over `±max_detuning_linewidths·Γ`.
    pub fn detunings(&self) -> Vec<f64> {
        let n = self.sweep.n_detunings;
        let span = self.sweep.max_detuning_linewidths * self.source.linewidth_bottom;
        (0..n).map(|k| -span + 2.0 * span * k as f64 / (n - 1) as f64).collect()
    }
}

fn apply_override(table: &mut toml::Table, item: &str) -> Result<(), ConfigError> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| ConfigError::Key(format!("override `{item}` is not key=value")))?;
    let key = key.trim();
    let path: Vec<&str> = key.split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(ConfigError::Key(format!("malformed key `{key}`")));
    }
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));

    let (last, parents) = path.split_last().expect("non-empty path");
    let mut node = table;
    for p in parents {
        let entry = node
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| ConfigError::Key(format!("`{p}` in `{key}` is not a section")))?;
    }
    node.insert(last.to_string(), value);
    Ok(())
}
