//! CHSH evaluation for two-qubit states.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, SQRT_2};
use std::str::FromStr;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::device::{measurement_probabilities, DeviceConfig, MeasurementSetting};
use crate::error::{Error, Result};
use crate::qstate::{pauli_x, pauli_y, pauli_z, tensor2, DensityMatrix};

/// Tsirelson bound `2√2`.
pub const TSIRELSON: f64 = 2.0 * SQRT_2;
pub const CLASSICAL_BOUND: f64 = 2.0;

/// A single-qubit measurement direction as analysis phases.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Direction {
    pub theta_y: f64,
    pub theta_z: f64,
}

impl Direction {
    pub fn new(theta_y: f64, theta_z: f64) -> Self {
        Direction { theta_y, theta_z }
    }

    /// Bloch vector of the port-0 outcome.
    pub fn bloch(&self) -> [f64; 3] {
        let (sy, cy) = self.theta_y.sin_cos();
        let (sz, cz) = self.theta_z.sin_cos();
        [-sy * cz, sy * sz, cy]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChshSettings {
    /// `a`, `a′`
    pub signal: [Direction; 2],
    /// `b`, `b′`
    pub idler: [Direction; 2],
}

impl ChshSettings {
    /// `a = Z`, `a′ = X`, `b = (Z+X)/√2`, `b′ = (Z−X)/√2`, with the signal
    /// equatorial setting rotated by `theta` to follow the state's phase.
    pub fn canonical(theta: f64) -> Self {
        ChshSettings {
            signal: [Direction::new(0.0, 0.0), Direction::new(-FRAC_PI_2, -theta)],
            idler: [Direction::new(-FRAC_PI_4, 0.0), Direction::new(FRAC_PI_4, 0.0)],
        }
    }

    /// Settings for the correlators `E(a,b), E(a,b′), E(a′,b), E(a′,b′)`.
    pub fn settings(&self) -> [MeasurementSetting; 4] {
        let pair = |s: Direction, i: Direction| MeasurementSetting::new(s.theta_y, s.theta_z, i.theta_y, i.theta_z);
        [
            pair(self.signal[0], self.idler[0]),
            pair(self.signal[0], self.idler[1]),
            pair(self.signal[1], self.idler[0]),
            pair(self.signal[1], self.idler[1]),
        ]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ChshResult {
    pub s_value: f64,
    pub standard_error: f64,
    pub violated: bool,
    pub correlators: [f64; 4],
}

/// `S = √2·(1 + 2σ√β√(1−β))` for the two-source state.
pub fn chsh_model(beta: f64, sigma_mag: f64) -> f64 {
    SQRT_2 * (1.0 + visibility_from_state(beta, sigma_mag))
}

/// Phase-fringe visibility `2σ√(β(1−β))` of the two-source state.
pub fn visibility_from_state(beta: f64, sigma_mag: f64) -> f64 {
    2.0 * sigma_mag * (beta * (1.0 - beta)).max(0.0).sqrt()
}

/// Correlator `p00 − p01 − p10 + p11`.
pub fn correlator_from_probabilities(p: &[f64; 4]) -> f64 {
    p[0] - p[1] - p[2] + p[3]
}

/// `E(a,b) + E(a,b′) + E(a′,b) − E(a′,b′)`.
pub fn s_from_correlators(e: &[f64; 4]) -> f64 {
    e[0] + e[1] + e[2] - e[3]
}

pub fn chsh_fixed_settings(rho: &DensityMatrix, settings: &ChshSettings) -> ChshResult {
    let ideal = DeviceConfig::ideal();
    let correlators = settings
        .settings()
        .map(|s| correlator_from_probabilities(&measurement_probabilities(rho, &s, &ideal)));
    let s_value = s_from_correlators(&correlators);
    ChshResult {
        s_value,
        standard_error: 0.0,
        violated: s_value > CLASSICAL_BOUND,
        correlators,
    }
}

/// Correlation matrix `Tᵢⱼ = Tr(ρ·σᵢ⊗σⱼ)`.
pub fn correlation_matrix(rho: &DensityMatrix) -> Matrix3<f64> {
    let paulis = [pauli_x(), pauli_y(), pauli_z()];
    Matrix3::from_fn(|i, j| rho.expectation(&tensor2(&paulis[i], &paulis[j])))
}

/// Maximum CHSH value over all settings, `2√(t₁² + t₂²)` from the two largest
/// singular values of the correlation matrix.
pub fn chsh_optimal(rho: &DensityMatrix) -> f64 {
    let mut sv: Vec<f64> = correlation_matrix(rho).singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    2.0 * (sv[0] * sv[0] + sv[1] * sv[1]).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SConvention {
    /// `S = √2(1 + V)`, exact for the two-source state.
    Additive,
    /// `S = 2√2·V`, exact under isotropic noise.
    Multiplicative,
}

impl FromStr for SConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "additive" => Ok(SConvention::Additive),
            "multiplicative" => Ok(SConvention::Multiplicative),
            other => Err(Error::Unknown {
                what: "S convention",
                name: other.to_string(),
            }),
        }
    }
}

pub fn s_from_visibility(v: f64, convention: SConvention) -> Result<f64> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::param("visibility", format!("{v} outside [0, 1]")));
    }
    Ok(match convention {
        SConvention::Additive => SQRT_2 * (1.0 + v),
        SConvention::Multiplicative => TSIRELSON * v,
    })
}

/// Serialisable CHSH summary.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChshReport {
    pub settings: ChshSettings,
    pub correlators: [f64; 4],
    pub s: f64,
    pub standard_error: f64,
    /// `(S − 2)/σ_S`
    pub violation_sigmas: f64,
    /// `(S − 2)/(2√2 − 2)`
    pub violation_fraction: f64,
}

impl ChshReport {
    pub fn new(settings: ChshSettings, result: &ChshResult) -> Self {
        let excess = result.s_value - CLASSICAL_BOUND;
        ChshReport {
            settings,
            correlators: result.correlators,
            s: result.s_value,
            standard_error: result.standard_error,
            violation_sigmas: if result.standard_error > 0.0 {
                excess / result.standard_error
            } else if excess > 0.0 {
                f64::INFINITY
            } else {
                0.0
            },
            violation_fraction: excess / (TSIRELSON - CLASSICAL_BOUND),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::{build_state, StateParams};
    use crate::qstate::Ket;

    #[test]
    fn model_examples() {
        assert!((chsh_model(0.5, 1.0) - TSIRELSON).abs() < 1e-15);
        assert!((chsh_model(0.5, 0.0) - SQRT_2).abs() < 1e-15);
        // √2·(1 + 2·0.99·√(0.43·0.57))
        let s = chsh_model(0.43, 0.99);
        assert!((s - 2.8005).abs() < 1e-4, "{s}");
    }

    #[test]
    fn visibility_examples() {
        assert!((visibility_from_state(0.5, 1.0) - 1.0).abs() < 1e-15);
        assert!((visibility_from_state(0.43, 1.0) - 0.990).abs() < 5e-4);
        assert!((visibility_from_state(0.5, 0.947) - 0.947).abs() < 1e-15);
    }

    #[test]
    fn s_conversion_examples() {
        for c in [SConvention::Additive, SConvention::Multiplicative] {
            assert!((s_from_visibility(1.0, c).unwrap() - TSIRELSON).abs() < 1e-15);
        }
        let m = s_from_visibility(0.947, SConvention::Multiplicative).unwrap();
        assert!((m - 2.6785).abs() < 1e-4);
        assert!((m - 2.686).abs() < 0.026);
        let a = s_from_visibility(0.947, SConvention::Additive).unwrap();
        assert!((a - 2.753).abs() < 5e-4);
        assert!("quadratic".parse::<SConvention>().is_err());
        assert_eq!("additive".parse::<SConvention>().unwrap(), SConvention::Additive);
        assert!(s_from_visibility(1.2, SConvention::Additive).is_err());
    }

    #[test]
    fn fixed_settings_examples() {
        let bell = DensityMatrix::from_ket(&Ket::phi_plus()).unwrap();
        let r = chsh_fixed_settings(&bell, &ChshSettings::canonical(0.0));
        assert!((r.s_value - TSIRELSON).abs() < 1e-9);
        assert!(r.violated);

        let mixed = build_state(&StateParams::new(0.5, 0.0, 0.3)).unwrap();
        let r = chsh_fixed_settings(&mixed, &ChshSettings::canonical(0.3));
        assert!((r.s_value - SQRT_2).abs() < 1e-9);

        let product = DensityMatrix::from_ket(&Ket::basis2(0)).unwrap();
        let r = chsh_fixed_settings(&product, &ChshSettings::canonical(0.0));
        assert!((r.s_value - SQRT_2).abs() < 1e-9);
        assert!(!r.violated);
    }

    #[test]
    fn canonical_settings_track_theta() {
        for theta in [0.0, 0.7, -2.0, 3.0] {
            let rho = build_state(&StateParams::new(0.43, 0.9, theta)).unwrap();
            let r = chsh_fixed_settings(&rho, &ChshSettings::canonical(theta));
            assert!((r.s_value - chsh_model(0.43, 0.9)).abs() < 1e-9, "theta {theta}");
        }
    }

    #[test]
    fn optimal_examples() {
        let bell = DensityMatrix::from_ket(&Ket::phi_plus()).unwrap();
        assert!((chsh_optimal(&bell) - TSIRELSON).abs() < 1e-12);
        let mixed = build_state(&StateParams::new(0.5, 0.0, 0.0)).unwrap();
        assert!((chsh_optimal(&mixed) - 2.0).abs() < 1e-12);
        for (beta, sigma) in [(0.3, 0.8), (0.49, 0.95), (0.9, 0.2)] {
            let rho = build_state(&StateParams::new(beta, sigma, 1.1)).unwrap();
            let expect = 2.0 * (1.0 + 4.0 * sigma * sigma * beta * (1.0 - beta)).sqrt();
            assert!((chsh_optimal(&rho) - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn direction_bloch_vectors() {
        let [x, y, z] = Direction::new(-FRAC_PI_2, 0.0).bloch();
        assert!((x - 1.0).abs() < 1e-15 && y.abs() < 1e-15 && z.abs() < 1e-15);
        let [x, _, z] = Direction::new(-FRAC_PI_4, 0.0).bloch();
        assert!((x - z).abs() < 1e-15);
    }

    #[test]
    fn report_violation_figures() {
        let result = ChshResult {
            s_value: 2.686,
            standard_error: 0.026,
            violated: true,
            correlators: [0.0; 4],
        };
        let rep = ChshReport::new(ChshSettings::canonical(0.0), &result);
        assert!((rep.violation_sigmas - 26.4).abs() < 0.05);
        assert!((rep.violation_fraction - 0.828).abs() < 1e-3);
    }
}
