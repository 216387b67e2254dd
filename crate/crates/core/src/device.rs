//! The chip: two-source path-entangled state, analysis interferometers and
//! coincidence counting.

use std::f64::consts::FRAC_PI_2;
use std::io::{Read, Write};

use nalgebra::{Matrix2, Matrix4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qstate::{tensor2, DensityMatrix, C64, I, ONE, ZERO};
use crate::source::PumpParams;

/// Parameters of the two-source state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateParams {
    /// Probability that the pair came from the top source.
    pub beta: f64,
    /// Spectral overlap of the two sources, `|σ| ≤ 1`.
    pub sigma: C64,
    /// Total two-qubit phase (rad).
    pub theta: f64,
}

impl StateParams {
    pub fn new(beta: f64, sigma: f64, theta: f64) -> Self {
        StateParams {
            beta,
            sigma: C64::new(sigma, 0.0),
            theta,
        }
    }

    /// Moves the phase of `sigma` into `theta` so that `sigma` is real and non-negative.
    pub fn canonical(&self) -> Self {
        StateParams {
            beta: self.beta,
            sigma: C64::new(self.sigma.norm(), 0.0),
            theta: self.theta - self.sigma.arg(),
        }
    }
}

/// `ρ = β|00⟩⟨00| + (1−β)|11⟩⟨11| + √(β(1−β))·σ·(e^{−iΘ}|00⟩⟨11| + h.c.)`.
pub fn build_state(params: &StateParams) -> Result<DensityMatrix> {
    let p = params.canonical();
    if !(0.0..=1.0).contains(&p.beta) {
        return Err(Error::param("beta", format!("{} outside [0, 1]", p.beta)));
    }
    if p.sigma.re > 1.0 + 1e-12 || !p.sigma.re.is_finite() {
        return Err(Error::param("sigma", format!("|sigma| = {} exceeds 1", p.sigma.re)));
    }
    if !p.theta.is_finite() {
        return Err(Error::param("theta", "must be finite"));
    }
    let coherence = C64::from_polar((p.beta * (1.0 - p.beta)).sqrt() * p.sigma.re.min(1.0), -p.theta);
    let mut m = Matrix4::zeros();
    m[(0, 0)] = C64::new(p.beta, 0.0);
    m[(3, 3)] = C64::new(1.0 - p.beta, 0.0);
    m[(0, 3)] = coherence;
    m[(3, 0)] = coherence.conj();
    DensityMatrix::new(m)
}

/// How pump power divided by the first coupler weights the two source rates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PumpWeighting {
    /// Pair generation quadratic in pump power: weights `r²` and `(1−r)²`.
    #[default]
    Quadratic,
    /// Rates used as given.
    Unweighted,
}

/// Source balance `β` from the per-source pair probabilities.
pub fn balance_from_brightness(
    mu_top: f64,
    mu_bottom: f64,
    coupler_reflectivity: f64,
    weighting: PumpWeighting,
) -> Result<f64> {
    if mu_top < 0.0 || mu_bottom < 0.0 {
        return Err(Error::param("pairs_per_pulse", "rates must be non-negative"));
    }
    if !(0.0..=1.0).contains(&coupler_reflectivity) {
        return Err(Error::param("first_coupler_reflectivity", "must lie in [0, 1]"));
    }
    let (wt, wb) = match weighting {
        PumpWeighting::Quadratic => (
            coupler_reflectivity.powi(2),
            (1.0 - coupler_reflectivity).powi(2),
        ),
        PumpWeighting::Unweighted => (1.0, 1.0),
    };
    let total = wt * mu_top + wb * mu_bottom;
    if total <= 0.0 {
        return Err(Error::param("pairs_per_pulse", "both sources are dark"));
    }
    Ok(wt * mu_top / total)
}

/// Relative phase `diag(1, e^{iθ})`.
pub fn rz(theta: f64) -> Matrix2<C64> {
    Matrix2::new(ONE, ZERO, ZERO, C64::from_polar(1.0, theta))
}

/// Real rotation `[[cos θ/2, −sin θ/2], [sin θ/2, cos θ/2]]`.
pub fn ry(theta: f64) -> Matrix2<C64> {
    let (s, c) = (0.5 * theta).sin_cos();
    Matrix2::new(C64::new(c, 0.0), C64::new(-s, 0.0), C64::new(s, 0.0), C64::new(c, 0.0))
}

/// Directional coupler with power reflectivity `r` (bar-port transmission).
pub fn coupler(r: f64) -> Matrix2<C64> {
    let (a, b) = (r.sqrt(), (1.0 - r).sqrt());
    Matrix2::new(C64::new(a, 0.0), -I * b, -I * b, C64::new(a, 0.0))
}

/// Mach-Zehnder interferometer `B(r_out)†·diag(e^{−iθ/2}, e^{iθ/2})·B(r_in)`.
/// Equals [`ry`] when both couplers are balanced.
pub fn mzi(theta: f64, r_in: f64, r_out: f64) -> Matrix2<C64> {
    let phase = Matrix2::new(
        C64::from_polar(1.0, -0.5 * theta),
        ZERO,
        ZERO,
        C64::from_polar(1.0, 0.5 * theta),
    );
    coupler(r_out).adjoint() * phase * coupler(r_in)
}

/// Phases applied by the four analysis heaters (rad).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSetting {
    pub theta_sy: f64,
    pub theta_sz: f64,
    pub theta_iy: f64,
    pub theta_iz: f64,
}

impl MeasurementSetting {
    pub fn new(theta_sy: f64, theta_sz: f64, theta_iy: f64, theta_iz: f64) -> Self {
        MeasurementSetting {
            theta_sy,
            theta_sz,
            theta_iy,
            theta_iz,
        }
    }

    /// Angles wrapped into `[0, 2π)`.
    pub fn wrapped(&self) -> Self {
        let w = |x: f64| x.rem_euclid(std::f64::consts::TAU);
        MeasurementSetting::new(w(self.theta_sy), w(self.theta_sz), w(self.theta_iy), w(self.theta_iz))
    }

    /// Same physical setting, compared modulo 2π.
    pub fn same_as(&self, other: &MeasurementSetting, tol: f64) -> bool {
        let d = |a: f64, b: f64| {
            let x = (a - b).rem_euclid(std::f64::consts::TAU);
            x.min(std::f64::consts::TAU - x) <= tol
        };
        d(self.theta_sy, other.theta_sy)
            && d(self.theta_sz, other.theta_sz)
            && d(self.theta_iy, other.theta_iy)
            && d(self.theta_iz, other.theta_iz)
    }
}

/// Single-qubit measurement bases realised by the analysis interferometers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AnalysisBasis {
    Z,
    X,
    Y,
}

impl AnalysisBasis {
    pub const ALL: [AnalysisBasis; 3] = [AnalysisBasis::Z, AnalysisBasis::X, AnalysisBasis::Y];

    /// `(θY, θZ)` for this basis.
    pub fn angles(self) -> (f64, f64) {
        match self {
            AnalysisBasis::Z => (0.0, 0.0),
            AnalysisBasis::X => (FRAC_PI_2, 0.0),
            AnalysisBasis::Y => (FRAC_PI_2, FRAC_PI_2),
        }
    }

    /// Labels of the states projected onto at output ports 0 and 1.
    ///
    /// With `ry(π/2)` the top port of the X setting selects `|−⟩`.
    pub fn port_labels(self) -> [&'static str; 2] {
        match self {
            AnalysisBasis::Z => ["0", "1"],
            AnalysisBasis::X => ["-", "+"],
            AnalysisBasis::Y => ["+i", "-i"],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            AnalysisBasis::Z => "Z",
            AnalysisBasis::X => "X",
            AnalysisBasis::Y => "Y",
        }
    }

    pub fn setting(signal: AnalysisBasis, idler: AnalysisBasis) -> MeasurementSetting {
        let (sy, sz) = signal.angles();
        let (iy, iz) = idler.angles();
        MeasurementSetting::new(sy, sz, iy, iz)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviceConfig {
    /// Pump-splitting coupler.
    pub first_coupler_reflectivity: f64,
    /// `[signal in, signal out, idler in, idler out]` analysis couplers.
    pub analysis_coupler_reflectivities: [f64; 4],
    pub filter_bandwidth: f64,
    pub filter_selectivity_db: f64,
    pub filter_fsr: f64,
    /// Chip and fibre transmission per arm, detector excluded.
    pub per_arm_transmission: f64,
    pub detector_efficiency: f64,
    pub rep_rate_mhz: f64,
    /// Coincidence-to-accidental ratio; infinite for no accidentals.
    pub car: f64,
    /// Fraction of coincidences from multi-pair events, spread evenly over ports
    /// and not removed by accidental subtraction.
    pub multipair_fraction: f64,
}

impl DeviceConfig {
    /// Balanced couplers, lossless, no background.
    pub fn ideal() -> Self {
        DeviceConfig {
            first_coupler_reflectivity: 0.5,
            analysis_coupler_reflectivities: [0.5; 4],
            filter_bandwidth: 35.0,
            filter_selectivity_db: 22.0,
            filter_fsr: 640.0,
            per_arm_transmission: 1.0,
            detector_efficiency: 1.0,
            rep_rate_mhz: 51.0,
            car: f64::INFINITY,
            multipair_fraction: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let probs = [
            ("first_coupler_reflectivity", self.first_coupler_reflectivity),
            ("per_arm_transmission", self.per_arm_transmission),
            ("detector_efficiency", self.detector_efficiency),
            ("multipair_fraction", self.multipair_fraction),
        ];
        for (name, v) in probs {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::param(name, format!("{v} outside [0, 1]")));
            }
        }
        if self.analysis_coupler_reflectivities.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::param("analysis_coupler_reflectivities", "outside [0, 1]"));
        }
        if !(self.filter_selectivity_db >= 0.0) {
            return Err(Error::param("filter_selectivity_db", "must be non-negative"));
        }
        if !(self.filter_bandwidth > 0.0) || !(self.filter_fsr > self.filter_bandwidth) {
            return Err(Error::param("filter_bandwidth", "need 0 < bandwidth < fsr"));
        }
        if !(self.rep_rate_mhz > 0.0) {
            return Err(Error::param("rep_rate_mhz", "must be positive"));
        }
        if !(self.car > 0.0) {
            return Err(Error::param("car", "must be positive"));
        }
        Ok(())
    }

    /// Analysis unitary `(MZI(θSY)·Rz(θSZ)) ⊗ (MZI(θIY)·Rz(θIZ))`.
    pub fn analysis_unitary(&self, setting: &MeasurementSetting) -> Matrix4<C64> {
        let [si, so, ii, io] = self.analysis_coupler_reflectivities;
        let signal = mzi(setting.theta_sy, si, so) * rz(setting.theta_sz);
        let idler = mzi(setting.theta_iy, ii, io) * rz(setting.theta_iz);
        tensor2(&signal, &idler)
    }
}

/// Ideal analysis unitary `(ry(θSY)·rz(θSZ)) ⊗ (ry(θIY)·rz(θIZ))`.
pub fn analysis_unitary(setting: &MeasurementSetting) -> Matrix4<C64> {
    tensor2(
        &(ry(setting.theta_sy) * rz(setting.theta_sz)),
        &(ry(setting.theta_iy) * rz(setting.theta_iz)),
    )
}

/// Projector selected by output ports `(signal_port, idler_port)` under `setting`.
pub fn port_projector(config: &DeviceConfig, setting: &MeasurementSetting, port: usize) -> Matrix4<C64> {
    let u = config.analysis_unitary(setting);
    let row = u.row(port);
    // U†|k⟩⟨k|U
    row.adjoint() * row
}

/// Probabilities of the four coincidence port pairs `(00, 01, 10, 11)`.
pub fn measurement_probabilities(rho: &DensityMatrix, setting: &MeasurementSetting, config: &DeviceConfig) -> [f64; 4] {
    let u = config.analysis_unitary(setting);
    let out = u * rho.matrix() * u.adjoint();
    let mut p = [0.0; 4];
    for (k, v) in p.iter_mut().enumerate() {
        *v = out[(k, k)].re.max(0.0);
    }
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= total);
    p
}

/// State seen after accidental subtraction: `(1−ε)ρ + ε·I/4` for multi-pair
/// fraction `ε`.
pub fn effective_state(rho: &DensityMatrix, config: &DeviceConfig) -> Result<DensityMatrix> {
    let eps = config.multipair_fraction;
    let mixed = DensityMatrix::maximally_mixed();
    DensityMatrix::new(rho.matrix() * C64::new(1.0 - eps, 0.0) + mixed.matrix() * C64::new(eps, 0.0))
}

/// Power transmission of the add-drop filter at `nu_offset` from a passband peak.
pub fn filter_transmission(config: &DeviceConfig, nu_offset: f64) -> f64 {
    let fsr = config.filter_fsr;
    let x = (nu_offset + 0.5 * fsr).rem_euclid(fsr) - 0.5 * fsr;
    let half = 0.5 * config.filter_bandwidth;
    let lorentz = half * half / (half * half + x * x);
    lorentz.max(10f64.powf(-config.filter_selectivity_db / 10.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountRecord {
    pub setting: MeasurementSetting,
    /// Counts at port pairs `(00, 01, 10, 11)`.
    pub coincidences: [u64; 4],
    /// Expected accidental counts per port pair.
    pub accidentals_estimate: f64,
    /// Seconds.
    pub integration_time: f64,
}

impl CountRecord {
    pub fn total(&self) -> u64 {
        self.coincidences.iter().sum()
    }
}

/// Rates implied by a device and pump configuration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RateBudget {
    pub pair_rate_hz: f64,
    pub coincidence_rate_hz: f64,
    pub accidental_rate_hz: f64,
    pub car: f64,
    /// `10·log10` of the per-arm transmission, detector excluded.
    pub per_arm_loss_db: f64,
    pub detector_loss_db: f64,
}

pub fn rate_budget(config: &DeviceConfig, pump: &PumpParams) -> RateBudget {
    let pair_rate_hz = config.rep_rate_mhz * 1e6 * pump.pairs_per_pulse;
    let arm = config.per_arm_transmission * config.detector_efficiency;
    let coincidence_rate_hz = pair_rate_hz * arm * arm;
    RateBudget {
        pair_rate_hz,
        coincidence_rate_hz,
        accidental_rate_hz: coincidence_rate_hz / config.car,
        car: config.car,
        per_arm_loss_db: 10.0 * config.per_arm_transmission.log10(),
        detector_loss_db: 10.0 * config.detector_efficiency.log10(),
    }
}

/// Per-arm transmission (detector excluded) giving `target_rate_hz` coincidences.
pub fn transmission_for_rate(config: &DeviceConfig, pump: &PumpParams, target_rate_hz: f64) -> Result<f64> {
    let pair_rate = config.rep_rate_mhz * 1e6 * pump.pairs_per_pulse;
    let eta = config.detector_efficiency;
    if !(target_rate_hz > 0.0) || pair_rate <= 0.0 || eta <= 0.0 {
        return Err(Error::param("target_rate_hz", "rates and efficiency must be positive"));
    }
    let t = (target_rate_hz / pair_rate).sqrt() / eta;
    if t > 1.0 {
        return Err(Error::param("target_rate_hz", "unreachable with unit transmission"));
    }
    Ok(t)
}

/// Draws coincidence counts for one setting. Deterministic for a given seed.
pub fn simulate_counts(
    rho: &DensityMatrix,
    setting: &MeasurementSetting,
    config: &DeviceConfig,
    pump: &PumpParams,
    integration_time: f64,
    rng_seed: u64,
) -> Result<CountRecord> {
    if !(integration_time >= 0.0) {
        return Err(Error::param("integration_time", "must be non-negative"));
    }
    let p = measurement_probabilities(rho, setting, config);
    let budget = rate_budget(config, pump);
    let true_counts = budget.coincidence_rate_hz * integration_time;
    let accidentals = if config.car.is_finite() {
        true_counts / config.car / 4.0
    } else {
        0.0
    };
    let eps = config.multipair_fraction;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut coincidences = [0u64; 4];
    for (k, c) in coincidences.iter_mut().enumerate() {
        let mean = true_counts * ((1.0 - eps) * p[k] + 0.25 * eps) + accidentals;
        *c = poisson(&mut rng, mean);
    }
    Ok(CountRecord {
        setting: *setting,
        coincidences,
        accidentals_estimate: accidentals,
        integration_time,
    })
}

pub(crate) fn poisson<R: rand::Rng + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    let d = Poisson::new(mean).expect("positive finite mean");
    d.sample(rng) as u64
}

const CSV_HEADER: [&str; 9] = [
    "theta_sy", "theta_sz", "theta_iy", "theta_iz", "c00", "c01", "c10", "c11", "t",
];

/// Writes `θSY, θSZ, θIY, θIZ, c00, c01, c10, c11, t`, with a trailing `acc`
/// column when `with_accidentals` is set.
pub fn write_counts_csv<W: Write>(records: &[CountRecord], writer: W, with_accidentals: bool) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = CSV_HEADER.to_vec();
    if with_accidentals {
        header.push("acc");
    }
    w.write_record(&header)?;
    for r in records {
        let s = &r.setting;
        let mut row = vec![
            s.theta_sy.to_string(),
            s.theta_sz.to_string(),
            s.theta_iy.to_string(),
            s.theta_iz.to_string(),
        ];
        row.extend(r.coincidences.iter().map(u64::to_string));
        row.push(r.integration_time.to_string());
        if with_accidentals {
            row.push(r.accidentals_estimate.to_string());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_counts_csv<R: Read>(reader: R) -> Result<Vec<CountRecord>> {
    let mut r = csv::Reader::from_reader(reader);
    let headers = r.headers()?.clone();
    if headers.len() < 9 || headers.iter().take(9).ne(CSV_HEADER) {
        return Err(Error::Format(format!("unexpected count header {headers:?}")));
    }
    let mut out = Vec::new();
    for record in r.records() {
        let record = record?;
        let num = |k: usize| -> Result<f64> {
            let field = record.get(k).unwrap_or("");
            field
                .trim()
                .parse()
                .map_err(|_| Error::Format(format!("bad value `{field}` in column {}", headers.get(k).unwrap_or("?"))))
        };
        let count = |k: usize| -> Result<u64> {
            let field = record.get(k).unwrap_or("");
            field
                .trim()
                .parse()
                .map_err(|_| Error::Format(format!("bad count `{field}` in column {}", headers.get(k).unwrap_or("?"))))
        };
        out.push(CountRecord {
            setting: MeasurementSetting::new(num(0)?, num(1)?, num(2)?, num(3)?),
            coincidences: [count(4)?, count(5)?, count(6)?, count(7)?],
            integration_time: num(8)?,
            accidentals_estimate: if headers.len() > 9 { num(9)? } else { 0.0 },
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qstate::Ket;
    use std::f64::consts::PI;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn bell_state_from_balanced_overlap() {
        let rho = build_state(&StateParams::new(0.5, 1.0, 0.0)).unwrap();
        assert!((rho.purity() - 1.0).abs() < 1e-12);
        let bell = DensityMatrix::from_ket(&Ket::phi_plus()).unwrap();
        assert!((rho.fidelity(&bell).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn separable_and_mixed_limits() {
        let rho = build_state(&StateParams {
            beta: 1.0,
            sigma: C64::new(0.3, 0.4),
            theta: 1.0,
        })
        .unwrap();
        let top = DensityMatrix::from_ket(&Ket::basis2(0)).unwrap();
        assert!((rho.matrix() - top.matrix()).norm() < 1e-15);

        let rho = build_state(&StateParams::new(0.5, 0.0, 0.7)).unwrap();
        assert!((rho.purity() - 0.5).abs() < 1e-12);
        assert_eq!(rho.get(0, 3), ZERO);
    }

    #[test]
    fn complex_sigma_phase_moves_into_theta() {
        let a = build_state(&StateParams {
            beta: 0.4,
            sigma: C64::from_polar(0.9, 0.6),
            theta: 1.0,
        })
        .unwrap();
        let b = build_state(&StateParams::new(0.4, 0.9, 0.4)).unwrap();
        assert!((a.matrix() - b.matrix()).norm() < 1e-15);
    }

    #[test]
    fn rejects_unphysical_params() {
        assert!(build_state(&StateParams::new(0.5, 1.01, 0.0)).is_err());
        assert!(build_state(&StateParams::new(1.2, 0.5, 0.0)).is_err());
    }

    #[test]
    fn balance_examples() {
        let b = balance_from_brightness(0.07, 0.07, 0.5, PumpWeighting::Quadratic).unwrap();
        assert!((b - 0.5).abs() < 1e-15);
        let b = balance_from_brightness(0.06, 0.09, 0.5, PumpWeighting::Quadratic).unwrap();
        assert!((b - 0.4).abs() < 1e-12);
        let b = balance_from_brightness(0.06, 0.09, 0.54, PumpWeighting::Quadratic).unwrap();
        // 0.2916·0.06 / (0.2916·0.06 + 0.2116·0.09)
        assert!((b - 0.017496 / (0.017496 + 0.019044)).abs() < 1e-12);
        let b = balance_from_brightness(0.06, 0.09, 0.54, PumpWeighting::Unweighted).unwrap();
        assert!((b - 0.4).abs() < 1e-12);
        assert!(balance_from_brightness(0.0, 0.0, 0.5, PumpWeighting::Quadratic).is_err());
    }

    #[test]
    fn rotation_examples() {
        assert_eq!(rz(0.0), Matrix2::identity());
        assert!((rz(PI) - crate::qstate::pauli_z()).norm() < 1e-15);
        assert!((rz(FRAC_PI_2) - Matrix2::new(ONE, ZERO, ZERO, I)).norm() < 1e-15);
        assert_eq!(ry(0.0), Matrix2::identity());
        let flip = ry(PI) * Ket::zero().amplitudes().fixed_rows::<2>(0);
        assert!((flip[0].norm() < 1e-15) && (flip[1].norm() - 1.0).abs() < 1e-15);
        let bs = ry(FRAC_PI_2);
        assert!(bs.iter().all(|z| (z.norm_sqr() - 0.5).abs() < 1e-15));
        for t in [0.3, 1.7, -2.2] {
            for u in [rz(t), ry(t), mzi(t, 0.3, 0.6), coupler(0.2)] {
                assert!((u.adjoint() * u - Matrix2::identity()).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn balanced_mzi_is_ry() {
        for t in [0.0, 0.4, FRAC_PI_2, 2.5, -1.0] {
            assert!((mzi(t, 0.5, 0.5) - ry(t)).norm() < 1e-14);
        }
    }

    #[test]
    fn probability_examples() {
        let bell = build_state(&StateParams::new(0.5, 1.0, 0.0)).unwrap();
        let cfg = DeviceConfig::ideal();
        let p = measurement_probabilities(&bell, &MeasurementSetting::default(), &cfg);
        assert!(close(&p, &[0.5, 0.0, 0.0, 0.5], 1e-12));
        let p = measurement_probabilities(&bell, &MeasurementSetting::new(FRAC_PI_2, 0.0, FRAC_PI_2, 0.0), &cfg);
        assert!(close(&p, &[0.5, 0.0, 0.0, 0.5], 1e-12));
        let p = measurement_probabilities(&bell, &MeasurementSetting::new(FRAC_PI_2, 0.4, FRAC_PI_2, PI - 0.4), &cfg);
        assert!(close(&p, &[0.0, 0.5, 0.5, 0.0], 1e-12));
    }

    #[test]
    fn port_labels_match_projectors() {
        let cfg = DeviceConfig::ideal();
        let state = |label: &str| match label {
            "0" => Ket::zero(),
            "1" => Ket::one(),
            "+" => Ket::plus(),
            "-" => Ket::minus(),
            "+i" => Ket::plus_i(),
            "-i" => Ket::minus_i(),
            _ => unreachable!(),
        };
        for s in AnalysisBasis::ALL {
            for i in AnalysisBasis::ALL {
                let setting = AnalysisBasis::setting(s, i);
                for port in 0..4 {
                    let proj = port_projector(&cfg, &setting, port);
                    let ket = state(s.port_labels()[port / 2]).tensor(&state(i.port_labels()[port % 2]));
                    let expect = ket.projector();
                    let diff: f64 = (0..4)
                        .flat_map(|a| (0..4).map(move |b| (a, b)))
                        .map(|(a, b)| (proj[(a, b)] - expect[(a, b)]).norm())
                        .sum();
                    assert!(diff < 1e-12, "{s:?}{i:?} port {port}");
                }
            }
        }
    }

    #[test]
    fn filter_examples() {
        let cfg = DeviceConfig::ideal();
        assert!((filter_transmission(&cfg, 0.0) - 1.0).abs() < 1e-15);
        assert!((filter_transmission(&cfg, 640.0) - 1.0).abs() < 1e-12);
        assert!((filter_transmission(&cfg, 17.5) - 0.5).abs() < 1e-12);
        assert!((filter_transmission(&cfg, 320.0) - 10f64.powf(-2.2)).abs() < 1e-15);
    }

    #[test]
    fn counting_is_seeded() {
        let rho = build_state(&StateParams::new(0.5, 1.0, 0.0)).unwrap();
        let mut cfg = DeviceConfig::ideal();
        cfg.car = 10.0;
        let pump = PumpParams::new(10.8, 40.0, 51.0, 0.075).unwrap();
        cfg.per_arm_transmission = transmission_for_rate(&cfg, &pump, 30.0).unwrap();
        let a = simulate_counts(&rho, &MeasurementSetting::default(), &cfg, &pump, 10.0, 5).unwrap();
        let b = simulate_counts(&rho, &MeasurementSetting::default(), &cfg, &pump, 10.0, 5).unwrap();
        assert_eq!(a, b);
        assert!((a.accidentals_estimate - 7.5).abs() < 1e-9);
        assert!(simulate_counts(&rho, &MeasurementSetting::default(), &cfg, &pump, -1.0, 5).is_err());
    }

    #[test]
    fn counts_follow_the_rate_product() {
        let rho = DensityMatrix::from_ket(&Ket::basis2(0)).unwrap();
        let mut cfg = DeviceConfig::ideal();
        let pump = PumpParams::new(10.8, 40.0, 1.0, 3e-5).unwrap();
        cfg.rep_rate_mhz = 1.0;
        // 1e6 · 3e-5 = 30 per second
        let runs: Vec<CountRecord> = (0..400)
            .map(|seed| simulate_counts(&rho, &MeasurementSetting::default(), &cfg, &pump, 10.0, seed).unwrap())
            .collect();
        assert!(runs.iter().all(|r| r.coincidences[1..] == [0, 0, 0]));
        let mean = runs.iter().map(|r| r.coincidences[0] as f64).sum::<f64>() / 400.0;
        // standard error √(300/400) ≈ 0.87
        assert!((mean - 300.0).abs() < 3.5);
        let var = runs.iter().map(|r| (r.coincidences[0] as f64 - mean).powi(2)).sum::<f64>() / 399.0;
        assert!((var / 300.0 - 1.0).abs() < 0.25);
    }

    #[test]
    fn budget_back_solve() {
        let mut cfg = DeviceConfig::ideal();
        cfg.detector_efficiency = 0.25;
        let pump = PumpParams::new(10.8, 40.0, 51.0, 0.075).unwrap();
        let t = transmission_for_rate(&cfg, &pump, 30.0).unwrap();
        // (30 / (51e6 · 0.075))^½ / 0.25
        let expect = (30.0f64 / 3.825e6).sqrt() / 0.25;
        assert!((t - expect).abs() < 1e-15);
        cfg.per_arm_transmission = t;
        let b = rate_budget(&cfg, &pump);
        assert!((b.coincidence_rate_hz - 30.0).abs() < 1e-9);
        assert!((b.per_arm_loss_db + 19.5).abs() < 0.1);
    }

    #[test]
    fn counts_csv_round_trip() {
        let rec = CountRecord {
            setting: MeasurementSetting::new(0.1, 0.2, 0.3, 0.4),
            coincidences: [1, 2, 3, 4],
            accidentals_estimate: 0.5,
            integration_time: 10.0,
        };
        let mut buf = Vec::new();
        write_counts_csv(&[rec], &mut buf, false).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("theta_sy,theta_sz,theta_iy,theta_iz,c00,c01,c10,c11,t\n"));
        let back = read_counts_csv(buf.as_slice()).unwrap();
        assert_eq!(back[0].coincidences, rec.coincidences);
        assert_eq!(back[0].accidentals_estimate, 0.0);

        let mut buf = Vec::new();
        write_counts_csv(&[rec], &mut buf, true).unwrap();
        assert_eq!(read_counts_csv(buf.as_slice()).unwrap()[0], rec);
    }
}
