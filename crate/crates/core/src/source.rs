//! Spectral model of a microring four-wave-mixing pair source.
//!
//! All frequencies are offsets in GHz from the pump laser centre. A ring's
//! `center_frequency` is the offset of its pump resonance; signal and idler
//! resonances sit one free spectral range above and below.
//!
//! The joint spectral amplitude is
//! `JSA(νs, νi) ∝ ℓ(νs)·ℓ(νi)·A₂(νs + νi)` where `ℓ` is the Lorentzian field
//! enhancement of the relevant resonance and `A₂` is the self-convolution of
//! the intra-cavity pump amplitude `ℓp(ν)·α(ν)`. Waveguide phase matching is
//! taken as flat across one free spectral range.

use std::io::{Read, Write};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bell;
use crate::error::{Error, Result};
use crate::qstate::C64;

/// Axes of two grids are considered identical within this absolute tolerance (GHz).
const AXIS_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RingParams {
    /// Pump resonance offset from the pump laser (GHz).
    pub center_frequency: f64,
    /// Field linewidth, full width at half maximum of `|ℓ|²` (GHz).
    pub linewidth_fwhm: f64,
    /// Free spectral range (GHz).
    pub fsr: f64,
}

impl RingParams {
    pub fn new(center_frequency: f64, linewidth_fwhm: f64, fsr: f64) -> Result<Self> {
        let ring = RingParams {
            center_frequency,
            linewidth_fwhm,
            fsr,
        };
        ring.validate()?;
        Ok(ring)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.linewidth_fwhm > 0.0) {
            return Err(Error::param("linewidth_fwhm", "must be positive"));
        }
        if !(self.fsr > self.linewidth_fwhm) {
            return Err(Error::param("fsr", "must exceed the linewidth"));
        }
        if !self.center_frequency.is_finite() {
            return Err(Error::param("center_frequency", "must be finite"));
        }
        Ok(())
    }

    pub fn detuned(&self, by: f64) -> Self {
        RingParams {
            center_frequency: self.center_frequency + by,
            ..*self
        }
    }

    /// Frequency of the resonance `order` free spectral ranges from the pump resonance.
    pub fn resonance(&self, order: i32) -> f64 {
        self.center_frequency + order as f64 * self.fsr
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PumpParams {
    pub pulse_duration_ps: f64,
    /// Intensity FWHM of the pump spectrum (GHz).
    pub linewidth_fwhm: f64,
    pub rep_rate_mhz: f64,
    pub pairs_per_pulse: f64,
    /// Multiplies `linewidth_fwhm`; stands in for self-phase-modulation broadening.
    pub broadening: f64,
}

impl PumpParams {
    pub fn new(
        pulse_duration_ps: f64,
        linewidth_fwhm: f64,
        rep_rate_mhz: f64,
        pairs_per_pulse: f64,
    ) -> Result<Self> {
        let pump = PumpParams {
            pulse_duration_ps,
            linewidth_fwhm,
            rep_rate_mhz,
            pairs_per_pulse,
            broadening: 1.0,
        };
        pump.validate()?;
        Ok(pump)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("pulse_duration_ps", self.pulse_duration_ps),
            ("linewidth_fwhm", self.linewidth_fwhm),
            ("rep_rate_mhz", self.rep_rate_mhz),
            ("pairs_per_pulse", self.pairs_per_pulse),
            ("broadening", self.broadening),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::param(name, "must be positive and finite"));
            }
        }
        if self.pairs_per_pulse >= 1.0 {
            return Err(Error::param("pairs_per_pulse", "must be well below one"));
        }
        Ok(())
    }

    pub fn with_linewidth(&self, linewidth_fwhm: f64) -> Self {
        PumpParams {
            linewidth_fwhm,
            ..*self
        }
    }

    pub fn effective_linewidth(&self) -> f64 {
        self.linewidth_fwhm * self.broadening
    }

    /// Standard deviation of the pump intensity spectrum (GHz).
    fn intensity_sigma(&self) -> f64 {
        self.effective_linewidth() / (2.0 * (2.0 * std::f64::consts::LN_2).sqrt())
    }
}

/// Lorentzian field response of the ring resonance at `center_frequency`:
/// `(Γ/2) / (Γ/2 + i(ν − ν₀))`.
pub fn cavity_enhancement(ring: &RingParams, nu: f64) -> C64 {
    resonance_response(ring, 0, nu)
}

/// Field response of the resonance `order` free spectral ranges away.
pub fn resonance_response(ring: &RingParams, order: i32, nu: f64) -> C64 {
    let half = 0.5 * ring.linewidth_fwhm;
    C64::new(half, 0.0) / C64::new(half, nu - ring.resonance(order))
}

/// Transform-limited Gaussian pump amplitude, normalised to `∫|α|²dν = 1`.
pub fn pump_envelope(pump: &PumpParams, nu: f64) -> C64 {
    let s = pump.intensity_sigma();
    let norm = (2.0 * std::f64::consts::PI).sqrt() * s;
    C64::new((-nu * nu / (4.0 * s * s)).exp() / norm.sqrt(), 0.0)
}

/// Placement of a joint spectral grid. Both axes share `n_points` and spacing.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub signal_center: f64,
    pub idler_center: f64,
    pub half_width: f64,
    pub n_points: usize,
}

impl GridSpec {
    /// Signal and idler axes centred on the nominal resonances `±fsr` of an
    /// undetuned ring.
    pub fn nominal(fsr: f64, half_width: f64, n_points: usize) -> Self {
        GridSpec {
            signal_center: fsr,
            idler_center: -fsr,
            half_width,
            n_points,
        }
    }

    /// A grid spanning both rings' signal and idler resonances with at least
    /// `points_per_linewidth` samples per narrowest linewidth.
    pub fn covering(a: &RingParams, b: &RingParams, linewidths: f64, points_per_linewidth: f64) -> Self {
        let mid = 0.5 * (a.center_frequency + b.center_frequency);
        let fsr = 0.5 * (a.fsr + b.fsr);
        let gamma_max = a.linewidth_fwhm.max(b.linewidth_fwhm);
        let gamma_min = a.linewidth_fwhm.min(b.linewidth_fwhm);
        let half_width = linewidths * gamma_max + 0.5 * (a.center_frequency - b.center_frequency).abs();
        let n = (2.0 * half_width * points_per_linewidth / gamma_min).ceil() as usize + 1;
        GridSpec {
            signal_center: mid + fsr,
            idler_center: mid - fsr,
            half_width,
            n_points: n.max(64),
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.half_width > 0.0) {
            return Err(Error::param("grid_half_width", "must be positive"));
        }
        if self.n_points < 16 {
            return Err(Error::param("n_points", "need at least 16 points"));
        }
        Ok(())
    }

    fn axis(&self, center: f64) -> Vec<f64> {
        let step = self.step();
        (0..self.n_points)
            .map(|k| center - self.half_width + k as f64 * step)
            .collect()
    }

    pub fn step(&self) -> f64 {
        2.0 * self.half_width / (self.n_points - 1) as f64
    }
}

/// Discretised joint spectral amplitude. Rows index signal frequency, columns
/// idler frequency.
#[derive(Clone, Debug, PartialEq)]
pub struct JsaGrid {
    pub signal_freqs: Vec<f64>,
    pub idler_freqs: Vec<f64>,
    pub amplitudes: DMatrix<C64>,
    /// Set when the amplitudes were built from magnitudes alone.
    pub magnitude_only: bool,
}

impl JsaGrid {
    /// Validates axes and normalises `Σ|a|² = 1`.
    pub fn new(signal_freqs: Vec<f64>, idler_freqs: Vec<f64>, amplitudes: DMatrix<C64>) -> Result<Self> {
        if amplitudes.nrows() != signal_freqs.len() || amplitudes.ncols() != idler_freqs.len() {
            return Err(Error::Shape {
                expected: "signal x idler",
                rows: amplitudes.nrows(),
                cols: amplitudes.ncols(),
            });
        }
        for axis in [&signal_freqs, &idler_freqs] {
            if axis.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(Error::Format("frequency axes must be strictly increasing".into()));
            }
        }
        let norm = amplitudes.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::ZeroGrid);
        }
        Ok(JsaGrid {
            signal_freqs,
            idler_freqs,
            amplitudes: amplitudes / C64::new(norm, 0.0),
            magnitude_only: false,
        })
    }

    pub fn from_magnitudes(signal_freqs: Vec<f64>, idler_freqs: Vec<f64>, magnitudes: DMatrix<f64>) -> Result<Self> {
        let amplitudes = magnitudes.map(|m| C64::new(m, 0.0));
        let mut grid = Self::new(signal_freqs, idler_freqs, amplitudes)?;
        grid.magnitude_only = true;
        Ok(grid)
    }

    /// `|JSA|²`, summing to one.
    pub fn density(&self) -> DMatrix<f64> {
        self.amplitudes.map(|a| a.norm_sqr())
    }

    /// Discards phase, keeping the magnitude-only flag.
    pub fn magnitude(&self) -> JsaGrid {
        JsaGrid {
            signal_freqs: self.signal_freqs.clone(),
            idler_freqs: self.idler_freqs.clone(),
            amplitudes: self.amplitudes.map(|a| C64::new(a.norm(), 0.0)),
            magnitude_only: true,
        }
    }

    fn same_axes(&self, other: &JsaGrid) -> bool {
        let close = |a: &[f64], b: &[f64]| {
            a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= AXIS_TOL)
        };
        close(&self.signal_freqs, &other.signal_freqs) && close(&self.idler_freqs, &other.idler_freqs)
    }

    /// CSV with header `nu_s,nu_i,re,im`, signal-major order.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["nu_s", "nu_i", "re", "im"])?;
        for (i, s) in self.signal_freqs.iter().enumerate() {
            for (j, d) in self.idler_freqs.iter().enumerate() {
                let a = self.amplitudes[(i, j)];
                w.write_record(&[s.to_string(), d.to_string(), a.re.to_string(), a.im.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads `nu_s,nu_i,re,im` or the magnitude-only form `nu_s,nu_i,magnitude`.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let width = r.headers()?.len();
        if width != 3 && width != 4 {
            return Err(Error::Format(format!("expected 3 or 4 columns, found {width}")));
        }
        let mut rows = Vec::new();
        for record in r.records() {
            let record = record?;
            let mut vals = [0.0; 4];
            for (k, field) in record.iter().enumerate().take(width) {
                vals[k] = field
                    .trim()
                    .parse()
                    .map_err(|_| Error::Format(format!("bad number `{field}`")))?;
            }
            rows.push(vals);
        }
        let axis = |col: usize| {
            let mut v: Vec<f64> = rows.iter().map(|r| r[col]).collect();
            v.sort_by(f64::total_cmp);
            v.dedup_by(|a, b| (*a - *b).abs() <= AXIS_TOL);
            v
        };
        let signal = axis(0);
        let idler = axis(1);
        if signal.len() * idler.len() != rows.len() {
            return Err(Error::Format("rows do not form a complete grid".into()));
        }
        let find = |axis: &[f64], x: f64| axis.iter().position(|a| (a - x).abs() <= AXIS_TOL).unwrap();
        let mut amps = DMatrix::zeros(signal.len(), idler.len());
        for r in &rows {
            let (i, j) = (find(&signal, r[0]), find(&idler, r[1]));
            amps[(i, j)] = if width == 4 { C64::new(r[2], r[3]) } else { C64::new(r[2], 0.0) };
        }
        let mut grid = Self::new(signal, idler, amps)?;
        grid.magnitude_only = width == 3;
        Ok(grid)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&JsaJson::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let j: JsaJson = serde_json::from_str(text)?;
        let rows = j.re.len();
        let cols = j.re.first().map_or(0, Vec::len);
        if j.im.len() != rows || j.re.iter().chain(&j.im).any(|r| r.len() != cols) {
            return Err(Error::Format("re/im arrays must be rectangular and equal".into()));
        }
        let amps = DMatrix::from_fn(rows, cols, |i, k| C64::new(j.re[i][k], j.im[i][k]));
        let mut grid = Self::new(j.signal_freqs, j.idler_freqs, amps)?;
        grid.magnitude_only = j.magnitude_only;
        Ok(grid)
    }
}

#[derive(Serialize, Deserialize)]
struct JsaJson {
    signal_freqs: Vec<f64>,
    idler_freqs: Vec<f64>,
    re: Vec<Vec<f64>>,
    im: Vec<Vec<f64>>,
    #[serde(default)]
    magnitude_only: bool,
}

impl From<&JsaGrid> for JsaJson {
    fn from(g: &JsaGrid) -> Self {
        let rows = |f: fn(&C64) -> f64| {
            (0..g.amplitudes.nrows())
                .map(|i| (0..g.amplitudes.ncols()).map(|j| f(&g.amplitudes[(i, j)])).collect())
                .collect()
        };
        JsaJson {
            signal_freqs: g.signal_freqs.clone(),
            idler_freqs: g.idler_freqs.clone(),
            re: rows(|z| z.re),
            im: rows(|z| z.im),
            magnitude_only: g.magnitude_only,
        }
    }
}

/// Two-pump-photon amplitude `A₂(Ω) = ∫ P(ν)·P(Ω − ν) dν`, `P = ℓp·α`,
/// evaluated by the midpoint rule on a grid symmetric about the pump laser.
struct PumpPairAmplitude {
    nodes: Vec<f64>,
    values: Vec<C64>,
    step: f64,
}

impl PumpPairAmplitude {
    fn new(ring: &RingParams, pump: &PumpParams) -> Self {
        let amp_sigma = std::f64::consts::SQRT_2 * pump.intensity_sigma();
        let range = 8.0 * amp_sigma;
        let step = amp_sigma.min(ring.linewidth_fwhm) / 10.0;
        let half_n = (range / step).ceil() as i64;
        // the pump spectrum is centred on this ring's pump resonance
        let center = ring.center_frequency;
        let nodes: Vec<f64> = (-half_n..=half_n).map(|k| center + k as f64 * step).collect();
        let values = nodes
            .iter()
            .map(|&nu| Self::intracavity(ring, pump, nu))
            .collect();
        PumpPairAmplitude { nodes, values, step }
    }

    fn intracavity(ring: &RingParams, pump: &PumpParams, nu: f64) -> C64 {
        cavity_enhancement(ring, nu) * pump_envelope(pump, nu - ring.center_frequency)
    }

    fn eval(&self, ring: &RingParams, pump: &PumpParams, omega: f64) -> C64 {
        let sum: C64 = self
            .nodes
            .iter()
            .zip(&self.values)
            .map(|(&nu, &p)| p * Self::intracavity(ring, pump, omega - nu))
            .sum();
        sum * self.step
    }
}

/// JSA on the nominal grid `±fsr ± grid_half_width` of `ring`.
pub fn compute_jsa(ring: &RingParams, pump: &PumpParams, grid_half_width: f64, n_points: usize) -> Result<JsaGrid> {
    compute_jsa_on(ring, pump, &GridSpec::nominal(ring.fsr, grid_half_width, n_points))
}

pub fn compute_jsa_on(ring: &RingParams, pump: &PumpParams, grid: &GridSpec) -> Result<JsaGrid> {
    grid.validate()?;
    ring.validate()?;
    pump.validate()?;
    let signal = grid.axis(grid.signal_center);
    let idler = grid.axis(grid.idler_center);
    let n = grid.n_points;

    let pair = PumpPairAmplitude::new(ring, pump);
    // equal spacing: νs + νi depends only on i + j
    let sums: Vec<C64> = (0..2 * n - 1)
        .into_par_iter()
        .map(|k| {
            let omega = signal[0] + idler[0] + k as f64 * grid.step();
            pair.eval(ring, pump, omega)
        })
        .collect();
    let ls: Vec<C64> = signal.iter().map(|&nu| resonance_response(ring, 1, nu)).collect();
    let li: Vec<C64> = idler.iter().map(|&nu| resonance_response(ring, -1, nu)).collect();
    let amps = DMatrix::from_fn(n, n, |i, j| ls[i] * li[j] * sums[i + j]);
    JsaGrid::new(signal, idler, amps)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SchmidtResult {
    pub schmidt_number: f64,
    /// Normalised (`Σλ² = 1`), descending.
    pub singular_values: Vec<f64>,
    /// Computed from magnitudes only: the true `K` is at least this large.
    pub lower_bound: bool,
}

pub fn schmidt_decompose(jsa: &JsaGrid) -> Result<SchmidtResult> {
    let svd = jsa.amplitudes.clone().svd(false, false);
    let mut values: Vec<f64> = svd.singular_values.iter().copied().collect();
    let total: f64 = values.iter().map(|v| v * v).sum();
    if total == 0.0 || !total.is_finite() {
        return Err(Error::ZeroGrid);
    }
    let scale = total.sqrt();
    values.iter_mut().for_each(|v| *v /= scale);
    values.sort_by(|a, b| b.total_cmp(a));
    let p4: f64 = values.iter().map(|v| v.powi(4)).sum();
    Ok(SchmidtResult {
        schmidt_number: 1.0 / p4,
        singular_values: values,
        lower_bound: jsa.magnitude_only,
    })
}

/// Heralded Hong-Ou-Mandel visibility between independent sources, `1/K`.
pub fn hom_visibility(schmidt: &SchmidtResult) -> f64 {
    1.0 / schmidt.schmidt_number
}

/// Normalised amplitude overlap `Σ conj(a)·b`.
pub fn jsa_overlap(a: &JsaGrid, b: &JsaGrid) -> Result<C64> {
    if !a.same_axes(b) {
        return Err(Error::GridMismatch);
    }
    let inner: C64 = a.amplitudes.iter().zip(b.amplitudes.iter()).map(|(x, y)| x.conj() * y).sum();
    Ok(inner / (a.amplitudes.norm() * b.amplitudes.norm()))
}

/// Overlap of the square-root densities `Σ|a|·|b|`, insensitive to spectral phase.
pub fn jsd_overlap(a: &JsaGrid, b: &JsaGrid) -> Result<f64> {
    if !a.same_axes(b) {
        return Err(Error::GridMismatch);
    }
    let inner: f64 = a.amplitudes.iter().zip(b.amplitudes.iter()).map(|(x, y)| x.norm() * y.norm()).sum();
    Ok(inner / (a.amplitudes.norm() * b.amplitudes.norm()))
}

/// Parameters converting a spectral overlap into an expected fringe visibility.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepModel {
    pub beta: f64,
    /// Fraction of coincidences from uncorrelated multi-pair events.
    pub multipair_fraction: f64,
    /// Visibility left when the rings are fully detuned.
    pub background_floor: f64,
    /// Grid half-width around each resonance, in linewidths.
    pub linewidths: f64,
    pub points_per_linewidth: f64,
}

impl Default for SweepModel {
    fn default() -> Self {
        SweepModel {
            beta: 0.5,
            multipair_fraction: 0.0,
            background_floor: 0.0,
            linewidths: 3.0,
            points_per_linewidth: 10.5,
        }
    }
}

impl SweepModel {
    /// Visibility at perfect overlap.
    pub fn ideal_visibility(&self) -> f64 {
        bell::visibility_from_state(self.beta, 1.0) * (1.0 - self.multipair_fraction)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SweepPoint {
    pub detuning: f64,
    pub overlap: f64,
    pub visibility: f64,
}

/// Detunes `ring_a` by each value and predicts the two-source fringe visibility
/// `max(V_ideal·|σ(Δ)|, floor)`.
pub fn detuning_sweep(
    ring_a: &RingParams,
    ring_b: &RingParams,
    pump: &PumpParams,
    detunings: &[f64],
    model: &SweepModel,
) -> Result<Vec<SweepPoint>> {
    if let Some(d) = detunings.iter().find(|d| !d.is_finite()) {
        return Err(Error::param("detunings", format!("non-finite value {d}")));
    }
    let v_ideal = model.ideal_visibility();
    detunings
        .par_iter()
        .map(|&d| {
            let a = ring_a.detuned(d);
            let grid = GridSpec::covering(&a, ring_b, model.linewidths, model.points_per_linewidth);
            let ja = compute_jsa_on(&a, pump, &grid)?;
            let jb = compute_jsa_on(ring_b, pump, &grid)?;
            let overlap = jsa_overlap(&ja, &jb)?.norm().min(1.0);
            Ok(SweepPoint {
                detuning: d,
                overlap,
                visibility: (v_ideal * overlap).max(model.background_floor),
            })
        })
        .collect()
}
