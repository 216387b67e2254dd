//! Fringe regression and interferometer calibration.

use std::f64::consts::{PI, TAU};
use std::io::Write;

use nalgebra::{DVector, Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::device::{coupler, mzi, poisson, rz};
use crate::error::{Error, Result};
use crate::lsq::{levenberg_marquardt, LeastSquares, LmOptions};
use crate::source::SweepPoint;

#[derive(Clone, Debug, PartialEq)]
pub struct FringeData {
    pub phases: Vec<f64>,
    pub counts: Vec<f64>,
    /// Per-point standard deviations; used as weights when present.
    pub count_errors: Option<Vec<f64>>,
    /// Counts are raw Poisson tallies; without explicit errors the fit weights
    /// each point by its fitted mean.
    pub poisson: bool,
}

impl FringeData {
    pub fn new(phases: Vec<f64>, counts: Vec<f64>, count_errors: Option<Vec<f64>>) -> Result<Self> {
        if phases.len() != counts.len() || count_errors.as_ref().is_some_and(|e| e.len() != phases.len()) {
            return Err(Error::param("fringe", "phase, count and error arrays differ in length"));
        }
        if phases.len() < 5 {
            return Err(Error::param("fringe", format!("need at least 5 points, got {}", phases.len())));
        }
        if counts.iter().chain(phases.iter()).any(|x| !x.is_finite()) || counts.iter().any(|&c| c < 0.0) {
            return Err(Error::param("fringe", "counts must be finite and non-negative"));
        }
        if let Some(e) = &count_errors {
            if e.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
                return Err(Error::param("fringe", "count errors must be positive"));
            }
        }
        Ok(FringeData {
            phases,
            counts,
            count_errors,
            poisson: false,
        })
    }

    pub fn poisson(phases: Vec<f64>, counts: Vec<f64>) -> Result<Self> {
        let mut data = Self::new(phases, counts, None)?;
        data.poisson = true;
        Ok(data)
    }

    /// Phase span covered by the samples.
    pub fn span(&self) -> f64 {
        let (lo, hi) = self
            .phases
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &p| (lo.min(p), hi.max(p)));
        hi - lo
    }
}

/// `c(θ) = offset·(1 + visibility·cos(θ − phase0))`
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FringeFit {
    pub offset: f64,
    pub amplitude: f64,
    pub phase0: f64,
    pub visibility: f64,
    pub offset_err: f64,
    pub amplitude_err: f64,
    pub phase0_err: f64,
    pub visibility_err: f64,
    /// Weighted residual sum of squares over degrees of freedom.
    pub residual_variance: f64,
    /// False when the fitted amplitude vanishes and `phase0` means nothing.
    pub phase_defined: bool,
}

impl FringeFit {
    pub fn predict(&self, theta: f64) -> f64 {
        self.offset + self.amplitude * (theta - self.phase0).cos()
    }
}

/// Linear least squares on `a₀ + a₁cos θ + b₁sin θ`, which is the exact
/// minimiser of the sinusoid fit. Unweighted data get the residual-scaled
/// covariance; with known or Poisson variances the covariance is inflated by
/// the reduced χ² when that exceeds one. Errors are propagated to amplitude,
/// phase and visibility.
pub fn fit_fringe(data: &FringeData) -> Result<FringeFit> {
    if data.span() < PI - 1e-12 {
        return Err(Error::Fit(format!("phase span {:.3} rad is below π", data.span())));
    }
    let n = data.phases.len();
    let mut weights: Vec<f64> = match (&data.count_errors, data.poisson) {
        (Some(e), _) => e.iter().map(|s| 1.0 / (s * s)).collect(),
        (None, true) => data.counts.iter().map(|c| 1.0 / c.max(1.0)).collect(),
        (None, false) => vec![1.0; n],
    };
    let mut solved = weighted_solve(data, &weights)?;
    if data.poisson && data.count_errors.is_none() {
        // reweight with the fitted mean, which is less biased than the counts
        for _ in 0..POISSON_REWEIGHTS {
            let b = solved.0;
            for (w, &th) in weights.iter_mut().zip(&data.phases) {
                *w = 1.0 / (b[0] + b[1] * th.cos() + b[2] * th.sin()).max(1.0);
            }
            solved = weighted_solve(data, &weights)?;
        }
    }
    let (beta, inv) = solved;

    let mut rss = 0.0;
    for k in 0..n {
        let th = data.phases[k];
        let r = data.counts[k] - (beta[0] + beta[1] * th.cos() + beta[2] * th.sin());
        rss += weights[k] * r * r;
    }
    let dof = (n - 3).max(1) as f64;
    let residual_variance = rss / dof;
    // known variances are only inflated, never shrunk, by the scatter
    let known = data.poisson || data.count_errors.is_some();
    let cov = inv * if known { residual_variance.max(1.0) } else { residual_variance };

    let (a0, a1, b1) = (beta[0], beta[1], beta[2]);
    if !(a0 > 0.0) {
        return Err(Error::Fit(format!("non-positive offset {a0}")));
    }
    let amp = (a1 * a1 + b1 * b1).sqrt();
    let var = |g: Vector3<f64>| (g.transpose() * cov * g)[(0, 0)].max(0.0).sqrt();
    let offset_err = var(Vector3::new(1.0, 0.0, 0.0));

    if amp <= 1e-12 * a0 {
        return Ok(FringeFit {
            offset: a0,
            amplitude: 0.0,
            phase0: 0.0,
            visibility: 0.0,
            offset_err,
            amplitude_err: cov[(1, 1)].max(0.0).sqrt(),
            phase0_err: f64::NAN,
            visibility_err: cov[(1, 1)].max(0.0).sqrt() / a0,
            residual_variance,
            phase_defined: false,
        });
    }
    let visibility = amp / a0;
    Ok(FringeFit {
        offset: a0,
        amplitude: amp,
        phase0: b1.atan2(a1),
        visibility,
        offset_err,
        amplitude_err: var(Vector3::new(0.0, a1 / amp, b1 / amp)),
        phase0_err: var(Vector3::new(0.0, -b1 / (amp * amp), a1 / (amp * amp))),
        visibility_err: var(Vector3::new(-amp / (a0 * a0), a1 / (amp * a0), b1 / (amp * a0))),
        residual_variance,
        phase_defined: true,
    })
}

const POISSON_REWEIGHTS: usize = 5;

fn weighted_solve(data: &FringeData, weights: &[f64]) -> Result<(Vector3<f64>, Matrix3<f64>)> {
    let mut ata = Matrix3::<f64>::zeros();
    let mut atb = Vector3::<f64>::zeros();
    for ((&th, &c), &w) in data.phases.iter().zip(&data.counts).zip(weights) {
        let row = Vector3::new(1.0, th.cos(), th.sin());
        ata += w * row * row.transpose();
        atb += w * c * row;
    }
    let chol = ata
        .cholesky()
        .ok_or_else(|| Error::Fit("singular normal equations".into()))?;
    let beta = chol.solve(&atb);
    if !beta.iter().all(|x| x.is_finite()) {
        return Err(Error::Fit("singular normal equations".into()));
    }
    Ok((beta, chol.inverse()))
}

/// `n` phases evenly spaced over one period, endpoint excluded.
pub fn fringe_phases(n: usize) -> Vec<f64> {
    (0..n).map(|k| TAU * k as f64 / n as f64).collect()
}

/// Poisson fringe with mean `offset·(1 + visibility·cos(θ − phase0))`.
pub fn simulate_fringe(offset: f64, visibility: f64, phase0: f64, phases: &[f64], seed: u64) -> Result<FringeData> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let counts: Vec<f64> = phases
        .iter()
        .map(|&th| poisson(&mut rng, offset * (1.0 + visibility * (th - phase0).cos())) as f64)
        .collect();
    FringeData::poisson(phases.to_vec(), counts)
}

/// Phase-voltage law `θ = θ₀ + κ·V²` of one heater.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HeaterCoefficients {
    pub theta0: f64,
    /// rad/V²
    pub kappa: f64,
    /// Fitted phase excursion over the sweep is negligible; `theta0` is then
    /// not identifiable.
    pub degenerate: bool,
}

impl HeaterCoefficients {
    pub fn phase(&self, voltage: f64) -> f64 {
        self.theta0 + self.kappa * voltage * voltage
    }
}

/// Intensity sweep of one qubit's double interferometer: the first coupler,
/// the `Rz` heater and the MZI heater, read at output port 0.
#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationSweep {
    /// MZI heater voltage per sample.
    pub v_y: Vec<f64>,
    /// Phase heater voltage per sample.
    pub v_z: Vec<f64>,
    pub intensity: Vec<f64>,
}

impl CalibrationSweep {
    pub fn len(&self) -> usize {
        self.intensity.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intensity.is_empty()
    }

    /// Full `n × n` grid over `[0, v_max]` on both heaters, evaluated with `model`.
    pub fn synthetic(model: &CalibrationModel, v_max: f64, n: usize) -> Self {
        let vs: Vec<f64> = (0..n).map(|k| v_max * k as f64 / (n - 1) as f64).collect();
        let mut sweep = CalibrationSweep {
            v_y: Vec::with_capacity(n * n),
            v_z: Vec::with_capacity(n * n),
            intensity: Vec::with_capacity(n * n),
        };
        for &vy in &vs {
            for &vz in &vs {
                sweep.v_y.push(vy);
                sweep.v_z.push(vz);
                sweep.intensity.push(model.predict(vy, vz));
            }
        }
        sweep
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CalibrationModel {
    pub mzi_heater: HeaterCoefficients,
    pub phase_heater: HeaterCoefficients,
    pub first_coupler_reflectivity: f64,
    /// Both MZI couplers.
    pub mzi_coupler_reflectivity: f64,
    /// Detected intensity with all light at port 0.
    pub scale: f64,
    /// RMS fit residual.
    pub residual_rms: f64,
}

impl CalibrationModel {
    pub fn predict(&self, v_y: f64, v_z: f64) -> f64 {
        intensity(
            self.scale,
            self.first_coupler_reflectivity,
            self.mzi_coupler_reflectivity,
            self.mzi_heater.phase(v_y),
            self.phase_heater.phase(v_z),
        )
    }
}

fn intensity(scale: f64, r0: f64, r: f64, theta_y: f64, theta_z: f64) -> f64 {
    let state = rz(theta_z) * coupler(r0).column(0);
    let out = mzi(theta_y, r, r) * state;
    scale * out[0].norm_sqr()
}

struct CalibrationProblem<'a> {
    sweep: &'a CalibrationSweep,
}

// x = [scale, u0, u, θY0, κY, θZ0, κZ] with r = sin²u
fn unpack(x: &DVector<f64>) -> (f64, f64, f64, f64, f64, f64, f64) {
    (x[0], x[1].sin().powi(2), x[2].sin().powi(2), x[3], x[4], x[5], x[6])
}

impl LeastSquares for CalibrationProblem<'_> {
    fn n_params(&self) -> usize {
        7
    }

    fn n_residuals(&self) -> usize {
        self.sweep.len()
    }

    fn residuals(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        let (p, r0, r, ty0, ky, tz0, kz) = unpack(x);
        let s = self.sweep;
        for k in 0..s.len() {
            let ty = ty0 + ky * s.v_y[k] * s.v_y[k];
            let tz = tz0 + kz * s.v_z[k] * s.v_z[k];
            out[k] = intensity(p, r0, r, ty, tz) - s.intensity[k];
        }
    }
}

const DEGENERATE_EXCURSION: f64 = 1e-3;

/// Fits both heater laws and the coupler reflectivities to a 2D sweep.
///
/// The model is unchanged under `r₀ → 1−r₀` with both heater offsets moved by
/// π; the reported solution has the MZI offset in `[0, π)`.
pub fn calibrate_phase_voltage(sweep: &CalibrationSweep) -> Result<CalibrationModel> {
    let n = sweep.len();
    if sweep.v_y.len() != n || sweep.v_z.len() != n {
        return Err(Error::param("sweep", "voltage and intensity arrays differ in length"));
    }
    if n < 10 {
        return Err(Error::param("sweep", format!("need at least 10 points, got {n}")));
    }
    let peak = sweep.intensity.iter().copied().fold(0.0, f64::max);
    if !(peak > 0.0) {
        return Err(Error::param("sweep", "no light detected"));
    }
    let v2_max = |v: &[f64]| v.iter().map(|x| x * x).fold(0.0, f64::max);
    let (vy2, vz2) = (v2_max(&sweep.v_y), v2_max(&sweep.v_z));

    let problem = CalibrationProblem { sweep };
    let mut starts = Vec::new();
    for &ty in &[0.0, 0.5 * PI, PI, 1.5 * PI] {
        for &tz in &[0.0, 0.5 * PI, PI, 1.5 * PI] {
            for &turns in &[0.5, 1.0, 2.0] {
                let wy = if vy2 > 0.0 { turns * TAU / vy2 } else { 0.0 };
                let wz = if vz2 > 0.0 { turns * TAU / vz2 } else { 0.0 };
                // u = 0.7 puts r₀ slightly below ½, away from the symmetric saddle
                starts.push(DVector::from_vec(vec![peak, 0.7, 0.25 * PI, ty, wy, tz, wz]));
            }
        }
    }
    let options = LmOptions {
        max_iterations: 2_000,
        objective_tol: 1e-14 * peak * peak * n as f64,
        gradient_tol: 1e-15,
    };
    // short scouting runs from every start, then full runs from the best few
    let scout = LmOptions {
        max_iterations: 60,
        ..options
    };
    let mut scouted: Vec<_> = starts
        .into_par_iter()
        .map(|x0| levenberg_marquardt(&problem, x0, &scout))
        .filter(|r| r.objective.is_finite())
        .collect();
    scouted.sort_by(|a, b| a.objective.total_cmp(&b.objective));
    let reports: Vec<_> = scouted
        .into_iter()
        .take(3)
        .map(|r| {
            if r.converged {
                r
            } else {
                levenberg_marquardt(&problem, r.x, &options)
            }
        })
        .collect();
    let mut best = reports
        .into_iter()
        .filter(|r| r.objective.is_finite())
        .min_by(|a, b| a.objective.total_cmp(&b.objective))
        .ok_or_else(|| Error::Fit("calibration diverged from every start".into()))?;

    let objective_at = |x: &DVector<f64>| {
        let mut r = DVector::zeros(n);
        problem.residuals(x, &mut r);
        r.norm_squared()
    };
    let equivalent = |x: &DVector<f64>| objective_at(x) <= best.objective * (1.0 + 1e-9) + 1e-18 * peak * peak;

    // negating every phase leaves balanced-MZI intensities unchanged; prefer κ ≥ 0
    if best.x[4] < 0.0 || (best.x[4] == 0.0 && best.x[6] < 0.0) {
        let mut flipped = best.x.clone();
        for k in 3..7 {
            flipped[k] = -flipped[k];
        }
        if equivalent(&flipped) {
            best.x = flipped;
        }
    }
    // r₀ → 1−r₀ with both offsets moved by π; report the MZI offset in [0, π)
    if best.x[3].rem_euclid(TAU) >= PI {
        let mut mirrored = best.x.clone();
        mirrored[1] = 0.5 * PI - mirrored[1];
        mirrored[3] -= PI;
        mirrored[5] += PI;
        if equivalent(&mirrored) {
            best.x = mirrored;
        }
    }

    let (scale, r0, r, ty0, ky, tz0, kz) = unpack(&best.x);
    let wrap = |t: f64| (t + PI).rem_euclid(TAU) - PI;
    let mut model = CalibrationModel {
        mzi_heater: HeaterCoefficients {
            theta0: if ty0.rem_euclid(TAU) >= PI { wrap(ty0) } else { ty0.rem_euclid(TAU) },
            kappa: ky,
            degenerate: false,
        },
        phase_heater: HeaterCoefficients {
            theta0: wrap(tz0),
            kappa: kz,
            degenerate: false,
        },
        first_coupler_reflectivity: r0,
        mzi_coupler_reflectivity: r,
        scale,
        residual_rms: (best.objective / n as f64).sqrt(),
    };
    // a heater is unidentifiable when holding it fixed changes no prediction
    let floor = 1e-6 * scale.abs() + 3.0 * model.residual_rms;
    let ref_y = sweep.v_y.iter().copied().fold(f64::INFINITY, |m, v| if v.abs() < m.abs() { v } else { m });
    let ref_z = sweep.v_z.iter().copied().fold(f64::INFINITY, |m, v| if v.abs() < m.abs() { v } else { m });
    let sens_y = (0..n)
        .map(|k| (model.predict(sweep.v_y[k], sweep.v_z[k]) - model.predict(ref_y, sweep.v_z[k])).abs())
        .fold(0.0, f64::max);
    let sens_z = (0..n)
        .map(|k| (model.predict(sweep.v_y[k], sweep.v_z[k]) - model.predict(sweep.v_y[k], ref_z)).abs())
        .fold(0.0, f64::max);
    model.mzi_heater.degenerate = ky.abs() * vy2 < DEGENERATE_EXCURSION || sens_y <= floor;
    model.phase_heater.degenerate = kz.abs() * vz2 < DEGENERATE_EXCURSION || sens_z <= floor;
    if !best.converged {
        return Err(Error::Fit(format!(
            "calibration did not converge after {} iterations; best iterate {model:?}",
            best.iterations
        )));
    }
    Ok(model)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FringeSimOptions {
    /// Mean counts per phase point.
    pub counts_per_point: f64,
    pub n_phases: usize,
    pub seed: u64,
}

impl Default for FringeSimOptions {
    fn default() -> Self {
        FringeSimOptions {
            counts_per_point: 300.0,
            n_phases: 12,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DetuningFit {
    pub detuning: f64,
    pub model_visibility: f64,
    pub visibility: f64,
    pub stderr: f64,
}

/// Simulates and fits one fringe per sweep point.
pub fn visibility_vs_detuning(points: &[SweepPoint], options: &FringeSimOptions) -> Result<Vec<DetuningFit>> {
    if points.len() < 5 {
        return Err(Error::param("detunings", format!("need at least 5 points, got {}", points.len())));
    }
    let phases = fringe_phases(options.n_phases);
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let seeds: Vec<u64> = points.iter().map(|_| rng.random()).collect();
    points
        .par_iter()
        .zip(seeds)
        .map(|(p, seed)| {
            let data = simulate_fringe(options.counts_per_point, p.visibility, 0.0, &phases, seed)?;
            let fit = fit_fringe(&data)?;
            Ok(DetuningFit {
                detuning: p.detuning,
                model_visibility: p.visibility,
                visibility: fit.visibility,
                stderr: fit.visibility_err,
            })
        })
        .collect()
}

/// Writes `x,y,yerr` rows.
pub fn write_xy_csv<W: Write>(rows: &[(f64, f64, f64)], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["x", "y", "yerr"])?;
    for (x, y, e) in rows {
        w.write_record([x.to_string(), y.to_string(), e.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn fringe_rows(data: &FringeData) -> Vec<(f64, f64, f64)> {
    (0..data.phases.len())
        .map(|k| {
            let err = data
                .count_errors
                .as_ref()
                .map_or(data.counts[k].max(1.0).sqrt(), |e| e[k]);
            (data.phases[k], data.counts[k], err)
        })
        .collect()
}

pub fn detuning_rows(fits: &[DetuningFit]) -> Vec<(f64, f64, f64)> {
    fits.iter().map(|f| (f.detuning, f.visibility, f.stderr)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(offset: f64, v: f64, phase0: f64, phases: &[f64]) -> Vec<f64> {
        phases.iter().map(|&t| offset * (1.0 + v * (t - phase0).cos())).collect()
    }

    #[test]
    fn noiseless_fringe_recovered() {
        let phases = fringe_phases(12);
        let data = FringeData::new(phases.clone(), model(100.0, 0.958, 0.0, &phases), None).unwrap();
        let fit = fit_fringe(&data).unwrap();
        assert!((fit.visibility - 0.958).abs() < 1e-9);
        assert!((fit.offset - 100.0).abs() < 1e-9);
        assert!(fit.phase0.abs() < 1e-9);

        let data = FringeData::new(phases.clone(), model(37.0, 0.4, 1.2, &phases), None).unwrap();
        let fit = fit_fringe(&data).unwrap();
        assert!((fit.visibility - 0.4).abs() < 1e-9);
        assert!((fit.phase0 - 1.2).abs() < 1e-9);
        assert!(fit.visibility_err < 1e-9);
    }

    #[test]
    fn constant_fringe_has_no_phase() {
        let phases = fringe_phases(10);
        let data = FringeData::new(phases, vec![50.0; 10], None).unwrap();
        let fit = fit_fringe(&data).unwrap();
        assert_eq!(fit.visibility, 0.0);
        assert!(!fit.phase_defined);
    }

    #[test]
    fn bad_fringes_rejected() {
        let short: Vec<f64> = (0..8).map(|k| 0.3 * k as f64 / 7.0).collect();
        let data = FringeData::new(short, vec![1.0; 8], None).unwrap();
        assert!(fit_fringe(&data).is_err());
        assert!(FringeData::new(vec![0.0; 4], vec![1.0; 4], None).is_err());
        assert!(FringeData::new(vec![0.0; 6], vec![1.0; 5], None).is_err());
        // repeated phases: singular design
        let same = vec![0.0, 0.0, 0.0, PI, PI, PI];
        let data = FringeData::new(same, vec![1.0, 1.0, 1.0, 2.0, 2.0, 2.0], None).unwrap();
        assert!(fit_fringe(&data).is_err());
    }

    #[test]
    fn rescale_and_shift_invariance() {
        let phases = fringe_phases(16);
        let data = simulate_fringe(200.0, 0.8, 0.4, &phases, 5).unwrap();
        let base = fit_fringe(&data).unwrap();
        let scaled = FringeData::new(phases.clone(), data.counts.iter().map(|c| 3.0 * c).collect(), None).unwrap();
        let unweighted = fit_fringe(&FringeData { count_errors: None, poisson: false, ..data.clone() }).unwrap();
        assert!((fit_fringe(&scaled).unwrap().visibility - unweighted.visibility).abs() < 1e-12);
        let shifted = FringeData {
            phases: phases.iter().map(|p| p + 0.5).collect(),
            ..data.clone()
        };
        let s = fit_fringe(&shifted).unwrap();
        assert!((s.visibility - base.visibility).abs() < 1e-12);
        let dphi = (s.phase0 - base.phase0 - 0.5 + PI).rem_euclid(TAU) - PI;
        assert!(dphi.abs() < 1e-9);
    }

    fn truth(theta_y0: f64, kappa_y: f64, theta_z0: f64, kappa_z: f64, r0: f64, r: f64) -> CalibrationModel {
        CalibrationModel {
            mzi_heater: HeaterCoefficients {
                theta0: theta_y0,
                kappa: kappa_y,
                degenerate: false,
            },
            phase_heater: HeaterCoefficients {
                theta0: theta_z0,
                kappa: kappa_z,
                degenerate: false,
            },
            first_coupler_reflectivity: r0,
            mzi_coupler_reflectivity: r,
            scale: 1000.0,
            residual_rms: 0.0,
        }
    }

    #[test]
    fn calibration_closed_loop() {
        let t = truth(0.3, 0.05, 0.3, 0.05, 0.5, 0.5);
        let sweep = CalibrationSweep::synthetic(&t, 12.0, 16);
        let fit = calibrate_phase_voltage(&sweep).unwrap();
        let rel = |a: f64, b: f64| ((a - b) / b).abs();
        assert!(rel(fit.mzi_heater.theta0, 0.3) < 0.01, "{fit:?}");
        assert!(rel(fit.mzi_heater.kappa, 0.05) < 0.01);
        assert!(rel(fit.phase_heater.theta0, 0.3) < 0.01);
        assert!(rel(fit.phase_heater.kappa, 0.05) < 0.01);
        assert!(rel(fit.first_coupler_reflectivity, 0.5) < 0.01);
        assert!(rel(fit.mzi_coupler_reflectivity, 0.5) < 0.01);
        for k in 0..sweep.len() {
            let again = fit.predict(sweep.v_y[k], sweep.v_z[k]);
            assert!((again - sweep.intensity[k]).abs() <= 3.0 * fit.residual_rms + 1e-6);
        }
    }

    #[test]
    fn first_coupler_recovered() {
        let t = truth(0.3, 0.05, -0.8, 0.07, 0.54, 0.5);
        let fit = calibrate_phase_voltage(&CalibrationSweep::synthetic(&t, 12.0, 16)).unwrap();
        assert!((fit.first_coupler_reflectivity - 0.54).abs() < 0.01, "{fit:?}");
    }

    #[test]
    fn still_heater_flagged() {
        let t = truth(0.3, 0.05, 0.6, 0.0, 0.54, 0.5);
        let fit = calibrate_phase_voltage(&CalibrationSweep::synthetic(&t, 12.0, 16)).unwrap();
        assert!(fit.phase_heater.degenerate, "{fit:?}");
        assert!(!fit.mzi_heater.degenerate);
    }

    #[test]
    fn detuning_fits_are_seeded() {
        let points: Vec<SweepPoint> = (0..5)
            .map(|k| SweepPoint {
                detuning: k as f64,
                overlap: 1.0,
                visibility: 0.9,
            })
            .collect();
        let opts = FringeSimOptions::default();
        let a = visibility_vs_detuning(&points, &opts).unwrap();
        assert_eq!(a, visibility_vs_detuning(&points, &opts).unwrap());
        assert!(visibility_vs_detuning(&points[..4], &opts).is_err());
    }

    #[test]
    fn xy_csv_layout() {
        let mut buf = Vec::new();
        write_xy_csv(&[(0.0, 1.5, 0.1)], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "x,y,yerr\n0,1.5,0.1\n");
    }
}
