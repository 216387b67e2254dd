//! Over-complete two-qubit state tomography.
//!
//! Thirty-six rank-one projectors from the six single-qubit eigenstates of
//! Z, X and Y, grouped into nine basis pairs of four outcomes. Reconstruction
//! is constrained least squares over `ρ = LL†/Tr(LL†)`.

use nalgebra::{DMatrix, DVector, Matrix4, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bell::{chsh_fixed_settings, chsh_optimal, ChshSettings};
use crate::device::{
    measurement_probabilities, poisson, simulate_counts, AnalysisBasis, CountRecord, DeviceConfig,
    MeasurementSetting,
};
use crate::error::{Error, Result};
use crate::lsq::{levenberg_marquardt, LeastSquares, LmOptions};
use crate::qstate::{DensityMatrix, C64};
use crate::source::PumpParams;

pub const DEFAULT_MC_SAMPLES: usize = 500;
const N_STARTS: usize = 5;
const START_SEED: u64 = 0x5eed_70a0;
const SETTING_TOL: f64 = 1e-9;

/// Single-qubit labels in catalogue order.
pub const LABELS: [&str; 6] = ["0", "1", "+", "-", "+i", "-i"];

fn label_port(label: &str) -> (AnalysisBasis, usize) {
    let find = |b: AnalysisBasis| b.port_labels().iter().position(|l| *l == label).map(|p| (b, p));
    AnalysisBasis::ALL
        .into_iter()
        .find_map(find)
        .expect("label belongs to an analysis basis")
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProjectorEntry {
    pub signal_label: &'static str,
    pub idler_label: &'static str,
    pub signal_basis: AnalysisBasis,
    pub idler_basis: AnalysisBasis,
    pub setting: MeasurementSetting,
    /// `(signal port, idler port)`.
    pub ports: (usize, usize),
    /// The projector is `|v⟩⟨v|`.
    pub vector: Vector4<C64>,
}

impl ProjectorEntry {
    /// Index into `CountRecord::coincidences`.
    pub fn port_index(&self) -> usize {
        2 * self.ports.0 + self.ports.1
    }

    pub fn matrix(&self) -> Matrix4<C64> {
        self.vector * self.vector.adjoint()
    }

    pub fn basis_name(&self) -> String {
        format!("{}{}", self.signal_basis.name(), self.idler_basis.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProjectorSet {
    pub entries: Vec<ProjectorEntry>,
}

impl ProjectorSet {
    /// Catalogue for a device with possibly imperfect analysis couplers.
    pub fn for_device(config: &DeviceConfig) -> Self {
        let mut entries = Vec::with_capacity(36);
        for s in LABELS {
            for i in LABELS {
                let (sb, sp) = label_port(s);
                let (ib, ip) = label_port(i);
                let setting = AnalysisBasis::setting(sb, ib);
                let u = config.analysis_unitary(&setting);
                let row = u.row(2 * sp + ip);
                entries.push(ProjectorEntry {
                    signal_label: s,
                    idler_label: i,
                    signal_basis: sb,
                    idler_basis: ib,
                    setting,
                    ports: (sp, ip),
                    vector: row.adjoint(),
                });
            }
        }
        ProjectorSet { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `Tr(Πᵢρ)` for every entry.
    pub fn probabilities(&self, rho: &DensityMatrix) -> Vec<f64> {
        self.entries
            .iter()
            .map(|e| (e.vector.adjoint() * rho.matrix() * e.vector)[(0, 0)].re)
            .collect()
    }
}

pub fn projector_set() -> ProjectorSet {
    ProjectorSet::for_device(&DeviceConfig::ideal())
}

/// The nine basis-pair settings in catalogue order.
pub fn tomography_settings() -> Vec<(AnalysisBasis, AnalysisBasis, MeasurementSetting)> {
    let mut out = Vec::with_capacity(9);
    for s in AnalysisBasis::ALL {
        for i in AnalysisBasis::ALL {
            out.push((s, i, AnalysisBasis::setting(s, i)));
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProbabilityEstimates {
    pub p: Vec<f64>,
    pub stderr: Vec<f64>,
}

impl ProbabilityEstimates {
    /// Exact probabilities of `rho` with zero uncertainty.
    pub fn noiseless(rho: &DensityMatrix, projectors: &ProjectorSet) -> Self {
        let p = projectors.probabilities(rho);
        let n = p.len();
        ProbabilityEstimates { p, stderr: vec![0.0; n] }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EstimateOptions {
    pub subtract_accidentals: bool,
    /// Multiplies the Poisson-propagated standard errors.
    pub stderr_scale: f64,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        EstimateOptions {
            subtract_accidentals: true,
            stderr_scale: 1.0,
        }
    }
}

/// Outcome probabilities and standard errors for one setting's four port pairs.
pub fn estimate_record(record: &CountRecord, options: &EstimateOptions) -> Option<([f64; 4], [f64; 4])> {
    let acc = if options.subtract_accidentals {
        record.accidentals_estimate
    } else {
        0.0
    };
    let net = record.coincidences.map(|c| (c as f64 - acc).max(0.0));
    let total: f64 = net.iter().sum();
    if !(total > 0.0) {
        return None;
    }
    let p = net.map(|n| n / total);
    let mut se = [0.0; 4];
    for k in 0..4 {
        // ∂p_k/∂c_j = (δ_kj − p_k)/N for counts above the floor
        let var: f64 = (0..4)
            .filter(|&j| net[j] > 0.0)
            .map(|j| {
                let d = (if j == k { 1.0 } else { 0.0 } - p[k]) / total;
                d * d * record.coincidences[j] as f64
            })
            .sum();
        se[k] = options.stderr_scale * var.sqrt();
    }
    Some((p, se))
}

/// Merges records that share a setting.
fn merged_record(records: &[CountRecord], setting: &MeasurementSetting) -> Option<CountRecord> {
    let mut found: Option<CountRecord> = None;
    for r in records.iter().filter(|r| r.setting.same_as(setting, SETTING_TOL)) {
        match &mut found {
            None => found = Some(*r),
            Some(acc) => {
                for k in 0..4 {
                    acc.coincidences[k] += r.coincidences[k];
                }
                acc.accidentals_estimate += r.accidentals_estimate;
                acc.integration_time += r.integration_time;
            }
        }
    }
    found
}

pub fn estimate_probabilities(records: &[CountRecord], options: &EstimateOptions) -> Result<ProbabilityEstimates> {
    estimate_probabilities_for(records, &projector_set(), options)
}

pub fn estimate_probabilities_for(
    records: &[CountRecord],
    projectors: &ProjectorSet,
    options: &EstimateOptions,
) -> Result<ProbabilityEstimates> {
    let mut p = Vec::with_capacity(projectors.len());
    let mut stderr = Vec::with_capacity(projectors.len());
    for e in &projectors.entries {
        let basis = || Error::EmptyBasis { basis: e.basis_name() };
        let record = merged_record(records, &e.setting).ok_or_else(basis)?;
        let (pg, sg) = estimate_record(&record, options).ok_or_else(basis)?;
        p.push(pg[e.port_index()]);
        stderr.push(sg[e.port_index()]);
    }
    Ok(ProbabilityEstimates { p, stderr })
}

/// Records for all nine basis pairs, seeded per setting from `seed`.
pub fn simulate_tomography_counts(
    rho: &DensityMatrix,
    config: &DeviceConfig,
    pump: &PumpParams,
    integration_time: f64,
    seed: u64,
) -> Result<Vec<CountRecord>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    tomography_settings()
        .into_iter()
        .map(|(_, _, s)| simulate_counts(rho, &s, config, pump, integration_time, rng.random()))
        .collect()
}

#[derive(Clone, Debug)]
pub struct ClsFit {
    pub rho: DensityMatrix,
    pub objective: f64,
    pub iterations: usize,
}

struct ClsProblem<'a> {
    vectors: Vec<Vector4<C64>>,
    targets: &'a [f64],
}

const OFF_DIAGONAL: [(usize, usize); 6] = [(1, 0), (2, 0), (2, 1), (3, 0), (3, 1), (3, 2)];

fn lower_triangular(x: &DVector<f64>) -> Matrix4<C64> {
    let mut l = Matrix4::zeros();
    for k in 0..4 {
        l[(k, k)] = C64::new(x[k], 0.0);
    }
    for (m, &(a, b)) in OFF_DIAGONAL.iter().enumerate() {
        l[(a, b)] = C64::new(x[4 + 2 * m], x[5 + 2 * m]);
    }
    l
}

/// Entry `(a, b)` of `L` and the complex direction of each parameter.
fn parameter_directions() -> [(usize, usize, C64); 16] {
    let mut out = [(0, 0, C64::new(0.0, 0.0)); 16];
    for (k, slot) in out.iter_mut().take(4).enumerate() {
        *slot = (k, k, C64::new(1.0, 0.0));
    }
    for (m, &(a, b)) in OFF_DIAGONAL.iter().enumerate() {
        out[4 + 2 * m] = (a, b, C64::new(1.0, 0.0));
        out[5 + 2 * m] = (a, b, C64::new(0.0, 1.0));
    }
    out
}

fn state_from_params(x: &DVector<f64>) -> Result<DensityMatrix> {
    let l = lower_triangular(x);
    DensityMatrix::from_unnormalised(&(l * l.adjoint()))
}

impl LeastSquares for ClsProblem<'_> {
    fn n_params(&self) -> usize {
        16
    }

    fn n_residuals(&self) -> usize {
        self.targets.len()
    }

    fn residuals(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        let l = lower_triangular(x);
        let ldag = l.adjoint();
        let trace: f64 = l.iter().map(|z| z.norm_sqr()).sum();
        for (i, v) in self.vectors.iter().enumerate() {
            out[i] = (ldag * v).norm_squared() / trace - self.targets[i];
        }
    }

    fn jacobian(&self, x: &DVector<f64>, out: &mut DMatrix<f64>) {
        let l = lower_triangular(x);
        let ldag = l.adjoint();
        let trace: f64 = l.iter().map(|z| z.norm_sqr()).sum();
        let dirs = parameter_directions();
        // d Tr(LL†) = 2 Re(c·conj(L_ab))
        let dtrace: Vec<f64> = dirs.iter().map(|&(a, b, c)| 2.0 * (c * l[(a, b)].conj()).re).collect();
        for (i, v) in self.vectors.iter().enumerate() {
            let w = ldag * v;
            let f = w.norm_squared();
            for (k, &(a, b, c)) in dirs.iter().enumerate() {
                // d⟨v|LL†|v⟩ = 2 Re(c·(L†v)_b·conj(v_a))
                let df = 2.0 * (c * w[b] * v[a].conj()).re;
                out[(i, k)] = (df * trace - f * dtrace[k]) / (trace * trace);
            }
        }
    }
}

fn starting_points() -> Vec<DVector<f64>> {
    let mut starts = Vec::with_capacity(N_STARTS);
    let mut identity = DVector::zeros(16);
    for k in 0..4 {
        identity[k] = 0.5;
    }
    starts.push(identity);
    let mut rng = ChaCha8Rng::seed_from_u64(START_SEED);
    for _ in 1..N_STARTS {
        starts.push(DVector::from_fn(16, |_, _| StandardNormal.sample(&mut rng)));
    }
    starts
}

pub fn cls_reconstruct(estimates: &ProbabilityEstimates) -> Result<ClsFit> {
    cls_reconstruct_with(estimates, &projector_set(), &LmOptions::default())
}

pub fn cls_reconstruct_with(
    estimates: &ProbabilityEstimates,
    projectors: &ProjectorSet,
    options: &LmOptions,
) -> Result<ClsFit> {
    if estimates.p.len() != projectors.len() || projectors.len() != 36 {
        return Err(Error::param(
            "estimates",
            format!("expected 36 probabilities, got {}", estimates.p.len()),
        ));
    }
    let problem = ClsProblem {
        vectors: projectors.entries.iter().map(|e| e.vector).collect(),
        targets: &estimates.p,
    };
    let reports: Vec<_> = starting_points()
        .into_iter()
        .map(|x0| levenberg_marquardt(&problem, x0, options))
        .collect();
    let total_iterations = reports.iter().map(|r| r.iterations).sum();
    let best = reports
        .into_iter()
        .filter(|r| r.objective.is_finite())
        .min_by(|a, b| a.objective.total_cmp(&b.objective))
        .ok_or_else(|| Error::Fit("all starts diverged".into()))?;
    let rho = state_from_params(&best.x)?;
    if !best.converged {
        return Err(Error::NotConverged {
            iterations: total_iterations,
            objective: best.objective,
            best: Box::new(rho),
        });
    }
    Ok(ClsFit {
        rho,
        objective: best.objective,
        iterations: total_iterations,
    })
}

/// Best available reconstruction, accepting the best iterate on non-convergence.
fn reconstruct_lenient(estimates: &ProbabilityEstimates, projectors: &ProjectorSet) -> Result<DensityMatrix> {
    match cls_reconstruct_with(estimates, projectors, &LmOptions::default()) {
        Ok(fit) => Ok(fit.rho),
        Err(Error::NotConverged { best, .. }) => Ok(*best),
        Err(e) => Err(e),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resampling {
    /// Normal perturbation of each probability by its standard error.
    Normal,
    /// Poisson redraw of the raw counts.
    Counts,
}

/// Central value with Monte-Carlo mean and spread.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Stat {
    pub value: f64,
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    fn from_samples(value: f64, samples: &[f64]) -> Self {
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        Stat {
            value,
            mean,
            std: var.sqrt(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SampleMetrics {
    pub fidelity: Vec<f64>,
    pub purity: Vec<f64>,
    pub s_optimal: Vec<f64>,
    pub s_fixed: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TomoResult {
    pub rho_hat: DensityMatrix,
    pub objective: f64,
    pub fidelity_to_target: Stat,
    pub purity: Stat,
    pub s_optimal: Stat,
    pub s_fixed: Stat,
    pub mc_samples: usize,
    pub resampling: Resampling,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<SampleMetrics>,
}

#[derive(Clone, Debug)]
pub struct MonteCarloOptions {
    pub n_samples: usize,
    pub seed: u64,
    pub projectors: ProjectorSet,
    /// Settings for the fixed-settings S.
    pub chsh_settings: ChshSettings,
    pub keep_samples: bool,
}

impl Default for MonteCarloOptions {
    fn default() -> Self {
        MonteCarloOptions {
            n_samples: DEFAULT_MC_SAMPLES,
            seed: 0,
            projectors: projector_set(),
            chsh_settings: ChshSettings::canonical(0.0),
            keep_samples: false,
        }
    }
}

struct Metrics {
    fidelity: f64,
    purity: f64,
    s_optimal: f64,
    s_fixed: f64,
}

fn metrics(rho: &DensityMatrix, target: &DensityMatrix, settings: &ChshSettings) -> Result<Metrics> {
    Ok(Metrics {
        fidelity: rho.fidelity(target)?,
        purity: rho.purity(),
        s_optimal: chsh_optimal(rho),
        s_fixed: chsh_fixed_settings(rho, settings).s_value,
    })
}

fn sample_seeds(seed: u64, n: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random()).collect()
}

fn summarise(
    central: &ProbabilityEstimates,
    target: &DensityMatrix,
    options: &MonteCarloOptions,
    resampling: Resampling,
    draw: impl Fn(u64) -> Result<ProbabilityEstimates> + Sync,
) -> Result<TomoResult> {
    if options.n_samples < 2 {
        return Err(Error::param("n_samples", "need at least 2 samples"));
    }
    let fit = match cls_reconstruct_with(central, &options.projectors, &LmOptions::default()) {
        Ok(fit) => fit,
        Err(Error::NotConverged { best, objective, iterations }) => ClsFit {
            rho: *best,
            objective,
            iterations,
        },
        Err(e) => return Err(e),
    };
    let c = metrics(&fit.rho, target, &options.chsh_settings)?;
    let samples: Vec<Metrics> = sample_seeds(options.seed, options.n_samples)
        .into_par_iter()
        .map(|s| {
            let est = draw(s)?;
            let rho = reconstruct_lenient(&est, &options.projectors)?;
            metrics(&rho, target, &options.chsh_settings)
        })
        .collect::<Result<_>>()?;
    let col = |f: fn(&Metrics) -> f64| samples.iter().map(f).collect::<Vec<f64>>();
    let per = SampleMetrics {
        fidelity: col(|m| m.fidelity),
        purity: col(|m| m.purity),
        s_optimal: col(|m| m.s_optimal),
        s_fixed: col(|m| m.s_fixed),
    };
    Ok(TomoResult {
        objective: fit.objective,
        fidelity_to_target: Stat::from_samples(c.fidelity, &per.fidelity),
        purity: Stat::from_samples(c.purity, &per.purity),
        s_optimal: Stat::from_samples(c.s_optimal, &per.s_optimal),
        s_fixed: Stat::from_samples(c.s_fixed, &per.s_fixed),
        rho_hat: fit.rho,
        mc_samples: options.n_samples,
        resampling,
        samples: options.keep_samples.then_some(per),
    })
}

/// Reconstructs around `estimates` and propagates uncertainty by normal
/// resampling of each probability.
pub fn monte_carlo(
    estimates: &ProbabilityEstimates,
    target: &DensityMatrix,
    options: &MonteCarloOptions,
) -> Result<TomoResult> {
    summarise(estimates, target, options, Resampling::Normal, |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = estimates
            .p
            .iter()
            .zip(&estimates.stderr)
            .map(|(&p, &se)| {
                let z: f64 = StandardNormal.sample(&mut rng);
                (p + se * z).clamp(0.0, 1.0)
            })
            .collect();
        Ok(ProbabilityEstimates {
            p,
            stderr: estimates.stderr.clone(),
        })
    })
}

/// Count-level bootstrap: each sample redraws every count from a Poisson
/// distribution with the observed value as mean.
pub fn monte_carlo_counts(
    records: &[CountRecord],
    estimate_options: &EstimateOptions,
    target: &DensityMatrix,
    options: &MonteCarloOptions,
) -> Result<TomoResult> {
    let central = estimate_probabilities_for(records, &options.projectors, estimate_options)?;
    summarise(&central, target, options, Resampling::Counts, |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let redrawn: Vec<CountRecord> = records
            .iter()
            .map(|r| CountRecord {
                coincidences: r.coincidences.map(|c| poisson(&mut rng, c as f64)),
                ..*r
            })
            .collect();
        estimate_probabilities_for(&redrawn, &options.projectors, estimate_options)
    })
}

/// Re and Im parts of a 4×4 matrix as nested rows.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MatrixParts {
    pub re: [[f64; 4]; 4],
    pub im: [[f64; 4]; 4],
}

impl MatrixParts {
    pub fn of(rho: &DensityMatrix) -> Self {
        let m = rho.matrix();
        MatrixParts {
            re: std::array::from_fn(|i| std::array::from_fn(|j| m[(i, j)].re)),
            im: std::array::from_fn(|i| std::array::from_fn(|j| m[(i, j)].im)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TomoReport {
    pub rho_hat: MatrixParts,
    pub target: MatrixParts,
    pub fidelity: Stat,
    pub purity: Stat,
    pub s_optimal: Stat,
    pub s_fixed: Stat,
    /// `|ρ̂₀₃|`
    pub coherence: f64,
    pub objective: f64,
    pub mc_samples: usize,
    pub resampling: Resampling,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<SampleMetrics>,
}

pub fn tomography_report(result: &TomoResult, target: &DensityMatrix) -> TomoReport {
    TomoReport {
        rho_hat: MatrixParts::of(&result.rho_hat),
        target: MatrixParts::of(target),
        fidelity: result.fidelity_to_target,
        purity: result.purity,
        s_optimal: result.s_optimal,
        s_fixed: result.s_fixed,
        coherence: result.rho_hat.get(0, 3).norm(),
        objective: result.objective,
        mc_samples: result.mc_samples,
        resampling: result.resampling,
        samples: result.samples.clone(),
    }
}

/// Probabilities that `rho` would give on `config`, without noise.
pub fn device_probabilities(rho: &DensityMatrix, config: &DeviceConfig) -> ProbabilityEstimates {
    let projectors = projector_set();
    let p = projectors
        .entries
        .iter()
        .map(|e| measurement_probabilities(rho, &e.setting, config)[e.port_index()])
        .collect();
    ProbabilityEstimates { p, stderr: vec![0.0; 36] }
}
