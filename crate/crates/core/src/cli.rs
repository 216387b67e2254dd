//! Named experiments. Each writes plot-ready CSV and JSON files plus a
//! manifest into the output directory; runs are deterministic for a given
//! config and seed.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::Parser;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bell::{
    chsh_fixed_settings, chsh_model, chsh_optimal, correlator_from_probabilities, s_from_correlators,
    s_from_visibility, ChshReport, ChshResult, ChshSettings, CLASSICAL_BOUND,
};
use crate::config::{Config, ConfigError};
use crate::device::{
    build_state, effective_state, poisson, rate_budget, simulate_counts, transmission_for_rate, write_counts_csv,
    CountRecord, MeasurementSetting, PumpWeighting, StateParams,
};
use crate::error::Error;
use crate::fit::{
    calibrate_phase_voltage, detuning_rows, fit_fringe, fringe_phases, fringe_rows, visibility_vs_detuning,
    write_xy_csv, CalibrationModel, CalibrationSweep, FringeData, FringeSimOptions, HeaterCoefficients,
};
use crate::qstate::{DensityMatrix, Ket};
use crate::source::{
    compute_jsa, compute_jsa_on, detuning_sweep, hom_visibility, jsa_overlap, jsd_overlap, schmidt_decompose,
    GridSpec,
};
use crate::tomo::{
    estimate_probabilities, estimate_record, monte_carlo, monte_carlo_counts, simulate_tomography_counts,
    tomography_report, EstimateOptions, MonteCarloOptions, Resampling,
};

pub const EXPERIMENTS: [&str; 9] = [
    "jsa", "schmidt", "overlap", "sweep", "fringe", "chsh", "tomo", "calibrate", "budget",
];

pub mod exit {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 2;
    pub const UNKNOWN_EXPERIMENT: i32 = 3;
    pub const CONFIG_UNREADABLE: i32 = 4;
    pub const CONFIG_KEY: i32 = 5;
    pub const CONFIG_VALUE: i32 = 6;
    pub const OUTPUT: i32 = 7;
    pub const COMPUTATION: i32 = 8;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("unknown experiment `{0}` (expected one of: {list})", list = EXPERIMENTS.join(", "))]
    UnknownExperiment(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot write output: {0}")]
    Output(String),
    #[error(transparent)]
    Computation(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::UnknownExperiment(_) => exit::UNKNOWN_EXPERIMENT,
            CliError::Config(ConfigError::Io { .. } | ConfigError::Syntax(_)) => exit::CONFIG_UNREADABLE,
            CliError::Config(ConfigError::Key(_)) => exit::CONFIG_KEY,
            CliError::Config(ConfigError::Invalid(_)) => exit::CONFIG_VALUE,
            CliError::Output(_) => exit::OUTPUT,
            CliError::Computation(Error::Io(_) | Error::Json(_) | Error::Csv(_)) => exit::OUTPUT,
            CliError::Computation(_) => exit::COMPUTATION,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "ringpath", about = "Two-ring path-entanglement experiments", version)]
struct Args {
    /// One of: jsa, schmidt, overlap, sweep, fringe, chsh, tomo, calibrate, budget
    experiment: String,
    /// TOML config; defaults to the built-in preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Override a config key, e.g. `--set state.beta=0.5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub experiment: String,
    pub config: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: u64,
    pub overrides: Vec<String>,
}

pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { exit::USAGE } else { exit::OK };
            let _ = e.print();
            return code;
        }
    };
    let spec = ExperimentSpec {
        experiment: args.experiment,
        config: args.config,
        out: args.out,
        seed: args.seed,
        overrides: args.overrides,
    };
    match run(&spec) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            exit::OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    experiment: &'a str,
    figure: &'a str,
    seed: u64,
    outputs: &'a [String],
    config: &'a Config,
}

fn figure_title(experiment: &str) -> &'static str {
    match experiment {
        "jsa" => "modelled joint spectral density",
        "schmidt" => "joint spectral density Schmidt analysis",
        "overlap" => "spectral overlap of the two sources",
        "sweep" => "fringe visibility versus source detuning",
        "fringe" => "two-photon fringes from Rz rotations",
        "chsh" => "CHSH violation",
        "tomo" => "tomography of separable, mixed and entangled configurations",
        "calibrate" => "interferometer phase-voltage calibration",
        _ => "rate and loss budget",
    }
}

/// Runs one experiment and returns the files written.
pub fn run(spec: &ExperimentSpec) -> Result<Vec<PathBuf>, CliError> {
    if !EXPERIMENTS.contains(&spec.experiment.as_str()) {
        return Err(CliError::UnknownExperiment(spec.experiment.clone()));
    }
    let config = Config::load(spec.config.as_deref(), &spec.overrides)?;
    fs::create_dir_all(&spec.out).map_err(|e| CliError::Output(format!("{}: {e}", spec.out.display())))?;
    let mut out = Outputs {
        dir: spec.out.clone(),
        files: Vec::new(),
    };
    match spec.experiment.as_str() {
        "jsa" => jsa(&config, &mut out)?,
        "schmidt" => schmidt(&config, &mut out)?,
        "overlap" => overlap(&config, &mut out)?,
        "sweep" => sweep(&config, spec.seed, &mut out)?,
        "fringe" => fringe(&config, spec.seed, &mut out)?,
        "chsh" => chsh(&config, spec.seed, &mut out)?,
        "tomo" => tomo(&config, spec.seed, &mut out)?,
        "calibrate" => calibrate(&config, spec.seed, &mut out)?,
        _ => budget(&config, &mut out)?,
    }
    let names: Vec<String> = out
        .files
        .iter()
        .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .collect();
    let manifest = Manifest {
        experiment: &spec.experiment,
        figure: figure_title(&spec.experiment),
        seed: spec.seed,
        outputs: &names,
        config: &config,
    };
    out.json(&format!("{}_manifest.json", spec.experiment), &manifest)?;
    Ok(out.files)
}

struct Outputs {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Outputs {
    fn create(&mut self, name: &str) -> Result<BufWriter<File>, CliError> {
        let path = self.dir.join(name);
        let file = File::create(&path).map_err(|e| CliError::Output(format!("{}: {e}", path.display())))?;
        self.files.push(path);
        Ok(BufWriter::new(file))
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let w = self.create(name)?;
        serde_json::to_writer_pretty(w, value).map_err(Error::from)?;
        Ok(())
    }

    fn xy(&mut self, name: &str, rows: &[(f64, f64, f64)]) -> Result<(), CliError> {
        let w = self.create(name)?;
        write_xy_csv(rows, w)?;
        Ok(())
    }

    fn counts(&mut self, name: &str, records: &[CountRecord]) -> Result<(), CliError> {
        let w = self.create(name)?;
        write_counts_csv(records, w, true)?;
        Ok(())
    }
}

fn jsa(config: &Config, out: &mut Outputs) -> Result<(), CliError> {
    let ring = config.ring_bottom()?;
    let pump = config.pump()?;
    let hw = config.jsa.half_width_linewidths * ring.linewidth_fwhm;
    let grid = compute_jsa(&ring, &pump, hw, config.jsa.n_points)?;
    grid.write_csv(out.create("jsa.csv")?)?;
    let k = schmidt_decompose(&grid)?;

    #[derive(Serialize)]
    struct Summary {
        schmidt_number: f64,
        grid_half_width: f64,
        n_points: usize,
    }
    out.json(
        "jsa.json",
        &Summary {
            schmidt_number: k.schmidt_number,
            grid_half_width: hw,
            n_points: config.jsa.n_points,
        },
    )
}

fn schmidt(config: &Config, out: &mut Outputs) -> Result<(), CliError> {
    let pump = config.pump()?;

    #[derive(Serialize)]
    struct Source {
        name: &'static str,
        linewidth: f64,
        schmidt_number: f64,
        hom_visibility: f64,
        singular_values: Vec<f64>,
    }
    let mut sources = Vec::new();
    for (name, ring) in [("top", config.ring_top()?), ("bottom", config.ring_bottom()?)] {
        let hw = config.jsa.half_width_linewidths * ring.linewidth_fwhm;
        let k = schmidt_decompose(&compute_jsa(&ring, &pump, hw, config.jsa.n_points)?)?;
        sources.push(Source {
            name,
            linewidth: ring.linewidth_fwhm,
            schmidt_number: k.schmidt_number,
            hom_visibility: hom_visibility(&k),
            singular_values: k.singular_values.iter().take(10).copied().collect(),
        });
    }
    let rows: Vec<(f64, f64, f64)> = sources[1]
        .singular_values
        .iter()
        .enumerate()
        .map(|(k, v)| (k as f64, *v, 0.0))
        .collect();
    out.xy("schmidt_spectrum.csv", &rows)?;
    out.json("schmidt.json", &sources)
}

fn overlap(config: &Config, out: &mut Outputs) -> Result<(), CliError> {
    let pump = config.pump()?;
    let top = config.ring_top()?.detuned(config.source.detuning);
    let bottom = config.ring_bottom()?;
    let grid = GridSpec::covering(&top, &bottom, config.jsa.half_width_linewidths, 10.5);
    let a = compute_jsa_on(&top, &pump, &grid)?;
    let b = compute_jsa_on(&bottom, &pump, &grid)?;

    #[derive(Serialize)]
    struct Summary {
        detuning: f64,
        linewidth_top: f64,
        linewidth_bottom: f64,
        amplitude_overlap: f64,
        density_overlap: f64,
        n_points: usize,
    }
    out.json(
        "overlap.json",
        &Summary {
            detuning: config.source.detuning,
            linewidth_top: top.linewidth_fwhm,
            linewidth_bottom: bottom.linewidth_fwhm,
            amplitude_overlap: jsa_overlap(&a, &b)?.norm(),
            density_overlap: jsd_overlap(&a, &b)?,
            n_points: grid.n_points,
        },
    )
}

fn sweep(config: &Config, seed: u64, out: &mut Outputs) -> Result<(), CliError> {
    let model = config.sweep_model()?;
    let points = detuning_sweep(
        &config.ring_top()?,
        &config.ring_bottom()?,
        &config.pump()?,
        &config.detunings(),
        &model,
    )?;
    let options = FringeSimOptions {
        counts_per_point: config.sweep.counts_per_point,
        n_phases: config.sweep.n_phases,
        seed,
    };
    let fits = visibility_vs_detuning(&points, &options)?;
    out.xy("sweep.csv", &detuning_rows(&fits))?;
    let model_rows: Vec<(f64, f64, f64)> = points.iter().map(|p| (p.detuning, p.visibility, 0.0)).collect();
    out.xy("sweep_model.csv", &model_rows)?;
    let overlap_rows: Vec<(f64, f64, f64)> = points.iter().map(|p| (p.detuning, p.overlap, 0.0)).collect();
    out.xy("sweep_overlap.csv", &overlap_rows)?;

    #[derive(Serialize)]
    struct Summary {
        ideal_visibility: f64,
        floor: f64,
        peak_detuning: f64,
        peak_visibility: f64,
        peak_stderr: f64,
    }
    let peak = fits
        .iter()
        .min_by(|a, b| a.detuning.abs().total_cmp(&b.detuning.abs()))
        .expect("at least five points");
    out.json(
        "sweep.json",
        &Summary {
            ideal_visibility: model.ideal_visibility(),
            floor: model.background_floor,
            peak_detuning: peak.detuning,
            peak_visibility: peak.visibility,
            peak_stderr: peak.stderr,
        },
    )
}

/// Both qubits in the equatorial plane with the signal phase scanned.
pub fn fringe_settings(phases: &[f64]) -> Vec<MeasurementSetting> {
    let half_pi = std::f64::consts::FRAC_PI_2;
    phases
        .iter()
        .map(|&p| MeasurementSetting::new(half_pi, p, half_pi, 0.0))
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct FringeSummary {
    pub visibility: f64,
    pub visibility_err: f64,
    pub phase0: f64,
    pub s: f64,
    pub s_err: f64,
    pub convention: crate::bell::SConvention,
    pub expected_visibility: f64,
}

/// Simulates port-00 coincidence fringes of the entangled state and converts
/// the fitted visibility to `S`.
pub fn simulate_fringe_experiment(config: &Config, seed: u64) -> Result<(Vec<CountRecord>, FringeData, FringeSummary), CliError> {
    let rho = build_state(&config.entangled_state())?;
    let device = config.device();
    let pump = config.pump()?;
    let phases = fringe_phases(config.fringe.n_phases);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let records: Vec<CountRecord> = fringe_settings(&phases)
        .iter()
        .map(|s| simulate_counts(&rho, s, &device, &pump, config.fringe.integration_time, rng.random()))
        .collect::<Result<_, _>>()?;
    let acc = |r: &CountRecord| {
        if config.fringe.subtract_accidentals {
            r.accidentals_estimate
        } else {
            0.0
        }
    };
    let counts: Vec<f64> = records
        .iter()
        .map(|r| (r.coincidences[0] as f64 - acc(r)).max(0.0))
        .collect();
    let errors: Vec<f64> = records.iter().map(|r| (r.coincidences[0] as f64).max(1.0).sqrt()).collect();
    let data = FringeData::new(phases, counts, Some(errors))?;
    let fit = fit_fringe(&data)?;
    let v = fit.visibility.min(1.0);
    let s = s_from_visibility(v, config.fringe.convention)?;
    let slope = s_from_visibility(1.0, config.fringe.convention)? - s_from_visibility(0.0, config.fringe.convention)?;
    let sigma = config.state.sigma;
    let expected_visibility = crate::bell::visibility_from_state(config.state.beta, sigma) * (1.0 - device.multipair_fraction);
    Ok((
        records,
        data,
        FringeSummary {
            visibility: fit.visibility,
            visibility_err: fit.visibility_err,
            phase0: fit.phase0,
            s,
            s_err: slope * fit.visibility_err,
            convention: config.fringe.convention,
            expected_visibility,
        },
    ))
}

fn fringe(config: &Config, seed: u64, out: &mut Outputs) -> Result<(), CliError> {
    let (records, data, summary) = simulate_fringe_experiment(config, seed)?;
    out.counts("fringe_counts.csv", &records)?;
    out.xy("fringe.csv", &fringe_rows(&data))?;
    out.json("fringe.json", &summary)
}

#[derive(Clone, Debug, Serialize)]
pub struct ChshRun {
    pub report: ChshReport,
    /// `S` of the modelled state after multi-pair noise.
    pub s_expected: f64,
    /// Closed-form `S` of the noiseless state.
    pub s_model: f64,
    pub s_optimal_expected: f64,
}

/// Counts at the four canonical settings, with a Poisson bootstrap for the
/// standard error of `S`.
pub fn simulate_chsh_experiment(config: &Config, seed: u64) -> Result<(Vec<CountRecord>, ChshRun), CliError> {
    let params = config.entangled_state();
    let rho = build_state(&params)?;
    let device = config.device();
    let pump = config.pump()?;
    let settings = ChshSettings::canonical(params.canonical().theta);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let records: Vec<CountRecord> = settings
        .settings()
        .iter()
        .map(|s| simulate_counts(&rho, s, &device, &pump, config.chsh.integration_time, rng.random()))
        .collect::<Result<_, _>>()?;
    let opts = EstimateOptions::default();
    let correlators_of = |recs: &[CountRecord]| -> Result<[f64; 4], Error> {
        let mut e = [0.0; 4];
        for (k, r) in recs.iter().enumerate() {
            let (p, _) = estimate_record(r, &opts).ok_or_else(|| Error::EmptyBasis {
                basis: format!("CHSH setting {k}"),
            })?;
            e[k] = correlator_from_probabilities(&p);
        }
        Ok(e)
    };
    let correlators = correlators_of(&records)?;
    let s_value = s_from_correlators(&correlators);
    let mut samples = Vec::with_capacity(config.chsh.mc_samples);
    for _ in 0..config.chsh.mc_samples {
        let redrawn: Vec<CountRecord> = records
            .iter()
            .map(|r| CountRecord {
                coincidences: r.coincidences.map(|c| poisson(&mut rng, c as f64)),
                ..*r
            })
            .collect();
        samples.push(s_from_correlators(&correlators_of(&redrawn)?));
    }
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    let std = (samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (samples.len() - 1) as f64).sqrt();
    let result = ChshResult {
        s_value,
        standard_error: std,
        violated: s_value > CLASSICAL_BOUND,
        correlators,
    };
    let eff = effective_state(&rho, &device)?;
    let canonical = params.canonical();
    Ok((
        records,
        ChshRun {
            report: ChshReport::new(settings, &result),
            s_expected: chsh_fixed_settings(&eff, &settings).s_value,
            s_model: chsh_model(canonical.beta, canonical.sigma.re),
            s_optimal_expected: chsh_optimal(&eff),
        },
    ))
}

fn chsh(config: &Config, seed: u64, out: &mut Outputs) -> Result<(), CliError> {
    let (records, run) = simulate_chsh_experiment(config, seed)?;
    out.counts("chsh_counts.csv", &records)?;
    out.json("chsh.json", &run)
}

/// The three tomographed configurations: name, state and target.
pub fn tomo_configurations(config: &Config) -> Result<Vec<(&'static str, StateParams, DensityMatrix)>, Error> {
    let theta = config.state.theta;
    let target_entangled = build_state(&StateParams::new(0.5, 1.0, theta))?;
    Ok(vec![
        (
            "single",
            StateParams::new(1.0, 0.0, 0.0),
            DensityMatrix::from_ket(&Ket::basis2(0))?,
        ),
        (
            "mixed",
            StateParams::new(config.tomo.mixed_beta, 0.0, theta),
            build_state(&StateParams::new(0.5, 0.0, 0.0))?,
        ),
        ("entangled", config.entangled_state(), target_entangled),
    ])
}

/// Simulates and reconstructs one configuration.
pub fn run_tomography(
    config: &Config,
    state: &StateParams,
    target: &DensityMatrix,
    seed: u64,
) -> Result<(Vec<CountRecord>, crate::tomo::TomoResult), Error> {
    let rho = build_state(state)?;
    let records = simulate_tomography_counts(
        &rho,
        &config.device(),
        &config.pump()?,
        config.tomo.integration_time,
        seed,
    )?;
    let estimate_options = EstimateOptions {
        subtract_accidentals: config.tomo.subtract_accidentals,
        stderr_scale: config.tomo.stderr_scale,
    };
    let mc = MonteCarloOptions {
        n_samples: config.tomo.mc_samples,
        seed: seed ^ 0x9e37_79b9_7f4a_7c15,
        chsh_settings: ChshSettings::canonical(state.canonical().theta),
        keep_samples: config.tomo.keep_samples,
        ..Default::default()
    };
    let result = match config.tomo.resampling {
        Resampling::Normal => {
            let est = estimate_probabilities(&records, &estimate_options)?;
            monte_carlo(&est, target, &mc)?
        }
        Resampling::Counts => monte_carlo_counts(&records, &estimate_options, target, &mc)?,
    };
    Ok((records, result))
}

fn tomo(config: &Config, seed: u64, out: &mut Outputs) -> Result<(), CliError> {
    #[derive(Serialize)]
    struct Row {
        configuration: &'static str,
        fidelity: f64,
        fidelity_err: f64,
        purity: f64,
        purity_err: f64,
        s_optimal: f64,
        s_optimal_err: f64,
    }
    let mut rows = Vec::new();
    for (k, (name, state, target)) in tomo_configurations(config)?.into_iter().enumerate() {
        let (records, result) = run_tomography(config, &state, &target, seed.wrapping_add(k as u64))?;
        out.counts(&format!("tomo_{name}_counts.csv"), &records)?;
        out.json(&format!("tomo_{name}.json"), &tomography_report(&result, &target))?;
        rows.push(Row {
            configuration: name,
            fidelity: result.fidelity_to_target.value,
            fidelity_err: result.fidelity_to_target.std,
            purity: result.purity.value,
            purity_err: result.purity.std,
            s_optimal: result.s_optimal.value,
            s_optimal_err: result.s_optimal.std,
        });
    }
    out.json("tomo.json", &rows)
}

/// Noisy synthetic sweep of one qubit's double interferometer.
pub fn synthetic_calibration(config: &Config, seed: u64) -> (CalibrationModel, CalibrationSweep) {
    let c = &config.calibrate;
    let truth = CalibrationModel {
        mzi_heater: HeaterCoefficients {
            theta0: c.theta_y0,
            kappa: c.kappa_y,
            degenerate: false,
        },
        phase_heater: HeaterCoefficients {
            theta0: c.theta_z0,
            kappa: c.kappa_z,
            degenerate: false,
        },
        first_coupler_reflectivity: config.device.first_coupler_reflectivity,
        mzi_coupler_reflectivity: c.mzi_coupler_reflectivity,
        scale: c.peak_counts,
        residual_rms: 0.0,
    };
    let mut sweep = CalibrationSweep::synthetic(&truth, c.v_max, c.n_points);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in sweep.intensity.iter_mut() {
        *i = poisson(&mut rng, *i) as f64;
    }
    (truth, sweep)
}

fn calibrate(config: &Config, seed: u64, out: &mut Outputs) -> Result<(), CliError> {
    let (truth, sweep) = synthetic_calibration(config, seed);
    let fit = calibrate_phase_voltage(&sweep)?;
    let w = out.create("calibrate.csv")?;
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["v_y", "v_z", "intensity", "model"]).map_err(Error::from)?;
    for k in 0..sweep.len() {
        csv.write_record([
            sweep.v_y[k].to_string(),
            sweep.v_z[k].to_string(),
            sweep.intensity[k].to_string(),
            fit.predict(sweep.v_y[k], sweep.v_z[k]).to_string(),
        ])
        .map_err(Error::from)?;
    }
    csv.flush().map_err(Error::from)?;

    #[derive(Serialize)]
    struct Summary {
        truth: CalibrationModel,
        fit: CalibrationModel,
    }
    out.json("calibrate.json", &Summary { truth, fit })
}

fn budget(config: &Config, out: &mut Outputs) -> Result<(), CliError> {
    let device = config.device();
    let pump = config.pump()?;
    let budget = rate_budget(&device, &pump);
    let t = transmission_for_rate(&device, &pump, config.budget.target_rate_hz)?;
    let unweighted = crate::device::balance_from_brightness(
        config.source.mu_top,
        config.source.mu_bottom,
        device.first_coupler_reflectivity,
        PumpWeighting::Unweighted,
    )?;

    #[derive(Serialize)]
    struct Summary {
        budget: crate::device::RateBudget,
        target_rate_hz: f64,
        required_per_arm_transmission: f64,
        required_per_arm_loss_db: f64,
        balance: f64,
        balance_unweighted: f64,
    }
    out.json(
        "budget.json",
        &Summary {
            budget,
            target_rate_hz: config.budget.target_rate_hz,
            required_per_arm_transmission: t,
            required_per_arm_loss_db: 10.0 * t.log10(),
            balance: config.predicted_balance()?,
            balance_unweighted: unweighted,
        },
    )
}

/// Reads back a JSON artifact; convenience for tests and scripts.
pub fn read_json(path: &Path) -> Result<serde_json::Value, Error> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}
