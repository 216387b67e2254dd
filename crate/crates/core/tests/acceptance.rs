//! End-to-end acceptance checks. Runs sequentially so the runtimes are
//! meaningful, and prints one line per criterion.

mod common;

use std::f64::consts::{PI, SQRT_2};
use std::path::Path;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::Rng;
use ringpath::bell::{chsh_fixed_settings, chsh_model, chsh_optimal, ChshSettings, Direction};
use ringpath::cli::{self, run_tomography, simulate_fringe_experiment, tomo_configurations, ExperimentSpec};
use ringpath::config::Config;
use ringpath::device::{build_state, StateParams};
use ringpath::fit::{fit_fringe, fringe_phases, simulate_fringe, visibility_vs_detuning, FringeSimOptions};
use ringpath::qstate::{random_density_matrix, random_density_matrix_rank};
use ringpath::source::{compute_jsa, detuning_sweep, schmidt_decompose, JsaGrid};
use ringpath::tomo::{cls_reconstruct, estimate_probabilities, projector_set, EstimateOptions, ProbabilityEstimates};
use ringpath::{DensityMatrix, C64};

type Check = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn reconstruct(est: &ProbabilityEstimates) -> DensityMatrix {
    match cls_reconstruct(est) {
        Ok(fit) => fit.rho,
        Err(ringpath::Error::NotConverged { best, .. }) => *best,
        Err(e) => panic!("reconstruction failed: {e}"),
    }
}

fn state_validity() -> Check {
    let mut count = 0;
    for b in 0..21 {
        for s in 0..21 {
            for t in 0..8 {
                let params = StateParams::new(b as f64 / 20.0, s as f64 / 20.0, t as f64 * PI / 4.0);
                let rho = build_state(&params).map_err(|e| format!("{params:?}: {e}"))?;
                DensityMatrix::new(*rho.matrix()).map_err(|e| format!("{params:?}: {e}"))?;
                count += 1;
            }
        }
    }
    let purity = build_state(&StateParams::new(0.5, 0.0, 0.0)).unwrap().purity();
    ensure(
        (purity - 0.5).abs() <= 1e-12,
        format!("{count} states valid, purity(0.5, 0) = {purity:.15}"),
    )
}

fn chsh_equivalence() -> Check {
    let mut worst: f64 = 0.0;
    let mut best = (0.0, 0.0, 0.0);
    for b in 0..21 {
        for s in 0..21 {
            let (beta, sigma) = (b as f64 / 20.0, s as f64 / 20.0);
            let rho = build_state(&StateParams::new(beta, sigma, 0.0)).unwrap();
            let fixed = chsh_fixed_settings(&rho, &ChshSettings::canonical(0.0)).s_value;
            worst = worst.max((fixed - chsh_model(beta, sigma)).abs());
            if fixed > best.0 {
                best = (fixed, beta, sigma);
            }
        }
    }
    ensure(
        worst <= 1e-9 && (best.0 - 2.0 * SQRT_2).abs() <= 1e-9 && best.1 == 0.5 && best.2 == 1.0,
        format!("max deviation {worst:.1e}, maximum S = {:.6} at ({}, {})", best.0, best.1, best.2),
    )
}

fn horodecki_dominance() -> Check {
    let mut r = common::rng(3);
    let mut worst = f64::INFINITY;
    for k in 0..1000 {
        let rho = random_density_matrix_rank(&mut r, 1 + k % 4);
        let opt = chsh_optimal(&rho);
        for _ in 0..100 {
            let mut dir = || Direction::new(r.random_range(-PI..PI), r.random_range(-PI..PI));
            let settings = ChshSettings {
                signal: [dir(), dir()],
                idler: [dir(), dir()],
            };
            worst = worst.min(opt - chsh_fixed_settings(&rho, &settings).s_value);
        }
    }
    ensure(worst >= -1e-9, format!("min(S_opt - S_fixed) = {worst:.3e} over 10^5 pairs"))
}

fn tomography_closed_loop() -> Check {
    let mut r = common::rng(4);
    let set = projector_set();
    let mut min_f = f64::INFINITY;
    for _ in 0..100 {
        let rho = random_density_matrix(&mut r);
        let f = reconstruct(&ProbabilityEstimates::noiseless(&rho, &set)).fidelity(&rho).unwrap();
        min_f = min_f.min(f);
    }
    let opts = EstimateOptions {
        subtract_accidentals: false,
        stderr_scale: 1.0,
    };
    let mut total = 0.0;
    for seed in 0..50 {
        let rho = random_density_matrix(&mut r);
        let records = common::poisson_tomography(&rho, 1e4, 500 + seed);
        let est = estimate_probabilities(&records, &opts).map_err(|e| e.to_string())?;
        total += reconstruct(&est).fidelity(&rho).unwrap();
    }
    let mean = total / 50.0;
    ensure(
        min_f >= 0.999 && mean >= 0.99,
        format!("noiseless min F = {min_f:.6}, mean F at 10^4 counts = {mean:.4}"),
    )
}

fn entangled_run() -> Check {
    let config = Config::default();
    let (_, _, fringe) = simulate_fringe_experiment(&config, 11).map_err(|e| e.to_string())?;
    let configs = tomo_configurations(&config).map_err(|e| e.to_string())?;
    let (_, state, target) = configs.into_iter().find(|c| c.0 == "entangled").unwrap();
    let (_, tomo) = run_tomography(&config, &state, &target, 12).map_err(|e| e.to_string())?;
    let s_opt = tomo.s_optimal;
    ensure(
        (fringe.visibility - 0.947).abs() < 0.03
            && (fringe.s - 2.686).abs() < 0.05
            && (s_opt.value - 2.692).abs() < 0.05
            && (0.005..=0.05).contains(&s_opt.std),
        format!(
            "fringe V = {:.4}, S = {:.3} ± {:.3}; tomography S_opt = {:.3} ± {:.3}",
            fringe.visibility, fringe.s, fringe.s_err, s_opt.value, s_opt.std
        ),
    )
}

fn configuration_triptych() -> Check {
    let config = Config::default();
    let mut parts = Vec::new();
    let mut ok = true;
    for (k, (name, state, target)) in tomo_configurations(&config).unwrap().into_iter().enumerate() {
        let (_, result) = run_tomography(&config, &state, &target, 20 + k as u64).map_err(|e| e.to_string())?;
        let f = result.fidelity_to_target.value;
        let p = result.purity.value;
        ok &= f > 0.9;
        if name == "mixed" {
            ok &= (p - 0.49).abs() <= 0.02;
        }
        parts.push(format!("{name} F = {f:.3} P = {p:.3}"));
    }
    ensure(ok, parts.join(", "))
}

fn spectral_model() -> Check {
    let config = Config::default();
    let ring = config.ring_bottom().unwrap();
    let pump = config.pump().unwrap();
    let hw = config.jsa.half_width_linewidths * ring.linewidth_fwhm;
    let n = config.jsa.n_points;
    let grid = compute_jsa(&ring, &pump, hw, n).unwrap();
    let k = schmidt_decompose(&grid).unwrap().schmidt_number;
    let k2 = schmidt_decompose(&compute_jsa(&ring, &pump, hw, 2 * n).unwrap())
        .unwrap()
        .schmidt_number;
    let gram = gram_k(&grid.amplitudes);

    let axis: Vec<f64> = (0..40).map(|i| i as f64).collect();
    let f = |x: f64| C64::new(1.0, 0.0) / C64::new(3.0, x - 20.0);
    let g = |x: f64| C64::from_polar((-(x - 17.0).powi(2) / 30.0).exp(), 0.1 * x);
    let product = JsaGrid::new(axis.clone(), axis.clone(), DMatrix::from_fn(40, 40, |i, j| f(axis[i]) * g(axis[j]))).unwrap();
    let k_product = schmidt_decompose(&product).unwrap().schmidt_number;

    let refinement = (k2 - k).abs() / k;
    ensure(
        (1.0..=1.35).contains(&k) && (k_product - 1.0).abs() <= 1e-9 && (k - gram).abs() <= 1e-6 && refinement < 0.01,
        format!(
            "K = {k:.4} (doubled grid {k2:.4}, change {:.3}%), Gram oracle {gram:.6}, product K - 1 = {:.1e}",
            100.0 * refinement,
            k_product - 1.0
        ),
    )
}

fn gram_k(a: &DMatrix<C64>) -> f64 {
    let gram = a * a.adjoint();
    let trace = gram.trace().re;
    let trace_sq = (&gram * &gram).trace().re;
    trace * trace / trace_sq
}

fn detuning_sweep_check() -> Check {
    let config = Config::default();
    let gamma = config.source.linewidth_top;
    let points = detuning_sweep(
        &config.ring_top().unwrap(),
        &config.ring_bottom().unwrap(),
        &config.pump().unwrap(),
        &config.detunings(),
        &config.sweep_model().unwrap(),
    )
    .map_err(|e| e.to_string())?;
    let fits = visibility_vs_detuning(
        &points,
        &FringeSimOptions {
            counts_per_point: config.sweep.counts_per_point,
            n_phases: config.sweep.n_phases,
            seed: 8,
        },
    )
    .map_err(|e| e.to_string())?;
    let peak = fits.iter().find(|f| f.detuning == 0.0).ok_or("no zero-detuning point")?;
    let peak_ok = (peak.visibility - 0.958).abs() <= 3.0 * peak.stderr;

    let far: Vec<_> = fits.iter().filter(|f| f.detuning.abs() >= 3.0 * gamma - 1e-9).collect();
    let floor_ok = !far.is_empty()
        && far
            .iter()
            .all(|f| f.model_visibility == config.sweep.floor && (f.visibility - config.sweep.floor).abs() <= 3.0 * f.stderr);

    let mut sym_ok = true;
    let mut sym_worst: f64 = 0.0;
    for f in &fits {
        if let Some(m) = fits.iter().find(|g| (g.detuning + f.detuning).abs() < 1e-9) {
            let z = (f.visibility - m.visibility).abs() / (f.stderr.hypot(m.stderr));
            sym_worst = sym_worst.max(z);
            sym_ok &= z <= 3.0;
        }
    }
    ensure(
        peak_ok && floor_ok && sym_ok,
        format!(
            "peak V = {:.3} ± {:.3}, {} points at |Δ| ≥ 3Γ on the {} floor, worst asymmetry {sym_worst:.2} σ",
            peak.visibility,
            peak.stderr,
            far.len(),
            config.sweep.floor
        ),
    )
}

fn fringe_coverage() -> Check {
    let phases = fringe_phases(24);
    let mut r = common::rng(9);
    let trials = 500;
    let mut covered = 0;
    for k in 0..trials {
        let v = r.random_range(0.3..0.98);
        let offset = r.random_range(50.0..500.0);
        let phase0 = r.random_range(-PI..PI);
        let data = simulate_fringe(offset, v, phase0, &phases, 7000 + k).map_err(|e| e.to_string())?;
        let fit = fit_fringe(&data).map_err(|e| e.to_string())?;
        if (fit.visibility - v).abs() <= 3.0 * fit.visibility_err {
            covered += 1;
        }
    }
    let rate = covered as f64 / trials as f64;
    ensure(rate >= 0.99, format!("{covered}/{trials} within 3 stderr ({:.1}%)", 100.0 * rate))
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn determinism() -> Check {
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut n_files = 0;
    for exp in cli::EXPERIMENTS {
        let mut outputs = Vec::new();
        for run in ["a", "b"] {
            let dir = root.path().join(exp).join(run);
            let spec = ExperimentSpec {
                experiment: exp.to_string(),
                config: None,
                out: dir.clone(),
                seed: 42,
                overrides: Vec::new(),
            };
            cli::run(&spec).map_err(|e| format!("{exp}: {e}"))?;
            outputs.push(read_dir_sorted(&dir));
        }
        if outputs[0] != outputs[1] {
            return Err(format!("{exp} outputs differ between runs"));
        }
        n_files += outputs[0].len();
    }
    Ok(format!("{} experiments, {n_files} files byte-identical", cli::EXPERIMENTS.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Check, u64); 10] = [
        ("state validity sweep", state_validity, 1),
        ("CHSH closed form", chsh_equivalence, 5),
        ("optimal CHSH dominance", horodecki_dominance, 30),
        ("tomography closed loop", tomography_closed_loop, 300),
        ("entangled run statistics", entangled_run, 600),
        ("three tomography configurations", configuration_triptych, 600),
        ("spectral model", spectral_model, 30),
        ("detuning sweep", detuning_sweep_check, 300),
        ("fringe-fit coverage", fringe_coverage, 120),
        ("CLI determinism", determinism, 60),
    ];
    let mut failures = 0;
    for (k, (name, check, limit)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let elapsed = start.elapsed();
        let in_time = elapsed <= Duration::from_secs(*limit);
        let (status, detail) = match (&outcome, in_time) {
            (Ok(d), true) => ("PASS", d.clone()),
            (Ok(d), false) => ("FAIL", format!("{d}; over the {limit} s budget")),
            (Err(d), _) => ("FAIL", d.clone()),
        };
        if status == "FAIL" {
            failures += 1;
        }
        println!(
            "acceptance {:>2} {status} [{:.2} s] {name}: {detail}",
            k + 1,
            elapsed.as_secs_f64()
        );
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures > 0 {
        std::process::exit(1);
    }
}
