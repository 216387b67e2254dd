#![allow(dead_code)]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use ringpath::device::{measurement_probabilities, CountRecord, DeviceConfig};
use ringpath::tomo::tomography_settings;
use ringpath::DensityMatrix;

/// Poisson counts with mean `n·p` for each of the nine tomography settings of
/// an ideal, background-free device.
pub fn poisson_tomography(rho: &DensityMatrix, counts_per_setting: f64, seed: u64) -> Vec<CountRecord> {
    let ideal = DeviceConfig::ideal();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    tomography_settings()
        .into_iter()
        .map(|(_, _, setting)| {
            let p = measurement_probabilities(rho, &setting, &ideal);
            let coincidences = p.map(|pk| {
                let mean = counts_per_setting * pk.max(0.0);
                if mean > 0.0 {
                    Poisson::new(mean).unwrap().sample(&mut rng) as u64
                } else {
                    0
                }
            });
            CountRecord {
                setting,
                coincidences,
                accidentals_estimate: 0.0,
                integration_time: 1.0,
            }
        })
        .collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
