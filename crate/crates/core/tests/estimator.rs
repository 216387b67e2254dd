mod common;

use ringpath::qstate::random_density_matrix;
use ringpath::tomo::{cls_reconstruct, estimate_probabilities, EstimateOptions};

#[test]
fn fidelity_improves_with_counts() {
    let opts = EstimateOptions {
        subtract_accidentals: false,
        stderr_scale: 1.0,
    };
    let truth = random_density_matrix(&mut common::rng(41));
    let mut means = Vec::new();
    for n in [1e2, 1e3, 1e4, 1e5] {
        let mut total = 0.0;
        let seeds = 20;
        for seed in 0..seeds {
            let records = common::poisson_tomography(&truth, n, 1000 + seed);
            let est = estimate_probabilities(&records, &opts).unwrap();
            let rho = match cls_reconstruct(&est) {
                Ok(fit) => fit.rho,
                Err(ringpath::Error::NotConverged { best, .. }) => *best,
                Err(e) => panic!("{e}"),
            };
            total += rho.fidelity(&truth).unwrap();
        }
        means.push(total / seeds as f64);
    }
    println!("mean fidelity over 10^2..10^5 counts: {means:?}");
    assert!(means.windows(2).all(|w| w[1] >= w[0]), "{means:?}");
    assert!(means[3] > 0.999);
}
