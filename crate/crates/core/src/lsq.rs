//! Damped Gauss-Newton (Levenberg-Marquardt) for small dense problems.
//!
//! Shared by the tomography estimator and the interferometer calibration.
//! The objective is the plain sum of squared residuals.

use nalgebra::{DMatrix, DVector};

pub trait LeastSquares {
    fn n_params(&self) -> usize;
    fn n_residuals(&self) -> usize;
    fn residuals(&self, x: &DVector<f64>, out: &mut DVector<f64>);

    /// Defaults to central differences.
    fn jacobian(&self, x: &DVector<f64>, out: &mut DMatrix<f64>) {
        let m = self.n_residuals();
        let mut plus = DVector::zeros(m);
        let mut minus = DVector::zeros(m);
        let mut xp = x.clone();
        for k in 0..self.n_params() {
            let h = 1e-6 * x[k].abs().max(1.0);
            xp[k] = x[k] + h;
            self.residuals(&xp, &mut plus);
            xp[k] = x[k] - h;
            self.residuals(&xp, &mut minus);
            xp[k] = x[k];
            out.set_column(k, &((&plus - &minus) / (2.0 * h)));
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Stop once an accepted step lowers the objective by less than this
    /// fraction of its previous value.
    pub objective_tol: f64,
    /// Stop once `‖Jᵀr‖∞` falls below this.
    pub gradient_tol: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions {
            max_iterations: 10_000,
            objective_tol: 1e-12,
            gradient_tol: 1e-15,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LmReport {
    pub x: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub fn levenberg_marquardt<P: LeastSquares + ?Sized>(
    problem: &P,
    x0: DVector<f64>,
    options: &LmOptions,
) -> LmReport {
    let n = problem.n_params();
    let m = problem.n_residuals();
    let mut x = x0;
    let mut r = DVector::zeros(m);
    let mut r_trial = DVector::zeros(m);
    let mut jac = DMatrix::zeros(m, n);

    problem.residuals(&x, &mut r);
    let mut f = r.norm_squared();
    problem.jacobian(&x, &mut jac);
    let mut jtj = jac.transpose() * &jac;
    let mut grad = jac.transpose() * &r;

    let mut lambda = 1e-3 * jtj.diagonal().max().max(1e-12);
    let mut nu = 2.0;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < options.max_iterations {
        iterations += 1;
        if grad.amax() < options.gradient_tol || f == 0.0 {
            converged = true;
            break;
        }
        let mut a = jtj.clone();
        for k in 0..n {
            a[(k, k)] += lambda;
        }
        let step = match a.cholesky() {
            Some(ch) => ch.solve(&(-&grad)),
            None => {
                lambda *= nu;
                nu *= 2.0;
                continue;
            }
        };
        let trial = &x + &step;
        problem.residuals(&trial, &mut r_trial);
        let f_trial = r_trial.norm_squared();
        // predicted reduction of the quadratic model
        let predicted = step.dot(&(lambda * &step - &grad));
        let gain = if predicted > 0.0 {
            (f - f_trial) / predicted
        } else {
            -1.0
        };

        if gain > 0.0 && f_trial.is_finite() {
            let decrease = (f - f_trial) / f;
            x = trial;
            std::mem::swap(&mut r, &mut r_trial);
            f = f_trial;
            problem.jacobian(&x, &mut jac);
            jtj = jac.transpose() * &jac;
            grad = jac.transpose() * &r;
            lambda *= (1.0 - (2.0 * gain - 1.0).powi(3)).max(1.0 / 3.0);
            nu = 2.0;
            if decrease < options.objective_tol {
                converged = true;
                break;
            }
        } else {
            lambda *= nu;
            nu *= 2.0;
            if !lambda.is_finite() || lambda > 1e30 {
                // no descent direction left at working precision
                converged = true;
                break;
            }
        }
    }

    LmReport {
        x,
        objective: f,
        iterations,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Rosenbrock;

    impl LeastSquares for Rosenbrock {
        fn n_params(&self) -> usize {
            2
        }
        fn n_residuals(&self) -> usize {
            2
        }
        fn residuals(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
            out[0] = 10.0 * (x[1] - x[0] * x[0]);
            out[1] = 1.0 - x[0];
        }
    }

    struct Exponential {
        t: Vec<f64>,
        y: Vec<f64>,
    }

    impl LeastSquares for Exponential {
        fn n_params(&self) -> usize {
            2
        }
        fn n_residuals(&self) -> usize {
            self.t.len()
        }
        fn residuals(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
            for (k, (t, y)) in self.t.iter().zip(&self.y).enumerate() {
                out[k] = x[0] * (-x[1] * t).exp() - y;
            }
        }
    }

    #[test]
    fn rosenbrock_minimum() {
        let report = levenberg_marquardt(
            &Rosenbrock,
            DVector::from_vec(vec![-1.2, 1.0]),
            &LmOptions::default(),
        );
        assert!(report.converged);
        assert!((report.x[0] - 1.0).abs() < 1e-6);
        assert!((report.x[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn exponential_decay_recovered() {
        let t: Vec<f64> = (0..20).map(|k| k as f64 * 0.25).collect();
        let y = t.iter().map(|t| 3.0 * (-0.7 * t).exp()).collect();
        let report = levenberg_marquardt(
            &Exponential { t, y },
            DVector::from_vec(vec![1.0, 0.1]),
            &LmOptions::default(),
        );
        assert!((report.x[0] - 3.0).abs() < 1e-6);
        assert!((report.x[1] - 0.7).abs() < 1e-6);
        assert!(report.objective < 1e-12);
    }
}
