//! (mu/mu_w, lambda)-CMA-ES with weighted recombination, cumulative step-size
//! adaptation, and rank-1 plus rank-mu covariance updates.
//!
//! Bounds are handled by clipping sampled points onto the box before
//! evaluation; the clipped points also drive the distribution update so the
//! mean can settle on a boundary optimum instead of stalling. Non-finite
//! objective values are treated as +inf. Sampling is driven entirely by
//! `config.seed`, so a run is reproducible given (seed, objective).

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use super::BoxBounds;

#[derive(Debug, Clone)]
pub struct CmaesConfig {
    /// Offspring per generation; must be at least 4.
    pub population_size: usize,
    pub initial_sigma: f64,
    pub max_evaluations: usize,
    pub seed: u64,
    /// Search start; defaults to the box center.
    pub start: Option<Vec<f64>>,
}

impl CmaesConfig {
    /// Defaults for dimension `dim`: lambda = 4 + floor(3 ln d), sigma = 0.3
    /// times the mean box width (set once bounds are known via
    /// [`CmaesConfig::sigma_for`]).
    pub fn for_dim(dim: usize, max_evaluations: usize, seed: u64) -> Self {
        let lambda = (4.0 + 3.0 * (dim as f64).ln()).floor() as usize;
        Self {
            population_size: lambda.max(4),
            initial_sigma: 0.0,
            max_evaluations,
            seed,
            start: None,
        }
    }

    pub fn sigma_for(mut self, bounds: &BoxBounds) -> Self {
        self.initial_sigma = 0.3 * bounds.widths().mean();
        self
    }
}

/// Minimizes `objective` over `bounds`; returns the best point ever evaluated
/// and its value.
pub fn cmaes_minimize<F>(
    mut objective: F,
    bounds: &BoxBounds,
    config: &CmaesConfig,
) -> (DVector<f64>, f64)
where
    F: FnMut(&[f64]) -> f64,
{
    let dim = bounds.dim();
    let lambda = config.population_size.max(4);
    let mu = lambda / 2;
    assert!(config.initial_sigma > 0.0, "initial_sigma must be positive");

    // Log-linear recombination weights.
    let mut weights: Vec<f64> = (0..mu)
        .map(|i| ((lambda as f64 + 1.0) / 2.0).ln() - ((i + 1) as f64).ln())
        .collect();
    let wsum: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= wsum);
    let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();

    let n = dim as f64;
    let c_sigma = (mu_eff + 2.0) / (n + mu_eff + 5.0);
    let d_sigma = 1.0 + 2.0 * (((mu_eff - 1.0) / (n + 1.0)).sqrt() - 1.0).max(0.0) + c_sigma;
    let c_c = (4.0 + mu_eff / n) / (n + 4.0 + 2.0 * mu_eff / n);
    let c_1 = 2.0 / ((n + 1.3).powi(2) + mu_eff);
    let c_mu = (1.0 - c_1).min(2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((n + 2.0).powi(2) + mu_eff));
    let chi_n = n.sqrt() * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n));

    let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
    let mut mean = match &config.start {
        Some(x) => bounds.clip(x),
        None => bounds.center(),
    };
    let mut sigma = config.initial_sigma;
    let mut cov = DMatrix::<f64>::identity(dim, dim);
    let mut path_sigma = DVector::<f64>::zeros(dim);
    let mut path_c = DVector::<f64>::zeros(dim);
    let mut eigenvectors = DMatrix::<f64>::identity(dim, dim);
    let mut eigenvalues = DVector::<f64>::from_element(dim, 1.0);

    let mut best_x = bounds.clip(mean.as_slice());
    let mut best_f = sanitize(objective(best_x.as_slice()));
    let mut evals = 1usize;
    let mut generation = 0usize;

    while evals < config.max_evaluations {
        // Sample, clip, evaluate.
        let mut population: Vec<(DVector<f64>, f64)> = Vec::with_capacity(lambda);
        for _ in 0..lambda {
            if evals >= config.max_evaluations {
                break;
            }
            let z = DVector::from_iterator(dim, (0..dim).map(|_| StandardNormal.sample(&mut rng)));
            let y = &eigenvectors
                * eigenvalues
                    .map(f64::sqrt)
                    .component_mul(&(eigenvectors.transpose() * &z));
            let x = bounds.clip((&mean + y * sigma).as_slice());
            let f = sanitize(objective(x.as_slice()));
            evals += 1;
            if f < best_f {
                best_f = f;
                best_x = x.clone();
            }
            population.push((x, f));
        }
        if population.len() < 2 {
            break;
        }
        population.sort_by(|a, b| a.1.total_cmp(&b.1));
        let selected = population.len().min(mu).max(1);

        // Weighted recombination over the clipped steps.
        let mut y_w = DVector::<f64>::zeros(dim);
        for (i, (x, _)) in population.iter().take(selected).enumerate() {
            y_w += (x - &mean) * (weights[i] / sigma);
        }

        // C^{-1/2} y_w for the sigma path.
        let inv_sqrt = {
            let scaled = eigenvectors.transpose() * &y_w;
            let scaled = DVector::from_iterator(
                dim,
                scaled
                    .iter()
                    .enumerate()
                    .map(|(i, v)| v / eigenvalues[i].sqrt().max(1e-16)),
            );
            &eigenvectors * scaled
        };

        path_sigma =
            &path_sigma * (1.0 - c_sigma) + inv_sqrt * (c_sigma * (2.0 - c_sigma) * mu_eff).sqrt();
        let ps_norm = path_sigma.norm();
        let h_sigma =
            if ps_norm / (1.0 - (1.0 - c_sigma).powi(2 * (generation as i32 + 1))).sqrt() / chi_n
                < 1.4 + 2.0 / (n + 1.0)
            {
                1.0
            } else {
                0.0
            };

        path_c = &path_c * (1.0 - c_c) + &y_w * (h_sigma * (c_c * (2.0 - c_c) * mu_eff).sqrt());

        let delta_h = (1.0 - h_sigma) * c_c * (2.0 - c_c);
        cov *= 1.0 - c_1 - c_mu + c_1 * delta_h;
        cov.ger(c_1, &path_c, &path_c, 1.0);
        for (i, (x, _)) in population.iter().take(selected).enumerate() {
            let y_i = (x - &mean) / sigma;
            cov.ger(c_mu * weights[i], &y_i, &y_i, 1.0);
        }

        mean += &y_w * sigma;
        sigma *= ((c_sigma / d_sigma) * (ps_norm / chi_n - 1.0)).exp();
        generation += 1;

        // Re-decompose every generation: dimensions here are tiny.
        let sym = (&cov + cov.transpose()) * 0.5;
        let eig = nalgebra::SymmetricEigen::new(sym);
        let max_ev = eig.eigenvalues.iter().cloned().fold(f64::MIN, f64::max);
        eigenvalues = eig.eigenvalues.map(|v| v.max(1e-14 * max_ev.max(1e-14)));
        eigenvectors = eig.eigenvectors;

        if sigma < 1e-16 || sigma * max_ev.sqrt() < 1e-16 || !sigma.is_finite() {
            break;
        }
    }

    (best_x, best_f)
}

fn sanitize(f: f64) -> f64 {
    if f.is_finite() {
        f
    } else {
        f64::INFINITY
    }
}
