//! Python bindings for the main types and operations of the `aces` crate:
//! the ball-throw environment, the GP surrogate, acquisition helpers, the
//! CMA-ES optimizer, and the experiment runner.

use nalgebra::DVector;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use aces::acquisition;
use aces::environment::{self, Context, ThrowParams};
use aces::gp::{KernelSpec, PosteriorGP};
use aces::harness::{self, ExperimentConfig, Strategy};
use aces::optimizers::{self, BoxBounds, CmaesConfig};

fn to_py_err(err: aces::Error) -> PyErr {
    PyValueError::new_err(err.to_string())
}

fn vectors(points: Vec<Vec<f64>>) -> Vec<DVector<f64>> {
    points.into_iter().map(DVector::from_vec).collect()
}

/// Gaussian process over joint (context, parameter) points with a Matern-5/2
/// kernel.
#[pyclass]
struct Gp {
    inner: PosteriorGP,
}

#[pymethods]
impl Gp {
    /// Fits a GP on row vectors `xs` with targets `y`.
    #[new]
    fn new(
        xs: Vec<Vec<f64>>,
        y: Vec<f64>,
        signal_variance: f64,
        length_scales: Vec<f64>,
        noise_variance: f64,
    ) -> PyResult<Self> {
        let spec = KernelSpec::new(signal_variance, length_scales, noise_variance);
        let inner = if xs.is_empty() {
            PosteriorGP::prior(spec)
        } else {
            PosteriorGP::fit(vectors(xs), DVector::from_vec(y), spec).map_err(to_py_err)?
        };
        Ok(Self { inner })
    }

    /// Predictive mean and standard deviation at `x`.
    fn predict(&self, x: Vec<f64>) -> (f64, f64) {
        self.inner.predict(&x)
    }

    /// Draws from the joint posterior at `points`; returns one row per draw.
    fn sample(
        &self,
        points: Vec<Vec<f64>>,
        n_samples: usize,
        seed: u64,
    ) -> PyResult<Vec<Vec<f64>>> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let draws = self
            .inner
            .sample_posterior(&vectors(points), n_samples, &mut rng)
            .map_err(to_py_err)?;
        Ok((0..draws.nrows())
            .map(|r| draws.row(r).iter().copied().collect())
            .collect())
    }

    /// Posterior after assuming observation `y` at `x` (rank-1 update).
    fn fantasize(&self, x: Vec<f64>, y: f64) -> PyResult<Gp> {
        Ok(Gp {
            inner: self.inner.fantasize(&x, y).map_err(to_py_err)?,
        })
    }

    fn log_marginal_likelihood(&self) -> f64 {
        self.inner.log_marginal_likelihood()
    }

    /// GP-UCB acquisition value at a (context, parameters) pair.
    fn ucb(&self, context: Vec<f64>, params: Vec<f64>, kappa: f64) -> f64 {
        acquisition::ucb(&self.inner, &context, &params, kappa)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// Landing point of a throw with execution time `tau` and angle `g0`.
#[pyfunction]
fn simulate_throw(tau: f64, g0: f64) -> PyResult<(f64, f64)> {
    let params = ThrowParams::new(tau, g0).map_err(to_py_err)?;
    let landing = environment::simulate_throw(&params).map_err(to_py_err)?;
    Ok((landing[0], landing[1]))
}

/// Executes a throw against target `(sx, sy)`; returns
/// `(reward, distance_cost, velocity_penalty)`.
#[pyfunction]
#[pyo3(signature = (sx, sy, tau, g0, noise_std = 0.0, seed = 0))]
fn reward(
    sx: f64,
    sy: f64,
    tau: f64,
    g0: f64,
    noise_std: f64,
    seed: u64,
) -> PyResult<(f64, f64, f64)> {
    let context = Context::new(sx, sy).map_err(to_py_err)?;
    let params = ThrowParams::new(tau, g0).map_err(to_py_err)?;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let out = environment::reward(&context, &params, noise_std, &mut rng).map_err(to_py_err)?;
    Ok((out.reward, out.distance_cost, out.velocity_penalty))
}

/// Ground-truth best reward for a target; returns `(r_opt, tau_opt, g0_opt)`.
#[pyfunction]
fn optimal_reward(sx: f64, sy: f64) -> PyResult<(f64, f64, f64)> {
    let context = Context::new(sx, sy).map_err(to_py_err)?;
    let (r, theta) = environment::optimal_reward(&context);
    Ok((r, theta.tau, theta.g0))
}

/// Negative relative entropy of a p_max vector against uniform.
#[pyfunction]
fn entropy_loss(pmax: Vec<f64>) -> f64 {
    acquisition::entropy_loss(&pmax)
}

/// Context distance under per-dimension length scales.
#[pyfunction]
fn mahalanobis(s1: Vec<f64>, s2: Vec<f64>, length_scales: Vec<f64>) -> f64 {
    acquisition::mahalanobis(&s1, &s2, &length_scales)
}

/// Minimizes a Python callable over a box; returns `(x_best, f_best)`.
#[pyfunction]
#[pyo3(signature = (objective, lower, upper, max_evaluations = 2000, seed = 0))]
fn cmaes_minimize(
    objective: Bound<'_, PyAny>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    max_evaluations: usize,
    seed: u64,
) -> PyResult<(Vec<f64>, f64)> {
    if lower.len() != upper.len() || lower.is_empty() {
        return Err(PyValueError::new_err(
            "lower and upper must match and be non-empty",
        ));
    }
    let bounds = BoxBounds::new(lower, upper);
    let config = CmaesConfig::for_dim(bounds.dim(), max_evaluations, seed).sigma_for(&bounds);
    let mut failure: Option<PyErr> = None;
    let (x, f) = optimizers::cmaes_minimize(
        |x: &[f64]| match objective
            .call1((x.to_vec(),))
            .and_then(|v| v.extract::<f64>())
        {
            Ok(v) => v,
            Err(err) => {
                if failure.is_none() {
                    failure = Some(err);
                }
                f64::INFINITY
            }
        },
        &bounds,
        &config,
    );
    if let Some(err) = failure {
        return Err(err);
    }
    Ok((x.as_slice().to_vec(), f))
}

/// Runs a full experiment and writes the CSV outputs; returns the final mean
/// offline performance.
#[pyfunction]
#[pyo3(signature = (strategy, out_dir, nnn = 20, episodes = 150, runs = 20, seed = 0, eval_interval = 10, noise_std = 0.0))]
#[allow(clippy::too_many_arguments)]
fn run_experiment(
    strategy: &str,
    out_dir: &str,
    nnn: usize,
    episodes: usize,
    runs: usize,
    seed: u64,
    eval_interval: usize,
    noise_std: f64,
) -> PyResult<f64> {
    let strategy = Strategy::parse(strategy, nnn).map_err(to_py_err)?;
    let mut config = ExperimentConfig::new(strategy, out_dir.into());
    config.episodes = episodes;
    config.runs = runs;
    config.seed = seed;
    config.eval_interval = eval_interval;
    config.noise_std = noise_std;
    let output = harness::run_experiment(&config).map_err(to_py_err)?;
    output
        .summary
        .last()
        .map(|row| row.mean)
        .ok_or_else(|| PyRuntimeError::new_err("experiment produced no evaluation points"))
}

#[pymodule]
fn aces_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Gp>()?;
    m.add_function(wrap_pyfunction!(simulate_throw, m)?)?;
    m.add_function(wrap_pyfunction!(reward, m)?)?;
    m.add_function(wrap_pyfunction!(optimal_reward, m)?)?;
    m.add_function(wrap_pyfunction!(entropy_loss, m)?)?;
    m.add_function(wrap_pyfunction!(mahalanobis, m)?)?;
    m.add_function(wrap_pyfunction!(cmaes_minimize, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
