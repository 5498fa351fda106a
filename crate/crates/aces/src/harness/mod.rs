//! Experiment orchestration.
//!
//! Runs seeded episodes of a chosen query strategy against the ball-throw
//! task, evaluates the trained affine policy offline on a fixed context grid,
//! and writes learning-curve, context-log, and summary CSVs. Runs are
//! embarrassingly parallel: every run derives its own RNG stream from the
//! master seed, so outputs are byte-identical for a given configuration
//! regardless of scheduling.

pub mod config;
pub mod plot;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use crate::acquisition::{
    self, build_context_cache, expected_loss_change, AcquisitionParams, CandidateCache,
};
use crate::environment::{self, Context, ThrowParams};
use crate::error::{Error, Result};
use crate::gp::{self, HyperBounds, KernelSpec, PosteriorGP};
use crate::optimizers::{cmaes_minimize, direct_maximize, local_refine, BoxBounds, CmaesConfig};
use crate::policy::{creps_weights, fit_policy, policy_act, RepsConfig};
use crate::stats;

const CSV_VERSION_HEADER: &str = "# aces-result v1";
/// Hyperparameters are re-optimized every this many new trials once the
/// dataset holds at least as many.
const HYPEROPT_INTERVAL: usize = 10;

/// Query selection strategy for one experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// Uniform-random context and parameters.
    Random,
    /// Random context; parameters maximize GP-UCB.
    Ucb,
    /// Random context; parameters minimize the expected entropy-loss change
    /// in that context only.
    Es,
    /// Joint context-parameter selection by the nearest-neighbor-summed
    /// information objective.
    Aces { n_nn: usize },
}

impl Strategy {
    pub fn parse(name: &str, n_nn: usize) -> Result<Self> {
        match name {
            "random" => Ok(Self::Random),
            "ucb" => Ok(Self::Ucb),
            "es" => Ok(Self::Es),
            "aces" => {
                if n_nn == 0 {
                    Err(Error::Config("aces requires --nnn >= 1".into()))
                } else {
                    Ok(Self::Aces { n_nn })
                }
            }
            other => Err(Error::Config(format!("unknown strategy '{other}'"))),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Self::Random => "random".into(),
            Self::Ucb => "ucb".into(),
            Self::Es => "es".into(),
            Self::Aces { n_nn } => format!("aces{n_nn:02}"),
        }
    }
}

/// One executed rollout.
#[derive(Debug, Clone)]
pub struct TrialRecord {
    pub episode: usize,
    pub context: Context,
    pub params: ThrowParams,
    pub observed_return: f64,
}

/// Full experiment configuration.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub strategy: Strategy,
    pub episodes: usize,
    pub runs: usize,
    pub eval_interval: usize,
    pub test_grid: Vec<Context>,
    pub seed: u64,
    pub acquisition: AcquisitionParams,
    pub reps: RepsConfig,
    pub noise_std: f64,
    pub output_dir: PathBuf,
    /// Acquisition-optimizer budgets (evaluations per episode).
    pub cmaes_budget: usize,
    pub cmaes_restarts: usize,
    pub direct_budget: usize,
}

impl ExperimentConfig {
    pub fn new(strategy: Strategy, output_dir: PathBuf) -> Self {
        let mut acquisition = AcquisitionParams::default();
        if let Strategy::Aces { n_nn } = strategy {
            acquisition.n_nn = n_nn;
        }
        Self {
            strategy,
            episodes: 150,
            runs: 20,
            eval_interval: 10,
            test_grid: default_test_grid(),
            seed: 0,
            acquisition,
            reps: RepsConfig::default(),
            noise_std: 0.0,
            output_dir,
            cmaes_budget: 300,
            cmaes_restarts: 2,
            direct_budget: 300,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 || self.runs == 0 || self.eval_interval == 0 {
            return Err(Error::Config(
                "episodes, runs, and eval-interval must be >= 1".into(),
            ));
        }
        if self.noise_std < 0.0 || !self.noise_std.is_finite() {
            return Err(Error::Config("noise-std must be finite and >= 0".into()));
        }
        if self.test_grid.is_empty() {
            return Err(Error::Config("test grid must be non-empty".into()));
        }
        self.acquisition.validate()
    }
}

/// 4x4 evaluation grid: per dimension the fractions 1/8, 3/8, 5/8, 7/8 of the
/// context box.
pub fn default_test_grid() -> Vec<Context> {
    let (x_lo, x_hi) = environment::CONTEXT_X_RANGE;
    let (y_lo, y_hi) = environment::CONTEXT_Y_RANGE;
    let mut grid = Vec::with_capacity(16);
    for i in 0..4 {
        let fx = (2 * i + 1) as f64 / 8.0;
        for j in 0..4 {
            let fy = (2 * j + 1) as f64 / 8.0;
            grid.push(Context {
                x: x_lo + fx * (x_hi - x_lo),
                y: y_lo + fy * (y_hi - y_lo),
            });
        }
    }
    grid
}

/// Offline evaluation of the policy trained on `history`.
#[derive(Debug, Clone)]
pub struct OfflineEval {
    pub mean_performance: f64,
    /// Per-grid-context regret against the brute-force optimum.
    pub regrets: Vec<f64>,
}

/// Trains the affine policy on the full history and scores it on the test
/// grid at zero noise. Returns `None` when the history is too short to fit.
pub fn offline_evaluate(
    history: &[TrialRecord],
    reps: &RepsConfig,
    test_grid: &[Context],
    oracle: &[(f64, ThrowParams)],
) -> Option<OfflineEval> {
    let d_s = 2;
    if history.len() < d_s + 2 {
        return None;
    }
    let contexts: Vec<DVector<f64>> = history
        .iter()
        .map(|r| DVector::from_column_slice(&r.context.as_array()))
        .collect();
    let thetas: Vec<DVector<f64>> = history
        .iter()
        .map(|r| DVector::from_column_slice(&r.params.as_array()))
        .collect();
    let returns = DVector::from_iterator(history.len(), history.iter().map(|r| r.observed_return));

    let weights = creps_weights(&contexts, &returns, reps).ok()?;
    let policy = fit_policy(&contexts, &thetas, &weights.weights).ok()?;

    let bounds = environment::param_bounds();
    let mut total = 0.0;
    let mut regrets = Vec::with_capacity(test_grid.len());
    for (ctx, (r_opt, _)) in test_grid.iter().zip(oracle) {
        let s = DVector::from_column_slice(&ctx.as_array());
        let theta = policy_act(&policy, &s, &bounds);
        let r = environment::reward_clipped(ctx, theta[0], theta[1]);
        total += r;
        regrets.push(r_opt - r);
    }
    Some(OfflineEval {
        mean_performance: total / test_grid.len() as f64,
        regrets,
    })
}

/// Mutable state of one run.
pub struct RunState {
    gp: PosteriorGP,
    spec: KernelSpec,
    history: Vec<TrialRecord>,
    rng: ChaCha12Rng,
    ranges: Vec<f64>,
}

impl RunState {
    pub fn new(seed: u64) -> Self {
        let ranges: Vec<f64> = environment::joint_bounds()
            .widths()
            .iter()
            .copied()
            .collect();
        let spec = gp::default_spec(&ranges, &DVector::zeros(0));
        Self {
            gp: PosteriorGP::prior(spec.clone()),
            spec,
            history: Vec::new(),
            rng: ChaCha12Rng::seed_from_u64(seed),
            ranges,
        }
    }

    fn targets(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.history.len(),
            self.history.iter().map(|r| r.observed_return),
        )
    }

    fn joint_inputs(&self) -> Vec<DVector<f64>> {
        self.history
            .iter()
            .map(|r| DVector::from_vec(vec![r.context.x, r.context.y, r.params.tau, r.params.g0]))
            .collect()
    }
}

/// Runs one episode: selects a query per the strategy, executes the throw,
/// appends the record, and refits the surrogate (re-optimizing kernel
/// hyperparameters on schedule).
pub fn run_episode(state: &mut RunState, config: &ExperimentConfig) -> Result<TrialRecord> {
    let (context, params) = select_query(state, config);
    let outcome = environment::reward(&context, &params, config.noise_std, &mut state.rng)?;
    let record = TrialRecord {
        episode: state.history.len(),
        context,
        params,
        observed_return: outcome.reward,
    };
    state.history.push(record.clone());
    refit(state)?;
    Ok(record)
}

fn select_query(state: &mut RunState, config: &ExperimentConfig) -> (Context, ThrowParams) {
    let context_box = environment::context_bounds();
    let theta_box = environment::param_bounds();

    let selection = match config.strategy {
        Strategy::Random => {
            let s = context_box.sample_uniform(&mut state.rng);
            let t = theta_box.sample_uniform(&mut state.rng);
            Some((s, t))
        }
        Strategy::Ucb => {
            let s = context_box.sample_uniform(&mut state.rng);
            let kappa = config.acquisition.kappa;
            let gp = &state.gp;
            let objective = |t: &[f64]| acquisition::ucb(gp, s.as_slice(), t, kappa);
            let coarse = direct_maximize(objective, &theta_box, config.direct_budget);
            let t = local_refine(objective, coarse.as_slice(), &theta_box);
            Some((s, t))
        }
        Strategy::Es => {
            let s = context_box.sample_uniform(&mut state.rng);
            es_select(state, config, &theta_box, s.as_slice()).map(|t| (s, t))
        }
        Strategy::Aces { n_nn } => aces_select(state, config, &theta_box, &context_box, n_nn),
    };

    match selection {
        Some((s, t)) => {
            let s = context_box.clip(s.as_slice());
            let t = theta_box.clip(t.as_slice());
            (
                Context { x: s[0], y: s[1] },
                ThrowParams {
                    tau: t[0],
                    g0: t[1],
                },
            )
        }
        None => {
            // Optimizer failure: uniform-random fallback.
            eprintln!(
                "[{}] episode {}: acquisition failed, falling back to uniform selection",
                config.strategy.label(),
                state.history.len()
            );
            let s = context_box.sample_uniform(&mut state.rng);
            let t = theta_box.sample_uniform(&mut state.rng);
            (
                Context { x: s[0], y: s[1] },
                ThrowParams {
                    tau: t[0],
                    g0: t[1],
                },
            )
        }
    }
}

/// Parameter selection by entropy reduction in the announced context.
fn es_select(
    state: &mut RunState,
    config: &ExperimentConfig,
    theta_box: &BoxBounds,
    s: &[f64],
) -> Option<DVector<f64>> {
    let cache =
        build_context_cache(&state.gp, s, &config.acquisition, theta_box, &mut state.rng).ok()?;

    let budget = (config.cmaes_budget / config.cmaes_restarts.max(1)).max(1);
    let mut best: Option<(DVector<f64>, f64)> = None;
    for restart in 0..config.cmaes_restarts.max(1) {
        let seed = state.rng.random::<u64>();
        let start = if restart == 0 {
            None
        } else {
            Some(theta_box.sample_uniform(&mut state.rng).as_slice().to_vec())
        };
        let mut cfg = CmaesConfig::for_dim(theta_box.dim(), budget, seed).sigma_for(theta_box);
        cfg.start = start;
        let gp = &state.gp;
        let rng = &mut state.rng;
        let acq = &config.acquisition;
        let (x, f) = cmaes_minimize(
            |t: &[f64]| expected_loss_change(gp, &cache, s, t, acq, rng),
            theta_box,
            &cfg,
        );
        if f.is_finite() && best.as_ref().is_none_or(|(_, bf)| f < *bf) {
            best = Some((x, f));
        }
    }
    best.map(|(x, _)| x)
}

/// Joint context-parameter selection by the summed information objective.
fn aces_select(
    state: &mut RunState,
    config: &ExperimentConfig,
    theta_box: &BoxBounds,
    context_box: &BoxBounds,
    n_nn: usize,
) -> Option<(DVector<f64>, DVector<f64>)> {
    let joint_box = environment::joint_bounds();
    let d_s = context_box.dim();
    let mut params = config.acquisition.clone();
    params.n_nn = n_nn;

    let mut cache = CandidateCache::sample_pool(context_box, params.n_context_pool, &mut state.rng);

    let budget = (config.cmaes_budget / config.cmaes_restarts.max(1)).max(1);
    let mut best: Option<(DVector<f64>, f64)> = None;
    for restart in 0..config.cmaes_restarts.max(1) {
        let seed = state.rng.random::<u64>();
        let start = if restart == 0 {
            None
        } else {
            Some(joint_box.sample_uniform(&mut state.rng).as_slice().to_vec())
        };
        let mut cfg = CmaesConfig::for_dim(joint_box.dim(), budget, seed).sigma_for(&joint_box);
        cfg.start = start;
        let gp = &state.gp;
        let rng = &mut state.rng;
        let cache_ref = &mut cache;
        let (x, f) = cmaes_minimize(
            |q: &[f64]| {
                acquisition::aces(gp, &q[..d_s], &q[d_s..], &params, cache_ref, theta_box, rng)
            },
            &joint_box,
            &cfg,
        );
        if f.is_finite() && best.as_ref().is_none_or(|(_, bf)| f < *bf) {
            best = Some((x, f));
        }
    }
    best.map(|(x, _)| {
        (
            DVector::from_column_slice(&x.as_slice()[..d_s]),
            DVector::from_column_slice(&x.as_slice()[d_s..]),
        )
    })
}

fn refit(state: &mut RunState) -> Result<()> {
    let n = state.history.len();
    let y = state.targets();
    if n < HYPEROPT_INTERVAL {
        state.spec = gp::default_spec(&state.ranges, &y);
    } else if n.is_multiple_of(HYPEROPT_INTERVAL) {
        let xs = state.joint_inputs();
        let (spec, fallback) = gp::optimize_hyperparameters(
            &xs,
            &y,
            &state.ranges,
            &HyperBounds::default(),
            Some(&state.spec),
            &mut state.rng,
        );
        if fallback {
            eprintln!("hyperparameter search failed at n={n}; keeping defaults");
        }
        state.spec = spec;
    }
    state.gp = PosteriorGP::fit(state.joint_inputs(), y, state.spec.clone())?;
    Ok(())
}

/// One run's records plus its offline-evaluation trace.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub run: usize,
    pub records: Vec<TrialRecord>,
    pub evals: Vec<(usize, Option<OfflineEval>)>,
}

/// Per-eval-episode aggregate over runs.
#[derive(Debug, Clone)]
pub struct SummaryRow {
    pub episode: usize,
    pub mean: f64,
    pub stderr: f64,
    pub runs: usize,
}

/// Everything an experiment produced, mirrored into the output CSVs.
#[derive(Debug)]
pub struct ExperimentOutput {
    pub runs: Vec<RunResult>,
    pub summary: Vec<SummaryRow>,
}

/// Executes one full run sequentially.
pub fn run_single(
    config: &ExperimentConfig,
    run_idx: usize,
    oracle: &[(f64, ThrowParams)],
) -> Result<RunResult> {
    let mut state = RunState::new(stats::run_stream_seed(config.seed, run_idx as u64));
    let mut evals = Vec::new();
    for episode in 1..=config.episodes {
        run_episode(&mut state, config)?;
        if episode % config.eval_interval == 0 {
            let eval = offline_evaluate(&state.history, &config.reps, &config.test_grid, oracle);
            evals.push((episode, eval));
        }
    }
    Ok(RunResult {
        run: run_idx,
        records: state.history,
        evals,
    })
}

/// Runs the configured experiment and writes `learning_curve.csv`,
/// `context_log.csv`, and `summary.csv` into the output directory.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;

    // Fail on an unwritable output directory before any computation.
    std::fs::create_dir_all(&config.output_dir)?;
    let mut curve_file =
        BufWriter::new(File::create(config.output_dir.join("learning_curve.csv"))?);
    let mut log_file = BufWriter::new(File::create(config.output_dir.join("context_log.csv"))?);
    let mut summary_file = BufWriter::new(File::create(config.output_dir.join("summary.csv"))?);

    writeln!(curve_file, "{CSV_VERSION_HEADER}")?;
    let regret_cols: Vec<String> = (0..config.test_grid.len())
        .map(|i| format!("regret_c{i:02}"))
        .collect();
    writeln!(
        curve_file,
        "run,episode,mean_offline_performance,{}",
        regret_cols.join(",")
    )?;
    writeln!(log_file, "{CSV_VERSION_HEADER}")?;
    writeln!(
        log_file,
        "run,episode,context_x,context_y,tau,g0,observed_return"
    )?;
    writeln!(summary_file, "{CSV_VERSION_HEADER}")?;
    writeln!(summary_file, "episode,mean_offline_performance,stderr,runs")?;

    let oracle: Vec<(f64, ThrowParams)> = config
        .test_grid
        .iter()
        .map(environment::optimal_reward)
        .collect();

    let results: Vec<Result<RunResult>> = (0..config.runs)
        .into_par_iter()
        .map(|k| {
            let out = run_single(config, k, &oracle);
            eprintln!(
                "[{}] run {}/{} finished",
                config.strategy.label(),
                k + 1,
                config.runs
            );
            out
        })
        .collect();
    let mut runs = Vec::with_capacity(config.runs);
    for r in results {
        runs.push(r?);
    }

    for run in &runs {
        for (episode, eval) in &run.evals {
            match eval {
                Some(e) => {
                    let regrets: Vec<String> = e.regrets.iter().map(|r| format!("{r}")).collect();
                    writeln!(
                        curve_file,
                        "{},{},{},{}",
                        run.run,
                        episode,
                        e.mean_performance,
                        regrets.join(",")
                    )?;
                }
                None => {
                    let nans = vec!["nan"; config.test_grid.len()];
                    writeln!(curve_file, "{},{},nan,{}", run.run, episode, nans.join(","))?;
                }
            }
        }
        for rec in &run.records {
            writeln!(
                log_file,
                "{},{},{},{},{},{},{}",
                run.run,
                rec.episode,
                rec.context.x,
                rec.context.y,
                rec.params.tau,
                rec.params.g0,
                rec.observed_return
            )?;
        }
    }

    let mut summary = Vec::new();
    let eval_episodes: Vec<usize> = runs
        .first()
        .map(|r| r.evals.iter().map(|(e, _)| *e).collect())
        .unwrap_or_default();
    for (i, episode) in eval_episodes.iter().enumerate() {
        let values: Vec<f64> = runs
            .iter()
            .filter_map(|r| r.evals.get(i).and_then(|(_, e)| e.as_ref()))
            .map(|e| e.mean_performance)
            .collect();
        let row = SummaryRow {
            episode: *episode,
            mean: stats::mean(&values),
            stderr: stats::standard_error(&values),
            runs: values.len(),
        };
        writeln!(
            summary_file,
            "{},{},{},{}",
            row.episode, row.mean, row.stderr, row.runs
        )?;
        summary.push(row);
    }

    curve_file.flush()?;
    log_file.flush()?;
    summary_file.flush()?;

    Ok(ExperimentOutput { runs, summary })
}

/// Fraction of selected contexts lying within `margin` (as a fraction of each
/// dimension's range) of the context-box boundary.
pub fn boundary_fraction(records: &[TrialRecord], margin: f64) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    let (x_lo, x_hi) = environment::CONTEXT_X_RANGE;
    let (y_lo, y_hi) = environment::CONTEXT_Y_RANGE;
    let x_band = margin * (x_hi - x_lo);
    let y_band = margin * (y_hi - y_lo);
    let count = records
        .iter()
        .filter(|r| {
            r.context.x - x_lo < x_band
                || x_hi - r.context.x < x_band
                || r.context.y - y_lo < y_band
                || y_hi - r.context.y < y_band
        })
        .count();
    count as f64 / records.len() as f64
}

/// Writes the ground-truth optimum table on an `n x n` context grid.
pub fn write_oracle_table(n: usize, path: &std::path::Path) -> Result<()> {
    let mut file = BufWriter::new(File::create(path)?);
    writeln!(file, "{CSV_VERSION_HEADER}")?;
    writeln!(file, "context_x,context_y,optimal_reward,tau_opt,g0_opt")?;
    let (x_lo, x_hi) = environment::CONTEXT_X_RANGE;
    let (y_lo, y_hi) = environment::CONTEXT_Y_RANGE;
    let coord = |lo: f64, hi: f64, i: usize| {
        if n == 1 {
            0.5 * (lo + hi)
        } else {
            lo + (hi - lo) * i as f64 / (n - 1) as f64
        }
    };
    for i in 0..n {
        let x = coord(x_lo, x_hi, i);
        for j in 0..n {
            let y = coord(y_lo, y_hi, j);
            let ctx = Context { x, y };
            let (r_opt, theta) = environment::optimal_reward(&ctx);
            writeln!(file, "{x},{y},{r_opt},{},{}", theta.tau, theta.g0)?;
        }
    }
    file.flush()?;
    Ok(())
}
