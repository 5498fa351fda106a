//! Acceptance suite: one test per release criterion, each printing a
//! PASS/FAIL line (visible with `--nocapture`).
//!
//! The first two criteria run full experiments and dominate the wall time;
//! everything else is a property or oracle check that finishes in seconds.

use std::time::Instant;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use aces::acquisition::{entropy_loss, estimate_pmax, CandidateSet};
use aces::environment::{self, Context};
use aces::gp::{KernelSpec, PosteriorGP};
use aces::harness::{self, boundary_fraction, ExperimentConfig, Strategy};
use aces::optimizers::{cmaes_minimize, direct_maximize, BoxBounds, CmaesConfig};
use aces::policy::{creps_weights, fit_policy, RepsConfig};
use aces::stats::norm_cdf;

fn report(criterion: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("acceptance {criterion}: {verdict} - {detail}");
    assert!(pass, "criterion {criterion} failed: {detail}");
}

fn experiment(
    strategy: Strategy,
    episodes: usize,
    runs: usize,
    seed: u64,
    tag: &str,
) -> harness::ExperimentOutput {
    let dir = std::env::temp_dir().join(format!("aces-acceptance-{tag}"));
    let mut config = ExperimentConfig::new(strategy, dir);
    config.episodes = episodes;
    config.runs = runs;
    config.seed = seed;
    harness::run_experiment(&config).expect("experiment must complete")
}

/// Ordering of final offline performance: the joint information-based
/// strategy and the per-context entropy strategy both beat random context
/// selection with non-overlapping standard-error bands, and the joint
/// strategy is not worse than the per-context one beyond one standard error.
#[test]
fn criterion_1_ordering() {
    let started = Instant::now();
    let episodes = 150;
    let runs = 10;
    let random = experiment(Strategy::Random, episodes, runs, 101, "c1-random");
    let es = experiment(Strategy::Es, episodes, runs, 102, "c1-es");
    let aces = experiment(
        Strategy::Aces { n_nn: 20 },
        episodes,
        runs,
        103,
        "c1-aces20",
    );

    let last = |out: &harness::ExperimentOutput| {
        let row = out.summary.last().expect("summary has rows");
        (row.mean, row.stderr)
    };
    let (m_rand, se_rand) = last(&random);
    let (m_es, se_es) = last(&es);
    let (m_aces, se_aces) = last(&aces);

    let aces_beats_random = m_aces - se_aces > m_rand + se_rand;
    let es_beats_random = m_es - se_es > m_rand + se_rand;
    let aces_matches_es = m_aces >= m_es - se_es;
    report(
        "1 (ordering)",
        aces_beats_random && es_beats_random && aces_matches_es,
        &format!(
            "aces20 {m_aces:.4}+-{se_aces:.4}, es {m_es:.4}+-{se_es:.4}, random {m_rand:.4}+-{se_rand:.4} ({} runs x {} episodes, {:.0}s)",
            runs,
            episodes,
            started.elapsed().as_secs_f64()
        ),
    );
}

/// The joint strategy with a wide neighbor sum selects boundary contexts
/// less often than its single-neighbor variant.
#[test]
fn criterion_2_boundary_avoidance() {
    let started = Instant::now();
    let episodes = 100;
    let runs = 10;
    let aces01 = experiment(Strategy::Aces { n_nn: 1 }, episodes, runs, 201, "c2-aces01");
    let aces20 = experiment(
        Strategy::Aces { n_nn: 20 },
        episodes,
        runs,
        202,
        "c2-aces20",
    );

    let mean_fraction = |out: &harness::ExperimentOutput| {
        let fractions: Vec<f64> = out
            .runs
            .iter()
            .map(|r| boundary_fraction(&r.records, 0.1))
            .collect();
        fractions.iter().sum::<f64>() / fractions.len() as f64
    };
    let frac01 = mean_fraction(&aces01);
    let frac20 = mean_fraction(&aces20);
    report(
        "2 (boundary avoidance)",
        frac20 < frac01,
        &format!(
            "10% boundary-band fraction: aces20 {frac20:.3} vs aces01 {frac01:.3} ({:.0}s)",
            started.elapsed().as_secs_f64()
        ),
    );
}

/// Monte-Carlo p_max against the analytic two-candidate Gaussian comparison
/// computed from the same posterior.
#[test]
fn criterion_3_pmax_oracle() {
    let theta_box = BoxBounds::new(vec![-1.0, -1.0], vec![1.0, 1.0]);
    let mut worst: f64 = 0.0;
    for seed in 0..20u64 {
        let mut rng = ChaCha12Rng::seed_from_u64(300 + seed);
        let xs: Vec<DVector<f64>> = (0..5)
            .map(|_| DVector::from_iterator(4, (0..4).map(|_| rng.random_range(-1.0..1.0))))
            .collect();
        let y = DVector::from_iterator(5, (0..5).map(|_| rng.random_range(-1.0..1.0)));
        let gp = PosteriorGP::fit(xs, y, KernelSpec::new(1.0, vec![0.5; 4], 1e-4)).unwrap();

        let mut cand_rng = ChaCha12Rng::seed_from_u64(600 + seed);
        let set = CandidateSet {
            context: DVector::from_vec(vec![0.1, -0.2]),
            thetas: vec![
                theta_box.sample_uniform(&mut cand_rng),
                theta_box.sample_uniform(&mut cand_rng),
            ],
            pmax: None,
        };
        let (mu, cov) = gp.posterior_joint(&set.joint_points());
        let var_diff = cov[(0, 0)] + cov[(1, 1)] - 2.0 * cov[(0, 1)];
        let analytic = norm_cdf((mu[1] - mu[0]) / var_diff.sqrt());

        let mut mc_rng = ChaCha12Rng::seed_from_u64(9000 + seed);
        let est = estimate_pmax(&gp, &set, 1000, &mut mc_rng).unwrap();
        worst = worst.max((est.pmax.unwrap()[1] - analytic).abs());
    }
    report(
        "3 (p_max oracle)",
        worst < 0.03,
        &format!("worst |MC - analytic| over 20 seeds = {worst:.4} (tolerance 0.03)"),
    );
}

/// Fantasy updates agree with a full refit to 1e-8 in mean and std.
#[test]
fn criterion_4_fantasy_refit_equivalence() {
    let mut rng = ChaCha12Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let n = rng.random_range(2..=30);
        let spec = KernelSpec::new(
            rng.random_range(0.5..2.0),
            vec![rng.random_range(0.2..1.0), rng.random_range(0.2..1.0)],
            1e-6,
        );
        let xs: Vec<DVector<f64>> = (0..n)
            .map(|_| {
                DVector::from_vec(vec![
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                ])
            })
            .collect();
        let y = DVector::from_iterator(n, (0..n).map(|_| rng.random_range(-2.0..2.0)));
        let gp = PosteriorGP::fit(xs.clone(), y.clone(), spec.clone()).unwrap();

        let x_new = DVector::from_vec(vec![
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ]);
        let y_new = rng.random_range(-2.0..2.0);
        let fantasy = gp.fantasize(x_new.as_slice(), y_new).unwrap();

        let mut xs_full = xs;
        xs_full.push(x_new);
        let y_full = DVector::from_iterator(n + 1, y.iter().copied().chain([y_new]));
        let refit = PosteriorGP::fit(xs_full, y_full, spec).unwrap();

        for _ in 0..20 {
            let probe = [rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5)];
            let (m1, s1) = fantasy.predict(&probe);
            let (m2, s2) = refit.predict(&probe);
            worst = worst.max((m1 - m2).abs()).max((s1 - s2).abs());
        }
    }
    report(
        "4 (fantasy/refit equivalence)",
        worst < 1e-8,
        &format!("worst deviation over 50 datasets x 20 probes = {worst:.2e}"),
    );
}

/// Entropy-loss limits: exactly 0 for uniform, -ln(N) for a point mass.
#[test]
fn criterion_5_entropy_loss_limits() {
    let mut pass = true;
    let mut detail = String::new();
    for n in [2usize, 20, 100] {
        let uniform = vec![1.0 / n as f64; n];
        let mut point = vec![0.0; n];
        point[0] = 1.0;
        let at_uniform = entropy_loss(&uniform);
        let at_point = entropy_loss(&point);
        pass &= at_uniform == 0.0;
        pass &= (at_point + (n as f64).ln()).abs() < 1e-12;
        detail.push_str(&format!(
            "N={n}: uniform {at_uniform:.1e}, point {at_point:.6}; "
        ));
    }
    report("5 (entropy-loss limits)", pass, detail.trim_end());
}

/// Near-noiseless GPs interpolate their training targets to 1e-6.
#[test]
fn criterion_6_gp_interpolation() {
    let mut rng = ChaCha12Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(1..=20);
        let spec = KernelSpec::new(1.0, vec![rng.random_range(0.3..1.0); 2], 1e-12);
        // Space points apart to keep the Gram matrix well conditioned.
        let mut xs: Vec<DVector<f64>> = Vec::new();
        while xs.len() < n {
            let x = DVector::from_vec(vec![
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
            ]);
            if xs.iter().all(|p| (p - &x).norm() > 0.05) {
                xs.push(x);
            }
        }
        let y = DVector::from_iterator(n, (0..n).map(|_| rng.random_range(-2.0..2.0)));
        let gp = PosteriorGP::fit(xs.clone(), y.clone(), spec).unwrap();
        for (x, target) in xs.iter().zip(y.iter()) {
            let (mean, _) = gp.predict(x.as_slice());
            worst = worst.max((mean - target).abs());
        }
    }
    report(
        "6 (GP interpolation)",
        worst < 1e-6,
        &format!("worst |mean - y| over 100 datasets = {worst:.2e}"),
    );
}

/// Optimizer sanity: CMA-ES solves the sphere to 1e-8 within budget on every
/// seed, and the rectangle-division search matches a dense grid oracle.
#[test]
fn criterion_7_optimizer_sanity() {
    let bounds = BoxBounds::new(vec![-5.0, -5.0], vec![5.0, 5.0]);
    let mut worst_sphere: f64 = 0.0;
    for seed in 0..20 {
        let config = CmaesConfig::for_dim(2, 2000, seed).sigma_for(&bounds);
        let (_, f) = cmaes_minimize(|x: &[f64]| x.iter().map(|v| v * v).sum(), &bounds, &config);
        worst_sphere = worst_sphere.max(f);
    }

    let bumps = |x: &[f64]| {
        0.8 * (-((x[0] - 0.2).powi(2) + (x[1] - 0.3).powi(2)) / 0.05).exp()
            + (-((x[0] - 0.75).powi(2) + (x[1] - 0.7).powi(2)) / 0.03).exp()
    };
    let unit = BoxBounds::new(vec![0.0, 0.0], vec![1.0, 1.0]);
    let mut oracle = (vec![0.0, 0.0], f64::MIN);
    for i in 0..500 {
        for j in 0..500 {
            let x = [i as f64 / 499.0, j as f64 / 499.0];
            let v = bumps(&x);
            if v > oracle.1 {
                oracle = (x.to_vec(), v);
            }
        }
    }
    let found = direct_maximize(bumps, &unit, 1000);
    let distance = found
        .iter()
        .zip(&oracle.0)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let diag = 2.0f64.sqrt();

    report(
        "7 (optimizer sanity)",
        worst_sphere < 1e-8 && distance < 0.02 * diag,
        &format!(
            "sphere worst f = {worst_sphere:.2e} over 20 seeds; rectangle-search distance to grid argmax = {:.4} of diagonal",
            distance / diag
        ),
    );
}

/// Advantage weighting honors the KL trust region and the weighted fit
/// recovers an exact affine map.
#[test]
fn criterion_8_creps() {
    let config = RepsConfig::default();
    let mut worst_kl: f64 = 0.0;
    for seed in 0..50 {
        let mut rng = ChaCha12Rng::seed_from_u64(800 + seed);
        let n = rng.random_range(6..60);
        let contexts: Vec<DVector<f64>> = (0..n)
            .map(|_| {
                DVector::from_vec(vec![
                    rng.random_range(1.0..2.5),
                    rng.random_range(-1.0..1.0),
                ])
            })
            .collect();
        let returns = DVector::from_iterator(n, (0..n).map(|_| rng.random_range(-8.0..0.0)));
        let out = creps_weights(&contexts, &returns, &config).unwrap();
        let kl: f64 = out
            .weights
            .iter()
            .filter(|w| **w > 0.0)
            .map(|w| w * (w * n as f64).ln())
            .sum();
        worst_kl = worst_kl.max(kl);
    }

    let mut rng = ChaCha12Rng::seed_from_u64(888);
    let truth = nalgebra::DMatrix::from_row_slice(2, 3, &[0.7, -0.2, 0.9, -0.1, 0.5, 0.3]);
    let contexts: Vec<DVector<f64>> = (0..15)
        .map(|_| {
            DVector::from_vec(vec![
                rng.random_range(1.0..2.5),
                rng.random_range(-1.0..1.0),
            ])
        })
        .collect();
    let thetas: Vec<DVector<f64>> = contexts
        .iter()
        .map(|s| &truth * DVector::from_vec(vec![s[0], s[1], 1.0]))
        .collect();
    let weights = DVector::from_element(15, 1.0 / 15.0);
    let policy = fit_policy(&contexts, &thetas, &weights).unwrap();
    let worst_coeff = policy
        .weights
        .iter()
        .zip(truth.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);

    report(
        "8 (C-REPS)",
        worst_kl <= config.epsilon + 0.05 && worst_coeff < 1e-8,
        &format!(
            "worst KL = {worst_kl:.4} (bound {}), affine recovery error = {worst_coeff:.2e}",
            config.epsilon + 0.05
        ),
    );
}

/// Environment invariants: exact mirror symmetry and context-dependent best
/// rewards from the brute-force oracle.
#[test]
fn criterion_9_environment() {
    let mut rng = ChaCha12Rng::seed_from_u64(9);
    let mut mirror_exact = true;
    for _ in 0..200 {
        let x = rng.random_range(1.0..2.5);
        let y = rng.random_range(-1.0..1.0);
        let tau = rng.random_range(0.4..2.0);
        let g0 = rng.random_range(-1.5..1.5);
        let a = environment::reward_clipped(&Context { x, y }, tau, g0);
        let b = environment::reward_clipped(&Context { x, y: -y }, tau, -g0);
        mirror_exact &= a.to_bits() == b.to_bits();
    }
    let (near, _) = environment::optimal_reward(&Context { x: 1.0, y: 0.0 });
    let (far, _) = environment::optimal_reward(&Context { x: 2.5, y: 0.0 });
    report(
        "9 (environment invariants)",
        mirror_exact && near > far,
        &format!("mirror symmetry exact; optimal rewards near {near:.5} > far {far:.5}"),
    );
}

/// Two executions of the CLI `run` subcommand with an identical configuration
/// produce byte-identical CSV outputs.
#[test]
fn criterion_10_determinism() {
    let binary = env!("CARGO_BIN_EXE_aces");
    let config_path = std::env::temp_dir().join("aces-acceptance-c10.cfg");
    std::fs::write(
        &config_path,
        "strategy = es\nepisodes = 12\nruns = 2\nseed = 77\neval-interval = 6\n",
    )
    .unwrap();

    let run = |dir: &std::path::Path| {
        let status = std::process::Command::new(binary)
            .args([
                "run",
                "--config",
                config_path.to_str().unwrap(),
                "--out",
                dir.to_str().unwrap(),
            ])
            .stdout(std::process::Stdio::null())
            .stderr(std::process::Stdio::null())
            .status()
            .expect("CLI must start");
        assert!(status.success(), "CLI run failed");
    };

    let dir_a = std::env::temp_dir().join("aces-acceptance-c10-a");
    let dir_b = std::env::temp_dir().join("aces-acceptance-c10-b");
    run(&dir_a);
    run(&dir_b);

    let mut identical = true;
    for file in ["learning_curve.csv", "context_log.csv", "summary.csv"] {
        let a = std::fs::read(dir_a.join(file)).unwrap();
        let b = std::fs::read(dir_b.join(file)).unwrap();
        identical &= a == b;
    }
    report(
        "10 (determinism)",
        identical,
        "two CLI executions produced byte-identical CSVs",
    );
}
