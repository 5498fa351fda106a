//! Deterministic affine upper-level policy and its weighted
//! maximum-likelihood update.
//!
//! Trial returns are turned into exponential advantage weights by minimizing
//! the C-REPS dual under a KL trust region, and the policy matrix is then the
//! weighted least-squares fit of parameters against augmented contexts
//! `[s; 1]`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::optimizers::{local_refine, BoxBounds};

/// Parameter ridge relative to the Gram trace; keeps the normal equations
/// solvable and the fit invariant to uniform weight rescaling.
const RIDGE_FACTOR: f64 = 1e-8;
const DUAL_ALTERNATIONS: usize = 20;
const GOLDEN_STEPS: usize = 40;

/// Deterministic affine policy `theta = W [s; 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinePolicy {
    pub weights: DMatrix<f64>,
}

impl AffinePolicy {
    pub fn context_dim(&self) -> usize {
        self.weights.ncols() - 1
    }

    pub fn param_dim(&self) -> usize {
        self.weights.nrows()
    }
}

/// C-REPS configuration: KL bound and the temperature search interval as
/// multiples of the return standard deviation.
#[derive(Debug, Clone)]
pub struct RepsConfig {
    pub epsilon: f64,
    pub eta_bounds: (f64, f64),
}

impl Default for RepsConfig {
    fn default() -> Self {
        Self {
            epsilon: 1.0,
            eta_bounds: (1e-3, 1e3),
        }
    }
}

/// Weights produced by the dual solve; `fallback` flags the softmax escape
/// hatch after a dual failure.
#[derive(Debug, Clone)]
pub struct CrepsWeights {
    pub weights: DVector<f64>,
    pub fallback: bool,
}

fn augment(context: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(
        context.len() + 1,
        context.iter().copied().chain(std::iter::once(1.0)),
    )
}

/// Normalized advantage weights from minimizing the C-REPS dual
/// `g(eta, v) = eta eps + v^T phi_bar + eta log mean_i exp((R_i - v^T phi_i)/eta)`
/// by alternating a golden-section search over `log eta` with a bounded
/// quasi-Newton step in `v`.
pub fn creps_weights(
    contexts: &[DVector<f64>],
    returns: &DVector<f64>,
    config: &RepsConfig,
) -> Result<CrepsWeights> {
    let n = returns.len();
    let d_s = contexts.first().map_or(0, |c| c.len());
    if n < d_s + 2 {
        return Err(Error::TooFewRecords {
            required: d_s + 2,
            actual: n,
        });
    }
    assert_eq!(contexts.len(), n, "contexts and returns must match");
    assert!(config.epsilon > 0.0, "epsilon must be positive");

    let phis: Vec<DVector<f64>> = contexts.iter().map(augment).collect();
    let phi_bar = phis.iter().fold(DVector::zeros(d_s + 1), |acc, p| acc + p) / n as f64;

    let r_mean = returns.mean();
    let r_std = (returns.iter().map(|r| (r - r_mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    if r_std < 1e-12 {
        // No advantage signal at all.
        return Ok(CrepsWeights {
            weights: DVector::from_element(n, 1.0 / n as f64),
            fallback: false,
        });
    }

    let eta_lo = config.eta_bounds.0 * r_std;
    let eta_hi = config.eta_bounds.1 * r_std;

    let dual = |eta: f64, v: &DVector<f64>| -> f64 {
        let z: Vec<f64> = phis
            .iter()
            .zip(returns.iter())
            .map(|(phi, r)| (r - v.dot(phi)) / eta)
            .collect();
        let z_max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_mean_exp =
            z_max + (z.iter().map(|zi| (zi - z_max).exp()).sum::<f64>() / n as f64).ln();
        eta * config.epsilon + v.dot(&phi_bar) + eta * log_mean_exp
    };

    let mut eta = r_std.clamp(eta_lo, eta_hi);
    let mut v = DVector::<f64>::zeros(d_s + 1);

    for _ in 0..DUAL_ALTERNATIONS {
        eta = golden_section(
            |log_eta| dual(log_eta.exp(), &v),
            eta_lo.ln(),
            eta_hi.ln(),
            GOLDEN_STEPS,
        )
        .exp();

        // Bounded v-step around the current iterate; the dual is convex and
        // smooth, so the refiner's quasi-Newton ascent on -g converges fast.
        let half_width = (10.0 * r_std).max(1.0);
        let v_box = BoxBounds::new(
            v.iter().map(|vi| vi - half_width).collect(),
            v.iter().map(|vi| vi + half_width).collect(),
        );
        let refined = local_refine(
            |p| -dual(eta, &DVector::from_column_slice(p)),
            v.as_slice(),
            &v_box,
        );
        v = refined;
    }

    let z: Vec<f64> = phis
        .iter()
        .zip(returns.iter())
        .map(|(phi, r)| (r - v.dot(phi)) / eta)
        .collect();
    let weights = normalized_exp(&z);

    match weights {
        Some(weights) => Ok(CrepsWeights {
            weights,
            fallback: false,
        }),
        None => {
            // Dual produced non-finite weights; fall back to a plain softmax
            // at temperature std(R).
            let z: Vec<f64> = returns.iter().map(|r| (r - r_mean) / r_std).collect();
            let weights = normalized_exp(&z).expect("softmax of standardized returns is finite");
            Ok(CrepsWeights {
                weights,
                fallback: true,
            })
        }
    }
}

fn normalized_exp(z: &[f64]) -> Option<DVector<f64>> {
    let z_max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !z_max.is_finite() {
        return None;
    }
    let raw: Vec<f64> = z.iter().map(|zi| (zi - z_max).exp()).collect();
    let total: f64 = raw.iter().sum();
    if !(total.is_finite() && total > 0.0) {
        return None;
    }
    Some(DVector::from_iterator(
        raw.len(),
        raw.iter().map(|w| w / total),
    ))
}

fn golden_section<F: FnMut(f64) -> f64>(mut f: F, mut lo: f64, mut hi: f64, steps: usize) -> f64 {
    let inv_phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - inv_phi * (hi - lo);
    let mut b = lo + inv_phi * (hi - lo);
    let mut fa = f(a);
    let mut fb = f(b);
    for _ in 0..steps {
        if fa < fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - inv_phi * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + inv_phi * (hi - lo);
            fb = f(b);
        }
    }
    0.5 * (lo + hi)
}

/// Weighted least-squares fit of `theta_i ~ W [s_i; 1]`.
pub fn fit_policy(
    contexts: &[DVector<f64>],
    thetas: &[DVector<f64>],
    weights: &DVector<f64>,
) -> Result<AffinePolicy> {
    let n = contexts.len();
    assert_eq!(thetas.len(), n, "contexts and parameters must match");
    assert_eq!(weights.len(), n, "weights must match the dataset");
    assert!(n > 0, "empty dataset");
    let d_phi = contexts[0].len() + 1;
    let d_theta = thetas[0].len();

    let mut gram = DMatrix::<f64>::zeros(d_phi, d_phi);
    let mut rhs = DMatrix::<f64>::zeros(d_phi, d_theta);
    for i in 0..n {
        let phi = augment(&contexts[i]);
        gram.ger(weights[i], &phi, &phi, 1.0);
        for (j, t) in thetas[i].iter().enumerate() {
            for k in 0..d_phi {
                rhs[(k, j)] += weights[i] * t * phi[k];
            }
        }
    }
    let ridge = RIDGE_FACTOR * gram.trace();
    let mut ridged = gram.clone();
    for k in 0..d_phi {
        ridged[(k, k)] += ridge;
    }

    let chol = nalgebra::Cholesky::new(ridged).ok_or(Error::RankDeficient)?;
    let mut solution = chol.solve(&rhs); // d_phi x d_theta
                                         // Iterative refinement against the unridged system removes the ridge bias
                                         // on well-determined directions while keeping its null-space damping.
    for _ in 0..2 {
        let residual = &rhs - &gram * &solution;
        solution += chol.solve(&residual);
    }
    Ok(AffinePolicy {
        weights: solution.transpose(),
    })
}

/// Evaluates the policy and clips the result into the parameter box.
pub fn policy_act(
    policy: &AffinePolicy,
    context: &DVector<f64>,
    bounds: &BoxBounds,
) -> DVector<f64> {
    let theta = &policy.weights * augment(context);
    bounds.clip(theta.as_slice())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn random_contexts(rng: &mut ChaCha12Rng, n: usize) -> Vec<DVector<f64>> {
        (0..n)
            .map(|_| {
                DVector::from_vec(vec![
                    rng.random_range(1.0..2.5),
                    rng.random_range(-1.0..1.0),
                ])
            })
            .collect()
    }

    fn kl_to_uniform(weights: &DVector<f64>) -> f64 {
        let n = weights.len() as f64;
        weights
            .iter()
            .filter(|w| **w > 0.0)
            .map(|w| w * (w * n).ln())
            .sum()
    }

    #[test]
    fn equal_returns_give_uniform_weights() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let contexts = random_contexts(&mut rng, 10);
        let returns = DVector::from_element(10, -0.5);
        let out = creps_weights(&contexts, &returns, &RepsConfig::default()).unwrap();
        assert!(!out.fallback);
        for w in out.weights.iter() {
            assert_relative_eq!(*w, 0.1, epsilon = 1e-9);
        }
    }

    #[test]
    fn flat_temperature_limit_gives_near_uniform_weights() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let contexts = random_contexts(&mut rng, 12);
        let returns = DVector::from_iterator(12, (0..12).map(|_| rng.random_range(-1.0..0.0)));
        // Pin eta to a huge lower bound: weights flatten out.
        let config = RepsConfig {
            epsilon: 1.0,
            eta_bounds: (1e6, 1e7),
        };
        let out = creps_weights(&contexts, &returns, &config).unwrap();
        for w in out.weights.iter() {
            assert_relative_eq!(*w, 1.0 / 12.0, epsilon = 1e-4);
        }
    }

    #[test]
    fn kl_constraint_respected_on_random_datasets() {
        let config = RepsConfig::default();
        for seed in 0..50 {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let n = rng.random_range(6..40);
            let contexts = random_contexts(&mut rng, n);
            let returns = DVector::from_iterator(n, (0..n).map(|_| rng.random_range(-5.0..0.0)));
            let out = creps_weights(&contexts, &returns, &config).unwrap();
            let kl = kl_to_uniform(&out.weights);
            assert!(
                kl <= config.epsilon + 0.05,
                "seed {seed}: KL {kl} exceeds bound"
            );
        }
    }

    #[test]
    fn too_small_dataset_is_rejected() {
        let contexts = vec![DVector::from_vec(vec![1.0, 0.0]); 3];
        let returns = DVector::from_vec(vec![0.0, -1.0, -2.0]);
        assert!(creps_weights(&contexts, &returns, &RepsConfig::default()).is_err());
    }

    #[test]
    fn exact_affine_recovery() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let truth = DMatrix::from_row_slice(2, 3, &[0.5, -0.3, 1.2, 0.1, 0.8, -0.4]);
        let contexts = random_contexts(&mut rng, 12);
        let thetas: Vec<DVector<f64>> = contexts.iter().map(|s| &truth * augment(s)).collect();
        let weights = DVector::from_element(12, 1.0 / 12.0);
        let policy = fit_policy(&contexts, &thetas, &weights).unwrap();
        for (a, b) in policy.weights.iter().zip(truth.iter()) {
            assert_relative_eq!(a, b, epsilon = 1e-8);
        }
    }

    #[test]
    fn concentrated_weight_pins_the_policy() {
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let contexts = random_contexts(&mut rng, 8);
        let thetas: Vec<DVector<f64>> = (0..8)
            .map(|_| {
                DVector::from_vec(vec![
                    rng.random_range(0.4..2.0),
                    rng.random_range(-1.0..1.0),
                ])
            })
            .collect();
        let mut weights = DVector::from_element(8, 1e-12);
        weights[5] = 1.0;
        let policy = fit_policy(&contexts, &thetas, &weights).unwrap();
        let predicted = &policy.weights * augment(&contexts[5]);
        for (p, t) in predicted.iter().zip(thetas[5].iter()) {
            assert_relative_eq!(p, t, epsilon = 1e-6);
        }
    }

    #[test]
    fn zero_weight_record_does_not_change_fit() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let mut contexts = random_contexts(&mut rng, 10);
        let mut thetas: Vec<DVector<f64>> = (0..10)
            .map(|_| {
                DVector::from_vec(vec![
                    rng.random_range(0.4..2.0),
                    rng.random_range(-1.0..1.0),
                ])
            })
            .collect();
        let mut weights: Vec<f64> = (0..10).map(|_| rng.random_range(0.01..1.0)).collect();

        let base = fit_policy(&contexts, &thetas, &DVector::from_vec(weights.clone())).unwrap();

        contexts.push(DVector::from_vec(vec![2.0, 0.5]));
        thetas.push(DVector::from_vec(vec![1.0, 1.0]));
        weights.push(0.0);
        let extended = fit_policy(&contexts, &thetas, &DVector::from_vec(weights)).unwrap();

        for (a, b) in base.weights.iter().zip(extended.weights.iter()) {
            assert_relative_eq!(a, b, epsilon = 1e-10);
        }
    }

    #[test]
    fn fit_invariant_to_weight_rescaling() {
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        let contexts = random_contexts(&mut rng, 9);
        let thetas: Vec<DVector<f64>> = (0..9)
            .map(|_| {
                DVector::from_vec(vec![
                    rng.random_range(0.4..2.0),
                    rng.random_range(-1.0..1.0),
                ])
            })
            .collect();
        let weights: Vec<f64> = (0..9).map(|_| rng.random_range(0.01..1.0)).collect();
        let a = fit_policy(&contexts, &thetas, &DVector::from_vec(weights.clone())).unwrap();
        let scaled: Vec<f64> = weights.iter().map(|w| w * 37.5).collect();
        let b = fit_policy(&contexts, &thetas, &DVector::from_vec(scaled)).unwrap();
        for (x, y) in a.weights.iter().zip(b.weights.iter()) {
            assert_relative_eq!(x, y, epsilon = 1e-12);
        }
    }

    #[test]
    fn policy_act_clips_to_bounds() {
        let bounds = BoxBounds::new(vec![0.4, -1.5], vec![2.0, 1.5]);
        let zero = AffinePolicy {
            weights: DMatrix::zeros(2, 3),
        };
        let s = DVector::from_vec(vec![1.5, 0.0]);
        let theta = policy_act(&zero, &s, &bounds);
        assert_eq!(theta.as_slice(), &[0.4, 0.0]);

        let wild = AffinePolicy {
            weights: DMatrix::from_row_slice(2, 3, &[10.0, 0.0, 0.0, 0.0, 0.0, -10.0]),
        };
        let theta = policy_act(&wild, &s, &bounds);
        assert_eq!(theta.as_slice(), &[2.0, -1.5]);

        let in_bounds = AffinePolicy {
            weights: DMatrix::from_row_slice(2, 3, &[0.0, 0.0, 1.0, 0.0, 0.0, 0.5]),
        };
        let theta = policy_act(&in_bounds, &s, &bounds);
        assert_eq!(theta.as_slice(), &[1.0, 0.5]);
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(16))]

        #[test]
        fn weights_form_a_probability_vector(
            seed in 0u64..10_000,
            n in 6usize..40,
        ) {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let contexts = random_contexts(&mut rng, n);
            let returns = DVector::from_iterator(
                n,
                (0..n).map(|_| rng.random_range(-10.0..0.0)),
            );
            let out = creps_weights(&contexts, &returns, &RepsConfig::default()).unwrap();
            proptest::prop_assert!(out.weights.iter().all(|w| *w >= 0.0));
            proptest::prop_assert!((out.weights.sum() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn pipeline_is_deterministic() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let contexts = random_contexts(&mut rng, 15);
        let thetas: Vec<DVector<f64>> = (0..15)
            .map(|_| {
                DVector::from_vec(vec![
                    rng.random_range(0.4..2.0),
                    rng.random_range(-1.0..1.0),
                ])
            })
            .collect();
        let returns = DVector::from_iterator(15, (0..15).map(|i| -0.1 * (i as f64) - 0.3));
        let run = || {
            let w = creps_weights(&contexts, &returns, &RepsConfig::default()).unwrap();
            fit_policy(&contexts, &thetas, &w.weights).unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.weights, b.weights);
    }
}
