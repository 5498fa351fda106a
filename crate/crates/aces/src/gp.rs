//! Gaussian process regression over the joint context-parameter space.
//!
//! The surrogate is a constant-mean GP with an anisotropic Matern-5/2 kernel,
//! fitted by Cholesky factorization with escalating jitter. Besides the usual
//! fit/predict pair it supports joint posterior sampling at finite point sets
//! and O(n^2) rank-1 "fantasy" updates for assumed observations, both of which
//! the acquisition layer leans on heavily.
//!
//! A fitted [`PosteriorGP`] is immutable; every operation that changes the
//! model returns a new value.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::optimizers::{self, BoxBounds};

const SQRT5: f64 = 2.236_067_977_499_79;
/// Jitter escalation: start factor, multiplier, ceiling factor (all relative
/// to the signal variance).
const JITTER_START: f64 = 1e-10;
const JITTER_CEIL: f64 = 1e-4;

/// Hyperparameters of the anisotropic Matern-5/2 kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec {
    pub signal_variance: f64,
    /// One strictly positive length scale per input dimension.
    pub length_scales: DVector<f64>,
    pub noise_variance: f64,
}

impl KernelSpec {
    pub fn new(signal_variance: f64, length_scales: Vec<f64>, noise_variance: f64) -> Self {
        assert!(signal_variance > 0.0, "signal variance must be positive");
        assert!(
            length_scales.iter().all(|l| *l > 0.0),
            "length scales must be strictly positive"
        );
        assert!(noise_variance >= 0.0, "noise variance must be non-negative");
        Self {
            signal_variance,
            length_scales: DVector::from_vec(length_scales),
            noise_variance,
        }
    }

    pub fn dim(&self) -> usize {
        self.length_scales.len()
    }

    /// Anisotropically scaled distance between two points.
    pub fn scaled_distance(&self, a: &[f64], b: &[f64]) -> f64 {
        assert_eq!(a.len(), self.dim(), "kernel input dimension mismatch");
        assert_eq!(b.len(), self.dim(), "kernel input dimension mismatch");
        a.iter()
            .zip(b)
            .zip(self.length_scales.iter())
            .map(|((x, y), l)| ((x - y) / l).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// Matern-5/2 covariance between two points.
pub fn kernel_eval(x1: &[f64], x2: &[f64], spec: &KernelSpec) -> f64 {
    let r = spec.scaled_distance(x1, x2);
    spec.signal_variance * matern52(r)
}

fn matern52(r: f64) -> f64 {
    (1.0 + SQRT5 * r + 5.0 / 3.0 * r * r) * (-SQRT5 * r).exp()
}

fn kernel_cross(spec: &KernelSpec, xs: &[DVector<f64>], ps: &[DVector<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(xs.len(), ps.len(), |i, j| {
        kernel_eval(xs[i].as_slice(), ps[j].as_slice(), spec)
    })
}

fn kernel_gram(spec: &KernelSpec, xs: &[DVector<f64>]) -> DMatrix<f64> {
    let n = xs.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = spec.signal_variance;
        for j in 0..i {
            let v = kernel_eval(xs[i].as_slice(), xs[j].as_slice(), spec);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Lower Cholesky factor with escalating diagonal jitter. Returns the factor
/// and the jitter that was actually added.
fn cholesky_with_jitter(matrix: &DMatrix<f64>, scale: f64) -> Result<(DMatrix<f64>, f64)> {
    if let Some(c) = nalgebra::Cholesky::new(matrix.clone()) {
        return Ok((c.unpack(), 0.0));
    }
    let mut jitter = JITTER_START * scale;
    while jitter <= JITTER_CEIL * scale {
        let mut attempt = matrix.clone();
        for i in 0..attempt.nrows() {
            attempt[(i, i)] += jitter;
        }
        if let Some(c) = nalgebra::Cholesky::new(attempt) {
            return Ok((c.unpack(), jitter));
        }
        jitter *= 10.0;
    }
    let diag_max = matrix.diagonal().iter().cloned().fold(f64::MIN, f64::max);
    let diag_min = matrix.diagonal().iter().cloned().fold(f64::MAX, f64::min);
    Err(Error::CholeskyFailed {
        max_jitter: JITTER_CEIL * scale,
        condition_estimate: diag_max / diag_min.max(f64::MIN_POSITIVE),
    })
}

/// Fitted GP posterior.
#[derive(Debug, Clone)]
pub struct PosteriorGP {
    kernel: KernelSpec,
    x_train: Vec<DVector<f64>>,
    y_train: DVector<f64>,
    /// Lower factor of K + (noise + jitter) I.
    chol: DMatrix<f64>,
    alpha: DVector<f64>,
    mean_offset: f64,
    jitter: f64,
}

impl PosteriorGP {
    /// GP with no observations; predictions revert to the prior.
    pub fn prior(kernel: KernelSpec) -> Self {
        Self {
            kernel,
            x_train: Vec::new(),
            y_train: DVector::zeros(0),
            chol: DMatrix::zeros(0, 0),
            alpha: DVector::zeros(0),
            mean_offset: 0.0,
            jitter: 0.0,
        }
    }

    /// Fits the posterior on `xs`/`y` with the given kernel.
    pub fn fit(xs: Vec<DVector<f64>>, y: DVector<f64>, kernel: KernelSpec) -> Result<Self> {
        if xs.is_empty() {
            return Err(Error::EmptyTrainingSet);
        }
        assert_eq!(xs.len(), y.len(), "inputs and targets must match");
        assert!(
            xs.iter().all(|x| x.len() == kernel.dim()),
            "kernel input dimension mismatch"
        );
        assert!(y.iter().all(|v| v.is_finite()), "targets must be finite");

        let mut gram = kernel_gram(&kernel, &xs);
        for i in 0..xs.len() {
            gram[(i, i)] += kernel.noise_variance;
        }
        let (chol, jitter) = cholesky_with_jitter(&gram, kernel.signal_variance)?;

        let mean_offset = y.mean();
        let centered = y.map(|v| v - mean_offset);
        let alpha = solve_chol(&chol, &centered);

        Ok(Self {
            kernel,
            x_train: xs,
            y_train: y,
            chol,
            alpha,
            mean_offset,
            jitter,
        })
    }

    pub fn len(&self) -> usize {
        self.x_train.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x_train.is_empty()
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn training_inputs(&self) -> &[DVector<f64>] {
        &self.x_train
    }

    pub fn training_targets(&self) -> &DVector<f64> {
        &self.y_train
    }

    pub fn mean_offset(&self) -> f64 {
        self.mean_offset
    }

    /// Extra diagonal jitter the fit actually needed (usually 0).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Prior cross-covariances k(X, x) against the training inputs.
    pub fn kernel_vector(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.len(),
            self.x_train
                .iter()
                .map(|xi| kernel_eval(xi.as_slice(), x, &self.kernel)),
        )
    }

    /// `L^-1 K(X, points)`; an empty matrix when the GP holds no data.
    pub fn cross_solve(&self, points: &[DVector<f64>]) -> DMatrix<f64> {
        if self.is_empty() {
            return DMatrix::zeros(0, points.len());
        }
        let k_cross = kernel_cross(&self.kernel, &self.x_train, points);
        self.chol
            .solve_lower_triangular(&k_cross)
            .expect("triangular solve on a valid factor")
    }

    /// Whitened query projection `v = L^-1 k(X, x)` together with the
    /// predictive mean and latent variance it induces.
    pub fn project(&self, x: &[f64]) -> QueryProjection {
        let k_vec = self.kernel_vector(x);
        if self.is_empty() {
            return QueryProjection {
                v: DVector::zeros(0),
                mean: self.mean_offset,
                var: self.kernel.signal_variance,
            };
        }
        let v = self
            .chol
            .solve_lower_triangular(&k_vec)
            .expect("triangular solve on a valid factor");
        let mean = k_vec.dot(&self.alpha) + self.mean_offset;
        let var = (self.kernel.signal_variance - v.norm_squared()).max(0.0);
        QueryProjection { v, mean, var }
    }

    /// Solves `(A') w = 1` where `A'` is the training system extended by one
    /// observation whose whitened row is `l_row` with pivot `d`. Used to
    /// propagate the prior-mean shift of a fantasy observation without
    /// refitting.
    pub(crate) fn extended_unit_solve(&self, l_row: &DVector<f64>, d: f64) -> DVector<f64> {
        let n = self.len();
        if n == 0 {
            return DVector::from_element(1, 1.0 / (d * d));
        }
        let ones = DVector::from_element(n, 1.0);
        let z_head = self
            .chol
            .solve_lower_triangular(&ones)
            .expect("triangular solve on a valid factor");
        let z_tail = (1.0 - l_row.dot(&z_head)) / d;
        let w_tail = z_tail / d;
        let rhs = z_head - l_row * w_tail;
        let w_head = self
            .chol
            .tr_solve_lower_triangular(&rhs)
            .expect("triangular solve on a valid factor");
        let mut w = DVector::zeros(n + 1);
        w.rows_mut(0, n).copy_from(&w_head);
        w[n] = w_tail;
        w
    }

    /// Predictive mean and standard deviation at one point.
    pub fn predict(&self, x: &[f64]) -> (f64, f64) {
        let prior_var = self.kernel.signal_variance;
        if self.is_empty() {
            return (self.mean_offset, prior_var.sqrt());
        }
        let k_vec = DVector::from_iterator(
            self.len(),
            self.x_train
                .iter()
                .map(|xi| kernel_eval(xi.as_slice(), x, &self.kernel)),
        );
        let mean = k_vec.dot(&self.alpha) + self.mean_offset;
        let v = self
            .chol
            .solve_lower_triangular(&k_vec)
            .expect("triangular solve on a valid factor");
        let var = (prior_var - v.norm_squared()).max(0.0);
        (mean, var.sqrt())
    }

    /// Joint posterior mean and covariance at a finite point set.
    pub fn posterior_joint(&self, points: &[DVector<f64>]) -> (DVector<f64>, DMatrix<f64>) {
        assert!(!points.is_empty(), "need at least one query point");
        let prior_cov = kernel_gram(&self.kernel, points);
        if self.is_empty() {
            return (
                DVector::from_element(points.len(), self.mean_offset),
                prior_cov,
            );
        }
        let k_cross = kernel_cross(&self.kernel, &self.x_train, points);
        let mean = k_cross.transpose() * &self.alpha
            + DVector::from_element(points.len(), self.mean_offset);
        let v = self
            .chol
            .solve_lower_triangular(&k_cross)
            .expect("triangular solve on a valid factor");
        let cov = prior_cov - v.transpose() * v;
        (mean, cov)
    }

    /// I.i.d. draws from the joint posterior at `points`; one row per draw.
    pub fn sample_posterior<R: Rng + ?Sized>(
        &self,
        points: &[DVector<f64>],
        n_samples: usize,
        rng: &mut R,
    ) -> Result<DMatrix<f64>> {
        let (mean, cov) = self.posterior_joint(points);
        let (l, _) = cholesky_with_jitter(&cov, self.kernel.signal_variance)?;
        let m = points.len();
        let mut out = DMatrix::zeros(n_samples, m);
        for s in 0..n_samples {
            let z = DVector::from_iterator(m, (0..m).map(|_| StandardNormal.sample(rng)));
            let draw = &mean + &l * z;
            out.row_mut(s).copy_from(&draw.transpose());
        }
        Ok(out)
    }

    /// Posterior after assuming an observation `y_assumed` at `x_q`,
    /// equivalent to a full refit but computed as a rank-1 Cholesky extension
    /// in O(n^2).
    pub fn fantasize(&self, x_q: &[f64], y_assumed: f64) -> Result<PosteriorGP> {
        assert_eq!(
            x_q.len(),
            self.kernel.dim(),
            "kernel input dimension mismatch"
        );
        let n = self.len();
        let k_vec = DVector::from_iterator(
            n,
            self.x_train
                .iter()
                .map(|xi| kernel_eval(xi.as_slice(), x_q, &self.kernel)),
        );
        let l_row = if n == 0 {
            DVector::zeros(0)
        } else {
            self.chol
                .solve_lower_triangular(&k_vec)
                .expect("triangular solve on a valid factor")
        };
        let k_ss = self.kernel.signal_variance + self.kernel.noise_variance + self.jitter;
        let d_sq = k_ss - l_row.norm_squared();
        let d = d_sq.max(1e-12 * self.kernel.signal_variance).sqrt();

        let mut chol = DMatrix::zeros(n + 1, n + 1);
        chol.view_mut((0, 0), (n, n)).copy_from(&self.chol);
        for j in 0..n {
            chol[(n, j)] = l_row[j];
        }
        chol[(n, n)] = d;

        let mut x_train = self.x_train.clone();
        x_train.push(DVector::from_column_slice(x_q));
        let y_train = DVector::from_iterator(
            n + 1,
            self.y_train
                .iter()
                .copied()
                .chain(std::iter::once(y_assumed)),
        );
        let mean_offset = y_train.mean();
        let centered = y_train.map(|v| v - mean_offset);
        let alpha = solve_chol(&chol, &centered);

        Ok(PosteriorGP {
            kernel: self.kernel.clone(),
            x_train,
            y_train,
            chol,
            alpha,
            mean_offset,
            jitter: self.jitter,
        })
    }

    /// Log marginal likelihood of the training data under the centered model.
    pub fn log_marginal_likelihood(&self) -> f64 {
        let n = self.len() as f64;
        let centered = self.y_train.map(|v| v - self.mean_offset);
        let fit_term = -0.5 * centered.dot(&self.alpha);
        let logdet: f64 = self.chol.diagonal().iter().map(|v| v.ln()).sum();
        fit_term - logdet - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
    }
}

/// Whitened view of a query point against a fitted GP.
#[derive(Debug, Clone)]
pub struct QueryProjection {
    /// `L^-1 k(X, x)`.
    pub v: DVector<f64>,
    pub mean: f64,
    /// Latent (noise-free) predictive variance, clamped at 0.
    pub var: f64,
}

/// Lower Cholesky factor of a covariance matrix with escalating jitter;
/// shared with the acquisition layer for fantasy covariances.
pub(crate) fn jittered_cholesky(matrix: &DMatrix<f64>, scale: f64) -> Result<(DMatrix<f64>, f64)> {
    cholesky_with_jitter(matrix, scale)
}

/// Solves (L L^T) x = b given the lower factor.
fn solve_chol(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    if l.nrows() == 0 {
        return DVector::zeros(0);
    }
    let forward = l
        .solve_lower_triangular(b)
        .expect("triangular solve on a valid factor");
    l.tr_solve_lower_triangular(&forward)
        .expect("triangular solve on a valid factor")
}

/// Box constraints for hyperparameter search.
#[derive(Debug, Clone)]
pub struct HyperBounds {
    /// Length-scale bounds as a factor of each input dimension's range.
    pub length_scale_factor: (f64, f64),
    pub signal_variance: (f64, f64),
    /// Noise bounds as a ratio of the signal variance.
    pub noise_ratio: (f64, f64),
    /// Extra cap on the signal variance as a multiple of the target variance.
    /// Marginal likelihood otherwise favors a huge-amplitude, huge-length-scale
    /// quasi-linear fit on smooth optimized-sampling data, which flattens the
    /// uncertainty structure the acquisition functions feed on.
    pub sv_var_factor: f64,
}

impl Default for HyperBounds {
    fn default() -> Self {
        Self {
            length_scale_factor: (0.05, 5.0),
            signal_variance: (1e-6, 1e4),
            noise_ratio: (1e-8, 1e-1),
            sv_var_factor: 2.0,
        }
    }
}

/// Kernel used before any hyperparameter optimization has run: length scale
/// 0.3 times each dimension's range, signal variance matching the target
/// variance, near-zero noise.
pub fn default_spec(ranges: &[f64], y: &DVector<f64>) -> KernelSpec {
    let ls: Vec<f64> = ranges.iter().map(|r| 0.3 * r).collect();
    let sv = if y.len() < 2 {
        1.0
    } else {
        let m = y.mean();
        (y.iter().map(|v| (v - m).powi(2)).sum::<f64>() / y.len() as f64).max(1e-6)
    };
    KernelSpec::new(sv, ls, 1e-6)
}

/// Maximizes the log marginal likelihood over kernel hyperparameters with a
/// log-scale multi-start search (warm start plus 5 random restarts).
///
/// Below 5 observations the default spec is returned unchanged. The second
/// return value flags the all-starts-failed fallback.
pub fn optimize_hyperparameters<R: Rng + ?Sized>(
    xs: &[DVector<f64>],
    y: &DVector<f64>,
    ranges: &[f64],
    bounds: &HyperBounds,
    warm_start: Option<&KernelSpec>,
    rng: &mut R,
) -> (KernelSpec, bool) {
    let fallback = default_spec(ranges, y);
    if xs.len() < 5 {
        return (fallback, false);
    }
    let d = ranges.len();

    let y_mean = y.mean();
    let y_var = y.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / y.len() as f64;
    let sv_hi = bounds
        .signal_variance
        .1
        .min(bounds.sv_var_factor * y_var.max(1e-6))
        .max(bounds.signal_variance.0 * 2.0);

    let lower: Vec<f64> = ranges
        .iter()
        .map(|r| (bounds.length_scale_factor.0 * r).ln())
        .chain([bounds.signal_variance.0.ln(), bounds.noise_ratio.0.ln()])
        .collect();
    let upper: Vec<f64> = ranges
        .iter()
        .map(|r| (bounds.length_scale_factor.1 * r).ln())
        .chain([sv_hi.ln(), bounds.noise_ratio.1.ln()])
        .collect();
    let log_box = BoxBounds::new(lower, upper);

    let spec_of = |p: &[f64]| -> KernelSpec {
        let ls: Vec<f64> = p[..d].iter().map(|v| v.exp()).collect();
        let sv = p[d].exp();
        KernelSpec::new(sv, ls, p[d + 1].exp() * sv)
    };
    let objective = |p: &[f64]| -> f64 {
        match PosteriorGP::fit(xs.to_vec(), y.clone(), spec_of(p)) {
            Ok(gp) => gp.log_marginal_likelihood(),
            Err(_) => f64::NEG_INFINITY,
        }
    };
    let encode = |spec: &KernelSpec| -> DVector<f64> {
        let p: Vec<f64> = spec
            .length_scales
            .iter()
            .map(|l| l.ln())
            .chain([
                spec.signal_variance.ln(),
                (spec.noise_variance / spec.signal_variance)
                    .max(1e-300)
                    .ln(),
            ])
            .collect();
        log_box.clip(&p)
    };

    let mut starts = vec![encode(&fallback)];
    if let Some(w) = warm_start {
        starts.push(encode(w));
    }
    for _ in 0..5 {
        starts.push(log_box.sample_uniform(rng));
    }

    let mut best: Option<(DVector<f64>, f64)> = None;
    for start in starts {
        let refined =
            optimizers::refine::local_refine_budgeted(objective, start.as_slice(), &log_box, 30);
        let value = objective(refined.as_slice());
        if value.is_finite() && best.as_ref().is_none_or(|(_, b)| value > *b) {
            best = Some((refined, value));
        }
    }

    match best {
        Some((p, _)) => (spec_of(p.as_slice()), false),
        None => (fallback, true),
    }
}
