//! Bounded local refinement: projected quasi-Newton ascent with central
//! finite-difference gradients.

use nalgebra::{DMatrix, DVector};

use super::BoxBounds;

const MAX_ITERATIONS: usize = 50;
const FD_STEP_FACTOR: f64 = 1e-5;

/// Polishes `x0` by hill climbing inside `bounds`.
///
/// Never returns a point outside the box or one worse than `x0`; falls back
/// to `x0` when no improving step exists.
pub fn local_refine<F>(objective: F, x0: &[f64], bounds: &BoxBounds) -> DVector<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    local_refine_budgeted(objective, x0, bounds, MAX_ITERATIONS)
}

/// Same ascent with a caller-chosen iteration cap (hyperparameter search runs
/// many restarts and wants each one short).
pub(crate) fn local_refine_budgeted<F>(
    mut objective: F,
    x0: &[f64],
    bounds: &BoxBounds,
    max_iterations: usize,
) -> DVector<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let dim = bounds.dim();
    let widths = bounds.widths();
    let fd_steps: Vec<f64> = widths.iter().map(|w| FD_STEP_FACTOR * w).collect();

    let mut x = bounds.clip(x0);
    let mut fx = objective(x.as_slice());
    let mut best = (x.clone(), fx);
    if !fx.is_finite() {
        return best.0;
    }

    // Gradient by central differences; probes are clamped to the box, which
    // degrades to a one-sided difference on a face.
    let gradient = |x: &DVector<f64>, obj: &mut F| -> DVector<f64> {
        let mut g = DVector::zeros(dim);
        for d in 0..dim {
            let mut plus = x.clone();
            plus[d] = (x[d] + fd_steps[d]).min(bounds.upper[d]);
            let mut minus = x.clone();
            minus[d] = (x[d] - fd_steps[d]).max(bounds.lower[d]);
            let span = plus[d] - minus[d];
            g[d] = if span > 0.0 {
                (obj(plus.as_slice()) - obj(minus.as_slice())) / span
            } else {
                0.0
            };
        }
        g
    };

    let mut inv_hessian = DMatrix::<f64>::identity(dim, dim);
    let mut g = gradient(&x, &mut objective);

    for _ in 0..max_iterations {
        if !g.iter().all(|v| v.is_finite()) {
            break;
        }
        // Projected gradient: zero out components pushing through a face.
        let proj_g = DVector::from_iterator(
            dim,
            (0..dim).map(|d| {
                let at_upper = x[d] >= bounds.upper[d] - 1e-15 * widths[d];
                let at_lower = x[d] <= bounds.lower[d] + 1e-15 * widths[d];
                if (at_upper && g[d] > 0.0) || (at_lower && g[d] < 0.0) {
                    0.0
                } else {
                    g[d]
                }
            }),
        );
        if proj_g.norm() < 1e-12 {
            break;
        }

        let mut direction = &inv_hessian * &g;
        if direction.dot(&g) <= 0.0 {
            // Curvature model went bad; reset to steepest ascent.
            inv_hessian = DMatrix::identity(dim, dim);
            direction = g.clone();
        }
        // Scale the first step to a fraction of the box.
        let dir_norm = direction.norm();
        if dir_norm == 0.0 {
            break;
        }
        let max_step = 0.5 * widths.iter().cloned().fold(f64::MAX, f64::min);
        let mut t = (max_step / dir_norm).min(1.0);

        let mut accepted = None;
        for _ in 0..30 {
            let candidate = bounds.clip((&x + &direction * t).as_slice());
            let fc = objective(candidate.as_slice());
            if fc.is_finite() && fc > fx + 1e-12 * fx.abs().max(1.0) * t {
                accepted = Some((candidate, fc));
                break;
            }
            t *= 0.5;
            if t * dir_norm < 1e-14 {
                break;
            }
        }

        let Some((x_new, f_new)) = accepted else {
            break;
        };

        let g_new = gradient(&x_new, &mut objective);
        // BFGS update written for minimization of -f: s = step, y = -(dg).
        let s = &x_new - &x;
        let y = &g - &g_new;
        let sy = s.dot(&y);
        if sy > 1e-12 {
            let rho = 1.0 / sy;
            let identity = DMatrix::<f64>::identity(dim, dim);
            let left = &identity - (&s * y.transpose()) * rho;
            inv_hessian = &left * inv_hessian * left.transpose() + (&s * s.transpose()) * rho;
        } else {
            inv_hessian = DMatrix::identity(dim, dim);
        }

        x = x_new;
        fx = f_new;
        g = g_new;
        if fx > best.1 {
            best = (x.clone(), fx);
        }
    }

    best.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn converges_near_quadratic_peak() {
        let f = |x: &[f64]| -((x[0] - 0.3).powi(2) + 2.0 * (x[1] + 0.2).powi(2));
        let bounds = BoxBounds::new(vec![-1.0, -1.0], vec![1.0, 1.0]);
        let x = local_refine(f, &[0.5, 0.1], &bounds);
        // Finite-difference gradient norm at the solution.
        let h = 1e-6;
        let g0 = (f(&[x[0] + h, x[1]]) - f(&[x[0] - h, x[1]])) / (2.0 * h);
        let g1 = (f(&[x[0], x[1] + h]) - f(&[x[0], x[1] - h])) / (2.0 * h);
        assert!((g0 * g0 + g1 * g1).sqrt() < 1e-4, "grad norm at solution");
    }

    #[test]
    fn fixed_point_at_local_max() {
        let f = |x: &[f64]| -(x[0] * x[0]);
        let bounds = BoxBounds::new(vec![-1.0], vec![1.0]);
        let x = local_refine(f, &[0.0], &bounds);
        assert!(x[0].abs() < 1e-6);
    }

    #[test]
    fn monotone_objective_stops_on_boundary() {
        let f = |x: &[f64]| x[0] + x[1];
        let bounds = BoxBounds::new(vec![0.0, 0.0], vec![1.0, 2.0]);
        let x0 = [0.2, 0.3];
        let x = local_refine(f, &x0, &bounds);
        assert!(f(x.as_slice()) > f(&x0));
        assert!((x[0] - 1.0).abs() < 1e-9 && (x[1] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn never_worse_than_start() {
        // A spiky function the line search cannot improve from this start.
        let f = |x: &[f64]| if x[0] == 0.25 { 1.0 } else { -1.0 };
        let bounds = BoxBounds::new(vec![0.0], vec![1.0]);
        let x = local_refine(f, &[0.25], &bounds);
        assert_eq!(f(x.as_slice()), 1.0);
    }
}
