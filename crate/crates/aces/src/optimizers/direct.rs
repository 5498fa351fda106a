//! DIRECT (dividing rectangles) global search.
//!
//! The box is normalized to the unit cube. Each sweep selects the potentially
//! optimal rectangles via the convex-hull criterion on (size, value) pairs and
//! trisects them along their longest side. Fully deterministic for a
//! deterministic objective.

use nalgebra::DVector;

use super::BoxBounds;

const EPS: f64 = 1e-4;
const MAX_LEVEL: u32 = 40;

#[derive(Clone)]
struct Rect {
    center: Vec<f64>,
    levels: Vec<u32>,
    value: f64,
}

impl Rect {
    /// Half-diagonal of the rectangle in unit-cube coordinates.
    fn size(&self) -> f64 {
        0.5 * self
            .levels
            .iter()
            .map(|&l| 9.0f64.powi(-(l as i32)))
            .sum::<f64>()
            .sqrt()
    }
}

/// Maximizes a deterministic objective; returns the best point found.
///
/// With a budget below 3 only the box center is evaluated.
pub fn direct_maximize<F>(
    mut objective: F,
    bounds: &BoxBounds,
    max_evaluations: usize,
) -> DVector<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let dim = bounds.dim();
    let widths = bounds.widths();
    let to_actual = |unit: &[f64]| -> DVector<f64> {
        DVector::from_iterator(
            dim,
            unit.iter()
                .enumerate()
                .map(|(i, u)| bounds.lower[i] + u * widths[i]),
        )
    };
    // Internally minimize g = -f.
    let mut eval = |unit: &[f64], evals: &mut usize| -> f64 {
        *evals += 1;
        let v = -objective(to_actual(unit).as_slice());
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };

    let mut evals = 0usize;
    let center = vec![0.5; dim];
    let center_value = eval(&center, &mut evals);
    let mut best = (center.clone(), center_value);

    if max_evaluations < 3 {
        return to_actual(&best.0);
    }

    let mut rects = vec![Rect {
        center,
        levels: vec![0; dim],
        value: center_value,
    }];

    while evals < max_evaluations {
        let selected = potentially_optimal(&rects, best.1);
        if selected.is_empty() {
            break;
        }
        let mut progressed = false;
        for idx in selected {
            if evals >= max_evaluations {
                break;
            }
            // Longest side: smallest level; ties resolved by lowest index.
            let split_dim = (0..dim)
                .min_by_key(|&d| (rects[idx].levels[d], d))
                .expect("dim >= 1");
            if rects[idx].levels[split_dim] >= MAX_LEVEL {
                continue;
            }
            let delta = 3.0f64.powi(-(rects[idx].levels[split_dim] as i32 + 1));

            let mut lo = rects[idx].center.clone();
            lo[split_dim] -= delta;
            let mut hi = rects[idx].center.clone();
            hi[split_dim] += delta;

            let lo_value = eval(&lo, &mut evals);
            let hi_value = eval(&hi, &mut evals);
            if lo_value < best.1 {
                best = (lo.clone(), lo_value);
            }
            if hi_value < best.1 {
                best = (hi.clone(), hi_value);
            }

            rects[idx].levels[split_dim] += 1;
            let levels = rects[idx].levels.clone();
            rects.push(Rect {
                center: lo,
                levels: levels.clone(),
                value: lo_value,
            });
            rects.push(Rect {
                center: hi,
                levels,
                value: hi_value,
            });
            progressed = true;
        }
        if !progressed {
            break;
        }
    }

    to_actual(&best.0)
}

/// Indices of potentially optimal rectangles: per size class take the best
/// value, then keep the classes on the lower-right convex hull of
/// (size, value) that can still improve on the incumbent by the epsilon
/// margin.
fn potentially_optimal(rects: &[Rect], f_min: f64) -> Vec<usize> {
    // Group by size (sizes are discrete; bucket by bit pattern after rounding).
    let mut groups: Vec<(f64, usize)> = Vec::new();
    for (i, r) in rects.iter().enumerate() {
        let s = r.size();
        match groups
            .iter_mut()
            .find(|(gs, _)| (*gs - s).abs() <= 1e-12 * s.max(1e-300))
        {
            Some((_, gi)) => {
                if r.value < rects[*gi].value {
                    *gi = i;
                }
            }
            None => groups.push((s, i)),
        }
    }
    groups.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut chosen = Vec::new();
    for (j, &(d_j, idx_j)) in groups.iter().enumerate() {
        let v_j = rects[idx_j].value;

        let mut max_lower = 0.0f64;
        for &(d_i, idx_i) in &groups[..j] {
            let k = (v_j - rects[idx_i].value) / (d_j - d_i);
            max_lower = max_lower.max(k);
        }
        let mut min_upper = f64::INFINITY;
        for &(d_i, idx_i) in &groups[j + 1..] {
            let k = (rects[idx_i].value - v_j) / (d_i - d_j);
            min_upper = min_upper.min(k);
        }
        if max_lower > min_upper {
            continue;
        }
        // Epsilon condition against the incumbent.
        let ok = if min_upper.is_infinite() {
            true
        } else if f_min != 0.0 {
            (f_min - v_j + d_j * min_upper) / f_min.abs() >= EPS
        } else {
            v_j - d_j * min_upper <= 0.0
        };
        if ok {
            chosen.push(idx_j);
        }
    }
    chosen
}
