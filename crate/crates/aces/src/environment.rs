//! Analytic ball-throw task.
//!
//! A throw is parametrized by an execution time `tau` (slower throws land
//! closer) and a release angle `g0` (rotation around the vertical axis). The
//! landing point is `rho(tau) * (cos g0, sin g0)` with range map
//! `rho(tau) = 0.85/tau + 0.55`, so the reachable annulus spans the target
//! rectangle except a sliver at its far corners. The reward penalizes squared
//! landing error plus a velocity term that grows for fast throws, which makes
//! the best achievable reward depend on the target: far targets are
//! inherently more expensive than near ones.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::optimizers::BoxBounds;

pub const CONTEXT_X_RANGE: (f64, f64) = (1.0, 2.5);
pub const CONTEXT_Y_RANGE: (f64, f64) = (-1.0, 1.0);
pub const TAU_RANGE: (f64, f64) = (0.4, 2.0);
pub const G0_RANGE: (f64, f64) = (-std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2);

const RANGE_NUM: f64 = 0.85;
const RANGE_OFFSET: f64 = 0.55;
const VELOCITY_SCALE: f64 = 1.5;
const VELOCITY_WEIGHT: f64 = 0.01;

/// Target position on the ground.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Context {
    pub x: f64,
    pub y: f64,
}

impl Context {
    pub fn new(x: f64, y: f64) -> Result<Self> {
        check_range("context x", x, CONTEXT_X_RANGE)?;
        check_range("context y", y, CONTEXT_Y_RANGE)?;
        Ok(Self { x, y })
    }

    pub fn as_array(&self) -> [f64; 2] {
        [self.x, self.y]
    }
}

/// Throw parameters: execution time and release angle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThrowParams {
    pub tau: f64,
    pub g0: f64,
}

impl ThrowParams {
    pub fn new(tau: f64, g0: f64) -> Result<Self> {
        check_range("tau", tau, TAU_RANGE)?;
        check_range("g0", g0, G0_RANGE)?;
        Ok(Self { tau, g0 })
    }

    pub fn as_array(&self) -> [f64; 2] {
        [self.tau, self.g0]
    }
}

/// Result of one throw.
#[derive(Debug, Clone, Copy)]
pub struct ThrowOutcome {
    pub landing: [f64; 2],
    pub reward: f64,
    pub distance_cost: f64,
    pub velocity_penalty: f64,
}

fn check_range(name: &'static str, value: f64, (lo, hi): (f64, f64)) -> Result<()> {
    if value.is_finite() && (lo..=hi).contains(&value) {
        Ok(())
    } else {
        Err(Error::OutOfBounds {
            name,
            value,
            lower: lo,
            upper: hi,
        })
    }
}

pub fn context_bounds() -> BoxBounds {
    BoxBounds::new(
        vec![CONTEXT_X_RANGE.0, CONTEXT_Y_RANGE.0],
        vec![CONTEXT_X_RANGE.1, CONTEXT_Y_RANGE.1],
    )
}

pub fn param_bounds() -> BoxBounds {
    BoxBounds::new(vec![TAU_RANGE.0, G0_RANGE.0], vec![TAU_RANGE.1, G0_RANGE.1])
}

/// Joint (context, parameter) box in concatenation order: context dims first.
pub fn joint_bounds() -> BoxBounds {
    context_bounds().join(&param_bounds())
}

fn range_map(tau: f64) -> f64 {
    RANGE_NUM / tau + RANGE_OFFSET
}

/// Landing point of a throw; strictly decreasing range in `tau`.
pub fn simulate_throw(params: &ThrowParams) -> Result<[f64; 2]> {
    check_range("tau", params.tau, TAU_RANGE)?;
    check_range("g0", params.g0, G0_RANGE)?;
    let rho = range_map(params.tau);
    Ok([rho * params.g0.cos(), rho * params.g0.sin()])
}

/// Executes a throw and scores it: squared landing error plus a velocity
/// penalty of `0.01 * (1.5 / tau)^2`. Observation noise, when requested, is
/// added to the returned reward only.
pub fn reward<R: Rng + ?Sized>(
    context: &Context,
    params: &ThrowParams,
    noise_std: f64,
    rng: &mut R,
) -> Result<ThrowOutcome> {
    assert!(noise_std >= 0.0, "noise_std must be non-negative");
    let landing = simulate_throw(params)?;
    let dx = context.x - landing[0];
    let dy = context.y - landing[1];
    let distance_cost = dx * dx + dy * dy;
    let velocity_penalty = VELOCITY_WEIGHT * (VELOCITY_SCALE / params.tau).powi(2);
    let mut reward = -distance_cost - velocity_penalty;
    if noise_std > 0.0 {
        let eps: f64 = StandardNormal.sample(rng);
        reward += noise_std * eps;
    }
    Ok(ThrowOutcome {
        landing,
        reward,
        distance_cost,
        velocity_penalty,
    })
}

/// Noiseless reward as a plain function of raw coordinates, used by
/// optimizers; out-of-box parameters are clipped first.
pub fn reward_clipped(context: &Context, tau: f64, g0: f64) -> f64 {
    let params = ThrowParams {
        tau: tau.clamp(TAU_RANGE.0, TAU_RANGE.1),
        g0: g0.clamp(G0_RANGE.0, G0_RANGE.1),
    };
    let landing = simulate_throw(&params).expect("clipped params are in bounds");
    let dx = context.x - landing[0];
    let dy = context.y - landing[1];
    -(dx * dx + dy * dy) - VELOCITY_WEIGHT * (VELOCITY_SCALE / params.tau).powi(2)
}

/// Ground-truth best reward and maximizer for a context: 500x500 grid search
/// refined locally. Deterministic.
pub fn optimal_reward(context: &Context) -> (f64, ThrowParams) {
    const GRID: usize = 500;
    let mut best = (f64::MIN, TAU_RANGE.0, G0_RANGE.0);
    for i in 0..GRID {
        let tau = TAU_RANGE.0 + (TAU_RANGE.1 - TAU_RANGE.0) * i as f64 / (GRID - 1) as f64;
        for j in 0..GRID {
            let g0 = G0_RANGE.0 + (G0_RANGE.1 - G0_RANGE.0) * j as f64 / (GRID - 1) as f64;
            let r = reward_clipped(context, tau, g0);
            if r > best.0 {
                best = (r, tau, g0);
            }
        }
    }
    let bounds = param_bounds();
    let refined = crate::optimizers::local_refine(
        |x| reward_clipped(context, x[0], x[1]),
        &[best.1, best.2],
        &bounds,
    );
    let params = ThrowParams {
        tau: refined[0],
        g0: refined[1],
    };
    (reward_clipped(context, params.tau, params.g0), params)
}
