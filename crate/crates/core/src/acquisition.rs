//! Expected improvement and pool-based candidate selection.

use rand::Rng;
use statrs::function::erf::erfc;

use crate::error::{HoistError, Result};
use crate::space::{ConfigIdGen, ConfigSpace, Configuration};
use crate::surrogate::{PosteriorPrediction, Surrogate};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal density.
pub fn normal_pdf(z: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// `E[max(y_star - y, 0)]` for `y ~ N(mean, variance)` (minimization).
pub fn expected_improvement(pred: &PosteriorPrediction, y_star: f64) -> f64 {
    let sigma = pred.std_dev();
    let improvement = y_star - pred.mean;
    if sigma == 0.0 {
        return improvement.max(0.0);
    }
    let z = improvement / sigma;
    (improvement * normal_cdf(z) + sigma * normal_pdf(z)).max(0.0)
}

/// Which value plays the incumbent `y*` in EI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IncumbentReference {
    /// Lowest posterior mean over the configurations already evaluated at full resource.
    #[default]
    ModelPredicted,
    /// The lowest observed full-resource loss, which is 0 on the normalized scale.
    Observed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcquisitionContext {
    pub y_star: f64,
    pub pool_size: usize,
    pub random_fraction: f64,
}

impl Default for AcquisitionContext {
    fn default() -> Self {
        AcquisitionContext {
            y_star: 0.0,
            pool_size: 500,
            random_fraction: 0.0,
        }
    }
}

/// Pool indices ordered by EI, best first; ties keep pool order.
pub fn rank_by_ei<S: Surrogate + ?Sized>(
    surrogate: &S,
    space: &ConfigSpace,
    pool: &[Configuration],
    y_star: f64,
) -> Result<Vec<(usize, f64)>> {
    let mut scored = pool
        .iter()
        .enumerate()
        .map(|(i, c)| Ok((i, expected_improvement(&surrogate.predict(c, space)?, y_star))))
        .collect::<Result<Vec<_>>>()?;
    scored.sort_by(|a, b| b.1.total_cmp(&a.1));
    Ok(scored)
}

/// Scores a uniform pool by EI and keeps the best `count`.
pub fn select_candidates<S: Surrogate + ?Sized, R: Rng + ?Sized>(
    surrogate: &S,
    space: &ConfigSpace,
    count: usize,
    ctx: &AcquisitionContext,
    rng: &mut R,
    ids: &mut ConfigIdGen,
) -> Result<Vec<Configuration>> {
    if count == 0 {
        return Err(HoistError::InvalidOptions("selection count must be positive".into()));
    }
    if ctx.pool_size < count {
        return Err(HoistError::InvalidOptions(format!(
            "pool size {} smaller than selection count {count}",
            ctx.pool_size
        )));
    }
    if !(0.0..=1.0).contains(&ctx.random_fraction) {
        return Err(HoistError::InvalidOptions(format!(
            "random fraction {} outside [0, 1]",
            ctx.random_fraction
        )));
    }
    let pool = space.sample_uniform(ctx.pool_size, rng, ids);
    let ranked = rank_by_ei(surrogate, space, &pool, ctx.y_star)?;
    let mut chosen: Vec<Configuration> = ranked
        .iter()
        .take(count)
        .map(|&(i, _)| pool[i].clone())
        .collect();
    let random = (ctx.random_fraction * count as f64).floor() as usize;
    if random > 0 {
        chosen.truncate(count - random);
        chosen.extend(space.sample_uniform(random, rng, ids));
    }
    Ok(chosen)
}
