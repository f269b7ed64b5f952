//! The optimization loop and its baselines.
//!
//! In `hoist` mode every Hyperband bracket draws its initial configurations by
//! expected improvement under the stage ensemble; after the bracket the stage
//! surrogates are refit and the ensemble weights updated. The baselines share
//! the same loop: `hyperband_random` samples uniformly, `random` and
//! `complete_only_bo` spend each bracket's resource on full-resource
//! evaluations only.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::acquisition::{select_candidates, AcquisitionContext, IncumbentReference};
use crate::ensemble::{learn_weights, EnsembleSurrogate, WeightVector};
use crate::error::{HoistError, Result};
use crate::history::{ReplayCache, RunObserver, WeightsLine};
use crate::objectives::Objective;
use crate::scheduler::{plan_brackets, run_bracket, BracketPlan, Evaluator, StagePlan};
use crate::space::{ConfigIdGen, ConfigSpace, Configuration};
use crate::store::{EvaluationRecord, EvaluationStore};
use crate::surrogate::{fit_forest, ForestModel, ForestParams, Surrogate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Hoist,
    Random,
    HyperbandRandom,
    CompleteOnlyBo,
}

impl Mode {
    pub const ALL: [Mode; 4] = [
        Mode::Hoist,
        Mode::Random,
        Mode::HyperbandRandom,
        Mode::CompleteOnlyBo,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Hoist => "hoist",
            Mode::Random => "random",
            Mode::HyperbandRandom => "hyperband_random",
            Mode::CompleteOnlyBo => "complete_only_bo",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = HoistError;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s || m.as_str().replace('_', "-") == s)
            .ok_or_else(|| {
                HoistError::InvalidOptions(format!(
                    "unknown mode `{s}` (expected hoist, random, hyperband_random or complete_only_bo)"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestOptions {
    pub tree_count: usize,
    pub max_features_fraction: f64,
    pub min_samples_split: usize,
    pub bootstrap: bool,
    pub variance_floor: f64,
}

impl Default for ForestOptions {
    fn default() -> Self {
        let p = ForestParams::default();
        ForestOptions {
            tree_count: p.tree_count,
            max_features_fraction: p.max_features_fraction,
            min_samples_split: p.min_samples_split,
            bootstrap: p.bootstrap,
            variance_floor: p.variance_floor,
        }
    }
}

impl ForestOptions {
    pub fn params(&self, seed: u64) -> ForestParams {
        ForestParams {
            tree_count: self.tree_count,
            max_features_fraction: self.max_features_fraction,
            min_samples_split: self.min_samples_split,
            bootstrap: self.bootstrap,
            variance_floor: self.variance_floor,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub mode: Mode,
    pub max_resource: f64,
    pub eta: f64,
    /// Full Hyperband sweeps (`s = s_max ..= 0`) to run.
    pub total_bracket_loops: usize,
    pub rho: f64,
    pub forest: ForestOptions,
    pub pool_size: usize,
    pub random_fraction: f64,
    pub incumbent_reference: IncumbentReference,
    pub seed: u64,
    /// Concurrent evaluations within a stage.
    pub workers: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            mode: Mode::Hoist,
            max_resource: 27.0,
            eta: 3.0,
            total_bracket_loops: 4,
            rho: 0.5,
            forest: ForestOptions::default(),
            pool_size: 500,
            random_fraction: 0.0,
            incumbent_reference: IncumbentReference::ModelPredicted,
            seed: 0,
            workers: 1,
        }
    }
}

impl RunOptions {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HoistError::InvalidOptions(m));
        if self.total_bracket_loops == 0 {
            return bad("at least one bracket loop is required".into());
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return bad(format!("rho {} outside [0, 1]", self.rho));
        }
        if self.pool_size == 0 {
            return bad("pool size must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.random_fraction) {
            return bad(format!("random fraction {} outside [0, 1]", self.random_fraction));
        }
        self.forest.params(0).validate()?;
        plan_brackets(self.max_resource, self.eta)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub cum_resource: f64,
    pub best_loss: f64,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub mode: Mode,
    pub store: EvaluationStore,
    pub weights: Vec<WeightsLine>,
    /// One point per evaluation once a full-resource result exists.
    pub trace: Vec<TracePoint>,
    pub total_resource: f64,
}

impl RunResult {
    pub fn incumbent(&self) -> Option<&EvaluationRecord> {
        self.store.incumbent()
    }

    pub fn final_weights(&self) -> Option<&[f64]> {
        self.weights.last().map(|w| w.c.as_slice())
    }

    /// `cum_resource,best_loss` with one row per trace point.
    pub fn convergence_csv(&self) -> String {
        let mut out = String::from("cum_resource,best_loss\n");
        for p in &self.trace {
            out.push_str(&format!("{},{}\n", p.cum_resource, p.best_loss));
        }
        out
    }
}

/// Deterministic per-fit forest seed.
fn fit_seed(run_seed: u64, bracket_id: u64, stage_index: usize) -> u64 {
    let mut z = run_seed
        ^ bracket_id.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (stage_index as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Fits one forest per stage that has at least 2 records.
pub fn update_surrogates(
    store: &EvaluationStore,
    space: &ConfigSpace,
    forest: &ForestOptions,
    run_seed: u64,
    bracket_id: u64,
) -> Result<Vec<Option<ForestModel>>> {
    store
        .stages()
        .iter()
        .map(|stage| {
            if stage.len() < 2 {
                return Ok(None);
            }
            let params = forest.params(fit_seed(run_seed, bracket_id, stage.stage_index));
            fit_forest(stage, space, &params).map(Some)
        })
        .collect()
}

/// Reference value for EI on the normalized scale.
fn incumbent_reference<S: Surrogate>(
    surrogate: &S,
    store: &EvaluationStore,
    space: &ConfigSpace,
    reference: IncumbentReference,
) -> Result<f64> {
    match reference {
        IncumbentReference::Observed => Ok(0.0),
        IncumbentReference::ModelPredicted => {
            let complete = store.complete();
            let configs: Vec<&Configuration> = if complete.is_empty() {
                store.stages().iter().flat_map(|s| s.configs()).collect()
            } else {
                complete.configs().collect()
            };
            let mut best = f64::INFINITY;
            for c in configs {
                best = best.min(surrogate.predict(c, space)?.mean);
            }
            Ok(if best.is_finite() { best } else { 0.0 })
        }
    }
}

/// Everything `run` needs besides the options.
pub struct RunContext<'a> {
    pub observer: &'a mut dyn RunObserver,
    pub replay: Option<&'a ReplayCache>,
}

pub fn run(space: &ConfigSpace, objective: &dyn Objective, options: &RunOptions) -> Result<RunResult> {
    run_with(
        space,
        objective,
        options,
        RunContext {
            observer: &mut crate::history::NoopObserver,
            replay: None,
        },
    )
}

pub fn run_with(
    space: &ConfigSpace,
    objective: &dyn Objective,
    options: &RunOptions,
    ctx: RunContext<'_>,
) -> Result<RunResult> {
    options.validate()?;
    let RunContext { observer, replay } = ctx;
    let plans = plan_brackets(options.max_resource, options.eta)?;
    let mut store = EvaluationStore::new(options.max_resource, options.eta)?;
    let k = store.stage_count();
    let r_max = options.max_resource;

    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut ids = ConfigIdGen::new();
    let evaluator = Evaluator::new(objective)
        .workers(options.workers)
        .replay(replay);

    let mut weights = WeightVector::uniform(k);
    let mut members: Vec<Option<ForestModel>> = vec![None; k];
    let mut complete_member: Option<ForestModel> = None;
    let mut weight_log = Vec::new();
    let mut trace = Vec::new();
    let mut cum_resource = 0.0;
    let mut best = f64::INFINITY;
    let mut bracket_id: u64 = 0;

    for _sweep in 0..options.total_bracket_loops {
        for plan in &plans {
            let acq = |count: usize, y_star: f64| AcquisitionContext {
                y_star,
                pool_size: options.pool_size.max(count),
                random_fraction: options.random_fraction,
            };
            // Full-resource baselines spend the bracket's budget on evaluations at R.
            let full_only = |plan: &BracketPlan| {
                let n = ((plan.total_resource() / r_max + 1e-9).floor() as usize).max(1);
                BracketPlan {
                    bracket_index: 0,
                    stages: vec![StagePlan {
                        n,
                        resource: r_max,
                        stage_index: k,
                    }],
                    eta: plan.eta,
                    max_resource: r_max,
                }
            };

            let (plan_used, configs) = match options.mode {
                Mode::Random => {
                    let p = full_only(plan);
                    let c = space.sample_uniform(p.initial_count(), &mut rng, &mut ids);
                    (p, c)
                }
                Mode::HyperbandRandom => {
                    let c = space.sample_uniform(plan.initial_count(), &mut rng, &mut ids);
                    (plan.clone(), c)
                }
                Mode::Hoist => {
                    let n = plan.initial_count();
                    let ensemble = EnsembleSurrogate::new(std::mem::take(&mut members), weights.clone())?;
                    let c = if ensemble.is_usable() {
                        let y_star = incumbent_reference(&ensemble, &store, space, options.incumbent_reference)?;
                        select_candidates(&ensemble, space, n, &acq(n, y_star), &mut rng, &mut ids)?
                    } else {
                        space.sample_uniform(n, &mut rng, &mut ids)
                    };
                    members = ensemble.into_members();
                    (plan.clone(), c)
                }
                Mode::CompleteOnlyBo => {
                    let p = full_only(plan);
                    let n = p.initial_count();
                    let c = match &complete_member {
                        Some(model) => {
                            let y_star = incumbent_reference(model, &store, space, options.incumbent_reference)?;
                            select_candidates(model, space, n, &acq(n, y_star), &mut rng, &mut ids)?
                        }
                        None => space.sample_uniform(n, &mut rng, &mut ids),
                    };
                    (p, c)
                }
            };

            let outcome = run_bracket(&plan_used, configs, &evaluator, &mut store, bracket_id, &mut |record| {
                cum_resource += record.resource;
                if record.stage_index == k && !record.is_failed() {
                    best = best.min(record.loss);
                }
                if best.is_finite() {
                    trace.push(TracePoint {
                        cum_resource,
                        best_loss: best,
                    });
                }
                observer.on_record(record);
            })?;
            log::debug!(
                "bracket {bracket_id} (s={}): {} evaluations, {} failed, best {best}",
                plan.bracket_index,
                outcome.evaluations,
                outcome.failures
            );
            if outcome.failures * 2 > outcome.evaluations {
                return Err(HoistError::Aborted(format!(
                    "{} of {} evaluations failed in bracket {bracket_id} (objective `{}`)",
                    outcome.failures,
                    outcome.evaluations,
                    objective.name()
                )));
            }

            match options.mode {
                Mode::Hoist => {
                    members = update_surrogates(&store, space, &options.forest, options.seed, bracket_id)?;
                    if store.complete().len() >= 2 {
                        let update = learn_weights(&store, space, &members, &weights, options.rho)?;
                        weights = update.weights;
                        let line = WeightsLine::new(
                            weights.iteration(),
                            weights.weights().to_vec(),
                            update.delta_raw,
                            update.delta,
                        );
                        observer.on_weights(&line);
                        weight_log.push(line);
                    }
                }
                Mode::CompleteOnlyBo => {
                    let complete = store.complete();
                    if complete.len() >= 2 {
                        let params = options.forest.params(fit_seed(options.seed, bracket_id, k));
                        complete_member = Some(fit_forest(complete, space, &params)?);
                    }
                }
                Mode::Random | Mode::HyperbandRandom => {}
            }
            bracket_id += 1;
        }
    }

    Ok(RunResult {
        mode: options.mode,
        store,
        weights: weight_log,
        trace,
        total_resource: cum_resource,
    })
}
