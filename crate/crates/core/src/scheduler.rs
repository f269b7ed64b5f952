//! Hyperband bracket planning and successive-halving execution.

use crate::error::{EvalError, HoistError, Result};
use crate::history::ReplayCache;
use crate::objectives::Objective;
use crate::space::Configuration;
use crate::store::{max_bracket_index, resource_ladder, EvaluationRecord, EvaluationStore};

/// One rung of a bracket: `n` configurations at `resource`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StagePlan {
    pub n: usize,
    pub resource: f64,
    /// 1-based index into the global resource ladder.
    pub stage_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BracketPlan {
    pub bracket_index: usize,
    pub stages: Vec<StagePlan>,
    pub eta: f64,
    pub max_resource: f64,
}

impl BracketPlan {
    pub fn initial_count(&self) -> usize {
        self.stages[0].n
    }

    /// `sum n_i * r_i`.
    pub fn total_resource(&self) -> f64 {
        self.stages.iter().map(|s| s.n as f64 * s.resource).sum()
    }

    /// `(n, r)` pairs.
    pub fn schedule(&self) -> Vec<(usize, f64)> {
        self.stages.iter().map(|s| (s.n, s.resource)).collect()
    }
}

/// Brackets `s = s_max, ..., 0` of one Hyperband sweep.
pub fn plan_brackets(max_resource: f64, eta: f64) -> Result<Vec<BracketPlan>> {
    let s_max = max_bracket_index(max_resource, eta)?;
    let ladder = resource_ladder(max_resource, eta)?;
    let k = ladder.len();
    Ok((0..=s_max)
        .rev()
        .map(|s| {
            let ratio = (s_max + 1) as f64 / (s + 1) as f64;
            let mut n = (ratio * eta.powi(s as i32) - 1e-9).ceil().max(1.0) as usize;
            let stages = (0..=s)
                .map(|j| {
                    let stage_index = k - s + j;
                    let plan = StagePlan {
                        n,
                        resource: ladder[stage_index - 1],
                        stage_index,
                    };
                    n = ((n as f64 / eta + 1e-9).floor() as usize).max(1);
                    plan
                })
                .collect();
            BracketPlan {
                bracket_index: s,
                stages,
                eta,
                max_resource,
            }
        })
        .collect())
}

/// Total resource of one full sweep.
pub fn sweep_resource(plans: &[BracketPlan]) -> f64 {
    plans.iter().map(BracketPlan::total_resource).sum()
}

/// The `keep` lowest-loss configurations, returned in submission order.
/// Equal losses favour earlier submissions.
pub fn promote(ranked: &[(Configuration, f64)], keep: usize) -> Vec<Configuration> {
    let mut order: Vec<usize> = (0..ranked.len()).collect();
    order.sort_by(|&a, &b| ranked[a].1.total_cmp(&ranked[b].1).then(a.cmp(&b)));
    let mut kept: Vec<usize> = order.into_iter().take(keep).collect();
    kept.sort_unstable();
    kept.into_iter().map(|i| ranked[i].0.clone()).collect()
}

/// Evaluates batches of configurations, optionally in parallel and optionally
/// answering from a replayed history.
pub struct Evaluator<'a> {
    objective: &'a dyn Objective,
    workers: usize,
    replay: Option<&'a ReplayCache>,
}

impl<'a> Evaluator<'a> {
    pub fn new(objective: &'a dyn Objective) -> Self {
        Evaluator {
            objective,
            workers: 1,
            replay: None,
        }
    }

    pub fn workers(mut self, workers: usize) -> Self {
        self.workers = workers.max(1);
        self
    }

    pub fn replay(mut self, cache: Option<&'a ReplayCache>) -> Self {
        self.replay = cache;
        self
    }

    pub fn objective(&self) -> &dyn Objective {
        self.objective
    }

    /// Results come back in input order whatever the completion order.
    /// `first_seq` is the sequence number the first result will be recorded under.
    pub fn evaluate_batch(
        &self,
        configs: &[Configuration],
        resource: f64,
        max_resource: f64,
        first_seq: u64,
    ) -> Result<Vec<Result<f64, EvalError>>> {
        let mut results: Vec<Option<Result<f64, EvalError>>> = vec![None; configs.len()];
        let mut pending = Vec::new();
        for (i, c) in configs.iter().enumerate() {
            match self.replay.map(|r| r.lookup(first_seq + i as u64, c, resource)) {
                Some(Ok(Some(cached))) => results[i] = Some(cached),
                Some(Err(e)) => return Err(e),
                Some(Ok(None)) | None => pending.push(i),
            }
        }

        let eval = |i: usize| self.objective.evaluate(&configs[i], resource, max_resource);
        if self.workers <= 1 || pending.len() <= 1 {
            for i in pending {
                results[i] = Some(eval(i));
            }
        } else {
            let chunk = pending.len().div_ceil(self.workers);
            let done: Vec<Vec<(usize, Result<f64, EvalError>)>> = std::thread::scope(|scope| {
                let handles: Vec<_> = pending
                    .chunks(chunk)
                    .map(|part| scope.spawn(move || part.iter().map(|&i| (i, eval(i))).collect()))
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("evaluation worker panicked"))
                    .collect()
            });
            for (i, r) in done.into_iter().flatten() {
                results[i] = Some(r);
            }
        }
        Ok(results
            .into_iter()
            .map(|r| r.expect("every slot evaluated"))
            .collect())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BracketOutcome {
    pub evaluations: usize,
    pub failures: usize,
    pub resource_used: f64,
}

/// Runs one successive-halving bracket on `configs`, recording every result
/// in `store` in survivor order. `on_record` sees each record as it lands.
pub fn run_bracket(
    plan: &BracketPlan,
    configs: Vec<Configuration>,
    evaluator: &Evaluator<'_>,
    store: &mut EvaluationStore,
    bracket_id: u64,
    on_record: &mut dyn FnMut(&EvaluationRecord),
) -> Result<BracketOutcome> {
    if configs.len() != plan.initial_count() {
        return Err(HoistError::InvalidSchedule(format!(
            "bracket s={} expects {} configurations, got {}",
            plan.bracket_index,
            plan.initial_count(),
            configs.len()
        )));
    }
    let mut outcome = BracketOutcome::default();
    let mut survivors = configs;
    for (j, stage) in plan.stages.iter().enumerate() {
        if survivors.is_empty() {
            break;
        }
        let results = evaluator.evaluate_batch(
            &survivors,
            stage.resource,
            plan.max_resource,
            store.next_seq(),
        )?;
        let mut ranked = Vec::with_capacity(survivors.len());
        for (config, result) in survivors.into_iter().zip(results) {
            outcome.evaluations += 1;
            outcome.resource_used += stage.resource;
            let record = match result {
                Ok(loss) if loss.is_finite() => {
                    ranked.push((config.clone(), loss));
                    store.record(config, stage.stage_index, stage.resource, loss, bracket_id)?
                }
                Ok(loss) => {
                    outcome.failures += 1;
                    let reason = EvalError::NonFinite(loss.to_string()).to_string();
                    log::warn!("configuration {} failed: {reason}", config.id());
                    store.record_failure(config, stage.stage_index, stage.resource, bracket_id, reason)?
                }
                Err(e) => {
                    outcome.failures += 1;
                    log::warn!("configuration {} failed: {e}", config.id());
                    store.record_failure(config, stage.stage_index, stage.resource, bracket_id, e.to_string())?
                }
            };
            on_record(record);
        }
        survivors = match plan.stages.get(j + 1) {
            Some(next) => promote(&ranked, next.n.min(ranked.len())),
            None => Vec::new(),
        };
    }
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::FnObjective;
    use crate::space::{ConfigIdGen, ConfigSpace, ParameterSpec, Value};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn configs(n: usize) -> Vec<Configuration> {
        let space =
            ConfigSpace::new(vec![ParameterSpec::continuous("x", 0.0, 1.0).unwrap()]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        space.sample_uniform(n, &mut rng, &mut ConfigIdGen::new())
    }

    #[test]
    fn nine_three_schedule() {
        let plans = plan_brackets(9.0, 3.0).unwrap();
        assert_eq!(plans.len(), 3);
        assert_eq!(plans[0].bracket_index, 2);
        assert_eq!(plans[0].schedule(), vec![(9, 1.0), (3, 3.0), (1, 9.0)]);
        assert_eq!(plans[0].total_resource(), 27.0);
        assert_eq!(plans[1].schedule(), vec![(5, 3.0), (1, 9.0)]);
        assert_eq!(plans[2].schedule(), vec![(3, 9.0)]);
        assert_eq!(
            plans[1].stages.iter().map(|s| s.stage_index).collect::<Vec<_>>(),
            vec![2, 3]
        );
    }

    #[test]
    fn bracket_structure_invariants() {
        for (r, eta) in [(27.0, 3.0), (81.0, 3.0), (16.0, 2.0), (100.0, 4.0), (10.0, 3.0)] {
            let plans = plan_brackets(r, eta).unwrap();
            for p in &plans {
                assert_eq!(p.stages.len(), p.bracket_index + 1);
                assert_eq!(p.stages.last().unwrap().resource, r);
                for w in p.stages.windows(2) {
                    assert!((w[1].resource - w[0].resource * eta).abs() < 1e-9 * r);
                    assert_eq!(w[1].n, ((w[0].n as f64 / eta).floor() as usize).max(1));
                }
            }
        }
        assert!(plan_brackets(0.9, 3.0).is_err());
    }

    #[test]
    fn promote_examples() {
        let cs = configs(3);
        let ranked = |losses: &[f64]| -> Vec<(Configuration, f64)> {
            cs.iter().cloned().zip(losses.iter().copied()).collect()
        };
        assert_eq!(promote(&ranked(&[0.9, 0.1, 0.5]), 1), vec![cs[1].clone()]);
        assert_eq!(promote(&ranked(&[0.2, 0.2, 0.3]), 2), cs[..2].to_vec());
        assert_eq!(promote(&ranked(&[0.3, 0.1, 0.2]), 3), cs.clone());
    }

    fn index_objective() -> impl Objective {
        FnObjective::new("index", |c: &Configuration, _r, _m| match c.get("idx") {
            Some(Value::Int(i)) => Ok(*i as f64),
            _ => Err(EvalError::Other("no idx".into())),
        })
    }

    fn indexed(n: usize) -> Vec<Configuration> {
        let space = ConfigSpace::new(vec![ParameterSpec::integer("idx", 0, 100).unwrap()]).unwrap();
        (0..n)
            .map(|i| {
                space
                    .configuration(i as u64, [("idx".to_string(), Value::Int(i as i64))].into())
                    .unwrap()
            })
            .collect()
    }

    #[test]
    fn monotone_objective_trace() {
        let plan = &plan_brackets(9.0, 3.0).unwrap()[0];
        let mut store = EvaluationStore::new(9.0, 3.0).unwrap();
        let objective = index_objective();
        let out = run_bracket(plan, indexed(9), &Evaluator::new(&objective), &mut store, 0, &mut |_| {}).unwrap();
        let ids = |i: usize| store.stage(i).unwrap().configs().map(|c| c.id()).collect::<Vec<_>>();
        assert_eq!(ids(1), (0..9).collect::<Vec<_>>());
        assert_eq!(ids(2), vec![0, 1, 2]);
        assert_eq!(ids(3), vec![0]);
        assert_eq!(out.resource_used, 27.0);
        assert_eq!(out.evaluations, 13);
    }

    #[test]
    fn equal_losses_keep_submission_order() {
        let plan = &plan_brackets(9.0, 3.0).unwrap()[0];
        let mut store = EvaluationStore::new(9.0, 3.0).unwrap();
        let flat = FnObjective::new("flat", |_c: &Configuration, _r, _m| Ok(1.0));
        let cs = indexed(9);
        run_bracket(plan, cs.clone(), &Evaluator::new(&flat), &mut store, 0, &mut |_| {}).unwrap();
        let second: Vec<u64> = store.stage(2).unwrap().configs().map(|c| c.id()).collect();
        assert_eq!(second, vec![0, 1, 2]);
    }

    #[test]
    fn single_stage_bracket_goes_to_complete_data() {
        let plan = &plan_brackets(9.0, 3.0).unwrap()[2];
        let mut store = EvaluationStore::new(9.0, 3.0).unwrap();
        let objective = index_objective();
        run_bracket(plan, indexed(3), &Evaluator::new(&objective), &mut store, 0, &mut |_| {}).unwrap();
        assert_eq!(store.complete().len(), 3);
        assert_eq!(store.stage(1).unwrap().len() + store.stage(2).unwrap().len(), 0);
    }

    #[test]
    fn failures_are_never_promoted() {
        let plan = &plan_brackets(9.0, 3.0).unwrap()[0];
        let mut store = EvaluationStore::new(9.0, 3.0).unwrap();
        // idx 0 and 1 fail, so 2, 3, 4 go through
        let objective = FnObjective::new("partial", |c: &Configuration, _r, _m| match c.get("idx") {
            Some(Value::Int(i)) if *i < 2 => Err(EvalError::Other("crash".into())),
            Some(Value::Int(i)) => Ok(*i as f64),
            _ => unreachable!(),
        });
        let out = run_bracket(plan, indexed(9), &Evaluator::new(&objective), &mut store, 0, &mut |_| {}).unwrap();
        assert_eq!(out.failures, 2);
        assert_eq!(store.failed().len(), 2);
        assert_eq!(store.stage(1).unwrap().len(), 7);
        let second: Vec<u64> = store.stage(2).unwrap().configs().map(|c| c.id()).collect();
        assert_eq!(second, vec![2, 3, 4]);
    }

    #[test]
    fn parallel_workers_merge_in_order() {
        let plan = &plan_brackets(27.0, 3.0).unwrap()[0];
        let objective = FnObjective::new("sleepy", |c: &Configuration, r, _m| {
            let i = c.real("idx").unwrap();
            std::thread::sleep(std::time::Duration::from_micros(((50.0 - i) * 20.0) as u64));
            Ok((i * 7.0) % 11.0 + 1.0 / r)
        });
        let run = |workers| {
            let mut store = EvaluationStore::new(27.0, 3.0).unwrap();
            let mut seen = Vec::new();
            run_bracket(
                plan,
                indexed(27),
                &Evaluator::new(&objective).workers(workers),
                &mut store,
                0,
                &mut |r| seen.push((r.config.id(), r.created_seq)),
            )
            .unwrap();
            (store, seen)
        };
        let (serial, a) = run(1);
        let (parallel, b) = run(4);
        assert_eq!(serial, parallel);
        assert_eq!(a, b);
    }
}
