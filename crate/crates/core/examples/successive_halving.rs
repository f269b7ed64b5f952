//! Prints every Hyperband bracket for a resource budget and then runs the most
//! exploratory one on the distorted Branin function.
//!
//! ```bash
//! cargo run --example successive_halving -- [max_resource] [eta]
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use hoist::objectives::DistortedBranin;
use hoist::scheduler::{plan_brackets, run_bracket, sweep_resource, Evaluator};
use hoist::space::ConfigIdGen;
use hoist::store::EvaluationStore;

fn main() -> hoist::Result<()> {
    let mut args = std::env::args().skip(1);
    let max_resource: f64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(27.0);
    let eta: f64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(3.0);

    let plans = plan_brackets(max_resource, eta)?;
    for plan in &plans {
        let stages: Vec<String> = plan
            .schedule()
            .iter()
            .map(|(n, r)| format!("{n}x{r}"))
            .collect();
        println!("s={}  {}  total {}", plan.bracket_index, stages.join(" -> "), plan.total_resource());
    }
    println!("one sweep costs {} resource units", sweep_resource(&plans));

    let space = DistortedBranin::space();
    let mut store = EvaluationStore::new(max_resource, eta)?;
    let plan = &plans[0];
    let configs = space.sample_uniform(plan.initial_count(), &mut ChaCha8Rng::seed_from_u64(4), &mut ConfigIdGen::new());
    let evaluator = Evaluator::new(&DistortedBranin).workers(4);
    let outcome = run_bracket(plan, configs, &evaluator, &mut store, 0, &mut |r| {
        if r.resource == max_resource {
            println!("survivor #{} reached r={} with loss {:.4}", r.config.id(), r.resource, r.loss);
        }
    })?;
    println!("{} evaluations, {} resource units", outcome.evaluations, outcome.resource_used);
    for stage in store.stages() {
        println!("  stage {} (r={}): {} records", stage.stage_index, stage.resource_level, stage.len());
    }
    Ok(())
}
