//! Steps through weight learning by hand: run a few brackets, fit one forest
//! per stage, then watch the weights move as the full-resource data grows.
//!
//! ```bash
//! cargo run --example ensemble_weights -- [deceptive]
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use hoist::ensemble::{learn_weights, EnsembleSurrogate, WeightVector};
use hoist::objectives::{CurveBench, DeceptiveBench, Objective};
use hoist::optimizer::{update_surrogates, ForestOptions};
use hoist::scheduler::{plan_brackets, run_bracket, Evaluator};
use hoist::space::{ConfigIdGen, ConfigSpace};
use hoist::store::EvaluationStore;
use hoist::surrogate::Surrogate;

fn main() -> hoist::Result<()> {
    let deceptive = std::env::args().nth(1).is_some_and(|a| a == "deceptive");
    let (space, objective): (ConfigSpace, Box<dyn Objective>) = if deceptive {
        (DeceptiveBench::space(), Box::new(DeceptiveBench::default()))
    } else {
        (CurveBench::space(), Box::new(CurveBench))
    };
    println!("objective {}", objective.name());

    let plans = plan_brackets(27.0, 3.0)?;
    let mut store = EvaluationStore::new(27.0, 3.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut ids = ConfigIdGen::new();
    let evaluator = Evaluator::new(objective.as_ref());
    let mut c = WeightVector::uniform(store.stage_count());

    for (bracket_id, plan) in plans.iter().cycle().take(8).enumerate() {
        let configs = space.sample_uniform(plan.initial_count(), &mut rng, &mut ids);
        run_bracket(plan, configs, &evaluator, &mut store, bracket_id as u64, &mut |_| {})?;
        if store.complete().len() < 2 {
            continue;
        }
        let members = update_surrogates(&store, &space, &ForestOptions::default(), 8, bracket_id as u64)?;
        let update = learn_weights(&store, &space, &members, &c, 0.5)?;
        println!(
            "after bracket {bracket_id}: |D_K| = {:>2}  corr {:>6.3?}  c = {:.3?}",
            store.complete().len(),
            update.delta_raw,
            update.weights.weights()
        );
        c = update.weights;

        let ensemble = EnsembleSurrogate::new(members, c.clone())?;
        if let Some(best) = store.incumbent() {
            let p = ensemble.predict(&best.config, &space)?;
            println!("    ensemble at incumbent: mean {:.3}, sd {:.3}", p.mean, p.std_dev());
        }
    }
    Ok(())
}
