//! Loads a mixed search space from JSON, samples it and shows the unit-cube
//! encoding the surrogates see.
//!
//! ```bash
//! cargo run --example search_space
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use hoist::space::{ConfigIdGen, ConfigSpace};

const SPACE: &str = r#"{
  "parameters": [
    {"name": "lr", "kind": "continuous-log", "lower": 1e-5, "upper": 1e-1},
    {"name": "dropout", "kind": "continuous", "lower": 0.0, "upper": 0.5},
    {"name": "layers", "kind": "integer", "lower": 1, "upper": 4},
    {"name": "optimizer", "kind": "categorical", "choices": ["sgd", "adam", "rmsprop"]}
  ]
}"#;

fn main() -> hoist::Result<()> {
    let space = ConfigSpace::from_json_str(SPACE)?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut ids = ConfigIdGen::new();

    for config in space.sample_uniform(5, &mut rng, &mut ids) {
        let x = space.encode(&config)?;
        let back = space.decode(config.id(), &x)?;
        println!("#{} {}", config.id(), serde_json::to_string(config.values()).unwrap());
        println!("    encoded {x:.3?}  round trip ok: {}", back.same_values(&config));
    }

    // Space-file mistakes point at the offending field.
    let bad = r#"{"parameters": [{"name": "lr", "kind": "continuous-log", "lower": 0, "upper": 1}]}"#;
    if let Err(e) = ConfigSpace::from_json_str(bad) {
        println!("rejected: {e}");
    }
    Ok(())
}
