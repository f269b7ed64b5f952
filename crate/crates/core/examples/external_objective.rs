//! Optimizes a shell script that speaks the JSON-lines protocol: one request
//! on stdin, one `{"loss": ...}` reply on stdout.
//!
//! ```bash
//! cargo run --example external_objective
//! ```

use std::os::unix::fs::PermissionsExt;
use std::time::Duration;

use hoist::objectives::{ExternalCommand, Objective};
use hoist::optimizer::{run, Mode, RunOptions};
use hoist::space::ConfigSpace;

// Loss falls with the resource and is smallest near x = 0.3.
const SCRIPT: &str = r#"#!/bin/sh
read -r line
x=$(printf '%s' "$line" | sed 's/.*"x":\([-0-9.eE]*\).*/\1/')
r=$(printf '%s' "$line" | sed 's/.*"resource":\([-0-9.eE]*\).*/\1/')
awk -v x="$x" -v r="$r" 'BEGIN { printf "{\"loss\": %.6f}\n", (x - 0.3) ^ 2 + 1 / r }'
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join(format!("hoist-external-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let script = dir.join("objective.sh");
    std::fs::write(&script, SCRIPT)?;
    std::fs::set_permissions(&script, std::fs::Permissions::from_mode(0o755))?;

    let space = ConfigSpace::from_json_str(r#"{"parameters":[{"name":"x","kind":"continuous","lower":0,"upper":1}]}"#)?;
    let objective = ExternalCommand::new(script.to_string_lossy(), vec![], Duration::from_secs(5));

    let probe = space.configuration(0, [("x".to_string(), hoist::space::Value::Real(0.5))].into())?;
    println!("request: {}", ExternalCommand::request_line(&probe, 3.0, 9.0));
    println!("reply -> loss {:?}", objective.evaluate(&probe, 3.0, 9.0));

    let options = RunOptions { mode: Mode::Hoist, max_resource: 9.0, total_bracket_loops: 2, workers: 4, seed: 1, ..RunOptions::default() };
    let result = run(&space, &objective, &options)?;
    let best = result.incumbent().expect("complete evaluations");
    println!(
        "{} evaluations, best x = {:.4} with loss {:.4}",
        result.store.total_records(),
        best.config.real("x").unwrap(),
        best.loss
    );
    std::fs::remove_dir_all(&dir).ok();
    Ok(())
}
