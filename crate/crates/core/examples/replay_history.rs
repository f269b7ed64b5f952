//! Streams a run to history.jsonl, then rebuilds the evaluation store and the
//! weight trajectory from that file alone.
//!
//! ```bash
//! cargo run --example replay_history
//! ```

use hoist::history::{read_history, replay, HistoryWriter, RunHeader};
use hoist::objectives::CurveBench;
use hoist::optimizer::{run_with, RunContext, RunOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join(format!("hoist-replay-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("history.jsonl");

    let space = CurveBench::space();
    let options = RunOptions { max_resource: 9.0, total_bracket_loops: 3, seed: 21, ..RunOptions::default() };
    let header = RunHeader::new(serde_json::to_value(&options).unwrap(), &space);
    let mut writer = HistoryWriter::create(&path, &header)?;
    let live = run_with(&space, &CurveBench, &options, RunContext { observer: &mut writer, replay: None })?;
    writer.finish_check()?;

    let events = read_history(&path)?;
    let replayed = replay(&events, &space, options.max_resource, options.eta)?;
    println!("{} events in {}", events.len(), path.display());
    println!(
        "records: live {}, replayed {}",
        live.store.total_records(),
        replayed.store.total_records()
    );
    println!(
        "incumbent loss: live {:?}, replayed {:?}",
        live.incumbent().map(|r| r.loss),
        replayed.store.incumbent().map(|r| r.loss)
    );
    for w in &replayed.weights {
        println!("  iteration {:>2}: c = {:.3?}", w.iteration, w.c);
    }
    std::fs::remove_dir_all(&dir).ok();
    Ok(())
}
