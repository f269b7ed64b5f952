//! Runs hoist against the three baselines on the curve and deceptive
//! benchmarks with an equal resource budget and prints the median final loss
//! per mode.
//!
//! ```bash
//! cargo run --release --example compare_baselines -- [seeds] [loops]
//! ```

use hoist::objectives::{CurveBench, DeceptiveBench, Objective};
use hoist::optimizer::{run, Mode, RunOptions};
use hoist::space::ConfigSpace;

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn report(name: &str, space: &ConfigSpace, objective: &dyn Objective, seeds: u64, loops: usize) {
    println!("{name}: R = 27, eta = 3, {loops} sweeps, {seeds} seeds");
    for mode in Mode::ALL {
        let mut finals = Vec::new();
        let mut low_weight = Vec::new();
        for seed in 0..seeds {
            let options = RunOptions {
                mode,
                max_resource: 27.0,
                eta: 3.0,
                total_bracket_loops: loops,
                seed,
                ..RunOptions::default()
            };
            let result = run(space, objective, &options).expect("run");
            finals.push(result.incumbent().map_or(f64::INFINITY, |r| r.loss));
            if let Some(c) = result.final_weights() {
                low_weight.push(c[..c.len() - 1].iter().sum::<f64>());
            }
        }
        print!("  {:<18} median final loss {:.5}", mode.as_str(), median(finals));
        if !low_weight.is_empty() {
            print!("   median weight below R: {:.4}", median(low_weight));
        }
        println!();
    }
}

fn main() {
    let mut args = std::env::args().skip(1);
    let seeds = args.next().and_then(|s| s.parse().ok()).unwrap_or(10);
    let loops = args.next().and_then(|s| s.parse().ok()).unwrap_or(4);
    report("curve-bench", &CurveBench::space(), &CurveBench, seeds, loops);
    report("deceptive-bench", &DeceptiveBench::space(), &DeceptiveBench::default(), seeds, loops);
}
