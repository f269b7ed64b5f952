//! Fits the random-forest surrogate to noisy 1-D data and prints its mean and
//! spread on a grid. The spread grows away from the training points.
//!
//! ```bash
//! cargo run --example forest_surrogate
//! ```

use hoist::surrogate::{ForestModel, ForestParams, Surrogate};

fn main() -> hoist::Result<()> {
    let xs: Vec<f64> = (0..12).map(|i| 0.05 + 0.5 * i as f64 / 11.0).collect();
    let ys: Vec<f64> = xs.iter().map(|x| (6.0 * x).sin() + 0.05 * (40.0 * x).cos()).collect();
    let features: Vec<Vec<f64>> = xs.iter().map(|x| vec![*x]).collect();

    let params = ForestParams { tree_count: 50, ..ForestParams::default() };
    let forest = ForestModel::fit(&features, &ys, &params)?;
    let (lo, hi) = forest.training_normalization();
    println!("targets normalized from [{lo:.3}, {hi:.3}]");

    println!("{:>5} {:>8} {:>8} {:>8}", "x", "truth", "mean", "sd");
    for i in 0..=10 {
        let x = i as f64 / 10.0;
        let p = forest.predict_encoded(&[x])?;
        println!(
            "{x:>5.2} {:>8.3} {:>8.3} {:>8.3}",
            (6.0 * x).sin(),
            forest.denormalize(p.mean),
            p.std_dev() * (hi - lo)
        );
    }
    Ok(())
}
