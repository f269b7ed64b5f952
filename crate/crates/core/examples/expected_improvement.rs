//! Ranks a candidate pool by expected improvement under a fitted forest and
//! compares the closed form with a brute-force Monte Carlo estimate.
//!
//! ```bash
//! cargo run --example expected_improvement
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

use hoist::acquisition::{expected_improvement, select_candidates, AcquisitionContext};
use hoist::objectives::{branin, DistortedBranin};
use hoist::space::ConfigIdGen;
use hoist::surrogate::{ForestModel, ForestParams, PosteriorPrediction, Surrogate};

fn main() -> hoist::Result<()> {
    let space = DistortedBranin::space();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut ids = ConfigIdGen::new();

    let seen = space.sample_uniform(30, &mut rng, &mut ids);
    let features = seen.iter().map(|c| space.encode(c)).collect::<hoist::Result<Vec<_>>>()?;
    let losses: Vec<f64> = seen.iter().map(|c| branin(c.real("x1").unwrap(), c.real("x2").unwrap())).collect();
    let forest = ForestModel::fit(&features, &losses, &ForestParams::default())?;

    let y_star = features
        .iter()
        .map(|x| forest.predict_encoded(x).map(|p| p.mean))
        .collect::<hoist::Result<Vec<_>>>()?
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    let ctx = AcquisitionContext { y_star, ..AcquisitionContext::default() };
    println!("model-predicted incumbent (normalized) {y_star:.4}");
    for c in select_candidates(&forest, &space, 3, &ctx, &mut rng, &mut ids)? {
        let p = forest.predict(&c, &space)?;
        println!(
            "  x1={:>7.3} x2={:>7.3}  EI {:.5}  true loss {:.3}",
            c.real("x1").unwrap(),
            c.real("x2").unwrap(),
            expected_improvement(&p, y_star),
            branin(c.real("x1").unwrap(), c.real("x2").unwrap())
        );
    }

    let post = PosteriorPrediction { mean: 0.3, variance: 0.04 };
    let normal = Normal::new(post.mean, post.std_dev()).unwrap();
    let draws = 200_000;
    let mc: f64 = (0..draws)
        .map(|_| (0.25 - normal.inverse_cdf(rng.gen_range(1e-12..1.0))).max(0.0))
        .sum::<f64>()
        / draws as f64;
    println!("EI(mu=0.3, sd=0.2, y*=0.25): closed form {:.5}, monte carlo {mc:.5}", expected_improvement(&post, 0.25));
    Ok(())
}
