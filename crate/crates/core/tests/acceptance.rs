//! Acceptance gate. Runs every criterion, prints one PASS/FAIL line each, and
//! exits non-zero if any fails.
//!
//! ```bash
//! cargo test -p hoist --test acceptance
//! ```

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hoist::acquisition::expected_improvement;
use hoist::ensemble::{learn_weights, EnsembleSurrogate, WeightVector};
use hoist::error::EvalError;
use hoist::objectives::{eval_curve_bench, CurveBench, DeceptiveBench, ExternalCommand, Objective};
use hoist::optimizer::{run, Mode, RunOptions};
use hoist::scheduler::plan_brackets;
use hoist::space::{ConfigSpace, ParameterSpec, Value};
use hoist::store::EvaluationStore;
use hoist::surrogate::{PosteriorPrediction, Surrogate};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed < limit, || format!("took {elapsed:?}, limit {limit:?}"))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Textbook Pearson correlation, kept separate from the library's.
fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va.sqrt() * vb.sqrt())
}

/// Composite Simpson integration of `E[max(y* - y, 0)]` under `N(mean, sd^2)`.
fn ei_quadrature(mean: f64, sd: f64, y_star: f64) -> f64 {
    let lo = mean - 12.0 * sd;
    if y_star <= lo {
        return 0.0;
    }
    let hi = y_star;
    let n = 200_000;
    let h = (hi - lo) / n as f64;
    let f = |y: f64| {
        let z = (y - mean) / sd;
        (y_star - y) * (-0.5 * z * z).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
    };
    let mut acc = f(lo) + f(hi);
    for i in 1..n {
        acc += f(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * h / 3.0
}

fn ac1_bracket_schedule() -> Check {
    let start = Instant::now();
    let plans = plan_brackets(9.0, 3.0).map_err(|e| e.to_string())?;
    let bracket = plans
        .iter()
        .find(|p| p.bracket_index == 2)
        .ok_or("no bracket s=2")?;
    let elapsed = start.elapsed();
    ensure(bracket.schedule() == vec![(9, 1.0), (3, 3.0), (1, 9.0)], || {
        format!("schedule {:?}", bracket.schedule())
    })?;
    ensure(bracket.total_resource() == 27.0, || {
        format!("total resource {}", bracket.total_resource())
    })?;
    within(elapsed, Duration::from_millis(1))?;
    Ok(format!("[(9,1),(3,3),(1,9)], 27 units, {elapsed:?}"))
}

/// Prediction table keyed by the single encoded coordinate.
struct TableMember(Vec<(f64, f64)>);

impl Surrogate for TableMember {
    fn predict_encoded(&self, x: &[f64]) -> hoist::Result<PosteriorPrediction> {
        let mean = self
            .0
            .iter()
            .find(|(k, _)| (k - x[0]).abs() < 1e-12)
            .map(|(_, m)| *m)
            .expect("fixture point");
        Ok(PosteriorPrediction { mean, variance: 0.01 })
    }
}

fn ac2_weight_learning_oracle() -> Check {
    let space = ConfigSpace::new(vec![ParameterSpec::continuous("x", 0.0, 1.0).unwrap()]).unwrap();
    let xs = [0.1, 0.2, 0.3, 0.4, 0.5];
    let losses = [2.5, 1.5, 3.5, 2.0, 3.0];
    let mut store = EvaluationStore::new(9.0, 3.0).unwrap();
    for (i, (&x, &l)) in xs.iter().zip(&losses).enumerate() {
        let c = space
            .configuration(i as u64, BTreeMap::from([("x".to_string(), Value::Real(x))]))
            .unwrap();
        store.record(c, 3, 9.0, l, 0).unwrap();
    }
    let table = |preds: [f64; 5]| Some(TableMember(xs.iter().copied().zip(preds).collect()));
    let members = vec![
        table([0.35, 0.20, 0.40, 0.15, 0.50]),
        table([0.90, 0.20, 0.10, 0.70, 0.30]),
        table([0.31, 0.12, 0.52, 0.18, 0.41]),
    ];
    let c_prev = WeightVector::new(vec![0.2, 0.3, 0.5], 0).unwrap();

    let start = Instant::now();
    let update = learn_weights(&store, &space, &members, &c_prev, 0.5).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();

    // Independent numpy computation (corrcoef, clip, square-normalize, blend).
    let raw = [0.8232319499226777, -0.27617238536949706, 0.9953665535961767];
    let amplified = [0.4061881268241629, 0.0, 0.5938118731758371];
    let expected = [0.30309406341208145, 0.15, 0.5469059365879185];
    for i in 0..3 {
        ensure((update.delta_raw[i] - raw[i]).abs() < 1e-12, || {
            format!("raw delta {:?}", update.delta_raw)
        })?;
        let amp = update.delta.as_ref().ok_or("amplified delta vanished")?;
        ensure((amp[i] - amplified[i]).abs() < 1e-12, || format!("amplified {amp:?}"))?;
        ensure((update.weights.weights()[i] - expected[i]).abs() < 1e-12, || {
            format!("c_next {:?}", update.weights.weights())
        })?;
    }
    within(elapsed, Duration::from_millis(1))?;
    Ok(format!("c_next = {:?}, {elapsed:?}", update.weights.weights()))
}

fn ac3_ei_quadrature() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let mean: f64 = rng.gen_range(-1.0..1.0);
        let variance: f64 = 10f64.powf(rng.gen_range(-3.0..0.5));
        let y_star: f64 = rng.gen_range(-1.0..1.0);
        let closed = expected_improvement(&PosteriorPrediction { mean, variance }, y_star);
        let numeric = ei_quadrature(mean, variance.sqrt(), y_star);
        let err = (closed - numeric).abs();
        worst = worst.max(err);
        ensure(err < 1e-6, || {
            format!("mean {mean} var {variance} y* {y_star}: closed {closed} vs quadrature {numeric}")
        })?;
    }
    let elapsed = start.elapsed();
    within(elapsed, Duration::from_secs(1))?;
    Ok(format!("100 triples, max |diff| {worst:.2e}, {elapsed:?}"))
}

struct ConstMember(PosteriorPrediction);

impl Surrogate for ConstMember {
    fn predict_encoded(&self, _x: &[f64]) -> hoist::Result<PosteriorPrediction> {
        Ok(self.0)
    }
}

fn ac4_ensemble_formula() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut elapsed = Duration::ZERO;
    for trial in 0..20 {
        let k = rng.gen_range(1..=7);
        let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.01..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let mut c: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let head: f64 = c[..k - 1].iter().sum();
        c[k - 1] = (1.0 - head).max(0.0);
        let posts: Vec<PosteriorPrediction> = (0..k)
            .map(|_| PosteriorPrediction {
                mean: rng.gen_range(0.0..1.0),
                variance: rng.gen_range(0.0..0.3),
            })
            .collect();
        let ens = EnsembleSurrogate::new(
            posts.iter().map(|p| Some(ConstMember(*p))).collect(),
            WeightVector::new(c.clone(), 0).map_err(|e| e.to_string())?,
        )
        .map_err(|e| e.to_string())?;
        let start = Instant::now();
        let got = ens.predict_encoded(&[0.5]).map_err(|e| e.to_string())?;
        elapsed += start.elapsed();
        let mean: f64 = c.iter().zip(&posts).map(|(w, p)| w * p.mean).sum();
        let var: f64 = c.iter().zip(&posts).map(|(w, p)| w * w * p.variance).sum();
        ensure((got.mean - mean).abs() < 1e-12 && (got.variance - var).abs() < 1e-12, || {
            format!("trial {trial} K={k}: got {got:?}, expected ({mean}, {var})")
        })?;
    }
    within(elapsed, Duration::from_millis(1))?;
    Ok(format!("20 random ensembles (K <= 7), {elapsed:?}"))
}

fn ac5_weight_invariants() -> Check {
    let start = Instant::now();
    let options = RunOptions {
        mode: Mode::Hoist,
        max_resource: 27.0,
        eta: 3.0,
        total_bracket_loops: 4,
        seed: 11,
        ..RunOptions::default()
    };
    let result = run(&CurveBench::space(), &CurveBench, &options).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    ensure(!result.weights.is_empty(), || "no weight updates".into())?;
    for w in &result.weights {
        ensure(w.c.iter().all(|c| (0.0..=1.0).contains(c)), || format!("iteration {}: {:?}", w.iteration, w.c))?;
        let sum: f64 = w.c.iter().sum();
        ensure((sum - 1.0).abs() < 1e-9, || format!("iteration {}: sum {sum}", w.iteration))?;
    }
    // First logged update: c1 = 0.5 * c0 + 0.5 * delta0 with c0 = 1/K.
    let first = &result.weights[0];
    let k = first.c.len();
    let clipped: Vec<f64> = first.delta_raw.iter().map(|d| d.max(0.0)).collect();
    let ss: f64 = clipped.iter().map(|d| d * d).sum();
    ensure(ss > 0.0, || "first update had no informative member".into())?;
    for (i, (&got, d)) in first.c.iter().zip(&clipped).enumerate() {
        let expect = 0.5 * (1.0 / k as f64) + 0.5 * (d * d / ss);
        ensure(got == expect, || format!("c1[{i}] = {got} vs {expect}"))?;
    }
    within(elapsed, Duration::from_secs(30))?;
    Ok(format!(
        "{} updates within simplex; c1 = 0.5*c0 + 0.5*delta0 reproduced; {elapsed:?}",
        result.weights.len()
    ))
}

fn ac6_fidelity_correlation() -> Check {
    let start = Instant::now();
    let space = CurveBench::space();
    let mut per_r: Vec<Vec<f64>> = vec![Vec::new(); 3];
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let configs = space.sample_uniform(200, &mut rng, &mut hoist::space::ConfigIdGen::new());
        let at = |r: f64| -> Vec<f64> {
            configs
                .iter()
                .map(|c| {
                    let v = |n: &str| c.real(n).unwrap();
                    eval_curve_bench(v("x1"), v("x2"), v("a"), v("b"), r).unwrap()
                })
                .collect()
        };
        let full = at(27.0);
        for (slot, r) in per_r.iter_mut().zip([1.0, 3.0, 9.0]) {
            slot.push(pearson(&at(r), &full));
        }
    }
    let medians: Vec<f64> = per_r.into_iter().map(median).collect();
    let elapsed = start.elapsed();
    ensure(medians.iter().all(|m| *m > 0.0), || format!("medians {medians:?}"))?;
    ensure(medians.windows(2).all(|w| w[1] > w[0]), || format!("not increasing: {medians:?}"))?;
    within(elapsed, Duration::from_secs(10))?;
    Ok(format!("median corr at r=1,3,9 vs 27: {medians:.4?}; {elapsed:?}"))
}

fn ac7_deceptive_suppression() -> Check {
    let start = Instant::now();
    let objective = DeceptiveBench::default();
    let mut low = Vec::new();
    for seed in 0..10 {
        let options = RunOptions {
            mode: Mode::Hoist,
            max_resource: 27.0,
            eta: 3.0,
            total_bracket_loops: 4,
            seed,
            ..RunOptions::default()
        };
        let result = run(&DeceptiveBench::space(), &objective, &options).map_err(|e| e.to_string())?;
        let c = result.final_weights().ok_or("no weights learned")?;
        let levels: Vec<f64> = result.store.stages().iter().map(|s| s.resource_level).collect();
        let mass: f64 = c
            .iter()
            .zip(&levels)
            .filter(|(_, r)| **r / 27.0 < objective.threshold)
            .map(|(w, _)| w)
            .sum();
        low.push(mass);
    }
    let m = median(low);
    let elapsed = start.elapsed();
    ensure(m < 0.1, || format!("median low-fidelity weight {m}"))?;
    within(elapsed, Duration::from_secs(60))?;
    Ok(format!("median weight on r/R < 0.5 stages: {m:.2e}; {elapsed:?}"))
}

fn ac8_convergence_dominance() -> Check {
    let start = Instant::now();
    let mut medians = BTreeMap::new();
    for mode in [Mode::Hoist, Mode::HyperbandRandom, Mode::Random] {
        let mut finals = Vec::new();
        for seed in 0..10 {
            let options = RunOptions {
                mode,
                max_resource: 27.0,
                eta: 3.0,
                total_bracket_loops: 4,
                seed,
                ..RunOptions::default()
            };
            let result = run(&CurveBench::space(), &CurveBench, &options).map_err(|e| e.to_string())?;
            finals.push(result.incumbent().ok_or("no incumbent")?.loss);
        }
        medians.insert(mode.as_str(), median(finals));
    }
    let (h, hb, r) = (medians["hoist"], medians["hyperband_random"], medians["random"]);
    let elapsed = start.elapsed();
    ensure(h <= hb, || format!("hoist {h} > hyperband_random {hb}"))?;
    ensure(h <= r, || format!("hoist {h} > random {r}"))?;
    ensure(h <= 0.5 * r, || format!("hoist {h} > 0.5 x random {r}"))?;
    within(elapsed, Duration::from_secs(300))?;
    Ok(format!("median final loss hoist {h:.5}, hyperband_random {hb:.5}, random {r:.5}; {elapsed:?}"))
}

fn run_cli(out: &Path) -> i32 {
    let out = out.to_str().unwrap().to_string();
    hoist::cli::main_with_args([
        "hoist", "run", "--objective", "curve-bench", "--max-resource", "9", "--eta", "3", "--loops", "2",
        "--seed", "7", "--mode", "hoist", "--out", &out,
    ])
}

fn ac9_determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ensure(run_cli(&a) == 0 && run_cli(&b) == 0, || "cli run failed".into())?;
    let ca = std::fs::read(a.join("convergence.csv")).map_err(|e| e.to_string())?;
    let cb = std::fs::read(b.join("convergence.csv")).map_err(|e| e.to_string())?;
    ensure(ca == cb, || "convergence.csv differs".into())?;
    ensure(ca.len() > "cum_resource,best_loss\n".len(), || "empty trace".into())?;
    Ok(format!("two runs, identical convergence.csv ({} bytes)", ca.len()))
}

fn write_stub(dir: &Path, name: &str, body: &str) -> String {
    use std::os::unix::fs::PermissionsExt;
    let path = dir.join(name);
    std::fs::write(&path, format!("#!/bin/sh\n{body}\n")).unwrap();
    std::fs::set_permissions(&path, std::fs::Permissions::from_mode(0o755)).unwrap();
    path.to_str().unwrap().to_string()
}

fn ac10_external_protocol() -> Check {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let space = ConfigSpace::new(vec![
        ParameterSpec::continuous("x", 0.0, 1.0).unwrap(),
        ParameterSpec::categorical("opt", ["sgd", "adam"]).unwrap(),
    ])
    .unwrap();
    let options = RunOptions {
        mode: Mode::Hoist,
        max_resource: 9.0,
        eta: 3.0,
        total_bracket_loops: 1,
        seed: 3,
        ..RunOptions::default()
    };
    let timeout = Duration::from_secs(5);

    let valid = write_stub(dir.path(), "valid.sh", "read -r line\necho '{\"loss\":0.5}'");
    let result = run(&space, &ExternalCommand::new(valid, vec![], timeout), &options).map_err(|e| e.to_string())?;
    ensure(result.store.failed().is_empty(), || "valid stub produced failures".into())?;
    ensure(result.store.records_in_order().iter().all(|r| r.loss == 0.5), || "loss not 0.5".into())?;
    let recorded = result.store.total_records();

    // every fourth invocation answers NaN
    let counter = dir.path().join("count");
    std::fs::write(&counter, "0").unwrap();
    let body = format!(
        "read -r line\nn=$(cat {c})\necho $((n + 1)) > {c}\nif [ $((n % 4)) -eq 0 ]; then echo '{{\"loss\":\"NaN\"}}'; else echo '{{\"loss\":0.25}}'; fi",
        c = counter.display()
    );
    let nan = write_stub(dir.path(), "nan.sh", &body);
    let result = run(&space, &ExternalCommand::new(nan, vec![], timeout), &options).map_err(|e| e.to_string())?;
    let failed = result.store.failed().len();
    ensure(failed > 0, || "NaN stub produced no failed record".into())?;
    ensure(
        result.store.failed().iter().all(|r| r.failure.as_deref().unwrap_or("").contains("non-finite")),
        || "failure reason does not mention the non-finite loss".into(),
    )?;
    ensure(result.incumbent().is_some(), || "run did not continue past the failure".into())?;

    let slow = write_stub(dir.path(), "slow.sh", "read -r line\nexec sleep 5");
    let cmd = ExternalCommand::new(slow, vec![], Duration::from_millis(300));
    let config = space.sample_uniform(1, &mut ChaCha8Rng::seed_from_u64(0), &mut hoist::space::ConfigIdGen::new());
    let t0 = Instant::now();
    let outcome = cmd.evaluate(&config[0], 1.0, 9.0);
    ensure(matches!(outcome, Err(EvalError::Timeout(_))), || format!("expected timeout, got {outcome:?}"))?;
    ensure(t0.elapsed() < Duration::from_secs(2), || format!("timeout took {:?}", t0.elapsed()))?;

    let elapsed = start.elapsed();
    within(elapsed, Duration::from_secs(10))?;
    Ok(format!(
        "valid: {recorded} recorded; NaN: {failed} failed records, run completed; timeout: {}; {elapsed:?}",
        outcome.unwrap_err()
    ))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("AC1 bracket schedule B=9, eta=3", ac1_bracket_schedule),
        ("AC2 weight learning oracle", ac2_weight_learning_oracle),
        ("AC3 EI closed form vs quadrature", ac3_ei_quadrature),
        ("AC4 ensemble mean/variance", ac4_ensemble_formula),
        ("AC5 weight vector invariants", ac5_weight_invariants),
        ("AC6 fidelity correlation ordering", ac6_fidelity_correlation),
        ("AC7 deceptive fidelity suppression", ac7_deceptive_suppression),
        ("AC8 convergence dominance", ac8_convergence_dominance),
        ("AC9 determinism", ac9_determinism),
        ("AC10 external protocol", ac10_external_protocol),
    ];
    let mut failures = 0;
    for (name, check) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(why) => {
                failures += 1;
                println!("FAIL  {name}: {why}");
            }
        }
    }
    println!("acceptance: {} passed, {failures} failed", 10 - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
