use hoist::history::{parse_history, HistoryEvent, HistoryWriter, RunHeader};
use hoist::objectives::{CurveBench, DistortedBranin, FnObjective};
use hoist::optimizer::{run, run_with, Mode, RunContext, RunOptions};
use hoist::EvalError;

fn options(mode: Mode, seed: u64, loops: usize) -> RunOptions {
    RunOptions {
        mode,
        max_resource: 27.0,
        eta: 3.0,
        total_bracket_loops: loops,
        seed,
        ..RunOptions::default()
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    (v[(v.len() - 1) / 2] + v[v.len() / 2]) / 2.0
}

#[test]
fn high_fidelity_stages_dominate_on_curve_bench() {
    let mut top_two = Vec::new();
    for seed in 0..10 {
        let result = run(&CurveBench::space(), &CurveBench, &options(Mode::Hoist, seed, 4)).unwrap();
        let c = result.final_weights().unwrap();
        top_two.push(c[c.len() - 1] + c[c.len() - 2]);
    }
    let k = 4.0;
    assert!(median(top_two.clone()) > 2.0 / k, "{top_two:?}");
}

#[test]
fn every_mode_spends_about_the_same_budget() {
    let budgets: Vec<f64> = Mode::ALL
        .iter()
        .map(|&m| run(&CurveBench::space(), &CurveBench, &options(m, 1, 2)).unwrap().total_resource)
        .collect();
    let hb = budgets[0];
    for b in &budgets {
        assert!(*b <= hb + 1e-9 && *b > hb - 27.0 * 4.0, "{budgets:?}");
    }
}

#[test]
fn history_is_byte_identical_across_runs_and_workers() {
    let dir = tempfile::tempdir().unwrap();
    let space = DistortedBranin::space();
    let mut texts = Vec::new();
    for (i, workers) in [1, 1, 4].into_iter().enumerate() {
        let path = dir.path().join(format!("h{i}.jsonl"));
        let mut opts = options(Mode::Hoist, 9, 2);
        opts.workers = workers;
        let header = RunHeader::new(serde_json::json!({"seed": 9}), &space);
        let mut writer = HistoryWriter::create(&path, &header).unwrap();
        run_with(
            &space,
            &DistortedBranin,
            &opts,
            RunContext {
                observer: &mut writer,
                replay: None,
            },
        )
        .unwrap();
        writer.finish_check().unwrap();
        texts.push(std::fs::read_to_string(&path).unwrap());
    }
    assert_eq!(texts[0], texts[1]);
    assert_eq!(texts[0], texts[2]);
    let events = parse_history(&texts[0]).unwrap();
    assert!(matches!(events[0], HistoryEvent::Run(_)));
    assert!(events.iter().any(|e| matches!(e, HistoryEvent::Weights(_))));
}

#[test]
fn failing_evaluations_are_kept_out_of_the_stages() {
    let space = CurveBench::space();
    let flaky = FnObjective::new("flaky", |c: &hoist::space::Configuration, r: f64, _max: f64| {
        let x1 = c.real("x1").unwrap();
        if x1 > 0.85 {
            Err(EvalError::NonFinite("nan".into()))
        } else {
            Ok(x1 + 1.0 / r)
        }
    });
    let result = run(&space, &flaky, &options(Mode::Hoist, 2, 1)).unwrap();
    assert!(!result.store.failed().is_empty());
    for stage in result.store.stages() {
        assert!(stage.losses().iter().all(|l| l.is_finite()));
    }
    assert!(result.incumbent().unwrap().config.real("x1").unwrap() <= 0.85);
}

#[test]
fn mostly_failing_objective_aborts() {
    let space = CurveBench::space();
    let broken = FnObjective::new("broken", |_: &hoist::space::Configuration, _: f64, _: f64| {
        Err(EvalError::Other("down".into()))
    });
    let err = run(&space, &broken, &options(Mode::Random, 0, 1)).unwrap_err();
    assert!(matches!(err, hoist::HoistError::Aborted(_)), "{err}");
}
