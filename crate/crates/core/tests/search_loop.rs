use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use flowforge::hyper::{AppearanceConfig, Group, HyperParams, Scale, SearchSpace};
use flowforge::io::{dataset_sample, AugmentMode};
use flowforge::scene::AppearancePool;
use flowforge::search::{
    replay_best, run_search, EvalContext, Evaluator, ExternalEvaluator, HistogramEvaluator, HistoryRecord, SearchConfig,
};
use flowforge::stats::motion_histogram;
use flowforge::{Error, Result};

fn continuous_space() -> SearchSpace {
    let full = SearchSpace::default();
    let keep = [
        "motion.p_r",
        "motion.p_t",
        "motion.p_g",
        "motion.perspective_strength",
        "effects.blur_prob",
        "effects.fog_mean",
        "effects.fog_std",
        "mask.blur_prob",
    ];
    SearchSpace { dims: full.dims.into_iter().filter(|d| keep.contains(&d.path.as_str())).collect() }
}

fn quadratic(space: &SearchSpace) -> impl Fn(&HyperParams, &EvalContext) -> Result<f64> + Sync + '_ {
    move |h, _| Ok(space.encode(h).iter().map(|v| (v - 0.3).powi(2)).sum())
}

fn small_cfg() -> SearchConfig {
    SearchConfig { iterations: 8, population: 8, generations_per_iteration: 5, subgroup_schedule: vec![Group::Motion, Group::Effects, Group::Mask], ..Default::default() }
}

#[test]
fn frozen_evaluator_keeps_incumbent() {
    let h = HyperParams::default();
    let frozen = |_: &HyperParams, _: &EvalContext| Ok(0.7);
    let cfg = SearchConfig { iterations: 1, ..Default::default() };
    let out = run_search(&cfg, &SearchSpace::default(), &h, &frozen, None).unwrap();
    assert_eq!(out.best, h);
    assert_eq!(out.best_score, 0.7);
}

#[test]
fn quadratic_objective_is_reduced_tenfold() {
    let space = continuous_space();
    let eval = quadratic(&space);
    let out = run_search(&small_cfg(), &space, &HyperParams::default(), &eval, None).unwrap();
    assert!(out.best_score <= 0.1 * out.initial_score, "{} -> {}", out.initial_score, out.best_score);
    assert!((eval(&out.best, &EvalContext { generation: None, candidate: 0, budget: 1 }).unwrap() - out.best_score).abs() < 1e-12);
}

#[test]
fn never_worse_than_incumbent() {
    let space = SearchSpace::default();
    let noisy = |h: &HyperParams, _: &EvalContext| Ok((h.motion.p_t * 1e3).sin() + h.mask.blur_prob);
    let h = HyperParams::default();
    let out = run_search(&SearchConfig { iterations: 3, population: 4, ..Default::default() }, &space, &h, &noisy, None).unwrap();
    assert!(out.best_score <= noisy(&h, &EvalContext { generation: None, candidate: 0, budget: 1 }).unwrap());
}

#[test]
fn history_replays_and_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("history.jsonl");
    let space = continuous_space();
    let calls = AtomicUsize::new(0);
    let q = quadratic(&space);
    let counted = |h: &HyperParams, c: &EvalContext| {
        calls.fetch_add(1, Ordering::SeqCst);
        q(h, c)
    };
    let cfg = SearchConfig { iterations: 3, ..small_cfg() };
    let first = run_search(&cfg, &space, &HyperParams::default(), &counted, Some(&path)).unwrap();
    assert_eq!(first.evaluations, 1 + 3 * 5 * 8);
    assert_eq!(calls.load(Ordering::SeqCst), first.evaluations);

    let records: Vec<HistoryRecord> = flowforge::io::read_jsonl(&path).unwrap();
    let (score, vector) = replay_best(&records).unwrap();
    assert_eq!(score, first.best_score);
    assert_eq!(vector, first.best_vector);

    let again = run_search(&cfg, &space, &HyperParams::default(), &counted, Some(&path)).unwrap();
    assert_eq!(again.evaluations, 0);
    assert_eq!(again.best, first.best);
    assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), records.len());

    // Cut the file mid-run: the resumed run evaluates only the missing tail.
    let text = std::fs::read_to_string(&path).unwrap();
    let kept: Vec<&str> = text.lines().take(2 + 8 * 7 + 3).collect();
    std::fs::write(&path, kept.join("\n") + "\n").unwrap();
    let resumed = run_search(&cfg, &space, &HyperParams::default(), &counted, Some(&path)).unwrap();
    assert_eq!(resumed.evaluations, 8 * 8);
    assert_eq!(resumed.best, first.best);
    assert_eq!(resumed.best_score, first.best_score);
}

#[test]
fn mismatched_history_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("history.jsonl");
    let space = continuous_space();
    let q = quadratic(&space);
    run_search(&SearchConfig { iterations: 1, ..small_cfg() }, &space, &HyperParams::default(), &q, Some(&path)).unwrap();
    let r = run_search(&SearchConfig { iterations: 1, seed: 5, ..small_cfg() }, &space, &HyperParams::default(), &q, Some(&path));
    assert!(matches!(r, Err(Error::InvalidConfig(_))));
}

#[test]
fn failing_generation_is_reported() {
    let fail = |_: &HyperParams, _: &EvalContext| -> Result<f64> { Err(Error::Format("crash".into())) };
    let r = run_search(&SearchConfig { iterations: 1, ..Default::default() }, &SearchSpace::default(), &HyperParams::default(), &fail, None);
    assert!(matches!(r, Err(Error::AllCandidatesFailed { generation: 0 })));
}

#[test]
fn partial_failures_score_infinity() {
    let flaky = |h: &HyperParams, c: &EvalContext| if c.candidate % 2 == 0 { Ok(h.motion.p_t) } else { Ok(f64::NAN) };
    let cfg = SearchConfig { iterations: 1, subgroup_schedule: vec![Group::Motion], ..Default::default() };
    let out = run_search(&cfg, &SearchSpace::default(), &HyperParams::default(), &flaky, None).unwrap();
    let nulls = out.history.iter().filter(|r| matches!(r, HistoryRecord::Candidate { score: None, .. })).count();
    assert_eq!(nulls, 5 * 4);
    assert!(out.best_score < HyperParams::default().motion.p_t);
}

#[cfg(unix)]
#[test]
fn external_command_protocol() {
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("eval.sh");
    std::fs::write(&script, "#!/bin/sh\ntest -f \"$1\" || exit 3\necho progress\ngrep -c '' \"$1\" >/dev/null\necho 0.25\n").unwrap();
    let e = ExternalEvaluator::new(format!("sh {}", script.display()), dir.path().join("scratch"), AppearanceConfig::default()).unwrap();
    let ctx = EvalContext { generation: Some(3), candidate: 1, budget: 2 };
    assert_eq!(e.evaluate(&HyperParams::default(), &ctx).unwrap(), 0.25);
    assert!(dir.path().join("scratch/gen0003_cand01.toml").is_file());

    let bad = ExternalEvaluator::new("sh -c 'echo nope'", dir.path().join("s2"), AppearanceConfig::default()).unwrap();
    assert!(bad.evaluate(&HyperParams::default(), &ctx).is_err());
    let exit = ExternalEvaluator::new("sh -c 'echo 1; exit 4'", dir.path().join("s3"), AppearanceConfig::default()).unwrap();
    assert!(matches!(exit.evaluate(&HyperParams::default(), &ctx), Err(Error::Format(_))));
    let missing = ExternalEvaluator::new("/nonexistent/evaluator-binary", dir.path().join("s4"), AppearanceConfig::default()).unwrap();
    assert!(matches!(missing.evaluate(&HyperParams::default(), &ctx), Err(Error::EvaluatorUnavailable(_))));
    let r = run_search(&SearchConfig { iterations: 1, ..Default::default() }, &SearchSpace::default(), &HyperParams::default(), &missing, None);
    assert!(matches!(r, Err(Error::EvaluatorUnavailable(_))));
}

fn small_hyper() -> HyperParams {
    let mut h = HyperParams::default();
    h.resolution = (64, 48);
    h
}

fn target_for(h: &HyperParams, pool: &AppearancePool, seed: u64, n: usize) -> flowforge::stats::Histogram {
    let flows: Vec<_> = (0..n as u64).map(|i| dataset_sample(h, pool, seed, i, AugmentMode::Materialize).unwrap().flow).collect();
    motion_histogram(&flows).unwrap()
}

#[test]
fn histogram_evaluator_examples() {
    let h = small_hyper();
    let pool = Arc::new(AppearancePool::procedural(8, h.resolution, 2).unwrap());
    let own = target_for(&h, &pool, 17, 4);
    let e = HistogramEvaluator::new(pool.clone(), own, 17).unwrap();
    let ctx = EvalContext { generation: Some(0), candidate: 0, budget: 4 };
    assert_eq!(e.evaluate(&h, &ctx).unwrap(), 0.0);

    let mut far = h.clone();
    far.motion.p_t = 1.0;
    far.motion.p_s = 4.0;
    let spread = target_for(&far, &pool, 3, 4);
    let s = HistogramEvaluator::new(pool, spread, 17).unwrap().evaluate(&h, &ctx).unwrap();
    assert!((0.0..=2.0).contains(&s) && s > 0.0);
}

#[test]
fn p_t_sweep_is_unimodal_around_the_generating_value() {
    let base = small_hyper();
    let pool = Arc::new(AppearancePool::procedural(8, base.resolution, 2).unwrap());
    let mut gen = base.clone();
    gen.motion.p_t = 0.1;
    let target = target_for(&gen, &pool, 1000, 16);
    let e = HistogramEvaluator::new(pool, target, 7).unwrap();
    let ctx = EvalContext { generation: Some(0), candidate: 0, budget: 16 };
    let sweep = [0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.4, 0.8];
    let scores: Vec<f64> = sweep
        .iter()
        .map(|&p| {
            let mut h = gen.clone();
            h.motion.p_t = p;
            e.evaluate(&h, &ctx).unwrap()
        })
        .collect();
    let at = sweep.iter().position(|&p| p == 0.1).unwrap();
    for i in 0..at {
        assert!(scores[i] + 0.05 >= scores[i + 1], "{scores:?}");
    }
    for i in at..sweep.len() - 1 {
        assert!(scores[i + 1] + 0.05 >= scores[i], "{scores:?}");
    }
    assert!(scores[0] > scores[at] && scores[sweep.len() - 1] > scores[at], "{scores:?}");
}

#[test]
fn log_dimension_override_is_honored() {
    let space = SearchSpace::default()
        .with_overrides(&[flowforge::hyper::Dimension { path: "motion.p_t".into(), lower: 0.05, upper: 0.2, scale: Scale::Log, group: Group::Motion }])
        .unwrap();
    let q = |h: &HyperParams, _: &EvalContext| Ok(h.motion.p_t);
    let mut h = HyperParams::default();
    h.motion.p_t = 0.1;
    let out = run_search(&SearchConfig { iterations: 1, subgroup_schedule: vec![Group::Motion], ..Default::default() }, &space, &h, &q, None).unwrap();
    assert!(out.best.motion.p_t >= 0.05 && out.best.motion.p_t < 0.1);
}
