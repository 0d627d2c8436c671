use sum_core::theory::Theorem;
use sum_harness::bounds::report;
use sum_harness::experiment::{Experiment, SummaryDoc};
use sum_harness::{run_experiment, ExperimentConfig};

const ONE_RUN: &str = r#"
    horizon = 1
    [problem]
    kind = "softlog"
    dim = 4
    [schedule]
    kind = "constant"
    alpha = 0.1
    [[variants]]
    s = 1
    beta = 0.9
"#;

fn cfg(text: &str) -> ExperimentConfig {
    ExperimentConfig::from_toml(text).unwrap()
}

#[test]
fn minimal_experiment_writes_two_csvs_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    run_experiment(cfg(ONE_RUN), dir.path(), Some(1)).unwrap();
    let mut names: Vec<String> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert_eq!(
        names,
        vec![
            "agg_softlog-d4_s1_b0.9_const0.1.csv",
            "run_softlog-d4_s1_b0.9_const0.1_seed0.csv",
            "summary.json"
        ]
    );
    let run_csv = std::fs::read_to_string(dir.path().join("run_softlog-d4_s1_b0.9_const0.1_seed0.csv")).unwrap();
    assert_eq!(
        run_csv.lines().next().unwrap(),
        "k,f_x,gap_avg,grad_norm_sq,min_grad_norm_sq,v_k,heldout_error,alpha"
    );
    assert_eq!(run_csv.lines().count(), 2);
}

#[test]
fn seed_count_appears_in_aggregate() {
    let text = format!("{ONE_RUN}\n[seeds]\ncount = 20\n").replace("horizon = 1", "horizon = 30\nrecord_every = 10");
    let text = text.replace(
        "[schedule]",
        "[oracle]\nkind = \"additive-gaussian\"\nnoise_std = 0.3\n[schedule]",
    );
    let out = Experiment::new(cfg(&text)).unwrap().execute(Some(2)).unwrap();
    let agg = &out.variants[0].aggregate;
    assert_eq!(agg.seed_count(), 20);
    assert!(agg.rows.iter().all(|r| r.n == 20));
    let csv = agg.to_csv();
    assert!(csv.starts_with("k,n,f_x_mean,f_x_se,"));
    assert!(csv.lines().skip(1).all(|l| l.split(',').nth(1) == Some("20")));
    assert_eq!(csv.lines().count(), 1 + 4);
}

#[test]
fn s_grid_gives_one_aggregate_per_variant() {
    let mut text = String::from(
        "horizon = 50\nrecord_every = 10\n[problem]\nkind = \"logreg\"\nn_samples = 100\ndim = 4\n\
         [oracle]\nkind = \"minibatch\"\nbatch_size = 8\n[schedule]\nkind = \"step-decay\"\nalpha0 = 0.05\n\
         [seeds]\ncount = 2\n",
    );
    for s in ["0", "0.5", "1", "2", "10"] {
        text.push_str(&format!("[[variants]]\ns = {s}\nbeta = 0.9\n"));
    }
    let dir = tempfile::tempdir().unwrap();
    let out = run_experiment(cfg(&text), dir.path(), None).unwrap();
    assert_eq!(out.variants.len(), 5);
    let aggs = std::fs::read_dir(dir.path())
        .unwrap()
        .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().starts_with("agg_"))
        .count();
    assert_eq!(aggs, 5);
}

#[test]
fn summary_round_trips_and_bounds_reproduce() {
    let text = r#"
        horizon = 400
        record_every = 100
        [problem]
        kind = "abs-loss"
        dim = 5
        [oracle]
        kind = "additive-gaussian"
        noise_std = 1.0
        [schedule]
        kind = "theorem1"
        [seeds]
        count = 4
        [[variants]]
        s = 1
        beta = 0.9
    "#;
    let dir = tempfile::tempdir().unwrap();
    let out = run_experiment(cfg(text), dir.path(), Some(1)).unwrap();
    let doc = SummaryDoc::load(dir.path()).unwrap();
    assert_eq!(doc, out.summary());
    let v = &doc.variants[0];
    let thm1 = report(Theorem::One, &doc.problem, v);
    assert_eq!(thm1.bound, v.bounds[0].bound);
    assert!(thm1.bound.unwrap() > 0.0);
    // abs_loss is nonsmooth: no L, so the smooth bounds name it.
    let thm3 = report(Theorem::Three, &doc.problem, v);
    assert_eq!(thm3.error.as_deref(), Some("missing constant L"));
}

#[test]
fn invalid_config_fails_before_running() {
    let bad = ONE_RUN.replace("beta = 0.9", "beta = 1.5");
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("never");
    assert!(run_experiment(cfg(&bad), &target, None).is_err());
    assert!(!target.exists());
}

#[test]
fn divergence_is_recorded_not_fatal() {
    let text = r#"
        horizon = 200
        [problem]
        kind = "quadratic"
        dim = 3
        condition_number = 5.0
        [schedule]
        kind = "constant"
        alpha = 1.0
        [seeds]
        count = 2
        [[variants]]
        s = 0
        beta = 0.99
    "#;
    // Heavy ball needs αL < 2(1+β); here αL = 5.
    let out = Experiment::new(cfg(text)).unwrap().execute(Some(1)).unwrap();
    let v = &out.variants[0];
    assert_eq!(v.summary.seeds, 2);
    assert!(v.runs.iter().all(|r| !r.summary.is_valid()));
}
