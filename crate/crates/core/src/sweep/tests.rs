use super::*;

fn tiny_spec(cells: &[(usize, usize)], seeds: &[u64]) -> SweepSpec {
    SweepSpec {
        cells: cells.iter().map(|&(n, k)| Cell { n_sentences: n, n_noncomp: k }).collect(),
        epochs: Some(1),
        seeds: seeds.to_vec(),
        test_sentences: 40,
        ..SweepSpec::default()
    }
}

fn ok(n: usize, k: usize, seed: u64, comp: f64, noncomp: f64) -> RunOutcome {
    let cell = Cell { n_sentences: n, n_noncomp: k };
    let result =
        Ok(RunResult { cell, seed, comp_acc: comp, noncomp_acc: noncomp, n_test_comp: 1, n_test_noncomp: 1, steps: 1 });
    RunOutcome { cell, seed, result }
}

#[test]
fn two_seed_statistics_match_hand_arithmetic() {
    // mean 0.4, deviations ±0.2, population variance 0.04.
    let (m, s) = mean_std(&[0.2, 0.6]);
    assert!((m - 0.4).abs() < 1e-12 && (s - 0.2).abs() < 1e-12);
    assert_eq!(mean_std(&[0.7]), (0.7, 0.0));
    assert!(mean_std(&[]).0.is_nan());
}

#[test]
fn summary_skips_failed_runs() {
    let mut runs = vec![ok(10, 1, 0, 1.0, 0.2), ok(10, 1, 1, 0.9, 0.6), ok(10, 5, 0, 1.0, 1.0)];
    runs.push(RunOutcome { cell: Cell { n_sentences: 10, n_noncomp: 5 }, seed: 1, result: Err("diverged".into()) });
    let s = summarize(&runs);
    assert_eq!(s.len(), 2);
    assert_eq!((s[0].n_runs, s[0].n_failed), (2, 0));
    assert!((s[0].noncomp_mean - 0.4).abs() < 1e-12 && (s[0].noncomp_std - 0.2).abs() < 1e-12);
    assert!((s[0].comp_mean - 0.95).abs() < 1e-12);
    assert_eq!((s[1].n_runs, s[1].n_failed, s[1].noncomp_std), (2, 1, 0.0));
    let csv = String::from_utf8(runs_csv(&runs).unwrap()).unwrap();
    assert_eq!(csv.lines().count(), 5);
    assert!(csv.lines().last().unwrap().ends_with(",,,diverged"));
    assert_eq!(String::from_utf8(summary_csv(&s).unwrap()).unwrap().lines().count(), 3);
}

#[test]
fn invalid_specs_are_rejected() {
    assert!(tiny_spec(&[(10, 11)], &[0]).validate().is_err());
    assert!(tiny_spec(&[(10, 1)], &[]).validate().is_err());
    assert!(tiny_spec(&[], &[0]).validate().is_err());
    assert!(SweepSpec { epochs: Some(0), ..tiny_spec(&[(10, 1)], &[0]) }.validate().is_err());
    assert!(SweepSpec::default().validate().is_ok());
    assert_eq!(SweepSpec::default().epochs(), 15);
}

#[test]
fn novel_test_set_excludes_training_sources() {
    let spec = tiny_spec(&[(300, 30)], &[0]);
    let train = generate_corpus(&SynCorpusConfig::new(300, 30, false, 0), &spec.lang).unwrap().pairs;
    let test = novel_test_set(&spec, &train).unwrap();
    assert!(!test.is_empty());
    assert!(test.iter().all(|t| train.iter().all(|p| p.src != t.src)));
}

#[test]
fn smoke_sweep_is_order_invariant() {
    let spec = tiny_spec(&[(60, 6), (40, 20)], &[3]);
    let seen = Mutex::new(0);
    let one = run_sweep(&spec, 1, &|_| *seen.lock().unwrap() += 1).unwrap();
    assert_eq!(*seen.lock().unwrap(), 2);
    let two = run_sweep(&spec, 2, &|_| {}).unwrap();
    assert_eq!(one, two);
    assert_eq!(one.len(), 2);
    assert_eq!(one[0].cell, spec.cells[0]);
    let r = one[0].result.as_ref().unwrap();
    assert!(r.n_test_comp + r.n_test_noncomp > 0);
    let csv = String::from_utf8(runs_csv(&one[..1]).unwrap()).unwrap();
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn chart_draws_points_bars_and_escaped_labels() {
    let series = vec![
        Series {
            label: "a<b".into(),
            points: vec![
                Point { x: 0.001, y: 0.1, err: 0.05 },
                Point { x: 0.01, y: 0.5, err: 0.0 },
                Point { x: 0.1, y: 0.9, err: 0.1 },
            ],
        },
        Series { label: "zero x".into(), points: vec![Point { x: 0.0, y: 0.3, err: 0.0 }] },
    ];
    let opts = ChartOptions { log_x: true, title: "t & u".into(), ..ChartOptions::default() };
    let svg = line_chart(&series, &opts);
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    assert_eq!(svg.matches("<circle").count(), 3);
    assert_eq!(svg.matches(r#"class="err""#).count(), 2);
    assert_eq!(svg.matches("<polyline").count(), 1);
    assert!(svg.contains("a&lt;b") && svg.contains("t &amp; u"));
    assert!(!svg.contains("NaN") && !svg.contains("inf"));
    let empty = line_chart(&[], &ChartOptions::default());
    assert!(!empty.contains("NaN"));
}
