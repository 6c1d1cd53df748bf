use super::*;

fn toks(s: &str) -> Vec<String> {
    s.split_whitespace().map(String::from).collect()
}

#[test]
fn bleu_of_identical_corpus_is_one() {
    let refs = vec![toks("a b c d e"), toks("x y z w v u")];
    assert_eq!(corpus_bleu(&refs, &refs, BleuSmoothing::None).unwrap(), 1.0);
}

#[test]
fn bleu_of_disjoint_vocabulary_is_zero() {
    let h = vec![toks("p q r s")];
    let r = vec![toks("a b c d")];
    assert_eq!(corpus_bleu(&h, &r, BleuSmoothing::None).unwrap(), 0.0);
}

#[test]
fn bleu_matches_hand_counted_example() {
    // hyp a b c d e x / ref a b c d e f g:
    // matches 5/6, 4/5, 3/4, 2/3 → geometric mean (1/3)^(1/4);
    // c = 6 < r = 7 → BP = exp(1 − 7/6).
    let h = vec![toks("a b c d e x")];
    let r = vec![toks("a b c d e f g")];
    let want = (-1.0f64 / 6.0).exp() * (1.0f64 / 3.0).powf(0.25);
    let got = corpus_bleu_details(&h, &r, BleuSmoothing::None).unwrap();
    assert!((got.score - want).abs() < 1e-12);
    assert_eq!(got.precisions, [5.0 / 6.0, 0.8, 0.75, 2.0 / 3.0]);
}

#[test]
fn bleu_clips_repeated_unigrams() {
    // hyp "the the cat" / ref "the cat": 1-grams clip to 2/3, 2-grams 1/2,
    // 3-grams 0/1 and no 4-grams; c = 3 > r = 2 so BP = 1.
    let h = vec![toks("the the cat")];
    let r = vec![toks("the cat")];
    let d = corpus_bleu_details(&h, &r, BleuSmoothing::None).unwrap();
    assert_eq!(d.precisions[..3], [2.0 / 3.0, 0.5, 0.0]);
    assert_eq!(d.score, 0.0);
    assert_eq!(d.brevity_penalty, 1.0);
    let s = corpus_bleu(&h, &r, BleuSmoothing::AddEpsilon(0.1)).unwrap();
    let want = (2.0f64 / 3.0 * 0.5 * 0.1 * 0.1).powf(0.25);
    assert!((s - want).abs() < 1e-12);
}

#[test]
fn bleu_aggregates_counts_at_corpus_level() {
    let h = vec![toks("a b c d"), toks("e f")];
    let r = vec![toks("a b c d"), toks("e g")];
    // matches (4+1)/6, 3/4, 2/2, 1/1; c = r = 6.
    let want = (5.0f64 / 6.0 * 0.75).powf(0.25);
    assert!((corpus_bleu(&h, &r, BleuSmoothing::None).unwrap() - want).abs() < 1e-12);
    let (hr, rr) = (vec![h[1].clone(), h[0].clone()], vec![r[1].clone(), r[0].clone()]);
    assert_eq!(corpus_bleu(&hr, &rr, BleuSmoothing::None).unwrap(), corpus_bleu(&h, &r, BleuSmoothing::None).unwrap());
    assert!(matches!(corpus_bleu(&h, &r[..1], BleuSmoothing::None), Err(EvalError::LengthMismatch { .. })));
}

#[test]
fn empty_hypotheses_score_zero() {
    let h = vec![vec![]];
    let r = vec![toks("a")];
    assert_eq!(corpus_bleu::<String>(&h, &r, BleuSmoothing::AddEpsilon(0.1)).unwrap(), 0.0);
}

fn fifty_pairs() -> (Vec<Vec<String>>, Vec<Vec<String>>, Vec<Vec<String>>) {
    let refs: Vec<Vec<String>> = (0..50).map(|i| toks(&format!("w{i} x{i} y{i} z{i} v{i}"))).collect();
    let empty = vec![Vec::new(); 50];
    (refs.clone(), empty, refs)
}

#[test]
fn permutation_test_identical_systems_give_one() {
    let (a, _, refs) = fifty_pairs();
    let r = permutation_test(&a, &a, &refs, &PermutationConfig::default()).unwrap();
    assert_eq!(r.observed, 0.0);
    assert_eq!(r.p_value, 1.0);
}

#[test]
fn permutation_test_perfect_vs_empty_is_significant() {
    let (a, b, refs) = fifty_pairs();
    let cfg = PermutationConfig { seed: 7, ..PermutationConfig::default() };
    let r = permutation_test(&a, &b, &refs, &cfg).unwrap();
    assert_eq!(r.observed, 1.0);
    assert!(r.p_value <= 0.01, "{}", r.p_value);
    let cons = permutation_test(&a, &b, &refs, &PermutationConfig { conservative: true, ..cfg.clone() }).unwrap();
    assert_eq!(cons.p_value, (r.count_ge as f64 + 1.0) / 1001.0);
    assert_eq!(permutation_test(&a, &b, &refs, &cfg).unwrap(), r);
}

#[test]
fn permutation_test_is_roughly_complementary_under_relabeling() {
    let refs: Vec<Vec<String>> = (0..30).map(|i| toks(&format!("a{i} b c{i} d e"))).collect();
    let a: Vec<Vec<String>> =
        refs.iter().enumerate().map(|(i, r)| if i % 3 == 0 { r.clone() } else { r[..3].to_vec() }).collect();
    let b: Vec<Vec<String>> =
        refs.iter().enumerate().map(|(i, r)| if i % 2 == 0 { r.clone() } else { r[1..].to_vec() }).collect();
    let cfg = PermutationConfig { seed: 3, ..PermutationConfig::default() };
    let ab = permutation_test(&a, &b, &refs, &cfg).unwrap();
    let ba = permutation_test(&b, &a, &refs, &cfg).unwrap();
    assert_eq!(ab.observed, -ba.observed);
    assert!(ab.p_value + ba.p_value >= 1.0);
}

#[test]
fn permutation_test_on_scores() {
    let a = vec![1.0; 40];
    let b = vec![0.0; 40];
    let cfg = PermutationConfig::default();
    assert!(permutation_test_scores(&a, &b, &cfg).unwrap().p_value <= 0.01);
    assert_eq!(permutation_test_scores(&a, &a, &cfg).unwrap().p_value, 1.0);
}

#[test]
fn alpha_is_one_under_perfect_agreement() {
    let units = vec![vec![Some('a'), Some('a')], vec![Some('b'), Some('b')], vec![Some('c'), Some('c')]];
    assert_eq!(krippendorff_alpha(&units).unwrap(), 1.0);
    let single = vec![vec![Some(1), Some(1)], vec![Some(2), None], vec![None, None]];
    assert_eq!(krippendorff_alpha(&single).unwrap(), 1.0);
}

#[test]
fn alpha_matches_hand_coincidence_matrices() {
    // (a,a),(a,b),(b,b),(b,a): o_aa = o_bb = o_ab = o_ba = 2, n_a = n_b = 4,
    // alpha = 1 − 7·4 / (4·4 + 4·4) = 1/8.
    let units = vec![
        vec![Some("a"), Some("a")],
        vec![Some("a"), Some("b")],
        vec![Some("b"), Some("b")],
        vec![Some("b"), Some("a")],
    ];
    assert!((krippendorff_alpha(&units).unwrap() - 0.125).abs() < 1e-12);
    // (a,a,b),(b,b,-),(a,-,-): o_aa = 1, o_ab = o_ba = 1, o_bb = 2; n_a = 2,
    // n_b = 3, n = 5; alpha = 1 − 4·2 / 12 = 1/3.
    let units =
        vec![vec![Some("a"), Some("a"), Some("b")], vec![Some("b"), Some("b"), None], vec![Some("a"), None, None]];
    assert!((krippendorff_alpha(&units).unwrap() - 1.0 / 3.0).abs() < 1e-12);
}

#[test]
fn alpha_is_invariant_to_relabeling_and_needs_pairs() {
    let units = vec![vec![Some(0), Some(1)], vec![Some(1), Some(1)], vec![Some(2), Some(0)], vec![Some(2), Some(2)]];
    let renamed: Vec<Vec<Option<i32>>> =
        units.iter().map(|u| u.iter().map(|l| l.map(|v| (v + 1) % 3 * 10)).collect()).collect();
    assert!((krippendorff_alpha(&units).unwrap() - krippendorff_alpha(&renamed).unwrap()).abs() < 1e-12);
    assert!(krippendorff_alpha(&[vec![Some(1), None]]).is_err());
}

fn freqs(pairs: &[(&str, u64)]) -> Vec<(String, u64)> {
    pairs.iter().map(|(k, f)| (k.to_string(), *f)).collect()
}

#[test]
fn quintiles_split_ranked_idioms() {
    let f: Vec<(String, u64)> = (1..=10).map(|i| (format!("id{i:02}"), i)).collect();
    let values: Vec<(String, f64)> = f.iter().map(|(k, v)| (k.clone(), *v as f64)).collect();
    let rows = frequency_quintiles(&f, &values, false).unwrap();
    let sets: Vec<Vec<u64>> = rows.iter().map(|r| r.idioms.iter().map(|k| k[2..].parse().unwrap()).collect()).collect();
    assert_eq!(sets, vec![vec![1, 2], vec![3, 4], vec![5, 6], vec![7, 8], vec![9, 10]]);
    assert_eq!(rows[0].mean, Some(1.5));
    let trimmed = frequency_quintiles(&f, &values, true).unwrap();
    assert_eq!(trimmed.len(), 4);
    assert_eq!(trimmed[0].quintile, 2);
}

#[test]
fn quintiles_of_seven_use_largest_remainder() {
    let f = freqs(&[("g", 7), ("a", 1), ("c", 3), ("b", 3), ("e", 5), ("d", 4), ("f", 6)]);
    let values: Vec<(String, f64)> = f.iter().map(|(k, _)| (k.clone(), 2.5)).collect();
    let rows = frequency_quintiles(&f, &values, false).unwrap();
    let got: Vec<Vec<&str>> = rows.iter().map(|r| r.idioms.iter().map(String::as_str).collect()).collect();
    assert_eq!(got, vec![vec!["a", "b"], vec!["c", "d"], vec!["e"], vec!["f"], vec!["g"]]);
    assert!(rows.iter().all(|r| r.mean == Some(2.5)));
    let sizes: Vec<usize> = rows.iter().map(|r| r.idioms.len()).collect();
    assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
}

#[test]
fn quintiles_reject_unknown_idioms() {
    let f = freqs(&[("a", 1)]);
    assert!(frequency_quintiles(&f, &[("zz".into(), 1.0)], false).is_err());
}

fn labels(sev: &[Severity]) -> Vec<HumanLabel> {
    sev.iter().enumerate().map(|(i, &severity)| HumanLabel { id: i.to_string(), severity }).collect()
}

#[test]
fn mqm_examples() {
    let s = mqm_aggregate(&labels(&[Severity::Ok; 4])).unwrap();
    assert_eq!((s.accuracy, s.severe_rate, s.major_rate), (1.0, 0.0, 0.0));
    let s = mqm_aggregate(&labels(&[Severity::Severe, Severity::Major, Severity::Ok])).unwrap();
    assert_eq!(s.accuracy, 0.5);
    assert_eq!((s.severe_rate, s.major_rate), (1.0 / 3.0, 1.0 / 3.0));
    assert!(mqm_aggregate(&[]).is_err());
}

#[test]
fn labels_csv_round_trips() {
    let l = labels(&[Severity::Severe, Severity::Major, Severity::Ok]);
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("labels.csv");
    write_labels(&p, &l).unwrap();
    assert_eq!(std::fs::read_to_string(&p).unwrap(), "id,severity\n0,severe\n1,major\n2,ok\n");
    assert_eq!(read_labels(&p).unwrap(), l);
    assert!(parse_labels("id,severity\n3,fatal\n".as_bytes()).is_err());
}

#[test]
fn report_aggregates_from_records_and_round_trips() {
    let h = [toks("a b c d"), toks("e f")];
    let r = [toks("a b c d"), toks("e g")];
    let recs: Vec<SentenceRecord> = (0..2)
        .map(|i| SentenceRecord::new(i, &toks("s"), &h[i], &r[i], Some(if i == 0 { "x".into() } else { "y".into() })))
        .collect();
    let rep = EvalReport::from_records(recs, BleuSmoothing::None);
    assert_eq!(rep.bleu.score, corpus_bleu(&h, &r, BleuSmoothing::None).unwrap());
    assert_eq!(rep.exact_match, Some(0.5));
    assert_eq!(rep.group_exact_match, vec![("x".into(), 1.0), ("y".into(), 0.0)]);
    assert_eq!(EvalReport::from_json(&rep.to_json().unwrap()).unwrap(), rep);
    let csv = rep.sentences_csv().unwrap();
    let back = EvalReport::parse_sentences_csv(&csv[..]).unwrap();
    assert_eq!(back, rep.sentences);
    assert_eq!(EvalReport::from_records(back, BleuSmoothing::None), rep);
}
