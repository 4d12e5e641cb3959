use proptest::prelude::*;
use simfair::metrics::{example_f1, macro_f1, micro_f1, F1Report};
use simfair::similarity::LabelVector;

fn f1_from_counts(tp: usize, fp: usize, fn_: usize) -> f64 {
    if tp + fp + fn_ == 0 {
        1.0
    } else {
        2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
    }
}

fn counts(
    truth: &[Vec<bool>],
    pred: &[Vec<bool>],
    keep: impl Fn(usize, usize) -> bool,
) -> (usize, usize, usize) {
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (i, (t, p)) in truth.iter().zip(pred).enumerate() {
        for (j, (&a, &b)) in t.iter().zip(p).enumerate() {
            if !keep(i, j) {
                continue;
            }
            match (a, b) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fn_ += 1,
                _ => {}
            }
        }
    }
    (tp, fp, fn_)
}

fn oracle(truth: &[Vec<bool>], pred: &[Vec<bool>]) -> (f64, f64, f64) {
    let (tp, fp, fn_) = counts(truth, pred, |_, _| true);
    let micro = f1_from_counts(tp, fp, fn_);
    let l = truth[0].len();
    let macro_ = (0..l)
        .map(|c| {
            let (tp, fp, fn_) = counts(truth, pred, |_, j| j == c);
            f1_from_counts(tp, fp, fn_)
        })
        .sum::<f64>()
        / l as f64;
    let example = (0..truth.len())
        .map(|r| {
            let (tp, fp, fn_) = counts(truth, pred, |i, _| i == r);
            f1_from_counts(tp, fp, fn_)
        })
        .sum::<f64>()
        / truth.len() as f64;
    (micro, macro_, example)
}

fn pair_strategy() -> impl Strategy<Value = (Vec<Vec<bool>>, Vec<Vec<bool>>)> {
    (1usize..=30, 1usize..=8).prop_flat_map(|(n, l)| {
        let m = prop::collection::vec(prop::collection::vec(any::<bool>(), l), n);
        (m.clone(), m)
    })
}

fn wrap(m: &[Vec<bool>]) -> Vec<LabelVector> {
    m.iter().cloned().map(LabelVector::new).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn f1_scores_match_oracle((t, p) in pair_strategy()) {
        let (micro, macro_, example) = oracle(&t, &p);
        let (tv, pv) = (wrap(&t), wrap(&p));
        prop_assert!((micro_f1(&tv, &pv).unwrap() - micro).abs() <= 1e-12);
        prop_assert!((macro_f1(&tv, &pv).unwrap() - macro_).abs() <= 1e-12);
        prop_assert!((example_f1(&tv, &pv).unwrap() - example).abs() <= 1e-12);
        let report = F1Report::compute(&tv, &pv).unwrap();
        prop_assert!((0.0..=1.0).contains(&report.micro));
        prop_assert!((0.0..=1.0).contains(&report.macro_));
        prop_assert!((0.0..=1.0).contains(&report.example));
    }

    #[test]
    fn row_order_does_not_matter((t, p) in pair_strategy()) {
        let (tv, pv) = (wrap(&t), wrap(&p));
        let (tr, pr): (Vec<_>, Vec<_>) = tv.iter().cloned().zip(pv.iter().cloned()).rev().unzip();
        let a = F1Report::compute(&tv, &pv).unwrap();
        let b = F1Report::compute(&tr, &pr).unwrap();
        prop_assert!((a.micro - b.micro).abs() <= 1e-12);
        prop_assert!((a.macro_ - b.macro_).abs() <= 1e-12);
        prop_assert!((a.example - b.example).abs() <= 1e-12);
    }

    #[test]
    fn perfect_prediction_scores_one((t, _) in pair_strategy()) {
        let tv = wrap(&t);
        let r = F1Report::compute(&tv, &tv).unwrap();
        prop_assert_eq!((r.micro, r.macro_, r.example), (1.0, 1.0, 1.0));
    }
}
