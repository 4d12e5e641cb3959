//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use simfair::data::SynthSpec;
use simfair::fairness::{
    dp_violation, eop_violation, simfair_violation, SensitiveAttr, ViolationForm,
};
use simfair::linalg::Matrix;
use simfair::metrics::{example_f1, macro_f1, micro_f1};
use simfair::model::init_backbone;
use simfair::similarity::weights_for;
use simfair::train::batch_objective;
use simfair::{LabelVector, SimilaritySpec};
use simfair_cli::output::Table;
use simfair_cli::{
    cmd_robustness, cmd_sweep, cmd_train, Command, DataSource, Regularizer, RunSpec, YAdvSelector,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

struct Instance {
    probs: Matrix,
    sensitive: Vec<SensitiveAttr>,
    labels: Vec<LabelVector>,
    y_adv: LabelVector,
    k: usize,
}

fn random_instance(rng: &mut ChaCha8Rng) -> Instance {
    let n = rng.random_range(1..=50);
    let l = rng.random_range(1..=4);
    let k = rng.random_range(2..=3);
    let codes = 1u32 << l;
    let pool = rng.random_range(1..=codes.min(5));
    let to_label = |c: u32| LabelVector::new((0..l).map(|b| c >> b & 1 == 1).collect());
    Instance {
        probs: Matrix::from_vec(n, l, (0..n * l).map(|_| rng.random::<f64>()).collect()).unwrap(),
        sensitive: (0..n)
            .map(|_| SensitiveAttr::new(rng.random_range(1..=k as u32)).unwrap())
            .collect(),
        labels: (0..n)
            .map(|_| to_label(rng.random_range(0..pool)))
            .collect(),
        y_adv: to_label(rng.random_range(0..pool)),
        k,
    }
}

fn exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    let mut mismatches = 0;
    for _ in 0..200 {
        let c = random_instance(&mut rng);
        let pairs = [
            (
                simfair_violation(
                    &c.probs,
                    &c.sensitive,
                    &c.labels,
                    &c.y_adv,
                    &SimilaritySpec::Constant,
                    c.k,
                )
                .unwrap(),
                dp_violation(&c.probs, &c.sensitive, c.k).unwrap(),
            ),
            (
                simfair_violation(
                    &c.probs,
                    &c.sensitive,
                    &c.labels,
                    &c.y_adv,
                    &SimilaritySpec::Indicator,
                    c.k,
                )
                .unwrap(),
                eop_violation(&c.probs, &c.sensitive, &c.labels, &c.y_adv, c.k).unwrap(),
            ),
        ];
        for (sf, reference) in pairs {
            match (sf.violation.value(), reference.violation.value()) {
                (Some(a), Some(b)) => worst = worst.max((a - b).abs()),
                (None, None) => {}
                _ => mismatches += 1,
            }
        }
    }
    outcome(
        worst <= 1e-12 && mismatches == 0,
        format!("200 datasets, max |diff| {worst:e}, definedness mismatches {mismatches}"),
    )
}

fn limits() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut dp_gap, mut eop_gap) = (0.0f64, 0.0f64);
    let mut checked = 0;
    while checked < 50 {
        let c = random_instance(&mut rng);
        let Some(eop) = eop_violation(&c.probs, &c.sensitive, &c.labels, &c.y_adv, c.k)
            .unwrap()
            .violation
            .value()
        else {
            continue;
        };
        let dp = dp_violation(&c.probs, &c.sensitive, c.k)
            .unwrap()
            .violation
            .value()
            .unwrap();
        let sf = |gamma: f64| {
            let spec = SimilaritySpec::jaccard_exp(gamma).unwrap();
            simfair_violation(&c.probs, &c.sensitive, &c.labels, &c.y_adv, &spec, c.k)
                .unwrap()
                .violation
                .value()
                .unwrap()
        };
        dp_gap = dp_gap.max((sf(1e-6) - dp).abs());
        eop_gap = eop_gap.max((sf(60.0) - eop).abs());
        checked += 1;
    }
    outcome(
        dp_gap <= 1e-4 && eop_gap <= 1e-4,
        format!("50 datasets, max |SF(1e-6)-DP| {dp_gap:e}, max |SF(60)-EOp| {eop_gap:e}"),
    )
}

fn benchmark() -> SynthSpec {
    SynthSpec {
        samples: 20_000,
        labels: 6,
        decay: 1.5,
        bias: 1.0,
        seed: 0,
        ..SynthSpec::default()
    }
}

fn run_spec(command: Command, out: &Path) -> RunSpec {
    RunSpec::new(command, DataSource::Synth(benchmark()), out)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn std_dev(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

fn cell(table: &Table, row: usize, col: &str) -> f64 {
    table.get(row, col).unwrap().parse().unwrap()
}

fn robustness(dir: &Path) -> Outcome {
    let table =
        cmd_robustness(&run_spec(Command::Robustness, &dir.join("robustness.csv"))).unwrap();
    let select = |keep: &str, est: &str, gamma: &str| -> Vec<f64> {
        (0..table.rows.len())
            .filter(|&r| {
                table.get(r, "keep_fraction") == Some(keep)
                    && table.get(r, "estimator") == Some(est)
                    && table.get(r, "gamma") == Some(gamma)
            })
            .map(|r| cell(&table, r, "violation"))
            .collect()
    };
    let (full_eop, full_s5) = (select("1", "eop", "")[0], select("1", "simfair", "5")[0]);
    let (eop, s5) = (select("0.05", "eop", ""), select("0.05", "simfair", "5"));
    let dev_eop = mean(&eop.iter().map(|v| (v - full_eop).abs()).collect::<Vec<_>>());
    let dev_s5 = mean(&s5.iter().map(|v| (v - full_s5).abs()).collect::<Vec<_>>());
    let (sd_eop, sd_s5) = (std_dev(&eop), std_dev(&s5));
    outcome(
        eop.len() == 10 && dev_eop > dev_s5 && sd_eop >= 2.0 * sd_s5,
        format!(
            "y_adv {}, EOp {full_eop:.4} -> mean {:.4} (dev {dev_eop:.4}, sd {sd_eop:.4}); s5 {full_s5:.4} -> mean {:.4} (dev {dev_s5:.4}, sd {sd_s5:.4})",
            table.get(0, "y_adv").unwrap(),
            mean(&eop),
            mean(&s5)
        ),
    )
}

/// Rows of a sweep grouped by seed: `(seed, regularizer) -> row index`.
fn row_of(table: &Table, seed: u64, reg: &str) -> usize {
    (0..table.rows.len())
        .find(|&r| {
            table.get(r, "seed") == Some(&seed.to_string())
                && table.get(r, "regularizer") == Some(reg)
        })
        .unwrap()
}

fn regularizer_effect(dir: &Path) -> Outcome {
    let mut spec = run_spec(Command::Sweep, &dir.join("effect.csv"));
    spec.regularizers = vec![Regularizer::None, Regularizer::SimFair { gamma: 5.0 }];
    spec.lambdas = vec![10.0];
    spec.seeds = (1..=10).collect();
    spec.y_adv = YAdvSelector::Rank(1);
    let table = cmd_sweep(&spec).unwrap();
    let mut wins = 0;
    let mut worst_dp = 0.0f64;
    let mut worst_eop = 0.0f64;
    let mut worst_f1 = f64::NEG_INFINITY;
    for seed in 1..=10 {
        let (base, reg) = (
            row_of(&table, seed, "none"),
            row_of(&table, seed, "simfair"),
        );
        let dp_ratio = cell(&table, reg, "dp") / cell(&table, base, "dp");
        let eop_ratio = cell(&table, reg, "eop") / cell(&table, base, "eop");
        let f1_drop = cell(&table, base, "micro_f1") - cell(&table, reg, "micro_f1");
        worst_dp = worst_dp.max(dp_ratio);
        worst_eop = worst_eop.max(eop_ratio);
        worst_f1 = worst_f1.max(f1_drop);
        if dp_ratio <= 0.5 && eop_ratio <= 0.5 && f1_drop <= 0.05 {
            wins += 1;
        }
    }
    outcome(
        wins >= 8,
        format!("{wins}/10 seeds; worst DP ratio {worst_dp:.3}, worst EOp ratio {worst_eop:.3}, worst micro-F1 drop {worst_f1:.4}"),
    )
}

fn small_group(dir: &Path) -> Outcome {
    let mut spec = run_spec(Command::Sweep, &dir.join("small.csv"));
    spec.regularizers = vec![Regularizer::Eop, Regularizer::SimFair { gamma: 10.0 }];
    spec.lambdas = vec![5000.0];
    spec.seeds = (1..=10).collect();
    spec.y_adv = YAdvSelector::Smallest(20);
    let table = cmd_sweep(&spec).unwrap();
    let mut wins = 0;
    let mut pairs = Vec::new();
    for seed in 1..=10 {
        let (eop, sf) = (row_of(&table, seed, "eop"), row_of(&table, seed, "simfair"));
        let (a, b) = (cell(&table, sf, "eop"), cell(&table, eop, "eop"));
        if a < b {
            wins += 1;
        }
        pairs.push(format!("{a:.3}/{b:.3}"));
    }
    outcome(
        wins >= 7,
        format!(
            "{wins}/10 seeds; test EOp simfair/eop-reg: {}",
            pairs.join(" ")
        ),
    )
}

fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(1e-12)
}

fn gradients() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let lambdas = [0.0, 1.0, 10.0];
    let mut worst = 0.0f64;
    let mut checked = 0;
    let mut draws = 0;
    while checked < 100 {
        draws += 1;
        let lambda = lambdas[checked % 3];
        let spec = match (checked / 3) % 3 {
            0 => SimilaritySpec::Constant,
            1 => SimilaritySpec::Indicator,
            _ => SimilaritySpec::jaccard_exp(rng.random_range(0.1..10.0)).unwrap(),
        };
        let (n, d, l, k) = (
            rng.random_range(6..=30),
            rng.random_range(1..=5),
            rng.random_range(1..=4),
            rng.random_range(2..=3),
        );
        let mut dims = vec![d];
        for _ in 0..rng.random_range(0..=2) {
            dims.push(rng.random_range(2..=8));
        }
        dims.push(l);
        let mut model = init_backbone(&dims, draws).unwrap();
        model.params_mut().iter_mut().for_each(|p| *p *= 2.0);
        let x = Matrix::from_vec(
            n,
            d,
            (0..n * d).map(|_| rng.random_range(-2.0..2.0)).collect(),
        )
        .unwrap();
        let pool = rng.random_range(1..=(1u32 << l).min(4));
        let labels: Vec<LabelVector> = (0..n)
            .map(|_| {
                let c = rng.random_range(0..pool);
                LabelVector::new((0..l).map(|b| c >> b & 1 == 1).collect())
            })
            .collect();
        let sensitive: Vec<SensitiveAttr> = (0..n)
            .map(|i| {
                SensitiveAttr::new(if i < k {
                    i as u32 + 1
                } else {
                    rng.random_range(1..=k as u32)
                })
                .unwrap()
            })
            .collect();
        let weights = weights_for(&spec, &labels, &labels[0]).unwrap();
        let form = ViolationForm::default_for(k);
        let objective = |m: &simfair::model::Backbone| {
            let probs = m.forward_batch(&x).unwrap();
            batch_objective(
                &probs,
                &labels,
                &sensitive,
                Some((&weights, lambda, k, form)),
            )
            .unwrap()
        };
        let pass = model.forward_pass(&x).unwrap();
        let obj = batch_objective(
            pass.probs(),
            &labels,
            &sensitive,
            Some((&weights, lambda, k, form)),
        )
        .unwrap();
        // the penalty is a sum of norms; configurations sitting on a kink are redrawn
        if lambda > 0.0 && obj.penalty.flatten().is_none_or(|v| v < 1e-3) {
            continue;
        }
        let analytic = pass.backward(&obj.upstream).unwrap();
        let h = 1e-5;
        let mut probe = model.clone();
        let numeric: Vec<f64> = (0..analytic.len())
            .map(|i| {
                let orig = probe.params()[i];
                probe.params_mut()[i] = orig + h;
                let up = objective(&probe).loss;
                probe.params_mut()[i] = orig - h;
                let down = objective(&probe).loss;
                probe.params_mut()[i] = orig;
                (up - down) / (2.0 * h)
            })
            .collect();
        worst = worst.max(relative_error(&analytic, &numeric));
        checked += 1;
    }
    outcome(
        worst <= 1e-4,
        format!("100 configurations ({draws} draws), max relative error {worst:e}"),
    )
}

fn oracle_f1(tp: usize, fp: usize, fn_: usize) -> f64 {
    if tp + fp + fn_ == 0 {
        1.0
    } else {
        2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
    }
}

fn metrics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    let mut degenerate = 0;
    for _ in 0..500 {
        let (n, l) = (rng.random_range(1..=20), rng.random_range(1..=6));
        let density = [0.0, 0.1, 0.5, 0.9][rng.random_range(0..4)];
        let draw = |rng: &mut ChaCha8Rng| -> Vec<Vec<bool>> {
            let mut m: Vec<Vec<bool>> = (0..n)
                .map(|_| (0..l).map(|_| rng.random_bool(density)).collect())
                .collect();
            // blank out a random row and column to hit the empty cases
            if rng.random_bool(0.5) {
                let (r, c) = (rng.random_range(0..n), rng.random_range(0..l));
                m[r].iter_mut().for_each(|b| *b = false);
                m.iter_mut().for_each(|row| row[c] = false);
            }
            m
        };
        let t = draw(&mut rng);
        let p = draw(&mut rng);
        let mut cells = vec![[0usize; 3]; n * l];
        for i in 0..n {
            for j in 0..l {
                let slot = &mut cells[i * l + j];
                match (t[i][j], p[i][j]) {
                    (true, true) => slot[0] += 1,
                    (false, true) => slot[1] += 1,
                    (true, false) => slot[2] += 1,
                    _ => {}
                }
            }
        }
        let total = |pick: &dyn Fn(usize, usize) -> bool| {
            let mut acc = [0usize; 3];
            for i in 0..n {
                for j in 0..l {
                    if pick(i, j) {
                        (0..3).for_each(|s| acc[s] += cells[i * l + j][s]);
                    }
                }
            }
            oracle_f1(acc[0], acc[1], acc[2])
        };
        let micro = total(&|_, _| true);
        let macro_ = (0..l).map(|c| total(&|_, j| j == c)).sum::<f64>() / l as f64;
        let example = (0..n).map(|r| total(&|i, _| i == r)).sum::<f64>() / n as f64;
        if t.iter().flatten().all(|b| !b) && p.iter().flatten().all(|b| !b) {
            degenerate += 1;
        }
        let tv: Vec<LabelVector> = t.into_iter().map(LabelVector::new).collect();
        let pv: Vec<LabelVector> = p.into_iter().map(LabelVector::new).collect();
        worst = worst
            .max((micro_f1(&tv, &pv).unwrap() - micro).abs())
            .max((macro_f1(&tv, &pv).unwrap() - macro_).abs())
            .max((example_f1(&tv, &pv).unwrap() - example).abs());
    }
    outcome(
        worst <= 1e-12,
        format!("500 instances ({degenerate} entirely empty), max |diff| {worst:e}"),
    )
}

fn determinism(dir: &Path) -> Outcome {
    let mut spec = run_spec(Command::Train, &dir.join("train"));
    spec.regularizers = vec![Regularizer::SimFair { gamma: 5.0 }];
    spec.lambdas = vec![10.0];
    let files = ["seed-1/model.txt", "seed-1/report.json", "run.json"];
    let snapshot = |spec: &RunSpec| -> Vec<Vec<u8>> {
        cmd_train(spec).unwrap();
        files
            .iter()
            .map(|f| fs::read(spec.out.join(f)).unwrap())
            .collect()
    };
    let first = snapshot(&spec);
    let second = snapshot(&spec);
    outcome(
        first == second,
        format!("{} files compared byte for byte", files.len()),
    )
}

type Criterion = (&'static str, Duration, fn(&Path) -> Outcome);

fn main() -> ExitCode {
    let dir = tempfile::tempdir().unwrap();
    let criteria: [Criterion; 8] = [
        (
            "exactness of DP/EOp reductions",
            Duration::from_secs(10),
            |_| exactness(),
        ),
        ("gamma limits", Duration::from_secs(10), |_| limits()),
        (
            "estimator robustness at 5% keep",
            Duration::from_secs(180),
            robustness,
        ),
        (
            "regularizer halves DP and EOp",
            Duration::from_secs(300),
            regularizer_effect,
        ),
        ("small-group rescue", Duration::from_secs(300), small_group),
        ("gradient suite", Duration::from_secs(30), |_| gradients()),
        ("metric oracles", Duration::from_secs(5), |_| metrics()),
        ("train determinism", Duration::from_secs(120), determinism),
    ];
    let mut failed = 0;
    for (i, (name, budget, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = check(dir.path());
        let elapsed = start.elapsed();
        let pass = result.pass && elapsed <= *budget;
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {} {}: {name}: {} [{:.1}s of {}s]",
            i + 1,
            if pass { "PASS" } else { "FAIL" },
            result.detail,
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
