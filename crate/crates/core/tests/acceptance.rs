//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! non-zero when a criterion fails that is not listed as a known failure.

use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use markov_mix::em::{em_fit, random_mixture, refine, EmConfig, EmInit};
use markov_mix::eval::{hungarian, recovery_error, trail_error};
use markov_mix::experiment::{degenerate_sweep, Scenario};
use markov_mix::io::{generate_mixture, GeneratorSpec};
use markov_mix::linalg::sigma_k;
use markov_mix::model::{
    appendix_mixture, component_structure, exact_trail_distribution, ground_truth_factors, sample_distribution,
    sample_trails, Mixture,
};
use markov_mix::params::{degen_bounds, estimate_r, sigma_bound_check, tv_bound_check};
use markov_mix::spectral::{
    ca_svd, cokernel_factorization, companionship_classes, eigendecompose_pair, gkv_svd, recover_from_factorization,
    Mode, RecoveryOptions, Tolerances,
};
use markov_mix::Error;

struct Outcome {
    id: &'static str,
    pass: bool,
    detail: String,
}

/// Criteria whose failure is reported but does not fail the run, with the reason.
const KNOWN_FAILURES: &[(&str, &str)] = &[(
    "5a",
    "the unsquared cut bound is violated by random cuts; the squared bound (5b) holds",
)];

fn outcome(id: &'static str, pass: bool, detail: String) -> Outcome {
    Outcome { id, pass, detail }
}

fn grid_instances() -> Vec<(usize, u64)> {
    (3..=8).flat_map(|r| (0..10u64).map(move |s| (r, s))).collect()
}

fn generated(n: usize, l: usize, r: usize, seed: u64) -> Mixture<f64> {
    generate_mixture(&GeneratorSpec::new(n, l, r, seed).recoverable()).expect("generation")
}

fn ca_error(m: &Mixture<f64>, l: usize, r: Option<usize>) -> (f64, Duration) {
    let d = exact_trail_distribution(m);
    let t = Instant::now();
    let e = match ca_svd(&d, l, r, &RecoveryOptions::default()) {
        Ok(rep) => recovery_error(m, &rep.mixture).expect("shapes").value,
        Err(_) => f64::INFINITY,
    };
    (e, t.elapsed())
}

fn criterion_1() -> Outcome {
    let runs: Vec<(usize, u64, f64, Duration)> = grid_instances()
        .into_par_iter()
        .map(|(r, s)| {
            let (e, t) = ca_error(&generated(20, 3, r, s), 3, Some(r));
            (r, s, e, t)
        })
        .collect();
    let good = runs.iter().filter(|x| x.2 <= 1e-6).count();
    let worst = runs.iter().map(|x| x.2).fold(0.0, f64::max);
    let slowest = runs.iter().map(|x| x.3).max().unwrap_or_default();
    let pass = good * 100 >= 95 * runs.len() && slowest <= Duration::from_secs(60);
    outcome(
        "1",
        pass,
        format!(
            "exact recovery: {good}/{} runs with error <= 1e-6 (need 95%), worst {worst:.2e}, slowest {:.2}s",
            runs.len(),
            slowest.as_secs_f64()
        ),
    )
}

fn criterion_2() -> Outcome {
    let rows: Vec<(u64, f64, f64, f64, f64)> = (0..10u64)
        .into_par_iter()
        .map(|s| {
            let gkv = |m: &Mixture<f64>| {
                let d = exact_trail_distribution(m);
                match gkv_svd(&d, 3, &RecoveryOptions::default()) {
                    Ok(rep) => recovery_error(m, &rep.mixture).expect("shapes").value,
                    Err(_) => f64::INFINITY,
                }
            };
            let m6 = generated(20, 3, 6, s);
            let m3 = generated(20, 3, 3, s);
            (
                s,
                ca_error(&m6, 3, Some(6)).0,
                gkv(&m6),
                ca_error(&m3, 3, Some(3)).0,
                gkv(&m3),
            )
        })
        .collect();
    let pass = rows
        .iter()
        .all(|&(_, ca6, gkv6, ca3, gkv3)| ca6 <= 1e-6 && gkv6 >= 0.01 && ca3 <= 1e-6 && gkv3 <= 1e-6);
    let min_gkv6 = rows.iter().map(|x| x.2).fold(f64::INFINITY, f64::min);
    let max_ca6 = rows.iter().map(|x| x.1).fold(0.0, f64::max);
    let max3 = rows.iter().map(|x| x.3.max(x.4)).fold(0.0, f64::max);
    outcome(
        "2",
        pass,
        format!("r=6: ca-svd max {max_ca6:.2e}, gkv-svd min {min_gkv6:.3}; r=3: max of both {max3:.2e}"),
    )
}

fn criterion_3() -> Outcome {
    let m = appendix_mixture();
    let d = exact_trail_distribution(&m);
    let o1 = DMatrix::from_row_slice(
        4,
        4,
        &[
            0.25,
            0.25,
            0.,
            0.,
            0.5,
            0.5,
            0.,
            0.,
            0.,
            0.,
            1. / 3.,
            0.,
            0.,
            0.,
            0.,
            0.,
        ],
    ) / 8.0;
    let o2 = DMatrix::from_row_slice(
        4,
        4,
        &[
            0.5,
            0.,
            0.,
            0.,
            0.,
            0.25,
            0.,
            0.25,
            0.,
            1. / 6.,
            0.,
            1. / 6.,
            0.,
            0.5,
            0.,
            0.5,
        ],
    ) / 8.0;
    let dev = (d.slice(0).unwrap() - o1)
        .abs()
        .max()
        .max((d.slice(1).unwrap() - o2).abs().max());
    let f = cokernel_factorization(&d, 2, None, 1e-8).unwrap();
    let (classes, _) = companionship_classes(&f, None, Mode::Exact, true, 1e-8).unwrap();
    let degenerate = matches!(
        eigendecompose_pair(0, 1, &f, &Tolerances::default()),
        Err(Error::StartingRatioDegeneracy { .. })
    );
    let pass = dev <= 1e-15 && f.r == 3 && classes.classes == vec![vec![0, 1], vec![2, 3]] && degenerate;
    outcome(
        "3",
        pass,
        format!(
            "O_1/O_2 max deviation {dev:.1e}, co-kernel dimension {}, classes {:?} (0-based), degeneracy raised: {degenerate}",
            f.r, classes.classes
        ),
    )
}

fn criterion_4() -> Outcome {
    let mut checked = 0;
    let mut failures = 0;
    let mut worst_slack = f64::INFINITY;
    for k in 0..100u64 {
        let n = [6, 10, 20][(k % 3) as usize];
        let l = [2, 3, 5][((k / 3) % 3) as usize];
        let m: Mixture<f64> = random_mixture(n, l, 4000 + k);
        for j in 0..n {
            let b = degen_bounds(&m, j).unwrap();
            checked += 1;
            let slack = (b.sigma_l_oj - b.lower).min(b.upper - b.sigma_l_oj);
            worst_slack = worst_slack.min(slack);
            if !(b.lower <= b.sigma_l_oj + 1e-10 && b.sigma_l_oj <= b.upper + 1e-10) {
                failures += 1;
            }
        }
    }
    outcome(
        "4",
        failures == 0,
        format!("sandwich bound on {checked} states of 100 mixtures: {failures} violations, tightest margin {worst_slack:.2e}"),
    )
}

struct CutStats {
    pairs: usize,
    printed_violations: usize,
    squared_violations: usize,
    worst_printed_ratio: f64,
    tv_checks: usize,
    tv_violations: usize,
    identical_sigma: f64,
}

fn cut_stats() -> CutStats {
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let mut s = CutStats {
        pairs: 0,
        printed_violations: 0,
        squared_violations: 0,
        worst_printed_ratio: 0.0,
        tv_checks: 0,
        tv_violations: 0,
        identical_sigma: 0.0,
    };
    for k in 0..100u64 {
        let n = [6, 8, 10][(k % 3) as usize];
        let l = [2, 3][((k / 3) % 2) as usize];
        let r = l + (k / 6 % 3) as usize;
        let m = generated(n, l, r, 5000 + k);
        let cut: Vec<bool> = loop {
            let c: Vec<bool> = (0..2 * n).map(|_| rng.random_bool(0.5)).collect();
            if c.iter().any(|&x| x) && !c.iter().all(|&x| x) {
                break c;
            }
        };
        let b = sigma_bound_check(&m, &cut).unwrap();
        s.pairs += 1;
        s.printed_violations += usize::from(!b.holds_printed);
        s.squared_violations += usize::from(!b.holds_squared);
        if b.rhs > 0.0 {
            s.worst_printed_ratio = s.worst_printed_ratio.max(b.lhs / b.rhs);
        }
        for a in 0..l {
            for c in a + 1..l {
                let t = tv_bound_check(&m, a, c).unwrap();
                s.tv_checks += 1;
                s.tv_violations += usize::from(!t.holds);
            }
        }
    }
    // two copies of the same chain
    let base: Mixture<f64> = random_mixture(8, 2, 77);
    let twin = Mixture::new(base.start().clone(), vec![base.chain(0).clone(), base.chain(0).clone()]).unwrap();
    let r = component_structure(&twin).r();
    let a = ground_truth_factors(&twin).shuffle_matrix();
    s.identical_sigma = sigma_k(&a, a.nrows() - r);
    s
}

fn criterion_5(s: &CutStats) -> (Outcome, Outcome) {
    let a = outcome(
        "5a",
        s.printed_violations == 0,
        format!(
            "unsquared cut bound: {}/{} (mixture, cut) pairs violate it, worst lhs/rhs {:.2}",
            s.printed_violations, s.pairs, s.worst_printed_ratio
        ),
    );
    let b = outcome(
        "5b",
        s.squared_violations == 0 && s.tv_violations == 0 && s.identical_sigma <= 1e-8,
        format!(
            "squared cut bound: {}/{} violations; chain-distance bound: {}/{} violations; identical chains sigma {:.1e}",
            s.squared_violations, s.pairs, s.tv_violations, s.tv_checks, s.identical_sigma
        ),
    );
    (a, b)
}

fn criterion_6() -> Outcome {
    let lambdas: Vec<f64> = (0..10).map(|k| k as f64 / 10.0).collect();
    let seeds: Vec<u64> = (0..10).collect();
    let one = degenerate_sweep(20, 5, Scenario::One, &seeds, &lambdas).unwrap();
    let two = degenerate_sweep(20, 5, Scenario::Two, &seeds, &[1.0]).unwrap();
    let ok1 = one.iter().filter(|p| p.summary.chosen_l == 5).count();
    let ok2 = two.iter().filter(|p| p.summary.chosen_l == 3).count();
    outcome(
        "6",
        ok1 == one.len() && ok2 == two.len(),
        format!(
            "one pair merging, lambda 0..0.9: {ok1}/{} pick L=5; two pairs merged at lambda 1: {ok2}/{} pick L=3",
            one.len(),
            two.len()
        ),
    )
}

fn criterion_7() -> Outcome {
    let wrong: Vec<(usize, u64, usize)> = grid_instances()
        .into_par_iter()
        .filter_map(|(r, s)| {
            let d = exact_trail_distribution(&generated(20, 3, r, s));
            let est = estimate_r(&d, 3).map(|e| e.r_hat).unwrap_or(0);
            (est != r).then_some((r, s, est))
        })
        .collect();
    outcome(
        "7",
        wrong.is_empty(),
        format!("estimate_r exact on {}/60 instances {:?}", 60 - wrong.len(), wrong),
    )
}

fn criterion_8() -> Outcome {
    let rows: Vec<(u64, [f64; 3])> = (0..5u64)
        .map(|s| {
            let m = generated(10, 2, 4, 600 + s);
            let exact = exact_trail_distribution(&m);
            let e = [10_000u64, 100_000, 1_000_000]
                .map(|count| trail_error(&sample_distribution(&m, count, 700 + s).unwrap(), &exact).unwrap());
            (s, e)
        })
        .collect();
    let pass = rows.iter().all(|(_, e)| {
        let ratio = e[0] / e[2];
        e[0] > e[1] && e[1] > e[2] && (3.0..=30.0).contains(&ratio)
    });
    let ratios: Vec<String> = rows.iter().map(|(_, e)| format!("{:.2}", e[0] / e[2])).collect();
    outcome(
        "8",
        pass,
        format!(
            "errors decrease on every instance; error(1e4)/error(1e6) = [{}]",
            ratios.join(", ")
        ),
    )
}

fn criterion_9() -> Outcome {
    let errs: Vec<f64> = (0..10u64)
        .into_par_iter()
        .map(|s| {
            let m = generated(10, 2, 4, s);
            let d = sample_distribution(&m, 10_000_000, s + 1000).unwrap();
            match ca_svd(&d, 2, Some(4), &RecoveryOptions::default()) {
                Ok(rep) => recovery_error(&m, &rep.mixture).unwrap().value,
                Err(_) => f64::INFINITY,
            }
        })
        .collect();
    let good = errs.iter().filter(|&&e| e <= 0.02).count();
    let shown: Vec<String> = errs.iter().map(|e| format!("{e:.4}")).collect();
    outcome(
        "9",
        good >= 8,
        format!("1e7 samples: {good}/10 seeds with error <= 0.02 [{}]", shown.join(", ")),
    )
}

fn criterion_10() -> Outcome {
    // monotone likelihood
    let mut worst_drop: f64 = 0.0;
    let mut runs = 0;
    for s in 0..6u64 {
        let m = generated(10, 2, 4, 800 + s);
        let inputs = [
            exact_trail_distribution(&m),
            sample_distribution(&m, 20_000, s).unwrap(),
        ];
        for d in &inputs {
            let cfg = EmConfig {
                max_iters: 40,
                tol: 0.0,
                init: EmInit::Random(s),
                ..Default::default()
            };
            let fit = em_fit(d, 2, &cfg).unwrap();
            runs += 1;
            for w in fit.loglik_trace.windows(2) {
                worst_drop = worst_drop.max(w[0] - w[1]);
            }
        }
    }
    let monotone = worst_drop <= 1e-10;

    // one step with a single chain is the count estimate
    let m = generated(6, 2, 3, 9);
    let trails = sample_trails(&m, 5000, 3, 3).unwrap();
    let counts = trails.window_counts();
    let n = 6;
    let mut start = vec![0.0; n];
    let mut trans = vec![vec![0.0; n]; n];
    for (&(i, j, k), &c) in &counts {
        let c = c as f64;
        start[i] += c;
        trans[i][j] += c;
        trans[j][k] += c;
    }
    let total: f64 = start.iter().sum();
    let d = trails.to_distribution::<f64>().unwrap();
    let fit = em_fit(
        &d,
        1,
        &EmConfig {
            max_iters: 1,
            tol: 0.0,
            init: EmInit::Random(1),
            ..Default::default()
        },
    )
    .unwrap();
    let mut mle_dev: f64 = 0.0;
    for i in 0..n {
        mle_dev = mle_dev.max((fit.mixture.s(0, i) - start[i] / total).abs());
        let row: f64 = trans[i].iter().sum();
        for j in 0..n {
            let want = if row > 0.0 { trans[i][j] / row } else { 1.0 / n as f64 };
            mle_dev = mle_dev.max((fit.mixture.m(0, i, j) - want).abs());
        }
    }

    // the truth is a fixed point
    let mut drift: f64 = 0.0;
    for s in 0..5u64 {
        let m = generated(10, 2, 4, 900 + s);
        let fit = refine(&exact_trail_distribution(&m), &m, 5).unwrap();
        for c in 0..2 {
            drift = drift.max((fit.mixture.chain(c) - m.chain(c)).abs().max());
        }
        drift = drift.max((fit.mixture.start() - m.start()).abs().max());
    }
    outcome(
        "10",
        monotone && mle_dev <= 1e-12 && drift <= 1e-10,
        format!(
            "largest likelihood drop {worst_drop:.1e} over {runs} runs; one-chain step vs counts {mle_dev:.1e}; drift from truth {drift:.1e}"
        ),
    )
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

fn criterion_11() -> Outcome {
    let rows: Vec<(f64, f64, f64)> = (0..10u64)
        .into_par_iter()
        .map(|s| {
            let m = generated(20, 3, 6, s);
            let truth = exact_trail_distribution(&m);
            let d = sample_distribution(&m, 1_000_000, s + 1000).unwrap();
            let score = |x: &Mixture<f64>| trail_error(&truth, &exact_trail_distribution(x)).unwrap();
            let opts = RecoveryOptions {
                seed: s,
                ..Default::default()
            };
            let (ca, combo) = match ca_svd(&d, 3, Some(6), &opts) {
                Ok(rep) => (
                    score(&rep.mixture),
                    score(&refine(&d, &rep.mixture, 5).unwrap().mixture),
                ),
                Err(_) => (1.0, 1.0),
            };
            let em = em_fit(
                &d,
                3,
                &EmConfig {
                    max_iters: 100,
                    init: EmInit::Random(s),
                    ..Default::default()
                },
            )
            .unwrap();
            (ca, combo, score(&em.mixture))
        })
        .collect();
    let ca = median(rows.iter().map(|x| x.0).collect());
    let combo = median(rows.iter().map(|x| x.1).collect());
    let em = median(rows.iter().map(|x| x.2).collect());
    outcome(
        "11",
        combo <= ca && combo <= em,
        format!("median trail-error: ca-svd+em(5) {combo:.4}, ca-svd {ca:.4}, em(100) {em:.4}"),
    )
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(k - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, k - 1);
            out.push(q);
        }
    }
    out
}

fn criterion_12() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut mismatches = 0;
    for t in 0..200 {
        let l = 1 + t % 6;
        let cost: Vec<Vec<f64>> = (0..l).map(|_| (0..l).map(|_| rng.random::<f64>()).collect()).collect();
        let row_sum = |p: &[usize]| (0..l).map(|i| cost[i][p[i]]).sum::<f64>();
        let brute = permutations(l).iter().map(|p| row_sum(p)).fold(f64::INFINITY, f64::min);
        let (perm, total) = hungarian(&cost).unwrap();
        if row_sum(&perm) != brute || total != brute {
            mismatches += 1;
        }
    }
    outcome(
        "12",
        mismatches == 0,
        format!("optimal cost equals brute force on {}/200 matrices", 200 - mismatches),
    )
}

/// Orthogonal factor of the QR decomposition of a Gaussian matrix.
fn random_orthogonal(r: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(r, r, |_, _| {
        let u1: f64 = 1.0 - rng.random::<f64>();
        let u2: f64 = rng.random();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    });
    g.qr().q()
}

fn criterion_13() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut worst_invariance: f64 = 0.0;
    let mut worst_round_trip: f64 = 0.0;
    for k in 0..20u64 {
        let (n, l, r) = [(12, 2, 4), (15, 3, 5), (20, 3, 6)][(k % 3) as usize];
        let m = generated(n, l, r, 1300 + k);
        let d = exact_trail_distribution(&m);
        let opts = RecoveryOptions::default();
        let fact = cokernel_factorization(&d, l, Some(r), opts.tol.ker).unwrap();
        let q = random_orthogonal(r, &mut rng);
        let base = recover_from_factorization(&d, &fact, &opts).map(|x| x.mixture);
        let mixed = recover_from_factorization(&d, &fact.remixed(&q), &opts).map(|x| x.mixture);
        match (base, mixed) {
            (Ok(a), Ok(b)) => {
                worst_invariance = worst_invariance.max(recovery_error(&a, &b).unwrap().value);
                worst_round_trip = worst_round_trip.max(trail_error(&d, &exact_trail_distribution(&b)).unwrap());
            }
            _ => {
                worst_invariance = f64::INFINITY;
            }
        }
    }
    outcome(
        "13",
        worst_invariance < 1e-8 && worst_round_trip < 1e-8,
        format!(
            "20 orthogonal re-mixings: largest change {worst_invariance:.1e}, largest round-trip distance {worst_round_trip:.1e}"
        ),
    )
}

fn main() {
    let started = Instant::now();
    let mut results = Vec::new();
    let mut run = |o: Outcome| {
        let known = KNOWN_FAILURES.iter().find(|(id, _)| *id == o.id);
        let tag = match (o.pass, known) {
            (true, None) => "PASS".to_string(),
            (true, Some(_)) => "PASS (listed as a known failure)".to_string(),
            (false, None) => "FAIL".to_string(),
            (false, Some((_, why))) => format!("FAIL (known: {why})"),
        };
        println!("criterion {:>3}: {tag}  {}", o.id, o.detail);
        results.push((o.pass, known.is_some()));
    };
    run(criterion_1());
    run(criterion_2());
    run(criterion_3());
    run(criterion_4());
    let stats = cut_stats();
    let (a, b) = criterion_5(&stats);
    run(a);
    run(b);
    run(criterion_6());
    run(criterion_7());
    run(criterion_8());
    run(criterion_9());
    run(criterion_10());
    run(criterion_11());
    run(criterion_12());
    run(criterion_13());
    let unexpected = results.iter().filter(|(pass, known)| !pass && !known).count();
    let known = results.iter().filter(|(pass, known)| !pass && *known).count();
    println!(
        "acceptance: {} passed, {unexpected} failed, {known} known failures ({:.1}s)",
        results.iter().filter(|x| x.0).count(),
        started.elapsed().as_secs_f64()
    );
    if unexpected > 0 {
        std::process::exit(1);
    }
}
