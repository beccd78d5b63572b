//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Criterion 3 runs both the reduced 50-individual, five-year sweep and the
//! 200-individual, ten-year sweep.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::time::Instant;

use common::{
    cjs_loglik, daily_calibration, mean_lifetime, random_instance, seasonal_truth, sim_config,
    spec_for,
};
use ctas::study::{StartPolicy, StudyDesign};
use ctas_core::decode::{decode_with, oracle};
use ctas_core::inference::bands::quantile;
use ctas_core::inference::{interval_sweep, FitOptions};
use ctas_core::likelihood::{individual_loglik_bruteforce, individual_loglik_forward, Evaluator};
use ctas_core::linalg::{expm, matrix_exponential, IntensityMatrix};
use ctas_core::simulate::simulate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn rel_diff(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

fn forward_vs_enumeration() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut max_unknown = 0;
    for k in 0..500u64 {
        let m = 1 + (k % 3) as usize;
        let inst = random_instance(10_000 + k, m, 16, 12);
        max_unknown = max_unknown.max(Evaluator::unknown_occasions(&inst.history));
        let f =
            individual_loglik_forward(&inst.spec, &inst.params, &inst.grid, &inst.history).unwrap();
        let b = individual_loglik_bruteforce(&inst.spec, &inst.params, &inst.grid, &inst.history)
            .unwrap();
        worst = worst.max(rel_diff(f, b));
    }
    Outcome {
        pass: worst <= 1e-10,
        detail: format!("500 instances, up to {max_unknown} unknown occasions, max relative difference {worst:.2e}"),
    }
}

fn random_generator(rng: &mut ChaCha8Rng) -> IntensityMatrix {
    let dim = rng.random_range(2..=6);
    IntensityMatrix::from_rates(dim, |_, _| {
        if rng.random::<f64>() < 0.15 {
            0.0
        } else {
            10f64.powf(rng.random_range(-5.0..0.5))
        }
    })
    .unwrap()
}

fn exponential_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut row_err, mut min_entry, mut semigroup): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for _ in 0..1000 {
        let q = random_generator(&mut rng);
        let s = rng.random_range(0.0..60.0);
        let t = rng.random_range(0.0..60.0);
        let raw = expm(&q.as_matrix().scaled(s + t)).unwrap();
        for i in 0..q.dim() {
            row_err = row_err.max((raw.row(i).iter().sum::<f64>() - 1.0).abs());
            min_entry = min_entry.min(raw.row(i).iter().copied().fold(f64::INFINITY, f64::min));
        }
        let whole = matrix_exponential(&q, s + t).unwrap();
        let split = matrix_exponential(&q, s)
            .unwrap()
            .then(&matrix_exponential(&q, t).unwrap());
        for i in 0..q.dim() {
            row_err = row_err.max((whole.as_matrix().row(i).iter().sum::<f64>() - 1.0).abs());
        }
        semigroup = semigroup.max(whole.as_matrix().max_abs_diff(split.as_matrix()));
    }
    Outcome {
        pass: row_err <= 1e-10 && min_entry >= -1e-12 && semigroup <= 1e-10,
        detail: format!(
            "1000 generators: max row-sum error {row_err:.1e}, min raw entry {min_entry:.1e}, max semigroup error {semigroup:.1e}"
        ),
    }
}

const LENGTHS: [f64; 9] = [89.0, 55.0, 34.0, 21.0, 13.0, 8.0, 5.0, 3.0, 2.0];

fn sweep_pattern(n: usize, span: f64, seed: u64) -> (bool, String) {
    let sim = simulate(&sim_config(n, span, 30.0, seed)).unwrap();
    let (spec, truth) = seasonal_truth(span, 30.0);
    let spec = spec_for(&sim.data, &spec);
    let options = FitOptions {
        seed,
        hessian: false,
        ..FitOptions::default()
    };
    let sweep = interval_sweep(&spec, &sim.data, &LENGTHS, &truth, &options).unwrap();
    let ll: Vec<f64> = sweep
        .rows
        .iter()
        .map(|r| r.loglik().unwrap_or(f64::NAN))
        .collect();
    let times: Vec<String> = sweep
        .rows
        .iter()
        .map(|r| format!("{:.1}", r.wall_time().unwrap_or(f64::NAN)))
        .collect();
    let at2 = ll[8];
    let small = LENGTHS
        .iter()
        .zip(&ll)
        .filter(|(l, _)| **l <= 21.0)
        .map(|(_, v)| (v - at2).abs())
        .fold(0.0, f64::max);
    let at5 = (ll[6] - at2).abs();
    let converged = sweep
        .rows
        .iter()
        .all(|r| matches!(&r.fit, Ok(f) if f.converged));
    let table: Vec<String> = ll.iter().map(|v| format!("{v:.2}")).collect();
    (
        small < 1.0 && at5 < 0.1 && converged,
        format!(
            "n={n} over {span} days ({} kept): max|llk(l<=21)-llk(2)| = {small:.4}, |llk(5)-llk(2)| = {at5:.4}, all converged: {converged}; llk = [{}], seconds = [{}]",
            sim.data.len(),
            table.join(", "),
            times.join(", ")
        ),
    )
}

fn interval_convergence() -> Outcome {
    let (reduced, a) = sweep_pattern(50, 1825.0, 31);
    let (full, b) = sweep_pattern(200, 3646.0, 32);
    Outcome {
        pass: reduced && full,
        detail: format!("{a}; {b}"),
    }
}

fn iqr(values: &mut [f64]) -> f64 {
    quantile(values, 0.75) - quantile(values, 0.25)
}

fn parameter_recovery() -> Outcome {
    let mut template = sim_config(100, 1095.0, 20.0, 0);
    template.spec = template.spec.with_partition_length(20.0).unwrap();
    let design = |sizes: Vec<usize>, replicates: usize, seed: u64| StudyDesign {
        template: template.clone(),
        sizes,
        replicates,
        partition_length: 20.0,
        seed,
        fit: FitOptions {
            hessian: false,
            ..FitOptions::default()
        },
        start: StartPolicy::Default,
    };
    let small = design(vec![100], 20, 41);
    let large = design(vec![400], 5, 42);
    let a = small.run().unwrap();
    let b = large.run().unwrap();
    let failures = a.iter().chain(&b).filter(|r| r.estimates.is_none()).count();
    let summary = small.summarize(&a);
    let names = small.template.spec.param_names();
    let truth = small.truth_natural();
    let rb = |reps: &[ctas::study::Replicate], i: usize| -> Vec<f64> {
        reps.iter()
            .filter_map(|r| r.estimates.as_ref())
            .map(|e| (e[i] - truth[i]) / truth[i])
            .collect()
    };
    let medians: Vec<String> = summary
        .iter()
        .map(|s| format!("{}={:+.3}", s.parameter, s.median))
        .collect();
    let unbiased = summary.iter().all(|s| s.median.abs() <= 0.10);
    let narrower = (0..names.len())
        .filter(|&i| iqr(&mut rb(&b, i)) < iqr(&mut rb(&a, i)))
        .count();
    Outcome {
        pass: unbiased && narrower >= 7 && failures == 0 && summary.len() == 9,
        detail: format!(
            "median RB at n=100: [{}]; IQR narrower at n=400 for {narrower}/9; failed fits {failures}",
            medians.join(", ")
        ),
    }
}

fn decoding() -> Outcome {
    let (mut viterbi_ok, mut worst, mut monotone) = (0, 0.0f64, true);
    for k in 0..200u64 {
        let m = 1 + (k % 3) as usize;
        let inst = random_instance(20_000 + k, m, 12, 10);
        let ev = Evaluator::all_levels(&inst.spec, &inst.params, &inst.grid).unwrap();
        let d = decode_with(&ev, &inst.history).unwrap();
        let (best, _) = oracle::viterbi_with(&ev, &inst.history).unwrap();
        if best == d.states {
            viterbi_ok += 1;
        }
        let post = oracle::state_probabilities_with(&ev, &inst.history).unwrap();
        for (a, b) in d.posterior.iter().flatten().zip(post.iter().flatten()) {
            worst = worst.max((a - b).abs());
        }
        let last = inst.history.last_sighting() - d.first_capture;
        monotone &= d.posterior[last..]
            .windows(2)
            .all(|w| w[1][m] >= w[0][m] - 1e-12);
    }
    Outcome {
        pass: viterbi_ok == 200 && worst <= 1e-10 && monotone,
        detail: format!(
            "Viterbi equals enumeration on {viterbi_ok}/200, max marginal difference {worst:.1e}, death probability non-decreasing: {monotone}"
        ),
    }
}

fn calibration() -> Outcome {
    let cells = daily_calibration(100_000, 61);
    let worst = cells.iter().map(|c| c.z.abs()).fold(0.0, f64::max);
    let mean = mean_lifetime(-9.0, 100_000, 62);
    let expected = 9f64.exp();
    let rel = (mean / expected - 1.0).abs();
    Outcome {
        pass: worst <= 3.0 && rel <= 0.02,
        detail: format!(
            "{} month x transition cells, max |z| = {worst:.2}; mean lifetime {mean:.0} days vs {expected:.0} ({:.2}% off)",
            cells.len(),
            100.0 * rel
        ),
    }
}

fn cjs() -> Outcome {
    let mut worst: f64 = 0.0;
    for k in 0..100u64 {
        let inst = random_instance(30_000 + k, 1, 20, 20);
        let mu = inst.spec.death_rate(&inst.params, 1, 0).unwrap();
        let p = inst.spec.detection_probs(&inst.params)[0];
        let f =
            individual_loglik_forward(&inst.spec, &inst.params, &inst.grid, &inst.history).unwrap();
        let c = cjs_loglik(mu, p, &inst.grid, inst.history.observations());
        worst = worst.max(rel_diff(f, c));
    }
    Outcome {
        pass: worst <= 1e-10,
        detail: format!("100 single-state instances, max relative difference {worst:.2e}"),
    }
}

fn main() {
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 7] = [
        (
            "forward likelihood equals enumeration",
            forward_vs_enumeration,
        ),
        ("matrix exponential invariants", exponential_invariants),
        ("interval-length convergence", interval_convergence),
        ("parameter recovery", parameter_recovery),
        ("decoding matches enumeration", decoding),
        ("simulator calibration", calibration),
        ("single-state model equals CJS", cjs),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let out = check();
        let verdict = if out.pass { "PASS" } else { "FAIL" };
        if !out.pass {
            failed += 1;
        }
        println!(
            "{verdict} {}: {name} ({:.1} s) {}",
            k + 1,
            start.elapsed().as_secs_f64(),
            out.detail
        );
    }
    println!(
        "EXCLUDED 8: real-data estimates and absolute wall-clock times are not reproducible here"
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
