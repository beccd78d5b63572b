#![allow(dead_code, clippy::needless_range_loop)]

use std::collections::BTreeMap;

use ctas_core::data::{EncounterData, EncounterHistory, OccasionGrid};
use ctas_core::model::{ModelConfig, ModelSpec, ParamVector};
use ctas_core::simulate::{EntryRule, SimConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const TRUTH: [f64; 9] = [-6.5, -0.7, -0.2, -7.0, 0.7, -0.4, -9.0, 0.4, 0.2];

pub struct Instance {
    pub spec: ModelSpec,
    pub params: ParamVector,
    pub grid: OccasionGrid,
    pub history: EncounterHistory,
}

/// Random small model, grid and history with at most `max_unknown` unknown
/// occasions after first capture.
pub fn random_instance(seed: u64, m: usize, max_occasions: usize, max_unknown: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_occ = rng.random_range(2..=max_occasions);
    let mut times = vec![0.0];
    for _ in 1..n_occ {
        let last = *times.last().unwrap();
        times.push(last + rng.random_range(0.5..40.0));
    }
    let mut effort = Vec::with_capacity(n_occ);
    for _ in 0..n_occ {
        let mut row: Vec<bool> = (0..m).map(|_| rng.random::<f64>() < 0.7).collect();
        if !row.iter().any(|&e| e) {
            row[rng.random_range(0..m)] = true;
        }
        effort.push(row);
    }
    let span = *times.last().unwrap();
    let mut config = ModelConfig::seasonal(m, span);
    config.partition_length = rng.random_range(3.0..30.0);
    config.period = rng.random_range(60.0..365.0);
    let spec = ModelSpec::new(config).unwrap();
    let natural: Vec<f64> = spec
        .params()
        .iter()
        .map(|p| {
            use ctas_core::model::{ParamKind, Term};
            match p.kind {
                ParamKind::Intensity {
                    term: Term::Intercept,
                    ..
                } => rng.random_range(-5.0..-1.5),
                ParamKind::Intensity { .. } => rng.random_range(-1.0..1.0),
                ParamKind::MortalityIntercept { .. } => rng.random_range(-6.0..-3.0),
                ParamKind::MortalityCovariate => 0.0,
                ParamKind::Detection { .. } => rng.random_range(0.1..0.9),
            }
        })
        .collect();
    let params = spec.from_natural(&natural).unwrap();

    let g = rng.random_range(0..n_occ);
    let surveyed = |u: usize| -> Vec<usize> { (0..m).filter(|&a| effort[u][a]).collect() };
    let mut obs = vec![0u8; n_occ];
    let first = surveyed(g);
    obs[g] = (first[rng.random_range(0..first.len())] + 1) as u8;
    let mut unknown = 0;
    for u in g + 1..n_occ {
        let s = surveyed(u);
        let force_seen = unknown >= max_unknown;
        if force_seen || rng.random::<f64>() < 0.3 {
            obs[u] = (s[rng.random_range(0..s.len())] + 1) as u8;
        } else {
            unknown += 1;
        }
    }
    let grid = OccasionGrid::new(times, effort).unwrap();
    let history = EncounterHistory::new("r", obs, BTreeMap::new()).unwrap();
    Instance {
        spec,
        params,
        grid,
        history,
    }
}

/// Alive/dead likelihood written out directly: survival over a gap is
/// `exp(-mu dt)` and `chi` is the probability of never being seen again.
pub fn cjs_loglik(mu: f64, p: f64, grid: &OccasionGrid, obs: &[u8]) -> f64 {
    let t = grid.times();
    let n = obs.len();
    let g = obs.iter().position(|&x| x > 0).unwrap();
    let last = obs.iter().rposition(|&x| x > 0).unwrap();
    let detect = |u: usize| if grid.surveyed(u, 1) { p } else { 0.0 };
    let phi = |u: usize| (-mu * (t[u] - t[u - 1])).exp();
    let mut chi = 1.0;
    for u in (last + 1..n).rev() {
        chi = (1.0 - phi(u)) + phi(u) * (1.0 - detect(u)) * chi;
    }
    let mut ll = chi.ln();
    for u in g + 1..=last {
        ll += phi(u).ln();
        ll += if obs[u] > 0 {
            detect(u).ln()
        } else {
            (1.0 - detect(u)).ln()
        };
    }
    ll
}

pub fn seasonal_truth(span: f64, l: f64) -> (ModelSpec, ParamVector) {
    let mut c = ModelConfig::seasonal(2, span);
    c.partition_length = l;
    let spec = ModelSpec::new(c).unwrap();
    let truth = spec.from_natural(&TRUTH).unwrap();
    (spec, truth)
}

pub fn sim_config(n: usize, span: f64, l: f64, seed: u64) -> SimConfig {
    let (spec, truth) = seasonal_truth(span, l);
    SimConfig {
        n,
        span_days: span,
        spec,
        truth,
        occasion_means: vec![10.0, 14.0],
        seed,
        entry: EntryRule::AtStart,
        level_one_share: 0.5,
    }
}

/// The model spec re-anchored to the realised grid span.
pub fn spec_for(data: &EncounterData, spec: &ModelSpec) -> ModelSpec {
    spec.with_study_span(data.grid().span()).unwrap()
}

pub struct CellCheck {
    pub month: usize,
    pub from: usize,
    pub to: usize,
    pub observed: f64,
    pub expected: f64,
    pub z: f64,
}

/// One-day transitions of the day-constant chain at the seasonal truth,
/// tallied per calendar month and start state against `exp(Q_day)`.
pub fn daily_calibration(total_days: usize, seed: u64) -> Vec<CellCheck> {
    use ctas_core::linalg::matrix_exponential;
    use ctas_core::simulate::DayConstantChain;
    let (spec, truth) = seasonal_truth(3646.0, 30.0);
    let chain = DayConstantChain::new(&spec, &truth, 0, 3646.0).unwrap();
    let dim = spec.dim();
    let gammas: Vec<_> = (0..365)
        .map(|d| {
            matrix_exponential(&spec.intensity_for_day(&truth, d as f64, 0).unwrap(), 1.0).unwrap()
        })
        .collect();
    let per_cell = total_days / (12 * spec.n_states());
    let mut out = Vec::new();
    for month in 0..12 {
        let lo = 365 * month / 12;
        let hi = 365 * (month + 1) / 12;
        for from in 0..spec.n_states() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream((month * dim + from) as u64);
            let mut counts = vec![0.0; dim];
            let mut expected = vec![0.0; dim];
            let mut variance = vec![0.0; dim];
            for j in 0..per_cell {
                let day = lo + j % (hi - lo);
                let start = day as f64;
                let path = chain.path(&mut rng, start, from, start + 1.0);
                counts[path.last().unwrap().1 - 1] += 1.0;
                for to in 0..dim {
                    let p = gammas[day].prob(from, to);
                    expected[to] += p;
                    variance[to] += p * (1.0 - p);
                }
            }
            for to in 0..dim {
                let z = if variance[to] > 0.0 {
                    (counts[to] - expected[to]) / variance[to].sqrt()
                } else {
                    0.0
                };
                out.push(CellCheck {
                    month,
                    from: from + 1,
                    to: to + 1,
                    observed: counts[to],
                    expected: expected[to],
                    z,
                });
            }
        }
    }
    out
}

/// Mean lifetime of a single-state chain with constant death rate `exp(b)`.
pub fn mean_lifetime(b: f64, replicates: usize, seed: u64) -> f64 {
    use ctas_core::simulate::DayConstantChain;
    let spec = ModelSpec::new(ModelConfig::homogeneous(1, 1.0)).unwrap();
    let truth = spec.from_natural(&[b, 0.5]).unwrap();
    let chain = DayConstantChain::new(&spec, &truth, 0, f64::INFINITY).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total: f64 = (0..replicates)
        .map(|_| {
            chain
                .path(&mut rng, 0.0, 0, f64::INFINITY)
                .last()
                .unwrap()
                .0
        })
        .sum();
    total / replicates as f64
}
