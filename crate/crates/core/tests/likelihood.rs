mod common;

use std::collections::BTreeMap;

use common::{cjs_loglik, random_instance};
use ctas_core::data::{EncounterData, EncounterHistory, OccasionGrid};
use ctas_core::likelihood::{
    individual_loglik_bruteforce, individual_loglik_forward, total_loglik,
};
use ctas_core::model::{ModelConfig, ModelSpec};
use proptest::prelude::*;

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300) || a == b
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(150))]

    #[test]
    fn forward_equals_enumeration(seed in any::<u64>(), m in 1usize..=3) {
        let inst = random_instance(seed, m, 11, 10);
        let f = individual_loglik_forward(&inst.spec, &inst.params, &inst.grid, &inst.history).unwrap();
        let b = individual_loglik_bruteforce(&inst.spec, &inst.params, &inst.grid, &inst.history).unwrap();
        prop_assert!(rel_close(f, b, 1e-10), "forward {f} brute force {b}");
    }

    #[test]
    fn single_state_matches_cjs(seed in any::<u64>()) {
        let inst = random_instance(seed, 1, 12, 12);
        let mu = inst.spec.death_rate(&inst.params, 1, 0).unwrap();
        let p = inst.spec.detection_probs(&inst.params)[0];
        let f = individual_loglik_forward(&inst.spec, &inst.params, &inst.grid, &inst.history).unwrap();
        let c = cjs_loglik(mu, p, &inst.grid, inst.history.observations());
        prop_assert!(rel_close(f, c, 1e-10), "forward {f} cjs {c}");
    }

    #[test]
    fn unsurveyed_occasion_is_neutral(seed in any::<u64>(), m in 1usize..=3, at in 0.01f64..0.99) {
        let inst = random_instance(seed, m, 10, 10);
        let times = inst.grid.times();
        let obs = inst.history.observations();
        prop_assume!(times.len() >= 2);
        let u = 1 + (seed as usize % (times.len() - 1));
        let t_new = times[u - 1] + at * (times[u] - times[u - 1]);
        let mut new_times = times[..u].to_vec();
        new_times.push(t_new);
        new_times.extend_from_slice(&times[u..]);
        let mut effort: Vec<Vec<bool>> = (0..times.len()).map(|k| inst.grid.effort_row(k).to_vec()).collect();
        effort.insert(u, vec![false; m]);
        let mut new_obs = obs[..u].to_vec();
        new_obs.push(0);
        new_obs.extend_from_slice(&obs[u..]);
        let grid = OccasionGrid::new(new_times, effort).unwrap();
        let h = EncounterHistory::new("r", new_obs, BTreeMap::new()).unwrap();
        let a = individual_loglik_forward(&inst.spec, &inst.params, &inst.grid, &inst.history).unwrap();
        let b = individual_loglik_forward(&inst.spec, &inst.params, &grid, &h).unwrap();
        prop_assert!(rel_close(a, b, 1e-10), "{a} vs {b}");
    }

    #[test]
    fn detection_raises_fully_observed_likelihood(seed in any::<u64>(), bump in 0.05f64..2.0) {
        let inst = random_instance(seed, 2, 8, 0);
        let obs = inst.history.observations();
        let g = inst.history.first_capture();
        let state = obs[g];
        let effort: Vec<Vec<bool>> = (0..obs.len()).map(|_| vec![true, true]).collect();
        let grid = OccasionGrid::new(inst.grid.times().to_vec(), effort).unwrap();
        let mut same = obs.to_vec();
        same[g..].iter_mut().for_each(|x| *x = state);
        let h = EncounterHistory::new("r", same, BTreeMap::new()).unwrap();
        let idx = inst.spec.index_of(&format!("p{state}")).unwrap();
        let mut higher = inst.params.clone();
        higher.as_mut_slice()[idx] += bump;
        let a = individual_loglik_forward(&inst.spec, &inst.params, &grid, &h).unwrap();
        let b = individual_loglik_forward(&inst.spec, &higher, &grid, &h).unwrap();
        prop_assert!(b > a || g + 1 == obs.len());
    }

    #[test]
    fn total_is_permutation_invariant(seeds in proptest::collection::vec(any::<u64>(), 2..6), rot in 1usize..5) {
        let base = random_instance(seeds[0], 2, 9, 8);
        let mut hs = vec![base.history.clone()];
        for &s in &seeds[1..] {
            let mut other = random_instance(s, 2, 9, 8);
            if other.grid.len() != base.grid.len() {
                continue;
            }
            other.history = EncounterHistory::new("o", other.history.observations().to_vec(), BTreeMap::new()).unwrap();
            if other.history.issues(&base.grid, 2).is_empty() {
                hs.push(other.history);
            }
        }
        let data = EncounterData::new(base.grid.clone(), hs.clone(), 2).unwrap();
        let k = rot % hs.len();
        hs.rotate_left(k);
        hs.reverse();
        let shuffled = EncounterData::new(base.grid.clone(), hs, 2).unwrap();
        let a = total_loglik(&base.spec, &base.params, &data).unwrap();
        let b = total_loglik(&base.spec, &base.params, &shuffled).unwrap();
        prop_assert!(rel_close(a, b, 1e-12));
    }
}

#[test]
fn two_state_toy_instance() {
    let spec = ModelSpec::new(ModelConfig::homogeneous(2, 20.0)).unwrap();
    let p = spec
        .from_natural(&[0.05f64.ln(), 0.05f64.ln(), 0.01f64.ln(), 0.4, 0.2])
        .unwrap();
    let grid = OccasionGrid::new(vec![0.0, 10.0, 20.0], vec![vec![true, true]; 3]).unwrap();
    let h = EncounterHistory::new("toy", vec![1, 0, 2], BTreeMap::new()).unwrap();
    let f = individual_loglik_forward(&spec, &p, &grid, &h).unwrap();
    let b = individual_loglik_bruteforce(&spec, &p, &grid, &h).unwrap();
    assert!(rel_close(f, b, 1e-12));
}

#[test]
fn cjs_four_occasions() {
    let spec = ModelSpec::new(ModelConfig::homogeneous(1, 30.0)).unwrap();
    let p = spec.from_natural(&[(0.02f64).ln(), 0.6]).unwrap();
    let grid = OccasionGrid::new(
        vec![0.0, 7.0, 15.0, 30.0],
        vec![vec![true], vec![true], vec![false], vec![true]],
    )
    .unwrap();
    let obs = [1u8, 0, 0, 1];
    let h = EncounterHistory::new("c", obs.to_vec(), BTreeMap::new()).unwrap();
    let f = individual_loglik_forward(&spec, &p, &grid, &h).unwrap();
    // Alive throughout: survive 30 days, missed at day 7, unsurveyed at day 15, seen at day 30.
    let expected = (-0.02f64 * 30.0).exp() * 0.4 * 0.6;
    assert!(rel_close(f, expected.ln(), 1e-12));
    assert!(rel_close(f, cjs_loglik(0.02, 0.6, &grid, &obs), 1e-12));
}

#[test]
fn errors_name_the_individual() {
    let spec = ModelSpec::new(ModelConfig::homogeneous(2, 20.0)).unwrap();
    let p = spec.default_init();
    let grid = OccasionGrid::new(vec![0.0, 10.0, 20.0], vec![vec![true, true]; 3]).unwrap();
    let mut cov = BTreeMap::new();
    cov.insert("sex".to_string(), 1.0);
    let h = EncounterHistory::new("bob", vec![1, 0, 2], cov).unwrap();
    let data = EncounterData::new(grid, vec![h], 2).unwrap();
    let with_cov = ModelSpec::new(ModelConfig::homogeneous(2, 20.0).with_covariate("age")).unwrap();
    let err = total_loglik(&with_cov, &with_cov.default_init(), &data).unwrap_err();
    assert!(err.to_string().contains("bob"), "{err}");
    assert!(total_loglik(&spec, &p, &data).is_ok());
}
