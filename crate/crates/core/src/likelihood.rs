//! Capture-history likelihood conditional on first capture.
//!
//! The forward recursion runs over the occasions after first capture with a
//! normalised forward vector and accumulated log normalisers. The brute-force
//! enumeration over all compatible hidden state sequences serves as an oracle.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::data::{EncounterData, EncounterHistory, OccasionGrid};
use crate::error::{Error, Result};
use crate::linalg::TransitionMatrix;
use crate::math;
use crate::model::{ModelSpec, ParamVector};
use crate::par;

/// Largest number of unknown-state occasions the enumeration accepts.
pub const BRUTE_FORCE_BOUND: usize = 12;

/// Diagonal of `P(x)`: probability of observation `x` given each state, under
/// the survey effort of the occasion.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationMatrix {
    diag: Vec<f64>,
}

impl ObservationMatrix {
    /// `effort[m]` flags whether area `m + 1` was surveyed; `p[m]` is the
    /// detection probability of alive state `m + 1`.
    pub fn new(x: u8, effort: &[bool], p: &[f64]) -> Self {
        let m = p.len();
        let x = x as usize;
        let mut diag = vec![0.0; m + 1];
        for (s, d) in diag.iter_mut().take(m).enumerate() {
            let seen = if effort[s] { p[s] } else { 0.0 };
            *d = if x == 0 {
                1.0 - seen
            } else if x == s + 1 {
                seen
            } else {
                0.0
            };
        }
        diag[m] = if x == 0 { 1.0 } else { 0.0 };
        ObservationMatrix { diag }
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn prob(&self, state: usize) -> f64 {
        self.diag[state]
    }
}

/// Occasion-to-occasion transition matrices `Γ(t_{u-1}, t_u)` per covariate
/// level, shared by all individuals of a likelihood evaluation.
#[derive(Debug, Clone)]
pub struct Evaluator<'a> {
    spec: &'a ModelSpec,
    grid: &'a OccasionGrid,
    detection: Vec<f64>,
    /// `gammas[level][u - 1]` is the step into occasion `u`; empty for levels
    /// that were not requested.
    gammas: Vec<Vec<TransitionMatrix>>,
}

impl<'a> Evaluator<'a> {
    /// Prepares the transitions for the covariate levels flagged in `levels`.
    pub fn new(
        spec: &'a ModelSpec,
        params: &ParamVector,
        grid: &'a OccasionGrid,
        levels: &[bool],
    ) -> Result<Self> {
        spec.check(params)?;
        if grid.n_areas() != spec.n_states() {
            return Err(Error::invalid(format!(
                "grid has {} areas but the model has {} alive states",
                grid.n_areas(),
                spec.n_states()
            )));
        }
        let span = spec.config().study_span;
        if grid.span() > span + 1e-9 * span.max(1.0) {
            return Err(Error::invalid(format!(
                "occasions extend to {} beyond the model's study span {span}",
                grid.span()
            )));
        }
        let times = grid.times();
        let steps = times.len().saturating_sub(1);
        let mut gammas = Vec::with_capacity(spec.n_levels());
        for level in 0..spec.n_levels() {
            if !levels.get(level).copied().unwrap_or(false) {
                gammas.push(Vec::new());
                continue;
            }
            let g = par::map_indexed(steps, |u| {
                spec.transition_matrix_between(params, times[u], times[u + 1], level)
            });
            gammas.push(g.into_iter().collect::<Result<Vec<_>>>()?);
        }
        Ok(Evaluator {
            spec,
            grid,
            detection: spec.detection_probs(params),
            gammas,
        })
    }

    /// Prepares every covariate level.
    pub fn all_levels(
        spec: &'a ModelSpec,
        params: &ParamVector,
        grid: &'a OccasionGrid,
    ) -> Result<Self> {
        Evaluator::new(spec, params, grid, &vec![true; spec.n_levels()])
    }

    pub fn spec(&self) -> &ModelSpec {
        self.spec
    }

    pub fn grid(&self) -> &OccasionGrid {
        self.grid
    }

    pub fn detection(&self) -> &[f64] {
        &self.detection
    }

    /// Transition into occasion `u` (`u ≥ 1`).
    pub fn gamma(&self, level: usize, u: usize) -> &TransitionMatrix {
        &self.gammas[level][u - 1]
    }

    pub fn observation(&self, u: usize, x: u8) -> ObservationMatrix {
        ObservationMatrix::new(x, self.grid.effort_row(u), &self.detection)
    }

    /// Checks alignment of a history with the grid and model, returning its
    /// covariate level.
    pub fn validate(&self, history: &EncounterHistory) -> Result<usize> {
        let issues = history.issues(self.grid, self.spec.n_states());
        if let Some(first) = issues.into_iter().next() {
            return Err(Error::invalid(format!("{first}")));
        }
        let level = self.spec.level_of(history)?;
        if self.gammas[level].len() + 1 != self.grid.len() {
            return Err(Error::invalid(format!(
                "covariate level {level} was not prepared"
            )));
        }
        Ok(level)
    }

    /// Scaled forward recursion. Returns `-inf` when the history has zero
    /// probability under the parameters.
    pub fn forward(&self, history: &EncounterHistory) -> Result<f64> {
        let level = self.validate(history)?;
        let obs = history.observations();
        let dim = self.spec.dim();
        let g = history.first_capture();
        let mut alpha = vec![0.0; dim];
        let mut next = vec![0.0; dim];
        alpha[obs[g] as usize - 1] = 1.0;
        let mut ll = 0.0;
        for (u, &x) in obs.iter().enumerate().skip(g + 1) {
            self.gamma(level, u)
                .as_matrix()
                .left_mul_vec(&alpha, &mut next);
            let p = self.observation(u, x);
            let mut c = 0.0;
            for (a, d) in next.iter_mut().zip(p.diag()) {
                *a *= d;
                c += *a;
            }
            if !(c > 0.0) {
                return Ok(f64::NEG_INFINITY);
            }
            for (a, n) in alpha.iter_mut().zip(&next) {
                *a = n / c;
            }
            ll += math::ln(c);
        }
        Ok(ll)
    }

    /// Occasions after first capture whose state is not observed.
    pub fn unknown_occasions(history: &EncounterHistory) -> usize {
        let g = history.first_capture();
        history.observations()[g + 1..]
            .iter()
            .filter(|&&x| x == 0)
            .count()
    }

    /// Exhaustive sum over hidden state sequences, accumulated in log space.
    pub fn brute_force(&self, history: &EncounterHistory) -> Result<f64> {
        let level = self.validate(history)?;
        let unknown = Self::unknown_occasions(history);
        if unknown > BRUTE_FORCE_BOUND {
            return Err(Error::TooManyUnknown {
                unknown,
                bound: BRUTE_FORCE_BOUND,
            });
        }
        let obs = history.observations();
        let g = history.first_capture();
        let mut acc = LogSumExp::default();
        let mut visit = |_: &[usize], lp: f64| acc.push(lp);
        self.enumerate(level, obs, g, &mut visit);
        Ok(acc.value())
    }

    /// Visits every state sequence `s_g..s_T` (0-based states) with non-zero
    /// probability, passing its log probability.
    pub(crate) fn enumerate(
        &self,
        level: usize,
        obs: &[u8],
        g: usize,
        visit: &mut dyn FnMut(&[usize], f64),
    ) {
        let mut path = vec![obs[g] as usize - 1];
        self.dfs(level, obs, g + 1, 0.0, &mut path, visit);
    }

    fn dfs(
        &self,
        level: usize,
        obs: &[u8],
        u: usize,
        lp: f64,
        path: &mut Vec<usize>,
        visit: &mut dyn FnMut(&[usize], f64),
    ) {
        if u == obs.len() {
            visit(path, lp);
            return;
        }
        let prev = *path.last().expect("path starts at first capture");
        let gamma = self.gamma(level, u);
        let p = self.observation(u, obs[u]);
        for s in 0..self.spec.dim() {
            let w = gamma.prob(prev, s) * p.prob(s);
            if w > 0.0 {
                path.push(s);
                self.dfs(level, obs, u + 1, lp + math::ln(w), path, visit);
                path.pop();
            }
        }
    }
}

/// Streaming log-sum-exp.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LogSumExp {
    max: f64,
    sum: f64,
}

impl Default for LogSumExp {
    fn default() -> Self {
        LogSumExp {
            max: f64::NEG_INFINITY,
            sum: 0.0,
        }
    }
}

impl LogSumExp {
    pub(crate) fn push(&mut self, x: f64) {
        if x == f64::NEG_INFINITY {
            return;
        }
        if x > self.max {
            self.sum = self.sum * math::exp(self.max - x) + 1.0;
            self.max = x;
        } else {
            self.sum += math::exp(x - self.max);
        }
    }

    pub(crate) fn value(&self) -> f64 {
        if self.sum == 0.0 {
            f64::NEG_INFINITY
        } else {
            self.max + math::ln(self.sum)
        }
    }
}

fn single_level(spec: &ModelSpec, history: &EncounterHistory) -> Result<Vec<bool>> {
    let mut levels = vec![false; spec.n_levels()];
    levels[spec.level_of(history)?] = true;
    Ok(levels)
}

pub fn individual_loglik_forward(
    spec: &ModelSpec,
    params: &ParamVector,
    grid: &OccasionGrid,
    history: &EncounterHistory,
) -> Result<f64> {
    let levels = single_level(spec, history)?;
    Evaluator::new(spec, params, grid, &levels)?.forward(history)
}

pub fn individual_loglik_bruteforce(
    spec: &ModelSpec,
    params: &ParamVector,
    grid: &OccasionGrid,
    history: &EncounterHistory,
) -> Result<f64> {
    let levels = single_level(spec, history)?;
    Evaluator::new(spec, params, grid, &levels)?.brute_force(history)
}

/// Covariate levels present in the data.
pub fn levels_present(spec: &ModelSpec, data: &EncounterData) -> Result<Vec<bool>> {
    let mut levels = vec![false; spec.n_levels()];
    for h in data.histories() {
        let l = spec.level_of(h).map_err(|e| e.for_individual(h.id()))?;
        levels[l] = true;
    }
    Ok(levels)
}

/// Sum of individual log-likelihoods, evaluated in parallel and reduced in
/// data order.
pub fn total_loglik(spec: &ModelSpec, params: &ParamVector, data: &EncounterData) -> Result<f64> {
    let levels = levels_present(spec, data)?;
    let ev = Evaluator::new(spec, params, data.grid(), &levels)?;
    let hs = data.histories();
    let parts = par::map_indexed(hs.len(), |i| ev.forward(&hs[i]));
    let mut total = 0.0;
    for (h, part) in hs.iter().zip(parts) {
        total += part.map_err(|e| e.for_individual(h.id()))?;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use alloc::collections::BTreeMap;

    fn toy() -> (ModelSpec, ParamVector, OccasionGrid) {
        let spec = ModelSpec::new(ModelConfig::homogeneous(2, 20.0)).unwrap();
        let p = spec
            .from_natural(&[0.05f64.ln(), 0.05f64.ln(), 0.01f64.ln(), 0.4, 0.2])
            .unwrap();
        let grid = OccasionGrid::new(vec![0.0, 10.0, 20.0], vec![vec![true, true]; 3]).unwrap();
        (spec, p, grid)
    }

    fn hist(obs: &[u8]) -> EncounterHistory {
        EncounterHistory::new("a", obs.to_vec(), BTreeMap::new()).unwrap()
    }

    #[test]
    fn observation_matrix_entries() {
        let p = [0.4, 0.2];
        assert_eq!(
            ObservationMatrix::new(0, &[true, false], &p).diag(),
            &[0.6, 1.0, 1.0]
        );
        assert_eq!(
            ObservationMatrix::new(2, &[true, true], &p).diag(),
            &[0.0, 0.2, 0.0]
        );
        assert_eq!(
            ObservationMatrix::new(1, &[true, true], &p).diag(),
            &[0.4, 0.0, 0.0]
        );
    }

    #[test]
    fn toy_forward_matches_hand_sum() {
        let (spec, p, grid) = toy();
        let h = hist(&[1, 0, 2]);
        let fwd = individual_loglik_forward(&spec, &p, &grid, &h).unwrap();
        let bf = individual_loglik_bruteforce(&spec, &p, &grid, &h).unwrap();
        // Independent sum over the state at t1 with explicit matrices.
        let q = spec.intensity_for_day(&p, 0.0, 0).unwrap();
        let g = crate::linalg::matrix_exponential(&q, 10.0).unwrap();
        let miss = [0.6, 0.8, 1.0];
        let direct: f64 = (0..3)
            .map(|s| g.prob(0, s) * miss[s] * g.prob(s, 1) * 0.2)
            .sum();
        assert!((fwd - direct.ln()).abs() <= 1e-12 * direct.ln().abs());
        assert!((fwd - bf).abs() <= 1e-12 * fwd.abs());
    }

    #[test]
    fn first_capture_at_last_occasion_is_empty_product() {
        let (spec, p, grid) = toy();
        assert_eq!(
            individual_loglik_forward(&spec, &p, &grid, &hist(&[0, 0, 1])).unwrap(),
            0.0
        );
        assert_eq!(
            individual_loglik_bruteforce(&spec, &p, &grid, &hist(&[0, 0, 1])).unwrap(),
            0.0
        );
    }

    #[test]
    fn fully_observed_history_is_single_path() {
        let (spec, p, grid) = toy();
        let h = hist(&[1, 1, 2]);
        let q = spec.intensity_for_day(&p, 0.0, 0).unwrap();
        let g = crate::linalg::matrix_exponential(&q, 10.0).unwrap();
        let expected = g.prob(0, 0).ln() + 0.4f64.ln() + g.prob(0, 1).ln() + 0.2f64.ln();
        let fwd = individual_loglik_forward(&spec, &p, &grid, &h).unwrap();
        assert!((fwd - expected).abs() < 1e-12);
    }

    #[test]
    fn zero_effort_occasion_adds_nothing() {
        let (spec, p, grid) = toy();
        let base = individual_loglik_forward(&spec, &p, &grid, &hist(&[1, 0, 2])).unwrap();
        let padded = OccasionGrid::new(
            vec![0.0, 4.0, 10.0, 20.0],
            vec![
                vec![true, true],
                vec![false, false],
                vec![true, true],
                vec![true, true],
            ],
        )
        .unwrap();
        let with = individual_loglik_forward(&spec, &p, &padded, &hist(&[1, 0, 0, 2])).unwrap();
        assert!((base - with).abs() < 1e-12 * base.abs());
    }

    #[test]
    fn misaligned_history_is_rejected() {
        let (spec, p, grid) = toy();
        assert!(individual_loglik_forward(&spec, &p, &grid, &hist(&[1, 0])).is_err());
        assert!(individual_loglik_forward(&spec, &p, &grid, &hist(&[1, 0, 3])).is_err());
    }

    #[test]
    fn brute_force_refuses_long_gaps() {
        let spec = ModelSpec::new(ModelConfig::homogeneous(1, 20.0)).unwrap();
        let p = spec.default_init();
        let times: Vec<f64> = (0..15).map(|i| i as f64).collect();
        let grid = OccasionGrid::new(times, vec![vec![true]; 15]).unwrap();
        let mut obs = vec![0u8; 15];
        obs[0] = 1;
        match individual_loglik_bruteforce(&spec, &p, &grid, &hist(&obs)) {
            Err(Error::TooManyUnknown {
                unknown: 14,
                bound: 12,
            }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn total_is_additive() {
        let (spec, p, grid) = toy();
        let one = EncounterData::new(grid.clone(), vec![hist(&[1, 0, 2])], 2).unwrap();
        let two = EncounterData::new(grid, vec![hist(&[1, 0, 2]), hist(&[1, 0, 2])], 2).unwrap();
        let a = total_loglik(&spec, &p, &one).unwrap();
        let b = total_loglik(&spec, &p, &two).unwrap();
        assert_eq!(b, 2.0 * a);
    }

    #[test]
    fn log_sum_exp_streaming() {
        let mut acc = LogSumExp::default();
        assert_eq!(acc.value(), f64::NEG_INFINITY);
        for x in [-1000.0, -1001.0, f64::NEG_INFINITY, -999.5] {
            acc.push(x);
        }
        let expected = -999.5 + (1.0 + (-0.5f64).exp() + (-1.5f64).exp()).ln();
        assert!((acc.value() - expected).abs() < 1e-12);
    }
}
