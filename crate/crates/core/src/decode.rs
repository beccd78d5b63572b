//! State decoding at capture occasions.
//!
//! States in decoded paths are 1-based labels with `M + 1` the death state.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::data::{EncounterData, EncounterHistory, OccasionGrid};
use crate::error::{Error, Result};
use crate::likelihood::{levels_present, Evaluator};
use crate::math;
use crate::model::{ModelSpec, ParamVector};
use crate::par;

#[derive(Debug, Clone, PartialEq)]
pub struct DecodedPath {
    pub first_capture: usize,
    /// Viterbi states for occasions `g..=T`.
    pub states: Vec<usize>,
    /// Local state probabilities for occasions `g..=T`, one row of `M + 1`
    /// entries each.
    pub posterior: Vec<Vec<f64>>,
}

/// Most likely state sequence; ties go to the lowest state index.
pub fn viterbi_with(ev: &Evaluator<'_>, history: &EncounterHistory) -> Result<Vec<usize>> {
    let level = ev.validate(history)?;
    let obs = history.observations();
    let dim = ev.spec().dim();
    let g = history.first_capture();
    let steps = obs.len() - g;
    let mut delta = vec![f64::NEG_INFINITY; dim];
    delta[obs[g] as usize - 1] = 0.0;
    let mut back = vec![0usize; steps * dim];
    let mut next = vec![0.0; dim];
    for (k, u) in (g + 1..obs.len()).enumerate() {
        let gamma = ev.gamma(level, u);
        let p = ev.observation(u, obs[u]);
        for (s, slot) in next.iter_mut().enumerate() {
            let mut best = f64::NEG_INFINITY;
            let mut arg = 0;
            for (j, &d) in delta.iter().enumerate() {
                let v = d + math::ln(gamma.prob(j, s));
                if v > best {
                    best = v;
                    arg = j;
                }
            }
            *slot = best + math::ln(p.prob(s));
            back[(k + 1) * dim + s] = arg;
        }
        core::mem::swap(&mut delta, &mut next);
    }
    let mut state = 0;
    for (s, &d) in delta.iter().enumerate() {
        if d > delta[state] {
            state = s;
        }
    }
    if delta[state] == f64::NEG_INFINITY {
        return Err(Error::Numerical(format!(
            "history of `{}` has zero probability",
            history.id()
        )));
    }
    let mut states = vec![0; steps];
    for k in (0..steps).rev() {
        states[k] = state + 1;
        state = back[k * dim + state];
    }
    Ok(states)
}

/// Forward-backward smoothing probabilities with scaled recursions.
pub fn state_probabilities_with(
    ev: &Evaluator<'_>,
    history: &EncounterHistory,
) -> Result<Vec<Vec<f64>>> {
    let level = ev.validate(history)?;
    let obs = history.observations();
    let dim = ev.spec().dim();
    let g = history.first_capture();
    let steps = obs.len() - g;

    let mut alpha = vec![vec![0.0; dim]; steps];
    let mut scale = vec![1.0; steps];
    alpha[0][obs[g] as usize - 1] = 1.0;
    let mut tmp = vec![0.0; dim];
    for k in 1..steps {
        let u = g + k;
        ev.gamma(level, u)
            .as_matrix()
            .left_mul_vec(&alpha[k - 1], &mut tmp);
        let p = ev.observation(u, obs[u]);
        let mut c = 0.0;
        for (a, d) in tmp.iter_mut().zip(p.diag()) {
            *a *= d;
            c += *a;
        }
        if !(c > 0.0) {
            return Err(Error::Numerical(format!(
                "history of `{}` has zero probability",
                history.id()
            )));
        }
        alpha[k].iter_mut().zip(&tmp).for_each(|(a, t)| *a = t / c);
        scale[k] = c;
    }

    let mut beta = vec![1.0; dim];
    let mut posterior = vec![vec![0.0; dim]; steps];
    for k in (0..steps).rev() {
        let row = &mut posterior[k];
        let mut total = 0.0;
        for s in 0..dim {
            row[s] = alpha[k][s] * beta[s];
            total += row[s];
        }
        row.iter_mut().for_each(|v| *v /= total);
        if k == 0 {
            break;
        }
        let u = g + k;
        let gamma = ev.gamma(level, u);
        let p = ev.observation(u, obs[u]);
        let weighted: Vec<f64> = (0..dim).map(|s| p.prob(s) * beta[s]).collect();
        for (j, b) in beta.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (s, w) in weighted.iter().enumerate() {
                acc += gamma.prob(j, s) * w;
            }
            *b = acc / scale[k];
        }
    }
    Ok(posterior)
}

pub fn viterbi(
    spec: &ModelSpec,
    params: &ParamVector,
    grid: &OccasionGrid,
    history: &EncounterHistory,
) -> Result<Vec<usize>> {
    viterbi_with(&evaluator_for(spec, params, grid, history)?, history)
}

pub fn state_probabilities(
    spec: &ModelSpec,
    params: &ParamVector,
    grid: &OccasionGrid,
    history: &EncounterHistory,
) -> Result<Vec<Vec<f64>>> {
    state_probabilities_with(&evaluator_for(spec, params, grid, history)?, history)
}

pub fn decode(
    spec: &ModelSpec,
    params: &ParamVector,
    grid: &OccasionGrid,
    history: &EncounterHistory,
) -> Result<DecodedPath> {
    let ev = evaluator_for(spec, params, grid, history)?;
    decode_with(&ev, history)
}

pub fn decode_with(ev: &Evaluator<'_>, history: &EncounterHistory) -> Result<DecodedPath> {
    Ok(DecodedPath {
        first_capture: history.first_capture(),
        states: viterbi_with(ev, history)?,
        posterior: state_probabilities_with(ev, history)?,
    })
}

/// Decodes every individual, in data order.
pub fn decode_all(
    spec: &ModelSpec,
    params: &ParamVector,
    data: &EncounterData,
) -> Result<Vec<DecodedPath>> {
    let ev = Evaluator::new(spec, params, data.grid(), &levels_present(spec, data)?)?;
    let hs = data.histories();
    par::map_indexed(hs.len(), |i| {
        decode_with(&ev, &hs[i]).map_err(|e| e.for_individual(hs[i].id()))
    })
    .into_iter()
    .collect()
}

fn evaluator_for<'a>(
    spec: &'a ModelSpec,
    params: &ParamVector,
    grid: &'a OccasionGrid,
    history: &EncounterHistory,
) -> Result<Evaluator<'a>> {
    let mut levels = vec![false; spec.n_levels()];
    levels[spec.level_of(history)?] = true;
    Evaluator::new(spec, params, grid, &levels)
}

/// Exhaustive enumeration counterparts, for small histories.
pub mod oracle {
    use super::*;
    use crate::likelihood::{LogSumExp, BRUTE_FORCE_BOUND};

    fn guard(history: &EncounterHistory) -> Result<()> {
        let unknown = Evaluator::unknown_occasions(history);
        if unknown > BRUTE_FORCE_BOUND {
            return Err(Error::TooManyUnknown {
                unknown,
                bound: BRUTE_FORCE_BOUND,
            });
        }
        Ok(())
    }

    /// Most probable compatible sequence and its log probability; among equal
    /// maxima the lexicographically first sequence wins.
    pub fn viterbi_with(
        ev: &Evaluator<'_>,
        history: &EncounterHistory,
    ) -> Result<(Vec<usize>, f64)> {
        let level = ev.validate(history)?;
        guard(history)?;
        let mut best: Option<(Vec<usize>, f64)> = None;
        let mut visit = |path: &[usize], lp: f64| {
            if best.as_ref().is_none_or(|(_, b)| lp > *b) {
                best = Some((path.iter().map(|s| s + 1).collect(), lp));
            }
        };
        ev.enumerate(
            level,
            history.observations(),
            history.first_capture(),
            &mut visit,
        );
        best.ok_or_else(|| {
            Error::Numerical(format!(
                "history of `{}` has zero probability",
                history.id()
            ))
        })
    }

    /// Posterior marginals from the full enumeration.
    pub fn state_probabilities_with(
        ev: &Evaluator<'_>,
        history: &EncounterHistory,
    ) -> Result<Vec<Vec<f64>>> {
        let level = ev.validate(history)?;
        guard(history)?;
        let steps = history.observations().len() - history.first_capture();
        let dim = ev.spec().dim();
        let mut total = LogSumExp::default();
        let mut cells = vec![LogSumExp::default(); steps * dim];
        let mut visit = |path: &[usize], lp: f64| {
            total.push(lp);
            for (k, &s) in path.iter().enumerate() {
                cells[k * dim + s].push(lp);
            }
        };
        ev.enumerate(
            level,
            history.observations(),
            history.first_capture(),
            &mut visit,
        );
        let z = total.value();
        if z == f64::NEG_INFINITY {
            return Err(Error::Numerical(format!(
                "history of `{}` has zero probability",
                history.id()
            )));
        }
        Ok(cells
            .chunks(dim)
            .map(|row| row.iter().map(|c| math::exp(c.value() - z)).collect())
            .collect())
    }

    /// Log joint probability of a 1-based state path over occasions `g..=T`.
    pub fn path_log_prob(
        ev: &Evaluator<'_>,
        history: &EncounterHistory,
        path: &[usize],
    ) -> Result<f64> {
        let level = ev.validate(history)?;
        let obs = history.observations();
        let g = history.first_capture();
        if path.len() != obs.len() - g {
            return Err(Error::invalid(
                "path length does not match the occasions after first capture",
            ));
        }
        if path[0] != obs[g] as usize {
            return Ok(f64::NEG_INFINITY);
        }
        let mut lp = 0.0;
        for k in 1..path.len() {
            let u = g + k;
            let w = ev.gamma(level, u).prob(path[k - 1] - 1, path[k] - 1)
                * ev.observation(u, obs[u]).prob(path[k] - 1);
            lp += math::ln(w);
        }
        Ok(lp)
    }

    pub fn decode(
        spec: &ModelSpec,
        params: &ParamVector,
        grid: &OccasionGrid,
        history: &EncounterHistory,
    ) -> Result<DecodedPath> {
        let ev = evaluator_for(spec, params, grid, history)?;
        Ok(DecodedPath {
            first_capture: history.first_capture(),
            states: viterbi_with(&ev, history)?.0,
            posterior: state_probabilities_with(&ev, history)?,
        })
    }
}
