//! Synthetic encounter data.
//!
//! Trajectories follow the model's intensities held constant over each
//! calendar day, survey occasions arrive per area after Poisson-distributed
//! day gaps, and detections thin the alive-and-surveyed occasions.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Poisson};

use crate::data::{EncounterData, EncounterHistory, OccasionGrid};
use crate::error::{Error, Result};
use crate::math;
use crate::model::{ModelSpec, ParamVector};
use crate::par;

const SURVEY_STREAM: u64 = 0;
const TRAJECTORY_STREAM: u64 = 1 << 32;
const DETECTION_STREAM: u64 = 2 << 32;

/// How individuals enter the population.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EntryRule {
    /// Everyone is alive at time 0.
    #[default]
    AtStart,
    /// Entry day uniform on `[0, span)`.
    Uniform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n: usize,
    pub span_days: f64,
    /// Generating model; its study span should cover `span_days`.
    pub spec: ModelSpec,
    pub truth: ParamVector,
    /// Mean day gap between survey occasions, one per area.
    pub occasion_means: Vec<f64>,
    pub seed: u64,
    pub entry: EntryRule,
    /// Share of individuals at covariate level 1, when the model has a covariate.
    pub level_one_share: f64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let m = self.spec.n_states();
        if self.n == 0 {
            return Err(Error::invalid("n must be at least 1"));
        }
        if !(self.span_days.is_finite() && self.span_days > 0.0) {
            return Err(Error::invalid(format!(
                "span_days must be positive, got {}",
                self.span_days
            )));
        }
        self.spec.check(&self.truth)?;
        if self.occasion_means.len() != m {
            return Err(Error::invalid(format!(
                "expected {m} occasion means, got {}",
                self.occasion_means.len()
            )));
        }
        if let Some(l) = self
            .occasion_means
            .iter()
            .find(|l| !(l.is_finite() && **l > 0.0))
        {
            return Err(Error::invalid(format!(
                "occasion means must be positive, got {l}"
            )));
        }
        if !(0.0..=1.0).contains(&self.level_one_share) {
            return Err(Error::invalid("level_one_share must lie in [0, 1]"));
        }
        Ok(())
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }
}

/// Piecewise-constant state path; states are 1-based with `M + 1` dead.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub level: usize,
    /// `(time, state)` pairs in time order; the first is the entry.
    pub jumps: Vec<(f64, usize)>,
}

impl Trajectory {
    pub fn entry(&self) -> f64 {
        self.jumps[0].0
    }

    /// State at time `t`, `None` before entry.
    pub fn state_at(&self, t: f64) -> Option<usize> {
        let k = self.jumps.partition_point(|&(s, _)| s <= t);
        (k > 0).then(|| self.jumps[k - 1].1)
    }
}

/// Chain with intensities held constant over each calendar day, rates cached
/// per day of the period.
#[derive(Debug, Clone)]
pub struct DayConstantChain {
    dim: usize,
    /// `rates[day][i * dim + j]`, diagonal holding the total exit rate.
    rates: Vec<Vec<f64>>,
    period: Option<usize>,
}

impl DayConstantChain {
    pub fn new(spec: &ModelSpec, truth: &ParamVector, level: usize, span: f64) -> Result<Self> {
        let dim = spec.dim();
        let homogeneous = spec.is_time_homogeneous();
        let period = spec.period();
        let integral = period == math::floor(period) && period <= 1e6;
        let days = if homogeneous {
            1
        } else if integral {
            period as usize
        } else {
            math::ceil(span) as usize + 1
        };
        let rates = (0..days)
            .map(|d| {
                let q = spec.intensity_for_day(truth, d as f64, level)?;
                let mut row = vec![0.0; dim * dim];
                for i in 0..dim {
                    for j in 0..dim {
                        row[i * dim + j] = if i == j { -q.rate(i, i) } else { q.rate(i, j) };
                    }
                }
                Ok(row)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(DayConstantChain {
            dim,
            rates,
            period: (integral && !homogeneous).then_some(period as usize),
        })
    }

    fn is_constant(&self) -> bool {
        self.rates.len() == 1
    }

    fn day(&self, day: usize) -> &[f64] {
        match self.period {
            _ if self.is_constant() => &self.rates[0],
            Some(p) => &self.rates[day % p],
            None => &self.rates[day.min(self.rates.len() - 1)],
        }
    }

    /// Path from `start` in 0-based `state` until death or `end`, as 1-based
    /// `(time, state)` jumps.
    pub fn path<R: Rng>(
        &self,
        rng: &mut R,
        start: f64,
        state: usize,
        end: f64,
    ) -> Vec<(f64, usize)> {
        let dim = self.dim;
        let dead = dim - 1;
        let mut jumps = vec![(start, state + 1)];
        let mut t = start;
        let mut s = state;
        while t < end && s != dead {
            let day = math::floor(t);
            let row = self.day(day as usize);
            let row = &row[s * dim..(s + 1) * dim];
            let total = row[s];
            let boundary = if self.is_constant() {
                f64::INFINITY
            } else {
                day + 1.0
            };
            if total <= 0.0 {
                if boundary.is_infinite() {
                    break;
                }
                t = boundary;
                continue;
            }
            let hold = Exp::new(total).expect("positive rate").sample(rng);
            if t + hold >= boundary {
                t = boundary;
                continue;
            }
            t += hold;
            if t >= end {
                break;
            }
            s = choose_destination(rng, row, s, total);
            jumps.push((t, s + 1));
        }
        jumps
    }
}

fn choose_destination<R: Rng>(rng: &mut R, row: &[f64], from: usize, total: f64) -> usize {
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = from;
    for (j, &r) in row.iter().enumerate() {
        if j == from || r <= 0.0 {
            continue;
        }
        acc += r;
        last = j;
        if target < acc {
            return j;
        }
    }
    last
}

/// Exact path of the day-constant chain from `start` in 0-based `state`,
/// until death or `end`.
pub fn simulate_path<R: Rng>(
    spec: &ModelSpec,
    truth: &ParamVector,
    level: usize,
    start: f64,
    state: usize,
    end: f64,
    rng: &mut R,
) -> Result<Vec<(f64, usize)>> {
    Ok(DayConstantChain::new(spec, truth, level, end)?.path(rng, start, state, end))
}

fn individual_trajectory(
    config: &SimConfig,
    rates: &[DayConstantChain],
    index: usize,
) -> Trajectory {
    let mut rng = config.rng(TRAJECTORY_STREAM + index as u64);
    let level = if config.spec.n_levels() > 1 && rng.random::<f64>() < config.level_one_share {
        1
    } else {
        0
    };
    let entry = match config.entry {
        EntryRule::AtStart => 0.0,
        EntryRule::Uniform => math::floor(rng.random::<f64>() * config.span_days),
    };
    let state = rng.random_range(0..config.spec.n_states());
    Trajectory {
        level,
        jumps: rates[level].path(&mut rng, entry, state, config.span_days),
    }
}

fn day_rates(config: &SimConfig) -> Result<Vec<DayConstantChain>> {
    (0..config.spec.n_levels())
        .map(|l| DayConstantChain::new(&config.spec, &config.truth, l, config.span_days))
        .collect()
}

/// Path of individual `index` (0-based), reproducible from the master seed.
pub fn simulate_trajectory(config: &SimConfig, index: usize) -> Result<Trajectory> {
    config.validate()?;
    Ok(individual_trajectory(config, &day_rates(config)?, index))
}

/// Occasion grid: per area, day 0 then cumulative Poisson day gaps up to the
/// span, merged across areas with coinciding days collapsed into one occasion.
pub fn simulate_survey(config: &SimConfig) -> Result<OccasionGrid> {
    config.validate()?;
    let mut rng = config.rng(SURVEY_STREAM);
    let m = config.occasion_means.len();
    let mut days: BTreeMap<u64, Vec<bool>> = BTreeMap::new();
    for (area, &lambda) in config.occasion_means.iter().enumerate() {
        let gaps = Poisson::new(lambda).map_err(|e| Error::invalid(format!("{e}")))?;
        let mut t = 0u64;
        loop {
            days.entry(t).or_insert_with(|| vec![false; m])[area] = true;
            let gap: f64 = gaps.sample(&mut rng);
            t += gap as u64;
            if t as f64 > config.span_days {
                break;
            }
        }
    }
    let (times, effort) = days.into_iter().map(|(d, e)| (d as f64, e)).unzip();
    OccasionGrid::new(times, effort)
}

/// Thins trajectories into encounter histories. Individuals never detected
/// are dropped; kept histories carry ids `1..=n` of their trajectory index.
pub fn simulate_detections(
    config: &SimConfig,
    grid: &OccasionGrid,
    trajectories: &[Trajectory],
) -> Result<(EncounterData, Vec<usize>)> {
    let p = config.spec.detection_probs(&config.truth);
    let cov = config.spec.config().covariate.clone();
    let rows = par::map_indexed(trajectories.len(), |i| {
        let mut rng = config.rng(DETECTION_STREAM + i as u64);
        let traj = &trajectories[i];
        let obs: Vec<u8> = (0..grid.len())
            .map(|u| match traj.state_at(grid.time(u)) {
                Some(s)
                    if s <= p.len() && grid.surveyed(u, s) && rng.random::<f64>() < p[s - 1] =>
                {
                    s as u8
                }
                _ => 0,
            })
            .collect();
        obs.iter().any(|&x| x > 0).then_some(obs)
    });
    let mut histories = Vec::new();
    let mut kept = Vec::new();
    for (i, obs) in rows.into_iter().enumerate() {
        let Some(obs) = obs else { continue };
        let mut covariates = BTreeMap::new();
        if let Some(name) = &cov {
            covariates.insert(name.clone(), trajectories[i].level as f64);
        }
        histories.push(EncounterHistory::new(individual_id(i), obs, covariates)?);
        kept.push(i);
    }
    Ok((
        EncounterData::new(grid.clone(), histories, config.spec.n_states())?,
        kept,
    ))
}

pub fn individual_id(index: usize) -> String {
    (index + 1).to_string()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub data: EncounterData,
    /// Paths of all `n` individuals, detected or not.
    pub trajectories: Vec<Trajectory>,
    /// Trajectory indices of the individuals kept in `data`.
    pub kept: Vec<usize>,
}

/// Survey, trajectories and detections in one go.
pub fn simulate(config: &SimConfig) -> Result<Simulation> {
    config.validate()?;
    let grid = simulate_survey(config)?;
    let rates = day_rates(config)?;
    let trajectories = par::map_indexed(config.n, |i| individual_trajectory(config, &rates, i));
    let (data, kept) = simulate_detections(config, &grid, &trajectories)?;
    Ok(Simulation {
        data,
        trajectories,
        kept,
    })
}
