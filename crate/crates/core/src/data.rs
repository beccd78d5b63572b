//! Capture occasions, survey effort and encounter histories.
//!
//! The occasion grid is shared by every individual. An individual that was not
//! looked for at some occasion (its area was not surveyed) is handled through
//! the effort flags, not through a private grid.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Issue, Result};

/// Global capture occasions `0 = t_0 < t_1 < ... < t_T` (days) with per-area
/// survey effort flags.
#[derive(Debug, Clone, PartialEq)]
pub struct OccasionGrid {
    times: Vec<f64>,
    effort: Vec<bool>,
    n_areas: usize,
}

impl OccasionGrid {
    /// Checks that times start at 0 and strictly increase and that every
    /// effort row has one flag per area. Occasions with no surveyed area are
    /// allowed here; ingestion rejects them separately through
    /// [`OccasionGrid::require_effort`].
    pub fn new(times: Vec<f64>, effort: Vec<Vec<bool>>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::Format(
                "occasion grid needs at least one occasion".into(),
            ));
        }
        if times.len() != effort.len() {
            return Err(Error::Format(format!(
                "{} occasion times but {} effort rows",
                times.len(),
                effort.len()
            )));
        }
        if times[0] != 0.0 {
            return Err(Error::Format(format!(
                "first occasion must be at time 0, got {}",
                times[0]
            )));
        }
        for (u, w) in times.windows(2).enumerate() {
            if !w[1].is_finite() || w[1] <= w[0] {
                return Err(Error::Format(format!(
                    "occasion times must strictly increase: t[{}] = {} follows {}",
                    u + 1,
                    w[1],
                    w[0]
                )));
            }
        }
        let n_areas = effort[0].len();
        if n_areas == 0 {
            return Err(Error::Format("effort needs at least one area".into()));
        }
        let mut flat = Vec::with_capacity(n_areas * times.len());
        for (u, row) in effort.iter().enumerate() {
            if row.len() != n_areas {
                return Err(Error::Format(format!(
                    "effort row {u} has {} areas, expected {n_areas}",
                    row.len()
                )));
            }
            flat.extend_from_slice(row);
        }
        Ok(OccasionGrid {
            times,
            effort: flat,
            n_areas,
        })
    }

    /// Every occasion after the first must have at least one surveyed area.
    pub fn require_effort(&self) -> Result<()> {
        let issues: Vec<Issue> = (1..self.len())
            .filter(|&u| !self.effort_row(u).iter().any(|&e| e))
            .map(|u| Issue::new("occasion has no surveyed area").at(self.times[u]))
            .collect();
        if issues.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(issues))
        }
    }

    /// Number of occasions, `T + 1`.
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn time(&self, u: usize) -> f64 {
        self.times[u]
    }

    /// Time of the last occasion, `t_T`.
    pub fn span(&self) -> f64 {
        *self.times.last().unwrap_or(&0.0)
    }

    pub fn n_areas(&self) -> usize {
        self.n_areas
    }

    pub fn effort_row(&self, u: usize) -> &[bool] {
        &self.effort[u * self.n_areas..(u + 1) * self.n_areas]
    }

    /// Whether `area` (1-based) was surveyed at occasion `u`.
    pub fn surveyed(&self, u: usize, area: usize) -> bool {
        self.effort_row(u)[area - 1]
    }

    pub fn index_of(&self, time: f64) -> Option<usize> {
        self.times.binary_search_by(|t| t.total_cmp(&time)).ok()
    }
}

/// One individual's observations aligned with the occasion grid: `0` means not
/// seen, `m` means seen alive in state `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncounterHistory {
    id: String,
    observations: Vec<u8>,
    first_capture: usize,
    covariates: BTreeMap<String, f64>,
}

impl EncounterHistory {
    pub fn new(
        id: impl Into<String>,
        observations: Vec<u8>,
        covariates: BTreeMap<String, f64>,
    ) -> Result<Self> {
        let id = id.into();
        let first_capture = observations.iter().position(|&x| x > 0).ok_or_else(|| {
            Error::Validation(alloc::vec![
                Issue::new("history has no sightings").individual(id.clone())
            ])
        })?;
        if let Some((name, v)) = covariates.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Validation(alloc::vec![Issue::new(format!(
                "covariate `{name}` is not finite ({v})"
            ))
            .individual(id.clone())]));
        }
        Ok(EncounterHistory {
            id,
            observations,
            first_capture,
            covariates,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn observations(&self) -> &[u8] {
        &self.observations
    }

    /// Index `g` of the first sighting.
    pub fn first_capture(&self) -> usize {
        self.first_capture
    }

    pub fn last_sighting(&self) -> usize {
        self.observations
            .iter()
            .rposition(|&x| x > 0)
            .unwrap_or(self.first_capture)
    }

    pub fn sightings(&self) -> usize {
        self.observations.iter().filter(|&&x| x > 0).count()
    }

    pub fn covariate(&self, name: &str) -> Option<f64> {
        self.covariates.get(name).copied()
    }

    pub fn covariates(&self) -> &BTreeMap<String, f64> {
        &self.covariates
    }

    /// Alignment and observation-model checks against a grid with `n_states`
    /// alive states.
    pub fn issues(&self, grid: &OccasionGrid, n_states: usize) -> Vec<Issue> {
        let mut issues = Vec::new();
        if self.observations.len() != grid.len() {
            issues.push(
                Issue::new(format!(
                    "history has {} occasions but the grid has {}",
                    self.observations.len(),
                    grid.len()
                ))
                .individual(self.id.clone()),
            );
            return issues;
        }
        for (u, &x) in self.observations.iter().enumerate() {
            let x = x as usize;
            if x > n_states {
                issues.push(
                    Issue::new(format!("observation {x} outside 0..={n_states}"))
                        .individual(self.id.clone())
                        .at(grid.time(u)),
                );
            } else if x > 0 && x <= grid.n_areas() && !grid.surveyed(u, x) {
                issues.push(
                    Issue::new(format!("seen in area {x}, which was not surveyed"))
                        .individual(self.id.clone())
                        .at(grid.time(u)),
                );
            }
        }
        issues
    }
}

/// A validated data set: grid, histories and the number of alive states.
#[derive(Debug, Clone, PartialEq)]
pub struct EncounterData {
    grid: OccasionGrid,
    histories: Vec<EncounterHistory>,
    n_states: usize,
}

impl EncounterData {
    /// Validates all histories against the grid, collecting every issue.
    pub fn new(
        grid: OccasionGrid,
        histories: Vec<EncounterHistory>,
        n_states: usize,
    ) -> Result<Self> {
        if n_states == 0 {
            return Err(Error::invalid("at least one alive state is required"));
        }
        if grid.n_areas() != n_states {
            return Err(Error::invalid(format!(
                "effort has {} areas but the model has {n_states} alive states",
                grid.n_areas()
            )));
        }
        let issues: Vec<Issue> = histories
            .iter()
            .flat_map(|h| h.issues(&grid, n_states))
            .collect();
        if !issues.is_empty() {
            return Err(Error::Validation(issues));
        }
        Ok(EncounterData {
            grid,
            histories,
            n_states,
        })
    }

    pub fn grid(&self) -> &OccasionGrid {
        &self.grid
    }

    pub fn histories(&self) -> &[EncounterHistory] {
        &self.histories
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn len(&self) -> usize {
        self.histories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.histories.is_empty()
    }

    /// Same grid, a subset or reordering of histories.
    pub fn with_histories(&self, histories: Vec<EncounterHistory>) -> Result<Self> {
        EncounterData::new(self.grid.clone(), histories, self.n_states)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SightingStats {
    pub min: usize,
    pub median: f64,
    pub max: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub individuals: usize,
    /// `T + 1`
    pub occasions: usize,
    pub occasions_per_area: Vec<usize>,
    pub sightings: Option<SightingStats>,
}

pub fn summarize(data: &EncounterData) -> Summary {
    let grid = data.grid();
    let occasions_per_area = (1..=grid.n_areas())
        .map(|a| (0..grid.len()).filter(|&u| grid.surveyed(u, a)).count())
        .collect();
    let mut counts: Vec<usize> = data.histories().iter().map(|h| h.sightings()).collect();
    counts.sort_unstable();
    let sightings = if counts.is_empty() {
        None
    } else {
        let n = counts.len();
        let median = if n % 2 == 1 {
            counts[n / 2] as f64
        } else {
            0.5 * (counts[n / 2 - 1] + counts[n / 2]) as f64
        };
        Some(SightingStats {
            min: counts[0],
            median,
            max: counts[n - 1],
        })
    };
    Summary {
        individuals: data.len(),
        occasions: grid.len(),
        occasions_per_area,
        sightings,
    }
}
