//! Covariate links from working parameters to intensities and detection.
//!
//! Off-diagonal alive intensities follow a log-linear seasonal predictor
//!
//! ```text
//! q_jk(t) = exp(b0 + b1 sin(2π y(t) / P) + b2 cos(2π y(t) / P))
//! ```
//!
//! with `y(t)` the day of the period `P` (365 days by default). Links can be
//! split by a binary individual covariate, which amounts to separate
//! coefficient sets per covariate level. Death intensities are time-constant,
//! log-linear in the covariate and shared across alive states unless the
//! per-state flag is set. Detection probabilities live on the logit scale.
//!
//! Time-varying intensities are approximated by their value at the midpoint of
//! each interval of a partition of `[0, t_T]` into pieces of length `l`.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::data::EncounterHistory;
use crate::error::{Error, Result};
use crate::linalg::{matrix_exponential, IntensityMatrix, TransitionMatrix};
use crate::math;

pub const DEFAULT_PERIOD: f64 = 365.0;
pub const DEFAULT_PARTITION_LENGTH: f64 = 30.0;
/// Largest admissible magnitude of a log-scale linear predictor.
pub const MAX_PREDICTOR: f64 = 700.0;

/// Intensity link for the move from alive state `from` to alive state `to`
/// (1-based labels).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TransitionLink {
    pub from: usize,
    pub to: usize,
    /// Include the sine and cosine terms of the period.
    pub seasonal: bool,
    /// Separate coefficient sets for each level of the individual covariate.
    pub by_covariate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MortalityLink {
    /// One death intercept per alive state instead of a shared one.
    pub per_state: bool,
    /// Additive covariate effect on the log death rate.
    pub covariate_effect: bool,
}

/// User-facing model description, turned into a [`ModelSpec`] by validation.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub n_states: usize,
    pub period: f64,
    pub partition_length: f64,
    pub study_span: f64,
    /// Name of the binary (0/1) individual covariate, if any.
    pub covariate: Option<String>,
    pub links: Vec<TransitionLink>,
    pub mortality: MortalityLink,
}

impl ModelConfig {
    /// Seasonal links between every ordered pair of alive states, shared death rate.
    pub fn seasonal(n_states: usize, study_span: f64) -> Self {
        ModelConfig {
            n_states,
            period: DEFAULT_PERIOD,
            partition_length: DEFAULT_PARTITION_LENGTH,
            study_span,
            covariate: None,
            links: all_pairs(n_states, true),
            mortality: MortalityLink::default(),
        }
    }

    /// Constant intensities between every ordered pair of alive states.
    pub fn homogeneous(n_states: usize, study_span: f64) -> Self {
        ModelConfig {
            links: all_pairs(n_states, false),
            ..ModelConfig::seasonal(n_states, study_span)
        }
    }

    /// Splits every link and the death rate by a binary covariate.
    pub fn with_covariate(mut self, name: &str) -> Self {
        self.covariate = Some(name.to_string());
        for l in &mut self.links {
            l.by_covariate = true;
        }
        self.mortality.covariate_effect = true;
        self
    }
}

fn all_pairs(n_states: usize, seasonal: bool) -> Vec<TransitionLink> {
    let mut links = Vec::new();
    for from in 1..=n_states {
        for to in 1..=n_states {
            if from != to {
                links.push(TransitionLink {
                    from,
                    to,
                    seasonal,
                    by_covariate: false,
                });
            }
        }
    }
    links
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Term {
    Intercept,
    Sin,
    Cos,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Intensity {
        link: usize,
        level: Option<usize>,
        term: Term,
    },
    MortalityIntercept {
        state: Option<usize>,
    },
    MortalityCovariate,
    Detection {
        state: usize,
    },
}

impl ParamKind {
    pub fn is_detection(&self) -> bool {
        matches!(self, ParamKind::Detection { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamInfo {
    pub name: String,
    pub kind: ParamKind,
}

/// Unconstrained working parameters; the layout is owned by a [`ModelSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Self {
        ParamVector(values)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl core::ops::Index<usize> for ParamVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Scale on which a natural parameter is reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    /// Coefficient of a log-rate predictor, reported unchanged.
    Log,
    Probability,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NaturalParam {
    pub name: String,
    pub value: f64,
    pub scale: Scale,
}

/// Partition of `[0, span]` into intervals `[b_{r-1}, b_r)` of length `l`, the
/// last one possibly shorter and ending at `span`. Interval indices are 1-based.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Partition {
    length: f64,
    span: f64,
    count: usize,
}

impl Partition {
    pub fn new(length: f64, span: f64) -> Result<Self> {
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::invalid(format!(
                "partition length must be positive, got {length}"
            )));
        }
        if !(span.is_finite() && span >= 0.0) {
            return Err(Error::invalid(format!(
                "study span must be non-negative, got {span}"
            )));
        }
        let count = (math::ceil(span / length - 1e-9) as usize).max(1);
        Ok(Partition {
            length,
            span,
            count,
        })
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    /// Number of intervals `R`.
    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn bounds(&self, r: usize) -> (f64, f64) {
        let lo = (r - 1) as f64 * self.length;
        let hi = if r >= self.count {
            self.span.max(lo)
        } else {
            r as f64 * self.length
        };
        (lo, hi)
    }

    pub fn midpoint(&self, r: usize) -> f64 {
        let (lo, hi) = self.bounds(r);
        0.5 * (lo + hi)
    }

    /// Interval containing `t`; times at or beyond `span` fall in the last one.
    pub fn interval_of(&self, t: f64) -> usize {
        let mut r = ((math::floor(t / self.length) as usize) + 1).clamp(1, self.count);
        while r > 1 && t < self.bounds(r).0 {
            r -= 1;
        }
        while r < self.count && t >= self.bounds(r).1 {
            r += 1;
        }
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct LinkTerms {
    intercept: usize,
    seasonal: Option<(usize, usize)>,
}

/// Validated model: covariate links, parameter layout and partition.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    config: ModelConfig,
    params: Vec<ParamInfo>,
    /// Per link, per covariate level.
    link_terms: Vec<Vec<LinkTerms>>,
    /// Per alive state.
    mortality_intercepts: Vec<usize>,
    mortality_covariate: Option<usize>,
    detection: Vec<usize>,
    partition: Partition,
}

impl ModelSpec {
    pub fn new(mut config: ModelConfig) -> Result<Self> {
        let m = config.n_states;
        if m == 0 || m > 254 {
            return Err(Error::invalid(format!(
                "alive state count must be in 1..=254, got {m}"
            )));
        }
        if !(config.period.is_finite() && config.period > 0.0) {
            return Err(Error::invalid(format!(
                "period must be positive, got {}",
                config.period
            )));
        }
        let partition = Partition::new(config.partition_length, config.study_span)?;
        config.links.sort_by_key(|l| (l.from, l.to));
        for w in config.links.windows(2) {
            if (w[0].from, w[0].to) == (w[1].from, w[1].to) {
                return Err(Error::invalid(format!(
                    "duplicate link {} -> {}",
                    w[0].from, w[0].to
                )));
            }
        }
        for l in &config.links {
            if l.from == 0 || l.to == 0 || l.from > m || l.to > m || l.from == l.to {
                return Err(Error::invalid(format!(
                    "link {} -> {} must join two distinct alive states in 1..={m}",
                    l.from, l.to
                )));
            }
            if l.by_covariate && config.covariate.is_none() {
                return Err(Error::invalid(format!(
                    "link {} -> {} is split by a covariate but none is declared",
                    l.from, l.to
                )));
            }
        }
        if config.mortality.covariate_effect && config.covariate.is_none() {
            return Err(Error::invalid(
                "mortality covariate effect requires a declared covariate",
            ));
        }

        let n_levels = if config.covariate.is_some() { 2 } else { 1 };
        let cov = config.covariate.clone().unwrap_or_default();
        let mut params = Vec::new();
        let push = |name: String, kind: ParamKind, params: &mut Vec<ParamInfo>| {
            params.push(ParamInfo { name, kind });
            params.len() - 1
        };

        let mut link_terms: Vec<Vec<Option<LinkTerms>>> =
            vec![vec![None; n_levels]; config.links.len()];
        for level in 0..n_levels {
            for (li, link) in config.links.iter().enumerate() {
                if !link.by_covariate && level > 0 {
                    continue;
                }
                let suffix = if link.by_covariate {
                    format!("[{cov}={level}]")
                } else {
                    String::new()
                };
                let lvl = link.by_covariate.then_some(level);
                let base = format!("q{}_{}", link.from, link.to);
                let kind = |term| ParamKind::Intensity {
                    link: li,
                    level: lvl,
                    term,
                };
                let intercept = push(
                    format!("{base}.intercept{suffix}"),
                    kind(Term::Intercept),
                    &mut params,
                );
                let seasonal = if link.seasonal {
                    let s = push(format!("{base}.sin{suffix}"), kind(Term::Sin), &mut params);
                    let c = push(format!("{base}.cos{suffix}"), kind(Term::Cos), &mut params);
                    Some((s, c))
                } else {
                    None
                };
                let terms = LinkTerms {
                    intercept,
                    seasonal,
                };
                if link.by_covariate {
                    link_terms[li][level] = Some(terms);
                } else {
                    link_terms[li].iter_mut().for_each(|t| *t = Some(terms));
                }
            }
        }
        let link_terms = link_terms
            .into_iter()
            .map(|v| {
                v.into_iter()
                    .map(|t| t.expect("every level assigned"))
                    .collect()
            })
            .collect();

        let mortality_intercepts = if config.mortality.per_state {
            (1..=m)
                .map(|s| {
                    push(
                        format!("death.intercept[{s}]"),
                        ParamKind::MortalityIntercept { state: Some(s) },
                        &mut params,
                    )
                })
                .collect()
        } else {
            let i = push(
                "death.intercept".into(),
                ParamKind::MortalityIntercept { state: None },
                &mut params,
            );
            vec![i; m]
        };
        let mortality_covariate = config.mortality.covariate_effect.then(|| {
            push(
                format!("death.{cov}"),
                ParamKind::MortalityCovariate,
                &mut params,
            )
        });
        let detection = (1..=m)
            .map(|s| {
                push(
                    format!("p{s}"),
                    ParamKind::Detection { state: s },
                    &mut params,
                )
            })
            .collect();

        Ok(ModelSpec {
            config,
            params,
            link_terms,
            mortality_intercepts,
            mortality_covariate,
            detection,
            partition,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn n_states(&self) -> usize {
        self.config.n_states
    }

    /// Matrix dimension, alive states plus death.
    pub fn dim(&self) -> usize {
        self.config.n_states + 1
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[ParamInfo] {
        &self.params
    }

    pub fn param_names(&self) -> Vec<&str> {
        self.params.iter().map(|p| p.name.as_str()).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn links(&self) -> &[TransitionLink] {
        &self.config.links
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn period(&self) -> f64 {
        self.config.period
    }

    pub fn n_levels(&self) -> usize {
        if self.config.covariate.is_some() {
            2
        } else {
            1
        }
    }

    /// No seasonal terms anywhere: intensities are constant in time.
    pub fn is_time_homogeneous(&self) -> bool {
        self.config.links.iter().all(|l| !l.seasonal)
    }

    pub fn with_partition_length(&self, length: f64) -> Result<ModelSpec> {
        let mut config = self.config.clone();
        config.partition_length = length;
        ModelSpec::new(config)
    }

    pub fn with_study_span(&self, span: f64) -> Result<ModelSpec> {
        let mut config = self.config.clone();
        config.study_span = span;
        ModelSpec::new(config)
    }

    /// Covariate level (0 or 1) of an individual.
    pub fn level_of(&self, history: &EncounterHistory) -> Result<usize> {
        let Some(name) = &self.config.covariate else {
            return Ok(0);
        };
        match history.covariate(name) {
            Some(0.0) => Ok(0),
            Some(1.0) => Ok(1),
            Some(v) => Err(Error::invalid(format!(
                "covariate `{name}` of individual `{}` must be 0 or 1, got {v}",
                history.id()
            ))),
            None => Err(Error::invalid(format!(
                "individual `{}` lacks covariate `{name}`",
                history.id()
            ))),
        }
    }

    pub fn check(&self, params: &ParamVector) -> Result<()> {
        if params.len() != self.n_params() {
            return Err(Error::invalid(format!(
                "expected {} parameters, got {}",
                self.n_params(),
                params.len()
            )));
        }
        if let Some(i) = params.as_slice().iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "parameter `{}` is not finite",
                self.params[i].name
            )));
        }
        Ok(())
    }

    /// Neutral starting values: detection 0.5, 100-day mean sojourn per link,
    /// 10-year mean lifetime, zero seasonal and covariate effects.
    pub fn default_init(&self) -> ParamVector {
        let v = self
            .params
            .iter()
            .map(|p| match p.kind {
                ParamKind::Intensity {
                    term: Term::Intercept,
                    ..
                } => math::ln(1.0 / 100.0),
                ParamKind::MortalityIntercept { .. } => math::ln(1.0 / 3650.0),
                _ => 0.0,
            })
            .collect();
        ParamVector(v)
    }

    pub fn detection_probs(&self, params: &ParamVector) -> Vec<f64> {
        self.detection
            .iter()
            .map(|&i| math::logistic(params[i]))
            .collect()
    }

    fn checked_exp(&self, pred: f64, coefficient: usize) -> Result<f64> {
        if !pred.is_finite() || math::abs(pred) > MAX_PREDICTOR {
            return Err(Error::NumericRange {
                coefficient: self.params[coefficient].name.clone(),
                value: pred,
            });
        }
        Ok(math::exp(pred))
    }

    /// Rate of link `link` on day `day` of the period for covariate `level`.
    pub fn link_rate(
        &self,
        params: &ParamVector,
        link: usize,
        day: f64,
        level: usize,
    ) -> Result<f64> {
        let (s, c) = self.season(day);
        self.link_rate_at(params, link, s, c, level)
    }

    fn season(&self, day: f64) -> (f64, f64) {
        let y = math::rem_euclid(day, self.config.period);
        let angle = 2.0 * PI * y / self.config.period;
        (math::sin(angle), math::cos(angle))
    }

    fn link_rate_at(
        &self,
        params: &ParamVector,
        link: usize,
        sin: f64,
        cos: f64,
        level: usize,
    ) -> Result<f64> {
        let t = self.link_terms[link][level];
        let mut pred = params[t.intercept];
        if let Some((si, ci)) = t.seasonal {
            pred += params[si] * sin + params[ci] * cos;
        }
        self.checked_exp(pred, t.intercept)
    }

    /// Death rate of alive state `state` (1-based) for covariate `level`.
    pub fn death_rate(&self, params: &ParamVector, state: usize, level: usize) -> Result<f64> {
        let i = self.mortality_intercepts[state - 1];
        let mut pred = params[i];
        if let Some(ci) = self.mortality_covariate {
            pred += params[ci] * level as f64;
        }
        self.checked_exp(pred, i)
    }

    /// Intensity matrix with the seasonal covariate evaluated at `day`.
    pub fn intensity_for_day(
        &self,
        params: &ParamVector,
        day: f64,
        level: usize,
    ) -> Result<IntensityMatrix> {
        if level >= self.n_levels() {
            return Err(Error::invalid(format!(
                "covariate level {level} out of range"
            )));
        }
        let m = self.n_states();
        let (s, c) = self.season(day);
        let mut rates = vec![0.0; m * (m + 1)];
        for (li, link) in self.config.links.iter().enumerate() {
            rates[(link.from - 1) * (m + 1) + link.to - 1] =
                self.link_rate_at(params, li, s, c, level)?;
        }
        for state in 1..=m {
            rates[(state - 1) * (m + 1) + m] = self.death_rate(params, state, level)?;
        }
        IntensityMatrix::from_rates(m + 1, |i, j| rates[i * (m + 1) + j])
    }

    /// Constant intensity matrix of partition interval `r` (1-based), taken at
    /// the interval midpoint.
    pub fn intensity_at(
        &self,
        params: &ParamVector,
        r: usize,
        level: usize,
    ) -> Result<IntensityMatrix> {
        if r == 0 || r > self.partition.len() {
            return Err(Error::invalid(format!(
                "interval index {r} outside 1..={}",
                self.partition.len()
            )));
        }
        self.intensity_for_day(params, self.partition.midpoint(r), level)
    }

    /// Transition probabilities from `t_a` to `t_b` under the piecewise-constant
    /// intensities: one exponential inside a single interval, otherwise the
    /// ordered product over the partial first interval, the full interior
    /// intervals and the partial last interval.
    pub fn transition_matrix_between(
        &self,
        params: &ParamVector,
        t_a: f64,
        t_b: f64,
        level: usize,
    ) -> Result<TransitionMatrix> {
        if !(t_a.is_finite() && t_b.is_finite()) || t_a < 0.0 {
            return Err(Error::invalid(format!(
                "interval [{t_a}, {t_b}] is not a valid time range"
            )));
        }
        if t_b < t_a {
            return Err(Error::InvalidInterval {
                start: t_a,
                end: t_b,
            });
        }
        if t_a == t_b {
            return Ok(TransitionMatrix::identity(self.dim()));
        }
        if self.is_time_homogeneous() {
            let q = self.intensity_for_day(params, 0.0, level)?;
            return matrix_exponential(&q, t_b - t_a);
        }
        let p = &self.partition;
        let r = p.interval_of(t_a);
        let s = p.interval_of(t_b);
        if r == s {
            return matrix_exponential(&self.intensity_at(params, r, level)?, t_b - t_a);
        }
        let mut acc =
            matrix_exponential(&self.intensity_at(params, r, level)?, p.bounds(r).1 - t_a)?;
        for v in r + 1..s {
            let (lo, hi) = p.bounds(v);
            let step = matrix_exponential(&self.intensity_at(params, v, level)?, hi - lo)?;
            acc = acc.then(&step);
        }
        let last = matrix_exponential(&self.intensity_at(params, s, level)?, t_b - p.bounds(s).0)?;
        Ok(acc.then(&last))
    }

    /// Natural-scale report: log-rate coefficients unchanged, detection as
    /// probabilities.
    pub fn natural_parameters(&self, params: &ParamVector) -> Vec<NaturalParam> {
        self.params
            .iter()
            .zip(params.as_slice())
            .map(|(info, &w)| {
                if info.kind.is_detection() {
                    NaturalParam {
                        name: info.name.clone(),
                        value: math::logistic(w),
                        scale: Scale::Probability,
                    }
                } else {
                    NaturalParam {
                        name: info.name.clone(),
                        value: w,
                        scale: Scale::Log,
                    }
                }
            })
            .collect()
    }

    /// Inverse of [`ModelSpec::natural_parameters`] on the values alone.
    pub fn from_natural(&self, natural: &[f64]) -> Result<ParamVector> {
        if natural.len() != self.n_params() {
            return Err(Error::invalid(format!(
                "expected {} natural values, got {}",
                self.n_params(),
                natural.len()
            )));
        }
        let v = self
            .params
            .iter()
            .zip(natural)
            .map(|(info, &x)| {
                if info.kind.is_detection() {
                    if !(x > 0.0 && x < 1.0) {
                        return Err(Error::invalid(format!(
                            "detection probability `{}` must lie in (0, 1), got {x}",
                            info.name
                        )));
                    }
                    Ok(math::logit(x))
                } else if x.is_finite() {
                    Ok(x)
                } else {
                    Err(Error::invalid(format!("`{}` is not finite", info.name)))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ParamVector(v))
    }

    /// Overrides natural-scale values by parameter name on top of `base`.
    pub fn with_natural_values<'a>(
        &self,
        base: &ParamVector,
        values: impl IntoIterator<Item = (&'a str, f64)>,
    ) -> Result<ParamVector> {
        self.check(base)?;
        let mut natural: Vec<f64> = self
            .natural_parameters(base)
            .into_iter()
            .map(|p| p.value)
            .collect();
        for (name, v) in values {
            let i = self
                .index_of(name)
                .ok_or_else(|| Error::invalid(format!("unknown parameter `{name}`")))?;
            natural[i] = v;
        }
        self.from_natural(&natural)
    }
}
