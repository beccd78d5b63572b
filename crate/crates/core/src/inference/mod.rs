//! Maximum likelihood fitting and uncertainty quantification.

pub mod bands;
pub mod optimize;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::EncounterData;
use crate::error::{Error, Result};
use crate::likelihood::total_loglik;
use crate::linalg::{spd_inverse, Matrix};
use crate::math;
use crate::model::{ModelSpec, NaturalParam, ParamVector};

pub use bands::{mc_intensity_bands, BandOptions, IntensityBand, IntensityBands};
pub use optimize::Tolerances;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Method {
    #[default]
    Bfgs,
    NelderMead,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    /// Total starts: the initial values plus `starts - 1` perturbed copies.
    pub starts: usize,
    pub seed: u64,
    pub perturbation_sd: f64,
    pub method: Method,
    pub tolerances: Tolerances,
    /// Compute the numerical Hessian and covariance at the optimum.
    pub hessian: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            starts: 5,
            seed: 0,
            perturbation_sd: 0.5,
            method: Method::Bfgs,
            tolerances: Tolerances::default(),
            hessian: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StartOutcome {
    pub loglik: f64,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub mle: ParamVector,
    pub loglik: f64,
    pub gradient_norm: f64,
    /// Symmetrised Hessian of the negative log-likelihood.
    pub hessian: Option<Matrix>,
    /// Largest asymmetry of the Hessian before symmetrisation.
    pub hessian_asymmetry: Option<f64>,
    /// Working-scale covariance, the inverse of `hessian`.
    pub covariance: Option<Matrix>,
    /// The Hessian was computed but is not positive definite.
    pub singular: bool,
    pub converged: bool,
    pub iterations: usize,
    pub evaluations: usize,
    pub l_used: f64,
    /// Seconds; recorded only with the `std` feature.
    pub wall_time: Option<f64>,
    pub starts: Vec<StartOutcome>,
}

impl FitResult {
    pub fn aic(&self) -> f64 {
        2.0 * self.mle.len() as f64 - 2.0 * self.loglik
    }

    /// Working-scale standard errors.
    pub fn standard_errors(&self) -> Option<Vec<f64>> {
        let cov = self.covariance.as_ref()?;
        Some((0..cov.dim()).map(|i| math::sqrt(cov[(i, i)])).collect())
    }
}

struct Clock {
    #[cfg(feature = "std")]
    start: std::time::Instant,
}

impl Clock {
    fn start() -> Self {
        Clock {
            #[cfg(feature = "std")]
            start: std::time::Instant::now(),
        }
    }

    fn elapsed(&self) -> Option<f64> {
        #[cfg(feature = "std")]
        {
            Some(self.start.elapsed().as_secs_f64())
        }
        #[cfg(not(feature = "std"))]
        {
            None
        }
    }
}

/// Negative log-likelihood with failures mapped to `+inf`.
pub fn objective<'a>(
    spec: &'a ModelSpec,
    data: &'a EncounterData,
) -> impl Fn(&[f64]) -> f64 + Sync + 'a {
    move |x: &[f64]| match total_loglik(spec, &ParamVector::new(x.to_vec()), data) {
        Ok(v) if !v.is_nan() => -v,
        _ => f64::INFINITY,
    }
}

/// Multi-start maximum likelihood fit. The best start by log-likelihood wins;
/// ties keep the earlier start.
pub fn fit(
    spec: &ModelSpec,
    data: &EncounterData,
    init: &ParamVector,
    options: &FitOptions,
) -> Result<FitResult> {
    let clock = Clock::start();
    if data.is_empty() {
        return Err(Error::invalid("cannot fit an empty data set"));
    }
    if options.starts == 0 {
        return Err(Error::invalid("at least one start is required"));
    }
    spec.check(init)?;
    match total_loglik(spec, init, data) {
        Ok(v) if v.is_finite() => {}
        Ok(_) | Err(Error::NumericRange { .. }) | Err(Error::Numerical(_)) => {
            return Err(Error::InitNotFinite)
        }
        Err(e) => return Err(e),
    }
    let f = objective(spec, data);

    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut starts = Vec::with_capacity(options.starts);
    starts.push(init.as_slice().to_vec());
    for _ in 1..options.starts {
        let x: Vec<f64> = init
            .as_slice()
            .iter()
            .map(|v| {
                let z: f64 = StandardNormal.sample(&mut rng);
                v + options.perturbation_sd * z
            })
            .collect();
        starts.push(x);
    }

    let mut outcomes = Vec::with_capacity(starts.len());
    let mut best: Option<optimize::Minimum> = None;
    let mut iterations = 0;
    let mut evaluations = 0;
    for x0 in &starts {
        if !f(x0).is_finite() {
            outcomes.push(StartOutcome {
                loglik: f64::NEG_INFINITY,
                converged: false,
                iterations: 0,
            });
            continue;
        }
        let m = match options.method {
            Method::Bfgs => optimize::bfgs(&f, x0, &options.tolerances),
            Method::NelderMead => optimize::nelder_mead(&f, x0, &options.tolerances),
        };
        iterations += m.iterations;
        evaluations += m.evaluations;
        outcomes.push(StartOutcome {
            loglik: -m.value,
            converged: m.converged,
            iterations: m.iterations,
        });
        if best.as_ref().is_none_or(|b| m.value < b.value) {
            best = Some(m);
        }
    }
    let best = best.ok_or(Error::InitNotFinite)?;

    let (hessian, asymmetry, covariance, singular) = if options.hessian {
        let raw = optimize::hessian(&f, &best.x);
        evaluations += 4 * best.x.len() * best.x.len();
        let asym = optimize::asymmetry(&raw);
        let h = optimize::symmetrize(&raw);
        let cov = if h.is_finite() {
            spd_inverse(&h)
                .filter(|c| c.is_finite() && (0..c.dim()).all(|i| c[(i, i)] > 0.0))
                .map(|c| optimize::symmetrize(&c))
        } else {
            None
        };
        let singular = cov.is_none();
        (Some(h), Some(asym), cov, singular)
    } else {
        (None, None, None, false)
    };

    Ok(FitResult {
        loglik: -best.value,
        gradient_norm: best.gradient_norm(),
        mle: ParamVector::new(best.x),
        hessian,
        hessian_asymmetry: asymmetry,
        covariance,
        singular,
        converged: best.converged,
        iterations,
        evaluations,
        l_used: spec.partition().length(),
        wall_time: clock.elapsed(),
        starts: outcomes,
    })
}

/// Standard normal quantile: rational approximation refined by one Halley
/// step against `erfc`.
pub fn normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    const A: [f64; 6] = [
        -3.969683028665376e1,
        2.209460984245205e2,
        -2.759285104469687e2,
        1.383577518672690e2,
        -3.066479806614716e1,
        2.506628277459239e0,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e1,
        1.615858368580409e2,
        -1.556989798598866e2,
        6.680131188771972e1,
        -1.328068155288572e1,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-3,
        -3.223964580411365e-1,
        -2.400758277161838e0,
        -2.549732539343734e0,
        4.374664141464968e0,
        2.938163982698783e0,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-3,
        3.224671290700398e-1,
        2.445134137142996e0,
        3.754408661907416e0,
    ];
    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let x = if p < 0.02425 {
        tail(math::sqrt(-2.0 * math::ln(p)))
    } else if p > 1.0 - 0.02425 {
        -tail(math::sqrt(-2.0 * math::ln(1.0 - p)))
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    };
    let e = 0.5 * math::erfc(-x / core::f64::consts::SQRT_2) - p;
    let u = e * math::sqrt(2.0 * core::f64::consts::PI) * math::exp(0.5 * x * x);
    x - u / (1.0 + 0.5 * x * u)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaldInterval {
    pub name: String,
    /// Natural-scale point estimate.
    pub estimate: f64,
    /// Working-scale standard error; `None` when the covariance is unavailable.
    pub std_error: Option<f64>,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

/// Wald intervals on the working scale, mapped to the natural scale.
pub fn wald_intervals(spec: &ModelSpec, fit: &FitResult, level: f64) -> Result<Vec<WaldInterval>> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid(format!(
            "confidence level must lie in (0, 1), got {level}"
        )));
    }
    spec.check(&fit.mle)?;
    let z = normal_quantile(0.5 + 0.5 * level);
    let se = fit.standard_errors();
    Ok(spec
        .params()
        .iter()
        .enumerate()
        .map(|(i, info)| {
            let w = fit.mle[i];
            let natural = |v: f64| {
                if info.kind.is_detection() {
                    math::logistic(v)
                } else {
                    v
                }
            };
            let s = se.as_ref().map(|s| s[i]);
            WaldInterval {
                name: info.name.clone(),
                estimate: natural(w),
                std_error: s,
                lower: s.map(|s| natural(w - z * s)),
                upper: s.map(|s| natural(w + z * s)),
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub length: f64,
    pub fit: core::result::Result<FitResult, Error>,
    pub natural: Vec<NaturalParam>,
}

impl SweepRow {
    pub fn loglik(&self) -> Option<f64> {
        self.fit.as_ref().ok().map(|f| f.loglik)
    }

    pub fn wall_time(&self) -> Option<f64> {
        self.fit.as_ref().ok().and_then(|f| f.wall_time)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntervalSweepResult {
    pub rows: Vec<SweepRow>,
}

/// Fits at each partition length in turn. The first fit uses `options`; each
/// later fit runs a single start from the previous optimum. Failed rows keep
/// their error and the sweep continues from the last successful optimum.
pub fn interval_sweep(
    spec: &ModelSpec,
    data: &EncounterData,
    lengths: &[f64],
    init: &ParamVector,
    options: &FitOptions,
) -> Result<IntervalSweepResult> {
    if lengths.is_empty() {
        return Err(Error::invalid("no interval lengths given"));
    }
    if let Some(l) = lengths.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
        return Err(Error::invalid(format!(
            "interval lengths must be positive, got {l}"
        )));
    }
    if lengths.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::invalid(
            "interval lengths must be strictly decreasing",
        ));
    }
    let mut rows = Vec::with_capacity(lengths.len());
    let mut start = init.clone();
    let warm = FitOptions {
        starts: 1,
        ..options.clone()
    };
    for (k, &l) in lengths.iter().enumerate() {
        let opts = if k == 0 { options } else { &warm };
        let result = spec
            .with_partition_length(l)
            .and_then(|s| fit(&s, data, &start, opts));
        let natural = match &result {
            Ok(f) => {
                start = f.mle.clone();
                spec.natural_parameters(&f.mle)
            }
            Err(_) => Vec::new(),
        };
        rows.push(SweepRow {
            length: l,
            fit: result,
            natural,
        });
    }
    Ok(IntervalSweepResult { rows })
}
