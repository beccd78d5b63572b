//! Pointwise Monte Carlo bands for seasonal transition intensities.

use alloc::format;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::FitResult;
use crate::error::{Error, Result};
use crate::linalg::{nearest_psd, psd_factor, Matrix};
use crate::math;
use crate::model::{ModelSpec, ParamVector};
use crate::par;

/// Fewest draws accepted for a sampled band.
pub const MIN_DRAWS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandOptions {
    /// Parameter draws; zero yields plug-in curves only.
    pub draws: usize,
    /// Confidence level, e.g. 0.95 for the 2.5% and 97.5% quantiles.
    pub level: f64,
    pub seed: u64,
    /// Replace an indefinite covariance by its nearest positive semi-definite
    /// matrix instead of failing.
    pub repair: bool,
}

impl Default for BandOptions {
    fn default() -> Self {
        BandOptions {
            draws: 1000,
            level: 0.95,
            seed: 0,
            repair: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntensityBand {
    pub from: usize,
    pub to: usize,
    /// Covariate level; links not split by the covariate only appear at 0.
    pub level: usize,
    pub plug_in: Vec<f64>,
    pub lower: Option<Vec<f64>>,
    pub upper: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntensityBands {
    pub days: Vec<f64>,
    pub draws: usize,
    pub bands: Vec<IntensityBand>,
}

/// Type-7 sample quantile; reorders `values`.
pub fn quantile(values: &mut [f64], q: f64) -> f64 {
    let n = values.len();
    let h = (n - 1) as f64 * q;
    let lo = math::floor(h) as usize;
    let (_, &mut a, rest) = values.select_nth_unstable_by(lo, f64::total_cmp);
    if lo + 1 >= n {
        return a;
    }
    let b = rest.iter().copied().fold(f64::INFINITY, f64::min);
    a + (h - lo as f64) * (b - a)
}

fn sample_parameters(
    mle: &ParamVector,
    factor: &Matrix,
    draws: usize,
    seed: u64,
) -> Vec<ParamVector> {
    let n = mle.len();
    par::map_indexed(draws, |k| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k as u64);
        let z: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let mut x = mle.as_slice().to_vec();
        for (i, xi) in x.iter_mut().enumerate() {
            for (j, zj) in z.iter().enumerate().take(i + 1) {
                *xi += factor[(i, j)] * zj;
            }
        }
        ParamVector::new(x)
    })
}

/// Plug-in intensity curves over `days` for every link and covariate level,
/// with pointwise quantile bands from draws of the estimator's normal
/// approximation.
pub fn mc_intensity_bands(
    spec: &ModelSpec,
    fit: &FitResult,
    days: &[f64],
    options: &BandOptions,
) -> Result<IntensityBands> {
    spec.check(&fit.mle)?;
    if options.draws > 0 && options.draws < MIN_DRAWS {
        return Err(Error::invalid(format!(
            "at least {MIN_DRAWS} draws are needed for bands, got {}",
            options.draws
        )));
    }
    if !(options.level > 0.0 && options.level < 1.0) {
        return Err(Error::invalid(format!(
            "level must lie in (0, 1), got {}",
            options.level
        )));
    }
    let curves: Vec<(usize, usize)> = spec
        .links()
        .iter()
        .enumerate()
        .flat_map(|(li, link)| {
            let levels = if link.by_covariate {
                spec.n_levels()
            } else {
                1
            };
            (0..levels).map(move |lv| (li, lv))
        })
        .collect();
    let rates = |p: &ParamVector, li: usize, lv: usize| -> Result<Vec<f64>> {
        days.iter().map(|&d| spec.link_rate(p, li, d, lv)).collect()
    };

    let draws = if options.draws == 0 {
        Vec::new()
    } else {
        let cov = fit.covariance.as_ref().ok_or(Error::SingularCovariance)?;
        let factor = match psd_factor(cov, 1e-12) {
            Some(l) => l,
            None if options.repair => {
                psd_factor(&nearest_psd(cov, 0.0), 1e-10).ok_or(Error::NotPositiveDefinite)?
            }
            None => return Err(Error::NotPositiveDefinite),
        };
        sample_parameters(&fit.mle, &factor, options.draws, options.seed)
    };

    let lower_q = 0.5 - 0.5 * options.level;
    let upper_q = 0.5 + 0.5 * options.level;
    let mut bands = Vec::with_capacity(curves.len());
    for &(li, lv) in &curves {
        let link = spec.links()[li];
        let plug_in = rates(&fit.mle, li, lv)?;
        let (lower, upper) = if draws.is_empty() {
            (None, None)
        } else {
            let per_day = par::map_indexed(days.len(), |di| -> Result<(f64, f64)> {
                let mut v = draws
                    .iter()
                    .map(|p| spec.link_rate(p, li, days[di], lv))
                    .collect::<Result<Vec<_>>>()?;
                Ok((quantile(&mut v, lower_q), quantile(&mut v, upper_q)))
            });
            let (lo, hi): (Vec<f64>, Vec<f64>) = per_day
                .into_iter()
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .unzip();
            (Some(lo), Some(hi))
        };
        bands.push(IntensityBand {
            from: link.from,
            to: link.to,
            level: lv,
            plug_in,
            lower,
            upper,
        });
    }
    Ok(IntensityBands {
        days: days.to_vec(),
        draws: options.draws,
        bands,
    })
}
