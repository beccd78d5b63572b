//! Relative-bias study: repeated simulate-and-fit at several sample sizes.

use std::io::Write;

use ctas_core::inference::bands::quantile;
use ctas_core::inference::{fit, FitOptions};
use ctas_core::model::ModelSpec;
use ctas_core::simulate::{simulate, SimConfig};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StartPolicy {
    /// The model's default initial values, with the usual multi-start.
    #[default]
    Default,
    Truth,
}

#[derive(Debug, Clone)]
pub struct StudyDesign {
    /// Generating configuration; `n` and `seed` are set per replicate.
    pub template: SimConfig,
    pub sizes: Vec<usize>,
    pub replicates: usize,
    pub partition_length: f64,
    pub seed: u64,
    /// Fit settings; the seed is set per replicate.
    pub fit: FitOptions,
    pub start: StartPolicy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Replicate {
    pub n: usize,
    pub replicate: usize,
    pub seed: u64,
    /// Individuals left after dropping those never detected.
    pub realized_n: usize,
    pub converged: bool,
    pub loglik: Option<f64>,
    /// Natural-scale estimates, absent when the fit failed.
    pub estimates: Option<Vec<f64>>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiasSummary {
    pub n: usize,
    pub parameter: String,
    pub truth: f64,
    /// False when the truth is zero and the absolute bias is reported.
    pub relative: bool,
    pub count: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub min: f64,
    pub max: f64,
}

/// Seed of replicate `replicate` at the `size_index`-th sample size.
pub fn replicate_seed(master: u64, size_index: usize, replicate: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(((size_index as u64) << 32) | replicate as u64);
    rng.next_u64()
}

/// `(estimate - truth) / truth`, or `estimate - truth` with `false` when the
/// truth is zero.
pub fn bias(estimate: f64, truth: f64) -> (f64, bool) {
    if truth == 0.0 {
        (estimate - truth, false)
    } else {
        ((estimate - truth) / truth, true)
    }
}

impl StudyDesign {
    pub fn validate(&self) -> ctas_core::Result<()> {
        if self.replicates == 0 {
            return Err(ctas_core::Error::InvalidInput(
                "at least one replicate is required".into(),
            ));
        }
        if self.sizes.is_empty() || self.sizes.contains(&0) {
            return Err(ctas_core::Error::InvalidInput(
                "sample sizes must be a non-empty list of positive integers".into(),
            ));
        }
        self.template.validate()?;
        self.template
            .spec
            .with_partition_length(self.partition_length)
            .map(|_| ())
    }

    pub fn truth_natural(&self) -> Vec<f64> {
        self.template
            .spec
            .natural_parameters(&self.template.truth)
            .into_iter()
            .map(|p| p.value)
            .collect()
    }

    pub fn run_replicate(&self, size_index: usize, replicate: usize) -> Replicate {
        let n = self.sizes[size_index];
        let seed = replicate_seed(self.seed, size_index, replicate);
        let mut out = Replicate {
            n,
            replicate,
            seed,
            realized_n: 0,
            converged: false,
            loglik: None,
            estimates: None,
            error: None,
        };
        let config = SimConfig {
            n,
            seed,
            ..self.template.clone()
        };
        let result = simulate(&config).and_then(|sim| {
            out.realized_n = sim.data.len();
            let spec: ModelSpec = config
                .spec
                .with_study_span(sim.data.grid().span())?
                .with_partition_length(self.partition_length)?;
            let init = match self.start {
                StartPolicy::Default => spec.default_init(),
                StartPolicy::Truth => config.truth.clone(),
            };
            let options = FitOptions {
                seed,
                ..self.fit.clone()
            };
            let f = fit(&spec, &sim.data, &init, &options)?;
            Ok((spec.natural_parameters(&f.mle), f))
        });
        match result {
            Ok((natural, f)) => {
                out.converged = f.converged;
                out.loglik = Some(f.loglik);
                out.estimates = Some(natural.into_iter().map(|p| p.value).collect());
            }
            Err(e) => out.error = Some(e.to_string()),
        }
        out
    }

    /// All replicates, ordered by sample size then replicate index.
    pub fn run(&self) -> ctas_core::Result<Vec<Replicate>> {
        self.validate()?;
        let jobs: Vec<(usize, usize)> = (0..self.sizes.len())
            .flat_map(|s| (0..self.replicates).map(move |r| (s, r)))
            .collect();
        Ok(jobs
            .par_iter()
            .map(|&(s, r)| self.run_replicate(s, r))
            .collect())
    }

    /// Per sample size and parameter: quartiles of the bias over successful fits.
    pub fn summarize(&self, replicates: &[Replicate]) -> Vec<BiasSummary> {
        let truth = self.truth_natural();
        let names = self.template.spec.param_names();
        let mut out = Vec::new();
        for &n in &self.sizes {
            let fits: Vec<&Vec<f64>> = replicates
                .iter()
                .filter(|r| r.n == n)
                .filter_map(|r| r.estimates.as_ref())
                .collect();
            if fits.is_empty() {
                continue;
            }
            for (i, name) in names.iter().enumerate() {
                let mut values: Vec<f64> = fits.iter().map(|e| bias(e[i], truth[i]).0).collect();
                out.push(BiasSummary {
                    n,
                    parameter: name.to_string(),
                    truth: truth[i],
                    relative: truth[i] != 0.0,
                    count: values.len(),
                    median: quantile(&mut values, 0.5),
                    q1: quantile(&mut values, 0.25),
                    q3: quantile(&mut values, 0.75),
                    min: quantile(&mut values, 0.0),
                    max: quantile(&mut values, 1.0),
                });
            }
        }
        out
    }
}

fn write_failed(e: impl std::fmt::Display) -> ctas_core::Error {
    ctas_core::Error::Format(format!("write failed: {e}"))
}

/// Long format, one row per replicate and parameter:
/// `n,replicate,seed,realized_n,converged,parameter,truth,estimate,bias,metric,error`.
pub fn write_replicates<W: Write>(
    w: W,
    design: &StudyDesign,
    replicates: &[Replicate],
) -> ctas_core::Result<()> {
    let truth = design.truth_natural();
    let names = design.template.spec.param_names();
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "n",
        "replicate",
        "seed",
        "realized_n",
        "converged",
        "parameter",
        "truth",
        "estimate",
        "bias",
        "metric",
        "error",
    ])
    .map_err(write_failed)?;
    for r in replicates {
        for (i, name) in names.iter().enumerate() {
            let (estimate, b, metric) = match &r.estimates {
                Some(e) => {
                    let (b, rel) = bias(e[i], truth[i]);
                    (
                        e[i].to_string(),
                        b.to_string(),
                        if rel { "relative" } else { "absolute" },
                    )
                }
                None => (String::new(), String::new(), ""),
            };
            wtr.write_record([
                r.n.to_string(),
                r.replicate.to_string(),
                r.seed.to_string(),
                r.realized_n.to_string(),
                r.converged.to_string(),
                name.to_string(),
                truth[i].to_string(),
                estimate,
                b,
                metric.to_string(),
                r.error.clone().unwrap_or_default(),
            ])
            .map_err(write_failed)?;
        }
    }
    wtr.flush().map_err(write_failed)
}

/// `n,parameter,truth,metric,count,median,q1,q3,min,max`.
pub fn write_summary<W: Write>(w: W, summary: &[BiasSummary]) -> ctas_core::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "n",
        "parameter",
        "truth",
        "metric",
        "count",
        "median",
        "q1",
        "q3",
        "min",
        "max",
    ])
    .map_err(write_failed)?;
    for s in summary {
        wtr.write_record([
            s.n.to_string(),
            s.parameter.clone(),
            s.truth.to_string(),
            if s.relative { "relative" } else { "absolute" }.to_string(),
            s.count.to_string(),
            s.median.to_string(),
            s.q1.to_string(),
            s.q3.to_string(),
            s.min.to_string(),
            s.max.to_string(),
        ])
        .map_err(write_failed)?;
    }
    wtr.flush().map_err(write_failed)
}
