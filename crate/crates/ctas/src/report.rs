//! Fit report (JSON) and the tabular outputs: sweep, decoding and intensity curves.

use std::io::Write;

use ctas_core::decode::DecodedPath;
use ctas_core::inference::{
    wald_intervals, FitResult, IntensityBands, IntervalSweepResult, WaldInterval,
};
use ctas_core::model::{ModelSpec, ParamVector, Scale};
use serde::{Deserialize, Serialize};

use crate::config::ModelFile;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterRow {
    pub name: String,
    pub working: f64,
    pub natural: f64,
    /// `log` or `probability`.
    pub scale: String,
    pub std_error: Option<f64>,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartRow {
    pub loglik: Option<f64>,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub model: ModelFile,
    pub seed: u64,
    pub partition_length: f64,
    pub study_span: f64,
    pub individuals: usize,
    pub occasions: usize,
    pub loglik: f64,
    pub aic: f64,
    pub converged: bool,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub singular: bool,
    pub hessian_asymmetry: Option<f64>,
    pub wall_time: Option<f64>,
    pub level: f64,
    pub starts: Vec<StartRow>,
    pub parameters: Vec<ParameterRow>,
    pub covariance: Option<Vec<Vec<f64>>>,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

impl FitReport {
    pub fn new(
        model: &ModelFile,
        spec: &ModelSpec,
        fit: &FitResult,
        seed: u64,
        level: f64,
        individuals: usize,
        occasions: usize,
    ) -> Result<Self> {
        let intervals: Vec<WaldInterval> = wald_intervals(spec, fit, level)?;
        let natural = spec.natural_parameters(&fit.mle);
        let parameters = natural
            .iter()
            .zip(fit.mle.as_slice())
            .zip(intervals)
            .map(|((n, &w), i)| ParameterRow {
                name: n.name.clone(),
                working: w,
                natural: n.value,
                scale: match n.scale {
                    Scale::Log => "log",
                    Scale::Probability => "probability",
                }
                .into(),
                std_error: i.std_error,
                lower: i.lower,
                upper: i.upper,
            })
            .collect();
        Ok(FitReport {
            model: model.clone(),
            seed,
            partition_length: fit.l_used,
            study_span: spec.config().study_span,
            individuals,
            occasions,
            loglik: fit.loglik,
            aic: fit.aic(),
            converged: fit.converged,
            gradient_norm: fit.gradient_norm,
            iterations: fit.iterations,
            evaluations: fit.evaluations,
            singular: fit.singular,
            hessian_asymmetry: fit.hessian_asymmetry,
            wall_time: fit.wall_time,
            level,
            starts: fit
                .starts
                .iter()
                .map(|s| StartRow {
                    loglik: finite(s.loglik),
                    converged: s.converged,
                    iterations: s.iterations,
                })
                .collect(),
            parameters,
            covariance: fit.covariance.as_ref().map(|c| c.rows()),
        })
    }

    /// Working-scale estimates, checked against the model's parameter layout.
    pub fn estimates(&self, spec: &ModelSpec) -> Result<ParamVector> {
        let names = spec.param_names();
        if names.len() != self.parameters.len() {
            return Err(Error::Mismatch(format!(
                "model has {} parameters, report has {}",
                names.len(),
                self.parameters.len()
            )));
        }
        for (n, p) in names.iter().zip(&self.parameters) {
            if *n != p.name {
                return Err(Error::Mismatch(format!(
                    "expected parameter `{n}`, report has `{}`",
                    p.name
                )));
            }
        }
        let v = ParamVector::new(self.parameters.iter().map(|p| p.working).collect());
        spec.check(&v)?;
        Ok(v)
    }
}

fn csv_writer<W: Write>(w: W, delimiter: u8) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .delimiter(delimiter)
        .from_writer(w)
}

fn write_failed(e: impl std::fmt::Display) -> ctas_core::Error {
    ctas_core::Error::Format(format!("write failed: {e}"))
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// One row per interval length: `l,loglik,wall_time,converged,<natural...>,error`.
pub fn write_sweep<W: Write>(
    w: W,
    spec: &ModelSpec,
    sweep: &IntervalSweepResult,
    delimiter: u8,
) -> ctas_core::Result<()> {
    let mut wtr = csv_writer(w, delimiter);
    let mut header = vec!["l", "loglik", "wall_time", "converged"];
    let names = spec.param_names();
    header.extend(&names);
    header.push("error");
    wtr.write_record(&header).map_err(write_failed)?;
    for row in &sweep.rows {
        let mut rec = vec![
            row.length.to_string(),
            opt(row.loglik()),
            opt(row.wall_time()),
        ];
        match &row.fit {
            Ok(f) => {
                rec.push(f.converged.to_string());
                rec.extend(row.natural.iter().map(|p| p.value.to_string()));
                rec.push(String::new());
            }
            Err(e) => {
                rec.push("false".into());
                rec.extend(names.iter().map(|_| String::new()));
                rec.push(e.to_string());
            }
        }
        wtr.write_record(&rec).map_err(write_failed)?;
    }
    wtr.flush().map_err(write_failed)
}

/// `id,time,viterbi_state,p_state_1,...,p_state_{M+1}` from first capture on.
pub fn write_decoded<W: Write>(
    w: W,
    ids: &[&str],
    times: &[f64],
    paths: &[DecodedPath],
    dim: usize,
    delimiter: u8,
) -> ctas_core::Result<()> {
    let mut wtr = csv_writer(w, delimiter);
    let mut header = vec!["id".to_string(), "time".into(), "viterbi_state".into()];
    header.extend((1..=dim).map(|s| format!("p_state_{s}")));
    wtr.write_record(&header).map_err(write_failed)?;
    for (id, path) in ids.iter().zip(paths) {
        for (k, (&s, post)) in path.states.iter().zip(&path.posterior).enumerate() {
            let mut rec = vec![
                id.to_string(),
                times[path.first_capture + k].to_string(),
                s.to_string(),
            ];
            rec.extend(post.iter().map(|p| p.to_string()));
            wtr.write_record(&rec).map_err(write_failed)?;
        }
    }
    wtr.flush().map_err(write_failed)
}

/// Long format: `day,from,to,level,plug_in,lower,upper`.
pub fn write_intensity_bands<W: Write>(
    w: W,
    bands: &IntensityBands,
    delimiter: u8,
) -> ctas_core::Result<()> {
    let mut wtr = csv_writer(w, delimiter);
    wtr.write_record(["day", "from", "to", "level", "plug_in", "lower", "upper"])
        .map_err(write_failed)?;
    for b in &bands.bands {
        for (d, &day) in bands.days.iter().enumerate() {
            wtr.write_record([
                day.to_string(),
                b.from.to_string(),
                b.to.to_string(),
                b.level.to_string(),
                b.plug_in[d].to_string(),
                opt(b.lower.as_ref().map(|v| v[d])),
                opt(b.upper.as_ref().map(|v| v[d])),
            ])
            .map_err(write_failed)?;
        }
    }
    wtr.flush().map_err(write_failed)
}
