//! Subcommands of the `ctas` binary.
//!
//! Every command except `summarize` writes its outputs and a `manifest.json`
//! into `--out`. Exit codes: 0 success, 1 computation failure, 2 usage error,
//! 3 unreadable or invalid input, 4 outputs written but a fit did not converge.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ctas_core::data::{summarize, EncounterData};
use ctas_core::decode::{decode_all, oracle, DecodedPath};
use ctas_core::inference::{
    fit, interval_sweep, mc_intensity_bands, BandOptions, FitOptions, FitResult, Method,
};
use ctas_core::model::ModelSpec;
use ctas_core::simulate::simulate;
use serde::Serialize;

use crate::config::{read_model_file, read_sim_file, ModelFile};
use crate::csvio;
use crate::error::{Error, Result};
use crate::manifest::RunManifest;
use crate::report::{self, FitReport};
use crate::study::{self, StartPolicy, StudyDesign};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INPUT: i32 = 3;
pub const EXIT_NOT_CONVERGED: i32 = 4;

pub const HISTORIES_FILE: &str = "histories.csv";
pub const EFFORT_FILE: &str = "effort.csv";
pub const TRUTH_FILE: &str = "truth.json";
pub const FIT_FILE: &str = "fit.json";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const DECODED_FILE: &str = "decoded.csv";
pub const INTENSITY_FILE: &str = "intensity.csv";
pub const BIAS_FILE: &str = "bias.csv";
pub const BIAS_SUMMARY_FILE: &str = "bias_summary.csv";

#[derive(Debug, Parser)]
#[command(
    name = "ctas",
    version,
    about = "Continuous-time multi-state capture-recapture"
)]
pub struct Cli {
    /// Master seed; required by every stochastic step.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Field delimiter of CSV inputs and outputs.
    #[arg(long, global = true, default_value = ",")]
    pub delimiter: char,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate encounter data from a simulation file.
    Simulate(SimulateArgs),
    /// Fit a model by maximum likelihood, optionally over several interval lengths.
    Fit(FitArgs),
    /// Viterbi paths and state probabilities under a fitted model.
    Decode(DecodeArgs),
    /// Relative bias of the estimator over repeated simulations.
    BiasStudy(BiasStudyArgs),
    /// Print counts of individuals, occasions and sightings as JSON.
    Summarize(DataArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Directory holding `histories.csv` and `effort.csv`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub histories: Option<PathBuf>,
    #[arg(long)]
    pub effort: Option<PathBuf>,
}

impl DataArgs {
    fn paths(&self) -> Result<(PathBuf, PathBuf)> {
        let from_dir = |name: &str| self.data.as_ref().map(|d| d.join(name));
        match (
            self.histories.clone().or_else(|| from_dir(HISTORIES_FILE)),
            self.effort.clone().or_else(|| from_dir(EFFORT_FILE)),
        ) {
            (Some(h), Some(e)) => Ok((h, e)),
            _ => Err(Error::Usage(
                "give --data DIR or both --histories and --effort".into(),
            )),
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MethodArg {
    Bfgs,
    NelderMead,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Model file (TOML).
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Interval length in days, overriding the model file.
    #[arg(long)]
    pub l: Option<f64>,
    /// Optimiser starts: the initial values plus perturbed copies.
    #[arg(long, default_value_t = 5)]
    pub starts: usize,
    /// Strictly decreasing interval lengths, e.g. `89,55,34,21,13,8,5,3,2`.
    #[arg(long, value_delimiter = ',')]
    pub sweep: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value_t = MethodArg::Bfgs)]
    pub method: MethodArg,
    /// Confidence level of the Wald intervals.
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub model: PathBuf,
    /// Fit report written by `ctas fit`.
    #[arg(long)]
    pub fit: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write day-gridded intensity curves with Monte Carlo bands.
    #[arg(long)]
    pub plot_data: bool,
    /// Parameter draws for the bands; 0 gives plug-in curves only.
    #[arg(long, default_value_t = 1000)]
    pub draws: usize,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    /// Day spacing of the intensity curves.
    #[arg(long, default_value_t = 1.0)]
    pub day_step: f64,
    /// Replace an indefinite covariance by its nearest positive semi-definite matrix.
    #[arg(long)]
    pub repair: bool,
    /// Decode by exhaustive enumeration instead of dynamic programming.
    #[arg(long)]
    pub oracle: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum StartArg {
    Default,
    Truth,
}

#[derive(Debug, Args)]
pub struct BiasStudyArgs {
    /// Simulation file (TOML) with the generating truth.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub replicates: usize,
    /// Sample sizes, e.g. `100,200,400`.
    #[arg(long = "n", value_delimiter = ',', required = true)]
    pub sizes: Vec<usize>,
    #[arg(long)]
    pub out: PathBuf,
    /// Fitting interval length; defaults to the model file's.
    #[arg(long)]
    pub l: Option<f64>,
    #[arg(long, default_value_t = 5)]
    pub starts: usize,
    /// Starting values of each fit.
    #[arg(long, value_enum, default_value_t = StartArg::Default)]
    pub start: StartArg,
}

struct Globals {
    seed: Option<u64>,
    delimiter: u8,
}

impl Globals {
    fn seed(&self, why: &str) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::Usage(format!("--seed is required {why}")))
    }
}

/// Parses `args` (program name first) and runs the command; returns the exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<String>,
{
    let args: Vec<String> = args.into_iter().map(Into::into).collect();
    match Cli::try_parse_from(&args) {
        Ok(cli) => run(cli, args.into_iter().skip(1).collect()),
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                EXIT_USAGE
            } else {
                EXIT_OK
            }
        }
    }
}

/// Runs a parsed command line; `args` are recorded in the manifest.
pub fn run(cli: Cli, args: Vec<String>) -> i32 {
    if let Some(n) = cli.threads {
        // A pool built earlier in the same process keeps its size.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    if !cli.delimiter.is_ascii() {
        eprintln!("error: the delimiter must be a single ASCII character");
        return EXIT_USAGE;
    }
    let globals = Globals {
        seed: cli.seed,
        delimiter: cli.delimiter as u8,
    };
    let (name, out) = match &cli.command {
        Command::Simulate(a) => ("simulate", Some(a.out.as_path())),
        Command::Fit(a) => ("fit", Some(a.out.as_path())),
        Command::Decode(a) => ("decode", Some(a.out.as_path())),
        Command::BiasStudy(a) => ("bias-study", Some(a.out.as_path())),
        Command::Summarize(_) => ("summarize", None),
    };
    let clock = Instant::now();
    let mut manifest = RunManifest::new(name, args, cli.seed);
    let result = match out {
        Some(dir) => std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e)),
        None => Ok(()),
    }
    .and_then(|()| match &cli.command {
        Command::Simulate(a) => cmd_simulate(&globals, a, &mut manifest),
        Command::Fit(a) => cmd_fit(&globals, a, &mut manifest),
        Command::Decode(a) => cmd_decode(&globals, a, &mut manifest),
        Command::BiasStudy(a) => cmd_bias_study(&globals, a, &mut manifest),
        Command::Summarize(a) => cmd_summarize(&globals, a),
    });
    let code = match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            for issue in e.issues() {
                eprintln!("  {issue}");
            }
            match e {
                Error::Usage(_) => EXIT_USAGE,
                e if e.is_ingestion() => EXIT_INPUT,
                _ => EXIT_FAILURE,
            }
        }
    };
    if let Some(dir) = out.filter(|d| d.is_dir()) {
        manifest.wall_time = clock.elapsed().as_secs_f64();
        manifest.exit_code = code;
        if let Err(e) = manifest.write(dir) {
            eprintln!("error: {e}");
            return EXIT_FAILURE;
        }
    }
    code
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn write_output(
    manifest: &mut RunManifest,
    path: PathBuf,
    f: impl FnOnce(BufWriter<File>) -> ctas_core::Result<()>,
) -> Result<()> {
    f(create(&path)?).map_err(Error::Core)?;
    manifest.outputs.push(path);
    Ok(())
}

fn write_json<T: Serialize>(manifest: &mut RunManifest, path: PathBuf, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    manifest.outputs.push(path);
    Ok(())
}

fn load_data(
    g: &Globals,
    args: &DataArgs,
    manifest: Option<&mut RunManifest>,
) -> Result<EncounterData> {
    let (hist, effort) = args.paths()?;
    let grid =
        csvio::read_effort(open(&effort)?, g.delimiter).map_err(|e| Error::input(&effort, e))?;
    let data = csvio::read_histories(open(&hist)?, g.delimiter, &grid)
        .map_err(|e| Error::input(&hist, e))?;
    if let Some(m) = manifest {
        m.add_input(&hist)?;
        m.add_input(&effort)?;
    }
    Ok(data)
}

fn load_model(
    path: &Path,
    span: f64,
    manifest: &mut RunManifest,
) -> Result<(ModelFile, ModelSpec)> {
    let model = read_model_file(path)?;
    let spec = model.model.spec(span).map_err(|e| Error::input(path, e))?;
    manifest.add_input(path)?;
    manifest.config = Some(path.into());
    Ok((model, spec))
}

#[derive(Serialize)]
struct TruthParam<'a> {
    name: &'a str,
    natural: f64,
    working: f64,
}

#[derive(Serialize)]
struct TruthPath<'a> {
    id: String,
    detected: bool,
    level: usize,
    jumps: &'a [(f64, usize)],
}

#[derive(Serialize)]
struct TruthRecord<'a> {
    seed: u64,
    n: usize,
    realized_n: usize,
    occasions: usize,
    span_days: f64,
    parameters: Vec<TruthParam<'a>>,
    trajectories: Vec<TruthPath<'a>>,
}

fn cmd_simulate(g: &Globals, a: &SimulateArgs, manifest: &mut RunManifest) -> Result<i32> {
    let seed = g.seed("for simulate")?;
    let file = read_sim_file(&a.config)?;
    let config = file
        .sim_config(seed)
        .map_err(|e| Error::input(&a.config, e))?;
    manifest.add_input(&a.config)?;
    manifest.config = Some(a.config.clone());
    let sim = simulate(&config)?;
    let d = g.delimiter;
    write_output(manifest, a.out.join(HISTORIES_FILE), |w| {
        csvio::write_histories(w, &sim.data, d)
    })?;
    write_output(manifest, a.out.join(EFFORT_FILE), |w| {
        csvio::write_effort(w, sim.data.grid(), d)
    })?;
    let names = config.spec.param_names();
    let natural = config.spec.natural_parameters(&config.truth);
    let mut detected = vec![false; sim.trajectories.len()];
    sim.kept.iter().for_each(|&i| detected[i] = true);
    let record = TruthRecord {
        seed,
        n: config.n,
        realized_n: sim.data.len(),
        occasions: sim.data.grid().len(),
        span_days: config.span_days,
        parameters: names
            .iter()
            .zip(&natural)
            .zip(config.truth.as_slice())
            .map(|((name, n), &w)| TruthParam {
                name,
                natural: n.value,
                working: w,
            })
            .collect(),
        trajectories: sim
            .trajectories
            .iter()
            .enumerate()
            .map(|(i, t)| TruthPath {
                id: ctas_core::simulate::individual_id(i),
                detected: detected[i],
                level: t.level,
                jumps: &t.jumps,
            })
            .collect(),
    };
    write_json(manifest, a.out.join(TRUTH_FILE), &record)?;
    manifest.note("realized_n", sim.data.len());
    manifest.note("occasions", sim.data.grid().len());
    Ok(EXIT_OK)
}

fn fit_options(starts: usize, seed: u64, method: MethodArg) -> FitOptions {
    FitOptions {
        starts,
        seed,
        method: match method {
            MethodArg::Bfgs => Method::Bfgs,
            MethodArg::NelderMead => Method::NelderMead,
        },
        ..FitOptions::default()
    }
}

fn cmd_fit(g: &Globals, a: &FitArgs, manifest: &mut RunManifest) -> Result<i32> {
    let seed = if a.starts > 1 {
        g.seed("for fits with more than one start")?
    } else {
        g.seed.unwrap_or(0)
    };
    let data = load_data(g, &a.data, Some(&mut *manifest))?;
    let (model, mut spec) = load_model(&a.model, data.grid().span(), manifest)?;
    if let Some(l) = a.l {
        spec = spec.with_partition_length(l)?;
    }
    let init = model.init(&spec).map_err(|e| Error::input(&a.model, e))?;
    let options = fit_options(a.starts, seed, a.method);
    manifest.note(
        "starts",
        format!(
            "initial values plus {} perturbed copies (sd {})",
            a.starts.saturating_sub(1),
            options.perturbation_sd
        ),
    );
    let individuals = data.len();
    let occasions = data.grid().len();

    let Some(lengths) = &a.sweep else {
        let result = fit(&spec, &data, &init, &options)?;
        let rep = FitReport::new(
            &model,
            &spec,
            &result,
            seed,
            a.level,
            individuals,
            occasions,
        )?;
        write_json(manifest, a.out.join(FIT_FILE), &rep)?;
        manifest.note("loglik", result.loglik);
        return Ok(if result.converged {
            EXIT_OK
        } else {
            EXIT_NOT_CONVERGED
        });
    };

    let sweep = interval_sweep(&spec, &data, lengths, &init, &options)?;
    let d = g.delimiter;
    write_output(manifest, a.out.join(SWEEP_FILE), |w| {
        report::write_sweep(w, &spec, &sweep, d)
    })?;
    if let Some((row, f)) = sweep
        .rows
        .iter()
        .rev()
        .find_map(|r| r.fit.as_ref().ok().map(|f| (r, f)))
    {
        let at = spec.with_partition_length(row.length)?;
        let rep = FitReport::new(&model, &at, f, seed, a.level, individuals, occasions)?;
        write_json(manifest, a.out.join(FIT_FILE), &rep)?;
    }
    let failed = sweep.rows.iter().filter(|r| r.fit.is_err()).count();
    let unconverged = sweep
        .rows
        .iter()
        .filter(|r| matches!(&r.fit, Ok(f) if !f.converged))
        .count();
    manifest.note("failed_rows", failed);
    manifest.note("unconverged_rows", unconverged);
    Ok(if failed > 0 {
        EXIT_FAILURE
    } else if unconverged > 0 {
        EXIT_NOT_CONVERGED
    } else {
        EXIT_OK
    })
}

fn cmd_decode(g: &Globals, a: &DecodeArgs, manifest: &mut RunManifest) -> Result<i32> {
    let data = load_data(g, &a.data, Some(&mut *manifest))?;
    let (_, spec) = load_model(&a.model, data.grid().span(), manifest)?;
    let text = std::fs::read_to_string(&a.fit).map_err(|e| Error::io(&a.fit, e))?;
    let rep: FitReport = serde_json::from_str(&text).map_err(|e| Error::Config {
        path: a.fit.clone(),
        message: e.to_string(),
    })?;
    manifest.add_input(&a.fit)?;
    let spec = spec.with_partition_length(rep.partition_length)?;
    let params = rep.estimates(&spec)?;

    let paths: Vec<DecodedPath> = if a.oracle {
        data.histories()
            .iter()
            .map(|h| {
                oracle::decode(&spec, &params, data.grid(), h).map_err(|e| {
                    Error::Core(ctas_core::Error::Individual {
                        id: h.id().into(),
                        source: Box::new(e),
                    })
                })
            })
            .collect::<Result<_>>()?
    } else {
        decode_all(&spec, &params, &data)?
    };
    let ids: Vec<&str> = data.histories().iter().map(|h| h.id()).collect();
    let d = g.delimiter;
    write_output(manifest, a.out.join(DECODED_FILE), |w| {
        report::write_decoded(w, &ids, data.grid().times(), &paths, spec.dim(), d)
    })?;

    if a.plot_data {
        if !(a.day_step.is_finite() && a.day_step > 0.0) {
            return Err(Error::Usage("--day-step must be positive".into()));
        }
        let seed = if a.draws > 0 {
            g.seed("for Monte Carlo bands (or pass --draws 0)")?
        } else {
            0
        };
        let n_days = (spec.period() / a.day_step).ceil() as usize;
        let days: Vec<f64> = (0..n_days).map(|k| k as f64 * a.day_step).collect();
        let fit = FitResult {
            mle: params,
            loglik: rep.loglik,
            gradient_norm: rep.gradient_norm,
            hessian: None,
            hessian_asymmetry: rep.hessian_asymmetry,
            covariance: rep
                .covariance
                .as_ref()
                .map(|c| ctas_core::linalg::Matrix::from_rows(c))
                .transpose()
                .map_err(|e| Error::input(&a.fit, e))?,
            singular: rep.singular,
            converged: rep.converged,
            iterations: rep.iterations,
            evaluations: rep.evaluations,
            l_used: rep.partition_length,
            wall_time: rep.wall_time,
            starts: Vec::new(),
        };
        let bands = mc_intensity_bands(
            &spec,
            &fit,
            &days,
            &BandOptions {
                draws: a.draws,
                level: a.level,
                seed,
                repair: a.repair,
            },
        )?;
        write_output(manifest, a.out.join(INTENSITY_FILE), |w| {
            report::write_intensity_bands(w, &bands, d)
        })?;
    }
    Ok(EXIT_OK)
}

fn cmd_bias_study(g: &Globals, a: &BiasStudyArgs, manifest: &mut RunManifest) -> Result<i32> {
    let seed = g.seed("for bias-study")?;
    let file = read_sim_file(&a.config)?;
    let template = file
        .sim_config(seed)
        .map_err(|e| Error::input(&a.config, e))?;
    manifest.add_input(&a.config)?;
    manifest.config = Some(a.config.clone());
    let design = StudyDesign {
        partition_length: a.l.unwrap_or(file.model.partition_length),
        template,
        sizes: a.sizes.clone(),
        replicates: a.replicates,
        seed,
        fit: fit_options(a.starts, seed, MethodArg::Bfgs),
        start: match a.start {
            StartArg::Default => StartPolicy::Default,
            StartArg::Truth => StartPolicy::Truth,
        },
    };
    design.validate().map_err(|e| Error::input(&a.config, e))?;
    let reps = design.run()?;
    write_output(manifest, a.out.join(BIAS_FILE), |w| {
        study::write_replicates(w, &design, &reps)
    })?;
    let summary = design.summarize(&reps);
    write_output(manifest, a.out.join(BIAS_SUMMARY_FILE), |w| {
        study::write_summary(w, &summary)
    })?;
    let failed = reps.iter().filter(|r| r.error.is_some()).count();
    let unconverged = reps
        .iter()
        .filter(|r| r.error.is_none() && !r.converged)
        .count();
    manifest.note("failures", failed);
    manifest.note("unconverged", unconverged);
    manifest.note("partition_length", design.partition_length);
    manifest.note(
        "start_policy",
        match design.start {
            StartPolicy::Default => format!("model defaults, {} starts", a.starts),
            StartPolicy::Truth => format!("truth, {} starts", a.starts),
        },
    );
    Ok(if failed + unconverged == 0 {
        EXIT_OK
    } else {
        EXIT_NOT_CONVERGED
    })
}

#[derive(Serialize)]
struct SummaryRecord {
    individuals: usize,
    occasions: usize,
    occasions_per_area: Vec<usize>,
    sightings_min: Option<usize>,
    sightings_median: Option<f64>,
    sightings_max: Option<usize>,
}

fn cmd_summarize(g: &Globals, a: &DataArgs) -> Result<i32> {
    let data = load_data(g, a, None)?;
    let s = summarize(&data);
    let rec = SummaryRecord {
        individuals: s.individuals,
        occasions: s.occasions,
        occasions_per_area: s.occasions_per_area,
        sightings_min: s.sightings.map(|x| x.min),
        sightings_median: s.sightings.map(|x| x.median),
        sightings_max: s.sightings.map(|x| x.max),
    };
    println!(
        "{}",
        serde_json::to_string_pretty(&rec).expect("summary serializes")
    );
    Ok(EXIT_OK)
}
