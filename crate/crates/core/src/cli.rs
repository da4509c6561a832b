//! Command-line front end.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline::{ddr_predict, dwr_predict, estimate_warping, KernelKind, KernelSpec};
use crate::benchmark::{
    iae_csv, prepare, prepare_samples, run_extrapolation, run_trials, summarize, summary_csv,
    DaySamples, TruthSource,
};
use crate::config::PipelineConfig;
use crate::density::{
    demix_uniform, estimate_density, estimate_support, mix_with_uniform, rescale_to_unit,
    DensityGrid, DensityPair, GridFunction, SupportInterval,
};
use crate::error::{Error, Result};
use crate::evaluation::{iae, Method, TrialReport};
use crate::grid::Grid;
use crate::io::{
    directory_digest, file_digest, read_density, read_json, read_lqd, read_samples,
    write_atomic, write_density, write_json, write_lqd, write_samples, write_warping,
    DensitySidecar,
};
use crate::lqd::{inverse_lqd, lqd};
use crate::rkhs::{SigmaChoice, TrainedRkhsModel};
use crate::selection::{select_hyperparameter, HyperGrid, RiskEntry};
use crate::synth::{
    day_seed, extrapolation_scenario, generate_dataset, regenerate, Dataset, ExtrapolationLayout,
    Manifest,
};

#[derive(Debug, Parser)]
#[command(name = "lqd-rkhs", version)]
#[command(about = "Restore a missing sensor's density from a correlated sensor")]
pub struct Cli {
    /// TOML configuration file; flags override its values
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Increase log verbosity (-v info, -vv debug)
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(flatten)]
    pub overrides: Overrides,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Default)]
pub struct Overrides {
    #[arg(long, global = true)]
    pub grid_points: Option<usize>,
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    /// Allow any alpha in (0, 1)
    #[arg(long, global = true)]
    pub relax_alpha: bool,
    #[arg(long, global = true)]
    pub truncation: Option<usize>,
    #[arg(long, global = true)]
    pub lambda: Option<f64>,
    /// Kernel width, or "heuristic"
    #[arg(long, global = true)]
    pub sigma: Option<String>,
    #[arg(long, global = true)]
    pub kappa_lower: Option<f64>,
    #[arg(long, global = true)]
    pub kappa_upper: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic paired-sensor dataset
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        days: Option<usize>,
        #[arg(long)]
        coupling: Option<f64>,
        #[arg(long)]
        samples_per_day: Option<usize>,
        /// Training days with low sensor-B modes, test days with high ones
        #[arg(long)]
        extrapolation: bool,
    },
    /// Estimate densities of every segment in a sample CSV
    Estimate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Support JSON to use instead of estimating one per segment
        #[arg(long)]
        support: Option<PathBuf>,
    },
    /// LQD transform or its inverse; with --warp-to, a warping function
    Transform {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Treat the input as an LQD CSV and write the demixed density
        #[arg(long, conflicts_with = "warp_to")]
        inverse: bool,
        /// Write the warping from the input density to this density
        #[arg(long)]
        warp_to: Option<PathBuf>,
    },
    /// Train an LQD-RKHS model on days of a dataset directory
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Day list such as "0-49" or "1,4,7" (default: all)
        #[arg(long)]
        days: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Restore sensor-B densities from sensor-A samples
    Restore {
        #[arg(long)]
        model: PathBuf,
        /// Day CSVs to restore
        #[arg(long, num_args = 1..)]
        input: Vec<PathBuf>,
        /// Alternatively, a dataset directory and day list
        #[arg(long, requires = "days")]
        data: Option<PathBuf>,
        #[arg(long)]
        days: Option<String>,
        #[arg(long, default_value = "A")]
        segment: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Leave-one-out risk table for one method
    Cv {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        days: Option<String>,
        #[arg(long, value_enum)]
        method: CvMethod,
        #[arg(long)]
        out: PathBuf,
    },
    /// Repeated random-split comparison of LQD-RKHS against the baselines
    Benchmark {
        #[arg(long)]
        out: PathBuf,
        /// Dataset directory (default: generate from the synth settings)
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        n_train: Option<usize>,
        #[arg(long)]
        n_test: Option<usize>,
        /// Also override the synthetic day count and size
        #[arg(long)]
        days: Option<usize>,
        #[arg(long)]
        samples_per_day: Option<usize>,
        /// Compare DWR and LQD-RKHS on extrapolation datasets
        #[arg(long)]
        extrapolation: bool,
        #[arg(long, value_enum)]
        truth: Option<TruthArg>,
    },
    /// IAE and MIAE of restored densities against truth densities
    Evaluate {
        #[arg(long)]
        truth: PathBuf,
        /// METHOD=DIR, repeatable
        #[arg(long = "method", required = true)]
        methods: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum CvMethod {
    LqdRkhs,
    Ddr,
    Dwr,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TruthArg {
    Kde,
    Analytic,
}

/// Replay record written next to every output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_sha256: String,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
}

impl Provenance {
    fn new(command: &str, config: &PipelineConfig) -> Self {
        Provenance {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config_sha256: config.digest(),
            seeds: BTreeMap::new(),
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
        }
    }

    fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs
            .insert(path.display().to_string(), file_digest(path)?);
        Ok(())
    }
}

/// Model file contents: the fitted model and the supports used to map
/// raw samples to the unit interval.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelBundle {
    pub grid_points: usize,
    pub support_a: SupportInterval,
    pub support_b: SupportInterval,
    pub train_days: Vec<usize>,
    pub config_sha256: String,
    pub model: TrainedRkhsModel,
}

fn resolve_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut c = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    let o = &cli.overrides;
    if let Some(v) = o.grid_points {
        c.grid_points = v;
    }
    if let Some(v) = o.alpha {
        c.alpha = v;
    }
    if o.relax_alpha {
        c.relax_alpha = true;
    }
    if let Some(v) = o.truncation {
        c.truncation = v;
    }
    if let Some(v) = o.lambda {
        c.lambda = v;
    }
    if let Some(s) = &o.sigma {
        c.sigma = if s == "heuristic" {
            SigmaChoice::Heuristic
        } else {
            SigmaChoice::Fixed(s.parse().map_err(|_| {
                Error::InvalidConfig(format!("sigma must be a number or \"heuristic\", got {s}"))
            })?)
        };
    }
    if let Some(v) = o.kappa_lower {
        c.kappa_lower = v;
    }
    if let Some(v) = o.kappa_upper {
        c.kappa_upper = v;
    }
    match &cli.command {
        Command::Synth {
            seed,
            days,
            coupling,
            samples_per_day,
            ..
        } => {
            if let Some(v) = seed {
                c.synth.seed = *v;
            }
            if let Some(v) = days {
                c.synth.days = *v;
            }
            if let Some(v) = coupling {
                c.synth.scenario.coupling = *v;
            }
            if let Some(v) = samples_per_day {
                c.synth.scenario.samples_per_day = *v;
            }
        }
        Command::Benchmark {
            trials,
            seed,
            n_train,
            n_test,
            days,
            samples_per_day,
            truth,
            ..
        } => {
            if let Some(v) = trials {
                c.benchmark.trials = *v;
            }
            if let Some(v) = seed {
                c.benchmark.seed = *v;
            }
            if let Some(v) = n_train {
                c.benchmark.n_train = *v;
            }
            if let Some(v) = n_test {
                c.benchmark.n_test = *v;
            }
            if let Some(v) = days {
                c.synth.days = *v;
            }
            if let Some(v) = samples_per_day {
                c.synth.scenario.samples_per_day = *v;
            }
            if let Some(t) = truth {
                c.benchmark.truth = match t {
                    TruthArg::Kde => TruthSource::Kde,
                    TruthArg::Analytic => TruthSource::Analytic,
                };
            }
        }
        _ => {}
    }
    c.validate()?;
    Ok(c)
}

/// Runs a parsed command line.
pub fn run(cli: Cli) -> Result<()> {
    let config = resolve_config(&cli)?;
    match cli.command {
        Command::Synth {
            out, extrapolation, ..
        } => cmd_synth(&config, &out, extrapolation),
        Command::Estimate {
            input,
            out,
            support,
        } => cmd_estimate(&config, &input, &out, support.as_deref()),
        Command::Transform {
            input,
            out,
            inverse,
            warp_to,
        } => cmd_transform(&config, &input, &out, inverse, warp_to.as_deref()),
        Command::Train { data, days, out } => cmd_train(&config, &data, days.as_deref(), &out),
        Command::Restore {
            model,
            input,
            data,
            days,
            segment,
            out,
        } => {
            let mut inputs = input;
            if let Some(dir) = data {
                let listed = list_days(&dir)?;
                let wanted = select_days(&listed, days.as_deref())?;
                inputs.extend(wanted.into_iter().map(|(_, p)| p));
            }
            cmd_restore(&config, &model, &inputs, &segment, &out)
        }
        Command::Cv {
            data,
            days,
            method,
            out,
        } => cmd_cv(&config, &data, days.as_deref(), method, &out),
        Command::Benchmark {
            out,
            data,
            extrapolation,
            ..
        } => cmd_benchmark(&config, data.as_deref(), &out, extrapolation),
        Command::Evaluate {
            truth,
            methods,
            out,
        } => cmd_evaluate(&config, &truth, &methods, &out),
    }
}

fn day_file(day: usize) -> String {
    format!("day_{day:03}.csv")
}

fn write_dataset(ds: &Dataset, out: &Path, config: &PipelineConfig, command: &str) -> Result<()> {
    ds.days.par_iter().try_for_each(|d| {
        write_samples(
            &out.join(day_file(d.day)),
            &[("A".into(), &d.samples_a[..]), ("B".into(), &d.samples_b[..])],
        )
    })?;
    write_json(&out.join("manifest.json"), &ds.manifest)?;
    let mut prov = Provenance::new(command, config);
    prov.seeds.insert("master".into(), ds.manifest.master_seed);
    prov.outputs = ds.days.iter().map(|d| day_file(d.day)).collect();
    prov.outputs.push("manifest.json".into());
    write_json(&out.join("provenance.json"), &prov)
}

pub fn cmd_synth(config: &PipelineConfig, out: &Path, extrapolation: bool) -> Result<()> {
    let s = &config.synth;
    let ds = if extrapolation {
        extrapolation_scenario(s.seed, &s.scenario, &layout(config))?
    } else {
        generate_dataset(s.seed, s.days, &s.scenario)?
    };
    write_dataset(&ds, out, config, "synth")?;
    println!(
        "wrote {} days to {} (digest {})",
        ds.days.len(),
        out.display(),
        directory_digest(out)?
    );
    Ok(())
}

fn layout(config: &PipelineConfig) -> ExtrapolationLayout {
    ExtrapolationLayout {
        n_train: config.benchmark.n_train,
        n_test: config.benchmark.n_test,
        ..ExtrapolationLayout::default()
    }
}

/// `day_NNN.csv` files of a dataset directory, sorted by day.
pub fn list_days(dir: &Path) -> Result<Vec<(usize, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if let Some(day) = name
            .strip_prefix("day_")
            .and_then(|s| s.strip_suffix(".csv"))
            .and_then(|s| s.parse().ok())
        {
            out.push((day, p));
        }
    }
    if out.is_empty() {
        return Err(Error::Format {
            path: dir.to_path_buf(),
            message: "no day_NNN.csv files".into(),
        });
    }
    out.sort();
    Ok(out)
}

/// Parses "0-49,60,70-72" into day numbers.
pub fn parse_day_list(spec: &str) -> Result<Vec<usize>> {
    let bad = || Error::InvalidConfig(format!("bad day list {spec:?}"));
    let mut out = Vec::new();
    for part in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let a: usize = a.trim().parse().map_err(|_| bad())?;
                let b: usize = b.trim().parse().map_err(|_| bad())?;
                if b < a {
                    return Err(bad());
                }
                out.extend(a..=b);
            }
            None => out.push(part.parse().map_err(|_| bad())?),
        }
    }
    if out.is_empty() {
        return Err(bad());
    }
    Ok(out)
}

fn select_days(listed: &[(usize, PathBuf)], spec: Option<&str>) -> Result<Vec<(usize, PathBuf)>> {
    let Some(spec) = spec else {
        return Ok(listed.to_vec());
    };
    parse_day_list(spec)?
        .into_iter()
        .map(|d| {
            listed
                .iter()
                .find(|(day, _)| *day == d)
                .cloned()
                .ok_or_else(|| Error::InsufficientData(format!("day {d} is not in the dataset")))
        })
        .collect()
}

/// A file without segment ids holds a single segment, used for any `id`.
fn segment<'a>(path: &Path, segments: &'a [(String, Vec<f64>)], id: &str) -> Result<&'a [f64]> {
    segments
        .iter()
        .find(|(s, _)| s == id || (segments.len() == 1 && s.is_empty()))
        .map(|(_, v)| &v[..])
        .ok_or_else(|| Error::Format {
            path: path.to_path_buf(),
            message: format!("no segment {id:?}"),
        })
}

struct LoadedDay {
    day: usize,
    a: Vec<f64>,
    b: Vec<f64>,
}

fn load_days(days: &[(usize, PathBuf)]) -> Result<Vec<LoadedDay>> {
    days.par_iter()
        .map(|(day, p)| {
            let segs = read_samples(p).map_err(|e| e.in_day(day.to_string()))?;
            Ok(LoadedDay {
                day: *day,
                a: segment(p, &segs, "A")?.to_vec(),
                b: segment(p, &segs, "B")?.to_vec(),
            })
        })
        .collect()
}

fn sensor_supports(days: &[LoadedDay], config: &PipelineConfig) -> Result<(SupportInterval, SupportInterval)> {
    let (kl, ku) = config.kappa();
    let a: Vec<f64> = days.iter().flat_map(|d| d.a.iter().copied()).collect();
    let b: Vec<f64> = days.iter().flat_map(|d| d.b.iter().copied()).collect();
    Ok((estimate_support(&a, kl, ku)?, estimate_support(&b, kl, ku)?))
}

fn unit_density(samples: &[f64], support: &SupportInterval, grid: Grid) -> Result<DensityGrid> {
    estimate_density(&rescale_to_unit(samples, support)?, grid)
}

/// Density pairs for the selected days; supports come from every day of
/// the directory so that they describe the sensors, not the subset.
fn load_pairs(
    config: &PipelineConfig,
    data: &Path,
    days: Option<&str>,
) -> Result<(Vec<usize>, Vec<DensityPair>, SupportInterval, SupportInterval)> {
    let listed = list_days(data)?;
    let all = load_days(&listed)?;
    let (sa, sb) = sensor_supports(&all, config)?;
    let wanted: Vec<usize> = select_days(&listed, days)?.into_iter().map(|(d, _)| d).collect();
    let grid = config.grid()?;
    let pairs = wanted
        .par_iter()
        .map(|&d| {
            let day = all.iter().find(|x| x.day == d).expect("listed day");
            Ok(DensityPair {
                collaborator: unit_density(&day.a, &sa, grid).map_err(|e| e.in_day(d.to_string()))?,
                target: unit_density(&day.b, &sb, grid).map_err(|e| e.in_day(d.to_string()))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((wanted, pairs, sa, sb))
}

pub fn cmd_estimate(
    config: &PipelineConfig,
    input: &Path,
    out: &Path,
    support: Option<&Path>,
) -> Result<()> {
    let grid = config.grid()?;
    let fixed: Option<SupportInterval> = support.map(read_json).transpose()?;
    let segs = read_samples(input)?;
    let mut prov = Provenance::new("estimate", config);
    prov.input(input)?;
    for (id, samples) in &segs {
        let s = match fixed {
            Some(s) => s,
            None => estimate_support(samples, config.kappa_lower, config.kappa_upper)?,
        };
        let f = unit_density(samples, &s, grid)?;
        let name = format!("{id}.csv");
        write_density(
            &out.join(&name),
            &f,
            &DensitySidecar {
                grid_points: grid.len(),
                support: Some(s),
                alpha: None,
                segment: Some(id.clone()),
            },
        )?;
        prov.outputs.push(name);
    }
    write_json(&out.join("provenance.json"), &prov)?;
    println!("estimated {} densities into {}", segs.len(), out.display());
    Ok(())
}

pub fn cmd_transform(
    config: &PipelineConfig,
    input: &Path,
    out: &Path,
    inverse: bool,
    warp_to: Option<&Path>,
) -> Result<()> {
    let range = config.alpha_range();
    if inverse {
        let psi = read_lqd(input)?;
        let f = demix_uniform(&inverse_lqd(&psi)?, config.alpha)?;
        write_density(
            out,
            &f,
            &DensitySidecar {
                grid_points: f.grid().len(),
                ..Default::default()
            },
        )?;
    } else if let Some(target) = warp_to {
        let g = mix_with_uniform(&read_density(input)?, config.alpha, range)?;
        let f = mix_with_uniform(&read_density(target)?, config.alpha, range)?;
        write_warping(out, &estimate_warping(&g, &f)?)?;
    } else {
        let f = read_density(input)?;
        write_lqd(out, &lqd(&mix_with_uniform(&f, config.alpha, range)?))?;
    }
    println!("wrote {}", out.display());
    Ok(())
}

pub fn cmd_train(config: &PipelineConfig, data: &Path, days: Option<&str>, out: &Path) -> Result<()> {
    let (train_days, pairs, support_a, support_b) = load_pairs(config, data, days)?;
    if pairs.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "training needs at least 2 days, got {}",
            pairs.len()
        )));
    }
    let model = TrainedRkhsModel::train(&pairs, &config.rkhs_settings())?;
    log::info!(
        "sigma = {:.6}, residual = {:.3e}, eigenvalues = {:?}",
        model.sigma(),
        model.residual(),
        &model.fpca().eigenvalues()[..model.truncation()]
    );
    let bundle = ModelBundle {
        grid_points: config.grid_points,
        support_a,
        support_b,
        train_days,
        config_sha256: config.digest(),
        model,
    };
    write_json(out, &bundle)?;
    println!(
        "trained on {} days: sigma = {:.6}, residual = {:.3e}",
        pairs.len(),
        bundle.model.sigma(),
        bundle.model.residual()
    );
    Ok(())
}

pub fn cmd_restore(
    config: &PipelineConfig,
    model: &Path,
    inputs: &[PathBuf],
    segment_id: &str,
    out: &Path,
) -> Result<()> {
    if inputs.is_empty() {
        return Err(Error::InvalidConfig("no input files".into()));
    }
    let bundle: ModelBundle = read_json(model)?;
    let grid = Grid::new(bundle.grid_points)?;
    if bundle.grid_points != config.grid_points {
        return Err(Error::GridMismatch(bundle.grid_points, config.grid_points));
    }
    let mut prov = Provenance::new("restore", config);
    prov.input(model)?;
    let names = inputs
        .par_iter()
        .map(|p| {
            let segs = read_samples(p)?;
            let g0 = unit_density(segment(p, &segs, segment_id)?, &bundle.support_a, grid)?;
            let f = bundle.model.restore_distribution(&g0)?;
            let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or("input");
            let name = format!("{stem}_restored.csv");
            write_density(
                &out.join(&name),
                &f,
                &DensitySidecar {
                    grid_points: grid.len(),
                    support: Some(bundle.support_b),
                    alpha: Some(bundle.model.alpha()),
                    segment: Some(segment_id.to_owned()),
                },
            )?;
            Ok(name)
        })
        .collect::<Result<Vec<_>>>()?;
    for p in inputs {
        prov.input(p)?;
    }
    prov.outputs = names;
    write_json(&out.join("provenance.json"), &prov)?;
    println!("restored {} densities into {}", inputs.len(), out.display());
    Ok(())
}

fn risk_csv(table: &[RiskEntry]) -> String {
    let mut s = String::from("candidate,risk\n");
    for e in table {
        s.push_str(&format!("{},{}\n", e.candidate, e.risk));
    }
    s
}

pub fn cmd_cv(
    config: &PipelineConfig,
    data: &Path,
    days: Option<&str>,
    method: CvMethod,
    out: &Path,
) -> Result<()> {
    let (_, pairs, _, _) = load_pairs(config, data, days)?;
    let (table, best) = match method {
        CvMethod::LqdRkhs => {
            let base = config.rkhs_settings();
            let m = |tr: &[DensityPair], g0: &DensityGrid, l: &f64| {
                let mut s = base;
                s.lambda = *l;
                TrainedRkhsModel::train(tr, &s)?.restore_distribution(g0)
            };
            let sel = select_hyperparameter(&m, &pairs, &HyperGrid::new("lambda", config.cv.lambdas.clone())?)?;
            (sel.table, sel.best.to_string())
        }
        CvMethod::Ddr => {
            let m = |tr: &[DensityPair], g0: &DensityGrid, h: &f64| {
                ddr_predict(tr, g0, &KernelSpec::fixed(KernelKind::Gaussian, *h))
            };
            let grid = HyperGrid::new("bandwidth", config.cv.ddr_bandwidths.clone())?;
            let sel = select_hyperparameter(&m, &pairs, &grid)?;
            (sel.table, sel.best.to_string())
        }
        CvMethod::Dwr => {
            let alpha = config.alpha;
            let m = |tr: &[DensityPair], g0: &DensityGrid, z: &f64| {
                dwr_predict(tr, g0, &KernelSpec::neighbours(KernelKind::Triangular, *z), alpha)
            };
            let grid = HyperGrid::new("neighbours", config.cv.dwr_neighbours.clone())?;
            let sel = select_hyperparameter(&m, &pairs, &grid)?;
            (sel.table, sel.best.to_string())
        }
    };
    write_atomic(out, risk_csv(&table).as_bytes())?;
    println!("selected {best}");
    Ok(())
}

fn write_reports(out: &Path, reports: &[TrialReport], prov: &mut Provenance) -> Result<()> {
    write_atomic(&out.join("summary.csv"), summary_csv(reports).as_bytes())?;
    write_atomic(&out.join("iae.csv"), iae_csv(reports).as_bytes())?;
    write_json(&out.join("reports.json"), &reports)?;
    prov.outputs = vec!["summary.csv".into(), "iae.csv".into(), "reports.json".into()];
    write_json(&out.join("provenance.json"), prov)?;
    for s in summarize(reports) {
        println!(
            "{:<9} median MIAE {:.4}  median relative {}  best in {}/{} trials",
            s.method.to_string(),
            s.median_miae,
            s.median_relative_miae
                .map_or_else(|| "-".to_owned(), |v| format!("{v:.4}")),
            s.wins,
            reports.len()
        );
    }
    Ok(())
}

pub fn cmd_benchmark(
    config: &PipelineConfig,
    data: Option<&Path>,
    out: &Path,
    extrapolation: bool,
) -> Result<()> {
    let settings = config.benchmark_settings();
    let grid = config.grid()?;
    let truth = config.benchmark.truth;
    let mut prov = Provenance::new(
        if extrapolation {
            "benchmark --extrapolation"
        } else {
            "benchmark"
        },
        config,
    );
    prov.seeds.insert("benchmark".into(), settings.seed);
    let reports = if extrapolation {
        let s = &config.synth;
        prov.seeds.insert("synth".into(), s.seed);
        (0..settings.trials)
            .into_par_iter()
            .map(|t| {
                let seed = day_seed(s.seed, t as u64);
                let ds = extrapolation_scenario(seed, &s.scenario, &layout(config))?;
                let prepared = prepare(&ds.days, grid, config.kappa(), truth)?;
                run_extrapolation(t, seed, &prepared, settings.n_train, &settings)
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        let prepared = match data {
            Some(dir) => {
                prov.inputs.insert(dir.display().to_string(), directory_digest(dir)?);
                if truth == TruthSource::Analytic {
                    let manifest: Manifest = read_json(&dir.join("manifest.json"))?;
                    prepare(&regenerate(&manifest)?, grid, config.kappa(), truth)?
                } else {
                    let loaded = load_days(&list_days(dir)?)?;
                    let samples: Vec<DaySamples> = loaded
                        .iter()
                        .map(|d| DaySamples {
                            day: d.day,
                            a: &d.a,
                            b: &d.b,
                        })
                        .collect();
                    prepare_samples(&samples, grid, config.kappa())?
                }
            }
            None => {
                prov.seeds.insert("synth".into(), config.synth.seed);
                let ds =
                    generate_dataset(config.synth.seed, config.synth.days, &config.synth.scenario)?;
                prepare(&ds.days, grid, config.kappa(), truth)?
            }
        };
        run_trials(&prepared, &settings)?
    };
    write_reports(out, &reports, &mut prov)
}

pub fn cmd_evaluate(config: &PipelineConfig, truth: &Path, methods: &[String], out: &Path) -> Result<()> {
    let mut truth_files: Vec<PathBuf> = fs::read_dir(truth)
        .map_err(|e| Error::io(truth, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    truth_files.sort();
    if truth_files.is_empty() {
        return Err(Error::EmptySet);
    }
    let mut prov = Provenance::new("evaluate", config);
    let mut results = Vec::new();
    let mut names = Vec::new();
    for spec in methods {
        let (name, dir) = spec
            .split_once('=')
            .ok_or_else(|| Error::InvalidConfig(format!("expected METHOD=DIR, got {spec}")))?;
        let method = Method::from_str(name)?;
        let dir = Path::new(dir);
        let mut errors = Vec::new();
        names.clear();
        for t in &truth_files {
            let stem = t.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
            let direct = dir.join(format!("{stem}.csv"));
            let restored = if direct.exists() {
                direct
            } else {
                dir.join(format!("{stem}_restored.csv"))
            };
            errors.push(iae(&read_density(&restored)?, &read_density(t)?)?);
            names.push(stem.to_owned());
        }
        prov.inputs.insert(dir.display().to_string(), directory_digest(dir)?);
        results.push((method, String::new(), errors));
    }
    prov.inputs.insert(truth.display().to_string(), directory_digest(truth)?);
    let report = TrialReport::new(0, 0, Vec::new(), (0..names.len()).collect(), results)?;
    let mut iae_rows = String::from("trial,method,test_day,iae\n");
    for m in &report.methods {
        for (n, v) in names.iter().zip(&m.iae) {
            iae_rows.push_str(&format!("0,{},{},{}\n", m.method, n, v));
        }
    }
    write_atomic(&out.join("summary.csv"), summary_csv(std::slice::from_ref(&report)).as_bytes())?;
    write_atomic(&out.join("iae.csv"), iae_rows.as_bytes())?;
    prov.outputs = vec!["summary.csv".into(), "iae.csv".into()];
    write_json(&out.join("provenance.json"), &prov)?;
    for m in &report.methods {
        println!("{:<9} MIAE {:.4}", m.method.to_string(), m.miae);
    }
    Ok(())
}
