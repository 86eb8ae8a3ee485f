//! `hetero`: heterogeneity tests, simulation studies and CATE curves from the
//! command line.
//!
//! Every flag mirrors a key of the JSON config accepted by `--config`; flags
//! given on the command line override the file.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use hetero_core::curve::{cate_curve, write_curve_csv, DEFAULT_GRID, DEFAULT_KNOTS};
use hetero_core::data::{load_csv, CsvSchema, Delta, Sample};
use hetero_core::inference::{qual_test, quant_test, TestConfig, DEFAULT_ALPHA, DEFAULT_BOOTSTRAP};
use hetero_core::nuisance::{crossfit, fit_nuisance, NuisanceFit, NuisanceSpec};
use hetero_core::policy::{
    BvGrid, BvSolver, PolicyClass, DEFAULT_BV_BINS, DEFAULT_LAMBDA, DEFAULT_TREE_DEPTH, DEFAULT_TREE_QUANTILES,
};
use hetero_core::pseudo::pseudo_outcomes;
use hetero_core::simlab::{run_study_with, Method, StudyConfig, DEFAULT_REPS, DEFAULT_STUDY_BOOTSTRAP};

const EXIT_USAGE: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "hetero", version, about = "Tests for quantitative and qualitative treatment-effect heterogeneity")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Test whether the CATE varies with the modifiers.
    TestQuant(Flags),
    /// Test whether the CATE crosses the threshold delta.
    TestQual(Flags),
    /// Monte Carlo rejection rates on the simulation settings.
    Simulate(Flags),
    /// Spline fit of the pseudo-outcome on one modifier with a 95% band.
    Curve(Flags),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum ClassKind {
    Threshold,
    Linear,
    Bv,
    Tree,
}

#[derive(Debug, Clone, Default, Args)]
struct Flags {
    /// JSON config file; flags override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Input CSV with a header row.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Effect-modifier columns, comma separated.
    #[arg(long, value_delimiter = ',')]
    modifier: Option<Vec<String>>,
    #[arg(long)]
    outcome: Option<String>,
    #[arg(long)]
    treatment: Option<String>,
    #[arg(long, value_enum)]
    class: Option<ClassKind>,
    /// Total-variation budget of the bv class.
    #[arg(long)]
    lambda: Option<f64>,
    /// Bin count of the bv grid (and of the comparators in `simulate`).
    #[arg(long)]
    grid: Option<usize>,
    /// Tree depth.
    #[arg(long)]
    depth: Option<usize>,
    /// Split candidates per coordinate for trees.
    #[arg(long)]
    quantiles: Option<usize>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Number of bootstrap (or Monte Carlo) draws M.
    #[arg(long = "bootstrap", value_name = "M")]
    bootstrap: Option<usize>,
    /// Replications per simulation cell.
    #[arg(long = "reps", value_name = "R")]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long)]
    threads: Option<usize>,
    /// Simulation settings, comma separated.
    #[arg(long, value_delimiter = ',')]
    settings: Option<Vec<u8>>,
    /// Sample sizes of the simulation grid, comma separated.
    #[arg(long = "n", value_delimiter = ',')]
    n_values: Option<Vec<usize>>,
    /// Simulation methods, comma separated (e.g. quant_monotone,qual_range).
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    /// Standardize candidates by their estimated variance.
    #[arg(long)]
    variance_weighted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RunConfig {
    data: Option<PathBuf>,
    modifier: Vec<String>,
    outcome: String,
    treatment: String,
    class: ClassKind,
    lambda: f64,
    grid: usize,
    /// Fixed `[lo, hi]` range of the bv grid instead of the observed range.
    grid_range: Option<[f64; 2]>,
    solver: BvSolver,
    depth: usize,
    quantiles: usize,
    delta: f64,
    alpha: f64,
    bootstrap: Option<usize>,
    reps: usize,
    seed: u64,
    out: Option<PathBuf>,
    threads: Option<usize>,
    variance_weighted: bool,
    nuisance: NuisanceSpec,
    settings: Vec<u8>,
    n_values: Vec<usize>,
    methods: Vec<Method>,
    knots: usize,
    points: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let study = StudyConfig::default();
        Self {
            data: None,
            modifier: Vec::new(),
            outcome: CsvSchema::default().outcome,
            treatment: CsvSchema::default().treatment,
            class: ClassKind::Threshold,
            lambda: DEFAULT_LAMBDA,
            grid: DEFAULT_BV_BINS,
            grid_range: None,
            solver: BvSolver::default(),
            depth: DEFAULT_TREE_DEPTH,
            quantiles: DEFAULT_TREE_QUANTILES,
            delta: 0.0,
            alpha: DEFAULT_ALPHA,
            bootstrap: None,
            reps: DEFAULT_REPS,
            seed: 0,
            out: None,
            threads: None,
            variance_weighted: false,
            nuisance: NuisanceSpec::default(),
            settings: study.settings,
            n_values: study.n_values,
            methods: study.methods,
            knots: DEFAULT_KNOTS,
            points: DEFAULT_GRID,
        }
    }
}

/// Errors tagged with the exit code they map to.
enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<hetero_core::Error> for Failure {
    fn from(e: hetero_core::Error) -> Self {
        use hetero_core::Error as E;
        match e {
            E::Io(_) | E::Csv(_) | E::Parse { .. } | E::Validation(_) | E::InvalidArgument(_) => Failure::Usage(e.into()),
            E::Degenerate(_) | E::Internal(_) => Failure::Runtime(e.into()),
        }
    }
}

fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Usage(e.into())
}

fn runtime(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Runtime(e.into())
}

impl RunConfig {
    fn load(flags: &Flags) -> Result<Self, Failure> {
        let mut c = match &flags.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))
                    .map_err(usage)?;
                serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display())).map_err(usage)?
            }
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($field:ident),*) => { $( if let Some(v) = &flags.$field { c.$field = v.clone(); } )* };
        }
        set!(modifier, outcome, treatment, class, lambda, grid, depth, quantiles, delta, alpha, reps, seed, settings, n_values);
        if flags.data.is_some() {
            c.data = flags.data.clone();
        }
        if flags.out.is_some() {
            c.out = flags.out.clone();
        }
        if flags.threads.is_some() {
            c.threads = flags.threads;
        }
        if flags.bootstrap.is_some() {
            c.bootstrap = flags.bootstrap;
        }
        if let Some(ms) = &flags.methods {
            c.methods = ms.iter().map(|m| Method::parse(m)).collect::<Result<_, _>>()?;
        }
        c.variance_weighted |= flags.variance_weighted;
        Ok(c)
    }

    fn class(&self) -> PolicyClass {
        match self.class {
            ClassKind::Threshold => PolicyClass::ConstantThreshold,
            ClassKind::Linear => PolicyClass::LinearThreshold,
            ClassKind::Bv => PolicyClass::BoundedVariation {
                lambda: self.lambda,
                grid: match self.grid_range {
                    Some([lo, hi]) => BvGrid::Range { bins: self.grid, lo, hi },
                    None => BvGrid::EqualWidth { bins: self.grid },
                },
                solver: self.solver,
            },
            ClassKind::Tree => PolicyClass::Tree { depth: self.depth, quantiles: self.quantiles },
        }
    }

    fn test_config(&self) -> TestConfig {
        TestConfig {
            alpha: self.alpha,
            bootstrap: self.bootstrap.unwrap_or(DEFAULT_BOOTSTRAP),
            seed: self.seed,
            variance_weighted: self.variance_weighted,
        }
    }

    fn sample(&self) -> Result<Sample, Failure> {
        let path = self.data.as_ref().ok_or_else(|| usage(anyhow!("no input data: pass --data or set \"data\"")))?;
        if self.modifier.is_empty() {
            return Err(usage(anyhow!("no effect modifier: pass --modifier or set \"modifier\"")));
        }
        let schema = CsvSchema { outcome: self.outcome.clone(), treatment: self.treatment.clone(), modifiers: self.modifier.clone() };
        let sample = load_csv(path, &schema).map_err(|e| usage(anyhow::Error::from(e).context(format!("loading {}", path.display()))))?;
        eprintln!("loaded {} rows, {} covariates from {}", sample.n(), sample.p(), path.display());
        Ok(sample)
    }

    fn nuisance(&self, sample: &Sample) -> Result<NuisanceFit, Failure> {
        eprintln!("fitting nuisance: outcome {}, propensity {}", self.nuisance.outcome.tag(), self.nuisance.propensity.tag());
        Ok(match self.nuisance.crossfit {
            Some(cf) => crossfit(sample, &self.nuisance, cf.folds, cf.seed)?,
            None => fit_nuisance(sample, &self.nuisance)?,
        })
    }
}

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display())).map_err(runtime)?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json<T: Serialize>(value: &T, path: Option<&Path>) -> Result<(), Failure> {
    let mut out = open_out(path)?;
    serde_json::to_writer_pretty(&mut out, value).map_err(runtime)?;
    writeln!(out).and_then(|_| out.flush()).map_err(runtime)
}

fn cmd_test(config: &RunConfig, qualitative: bool) -> Result<(), Failure> {
    let class = config.class();
    let test = config.test_config();
    test.validate()?;
    let delta = Delta::new(config.delta)?;
    let sample = config.sample()?;
    class.validate(sample.modifiers().len())?;
    let fit = config.nuisance(&sample)?;
    eprintln!("running {} bootstrap draws over class {}", test.bootstrap, class.name());
    if qualitative {
        let report = qual_test(&sample, &fit, &class, delta, &test)?;
        eprintln!("p = {:.4}, reject = {}", report.p_value, report.reject);
        write_json(&report, config.out.as_deref())
    } else {
        let report = quant_test(&sample, &fit, &class, &test)?;
        eprintln!("p = {:.4}, reject = {}", report.p_value, report.reject);
        write_json(&report, config.out.as_deref())
    }
}

fn cmd_simulate(config: &RunConfig) -> Result<(), Failure> {
    let study = StudyConfig {
        settings: config.settings.clone(),
        n_values: config.n_values.clone(),
        methods: config.methods.clone(),
        reps: config.reps,
        seed: config.seed,
        alpha: config.alpha,
        bootstrap: config.bootstrap.unwrap_or(DEFAULT_STUDY_BOOTSTRAP),
        bins: config.grid,
        lambda: config.lambda,
        delta: Delta::new(config.delta)?,
        nuisance: config.nuisance,
    };
    study.validate()?;
    let cells = study.settings.len() * study.n_values.len();
    let mut done = 0;
    let report = run_study_with(&study, |rows| {
        done += 1;
        for r in rows {
            eprintln!(
                "[{done}/{cells}] setting {} n {} {}: {:.3} (R = {}, {} failed)",
                r.setting, r.n, r.label, r.proportion, r.reps, r.failures
            );
        }
    })?;
    match config.out.as_deref() {
        Some(path) => {
            report.write_csv(open_out(Some(path))?)?;
            let json = path.with_extension("json");
            if json != path {
                write_json(&report, Some(&json))?;
            }
            eprintln!("wrote {}", path.display());
        }
        None => report.write_csv(open_out(None)?)?,
    }
    Ok(())
}

fn cmd_curve(config: &RunConfig) -> Result<(), Failure> {
    if config.modifier.len() > 1 {
        return Err(usage(anyhow!("curve requires scalar modifier")));
    }
    let sample = config.sample()?;
    let fit = config.nuisance(&sample)?;
    let pseudo = pseudo_outcomes(&sample, &fit)?;
    let curve = cate_curve(&sample, &pseudo, config.knots, config.points)?;
    write_curve_csv(&curve, open_out(config.out.as_deref())?)?;
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    let (flags, kind) = match &cli.command {
        Command::TestQuant(f) => (f, 0),
        Command::TestQual(f) => (f, 1),
        Command::Simulate(f) => (f, 2),
        Command::Curve(f) => (f, 3),
    };
    let config = RunConfig::load(flags)?;
    if let Some(t) = config.threads {
        if t == 0 {
            return Err(usage(anyhow!("--threads must be at least 1")));
        }
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global().map_err(runtime)?;
    }
    match kind {
        0 => cmd_test(&config, false),
        1 => cmd_test(&config, true),
        2 => cmd_simulate(&config),
        _ => cmd_curve(&config),
    }
}

fn main() -> ExitCode {
    // clap exits with status 2 on usage errors
    let cli = Cli::parse();
    // per-replication bin warnings would flood a study run
    let filter = match cli.command {
        Command::Simulate(_) => "warn,hetero_core::comparators=error",
        _ => "warn",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(filter)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
