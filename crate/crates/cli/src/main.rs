use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use phfcox::cubical::Construction;
use phfcox::pipeline::{self, PipelineConfig};
use phfcox::simulate::SimConfig;
use phfcox::surface::GridSpec;
use phfcox::Error;
use toml::{Table, Value};

#[derive(Parser)]
#[command(name = "phfcox", version, about = "Topological shape features and penalized Cox models for tumor survival")]
struct Cli {
    /// Worker threads (0 = all cores). Overrides the config's `workers`.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ConstructionArg {
    V,
    T,
}

impl From<ConstructionArg> for Construction {
    fn from(c: ConstructionArg) -> Self {
        match c {
            ConstructionArg::V => Construction::V,
            ConstructionArg::T => Construction::T,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Signed distance transform of a label volume.
    Sedt {
        /// Label volume header (`.json`).
        volume: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Persistence diagrams of a label volume.
    Ph {
        volume: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Keep infinite deaths instead of regularizing them.
        #[arg(long)]
        raw: bool,
        #[arg(long, value_enum, default_value = "v")]
        construction: ConstructionArg,
    },
    /// Persistence surfaces of every subject in a diagrams CSV.
    Surface {
        diagrams: PathBuf,
        #[arg(long)]
        sigma: f64,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
        dims: Vec<usize>,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long)]
        resolution: Option<usize>,
        #[arg(long)]
        pad: Option<f64>,
        #[arg(long)]
        max_resolution: Option<usize>,
    },
    /// Tune, fit and stratify a cohort.
    Fit(FitArgs),
    /// Score new subjects with a saved model.
    Predict {
        #[arg(long)]
        model: PathBuf,
        /// Directory of label volumes.
        #[arg(long, conflicts_with = "diagrams")]
        volumes: Option<PathBuf>,
        /// Diagrams CSV.
        #[arg(long)]
        diagrams: Option<PathBuf>,
        /// Clinical CSV; time and event may be empty.
        #[arg(long)]
        clinical: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Run the simulation study.
    Simulate(SimArgs),
    /// Kaplan-Meier curves and log-rank test for a risk grouping.
    Km {
        #[arg(long)]
        clinical: PathBuf,
        /// CSV with `subject_id,eta,group`.
        #[arg(long)]
        risks: PathBuf,
        /// Output directory.
        #[arg(short, long)]
        output: PathBuf,
    },
}

#[derive(Args)]
struct FitArgs {
    /// TOML config file; flags override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override any config key, e.g. `--set tuning.folds=5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    volumes: Option<PathBuf>,
    #[arg(long)]
    diagrams: Option<PathBuf>,
    #[arg(long)]
    clinical: Option<PathBuf>,
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    construction: Option<ConstructionArg>,
    #[arg(long, value_delimiter = ',')]
    dims: Option<Vec<i64>>,
    /// Clinical covariates only.
    #[arg(long)]
    no_topology: bool,
    /// Also write tuning.csv.
    #[arg(long)]
    tuning_csv: bool,
    #[arg(long, value_delimiter = ',')]
    sigmas: Option<Vec<f64>>,
    /// `full` (cartesian over dimensions) or `shared`.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    folds: Option<i64>,
    #[arg(long)]
    path_len: Option<i64>,
    #[arg(long)]
    path_ratio: Option<f64>,
    #[arg(long)]
    resolution: Option<i64>,
    #[arg(long)]
    pad: Option<f64>,
    #[arg(long)]
    max_resolution: Option<i64>,
}

#[derive(Args)]
struct SimArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory.
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    datasets: Option<i64>,
    #[arg(long)]
    n: Option<i64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    censoring: Option<f64>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    folds: Option<i64>,
}

/// Sets a dotted key, creating intermediate tables.
fn set_key(table: &mut Table, key: &str, value: Value) -> Result<(), Error> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|k| !k.is_empty()).ok_or_else(|| bad_override(key))?;
    let mut t = table;
    for p in parts {
        let entry = t.entry(p.to_string()).or_insert_with(|| Value::Table(Table::new()));
        t = entry.as_table_mut().ok_or_else(|| bad_override(key))?;
    }
    t.insert(last.to_string(), value);
    Ok(())
}

fn bad_override(key: &str) -> Error {
    Error::Invalid(format!("cannot override config key {key:?}"))
}

/// `KEY=VALUE` where VALUE is a TOML literal, or a bare string.
fn apply_set(table: &mut Table, assignments: &[String]) -> Result<(), Error> {
    for a in assignments {
        let (k, v) = a
            .split_once('=')
            .ok_or_else(|| Error::Invalid(format!("expected KEY=VALUE, got {a:?}")))?;
        let value = toml::from_str::<Table>(&format!("v = {v}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| Value::String(v.to_string()));
        set_key(table, k.trim(), value)?;
    }
    Ok(())
}

fn load_table(path: Option<&Path>, path_keys: &[&str]) -> Result<Table, Error> {
    let Some(path) = path else {
        return Ok(Table::new());
    };
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut table: Table = pipeline::parse_config(&text, "config")?;
    let base = path.parent().unwrap_or(Path::new("."));
    for key in path_keys {
        if let Some(Value::String(s)) = table.get(*key) {
            if Path::new(s).is_relative() {
                let joined = base.join(s).to_string_lossy().into_owned();
                table.insert(key.to_string(), Value::String(joined));
            }
        }
    }
    Ok(table)
}

fn path_value(p: &Path) -> Value {
    Value::String(p.to_string_lossy().into_owned())
}

fn floats(v: &[f64]) -> Value {
    Value::Array(v.iter().map(|&x| Value::Float(x)).collect())
}

fn fit_config(args: &FitArgs) -> Result<PipelineConfig, Error> {
    let mut t = load_table(args.config.as_deref(), &["volumes", "diagrams", "clinical", "output"])?;
    apply_set(&mut t, &args.set)?;
    let mut put = |k: &str, v: Option<Value>| match v {
        Some(v) => set_key(&mut t, k, v),
        None => Ok(()),
    };
    put("volumes", args.volumes.as_deref().map(path_value))?;
    put("diagrams", args.diagrams.as_deref().map(path_value))?;
    put("clinical", args.clinical.as_deref().map(path_value))?;
    put("output", args.output.as_deref().map(path_value))?;
    put("seed", args.seed.map(|s| Value::Integer(s as i64)))?;
    put(
        "construction",
        args.construction.map(|c| Value::String(if matches!(c, ConstructionArg::V) { "V" } else { "T" }.into())),
    )?;
    put("dims", args.dims.as_ref().map(|d| Value::Array(d.iter().map(|&x| Value::Integer(x)).collect())))?;
    put("no_topology", args.no_topology.then_some(Value::Boolean(true)))?;
    put("tuning_csv", args.tuning_csv.then_some(Value::Boolean(true)))?;
    put("tuning.sigmas", args.sigmas.as_deref().map(floats))?;
    put("tuning.mode", args.mode.clone().map(Value::String))?;
    put("tuning.threshold", args.threshold.map(Value::Float))?;
    put("tuning.folds", args.folds.map(Value::Integer))?;
    put("tuning.path_len", args.path_len.map(Value::Integer))?;
    put("tuning.path_ratio", args.path_ratio.map(Value::Float))?;
    put("surface.resolution", args.resolution.map(Value::Integer))?;
    put("surface.pad", args.pad.map(Value::Float))?;
    put("surface.max_resolution", args.max_resolution.map(Value::Integer))?;
    into_config(t)
}

fn sim_config(args: &SimArgs) -> Result<SimConfig, Error> {
    let mut t = load_table(args.config.as_deref(), &[])?;
    apply_set(&mut t, &args.set)?;
    let mut put = |k: &str, v: Option<Value>| match v {
        Some(v) => set_key(&mut t, k, v),
        None => Ok(()),
    };
    put("seed", args.seed.map(|s| Value::Integer(s as i64)))?;
    put("datasets", args.datasets.map(Value::Integer))?;
    put("n", args.n.map(Value::Integer))?;
    put("sigma", args.sigma.map(Value::Float))?;
    put("censoring", args.censoring.map(Value::Float))?;
    put("threshold", args.threshold.map(Value::Float))?;
    put("cv.folds", args.folds.map(Value::Integer))?;
    if !t.contains_key("seed") {
        return Err(Error::Invalid("a seed is required".into()));
    }
    let cfg: SimConfig = into_config(t)?;
    cfg.validate()?;
    Ok(cfg)
}

fn into_config<T: serde::de::DeserializeOwned>(t: Table) -> Result<T, Error> {
    Value::Table(t).try_into().map_err(|e: toml::de::Error| Error::Format {
        format: "config",
        message: e.to_string(),
    })
}

fn init_pool(workers: usize) {
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(workers).build_global() {
        log::warn!("worker pool already initialized: {e}");
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    let workers = cli.workers;
    match cli.command {
        Command::Sedt { volume, output } => {
            init_pool(workers.unwrap_or(0));
            pipeline::cmd_sedt(&volume, &output)
        }
        Command::Ph {
            volume,
            output,
            raw,
            construction,
        } => {
            init_pool(workers.unwrap_or(0));
            pipeline::cmd_ph(&volume, &output, construction.into(), raw).map(|_| ())
        }
        Command::Surface {
            diagrams,
            sigma,
            dims,
            output,
            resolution,
            pad,
            max_resolution,
        } => {
            init_pool(workers.unwrap_or(0));
            let d = GridSpec::default();
            let spec = GridSpec {
                resolution: resolution.unwrap_or(d.resolution),
                pad: pad.unwrap_or(d.pad),
                max_resolution: max_resolution.unwrap_or(d.max_resolution),
            };
            pipeline::cmd_surface(&diagrams, sigma, &dims, &spec, &output)
        }
        Command::Fit(args) => {
            let cfg = fit_config(&args)?;
            init_pool(workers.unwrap_or(cfg.workers));
            let summary = pipeline::cmd_fit(&cfg)?;
            println!("{}", serde_json::to_string(&summary).expect("summary serializes"));
            Ok(())
        }
        Command::Predict {
            model,
            volumes,
            diagrams,
            clinical,
            output,
        } => {
            init_pool(workers.unwrap_or(0));
            let mf = pipeline::ModelFile::load(&model)?;
            let shapes = match (volumes, diagrams) {
                (Some(v), _) => Some(pipeline::load_volume_diagrams(&v, mf.construction)?),
                (None, Some(d)) => Some(pipeline::load_diagrams_csv(&d)?),
                (None, None) if mf.model.dims.is_empty() => None,
                (None, None) => return Err(Error::Invalid("the model needs --volumes or --diagrams".into())),
            };
            pipeline::cmd_predict(&model, shapes.as_deref(), &clinical, &output).map(|_| ())
        }
        Command::Simulate(args) => {
            let cfg = sim_config(&args)?;
            init_pool(workers.unwrap_or(0));
            let report = pipeline::cmd_simulate(&cfg, &args.output)?;
            println!(
                "{}",
                serde_json::json!({
                    "datasets": report.datasets.len(),
                    "fraction_significant": report.fraction_significant,
                    "fraction_ordered": report.fraction_ordered,
                    "region_effects": report.region_effects,
                })
            );
            Ok(())
        }
        Command::Km {
            clinical,
            risks,
            output,
        } => {
            let lr = pipeline::cmd_km(&clinical, &risks, &output)?;
            println!("{}", serde_json::to_string(&lr).expect("log-rank serializes"));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let report = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{report}");
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
    }
}
