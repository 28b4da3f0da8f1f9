//! Command-line driver: `ingest`, `sketch`, `recommend` and `eval`.
//!
//! Exit codes: 0 success, 2 malformed input, 3 bad configuration, 4 a domain
//! failure (empty row, no signal, exhausted rejection budget), 5 missing
//! input.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Error;
use crate::modfkv::{densify_description, modfkv, LowRankDescription, ModFkvParams, DEFAULT_Q_CAP, DENSIFY_LIMIT};
use crate::recommender::{EvalConfig, InstanceSpec, Pipeline, PipelineConfig, SampleLog};
use crate::sampler::{RowSampler, SamplerConfig};
use crate::store::{parse_triples, read_snapshot, write_snapshot, SampleMatrix};

/// Environment variable overriding the sketch size cap.
pub const CAP_ENV: &str = "SKETCHREC_CAP";

#[derive(Debug, Parser)]
#[command(name = "sketchrec", version, about = "Sublinear low-rank recommendation sampling")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load `i,j,value` triples (1-based) into a binary snapshot.
    Ingest {
        triples: PathBuf,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sketch a snapshot into a low-rank description.
    Sketch {
        snapshot: PathBuf,
        #[arg(long)]
        sigma: f64,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        eta: f64,
        #[arg(long)]
        q: Option<usize>,
        #[command(flatten)]
        seed: SeedArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print `count` recommended columns (1-based) for a user.
    Recommend {
        snapshot: PathBuf,
        description: PathBuf,
        /// 1-based row index.
        #[arg(long)]
        user: usize,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        delta: Option<f64>,
        #[command(flatten)]
        seed: SeedArgs,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Generate a planted instance, recommend for every user and score the
    /// result against the hidden matrix.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// TOML instance file.
    pub spec: PathBuf,
    #[arg(long)]
    pub eps: f64,
    /// Overrides the instance file's rank bound.
    #[arg(long)]
    pub k: Option<usize>,
    /// Overrides the instance file's sampling probability.
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub q: Option<usize>,
    #[command(flatten)]
    pub seed: SeedArgs,
    /// Recommendations per user.
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    #[arg(long, default_value_t = 0.1)]
    pub zeta: f64,
    #[arg(long, default_value_t = 0.1)]
    pub psi: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct SeedArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    /// Seed from the clock instead; runs are then not reproducible.
    #[arg(long)]
    pub wall_clock_seed: bool,
}

impl SeedArgs {
    pub fn resolve(&self) -> u64 {
        self.seed.unwrap_or_else(|| {
            std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_nanos() as u64).unwrap_or(0)
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

/// A failure with the exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Parse { .. } | Error::Format(_) => 2,
            Error::InvalidParameter { .. } | Error::SketchTooLarge { .. } => 3,
            Error::Io(_) => 5,
            _ => 4,
        };
        CliError { code, message: e.to_string() }
    }
}

fn config(message: String) -> CliError {
    CliError { code: 3, message }
}

fn require(path: &Path) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError { code: 5, message: format!("missing input: {}", path.display()) })
    }
}

fn cap() -> Result<usize, CliError> {
    match std::env::var(CAP_ENV) {
        Ok(v) => v.trim().parse().map_err(|_| config(format!("{CAP_ENV} must be a positive integer, got `{v}`"))),
        Err(_) => Ok(DEFAULT_Q_CAP),
    }
}

fn check_eps(eps: f64) -> Result<(), CliError> {
    if eps > 0.0 && eps <= 1.0 {
        Ok(())
    } else {
        Err(config(format!("--eps must lie in (0, 1], got {eps}")))
    }
}

fn check_user(user: usize, m: usize) -> Result<usize, CliError> {
    if user == 0 || user > m {
        return Err(config(format!("--user must lie in 1..={m}, got {user}")));
    }
    Ok(user - 1)
}

fn load_snapshot(path: &Path) -> Result<SampleMatrix, CliError> {
    require(path)?;
    Ok(read_snapshot(BufReader::new(File::open(path).map_err(Error::from)?))?)
}

fn load_description(path: &Path) -> Result<LowRankDescription, CliError> {
    require(path)?;
    Ok(LowRankDescription::read_from(BufReader::new(File::open(path).map_err(Error::from)?))?)
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    Ok(BufWriter::new(File::create(path).map_err(Error::from)?))
}

/// Runs a parsed command, writing results to `stdout` and diagnostics to
/// `stderr`.
pub fn run<W: Write, E: Write>(cli: Cli, stdout: &mut W, stderr: &mut E) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::from(Error::from(e));
    match cli.command {
        Command::Ingest { triples, m, n, out } => {
            if m == 0 || n == 0 {
                return Err(config("--m and --n must be positive".into()));
            }
            require(&triples)?;
            let file = File::open(&triples).map_err(io)?;
            let t = parse_triples(BufReader::new(file), m, n)?;
            let a = SampleMatrix::from_triples(m, n, &t)?;
            let mut w = create(&out)?;
            write_snapshot(&a, &mut w)?;
            writeln!(stdout, "nnz={} frob={}", a.nnz(), a.frob()).map_err(io)?;
        }
        Command::Sketch { snapshot, sigma, eps, eta, q, seed, out } => {
            let mut params = ModFkvParams::new(sigma, eps, eta).with_seed(seed.resolve()).with_cap(cap()?);
            params.q_override = q;
            let a = load_snapshot(&snapshot)?;
            for w in params.plan(a.frob())?.warnings {
                writeln!(stderr, "warning: {w}").map_err(io)?;
            }
            let desc = modfkv(&a, &params)?;
            desc.write_to(create(&out)?)?;
            let sv: Vec<String> = desc.sigma_hat.iter().map(|s| s.to_string()).collect();
            writeln!(stdout, "q={} k={} sigma_hat=[{}]", desc.q(), desc.k(), sv.join(",")).map_err(io)?;
        }
        Command::Recommend { snapshot, description, user, count, eps, delta, seed, format } => {
            check_eps(eps)?;
            if let Some(d) = delta {
                if !(d > 0.0 && d < 1.0) {
                    return Err(config(format!("--delta must lie in (0, 1), got {d}")));
                }
            }
            let a = load_snapshot(&snapshot)?;
            let desc = load_description(&description)?;
            let i = check_user(user, a.nrows())?;
            let mut picks = Vec::with_capacity(count);
            if count > 0 {
                let mut cfg = SamplerConfig::new(eps);
                cfg.delta = delta;
                let sampler = RowSampler::new(&desc, &a, cfg)?;
                let mut rng = ChaCha8Rng::seed_from_u64(seed.resolve());
                for _ in 0..count {
                    picks.push(sampler.sample(i, &mut rng)?.index + 1);
                }
            }
            match format {
                Format::Csv => {
                    for j in picks {
                        writeln!(stdout, "{j}").map_err(io)?;
                    }
                }
                Format::Json => {
                    writeln!(stdout, "{}", serde_json::to_string(&picks).expect("indices serialize")).map_err(io)?
                }
            }
        }
        Command::Eval(args) => eval(args, stdout, stderr)?,
    }
    Ok(())
}

fn eval<W: Write, E: Write>(args: EvalArgs, stdout: &mut W, stderr: &mut E) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::from(Error::from(e));
    check_eps(args.eps)?;
    if !(args.gamma > 0.0 && (0.0..1.0).contains(&args.zeta) && args.psi > 0.0 && args.psi < 1.0 - args.zeta) {
        return Err(config("need gamma > 0, zeta in [0, 1) and psi in (0, 1 - zeta)".into()));
    }
    require(&args.spec)?;
    let mut spec = InstanceSpec::load(&args.spec)?;
    if let Some(k) = args.k {
        spec.k = k;
    }
    if let Some(p) = args.p {
        spec.p = p;
    }
    spec.validate()?;
    if let Some(t) = &spec.t_path {
        require(Path::new(t))?;
    }
    let seed = args.seed.resolve();
    let instance = spec.instance()?;

    let mut cfg = PipelineConfig::new(args.eps, seed);
    cfg.q = args.q.or(spec.q);
    cfg.cap = cap()?;
    let pipeline = Pipeline::build(&instance.a, instance.k, instance.p, &cfg)?;
    for w in &pipeline.parameters().warnings {
        writeln!(stderr, "warning: {w}").map_err(io)?;
    }
    let users: Vec<usize> =
        (0..instance.m()).filter(|&i| instance.a.row_norm(i).map(|r| r > 0.0).unwrap_or(false)).collect();
    let reconstruction = if instance.m() * instance.n() <= DENSIFY_LIMIT {
        Some(densify_description(pipeline.description(), &instance.a.to_dense())?)
    } else {
        None
    };
    let log = SampleLog { users: pipeline.sample_users(&users, args.samples, seed)?, reconstruction };
    let eval_cfg = EvalConfig { gamma: args.gamma, zeta: args.zeta, psi: args.psi, ..EvalConfig::default() };
    let report = crate::recommender::evaluate(&instance.t, &log, &eval_cfg)?;
    let body = match args.format {
        Format::Csv => report.to_csv(),
        Format::Json => report.to_json() + "\n",
    };
    match &args.out {
        Some(path) => create(path)?.write_all(body.as_bytes()).map_err(io)?,
        None => stdout.write_all(body.as_bytes()).map_err(io)?,
    }
    Ok(())
}

/// Parses `std::env::args`, runs, and maps failures to exit codes.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    match run(cli, &mut stdout.lock(), &mut stderr.lock()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
