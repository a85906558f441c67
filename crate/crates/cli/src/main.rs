use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use conntree::generate::{
    gen_degree_sequence, gen_instance, instance_rng, GenConfig, InstanceKind,
};
use conntree::graph::{DegreeSequence, FlowMatrix};
use conntree::heuristics::gap_report;
use conntree::io::{self, ColumnSpec, ResultFormat, ResultRow};
use conntree::lb::{maximize_lb, LBCertificate, SolverConfig};
use conntree::validate::{self, SuiteReport, SuiteSizes};

#[derive(Parser)]
#[command(
    name = "conntree",
    version,
    about = "Lower bounds and heuristics for optimal connecting trees"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a flow matrix and degree sequence.
    Gen(GenArgs),
    /// Compute a lower-bound certificate.
    Lb(LbArgs),
    /// Build the heuristic trees and the gap report.
    Heur(HeurArgs),
    /// Run heuristics and bounds over a grid of generated instances or a directory of OD files.
    Bench(BenchArgs),
    /// Run the property suites.
    Validate(ValidateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    RankOne,
    Random,
}

impl From<Kind> for InstanceKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::RankOne => InstanceKind::RankOne,
            Kind::Random => InstanceKind::Random,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl Format {
    fn result_format(self) -> ResultFormat {
        match self {
            Format::Csv => ResultFormat::Csv,
            Format::Json => ResultFormat::Json,
        }
    }

    fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

#[derive(Args)]
struct SeedArg {
    /// Master seed; falls back to CONNTREE_SEED.
    #[arg(long, env = "CONNTREE_SEED", default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SolverArgs {
    /// Relative improvement below which the alternation stops.
    #[arg(long)]
    delta: Option<f64>,
    /// Feasibility tolerance of the conic subproblems.
    #[arg(long)]
    tol_feas: Option<f64>,
    /// Maximum constraint-generation rounds.
    #[arg(long)]
    max_cg: Option<usize>,
    /// Maximum linearize/adjust rounds per relaxed solve.
    #[arg(long)]
    max_mmad: Option<usize>,
}

impl SolverArgs {
    fn config(&self) -> Result<SolverConfig, Failure> {
        let mut cfg = SolverConfig::default();
        if let Some(v) = self.delta {
            cfg.delta = v;
        }
        if let Some(v) = self.tol_feas {
            cfg.backend.tol_feas = v;
        }
        if let Some(v) = self.max_cg {
            cfg.max_cg_rounds = v;
        }
        if let Some(v) = self.max_mmad {
            cfg.max_mmad_rounds = v;
        }
        cfg.validate().usage()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct OutputArgs {
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Also emit every row with costs divided by n^2 ln n.
    #[arg(long)]
    normalize: bool,
}

impl OutputArgs {
    fn rows(&self, raw: Vec<ResultRow>) -> Vec<ResultRow> {
        if !self.normalize {
            return raw;
        }
        raw.into_iter()
            .flat_map(|r| {
                let scaled = r.normalized();
                [r, scaled]
            })
            .collect()
    }
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum)]
    kind: Kind,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[command(flatten)]
    seed: SeedArg,
    /// Writes `<out>.matrix` and `<out>.degrees`.
    #[arg(long)]
    out: PathBuf,
}

/// A flow matrix file with a degree file, or an OD table whose degrees are
/// read from `--degrees` or drawn from the seed.
#[derive(Args)]
struct InputArgs {
    #[arg(long, conflicts_with = "od", required_unless_present = "od")]
    matrix: Option<PathBuf>,
    #[arg(long)]
    degrees: Option<PathBuf>,
    #[arg(long)]
    od: Option<PathBuf>,
    #[arg(long, default_value = "origin")]
    origin_col: String,
    #[arg(long, default_value = "destination")]
    destination_col: String,
    #[arg(long, default_value = "flow")]
    flow_col: String,
    #[arg(long, default_value_t = ',')]
    delimiter: char,
}

struct Instance {
    name: String,
    a: FlowMatrix,
    d: DegreeSequence,
}

impl InputArgs {
    fn column_spec(&self) -> Result<ColumnSpec, Failure> {
        let delimiter = u8::try_from(self.delimiter)
            .map_err(|_| Failure::Usage(anyhow!("delimiter must be ASCII")))?;
        Ok(ColumnSpec {
            origin: self.origin_col.clone(),
            destination: self.destination_col.clone(),
            flow: self.flow_col.clone(),
            delimiter,
        })
    }

    fn load(&self, seed: u64) -> Result<Instance, Failure> {
        let (path, a) = match (&self.matrix, &self.od) {
            (Some(m), _) => (
                m,
                io::load_matrix(m)
                    .with_context(|| format!("reading {}", m.display()))
                    .usage()?,
            ),
            (None, Some(od)) => {
                let m = io::load_od_csv(od, &self.column_spec()?)
                    .with_context(|| format!("reading {}", od.display()))
                    .usage()?;
                (od, m.flows)
            }
            (None, None) => {
                return Err(Failure::Usage(anyhow!(
                    "either --matrix or --od is required"
                )))
            }
        };
        let d = match &self.degrees {
            Some(p) => io::load_degrees(p)
                .with_context(|| format!("reading {}", p.display()))
                .usage()?,
            None if self.od.is_some() => gen_degree_sequence(a.n(), &mut instance_rng(seed, 0)),
            None => {
                return Err(Failure::Usage(anyhow!(
                    "--degrees is required with --matrix"
                )))
            }
        };
        if d.len() != a.n() {
            return Err(Failure::Usage(anyhow!(
                "matrix has {} vertices but the degree sequence has {}",
                a.n(),
                d.len()
            )));
        }
        Ok(Instance {
            name: stem(path),
            a,
            d,
        })
    }
}

#[derive(Args)]
struct LbArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    seed: SeedArg,
    /// Certificate JSON.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct HeurArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    seed: SeedArg,
    #[command(flatten)]
    output: OutputArgs,
    /// Random trees averaged into C_avg.
    #[arg(long, default_value_t = 1000)]
    n_random: usize,
    /// Row label; defaults to the input file stem.
    #[arg(long)]
    dataset: Option<String>,
    /// Receives heur1.edges, heur2.edges, bfs.edges, certificate.json and results.<format>.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_enum, default_value = "random", conflicts_with = "od_dir")]
    kind: Kind,
    #[arg(long, value_delimiter = ',', default_values_t = [50])]
    n: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [1.0])]
    beta: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [1.0])]
    sigma: Vec<f64>,
    /// Instances per grid cell.
    #[arg(long, default_value_t = 20)]
    instances: usize,
    /// Every `*.csv` OD table in this directory instead of a generated grid.
    #[arg(long)]
    od_dir: Option<PathBuf>,
    #[arg(long, default_value = "origin")]
    origin_col: String,
    #[arg(long, default_value = "destination")]
    destination_col: String,
    #[arg(long, default_value = "flow")]
    flow_col: String,
    #[arg(long, default_value_t = 1000)]
    n_random: usize,
    /// Instances solved concurrently; each solve is sequential.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[command(flatten)]
    seed: SeedArg,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    output: OutputArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long, default_value_t = 1)]
    first_seed: u64,
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    /// Certificate to check against `--matrix`.
    #[arg(long, requires = "matrix")]
    certificate: Option<PathBuf>,
    #[arg(long)]
    matrix: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverArgs,
}

/// Exit 2 for bad input or usage, 1 when a solve or property fails.
#[derive(Debug)]
enum Failure {
    Usage(anyhow::Error),
    Solve(anyhow::Error),
}

trait Classify<T> {
    fn usage(self) -> Result<T, Failure>;
    fn solve(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn usage(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Usage(e.into()))
    }

    fn solve(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Solve(e.into()))
    }
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map_or_else(|| "instance".into(), |s| s.to_string_lossy().into_owned())
}

fn with_extension(prefix: &Path, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents)
        .with_context(|| format!("writing {}", path.display()))
        .usage()
}

fn cmd_gen(args: &GenArgs) -> Result<(), Failure> {
    let cfg = GenConfig::new(args.n, args.beta, args.sigma, args.seed.seed).usage()?;
    let (a, d) = gen_instance(args.kind.into(), &cfg, &mut cfg.rng()).usage()?;
    let matrix = with_extension(&args.out, "matrix");
    let degrees = with_extension(&args.out, "degrees");
    io::save_matrix(&matrix, &a).usage()?;
    io::save_degrees(&degrees, &d).usage()?;
    println!("{}", matrix.display());
    println!("{}", degrees.display());
    Ok(())
}

fn print_certificate(cert: &LBCertificate) {
    let it = &cert.iterations;
    println!("lb {}", cert.lb);
    println!("converged {}", cert.converged);
    println!("cg_rounds {}", it.cg_rounds);
    println!("mmad_rounds {}", it.mmad_rounds);
    println!("backend_iterations {}", it.backend_iterations);
    for note in &cert.notes {
        eprintln!("note: {note}");
    }
    if !cert.converged {
        eprintln!("warning: the search stopped early; the bound is valid but may not be the best attainable");
    }
}

fn cmd_lb(args: &LbArgs) -> Result<(), Failure> {
    let cfg = args.solver.config()?;
    let inst = args.input.load(args.seed.seed)?;
    let cert = maximize_lb(&inst.a, &inst.d, &cfg).solve()?;
    write_file(&args.out, &cert.to_json().solve()?)?;
    print_certificate(&cert);
    Ok(())
}

fn cmd_heur(args: &HeurArgs) -> Result<(), Failure> {
    let cfg = args.solver.config()?;
    let inst = args.input.load(args.seed.seed)?;
    let report = gap_report(&inst.a, &inst.d, &cfg, args.n_random, args.seed.seed).solve()?;
    fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))
        .usage()?;
    for (name, tree) in [
        ("heur1", &report.heuristic1),
        ("heur2", &report.heuristic2),
        ("bfs", &report.bfs),
    ] {
        write_file(
            &args.out_dir.join(format!("{name}.edges")),
            &tree.to_edge_list(),
        )?;
    }
    write_file(
        &args.out_dir.join("certificate.json"),
        &report.certificate.to_json().solve()?,
    )?;
    let name = args.dataset.clone().unwrap_or(inst.name);
    let rows = args
        .output
        .rows(vec![ResultRow::from_report(name, &report)]);
    let format = args.output.format;
    let path = args.out_dir.join(format!("results.{}", format.extension()));
    io::write_results(&rows, &path, format.result_format()).usage()?;
    io::results_to_writer(&rows, std::io::stdout().lock(), format.result_format()).usage()?;
    Ok(())
}

/// How one bench instance is obtained.
enum Source {
    Generated { kind: InstanceKind, cfg: GenConfig },
    Od(PathBuf),
}

struct Job {
    name: String,
    source: Source,
    /// Seeds the instance generator and the random trees behind C_avg.
    index: u64,
}

fn bench_jobs(args: &BenchArgs) -> Result<Vec<Job>, Failure> {
    let master = args.seed.seed;
    let mut jobs = Vec::new();
    if let Some(dir) = &args.od_dir {
        let mut files: Vec<PathBuf> = fs::read_dir(dir)
            .with_context(|| format!("reading {}", dir.display()))
            .usage()?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("csv")))
            .collect();
        files.sort();
        if files.is_empty() {
            return Err(Failure::Usage(anyhow!(
                "no .csv files in {}",
                dir.display()
            )));
        }
        for (i, f) in files.into_iter().enumerate() {
            jobs.push(Job {
                name: stem(&f),
                source: Source::Od(f),
                index: i as u64,
            });
        }
        return Ok(jobs);
    }
    let kind: InstanceKind = args.kind.into();
    let label = match kind {
        InstanceKind::RankOne => "rank-one",
        InstanceKind::Random => "random",
    };
    let sigmas: &[f64] = if kind == InstanceKind::RankOne {
        &[1.0]
    } else {
        &args.sigma
    };
    for &n in &args.n {
        for &beta in &args.beta {
            for &sigma in sigmas {
                for i in 0..args.instances {
                    let cfg = GenConfig::new(n, beta, sigma, master).usage()?;
                    jobs.push(Job {
                        name: format!("{label}-n{n}-b{beta}-s{sigma}-i{i}"),
                        source: Source::Generated { kind, cfg },
                        index: jobs.len() as u64,
                    });
                }
            }
        }
    }
    Ok(jobs)
}

fn bench_one(
    job: &Job,
    args: &BenchArgs,
    spec: &ColumnSpec,
    cfg: &SolverConfig,
) -> anyhow::Result<ResultRow> {
    let master = args.seed.seed;
    let mut rng = instance_rng(master, job.index);
    let (a, d) = match &job.source {
        Source::Generated { kind, cfg } => gen_instance(*kind, cfg, &mut rng)?,
        Source::Od(path) => {
            let flows = io::load_od_csv(path, spec)?.flows;
            let degrees = path.with_extension("degrees");
            let d = if degrees.exists() {
                io::load_degrees(&degrees)?
            } else {
                gen_degree_sequence(flows.n(), &mut rng)
            };
            (flows, d)
        }
    };
    let report = gap_report(
        &a,
        &d,
        cfg,
        args.n_random,
        master ^ job.index.rotate_left(32),
    )?;
    if !report.certificate.converged {
        log::warn!("{}: lower-bound search stopped early", job.name);
    }
    Ok(ResultRow::from_report(job.name.clone(), &report))
}

fn cmd_bench(args: &BenchArgs) -> Result<(), Failure> {
    let cfg = args.solver.config()?;
    if args.workers == 0 {
        return Err(Failure::Usage(anyhow!("--workers must be at least 1")));
    }
    let spec = ColumnSpec {
        origin: args.origin_col.clone(),
        destination: args.destination_col.clone(),
        flow: args.flow_col.clone(),
        ..ColumnSpec::default()
    };
    let jobs = bench_jobs(args)?;
    let next = AtomicUsize::new(0);
    let done = Mutex::new(Vec::with_capacity(jobs.len()));
    std::thread::scope(|s| {
        for _ in 0..args.workers.min(jobs.len()) {
            s.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                let Some(job) = jobs.get(k) else { break };
                let result = bench_one(job, args, &spec, &cfg);
                if let Err(e) = &result {
                    eprintln!("{}: failed: {e:#}", job.name);
                }
                done.lock()
                    .expect("no worker panics while holding the lock")
                    .push((k, result));
            });
        }
    });
    let mut done = done.into_inner().expect("workers joined");
    done.sort_by_key(|(k, _)| *k);
    let mut rows = Vec::new();
    let mut failed = Vec::new();
    for (k, result) in done {
        match result {
            Ok(row) => rows.push(row),
            Err(_) => failed.push(jobs[k].name.as_str()),
        }
    }
    let rows = args.output.rows(rows);
    io::write_results(&rows, &args.out, args.output.format.result_format()).usage()?;
    println!(
        "{} instances, {} failed, results in {}",
        jobs.len(),
        failed.len(),
        args.out.display()
    );
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Solve(anyhow!(
            "failed instances: {}",
            failed.join(", ")
        )))
    }
}

fn cmd_validate(args: &ValidateArgs) -> Result<(), Failure> {
    let cfg = args.solver.config()?;
    let seeds: Vec<u64> = (args.first_seed..args.first_seed.saturating_add(args.seeds)).collect();
    let mut reports = validate::run_all(&seeds, SuiteSizes::default(), &cfg).usage()?;
    if let (Some(cert_path), Some(matrix)) = (&args.certificate, &args.matrix) {
        let text = fs::read_to_string(cert_path)
            .with_context(|| format!("reading {}", cert_path.display()))
            .usage()?;
        let cert = LBCertificate::from_json(&text).usage()?;
        let a = io::load_matrix(matrix).usage()?;
        if a.n() != cert.n {
            return Err(Failure::Usage(anyhow!(
                "certificate has n = {} but the matrix has {}",
                cert.n,
                a.n()
            )));
        }
        let soundness = reports
            .iter_mut()
            .find(|r| r.name == "lb_soundness")
            .expect("run_all includes the soundness suite");
        validate::check_certificate(soundness, &cert, &a, args.first_seed);
    }
    let failing: Vec<&SuiteReport> = reports.iter().filter(|r| !r.passed()).collect();
    for r in &reports {
        let verdict = if r.passed() { "PASS" } else { "FAIL" };
        println!("{verdict} {} ({} checks)", r.name, r.checks);
        for f in &r.failures {
            println!("  {f}");
        }
    }
    if failing.is_empty() {
        Ok(())
    } else {
        let names: Vec<&str> = failing.iter().map(|r| r.name).collect();
        Err(Failure::Solve(anyhow!(
            "failing suites: {}",
            names.join(", ")
        )))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Lb(a) => cmd_lb(a),
        Command::Heur(a) => cmd_heur(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Validate(a) => cmd_validate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Solve(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
