//! `sandlab`: command-line driver for sandpile experiments.
//!
//! Exit codes: 0 success, 1 usage error, 2 precondition violation (including
//! failed verification and unwritable outputs), 3 resource limit.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sandlab_core::engine::{self, Configuration, ConfigurationJson, StabilizationResult, TclWitness, TopplingPolicy};
use sandlab_core::epicenter;
use sandlab_core::estimators::{self, EstimateParams, Property};
use sandlab_core::graph::{gen_family, Family, FamilyKind, GraphJson, SandpileGraph, VertexId};
use sandlab_core::potential::{self, PotentialSolver};
use sandlab_core::SandlabError;
use serde_json::{json, Value};

const STATE_LIMIT_ENV: &str = "SANDLAB_STATE_LIMIT";

#[derive(Parser)]
#[command(name = "sandlab", version, about = "Abelian sandpile laboratory")]
struct Cli {
    /// Write a JSON summary {command, seed, wall_time, results} to this path.
    #[arg(long, global = true)]
    summary: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a family member as graph JSON.
    Gen(GenArgs),
    /// Stabilize a configuration and report (sigma, z).
    Stabilize(StabilizeArgs),
    /// Transience class length, exact or from a single site.
    Tcl {
        #[command(subcommand)]
        mode: TclCommand,
    },
    /// Harmonic potential pi_w as vertex,value CSV.
    Potentials(PotentialsArgs),
    /// Estimate a structural property over a graph family (CSV).
    Estimate(EstimateArgs),
    /// Minimum particles at a site that flood a target set.
    Flood(FloodArgs),
    /// Run epicenter propagation and write the flood trace JSON.
    Epicenter(EpicenterArgs),
    /// Check the toppling identity and potential laws on a graph.
    Verify(VerifyArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyName {
    Grid,
    Line,
    Strip,
}

#[derive(Args)]
struct GenArgs {
    family: FamilyName,
    /// Side length (grid) or number of columns (line, strip).
    #[arg(long)]
    n: usize,
    /// Number of rows of a strip.
    #[arg(long)]
    k: Option<usize>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct GraphArg {
    /// Graph JSON as written by `sandlab gen`.
    #[arg(long)]
    graph: PathBuf,
}

#[derive(Args)]
struct StabilizeArgs {
    #[command(flatten)]
    graph: GraphArg,
    /// Configuration JSON {"values": [...]} over ordinary vertices.
    #[arg(long, conflicts_with = "point")]
    config: Option<PathBuf>,
    /// Drop particles on one site, written SITE:COUNT.
    #[arg(long)]
    point: Option<String>,
    /// fifo, lifo or random:SEED.
    #[arg(long, default_value = "fifo")]
    policy: String,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum TclCommand {
    /// Exhaustive search over stable states (small graphs only).
    Exact {
        #[command(flatten)]
        graph: GraphArg,
        /// Cap on stable states; overrides SANDLAB_STATE_LIMIT.
        #[arg(long)]
        limit: Option<u64>,
    },
    /// Particles at one site until every vertex has toppled.
    SingleSite {
        #[command(flatten)]
        graph: GraphArg,
        #[arg(long)]
        site: String,
    },
}

#[derive(Args)]
struct PotentialsArgs {
    #[command(flatten)]
    graph: GraphArg,
    /// Pole vertex w.
    #[arg(long)]
    pole: String,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    property: String,
    #[arg(long)]
    family: FamilyName,
    /// Rows of a strip family.
    #[arg(long)]
    k: Option<usize>,
    /// Comma-separated family sizes.
    #[arg(long, value_delimiter = ',', required = true)]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct FloodArgs {
    #[command(flatten)]
    graph: GraphArg,
    #[arg(long)]
    site: String,
    /// Target sites separated by ';' (default: every ordinary vertex).
    #[arg(long)]
    target: Option<String>,
}

#[derive(Args)]
struct EpicenterArgs {
    #[command(flatten)]
    graph: GraphArg,
    #[arg(long)]
    from: String,
    #[arg(long)]
    to: String,
    /// Drift-length constant l.
    #[arg(long, default_value_t = 0.0)]
    l: f64,
    /// Fall back to a shortest path with maximal eta off the grid family.
    #[arg(long)]
    allow_bfs: bool,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    graph: GraphArg,
    #[arg(long, default_value_t = 100)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Precondition(String),
    Resource(String),
}

impl From<SandlabError> for Failure {
    fn from(e: SandlabError) -> Self {
        if e.is_resource_limit() {
            Failure::Resource(e.to_string())
        } else {
            Failure::Precondition(e.to_string())
        }
    }
}

type Outcome<T> = Result<T, Failure>;

/// What a command produced: the primary artifact text and summary results.
struct Report {
    command: &'static str,
    seed: Option<u64>,
    artifact: String,
    output: Option<PathBuf>,
    results: Value,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let start = Instant::now();
    match run(cli.command).and_then(|report| emit(report, cli.summary.as_deref(), start)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Precondition(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Resource(msg)) => {
            eprintln!("resource limit: {msg}");
            ExitCode::from(3)
        }
    }
}

fn emit(report: Report, summary: Option<&Path>, start: Instant) -> Outcome<()> {
    match &report.output {
        Some(path) => write_file(path, &report.artifact)?,
        None => print!("{}", report.artifact),
    }
    if let Some(path) = summary {
        // serde_json maps are sorted, so key order is stable
        let doc = json!({
            "command": report.command,
            "seed": report.seed,
            "wall_time": start.elapsed().as_secs_f64(),
            "results": report.results,
        });
        write_file(path, &(serde_json::to_string_pretty(&doc).expect("JSON values serialize") + "\n"))?;
    }
    Ok(())
}

fn write_file(path: &Path, text: &str) -> Outcome<()> {
    fs::write(path, text).map_err(|e| Failure::Precondition(format!("cannot write {}: {e}", path.display())))
}

fn run(command: Command) -> Outcome<Report> {
    match command {
        Command::Gen(a) => gen(a),
        Command::Stabilize(a) => stabilize(a),
        Command::Tcl { mode } => tcl(mode),
        Command::Potentials(a) => potentials(a),
        Command::Estimate(a) => estimate(a),
        Command::Flood(a) => flood(a),
        Command::Epicenter(a) => run_epicenter(a),
        Command::Verify(a) => verify(a),
    }
}

fn pretty<T: serde::Serialize>(x: &T) -> String {
    serde_json::to_string_pretty(x).expect("report types serialize") + "\n"
}

fn load_graph(arg: &GraphArg) -> Outcome<SandpileGraph> {
    let text = fs::read_to_string(&arg.graph)
        .map_err(|e| Failure::Precondition(format!("cannot read {}: {e}", arg.graph.display())))?;
    let json: GraphJson = serde_json::from_str(&text)
        .map_err(|e| Failure::Precondition(format!("bad graph JSON in {}: {e}", arg.graph.display())))?;
    Ok(SandpileGraph::from_json(&json)?)
}

/// A site is `x,y` on graphs with coordinates, or a bare vertex id.
fn parse_site(g: &SandpileGraph, text: &str) -> Outcome<VertexId> {
    let text = text.trim();
    let v = if let Some((x, y)) = text.split_once(',') {
        let parse = |s: &str| s.trim().parse::<i64>().map_err(|_| Failure::Usage(format!("bad site '{text}'")));
        let c = (parse(x)?, parse(y)?);
        g.vertex_at(c).ok_or_else(|| Failure::Precondition(format!("no vertex at {},{}", c.0, c.1)))?
    } else {
        text.parse::<VertexId>().map_err(|_| Failure::Usage(format!("bad site '{text}'")))?
    };
    g.check_ordinary(v)?;
    Ok(v)
}

fn family_kind(name: FamilyName, k: Option<usize>) -> Outcome<FamilyKind> {
    match (name, k) {
        (FamilyName::Grid, None) => Ok(FamilyKind::Grid),
        (FamilyName::Line, None) => Ok(FamilyKind::Line),
        (FamilyName::Strip, Some(k)) => Ok(FamilyKind::Strip { k }),
        (FamilyName::Strip, None) => Err(Failure::Usage("strip needs --k".into())),
        (_, Some(_)) => Err(Failure::Usage("--k applies to strips only".into())),
    }
}

fn gen(a: GenArgs) -> Outcome<Report> {
    let family: Family = family_kind(a.family, a.k)?.member(a.n);
    let g = gen_family(family)?;
    let sink_degree: u64 = g.ordinary().map(|v| g.sink_multiplicity(v)).sum();
    Ok(Report {
        command: "gen",
        seed: None,
        artifact: pretty(&g.to_json()),
        output: a.output,
        results: json!({ "family": family, "ordinary_vertices": g.ordinary_count(), "sink_degree": sink_degree }),
    })
}

fn parse_policy(text: &str) -> Outcome<TopplingPolicy> {
    match text {
        "fifo" => Ok(TopplingPolicy::Fifo),
        "lifo" => Ok(TopplingPolicy::Lifo),
        other => other
            .strip_prefix("random:")
            .and_then(|s| s.parse().ok())
            .map(TopplingPolicy::SeededRandom)
            .ok_or_else(|| Failure::Usage(format!("unknown policy '{other}'"))),
    }
}

fn stabilize(a: StabilizeArgs) -> Outcome<Report> {
    let g = load_graph(&a.graph)?;
    let policy = parse_policy(&a.policy)?;
    let c = match (&a.config, &a.point) {
        (Some(path), None) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::Precondition(format!("cannot read {}: {e}", path.display())))?;
            let json: ConfigurationJson =
                serde_json::from_str(&text).map_err(|e| Failure::Precondition(format!("bad configuration JSON: {e}")))?;
            Configuration::from_json(&g, &json)?
        }
        (None, Some(point)) => {
            let (site, count) =
                point.rsplit_once(':').ok_or_else(|| Failure::Usage("--point takes SITE:COUNT".into()))?;
            let count: u64 = count.parse().map_err(|_| Failure::Usage(format!("bad count '{count}'")))?;
            Configuration::point(&g, parse_site(&g, site)?, count)?
        }
        _ => return Err(Failure::Usage("give exactly one of --config or --point".into())),
    };
    let r: StabilizationResult = engine::stabilize(&g, &c, policy)?;
    let json = r.to_json(&g);
    Ok(Report {
        command: "stabilize",
        seed: match policy {
            TopplingPolicy::SeededRandom(s) => Some(s),
            _ => None,
        },
        artifact: pretty(&json),
        output: a.output,
        results: json!({ "topplings_total": json.topplings_total, "sink_absorbed": json.sink_absorbed }),
    })
}

fn state_limit(flag: Option<u64>) -> Outcome<u64> {
    if let Some(limit) = flag {
        return Ok(limit);
    }
    match std::env::var(STATE_LIMIT_ENV) {
        Ok(text) => text.trim().parse().map_err(|_| Failure::Usage(format!("{STATE_LIMIT_ENV} must be an integer"))),
        Err(_) => Ok(engine::DEFAULT_STATE_LIMIT),
    }
}

fn tcl(mode: TclCommand) -> Outcome<Report> {
    let (result, g) = match mode {
        TclCommand::Exact { graph, limit } => {
            let g = load_graph(&graph)?;
            (engine::tcl_exact(&g, state_limit(limit)?)?, g)
        }
        TclCommand::SingleSite { graph, site } => {
            let g = load_graph(&graph)?;
            let v = parse_site(&g, &site)?;
            (engine::tcl_single_site_result(&g, v)?, g)
        }
    };
    let witness = match &result.witness {
        TclWitness::Site(v) => json!({ "site": v, "coord": g.coord(*v).map(|(x, y)| [x, y]) }),
        TclWitness::Additions(sites) => json!({ "additions": sites }),
    };
    Ok(Report {
        command: "tcl",
        seed: None,
        artifact: format!("{}\n", result.value),
        output: None,
        results: json!({ "mode": result.mode, "value": result.value.to_string(), "witness": witness }),
    })
}

fn potentials(a: PotentialsArgs) -> Outcome<Report> {
    let g = load_graph(&a.graph)?;
    let w = parse_site(&g, &a.pole)?;
    let field = potential::solve_potential(&g, w)?;
    Ok(Report {
        command: "potentials",
        seed: None,
        artifact: field.to_csv(),
        output: a.output,
        results: json!({
            "pole": w,
            "residual": field.residual,
            "resistance_to_sink": field.resistance_to_sink,
        }),
    })
}

fn estimate(a: EstimateArgs) -> Outcome<Report> {
    let property = Property::parse(&a.property)
        .ok_or_else(|| Failure::Usage(format!("unknown property '{}' (alpha, hlc, mv, ls, op)", a.property)))?;
    let params = EstimateParams::new(family_kind(a.family, a.k)?, &a.sizes, a.samples, a.seed);
    let report = estimators::estimate(property, &params)?;
    Ok(Report {
        command: "estimate",
        seed: Some(a.seed),
        artifact: report.to_csv(),
        output: a.output,
        results: json!({
            "property": report.property,
            "family": report.family,
            "sizes": report.sizes,
            "samples": report.samples,
            "estimates": report.estimates,
            "checks": report.checks,
            "flags": report.flags,
            "skipped": report.skipped,
            "thin_family": report.thin_family,
            "table": report.table,
        }),
    })
}

fn flood(a: FloodArgs) -> Outcome<Report> {
    let g = load_graph(&a.graph)?;
    let v = parse_site(&g, &a.site)?;
    let target: Vec<VertexId> = match &a.target {
        None => g.ordinary().collect(),
        Some(list) => list.split(';').map(|s| parse_site(&g, s)).collect::<Outcome<_>>()?,
    };
    let count: num_bigint::BigUint = engine::flood_count(&g, v, &target)?;
    Ok(Report {
        command: "flood",
        seed: None,
        artifact: format!("{count}\n"),
        output: None,
        results: json!({ "site": v, "targets": target.len(), "count": count.to_string() }),
    })
}

fn run_epicenter(a: EpicenterArgs) -> Outcome<Report> {
    let g = load_graph(&a.graph)?;
    let p = parse_site(&g, &a.from)?;
    let q = parse_site(&g, &a.to)?;
    let trace = epicenter::propagate(&g, p, q, a.l, a.allow_bfs)?;
    Ok(Report {
        command: "epicenter",
        seed: None,
        artifact: pretty(&trace),
        output: a.output,
        results: json!({
            "steps": trace.steps.len(),
            "total": trace.total.to_string(),
            "target_flooded": trace.target_flooded,
        }),
    })
}

fn verify(a: VerifyArgs) -> Outcome<Report> {
    let g = load_graph(&a.graph)?;
    if a.samples == 0 {
        return Err(Failure::Usage("--samples must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let verts: Vec<VertexId> = g.ordinary().collect();

    let mut identity_failures = 0;
    for _ in 0..a.samples {
        let values = verts.iter().map(|&v| rng.gen_range(0..3 * g.degree(v))).collect();
        let c = Configuration::from_ordinary(&g, values)?;
        let r = engine::stabilize(&g, &c, TopplingPolicy::SeededRandom(rng.gen()))?;
        if !potential::verify_laplacian_identity(&g, &c, &r) {
            identity_failures += 1;
        }
    }

    let solver = PotentialSolver::new(&g)?;
    let triples: Vec<_> = (0..a.samples)
        .map(|_| {
            let mut pick = || verts[rng.gen_range(0..verts.len())];
            (pick(), pick(), pick())
        })
        .collect();
    let laws = potential::potential_checks(&solver, &triples)?;
    let passed = identity_failures == 0 && laws.passed();
    let results = json!({
        "laplacian_identity": { "samples": a.samples, "failures": identity_failures },
        "potential_laws": laws,
        "passed": passed,
    });
    if !passed {
        return Err(Failure::Precondition(format!("verification failed: {results}")));
    }
    Ok(Report { command: "verify", seed: Some(a.seed), artifact: pretty(&results), output: None, results })
}
