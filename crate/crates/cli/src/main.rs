use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use qnet_core::equilibria::{
    greedy_ne_on, solve_btn, solve_fair, solve_global, solve_wardrop, verify_ne, verify_wardrop,
    EquilibriumResult, RoutingProblem,
};
use qnet_core::experiments::{
    ab_sweep, braess_scan, ensemble_csv, ensemble_run, scan_csv, sweep_csv, EnsembleConfig,
    EnsembleOutcome, Placement, ScanSolver, MAX_REMOVAL_SIZE,
};
use qnet_core::netmodel::{
    assign_states, demand_for, generate_er, load_network, save_network, DemandSpec, FidelitySpec,
    Network,
};
use qnet_core::optimize::OptimizerConfig;

mod grid;

const EXIT_FAILURE: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_NOT_CONVERGED: u8 = 3;

#[derive(Parser)]
#[command(name = "qnet", version, about = "Equilibria, optima and Braess scans for entanglement routing")]
struct Cli {
    /// Worker threads for experiment items.
    #[arg(long, global = true, env = "QNET_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random network with Bell and Werner edges.
    Gen(GenArgs),
    /// Solve one equilibrium or optimum.
    Solve(SolveArgs),
    /// Scan edge removals for fidelity gains.
    Scan(ScanArgs),
    /// Run ensembles of random networks over parameter grids.
    Sweep(SweepArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Json,
    Csv,
}

#[derive(Args, Serialize)]
struct Output {
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

#[derive(Args, Serialize)]
struct GenArgs {
    #[arg(long)]
    nodes: usize,
    #[arg(long, default_value_t = 3.0)]
    degree: f64,
    #[arg(long, default_value_t = 0.5)]
    bell_fraction: f64,
    /// Fidelity of every Werner edge.
    #[arg(long, conflicts_with = "f0_gauss")]
    f0: Option<f64>,
    /// Werner fidelities drawn from a discretized Gaussian: MEAN,SIGMA.
    #[arg(long)]
    f0_gauss: Option<String>,
    #[arg(long, default_value_t = 1000)]
    budget: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum SolverArg {
    Ne,
    We,
    Global,
    Btn,
    Fair,
}

#[derive(Args, Serialize)]
struct PairArgs {
    #[arg(long)]
    a: Option<usize>,
    #[arg(long)]
    b: Option<usize>,
    /// Several simultaneous pairs: A1:B1,A2:B2,...
    #[arg(long, conflicts_with_all = ["a", "b"])]
    pairs: Option<String>,
}

#[derive(Args, Serialize)]
struct SolveArgs {
    #[arg(long)]
    net: PathBuf,
    #[command(flatten)]
    pairs: PairArgs,
    #[arg(long, value_enum, default_value = "ne")]
    solver: SolverArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    hops: usize,
    #[command(flatten)]
    output: Output,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum ScanSolverArg {
    Ne,
    We,
}

impl From<ScanSolverArg> for ScanSolver {
    fn from(s: ScanSolverArg) -> Self {
        match s {
            ScanSolverArg::Ne => ScanSolver::GreedyNe,
            ScanSolverArg::We => ScanSolver::Wardrop,
        }
    }
}

#[derive(Args, Serialize)]
struct ScanArgs {
    #[arg(long)]
    net: PathBuf,
    #[command(flatten)]
    pairs: PairArgs,
    /// Sweep every unordered node pair, including the optima.
    #[arg(long, conflicts_with_all = ["a", "b", "pairs"])]
    all_pairs: bool,
    /// Largest removal subset size (1 to 3).
    #[arg(long, default_value_t = 1)]
    removals: usize,
    #[arg(long, value_enum, default_value = "ne")]
    solver: ScanSolverArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Serialize)]
struct SweepArgs {
    #[arg(long, default_value_t = 16)]
    nodes: usize,
    #[arg(long, default_value_t = 3.0)]
    degree: f64,
    #[arg(long, default_value_t = 100)]
    runs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    removals: usize,
    /// Number of simultaneous disjoint Alice-Bob pairs.
    #[arg(long, default_value_t = 1)]
    d: usize,
    /// Random placements per network when d > 1.
    #[arg(long, default_value_t = 20)]
    placements: usize,
    #[arg(long, default_value_t = 0.675)]
    f0: f64,
    /// Gaussian Werner fidelities MEAN,SIGMA instead of a constant.
    #[arg(long)]
    f0_gauss: Option<String>,
    #[arg(long, default_value_t = 0.5)]
    bell_fraction: f64,
    /// START:STOP:STEP grid over the Werner fidelity.
    #[arg(long, conflicts_with = "f0_gauss")]
    f0_grid: Option<String>,
    /// START:STOP:STEP grid over the Bell fraction.
    #[arg(long)]
    bell_grid: Option<String>,
    #[arg(long, default_value_t = 1000)]
    budget: u32,
    #[arg(long, value_enum, default_value = "ne")]
    solver: ScanSolverArg,
    #[command(flatten)]
    output: Output,
}

enum Failure {
    Usage(String),
    Run(String),
}

impl From<qnet_core::Error> for Failure {
    fn from(e: qnet_core::Error) -> Self {
        Failure::Run(e.to_string())
    }
}

type Outcome = Result<bool, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if t == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(EXIT_USAGE);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_FAILURE);
        }
    }
    let outcome = match &cli.command {
        Command::Gen(args) => run_gen(args),
        Command::Solve(args) => run_solve(args),
        Command::Scan(args) => run_scan(args),
        Command::Sweep(args) => run_sweep(args),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("warning: some solver did not converge; see diagnostics");
            ExitCode::from(EXIT_NOT_CONVERGED)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_FAILURE)
        }
    }
}

fn parse_gauss(text: &str) -> Result<FidelitySpec, Failure> {
    let parts: Vec<&str> = text.split(',').collect();
    let [mean, sigma] = parts.as_slice() else {
        return Err(Failure::Usage(format!("expected MEAN,SIGMA, got {text:?}")));
    };
    let parse = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| Failure::Usage(format!("not a number: {s:?}")))
    };
    Ok(FidelitySpec::Gaussian {
        mean: parse(mean)?,
        sigma: parse(sigma)?,
    })
}

fn fidelity_spec(f0: Option<f64>, gauss: Option<&str>, default: f64) -> Result<FidelitySpec, Failure> {
    let spec = match gauss {
        Some(g) => parse_gauss(g)?,
        None => FidelitySpec::Constant {
            f0: f0.unwrap_or(default),
        },
    };
    spec.validate()?;
    Ok(spec)
}

fn write_output(path: Option<&PathBuf>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| Failure::Run(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Wraps a result in the self-describing document every command emits.
fn document(command: &str, config: &impl Serialize, seed: u64, result: Value) -> String {
    let timestamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let doc = json!({
        "tool": "qnet",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "config": config,
        "seed": seed,
        "timestamp": timestamp,
        "result": result,
    });
    let mut text = serde_json::to_string_pretty(&doc).expect("document serializes");
    text.push('\n');
    text
}

fn run_gen(args: &GenArgs) -> Outcome {
    if args.nodes < 2 {
        return Err(Failure::Usage(format!("--nodes must be at least 2, got {}", args.nodes)));
    }
    let spec = fidelity_spec(args.f0, args.f0_gauss.as_deref(), 0.675)?;
    let net = generate_er(args.nodes, args.degree, args.seed)?.with_budget(args.budget)?;
    let net = assign_states(&net, args.bell_fraction, spec, args.seed)?;
    let bytes = save_network(&net);
    write_output(args.out.as_ref(), &String::from_utf8(bytes).expect("utf-8 json"))?;
    Ok(true)
}

fn load(path: &PathBuf) -> Result<Network, Failure> {
    let bytes = std::fs::read(path).map_err(|e| Failure::Run(format!("{}: {e}", path.display())))?;
    Ok(load_network(&bytes)?)
}

fn parse_pairs(args: &PairArgs) -> Result<Vec<(usize, usize)>, Failure> {
    let pairs = match (&args.pairs, args.a, args.b) {
        (Some(list), _, _) => list
            .split(',')
            .map(|item| {
                let (a, b) = item
                    .split_once(':')
                    .ok_or_else(|| Failure::Usage(format!("expected A:B, got {item:?}")))?;
                let node = |s: &str| {
                    s.trim()
                        .parse::<usize>()
                        .map_err(|_| Failure::Usage(format!("not a node index: {s:?}")))
                };
                Ok((node(a)?, node(b)?))
            })
            .collect::<Result<Vec<_>, Failure>>()?,
        (None, Some(a), Some(b)) => vec![(a, b)],
        _ => return Err(Failure::Usage("give --a and --b, or --pairs".into())),
    };
    if let Some(&(a, _)) = pairs.iter().find(|(a, b)| a == b) {
        return Err(Failure::Usage(format!("Alice and Bob must differ (both {a})")));
    }
    Ok(pairs)
}

fn optimizer(demand: &DemandSpec, seed: u64, hops: usize) -> OptimizerConfig {
    OptimizerConfig {
        hop_count: hops,
        ..OptimizerConfig::for_demand(demand.total()).with_seed(seed)
    }
}

fn with_fidelities(result: &EquilibriumResult) -> Value {
    let mut value = serde_json::to_value(result).expect("result serializes");
    value["path_fidelities"] = json!(result.path_fidelities());
    value
}

fn solve_csv(result: &EquilibriumResult) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let header = ["path", "commodity", "nodes", "flow", "werner_param", "fidelity"];
    w.write_record(header).expect("in-memory write");
    for (j, f) in result.path_fidelities().iter().enumerate() {
        let nodes: Vec<String> = result.path_nodes[j].iter().map(|n| n.to_string()).collect();
        w.write_record([
            j.to_string(),
            result.path_commodity[j].to_string(),
            nodes.join(" "),
            result.flows()[j].to_string(),
            result.path_params[j].to_string(),
            f.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 cells")
}

fn run_solve(args: &SolveArgs) -> Outcome {
    let net = load(&args.net)?;
    let pairs = parse_pairs(&args.pairs)?;
    let demand = demand_for(&net, &pairs)?;
    let problem = RoutingProblem::new(&net, &demand)?;
    let cfg = optimizer(&demand, args.seed, args.hops);
    let mut extra = serde_json::Map::new();
    let result = match args.solver {
        SolverArg::Ne => {
            let out = greedy_ne_on(&problem, net.budget(), args.seed)?;
            extra.insert("ne_check".into(), json!(verify_ne(&problem, &out.assignment)));
            out.result
        }
        SolverArg::We => {
            let r = solve_wardrop(&problem, &cfg)?;
            extra.insert("wardrop_check".into(), json!(verify_wardrop(&r, 1e-3)));
            r
        }
        SolverArg::Global => solve_global(&problem, &cfg)?,
        SolverArg::Btn => {
            let ne = greedy_ne_on(&problem, net.budget(), args.seed)?.result;
            extra.insert("ne_average_fidelity".into(), json!(ne.average_fidelity));
            solve_btn(&problem, &ne, &cfg)?
        }
        SolverArg::Fair => solve_fair(&problem, &cfg)?,
    };
    let converged = result.diagnostics.converged;
    let text = match args.output.format {
        Format::Csv => solve_csv(&result),
        Format::Json => {
            let mut value = with_fidelities(&result);
            for (k, v) in extra {
                value[k] = v;
            }
            document("solve", args, args.seed, value)
        }
    };
    write_output(args.output.out.as_ref(), &text)?;
    Ok(converged)
}

fn check_removals(r: usize) -> Result<(), Failure> {
    if (1..=MAX_REMOVAL_SIZE).contains(&r) {
        Ok(())
    } else {
        Err(Failure::Usage(format!(
            "--removals must be 1..={MAX_REMOVAL_SIZE}, got {r}"
        )))
    }
}

fn run_scan(args: &ScanArgs) -> Outcome {
    check_removals(args.removals)?;
    let net = load(&args.net)?;
    let solver = ScanSolver::from(args.solver);
    if args.all_pairs {
        if args.removals != 1 {
            return Err(Failure::Usage("--all-pairs scans single-edge removals only".into()));
        }
        let cfg = OptimizerConfig::default().with_seed(args.seed);
        let reports = ab_sweep(&net, solver, &cfg)?;
        let converged = reports.iter().all(|r| r.converged);
        let text = match args.output.format {
            Format::Csv => sweep_csv(&reports, args.seed),
            Format::Json => document("scan", args, args.seed, json!({ "pairs": reports })),
        };
        write_output(args.output.out.as_ref(), &text)?;
        return Ok(converged);
    }
    let pairs = parse_pairs(&args.pairs)?;
    let demand = demand_for(&net, &pairs)?;
    let cfg = OptimizerConfig::for_demand(demand.total()).with_seed(args.seed);
    let scan = braess_scan(&net, &demand, args.removals, solver, &cfg)?;
    let converged = scan.converged();
    let text = match args.output.format {
        Format::Csv => scan_csv(&pairs, &scan, args.seed),
        Format::Json => {
            let mut value = serde_json::to_value(&scan).expect("scan serializes");
            value["best_improvement"] = json!(scan.best_improvement());
            document("scan", args, args.seed, value)
        }
    };
    write_output(args.output.out.as_ref(), &text)?;
    Ok(converged)
}

#[derive(Serialize)]
struct GridRow {
    f0: Option<f64>,
    bell_fraction: f64,
    floored_mean: f64,
    floored_se: Option<f64>,
    unfloored_mean: f64,
    unfloored_se: Option<f64>,
    fingerprint: String,
    converged: bool,
}

fn run_sweep(args: &SweepArgs) -> Outcome {
    if args.runs == 0 {
        return Err(Failure::Usage("--runs must be at least 1".into()));
    }
    if args.nodes < 2 {
        return Err(Failure::Usage(format!("--nodes must be at least 2, got {}", args.nodes)));
    }
    check_removals(args.removals)?;
    if args.d == 0 || 2 * args.d > args.nodes {
        return Err(Failure::Usage(format!(
            "--d must be between 1 and nodes/2, got {}",
            args.d
        )));
    }
    let f0_values: Vec<Option<f64>> = match (&args.f0_grid, &args.f0_gauss) {
        (Some(g), _) => grid::parse(g).map_err(Failure::Usage)?.into_iter().map(Some).collect(),
        (None, Some(_)) => vec![None],
        (None, None) => vec![Some(args.f0)],
    };
    let bell_values = match &args.bell_grid {
        Some(g) => grid::parse(g).map_err(Failure::Usage)?,
        None => vec![args.bell_fraction],
    };
    let placement = if args.d == 1 {
        Placement::AllPairs
    } else {
        Placement::Sampled {
            count: args.placements,
        }
    };
    let mut rows = Vec::new();
    let mut outcomes: Vec<EnsembleOutcome> = Vec::new();
    for &f0 in &f0_values {
        for &bell_fraction in &bell_values {
            let fidelity = match f0 {
                Some(f) => fidelity_spec(Some(f), None, f)?,
                None => fidelity_spec(None, args.f0_gauss.as_deref(), args.f0)?,
            };
            let config = EnsembleConfig {
                nodes: args.nodes,
                degree: args.degree,
                fidelity,
                bell_fraction,
                pairs: args.d,
                removal_size: args.removals,
                runs: args.runs,
                master_seed: args.seed,
                budget: args.budget,
                solver: args.solver.into(),
                placement,
            };
            let outcome = ensemble_run(&config)?;
            rows.push(GridRow {
                f0,
                bell_fraction,
                floored_mean: outcome.floored.mean,
                floored_se: outcome.floored.standard_error,
                unfloored_mean: outcome.unfloored.mean,
                unfloored_se: outcome.unfloored.standard_error,
                fingerprint: outcome.floored.fingerprint.clone(),
                converged: outcome.converged,
            });
            outcomes.push(outcome);
        }
    }
    let converged = rows.iter().all(|r| r.converged);
    let text = match args.output.format {
        Format::Csv => {
            let mut text = String::new();
            for (row, outcome) in rows.iter().zip(&outcomes) {
                let body = ensemble_csv(outcome);
                let mut lines = body.lines();
                let header = lines.next().unwrap_or_default();
                if text.is_empty() {
                    text.push_str(&format!("f0,bell_fraction,{header}\n"));
                }
                let f0 = row.f0.map_or_else(String::new, |f| f.to_string());
                for line in lines {
                    text.push_str(&format!("{f0},{},{line}\n", row.bell_fraction));
                }
            }
            text
        }
        Format::Json => document("sweep", args, args.seed, json!({ "rows": rows })),
    };
    write_output(args.output.out.as_ref(), &text)?;
    Ok(converged)
}
