//! Command-line front end: solve model files, generate benchmark
//! instances, and run the instance × backend benchmark matrix.

use clap::error::ErrorKind;
use clap::{ArgAction, Parser, Subcommand};
use ctsolve::gen::{desk, gen_lin, gen_orienteering, lin_b, lin_eb, LinParams, OpParams};
use ctsolve::model::{parse_model, solve_model, SolveOverrides, StatsLine};
use ctsolve::verify::{external_ratio_csv, parse_external_csv, rows_to_csv, run_bench};
use ctsolve::{Backend, Executor, SearchStatus};
use std::path::{Path, PathBuf};
use std::time::Duration;

/// Prints one stdout line, ignoring write failures such as a closed pipe
/// (`ctsolve ... | head`), so the exit code keeps reporting the run itself.
macro_rules! emit {
    ($($arg:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

#[derive(Parser)]
#[command(name = "ctsolve", about = "Finite-domain solver with data-parallel table propagation")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve a JSON model file.
    Solve(SolveArgs),
    /// Generate benchmark instances (model file + metadata sidecar).
    Gen {
        #[command(subcommand)]
        family: GenCmd,
    },
    /// Run instance × backend benchmarks and write a comparison CSV.
    Bench(BenchArgs),
}

#[derive(Parser)]
struct SolveArgs {
    /// Path to the model JSON.
    model: PathBuf,
    /// Run every table constraint under this backend (serial, u, f, uf).
    #[arg(long, value_name = "BACKEND")]
    backend_override: Option<String>,
    /// Search budget in milliseconds.
    #[arg(long, default_value_t = 900_000)]
    timeout_ms: u64,
    /// Enumerate all solutions instead of stopping at the first.
    #[arg(long)]
    all: bool,
    /// Write the run statistics as JSON to this path.
    #[arg(long, value_name = "PATH")]
    stats_json: Option<PathBuf>,
    /// Worker threads for the grid executor (default: available parallelism).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum GenCmd {
    /// Knapsack-style instance: one large table plus a capacity equation.
    Lin(GenLinArgs),
    /// Grid-path instance with per-cell profits and a reward cap.
    Op(GenOpArgs),
}

#[derive(Parser)]
struct GenLinArgs {
    /// Output model path; metadata lands next to it as *.meta.json.
    #[arg(long)]
    out: PathBuf,
    /// Parameter preset: lin_b, lin_eb, or desk (the default base).
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    n_vars: Option<usize>,
    #[arg(long)]
    max_dom: Option<i64>,
    #[arg(long)]
    n_tuples: Option<usize>,
    #[arg(long)]
    n_linear_vars: Option<usize>,
    /// true pins the capacity to a sampled witness; false makes it
    /// provably unreachable.
    #[arg(long, default_value_t = true, action = ArgAction::Set)]
    satisfiable: bool,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Parser)]
struct GenOpArgs {
    /// Output model path; metadata lands next to it as *.meta.json.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 4)]
    rows: usize,
    #[arg(long, default_value_t = 4)]
    cols: usize,
    /// Number of steps in the walk.
    #[arg(long, default_value_t = 6)]
    d: usize,
    /// Reward cap.
    #[arg(long, default_value_t = 10)]
    c: i64,
    #[arg(long, default_value_t = 0.1)]
    obstacle_density: f64,
    #[arg(long, default_value_t = 3)]
    profit_max: i64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Parser)]
struct BenchArgs {
    /// Model files to run.
    #[arg(required = true)]
    models: Vec<PathBuf>,
    /// CSV output path.
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated backend list.
    #[arg(long, default_value = "serial,u,f,uf")]
    backends: String,
    #[arg(long, default_value_t = 900_000)]
    timeout_ms: u64,
    /// Repetitions per cell; the best time is reported.
    #[arg(long, default_value_t = 3)]
    reps: usize,
    /// Worker threads for the grid executor.
    #[arg(long)]
    workers: Option<usize>,
    /// External solver times (instance,solve_time_ms CSV) to compare against.
    #[arg(long, requires = "external_out")]
    external: Option<PathBuf>,
    /// Where to write the external-comparison CSV.
    #[arg(long, requires = "external")]
    external_out: Option<PathBuf>,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 3,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    std::process::exit(run(cli));
}

fn run(cli: Cli) -> i32 {
    match cli.cmd {
        Cmd::Solve(args) => cmd_solve(args),
        Cmd::Gen { family: GenCmd::Lin(args) } => cmd_gen_lin(args),
        Cmd::Gen { family: GenCmd::Op(args) } => cmd_gen_op(args),
        Cmd::Bench(args) => cmd_bench(args),
    }
}

fn executor_for(workers: Option<usize>) -> Executor {
    match workers {
        Some(n) => Executor::pool(n),
        None => Executor::default_pool(),
    }
}

fn read_to_string(path: &Path) -> Result<String, i32> {
    std::fs::read_to_string(path).map_err(|e| {
        eprintln!("error: cannot read {}: {e}", path.display());
        3
    })
}

fn write_file(path: &Path, content: &str) -> Result<(), i32> {
    std::fs::write(path, content).map_err(|e| {
        eprintln!("error: cannot write {}: {e}", path.display());
        3
    })
}

fn sidecar_path(out: &Path) -> PathBuf {
    out.with_extension("meta.json")
}

fn cmd_solve(args: SolveArgs) -> i32 {
    let text = match read_to_string(&args.model) {
        Ok(t) => t,
        Err(code) => return code,
    };
    let doc = match parse_model(&text) {
        Ok(d) => d,
        Err(e) => {
            eprintln!("error: {e}");
            return 3;
        }
    };
    let backend = match args.backend_override.as_deref() {
        None => None,
        Some(tag) => match Backend::from_tag(tag) {
            Some(b) => Some(b),
            None => {
                eprintln!("error: unknown backend '{tag}' (expected serial, u, f, or uf)");
                return 3;
            }
        },
    };
    let exec = executor_for(args.workers);
    let overrides = SolveOverrides {
        backend,
        timeout: Some(Duration::from_millis(args.timeout_ms)),
        all: args.all,
    };
    let report = match solve_model(&doc, &exec, &overrides) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return 3;
        }
    };

    for sol in &report.outcome.solutions {
        let fields: Vec<String> = report
            .var_names
            .iter()
            .zip(sol)
            .map(|(name, v)| format!("{}:{v}", serde_json::to_string(name).unwrap()))
            .collect();
        emit!("solution {{{}}}", fields.join(","));
    }
    let line = StatsLine::from_report(&report);
    emit!("status: {}", line.status);
    emit!("solutions: {}", line.solutions);
    emit!("nodes: {}", line.nodes);
    emit!("failures: {}", line.failures);
    emit!("propagations: {}", line.propagations);
    emit!("elapsed_ms: {}", line.elapsed_ms);
    emit!("backend: {}", line.backend);

    if let Some(path) = &args.stats_json {
        let json = serde_json::to_string(&line).unwrap();
        if let Err(code) = write_file(path, &json) {
            return code;
        }
    }
    match report.outcome.stats.status {
        SearchStatus::Sat => 0,
        SearchStatus::Unsat => 1,
        SearchStatus::Timeout => 2,
    }
}

fn cmd_gen_lin(args: GenLinArgs) -> i32 {
    let mut params: LinParams = match args.preset.as_deref() {
        None => desk(args.seed),
        Some("desk") => desk(args.seed),
        Some("lin_b") => lin_b(args.seed),
        Some("lin_eb") => lin_eb(args.seed),
        Some(other) => {
            eprintln!("error: unknown preset '{other}' (expected lin_b, lin_eb, or desk)");
            return 3;
        }
    };
    if let Some(v) = args.n_vars {
        params.n_vars = v;
    }
    if let Some(v) = args.max_dom {
        params.max_dom = v;
    }
    if let Some(v) = args.n_tuples {
        params.n_tuples = v;
    }
    if let Some(v) = args.n_linear_vars {
        params.n_linear_vars = v;
    }
    params.satisfiable = args.satisfiable;
    params.seed = args.seed;

    let (doc, meta) = match gen_lin(&params) {
        Ok(pair) => pair,
        Err(e) => {
            eprintln!("error: {e}");
            return 3;
        }
    };
    let meta_path = sidecar_path(&args.out);
    if let Err(code) = write_file(&args.out, &serde_json::to_string_pretty(&doc).unwrap()) {
        return code;
    }
    if let Err(code) = write_file(&meta_path, &serde_json::to_string_pretty(&meta).unwrap()) {
        return code;
    }
    emit!(
        "wrote {} ({} variables, {} tuples) and {}",
        args.out.display(),
        doc.variables.len(),
        meta.n_tuples,
        meta_path.display()
    );
    0
}

fn cmd_gen_op(args: GenOpArgs) -> i32 {
    let params = OpParams {
        rows: args.rows,
        cols: args.cols,
        d: args.d,
        c: args.c,
        obstacle_density: args.obstacle_density,
        profit_max: args.profit_max,
        seed: args.seed,
        obstacles: None,
        profits: None,
    };
    let (doc, meta) = match gen_orienteering(&params) {
        Ok(pair) => pair,
        Err(e) => {
            eprintln!("error: {e}");
            return 3;
        }
    };
    let meta_path = sidecar_path(&args.out);
    if let Err(code) = write_file(&args.out, &serde_json::to_string_pretty(&doc).unwrap()) {
        return code;
    }
    if let Err(code) = write_file(&meta_path, &serde_json::to_string_pretty(&meta).unwrap()) {
        return code;
    }
    emit!(
        "wrote {} ({}x{} grid, {} steps, {} obstacles) and {}",
        args.out.display(),
        meta.rows,
        meta.cols,
        meta.d,
        meta.obstacles.len(),
        meta_path.display()
    );
    0
}

fn cmd_bench(args: BenchArgs) -> i32 {
    let mut backends = Vec::new();
    for tag in args.backends.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        match Backend::from_tag(tag) {
            Some(b) => backends.push(b),
            None => {
                eprintln!("error: unknown backend '{tag}' (expected serial, u, f, or uf)");
                return 3;
            }
        }
    }
    if backends.is_empty() {
        eprintln!("error: empty backend list");
        return 3;
    }

    let mut instances = Vec::new();
    for path in &args.models {
        let text = match read_to_string(path) {
            Ok(t) => t,
            Err(code) => return code,
        };
        let doc = match parse_model(&text) {
            Ok(d) => d,
            Err(e) => {
                eprintln!("error: {}: {e}", path.display());
                return 3;
            }
        };
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        instances.push((name, doc));
    }

    let exec = executor_for(args.workers);
    let rows = run_bench(
        &instances,
        &backends,
        Duration::from_millis(args.timeout_ms),
        args.reps,
        &exec,
    );
    let csv = rows_to_csv(&rows);
    if let Err(code) = write_file(&args.out, &csv) {
        return code;
    }
    {
        use std::io::Write;
        let _ = write!(std::io::stdout(), "{csv}");
    }
    for row in &rows {
        if let Some(ms) = row.propagation_time_ms {
            emit!(
                "# propagation_phase_ms instance={} backend={} value={ms}",
                row.instance, row.backend
            );
        }
    }
    emit!("# wrote {}", args.out.display());

    if let (Some(ext_in), Some(ext_out)) = (&args.external, &args.external_out) {
        let text = match read_to_string(ext_in) {
            Ok(t) => t,
            Err(code) => return code,
        };
        let external = match parse_external_csv(&text) {
            Ok(e) => e,
            Err(e) => {
                eprintln!("error: {e}");
                return 3;
            }
        };
        let joined = external_ratio_csv(&rows, &external);
        if let Err(code) = write_file(ext_out, &joined) {
            return code;
        }
        emit!("# wrote {}", ext_out.display());
    }
    0
}
