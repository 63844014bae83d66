use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pmsdp::catalog::{benchmark_cases, catalog_entries, catalog_problem, certify_min_entropy, NamedProblem, ProblemParams};
use pmsdp::model::sdpa::{sdpa_read, sdpa_write};
use pmsdp::npa::LevelSpec;
use pmsdp::{solve, Error, MixedProblem, Solution, SolverParams};
use rayon::prelude::*;
use serde_json::{json, Value};

#[derive(Parser, Debug)]
#[command(name = "pmsdp", version, about = "Moment-matrix relaxations and an interior-point SDP solver")]
struct Cli {
    /// Omit wall-clock times so that repeated runs give identical output.
    #[arg(long, global = true)]
    no_timings: bool,
    /// Worker threads for sweeps and entropy fan-out (default: all cores).
    #[arg(long, global = true, env = "PMSDP_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve a catalog problem or an SDPA file.
    Solve {
        /// Catalog name or path to a `.dat-s` file.
        target: String,
        #[command(flatten)]
        problem: ProblemArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Certify min-entropy of the generation settings.
    Entropy {
        name: String,
        /// Comma separated settings, one per party (default: the catalog choice).
        #[arg(long)]
        guess: Option<String>,
        #[arg(long)]
        x0: Option<usize>,
        #[arg(long)]
        y0: Option<usize>,
        #[command(flatten)]
        problem: ProblemArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve over a grid of one parameter, one CSV row per point.
    Sweep {
        name: String,
        /// Swept parameter name; further `key=value` entries fix other parameters.
        #[arg(long = "param", value_name = "NAME|KEY=VALUE", required = true)]
        params: Vec<String>,
        #[arg(long)]
        level: Option<String>,
        #[arg(long)]
        p: Option<f64>,
        #[arg(long)]
        from: f64,
        #[arg(long)]
        to: f64,
        #[arg(long)]
        steps: usize,
        /// Append certified min-entropy columns.
        #[arg(long)]
        entropy: bool,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List catalog problems.
    Catalog {
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Write a catalog problem as sparse SDPA.
    Convert {
        name: String,
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the benchmark cases and print a stage-time profile.
    Bench {
        /// Run only these cases.
        cases: Vec<String>,
        #[command(flatten)]
        solver: SolverArgs,
    },
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args, Debug, Clone)]
struct ProblemArgs {
    /// Relaxation level: `q2`, `2`, `1+AB`, `1+AB+AC+BC`, ...
    #[arg(long)]
    level: Option<String>,
    #[arg(long)]
    p: Option<f64>,
    /// Further problem parameters as `key=value`.
    #[arg(long = "param", value_name = "KEY=VALUE")]
    params: Vec<String>,
}

#[derive(Args, Debug, Clone)]
struct SolverArgs {
    #[arg(long, env = "PMSDP_T_P")]
    t_p: Option<f64>,
    #[arg(long, env = "PMSDP_T_G")]
    t_g: Option<f64>,
    #[arg(long, env = "PMSDP_EXPON")]
    expon: Option<f64>,
    #[arg(long, env = "PMSDP_STRATEGY")]
    strategy: Option<u8>,
    #[arg(long, env = "PMSDP_TAU")]
    tau: Option<f64>,
    #[arg(long, env = "PMSDP_MAX_ITER")]
    max_iter: Option<usize>,
}

impl SolverArgs {
    fn apply(&self, mut p: SolverParams) -> Result<SolverParams, Error> {
        if let Some(v) = self.t_p {
            p.t_p = v;
        }
        if let Some(v) = self.t_g {
            p.t_g = v;
        }
        if let Some(v) = self.expon {
            p.expon = v;
        }
        if let Some(v) = self.strategy {
            p.perturb_strategy = v;
        }
        if let Some(v) = self.tau {
            p.tau = v;
        }
        if let Some(v) = self.max_iter {
            p.max_iterations = v;
        }
        p.validate()?;
        Ok(p)
    }

    fn params(&self) -> Result<SolverParams, Error> {
        self.apply(SolverParams::default())
    }
}

enum Failure {
    Usage(String),
    Lib(Error),
    /// Output was produced but the solver did not converge.
    NotOptimal,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::NotOptimal => 2,
            Failure::Lib(e) => match e {
                Error::CertificationInfeasible(_) => 3,
                Error::Numerical(_) | Error::NotPositiveDefinite { .. } => 2,
                _ => 1,
            },
        }
    }
}

type Run = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("pmsdp: {e}");
            return ExitCode::from(1);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Usage(m) => eprintln!("pmsdp: {m}"),
                Failure::Lib(e) => eprintln!("pmsdp: {e}"),
                Failure::NotOptimal => eprintln!("pmsdp: solver did not converge"),
            }
            ExitCode::from(f.code())
        }
    }
}

fn run(cli: &Cli) -> Run {
    let timings = !cli.no_timings;
    match &cli.command {
        Command::Solve { target, problem, solver, out } => cmd_solve(target, problem, solver, out.as_deref(), timings),
        Command::Entropy { name, guess, x0, y0, problem, solver, out } => {
            let guess = parse_guess(guess.as_deref(), *x0, *y0)?;
            cmd_entropy(name, guess, problem, solver, out.as_deref())
        }
        Command::Sweep { name, params, level, p, from, to, steps, entropy, solver, format, out } => {
            let (swept, fixed): (Vec<&String>, Vec<&String>) = params.iter().partition(|s| !s.contains('='));
            let [param] = swept.as_slice() else {
                return Err(Failure::Usage("name exactly one swept parameter with --param".into()));
            };
            let problem = ProblemArgs { level: level.clone(), p: *p, params: fixed.into_iter().cloned().collect() };
            let grid = Grid { param, from: *from, to: *to, steps: *steps };
            cmd_sweep(name, &grid, *entropy, &problem, solver, *format, out.as_deref(), timings)
        }
        Command::Catalog { format } => cmd_catalog(*format),
        Command::Convert { name, problem, out } => {
            let np = named(name, problem)?;
            let (_, p) = np.assemble()?;
            sdpa_write(&p, out)?;
            eprintln!("wrote {} (n_L = {}, n = {}, m = {})", out.display(), p.n_lin(), p.n(), p.m());
            Ok(())
        }
        Command::Bench { cases, solver } => cmd_bench(cases, solver, timings),
    }
}

fn emit(text: &str, out: Option<&Path>) -> Run {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| Failure::Lib(e.into())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn problem_params(args: &ProblemArgs) -> Result<ProblemParams, Error> {
    let mut pp = ProblemParams::default();
    if let Some(p) = args.p {
        pp.p = p;
    }
    for kv in &args.params {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::InvalidArgument(format!("expected key=value, got `{kv}`")))?;
        pp.set(k, v)?;
    }
    Ok(pp)
}

fn with_level(np: NamedProblem, level: Option<&str>) -> Result<NamedProblem, Error> {
    match level {
        Some(l) => Ok(np.with_level(LevelSpec::parse(l)?)),
        None => Ok(np),
    }
}

fn named(name: &str, args: &ProblemArgs) -> Result<NamedProblem, Error> {
    with_level(catalog_problem(name, &problem_params(args)?)?, args.level.as_deref())
}

fn is_file_target(target: &str) -> bool {
    target.ends_with(".dat-s") || target.contains('/') || Path::new(target).is_file()
}

fn solution_json(sol: &Solution, timings: bool) -> Value {
    let mut v = sol.to_json(timings);
    v["objective"] = json!(sol.objective());
    v
}

fn cmd_solve(target: &str, args: &ProblemArgs, solver: &SolverArgs, out: Option<&Path>, timings: bool) -> Run {
    let params = solver.params()?;
    let mut report;
    let sol;
    if is_file_target(target) {
        if args.level.is_some() || args.p.is_some() || !args.params.is_empty() {
            return Err(Failure::Usage("problem options do not apply to SDPA files".into()));
        }
        let p: MixedProblem = sdpa_read(target)?;
        sol = solve(&p, &params, None);
        report = json!({ "problem": target });
    } else {
        let np = named(target, args)?;
        sol = np.solve(&params)?;
        report = json!({ "problem": np.name, "level": np.level.to_string(), "reference": np.reference });
    }
    merge(&mut report, solution_json(&sol, timings));
    emit(&format!("{}\n", serde_json::to_string_pretty(&report).expect("json")), out)?;
    if sol.is_optimal() {
        Ok(())
    } else {
        Err(Failure::NotOptimal)
    }
}

fn merge(into: &mut Value, from: Value) {
    if let (Some(a), Value::Object(b)) = (into.as_object_mut(), from) {
        a.extend(b);
    }
}

fn parse_guess(guess: Option<&str>, x0: Option<usize>, y0: Option<usize>) -> Result<Option<Vec<usize>>, Failure> {
    match (guess, x0, y0) {
        (None, None, None) => Ok(None),
        (Some(g), None, None) => g
            .split(',')
            .map(|t| t.trim().parse::<usize>())
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
            .map_err(|_| Failure::Usage(format!("bad settings list `{g}`"))),
        (None, Some(x), Some(y)) => Ok(Some(vec![x, y])),
        _ => Err(Failure::Usage("give either --guess or both --x0 and --y0".into())),
    }
}

fn cmd_entropy(name: &str, guess: Option<Vec<usize>>, args: &ProblemArgs, solver: &SolverArgs, out: Option<&Path>) -> Run {
    let np = named(name, args)?;
    let params = solver.params()?;
    let m = certify_min_entropy(&np, guess.as_deref(), None, &params)?;
    let settings = guess.unwrap_or_else(|| np.guess.clone().unwrap_or_default());
    let mut report = json!({ "problem": np.name, "level": np.level.to_string(), "settings": settings });
    merge(&mut report, serde_json::to_value(&m).expect("json"));
    emit(&format!("{}\n", serde_json::to_string_pretty(&report).expect("json")), out)
}

struct Grid<'a> {
    param: &'a str,
    from: f64,
    to: f64,
    steps: usize,
}

impl Grid<'_> {
    fn points(&self) -> Result<Vec<f64>, Failure> {
        match self.steps {
            0 => Err(Failure::Usage("--steps must be at least 1".into())),
            1 => Ok(vec![self.from]),
            k => Ok((0..k).map(|i| self.from + (self.to - self.from) * i as f64 / (k - 1) as f64).collect()),
        }
    }
}

struct Row {
    param: f64,
    sol: Solution,
    entropy: Option<(f64, f64)>,
    time_s: f64,
}

#[allow(clippy::too_many_arguments)]
fn cmd_sweep(
    name: &str,
    grid: &Grid,
    entropy: bool,
    args: &ProblemArgs,
    solver: &SolverArgs,
    format: Format,
    out: Option<&Path>,
    timings: bool,
) -> Run {
    let points = grid.points()?;
    let base = problem_params(args)?;
    let params = solver.params()?;
    let rows: Vec<Row> = points
        .par_iter()
        .map(|&v| -> Result<Row, Error> {
            let start = Instant::now();
            let mut pp = base.clone();
            pp.set(grid.param, &v.to_string())?;
            let np = with_level(catalog_problem(name, &pp)?, args.level.as_deref())?;
            let sol = np.solve(&params)?;
            let entropy = if entropy {
                let m = certify_min_entropy(&np, None, None, &params)?;
                Some((m.h_global, m.h_local))
            } else {
                None
            };
            Ok(Row { param: v, sol, entropy, time_s: start.elapsed().as_secs_f64() })
        })
        .collect::<Result<_, _>>()?;

    let text = match format {
        Format::Csv => {
            let mut s = String::from("param,objective_primal,objective_dual,eps_p,eps_d,gap,iterations,time_s");
            if entropy {
                s.push_str(",h_global,h_local");
            }
            s.push('\n');
            for r in &rows {
                let t = if timings { format!("{:?}", r.time_s) } else { String::new() };
                s.push_str(&format!(
                    "{:?},{:?},{:?},{:?},{:?},{:?},{},{}",
                    r.param, r.sol.objective_primal, r.sol.objective_dual, r.sol.eps_p, r.sol.eps_d, r.sol.gap,
                    r.sol.iterations, t
                ));
                if let Some((g, l)) = r.entropy {
                    s.push_str(&format!(",{g:?},{l:?}"));
                }
                s.push('\n');
            }
            s
        }
        Format::Json => {
            let items: Vec<Value> = rows
                .iter()
                .map(|r| {
                    let mut v = json!({ "param": r.param });
                    merge(&mut v, solution_json(&r.sol, timings));
                    if let Some((g, l)) = r.entropy {
                        v["h_global"] = json!(g);
                        v["h_local"] = json!(l);
                    }
                    if timings {
                        v["time_s"] = json!(r.time_s);
                    }
                    v
                })
                .collect();
            format!("{}\n", serde_json::to_string_pretty(&json!({ "problem": name, "param": grid.param, "rows": items })).expect("json"))
        }
    };
    emit(&text, out)?;
    if rows.iter().all(|r| r.sol.is_optimal()) {
        Ok(())
    } else {
        Err(Failure::NotOptimal)
    }
}

fn cmd_catalog(format: Format) -> Run {
    let entries = catalog_entries();
    let text = match format {
        Format::Json => {
            let items: Vec<Value> = entries
                .iter()
                .map(|e| json!({ "name": e.name, "scenario": e.scenario, "params": e.params, "description": e.description }))
                .collect();
            format!("{}\n", serde_json::to_string_pretty(&items).expect("json"))
        }
        Format::Csv => {
            let mut s = String::from("name,scenario,params,description\n");
            for e in &entries {
                s.push_str(&format!("{},\"{}\",\"{}\",\"{}\"\n", e.name, e.scenario, e.params, e.description));
            }
            s
        }
    };
    emit(&text, None)
}

fn cmd_bench(only: &[String], solver: &SolverArgs, timings: bool) -> Run {
    let mut cases = benchmark_cases()?;
    if !only.is_empty() {
        if let Some(bad) = only.iter().find(|n| !cases.iter().any(|c| &c.name == *n)) {
            return Err(Failure::Usage(format!("unknown benchmark case `{bad}`")));
        }
        cases.retain(|c| only.contains(&c.name));
    }
    println!(
        "{:<8} {:>4} {:>4} {:>5} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9} {:>5}",
        "case", "n_L", "n", "m", "scaling", "LHS", "factor", "pred.", "corr.", "total", "iter."
    );
    let mut failed = false;
    for case in &cases {
        let params = solver.apply(case.params)?;
        let sol = solve(&case.problem, &params, None);
        failed |= !sol.is_optimal();
        let t = sol.stage_times;
        let cell = |v: f64| if timings { format!("{v:9.4}") } else { format!("{:>9}", "-") };
        println!(
            "{:<8} {:>4} {:>4} {:>5} {} {} {} {} {} {} {:>5}{}",
            case.name,
            case.problem.n_lin(),
            case.problem.n(),
            case.problem.m(),
            cell(t.scaling),
            cell(t.lhs),
            cell(t.factor),
            cell(t.predictor),
            cell(t.corrector),
            cell(t.total),
            sol.iterations,
            if sol.is_optimal() { "" } else { "  (not converged)" }
        );
    }
    if failed {
        Err(Failure::NotOptimal)
    } else {
        Ok(())
    }
}
