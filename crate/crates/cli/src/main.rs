//! `cloudprice` command-line front end.
//!
//! Exit codes: 0 success, 1 input error or failed verification, 2 solver
//! did not converge.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use cloudprice::deadline::{build_program, solve_horizon, HorizonSpec};
use cloudprice::kmeans::kmeans;
use cloudprice::optimizer::{barrier_optimize, ObjectiveSpec, SolveResult, SolverConfig};
use cloudprice::pricing::{Instance, PlanKind};
use cloudprice::svg::tradeoff_chart;
use cloudprice::sweep::{run_sweep, write_csv, SweepSpec};
use cloudprice::trace::{
    aggregate, build_instance, filter_outliers, parse_trace, write_cluster_report, JobUsage, TraceStats,
};
use cloudprice::verify::{run_verification, Scope, VerifyOptions};

const EXIT_INPUT: u8 = 1;
const EXIT_NOT_CONVERGED: u8 = 2;

#[derive(Parser)]
#[command(
    name = "cloudprice",
    version,
    about = "Multi-resource cloud pricing: optimize, sweep, ingest traces, verify"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize one pricing plan for an instance.
    Optimize(OptimizeArgs),
    /// Solve a plan over a grid of capacity, mix or discount values.
    Sweep(SweepArgs),
    /// Cluster a task trace into user types and write an instance.
    Ingest(IngestArgs),
    /// Run the built-in property suite.
    Verify(VerifyArgs),
    /// Price a multi-interval horizon with deadlines.
    Schedule(ScheduleArgs),
}

#[derive(Args)]
struct SolverFlags {
    /// Relative barrier gap at which the solver stops.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
}

impl SolverFlags {
    fn config(&self) -> SolverConfig {
        SolverConfig::default().with_tolerance(self.tol)
    }
}

#[derive(Args)]
struct OptimizeArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, default_value = "resource")]
    plan: PlanKind,
    /// Revenue weight ν.
    #[arg(long, default_value_t = 1.0)]
    nu: f64,
    /// Fairness exponent β.
    #[arg(long, default_value_t = 2.0)]
    beta: f64,
    /// Overrides the instance's volume discount.
    #[arg(long)]
    gamma: Option<f64>,
    #[command(flatten)]
    solver: SolverFlags,
    /// Writes the full result as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    instance: PathBuf,
    /// `capacity:<resource>`, `mix:<type label>` or `gamma`.
    #[arg(long)]
    parameter: String,
    #[arg(long)]
    start: f64,
    #[arg(long)]
    stop: f64,
    #[arg(long)]
    steps: usize,
    /// Revenue weights, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    nu: Vec<f64>,
    #[arg(long, default_value_t = 2.0)]
    beta: f64,
    /// Plans to solve, comma separated; all three by default.
    #[arg(long, value_delimiter = ',')]
    plan: Vec<PlanKind>,
    /// Total population for mix sweeps.
    #[arg(long)]
    population: Option<u64>,
    /// Overrides the instance's volume discount.
    #[arg(long)]
    gamma: Option<f64>,
    #[command(flatten)]
    solver: SolverFlags,
    #[arg(long)]
    out: PathBuf,
    /// Also writes a fairness-vs-revenue chart.
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args)]
struct IngestArgs {
    /// CSV with header time,job_id,task_id,cpu,mem.
    #[arg(long)]
    trace: PathBuf,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 30)]
    restarts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Drops jobs more than this many standard deviations from the mean.
    #[arg(long, default_value_t = 1.0)]
    k_std: f64,
    /// CPU and memory capacities.
    #[arg(long, value_delimiter = ',', required = true)]
    capacities: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    alphas: Vec<f64>,
    /// Utility scales; 1 for every cluster by default.
    #[arg(long, value_delimiter = ',')]
    cs: Vec<f64>,
    /// Users per cluster; the cluster sizes by default.
    #[arg(long, value_delimiter = ',')]
    counts: Vec<u32>,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    /// Instance JSON output.
    #[arg(long)]
    out: PathBuf,
    /// Cluster report CSV output; the report is always echoed to stdout.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Restricts the run to these scopes; repeatable.
    #[arg(long)]
    scope: Vec<Scope>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fault injection: corrupts demand so the demand properties fail.
    #[arg(long)]
    break_demand: bool,
}

#[derive(Args)]
struct ScheduleArgs {
    /// Horizon JSON: `{"horizon": T, "intervals": [{"instance": {..}, "deadlines": [..], "nu": ..}]}`.
    #[arg(long)]
    horizon: PathBuf,
    #[arg(long, default_value = "resource")]
    plan: PlanKind,
    #[arg(long, default_value_t = 2.0)]
    beta: f64,
    #[arg(long)]
    gamma: Option<f64>,
    #[command(flatten)]
    solver: SolverFlags,
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Status {
    Ok,
    NotConverged,
    Failed,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_INPUT)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let outcome = match cli.command {
        Command::Optimize(a) => optimize(a),
        Command::Sweep(a) => sweep(a),
        Command::Ingest(a) => ingest(a),
        Command::Verify(a) => verify(a),
        Command::Schedule(a) => schedule(a),
    };
    match outcome {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::NotConverged) => ExitCode::from(EXIT_NOT_CONVERGED),
        Ok(Status::Failed) => ExitCode::from(EXIT_INPUT),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_INPUT)
        }
    }
}

fn load_instance(path: &Path, gamma: Option<f64>) -> Result<Instance> {
    let instance = Instance::from_path(path).with_context(|| format!("reading instance {}", path.display()))?;
    Ok(match gamma {
        Some(g) => instance.with_discount(g)?,
        None => instance,
    })
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn print_result(instance: &Instance, r: &SolveResult) {
    let prices: Vec<String> = r.plan.price_vector().iter().map(|p| format!("{p:.6}")).collect();
    println!("plan: {}", r.plan.kind());
    println!("prices: {}", prices.join(" "));
    println!("{:<12} {:>8} {:>14} {:>14}", "type", "count", "jobs", "net_utility");
    for (j, u) in instance.user_types().iter().enumerate() {
        println!(
            "{:<12} {:>8} {:>14.6} {:>14.6}",
            u.label, u.count, r.outcome.demand[j], r.outcome.net_utility[j]
        );
    }
    println!("revenue: {:.6}", r.revenue);
    println!("fairness: {:.6}", r.fairness);
    println!("objective: {:.6}", r.objective);
    for (name, left) in instance.resources().names().iter().zip(&r.outcome.leftover) {
        println!("leftover {name}: {left:.6}");
    }
    println!(
        "converged: {} (gap {:.2e}, {} Newton steps)",
        r.converged, r.gap, r.iterations
    );
    for d in &r.diagnostics {
        println!("note: {d}");
    }
}

fn optimize(a: OptimizeArgs) -> Result<Status> {
    let instance = load_instance(&a.instance, a.gamma)?;
    let spec = ObjectiveSpec::new(a.nu, a.beta)?;
    let result = barrier_optimize(&instance, a.plan, &spec, &a.solver.config())?;
    print_result(&instance, &result);
    if let Some(out) = &a.out {
        write_file(out, serde_json::to_string_pretty(&result)? + "\n")?;
    }
    Ok(if result.converged {
        Status::Ok
    } else {
        Status::NotConverged
    })
}

fn sweep(a: SweepArgs) -> Result<Status> {
    let instance = load_instance(&a.instance, a.gamma)?;
    let spec = SweepSpec {
        parameter: a.parameter.parse()?,
        start: a.start,
        stop: a.stop,
        steps: a.steps,
        nus: a.nu,
        beta: a.beta,
        plans: if a.plan.is_empty() {
            PlanKind::ALL.to_vec()
        } else {
            a.plan
        },
        population: a.population,
    };
    let rows = run_sweep(&instance, &spec, &a.solver.config())?;
    let mut buf = Vec::new();
    write_csv(&instance, &rows, &mut buf)?;
    write_file(&a.out, buf)?;
    if let Some(svg) = &a.svg {
        write_file(svg, tradeoff_chart(&rows).render())?;
    }
    let failed = rows.iter().filter(|r| !r.converged).count();
    println!("{} rows written to {}", rows.len(), a.out.display());
    if failed > 0 {
        println!("{failed} rows did not converge");
        return Ok(Status::NotConverged);
    }
    Ok(Status::Ok)
}

fn ingest(a: IngestArgs) -> Result<Status> {
    let records = parse_trace(&a.trace).with_context(|| format!("reading trace {}", a.trace.display()))?;
    let jobs = aggregate(&records);
    if jobs.is_empty() {
        bail!("trace {} has no jobs", a.trace.display());
    }
    let stats = TraceStats::of(&jobs);
    let (cv_cpu, cv_mem) = stats.variation();
    println!(
        "jobs: {}  mean cpu {:.6}  mean mem {:.6}  std/mean cpu {:.4}  std/mean mem {:.4}",
        stats.jobs, stats.mean_cpu, stats.mean_mem, cv_cpu, cv_mem
    );
    let kept: Vec<JobUsage> = filter_outliers(&jobs, &stats, a.k_std);
    println!("kept {} jobs within {} standard deviations", kept.len(), a.k_std);
    let points: Vec<Vec<f64>> = kept.iter().map(JobUsage::point).collect();
    let model = kmeans(&points, a.k, a.restarts, a.seed)?;
    let mut report = Vec::new();
    write_cluster_report(&model, &mut report)?;
    print!("{}", String::from_utf8_lossy(&report));
    println!("seed {}  intra-cluster distance {:.6}", model.seed, model.inertia);
    if let Some(path) = &a.report {
        write_file(path, &report)?;
    }
    let cs = if a.cs.is_empty() { vec![1.0; a.k] } else { a.cs };
    let counts = if a.counts.is_empty() {
        model.counts.iter().map(|&c| c as u32).collect()
    } else {
        a.counts
    };
    let instance = build_instance(&model, &a.capacities, a.gamma, &a.alphas, &cs, &counts)?;
    write_file(&a.out, instance.to_json())?;
    Ok(Status::Ok)
}

fn verify(a: VerifyArgs) -> Result<Status> {
    let report = run_verification(&VerifyOptions {
        scopes: a.scope,
        seed: a.seed,
        break_demand: a.break_demand,
    });
    for r in &report.results {
        println!("{r}");
    }
    let failed = report.results.iter().filter(|r| !r.passed).count();
    println!("{} properties, {failed} failed", report.results.len());
    Ok(if failed == 0 { Status::Ok } else { Status::Failed })
}

fn schedule(a: ScheduleArgs) -> Result<Status> {
    let spec =
        HorizonSpec::from_path(&a.horizon).with_context(|| format!("reading horizon {}", a.horizon.display()))?;
    let program = build_program(&spec, a.plan, a.beta, a.gamma)?;
    for w in &program.warnings {
        println!("warning: {w}");
    }
    let result = solve_horizon(&program, &a.solver.config())?;
    for (t, (plan, scale)) in result.plans.iter().zip(&result.price_scaling).enumerate() {
        match plan {
            Some(plan) => {
                let prices: Vec<String> = plan.price_vector().iter().map(|p| format!("{p:.6}")).collect();
                println!("interval {}: prices {} (scaled x{scale:.6})", t + 1, prices.join(" "));
            }
            None => println!("interval {}: no arrivals", t + 1),
        }
    }
    for (var, jobs) in &result.schedule.entries {
        if *jobs > 0.0 {
            println!(
                "  type {} submitted {} processed {}: {jobs:.6} jobs",
                var.user_type + 1,
                var.submitted,
                var.processed
            );
        }
    }
    println!("revenue: {:.6}", result.revenue);
    println!("fairness: {:.6}", result.fairness);
    println!("objective: {:.6}", result.objective);
    println!("feasible: {}  converged: {}", result.feasible, result.converged);
    if let Some(out) = &a.out {
        write_file(out, serde_json::to_string_pretty(&result)? + "\n")?;
    }
    Ok(if result.converged {
        Status::Ok
    } else {
        Status::NotConverged
    })
}
