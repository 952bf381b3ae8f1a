use clap::{Args, Parser, Subcommand};
use dpmiv_cli::commands::{self, BenchArgs, ElicitArgs, SimulateArgs};
use dpmiv_cli::config::{grid_from_keys, KeyValues, Keys, ModelKind, RunConfig, DEFAULT_GRID};
use dpmiv_cli::dataset::ColumnMap;
use dpmiv_cli::output::{render_grid, write_atomic, FitSummary};
use dpmiv_cli::CliResult;
use dpmiv_core::sim::CensoringSpec;
use std::path::PathBuf;
use std::process::ExitCode;

/// Bayesian instrumental-variable estimation for partly interval-censored
/// survival outcomes.
#[derive(Parser)]
#[command(name = "dpmiv", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a dataset from a built-in scenario
    Simulate(SimulateCmd),
    /// Fit the Dirichlet-process mixture IV model
    FitDpmiv(FitCmd),
    /// Fit the bivariate-normal IV model
    FitPbiv(FitCmd),
    /// Fit the naive log-normal AFT model (ignores the instruments)
    FitAft(FitCmd),
    /// Run a replication study and write a metrics table
    Bench(BenchCmd),
    /// Recompute posterior summaries from a fit directory's traces
    Diagnose(DiagnoseCmd),
    /// Evaluate the posterior error density from a fit directory
    DensityGrid(GridCmd),
    /// Derive second-stage priors from an AFT fit on a training split
    ElicitPriors(ElicitCmd),
}

#[derive(Args)]
struct ConfigArgs {
    /// Configuration file of `key = value` lines; later files win
    #[arg(long = "config", value_name = "FILE")]
    config: Vec<PathBuf>,
    /// Set one configuration key; beats every file
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ConfigArgs {
    fn merged(&self) -> CliResult<KeyValues> {
        let mut kv = KeyValues::default();
        for path in &self.config {
            kv.merge(KeyValues::load(path)?);
        }
        for pair in &self.set {
            kv.set_pair(pair)?;
        }
        Ok(kv)
    }
}

#[derive(Args)]
struct ChainFlags {
    /// Number of chains [default: 4]
    #[arg(long)]
    chains: Option<usize>,
    /// Iterations per chain [default: 20000]
    #[arg(long)]
    iterations: Option<u64>,
    /// Iterations discarded before retaining draws [default: 5000]
    #[arg(long)]
    burn_in: Option<u64>,
    /// Keep every k-th post-burn-in draw [default: 10]
    #[arg(long)]
    thinning: Option<u64>,
    /// Master seed [default: 1]
    #[arg(long)]
    seed: Option<u64>,
    /// Starting state: single, prior or aft [default: single]
    #[arg(long)]
    init: Option<String>,
    /// Worker threads [default: $DPMIV_THREADS, else all cores]
    #[arg(long)]
    threads: Option<usize>,
}

impl ChainFlags {
    fn apply(&self, kv: &mut KeyValues) {
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                kv.set(k, v);
            }
        };
        put("chains", self.chains.map(|v| v.to_string()));
        put("iterations", self.iterations.map(|v| v.to_string()));
        put("burn_in", self.burn_in.map(|v| v.to_string()));
        put("thinning", self.thinning.map(|v| v.to_string()));
        put("seed", self.seed.map(|v| v.to_string()));
        put("init", self.init.clone());
        put("threads", self.threads.map(|v| v.to_string()));
    }
}

#[derive(Args)]
struct SimulateCmd {
    /// Scenario id, 1 to 6
    #[arg(long)]
    scenario: u32,
    /// Number of subjects
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output CSV; the truth sidecar goes next to it as <stem>.truth.json
    #[arg(long)]
    out: PathBuf,
    /// Write bounds as event times instead of log times
    #[arg(long)]
    time_scale: bool,
    /// Probability that an event time is observed exactly
    #[arg(long, default_value_t = CensoringSpec::default().exact_fraction)]
    exact_fraction: f64,
    /// Rate of the exponential first inspection time
    #[arg(long, default_value_t = CensoringSpec::default().rate_l)]
    rate_l: f64,
    /// Rate of the exponential gap to the second inspection
    #[arg(long, default_value_t = CensoringSpec::default().rate_gap)]
    rate_gap: f64,
}

#[derive(Args)]
struct FitCmd {
    /// Dataset CSV
    #[arg(long)]
    data: Option<PathBuf>,
    /// Directory for traces and summary.json
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Bounds in the file are event times; take logs on reading
    #[arg(long)]
    log_time: bool,
    /// Also write density_grid.csv (fit-dpmiv only)
    #[arg(long)]
    grid: bool,
    #[command(flatten)]
    chain: ChainFlags,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct BenchCmd {
    /// Comma-separated scenario ids [default: 1]
    #[arg(long)]
    scenarios: Option<String>,
    /// Comma-separated sample sizes [default: 300]
    #[arg(long)]
    n: Option<String>,
    /// Replicates per cell [default: 20]
    #[arg(long)]
    reps: Option<usize>,
    /// Comma-separated estimators: dpmiv, pbiv, aft [default: all three]
    #[arg(long)]
    estimators: Option<String>,
    /// Metrics CSV; per-replicate estimates go to <stem>.replicates.csv
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    chain: ChainFlags,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct DiagnoseCmd {
    /// Directory written by a fit command
    #[arg(long)]
    run_dir: PathBuf,
    /// Also write the table as CSV
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GridCmd {
    /// Directory written by fit-dpmiv or fit-pbiv
    #[arg(long)]
    run_dir: PathBuf,
    /// Output CSV [default: <run-dir>/density_grid.csv]
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_GRID.x_min, allow_hyphen_values = true)]
    x_min: f64,
    #[arg(long, default_value_t = DEFAULT_GRID.x_max, allow_hyphen_values = true)]
    x_max: f64,
    #[arg(long, default_value_t = DEFAULT_GRID.y_min, allow_hyphen_values = true)]
    y_min: f64,
    #[arg(long, default_value_t = DEFAULT_GRID.y_max, allow_hyphen_values = true)]
    y_max: f64,
    #[arg(long, default_value_t = DEFAULT_GRID.nx)]
    nx: usize,
    #[arg(long, default_value_t = DEFAULT_GRID.ny)]
    ny: usize,
}

#[derive(Args)]
struct ElicitCmd {
    /// Dataset CSV
    #[arg(long)]
    data: PathBuf,
    /// Share of rows used for the AFT fit
    #[arg(long, default_value_t = 0.05)]
    split_fraction: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Prior file to write
    #[arg(long)]
    out: PathBuf,
    /// CSV receiving the rows not used for elicitation
    #[arg(long)]
    analysis_out: PathBuf,
    /// Bounds in the file are event times; take logs on reading
    #[arg(long)]
    log_time: bool,
    #[command(flatten)]
    config: ConfigArgs,
}

fn put_path(kv: &mut KeyValues, key: &str, path: &Option<PathBuf>) {
    if let Some(p) = path {
        kv.set(key, p.to_string_lossy());
    }
}

fn run_simulate(cmd: SimulateCmd) -> CliResult<()> {
    let args = SimulateArgs {
        scenario: cmd.scenario,
        n: cmd.n,
        seed: cmd.seed,
        out: cmd.out,
        time_scale: cmd.time_scale,
        censoring: CensoringSpec { exact_fraction: cmd.exact_fraction, rate_l: cmd.rate_l, rate_gap: cmd.rate_gap },
    };
    let (data, _) = commands::simulate(&args)?;
    let counts = commands::censoring_counts(&data);
    println!(
        "wrote {} rows to {} (left {}, interval {}, right {}, exact {}); truth in {}",
        data.len(),
        args.out.display(),
        counts["left"],
        counts["interval"],
        counts["right"],
        counts["exact"],
        commands::truth_path(&args.out).display()
    );
    Ok(())
}

fn print_fit(summary: &FitSummary) {
    if let Some(aft) = &summary.aft {
        println!(
            "coef_x {:.4} (se {:.4}, 95% CI {:.4} to {:.4}); scale {:.4}; converged {}",
            aft.coef_x, aft.se_coef_x, aft.coef_x_ci95[0], aft.coef_x_ci95[1], aft.scale, aft.converged
        );
        if !aft.converged {
            eprintln!("warning: the optimizer stopped with gradient {:.2e}", aft.max_abs_grad);
        }
        return;
    }
    if let Some(b) = summary.parameter("beta1") {
        println!("beta1 {:.4} (sd {:.4}, 95% CrI {:.4} to {:.4})", b.mean, b.sd, b.q2_5, b.q97_5);
    }
    if let Some(k) = summary.mean_k {
        println!("mean number of clusters {k:.2}");
    }
    if let Some(s) = &summary.sampling {
        if s.low_sample {
            eprintln!("warning: only {} retained draws per chain", s.draws_per_chain);
        }
    }
    if let Some(c) = &summary.convergence {
        if !c.flagged.is_empty() {
            eprintln!("warning: PSRF above {} for {}", c.psrf_threshold, c.flagged.join(", "));
        } else if !c.psrf_available {
            eprintln!("warning: PSRF unavailable (needs 2 chains of at least 4 draws)");
        }
    }
}

fn run_fit(model: ModelKind, cmd: FitCmd) -> CliResult<()> {
    let mut kv = cmd.config.merged()?;
    put_path(&mut kv, "data", &cmd.data);
    put_path(&mut kv, "out_dir", &cmd.out_dir);
    if cmd.log_time {
        kv.set("log_time", "true");
    }
    if cmd.grid {
        kv.set("grid", "true");
    }
    cmd.chain.apply(&mut kv);
    let cfg = RunConfig::from_keys(model, &kv)?;
    let report = commands::fit(&cfg)?;
    print_fit(&report.summary);
    println!("results in {}", cfg.out_dir.display());
    Ok(())
}

fn run_bench(cmd: BenchCmd) -> CliResult<()> {
    let mut kv = cmd.config.merged()?;
    for (key, value) in [("scenarios", &cmd.scenarios), ("n", &cmd.n), ("estimators", &cmd.estimators)] {
        if let Some(v) = value {
            kv.set(key, v.as_str());
        }
    }
    if let Some(r) = cmd.reps {
        kv.set("reps", r.to_string());
    }
    put_path(&mut kv, "out", &cmd.out);
    cmd.chain.apply(&mut kv);
    let args = BenchArgs::from_keys(&kv)?;
    let report = commands::bench(&args)?;
    print!("{}", commands::render_bench_summary(&report));
    for row in report.replicates.iter().filter(|r| r.result.is_err()) {
        if let Err(msg) = &row.result {
            eprintln!(
                "warning: scenario {} n {} replicate {} {}: {msg}",
                row.scenario, row.n, row.replicate, row.estimator
            );
        }
    }
    println!("metrics in {}", args.out.display());
    Ok(())
}

fn run_diagnose(cmd: DiagnoseCmd) -> CliResult<()> {
    let summaries = commands::diagnose(&cmd.run_dir)?;
    print!("{}", commands::render_diagnostics(&summaries));
    if let Some(out) = cmd.out {
        let mut text = String::from("parameter,mean,sd,q2_5,q25,q50,q75,q97_5,psrf,ess,n_draws\n");
        for s in &summaries {
            let q = s.quantiles;
            text += &format!(
                "{},{},{},{},{},{},{},{},{},{},{}\n",
                s.name,
                s.mean,
                s.sd,
                q[0],
                q[1],
                q[2],
                q[3],
                q[4],
                s.psrf.map_or(String::new(), |r| r.to_string()),
                s.ess,
                s.n_draws
            );
        }
        write_atomic(&out, text.as_bytes())?;
    }
    Ok(())
}

fn run_grid(cmd: GridCmd) -> CliResult<()> {
    let mut kv = KeyValues::default();
    for (k, v) in
        [("grid.x_min", cmd.x_min), ("grid.x_max", cmd.x_max), ("grid.y_min", cmd.y_min), ("grid.y_max", cmd.y_max)]
    {
        kv.set(k, v.to_string());
    }
    kv.set("grid.nx", cmd.nx.to_string());
    kv.set("grid.ny", cmd.ny.to_string());
    let spec = grid_from_keys(&Keys::new(&kv))?;
    let grid = commands::density_grid(&cmd.run_dir, &spec)?;
    let out = cmd.out.unwrap_or_else(|| cmd.run_dir.join("density_grid.csv"));
    write_atomic(&out, render_grid(&grid).as_bytes())?;
    println!("wrote {}x{} grid to {}", spec.nx, spec.ny, out.display());
    Ok(())
}

fn run_elicit(cmd: ElicitCmd) -> CliResult<()> {
    let kv = cmd.config.merged()?;
    let keys = Keys::new(&kv);
    let columns = ColumnMap::from_keys(&keys);
    let log_time = cmd.log_time || keys.flag("log_time")?;
    keys.finish()?;
    let args = ElicitArgs {
        data: cmd.data,
        columns,
        log_time,
        split_fraction: cmd.split_fraction,
        seed: cmd.seed,
        out: cmd.out,
        analysis_out: cmd.analysis_out,
    };
    let report = commands::elicit_priors(&args)?;
    if report.analysis_rows.is_empty() {
        eprintln!("warning: every row went to the training split; the analysis set is empty");
    }
    println!(
        "priors from {} training rows written to {}; {} analysis rows written to {}",
        report.train_rows.len(),
        args.out.display(),
        report.analysis_rows.len(),
        args.analysis_out.display()
    );
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate(c) => run_simulate(c),
        Command::FitDpmiv(c) => run_fit(ModelKind::Dpmiv, c),
        Command::FitPbiv(c) => run_fit(ModelKind::Pbiv, c),
        Command::FitAft(c) => run_fit(ModelKind::Aft, c),
        Command::Bench(c) => run_bench(c),
        Command::Diagnose(c) => run_diagnose(c),
        Command::DensityGrid(c) => run_grid(c),
        Command::ElicitPriors(c) => run_elicit(c),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.report_line());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
