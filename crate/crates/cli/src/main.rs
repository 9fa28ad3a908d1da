use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use latent_forest::gaussian::{read_covariance_csv, read_samples_csv};
use latent_forest::{
    bic, em_fit, initial_tree, model_dimension, pruned_chain, rlct_forest_pair, rlct_monomial_sos, run_experiment,
    select_exhaustive, subforest_lattice, suff_stats, suff_stats_from_cov, Criterion, EmConfig, ExperimentConfig,
    Forest, MonomialSos, Rlct, SufficientStats,
};
use serde::Serialize;
use serde_json::json;

mod output;

use output::{print_json, score_line, SCORE_HEADER};

/// Gaussian latent forest models: learning coefficients, EM fits and
/// singular BIC model selection.
#[derive(Parser, Debug)]
#[command(name = "lforest", version, about)]
struct Cli {
    /// Print machine-readable JSON instead of text; errors go to stderr as JSON.
    #[arg(long, global = true)]
    json: bool,
    /// Master seed for EM restarts and simulations.
    #[arg(long, global = true, env = "LF_SEED")]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Learning coefficient queries.
    #[command(subcommand)]
    Rlct(RlctCommand),
    /// Maximum likelihood fit of one forest model by EM.
    Fit(FitArgs),
    /// Score every candidate submodel of a tree and pick one.
    Select(SelectArgs),
    /// Run a simulation experiment from a JSON config.
    Simulate(SimulateArgs),
    /// List the model classes of a tree with their edge-subset codes.
    Lattice(LatticeArgs),
}

#[derive(Subcommand, Debug)]
enum RlctCommand {
    /// Closed form for a host forest and the minimal forest of the truth.
    Forest {
        #[arg(long)]
        host: PathBuf,
        #[arg(long)]
        sub: PathBuf,
    },
    /// Newton polyhedron computation for a sum of squared monomial terms.
    Mono {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

#[derive(Args, Debug)]
struct DataArgs {
    /// Samples CSV: header of observed ids, one row per observation.
    #[arg(long, required_unless_present = "cov", conflicts_with = "cov")]
    data: Option<PathBuf>,
    /// Covariance CSV used directly as the sample covariance.
    #[arg(long, requires = "n")]
    cov: Option<PathBuf>,
    /// Sample size behind --cov.
    #[arg(long)]
    n: Option<usize>,
    /// Subtract column means before forming the covariance.
    #[arg(long)]
    center: bool,
}

#[derive(Args, Debug)]
struct EmArgs {
    #[arg(long, default_value_t = EmConfig::default().restarts)]
    restarts: usize,
    #[arg(long, default_value_t = EmConfig::default().max_iter)]
    max_iter: usize,
    #[arg(long, default_value_t = EmConfig::default().rel_tol)]
    rel_tol: f64,
}

impl EmArgs {
    fn config(&self, seed: u64) -> EmConfig {
        EmConfig { restarts: self.restarts, max_iter: self.max_iter, rel_tol: self.rel_tol, seed, ..Default::default() }
    }
}

#[derive(Args, Debug)]
struct FitArgs {
    #[arg(long)]
    forest: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    em: EmArgs,
    /// Also write the fitted parameters as JSON to this path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum CriterionArg {
    Bic,
    Sbic,
}

impl From<CriterionArg> for Criterion {
    fn from(c: CriterionArg) -> Self {
        match c {
            CriterionArg::Bic => Criterion::Bic,
            CriterionArg::Sbic => Criterion::Sbic,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "lowercase")]
enum LatticeMode {
    Exhaustive,
    Chain,
}

#[derive(Args, Debug)]
struct SelectArgs {
    /// Host tree; built from the data by neighbor joining when omitted.
    #[arg(long)]
    tree: Option<PathBuf>,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum, default_value = "sbic")]
    criterion: CriterionArg,
    #[arg(long, value_enum, default_value = "exhaustive")]
    lattice: LatticeMode,
    #[command(flatten)]
    em: EmArgs,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    /// Directory for counts.csv, lattice_edges.csv and result.json.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct LatticeArgs {
    #[arg(long)]
    tree: PathBuf,
}

/// Input problems exit with 2, failed computations with 1.
enum Failure {
    Usage(anyhow::Error),
    Compute(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Compute(e.into())
    }
}

fn read_input(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display())).map_err(Failure::Usage)
}

fn read_forest(path: &Path) -> Result<Forest, Failure> {
    let s = read_input(path)?;
    Ok(Forest::from_json(&s).with_context(|| format!("invalid forest in {}", path.display()))?)
}

fn read_stats(d: &DataArgs) -> Result<SufficientStats, Failure> {
    if let Some(path) = &d.data {
        let s = read_input(path)?;
        let (ids, x) = read_samples_csv(s.as_bytes()).with_context(|| format!("invalid samples in {}", path.display()))?;
        Ok(suff_stats(&x, &ids, d.center)?)
    } else {
        let path = d.cov.as_ref().expect("clap requires --data or --cov");
        let s = read_input(path)?;
        let (ids, sigma) =
            read_covariance_csv(s.as_bytes()).with_context(|| format!("invalid covariance in {}", path.display()))?;
        Ok(suff_stats_from_cov(&sigma, d.n.expect("clap requires --n with --cov"), &ids))
    }
}

#[derive(Serialize)]
struct RlctJson {
    lambda: String,
    lambda_num: i64,
    lambda_den: i64,
    mult: u32,
}

impl From<Rlct> for RlctJson {
    fn from(r: Rlct) -> Self {
        RlctJson { lambda: r.lambda.to_string(), lambda_num: *r.lambda.numer(), lambda_den: *r.lambda.denom(), mult: r.mult }
    }
}

fn run_rlct(cmd: &RlctCommand, json_out: bool, out: &mut impl Write) -> Result<(), Failure> {
    let r = match cmd {
        RlctCommand::Forest { host, sub } => rlct_forest_pair(&read_forest(host)?, &read_forest(sub)?)?,
        RlctCommand::Mono { input } => {
            let sys = MonomialSos::from_json(&read_input(input)?)
                .with_context(|| format!("invalid monomial system in {}", input.display()))?;
            rlct_monomial_sos(&sys)?
        }
    };
    if json_out {
        print_json(out, &RlctJson::from(r))
    } else {
        writeln!(out, "{r}")?;
        Ok(())
    }
}

fn run_fit(a: &FitArgs, seed: u64, json_out: bool, out: &mut impl Write) -> Result<(), Failure> {
    let f = read_forest(&a.forest)?;
    let stats = read_stats(&a.data)?;
    let fit = em_fit(&f, &stats, &a.em.config(seed))?;
    let dim = model_dimension(&f);
    let params = fit.params.to_json(&f);
    if let Some(path) = &a.out {
        fs::write(path, serde_json::to_string_pretty(&params)? + "\n")
            .with_context(|| format!("cannot write {}", path.display()))?;
    }
    if json_out {
        let j = json!({
            "n": stats.n,
            "dim": dim,
            "loglik": fit.loglik,
            "bic": bic(fit.loglik, dim, stats.n),
            "iters": fit.iters,
            "converged": fit.converged,
            "params": params,
        });
        return print_json(out, &j);
    }
    writeln!(out, "loglik={:.10} dim={dim} bic={:.10}", fit.loglik, bic(fit.loglik, dim, stats.n))?;
    writeln!(out, "iters={} converged={}", fit.iters, fit.converged)?;
    for (id, v) in &params.leaf_var {
        writeln!(out, "var {id} {v:.10}")?;
    }
    for (e, r) in &params.edge_corr {
        writeln!(out, "corr {e} {r:.10}")?;
    }
    Ok(())
}

fn run_select(a: &SelectArgs, seed: u64, json_out: bool, out: &mut impl Write) -> Result<(), Failure> {
    let stats = read_stats(&a.data)?;
    let cfg = a.em.config(seed);
    let tree = match &a.tree {
        Some(p) => read_forest(p)?,
        None => initial_tree(&stats, &cfg)?,
    };
    let criterion = Criterion::from(a.criterion);
    let (rows, selected, model_base) = match a.lattice {
        LatticeMode::Exhaustive => {
            let (_, sel) = select_exhaustive(&tree, &stats, criterion, &cfg)?;
            (sel.table.rows, sel.selected, 1)
        }
        LatticeMode::Chain => {
            let ch = pruned_chain(&tree, &stats, &cfg)?;
            let s = match criterion {
                Criterion::Bic => ch.selected_bic,
                Criterion::Sbic => ch.selected_sbic,
            };
            (ch.table.rows, s, 0)
        }
    };
    if json_out {
        let j = json!({
            "criterion": criterion,
            "lattice": a.lattice,
            "n": stats.n,
            "tree": latent_forest::forest::ForestJson::from(&tree),
            "selected": selected + model_base,
            "rows": rows,
        });
        return print_json(out, &j);
    }
    writeln!(out, "{SCORE_HEADER}")?;
    for r in &rows {
        writeln!(out, "{}", score_line(r.class + model_base, r))?;
    }
    let s = &rows[selected];
    writeln!(out, "selected {criterion} model={} code={}", selected + model_base, s.code)?;
    Ok(())
}

fn run_simulate(a: &SimulateArgs, seed: Option<u64>, json_out: bool, out: &mut impl Write) -> Result<(), Failure> {
    let mut cfg = ExperimentConfig::from_json(&read_input(&a.config)?)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(a.threads.unwrap_or(0)).build()?;
    let res = pool.install(|| run_experiment(&cfg))?;
    if let Some(dir) = &a.out_dir {
        res.write_dir(dir)?;
    }
    if json_out {
        return print_json(out, &res);
    }
    writeln!(out, "leaves,n,criterion,model,code,truth,count,replicates")?;
    for r in &res.counts {
        writeln!(out, "{},{},{},{},{},{},{},{}", r.leaves, r.n, r.criterion, r.model, r.code, r.truth, r.count, r.replicates)?;
    }
    Ok(())
}

fn run_lattice(a: &LatticeArgs, json_out: bool, out: &mut impl Write) -> Result<(), Failure> {
    let tree = read_forest(&a.tree)?;
    let lattice = subforest_lattice(&tree)?;
    if json_out {
        let rows: Vec<_> = (0..lattice.len())
            .map(|c| {
                let cl = lattice.class(c);
                json!({"model": c + 1, "code": lattice.code(c), "dim": cl.dim(), "depth": cl.depth()})
            })
            .collect();
        return print_json(out, &json!({ "classes": rows }));
    }
    for c in 0..lattice.len() {
        let cl = lattice.class(c);
        writeln!(out, "{}\t{}\tdim={}\tdepth={}", c + 1, lattice.code(c), cl.dim(), cl.depth())?;
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let seed = cli.seed.unwrap_or(0);
    match &cli.command {
        Command::Rlct(c) => run_rlct(c, cli.json, &mut out),
        Command::Fit(a) => run_fit(a, seed, cli.json, &mut out),
        Command::Select(a) => run_select(a, seed, cli.json, &mut out),
        Command::Simulate(a) => run_simulate(a, cli.seed, cli.json, &mut out),
        Command::Lattice(a) => run_lattice(a, cli.json, &mut out),
    }
}

fn report(kind: &str, msg: &str, json_err: bool) {
    if json_err {
        eprintln!("{}", json!({ "error": { "kind": kind, "message": msg } }));
    } else {
        eprintln!("error: {msg}");
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            if std::env::args().any(|a| a == "--json") {
                report("usage", e.to_string().trim(), true);
            } else {
                let _ = e.print();
            }
            return ExitCode::from(2);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            report("usage", &format!("{e:#}"), cli.json);
            ExitCode::from(2)
        }
        Err(Failure::Compute(e)) => {
            report("computation", &format!("{e:#}"), cli.json);
            ExitCode::from(1)
        }
    }
}
