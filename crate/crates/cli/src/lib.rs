//! The `pathwise` command line.

use std::fmt::Write as _;
use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use pathwise_core::bundled::{builtin_text, BUILTIN_PREFIX};
use pathwise_core::io::parse_model_unchecked;
use pathwise_core::simulate::simulate_queries;
use pathwise_core::simulate::threads_from_env;
use pathwise_core::{
    build_report, correlate, emit_report, reduce, run_named_queries, serialize_model, simulate, validate,
    Coupling, InfluenceDiagram, ModelFileError, Objective, QueryResult, RowFit, Scenario, SimulationConfig,
};

#[derive(Debug, Parser)]
#[command(name = "pathwise", version, about = "Influence-diagram evaluation of clinical tests under elicited uncertainty")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a model file against every structural and numeric invariant.
    Validate {
        /// Model file, or builtin:copd / builtin:copd-full.
        model: String,
    },
    /// Apply the model's reduction script and drop barren nodes.
    Reduce {
        model: String,
        /// Write the reduced model here instead of standard output.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Exact query probabilities at the best estimates.
    Query {
        model: String,
        #[arg(long)]
        json: bool,
    },
    /// Monte Carlo uncertainty analysis; writes a report directory.
    Simulate {
        model: String,
        #[command(flatten)]
        run: RunArgs,
        #[arg(short, long, default_value = "pathwise-report")]
        out: PathBuf,
    },
    /// Rank a query's inputs by squared correlation with its output.
    Sensitivity {
        model: String,
        #[arg(long)]
        query: String,
        #[arg(long, value_enum)]
        scenario: ScenarioArg,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Serve elicitation sessions over HTTP.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
        /// Directory holding one event log per session.
        #[arg(long, default_value = "pathwise-sessions")]
        data_dir: PathBuf,
    },
}

#[derive(Debug, Clone, clap::Args)]
pub struct RunArgs {
    #[arg(long, default_value_t = pathwise_core::simulate::DEFAULT_DRAWS)]
    pub draws: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = FitArg::ThreePoint)]
    pub fit: FitArg,
    /// Scale of the three-point least-squares fit.
    #[arg(long, value_enum, default_value_t = ObjectiveArg::Probability)]
    pub objective: ObjectiveArg,
    #[arg(long, value_enum, default_value_t = CouplingArg::Shared)]
    pub coupling: CouplingArg,
    #[arg(long, default_value_t = 0.95)]
    pub interval_mass: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FitArg {
    ThreePoint,
    TwoPoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ObjectiveArg {
    Probability,
    Quantile,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CouplingArg {
    Shared,
    Independent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScenarioArg {
    Test,
    NoTest,
}

impl RunArgs {
    pub fn config(&self) -> SimulationConfig {
        let fit = match (self.fit, self.objective) {
            (FitArg::TwoPoint, _) => RowFit::TwoPoint,
            (FitArg::ThreePoint, ObjectiveArg::Probability) => RowFit::ThreePoint(Objective::Probability),
            (FitArg::ThreePoint, ObjectiveArg::Quantile) => RowFit::ThreePoint(Objective::Quantile),
        };
        SimulationConfig {
            draws: self.draws,
            seed: self.seed,
            fit,
            interval_mass: self.interval_mass,
            coupling: match self.coupling {
                CouplingArg::Shared => Coupling::Shared,
                CouplingArg::Independent => Coupling::Independent,
            },
        }
    }
}

/// How a command failed; maps onto the process exit code.
#[derive(Debug)]
pub enum Failure {
    /// The model is malformed or breaks an invariant (exit 1).
    Invalid(String),
    /// Arguments are well-formed but make no sense for this model (exit 2).
    Usage(String),
    /// Anything else: IO, numerical failure (exit 1).
    Other(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Other(e)
    }
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Invalid(_) | Failure::Other(_) => 1,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Invalid(m) | Failure::Usage(m) => f.write_str(m),
            Failure::Other(e) => write!(f, "{e:#}"),
        }
    }
}

/// Model text from a path or a `builtin:` name.
pub fn model_text(arg: &str) -> Result<String, Failure> {
    if let Some(name) = arg.strip_prefix(BUILTIN_PREFIX) {
        return builtin_text(name)
            .map(str::to_string)
            .ok_or_else(|| Failure::Usage(format!("no bundled model `{name}` (try copd or copd-full)")));
    }
    std::fs::read_to_string(arg)
        .with_context(|| format!("reading {arg}"))
        .map_err(Failure::Other)
}

fn describe_invalid(arg: &str, e: &ModelFileError) -> String {
    match e {
        ModelFileError::Validation(vs) => {
            let mut s = format!("{arg}: {} violation(s)", vs.len());
            for v in vs {
                let _ = write!(s, "\n  {v}");
            }
            s
        }
        other => format!("{arg}: {other}"),
    }
}

pub fn load(arg: &str) -> Result<InfluenceDiagram, Failure> {
    let text = model_text(arg)?;
    let d = parse_model_unchecked(&text).map_err(|e| Failure::Invalid(describe_invalid(arg, &e)))?;
    let violations = validate(&d);
    if !violations.is_empty() {
        return Err(Failure::Invalid(describe_invalid(arg, &ModelFileError::Validation(violations))));
    }
    Ok(d)
}

fn percent(r: &pathwise_core::Reduction) -> String {
    r.value().map_or_else(|| "n/a".to_string(), |v| format!("{:.1}%", 100.0 * v))
}

/// Fixed-width table of exact query results.
pub fn query_table(d: &InfluenceDiagram, results: &[QueryResult]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<6} {:>9} {:>12} {:>10} {:>10}  title",
        "query", "with test", "without test", "reduction", "(exact)"
    );
    for r in results {
        let title = d.query(&r.name).and_then(|q| q.title.as_deref()).unwrap_or("");
        let _ = writeln!(
            out,
            "{:<6} {:>9.3} {:>12.3} {:>10} {:>10}  {}",
            r.name,
            r.p_with_test,
            r.p_without_test,
            percent(&r.displayed_reduction),
            percent(&r.reduction),
            title
        );
    }
    out
}

pub fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Validate { model } => {
            let d = load(&model)?;
            println!(
                "{model}: valid ({} nodes, {} elicited cells, {} queries)",
                d.nodes.len(),
                d.elicited_cells().len(),
                d.queries.len()
            );
        }
        Command::Reduce { model, out } => {
            let d = load(&model)?;
            let reduced = reduce(&d).context("reducing")?;
            let text = serialize_model(&reduced);
            match out {
                Some(path) => std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?,
                None => print!("{text}"),
            }
        }
        Command::Query { model, json } => {
            let d = load(&model)?;
            let results = run_named_queries(&d).context("evaluating queries")?;
            if json {
                println!("{}", serde_json::to_string_pretty(&results).expect("results serialize"));
            } else {
                print!("{}", query_table(&d, &results));
            }
        }
        Command::Simulate { model, run, out } => {
            let d = load(&model)?;
            let sim = simulate(&d, &run.config()).map_err(|e| Failure::Other(e.into()))?;
            let bundle = build_report(&d, &sim).context("building report")?;
            std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let files = emit_report(&bundle, &out).context("writing report")?;
            for q in &bundle.queries {
                for s in Scenario::BOTH {
                    let st = &q.scenario(s).summary;
                    println!(
                        "{} {:<7} median {:.4}  95% empirical ({:.4}, {:.4})  beta ({:.4}, {:.4})",
                        q.name,
                        s.tag(),
                        st.median,
                        st.empirical_interval.lo,
                        st.empirical_interval.hi,
                        st.beta_interval.lo,
                        st.beta_interval.hi
                    );
                }
            }
            println!("wrote {} files to {}", files.len(), out.display());
        }
        Command::Sensitivity {
            model,
            query,
            scenario,
            run,
        } => {
            let d = load(&model)?;
            let def = d
                .query(&query)
                .ok_or_else(|| {
                    let names: Vec<&str> = d.queries.iter().map(|q| q.name.as_str()).collect();
                    Failure::Usage(format!("no query `{query}` in this model (have {})", names.join(", ")))
                })?
                .clone();
            let s = match scenario {
                ScenarioArg::Test => Scenario::Test,
                ScenarioArg::NoTest => Scenario::NoTest,
            };
            let sim = simulate_queries(&d, &[&def], &run.config(), threads_from_env())
                .map_err(|e| Failure::Other(e.into()))?;
            let traces = sim.traces(&d, &def, s).context("tracing inputs")?;
            let output = sim.queries[0].scenario(s);
            let ranking = correlate(output, &traces).context("correlating")?;
            println!("{:>4} {:<8} {:>8} {:>8}  cell", "rank", "input", "r", "r2");
            for e in &ranking.entries {
                println!("{:>4} {:<8} {:>8.4} {:>8.4}  {}", e.rank, e.label, e.r, e.r2, e.key);
            }
        }
        Command::Serve { port, host, data_dir } => {
            let runtime = tokio::runtime::Runtime::new().context("starting runtime")?;
            runtime
                .block_on(pathwise_session::serve(SocketAddr::new(host, port), data_dir))
                .map_err(|e| Failure::Other(e.into()))?;
        }
    }
    Ok(())
}
