use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use brace_core::harness::{corpus_generate, run_scenario, CorpusTemplate, Scenario, ScenarioKind};
use brace_core::generator::GeneratorConfig;

#[derive(Parser, Debug)]
#[command(name = "brace-lab", version, about = "Budget-relaxed exchange laboratory with Sybil-attack analysis")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Debug)]
struct Common {
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    #[arg(long, global = true)]
    mc_draws: Option<usize>,
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[arg(long, global = true)]
    eta0: Option<f64>,
    #[arg(long, global = true)]
    max_iter: Option<usize>,
    #[arg(long, global = true)]
    restarts: Option<usize>,
    /// Run independent trials on all cores instead of one.
    #[arg(long, global = true)]
    parallel: bool,
    /// Scenario name; defaults to the subcommand.
    #[arg(long, global = true)]
    name: Option<String>,
    /// Extra scenario parameter, `key=value`.
    #[arg(short = 'p', long = "param", global = true, value_parser = parse_kv)]
    params: Vec<(String, String)>,
}

fn parse_kv(s: &str) -> std::result::Result<(String, String), String> {
    s.split_once('=').map(|(k, v)| (k.to_string(), v.to_string())).ok_or_else(|| format!("expected key=value, got `{s}`"))
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum BoundKind {
    Price,
    Welfare,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Solve an economy file.
    Solve { economy: PathBuf },
    /// Apply an attack file to an economy and check both bounds.
    Attack { economy: PathBuf, attack: PathBuf },
    /// Price or welfare bound over a generated corpus.
    Bounds {
        #[arg(long, value_enum, default_value = "price")]
        kind: BoundKind,
        #[arg(long)]
        count: Option<usize>,
    },
    /// Identity and principal misreport gains against market size.
    Spl {
        #[arg(long)]
        reps: Option<usize>,
        /// Comma-separated market sizes.
        #[arg(long)]
        ns: Option<String>,
    },
    /// Check an allocation, or search for a lifting counterexample.
    Fairness { economy: Option<PathBuf>, allocation: Option<PathBuf> },
    /// Clearing audit along a growing Sybil sequence.
    Nonexistence { economy: Option<PathBuf> },
    /// Expected-gain bound over a mixed ensemble.
    Tail {
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Net attack gains against the deterrence threshold.
    Deterrence {
        #[arg(long)]
        k_eps: Option<f64>,
        #[arg(long)]
        count: Option<usize>,
    },
    /// Write generated economy files.
    Corpus {
        #[arg(long, default_value_t = 10)]
        count: usize,
        /// Comma-separated market sizes, cycled.
        #[arg(long, default_value = "50")]
        ns: String,
        #[arg(long, default_value_t = 4)]
        goods: usize,
        #[arg(long, default_value_t = 6)]
        types: usize,
        #[arg(long, default_value_t = 0.2)]
        delta: f64,
    },
    /// Run a scenario file.
    Run { scenario: PathBuf },
}

fn scenario(common: &Common, default_name: &str, kind: ScenarioKind) -> Scenario {
    let mut s = Scenario::new(common.name.as_deref().unwrap_or(default_name), kind, common.seed);
    let flags = [
        ("mc-draws", common.mc_draws.map(|v| v.to_string())),
        ("tol", common.tol.map(|v| v.to_string())),
        ("eta0", common.eta0.map(|v| v.to_string())),
        ("max-iter", common.max_iter.map(|v| v.to_string())),
        ("restarts", common.restarts.map(|v| v.to_string())),
    ];
    for (k, v) in flags {
        if let Some(v) = v {
            s = s.with_param(k, v);
        }
    }
    for (k, v) in &common.params {
        s = s.with_param(k, v);
    }
    s
}

fn param<T: ToString>(s: Scenario, key: &str, v: Option<T>) -> Scenario {
    match v {
        Some(v) => s.with_param(key, v.to_string()),
        None => s,
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let c = &cli.common;
    rayon::ThreadPoolBuilder::new()
        .num_threads(if c.parallel { 0 } else { 1 })
        .build_global()
        .context("configuring the thread pool")?;
    let s = match &cli.cmd {
        Cmd::Solve { economy } => scenario(c, "solve", ScenarioKind::Solve).with_input(economy),
        Cmd::Attack { economy, attack } => scenario(c, "attack", ScenarioKind::Attack).with_input(economy).with_input(attack),
        Cmd::Bounds { kind, count } => {
            let (name, k) = match kind {
                BoundKind::Price => ("price-bound", ScenarioKind::PriceBound),
                BoundKind::Welfare => ("welfare-bound", ScenarioKind::WelfareBound),
            };
            param(scenario(c, name, k), "count", *count)
        }
        Cmd::Spl { reps, ns } => param(param(scenario(c, "spl", ScenarioKind::Spl), "reps", *reps), "ns", ns.clone()),
        Cmd::Fairness { economy, allocation } => {
            let s = scenario(c, "fairness", ScenarioKind::Fairness);
            match (economy, allocation) {
                (Some(e), Some(a)) => s.with_input(e).with_input(a),
                (None, None) => s,
                _ => bail!("fairness takes both an economy and an allocation, or neither"),
            }
        }
        Cmd::Nonexistence { economy } => {
            let s = scenario(c, "nonexistence", ScenarioKind::Nonexistence);
            match economy {
                Some(e) => s.with_input(e),
                None => s,
            }
        }
        Cmd::Tail { trials } => param(scenario(c, "tail", ScenarioKind::Tail), "trials", *trials),
        Cmd::Deterrence { k_eps, count } => {
            param(param(scenario(c, "deterrence", ScenarioKind::Deterrence), "k-eps", *k_eps), "count", *count)
        }
        Cmd::Corpus { count, ns, goods, types, delta } => {
            let ns = ns
                .split(',')
                .map(|x| x.trim().parse::<usize>().with_context(|| format!("bad market size `{x}`")))
                .collect::<Result<Vec<_>>>()?;
            let template = CorpusTemplate {
                generator: GeneratorConfig { goods: *goods, types: *types, delta: *delta, ..GeneratorConfig::default() },
                ns,
            };
            let files = corpus_generate(&template, *count, c.seed, &c.out_dir)?;
            println!("{}", serde_json::to_string_pretty(&files)?);
            return Ok(());
        }
        Cmd::Run { scenario } => {
            let text = std::fs::read_to_string(scenario).with_context(|| format!("reading {}", scenario.display()))?;
            Scenario::from_json(&text)?
        }
    };
    let record = run_scenario(&s, &c.out_dir)?;
    println!("{}", serde_json::to_string_pretty(&record)?);
    Ok(())
}
