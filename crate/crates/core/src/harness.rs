//! Scenario runner: parses scenario and input files, dispatches to the
//! experiment pipelines and writes CSV and JSON results.
//!
//! Every CSV gets trailing `seed` and `config_hash` columns. Floats are
//! printed with 9 significant digits. Unsatisfied bounds are results, not
//! errors.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::bounds::{deterrence_threshold, fit_k_eps};
use crate::canonical;
use crate::economy::{build_economy, Bundle, Economy, EconomySpec, EndowmentEntry, IdentityType, Lottery, SybilAttack, WeakOrder};
use crate::error::{Error, Result};
use crate::experiments::{
    corpus_deterrence, evaluate_attack, run_corpus, run_deterrence_trials, run_tail_trials, spl_curves, tail_bound_check,
    tail_constant, Baseline, CorpusConfig, CorpusSummary, EvalConfig, SplConfig,
};
use crate::fairness::{jef_lift_check, search_lift_counterexample, Trigger};
use crate::generator::{self, GeneratorConfig};
use crate::solver::{feasibility_audit, solve_brace, verify_clearing, SolverConfig};
use crate::sybil::{misreport_attack, phantom_attack, split_identity, unbounded_sybil_sequence, SequenceStep};

pub const TOOL_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    Solve,
    Attack,
    PriceBound,
    WelfareBound,
    Spl,
    Fairness,
    Nonexistence,
    Tail,
    Deterrence,
}

impl ScenarioKind {
    /// Accepted numbers of input files.
    fn inputs(self) -> &'static [usize] {
        match self {
            ScenarioKind::Solve => &[1],
            ScenarioKind::Attack => &[2],
            ScenarioKind::Fairness => &[0, 2],
            ScenarioKind::Nonexistence => &[0, 1],
            _ => &[0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub kind: ScenarioKind,
    #[serde(default)]
    pub inputs: Vec<PathBuf>,
    #[serde(default)]
    pub params: BTreeMap<String, String>,
    pub seed: u64,
}

impl Scenario {
    pub fn new(name: &str, kind: ScenarioKind, seed: u64) -> Self {
        Scenario { name: name.to_string(), kind, inputs: Vec::new(), params: BTreeMap::new(), seed }
    }

    pub fn with_input(mut self, p: impl Into<PathBuf>) -> Self {
        self.inputs.push(p.into());
        self
    }

    pub fn with_param(mut self, k: &str, v: impl Display) -> Self {
        self.params.insert(k.to_string(), v.to_string());
        self
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(Error::Precondition(format!("bad scenario name `{}`", self.name)));
        }
        if !self.kind.inputs().contains(&self.inputs.len()) {
            return Err(Error::Precondition(format!(
                "{:?} takes {:?} input files, got {}",
                self.kind,
                self.kind.inputs(),
                self.inputs.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub scenario: Scenario,
    pub outputs: Vec<PathBuf>,
    pub wall_time: f64,
    pub tool_version: String,
    pub config_hash: String,
}

/// SHA-256 over the kind, parameters, seed and input file contents.
pub fn config_hash(s: &Scenario) -> Result<String> {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(&(s.kind, &s.params, s.seed))?);
    for p in &s.inputs {
        h.update(std::fs::read(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?);
    }
    Ok(hex::encode(h.finalize()))
}

/// `%.9g`-style formatting.
pub fn fmt_float(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.8e}");
    let (mant, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if (-5..9).contains(&exp) {
        trim(&format!("{:.*}", (8 - exp) as usize, x))
    } else {
        format!("{}e{}{:02}", trim(mant), if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Bool(bool),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) => fmt_float(*v),
            Cell::Bool(v) => v.to_string(),
            Cell::Text(v) => v.clone(),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self, seed: u64, hash: &str) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = self.header.clone();
        header.extend(["seed".to_string(), "config_hash".to_string()]);
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec: Vec<String> = r.iter().map(Cell::render).collect();
            rec.push(seed.to_string());
            rec.push(hash.to_string());
            w.write_record(&rec)?;
        }
        w.into_inner().map_err(|e| Error::Io(e.to_string()))
    }
}

struct Params<'a>(&'a BTreeMap<String, String>);

impl Params<'_> {
    fn get<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.0.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| Error::Parse(format!("parameter {key}: cannot parse `{v}`"))),
        }
    }

    fn list<T: FromStr>(&self, key: &str, default: Vec<T>) -> Result<Vec<T>> {
        match self.0.get(key) {
            None => Ok(default),
            Some(v) => v
                .split(',')
                .map(|x| x.trim().parse().map_err(|_| Error::Parse(format!("parameter {key}: cannot parse `{x}`"))))
                .collect(),
        }
    }

    fn opt<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.0.get(key).map(|v| v.parse().map_err(|_| Error::Parse(format!("parameter {key}: cannot parse `{v}`")))).transpose()
    }

    fn solver(&self, seed: u64) -> Result<SolverConfig> {
        let d = SolverConfig::default();
        Ok(SolverConfig {
            eta0: self.get("eta0", d.eta0)?,
            tol: self.get("tol", d.tol)?,
            max_iter: self.get("max-iter", d.max_iter)?,
            restarts: self.get("restarts", d.restarts)?,
            mc_draws: self.get("mc-draws", d.mc_draws)?,
            seed,
            ..d
        })
    }

    fn eval(&self, seed: u64) -> Result<EvalConfig> {
        let solver = self.solver(seed)?;
        Ok(EvalConfig { restarts: solver.restarts.max(3), solver, ..EvalConfig::default() })
    }

    fn generator(&self, base: GeneratorConfig) -> Result<GeneratorConfig> {
        Ok(GeneratorConfig {
            goods: self.get("goods", base.goods)?,
            types: self.get("types", base.types)?,
            max_list: self.get("max-list", base.max_list)?,
            two_class: self.get("two-class", base.two_class)?,
            delta: self.get("delta", base.delta)?,
        })
    }

    fn corpus(&self) -> Result<CorpusConfig> {
        let d = CorpusConfig::default();
        Ok(CorpusConfig {
            n: self.get("n", d.n)?,
            generator: self.generator(d.generator)?,
            max_alpha: self.get("max-alpha", d.max_alpha)?,
            principal: d.principal,
        })
    }
}

/// Reads and validates an economy file.
pub fn load_economy(path: &Path) -> Result<Economy> {
    let s = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    build_economy(&EconomySpec::from_json(&s)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeSpec {
    /// Defaults to the identity's reported endowment.
    #[serde(default)]
    pub endowment: Option<Vec<EndowmentEntry>>,
    pub order: Vec<Vec<Bundle>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPiece {
    pub id: String,
    pub share: f64,
    pub order: Vec<Vec<Bundle>>,
}

/// Attack file schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AttackSpec {
    Empty {
        principal: String,
    },
    Split {
        principal: String,
        identity: String,
        pieces: Vec<SplitPiece>,
    },
    Misreport {
        principal: String,
        retyping: BTreeMap<String, TypeSpec>,
        #[serde(default)]
        endowment_misreport: bool,
    },
    Phantom {
        principal: String,
        designated_good: usize,
        beta: f64,
        count: usize,
    },
}

impl AttackSpec {
    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn principal(&self) -> &str {
        match self {
            AttackSpec::Empty { principal }
            | AttackSpec::Split { principal, .. }
            | AttackSpec::Misreport { principal, .. }
            | AttackSpec::Phantom { principal, .. } => principal,
        }
    }

    pub fn build(&self, e: &Economy) -> Result<SybilAttack> {
        match self {
            AttackSpec::Empty { principal } => Ok(SybilAttack::empty(principal)),
            AttackSpec::Split { principal, identity, pieces } => {
                let k = e.index_of(identity).ok_or_else(|| Error::UnknownIdentity(identity.clone()))?;
                if e.identities()[k].principal != *principal {
                    return Err(Error::InvalidAttack(format!("`{identity}` is not owned by `{principal}`")));
                }
                let pieces = pieces
                    .iter()
                    .map(|p| Ok((p.id.clone(), p.share, WeakOrder::new(p.order.clone())?)))
                    .collect::<Result<Vec<_>>>()?;
                split_identity(e, identity, &pieces)
            }
            AttackSpec::Misreport { principal, retyping, endowment_misreport } => {
                let retypes = retyping
                    .iter()
                    .map(|(id, t)| {
                        let k = e.index_of(id).ok_or_else(|| Error::UnknownIdentity(id.clone()))?;
                        let endowment = match &t.endowment {
                            Some(es) => Lottery::new(es.iter().map(|x| (x.bundle.clone(), x.prob)).collect())?,
                            None => e.identities()[k].ty.endowment.clone(),
                        };
                        Ok((id.clone(), IdentityType::new(endowment, WeakOrder::new(t.order.clone())?)?))
                    })
                    .collect::<Result<Vec<_>>>()?;
                misreport_attack(e, principal, &retypes, *endowment_misreport)
            }
            AttackSpec::Phantom { principal, designated_good, beta, count } => {
                phantom_attack(e, principal, *designated_good, *beta, *count)
            }
        }
    }
}

/// Runs `s`, writing `<name>.csv` and `<name>.json` into `out_dir`.
pub fn run_scenario(s: &Scenario, out_dir: &Path) -> Result<RunRecord> {
    s.validate()?;
    let hash = config_hash(s)?;
    let start = Instant::now();
    let (table, report) = dispatch(s)?;
    std::fs::create_dir_all(out_dir)?;
    let csv_path = out_dir.join(format!("{}.csv", s.name));
    let json_path = out_dir.join(format!("{}.json", s.name));
    std::fs::write(&csv_path, table.to_csv(s.seed, &hash)?)?;
    let report = json!({ "scenario": s, "config_hash": hash, "tool_version": TOOL_VERSION, "report": report });
    std::fs::write(&json_path, serde_json::to_string_pretty(&report)? + "\n")?;
    Ok(RunRecord {
        scenario: s.clone(),
        outputs: vec![csv_path, json_path],
        wall_time: start.elapsed().as_secs_f64(),
        tool_version: TOOL_VERSION.to_string(),
        config_hash: hash,
    })
}

fn dispatch(s: &Scenario) -> Result<(Table, Value)> {
    let p = Params(&s.params);
    match s.kind {
        ScenarioKind::Solve => run_solve(s, &p),
        ScenarioKind::Attack => run_attack(s, &p),
        ScenarioKind::PriceBound | ScenarioKind::WelfareBound => run_bounds(s, &p),
        ScenarioKind::Spl => run_spl(s, &p),
        ScenarioKind::Fairness => run_fairness(s, &p),
        ScenarioKind::Nonexistence => run_nonexistence(s, &p),
        ScenarioKind::Tail => run_tail(s, &p),
        ScenarioKind::Deterrence => run_deterrence(s, &p),
    }
}

fn run_solve(s: &Scenario, p: &Params) -> Result<(Table, Value)> {
    let e = load_economy(&s.inputs[0])?;
    let cfg = p.solver(s.seed)?;
    let r = solve_brace(&e, &cfg)?;
    let rep = verify_clearing(&e, &r, cfg.tol, cfg.tol_p)?;
    let mut t = Table::new(&["good", "price", "demand", "supply", "slack", "priced", "pass", "converged", "residual"]);
    for (j, g) in rep.goods.iter().enumerate() {
        t.push(vec![
            e.goods()[j].as_str().into(),
            r.prices.as_slice()[j].into(),
            g.demand.into(),
            g.supply.into(),
            g.slack.into(),
            g.priced.into(),
            g.pass.into(),
            r.converged.into(),
            r.residual.into(),
        ]);
    }
    Ok((t, json!({ "equilibrium": r, "clearing": rep })))
}

fn run_attack(s: &Scenario, p: &Params) -> Result<(Table, Value)> {
    let e = load_economy(&s.inputs[0])?;
    let spec_text = std::fs::read_to_string(&s.inputs[1]).map_err(|err| Error::Io(format!("{}: {err}", s.inputs[1].display())))?;
    let a = AttackSpec::from_json(&spec_text)?.build(&e)?;
    let cfg = p.eval(s.seed)?;
    let base = Baseline::new(&e, &cfg, p.get("bad-region", true)?)?;
    let ev = evaluate_attack(&base, &a, &cfg)?;
    let mut t = Table::new(&[
        "principal",
        "alpha",
        "price_shift",
        "price_bound",
        "price_satisfied",
        "gain",
        "realized_gain",
        "welfare_bound",
        "welfare_satisfied",
        "in_bad_region",
    ]);
    t.push(vec![
        a.principal.as_str().into(),
        ev.alpha.into(),
        ev.price.observed.into(),
        ev.price.bound.into(),
        ev.price.satisfied.into(),
        ev.gains.price_channel.into(),
        ev.gains.realized.into(),
        ev.welfare.bound.into(),
        ev.welfare.satisfied.into(),
        ev.in_bad_region.into(),
    ]);
    Ok((t, json!({ "attack": a, "evaluation": ev })))
}

fn run_bounds(s: &Scenario, p: &Params) -> Result<(Table, Value)> {
    let count: usize = p.get("count", 100)?;
    let trials = run_corpus(&p.corpus()?, &p.eval(s.seed)?, count, s.seed)?;
    let welfare = s.kind == ScenarioKind::WelfareBound;
    let mut t = Table::new(&["trial_seed", "n", "alpha", "observed", "bound", "satisfied", "in_bad_region", "eps_hat"]);
    let eps = trials.iter().filter(|t| t.in_bad_region).count() as f64 / trials.len().max(1) as f64;
    for tr in &trials {
        let b = if welfare { &tr.evaluation.welfare } else { &tr.evaluation.price };
        t.push(vec![
            tr.seed.into(),
            tr.n.into(),
            b.alpha.into(),
            b.observed.into(),
            b.bound.into(),
            b.satisfied.into(),
            tr.in_bad_region.into(),
            eps.into(),
        ]);
    }
    let summary = CorpusSummary::of(&trials);
    Ok((t, json!({ "summary": summary, "price_rate": summary.price_rate(), "welfare_rate": summary.welfare_rate(), "trials": trials })))
}

fn spl_config(p: &Params) -> Result<SplConfig> {
    let d = SplConfig::default();
    Ok(SplConfig {
        ns: p.list("ns", d.ns)?,
        reps: p.get("reps", d.reps)?,
        identity_samples: p.get("identity-samples", d.identity_samples)?,
        principal_samples: p.get("principal-samples", d.principal_samples)?,
        share: p.get("share", d.share)?,
        generator: p.generator(d.generator)?,
        solver: SolverConfig { mc_draws: p.get("mc-draws", d.solver.mc_draws)?, ..p.solver(0)? },
    })
}

fn run_spl(s: &Scenario, p: &Params) -> Result<(Table, Value)> {
    let tab = spl_curves(&spl_config(p)?, s.seed)?;
    let mut t = Table::new(&[
        "n",
        "identity_gain_mean",
        "identity_gain_se",
        "principal_gain_mean",
        "principal_gain_se",
        "skipped",
    ]);
    for r in &tab.rows {
        t.push(vec![
            r.n.into(),
            r.identity_gain_mean.into(),
            r.identity_gain_se.into(),
            r.principal_gain_mean.into(),
            r.principal_gain_se.into(),
            r.skipped.into(),
        ]);
    }
    Ok((t, json!({ "spearman_identity": tab.identity_trend(), "spearman_identity_pooled": tab.identity_trend_pooled(), "table": tab })))
}

fn run_fairness(s: &Scenario, p: &Params) -> Result<(Table, Value)> {
    let mut t = Table::new(&["identities", "principals", "identity_level_pass", "principal_level_pass", "instances_checked"]);
    if s.inputs.len() == 2 {
        let e = load_economy(&s.inputs[0])?;
        let text = std::fs::read_to_string(&s.inputs[1]).map_err(|err| Error::Io(format!("{}: {err}", s.inputs[1].display())))?;
        let alloc: Vec<Bundle> = serde_json::from_str(&text)?;
        let trigger = match p.opt::<String>("prices")? {
            Some(_) => Trigger::PValuation(p.list("prices", Vec::new())?),
            None => Trigger::SetInclusion,
        };
        let v = jef_lift_check(&alloc, &e, &trigger)?;
        t.push(vec![e.n().into(), v.principals.len().into(), v.identity.pass.into(), v.principal.pass.into(), 1usize.into()]);
        return Ok((t, json!({ "verdict": v })));
    }
    let principals = p.get("principals", 3)?;
    let goods = p.get("goods", 4)?;
    let mut identities = p.get("identities", 4)?;
    let ir = p.get("individually-rational", true)?;
    let mut r = search_lift_counterexample(principals, goods, identities, ir)?;
    let mut widened = false;
    if r.found.is_none() && p.get("widen", true)? {
        identities += 1;
        r = search_lift_counterexample(principals, goods, identities, ir)?;
        widened = true;
    }
    let (ip, pp, n, np) = match &r.found {
        Some(c) => (c.verdict.identity.pass, c.verdict.principal.pass, c.allocation.len(), c.verdict.principals.len()),
        None => (false, false, 0, 0),
    };
    t.push(vec![n.into(), np.into(), ip.into(), pp.into(), r.instances_checked.into()]);
    Ok((t, json!({ "search": r, "widened": widened })))
}

fn run_nonexistence(s: &Scenario, p: &Params) -> Result<(Table, Value)> {
    let delta: f64 = p.get("delta", 0.1)?;
    let base = match s.inputs.first() {
        Some(path) => load_economy(path)?.with_delta(delta)?,
        None => canonical::example_one(delta),
    };
    let principal: String = p.get("principal", "P".to_string())?;
    let good: usize = p.get("good", 1)?;
    let beta: f64 = p.get("beta", 0.5)?;
    let steps: usize = p.get("steps", 10)?;
    let schedule: Vec<usize> = (1..=steps).collect();
    let seq: Vec<SequenceStep> = unbounded_sybil_sequence(&base, &principal, &schedule, good, beta)?.collect::<Result<_>>()?;
    let first = feasibility_audit(&seq, beta, good, delta)?;
    let cfg = p.solver(s.seed)?;
    let mut t = Table::new(&["k", "sybil_share", "demand", "limit", "clearing_pass", "converged", "audit_violation"]);
    for (k, step) in seq.iter().enumerate() {
        let r = solve_brace(&step.economy, &cfg)?;
        let rep = verify_clearing(&step.economy, &r, cfg.tol, cfg.tol_p)?;
        let g = &rep.goods[good];
        t.push(vec![
            (k + 1).into(),
            step.sybil_share().into(),
            g.demand.into(),
            ((1.0 + delta) * step.economy.capacity()[good] as f64).into(),
            g.pass.into(),
            r.converged.into(),
            first.is_some_and(|f| k + 1 >= f).into(),
        ]);
    }
    Ok((t, json!({ "first_violation": first, "good": good, "beta": beta, "delta": delta })))
}

fn run_tail(s: &Scenario, p: &Params) -> Result<(Table, Value)> {
    let trials_n: usize = p.get("trials", 60)?;
    let deltas: Vec<f64> = p.list("deltas", vec![0.5, 1.0, 2.0])?;
    let cfg = p.corpus()?;
    let trials = run_tail_trials(&cfg, &deltas, &p.eval(s.seed)?, trials_n, s.seed)?;
    let c_u = match p.opt::<f64>("c-u")? {
        Some(c) => c,
        None => tail_constant(&trials),
    };
    let u_bar = match p.opt::<f64>("u-bar")? {
        Some(u) => u,
        None => trials.iter().map(|t| t.utility_range).fold(0.0, f64::max),
    };
    let alpha = p.get("alpha", cfg.max_alpha)?;
    let rep = tail_bound_check(&trials, alpha, c_u, u_bar)?;
    let mut t = Table::new(&["n", "alpha", "observed", "bound", "satisfied", "eps_hat", "std_error", "trials"]);
    t.push(vec![
        cfg.n.into(),
        alpha.into(),
        rep.mean_gain.into(),
        rep.rhs.into(),
        rep.satisfied.into(),
        rep.eps_hat.into(),
        rep.std_error.into(),
        rep.trials.into(),
    ]);
    Ok((t, json!({ "report": rep, "c_u": c_u, "u_bar": u_bar, "trials": trials })))
}

fn run_deterrence(s: &Scenario, p: &Params) -> Result<(Table, Value)> {
    let eps: f64 = p.get("eps", 0.1)?;
    let k_eps = match p.opt::<f64>("k-eps")? {
        Some(k) => k,
        None => fit_k_eps(&spl_curves(&spl_config(p)?, s.seed)?.identity_curve(), eps),
    };
    let count: usize = p.get("count", 100)?;
    let trials = run_deterrence_trials(&p.corpus()?, &p.eval(s.seed)?, count, s.seed)?;
    let with_cost = corpus_deterrence(&trials, &|k, n, est| {
        deterrence_threshold(k, n, k_eps, eps, est.l_hat, est.l_z_hat, est.gamma_hat)
    })?;
    let free = corpus_deterrence(&trials, &|_, _, _| Ok(0.0))?;
    let mut t = Table::new(&["c_sys", "k_eps", "eps", "max_net_gain", "std_error", "deterred", "attacks"]);
    for (name, r) in [("threshold", &with_cost), ("zero", &free)] {
        t.push(vec![
            name.into(),
            k_eps.into(),
            eps.into(),
            r.max_net_gain.into(),
            r.std_error.into(),
            r.deterred.into(),
            r.rows.len().into(),
        ]);
    }
    Ok((t, json!({ "k_eps": k_eps, "threshold": with_cost, "zero": free })))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusTemplate {
    pub generator: GeneratorConfig,
    pub ns: Vec<usize>,
}

impl Default for CorpusTemplate {
    fn default() -> Self {
        CorpusTemplate { generator: GeneratorConfig::default(), ns: vec![50] }
    }
}

/// Draws one type space, then `count` economies whose identities are
/// i.i.d. from it, cycling through `ns`. Writes `economy-NNNN.json` files
/// carrying their seeds.
pub fn corpus_generate(template: &CorpusTemplate, count: usize, seed: u64, dir: &Path) -> Result<Vec<PathBuf>> {
    if template.generator.types == 0 {
        return Err(Error::Precondition("empty type space".into()));
    }
    if template.ns.is_empty() {
        return Err(Error::Precondition("no economy sizes".into()));
    }
    std::fs::create_dir_all(dir)?;
    let mut rng = crate::experiments::stream_rng(seed, 0);
    let types = generator::random_type_space(&template.generator, &mut rng)?;
    let mut out = Vec::with_capacity(count);
    for k in 0..count {
        let s = seed.wrapping_add(k as u64 + 1);
        let mut rng = crate::experiments::stream_rng(s, 1);
        let e = generator::random_economy(&types, template.ns[k % template.ns.len()], template.generator.delta, &mut rng)?;
        let spec = EconomySpec { seed: Some(s), ..EconomySpec::from_economy(&e) };
        let path = dir.join(format!("economy-{k:04}.json"));
        std::fs::write(&path, spec.to_json()? + "\n")?;
        out.push(path);
    }
    Ok(out)
}
