//! Attack evaluation and the corpus-level experiments built on it.
//!
//! Gains come in two flavours. The price-channel gain holds the principal's
//! truthful types fixed and measures how its expected utility moves with the
//! equilibrium price: `U_p(p^α) − U_p(p^0)`. The realized gain scores the
//! post-attack identities by their own reported orders at `p^α`, which is how
//! a split identity's haul is counted.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{
    estimate_gamma, estimate_lp, estimate_lz, principal_utility_with, scaled_bound, utility_profile,
    utility_range, BoundReport, CardinalUtility, RegularityEstimates, SampleCounts, UtilityScale,
};
use crate::demand::BudgetProfile;
use crate::economy::{AttackKind, Bundle, Economy, IdentityType, Lottery, SybilAttack, WeakOrder};
use crate::error::{Error, Result};
use crate::generator::{self, GeneratorConfig};
use crate::price::PriceVector;
use crate::solver::{
    detect_bad_region, local_pairs, relaxation_draws, solve_brace, solve_from, BadRegionConfig, BadRegionReport,
    EquilibriumResult, SolverConfig,
};
use crate::sybil::{apply_attack, misreport_attack};

pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub solver: SolverConfig,
    pub restarts: usize,
    pub gamma_min: f64,
    pub spread_threshold: f64,
    /// Random misreports of the same size added to the `L̂_Z` sample.
    pub extra_perturbations: usize,
    /// Random prices near `p^0` added to the price grid.
    pub extra_points: usize,
    pub gamma_pairs: usize,
    pub radius: f64,
    pub scale: UtilityScale,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            solver: SolverConfig::default(),
            restarts: 3,
            gamma_min: 1e-6,
            spread_threshold: 0.05,
            extra_perturbations: 3,
            extra_points: 3,
            gamma_pairs: 10,
            radius: 0.02,
            scale: UtilityScale::Rank,
        }
    }
}

impl EvalConfig {
    pub fn bad_region(&self) -> BadRegionConfig {
        BadRegionConfig {
            solver: self.solver.clone(),
            restarts: self.restarts,
            gamma_min: self.gamma_min,
            spread_threshold: self.spread_threshold,
            gamma_pairs: self.gamma_pairs,
            gamma_radius: self.radius,
        }
    }
}

/// A solved base economy with the draws and truthful utilities used to
/// score every attack against it.
#[derive(Debug, Clone)]
pub struct Baseline {
    pub economy: Economy,
    pub equilibrium: EquilibriumResult,
    pub bad_region: Option<BadRegionReport>,
    pub draws: Vec<BudgetProfile>,
    pub utilities: Vec<CardinalUtility>,
}

impl Baseline {
    pub fn new(e: &Economy, cfg: &EvalConfig, check_region: bool) -> Result<Self> {
        let (equilibrium, bad_region) = if check_region {
            let rep = detect_bad_region(e, &cfg.bad_region())?;
            let eq = match &rep.equilibrium {
                Some(eq) => eq.clone(),
                None => solve_brace(e, &cfg.solver)?,
            };
            (eq, Some(rep))
        } else {
            (solve_brace(e, &cfg.solver)?, None)
        };
        Ok(Baseline {
            economy: e.clone(),
            equilibrium,
            bad_region,
            draws: relaxation_draws(e.n(), e.delta(), cfg.solver.mc_draws, cfg.solver.seed, 0)?,
            utilities: utility_profile(e, cfg.scale),
        })
    }

    pub fn p0(&self) -> &PriceVector {
        &self.equilibrium.prices
    }

    pub fn in_bad_region(&self) -> bool {
        self.bad_region.as_ref().is_some_and(|r| r.in_bad_region) || !self.equilibrium.converged
    }

    /// Truthful utility of `principal` at prices `p`.
    pub fn utility_at(&self, principal: &str, p: &PriceVector) -> Result<f64> {
        principal_utility_with(&self.economy, principal, p, &self.utilities, &self.draws)
    }

    /// Solves the attacked economy starting from `p^0`, falling back to the
    /// restart schedule.
    pub fn solve_attacked(&self, attacked: &Economy, cfg: &SolverConfig) -> Result<EquilibriumResult> {
        let r = solve_from(attacked, self.p0(), cfg)?;
        if r.converged {
            return Ok(r);
        }
        let alt = solve_brace(attacked, cfg)?;
        Ok(if alt.converged || alt.residual < r.residual { alt } else { r })
    }

    pub fn gains(&self, attacked: &Economy, principal: &str, pa: &PriceVector, cfg: &EvalConfig) -> Result<Gains> {
        let u0 = self.utility_at(principal, self.p0())?;
        let price_channel = self.utility_at(principal, pa)? - u0;
        let draws = relaxation_draws(attacked.n(), attacked.delta(), cfg.solver.mc_draws, cfg.solver.seed, 0)?;
        let u_att = utility_profile(attacked, cfg.scale);
        let realized = principal_utility_with(attacked, principal, pa, &u_att, &draws)? - u0;
        Ok(Gains { price_channel, realized })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gains {
    pub price_channel: f64,
    pub realized: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GainMeasure {
    PriceChannel,
    Realized,
}

impl Gains {
    pub fn get(&self, m: GainMeasure) -> f64 {
        match m {
            GainMeasure::PriceChannel => self.price_channel,
            GainMeasure::Realized => self.realized,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackEvaluation {
    pub alpha: f64,
    pub p0: PriceVector,
    pub pa: PriceVector,
    pub base_converged: bool,
    pub attacked_converged: bool,
    pub in_bad_region: bool,
    pub estimates: RegularityEstimates,
    pub price: BoundReport,
    pub welfare: BoundReport,
    pub gains: Gains,
}

/// Solves the attacked economy, estimates the regularity constants in the
/// neighbourhood spanned by the two equilibria and checks both bounds.
pub fn evaluate_attack(base: &Baseline, a: &SybilAttack, cfg: &EvalConfig) -> Result<AttackEvaluation> {
    let e = &base.economy;
    let attacked = apply_attack(e, a)?;
    let eq = base.solve_attacked(&attacked, &cfg.solver)?;
    let p0 = base.p0().clone();
    let pa = eq.prices.clone();
    let mut rng = stream_rng(cfg.solver.seed, 0xe5);

    let dp = p0.distance(&pa);
    let radius = cfg.radius.max(dp);
    let mut grid = vec![p0.clone(), pa.clone()];
    grid.extend(local_pairs(&p0, radius, cfg.extra_points, rng.gen()).into_iter().map(|(p, _)| p));

    let mut perturbed = vec![attacked.clone()];
    if a.kind == AttackKind::Misreport {
        for _ in 0..cfg.extra_perturbations {
            if let Ok(alt) = random_retyping(e, a, &mut rng) {
                perturbed.push(alt);
            }
        }
    }
    let lz = if a.is_empty() { None } else { estimate_lz(e, &perturbed, &grid, cfg.solver.mc_draws, cfg.solver.seed).ok() };

    let mut pairs = Vec::new();
    if dp > 1e-12 {
        pairs.push((p0.clone(), pa.clone()));
    }
    pairs.extend(local_pairs(&p0, radius, cfg.gamma_pairs, rng.gen()));
    let gamma = if pairs.is_empty() { 0.0 } else { estimate_gamma(e, &pairs, &base.draws)? };
    let lp = estimate_lp(e, &a.principal, &base.utilities, &pairs, &grid, &base.draws, rng.gen())?;
    let est = RegularityEstimates::new(
        lz.as_ref().map_or(0.0, |l| l.value),
        gamma,
        BTreeMap::from([(a.principal.clone(), lp)]),
        SampleCounts { lz: lz.as_ref().map_or(0, |l| l.samples), gamma_pairs: pairs.len(), lp_pairs: pairs.len() },
    );
    let usable = base.equilibrium.converged && eq.converged;
    let gains = base.gains(&attacked, &a.principal, &pa, cfg)?;
    let price = BoundReport::new(dp, scaled_bound(est.price_constant(), a.alpha), a.alpha, usable, est.clone());
    let welfare =
        BoundReport::new(gains.price_channel, scaled_bound(est.welfare_constant(), a.alpha), a.alpha, usable, est.clone());
    Ok(AttackEvaluation {
        alpha: a.alpha,
        p0,
        pa,
        base_converged: base.equilibrium.converged,
        attacked_converged: eq.converged,
        in_bad_region: base.in_bad_region() || !eq.converged,
        estimates: est,
        price,
        welfare,
        gains,
    })
}

/// Re-draws the types of the identities `a` retypes, keeping endowments.
fn random_retyping<R: Rng>(e: &Economy, a: &SybilAttack, rng: &mut R) -> Result<Economy> {
    let retypes = a
        .replacements
        .keys()
        .map(|id| {
            let k = e.index_of(id).ok_or_else(|| Error::UnknownIdentity(id.clone()))?;
            let t = &e.identities()[k].ty;
            Ok((id.clone(), generator::random_misreport(t, t.order.bundles().len().max(3), false, rng)?))
        })
        .collect::<Result<Vec<_>>>()?;
    apply_attack(e, &misreport_attack(e, &a.principal, &retypes, false)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub n: usize,
    pub generator: GeneratorConfig,
    pub max_alpha: f64,
    pub principal: String,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig { n: 50, generator: GeneratorConfig::default(), max_alpha: 0.1, principal: "S".into() }
    }
}

/// One corpus instance: a generated economy whose principal `S` owns
/// `r ≤ max_alpha · n` identities, and a random retyping of all of them.
pub fn corpus_instance(cfg: &CorpusConfig, seed: u64) -> Result<(Economy, SybilAttack)> {
    let mut rng = stream_rng(seed, 0xc0);
    let types = generator::random_type_space(&cfg.generator, &mut rng)?;
    let e = generator::random_economy(&types, cfg.n, cfg.generator.delta, &mut rng)?;
    let r_max = ((cfg.max_alpha * cfg.n as f64).floor() as usize).max(1);
    let r = rng.gen_range(1..=r_max);
    let e = generator::assign_principal(&e, &cfg.principal, r, &mut rng)?;
    let retypes = e
        .owned_by(&cfg.principal)
        .into_iter()
        .map(|k| {
            let ident = &e.identities()[k];
            let t = generator::random_misreport(&ident.ty, cfg.generator.max_list, cfg.generator.two_class, &mut rng)?;
            Ok((ident.id.clone(), t))
        })
        .collect::<Result<Vec<_>>>()?;
    let a = misreport_attack(&e, &cfg.principal, &retypes, false)?;
    Ok((e, a))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusTrial {
    pub seed: u64,
    pub n: usize,
    pub in_bad_region: bool,
    pub reasons: Vec<crate::solver::BadRegionReason>,
    pub evaluation: AttackEvaluation,
}

/// Runs `count` corpus instances with seeds `seed, seed + 1, ...`.
pub fn run_corpus(cfg: &CorpusConfig, eval: &EvalConfig, count: usize, seed: u64) -> Result<Vec<CorpusTrial>> {
    (0..count as u64)
        .into_par_iter()
        .map(|k| {
            let s = seed.wrapping_add(k);
            let (e, a) = corpus_instance(cfg, s)?;
            let ecfg = EvalConfig { solver: SolverConfig { seed: s, ..eval.solver.clone() }, ..eval.clone() };
            let base = Baseline::new(&e, &ecfg, true)?;
            let ev = evaluate_attack(&base, &a, &ecfg)?;
            Ok(CorpusTrial {
                seed: s,
                n: e.n(),
                in_bad_region: ev.in_bad_region,
                reasons: base.bad_region.map(|r| r.reasons).unwrap_or_default(),
                evaluation: ev,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub trials: usize,
    pub clean: usize,
    pub price_satisfied: usize,
    pub welfare_satisfied: usize,
    /// Violations on clean trials, which the bad-region flag should have
    /// caught.
    pub price_unflagged_violations: usize,
    pub welfare_unflagged_violations: usize,
}

impl CorpusSummary {
    pub fn of(trials: &[CorpusTrial]) -> Self {
        let clean: Vec<&CorpusTrial> = trials.iter().filter(|t| !t.in_bad_region).collect();
        let ps = clean.iter().filter(|t| t.evaluation.price.satisfied).count();
        let ws = clean.iter().filter(|t| t.evaluation.welfare.satisfied).count();
        CorpusSummary {
            trials: trials.len(),
            clean: clean.len(),
            price_satisfied: ps,
            welfare_satisfied: ws,
            price_unflagged_violations: clean.len() - ps,
            welfare_unflagged_violations: clean.len() - ws,
        }
    }

    pub fn price_rate(&self) -> f64 {
        self.price_satisfied as f64 / self.clean.max(1) as f64
    }

    pub fn welfare_rate(&self) -> f64 {
        self.welfare_satisfied as f64 / self.clean.max(1) as f64
    }
}

/// Unit-demand type with the same endowment as `t` whose list is `[g, own]`
/// (or just `[own]` when `g` is the owned good).
pub fn retype_top(t: &IdentityType, g: usize) -> Result<IdentityType> {
    let own = generator::owned_good(t).ok_or_else(|| Error::Precondition("type owns nothing".into()))?;
    let m = t.dim();
    let mine = Bundle::unit(m, own);
    let list = if g == own { vec![mine.clone()] } else { vec![Bundle::unit(m, g), mine.clone()] };
    IdentityType::new(Lottery::degenerate(mine), WeakOrder::strict(list)?)
}

/// The same type with good `g` removed from its list, if anything is left.
pub fn retype_without(t: &IdentityType, g: usize) -> Result<IdentityType> {
    let m = t.dim();
    let target = Bundle::unit(m, g);
    let classes: Vec<Vec<Bundle>> = t
        .order
        .classes()
        .iter()
        .map(|c| c.iter().filter(|b| **b != target).cloned().collect::<Vec<_>>())
        .filter(|c| !c.is_empty())
        .collect();
    if t.endowment.support().any(|b| *b == target) {
        return Err(Error::Precondition("cannot drop the owned good".into()));
    }
    IdentityType::new(t.endowment.clone(), WeakOrder::new(classes)?)
}

/// Structured coordinated deviations for `principal`: every identity lists
/// `g` on top, or every identity drops `g`, for each good `g`.
pub fn structured_retypings(e: &Economy, principal: &str) -> Vec<Vec<(String, IdentityType)>> {
    let owned = e.owned_by(principal);
    let mut out = Vec::new();
    for g in 0..e.m() {
        for drop in [false, true] {
            let retypes: Vec<(String, IdentityType)> = owned
                .iter()
                .filter_map(|&k| {
                    let ident = &e.identities()[k];
                    let t = if drop { retype_without(&ident.ty, g).ok()? } else { retype_top(&ident.ty, g).ok()? };
                    (t != ident.ty).then(|| (ident.id.clone(), t))
                })
                .collect();
            if !retypes.is_empty() {
                out.push(retypes);
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplConfig {
    pub ns: Vec<usize>,
    pub reps: usize,
    /// Random single-identity misreports per replication, on top of the
    /// structured ones.
    pub identity_samples: usize,
    /// Random coordinated misreports per replication, on top of the
    /// structured ones.
    pub principal_samples: usize,
    pub share: f64,
    pub generator: GeneratorConfig,
    pub solver: SolverConfig,
}

impl Default for SplConfig {
    fn default() -> Self {
        SplConfig {
            ns: vec![20, 50, 100, 200],
            reps: 10,
            identity_samples: 4,
            principal_samples: 2,
            share: 0.3,
            generator: GeneratorConfig { two_class: true, delta: 0.5, ..GeneratorConfig::default() },
            solver: SolverConfig { mc_draws: 8, ..SolverConfig::default() },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplRow {
    pub n: usize,
    pub identity_gain_mean: f64,
    pub identity_gain_se: f64,
    pub principal_gain_mean: f64,
    pub principal_gain_se: f64,
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplTable {
    pub rows: Vec<SplRow>,
    /// `(n, max identity gain)` per replication.
    pub identity_gains: Vec<(usize, f64)>,
    /// `(n, max principal gain)` per replication.
    pub principal_gains: Vec<(usize, f64)>,
}

impl SplTable {
    /// Spearman correlation between `n` and the mean identity gain per `n`.
    pub fn identity_trend(&self) -> f64 {
        let x: Vec<f64> = self.rows.iter().map(|r| r.n as f64).collect();
        let y: Vec<f64> = self.rows.iter().map(|r| r.identity_gain_mean).collect();
        crate::bounds::spearman(&x, &y)
    }

    /// Spearman correlation over all replications.
    pub fn identity_trend_pooled(&self) -> f64 {
        let x: Vec<f64> = self.identity_gains.iter().map(|g| g.0 as f64).collect();
        let y: Vec<f64> = self.identity_gains.iter().map(|g| g.1).collect();
        crate::bounds::spearman(&x, &y)
    }

    /// `(n, mean identity gain)` curve.
    pub fn identity_curve(&self) -> Vec<(usize, f64)> {
        self.rows.iter().map(|r| (r.n, r.identity_gain_mean)).collect()
    }
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (0.0, 0.0);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (m, 0.0);
    }
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

struct RepOutcome {
    identity: f64,
    principal: f64,
    skipped: usize,
}

fn spl_replication(cfg: &SplConfig, n: usize, rep: usize, seed: u64) -> Result<RepOutcome> {
    let mut rng = stream_rng(seed, rep as u64);
    let types = generator::random_type_space(&cfg.generator, &mut rng)?;
    let mut rng = stream_rng(seed, ((n as u64) << 20) | rep as u64);
    let e = generator::random_economy(&types, n, cfg.generator.delta, &mut rng)?;
    let owners = ((cfg.share * n as f64).ceil() as usize).min(n);
    let e = generator::assign_principal(&e, "S", owners, &mut rng)?;
    let ecfg = EvalConfig {
        solver: SolverConfig { seed: seed ^ ((n as u64) << 8 | rep as u64), ..cfg.solver.clone() },
        ..EvalConfig::default()
    };
    let base = Baseline::new(&e, &ecfg, false)?;
    let mut skipped = 0;
    let mut eval = |principal: &str, retypes: Vec<(String, IdentityType)>| -> Result<Option<f64>> {
        let a = misreport_attack(&e, principal, &retypes, false)?;
        let attacked = apply_attack(&e, &a)?;
        let eq = base.solve_attacked(&attacked, &ecfg.solver)?;
        if !eq.converged {
            skipped += 1;
            return Ok(None);
        }
        Ok(Some(base.utility_at(principal, &eq.prices)? - base.utility_at(principal, base.p0())?))
    };

    // identity level: one identity outside S deviates alone
    let loners: Vec<usize> = (0..n).filter(|&k| e.identities()[k].principal != "S").collect();
    let mut identity = 0.0_f64;
    if let Some(&k) = loners.choose(&mut rng) {
        let ident = e.identities()[k].clone();
        let mut options: Vec<IdentityType> = structured_retypings(&e, &ident.principal)
            .into_iter()
            .flat_map(|r| r.into_iter().map(|(_, t)| t))
            .collect();
        for _ in 0..cfg.identity_samples {
            if let Ok(t) = generator::random_misreport(&ident.ty, cfg.generator.max_list, cfg.generator.two_class, &mut rng) {
                options.push(t);
            }
        }
        for t in options {
            if let Some(g) = eval(&ident.principal, vec![(ident.id.clone(), t)])? {
                identity = identity.max(g);
            }
        }
    }

    // principal level: S deviates in concert
    let mut principal = 0.0_f64;
    let mut candidates = structured_retypings(&e, "S");
    for _ in 0..cfg.principal_samples {
        let retypes: Vec<(String, IdentityType)> = e
            .owned_by("S")
            .into_iter()
            .filter_map(|k| {
                let ident = &e.identities()[k];
                generator::random_misreport(&ident.ty, cfg.generator.max_list, cfg.generator.two_class, &mut rng)
                    .ok()
                    .map(|t| (ident.id.clone(), t))
            })
            .collect();
        candidates.push(retypes);
    }
    for retypes in candidates {
        if let Some(g) = eval("S", retypes)? {
            principal = principal.max(g);
        }
    }
    Ok(RepOutcome { identity, principal, skipped })
}

/// Maximum misreport gains of a lone identity and of a principal holding a
/// `share` of the market, per market size.
pub fn spl_curves(cfg: &SplConfig, seed: u64) -> Result<SplTable> {
    let jobs: Vec<(usize, usize)> = cfg.ns.iter().flat_map(|&n| (0..cfg.reps).map(move |r| (n, r))).collect();
    let outcomes: Vec<(usize, RepOutcome)> = jobs
        .par_iter()
        .map(|&(n, r)| spl_replication(cfg, n, r, seed).map(|o| (n, o)))
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for &n in &cfg.ns {
        let at_n: Vec<&RepOutcome> = outcomes.iter().filter(|(m, _)| *m == n).map(|(_, o)| o).collect();
        let id: Vec<f64> = at_n.iter().map(|o| o.identity).collect();
        let pr: Vec<f64> = at_n.iter().map(|o| o.principal).collect();
        let (im, ise) = mean_se(&id);
        let (pm, pse) = mean_se(&pr);
        rows.push(SplRow {
            n,
            identity_gain_mean: im,
            identity_gain_se: ise,
            principal_gain_mean: pm,
            principal_gain_se: pse,
            skipped: at_n.iter().map(|o| o.skipped).sum(),
        });
    }
    Ok(SplTable {
        rows,
        identity_gains: outcomes.iter().map(|(n, o)| (*n, o.identity)).collect(),
        principal_gains: outcomes.iter().map(|(n, o)| (*n, o.principal)).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailTrial {
    pub in_bad_region: bool,
    pub alpha: f64,
    pub gain: f64,
    /// `L̂ L̂_Z / γ̂` of this trial.
    pub welfare_constant: f64,
    /// `Ū` of the attacking principal.
    pub utility_range: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub trials: usize,
    pub eps_hat: f64,
    pub mean_gain: f64,
    pub std_error: f64,
    pub rhs: f64,
    pub satisfied: bool,
}

/// Evaluates corpus instances, each drawn with its own δ from `deltas`.
pub fn run_tail_trials(
    cfg: &CorpusConfig,
    deltas: &[f64],
    eval: &EvalConfig,
    trials: usize,
    seed: u64,
) -> Result<Vec<TailTrial>> {
    if deltas.is_empty() {
        return Err(Error::Precondition("no deltas to draw from".into()));
    }
    (0..trials as u64)
        .into_par_iter()
        .map(|k| {
            let s = seed.wrapping_add(k);
            let delta = deltas[(k as usize) % deltas.len()];
            let ccfg = CorpusConfig { generator: GeneratorConfig { delta, ..cfg.generator.clone() }, ..cfg.clone() };
            let (e, a) = corpus_instance(&ccfg, s)?;
            let ecfg = EvalConfig { solver: SolverConfig { seed: s, ..eval.solver.clone() }, ..eval.clone() };
            let base = Baseline::new(&e, &ecfg, true)?;
            let ev = evaluate_attack(&base, &a, &ecfg)?;
            Ok(TailTrial {
                in_bad_region: ev.in_bad_region,
                alpha: ev.alpha,
                gain: ev.gains.price_channel,
                welfare_constant: ev.estimates.welfare_constant(),
                utility_range: utility_range(&e, &a.principal, &base.utilities),
            })
        })
        .collect()
}

/// `mean ΔU ≤ C_U α (1 − ε̂) + 2 Ū ε̂`, within two standard errors.
pub fn tail_bound_check(trials: &[TailTrial], alpha: f64, c_u: f64, u_bar: f64) -> Result<TailReport> {
    if trials.len() < 30 {
        return Err(Error::Precondition(format!("need at least 30 trials, got {}", trials.len())));
    }
    let eps = trials.iter().filter(|t| t.in_bad_region).count() as f64 / trials.len() as f64;
    let gains: Vec<f64> = trials.iter().map(|t| t.gain).collect();
    let (mean, se) = mean_se(&gains);
    let rhs = if eps < 1.0 { scaled_bound(c_u, alpha) * (1.0 - eps) } else { 0.0 } + 2.0 * u_bar * eps;
    Ok(TailReport { trials: trials.len(), eps_hat: eps, mean_gain: mean, std_error: se, rhs, satisfied: mean <= rhs + 2.0 * se })
}

/// `C_U`: the median finite welfare constant over clean trials.
pub fn tail_constant(trials: &[TailTrial]) -> f64 {
    let mut c: Vec<f64> =
        trials.iter().filter(|t| !t.in_bad_region && t.welfare_constant.is_finite()).map(|t| t.welfare_constant).collect();
    if c.is_empty() {
        return f64::INFINITY;
    }
    c.sort_by(f64::total_cmp);
    let k = c.len();
    if k % 2 == 1 {
        c[k / 2]
    } else {
        (c[k / 2 - 1] + c[k / 2]) / 2.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeterrenceRow {
    pub k: usize,
    pub n: usize,
    pub gain: f64,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeterrenceReport {
    pub rows: Vec<DeterrenceRow>,
    pub max_net_gain: f64,
    pub std_error: f64,
    pub deterred: bool,
}

/// `max (gain − C_sys(k, n))` over the evaluated attacks; deterred when it
/// is at most two standard errors of the net gains above zero.
pub fn deterrence_check(evaluated: &[(usize, usize, f64)], c_sys: &dyn Fn(usize, usize) -> Result<f64>) -> Result<DeterrenceReport> {
    if evaluated.is_empty() {
        return Err(Error::Precondition("no attacks evaluated".into()));
    }
    let rows: Vec<DeterrenceRow> = evaluated
        .iter()
        .map(|&(k, n, gain)| Ok(DeterrenceRow { k, n, gain, cost: c_sys(k, n)? }))
        .collect::<Result<_>>()?;
    let net: Vec<f64> = rows.iter().map(|r| r.gain - r.cost).collect();
    let max = net.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (_, se) = mean_se(&net);
    Ok(DeterrenceReport { rows, max_net_gain: max, std_error: se, deterred: max <= 2.0 * se })
}

/// A corpus economy with every member of its deviation family evaluated.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeterrenceTrial {
    pub seed: u64,
    pub n: usize,
    pub in_bad_region: bool,
    /// `(identities changed, price-channel gain)` per converged family member.
    pub attacks: Vec<(usize, f64)>,
    pub skipped: usize,
    pub estimates: RegularityEstimates,
}

/// For each corpus economy: the random retyping of `S` plus the structured
/// retypings, with constants estimated over the whole family.
pub fn run_deterrence_trials(cfg: &CorpusConfig, eval: &EvalConfig, count: usize, seed: u64) -> Result<Vec<DeterrenceTrial>> {
    (0..count as u64)
        .into_par_iter()
        .map(|k| {
            let s = seed.wrapping_add(k);
            let (e, a) = corpus_instance(cfg, s)?;
            let ecfg = EvalConfig { solver: SolverConfig { seed: s, ..eval.solver.clone() }, ..eval.clone() };
            let base = Baseline::new(&e, &ecfg, true)?;
            let mut family = vec![a];
            for retypes in structured_retypings(&e, &cfg.principal) {
                family.push(misreport_attack(&e, &cfg.principal, &retypes, false)?);
            }
            let mut rng = stream_rng(s, 0xde);
            let p0 = base.p0().clone();
            let mut perturbed = Vec::new();
            let mut grid = vec![p0.clone()];
            let mut pairs = Vec::new();
            let mut attacks = Vec::new();
            let mut skipped = 0;
            let mut radius = ecfg.radius;
            for a in &family {
                let attacked = apply_attack(&e, a)?;
                let eq = base.solve_attacked(&attacked, &ecfg.solver)?;
                if !eq.converged {
                    skipped += 1;
                    continue;
                }
                let changed = (crate::economy::infiltration_rate(a, &e)? * e.n() as f64).round() as usize;
                attacks.push((changed, base.utility_at(&cfg.principal, &eq.prices)? - base.utility_at(&cfg.principal, &p0)?));
                radius = radius.max(p0.distance(&eq.prices));
                if p0.distance(&eq.prices) > 1e-12 {
                    pairs.push((p0.clone(), eq.prices.clone()));
                }
                grid.push(eq.prices);
                perturbed.push(attacked);
            }
            grid.extend(local_pairs(&p0, radius, ecfg.extra_points, rng.gen()).into_iter().map(|(p, _)| p));
            pairs.extend(local_pairs(&p0, radius, ecfg.gamma_pairs, rng.gen()));
            let lz = estimate_lz(&e, &perturbed, &grid, ecfg.solver.mc_draws, s).ok();
            let gamma = estimate_gamma(&e, &pairs, &base.draws)?;
            let lp = estimate_lp(&e, &cfg.principal, &base.utilities, &pairs, &grid, &base.draws, rng.gen())?;
            let estimates = RegularityEstimates::new(
                lz.as_ref().map_or(0.0, |l| l.value),
                gamma,
                BTreeMap::from([(cfg.principal.clone(), lp)]),
                SampleCounts { lz: lz.as_ref().map_or(0, |l| l.samples), gamma_pairs: pairs.len(), lp_pairs: pairs.len() },
            );
            let in_bad_region = base.in_bad_region() || !estimates.welfare_constant().is_finite();
            Ok(DeterrenceTrial { seed: s, n: e.n(), in_bad_region, attacks, skipped, estimates })
        })
        .collect()
}

/// Deterrence over the corpus: every clean trial prices its attacks with
/// `c_sys(k, n, estimates)`, and the net gains are pooled.
pub fn corpus_deterrence(
    trials: &[DeterrenceTrial],
    c_sys: &dyn Fn(usize, usize, &RegularityEstimates) -> Result<f64>,
) -> Result<DeterrenceReport> {
    let mut rows = Vec::new();
    for t in trials.iter().filter(|t| !t.in_bad_region) {
        let ev: Vec<(usize, usize, f64)> = t.attacks.iter().map(|&(k, g)| (k, t.n, g)).collect();
        if !ev.is_empty() {
            rows.extend(deterrence_check(&ev, &|k, n| c_sys(k, n, &t.estimates))?.rows);
        }
    }
    if rows.is_empty() {
        return Err(Error::Precondition("no clean trial with a converged attack".into()));
    }
    let net: Vec<f64> = rows.iter().map(|r| r.gain - r.cost).collect();
    let max = net.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (_, se) = mean_se(&net);
    Ok(DeterrenceReport { rows, max_net_gain: max, std_error: se, deterred: max <= 2.0 * se })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::canonical;

    #[test]
    fn empty_attack_reports_zero() {
        let e = canonical::example_one(0.05);
        let cfg = EvalConfig::default();
        let base = Baseline::new(&e, &cfg, false).unwrap();
        let ev = evaluate_attack(&base, &SybilAttack::empty("P"), &cfg).unwrap();
        assert_eq!(ev.price.observed, 0.0);
        assert_eq!(ev.price.bound, 0.0);
        assert!(ev.price.satisfied);
        assert_eq!(ev.welfare.observed, 0.0);
        assert!(ev.welfare.satisfied);
    }

    #[test]
    fn tail_rhs_edge_cases() {
        let t = |bad: bool| TailTrial { in_bad_region: bad, alpha: 0.1, gain: 0.5, welfare_constant: 1.0, utility_range: 1.0 };
        let all_bad = vec![t(true); 30];
        let r = tail_bound_check(&all_bad, 0.1, 3.0, 1.0).unwrap();
        assert_eq!(r.eps_hat, 1.0);
        assert_eq!(r.rhs, 2.0);
        assert!(r.satisfied);
        let clean = vec![t(false); 30];
        let r = tail_bound_check(&clean, 0.1, 3.0, 1.0).unwrap();
        assert!((r.rhs - 0.3).abs() < 1e-12);
        assert!(!r.satisfied);
        assert!(tail_bound_check(&clean[..29], 0.1, 3.0, 1.0).is_err());
    }

    #[test]
    fn deterrence_with_huge_cost() {
        let ev = [(1, 10, 0.3), (2, 10, 0.5)];
        assert!(deterrence_check(&ev, &|_, _| Ok(1e9)).unwrap().deterred);
        assert!(!deterrence_check(&ev, &|_, _| Ok(0.0)).unwrap().deterred);
    }

    #[test]
    fn structured_retypings_keep_endowments() {
        let (e, _) = corpus_instance(&CorpusConfig::default(), 4).unwrap();
        for retypes in structured_retypings(&e, "S") {
            for (id, t) in retypes {
                assert_eq!(t.endowment, e.identities()[e.index_of(&id).unwrap()].ty.endowment);
            }
        }
    }
}
